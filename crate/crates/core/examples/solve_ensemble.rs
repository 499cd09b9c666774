//! Truncated Picard solution of the Lipschitz preset over a small ensemble.

use tfspde::solver::{solve, NonlinearitySpec, SolverConfig};

fn main() -> tfspde::Result<()> {
    let mut cfg = SolverConfig::lipschitz_preset();
    cfg.n_paths = 8;
    let ens = solve(&cfg, &NonlinearitySpec::lipschitz_preset())?;
    for w in &ens.warnings {
        println!("warning: {w}");
    }
    println!("path  iterations  stopping  sup L_p");
    for (k, path) in ens.paths.iter().enumerate() {
        let sup = path.norms(cfg.exponents.p).into_iter().fold(0.0, f64::max);
        let stop = path.stopping_index.map_or("-".to_string(), |n| n.to_string());
        println!("{k:4} {:11} {stop:>9} {sup:8.4}", path.iterations);
    }
    let (m, se) = ens.stopped_moment(cfg.exponents.p);
    println!("stopped moment {m:.5} +- {se:.5}");
    Ok(())
}
