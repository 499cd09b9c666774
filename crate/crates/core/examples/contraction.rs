//! Weighted-norm contraction of the truncated Picard map on the Lipschitz preset.

use tfspde::experiments::default_perturbation;
use tfspde::solver::{contraction_sweep, sample_noises, NonlinearitySpec, SolverConfig, SolverPlan};

fn main() -> tfspde::Result<()> {
    let cfg = SolverConfig::lipschitz_preset();
    let nonlin = NonlinearitySpec::lipschitz_preset();
    let plan = SolverPlan::new(cfg.clone())?;
    let noises = sample_noises(&plan, 0..cfg.n_paths)?;
    let atoms: usize = noises.iter().map(|n| n.atom_count()).sum();
    println!("{} paths, {atoms} atoms", cfg.n_paths);

    let sweep = contraction_sweep(&plan, &nonlin, &noises, &default_perturbation(&cfg.grid), &[0.0, 5.0, 20.0, 80.0])?;
    println!("vartheta  ratio");
    for (theta, r) in sweep {
        println!("{theta:8.1}  {r:.4}");
    }
    Ok(())
}
