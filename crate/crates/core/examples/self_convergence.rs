//! Time-step self-convergence of the noise-free solver.

use tfspde::solver::{self_convergence, NonlinearitySpec, SolverConfig};

fn main() -> tfspde::Result<()> {
    let cfg = SolverConfig::deterministic_preset();
    let nonlin = NonlinearitySpec::lipschitz_preset();
    let sc = self_convergence(&cfg, &nonlin, &[16, 32, 64, 128, 256])?;
    for (dt, diff) in sc.dts.iter().zip(&sc.differences) {
        println!("dt = {dt:.5}  |w_dt - w_dt/2| = {diff:.3e}");
    }
    println!("slope {:.3}", sc.slope);
    Ok(())
}
