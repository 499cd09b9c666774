//! The exponent condition that decides whether a solve is attempted.

use tfspde::bernstein::BernsteinSpec;
use tfspde::kernels::FractionalExponents;
use tfspde::solver::solvability_gate;

fn main() -> tfspde::Result<()> {
    let phi = BernsteinSpec::power(0.5)?;
    for sigma2 in [0.5, 0.6, 0.7, 0.75, 0.8] {
        let e = FractionalExponents::new(0.5, 0.5, sigma2, 2.0)?;
        let g = solvability_gate(&e, &phi, 1);
        let verdict = if g.passed { "accepted" } else { "rejected" };
        println!("sigma2 = {sigma2:4}: {:.3} vs {:.3}, {verdict}", g.lhs, g.rhs);
    }
    Ok(())
}
