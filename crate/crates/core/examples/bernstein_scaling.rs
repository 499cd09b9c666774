//! Bernstein functions, their inverses and lower scaling exponents.

use tfspde::bernstein::BernsteinSpec;

fn main() -> tfspde::Result<()> {
    let specs = [
        ("x^0.5", BernsteinSpec::power(0.5)?),
        ("log(1+x^0.8)", BernsteinSpec::log_power(0.8, 1.0)?),
        ("x^0.3 + 2x^0.9", BernsteinSpec::mixture(&[(1.0, 0.3), (2.0, 0.9)])?),
    ];
    for (name, phi) in &specs {
        let s = phi.default_scaling();
        let y = phi.eval(10.0)?;
        println!("{name:>16}: phi(10) = {y:.6}  inverse -> {:.12}  kappa0 ~ {:.4}  c1 ~ {:.4}", phi.inverse(y)?, s.kappa0_est, s.c1_est);
    }

    let phi = &specs[0].1;
    println!("\ntail integral vs phi(rho^2) for x^0.5");
    for rho in [1.0, 10.0, 100.0] {
        let (tail, target) = phi.tail_integral_check(rho)?;
        println!("  rho = {rho:5}: {tail:.6} / {target:.6} = {:.4}", tail / target);
    }
    Ok(())
}
