//! Two-parameter Mittag-Leffler function on the negative axis.

use tfspde::mittag_leffler::{MLParams, MittagLeffler};

fn main() -> tfspde::Result<()> {
    // E_{1,1}(-x) = e^{-x}, E_{2,1}(-x²) = cos x
    let exp = MittagLeffler::new(MLParams::new(1.0, 1.0)?)?;
    let cos = MittagLeffler::new(MLParams::new(2.0, 1.0)?.with_cutoff(100.0))?;
    for x in [0.5, 2.0, 8.0] {
        println!("E11(-{x}) = {:.15e}  exp = {:.15e}", exp.eval(-x)?, (-x).exp());
        println!("E21(-{}) = {:.15e}  cos = {:.15e}", x * x, cos.eval(-x * x)?, x.cos());
    }

    println!("\n  alpha  beta        z        value  method");
    for (a, b) in [(0.5, 1.0), (0.5, 0.9), (0.3, 1.2), (0.8, 0.8)] {
        let ml = MittagLeffler::new(MLParams::new(a, b)?)?;
        for z in [-0.1, -3.0, -40.0, -1e4] {
            let (v, m) = ml.eval_with_method(z)?;
            println!("{a:7.2} {b:5.2} {z:8.1e} {v:12.6e}  {m:?}");
        }
    }
    Ok(())
}
