//! Small-time power laws of kernel L_p norms.

use tfspde::bernstein::BernsteinSpec;
use tfspde::experiments::{lp_declared_slope, norm_slope};
use tfspde::grid::SpectralGrid;
use tfspde::kernels::KernelOrder;

fn main() -> tfspde::Result<()> {
    let times: Vec<f64> = (0..7).map(|k| 2f64.powi(-k)).collect();
    let grid = SpectralGrid::new(1, 4096, 32.0 * std::f64::consts::PI)?;
    println!("                      case      slope   declared");
    for (alpha, sigma, s, p) in [(0.5, 1.0, 0.5, 1.0), (0.8, 0.9, 1.0, 1.0), (0.5, 1.0, 0.5, 1.5), (0.5, 1.0, 0.75, 2.0)] {
        let phi = BernsteinSpec::power(s)?;
        let declared = lp_declared_slope(alpha, sigma, 1, p, s);
        let c = norm_slope(KernelOrder::new(alpha, sigma)?, &phi, &grid, p, &times, declared)?;
        println!("a={alpha} sig={sigma} s={s} p={p:<4} {:9.5} {:9.5}", c.slope, c.declared);
    }
    Ok(())
}
