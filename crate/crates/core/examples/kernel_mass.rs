//! Grid kernels S_{α,σ}(t, x): total mass and a radial profile.

use tfspde::bernstein::BernsteinSpec;
use tfspde::experiments::auto_snapshot;
use tfspde::grid::SpectralGrid;
use tfspde::kernels::{kernel_grid, KernelOrder};
use tfspde::special::gamma_fn;

fn main() -> tfspde::Result<()> {
    let phi = BernsteinSpec::power(0.75)?;
    println!("alpha  sigma     t   half_width        mass     expected   min value");
    for (alpha, sigma) in [(0.5, 1.0), (0.5, 0.7), (0.8, 1.0)] {
        let order = KernelOrder::new(alpha, sigma)?;
        for t in [0.1, 1.0] {
            let k = auto_snapshot(order, t, &phi, 1, 1024)?;
            let expected = t.powf(alpha - sigma) / gamma_fn(1.0 + alpha - sigma);
            println!(
                "{alpha:5} {sigma:6} {t:5} {:12.1} {:11.8} {expected:12.8} {:11.2e}",
                k.grid.half_width(),
                k.mass(),
                k.min_value()
            );
        }
    }

    let grid = SpectralGrid::new(2, 256, 8.0 * std::f64::consts::PI)?;
    let k = kernel_grid(KernelOrder::new(0.5, 1.0)?, 1.0, &grid, &phi, None)?;
    println!("\nd = 2 radial profile, alpha = 0.5, t = 1");
    for (r, v) in k.radial_profile().iter().step_by(40).take(8) {
        println!("  r = {r:8.3}  S = {v:.6e}");
    }
    Ok(())
}
