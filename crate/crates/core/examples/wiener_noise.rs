//! Truncated cylindrical Wiener noise on the spectral grid.

use tfspde::grid::SpectralGrid;
use tfspde::noise::{sample_wiener_path, WienerBasis, WienerModes};

fn main() -> tfspde::Result<()> {
    let grid = SpectralGrid::new(1, 64, std::f64::consts::PI)?;
    let modes = WienerModes::new(grid, 8, WienerBasis::SineModes)?;
    println!("orthonormality defect of {} modes: {:.2e}", modes.len(), modes.orthonormality_defect());

    let path = sample_wiener_path(8, &grid, 1.0, 400, WienerBasis::SineModes, 3)?;
    let var: f64 = (0..8).map(|k| path.mode_value(k, 400).powi(2)).sum::<f64>() / 8.0;
    println!("mean B_k(1)^2 over modes: {var:.4}");
    let inc = path.increment_field(&modes, 0)?;
    println!("first increment field: L2 = {:.4e}, max = {:.4e}", inc.lp_norm(2.0), inc.max_abs());
    Ok(())
}
