//! The stochastic square function on random smooth channel series.

use tfspde::bernstein::BernsteinSpec;
use tfspde::experiments::random_smooth_series;
use tfspde::grid::SpectralGrid;
use tfspde::harmonic::{strong_22_ratio_fourier, strong_pp_ratio, SquareFnConfig};
use tfspde::kernels::FractionalExponents;

fn main() -> tfspde::Result<()> {
    let phi = BernsteinSpec::power(0.5)?;
    let grid = SpectralGrid::new(1, 64, std::f64::consts::PI)?;
    let e = FractionalExponents::new(0.5, 0.5, 0.6, 2.0)?;
    let cfg = SquareFnConfig::new(e, 2, 1.0 / 16.0)?;
    println!("sample      p=2      p=3      p=4   p=2 (Fourier)");
    for seed in 0..5 {
        let h = random_smooth_series(grid, 16, 2, seed);
        let r: Vec<f64> = [2.0, 3.0, 4.0].iter().map(|&p| strong_pp_ratio(&cfg, &phi, &h, p)).collect::<tfspde::Result<_>>()?;
        println!("{seed:6} {:8.4} {:8.4} {:8.4} {:13.4}", r[0], r[1], r[2], strong_22_ratio_fourier(&cfg, &phi, &h)?);
    }
    Ok(())
}
