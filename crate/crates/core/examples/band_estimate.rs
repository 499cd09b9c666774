//! Littlewood-Paley band kernels against their two-regime bound.

use tfspde::config::ExperimentConfig;
use tfspde::experiments::band_sweep;

fn main() -> tfspde::Result<()> {
    let cfg = ExperimentConfig::preset();
    let r = band_sweep(&cfg)?;
    println!("fitted constant: {:.4}", r.constant);
    println!(" j   large-t slope   declared   break time   crossover");
    for ((j, slope, declared), (_, brk, cross)) in r.large_t_slopes.iter().zip(&r.breaks) {
        println!("{j:2} {slope:15.4} {declared:10.4} {brk:12.4e} {cross:11.4e}");
    }
    println!("slope in phi(4^j): {:.4} (ceiling {:.4})", r.j_slope.0, r.j_slope.1);
    Ok(())
}
