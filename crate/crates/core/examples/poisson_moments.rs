//! Poisson random measures and moments of compensated integrals.

use tfspde::experiments::noise_check_integrand;
use tfspde::noise::{moment_constant, moment_sweep, sample_cloud, LevyMeasureSpec, Window};

fn main() -> tfspde::Result<()> {
    let window = Window::unit(1.0, 1)?;
    let spec = LevyMeasureSpec::gaussian(10.0, 1.0, 1)?;
    let cloud = sample_cloud(&spec, &window, 7)?;
    println!("{} atoms in one cloud (mean {})", cloud.len(), spec.total_rate()? * window.volume());
    for a in cloud.atoms.iter().take(3) {
        println!("  s = {:.4}  x = {:?}  mark = {:?}", a.s, a.x, a.mark);
    }

    println!("\n   p     E|I|^p        rhs     ratio   constant");
    for m in moment_sweep(&spec, &window, noise_check_integrand, &[1.0, 1.5, 2.0], 10_000, 11)? {
        println!("{:4} {:10.5} {:10.5} {:9.4} {:10.4}", m.p, m.lhs, m.rhs, m.ratio, moment_constant(m.p));
    }
    Ok(())
}
