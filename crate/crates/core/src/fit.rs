//! Log-log regression helpers used to compare measured rates with declared exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Slope predicted by the fitted model (the slope itself).
    pub predicted: f64,
    /// Declared exponent the slope is compared against.
    pub declared: f64,
    /// `|slope - declared| / max(|declared|, 0.1)`.
    pub deviation: f64,
}

/// Ordinary least squares on `(ln x, ln y)`. No span requirement.
pub fn loglog_regression(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 2", samples.len())));
    }
    if let Some(&(x, y)) = samples.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Domain(format!("log-log sample ({x}, {y}) is not positive")));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    Ok(linear_regression(&pts))
}

fn linear_regression(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// `|slope - declared| / max(|declared|, 0.1)`.
pub fn relative_deviation(slope: f64, declared: f64) -> f64 {
    (slope - declared).abs() / declared.abs().max(0.1)
}

/// Fits a power law and compares its exponent with `declared`. Needs at
/// least four samples spanning two decades in `x`.
pub fn fit_exponent(samples: &[(f64, f64)], declared: f64) -> Result<FitResult> {
    if samples.len() < 4 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 4", samples.len())));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if !(lo > 0.0) || (hi / lo).log10() < 2.0 - 1e-12 {
        return Err(Error::InsufficientData(format!(
            "x spans {:.3} decades, need at least 2",
            if lo > 0.0 { (hi / lo).log10() } else { 0.0 }
        )));
    }
    let (slope, intercept, r2) = loglog_regression(samples)?;
    Ok(FitResult {
        slope,
        intercept,
        r2,
        predicted: slope,
        declared,
        deviation: relative_deviation(slope, declared),
    })
}

/// Two-segment continuous-free fit in log-log coordinates: returns the
/// breakpoint `x` (a sample abscissa) minimising the summed squared error of
/// separate lines on each side, with both slopes.
pub fn segmented_regression(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if samples.len() < 6 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 6", samples.len())));
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Domain("segmented regression needs positive samples".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sse = |seg: &[(f64, f64)]| {
        let (s, b, _) = linear_regression(seg);
        seg.iter().map(|p| (p.1 - b - s * p.0).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0usize);
    // each side keeps at least three points; the break point is shared
    for k in 2..pts.len() - 2 {
        let e = sse(&pts[..=k]) + sse(&pts[k..]);
        if e < best.0 {
            best = (e, k);
        }
    }
    let k = best.1;
    let (s1, _, _) = linear_regression(&pts[..=k]);
    let (s2, _, _) = linear_regression(&pts[k..]);
    Ok((pts[k].0.exp(), s1, s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| 10f64.powf(i as f64 / 3.0)).map(|x| (x, 3.0 * x * x)).collect();
        let f = fit_exponent(&s, 2.0).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.deviation < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s: Vec<(f64, f64)> = (0..40)
            .map(|i| 10f64.powf(i as f64 / 10.0))
            .map(|x| (x, x.powf(-0.7) * (1.0 + 0.01 * (rng.random::<f64>() * 2.0 - 1.0))))
            .collect();
        let f = fit_exponent(&s, -0.7).unwrap();
        assert!((f.slope + 0.7).abs() < 0.05);
    }

    #[test]
    fn deviation_arithmetic() {
        assert!((relative_deviation(-0.52, -0.5) - 0.04).abs() < 1e-12);
        assert!((relative_deviation(0.03, 0.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn span_and_count_checks() {
        let few = [(1.0, 1.0), (10.0, 2.0), (100.0, 3.0)];
        assert!(matches!(fit_exponent(&few, 1.0), Err(Error::InsufficientData(_))));
        let narrow: Vec<(f64, f64)> = (0..8).map(|i| (1.0 + i as f64, 1.0)).collect();
        assert!(matches!(fit_exponent(&narrow, 0.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn segmented_finds_break() {
        let s: Vec<(f64, f64)> = (0..30)
            .map(|i| 2f64.powf(i as f64 - 15.0))
            .map(|x| (x, if x < 1.0 { x.powf(0.5) } else { x.powf(-1.0) }))
            .collect();
        let (b, s1, s2) = segmented_regression(&s).unwrap();
        assert!((b.log2()).abs() <= 1.0, "{b}");
        assert!((s1 - 0.5).abs() < 0.1 && (s2 + 1.0).abs() < 0.1);
    }
}
