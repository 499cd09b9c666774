//! Two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ z^k / Γ(kα + β)` on the real axis.
//!
//! Small arguments use the power series with compensated summation. For
//! `z = -x` beyond the series radius the function is evaluated from its
//! integral representation
//!
//! ```text
//! E_{α,β}(-x) = 1/(πα) ∫₀^∞ r^{(1-β)/α} e^{-r^{1/α}}
//!               (r sin(π(1-β)) + x sin(π(1-β+α))) / (r² + 2rx cos(πα) + x²) dr
//! ```
//!
//! valid for `0 < α < 1`, `β < 1 + α`. The substitution `r = u^α`,
//! `u = v^{1/(1+α-β)}` removes both the stretched exponential and the
//! endpoint power, leaving a bounded integrand in `v` that is integrated by
//! Gauss–Legendre on dyadic panels. Larger β is reached with the recurrence
//! `E_{α,β}(z) = (E_{α,β-α}(z) - 1/Γ(β-α)) / z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::special::{cos_pi, ln_gamma_fn, rgamma, sin_pi, KahanSum};

/// Cancellation budget of the series for negative arguments, in e-folds: the
/// largest series term near `|z| = r` grows like `exp(r^{1/α})`, so the
/// series is trusted while `|z|^{1/α} ≤ ln(10³)` (three lost digits).
const SERIES_LOSS_EFOLDS: f64 = 6.907_755_278_982_137;
const SERIES_MAX_TERMS: usize = 10_000;
/// Panel quadrature used on the graded panels near `v = 0`.
const GRADED_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_cutoff")]
    pub series_cutoff: f64,
    #[serde(default = "default_nodes")]
    pub quad_nodes: usize,
}

fn default_cutoff() -> f64 {
    5.0
}

fn default_nodes() -> usize {
    64
}

/// Which evaluation route produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Series,
    Integral,
    ClosedForm,
    Recurrence,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Series => "series",
            Method::Integral => "integral",
            Method::ClosedForm => "closed_form",
            Method::Recurrence => "recurrence",
        };
        f.write_str(s)
    }
}

impl MLParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            series_cutoff: default_cutoff(),
            quad_nodes: default_nodes(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.series_cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Parameter(format!("alpha = {} outside (0, 2]", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Parameter(format!("beta = {} is not finite", self.beta)));
        }
        if !(self.series_cutoff > 0.0) {
            return Err(Error::Parameter(format!(
                "series_cutoff = {} must be positive",
                self.series_cutoff
            )));
        }
        if self.quad_nodes < 64 {
            return Err(Error::Parameter(format!("quad_nodes = {} below 64", self.quad_nodes)));
        }
        Ok(())
    }

    /// The |z| below which the dispatcher uses the series.
    pub fn effective_cutoff(&self) -> f64 {
        if self.alpha >= 1.0 {
            self.series_cutoff
        } else {
            self.series_cutoff.min(SERIES_LOSS_EFOLDS.powf(self.alpha))
        }
    }
}

/// Power series, valid for `|z| ≤ series_cutoff`.
pub fn ml_series(params: &MLParams, z: f64) -> Result<f64> {
    params.validate()?;
    if z.abs() > params.series_cutoff {
        return Err(Error::Unsupported(format!(
            "series requested at |z| = {} beyond cutoff {}",
            z.abs(),
            params.series_cutoff
        )));
    }
    series(params.alpha, params.beta, z)
}

fn series(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    let ln_abs_z = z.abs().ln();
    let negative = z < 0.0;
    let mut acc = KahanSum::new();
    let mut zk = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 0..SERIES_MAX_TERMS {
        let arg = k as f64 * alpha + beta;
        let term = if arg < 170.0 && zk.abs() < 1e280 {
            zk * rgamma(arg)
        } else {
            let sign = if negative && k % 2 == 1 { -1.0 } else { 1.0 };
            let lg = ln_gamma_fn(arg);
            sign * (k as f64 * ln_abs_z - lg).exp()
        };
        acc.add(term);
        let mag = term.abs();
        if arg > 1.0 && mag <= prev && mag <= 1e-16 * acc.value().abs() {
            return Ok(acc.value());
        }
        prev = mag;
        zk *= z;
    }
    Err(Error::SeriesNonConvergence {
        z,
        terms: SERIES_MAX_TERMS,
    })
}

/// `E_{α,β}(-x)` for `x > 0` from the integral representation.
pub fn ml_neg_integral(params: &MLParams, x: f64) -> Result<f64> {
    params.validate()?;
    MittagLeffler::new(*params)?.neg_integral(x)
}

/// Dispatching evaluation: series near the origin, integral route on the far
/// negative axis, recurrence for `β ≥ 1 + α`.
pub fn ml(params: &MLParams, z: f64) -> Result<f64> {
    MittagLeffler::new(*params)?.eval(z)
}

/// Evaluator for a fixed `(α, β)`, caching the trigonometric constants and
/// the quadrature rules. Cheap to clone; `Sync`.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    params: MLParams,
    cutoff: f64,
    sin_a: f64,
    sin_b: f64,
    cos_alpha: f64,
    sin_alpha: f64,
    main_rule: std::sync::Arc<GaussLegendre>,
    graded_rule: std::sync::Arc<GaussLegendre>,
}

impl MittagLeffler {
    pub fn new(params: MLParams) -> Result<Self> {
        params.validate()?;
        let (alpha, beta) = (params.alpha, params.beta);
        Ok(Self {
            params,
            cutoff: params.effective_cutoff(),
            sin_a: sin_pi(1.0 - beta),
            sin_b: sin_pi(1.0 - beta + alpha),
            cos_alpha: cos_pi(alpha),
            sin_alpha: sin_pi(alpha),
            main_rule: GaussLegendre::cached(params.quad_nodes),
            graded_rule: GaussLegendre::cached(GRADED_NODES),
        })
    }

    pub fn params(&self) -> &MLParams {
        &self.params
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        self.eval_with_method(z).map(|(v, _)| v)
    }

    pub fn eval_with_method(&self, z: f64) -> Result<(f64, Method)> {
        let MLParams { alpha, beta, .. } = self.params;
        if !z.is_finite() {
            return Err(Error::Domain(format!("Mittag-Leffler argument {z}")));
        }
        if z > self.params.series_cutoff {
            return Err(Error::Unsupported(format!(
                "positive argument z = {z} beyond series cutoff {}",
                self.params.series_cutoff
            )));
        }
        if alpha == 1.0 {
            if beta == 1.0 {
                return Ok((z.exp(), Method::ClosedForm));
            }
            if beta == 2.0 {
                let v = if z == 0.0 { 1.0 } else { z.exp_m1() / z };
                return Ok((v, Method::ClosedForm));
            }
        }
        if z.abs() <= self.cutoff {
            return series(alpha, beta, z).map(|v| (v, Method::Series));
        }
        if alpha > 1.0 {
            return Err(Error::Unsupported(format!(
                "alpha = {alpha} > 1 is series-only; |z| = {} exceeds the cutoff",
                z.abs()
            )));
        }
        if beta < 1.0 + alpha && alpha < 1.0 {
            return self.neg_integral(-z).map(|v| (v, Method::Integral));
        }
        if beta >= 1.0 + alpha {
            let lower = MittagLeffler::new(MLParams {
                beta: beta - alpha,
                ..self.params
            })?;
            let e = lower.eval(z)?;
            return Ok(((e - rgamma(beta - alpha)) / z, Method::Recurrence));
        }
        Err(Error::Unsupported(format!(
            "alpha = 1 with beta = {beta} outside the closed forms at z = {z}"
        )))
    }

    /// Integral route for `E_{α,β}(-x)`, `x > 0`.
    pub fn neg_integral(&self, x: f64) -> Result<f64> {
        let MLParams { alpha, beta, .. } = self.params;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("integral route needs alpha in (0, 1], got {alpha}")));
        }
        if beta >= 1.0 + alpha {
            return Err(Error::Parameter(format!(
                "integral route needs beta < 1 + alpha, got beta = {beta}, alpha = {alpha}"
            )));
        }
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("integral route needs x > 0, got {x}")));
        }
        if alpha == 1.0 {
            if beta == 1.0 {
                return Ok((-x).exp());
            }
            if beta == 2.0 {
                return Ok(-(-x).exp_m1() / x);
            }
            return Err(Error::Unsupported(format!("alpha = 1 with beta = {beta}")));
        }
        let c = 1.0 + alpha - beta;
        let inv_c = 1.0 / c;
        let a_over_c = alpha / c;
        let (sa, sb, ca, s_alpha) = (self.sin_a, self.sin_b, self.cos_alpha, self.sin_alpha);
        let xs = x * s_alpha;
        let integrand = |v: f64| -> f64 {
            if v <= 0.0 {
                return 0.0;
            }
            let u = v.powf(inv_c);
            let r = u.powf(alpha);
            let shifted = r + x * ca;
            let den = shifted * shifted + xs * xs;
            (-u).exp() * (r * sa + x * sb) / den
        };

        let v_of_r = |r: f64| r.powf(1.0 / a_over_c);
        let v_x = v_of_r(x);
        let base = v_x.min(1.0);
        // u = 60 leaves e^{-60} of the tail
        let v_max = 60f64.powf(c);

        // Panels above `base`: dyadic, refined around the resonance r* = -x cos(πα).
        let mut breaks = Vec::new();
        let mut b = base;
        while b < v_max {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(v_max.max(base * 2.0));
        if ca < 0.0 {
            let r_star = -x * ca;
            let width = xs;
            if width < 0.25 * r_star {
                let mut k = 0;
                loop {
                    let off = width * 2f64.powi(k);
                    if off > 0.5 * r_star {
                        break;
                    }
                    for r in [r_star - off, r_star + off] {
                        let v = v_of_r(r);
                        if v > base && v < v_max {
                            breaks.push(v);
                        }
                    }
                    k += 1;
                }
                let v = v_of_r(r_star);
                if v > base && v < v_max {
                    breaks.push(v);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let mut total = KahanSum::new();
        for w in breaks.windows(2) {
            let part = self.main_rule.integrate(integrand, w[0], w[1]);
            total.add(part);
            if w[0].powf(inv_c) > 1.0 && part.abs() < 1e-16 * total.value().abs() {
                break;
            }
        }
        // Graded panels toward v = 0.
        let mut hi = base;
        for _ in 0..400 {
            let lo = 0.5 * hi;
            let part = self.graded_rule.integrate(integrand, lo, hi);
            total.add(part);
            hi = lo;
            if part.abs() <= 1e-17 * total.value().abs() {
                break;
            }
        }
        let value = total.value() / (std::f64::consts::PI * c);
        if !value.is_finite() {
            return Err(Error::Quadrature(format!(
                "integral route produced {value} at x = {x}, alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn series_examples() {
        let p = MLParams::new(1.0, 1.0).unwrap();
        assert!(rel(ml_series(&p, -2.0).unwrap(), (-2.0f64).exp()) < 1e-14);
        for (a, b) in [(0.3, 0.7), (0.8, 1.3), (1.5, 2.0)] {
            let p = MLParams::new(a, b).unwrap();
            assert!(rel(ml_series(&p, 0.0).unwrap(), rgamma(b)) < 1e-15);
        }
        assert!(MLParams::new(0.0, 1.0).is_err());
        assert!(MLParams::new(2.5, 1.0).is_err());
    }

    #[test]
    fn series_cosine_identity() {
        // E_{2,1}(-x²) = cos x
        let p = MLParams::new(2.0, 1.0).unwrap();
        let v = ml_series(&p, -4.0).unwrap();
        assert!((v - (-0.416_146_836_547_142_4)).abs() < 1e-14);
        let p = p.with_cutoff(100.0);
        let v = ml_series(&p, -100.0).unwrap();
        assert!((v - 10f64.cos()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn series_rejects_beyond_cutoff() {
        let p = MLParams::new(0.5, 1.0).unwrap();
        assert!(matches!(ml_series(&p, -6.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn integral_half_order_erfc() {
        let p = MLParams::new(0.5, 1.0).unwrap();
        let v = ml_neg_integral(&p, 1.0).unwrap();
        assert!((v - 0.427_583_576_155_807_0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn integral_overlaps_series_near_zero() {
        let p = MLParams::new(0.5, 1.0).unwrap();
        let a = ml_neg_integral(&p, 0.01).unwrap();
        let b = ml_series(&p, -0.01).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} {b}");
    }

    #[test]
    fn integral_leading_asymptotic() {
        let p = MLParams::new(0.7, 1.0).unwrap();
        let x = 1e4;
        let v = ml_neg_integral(&p, x).unwrap();
        let asym = rgamma(0.3) / x;
        assert!(rel(v, asym) < 0.05, "{v} {asym}");
    }

    #[test]
    fn integral_parameter_errors() {
        let p = MLParams::new(1.5, 1.0).unwrap();
        assert!(matches!(ml_neg_integral(&p, 1.0), Err(Error::Parameter(_))));
        let p = MLParams::new(0.5, 1.5).unwrap();
        assert!(matches!(ml_neg_integral(&p, 1.0), Err(Error::Parameter(_))));
        let p = MLParams::new(0.5, 1.0).unwrap();
        assert!(ml_neg_integral(&p, 0.0).is_err());
    }

    #[test]
    fn dispatch_examples() {
        let p = MLParams::new(1.0, 2.0).unwrap();
        let v = ml(&p, -3.0).unwrap();
        assert!(rel(v, (1.0 - (-3.0f64).exp()) / 3.0) < 1e-15);
        let p = MLParams::new(0.8, 1.0).unwrap();
        assert_eq!(ml(&p, 0.0).unwrap(), 1.0);
        let p = MLParams::new(0.5, 1.0).unwrap();
        // e^{x²} erfc(x) at x = 4.999 and 5.001
        let a = ml(&p, -4.999).unwrap();
        let b = ml(&p, -5.001).unwrap();
        assert!((a - 0.110_725_974_564_275_4).abs() < 1e-12, "{a}");
        assert!((b - 0.110_683_308_983_239_95).abs() < 1e-12, "{b}");
        assert!(((a - b) - 4.266_558_103_544_63e-5).abs() < 1e-8);
        assert!(matches!(ml(&p, 6.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dispatch_is_continuous_at_switch() {
        for (a, b) in [(0.3, 1.0), (0.5, 1.0), (0.8, 1.0), (0.5, 0.5), (0.8, 0.9), (0.6, 1.4)] {
            let e = MittagLeffler::new(MLParams::new(a, b).unwrap()).unwrap();
            let c = e.cutoff;
            let (lo, m1) = e.eval_with_method(-c * (1.0 - 1e-12)).unwrap();
            let (hi, m2) = e.eval_with_method(-c * (1.0 + 1e-12)).unwrap();
            assert_eq!(m1, Method::Series);
            assert_eq!(m2, Method::Integral);
            assert!(rel(lo, hi) < 1e-9, "alpha={a} beta={b}: {lo} vs {hi}");
        }
    }

    #[test]
    fn cross_validation_band() {
        for a in [0.3, 0.5, 0.8] {
            for sigma in [0.1, 0.25, 0.5, 0.75, 1.0] {
                let b = 1.0 - sigma + a;
                let p = MLParams::new(a, b).unwrap();
                let e = MittagLeffler::new(p).unwrap();
                let hi = p.effective_cutoff();
                for i in 0..=10 {
                    let x = 1.0 + (hi - 1.0).max(0.0) * i as f64 / 10.0;
                    let s = series(a, b, -x).unwrap();
                    let q = e.neg_integral(x).unwrap();
                    assert!(rel(q, s) < 1e-9, "alpha={a} beta={b} x={x}: {s} vs {q}");
                }
            }
        }
    }

    #[test]
    fn recurrence_for_large_beta() {
        let e = MittagLeffler::new(MLParams::new(0.5, 1.5).unwrap()).unwrap();
        let (v, m) = e.eval_with_method(-20.0).unwrap();
        assert_eq!(m, Method::Recurrence);
        // E_{1/2,3/2}(-x) = (E_{1/2,1}(-x) - 1) / (-x)
        let base = MittagLeffler::new(MLParams::new(0.5, 1.0).unwrap()).unwrap().eval(-20.0).unwrap();
        assert!(rel(v, (base - 1.0) / -20.0) < 1e-14);
        // E_{1/2,1}(-x) = e^{x²} erfc(x) ~ 1/(x√π)
        assert!(rel(base, 1.0 / (20.0 * std::f64::consts::PI.sqrt())) < 0.01);
    }

    #[test]
    fn completely_monotone_proxy() {
        for a in [0.2, 0.5, 0.9] {
            let e = MittagLeffler::new(MLParams::new(a, 1.0).unwrap()).unwrap();
            let xs: Vec<f64> = (0..400).map(|i| 1e3 * (i as f64 / 399.0).powi(3)).collect();
            let v: Vec<f64> = xs.iter().map(|&x| e.eval(-x).unwrap()).collect();
            for i in 0..v.len() {
                assert!(v[i] > 0.0 && v[i] <= 1.0);
                if i > 0 {
                    assert!(v[i] <= v[i - 1]);
                }
                if i > 0 && i + 1 < v.len() {
                    // convexity on a nonuniform grid
                    let (h1, h2) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                    let second = (v[i + 1] - v[i]) / h2 - (v[i] - v[i - 1]) / h1;
                    assert!(second >= -1e-12, "alpha={a} x={}", xs[i]);
                }
            }
        }
    }
}
