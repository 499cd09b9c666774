//! Bernstein functions with zero drift and the lower scaling condition.
//!
//! Only closed-form kinds are supported: pure powers `x^s`, log-powers
//! `c·log(1 + x^s)` and positive mixtures of powers. Each generates the
//! nonlocal operator whose Fourier multiplier is `-φ(|ξ|²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, Tolerance};

/// One `(weight, exponent)` term of a power mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub weight: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BernsteinKind {
    /// `φ(x) = x^s`, `s ∈ (0, 1]`.
    Power { s: f64 },
    /// `φ(x) = c·log(1 + x^s)`.
    LogPower { s: f64, c: f64 },
    /// `φ(x) = Σ wᵢ x^{sᵢ}`.
    Mixture { terms: Vec<PowerTerm> },
}

fn default_tolerance() -> f64 {
    1e-12
}

/// A Bernstein function together with the relative tolerance used by [`BernsteinSpec::inverse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinSpec {
    #[serde(flatten)]
    pub kind: BernsteinKind,
    #[serde(default = "default_tolerance")]
    pub eval_tolerance: f64,
}

/// Empirical lower-scaling data `c₁ (M/m)^{κ₀} ≤ φ(M)/φ(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub kappa0_est: f64,
    pub c1_est: f64,
    pub grid: Vec<(f64, f64)>,
}

const INVERSE_MAX_BISECTIONS: usize = 60;

impl BernsteinSpec {
    pub fn new(kind: BernsteinKind) -> Result<Self> {
        let spec = Self {
            kind,
            eval_tolerance: default_tolerance(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn power(s: f64) -> Result<Self> {
        Self::new(BernsteinKind::Power { s })
    }

    pub fn log_power(s: f64, c: f64) -> Result<Self> {
        Self::new(BernsteinKind::LogPower { s, c })
    }

    pub fn mixture(terms: &[(f64, f64)]) -> Result<Self> {
        Self::new(BernsteinKind::Mixture {
            terms: terms.iter().map(|&(weight, s)| PowerTerm { weight, s }).collect(),
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.eval_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_s = |s: f64| {
            if s > 0.0 && s <= 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("Bernstein exponent s = {s} outside (0, 1]")))
            }
        };
        match &self.kind {
            BernsteinKind::Power { s } => check_s(*s)?,
            BernsteinKind::LogPower { s, c } => {
                check_s(*s)?;
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Parameter(format!("log-power scale c = {c} must be positive")));
                }
            }
            BernsteinKind::Mixture { terms } => {
                if terms.is_empty() {
                    return Err(Error::Parameter("mixture needs at least one term".into()));
                }
                for t in terms {
                    check_s(t.s)?;
                    if !(t.weight > 0.0 && t.weight.is_finite()) {
                        return Err(Error::Parameter(format!("mixture weight {} must be positive", t.weight)));
                    }
                }
            }
        }
        if !(self.eval_tolerance > 0.0 && self.eval_tolerance < 1.0) {
            return Err(Error::Parameter(format!(
                "eval_tolerance {} must lie in (0, 1)",
                self.eval_tolerance
            )));
        }
        Ok(())
    }

    /// Evaluates φ(x) for x > 0.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("Bernstein function evaluated at x = {x}")));
        }
        Ok(self.eval_unchecked(x))
    }

    /// φ(x) with φ(0) = 0; no domain check.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            BernsteinKind::Power { s } => {
                if *s == 1.0 {
                    x
                } else if *s == 0.5 {
                    x.sqrt()
                } else {
                    x.powf(*s)
                }
            }
            BernsteinKind::LogPower { s, c } => c * x.powf(*s).ln_1p(),
            BernsteinKind::Mixture { terms } => terms.iter().map(|t| t.weight * x.powf(t.s)).sum(),
        }
    }

    /// Lower bound on the scaling exponent that is known in closed form.
    pub fn nominal_exponent(&self) -> Option<f64> {
        match &self.kind {
            BernsteinKind::Power { s } => Some(*s),
            BernsteinKind::Mixture { terms } => terms.iter().map(|t| t.s).reduce(f64::min),
            BernsteinKind::LogPower { .. } => None,
        }
    }

    /// Solves φ(x) = y by geometric bracketing and bisection.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("inverse requested at y = {y}")));
        }
        if let BernsteinKind::Power { s } = self.kind {
            if s == 1.0 {
                return Ok(y);
            }
        }
        // Find k with φ(2^k) ≤ y ≤ φ(2^{k+1}).
        let mut k: i32 = 0;
        let phi_at = |k: i32| self.eval_unchecked(2f64.powi(k));
        if phi_at(0) <= y {
            while phi_at(k + 1) < y {
                k += 1;
                if k >= 1023 {
                    return Err(Error::BracketNotFound { y });
                }
            }
        } else {
            while phi_at(k) > y {
                k -= 1;
                if k <= -1074 {
                    return Err(Error::BracketNotFound { y });
                }
            }
        }
        let mut lo = 2f64.powi(k);
        let mut hi = 2f64.powi(k + 1);
        for _ in 0..INVERSE_MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval_unchecked(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let resid = (self.eval_unchecked(x) - y).abs();
        if resid > self.eval_tolerance * y {
            return Err(Error::BracketNotFound { y });
        }
        Ok(x)
    }

    /// Estimates κ₀ and c₁ on the supplied `(m, M)` pairs.
    pub fn scaling_exponents(&self, ratio_grid: &[(f64, f64)]) -> Result<ScalingReport> {
        if ratio_grid.is_empty() {
            return Err(Error::Empty("scaling ratio grid"));
        }
        let mut kappa = f64::INFINITY;
        for &(m, big_m) in ratio_grid {
            if !(m > 0.0 && big_m > m) {
                return Err(Error::Domain(format!("ratio pair ({m}, {big_m}) must satisfy 0 < m < M")));
            }
            let ratio = self.eval_unchecked(big_m) / self.eval_unchecked(m);
            let local = ratio.ln() / (big_m / m).ln();
            kappa = kappa.min(local);
        }
        let kappa = kappa.clamp(f64::MIN_POSITIVE, 1.0);
        let c1 = ratio_grid
            .iter()
            .map(|&(m, big_m)| self.eval_unchecked(big_m) / self.eval_unchecked(m) / (big_m / m).powf(kappa))
            .fold(f64::INFINITY, f64::min);
        Ok(ScalingReport {
            kappa0_est: kappa,
            c1_est: c1,
            grid: ratio_grid.to_vec(),
        })
    }

    /// κ₀ estimate on [`default_ratio_grid`].
    pub fn default_scaling(&self) -> ScalingReport {
        self.scaling_exponents(&default_ratio_grid())
            .expect("default ratio grid is nonempty and ordered")
    }

    /// Returns `(∫_{1/ρ}^∞ t⁻¹ φ(t⁻²) dt, φ(ρ²))`.
    pub fn tail_integral_check(&self, rho: f64) -> Result<(f64, f64)> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("tail integral needs rho > 0, got {rho}")));
        }
        let report = self.default_scaling();
        if !(report.kappa0_est > 0.0) {
            return Err(Error::Parameter("lower scaling exponent must be positive".into()));
        }
        let rhs = self.eval_unchecked(rho * rho);
        // t = e^u turns the integrand into φ(e^{-2u}) on [-ln ρ, ∞).
        let cutoff = 1e-14 * rhs;
        let tol = Tolerance {
            abs: 1e-16 * rhs,
            rel: 1e-12,
            max_intervals: 500,
        };
        let mut lo = -rho.ln();
        let mut total = 0.0;
        let mut width = 1.0;
        for _ in 0..4096 {
            let hi = lo + width;
            total += integrate_adaptive(|u| self.eval_unchecked((-2.0 * u).exp()), lo, hi, tol)?;
            if self.eval_unchecked((-2.0 * hi).exp()) < cutoff {
                return Ok((total, rhs));
            }
            lo = hi;
            width = (width * 1.5).min(64.0);
        }
        Err(Error::Quadrature(format!(
            "tail integral did not decay below {cutoff:.3e} (rho = {rho})"
        )))
    }
}

/// 64 `(m, M)` pairs spanning 2^{-20}..2^{20}: eight base points, eight ratios each.
pub fn default_ratio_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(64);
    for i in 0..8 {
        let m_exp = -20.0 + 5.0 * i as f64;
        let span = 20.0 - m_exp;
        for j in 0..8 {
            let r_exp = 1.0 + j as f64 * (span - 1.0) / 7.0;
            grid.push((m_exp.exp2(), (m_exp + r_exp).exp2()));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(BernsteinSpec::power(0.5).unwrap().eval(4.0).unwrap(), 2.0);
        assert_eq!(BernsteinSpec::power(1.0).unwrap().eval(7.0).unwrap(), 7.0);
        let lp = BernsteinSpec::log_power(1.0, 1.0).unwrap();
        assert!((lp.eval(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_nonpositive() {
        let phi = BernsteinSpec::power(0.5).unwrap();
        assert!(matches!(phi.eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(phi.eval(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_kinds_rejected() {
        assert!(BernsteinSpec::power(1.5).is_err());
        assert!(BernsteinSpec::power(0.0).is_err());
        assert!(BernsteinSpec::log_power(0.5, -1.0).is_err());
        assert!(BernsteinSpec::mixture(&[]).is_err());
        assert!(BernsteinSpec::mixture(&[(-1.0, 0.5)]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let tol = 1e-12;
        let x = BernsteinSpec::power(0.5).unwrap().inverse(3.0).unwrap();
        assert!((x - 9.0).abs() < 9.0 * tol);
        let x = BernsteinSpec::power(1.0).unwrap().inverse(5.0).unwrap();
        assert_eq!(x, 5.0);
        let mix = BernsteinSpec::mixture(&[(1.0, 0.5), (1.0, 1.0)]).unwrap();
        let y = mix.eval(2.0).unwrap();
        let x = mix.inverse(y).unwrap();
        assert!((x - 2.0).abs() < 1e-10, "{x}");
    }

    #[test]
    fn inverse_roundtrip_on_log_grid() {
        for phi in [
            BernsteinSpec::power(0.3).unwrap(),
            BernsteinSpec::log_power(0.8, 2.0).unwrap(),
            BernsteinSpec::mixture(&[(0.5, 0.25), (2.0, 0.9)]).unwrap(),
        ] {
            for i in 0..1000 {
                let x = (-30.0 + 60.0 * i as f64 / 999.0).exp2();
                let y = phi.eval(x).unwrap();
                let back = phi.inverse(y).unwrap();
                let resid = (phi.eval(back).unwrap() - y).abs();
                assert!(resid <= phi.eval_tolerance * y, "x={x} back={back}");
            }
        }
    }

    #[test]
    fn scaling_for_powers() {
        let grid = default_ratio_grid();
        assert_eq!(grid.len(), 64);
        let r = BernsteinSpec::power(0.7).unwrap().scaling_exponents(&grid).unwrap();
        assert!((r.kappa0_est - 0.7).abs() < 1e-12);
        let r = BernsteinSpec::power(1.0).unwrap().scaling_exponents(&grid).unwrap();
        assert!((r.kappa0_est - 1.0).abs() < 1e-12);
        assert!(matches!(
            BernsteinSpec::power(0.7).unwrap().scaling_exponents(&[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn scaling_for_log_power() {
        let phi = BernsteinSpec::log_power(1.0, 1.0).unwrap();
        // direct log ratio: ln(ln(1001)/ln 2)/ln(1000)
        let r = phi.scaling_exponents(&[(1.0, 1e3)]).unwrap();
        let oracle = ((1001f64).ln() / 2f64.ln()).ln() / 1000f64.ln();
        assert!((r.kappa0_est - oracle).abs() < 1e-14);
        assert!((r.kappa0_est - 0.332_858_105_659_859_3).abs() < 1e-12);
        // slow variation at large arguments pushes the grid estimate well below 0.2
        assert!(phi.default_scaling().kappa0_est < 0.2);
    }

    #[test]
    fn scaling_bounds_hold_on_grid() {
        for phi in [
            BernsteinSpec::log_power(0.6, 1.0).unwrap(),
            BernsteinSpec::mixture(&[(1.0, 0.3), (0.1, 1.0)]).unwrap(),
        ] {
            let r = phi.default_scaling();
            for &(m, big_m) in &r.grid {
                let ratio = phi.eval(big_m).unwrap() / phi.eval(m).unwrap();
                let lower = r.c1_est * (big_m / m).powf(r.kappa0_est);
                assert!(lower <= ratio * (1.0 + 1e-12));
                assert!(ratio <= big_m / m * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn tail_integral_closed_form() {
        let phi = BernsteinSpec::power(0.5).unwrap();
        let (lhs, rhs) = phi.tail_integral_check(1.0).unwrap();
        assert!((lhs - 1.0).abs() < 1e-10, "{lhs}");
        assert_eq!(rhs, 1.0);
        // lhs = ρ^{2s}/(2s) = φ(ρ²)/(2s): scaling ρ by 4 multiplies lhs by φ(16ρ²)/φ(ρ²)
        let (l1, r1) = phi.tail_integral_check(0.7).unwrap();
        let (l2, r2) = phi.tail_integral_check(2.8).unwrap();
        assert!(((l2 / l1) / (r2 / r1) - 1.0).abs() < 0.1);
    }

    #[test]
    fn tail_ratio_bounded_over_rho() {
        for phi in [
            BernsteinSpec::power(0.9).unwrap(),
            BernsteinSpec::power(0.5).unwrap(),
            BernsteinSpec::log_power(0.7, 1.0).unwrap(),
            BernsteinSpec::mixture(&[(1.0, 0.4), (1.0, 1.0)]).unwrap(),
        ] {
            let ratios: Vec<f64> = (-6..=6)
                .map(|k| {
                    let (l, r) = phi.tail_integral_check(2f64.powi(k)).unwrap();
                    l / r
                })
                .collect();
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max.is_finite() && min > 0.0);
            assert!(max / min < 1e3, "{phi:?}: {ratios:?}");
        }
    }

    #[test]
    fn toml_schema() {
        #[derive(Deserialize)]
        struct Wrap {
            phi: BernsteinSpec,
        }
        let w: Wrap = toml::from_str("phi = { kind = \"power\", s = 0.5 }").unwrap();
        assert_eq!(w.phi, BernsteinSpec::power(0.5).unwrap());
        let w: Wrap =
            toml::from_str("phi = { kind = \"mixture\", terms = [{ weight = 1.0, s = 0.5 }] }").unwrap();
        assert!(matches!(w.phi.kind, BernsteinKind::Mixture { .. }));
    }

    proptest! {
        #[test]
        fn power_is_homogeneous(s in 0.05f64..1.0, x in 1e-6f64..1e6, lambda in 1e-3f64..1e3) {
            let phi = BernsteinSpec::power(s).unwrap();
            let lhs = phi.eval(lambda * x).unwrap();
            let rhs = lambda.powf(s) * phi.eval(x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        }

        #[test]
        fn monotone_and_concave(s in 0.05f64..1.0, c in 0.1f64..10.0, x in 1e-4f64..1e4) {
            let phi = BernsteinSpec::log_power(s, c).unwrap();
            let h = 1e-3 * x;
            let (a, b, d) = (phi.eval(x - h).unwrap(), phi.eval(x).unwrap(), phi.eval(x + h).unwrap());
            prop_assert!(a <= b && b <= d);
            prop_assert!(a - 2.0 * b + d <= 1e-12 * b);
        }
    }
}
