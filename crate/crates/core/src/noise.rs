//! Stochastic drivers: Poisson random measures over time × space × marks,
//! compensated integrals against them, and truncated cylindrical Wiener noise.
//!
//! Every sampler is a pure function of its seed. Ensembles draw per-member
//! seeds from [`derive_seed`], so results do not depend on scheduling.

use std::io::{BufRead, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::grid::{Field, SpectralGrid};
use crate::quadrature::GaussLegendre;
use crate::special::{gamma_fn, ln_gamma_fn};

/// SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of member `index` of stream `stream` under `master`:
/// `splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

/// The generator used by every sampler in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream identifiers for [`derive_seed`].
pub mod streams {
    pub const CLOUD: u64 = 1;
    pub const WIENER: u64 = 2;
    pub const INITIAL: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
}

// ---------------------------------------------------------------------------
// Lévy measures

/// Law of the marks of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkLaw {
    /// All marks equal `y`.
    PointMass { y: Vec<f64> },
    /// Centred isotropic Gaussian with per-coordinate standard deviation `std`.
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub rate: f64,
    pub mark: MarkLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intensity {
    /// `μ = Σ λᵢ · lawᵢ`.
    FiniteMixture { components: Vec<MixtureComponent> },
    /// `μ(dy) = |y|^{-1-a} e^{-λ|y|} 1{|y| > ε} dy` on the line.
    TemperedPowerLaw {
        exponent: f64,
        tempering: f64,
        eps_jump: f64,
    },
}

/// Intensity measure `μ` on the mark space `ℝ^{d₁}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    pub mark_dim: usize,
    pub intensity: Intensity,
}

/// Weighted mark nodes `(w, ξ)` with `Σ w g(ξ) ≈ ∫ g dμ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkQuadrature {
    pub mark_dim: usize,
    pub weights: Vec<f64>,
    /// Row-major `weights.len() × mark_dim`.
    pub marks: Vec<f64>,
}

impl MarkQuadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mark(&self, i: usize) -> &[f64] {
        &self.marks[i * self.mark_dim..(i + 1) * self.mark_dim]
    }

    /// `Σ wᵢ g(ξᵢ)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * g(self.mark(i))).sum()
    }

    fn push(&mut self, w: f64, mark: &[f64]) {
        self.weights.push(w);
        self.marks.extend_from_slice(mark);
    }
}

/// Composite Gauss–Legendre nodes over consecutive breakpoints.
fn composite_nodes(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::cached(order);
    let mut out = Vec::with_capacity(breaks.len().saturating_sub(1) * order);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in rule.nodes().iter().zip(rule.weights()) {
            out.push((mid + half * x, half * wt));
        }
    }
    out
}

/// Radial panels for Gaussian marks, graded towards the origin.
const GAUSS_RADIAL_BREAKS: [f64; 11] = [0.0, 0.01, 0.05, 0.2, 0.5, 1.0, 2.0, 3.5, 5.0, 7.0, 10.0];
const GAUSS_ANGLES: usize = 32;

impl LevyMeasureSpec {
    pub fn point_mass(rate: f64, y: Vec<f64>) -> Result<Self> {
        let spec = Self {
            mark_dim: y.len(),
            intensity: Intensity::FiniteMixture {
                components: vec![MixtureComponent {
                    rate,
                    mark: MarkLaw::PointMass { y },
                }],
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(rate: f64, std: f64, mark_dim: usize) -> Result<Self> {
        let spec = Self {
            mark_dim,
            intensity: Intensity::FiniteMixture {
                components: vec![MixtureComponent {
                    rate,
                    mark: MarkLaw::Gaussian { std },
                }],
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tempered(exponent: f64, tempering: f64, eps_jump: f64) -> Result<Self> {
        let spec = Self {
            mark_dim: 1,
            intensity: Intensity::TemperedPowerLaw {
                exponent,
                tempering,
                eps_jump,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mark_dim == 0 {
            return Err(Error::Parameter("mark dimension must be at least 1".into()));
        }
        match &self.intensity {
            Intensity::FiniteMixture { components } => {
                for (i, c) in components.iter().enumerate() {
                    if !(c.rate >= 0.0) || !c.rate.is_finite() {
                        return Err(Error::Parameter(format!("component {i}: rate {} must be finite and >= 0", c.rate)));
                    }
                    match &c.mark {
                        MarkLaw::PointMass { y } => {
                            if y.len() != self.mark_dim {
                                return Err(Error::Parameter(format!(
                                    "component {i}: point mass has dimension {}, expected {}",
                                    y.len(),
                                    self.mark_dim
                                )));
                            }
                            if y.iter().any(|v| !v.is_finite()) {
                                return Err(Error::Parameter(format!("component {i}: point mass not finite")));
                            }
                        }
                        MarkLaw::Gaussian { std } => {
                            if !(*std > 0.0) || !std.is_finite() {
                                return Err(Error::Parameter(format!("component {i}: std {std} must be positive")));
                            }
                        }
                    }
                }
            }
            Intensity::TemperedPowerLaw {
                exponent,
                tempering,
                eps_jump,
            } => {
                if self.mark_dim != 1 {
                    return Err(Error::Unsupported("tempered power law is implemented for mark_dim = 1".into()));
                }
                if !(*exponent > 0.0 && *exponent < 2.0) {
                    return Err(Error::Parameter(format!("power-law exponent {exponent} outside (0, 2)")));
                }
                if !(*tempering > 0.0) || !tempering.is_finite() {
                    return Err(Error::Parameter(format!(
                        "tempering {tempering} must be positive for finite p-moments"
                    )));
                }
                if !(*eps_jump >= 0.0) || !eps_jump.is_finite() {
                    return Err(Error::Parameter(format!("eps_jump {eps_jump} must be >= 0")));
                }
            }
        }
        Ok(())
    }

    /// `μ(ℝ^{d₁})`, or an error for an untruncated power law.
    pub fn total_rate(&self) -> Result<f64> {
        match &self.intensity {
            Intensity::FiniteMixture { components } => Ok(components.iter().map(|c| c.rate).sum()),
            Intensity::TemperedPowerLaw { eps_jump, .. } => {
                if *eps_jump == 0.0 {
                    return Err(Error::InfiniteRate("power-law intensity with eps_jump = 0".into()));
                }
                Ok(self.mark_quadrature()?.weights.iter().sum())
            }
        }
    }

    /// `(m_p)^p = ∫ |y|^p μ(dy)`.
    pub fn moment_pow(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::Parameter(format!("moment order p = {p} must be positive")));
        }
        match &self.intensity {
            Intensity::FiniteMixture { components } => Ok(components
                .iter()
                .map(|c| {
                    c.rate
                        * match &c.mark {
                            MarkLaw::PointMass { y } => norm(y).powf(p),
                            MarkLaw::Gaussian { std } => gaussian_abs_moment(*std, self.mark_dim, p),
                        }
                })
                .sum()),
            Intensity::TemperedPowerLaw { .. } => {
                let q = self.mark_quadrature()?;
                Ok(q.integrate(|y| norm(y).powf(p)))
            }
        }
    }

    /// `m_p = (∫ |y|^p μ(dy))^{1/p}`.
    pub fn m_p(&self, p: f64) -> Result<f64> {
        Ok(self.moment_pow(p)?.powf(1.0 / p))
    }

    /// Nodes for integrating against `μ`. Gaussian marks are supported for
    /// `mark_dim ≤ 2`.
    pub fn mark_quadrature(&self) -> Result<MarkQuadrature> {
        let mut q = MarkQuadrature {
            mark_dim: self.mark_dim,
            weights: Vec::new(),
            marks: Vec::new(),
        };
        match &self.intensity {
            Intensity::FiniteMixture { components } => {
                for c in components {
                    if c.rate == 0.0 {
                        continue;
                    }
                    match &c.mark {
                        MarkLaw::PointMass { y } => q.push(c.rate, y),
                        MarkLaw::Gaussian { std } => gaussian_nodes(&mut q, c.rate, *std, self.mark_dim)?,
                    }
                }
            }
            Intensity::TemperedPowerLaw {
                exponent,
                tempering,
                eps_jump,
            } => {
                if *eps_jump == 0.0 {
                    return Err(Error::InfiniteRate("power-law intensity with eps_jump = 0".into()));
                }
                // r = ε e^v turns the density into ε^{-a} e^{-a v - λ ε e^v} dv
                let (a, lam, eps) = (*exponent, *tempering, *eps_jump);
                let v_max = (45.0 / (lam * eps)).ln().max(1.0);
                let panels = (v_max / 0.5).ceil() as usize;
                let breaks: Vec<f64> = (0..=panels).map(|i| v_max * i as f64 / panels as f64).collect();
                for (v, w) in composite_nodes(&breaks, 16) {
                    let r = eps * v.exp();
                    let dens = eps.powf(-a) * (-a * v - lam * r).exp();
                    q.push(w * dens, &[r]);
                    q.push(w * dens, &[-r]);
                }
            }
        }
        Ok(q)
    }

    fn sample_mark<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) -> Result<()> {
        match &self.intensity {
            Intensity::FiniteMixture { components } => {
                let total: f64 = components.iter().map(|c| c.rate).sum();
                let mut u = rng.random::<f64>() * total;
                let mut chosen = components.len() - 1;
                for (i, c) in components.iter().enumerate() {
                    if u < c.rate {
                        chosen = i;
                        break;
                    }
                    u -= c.rate;
                }
                match &components[chosen].mark {
                    MarkLaw::PointMass { y } => out.extend_from_slice(y),
                    MarkLaw::Gaussian { std } => {
                        for _ in 0..self.mark_dim {
                            let z: f64 = StandardNormal.sample(rng);
                            out.push(std * z);
                        }
                    }
                }
            }
            Intensity::TemperedPowerLaw {
                exponent,
                tempering,
                eps_jump,
            } => {
                // Pareto proposal on (ε, ∞), accepted with probability e^{-λ(r-ε)}
                let (a, lam, eps) = (*exponent, *tempering, *eps_jump);
                let r = loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let r = eps * u.powf(-1.0 / a);
                    if rng.random::<f64>() < (-lam * (r - eps)).exp() {
                        break r;
                    }
                };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.push(sign * r);
            }
        }
        Ok(())
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `E|Y|^p` for `Y ~ N(0, std² I_d)`.
fn gaussian_abs_moment(std: f64, d: usize, p: f64) -> f64 {
    let d = d as f64;
    std.powf(p) * 2f64.powf(0.5 * p) * (ln_gamma_fn(0.5 * (d + p)) - ln_gamma_fn(0.5 * d)).exp()
}

fn gaussian_nodes(q: &mut MarkQuadrature, rate: f64, std: f64, d: usize) -> Result<()> {
    let radial = composite_nodes(&GAUSS_RADIAL_BREAKS, 16);
    match d {
        1 => {
            let c = (2.0 / std::f64::consts::PI).sqrt();
            for (r, w) in radial {
                let wt = 0.5 * rate * w * c * (-0.5 * r * r).exp();
                q.push(wt, &[std * r]);
                q.push(wt, &[-std * r]);
            }
        }
        2 => {
            for (r, w) in radial {
                let wr = rate * w * r * (-0.5 * r * r).exp() / GAUSS_ANGLES as f64;
                for k in 0..GAUSS_ANGLES {
                    let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / GAUSS_ANGLES as f64;
                    q.push(wr, &[std * r * th.cos(), std * r * th.sin()]);
                }
            }
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "Gaussian mark quadrature is implemented for mark_dim <= 2, got {d}"
            )))
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Poisson clouds

/// Time horizon and spatial box `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub horizon: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(horizon: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let w = Self { horizon, lower, upper };
        w.validate()?;
        Ok(w)
    }

    /// `[0, T] × [0, 1)^d`.
    pub fn unit(horizon: f64, d: usize) -> Result<Self> {
        Self::new(horizon, vec![0.0; d], vec![1.0; d])
    }

    /// `[0, T]` times the periodic cell of `grid`.
    pub fn for_grid(horizon: f64, grid: &SpectralGrid) -> Result<Self> {
        let l = grid.half_width();
        Self::new(horizon, vec![-l; grid.d()], vec![l; grid.d()])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Parameter(format!("horizon {} must be finite and >= 0", self.horizon)));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() || self.lower.len() > 3 {
            return Err(Error::Parameter("spatial box needs 1 to 3 matching bounds".into()));
        }
        for (a, b) in self.lower.iter().zip(&self.upper) {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Parameter(format!("box side [{a}, {b}) is empty or not finite")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn space_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn volume(&self) -> f64 {
        self.horizon * self.space_volume()
    }

    pub fn contains(&self, s: f64, x: &[f64]) -> bool {
        (0.0..=self.horizon).contains(&s)
            && x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, a), b)| *v >= *a && *v < *b)
    }
}

/// One atom `(s, x, ξ)` of a Poisson random measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub s: f64,
    pub x: Vec<f64>,
    pub mark: Vec<f64>,
}

/// A realisation of the Poisson random measure on a window, atoms sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCloud {
    pub atoms: Vec<Atom>,
    pub window: Window,
    pub seed: u64,
    pub spec: LevyMeasureSpec,
}

/// Draws a cloud with `Poisson(T·|box|·μ(ℝ^{d₁}))` atoms, uniform in time and
/// space, marks from the normalised intensity.
pub fn sample_cloud(spec: &LevyMeasureSpec, window: &Window, seed: u64) -> Result<PoissonCloud> {
    spec.validate()?;
    window.validate()?;
    let rate = spec.total_rate()?;
    let mean = rate * window.volume();
    let mut rng = rng_from_seed(seed);
    let count = if mean > 0.0 {
        let dist = Poisson::new(mean).map_err(|e| Error::Parameter(format!("Poisson mean {mean}: {e}")))?;
        let c: f64 = dist.sample(&mut rng);
        c as usize
    } else {
        0
    };
    let d = window.dim();
    let mut atoms = Vec::with_capacity(count);
    for _ in 0..count {
        let s = rng.random::<f64>() * window.horizon;
        let x: Vec<f64> = (0..d)
            .map(|a| window.lower[a] + rng.random::<f64>() * (window.upper[a] - window.lower[a]))
            .collect();
        let mut mark = Vec::with_capacity(spec.mark_dim);
        spec.sample_mark(&mut rng, &mut mark)?;
        atoms.push(Atom { s, x, mark });
    }
    atoms.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(PoissonCloud {
        atoms,
        window: window.clone(),
        seed,
        spec: spec.clone(),
    })
}

impl PoissonCloud {
    /// A cloud with the given atoms (sorted on entry); every atom must lie in the window.
    pub fn from_atoms(mut atoms: Vec<Atom>, window: Window, spec: LevyMeasureSpec) -> Result<Self> {
        window.validate()?;
        spec.validate()?;
        atoms.sort_by(|a, b| a.s.total_cmp(&b.s));
        let cloud = Self {
            atoms,
            window,
            seed: 0,
            spec,
        };
        cloud.check_inside()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn check_inside(&self) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if !self.window.contains(a.s, &a.x) {
                return Err(Error::OutsideWindow(format!("atom {i} at s = {}, x = {:?}", a.s, a.x)));
            }
            if a.mark.len() != self.spec.mark_dim {
                return Err(Error::Parameter(format!("atom {i} has mark dimension {}", a.mark.len())));
            }
        }
        Ok(())
    }

    /// Atom index ranges for the slabs `[k dt, (k+1) dt)`, `k < n_steps`.
    pub fn slab_ranges(&self, dt: f64, n_steps: usize) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(n_steps);
        let mut start = 0;
        for k in 0..n_steps {
            let end_t = (k + 1) as f64 * dt;
            let mut end = start;
            while end < self.atoms.len() && (self.atoms[end].s < end_t || k + 1 == n_steps) {
                end += 1;
            }
            out.push(start..end);
            start = end;
        }
        out
    }

    /// Writes one atom per line: `s x_1 .. x_d xi_1 .. xi_d1`, after a `#` header.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.window.dim();
        let mut header = String::from("# s");
        for a in 0..d {
            header.push_str(&format!(" x{}", a + 1));
        }
        for a in 0..self.spec.mark_dim {
            header.push_str(&format!(" xi{}", a + 1));
        }
        writeln!(w, "{header}")?;
        for atom in &self.atoms {
            let mut line = format!("{:.17e}", atom.s);
            for v in atom.x.iter().chain(&atom.mark) {
                line.push_str(&format!(" {v:.17e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads atoms in the format of [`PoissonCloud::write_text`].
    pub fn read_text<R: BufRead>(r: R, window: Window, spec: LevyMeasureSpec) -> Result<Self> {
        let d = window.dim();
        let width = 1 + d + spec.mark_dim;
        let mut atoms = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Io(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != width {
                return Err(Error::Io(format!("line {}: {} columns, expected {width}", lineno + 1, vals.len())));
            }
            atoms.push(Atom {
                s: vals[0],
                x: vals[1..1 + d].to_vec(),
                mark: vals[1 + d..].to_vec(),
            });
        }
        Self::from_atoms(atoms, window, spec)
    }
}

// ---------------------------------------------------------------------------
// Compensated integrals

/// Composite Gauss–Legendre layout per space-time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowQuadrature {
    pub panels: usize,
    pub order: usize,
    /// Relative disagreement between `panels` and `2·panels` treated as failure.
    pub tolerance: f64,
}

impl Default for WindowQuadrature {
    fn default() -> Self {
        Self {
            panels: 4,
            order: 8,
            tolerance: 1e-7,
        }
    }
}

fn axis_nodes(lo: f64, hi: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let breaks: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    composite_nodes(&breaks, order)
}

fn window_sum<F>(window: &Window, marks: &MarkQuadrature, f: &F, panels: usize, order: usize) -> (f64, f64)
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    let t_nodes = axis_nodes(0.0, window.horizon, panels, order);
    let axes: Vec<Vec<(f64, f64)>> = (0..window.dim())
        .map(|a| axis_nodes(window.lower[a], window.upper[a], panels, order))
        .collect();
    let per_axis = axes[0].len();
    let n_space = per_axis.pow(window.dim() as u32);
    let (mut total, mut abs_total) = (0.0, 0.0);
    let mut x = vec![0.0; window.dim()];
    for &(s, ws) in &t_nodes {
        for flat in 0..n_space {
            let mut rem = flat;
            let mut wx = ws;
            for a in (0..window.dim()).rev() {
                let (xa, wa) = axes[a][rem % per_axis];
                x[a] = xa;
                wx *= wa;
                rem /= per_axis;
            }
            for i in 0..marks.len() {
                let v = f(s, &x, marks.mark(i));
                total += wx * marks.weights[i] * v;
                abs_total += wx * marks.weights[i] * v.abs();
            }
        }
    }
    (total, abs_total)
}

/// `∫_0^T ∫_box ∫ f(s, x, ξ) μ(dξ) dx ds`, checked against a refined rule.
pub fn window_integral<F>(spec: &LevyMeasureSpec, window: &Window, f: &F, quad: WindowQuadrature) -> Result<f64>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    window.validate()?;
    if window.horizon == 0.0 {
        return Ok(0.0);
    }
    let marks = spec.mark_quadrature()?;
    let (coarse, _) = window_sum(window, &marks, f, quad.panels, quad.order);
    let (fine, scale) = window_sum(window, &marks, f, 2 * quad.panels, quad.order);
    if !fine.is_finite() || !coarse.is_finite() {
        return Err(Error::Quadrature("non-finite integrand on the window".into()));
    }
    if (fine - coarse).abs() > quad.tolerance * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Quadrature(format!(
            "window integral not resolved: {coarse:.12e} vs {fine:.12e} (scale {scale:.3e})"
        )));
    }
    Ok(fine)
}

/// A fixed integrand with its compensator precomputed, for repeated use over clouds.
pub struct CompensatedIntegrator<F> {
    spec: LevyMeasureSpec,
    window: Window,
    integrand: F,
    compensator: f64,
}

impl<F> CompensatedIntegrator<F>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    pub fn new(spec: &LevyMeasureSpec, window: &Window, integrand: F, quad: WindowQuadrature) -> Result<Self> {
        spec.validate()?;
        let compensator = window_integral(spec, window, &integrand, quad)?;
        Ok(Self {
            spec: spec.clone(),
            window: window.clone(),
            integrand,
            compensator,
        })
    }

    pub fn compensator(&self) -> f64 {
        self.compensator
    }

    /// Sum of the integrand over the atoms.
    pub fn atom_sum(&self, cloud: &PoissonCloud) -> Result<f64> {
        if cloud.window != self.window {
            return Err(Error::OutsideWindow("cloud window differs from the integrator window".into()));
        }
        cloud.check_inside()?;
        Ok(cloud.atoms.iter().map(|a| (self.integrand)(a.s, &a.x, &a.mark)).sum())
    }

    /// `∫ f dΠ̃ = Σ_atoms f − ∫∫∫ f ds dx μ(dξ)`.
    pub fn integrate(&self, cloud: &PoissonCloud) -> Result<f64> {
        Ok(self.atom_sum(cloud)? - self.compensator)
    }

    /// Samples `n_ens` clouds from seeds `derive_seed(seed, ENSEMBLE, k)` and integrates each.
    pub fn ensemble(&self, n_ens: usize, seed: u64) -> Result<Vec<f64>> {
        (0..n_ens)
            .map(|k| {
                let cloud = sample_cloud(&self.spec, &self.window, derive_seed(seed, streams::ENSEMBLE, k as u64))?;
                self.integrate(&cloud)
            })
            .collect()
    }
}

/// One-shot compensated integral over the cloud's own window and intensity.
pub fn compensated_integral<F>(cloud: &PoissonCloud, integrand: F) -> Result<f64>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    CompensatedIntegrator::new(&cloud.spec, &cloud.window, integrand, WindowQuadrature::default())?.integrate(cloud)
}

/// Outcome of a moment comparison `E|∫f dΠ̃|^p` versus `∫∫∫ |f|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Standard error of `lhs`.
    pub lhs_se: f64,
    /// Standard error of `ratio`.
    pub ratio_se: f64,
    pub n_ens: usize,
    pub warning: Option<String>,
}

impl MomentCheck {
    pub fn relative_mc_error(&self) -> f64 {
        self.lhs_se / self.lhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Upper constant for `E|∫f dΠ̃|^p ≤ C ∫∫∫|f|^p` when `p ∈ [1, 2]`: 2 at
/// `p = 1` (triangle inequality), 1 at `p = 2` (isometry), `2^{2-p}` between
/// by Riesz–Thorin interpolation.
pub fn moment_constant(p: f64) -> f64 {
    2f64.powf(2.0 - p)
}

/// Same-ensemble moment checks for several `p`.
pub fn moment_sweep<F>(
    spec: &LevyMeasureSpec,
    window: &Window,
    integrand: F,
    ps: &[f64],
    n_ens: usize,
    seed: u64,
) -> Result<Vec<MomentCheck>>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    if let Some(p) = ps.iter().find(|p| !(**p >= 1.0 && **p <= 2.0)) {
        return Err(Error::Parameter(format!("moment order p = {p} outside [1, 2]")));
    }
    if n_ens < 2 {
        return Err(Error::InsufficientData(format!("ensemble of {n_ens}, need at least 2")));
    }
    let integrator = CompensatedIntegrator::new(spec, window, &integrand, WindowQuadrature::default())?;
    let samples = integrator.ensemble(n_ens, seed)?;
    ps.iter()
        .map(|&p| {
            let rhs = window_integral(spec, window, &|s, x, xi| integrand(s, x, xi).abs().powf(p), WindowQuadrature::default())?;
            if !(rhs > 0.0) || !rhs.is_finite() {
                return Err(Error::Degenerate(format!("moment integral {rhs} is not positive and finite")));
            }
            let vals: Vec<f64> = samples.iter().map(|v| v.abs().powf(p)).collect();
            let n = vals.len() as f64;
            let lhs = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (n - 1.0);
            let lhs_se = (var / n).sqrt();
            let rel = lhs_se / lhs.abs().max(f64::MIN_POSITIVE);
            let warning = (rel > 0.1).then(|| {
                format!("ensemble too small: relative Monte Carlo error {rel:.3} exceeds 0.1 (n_ens = {n_ens})")
            });
            Ok(MomentCheck {
                p,
                lhs,
                rhs,
                ratio: lhs / rhs,
                lhs_se,
                ratio_se: lhs_se / rhs,
                n_ens,
                warning,
            })
        })
        .collect()
}

/// `E|∫f dΠ̃|^p` against `∫∫∫ |f|^p ds dx μ(dξ)` for one `p ∈ [1, 2]`.
pub fn moment_inequality_check<F>(
    spec: &LevyMeasureSpec,
    window: &Window,
    integrand: F,
    p: f64,
    n_ens: usize,
    seed: u64,
) -> Result<MomentCheck>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    Ok(moment_sweep(spec, window, integrand, &[p], n_ens, seed)?.remove(0))
}

/// Pearson chi-square test of counts against `Poisson(mean)`, pooling cells
/// until each expected count is at least 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn poisson_chi_square(counts: &[usize], mean: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() {
        return Err(Error::Empty("count sample"));
    }
    if !(mean > 0.0) {
        return Err(Error::Parameter(format!("Poisson mean {mean} must be positive")));
    }
    let n = counts.len() as f64;
    let kmax = *counts.iter().max().expect("nonempty");
    let mut observed = vec![0usize; kmax + 1];
    for &c in counts {
        observed[c] += 1;
    }
    let pmf = |k: usize| (k as f64 * mean.ln() - mean - ln_gamma_fn(k as f64 + 1.0)).exp();
    // cells: (expected, observed); last cell is the upper tail
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut e_acc, mut o_acc, mut cdf) = (0.0, 0.0, 0.0);
    let mut k = 0;
    loop {
        let pk = pmf(k);
        let tail_after = (1.0 - cdf - pk).max(0.0);
        e_acc += n * pk;
        o_acc += observed.get(k).copied().unwrap_or(0) as f64;
        cdf += pk;
        if e_acc >= 5.0 {
            cells.push((e_acc, o_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
        k += 1;
        if n * tail_after < 5.0 || k > kmax + 1 {
            break;
        }
    }
    let tail_obs: f64 = observed.iter().skip(k).map(|&c| c as f64).sum();
    let tail_exp = n * (1.0 - cdf).max(0.0);
    e_acc += tail_exp;
    o_acc += tail_obs;
    match cells.last_mut() {
        Some(last) if e_acc < 5.0 => {
            last.0 += e_acc;
            last.1 += o_acc;
        }
        _ => cells.push((e_acc, o_acc)),
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientData("fewer than two chi-square cells".into()));
    }
    let statistic: f64 = cells.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

// ---------------------------------------------------------------------------
// Cylindrical Wiener noise

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WienerBasis {
    /// `Π_a sin(π k_a (x_a + L)/L) / √L`, `1 ≤ k_a < n/2`, ordered by `|k|²`.
    #[default]
    SineModes,
    /// Normalised indicators of grid cells, in storage order.
    GridCells,
}

/// Orthonormal spatial basis functions on a grid.
#[derive(Debug, Clone)]
pub struct WienerModes {
    grid: SpectralGrid,
    basis: WienerBasis,
    /// Per mode: wave numbers (sine) or the flat cell index in slot 0.
    indices: Vec<[usize; 3]>,
}

impl WienerModes {
    pub fn new(grid: SpectralGrid, k: usize, basis: WienerBasis) -> Result<Self> {
        let d = grid.d();
        let indices = match basis {
            WienerBasis::SineModes => {
                let per = grid.n() / 2 - 1;
                let available = per.pow(d as u32);
                if k > available {
                    return Err(Error::Grid(format!(
                        "{k} sine modes requested, grid resolves {available}"
                    )));
                }
                let mut all: Vec<[usize; 3]> = (0..available)
                    .map(|flat| {
                        let mut idx = [0usize; 3];
                        let mut rem = flat;
                        for a in (0..d).rev() {
                            idx[a] = rem % per + 1;
                            rem /= per;
                        }
                        idx
                    })
                    .collect();
                all.sort_by_key(|m| (m.iter().map(|v| v * v).sum::<usize>(), *m));
                all.truncate(k);
                all
            }
            WienerBasis::GridCells => {
                if k > grid.len() {
                    return Err(Error::Grid(format!("{k} cells requested, grid has {}", grid.len())));
                }
                (0..k).map(|i| [i, 0, 0]).collect()
            }
        };
        Ok(Self { grid, basis, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn basis(&self) -> WienerBasis {
        self.basis
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// The `k`-th basis function sampled on the grid.
    pub fn mode(&self, k: usize) -> Field {
        let mut out = Field::zeros(self.grid);
        self.accumulate(k, 1.0, out.values_mut());
        out
    }

    fn accumulate(&self, k: usize, coef: f64, out: &mut [f64]) {
        let g = &self.grid;
        match self.basis {
            WienerBasis::SineModes => {
                let (n, d, l) = (g.n(), g.d(), g.half_width());
                let m = self.indices[k];
                let axis: Vec<Vec<f64>> = (0..d)
                    .map(|a| {
                        (0..n)
                            .map(|j| (std::f64::consts::PI * m[a] as f64 * (g.coord(j) + l) / l).sin() / l.sqrt())
                            .collect()
                    })
                    .collect();
                for (flat, o) in out.iter_mut().enumerate() {
                    let idx = g.unravel(flat);
                    let v: f64 = (0..d).map(|a| axis[a][idx[a]]).product();
                    *o += coef * v;
                }
            }
            WienerBasis::GridCells => {
                out[self.indices[k][0]] += coef / g.cell_volume().sqrt();
            }
        }
    }

    /// `Σ_k c_k e_k`.
    pub fn combine(&self, coefs: &[f64]) -> Result<Field> {
        if coefs.len() != self.len() {
            return Err(Error::Parameter(format!("{} coefficients for {} modes", coefs.len(), self.len())));
        }
        let mut out = Field::zeros(self.grid);
        for (k, &c) in coefs.iter().enumerate() {
            if c != 0.0 {
                self.accumulate(k, c, out.values_mut());
            }
        }
        Ok(out)
    }

    /// Largest deviation of the grid Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let modes: Vec<Field> = (0..self.len()).map(|k| self.mode(k)).collect();
        let cell = self.grid.cell_volume();
        let mut worst = 0.0f64;
        for i in 0..modes.len() {
            for j in i..modes.len() {
                let ip: f64 = modes[i].values().iter().zip(modes[j].values()).map(|(a, b)| a * b).sum::<f64>() * cell;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// Brownian increments of `K` independent modes on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub dt: f64,
    pub n_steps: usize,
    pub modes: usize,
    pub basis: WienerBasis,
    /// `increments[step][mode] ~ N(0, dt)`.
    pub increments: Vec<Vec<f64>>,
    pub seed: u64,
}

impl NoisePath {
    /// `B_k(t_step)`.
    pub fn mode_value(&self, k: usize, step: usize) -> f64 {
        self.increments[..step].iter().map(|inc| inc[k]).sum()
    }

    /// Spatial increment field `Σ_k ΔB_k e_k` over step `step`.
    pub fn increment_field(&self, modes: &WienerModes, step: usize) -> Result<Field> {
        modes.combine(&self.increments[step])
    }
}

/// Samples `K` independent Brownian increment streams with variance `horizon / n_steps`.
pub fn sample_wiener_path(
    k: usize,
    grid: &SpectralGrid,
    horizon: f64,
    n_steps: usize,
    basis: WienerBasis,
    seed: u64,
) -> Result<NoisePath> {
    WienerModes::new(*grid, k, basis)?;
    if n_steps == 0 || !(horizon > 0.0) {
        return Err(Error::Parameter(format!("time grid needs T > 0 and steps > 0 (T = {horizon}, steps = {n_steps})")));
    }
    let dt = horizon / n_steps as f64;
    let sd = dt.sqrt();
    let mut rng = rng_from_seed(seed);
    let increments = (0..n_steps)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                })
                .collect()
        })
        .collect();
    Ok(NoisePath {
        dt,
        n_steps,
        modes: k,
        basis,
        increments,
        seed,
    })
}

/// `Γ(-1/2, x) = 2 (e^{-x}/√x − √π erfc(√x))`, used as an oracle for the
/// tempered power law with exponent 1/2 and unit tempering.
pub fn upper_gamma_minus_half(x: f64) -> f64 {
    2.0 * ((-x).exp() / x.sqrt() - gamma_fn(0.5) * libm::erfc(x.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(_: f64, _: &[f64], _: &[f64]) -> f64 {
        1.0
    }

    #[test]
    fn derived_seeds_differ_and_repeat() {
        let a = derive_seed(7, streams::CLOUD, 0);
        assert_eq!(a, derive_seed(7, streams::CLOUD, 0));
        assert_ne!(a, derive_seed(7, streams::CLOUD, 1));
        assert_ne!(a, derive_seed(7, streams::WIENER, 0));
        assert_ne!(a, derive_seed(8, streams::CLOUD, 0));
    }

    #[test]
    fn zero_rate_gives_empty_cloud() {
        let spec = LevyMeasureSpec::point_mass(0.0, vec![1.0]).unwrap();
        let c = sample_cloud(&spec, &Window::unit(1.0, 1).unwrap(), 3).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn point_mass_moment_is_exact() {
        let spec = LevyMeasureSpec::point_mass(1.0, vec![0.6, -0.8]).unwrap();
        for p in [1.0, 1.5, 2.0] {
            assert!((spec.m_p(p).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_quadrature_matches_moments() {
        for d in [1, 2] {
            let spec = LevyMeasureSpec::gaussian(2.5, 0.7, d).unwrap();
            let q = spec.mark_quadrature().unwrap();
            let mass: f64 = q.weights.iter().sum();
            assert!((mass - 2.5).abs() < 1e-12, "{mass}");
            for p in [1.0, 1.5, 2.0] {
                let num = q.integrate(|y| norm(y).powf(p));
                let exact = spec.moment_pow(p).unwrap();
                assert!((num / exact - 1.0).abs() < 1e-9, "d={d} p={p}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn tempered_rate_matches_incomplete_gamma() {
        for eps in [0.01, 0.1, 1.0] {
            let spec = LevyMeasureSpec::tempered(0.5, 1.0, eps).unwrap();
            let exact = 2.0 * upper_gamma_minus_half(eps);
            let rate = spec.total_rate().unwrap();
            assert!((rate / exact - 1.0).abs() < 1e-9, "eps={eps}: {rate} vs {exact}");
        }
        let spec = LevyMeasureSpec::tempered(0.5, 1.0, 0.0).unwrap();
        assert!(matches!(spec.total_rate(), Err(Error::InfiniteRate(_))));
        assert!(matches!(
            sample_cloud(&spec, &Window::unit(1.0, 1).unwrap(), 1),
            Err(Error::InfiniteRate(_))
        ));
    }

    #[test]
    fn tempered_second_moment() {
        // ∫ y² μ(dy) = 2 Γ(3/2, ε) for a = 1/2, λ = 1; at ε → 0 this is √π
        let spec = LevyMeasureSpec::tempered(0.5, 1.0, 1e-8).unwrap();
        let m2 = spec.moment_pow(2.0).unwrap();
        assert!((m2 - std::f64::consts::PI.sqrt()).abs() < 1e-6, "{m2}");
    }

    #[test]
    fn cloud_is_sorted_inside_and_deterministic() {
        let spec = LevyMeasureSpec::gaussian(20.0, 1.0, 1).unwrap();
        let w = Window::new(2.0, vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let a = sample_cloud(&spec, &w, 11).unwrap();
        let b = sample_cloud(&spec, &w, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.atoms.windows(2).all(|p| p[0].s <= p[1].s));
        a.check_inside().unwrap();
        assert!(a.len() > 100);
    }

    #[test]
    fn text_round_trip() {
        let spec = LevyMeasureSpec::gaussian(5.0, 1.0, 2).unwrap();
        let w = Window::unit(1.0, 2).unwrap();
        let a = sample_cloud(&spec, &w, 5).unwrap();
        let mut buf = Vec::new();
        a.write_text(&mut buf).unwrap();
        let b = PoissonCloud::read_text(&buf[..], w, spec).unwrap();
        assert_eq!(a.atoms, b.atoms);
    }

    #[test]
    fn outside_atoms_are_rejected() {
        let spec = LevyMeasureSpec::point_mass(1.0, vec![1.0]).unwrap();
        let atom = Atom {
            s: 0.5,
            x: vec![1.5],
            mark: vec![1.0],
        };
        let r = PoissonCloud::from_atoms(vec![atom], Window::unit(1.0, 1).unwrap(), spec);
        assert!(matches!(r, Err(Error::OutsideWindow(_))));
    }

    #[test]
    fn slab_ranges_partition_atoms() {
        let spec = LevyMeasureSpec::point_mass(50.0, vec![1.0]).unwrap();
        let c = sample_cloud(&spec, &Window::unit(1.0, 1).unwrap(), 2).unwrap();
        let ranges = c.slab_ranges(0.125, 8);
        assert_eq!(ranges.last().unwrap().end, c.len());
        for (k, r) in ranges.iter().enumerate() {
            for a in &c.atoms[r.clone()] {
                assert!(a.s >= k as f64 * 0.125 && a.s <= (k + 1) as f64 * 0.125);
            }
        }
    }

    #[test]
    fn compensated_constant_integrand() {
        let spec = LevyMeasureSpec::point_mass(10.0, vec![1.0]).unwrap();
        let w = Window::unit(1.0, 1).unwrap();
        let c = sample_cloud(&spec, &w, 9).unwrap();
        let v = compensated_integral(&c, one).unwrap();
        assert!((v - (c.len() as f64 - 10.0)).abs() < 1e-10);
        assert_eq!(compensated_integral(&c, |_, _, _| 0.0).unwrap(), 0.0);
    }

    #[test]
    fn window_integral_resolution_failure() {
        let spec = LevyMeasureSpec::point_mass(1.0, vec![1.0]).unwrap();
        let w = Window::unit(1.0, 1).unwrap();
        let r = window_integral(&spec, &w, &|_, x: &[f64], _| (200.0 * x[0]).sin().abs(), WindowQuadrature::default());
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }

    #[test]
    fn moment_orders_are_checked() {
        let spec = LevyMeasureSpec::point_mass(1.0, vec![1.0]).unwrap();
        let w = Window::unit(1.0, 1).unwrap();
        assert!(matches!(moment_inequality_check(&spec, &w, one, 2.5, 10, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn chi_square_accepts_poisson_and_rejects_shifted() {
        let spec = LevyMeasureSpec::point_mass(10.0, vec![1.0]).unwrap();
        let w = Window::unit(1.0, 1).unwrap();
        let counts: Vec<usize> = (0..4000)
            .map(|k| sample_cloud(&spec, &w, derive_seed(1, 0, k)).unwrap().len())
            .collect();
        let good = poisson_chi_square(&counts, 10.0).unwrap();
        assert!(good.p_value > 1e-3, "{good:?}");
        let bad = poisson_chi_square(&counts, 11.0).unwrap();
        assert!(bad.p_value < 1e-3, "{bad:?}");
    }

    #[test]
    fn wiener_modes_are_orthonormal() {
        let g = SpectralGrid::new(1, 32, 2.0).unwrap();
        for basis in [WienerBasis::SineModes, WienerBasis::GridCells] {
            let m = WienerModes::new(g, 12, basis).unwrap();
            assert!(m.orthonormality_defect() < 1e-10);
        }
        let g2 = SpectralGrid::new(2, 16, 1.0).unwrap();
        let m = WienerModes::new(g2, 20, WienerBasis::SineModes).unwrap();
        assert!(m.orthonormality_defect() < 1e-10);
        assert!(matches!(WienerModes::new(g, 16, WienerBasis::SineModes), Err(Error::Grid(_))));
        assert!(matches!(WienerModes::new(g, 33, WienerBasis::GridCells), Err(Error::Grid(_))));
    }

    #[test]
    fn wiener_path_is_deterministic() {
        let g = SpectralGrid::new(1, 32, 1.0).unwrap();
        let a = sample_wiener_path(4, &g, 1.0, 16, WienerBasis::SineModes, 21).unwrap();
        let b = sample_wiener_path(4, &g, 1.0, 16, WienerBasis::SineModes, 21).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.increments.len(), 16);
        assert!((a.dt - 1.0 / 16.0).abs() < 1e-15);
    }
}
