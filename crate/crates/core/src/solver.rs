//! Truncated Picard construction of local mild solutions
//!
//! ```text
//! w(t) = S(t)⋆w₀ + ∫₀ᵗ S_{α,1}(t-s)⋆g(λ_K w(s)) ds
//!      + ∫∫∫ S_{α,σ₂}(t-s, x-y) f̃(s,y,ξ,λ_K w(s,y)) Π̃(ds,dy,dξ)
//!      [+ ∫∫ S_{α,σ₁}(t-s, x-y) h(λ_K w(s,y)) W(ds,dy)]
//! ```
//!
//! on a periodic grid with a uniform time grid `t_n = n·dt`. The drift and the
//! compensator use product integration: the field is frozen at the left end of
//! each slab and the kernel is integrated over the slab exactly in Fourier
//! space. Jump atoms enter at their exact times and positions. Each term at
//! `t_n` only reads the solution at `t_j`, `j < n`, so the fixed point can also
//! be reached by a single forward march.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::grid::{fft_forward, fft_inverse, lp_norm_slice, Field, RadialTable, SpectralGrid};
use crate::kernels::{FractionalExponents, KernelOrder, SymbolEvaluator};
use crate::mittag_leffler::{MLParams, MittagLeffler};
use crate::noise::{
    derive_seed, rng_from_seed, sample_cloud, sample_wiener_path, streams, LevyMeasureSpec, NoisePath, PoissonCloud,
    WienerBasis, WienerModes, Window,
};

/// Margin below which the solvability inequality counts as violated.
pub const GATE_MARGIN: f64 = 1e-12;

/// The two sides of `(α-σ₂)p + 1 > (αd/(2κ₀))(p-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub kappa0: f64,
    pub passed: bool,
    pub inequality: String,
}

/// Evaluates the solvability inequality with κ₀ from the default scaling grid.
pub fn solvability_gate(e: &FractionalExponents, phi: &BernsteinSpec, d: usize) -> GateReport {
    let kappa0 = phi.default_scaling().kappa0_est;
    let (a, s2, p) = (e.alpha, e.sigma2, e.p);
    let lhs = (a - s2) * p + 1.0;
    let rhs = a * d as f64 / (2.0 * kappa0) * (p - 1.0);
    let passed = lhs - rhs > GATE_MARGIN;
    let inequality = format!(
        "(alpha - sigma2)*p + 1 > (alpha*d/(2*kappa0))*(p - 1): ({a} - {s2})*{p} + 1 = {lhs:.15} {} ({a}*{d}/(2*{kappa0:.15}))*({p} - 1) = {rhs:.15}",
        if passed { ">" } else { "is not >" }
    );
    GateReport {
        lhs,
        rhs,
        kappa0,
        passed,
        inequality,
    }
}

/// Returns the report, or a gate error quoting the substituted inequality.
pub fn check_gate(e: &FractionalExponents, phi: &BernsteinSpec, d: usize) -> Result<GateReport> {
    let r = solvability_gate(e, phi, d);
    if r.passed {
        Ok(r)
    } else {
        Err(Error::Gate(r.inequality))
    }
}

// ---------------------------------------------------------------------------
// Nonlinearities

/// Scalar maps used for the drift `g`, the jump amplitude `η` and the Wiener amplitude `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointwiseMap {
    #[default]
    Zero,
    Constant {
        c: f64,
    },
    /// `a + b z`.
    Affine {
        a: f64,
        b: f64,
    },
    /// `amp · tanh(z / scale)`.
    Tanh {
        amp: f64,
        scale: f64,
    },
}

impl PointwiseMap {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { c } => c,
            Self::Affine { a, b } => a + b * z,
            Self::Tanh { amp, scale } => amp * (z / scale).tanh(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Zero | Self::Constant { .. } => 0.0,
            Self::Affine { b, .. } => b.abs(),
            Self::Tanh { amp, scale } => (amp / scale).abs(),
        }
    }

    /// `C` in `|m(z)| ≤ C + |z|·lipschitz`.
    pub fn growth_constant(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { c } => c.abs(),
            Self::Affine { a, .. } => a.abs(),
            Self::Tanh { amp, .. } => amp.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Self::Zero => true,
            Self::Constant { c } => c == 0.0,
            Self::Affine { a, b } => a == 0.0 && b == 0.0,
            Self::Tanh { amp, .. } => amp == 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let Self::Tanh { scale, .. } = self {
            if !(*scale > 0.0) {
                return Err(Error::Config(format!("{name}: tanh scale {scale} must be positive")));
            }
        }
        Ok(())
    }
}

/// How the mark enters `f̃(s, y, ξ, z) = η(z) · c(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkCoupling {
    /// `c(ξ) = 1`.
    #[default]
    Unit,
    /// `c(ξ) = ξ₁`.
    FirstMark,
}

impl MarkCoupling {
    pub fn eval(&self, mark: &[f64]) -> f64 {
        match self {
            Self::Unit => 1.0,
            Self::FirstMark => mark[0],
        }
    }
}

/// Drift, jump amplitude and Wiener amplitude, with optional declared Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NonlinearitySpec {
    #[serde(default)]
    pub g: PointwiseMap,
    #[serde(default)]
    pub eta: PointwiseMap,
    #[serde(default)]
    pub coupling: MarkCoupling,
    #[serde(default)]
    pub h: PointwiseMap,
    #[serde(default)]
    pub g_lipschitz: Option<f64>,
    #[serde(default)]
    pub eta_lipschitz: Option<f64>,
    #[serde(default)]
    pub h_lipschitz: Option<f64>,
}

impl NonlinearitySpec {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `g(z) = a + b z`, no noise amplitudes.
    pub fn affine_drift(a: f64, b: f64) -> Self {
        Self {
            g: PointwiseMap::Affine { a, b },
            ..Self::default()
        }
    }

    /// Bounded Lipschitz drift `2 tanh z` with multiplicative jumps `(0.5 + 0.2 z) ξ₁`.
    pub fn lipschitz_preset() -> Self {
        Self {
            g: PointwiseMap::Tanh { amp: 2.0, scale: 1.0 },
            eta: PointwiseMap::Affine { a: 0.5, b: 0.2 },
            coupling: MarkCoupling::FirstMark,
            h: PointwiseMap::Affine { a: 0.2, b: 0.1 },
            ..Self::default()
        }
    }

    /// Checks each declared Lipschitz constant against sampled difference quotients.
    pub fn validate(&self) -> Result<()> {
        for (name, map, declared) in [
            ("g", &self.g, self.g_lipschitz),
            ("eta", &self.eta, self.eta_lipschitz),
            ("h", &self.h, self.h_lipschitz),
        ] {
            map.validate(name)?;
            let lip = declared.unwrap_or_else(|| map.lipschitz());
            if !(lip >= 0.0) {
                return Err(Error::Config(format!("{name}: declared Lipschitz constant {lip} is negative")));
            }
            let worst = sampled_lipschitz(map);
            if worst > lip * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Config(format!(
                    "{name}: sampled difference quotient {worst:.6} exceeds declared Lipschitz constant {lip}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest `|m(z₁) - m(z₂)| / |z₁ - z₂|` over a fixed sample in `[-50, 50]`.
pub fn sampled_lipschitz(map: &PointwiseMap) -> f64 {
    let zs: Vec<f64> = (0..401).map(|i| -50.0 + 0.25 * i as f64).collect();
    let mut worst = 0.0f64;
    for w in zs.windows(2) {
        for h in [1e-4, 0.25] {
            let (a, b) = (w[0], w[0] + h);
            worst = worst.max((map.eval(a) - map.eval(b)).abs() / (b - a));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Configuration

/// Deterministic or per-path initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Constant { c: f64 },
    /// `amp · cos(ξ_m · x)` for the lattice mode `m`.
    Cosine { amp: f64, mode: Vec<i64> },
    /// `amp · exp(-|x|² / (2 width²))`.
    Bump { amp: f64, width: f64 },
    /// `amp · Σ_axes Σ_{k ≤ modes} (a cos + b sin)(ξ_k x_a) / k²` with standard normal `a, b` per path.
    RandomSmooth { amp: f64, modes: usize },
}

impl Default for InitialData {
    fn default() -> Self {
        Self::Bump { amp: 1.0, width: 0.5 }
    }
}

impl InitialData {
    pub fn field(&self, grid: &SpectralGrid, seed: u64) -> Field {
        let g = *grid;
        match self {
            Self::Zero => Field::zeros(g),
            Self::Constant { c } => Field::constant(g, *c),
            Self::Cosine { amp, mode } => Field::cos_mode(g, mode).scaled(*amp),
            Self::Bump { amp, width } => Field::from_fn(g, |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amp * (-0.5 * r2 / (width * width)).exp()
            }),
            Self::RandomSmooth { amp, modes } => {
                let mut rng = rng_from_seed(seed);
                let d = g.d();
                let coefs: Vec<(f64, f64)> = (0..d * modes)
                    .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect();
                let dxi = g.dxi();
                Field::from_fn(g, |x| {
                    let mut v = 0.0;
                    for a in 0..d {
                        for k in 1..=*modes {
                            let (ca, cb) = coefs[a * modes + k - 1];
                            let ph = dxi * k as f64 * x[a];
                            v += (ca * ph.cos() + cb * ph.sin()) / (k * k) as f64;
                        }
                    }
                    amp * v
                })
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Self::RandomSmooth { .. })
    }
}

/// Everything needed to run the Picard construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub exponents: FractionalExponents,
    pub phi: BernsteinSpec,
    pub grid: SpectralGrid,
    pub horizon: f64,
    pub n_t: usize,
    pub k_trunc: f64,
    pub vartheta: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Adds the cylindrical Wiener term; only allowed at `p = 2`.
    pub include_wiener: bool,
    pub wiener_modes: usize,
    pub wiener_basis: WienerBasis,
    /// Jump intensity; `None` switches the jump term off.
    pub levy: Option<LevyMeasureSpec>,
    pub initial: InitialData,
    pub threads: usize,
}

impl SolverConfig {
    /// `φ = x^{1/2}`, `α = 1/2`, `σ₁ = 1/2`, `σ₂ = 0.6`, `p = 2`, `d = 1`,
    /// `K = 10`, 64 paths, `n = 64` on `[-π, π]`, 32 steps to `T = 1`,
    /// Gaussian marks at unit rate.
    pub fn lipschitz_preset() -> Self {
        Self {
            exponents: FractionalExponents::new(0.5, 0.5, 0.6, 2.0).expect("preset exponents"),
            phi: BernsteinSpec::power(0.5).expect("preset phi"),
            grid: SpectralGrid::new(1, 64, std::f64::consts::PI).expect("preset grid"),
            horizon: 1.0,
            n_t: 32,
            k_trunc: 10.0,
            vartheta: 0.0,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            n_paths: 64,
            seed: 20240601,
            include_wiener: false,
            wiener_modes: 16,
            wiener_basis: WienerBasis::SineModes,
            levy: Some(LevyMeasureSpec::gaussian(1.0, 1.0, 1).expect("preset measure")),
            initial: InitialData::default(),
            threads: 1,
        }
    }

    /// Noise-free variant of the preset, one path.
    pub fn deterministic_preset() -> Self {
        Self {
            levy: None,
            n_paths: 1,
            ..Self::lipschitz_preset()
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|n| n as f64 * self.dt()).collect()
    }

    pub fn validate(&self) -> Result<GateReport> {
        self.exponents.validate()?;
        self.phi.validate()?;
        let p = self.exponents.p;
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::Config(format!("p = {p} outside [1, 2]")));
        }
        if !(self.k_trunc > 0.0) {
            return Err(Error::Config(format!("K_trunc = {} must be positive", self.k_trunc)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() || self.n_t == 0 {
            return Err(Error::Config("time grid needs T > 0 and n_t > 0".into()));
        }
        if !(self.vartheta >= 0.0) {
            return Err(Error::Config(format!("vartheta = {} must be >= 0", self.vartheta)));
        }
        if !(self.picard_tol > 0.0) || self.picard_max_iter == 0 {
            return Err(Error::Config("picard_tol > 0 and picard_max_iter > 0 required".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        if self.include_wiener && p != 2.0 {
            return Err(Error::Config(format!("the Wiener term needs p = 2, got p = {p}")));
        }
        if let Some(levy) = &self.levy {
            levy.validate()?;
        }
        check_gate(&self.exponents, &self.phi, self.grid.d())
    }
}

// ---------------------------------------------------------------------------
// Plans

/// `λ_K`: rescales `field` onto the `L_p` ball of radius `K` when outside it.
pub fn truncate(field: &Field, k: f64, p: f64) -> Field {
    let norm = field.lp_norm(p);
    if norm <= k {
        field.clone()
    } else {
        field.scaled(k / norm)
    }
}

/// `u^{β} E_{α,β+1}(-u^α φ)` with `β = 1 - σ + α`: the time antiderivative
/// of the symbol of `S_{α,σ}`, vanishing at `u = 0`.
struct SlabAntiderivative {
    alpha: f64,
    beta: f64,
    ml: MittagLeffler,
}

impl SlabAntiderivative {
    fn new(order: KernelOrder) -> Result<Self> {
        let beta = order.ml_beta();
        if !(beta > 0.0) {
            return Err(Error::Parameter(format!("slab integral needs 1 - sigma + alpha > 0, got {beta}")));
        }
        Ok(Self {
            alpha: order.alpha,
            beta,
            ml: MittagLeffler::new(MLParams::new(order.alpha, beta + 1.0)?)?,
        })
    }

    fn eval(&self, u: f64, phi: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(u.powf(self.beta) * self.ml.eval(-u.powf(self.alpha) * phi)?)
    }
}

/// Symbols shared by all paths of one configuration.
pub struct SolverPlan {
    pub config: SolverConfig,
    table: RadialTable,
    /// `S_{α,α}(t_n)` on the lattice, `n = 0..=n_t`.
    initial_symbols: Vec<Vec<f64>>,
    /// `∫_{(m-1)dt}^{m dt} S_{α,1}(u) du`, `m = 1..=n_t` (index `m - 1`).
    drift_slabs: Vec<Vec<f64>>,
    /// Same for `S_{α,σ₂}`.
    jump_slabs: Vec<Vec<f64>>,
    /// `S_{α,σ₁}(m dt)`, `m = 1..=n_t`.
    wiener_symbols: Vec<Vec<f64>>,
    jump_eval: SymbolEvaluator,
    /// `∫ c(ξ) μ(dξ)` per coupling.
    mark_mean: [f64; 2],
    wiener_modes: Option<WienerModes>,
    pub warnings: Vec<String>,
}

fn expand_per_time(table: &RadialTable, per: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    per.into_iter().map(|v| table.expand(&v)).collect()
}

impl SolverPlan {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let e = config.exponents;
        let table = grid.radial_table();
        let phi_table: Vec<f64> = table.xi_sq.iter().map(|&x| config.phi.eval_unchecked(x)).collect();
        let dt = config.dt();
        let n_t = config.n_t;

        let s_eval = SymbolEvaluator::new(KernelOrder::new(e.alpha, e.alpha)?, &config.phi, None)?;
        let mut initial = Vec::with_capacity(n_t + 1);
        initial.push(vec![1.0; table.xi_sq.len()]);
        for n in 1..=n_t {
            initial.push(
                table
                    .xi_sq
                    .iter()
                    .map(|&x| s_eval.eval(n as f64 * dt, x))
                    .collect::<Result<Vec<_>>>()?,
            );
        }

        let slabs = |order: KernelOrder| -> Result<Vec<Vec<f64>>> {
            let anti = SlabAntiderivative::new(order)?;
            let mut prev: Vec<f64> = vec![0.0; phi_table.len()];
            let mut out = Vec::with_capacity(n_t);
            for m in 1..=n_t {
                let cur = phi_table
                    .iter()
                    .map(|&ph| anti.eval(m as f64 * dt, ph))
                    .collect::<Result<Vec<_>>>()?;
                out.push(cur.iter().zip(&prev).map(|(c, p)| c - p).collect());
                prev = cur;
            }
            Ok(out)
        };
        let drift_slabs = slabs(KernelOrder::new(e.alpha, 1.0)?)?;
        let jump_order = e.jump_order();
        let jump_slabs = if config.levy.is_some() { slabs(jump_order)? } else { Vec::new() };

        let wiener_symbols = if config.include_wiener {
            let w_eval = SymbolEvaluator::new(e.wiener_order(), &config.phi, None)?;
            (1..=n_t)
                .map(|m| {
                    table
                        .xi_sq
                        .iter()
                        .map(|&x| w_eval.eval(m as f64 * dt, x))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };

        let mut warnings = Vec::new();
        let ny = grid.nyquist().powi(2);
        let ny_idx = table
            .xi_sq
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - ny).abs().total_cmp(&(b.1 - ny).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if n_t >= 1 {
            let s = &initial[1];
            if s[ny_idx].abs() > 1e-8 * s[0].abs() {
                warnings.push(format!(
                    "kernel S(dt) is not resolved: |symbol| at Nyquist = {:.3e} of {:.3e}",
                    s[ny_idx].abs(),
                    s[0].abs()
                ));
            }
        }

        let (mark_mean, wiener_modes) = {
            let mm = match &config.levy {
                Some(levy) => {
                    let q = levy.mark_quadrature()?;
                    [q.integrate(|_| 1.0), q.integrate(|y| y[0])]
                }
                None => [0.0, 0.0],
            };
            let wm = if config.include_wiener {
                Some(WienerModes::new(grid, config.wiener_modes, config.wiener_basis)?)
            } else {
                None
            };
            (mm, wm)
        };

        Ok(Self {
            initial_symbols: expand_per_time(&table, initial),
            drift_slabs: expand_per_time(&table, drift_slabs),
            jump_slabs: expand_per_time(&table, jump_slabs),
            wiener_symbols: expand_per_time(&table, wiener_symbols),
            jump_eval: SymbolEvaluator::new(jump_order, &config.phi, None)?,
            table,
            mark_mean,
            wiener_modes,
            warnings,
            config,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.config.grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.config.times()
    }

    /// Samples the noise of path `index` from the master seed.
    pub fn sample_noise(&self, index: usize) -> Result<PathNoise> {
        let c = &self.config;
        let cloud = match &c.levy {
            Some(levy) => Some(sample_cloud(
                levy,
                &Window::for_grid(c.horizon, &c.grid)?,
                derive_seed(c.seed, streams::CLOUD, index as u64),
            )?),
            None => None,
        };
        let wiener = if c.include_wiener {
            Some(sample_wiener_path(
                c.wiener_modes,
                &c.grid,
                c.horizon,
                c.n_t,
                c.wiener_basis,
                derive_seed(c.seed, streams::WIENER, index as u64),
            )?)
        } else {
            None
        };
        let w0 = c.initial.field(&c.grid, derive_seed(c.seed, streams::INITIAL, index as u64));
        self.prepare_noise(w0, cloud, wiener)
    }

    /// Precomputes the atom kernels for a given realisation.
    pub fn prepare_noise(&self, w0: Field, cloud: Option<PoissonCloud>, wiener: Option<NoisePath>) -> Result<PathNoise> {
        let c = &self.config;
        let grid = c.grid;
        grid.check_same(w0.grid())?;
        if cloud.is_some() && c.levy.is_none() {
            return Err(Error::Config("cloud supplied but the jump term is off".into()));
        }
        if let Some(w) = &wiener {
            if w.n_steps != c.n_t || (w.dt - c.dt()).abs() > 1e-12 * c.dt() || w.modes != c.wiener_modes {
                return Err(Error::Config("Wiener path does not match the time grid or mode count".into()));
            }
        }
        let mut atoms = Vec::new();
        if let Some(cloud) = &cloud {
            let window = Window::for_grid(c.horizon, &grid)?;
            if cloud.window != window {
                return Err(Error::OutsideWindow("cloud window differs from the solver window".into()));
            }
            cloud.check_inside()?;
            let dt = c.dt();
            let inv_cell = 1.0 / grid.cell_volume();
            let l = grid.half_width();
            let dxi = grid.dxi();
            for atom in &cloud.atoms {
                let left = ((atom.s / dt).floor() as usize).min(c.n_t - 1);
                // first n with t_n > s
                let first = (left + 1..=c.n_t).find(|&n| n as f64 * dt > atom.s).unwrap_or(c.n_t + 1);
                let phase: Vec<Complex64> = (0..grid.len())
                    .map(|f| {
                        let m = grid.mode(f);
                        let arg: f64 = (0..grid.d()).map(|a| dxi * m[a] as f64 * (atom.x[a] + l)).sum();
                        Complex64::from_polar(inv_cell, -arg)
                    })
                    .collect();
                let symbols = (first..=c.n_t)
                    .map(|n| {
                        let u = n as f64 * dt - atom.s;
                        self.table
                            .xi_sq
                            .iter()
                            .map(|&x| self.jump_eval.eval(u, x))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                atoms.push(AtomKernel {
                    left,
                    first,
                    x: atom.x.clone(),
                    coupling: [1.0, atom.mark[0]],
                    phase,
                    symbols,
                });
            }
        }
        Ok(PathNoise {
            w0,
            cloud,
            wiener,
            atoms,
        })
    }

    /// `S(t_n) ⋆ w₀` for every `n`.
    pub fn initial_term(&self, w0: &Field) -> Vec<Field> {
        let spec = w0.spectrum();
        self.initial_symbols
            .iter()
            .map(|sym| {
                let s: Vec<Complex64> = spec.iter().zip(sym).map(|(a, b)| a * b).collect();
                Field::from_spectrum(self.config.grid, s)
            })
            .collect()
    }

    /// Applies `𝒯` to a full path.
    pub fn apply(&self, nonlin: &NonlinearitySpec, noise: &PathNoise, w: &[Field]) -> Result<Vec<Field>> {
        let n_t = self.config.n_t;
        if w.len() != n_t + 1 {
            return Err(Error::Parameter(format!("path has {} fields, expected {}", w.len(), n_t + 1)));
        }
        let mut state = OperatorState::new(self, nonlin, noise);
        let mut out = Vec::with_capacity(n_t + 1);
        for n in 0..=n_t {
            if n > 0 {
                state.push_history(&w[n - 1])?;
            }
            out.push(state.evaluate(n)?);
        }
        Ok(out)
    }

    /// The fixed point by forward substitution.
    pub fn march(&self, nonlin: &NonlinearitySpec, noise: &PathNoise) -> Result<Vec<Field>> {
        let n_t = self.config.n_t;
        let mut state = OperatorState::new(self, nonlin, noise);
        let mut out: Vec<Field> = Vec::with_capacity(n_t + 1);
        for n in 0..=n_t {
            if n > 0 {
                state.push_history(&out[n - 1])?;
            }
            out.push(state.evaluate(n)?);
        }
        Ok(out)
    }

    /// Picard iteration from `w⁽⁰⁾ = S(t)⋆w₀` to `sup_t ‖Δw‖_p < picard_tol`.
    pub fn picard(&self, nonlin: &NonlinearitySpec, noise: &PathNoise) -> Result<FieldPath> {
        let c = &self.config;
        let p = c.exponents.p;
        let mut w = self.initial_term(&noise.w0);
        let mut history = Vec::new();
        for it in 1..=c.picard_max_iter {
            let next = self.apply(nonlin, noise, &w)?;
            let resid = sup_distance(&next, &w, p);
            history.push(resid);
            w = next;
            if !resid.is_finite() {
                break;
            }
            if resid < c.picard_tol {
                let stopping_index = stopping_time(&w, c.k_trunc, p);
                return Ok(FieldPath {
                    times: c.times(),
                    fields: w,
                    stopping_index,
                    residual_history: history,
                    iterations: it,
                });
            }
        }
        Err(Error::PicardNonConvergence {
            iterations: history.len(),
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }
}

fn sup_distance(a: &[Field], b: &[Field], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.values().iter().zip(y.values()).map(|(u, v)| u - v).collect();
            lp_norm_slice(&d, p, x.grid().cell_volume())
        })
        .fold(0.0, f64::max)
}

/// Precomputed kernels of one jump atom.
struct AtomKernel {
    /// Index of the grid time at or before the atom.
    left: usize,
    /// First grid index strictly after the atom.
    first: usize,
    x: Vec<f64>,
    /// `c(ξ)` for each coupling.
    coupling: [f64; 2],
    /// `dx^{-d} e^{-iξ·(x + L)}`.
    phase: Vec<Complex64>,
    /// Radial symbol values of `S_{α,σ₂}(t_n - s)` for `n ≥ first`.
    symbols: Vec<Vec<f64>>,
}

/// One noise realisation with its atom kernels.
pub struct PathNoise {
    pub w0: Field,
    pub cloud: Option<PoissonCloud>,
    pub wiener: Option<NoisePath>,
    atoms: Vec<AtomKernel>,
}

impl PathNoise {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }
}

/// Running state of `𝒯` at successive times: spectra of the frozen slab data.
struct OperatorState<'a> {
    plan: &'a SolverPlan,
    nonlin: &'a NonlinearitySpec,
    noise: &'a PathNoise,
    w0_spec: Vec<Complex64>,
    drift: Vec<Vec<Complex64>>,
    comp: Vec<Vec<Complex64>>,
    wiener: Vec<Vec<Complex64>>,
    /// `λ_K w(t_j)` for the atom amplitudes.
    truncated: Vec<Field>,
}

impl<'a> OperatorState<'a> {
    fn new(plan: &'a SolverPlan, nonlin: &'a NonlinearitySpec, noise: &'a PathNoise) -> Self {
        Self {
            plan,
            nonlin,
            noise,
            w0_spec: noise.w0.spectrum(),
            drift: Vec::new(),
            comp: Vec::new(),
            wiener: Vec::new(),
            truncated: Vec::new(),
        }
    }

    fn spectrum_of(values: Vec<f64>, grid: &SpectralGrid) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        fft_forward(grid, &mut buf);
        buf
    }

    /// Adds the slab data for `t_j`, `j = len`.
    fn push_history(&mut self, w_j: &Field) -> Result<()> {
        let c = &self.plan.config;
        let grid = c.grid;
        let j = self.truncated.len();
        let lw = truncate(w_j, c.k_trunc, c.exponents.p);
        let nl = self.nonlin;
        if !nl.g.is_zero() {
            let g: Vec<f64> = lw.values().iter().map(|&z| nl.g.eval(z)).collect();
            self.drift.push(Self::spectrum_of(g, &grid));
        }
        if c.levy.is_some() && !nl.eta.is_zero() {
            let mean = self.plan.mark_mean[nl.coupling as usize];
            if mean != 0.0 {
                let f: Vec<f64> = lw.values().iter().map(|&z| mean * nl.eta.eval(z)).collect();
                self.comp.push(Self::spectrum_of(f, &grid));
            }
        }
        if let (Some(path), Some(modes)) = (&self.noise.wiener, &self.plan.wiener_modes) {
            if !nl.h.is_zero() {
                let dw = path.increment_field(modes, j)?;
                let f: Vec<f64> = lw.values().iter().zip(dw.values()).map(|(&z, &b)| nl.h.eval(z) * b).collect();
                self.wiener.push(Self::spectrum_of(f, &grid));
            }
        }
        self.truncated.push(lw);
        Ok(())
    }

    /// `𝒯w(t_n)` from the history `t_0..t_{n-1}`.
    fn evaluate(&self, n: usize) -> Result<Field> {
        let plan = self.plan;
        let grid = plan.config.grid;
        let len = grid.len();
        let mut acc: Vec<Complex64> = self
            .w0_spec
            .iter()
            .zip(&plan.initial_symbols[n])
            .map(|(a, s)| a * s)
            .collect();
        let mut fold = |hist: &[Vec<Complex64>], kern: &[Vec<f64>], sign: f64| {
            for (j, spec) in hist.iter().enumerate().take(n) {
                let k = &kern[n - j - 1];
                for m in 0..len {
                    acc[m] += spec[m] * (sign * k[m]);
                }
            }
        };
        fold(&self.drift, &plan.drift_slabs, 1.0);
        fold(&self.comp, &plan.jump_slabs, -1.0);
        fold(&self.wiener, &plan.wiener_symbols, 1.0);
        let mut out = acc;
        fft_inverse(&grid, &mut out);
        let mut values: Vec<f64> = out.into_iter().map(|c| c.re).collect();

        if !self.nonlin.eta.is_zero() && !self.noise.atoms.is_empty() {
            let mut atom_spec = vec![Complex64::new(0.0, 0.0); len];
            let mut any = false;
            for atom in &self.noise.atoms {
                if n < atom.first {
                    continue;
                }
                let z = self.truncated[atom.left].interpolate(&atom.x);
                let amp = self.nonlin.eta.eval(z) * atom.coupling[self.nonlin.coupling as usize];
                if amp == 0.0 {
                    continue;
                }
                any = true;
                let sym = &atom.symbols[n - atom.first];
                for (m, (a, ph)) in atom_spec.iter_mut().zip(&atom.phase).enumerate() {
                    *a += ph * (amp * sym[plan.table.index[m] as usize]);
                }
            }
            if any {
                fft_inverse(&grid, &mut atom_spec);
                for (v, a) in values.iter_mut().zip(atom_spec) {
                    *v += a.re;
                }
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite solution value at t index {n}, point {i}")));
        }
        Field::new(grid, values)
    }
}

// ---------------------------------------------------------------------------
// Paths and ensembles

/// A solution path on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// First index with `‖w(t_i)‖_p > K`, `None` if the path never exceeds `K`.
    pub stopping_index: Option<usize>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

impl FieldPath {
    pub fn norms(&self, p: f64) -> Vec<f64> {
        self.fields.iter().map(|f| f.lp_norm(p)).collect()
    }

    /// `w(t_n ∧ υ)`.
    pub fn stopped(&self, n: usize) -> &Field {
        let idx = self.stopping_index.map_or(n, |s| s.min(n));
        &self.fields[idx]
    }
}

/// First index with `‖w(t_i)‖_p > K`.
pub fn stopping_time(fields: &[Field], k: f64, p: f64) -> Option<usize> {
    fields.iter().position(|f| f.lp_norm(p) > k)
}

/// `sup_i e^{-ϑ t_i} mean_paths ‖w(t_i)‖_p^p`.
pub fn weighted_norm(paths: &[Vec<Field>], times: &[f64], vartheta: f64, p: f64) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let n = times.len();
    if paths.iter().any(|w| w.len() != n) {
        return Err(Error::Parameter("paths and time grid differ in length".into()));
    }
    let mut best = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        let mean = paths.iter().map(|w| w[i].lp_norm_pow(p)).sum::<f64>() / paths.len() as f64;
        best = best.max((-vartheta * t).exp() * mean);
    }
    Ok(best)
}

fn differences(a: &[Vec<Field>], b: &[Vec<Field>]) -> Result<Vec<Vec<Field>>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.sub(v)).collect::<Result<Vec<_>>>())
        .collect()
}

/// `‖𝒯u - 𝒯v‖_{B_{ϑ,p}} / ‖u - v‖_{B_{ϑ,p}}` over paths sharing their noise.
pub fn contraction_ratio(
    plan: &SolverPlan,
    nonlin: &NonlinearitySpec,
    noises: &[PathNoise],
    u: &[Vec<Field>],
    v: &[Vec<Field>],
    vartheta: f64,
) -> Result<f64> {
    let tu: Vec<Vec<Field>> = noises.iter().zip(u).map(|(nz, w)| plan.apply(nonlin, nz, w)).collect::<Result<_>>()?;
    let tv: Vec<Vec<Field>> = noises.iter().zip(v).map(|(nz, w)| plan.apply(nonlin, nz, w)).collect::<Result<_>>()?;
    contraction_ratio_from(plan, u, v, &tu, &tv, vartheta)
}

/// Same ratio when `𝒯u`, `𝒯v` are already known.
pub fn contraction_ratio_from(
    plan: &SolverPlan,
    u: &[Vec<Field>],
    v: &[Vec<Field>],
    tu: &[Vec<Field>],
    tv: &[Vec<Field>],
    vartheta: f64,
) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Parameter("ensembles must be nonempty and of equal size".into()));
    }
    let p = plan.config.exponents.p;
    let times = plan.times();
    let den = weighted_norm(&differences(u, v)?, &times, vartheta, p)?;
    if !(den > 0.0) {
        return Err(Error::Degenerate("u = v: contraction ratio undefined".into()));
    }
    let num = weighted_norm(&differences(tu, tv)?, &times, vartheta, p)?;
    Ok((num / den).powf(1.0 / p))
}

/// Ensemble of solved paths.
pub struct Ensemble {
    pub times: Vec<f64>,
    pub paths: Vec<FieldPath>,
    pub warnings: Vec<String>,
}

impl Ensemble {
    pub fn fields(&self) -> Vec<Vec<Field>> {
        self.paths.iter().map(|p| p.fields.clone()).collect()
    }

    /// `(mean, standard error)` of `‖w(t_n ∧ υ)‖_p^p` at the final time.
    pub fn stopped_moment(&self, p: f64) -> (f64, f64) {
        let n = self.times.len() - 1;
        let vals: Vec<f64> = self.paths.iter().map(|w| w.stopped(n).lp_norm_pow(p)).collect();
        mean_se(&vals)
    }

    pub fn weighted_norm(&self, vartheta: f64, p: f64) -> Result<f64> {
        weighted_norm(&self.fields(), &self.times, vartheta, p)
    }
}

/// Sample mean and its standard error.
pub fn mean_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f(i)` for `i < count` on up to `threads` scoped threads, results in index order.
pub fn map_indexed<T, F>(count: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.max(1).min(count.max(1));
    if threads == 1 {
        return (0..count).map(&f).collect();
    }
    let chunk = count.div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    let lo = t * chunk;
                    let hi = ((t + 1) * chunk).min(count);
                    (lo..hi).map(f).collect::<Result<Vec<T>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Solves every path of the configuration by Picard iteration.
pub fn solve(config: &SolverConfig, nonlin: &NonlinearitySpec) -> Result<Ensemble> {
    nonlin.validate()?;
    let plan = SolverPlan::new(config.clone())?;
    solve_with_plan(&plan, nonlin, 0..config.n_paths)
}

/// Solves the paths with the given indices under an existing plan.
pub fn solve_with_plan(
    plan: &SolverPlan,
    nonlin: &NonlinearitySpec,
    indices: std::ops::Range<usize>,
) -> Result<Ensemble> {
    let start = indices.start;
    let paths = map_indexed(indices.len(), plan.config.threads, |k| {
        let noise = plan.sample_noise(start + k)?;
        plan.picard(nonlin, &noise)
    })?;
    Ok(Ensemble {
        times: plan.times(),
        paths,
        warnings: plan.warnings.clone(),
    })
}

/// Samples the noise of paths `indices`.
pub fn sample_noises(plan: &SolverPlan, indices: std::ops::Range<usize>) -> Result<Vec<PathNoise>> {
    let start = indices.start;
    map_indexed(indices.len(), plan.config.threads, |k| plan.sample_noise(start + k))
}

/// Solves one path per given noise realisation.
pub fn solve_noises(plan: &SolverPlan, nonlin: &NonlinearitySpec, noises: &[PathNoise]) -> Result<Ensemble> {
    let paths = map_indexed(noises.len(), plan.config.threads, |k| plan.picard(nonlin, &noises[k]))?;
    Ok(Ensemble {
        times: plan.times(),
        paths,
        warnings: plan.warnings.clone(),
    })
}

/// Contraction ratios over `thetas` for `u = S(t)⋆w₀` and `v = u + perturbation`
/// on the given noise paths.
pub fn contraction_sweep(
    plan: &SolverPlan,
    nonlin: &NonlinearitySpec,
    noises: &[PathNoise],
    perturbation: &Field,
    thetas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let threads = plan.config.threads;
    let n_paths = noises.len();
    let u: Vec<Vec<Field>> = noises.iter().map(|nz| plan.initial_term(&nz.w0)).collect();
    let v: Vec<Vec<Field>> = u
        .iter()
        .map(|path| path.iter().map(|f| f.add(perturbation)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let tu = map_indexed(n_paths, threads, |k| plan.apply(nonlin, &noises[k], &u[k]))?;
    let tv = map_indexed(n_paths, threads, |k| plan.apply(nonlin, &noises[k], &v[k]))?;
    thetas
        .iter()
        .map(|&th| Ok((th, contraction_ratio_from(plan, &u, &v, &tu, &tv, th)?)))
        .collect()
}

/// Successive differences `‖w_{n}(T) - w_{2n}(T)‖_p` of the first path under step refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergence {
    pub steps: Vec<usize>,
    /// `dt` of the coarser run of each pair.
    pub dts: Vec<f64>,
    pub differences: Vec<f64>,
    pub slope: f64,
}

/// Runs path 0 at each step count in `steps` and compares consecutive final states.
pub fn self_convergence(config: &SolverConfig, nonlin: &NonlinearitySpec, steps: &[usize]) -> Result<SelfConvergence> {
    if steps.len() < 3 {
        return Err(Error::InsufficientData("self-convergence needs at least three step counts".into()));
    }
    let p = config.exponents.p;
    let finals = steps
        .iter()
        .map(|&n| {
            let plan = SolverPlan::new(SolverConfig {
                n_t: n,
                n_paths: 1,
                ..config.clone()
            })?;
            let noise = plan.sample_noise(0)?;
            let mut path = plan.march(nonlin, &noise)?;
            Ok(path.pop().expect("nonempty path"))
        })
        .collect::<Result<Vec<Field>>>()?;
    let mut dts = Vec::new();
    let mut differences = Vec::new();
    for i in 0..steps.len() - 1 {
        dts.push(config.horizon / steps[i] as f64);
        differences.push(finals[i].sub(&finals[i + 1])?.lp_norm(p));
    }
    let pairs: Vec<(f64, f64)> = dts.iter().copied().zip(differences.iter().copied()).collect();
    let slope = crate::fit::loglog_regression(&pairs)?.0;
    Ok(SelfConvergence {
        steps: steps.to_vec(),
        dts,
        differences,
        slope,
    })
}
