//! TOML experiment configuration.
//!
//! Only `phi` and `exponents` are required; every other section has
//! defaults matching the built-in presets. See the README for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::kernels::FractionalExponents;
use crate::noise::{LevyMeasureSpec, WienerBasis};
use crate::solver::{check_gate, InitialData, NonlinearitySpec, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub phi: BernsteinSpec,
    pub exponents: FractionalExponents,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
    #[serde(default)]
    pub kernel_check: KernelCheckSection,
    #[serde(default)]
    pub band_check: BandCheckSection,
    #[serde(default)]
    pub square_check: SquareCheckSection,
    #[serde(default)]
    pub noise_check: NoiseCheckSection,
}

fn default_seed() -> u64 {
    20240601
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            d: 1,
            n: 64,
            half_width: std::f64::consts::PI,
        }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.d, self.n, self.half_width).map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub horizon: f64,
    pub n_t: usize,
    pub k_trunc: f64,
    pub vartheta: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub paths: usize,
    pub initial: InitialData,
    pub nonlinearity: NonlinearitySpec,
    /// ϑ values for the contraction sweep reported by `solve`.
    pub contraction_sweep: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = SolverConfig::lipschitz_preset();
        Self {
            horizon: p.horizon,
            n_t: p.n_t,
            k_trunc: p.k_trunc,
            vartheta: p.vartheta,
            picard_tol: p.picard_tol,
            picard_max_iter: p.picard_max_iter,
            paths: p.n_paths,
            initial: p.initial,
            nonlinearity: NonlinearitySpec::lipschitz_preset(),
            contraction_sweep: vec![0.0, 5.0, 20.0, 80.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Jump intensity; absent switches jumps off.
    pub levy: Option<LevyMeasureSpec>,
    pub wiener: bool,
    pub wiener_modes: usize,
    pub wiener_basis: WienerBasis,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let p = SolverConfig::lipschitz_preset();
        Self {
            levy: p.levy,
            wiener: false,
            wiener_modes: p.wiener_modes,
            wiener_basis: p.wiener_basis,
        }
    }
}

/// A named list of values overriding one experiment axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parameters a sweep may name.
pub const SWEEP_PARAMETERS: &[&str] = &["t", "alpha", "sigma", "vartheta", "rate", "p", "j"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckSection {
    pub n: usize,
    /// Fixed `σ` values checked in addition to `σ = α`.
    pub sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub times: Vec<f64>,
    /// Times for the norm slope fits.
    pub slope_times: Vec<f64>,
    /// Fixed grids for the slope fits, one per dimension.
    pub slope_grids: Vec<GridSection>,
    pub mass_tolerance: f64,
    pub slope_tolerance: f64,
}

impl Default for KernelCheckSection {
    fn default() -> Self {
        Self {
            n: 1024,
            sigmas: vec![1.0],
            alphas: vec![0.3, 0.5, 0.8],
            times: vec![0.1, 1.0],
            slope_times: (0..=6).map(|k| 2f64.powi(-k)).collect(),
            slope_grids: vec![
                GridSection {
                    d: 1,
                    n: 4096,
                    half_width: 32.0 * std::f64::consts::PI,
                },
                GridSection {
                    d: 2,
                    n: 512,
                    half_width: 8.0 * std::f64::consts::PI,
                },
            ],
            mass_tolerance: 1e-6,
            slope_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandCheckSection {
    pub alpha: f64,
    pub sigma2: f64,
    pub p: f64,
    pub eps: f64,
    pub n: usize,
    pub half_width: f64,
    pub j_max: i32,
    /// `t = 2^k` for `k` in this inclusive range.
    pub k_min: i32,
    pub k_max: i32,
    /// `t = 2^k` range used to fit the constant at `j = 1`.
    pub fit_k_min: i32,
    pub fit_k_max: i32,
    pub slope_tolerance: f64,
}

impl Default for BandCheckSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma2: 0.46,
            p: 2.5,
            eps: 0.2,
            n: 1 << 18,
            half_width: 64.0 * std::f64::consts::PI,
            j_max: 6,
            k_min: -16,
            k_max: 4,
            fit_k_min: -16,
            fit_k_max: 16,
            slope_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SquareCheckSection {
    pub n: usize,
    pub half_width: f64,
    pub channels: usize,
    pub steps: usize,
    pub ds: f64,
    pub samples: usize,
    pub ps: Vec<f64>,
    pub spread_limit: f64,
    pub fourier_tolerance: f64,
}

impl Default for SquareCheckSection {
    fn default() -> Self {
        Self {
            n: 64,
            half_width: std::f64::consts::PI,
            channels: 2,
            steps: 16,
            ds: 1.0 / 16.0,
            samples: 20,
            ps: vec![2.0, 3.0, 4.0],
            spread_limit: 5.0,
            fourier_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCheckSection {
    pub realizations: usize,
    pub rates: Vec<f64>,
    pub ps: Vec<f64>,
    /// Allowed `|lhs/rhs - 1|` at `p = 2`, in standard errors.
    pub se_multiple: f64,
}

impl Default for NoiseCheckSection {
    fn default() -> Self {
        Self {
            realizations: 10_000,
            rates: vec![1.0, 10.0, 100.0],
            ps: vec![1.0, 1.5, 2.0],
            se_multiple: 5.0,
        }
    }
}

impl KernelCheckSection {
    /// The slope-fit grid for dimension `d`.
    pub fn slope_grid(&self, d: usize) -> Result<SpectralGrid> {
        self.slope_grids
            .iter()
            .find(|g| g.d == d)
            .ok_or_else(|| Error::Config(format!("kernel_check.slope_grids: no grid for d = {d}")))?
            .build()
    }
}

impl ExperimentConfig {
    /// The Lipschitz preset with `φ = x^{1/2}`, `α = σ₁ = 1/2`, `σ₂ = 0.6`, `p = 2`.
    pub fn preset() -> Self {
        let s = SolverConfig::lipschitz_preset();
        Self {
            seed: s.seed,
            output_dir: default_output_dir(),
            phi: s.phi,
            exponents: s.exponents,
            grid: GridSection::default(),
            solver: SolverSection::default(),
            noise: NoiseSection::default(),
            sweeps: Vec::new(),
            kernel_check: KernelCheckSection::default(),
            band_check: BandCheckSection::default(),
            square_check: SquareCheckSection::default(),
            noise_check: NoiseCheckSection::default(),
        }
    }

    /// Parses and validates. Schema errors carry the line and field from the TOML parser.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks, including the solvability gate.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.phi.validate().map_err(|e| field("phi", e))?;
        self.exponents.validate().map_err(|e| field("exponents", e))?;
        let grid = self.grid.build()?;
        for s in &self.sweeps {
            if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(Error::Config(format!(
                    "sweeps: unknown parameter `{}` (expected one of {})",
                    s.parameter,
                    SWEEP_PARAMETERS.join(", ")
                )));
            }
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("sweeps.{}: values must be finite and nonempty", s.parameter)));
            }
        }
        self.solver.nonlinearity.validate().map_err(|e| field("solver.nonlinearity", e))?;
        self.solver_config(grid)?.validate().map_err(|e| match e {
            Error::Gate(m) => Error::Gate(m),
            other => field("solver", other),
        })?;
        let b = &self.band_check;
        let be = FractionalExponents::new(b.alpha, b.alpha, b.sigma2, b.p).map_err(|e| field("band_check", e))?;
        check_gate(&be, &self.phi, 1)?;
        if self.square_check.channels == 0 || self.square_check.steps == 0 || self.square_check.samples == 0 {
            return Err(Error::Config("square_check: channels, steps and samples must be positive".into()));
        }
        if self.noise_check.realizations < 2 {
            return Err(Error::Config("noise_check.realizations must be at least 2".into()));
        }
        Ok(())
    }

    /// Values of sweep `name`, if declared.
    pub fn sweep(&self, name: &str) -> Option<&[f64]> {
        self.sweeps.iter().find(|s| s.parameter == name).map(|s| s.values.as_slice())
    }

    pub fn solver_config(&self, grid: SpectralGrid) -> Result<SolverConfig> {
        let s = &self.solver;
        Ok(SolverConfig {
            exponents: self.exponents,
            phi: self.phi.clone(),
            grid,
            horizon: s.horizon,
            n_t: s.n_t,
            k_trunc: s.k_trunc,
            vartheta: s.vartheta,
            picard_tol: s.picard_tol,
            picard_max_iter: s.picard_max_iter,
            n_paths: s.paths,
            seed: self.seed,
            include_wiener: self.noise.wiener,
            wiener_modes: self.noise.wiener_modes,
            wiener_basis: self.noise.wiener_basis,
            levy: self.noise.levy.clone(),
            initial: s.initial.clone(),
            threads: 1,
        })
    }

    /// SHA-256 of the canonical TOML serialization with the output directory
    /// blanked, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
