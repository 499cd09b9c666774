//! Experiment runners behind the `tfspde` subcommands.
//!
//! Every runner returns [`Artifacts`]: a JSON verdict with named checks plus
//! CSV tables. Outputs depend only on the configuration and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSpec;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, loglog_regression, relative_deviation, segmented_regression, FitResult};
use crate::grid::{Field, SpectralGrid};
use crate::harmonic::{
    strong_22_ratio_fourier, strong_pp_ratio, BandEstimate, BandKernel, ChannelSeries, DyadicBank, SquareFnConfig,
};
use crate::kernels::{auto_half_width, kernel_grid, FractionalExponents, KernelOrder, KernelSnapshot};
use crate::mittag_leffler::{MLParams, Method, MittagLeffler};
use crate::noise::{
    derive_seed, moment_constant, moment_sweep, poisson_chi_square, rng_from_seed, sample_cloud, streams,
    LevyMeasureSpec, Window,
};
use crate::solver::{contraction_sweep, map_indexed, mean_se, sample_noises, solve_noises, solve_with_plan, SolverPlan};

/// Seed stream for random square-function inputs.
const SQUARE_STREAM: u64 = 5;

/// One named pass/fail comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: format!("{value:.6e} <= {limit:.6e}"),
        }
    }

    /// Passes when `value < limit`.
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value < limit,
            value,
            limit,
            detail: format!("{value:.6e} < {limit:.6e}"),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            limit: 1.0,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: String,
    pub passed: bool,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl Verdict {
    pub fn new(experiment: &str, cfg: &ExperimentConfig, checks: Vec<Check>) -> Self {
        Self {
            experiment: experiment.to_string(),
            passed: checks.iter().all(|c| c.passed),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            checks,
            warnings: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// A CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }
}

/// Round-trip float formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}

pub struct Artifacts {
    pub verdict: Verdict,
    pub tables: Vec<Table>,
}

impl Artifacts {
    /// Writes `<experiment>.json` and `<experiment>_<table>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let stem = self.verdict.experiment.replace('-', "_");
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.verdict).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", json.display())))?;
        written.push(json);
        for t in &self.tables {
            let path = dir.join(format!("{stem}_{}.csv", t.name));
            std::fs::write(&path, t.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

// ---------------------------------------------------------------------------
// ml-check

/// Maximum error of one closed-form identity over a grid of arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityError {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Series => "series",
        Method::Integral => "integral",
        Method::ClosedForm => "closed_form",
        Method::Recurrence => "recurrence",
    }
}

/// Evaluates the identity suite; the error is `|v - ref| / max(|ref|, 1)`.
pub fn ml_identities(table: &mut Table) -> Result<Vec<IdentityError>> {
    struct Case {
        name: &'static str,
        params: MLParams,
        xs: Vec<f64>,
        z: fn(f64) -> f64,
        reference: fn(f64) -> f64,
        tolerance: f64,
    }
    let lin = |a: f64, b: f64, n: usize| -> Vec<f64> { (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect() };
    let cases = [
        Case {
            name: "E_{1,1}(-x) = exp(-x), x in [0,30]",
            params: MLParams::new(1.0, 1.0)?,
            xs: lin(0.0, 30.0, 300),
            z: |x| -x,
            reference: |x| (-x).exp(),
            tolerance: 1e-10,
        },
        Case {
            name: "E_{2,1}(-x^2) = cos x, x in [0,10]",
            params: MLParams::new(2.0, 1.0)?.with_cutoff(100.0),
            xs: lin(0.0, 10.0, 200),
            z: |x| -x * x,
            reference: f64::cos,
            tolerance: 1e-8,
        },
        Case {
            name: "E_{1/2,1}(-1) = e erfc(1)",
            params: MLParams::new(0.5, 1.0)?,
            xs: vec![1.0],
            z: |x| -x,
            reference: |x| (x * x).exp() * libm::erfc(x),
            tolerance: 1e-8,
        },
        Case {
            name: "E_{1/2,1}(-x) = exp(x^2) erfc(x), x in [0,5]",
            params: MLParams::new(0.5, 1.0)?,
            xs: lin(0.0, 5.0, 100),
            z: |x| -x,
            reference: |x| (x * x).exp() * libm::erfc(x),
            tolerance: 1e-10,
        },
        Case {
            name: "E_{1,2}(-x) = (1 - exp(-x))/x, x in (0,30]",
            params: MLParams::new(1.0, 2.0)?,
            xs: lin(0.1, 30.0, 299),
            z: |x| -x,
            reference: |x| -(-x).exp_m1() / x,
            tolerance: 1e-12,
        },
    ];
    let mut out = Vec::new();
    for c in cases {
        let ml = MittagLeffler::new(c.params)?;
        let mut worst = 0.0f64;
        for &x in &c.xs {
            let z = (c.z)(x);
            let (v, m) = ml.eval_with_method(z)?;
            let r = (c.reference)(x);
            let err = (v - r).abs() / r.abs().max(1.0);
            worst = worst.max(err);
            table.push(vec![
                num(c.params.alpha),
                num(c.params.beta),
                num(z),
                num(v),
                method_name(m).to_string(),
                num(r),
                num((v - r).abs()),
            ]);
        }
        out.push(IdentityError {
            name: c.name.to_string(),
            max_error: worst,
            tolerance: c.tolerance,
        });
    }
    Ok(out)
}

pub fn ml_check(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut table = Table::new("values", &["alpha", "beta", "z", "value", "method", "reference", "abs_err"]);
    let ids = ml_identities(&mut table)?;
    let checks = ids.iter().map(|i| Check::at_most(&i.name, i.max_error, i.tolerance)).collect();
    let mut v = Verdict::new("ml-check", cfg, checks);
    v.summary = serde_json::json!({
        "max_abs_err": table.column("abs_err").unwrap_or_default().into_iter().fold(0.0, f64::max),
    });
    Ok(Artifacts {
        verdict: v,
        tables: vec![table],
    })
}

// ---------------------------------------------------------------------------
// kernel-check

/// Grid with automatically chosen half width for `S_{α,σ}(t)`.
pub fn auto_grid(order: KernelOrder, t: f64, phi: &BernsteinSpec, d: usize, n: usize) -> Result<SpectralGrid> {
    let (l, _) = auto_half_width(order, t, phi, d, n, std::f64::consts::PI)?;
    SpectralGrid::new(d, n, l)
}

/// Snapshot on its own auto grid.
pub fn auto_snapshot(order: KernelOrder, t: f64, phi: &BernsteinSpec, d: usize, n: usize) -> Result<KernelSnapshot> {
    kernel_grid(order, t, &auto_grid(order, t, phi, d, n)?, phi, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassCase {
    pub alpha: f64,
    pub sigma: f64,
    pub phi: BernsteinSpec,
    pub t: f64,
    pub mass: f64,
    pub expected: f64,
    pub error: f64,
}

/// Mass of `S_{α,σ}(t)` against `t^{α-σ}/Γ(1+α-σ)` over the configured cases.
pub fn kernel_mass_cases(cfg: &ExperimentConfig, phis: &[BernsteinSpec]) -> Result<Vec<MassCase>> {
    let k = &cfg.kernel_check;
    let alphas = cfg.sweep("alpha").unwrap_or(&k.alphas).to_vec();
    let times = cfg.sweep("t").unwrap_or(&k.times).to_vec();
    let mut out = Vec::new();
    for &alpha in &alphas {
        let mut sigmas = vec![alpha];
        sigmas.extend(k.sigmas.iter().copied().filter(|&s| s != alpha));
        for &sigma in &sigmas {
            let order = KernelOrder::new(alpha, sigma)?;
            for phi in phis {
                for &t in &times {
                    let snap = auto_snapshot(order, t, phi, 1, k.n)?;
                    let mass = snap.mass();
                    let expected = order.mass(t);
                    out.push(MassCase {
                        alpha,
                        sigma,
                        phi: phi.clone(),
                        t,
                        mass,
                        expected,
                        error: (mass - expected).abs(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The three power-law `φ` used by the mass check.
pub fn mass_check_phis() -> Vec<BernsteinSpec> {
    [0.5, 0.75, 1.0].iter().map(|&s| BernsteinSpec::power(s).expect("valid power")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCase {
    pub label: String,
    pub d: usize,
    pub p: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    pub declared: f64,
    pub deviation: f64,
}

/// `‖S_{α,σ}(t)‖_p` over `times` on one grid, fitted against `declared`.
pub fn norm_slope(
    order: KernelOrder,
    phi: &BernsteinSpec,
    grid: &SpectralGrid,
    p: f64,
    times: &[f64],
    declared: f64,
) -> Result<SlopeCase> {
    let d = grid.d();
    let grid = *grid;
    let norms = times
        .iter()
        .map(|&t| Ok(kernel_grid(order, t, &grid, phi, None)?.lp_norm(p)))
        .collect::<Result<Vec<f64>>>()?;
    let pairs: Vec<(f64, f64)> = times.iter().copied().zip(norms.iter().copied()).collect();
    let (slope, _, _) = loglog_regression(&pairs)?;
    Ok(SlopeCase {
        label: format!("alpha={} sigma={} phi={:?} d={d} p={p}", order.alpha, order.sigma, phi.kind),
        d,
        p,
        times: times.to_vec(),
        norms,
        slope,
        declared,
        deviation: relative_deviation(slope, declared),
    })
}

/// `(α, σ, s)` combinations for the `L₁` scaling check.
pub const L1_SLOPE_CASES: [(f64, f64, f64); 6] = [
    (0.3, 1.0, 0.5),
    (0.5, 1.0, 0.5),
    (0.8, 1.0, 0.75),
    (0.5, 0.8, 1.0),
    (0.3, 0.6, 0.75),
    (0.8, 0.9, 1.0),
];

/// `(d, p, s)` for the `L_p` check, all at `α = 1/2`, `σ = 1`.
pub const LP_SLOPE_CASES: [(usize, f64, f64); 3] = [(1, 1.5, 0.5), (1, 2.0, 0.75), (2, 2.0, 0.5)];

/// Slope of `‖S_{α,σ}(t)‖_p` for `φ = x^s`: `(α-σ) - (αd/(2s))(p-1)/p`.
pub fn lp_declared_slope(alpha: f64, sigma: f64, d: usize, p: f64, s: f64) -> f64 {
    (alpha - sigma) - alpha * d as f64 / (2.0 * s) * (p - 1.0) / p
}

pub fn l1_slope_cases(cfg: &ExperimentConfig) -> Result<Vec<SlopeCase>> {
    let times = &cfg.kernel_check.slope_times;
    let grid = cfg.kernel_check.slope_grid(1)?;
    L1_SLOPE_CASES
        .iter()
        .map(|&(a, sg, s)| {
            let order = KernelOrder::new(a, sg)?;
            norm_slope(order, &BernsteinSpec::power(s)?, &grid, 1.0, times, a - sg)
        })
        .collect()
}

pub fn lp_slope_cases(cfg: &ExperimentConfig) -> Result<Vec<SlopeCase>> {
    let times = &cfg.kernel_check.slope_times;
    LP_SLOPE_CASES
        .iter()
        .map(|&(d, p, s)| {
            let order = KernelOrder::new(0.5, 1.0)?;
            let grid = cfg.kernel_check.slope_grid(d)?;
            norm_slope(order, &BernsteinSpec::power(s)?, &grid, p, times, lp_declared_slope(0.5, 1.0, d, p, s))
        })
        .collect()
}

fn slope_rows(table: &mut Table, cases: &[SlopeCase]) {
    for c in cases {
        for (t, v) in c.times.iter().zip(&c.norms) {
            table.push(vec![c.label.replace(',', ";"), num(c.p), num(*t), num(*v)]);
        }
    }
}

/// Single-order kernel probe requested from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProbe {
    pub alpha: f64,
    pub sigma: f64,
    pub phi: BernsteinSpec,
    pub d: usize,
    pub times: Vec<f64>,
}

pub fn kernel_check(cfg: &ExperimentConfig, probe: Option<&KernelProbe>) -> Result<Artifacts> {
    match probe {
        Some(p) => kernel_probe(cfg, p),
        None => kernel_suite(cfg),
    }
}

fn kernel_suite(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.kernel_check;
    let mut checks = Vec::new();
    let mut mass_table = Table::new("mass", &["alpha", "sigma", "phi", "t", "mass", "expected", "abs_err"]);
    let masses = kernel_mass_cases(cfg, &mass_check_phis())?;
    let worst = masses.iter().map(|m| m.error).fold(0.0, f64::max);
    for m in &masses {
        mass_table.push(vec![
            num(m.alpha),
            num(m.sigma),
            format!("{:?}", m.phi.kind).replace(',', ";"),
            num(m.t),
            num(m.mass),
            num(m.expected),
            num(m.error),
        ]);
    }
    checks.push(Check::at_most("kernel mass t^(alpha-sigma)/Gamma(1+alpha-sigma)", worst, k.mass_tolerance));

    let mut slope_table = Table::new("norms", &["case", "p", "t", "norm"]);
    let l1 = l1_slope_cases(cfg)?;
    for c in &l1 {
        checks.push(Check::at_most(format!("L1 slope {}", c.label), c.deviation, k.slope_tolerance));
    }
    let lp = lp_slope_cases(cfg)?;
    for c in &lp {
        checks.push(Check::at_most(format!("Lp slope {}", c.label), c.deviation, 0.1));
    }
    slope_rows(&mut slope_table, &l1);
    slope_rows(&mut slope_table, &lp);
    let mut v = Verdict::new("kernel-check", cfg, checks);
    v.summary = serde_json::json!({
        "max_mass_error": worst,
        "l1_slopes": l1.iter().map(|c| serde_json::json!({"case": c.label, "slope": c.slope, "declared": c.declared})).collect::<Vec<_>>(),
        "lp_slopes": lp.iter().map(|c| serde_json::json!({"case": c.label, "slope": c.slope, "declared": c.declared})).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        verdict: v,
        tables: vec![mass_table, slope_table],
    })
}

fn kernel_probe(cfg: &ExperimentConfig, p: &KernelProbe) -> Result<Artifacts> {
    let order = KernelOrder::new(p.alpha, p.sigma)?;
    let grid = cfg.kernel_check.slope_grid(p.d)?;
    let n = grid.n();
    let mut dump = Table::new("values", &["t", "x", "value"]);
    let mut norms = Table::new("norms", &["t", "l1", "l2", "mass", "expected_mass", "min_value"]);
    let mut warnings = Vec::new();
    let mut samples = Vec::new();
    let mut mass_err = 0.0f64;
    for &t in &p.times {
        let snap = kernel_grid(order, t, &grid, &p.phi, None)?;
        if let Some(w) = &snap.aliasing_warning {
            warnings.push(format!("t = {t}: {w}"));
        }
        if p.d == 1 {
            for (i, v) in snap.values.iter().enumerate() {
                dump.push(vec![num(t), num(grid.coord(i)), num(*v)]);
            }
        }
        let l1 = snap.l1_norm();
        samples.push((t, l1));
        mass_err = mass_err.max((snap.mass() - order.mass(t)).abs());
        norms.push(vec![
            num(t),
            num(l1),
            num(snap.lp_norm(2.0)),
            num(snap.mass()),
            num(order.mass(t)),
            num(snap.min_value()),
        ]);
    }
    let mut checks = vec![Check::at_most("kernel mass", mass_err, cfg.kernel_check.mass_tolerance)];
    let mut summary = serde_json::json!({
        "alpha": p.alpha, "sigma": p.sigma, "d": p.d, "half_width": grid.half_width(), "n": n,
    });
    if samples.len() >= 2 {
        let (slope, _, r2) = loglog_regression(&samples)?;
        let dev = relative_deviation(slope, p.alpha - p.sigma);
        checks.push(Check::at_most("L1 slope vs alpha - sigma", dev, cfg.kernel_check.slope_tolerance));
        summary["l1_slope"] = serde_json::json!({"slope": slope, "declared": p.alpha - p.sigma, "r2": r2});
    }
    let mut v = Verdict::new("kernel-check", cfg, checks);
    v.warnings = warnings;
    v.summary = summary;
    Ok(Artifacts {
        verdict: v,
        tables: vec![dump, norms],
    })
}

// ---------------------------------------------------------------------------
// band-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub j: i32,
    pub t: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub constant: f64,
    pub rows: Vec<BandRow>,
    /// Per band: (j, fitted large-t slope, declared slope).
    pub large_t_slopes: Vec<(i32, f64, f64)>,
    /// Per band: (j, segmented break time, crossover time).
    pub breaks: Vec<(i32, f64, f64)>,
    /// Slope of the measured norm against `φ(4^j)` at the largest time, and its ceiling.
    pub j_slope: (f64, f64),
}

pub fn band_sweep(cfg: &ExperimentConfig) -> Result<BandReport> {
    let b = &cfg.band_check;
    let e = FractionalExponents::new(b.alpha, b.alpha, b.sigma2, b.p)?;
    let est = BandEstimate::new(&e, b.eps, None)?;
    let grid = SpectralGrid::new(1, b.n, b.half_width)?;
    let bank = DyadicBank::new(grid);
    let bk = BandKernel::new(bank, e, est, &cfg.phi)?;
    let fit_times: Vec<f64> = (b.fit_k_min..=b.fit_k_max).map(|k| 2f64.powi(k)).collect();
    let constant = bk.fit_constant(1, &fit_times)?;
    let js: Vec<i32> = match cfg.sweep("j") {
        Some(v) => v.iter().map(|&x| x as i32).collect(),
        None => (1..=b.j_max).collect(),
    };
    let times: Vec<f64> = match cfg.sweep("t") {
        Some(v) => v.to_vec(),
        None => (b.k_min..=b.k_max).map(|k| 2f64.powi(k)).collect(),
    };
    let mut rows = Vec::new();
    let mut large_t_slopes = Vec::new();
    let mut breaks = Vec::new();
    let declared = -1.0 / b.p - 0.5 * b.alpha * b.eps;
    for &j in &js {
        let mut samples = Vec::new();
        for &t in &times {
            let (measured, bound) = bk.band_kernel_l1(j, t, constant)?;
            rows.push(BandRow { j, t, measured, bound });
            samples.push((t, measured));
        }
        let t_star = est.crossover_time(&e, &cfg.phi, j);
        let large: Vec<(f64, f64)> = samples.iter().copied().filter(|&(t, _)| t >= 16.0 * t_star).collect();
        if large.len() >= 2 {
            large_t_slopes.push((j, loglog_regression(&large)?.0, declared));
        }
        if samples.len() >= 6 && t_star > times[0] && t_star < times[times.len() - 1] {
            breaks.push((j, segmented_regression(&samples)?.0, t_star));
        }
    }
    let t_last = *times.last().ok_or(Error::Empty("time sweep"))?;
    let j_samples: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t == t_last)
        .map(|r| (cfg.phi.eval_unchecked(4f64.powi(r.j)), r.measured))
        .collect();
    let ceiling = (est.delta / b.alpha + 0.5 * b.eps) * 1.1;
    let j_slope = if j_samples.len() >= 2 {
        (loglog_regression(&j_samples)?.0, ceiling)
    } else {
        (f64::NAN, ceiling)
    };
    Ok(BandReport {
        constant,
        rows,
        large_t_slopes,
        breaks,
        j_slope,
    })
}

pub fn band_check(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let r = band_sweep(cfg)?;
    let tol = cfg.band_check.slope_tolerance;
    let mut checks = Vec::new();
    let worst = r.rows.iter().map(|row| row.measured / row.bound).fold(0.0, f64::max);
    checks.push(Check::at_most("measured <= frozen-constant bound (max ratio)", worst, 1.0));
    for &(j, slope, declared) in &r.large_t_slopes {
        checks.push(Check::at_most(
            format!("large-t slope j={j} ({slope:.4} vs {declared:.4})"),
            relative_deviation(slope, declared),
            tol,
        ));
    }
    for &(j, brk, t_star) in &r.breaks {
        checks.push(Check::at_most(
            format!("slope change near crossover j={j}"),
            (brk / t_star).log2().abs(),
            2.0,
        ));
    }
    if r.j_slope.0.is_finite() {
        checks.push(Check::at_most("j-sweep growth exponent at the largest t", r.j_slope.0, r.j_slope.1));
    }
    let mut table = Table::new("sweep", &["j", "t", "measured", "bound", "ratio"]);
    for row in &r.rows {
        table.push(vec![
            row.j.to_string(),
            num(row.t),
            num(row.measured),
            num(row.bound),
            num(row.measured / row.bound),
        ]);
    }
    let mut v = Verdict::new("band-check", cfg, checks);
    v.summary = serde_json::json!({
        "constant": r.constant,
        "max_ratio": worst,
        "large_t_slopes": r.large_t_slopes,
        "breaks": r.breaks,
        "j_slope": r.j_slope,
    });
    Ok(Artifacts {
        verdict: v,
        tables: vec![table],
    })
}

// ---------------------------------------------------------------------------
// square-check

/// Random smooth input `h[i][k]`: a trigonometric polynomial with decaying
/// coefficients times a smooth time envelope.
pub fn random_smooth_series(grid: SpectralGrid, steps: usize, channels: usize, seed: u64) -> ChannelSeries {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let d = grid.d();
    let dxi = grid.dxi();
    let modes = 4usize;
    (0..steps)
        .map(|i| {
            let env = 1.0 + 0.5 * (0.7 * i as f64 + rng.random::<f64>() * 6.0).sin();
            (0..channels)
                .map(|_| {
                    let coefs: Vec<(f64, f64)> = (0..d * modes)
                        .map(|_| (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                        .collect();
                    Field::from_fn(grid, |x| {
                        let mut v = 0.0;
                        for a in 0..d {
                            for k in 0..modes {
                                let (ca, cb) = coefs[a * modes + k];
                                let ph = dxi * (k + 1) as f64 * x[a];
                                v += (ca * ph.cos() + cb * ph.sin()) / (k + 1) as f64;
                            }
                        }
                        env * v
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareReport {
    /// `ratios[i][s]` for `ps[i]` and sample `s`.
    pub ps: Vec<f64>,
    pub ratios: Vec<Vec<f64>>,
    /// `max / median` per `p`.
    pub spread: Vec<f64>,
    /// Largest relative gap between the spatial and Fourier-side `p = 2` ratios.
    pub fourier_gap: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn square_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<SquareReport> {
    let q = &cfg.square_check;
    let grid = SpectralGrid::new(cfg.grid.d, q.n, q.half_width)?;
    let sq = SquareFnConfig::new(cfg.exponents, q.channels, q.ds)?;
    let ps = cfg.sweep("p").map(|v| v.to_vec()).unwrap_or_else(|| q.ps.clone());
    let per_sample = map_indexed(q.samples, threads, |s| {
        let h = random_smooth_series(grid, q.steps, q.channels, derive_seed(cfg.seed, SQUARE_STREAM, s as u64));
        let ratios = ps
            .iter()
            .map(|&p| strong_pp_ratio(&sq, &cfg.phi, &h, p))
            .collect::<Result<Vec<f64>>>()?;
        let spatial = strong_pp_ratio(&sq, &cfg.phi, &h, 2.0)?;
        let fourier = strong_22_ratio_fourier(&sq, &cfg.phi, &h)?;
        Ok((ratios, (spatial - fourier).abs() / fourier))
    })?;
    let ratios: Vec<Vec<f64>> = (0..ps.len()).map(|i| per_sample.iter().map(|s| s.0[i]).collect()).collect();
    let spread = ratios
        .iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max) / median(r))
        .collect();
    let fourier_gap = per_sample.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(SquareReport {
        ps,
        ratios,
        spread,
        fourier_gap,
    })
}

pub fn square_check(cfg: &ExperimentConfig, threads: usize) -> Result<Artifacts> {
    let q = &cfg.square_check;
    let r = square_sweep(cfg, threads)?;
    let mut checks: Vec<Check> = r
        .ps
        .iter()
        .zip(&r.spread)
        .map(|(p, s)| Check::below(format!("strong ({p},{p}) ratio max/median"), *s, q.spread_limit))
        .collect();
    checks.push(Check::at_most("p=2 Fourier-side agreement", r.fourier_gap, q.fourier_tolerance));
    let mut table = Table::new("ratios", &["p", "sample", "ratio"]);
    for (p, row) in r.ps.iter().zip(&r.ratios) {
        for (s, v) in row.iter().enumerate() {
            table.push(vec![num(*p), s.to_string(), num(*v)]);
        }
    }
    let mut v = Verdict::new("square-check", cfg, checks);
    v.summary = serde_json::to_value(&r).map_err(|e| Error::Io(e.to_string()))?;
    Ok(Artifacts {
        verdict: v,
        tables: vec![table],
    })
}

// ---------------------------------------------------------------------------
// noise-check

/// Integrand of the moment check on `[0, 1] × [0, 1)`: `ξ₁ (1 + cos 2πx) e^{-s}`.
pub fn noise_check_integrand(s: f64, x: &[f64], xi: &[f64]) -> f64 {
    xi[0] * (1.0 + (2.0 * std::f64::consts::PI * x[0]).cos()) * (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub rate: f64,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub constant: f64,
}

/// Moment ratios for Gaussian marks at each rate, plus chi-square p-values of atom counts.
pub fn noise_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<(Vec<NoiseRow>, Vec<(f64, f64)>)> {
    let n = &cfg.noise_check;
    let rates = cfg.sweep("rate").map(|v| v.to_vec()).unwrap_or_else(|| n.rates.clone());
    let window = Window::unit(1.0, 1)?;
    let per_rate = map_indexed(rates.len(), threads, |i| {
        let rate = rates[i];
        let spec = LevyMeasureSpec::gaussian(rate, 1.0, 1)?;
        let seed = derive_seed(cfg.seed, streams::ENSEMBLE, i as u64);
        let checks = moment_sweep(&spec, &window, noise_check_integrand, &n.ps, n.realizations, seed)?;
        let counts = (0..n.realizations.min(2000))
            .map(|k| Ok(sample_cloud(&spec, &window, derive_seed(seed, streams::CLOUD, k as u64))?.len()))
            .collect::<Result<Vec<usize>>>()?;
        let chi = poisson_chi_square(&counts, rate * window.volume())?;
        let rows: Vec<NoiseRow> = checks
            .into_iter()
            .map(|c| NoiseRow {
                rate,
                p: c.p,
                lhs: c.lhs,
                rhs: c.rhs,
                ratio: c.ratio,
                ratio_se: c.ratio_se,
                constant: moment_constant(c.p),
            })
            .collect();
        Ok((rows, (rate, chi.p_value)))
    })?;
    let mut rows = Vec::new();
    let mut chi = Vec::new();
    for (r, c) in per_rate {
        rows.extend(r);
        chi.push(c);
    }
    Ok((rows, chi))
}

pub fn noise_check(cfg: &ExperimentConfig, threads: usize) -> Result<Artifacts> {
    let (rows, chi) = noise_sweep(cfg, threads)?;
    let k = cfg.noise_check.se_multiple;
    let mut checks = Vec::new();
    for r in &rows {
        if r.p == 2.0 {
            checks.push(Check::at_most(
                format!("isometry rate={} |lhs/rhs-1|/se", r.rate),
                (r.ratio - 1.0).abs() / r.ratio_se,
                k,
            ));
        } else {
            let rel = r.ratio_se / r.ratio;
            let limit = r.constant * (1.0 + 3.0 * rel);
            checks.push(Check::at_most(
                format!("moment ratio p={} rate={} finite and below 2^(2-p)", r.p, r.rate),
                if r.ratio.is_finite() { r.ratio } else { f64::INFINITY },
                limit,
            ));
        }
    }
    for &(rate, pv) in &chi {
        checks.push(Check {
            name: format!("atom counts Poisson rate={rate} (chi-square p-value)"),
            passed: pv > 1e-3,
            value: pv,
            limit: 1e-3,
            detail: format!("p-value {pv:.4} > 1e-3"),
        });
    }
    let mut table = Table::new("moments", &["rate", "p", "lhs", "rhs", "ratio", "ratio_se", "constant"]);
    for r in &rows {
        table.push(vec![num(r.rate), num(r.p), num(r.lhs), num(r.rhs), num(r.ratio), num(r.ratio_se), num(r.constant)]);
    }
    let mut v = Verdict::new("noise-check", cfg, checks);
    v.summary = serde_json::json!({ "rows": rows, "chi_square": chi });
    Ok(Artifacts {
        verdict: v,
        tables: vec![table],
    })
}

// ---------------------------------------------------------------------------
// solve

/// Lowest cosine mode at half amplitude, used to build `v = u + ψ`.
pub fn default_perturbation(grid: &SpectralGrid) -> Field {
    let mut m = vec![0i64; grid.d()];
    m[0] = 1;
    Field::cos_mode(*grid, &m).scaled(0.5)
}

pub fn solve(cfg: &ExperimentConfig, threads: usize) -> Result<Artifacts> {
    let grid = cfg.grid.build()?;
    let mut sc = cfg.solver_config(grid)?;
    sc.threads = threads;
    let p = sc.exponents.p;
    let nonlin = &cfg.solver.nonlinearity;
    nonlin.validate()?;
    let plan = SolverPlan::new(sc.clone())?;
    let noises = sample_noises(&plan, 0..sc.n_paths)?;
    let ens = solve_noises(&plan, nonlin, &noises)?;

    let mut checks = Vec::new();
    let thetas = cfg.sweep("vartheta").map(|v| v.to_vec()).unwrap_or_else(|| cfg.solver.contraction_sweep.clone());
    let sweep = contraction_sweep(&plan, nonlin, &noises, &default_perturbation(&grid), &thetas)?;
    if let Some(&(th, r)) = sweep.iter().max_by(|a, b| a.0.total_cmp(&b.0)) {
        checks.push(Check::below(format!("contraction ratio at vartheta={th}"), r, 1.0));
    }
    let mut sorted = sweep.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    checks.push(Check::flag("contraction ratio nonincreasing in vartheta", monotone, format!("{sorted:?}")));
    let max_iter = ens.paths.iter().map(|p| p.iterations).max().unwrap_or(0);
    checks.push(Check::at_most("Picard iterations", max_iter as f64, sc.picard_max_iter as f64));

    let weighted: Vec<(f64, f64)> = thetas
        .iter()
        .map(|&th| Ok((th, ens.weighted_norm(th, p)?)))
        .collect::<Result<_>>()?;
    let (moment, moment_se) = ens.stopped_moment(p);

    let mut norms = Table::new("norms", &["path", "t", "norm"]);
    for (k, path) in ens.paths.iter().enumerate() {
        for (t, v) in path.times.iter().zip(path.norms(p)) {
            norms.push(vec![k.to_string(), num(*t), num(v)]);
        }
    }
    let mut stops = Table::new("stopping", &["path", "index", "t_lower", "t_upper"]);
    for (k, path) in ens.paths.iter().enumerate() {
        match path.stopping_index {
            Some(i) => stops.push(vec![
                k.to_string(),
                i.to_string(),
                num(path.times[i.saturating_sub(1)]),
                num(path.times[i]),
            ]),
            None => stops.push(vec![k.to_string(), "none".into(), "nan".into(), "nan".into()]),
        }
    }
    let mut v = Verdict::new("solve", cfg, checks);
    v.warnings = ens.warnings.clone();
    v.summary = serde_json::json!({
        "paths": sc.n_paths,
        "weighted_norms": weighted,
        "contraction_sweep": sweep,
        "stopped_moment": {"mean": moment, "se": moment_se},
        "stopped_paths": ens.paths.iter().filter(|p| p.stopping_index.is_some()).count(),
        "residual_histories": ens.paths.iter().map(|p| p.residual_history.clone()).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        verdict: v,
        tables: vec![norms, stops],
    })
}

/// Stopped moment from the first `n` and first `2n` paths of one plan: `(m_n, se_n, m_2n, se_2n)`.
pub fn stopped_moment_doubling(plan: &SolverPlan, nonlin: &crate::solver::NonlinearitySpec, n: usize) -> Result<[f64; 4]> {
    let p = plan.config.exponents.p;
    let ens = solve_with_plan(plan, nonlin, 0..2 * n)?;
    let vals: Vec<f64> = ens.paths.iter().map(|w| w.stopped(ens.times.len() - 1).lp_norm_pow(p)).collect();
    let (a, sa) = mean_se(&vals[..n]);
    let (b, sb) = mean_se(&vals);
    Ok([a, sa, b, sb])
}

// ---------------------------------------------------------------------------
// fit-exponents

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitTarget {
    /// `‖S_{α,σ}(t)‖₁` against `α - σ`.
    L1Mass,
    /// `‖S_{α,σ}(t)‖_p` against `(α-σ) - (αd/(2s))(p-1)/p` for `φ = x^s`.
    LpNorm,
}

impl std::str::FromStr for FitTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1-mass" => Ok(Self::L1Mass),
            "lp-norm" => Ok(Self::LpNorm),
            other => Err(Error::Config(format!("unknown fit target `{other}` (expected l1-mass or lp-norm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRequest {
    pub target: FitTarget,
    pub alpha: f64,
    pub sigma: f64,
    pub p: f64,
    pub d: usize,
}

pub fn fit_exponents(cfg: &ExperimentConfig, req: &FitRequest) -> Result<(FitResult, Artifacts)> {
    let order = KernelOrder::new(req.alpha, req.sigma)?;
    let times: Vec<f64> = cfg
        .sweep("t")
        .map(|v| v.to_vec())
        .unwrap_or_else(|| (-8..=0).map(|k| 2f64.powi(k)).collect());
    let (p, declared) = match req.target {
        FitTarget::L1Mass => (1.0, req.alpha - req.sigma),
        FitTarget::LpNorm => {
            let s = cfg
                .phi
                .nominal_exponent()
                .ok_or_else(|| Error::Config("lp-norm fit needs a pure power phi".into()))?;
            (req.p, lp_declared_slope(req.alpha, req.sigma, req.d, req.p, s))
        }
    };
    let case = norm_slope(order, &cfg.phi, &cfg.kernel_check.slope_grid(req.d)?, p, &times, declared)?;
    let pairs: Vec<(f64, f64)> = case.times.iter().copied().zip(case.norms.iter().copied()).collect();
    let fit = fit_exponent(&pairs, declared)?;
    let mut table = Table::new("samples", &["t", "norm"]);
    for (t, v) in &pairs {
        table.push(vec![num(*t), num(*v)]);
    }
    let tol = match req.target {
        FitTarget::L1Mass => cfg.kernel_check.slope_tolerance,
        FitTarget::LpNorm => 0.1,
    };
    let mut v = Verdict::new("fit-exponents", cfg, vec![Check::at_most("relative deviation", fit.deviation, tol)]);
    v.summary = serde_json::to_value(fit).map_err(|e| Error::Io(e.to_string()))?;
    Ok((
        fit,
        Artifacts {
            verdict: v,
            tables: vec![table],
        },
    ))
}

// ---------------------------------------------------------------------------
// report

/// Aggregates every verdict JSON in `dir` (except a previous report).
pub fn report(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_stem().is_some_and(|s| s != "report"))
        .collect();
    entries.sort();
    let mut checks = Vec::new();
    let mut table = Table::new("summary", &["experiment", "passed", "failed_checks", "config_hash", "seed"]);
    for path in entries {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let Ok(v) = serde_json::from_str::<Verdict>(&text) else {
            continue;
        };
        let failed: Vec<&str> = v.failed_checks().map(|c| c.name.as_str()).collect();
        let mut detail = String::new();
        let _ = write!(detail, "{} checks, {} failed", v.checks.len(), failed.len());
        table.push(vec![
            v.experiment.clone(),
            v.passed.to_string(),
            failed.join(";").replace(',', " "),
            v.config_hash.clone(),
            v.seed.to_string(),
        ]);
        checks.push(Check::flag(v.experiment.clone(), v.passed, detail));
    }
    if checks.is_empty() {
        checks.push(Check::flag("verdicts present", false, format!("no verdict JSON in {}", dir.display())));
    }
    Ok(Artifacts {
        verdict: Verdict::new("report", cfg, checks),
        tables: vec![table],
    })
}
