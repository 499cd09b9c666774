//! Littlewood–Paley bands, the frequency-localised kernel estimate and the
//! square-function operator
//!
//! ```text
//! 𝕊h(t, x) = ( ∫_0^t | S^{δ̃₀/2}_{α,σ₁}(t-s) ⋆ h(s) |²_{l₂} ds )^{1/2}.
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::grid::{fft_inverse, lp_norm_slice, Field, RadialTable, SpectralGrid};
use crate::kernels::{FractionalExponents, KernelBuilder, SymbolEvaluator};

/// Radius where the cutoff starts to fall from 1.
const CUT_INNER: f64 = 1.0;
/// Radius where the cutoff reaches 0.
const CUT_OUTER: f64 = 1.4;

/// Order-7 smootherstep on [0, 1].
fn smootherstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let x4 = x * x * x * x;
    x4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))
}

/// Radial cutoff: 1 on `[0, 1]`, 0 beyond `1.4`.
pub fn chi(r: f64) -> f64 {
    if r <= CUT_INNER {
        1.0
    } else if r >= CUT_OUTER {
        0.0
    } else {
        smootherstep((CUT_OUTER - r) / (CUT_OUTER - CUT_INNER))
    }
}

/// Band profile `ψ(r) = χ(r) - χ(2r)`, supported in `[1/2, 1.4]`, equal to 1 on `[0.7, 1]`.
pub fn psi(r: f64) -> f64 {
    chi(r) - chi(2.0 * r)
}

/// Dyadic decomposition of a grid's frequency lattice into bands `j = 1..=j_max`
/// plus the low-frequency cap at index 0.
#[derive(Debug, Clone)]
pub struct DyadicBank {
    grid: SpectralGrid,
    j_max: i32,
    table: RadialTable,
}

impl DyadicBank {
    /// Bands up to the first `j` with `2^j` above the largest lattice `|ξ|`.
    pub fn new(grid: SpectralGrid) -> Self {
        let max_xi = grid.nyquist() * (grid.d() as f64).sqrt();
        let j_max = max_xi.log2().ceil().max(1.0) as i32;
        Self {
            grid,
            j_max,
            table: grid.radial_table(),
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn j_range(&self) -> (i32, i32) {
        (1, self.j_max)
    }

    /// Profile of band `j` (0 = low cap) at `|ξ|`.
    pub fn profile(&self, j: i32, xi: f64) -> f64 {
        if j == 0 {
            chi(xi)
        } else {
            psi(xi * 2f64.powi(-j))
        }
    }

    fn check_index(&self, j: i32) -> Result<()> {
        if (0..=self.j_max).contains(&j) {
            Ok(())
        } else {
            Err(Error::Parameter(format!("band index {j} outside [0, {}]", self.j_max)))
        }
    }

    /// Band profile on every lattice point.
    pub fn multiplier(&self, j: i32) -> Result<Vec<f64>> {
        self.check_index(j)?;
        let per: Vec<f64> = self.table.xi_sq.iter().map(|&x| self.profile(j, x.sqrt())).collect();
        Ok(self.table.expand(&per))
    }

    /// `Δ_j u`; `j = 0` is the low-frequency cap.
    pub fn band_project(&self, j: i32, field: &Field) -> Result<Field> {
        self.grid.check_same(field.grid())?;
        field.apply_multiplier(&self.multiplier(j)?)
    }

    /// Largest deviation of `Σ_j ψ_j + ψ₀` from 1 on the lattice.
    pub fn partition_defect(&self) -> f64 {
        self.table
            .xi_sq
            .iter()
            .map(|&x| {
                let r = x.sqrt();
                let s: f64 = (0..=self.j_max).map(|j| self.profile(j, r)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Parameters of the frequency-localised estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub eps: f64,
    pub delta: f64,
}

impl BandEstimate {
    /// `δ` defaults to the centre `(1/p - max(0, σ₂ - α)) / 2` of its window.
    pub fn new(exponents: &FractionalExponents, eps: f64, delta: Option<f64>) -> Result<Self> {
        let FractionalExponents { alpha, sigma2, p, .. } = *exponents;
        let delta = delta.unwrap_or(0.5 * (1.0 / p - (sigma2 - alpha).max(0.0)));
        let b = Self { eps, delta };
        b.check_window(exponents)?;
        Ok(b)
    }

    /// `1/p < σ₂ - αε/2`, `σ₂ - α + δ < 1/p`, `0 < δ < 1/p`, `ε > 0`.
    pub fn check_window(&self, e: &FractionalExponents) -> Result<()> {
        let inv_p = 1.0 / e.p;
        let mut broken = Vec::new();
        if !(self.eps > 0.0) {
            broken.push(format!("eps = {} must be positive", self.eps));
        }
        if !(self.delta > 0.0) {
            broken.push(format!("delta = {} must be positive", self.delta));
        }
        if !(inv_p < e.sigma2 - 0.5 * e.alpha * self.eps) {
            broken.push(format!(
                "1/p < sigma2 - alpha*eps/2 fails: {inv_p} >= {}",
                e.sigma2 - 0.5 * e.alpha * self.eps
            ));
        }
        if !(e.sigma2 - e.alpha + self.delta < inv_p) {
            broken.push(format!(
                "sigma2 - alpha + delta < 1/p fails: {} >= {inv_p}",
                e.sigma2 - e.alpha + self.delta
            ));
        }
        if !(self.delta < inv_p) {
            broken.push(format!("delta < 1/p fails: {} >= {inv_p}", self.delta));
        }
        if broken.is_empty() {
            Ok(())
        } else {
            Err(Error::Window(broken.join("; ")))
        }
    }

    /// Derivative order `(δ̃₁ + ε)/2` applied to the kernel.
    pub fn derivative_order(&self, e: &FractionalExponents) -> f64 {
        0.5 * (e.delta1_tilde() + self.eps)
    }

    /// `min(t^{-1/p-αε/2}, φ(4^j)^{δ/α+ε/2} t^{-1/p+δ})` without the constant.
    pub fn bound_shape(&self, e: &FractionalExponents, phi: &BernsteinSpec, j: i32, t: f64) -> f64 {
        let inv_p = 1.0 / e.p;
        let a = phi.eval_unchecked(4f64.powi(j));
        let small = t.powf(-inv_p - 0.5 * e.alpha * self.eps);
        let large = a.powf(self.delta / e.alpha + 0.5 * self.eps) * t.powf(-inv_p + self.delta);
        small.min(large)
    }

    /// Time where the two branches of the bound meet, `φ(4^j)^{-1/α}`.
    pub fn crossover_time(&self, e: &FractionalExponents, phi: &BernsteinSpec, j: i32) -> f64 {
        phi.eval_unchecked(4f64.powi(j)).powf(-1.0 / e.alpha)
    }
}

/// Relative allowance for the grid L₁ sum of an oscillating band kernel.
/// At 45 samples per shortest wavelength the sum is within ~1e-4 of its
/// refined value.
pub const L1_QUADRATURE_MARGIN: f64 = 1e-3;

/// Evaluates `‖Δ_j φ(-Δ)^{(δ̃₁+ε)/2} S_{α,σ₂}(t)‖_{L₁}` on a bank's grid.
#[derive(Debug, Clone)]
pub struct BandKernel {
    bank: DyadicBank,
    builder: KernelBuilder,
    exponents: FractionalExponents,
    estimate: BandEstimate,
    eval: SymbolEvaluator,
    phi: BernsteinSpec,
}

impl BandKernel {
    pub fn new(
        bank: DyadicBank,
        exponents: FractionalExponents,
        estimate: BandEstimate,
        phi: &BernsteinSpec,
    ) -> Result<Self> {
        exponents.validate()?;
        estimate.check_window(&exponents)?;
        let eval = SymbolEvaluator::new(exponents.jump_order(), phi, None)?;
        Ok(Self {
            builder: KernelBuilder::new(*bank.grid()),
            bank,
            exponents,
            estimate,
            eval,
            phi: phi.clone(),
        })
    }

    pub fn bank(&self) -> &DyadicBank {
        &self.bank
    }

    pub fn estimate(&self) -> &BandEstimate {
        &self.estimate
    }

    /// Measured band L₁ norm at `(j, t)`.
    pub fn measured(&self, j: i32, t: f64) -> Result<f64> {
        self.bank.check_index(j)?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time t = {t} must be positive")));
        }
        let gamma = self.estimate.derivative_order(&self.exponents);
        let table = self.builder.table();
        let per = table
            .xi_sq
            .iter()
            .map(|&x| {
                let w = self.bank.profile(j, x.sqrt());
                if w == 0.0 {
                    Ok(0.0)
                } else {
                    let phi = self.phi.eval_unchecked(x);
                    Ok(w * phi.powf(gamma) * self.eval.eval(t, x)?)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let symbol = table.expand(&per);
        let values = self.builder.values_from_symbol(&symbol);
        Ok(lp_norm_slice(&values, 1.0, self.bank.grid().cell_volume()))
    }

    pub fn bound_shape(&self, j: i32, t: f64) -> f64 {
        self.estimate.bound_shape(&self.exponents, &self.phi, j, t)
    }

    /// `(measured, constant · bound_shape)`.
    pub fn band_kernel_l1(&self, j: i32, t: f64, constant: f64) -> Result<(f64, f64)> {
        Ok((self.measured(j, t)?, constant * self.bound_shape(j, t)))
    }

    /// Largest `measured / bound_shape` over the `t` samples at band `j`,
    /// inflated by [`L1_QUADRATURE_MARGIN`].
    pub fn fit_constant(&self, j: i32, times: &[f64]) -> Result<f64> {
        if times.is_empty() {
            return Err(Error::Empty("time sweep"));
        }
        let mut c = 0.0f64;
        for &t in times {
            c = c.max(self.measured(j, t)? / self.bound_shape(j, t));
        }
        Ok(c * (1.0 + L1_QUADRATURE_MARGIN))
    }
}

/// Configuration of the square-function operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareFnConfig {
    pub exponents: FractionalExponents,
    /// Number of l₂ channels.
    pub channels: usize,
    /// Step of the time grid `s_i = i·ds`.
    pub ds: f64,
}

impl SquareFnConfig {
    pub fn new(exponents: FractionalExponents, channels: usize, ds: f64) -> Result<Self> {
        let c = Self { exponents, channels, ds };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.exponents.validate()?;
        if self.channels == 0 {
            return Err(Error::Parameter("square function needs at least one channel".into()));
        }
        if !(self.ds > 0.0) {
            return Err(Error::Parameter(format!("time step ds = {} must be positive", self.ds)));
        }
        let z = self.zeta();
        if !(z > 0.0 && z <= 1.0) {
            return Err(Error::Parameter(format!("delta0_tilde/2 = {z} outside (0, 1]")));
        }
        Ok(())
    }

    /// `δ̃₀ / 2`.
    pub fn zeta(&self) -> f64 {
        0.5 * self.exponents.delta0_tilde()
    }
}

/// Time-indexed, K-channel input: `h[i][k]` is channel `k` at `s_i = i·ds`.
pub type ChannelSeries = Vec<Vec<Field>>;

fn check_series(config: &SquareFnConfig, h: &ChannelSeries) -> Result<SpectralGrid> {
    config.validate()?;
    let first = h.first().ok_or(Error::Empty("time grid"))?;
    let grid = *first.first().ok_or(Error::Empty("channel list"))?.grid();
    for slice in h {
        if slice.len() != config.channels {
            return Err(Error::Parameter(format!(
                "slice has {} channels, config expects {}",
                slice.len(),
                config.channels
            )));
        }
        for f in slice {
            grid.check_same(f.grid())?;
        }
    }
    Ok(grid)
}

/// Precomputed transforms for evaluating 𝕊h at every grid time.
struct SquareFnPlan {
    grid: SpectralGrid,
    /// `lag_symbols[l]` is the symbol at lag `(l+1)·ds`.
    lag_symbols: Vec<Vec<f64>>,
    spectra: Vec<Vec<Vec<Complex64>>>,
}

impl SquareFnPlan {
    fn new(config: &SquareFnConfig, phi: &BernsteinSpec, h: &ChannelSeries) -> Result<Self> {
        let grid = check_series(config, h)?;
        let eval = SymbolEvaluator::new(config.exponents.wiener_order(), phi, Some(config.zeta()))?;
        let builder = KernelBuilder::new(grid);
        let lag_symbols = (1..=h.len())
            .map(|l| builder.symbol(&eval, l as f64 * config.ds))
            .collect::<Result<Vec<_>>>()?;
        let spectra = h.iter().map(|slice| slice.iter().map(Field::spectrum).collect()).collect();
        Ok(Self {
            grid,
            lag_symbols,
            spectra,
        })
    }

    /// Σ_{i<n} ds Σ_k |S(t_n - s_i) ⋆ h_k(s_i)|², pointwise, for `t_n = n·ds`.
    fn squared(&self, n: usize, ds: f64) -> Vec<f64> {
        let len = self.grid.len();
        let mut acc = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..n {
            let sym = &self.lag_symbols[n - 1 - i];
            for spec in &self.spectra[i] {
                for ((b, s), m) in buf.iter_mut().zip(spec).zip(sym) {
                    *b = s * m;
                }
                fft_inverse(&self.grid, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += ds * b.re * b.re;
                }
            }
        }
        acc
    }

    /// Same quantity integrated over space, computed from the spectra.
    fn squared_l2_fourier(&self, n: usize, ds: f64) -> f64 {
        let scale = self.grid.cell_volume() / self.grid.len() as f64;
        let mut total = 0.0;
        for i in 0..n {
            let sym = &self.lag_symbols[n - 1 - i];
            for spec in &self.spectra[i] {
                total += spec.iter().zip(sym).map(|(s, m)| s.norm_sqr() * m * m).sum::<f64>();
            }
        }
        ds * scale * total
    }
}

/// 𝕊h at the final time `t = N·ds`, where `N = h.len()`.
pub fn square_function(config: &SquareFnConfig, phi: &BernsteinSpec, h: &ChannelSeries) -> Result<Field> {
    let plan = SquareFnPlan::new(config, phi, h)?;
    let sq = plan.squared(h.len(), config.ds);
    Ok(Field::from_raw(plan.grid, sq.into_iter().map(f64::sqrt).collect()))
}

/// 𝕊h at every time `t_n = n·ds`, `n = 1..=N`.
pub fn square_function_series(config: &SquareFnConfig, phi: &BernsteinSpec, h: &ChannelSeries) -> Result<Vec<Field>> {
    let plan = SquareFnPlan::new(config, phi, h)?;
    Ok((1..=h.len())
        .map(|n| Field::from_raw(plan.grid, plan.squared(n, config.ds).into_iter().map(f64::sqrt).collect()))
        .collect())
}

/// `‖h‖_{L_p(time × space; l₂)}` with the left-endpoint time rule.
pub fn channel_lp_norm(h: &ChannelSeries, ds: f64, p: f64) -> f64 {
    let mut total = 0.0;
    for slice in h {
        let grid = slice[0].grid();
        let len = grid.len();
        let l2: Vec<f64> = (0..len)
            .map(|x| slice.iter().map(|f| f.values()[x].powi(2)).sum::<f64>().sqrt())
            .collect();
        total += ds * lp_norm_slice(&l2, p, grid.cell_volume()).powf(p);
    }
    total.powf(1.0 / p)
}

/// `‖𝕊h‖_{L_p} / ‖h‖_{L_p(l₂)}` over times `t_n = n·ds`, `n = 1..=N`.
pub fn strong_pp_ratio(config: &SquareFnConfig, phi: &BernsteinSpec, h: &ChannelSeries, p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::Parameter(format!("strong (p,p) ratio needs p >= 2, got {p}")));
    }
    let denom = channel_lp_norm(h, config.ds, p);
    if denom == 0.0 {
        return Err(Error::Degenerate("h vanishes identically".into()));
    }
    let plan = SquareFnPlan::new(config, phi, h)?;
    let cell = plan.grid.cell_volume();
    let mut num = 0.0;
    for n in 1..=h.len() {
        let sq = plan.squared(n, config.ds);
        let s: f64 = sq.iter().map(|v| v.powf(0.5 * p)).sum();
        num += config.ds * s * cell;
    }
    Ok(num.powf(1.0 / p) / denom)
}

/// The `p = 2` ratio evaluated entirely on the Fourier side via Parseval.
pub fn strong_22_ratio_fourier(config: &SquareFnConfig, phi: &BernsteinSpec, h: &ChannelSeries) -> Result<f64> {
    let denom = channel_lp_norm(h, config.ds, 2.0);
    if denom == 0.0 {
        return Err(Error::Degenerate("h vanishes identically".into()));
    }
    let plan = SquareFnPlan::new(config, phi, h)?;
    let num: f64 = (1..=h.len()).map(|n| config.ds * plan.squared_l2_fourier(n, config.ds)).sum();
    Ok(num.sqrt() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_grid;

    fn smoothstep_ok() {
        assert_eq!(smootherstep(0.0), 0.0);
        assert_eq!(smootherstep(1.0), 1.0);
        assert!((smootherstep(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_support_and_plateau() {
        smoothstep_ok();
        for i in 0..=4000 {
            let r = i as f64 * 1e-3;
            let v = psi(r);
            assert!((0.0..=1.0).contains(&v));
            if !(0.5..=2.0).contains(&r) {
                assert_eq!(v, 0.0, "r = {r}");
            }
            if (0.7..=1.0).contains(&r) {
                assert_eq!(v, 1.0, "r = {r}");
            }
        }
    }

    #[test]
    fn partition_of_unity_on_lattice() {
        for (d, n) in [(1, 1024), (2, 128), (3, 32)] {
            let bank = DyadicBank::new(SpectralGrid::new(d, n, 7.0).unwrap());
            assert!(bank.partition_defect() < 1e-12);
        }
    }

    #[test]
    fn band_projection_examples() {
        // lattice spacing 3/16 puts 0.75·2^j and 2^{j+3} on the lattice
        let grid = SpectralGrid::new(1, 1024, std::f64::consts::PI * 16.0 / 3.0).unwrap();
        let bank = DyadicBank::new(grid);
        let j = 2;
        let m_in = (0.75 * 4.0 / grid.dxi()).round() as i64;
        let mode = Field::cos_mode(grid, &[m_in]);
        let out = bank.band_project(j, &mode).unwrap();
        assert!(out.sub(&mode).unwrap().max_abs() < 1e-12);
        let m_out = (32.0 / grid.dxi()).round() as i64;
        let far = Field::cos_mode(grid, &[m_out]);
        assert!(bank.band_project(j, &far).unwrap().max_abs() < 1e-12);

        let u = Field::from_fn(grid, |x| (-x[0] * x[0]).exp() + (5.0 * x[0]).sin() / (1.0 + x[0] * x[0]));
        let (_, jmax) = bank.j_range();
        let mut sum = Field::zeros(grid);
        for j in 0..=jmax {
            sum = sum.add(&bank.band_project(j, &u).unwrap()).unwrap();
        }
        assert!(sum.sub(&u).unwrap().max_abs() < 1e-10);
        assert!(bank.band_project(jmax + 1, &u).is_err());
        assert!(bank.band_project(-1, &u).is_err());
    }

    fn band_setup() -> (FractionalExponents, BandEstimate) {
        let e = FractionalExponents::new(0.5, 0.5, 0.46, 2.5).unwrap();
        let b = BandEstimate::new(&e, 0.2, None).unwrap();
        (e, b)
    }

    #[test]
    fn window_is_checked() {
        let e = FractionalExponents::new(0.5, 0.5, 0.46, 2.5).unwrap();
        assert!(matches!(BandEstimate::new(&e, 0.5, None), Err(Error::Window(_))));
        let (e, b) = band_setup();
        assert!((b.delta - 0.2).abs() < 1e-15);
        assert!(BandEstimate::new(&e, 0.2, Some(0.45)).is_err());
    }

    #[test]
    fn band_norm_depends_on_scaled_time_only() {
        // for power φ the ratio measured/bound is a function of t^α φ(4^j)
        let (e, b) = band_setup();
        let phi = BernsteinSpec::power(0.5).unwrap();
        let grid = SpectralGrid::new(1, 4096, 16.0 * std::f64::consts::PI).unwrap();
        let bk = BandKernel::new(DyadicBank::new(grid), e, b, &phi).unwrap();
        let r1 = bk.measured(1, 0.25).unwrap() / bk.bound_shape(1, 0.25);
        let r2 = bk.measured(3, 0.25 / 16.0).unwrap() / bk.bound_shape(3, 0.25 / 16.0);
        assert!((r1 / r2 - 1.0).abs() < 1e-3, "{r1} {r2}");
    }

    fn random_series(grid: SpectralGrid, steps: usize, channels: usize, seed: u64) -> ChannelSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let l = grid.half_width();
        (0..steps)
            .map(|i| {
                (0..channels)
                    .map(|_| {
                        let a: f64 = rng.random::<f64>() - 0.5;
                        let k = rng.random_range(1..4) as f64;
                        let env = (i as f64 * 0.3).sin() + 1.5;
                        Field::from_fn(grid, |x| env * a * (k * std::f64::consts::PI * x[0] / l).cos() * (-x[0] * x[0] / 4.0).exp())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn square_function_basic_properties() {
        let grid = SpectralGrid::new(1, 64, 6.0).unwrap();
        let phi = BernsteinSpec::power(0.5).unwrap();
        let e = FractionalExponents::new(0.6, 0.7, 0.6, 2.0).unwrap();
        let cfg = SquareFnConfig::new(e, 2, 0.05).unwrap();

        let zero: ChannelSeries = vec![vec![Field::zeros(grid); 2]; 4];
        assert_eq!(square_function(&cfg, &phi, &zero).unwrap().max_abs(), 0.0);

        let h = random_series(grid, 6, 2, 3);
        let base = square_function(&cfg, &phi, &h).unwrap();
        let scaled: ChannelSeries = h.iter().map(|s| s.iter().map(|f| f.scaled(-2.5)).collect()).collect();
        let sc = square_function(&cfg, &phi, &scaled).unwrap();
        assert!(sc.sub(&base.scaled(2.5)).unwrap().max_abs() < 1e-12 * base.max_abs().max(1.0));

        let h2 = random_series(grid, 6, 2, 4);
        let sum: ChannelSeries = h
            .iter()
            .zip(&h2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.add(y).unwrap()).collect())
            .collect();
        let s_sum = square_function(&cfg, &phi, &sum).unwrap();
        let s2 = square_function(&cfg, &phi, &h2).unwrap();
        for i in 0..grid.len() {
            assert!(s_sum.values()[i] <= base.values()[i] + s2.values()[i] + 1e-10);
        }
    }

    #[test]
    fn single_slice_is_one_quadrature_term() {
        let grid = SpectralGrid::new(1, 64, 6.0).unwrap();
        let phi = BernsteinSpec::power(0.75).unwrap();
        let e = FractionalExponents::new(0.6, 0.7, 0.6, 2.0).unwrap();
        let ds = 0.1;
        let cfg = SquareFnConfig::new(e, 1, ds).unwrap();
        let g = Field::from_fn(grid, |x| (-x[0] * x[0]).exp());
        let steps = 5;
        let s0 = 1;
        let mut h: ChannelSeries = vec![vec![Field::zeros(grid)]; steps];
        h[s0][0] = g.clone();
        let out = square_function(&cfg, &phi, &h).unwrap();
        let lag = (steps - s0) as f64 * ds;
        let snap = kernel_grid(e.wiener_order(), lag, &grid, &phi, Some(cfg.zeta())).unwrap();
        let direct = snap.convolve(&g).unwrap();
        for i in 0..grid.len() {
            assert!((out.values()[i] - ds.sqrt() * direct.values()[i].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_side_matches_spatial_side() {
        let grid = SpectralGrid::new(1, 64, 6.0).unwrap();
        let phi = BernsteinSpec::power(0.5).unwrap();
        let e = FractionalExponents::new(0.6, 0.7, 0.6, 2.0).unwrap();
        let cfg = SquareFnConfig::new(e, 2, 0.05).unwrap();
        let h = random_series(grid, 8, 2, 11);
        let a = strong_pp_ratio(&cfg, &phi, &h, 2.0).unwrap();
        let b = strong_22_ratio_fourier(&cfg, &phi, &h).unwrap();
        assert!((a - b).abs() < 1e-10 * a, "{a} {b}");
        let scaled: ChannelSeries = h.iter().map(|s| s.iter().map(|f| f.scaled(7.0)).collect()).collect();
        let c = strong_pp_ratio(&cfg, &phi, &scaled, 3.0).unwrap();
        let d = strong_pp_ratio(&cfg, &phi, &h, 3.0).unwrap();
        assert!((c - d).abs() < 1e-12 * d);
        let zero: ChannelSeries = vec![vec![Field::zeros(grid); 2]; 3];
        assert!(matches!(strong_pp_ratio(&cfg, &phi, &zero, 2.0), Err(Error::Degenerate(_))));
        assert!(strong_pp_ratio(&cfg, &phi, &h, 1.5).is_err());
    }
}
