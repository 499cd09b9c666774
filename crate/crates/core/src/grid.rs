//! Periodic grids on `[-L, L]^d`, real fields on them, and the FFT plumbing.
//!
//! Samples sit at `x_j = -L + j·dx` with `dx = 2L/n`, stored row-major with
//! the last axis contiguous. The frequency lattice is `ξ_m = π m / L` with
//! `m` in FFT order (`0, 1, …, n/2-1, -n/2, …, -1`).

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_POINTS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    d: usize,
    n: usize,
    half_width: f64,
}

impl SpectralGrid {
    pub fn new(d: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Grid(format!("dimension {d} not in 1..=3")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("n = {n} must be a power of two and at least 16")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Grid(format!("half width {half_width} must be positive")));
        }
        let total = n.checked_pow(d as u32).filter(|&t| t <= MAX_POINTS);
        if total.is_none() {
            return Err(Error::Grid(format!("n^d = {n}^{d} exceeds 2^24 points")));
        }
        Ok(Self { d, n, half_width })
    }

    /// Default resolution per dimension: 1024, 256², 64³.
    pub fn default_for(d: usize, half_width: f64) -> Result<Self> {
        let n = match d {
            1 => 1024,
            2 => 256,
            _ => 64,
        };
        Self::new(d, n, half_width)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Volume element `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Volume of the box, `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of sample `j` along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Signed lattice index for FFT position `k`.
    pub fn freq_index(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Lattice spacing `π / L`.
    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    /// `|ξ|` at the Nyquist frequency along one axis.
    pub fn nyquist(&self) -> f64 {
        self.dxi() * (self.n / 2) as f64
    }

    /// Splits a flat index into per-axis indices.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.d).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Physical coordinates of a flat index.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = self.coord(idx[a]);
        }
        x
    }

    /// Signed lattice vector of a flat index.
    pub fn mode(&self, flat: usize) -> [i64; 3] {
        let idx = self.unravel(flat);
        let mut m = [0i64; 3];
        for a in 0..self.d {
            m[a] = self.freq_index(idx[a]);
        }
        m
    }

    /// Integer `|m|²` for every lattice point, so `|ξ|² = (π/L)² |m|²`.
    pub fn mode_sq(&self) -> Vec<u64> {
        let axis: Vec<u64> = (0..self.n)
            .map(|k| {
                let m = self.freq_index(k);
                (m * m) as u64
            })
            .collect();
        let mut out = vec![0u64; self.len()];
        match self.d {
            1 => out.copy_from_slice(&axis),
            2 => {
                for i in 0..self.n {
                    for j in 0..self.n {
                        out[i * self.n + j] = axis[i] + axis[j];
                    }
                }
            }
            _ => {
                for i in 0..self.n {
                    for j in 0..self.n {
                        for k in 0..self.n {
                            out[(i * self.n + j) * self.n + k] = axis[i] + axis[j] + axis[k];
                        }
                    }
                }
            }
        }
        out
    }

    /// Distinct values of `|m|²` and, per lattice point, the position of its
    /// value in that list. Radial symbols only need one evaluation per entry.
    pub fn radial_table(&self) -> RadialTable {
        let sq = self.mode_sq();
        let mut distinct = sq.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let lookup: HashMap<u64, u32> = distinct.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
        let index = sq.iter().map(|v| lookup[v]).collect();
        let scale = self.dxi() * self.dxi();
        RadialTable {
            xi_sq: distinct.iter().map(|&m| m as f64 * scale).collect(),
            index,
        }
    }

    /// `(-1)^{Σ m_a}` per lattice point; shifts between the `x = -L` origin and `x = 0`.
    pub fn checkerboard(&self) -> Vec<f64> {
        (0..self.len())
            .map(|f| {
                let s: i64 = self.mode(f).iter().sum();
                if s.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }

    pub fn check_same(&self, other: &SpectralGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Lattice `|ξ|²` compressed to distinct values.
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub xi_sq: Vec<f64>,
    pub index: Vec<u32>,
}

impl RadialTable {
    /// Expands per-distinct values to the whole lattice.
    pub fn expand(&self, per_value: &[f64]) -> Vec<f64> {
        self.index.iter().map(|&i| per_value[i as usize]).collect()
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                PLANNER.with(|p| {
                    let mut p = p.borrow_mut();
                    if inverse {
                        p.plan_fft_inverse(n)
                    } else {
                        p.plan_fft_forward(n)
                    }
                })
            })
            .clone()
    })
}

fn transform(grid: &SpectralGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let d = grid.d;
    assert_eq!(data.len(), grid.len(), "buffer length does not match grid");
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    if d == 1 {
        return;
    }
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); total];
    for axis in 0..d - 1 {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        // gather lines along `axis` into contiguous rows
        let mut row = 0;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for k in 0..n {
                    line[row * n + k] = data[start + k * stride];
                }
                row += 1;
            }
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        let mut row = 0;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for k in 0..n {
                    data[start + k * stride] = line[row * n + k];
                }
                row += 1;
            }
        }
    }
}

/// Unnormalized forward DFT, in place.
pub fn fft_forward(grid: &SpectralGrid, data: &mut [Complex64]) {
    transform(grid, data, false);
}

/// Inverse DFT normalized by `1/n^d`, in place.
pub fn fft_inverse(grid: &SpectralGrid, data: &mut [Complex64]) {
    transform(grid, data, true);
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpectralGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn constant(grid: SpectralGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid,
        }
    }

    /// Samples `f(x)` at every grid point; `x` has `d` meaningful entries.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: SpectralGrid, f: F) -> Self {
        let d = grid.d();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self { grid, values }
    }

    /// `cos(ξ·x)` for the lattice mode `m` (a real pure mode).
    pub fn cos_mode(grid: SpectralGrid, m: &[i64]) -> Self {
        let dxi = grid.dxi();
        Self::from_fn(grid, |x| {
            let phase: f64 = x.iter().zip(m).map(|(xa, &ma)| dxi * ma as f64 * xa).sum();
            phase.cos()
        })
    }

    pub(crate) fn from_raw(grid: SpectralGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `(Σ |v|^p dx^d)^{1/p}`; `p = ∞` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_slice(&self.values, p, self.grid.cell_volume())
    }

    /// `Σ |v|^p dx^d` without the root.
    pub fn lp_norm_pow(&self, p: f64) -> f64 {
        lp_pow_slice(&self.values, p, self.grid.cell_volume())
    }

    /// `Σ v dx^d`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Field) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_forward(&self.grid, &mut buf);
        buf
    }

    /// Inverse of [`Field::spectrum`], keeping the real part.
    pub fn from_spectrum(grid: SpectralGrid, mut spec: Vec<Complex64>) -> Self {
        fft_inverse(&grid, &mut spec);
        Self::from_raw(grid, spec.into_iter().map(|c| c.re).collect())
    }

    /// Applies a real Fourier multiplier given per lattice point.
    pub fn apply_multiplier(&self, multiplier: &[f64]) -> Result<Self> {
        if multiplier.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        let mut spec = self.spectrum();
        for (s, m) in spec.iter_mut().zip(multiplier) {
            *s *= *m;
        }
        Ok(Self::from_spectrum(self.grid, spec))
    }

    /// Applies a radial multiplier `f(|ξ|²)`.
    pub fn apply_radial<F: FnMut(f64) -> f64>(&self, f: F) -> Self {
        let table = self.grid.radial_table();
        let per: Vec<f64> = table.xi_sq.iter().copied().map(f).collect();
        let mult = table.expand(&per);
        self.apply_multiplier(&mult).expect("multiplier built on the same grid")
    }

    /// Linear interpolation at an arbitrary point, periodic in each axis.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let (n, d, dx, l) = (g.n, g.d, g.dx(), g.half_width);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let s = ((x[a] + l) / dx).rem_euclid(n as f64);
            let i = s.floor();
            base[a] = (i as usize) % n;
            frac[a] = s - i;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * n + (base[a] + up) % n;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

pub(crate) fn lp_pow_slice(values: &[f64], p: f64, cell: f64) -> f64 {
    let s: f64 = if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    s * cell
}

pub(crate) fn lp_norm_slice(values: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    lp_pow_slice(values, p, cell).powf(1.0 / p)
}
