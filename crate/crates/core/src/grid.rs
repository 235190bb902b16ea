//! Real and complex 2D grids, the zero-padding pair and the 2D DFT.
//!
//! Grids are row-major `f64` / `Complex64` buffers. The forward DFT is
//! unnormalized and the inverse carries the `1/m` factor, so that
//! `‖dft2(u)‖² = m‖u‖²` with `m = height * width`.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_shape, Error, Result};

#[derive(Clone, PartialEq)]
pub struct RealGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Config(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite grid entry at index {i}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped grids.
    pub fn zip_map(&self, other: &RealGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_shape("zip_map", self.shape(), other.shape())?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &RealGrid) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &RealGrid) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &RealGrid) -> Result<f64> {
        check_shape("dot", self.shape(), other.shape())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &RealGrid) -> Result<f64> {
        check_shape("max_abs_diff", self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rotation by 180 degrees, the conjugate-flip ambiguity of a real signal.
    pub fn rotate_180(&self) -> Self {
        let mut data = self.data.clone();
        data.reverse();
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Circular shift by `(dr, dc)` with wrap-around.
    pub fn circular_shift(&self, dr: usize, dc: usize) -> Self {
        let (h, w) = self.shape();
        Self::from_fn(h, w, |r, c| {
            self[((r + h - dr % h) % h, (c + w - dc % w) % w)]
        })
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }
}

impl Index<(usize, usize)> for RealGrid {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        assert!(
            r < self.height && c < self.width,
            "grid index out of bounds"
        );
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for RealGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        assert!(
            r < self.height && c < self.width,
            "grid index out of bounds"
        );
        &mut self.data[r * self.width + c]
    }
}

impl fmt::Debug for RealGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealGrid {}x{} [", self.height, self.width)?;
        for row in self.data.chunks(self.width) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Config(format!(
                "complex grid {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_real(grid: &RealGrid) -> Self {
        Self {
            height: grid.height,
            width: grid.width,
            data: grid.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn abs(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn re(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn im(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn max_abs_im(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        assert!(
            r < self.height && c < self.width,
            "grid index out of bounds"
        );
        &self.data[r * self.width + c]
    }
}

/// Signal dimensions and the zero-padded measurement dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PadSpec {
    pub inner_h: usize,
    pub inner_w: usize,
    pub outer_h: usize,
    pub outer_w: usize,
}

impl PadSpec {
    pub fn new(inner_h: usize, inner_w: usize, outer_h: usize, outer_w: usize) -> Result<Self> {
        if inner_h == 0 || inner_w == 0 {
            return Err(Error::Config("inner dimensions must be positive".into()));
        }
        if outer_h < inner_h || outer_w < inner_w {
            return Err(Error::Config(format!(
                "padded grid {outer_h}x{outer_w} is smaller than signal {inner_h}x{inner_w}"
            )));
        }
        Ok(Self {
            inner_h,
            inner_w,
            outer_h,
            outer_w,
        })
    }

    /// Padded dimensions `round(rate * n)` per axis.
    pub fn from_rate(inner_h: usize, inner_w: usize, rate: f64) -> Result<Self> {
        if !(rate >= 1.0) || !rate.is_finite() {
            return Err(Error::Config(format!(
                "sampling rate must be >= 1, got {rate}"
            )));
        }
        let outer_h = (rate * inner_h as f64).round() as usize;
        let outer_w = (rate * inner_w as f64).round() as usize;
        Self::new(inner_h, inner_w, outer_h, outer_w)
    }

    pub fn inner(&self) -> (usize, usize) {
        (self.inner_h, self.inner_w)
    }

    pub fn outer(&self) -> (usize, usize) {
        (self.outer_h, self.outer_w)
    }

    /// Padded pixel count `m`.
    pub fn m(&self) -> usize {
        self.outer_h * self.outer_w
    }

    /// Signal pixel count `n`.
    pub fn n(&self) -> usize {
        self.inner_h * self.inner_w
    }

    /// Per-axis sampling rates, rounded to three decimals.
    pub fn rates(&self) -> (f64, f64) {
        let round3 = |v: f64| (v * 1000.0).round() / 1000.0;
        (
            round3(self.outer_h as f64 / self.inner_h as f64),
            round3(self.outer_w as f64 / self.inner_w as f64),
        )
    }

    pub fn is_inside(&self, r: usize, c: usize) -> bool {
        r < self.inner_h && c < self.inner_w
    }
}

/// Embeds `x` in the top-left corner of a zero grid of the padded size.
pub fn zero_pad(x: &RealGrid, spec: &PadSpec) -> Result<RealGrid> {
    check_shape("zero_pad", spec.inner(), x.shape())?;
    let mut out = RealGrid::zeros(spec.outer_h, spec.outer_w);
    for r in 0..spec.inner_h {
        let src = &x.data[r * spec.inner_w..(r + 1) * spec.inner_w];
        out.data[r * spec.outer_w..r * spec.outer_w + spec.inner_w].copy_from_slice(src);
    }
    Ok(out)
}

/// Top-left block of a padded grid; the adjoint of [`zero_pad`].
pub fn crop(u: &RealGrid, spec: &PadSpec) -> Result<RealGrid> {
    check_shape("crop", spec.outer(), u.shape())?;
    let mut data = Vec::with_capacity(spec.n());
    for r in 0..spec.inner_h {
        data.extend_from_slice(&u.data[r * spec.outer_w..r * spec.outer_w + spec.inner_w]);
    }
    Ok(RealGrid {
        height: spec.inner_h,
        width: spec.inner_w,
        data,
    })
}

/// Cached row and column transforms for one grid size.
#[derive(Clone)]
pub struct FourierPlan {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourierPlan({}x{})", self.height, self.width)
    }
}

impl FourierPlan {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn transform(&self, grid: &mut ComplexGrid, inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(&mut grid.data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = grid.data[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                grid.data[r * w + c] = column[r];
            }
        }
        if inverse {
            let scale = 1.0 / (h * w) as f64;
            for z in &mut grid.data {
                *z *= scale;
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, u: &ComplexGrid) -> Result<ComplexGrid> {
        check_shape("dft2", self.shape(), u.shape())?;
        let mut out = u.clone();
        self.transform(&mut out, false);
        Ok(out)
    }

    pub fn forward_real(&self, u: &RealGrid) -> Result<ComplexGrid> {
        check_shape("dft2", self.shape(), u.shape())?;
        let mut out = ComplexGrid::from_real(u);
        self.transform(&mut out, false);
        Ok(out)
    }

    /// Inverse transform with the `1/m` factor.
    pub fn inverse(&self, v: &ComplexGrid) -> Result<ComplexGrid> {
        check_shape("idft2", self.shape(), v.shape())?;
        let mut out = v.clone();
        self.transform(&mut out, true);
        Ok(out)
    }

    pub fn inverse_in_place(&self, v: &mut ComplexGrid) -> Result<()> {
        check_shape("idft2", self.shape(), v.shape())?;
        self.transform(v, true);
        Ok(())
    }
}

pub fn dft2(u: &ComplexGrid) -> ComplexGrid {
    let plan = FourierPlan::new(u.height, u.width);
    let mut out = u.clone();
    plan.transform(&mut out, false);
    out
}

pub fn dft2_real(u: &RealGrid) -> ComplexGrid {
    dft2(&ComplexGrid::from_real(u))
}

pub fn idft2(v: &ComplexGrid) -> ComplexGrid {
    let plan = FourierPlan::new(v.height, v.width);
    let mut out = v.clone();
    plan.transform(&mut out, true);
    out
}

/// `|dft2(zero_pad(x))|`, the oversampled Fourier magnitude.
pub fn fourier_magnitude(x: &RealGrid, spec: &PadSpec) -> Result<RealGrid> {
    Ok(dft2_real(&zero_pad(x, spec)?).abs())
}
