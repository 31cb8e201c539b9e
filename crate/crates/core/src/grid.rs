//! Dense scalar fields on an `m × n` pixel grid and the discrete operators
//! the rest of the crate is built from.
//!
//! Index convention: `(i, j)` with `i` the row (the `x` direction of the
//! finite differences) and `j` the column (`y`). Values outside the grid are
//! defined by replication, so forward differences vanish on the last
//! row/column and every operator here shares that Neumann convention.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major `rows × cols` field of finite `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty grid {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite value at index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`ImageGrid::new`] but additionally requires every value to lie
    /// in `[0, 1]`, as images and relaxed indicators must.
    pub fn unit_range(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let g = Self::new(rows, cols, data)?;
        if !g.is_unit_range() {
            return Err(Error::param("values must lie in [0, 1]"));
        }
        Ok(g)
    }

    /// # Panics
    /// If either dimension is zero or `value` is not finite.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty grid");
        assert!(value.is_finite());
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty grid");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Value at `(i, j)` with out-of-range indices replicated from the
    /// nearest border pixel.
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize) -> f64 {
        let ii = i.clamp(0, self.rows as isize - 1) as usize;
        let jj = j.clamp(0, self.cols as isize - 1) as usize;
        self.get(ii, jj)
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, other: &ImageGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// # Panics
    /// If the shapes differ.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        assert!(self.same_shape(other), "zip_map on grids of different shape");
        ImageGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Euclidean inner product.
    ///
    /// # Panics
    /// If the shapes differ.
    pub fn dot(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Mean of squared differences, `(1/mn) Σ (aᵢⱼ − bᵢⱼ)²`.
    pub fn mean_sq_diff(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other));
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        s / self.len() as f64
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }

    /// `Σ = {(i,j) : uᵢⱼ > alpha}`.
    pub fn threshold(&self, alpha: f64) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v > alpha).collect(),
        }
    }
}

impl Index<(usize, usize)> for ImageGrid {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ImageGrid {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Binary grid (segmentations and ground-truth masks).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} mask with {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(rows > 0 && cols > 0, "empty mask");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Number of pixels where the two masks disagree.
    pub fn hamming(&self, other: &Mask) -> usize {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).filter(|(a, b)| a != b).count()
    }

    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Square convolution kernel with odd side length.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd and positive, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::Dimension(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("non-finite kernel weight"));
        }
        Ok(Self { size, weights })
    }

    /// Box kernel with all weights `1/size²`.
    pub fn uniform(size: usize) -> Result<Self> {
        let w = 1.0 / (size * size) as f64;
        Self::new(size, vec![w; size * size])
    }

    pub fn identity() -> Self {
        Self { size: 1, weights: vec![1.0] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(a, b)` from the centre, `a, b ∈ [−r, r]`.
    pub fn at(&self, a: isize, b: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((a + r) as usize) * self.size + (b + r) as usize]
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `δx⁺u`: `u[i+1][j] − u[i][j]`, zero on the last row.
pub fn forward_diff_x(u: &ImageGrid) -> ImageGrid {
    let (m, n) = u.shape();
    ImageGrid::from_fn(m, n, |i, j| if i + 1 < m { u.get(i + 1, j) - u.get(i, j) } else { 0.0 })
}

/// `δy⁺u`: `u[i][j+1] − u[i][j]`, zero on the last column.
pub fn forward_diff_y(u: &ImageGrid) -> ImageGrid {
    let (m, n) = u.shape();
    ImageGrid::from_fn(m, n, |i, j| if j + 1 < n { u.get(i, j + 1) - u.get(i, j) } else { 0.0 })
}

/// Isotropic magnitude `√((δx⁺u)² + (δy⁺u)²)`.
pub fn gradient_magnitude(u: &ImageGrid) -> ImageGrid {
    forward_diff_x(u).zip_map(&forward_diff_y(u), f64::hypot)
}

/// Negative adjoint of the forward-difference pair:
/// `div p = −(δx⁺)ᵀ px − (δy⁺)ᵀ py`, so `⟨δ⁺u, p⟩ = −⟨u, div p⟩`.
pub fn divergence_adjoint(px: &ImageGrid, py: &ImageGrid) -> Result<ImageGrid> {
    px.check_shape(py, "divergence")?;
    let (m, n) = px.shape();
    Ok(ImageGrid::from_fn(m, n, |i, j| {
        let mut v = 0.0;
        if i + 1 < m {
            v += px.get(i, j);
        }
        if i > 0 {
            v -= px.get(i - 1, j);
        }
        if j + 1 < n {
            v += py.get(i, j);
        }
        if j > 0 {
            v -= py.get(i, j - 1);
        }
        v
    }))
}

/// Five-point Laplacian with replicated borders. Equal to
/// `divergence_adjoint(δx⁺u, δy⁺u)`.
pub fn laplacian(u: &ImageGrid) -> ImageGrid {
    let (m, n) = u.shape();
    ImageGrid::from_fn(m, n, |i, j| {
        let c = u.get(i, j);
        let mut v = 0.0;
        if i + 1 < m {
            v += u.get(i + 1, j) - c;
        }
        if i > 0 {
            v -= c - u.get(i - 1, j);
        }
        if j + 1 < n {
            v += u.get(i, j + 1) - c;
        }
        if j > 0 {
            v -= c - u.get(i, j - 1);
        }
        v
    })
}

/// Direct 2-D convolution with replicated borders.
///
/// Accumulated relative to the centre pixel so that a kernel whose weights
/// sum to one maps constant fields to themselves bit for bit.
pub fn convolve(u: &ImageGrid, k: &Kernel) -> ImageGrid {
    let (m, n) = u.shape();
    let r = k.radius() as isize;
    let total = k.weight_sum();
    let total = if (total - 1.0).abs() <= 1e-12 { 1.0 } else { total };
    ImageGrid::from_fn(m, n, |i, j| {
        let centre = u.get(i, j);
        let (i, j) = (i as isize, j as isize);
        let mut acc = 0.0;
        for a in -r..=r {
            for b in -r..=r {
                acc += k.at(a, b) * (u.get_clamped(i - a, j - b) - centre);
            }
        }
        total * centre + acc
    })
}

/// Pointwise clamp to `[0, 1]`.
pub fn project_unit_interval(u: &ImageGrid) -> ImageGrid {
    u.map(|v| v.clamp(0.0, 1.0))
}
