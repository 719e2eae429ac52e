//! Dense containers shared by every method: the 4D convolution filter, real
//! and complex row-major matrices, and the square input geometry.
//!
//! Filters are stored row-major in `(c_out, c_in, h, w)` order, so element
//! `(c, d, k, l)` lives at flat index `((c * c_in + d) * h + k) * w + l`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a convolution filter. Serialized as `[c_out, c_in, h, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct FilterDims {
    pub c_out: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
}

impl From<[usize; 4]> for FilterDims {
    fn from(dims: [usize; 4]) -> Self {
        Self::from_array(dims)
    }
}

impl From<FilterDims> for [usize; 4] {
    fn from(dims: FilterDims) -> Self {
        dims.as_array()
    }
}

impl FilterDims {
    pub fn new(c_out: usize, c_in: usize, h: usize, w: usize) -> Self {
        Self { c_out, c_in, h, w }
    }

    pub fn from_array(dims: [usize; 4]) -> Self {
        Self::new(dims[0], dims[1], dims[2], dims[3])
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.c_out, self.c_in, self.h, self.w]
    }

    /// Total number of filter entries. Saturates instead of overflowing so
    /// that absurd headers are rejected by the length check.
    pub fn len(&self) -> usize {
        self.c_out
            .saturating_mul(self.c_in)
            .saturating_mul(self.h)
            .saturating_mul(self.w)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: usize, d: usize, k: usize, l: usize) -> usize {
        ((c * self.c_in + d) * self.h + k) * self.w + l
    }

    /// Inverse of [`FilterDims::index`].
    pub fn unravel(&self, flat: usize) -> (usize, usize, usize, usize) {
        let l = flat % self.w;
        let rest = flat / self.w;
        let k = rest % self.h;
        let rest = rest / self.h;
        let d = rest % self.c_in;
        let c = rest / self.c_in;
        (c, d, k, l)
    }

    pub fn max_spatial(&self) -> usize {
        self.h.max(self.w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_out == 0 || self.c_in == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::Integrity(format!(
                "all filter dimensions must be positive, got {}",
                self
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for FilterDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.c_out, self.c_in, self.h, self.w)
    }
}

impl std::str::FromStr for FilterDims {
    type Err = Error;

    /// Parses `c_out x c_in x h x w`, e.g. `64x64x3x3`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X', '×']).map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!(
                "expected shape as c_out x c_in x h x w, got {s:?}"
            )));
        }
        let mut dims = [0usize; 4];
        for (slot, part) in dims.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::Format(format!("bad dimension {part:?} in {s:?}")))?;
        }
        let dims = FilterDims::from_array(dims);
        dims.validate()?;
        Ok(dims)
    }
}

/// A convolution filter `L` of shape `c_out x c_in x h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter4D {
    dims: FilterDims,
    values: Vec<f64>,
}

impl Filter4D {
    pub fn new(dims: FilterDims, values: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(Error::Integrity(format!(
                "filter {} needs {} values, got {}",
                dims,
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite filter value {} at flat index {i}",
                values[i]
            )));
        }
        Ok(Self { dims, values })
    }

    /// Builds a filter by evaluating `f(c, d, k, l)` at every position.
    pub fn from_fn(dims: FilterDims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        dims.validate()?;
        let mut values = Vec::with_capacity(dims.len());
        for c in 0..dims.c_out {
            for d in 0..dims.c_in {
                for k in 0..dims.h {
                    for l in 0..dims.w {
                        values.push(f(c, d, k, l));
                    }
                }
            }
        }
        Self::new(dims, values)
    }

    /// Filter whose entries are `0, 1, 2, ...` in storage order.
    pub fn arange(dims: FilterDims) -> Result<Self> {
        Self::new(dims, (0..dims.len()).map(|i| i as f64).collect())
    }

    pub fn dims(&self) -> FilterDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, k: usize, l: usize) -> f64 {
        self.values[self.dims.index(c, d, k, l)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `sqrt(h * w)`, the factor that turns a reshape norm into a bound.
    pub fn spatial_scale(&self) -> f64 {
        ((self.dims.h * self.dims.w) as f64).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.dims, self.values.iter().map(|v| alpha * v).collect())
    }

    /// Returns a copy with one entry replaced.
    pub fn with_value(&self, flat: usize, value: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values[flat] = value;
        Self::new(self.dims, values)
    }

    /// Exchanges the output and input channel axes: `L'[d, c, k, l] = L[c, d, k, l]`.
    pub fn swap_channels(&self) -> Self {
        let dims = self.dims;
        let swapped = FilterDims::new(dims.c_in, dims.c_out, dims.h, dims.w);
        let mut values = vec![0.0; dims.len()];
        for c in 0..dims.c_out {
            for d in 0..dims.c_in {
                for k in 0..dims.h {
                    for l in 0..dims.w {
                        values[swapped.index(d, c, k, l)] = self.get(c, d, k, l);
                    }
                }
            }
        }
        Self {
            dims: swapped,
            values,
        }
    }
}

/// Real row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Integrity(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix contains non-finite entries".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), ncols, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { 0.0 })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// `a b^T`.
    pub fn outer(a: &[f64], b: &[f64]) -> Result<Self> {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        self.values[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|v| alpha * v).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (yi, row) in y.iter_mut().zip(self.values.chunks_exact(self.cols)) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        self.matvec_t_into(y, &mut x);
        x
    }

    pub(crate) fn matvec_t_into(&self, y: &[f64], x: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(x.len(), self.cols);
        x.iter_mut().for_each(|v| *v = 0.0);
        for (yi, row) in y.iter().zip(self.values.chunks_exact(self.cols)) {
            if *yi == 0.0 {
                continue;
            }
            for (xj, a) in x.iter_mut().zip(row) {
                *xj += a * yi;
            }
        }
    }

    /// Writes the matrix as comma-separated rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Complex row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Integrity(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("matrix contains non-finite entries".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn from_real(m: &DenseMatrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            values: m.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.cols + j]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|v| v * alpha).collect())
    }

    pub(crate) fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (yi, row) in y.iter_mut().zip(self.values.chunks_exact(self.cols)) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `y = M^H x`.
    pub(crate) fn matvec_h_into(&self, y: &[Complex64], x: &mut [Complex64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(x.len(), self.cols);
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (yi, row) in y.iter().zip(self.values.chunks_exact(self.cols)) {
            for (xj, a) in x.iter_mut().zip(row) {
                *xj += a.conj() * yi;
            }
        }
    }
}

/// Side length of the square `n x n` input image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputGeometry {
    pub n: usize,
}

impl InputGeometry {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Checks that the input is strictly larger than the filter in both
    /// spatial directions.
    pub fn check(&self, dims: FilterDims) -> Result<()> {
        if self.n <= dims.max_spatial() {
            return Err(Error::Geometry {
                n: self.n,
                max_hw: dims.max_spatial(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_matches_storage_order() {
        let dims = FilterDims::new(2, 3, 2, 4);
        let f = Filter4D::arange(dims).unwrap();
        for c in 0..2 {
            for d in 0..3 {
                for k in 0..2 {
                    for l in 0..4 {
                        let flat = ((c * 3 + d) * 2 + k) * 4 + l;
                        assert_eq!(f.get(c, d, k, l), flat as f64);
                        assert_eq!(dims.unravel(flat), (c, d, k, l));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_filters() {
        let dims = FilterDims::new(1, 1, 2, 2);
        assert!(matches!(
            Filter4D::new(dims, vec![1.0, 2.0, 3.0]),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            Filter4D::new(dims, vec![1.0, f64::NAN, 3.0, 4.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Filter4D::new(FilterDims::new(0, 1, 1, 1), vec![]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn parses_shape_strings() {
        let d: FilterDims = "64x16x3x3".parse().unwrap();
        assert_eq!(d, FilterDims::new(64, 16, 3, 3));
        assert!("64x16x3".parse::<FilterDims>().is_err());
        assert!("64x0x3x3".parse::<FilterDims>().is_err());
    }

    #[test]
    fn swap_channels_is_an_involution() {
        let f = Filter4D::arange(FilterDims::new(2, 3, 1, 2)).unwrap();
        let g = f.swap_channels();
        assert_eq!(g.dims(), FilterDims::new(3, 2, 1, 2));
        assert_eq!(g.get(2, 1, 0, 1), f.get(1, 2, 0, 1));
        assert_eq!(g.swap_channels(), f);
    }

    #[test]
    fn geometry_requires_strictly_larger_input() {
        let dims = FilterDims::new(1, 1, 4, 2);
        assert!(InputGeometry::new(5).check(dims).is_ok());
        assert!(matches!(
            InputGeometry::new(4).check(dims),
            Err(Error::Geometry { n: 4, max_hw: 4 })
        ));
    }

    #[test]
    fn transpose_products_agree() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]), m.transpose().matvec(&[1.0, 1.0]));
    }
}
