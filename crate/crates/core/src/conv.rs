//! Circular 2D convolution, its adjoint, and the matrix-free exact norm.
//!
//! Forward (indices mod `n`):
//!
//! ```text
//! Y[c, r, s] = sum_d sum_{k<h} sum_{l<w} X[d, r + k, s + l] L[c, d, k, l]
//! ```
//!
//! Adjoint:
//!
//! ```text
//! X[d, a, b] = sum_c sum_{k<h} sum_{l<w} Y[c, a - k, b - l] L[c, d, k, l]
//! ```

use crate::error::{Error, Result};
use crate::specnorm::{spectral_norm_op, LinearOperator, PowerIterOptions, SpectralEstimate};
use crate::tensor::{Filter4D, InputGeometry};

/// A `channels x n x n` image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    n: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || n == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {channels}x{n}x{n}")));
        }
        if values.len() != channels * n * n {
            return Err(Error::Integrity(format!(
                "{channels}x{n}x{n} image needs {} values, got {}",
                channels * n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("image contains non-finite values".into()));
        }
        Ok(Self { channels, n, values })
    }

    pub fn zeros(channels: usize, n: usize) -> Self {
        Self {
            channels,
            n,
            values: vec![0.0; channels * n * n],
        }
    }

    pub fn one_hot(channels: usize, n: usize, ch: usize, r: usize, s: usize) -> Self {
        let mut img = Self::zeros(channels, n);
        img.values[(ch * n + r) * n + s] = 1.0;
        img
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, ch: usize, r: usize, s: usize) -> f64 {
        self.values[(ch * self.n + r) * self.n + s]
    }

    /// Circular shift: `out[ch, r, s] = self[ch, r - dr, s - ds]`.
    pub fn roll(&self, dr: usize, ds: usize) -> Self {
        let n = self.n;
        let mut out = Self::zeros(self.channels, n);
        for ch in 0..self.channels {
            for r in 0..n {
                for s in 0..n {
                    out.values[(ch * n + (r + dr) % n) * n + (s + ds) % n] = self.get(ch, r, s);
                }
            }
        }
        out
    }

    pub fn dot(&self, other: &ImageTensor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

fn check_image(filter: &Filter4D, img: &ImageTensor, channels: usize, geometry: InputGeometry, role: &str) -> Result<()> {
    geometry.check(filter.dims())?;
    if img.channels != channels || img.n != geometry.n {
        return Err(Error::Shape(format!(
            "{role} is {}x{}x{}, expected {channels}x{n}x{n}",
            img.channels,
            img.n,
            img.n,
            n = geometry.n
        )));
    }
    Ok(())
}

/// Raw forward kernel on flat buffers; `y` is overwritten.
fn forward_into(filter: &Filter4D, n: usize, x: &[f64], y: &mut [f64]) {
    let dims = filter.dims();
    y.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..dims.c_out {
        let yc = &mut y[c * n * n..(c + 1) * n * n];
        for d in 0..dims.c_in {
            let xd = &x[d * n * n..(d + 1) * n * n];
            for k in 0..dims.h {
                for l in 0..dims.w {
                    let weight = filter.get(c, d, k, l);
                    if weight == 0.0 {
                        continue;
                    }
                    for r in 0..n {
                        let xrow = &xd[((r + k) % n) * n..((r + k) % n + 1) * n];
                        let yrow = &mut yc[r * n..(r + 1) * n];
                        for (s, ys) in yrow.iter_mut().enumerate() {
                            *ys += weight * xrow[(s + l) % n];
                        }
                    }
                }
            }
        }
    }
}

/// Raw adjoint kernel on flat buffers; `x` is overwritten.
fn adjoint_into(filter: &Filter4D, n: usize, y: &[f64], x: &mut [f64]) {
    let dims = filter.dims();
    x.iter_mut().for_each(|v| *v = 0.0);
    for d in 0..dims.c_in {
        let xd = &mut x[d * n * n..(d + 1) * n * n];
        for c in 0..dims.c_out {
            let yc = &y[c * n * n..(c + 1) * n * n];
            for k in 0..dims.h {
                for l in 0..dims.w {
                    let weight = filter.get(c, d, k, l);
                    if weight == 0.0 {
                        continue;
                    }
                    // X[d, a, b] += Y[c, a - k, b - l] L[c, d, k, l]
                    for a in 0..n {
                        let yr = (a + n - k) % n;
                        let yrow = &yc[yr * n..(yr + 1) * n];
                        let xrow = &mut xd[a * n..(a + 1) * n];
                        for (b, xb) in xrow.iter_mut().enumerate() {
                            *xb += weight * yrow[(b + n - l) % n];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(filter: &Filter4D, x: &ImageTensor, geometry: InputGeometry) -> Result<ImageTensor> {
    check_image(filter, x, filter.dims().c_in, geometry, "input")?;
    let n = geometry.n;
    let mut y = ImageTensor::zeros(filter.dims().c_out, n);
    forward_into(filter, n, &x.values, &mut y.values);
    Ok(y)
}

pub fn conv_adjoint(filter: &Filter4D, y: &ImageTensor, geometry: InputGeometry) -> Result<ImageTensor> {
    check_image(filter, y, filter.dims().c_out, geometry, "output")?;
    let n = geometry.n;
    let mut x = ImageTensor::zeros(filter.dims().c_in, n);
    adjoint_into(filter, n, &y.values, &mut x.values);
    Ok(x)
}

/// The convolution as a [`LinearOperator`] on flattened images.
#[derive(Debug, Clone, Copy)]
pub struct ConvOperator<'a> {
    filter: &'a Filter4D,
    n: usize,
}

impl<'a> ConvOperator<'a> {
    pub fn new(filter: &'a Filter4D, geometry: InputGeometry) -> Result<Self> {
        geometry.check(filter.dims())?;
        Ok(Self { filter, n: geometry.n })
    }
}

impl LinearOperator for ConvOperator<'_> {
    type Elem = f64;

    fn nrows(&self) -> usize {
        self.filter.dims().c_out * self.n * self.n
    }
    fn ncols(&self) -> usize {
        self.filter.dims().c_in * self.n * self.n
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        forward_into(self.filter, self.n, x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        adjoint_into(self.filter, self.n, y, out)
    }
}

/// Power iteration on `X -> conv_adjoint(conv_forward(X))`. The singular
/// vectors are returned as flattened images.
pub fn exact_norm_matfree(
    filter: &Filter4D,
    geometry: InputGeometry,
    opts: &PowerIterOptions,
) -> Result<SpectralEstimate<f64>> {
    spectral_norm_op(&ConvOperator::new(filter, geometry)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_filter, NormalStream};
    use crate::tensor::FilterDims;

    fn random_image(channels: usize, n: usize, seed: u64) -> ImageTensor {
        ImageTensor::new(channels, n, NormalStream::new(seed).normal_vec(channels * n * n)).unwrap()
    }

    #[test]
    fn identity_filter() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 1), vec![1.0]).unwrap();
        let x = random_image(1, 4, 3);
        let g = InputGeometry::new(4);
        assert_eq!(conv_forward(&l, &x, g).unwrap(), x);
        assert_eq!(conv_adjoint(&l, &x, g).unwrap(), x);
    }

    #[test]
    fn one_hot_response() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 3), vec![1.0, 2.0, -1.0]).unwrap();
        let x = ImageTensor::one_hot(1, 5, 0, 0, 0);
        let y = conv_forward(&l, &x, InputGeometry::new(5)).unwrap();
        assert_eq!(&y.values()[..5], &[1.0, 0.0, 0.0, -1.0, 2.0]);
        // Row 0 of the input only feeds row 0 of the output for a 1-row filter.
        assert!(y.values()[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_pairing() {
        let l = random_filter(FilterDims::new(2, 3, 3, 3), 11).unwrap();
        let g = InputGeometry::new(6);
        for trial in 0..20 {
            let x = random_image(3, 6, 100 + trial);
            let y = random_image(2, 6, 200 + trial);
            let lhs = conv_forward(&l, &x, g).unwrap().dot(&y);
            let rhs = x.dot(&conv_adjoint(&l, &y, g).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn shape_errors() {
        let l = random_filter(FilterDims::new(2, 3, 3, 3), 0).unwrap();
        let g = InputGeometry::new(6);
        assert!(matches!(conv_forward(&l, &random_image(2, 6, 0), g), Err(Error::Shape(_))));
        assert!(matches!(conv_forward(&l, &random_image(3, 5, 0), g), Err(Error::Shape(_))));
        assert!(matches!(conv_adjoint(&l, &random_image(3, 6, 0), g), Err(Error::Shape(_))));
        assert!(matches!(
            conv_forward(&l, &random_image(3, 3, 0), InputGeometry::new(3)),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn matfree_worked_example() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 3), vec![1.0, 2.0, -1.0]).unwrap();
        let est = exact_norm_matfree(&l, InputGeometry::new(5), &PowerIterOptions::default()).unwrap();
        assert!(est.converged);
        assert!((est.sigma - 2.76008).abs() <= 1e-4);
    }

    #[test]
    fn matfree_pointwise_is_matrix_norm() {
        // [[2, 1], [1, 2]] has norm 3.
        let l = Filter4D::new(FilterDims::new(2, 2, 1, 1), vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let est = exact_norm_matfree(&l, InputGeometry::new(3), &PowerIterOptions::default()).unwrap();
        assert!((est.sigma - 3.0).abs() <= 1e-9);
    }

    #[test]
    fn shift_equivariance() {
        let l = random_filter(FilterDims::new(2, 2, 2, 3), 5).unwrap();
        let g = InputGeometry::new(5);
        let x = random_image(2, 5, 9);
        let y = conv_forward(&l, &x, g).unwrap();
        for (dr, ds) in [(1, 0), (0, 2), (3, 4)] {
            let shifted = conv_forward(&l, &x.roll(dr, ds), g).unwrap();
            assert_eq!(shifted, y.roll(dr, ds));
        }
    }
}
