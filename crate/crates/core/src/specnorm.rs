//! Largest singular value by power iteration.
//!
//! The iteration alternates `u = M v / |M v|` and `v = M^H u / |M^H u|`, so
//! the estimate `sigma = |M^H u| = u^H M v` is always attained by the
//! returned unit pair. It works on anything that can apply itself and its
//! adjoint, which lets dense real matrices, complex frequency matrices and
//! the matrix-free convolution share one driver.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::tensor::{ComplexMatrix, DenseMatrix};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Field element the power iteration runs over (`f64` or `Complex64`).
pub trait Scalar:
    Copy + Send + Sync + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn conj(self) -> Self;
    fn abs_sqr(self) -> f64;
    fn scale(self, alpha: f64) -> Self;
    fn is_finite(self) -> bool;
    fn random_vec(stream: &mut NormalStream, len: usize) -> Vec<Self>;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn conj(self) -> Self {
        self
    }
    fn abs_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, alpha: f64) -> Self {
        self * alpha
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn random_vec(stream: &mut NormalStream, len: usize) -> Vec<Self> {
        stream.normal_vec(len)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn scale(self, alpha: f64) -> Self {
        self * alpha
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn random_vec(stream: &mut NormalStream, len: usize) -> Vec<Self> {
        stream.complex_normal_vec(len)
    }
}

/// A linear map together with its adjoint.
pub trait LinearOperator: Sync {
    type Elem: Scalar;

    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[Self::Elem], out: &mut [Self::Elem]);
    /// `out = A^H y`
    fn apply_adjoint(&self, y: &[Self::Elem], out: &mut [Self::Elem]);
}

impl LinearOperator for DenseMatrix {
    type Elem = f64;

    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_into(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.matvec_t_into(y, out)
    }
}

impl LinearOperator for ComplexMatrix {
    type Elem = Complex64;

    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.matvec_into(x, out)
    }
    fn apply_adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        self.matvec_h_into(y, out)
    }
}

/// Stopping parameters for [`spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterOptions {
    /// Relative tolerance on both the change in sigma and the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random unit starting vector.
    pub seed: u64,
}

impl Default for PowerIterOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

impl PowerIterOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Spectral norm with the unit singular pair attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate<T = f64> {
    pub sigma: f64,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `|M v - sigma u|`
    pub residual: f64,
}

pub(crate) fn norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.abs_sqr()).sum::<f64>().sqrt()
}

fn normalize_in_place<T: Scalar>(x: &mut [T]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        let inv = 1.0 / n;
        x.iter_mut().for_each(|v| *v = v.scale(inv));
    }
    n
}

fn distance<T: Scalar>(a: &[T], b: &[T], b_scale: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - y.scale(b_scale)).abs_sqr())
        .sum::<f64>()
        .sqrt()
}

fn unit_vector<T: Scalar>(len: usize, index: usize) -> Vec<T> {
    let mut e = vec![T::zero(); len];
    e[index] = T::one();
    e
}

/// Runs power iteration from an explicit starting vector `v0`.
///
/// A zero operator (or a start in its null space) yields `sigma = 0` and is
/// reported as converged.
pub fn power_iteration<A: LinearOperator + ?Sized>(
    op: &A,
    v0: Vec<A::Elem>,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralEstimate<A::Elem>> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let (rows, cols) = (op.nrows(), op.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("operator must be non-empty".into()));
    }
    if v0.len() != cols {
        return Err(Error::Shape(format!(
            "start vector has length {}, operator has {cols} columns",
            v0.len()
        )));
    }
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("start vector contains non-finite entries".into()));
    }

    let mut v = v0;
    if normalize_in_place(&mut v) == 0.0 {
        return Err(Error::Precondition("start vector must be nonzero".into()));
    }
    let mut u = vec![A::Elem::zero(); rows];
    let mut w = vec![A::Elem::zero(); rows];
    op.apply(&v, &mut w);

    let mut sigma = f64::NAN;
    let mut prev = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let s1 = norm(&w);
        if !s1.is_finite() {
            return Err(Error::Domain("operator produced non-finite values".into()));
        }
        if s1 == 0.0 {
            return Ok(SpectralEstimate {
                sigma: 0.0,
                u: unit_vector(rows, 0),
                v,
                iterations,
                converged: true,
                residual: 0.0,
            });
        }
        u.copy_from_slice(&w);
        u.iter_mut().for_each(|x| *x = x.scale(1.0 / s1));

        op.apply_adjoint(&u, &mut v);
        sigma = normalize_in_place(&mut v);

        op.apply(&v, &mut w);
        residual = distance(&w, &u, sigma);

        if (sigma - prev).abs() <= tol * sigma && residual <= tol * sigma {
            converged = true;
            break;
        }
        prev = sigma;
    }

    if iterations == 0 {
        // max_iter == 0: report the start vector's Rayleigh-style estimate.
        let s1 = norm(&w);
        if s1 > 0.0 {
            u.copy_from_slice(&w);
            u.iter_mut().for_each(|x| *x = x.scale(1.0 / s1));
        }
        sigma = s1;
        residual = 0.0;
    }

    Ok(SpectralEstimate {
        sigma,
        u,
        v,
        iterations,
        converged,
        residual,
    })
}

/// Seeded random unit-direction start followed by [`power_iteration`].
pub fn spectral_norm_op<A: LinearOperator + ?Sized>(
    op: &A,
    opts: &PowerIterOptions,
) -> Result<SpectralEstimate<A::Elem>> {
    let mut stream = NormalStream::new(opts.seed);
    let v0 = A::Elem::random_vec(&mut stream, op.ncols());
    power_iteration(op, v0, opts.tol, opts.max_iter)
}

/// Spectral norm of a real dense matrix.
pub fn spectral_norm(m: &DenseMatrix, opts: &PowerIterOptions) -> Result<SpectralEstimate<f64>> {
    spectral_norm_op(m, opts)
}

/// Largest singular value of a complex matrix (iterates on `M^H M`).
pub fn spectral_norm_complex(
    m: &ComplexMatrix,
    opts: &PowerIterOptions,
) -> Result<SpectralEstimate<Complex64>> {
    spectral_norm_op(m, opts)
}

/// Singular-vector estimates carried across calls for warm-started
/// single-step power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma_last: f64,
}

impl PowerIterState {
    /// Random unit vectors of the right lengths.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut stream = NormalStream::new(seed);
        let mut v = stream.normal_vec(cols);
        let mut u = stream.normal_vec(rows);
        normalize_in_place(&mut v);
        normalize_in_place(&mut u);
        Self {
            u,
            v,
            sigma_last: 0.0,
        }
    }

    /// State with a given right vector (normalized); `u` starts as `e_0`.
    pub fn from_v(rows: usize, v: Vec<f64>) -> Result<Self> {
        let mut v = v;
        if normalize_in_place(&mut v) == 0.0 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("state vector must be finite and nonzero".into()));
        }
        Ok(Self {
            u: unit_vector(rows, 0),
            v,
            sigma_last: 0.0,
        })
    }

    pub fn from_estimate(est: &SpectralEstimate<f64>) -> Self {
        Self {
            u: est.u.clone(),
            v: est.v.clone(),
            sigma_last: est.sigma,
        }
    }
}

/// One warm-started power step: `u <- M v / |M v|`, `v <- M^T u / |M^T u|`,
/// `sigma = |M^T u|`.
pub fn warm_step<A: LinearOperator<Elem = f64> + ?Sized>(
    m: &A,
    state: &PowerIterState,
) -> Result<(f64, PowerIterState)> {
    if state.u.len() != m.nrows() || state.v.len() != m.ncols() {
        return Err(Error::Shape(format!(
            "state vectors ({}, {}) do not match {}x{} operator",
            state.u.len(),
            state.v.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let mut u = vec![0.0; m.nrows()];
    m.apply(&state.v, &mut u);
    if normalize_in_place(&mut u) == 0.0 {
        // v sits in the null space (e.g. M = 0): nothing to update.
        return Ok((0.0, PowerIterState { sigma_last: 0.0, ..state.clone() }));
    }
    let mut v = vec![0.0; m.ncols()];
    m.apply_adjoint(&u, &mut v);
    let sigma = normalize_in_place(&mut v);
    Ok((sigma, PowerIterState { u, v, sigma_last: sigma }))
}

/// `d sigma / d M = u v^T` for a simple top singular value.
pub fn grad_sigma_wrt_matrix(est: &SpectralEstimate<f64>) -> Result<DenseMatrix> {
    if !est.converged {
        return Err(Error::Precondition(
            "gradient needs a converged spectral estimate".into(),
        ));
    }
    DenseMatrix::outer(&est.u, &est.v)
}

/// Power iteration on `M - sigma1 u1 v1^T`, i.e. an estimate of the second
/// singular value given a converged top pair.
pub fn second_singular_value(
    m: &DenseMatrix,
    top: &SpectralEstimate<f64>,
    opts: &PowerIterOptions,
) -> Result<f64> {
    if m.rows().min(m.cols()) < 2 {
        return Ok(0.0);
    }
    let deflated = Deflated { m, top };
    Ok(spectral_norm_op(&deflated, &opts.with_seed(opts.seed.wrapping_add(0x5eed)))?.sigma)
}

struct Deflated<'a> {
    m: &'a DenseMatrix,
    top: &'a SpectralEstimate<f64>,
}

impl LinearOperator for Deflated<'_> {
    type Elem = f64;

    fn nrows(&self) -> usize {
        self.m.rows()
    }
    fn ncols(&self) -> usize {
        self.m.cols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.m.matvec_into(x, out);
        let proj: f64 = self.top.v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * self.top.sigma;
        out.iter_mut().zip(&self.top.u).for_each(|(o, ui)| *o -= proj * ui);
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.m.matvec_t_into(y, out);
        let proj: f64 = self.top.u.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() * self.top.sigma;
        out.iter_mut().zip(&self.top.v).for_each(|(o, vi)| *o -= proj * vi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> PowerIterOptions {
        PowerIterOptions::default()
    }

    fn circ5() -> DenseMatrix {
        let v = [1.0, 2.0, -1.0, 0.0, 0.0];
        DenseMatrix::from_fn(5, 5, |j, k| v[(k + 5 - j) % 5]).unwrap()
    }

    #[test]
    fn diagonal_case() {
        let est = spectral_norm(&DenseMatrix::diag(&[3.0, 1.0]).unwrap(), &opts()).unwrap();
        assert!(est.converged);
        assert!((est.sigma - 3.0).abs() <= 1e-12);
        assert!(est.residual <= opts().tol * est.sigma);
    }

    #[test]
    fn rank_one_closed_form() {
        let m = DenseMatrix::outer(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        let est = spectral_norm(&m, &opts()).unwrap();
        assert!((est.sigma - 125f64.sqrt()).abs() <= 1e-12 * 125f64.sqrt());
        assert!((est.sigma - 11.18034).abs() < 1e-5);
    }

    #[test]
    fn circulant_example() {
        let est = spectral_norm(&circ5(), &opts()).unwrap();
        assert!(est.converged);
        assert!((est.sigma - 2.76008).abs() <= 1e-4);
    }

    #[test]
    fn unit_vectors_and_attained_sigma() {
        let est = spectral_norm(&circ5(), &opts()).unwrap();
        assert!((norm(&est.u) - 1.0).abs() <= 1e-12);
        assert!((norm(&est.v) - 1.0).abs() <= 1e-12);
        let mv = circ5().matvec(&est.v);
        let utmv: f64 = est.u.iter().zip(&mv).map(|(a, b)| a * b).sum();
        assert!((utmv - est.sigma).abs() <= 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let est = spectral_norm(&DenseMatrix::zeros(3, 4), &opts()).unwrap();
        assert_eq!(est.sigma, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn non_converged_is_not_an_error() {
        let est = spectral_norm(&circ5(), &opts().with_max_iter(2)).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
        assert!(est.sigma > 0.0 && est.sigma <= 2.76008 + 1e-5);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(spectral_norm(&circ5(), &opts().with_tol(0.0)).is_err());
    }

    #[test]
    fn complex_matrix_norm() {
        // [[1, i], [0, 1]] has singular values (sqrt(5) +/- 1)/2.
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let m = ComplexMatrix::new(2, 2, vec![one, i, zero, one]).unwrap();
        let est = spectral_norm_complex(&m, &opts()).unwrap();
        assert!((est.sigma - (5f64.sqrt() + 1.0) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn warm_step_from_eigenvector() {
        let m = DenseMatrix::diag(&[3.0, 1.0]).unwrap();
        let state = PowerIterState::from_v(2, vec![1.0, 0.0]).unwrap();
        let (sigma, next) = warm_step(&m, &state).unwrap();
        assert_eq!(sigma, 3.0);
        assert_eq!(next.v, vec![1.0, 0.0]);
    }

    #[test]
    fn warm_step_converges() {
        let m = DenseMatrix::diag(&[3.0, 1.0]).unwrap();
        let mut state = PowerIterState::from_v(2, vec![1.0, 1.0]).unwrap();
        let mut sigma = 0.0;
        for _ in 0..25 {
            (sigma, state) = warm_step(&m, &state).unwrap();
            assert!((norm(&state.u) - 1.0).abs() < 1e-12);
            assert!((norm(&state.v) - 1.0).abs() < 1e-12);
        }
        assert!((sigma - 3.0).abs() <= 1e-9);
    }

    #[test]
    fn warm_step_shape_mismatch() {
        let m = DenseMatrix::diag(&[3.0, 1.0]).unwrap();
        let state = PowerIterState::random(2, 3, 0);
        assert!(matches!(warm_step(&m, &state), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_of_diagonal() {
        let est = spectral_norm(&DenseMatrix::diag(&[3.0, 1.0]).unwrap(), &opts()).unwrap();
        let g = grad_sigma_wrt_matrix(&est).unwrap();
        // Singular vectors are accurate to about the tolerance.
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, b) in g.values().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn gradient_of_rank_one() {
        let a = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let b = [0.6, 0.8];
        let m = DenseMatrix::outer(&a, &b).unwrap();
        let est = spectral_norm(&m, &opts()).unwrap();
        let g = grad_sigma_wrt_matrix(&est).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.get(i, j) - a[i] * b[j]).abs() <= 1e-12);
            }
        }
        assert!((g.frobenius_norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gradient_requires_convergence() {
        let est = spectral_norm(&circ5(), &opts().with_max_iter(1)).unwrap();
        assert!(matches!(grad_sigma_wrt_matrix(&est), Err(Error::Precondition(_))));
    }

    #[test]
    fn deflation_finds_second_value() {
        let m = DenseMatrix::diag(&[5.0, 2.0, 1.0]).unwrap();
        let top = spectral_norm(&m, &opts()).unwrap();
        let s2 = second_singular_value(&m, &top, &opts()).unwrap();
        assert!((s2 - 2.0).abs() < 1e-9);
    }
}
