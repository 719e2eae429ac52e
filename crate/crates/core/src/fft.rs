//! Exact spectral norm of a circular convolution from its frequency
//! decomposition.
//!
//! Zero-padding the filter to `n x n` and taking the unnormalized 2D DFT of
//! every `(c, d)` slice, `G[j,k][c,d] = (F^T K[c,d] F)[j,k]` with
//! `F[a,b] = w^(a b)`, `w = exp(-2 pi i / n)`, block-diagonalizes the layer's
//! Jacobian. Its singular values are the union of those of the `n^2`
//! matrices `G[j,k]`, so the spectral norm is the largest of their norms.
//!
//! The DFT is applied as a dense matrix product, never through a fast
//! transform, and carries no `1/sqrt(n)` factor.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::specnorm::{spectral_norm_complex, PowerIterOptions};
use crate::tensor::{ComplexMatrix, Filter4D, FilterDims, InputGeometry};

/// Filter zero-padded to the input size: `K[c,d,k,l] = L[c,d,k,l]` for
/// `k < h, l < w`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedFilter {
    base: Filter4D,
    n: usize,
    values: Vec<f64>,
}

impl PaddedFilter {
    pub fn base(&self) -> &Filter4D {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, k: usize, l: usize) -> f64 {
        let dims = self.base.dims();
        self.values[((c * dims.c_in + d) * self.n + k) * self.n + l]
    }

    /// The `n x n` slice `K[c, d, :, :]`, row-major.
    pub fn slice(&self, c: usize, d: usize) -> &[f64] {
        let nn = self.n * self.n;
        let start = (c * self.base.dims().c_in + d) * nn;
        &self.values[start..start + nn]
    }
}

pub fn pad_filter(filter: &Filter4D, geometry: InputGeometry) -> Result<PaddedFilter> {
    let dims = filter.dims();
    geometry.check(dims)?;
    let n = geometry.n;
    let mut values = vec![0.0; dims.c_out * dims.c_in * n * n];
    for c in 0..dims.c_out {
        for d in 0..dims.c_in {
            for k in 0..dims.h {
                for l in 0..dims.w {
                    values[((c * dims.c_in + d) * n + k) * n + l] = filter.get(c, d, k, l);
                }
            }
        }
    }
    Ok(PaddedFilter {
        base: filter.clone(),
        n,
        values,
    })
}

/// The unnormalized Fourier matrix `F[a,b] = exp(-2 pi i a b / n)`, row-major.
///
/// Exponents are reduced mod `n` before evaluating, so equal powers of the
/// root give bit-identical entries.
pub fn fourier_matrix(n: usize) -> Vec<Complex64> {
    let roots: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * m as f64 / n as f64))
        .collect();
    let mut f = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            f.push(roots[(a * b) % n]);
        }
    }
    f
}

/// `F^T A F` for a real `n x n` matrix `A`.
fn dft2(a: &[f64], fourier: &[Complex64], n: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    // tmp = F^T A: tmp[j][s] = sum_r F[r][j] A[r][s]
    let mut tmp = vec![zero; n * n];
    for r in 0..n {
        let arow = &a[r * n..(r + 1) * n];
        if arow.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in 0..n {
            let frj = fourier[r * n + j];
            let trow = &mut tmp[j * n..(j + 1) * n];
            for (t, &x) in trow.iter_mut().zip(arow) {
                *t += frj * x;
            }
        }
    }
    // G = tmp F: G[j][k] = sum_s tmp[j][s] F[s][k]
    let mut g = vec![zero; n * n];
    for j in 0..n {
        let trow = &tmp[j * n..(j + 1) * n];
        let grow = &mut g[j * n..(j + 1) * n];
        for (s, &t) in trow.iter().enumerate() {
            if t == zero {
                continue;
            }
            let frow = &fourier[s * n..(s + 1) * n];
            for (gk, &fsk) in grow.iter_mut().zip(frow) {
                *gk += t * fsk;
            }
        }
    }
    g
}

/// The `n^2` frequency matrices `G[j,k]` (each `c_out x c_in`), stored in
/// row-major `(j, k)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrixSet {
    n: usize,
    dims: FilterDims,
    matrices: Vec<ComplexMatrix>,
}

impl FrequencyMatrixSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> FilterDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, j: usize, k: usize) -> &ComplexMatrix {
        &self.matrices[j * self.n + k]
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }
}

pub fn frequency_matrices(padded: &PaddedFilter) -> FrequencyMatrixSet {
    let n = padded.n;
    let dims = padded.base.dims();
    let fourier = fourier_matrix(n);

    // One 2D DFT per channel pair, laid out as spectra[c * c_in + d][j * n + k].
    let spectra: Vec<Vec<Complex64>> = (0..dims.c_out * dims.c_in)
        .into_par_iter()
        .map(|cd| dft2(padded.slice(cd / dims.c_in, cd % dims.c_in), &fourier, n))
        .collect();

    let matrices = (0..n * n)
        .map(|freq| {
            let values = spectra.iter().map(|s| s[freq]).collect();
            ComplexMatrix::new(dims.c_out, dims.c_in, values).expect("finite DFT of finite filter")
        })
        .collect();

    FrequencyMatrixSet { n, dims, matrices }
}

/// Result of [`exact_norm_fft`].
#[derive(Debug, Clone, PartialEq)]
pub struct FftNorm {
    pub sigma: f64,
    /// Frequency `(j, k)` whose matrix attains the maximum.
    pub frequency: (usize, usize),
    pub all_converged: bool,
    /// Largest iteration count over the frequency matrices.
    pub max_iterations: usize,
}

/// Power-iteration norm of every frequency matrix, in `(j, k)` order.
pub fn frequency_norms(set: &FrequencyMatrixSet, opts: &PowerIterOptions) -> Result<Vec<(f64, bool, usize)>> {
    set.matrices
        .par_iter()
        .map(|g| {
            let est = spectral_norm_complex(g, opts)?;
            Ok((est.sigma, est.converged, est.iterations))
        })
        .collect()
}

/// Exact `|J|_2 = max_{j,k} sigma_max(G[j,k])`.
pub fn exact_norm_fft(filter: &Filter4D, geometry: InputGeometry, opts: &PowerIterOptions) -> Result<FftNorm> {
    let padded = pad_filter(filter, geometry)?;
    let set = frequency_matrices(&padded);
    let norms = frequency_norms(&set, opts)?;
    let mut best = 0;
    for (i, (s, _, _)) in norms.iter().enumerate() {
        if *s > norms[best].0 {
            best = i;
        }
    }
    Ok(FftNorm {
        sigma: norms[best].0,
        frequency: (best / set.n, best % set.n),
        all_converged: norms.iter().all(|(_, c, _)| *c),
        max_iterations: norms.iter().map(|(_, _, it)| *it).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::random_filter;

    fn opts() -> PowerIterOptions {
        PowerIterOptions::default()
    }

    #[test]
    fn padding_one_dimensional_filter() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 3), vec![1.0, 2.0, -1.0]).unwrap();
        let k = pad_filter(&l, InputGeometry::new(5)).unwrap();
        assert_eq!(&k.slice(0, 0)[..5], &[1.0, 2.0, -1.0, 0.0, 0.0]);
        assert!(k.slice(0, 0)[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_pointwise_filter() {
        let l = random_filter(FilterDims::new(2, 3, 1, 1), 4).unwrap();
        let k = pad_filter(&l, InputGeometry::new(4)).unwrap();
        for c in 0..2 {
            for d in 0..3 {
                let s = k.slice(c, d);
                assert_eq!(s[0], l.get(c, d, 0, 0));
                assert!(s[1..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn padding_rejects_small_input() {
        let l = random_filter(FilterDims::new(1, 1, 4, 2), 0).unwrap();
        assert!(matches!(
            pad_filter(&l, InputGeometry::new(3)),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn pointwise_filter_has_flat_spectrum() {
        let l = random_filter(FilterDims::new(2, 3, 1, 1), 2).unwrap();
        let set = frequency_matrices(&pad_filter(&l, InputGeometry::new(3)).unwrap());
        assert_eq!(set.len(), 9);
        for g in set.matrices() {
            for c in 0..2 {
                for d in 0..3 {
                    assert_eq!(g.get(c, d), Complex64::new(l.get(c, d, 0, 0), 0.0));
                }
            }
        }
    }

    #[test]
    fn all_ones_two_by_two_spectrum() {
        let l = Filter4D::new(FilterDims::new(1, 1, 2, 2), vec![1.0; 4]).unwrap();
        let set = frequency_matrices(&pad_filter(&l, InputGeometry::new(4)).unwrap());
        assert!((set.get(0, 0).get(0, 0) - Complex64::new(4.0, 0.0)).norm() <= 1e-12);
        assert!(set.get(2, 2).get(0, 0).norm() <= 1e-12);
        // (1 + w^j)(1 + w^k) with w = -i.
        let w = Complex64::new(0.0, -1.0);
        for j in 0..4 {
            for k in 0..4 {
                let expected = (1.0 + w.powu(j as u32)) * (1.0 + w.powu(k as u32));
                assert!((set.get(j, k).get(0, 0) - expected).norm() <= 1e-12);
            }
        }
        let exact = exact_norm_fft(&l, InputGeometry::new(4), &opts()).unwrap();
        assert!((exact.sigma - 4.0).abs() <= 1e-12);
        assert_eq!(exact.frequency, (0, 0));
    }

    #[test]
    fn worked_one_dimensional_example() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 3), vec![1.0, 2.0, -1.0]).unwrap();
        let exact = exact_norm_fft(&l, InputGeometry::new(5), &opts()).unwrap();
        assert!((exact.sigma - 2.76008).abs() <= 1e-4);
        assert!(exact.all_converged);
    }

    #[test]
    fn pointwise_filter_equals_matrix_norm() {
        let l = Filter4D::new(FilterDims::new(2, 2, 1, 1), vec![3.0, 0.0, 0.0, -1.0]).unwrap();
        let exact = exact_norm_fft(&l, InputGeometry::new(3), &opts()).unwrap();
        assert!((exact.sigma - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn fourier_matrix_is_unnormalized() {
        let f = fourier_matrix(4);
        assert_eq!(f[0], Complex64::new(1.0, 0.0));
        assert!((f[1 * 4 + 1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let col_norm: f64 = (0..4).map(|a| f[a * 4 + 3].norm_sqr()).sum::<f64>().sqrt();
        assert!((col_norm - 2.0).abs() < 1e-14);
    }
}
