//! Explicit Jacobian of a circular convolution, for brute-force checks on
//! small instances.
//!
//! `circ(v)` has first row `v` and each later row shifted right by one, so
//! `circ(v)[j, k] = v[(k - j) mod n]`. For an `n x n` matrix `A`, the doubly
//! block circulant `circ(A)` has block `(j, k)` equal to `circ(A[(k - j) mod n, :])`.
//! The Jacobian stacks `circ(K[c, d])` in a `c_out x c_in` block grid.

use crate::error::{Error, Result};
use crate::fft::pad_filter;
use crate::specnorm::{spectral_norm, PowerIterOptions, SpectralEstimate};
use crate::tensor::{DenseMatrix, Filter4D, FilterDims, InputGeometry};

/// Default limit on the number of entries of an explicit Jacobian (128 MiB of f64).
pub const DEFAULT_SIZE_CAP: u128 = 1 << 24;

pub fn circ_vector(v: &[f64]) -> Result<DenseMatrix> {
    let n = v.len();
    if n == 0 {
        return Err(Error::Shape("circulant of an empty vector".into()));
    }
    DenseMatrix::from_fn(n, n, |j, k| v[(k + n - j) % n])
}

pub fn circ_matrix(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "doubly block circulant needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    DenseMatrix::from_fn(n * n, n * n, |row, col| {
        let (j, r) = (row / n, row % n);
        let (k, s) = (col / n, col % n);
        a.get((k + n - j) % n, (s + n - r) % n)
    })
}

/// The `n^2 c_out x n^2 c_in` Jacobian with `vec(Y) = J vec(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub matrix: DenseMatrix,
    pub dims: FilterDims,
    pub n: usize,
}

impl JacobianMatrix {
    /// Flat filter index that entry `(row, col)` copies, or `None` for an
    /// entry that is zero for every filter of this shape.
    pub fn source_index(&self, row: usize, col: usize) -> Option<usize> {
        let n = self.n;
        let nn = n * n;
        let (c, rem) = (row / nn, row % nn);
        let (j, r) = (rem / n, rem % n);
        let (d, rem) = (col / nn, col % nn);
        let (k, s) = (rem / n, rem % n);
        let tap_row = (k + n - j) % n;
        let tap_col = (s + n - r) % n;
        (tap_row < self.dims.h && tap_col < self.dims.w).then(|| self.dims.index(c, d, tap_row, tap_col))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        self.matrix.write_csv(out)
    }
}

pub fn jacobian_entries(dims: FilterDims, n: usize) -> u128 {
    let nn = (n as u128) * (n as u128);
    nn * nn * dims.c_out as u128 * dims.c_in as u128
}

pub fn build_jacobian(filter: &Filter4D, geometry: InputGeometry) -> Result<JacobianMatrix> {
    build_jacobian_capped(filter, geometry, DEFAULT_SIZE_CAP)
}

pub fn build_jacobian_capped(filter: &Filter4D, geometry: InputGeometry, cap: u128) -> Result<JacobianMatrix> {
    let dims = filter.dims();
    geometry.check(dims)?;
    let entries = jacobian_entries(dims, geometry.n);
    if entries > cap {
        return Err(Error::SizeCap { entries, cap });
    }
    let padded = pad_filter(filter, geometry)?;
    let n = geometry.n;
    let nn = n * n;
    let mut matrix = DenseMatrix::zeros(dims.c_out * nn, dims.c_in * nn);
    for c in 0..dims.c_out {
        for d in 0..dims.c_in {
            let kernel = DenseMatrix::new(n, n, padded.slice(c, d).to_vec())?;
            let block = circ_matrix(&kernel)?;
            for i in 0..nn {
                for j in 0..nn {
                    matrix.set(c * nn + i, d * nn + j, block.get(i, j));
                }
            }
        }
    }
    Ok(JacobianMatrix {
        matrix,
        dims,
        n,
    })
}

pub fn oracle_sigma_max(jacobian: &JacobianMatrix, opts: &PowerIterOptions) -> Result<SpectralEstimate<f64>> {
    spectral_norm(&jacobian.matrix, opts)
}

/// How far a matrix-shaped gradient strays from the Jacobian's tie pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieViolation {
    /// Largest magnitude at an entry that is structurally zero.
    pub max_at_structural_zero: f64,
    /// Largest spread (max - min) among entries copying the same filter tap.
    pub max_tied_spread: f64,
}

pub fn tie_violation(jacobian: &JacobianMatrix, grad: &DenseMatrix) -> Result<TieViolation> {
    if grad.shape() != jacobian.matrix.shape() {
        return Err(Error::Shape("gradient shape differs from the Jacobian".into()));
    }
    let taps = jacobian.dims.len();
    let mut lo = vec![f64::INFINITY; taps];
    let mut hi = vec![f64::NEG_INFINITY; taps];
    let mut max_zero = 0.0f64;
    for i in 0..grad.rows() {
        for j in 0..grad.cols() {
            let g = grad.get(i, j);
            match jacobian.source_index(i, j) {
                Some(t) => {
                    lo[t] = lo[t].min(g);
                    hi[t] = hi[t].max(g);
                }
                None => max_zero = max_zero.max(g.abs()),
            }
        }
    }
    let spread = lo
        .iter()
        .zip(&hi)
        .filter(|(l, _)| l.is_finite())
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    Ok(TieViolation {
        max_at_structural_zero: max_zero,
        max_tied_spread: spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_filter;

    #[test]
    fn circulant_rows_shift_right() {
        let m = circ_vector(&[1.0, 2.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0, -1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 2.0, -1.0, 0.0]);
        assert_eq!(m.row(3), &[-1.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(m.row(4), &[2.0, -1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn trivial_circulants() {
        assert_eq!(circ_vector(&[7.0]).unwrap(), DenseMatrix::from_rows(&[&[7.0]]).unwrap());
        assert_eq!(circ_vector(&[1.0, 0.0, 0.0, 0.0]).unwrap(), DenseMatrix::identity(4));
        let mut delta = DenseMatrix::zeros(3, 3);
        delta.set(0, 0, 1.0);
        assert_eq!(circ_matrix(&delta).unwrap(), DenseMatrix::identity(9));
    }

    #[test]
    fn single_row_kernel_is_block_diagonal() {
        let mut a = DenseMatrix::zeros(5, 5);
        for (s, v) in [1.0, 2.0, -1.0, 0.0, 0.0].into_iter().enumerate() {
            a.set(0, s, v);
        }
        let big = circ_matrix(&a).unwrap();
        let small = circ_vector(&[1.0, 2.0, -1.0, 0.0, 0.0]).unwrap();
        for bj in 0..5 {
            for bk in 0..5 {
                for r in 0..5 {
                    for s in 0..5 {
                        let expected = if bj == bk { small.get(r, s) } else { 0.0 };
                        assert_eq!(big.get(bj * 5 + r, bk * 5 + s), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn doubly_circulant_index_formula() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64).unwrap();
        let big = circ_matrix(&a).unwrap();
        for j in 0..3 {
            for r in 0..3 {
                for k in 0..3 {
                    for s in 0..3 {
                        assert_eq!(big.get(j * 3 + r, k * 3 + s), a.get((k + 3 - j) % 3, (s + 3 - r) % 3));
                    }
                }
            }
        }
        assert!(matches!(circ_matrix(&DenseMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_filter_jacobian() {
        let l = Filter4D::new(FilterDims::new(1, 1, 1, 1), vec![-1.5]).unwrap();
        let j = build_jacobian(&l, InputGeometry::new(3)).unwrap();
        assert_eq!(j.matrix, DenseMatrix::identity(9).scaled(-1.5).unwrap());
    }

    #[test]
    fn size_cap_is_enforced() {
        let l = random_filter(FilterDims::new(64, 64, 3, 3), 0).unwrap();
        assert!(matches!(
            build_jacobian(&l, InputGeometry::new(64)),
            Err(Error::SizeCap { .. })
        ));
        let small = random_filter(FilterDims::new(2, 2, 2, 2), 0).unwrap();
        assert!(matches!(
            build_jacobian_capped(&small, InputGeometry::new(4), 100),
            Err(Error::SizeCap { entries: 1024, cap: 100 })
        ));
    }

    #[test]
    fn tied_entries_are_bit_identical() {
        let l = random_filter(FilterDims::new(2, 3, 2, 3), 8).unwrap();
        let j = build_jacobian(&l, InputGeometry::new(4)).unwrap();
        for row in 0..j.matrix.rows() {
            for col in 0..j.matrix.cols() {
                let expected = j.source_index(row, col).map_or(0.0, |t| l.values()[t]);
                assert_eq!(j.matrix.get(row, col).to_bits(), expected.to_bits());
            }
        }
    }
}
