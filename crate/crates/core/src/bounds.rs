//! Reshape bounds on the spectral norm of a circular convolution.
//!
//! Each of the four matrices below holds exactly the entries of the filter,
//! arranged so that every frequency matrix of the convolution factors as
//! `(unit-modulus phases) x M x (unit-modulus phases)` with phase blocks of
//! norm at most `sqrt(h w)`. Hence `sqrt(h w) |M|_2` bounds the layer's
//! spectral norm for any input size, and so does the minimum over the four.
//!
//! Layouts, with `L[:, :, k, l]` the `c_out x c_in` block at tap `(k, l)`:
//!
//! - `R` (`c_out h x c_in w`): block `(k, l)` is `L[:, :, k, l]`.
//! - `S` (`c_out w x c_in h`): block `(l, k)` is `L[:, :, k, l]`.
//! - `T` (`c_out x c_in h w`): blocks side by side in row-major `(k, l)` order.
//! - `U` (`c_out h w x c_in`): blocks stacked in row-major `(k, l)` order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::specnorm::{spectral_norm, PowerIterOptions, SpectralEstimate};
use crate::tensor::{DenseMatrix, Filter4D, FilterDims};

/// One of the four filter reshapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    R,
    S,
    T,
    U,
}

impl Branch {
    /// Tie-break priority order.
    pub const ALL: [Branch; 4] = [Branch::R, Branch::S, Branch::T, Branch::U];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn shape(self, dims: FilterDims) -> (usize, usize) {
        let FilterDims { c_out, c_in, h, w } = dims;
        match self {
            Branch::R => (c_out * h, c_in * w),
            Branch::S => (c_out * w, c_in * h),
            Branch::T => (c_out, c_in * h * w),
            Branch::U => (c_out * h * w, c_in),
        }
    }

    /// Position of filter entry `(c, d, k, l)` inside this reshape.
    #[inline]
    pub fn position(self, dims: FilterDims, c: usize, d: usize, k: usize, l: usize) -> (usize, usize) {
        let FilterDims { c_out, c_in, w, .. } = dims;
        match self {
            Branch::R => (k * c_out + c, l * c_in + d),
            Branch::S => (l * c_out + c, k * c_in + d),
            Branch::T => (c, (k * w + l) * c_in + d),
            Branch::U => ((k * w + l) * c_out + c, d),
        }
    }

    pub fn build(self, filter: &Filter4D) -> DenseMatrix {
        let dims = filter.dims();
        let (rows, cols) = self.shape(dims);
        let mut m = DenseMatrix::zeros(rows, cols);
        for c in 0..dims.c_out {
            for d in 0..dims.c_in {
                for k in 0..dims.h {
                    for l in 0..dims.w {
                        let (i, j) = self.position(dims, c, d, k, l);
                        m.set(i, j, filter.get(c, d, k, l));
                    }
                }
            }
        }
        m
    }

    /// Inverse of [`Branch::build`]: reads a matrix of this branch's shape
    /// back into filter layout.
    pub fn unbuild(self, dims: FilterDims, m: &DenseMatrix) -> Vec<f64> {
        assert_eq!(m.shape(), self.shape(dims), "matrix shape does not match branch");
        let mut out = vec![0.0; dims.len()];
        for (flat, slot) in out.iter_mut().enumerate() {
            let (c, d, k, l) = dims.unravel(flat);
            let (i, j) = self.position(dims, c, d, k, l);
            *slot = m.get(i, j);
        }
        out
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Branch::R => "R",
            Branch::S => "S",
            Branch::T => "T",
            Branch::U => "U",
        };
        f.write_str(s)
    }
}

pub fn build_r(filter: &Filter4D) -> DenseMatrix {
    Branch::R.build(filter)
}

pub fn build_s(filter: &Filter4D) -> DenseMatrix {
    Branch::S.build(filter)
}

pub fn build_t(filter: &Filter4D) -> DenseMatrix {
    Branch::T.build(filter)
}

pub fn build_u(filter: &Filter4D) -> DenseMatrix {
    Branch::U.build(filter)
}

/// The four reshape norms, their scaled minimum and which reshape attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub norm_r: f64,
    pub norm_s: f64,
    pub norm_t: f64,
    pub norm_u: f64,
    /// `sqrt(h w)`
    pub scale: f64,
    pub bound: f64,
    pub argmin: Branch,
    /// Power-iteration results in `R, S, T, U` order.
    pub estimates: [SpectralEstimate<f64>; 4],
}

impl BoundReport {
    pub fn from_estimates(dims: FilterDims, estimates: [SpectralEstimate<f64>; 4]) -> Self {
        let scale = ((dims.h * dims.w) as f64).sqrt();
        let norms = estimates.each_ref().map(|e| e.sigma);
        let argmin = argmin_branch(norms);
        Self {
            norm_r: norms[0],
            norm_s: norms[1],
            norm_t: norms[2],
            norm_u: norms[3],
            scale,
            bound: scale * norms[argmin.index()],
            argmin,
            estimates,
        }
    }

    pub fn norms(&self) -> [f64; 4] {
        [self.norm_r, self.norm_s, self.norm_t, self.norm_u]
    }

    pub fn norm(&self, branch: Branch) -> f64 {
        self.norms()[branch.index()]
    }

    /// `sqrt(h w) |X|_2` for each branch.
    pub fn scaled_norms(&self) -> [f64; 4] {
        self.norms().map(|n| self.scale * n)
    }

    pub fn estimate(&self, branch: Branch) -> &SpectralEstimate<f64> {
        &self.estimates[branch.index()]
    }

    pub fn all_converged(&self) -> bool {
        self.estimates.iter().all(|e| e.converged)
    }
}

/// First branch (in `R, S, T, U` order) with the smallest norm.
pub fn argmin_branch(norms: [f64; 4]) -> Branch {
    let mut best = Branch::R;
    for b in Branch::ALL {
        if norms[b.index()] < norms[best.index()] {
            best = b;
        }
    }
    best
}

/// `sqrt(h w) min(|R|_2, |S|_2, |T|_2, |U|_2)`.
///
/// Each reshape is estimated with the same power-iteration options. The
/// result does not depend on the input size the filter is applied to.
pub fn compute_bound(filter: &Filter4D, opts: &PowerIterOptions) -> Result<BoundReport> {
    let estimates: Vec<SpectralEstimate<f64>> = Branch::ALL
        .iter()
        .map(|b| spectral_norm(&b.build(filter), opts))
        .collect::<Result<_>>()?;
    let estimates: [SpectralEstimate<f64>; 4] = estimates.try_into().expect("four branches");
    Ok(BoundReport::from_estimates(filter.dims(), estimates))
}
