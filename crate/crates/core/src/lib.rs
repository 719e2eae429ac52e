//! Provable upper bounds on the spectral norm of 2D multi-channel circular
//! convolutions, plus exact reference methods.
//!
//! The bound is `sqrt(h w) * min(|R|_2, |S|_2, |T|_2, |U|_2)` where `R, S, T, U`
//! are reshapes of the `c_out x c_in x h x w` filter ([`bounds`]). It does not
//! depend on the input size and is differentiable ([`grad`]). Three exact
//! methods serve as references: the frequency decomposition ([`fft`]), power
//! iteration with the convolution and its adjoint ([`conv`]), and the explicit
//! doubly block circulant Jacobian ([`oracle`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod conv;
pub mod error;
pub mod fft;
pub mod grad;
pub mod io;
pub mod oracle;
pub mod regdemo;
pub mod rng;
pub mod specnorm;
pub mod tensor;

pub use bounds::{compute_bound, Branch, BoundReport};
pub use conv::{conv_adjoint, conv_forward, exact_norm_matfree, ImageTensor};
pub use error::{Error, Result};
pub use fft::exact_norm_fft;
pub use grad::{finite_diff_check, grad_bound, warm_grad_step, BoundGradient, WarmStates};
pub use io::{load_filter, save_filter, FilterFormat};
pub use oracle::{build_jacobian, oracle_sigma_max, JacobianMatrix};
pub use rng::random_filter;
pub use specnorm::{spectral_norm, PowerIterOptions, SpectralEstimate};
pub use tensor::{ComplexMatrix, DenseMatrix, Filter4D, FilterDims, InputGeometry};
