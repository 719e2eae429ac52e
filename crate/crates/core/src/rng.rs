//! Portable seeded random numbers.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (the reference
//! `seed_from_u64` expansion). Uniforms take the top 53 bits of each output,
//! `u = (x >> 11) * 2^-53`, and normals use the Box-Muller transform on
//! consecutive uniform pairs `(u1, u2)`:
//!
//! ```text
//! r = sqrt(-2 ln(1 - u1)),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)
//! ```
//!
//! Both `z0` and `z1` are used, in that order. Any language with the same
//! three pieces reproduces the same streams.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::tensor::{Filter4D, FilterDims};

/// Seeded source of uniform and standard-normal variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    pub fn complex_normal_vec(&mut self, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|_| {
                let re = self.normal();
                Complex64::new(re, self.normal())
            })
            .collect()
    }
}

/// Filter with i.i.d. standard-normal entries drawn in storage order.
pub fn random_filter(dims: FilterDims, seed: u64) -> Result<Filter4D> {
    dims.validate()?;
    let mut stream = NormalStream::new(seed);
    Filter4D::new(dims, stream.normal_vec(dims.len()))
}
