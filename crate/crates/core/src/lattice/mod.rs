//! A reduced-parameter noisy claw-free family built on ring-LWE with a
//! gadget trapdoor.
//!
//! The key is `(a, u = a·s + e)` with `a ∈ R_q^m`. The image distribution of
//! `(b, x)` is a truncated Gaussian of width `B_P` centered at `a·x + b·u`.
//! The trapdoor decodes `y ≈ a·(x + b·s)` to recover both preimages. The
//! idealized distribution is centered at `a·x + b·a·s`; it differs from the
//! sampled one by the key error `e`, whose width is `B_V`.
//!
//! These parameters offer no security. They exist to exercise the noisy
//! family's interface at sizes where supports can be enumerated.

mod gauss;
mod ntcf;
mod ring;
mod trapdoor;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

pub use gauss::{gauss_density, gauss_sample, Gauss1, GaussParams};
pub use ntcf::{
    hellinger_gap, hellinger_gap_factorized, ntcf_eval_density, ntcf_gen, ntcf_invert, LatticeKey,
    LatticePair, LatticeTrapdoor, MAX_SUPPORT,
};
pub use ring::{is_prime, log2_ceil, Poly, Ring};
pub use trapdoor::{c_t, gen_trap, invert, Gadget, Tau};

/// A complete parameter set for the noisy family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    /// Ring degree `N`.
    pub ring_n: usize,
    /// Modulus `q`.
    pub q: u32,
    /// Number of ring elements in the key.
    pub m: usize,
    /// Width of the image noise.
    pub b_p: f64,
    /// Width of the key error.
    pub b_v: f64,
    /// Bound for the average Hellinger gap between ideal and sampled images.
    pub mu: f64,
}

impl LatticeParams {
    /// `N = 8, q = 257, m = 11, B_P = 2, B_V = 0`.
    pub const DESK: LatticeParams = LatticeParams {
        ring_n: 8,
        q: 257,
        m: 11,
        b_p: 2.0,
        b_v: 0.0,
        mu: 0.05,
    };
    /// `N = 1, q = 13, m = 6, B_P = 1, B_V = 0`: small enough for full
    /// statevector simulation.
    pub const MICRO: LatticeParams = LatticeParams {
        ring_n: 1,
        q: 13,
        m: 6,
        b_p: 1.0,
        b_v: 0.0,
        mu: 0.05,
    };
    /// `N = 1, q = 31, m = 7, B_P = 2, B_V = 1`: a nonzero key error with
    /// enumerable supports, for the Hellinger-gap clause.
    pub const GAP: LatticeParams = LatticeParams {
        ring_n: 1,
        q: 31,
        m: 7,
        b_p: 2.0,
        b_v: 1.0,
        mu: 0.5,
    };

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::DESK),
            "micro" => Ok(Self::MICRO),
            "gap" => Ok(Self::GAP),
            _ => Err(param(format!("unknown lattice preset '{name}'"))),
        }
    }

    pub fn ring(&self) -> Result<Ring> {
        Ring::new(self.ring_n, self.q)
    }

    /// Gadget length `k = ⌈log2 q⌉`.
    pub fn k(&self) -> usize {
        log2_ceil(self.q) as usize
    }

    /// Bits of the encoded input `x ∈ R_q`.
    pub fn input_bits(&self) -> u32 {
        (self.ring_n * self.k()) as u32
    }

    /// Bits of a packed image in `R_q^m`.
    pub fn image_bits(&self) -> u32 {
        (self.m * self.ring_n * self.k()) as u32
    }

    /// Per-position error norm the trapdoor must correct.
    pub fn required_radius(&self) -> f64 {
        (self.b_p.floor() + self.b_v.floor()) * (self.m as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        self.ring()?;
        if self.m < self.k() + 2 {
            return Err(param(format!(
                "m = {} must be at least ⌈log2 q⌉ + 2",
                self.m
            )));
        }
        if self.input_bits() > 128 {
            return Err(param("encoded inputs must fit in 128 bits"));
        }
        let n_dim = self.m * self.ring_n;
        GaussParams {
            n_dim,
            q: self.q,
            b: self.b_p,
        }
        .validate()?;
        GaussParams {
            n_dim,
            q: self.q,
            b: self.b_v,
        }
        .validate()?;
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(param("μ must lie in [0, 1]"));
        }
        Ok(())
    }
}
