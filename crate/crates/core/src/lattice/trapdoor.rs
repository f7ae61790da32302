//! Gadget-based trapdoor for ring-LWE samples.
//!
//! The public vector is `a = (ā_1, …, ā_m̄, a_g[0], …, a_g[k−1])` with
//! `a_g[j] = 2^j − Σ_i R_ij ā_i`, where the `R_ij ∈ {−1, 0, 1}` are integer
//! scalars forming the trapdoor. For `y = a·s + e` the combination
//! `c_j = y_g[j] + Σ_i R_ij ȳ_i` equals `2^j·s + (e_g + Rᵀē)_j`, which is a
//! noisy codeword of the powers-of-two gadget in every coefficient position.
//! Each position is decoded by exhaustive nearest-codeword search over `Z_q`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ring::{log2_ceil, Poly, Ring};
use crate::error::{param, Result};

/// The powers-of-two gadget `g = (1, 2, …, 2^{k−1})` over `Z_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gadget {
    q: u32,
    k: usize,
    codewords: Vec<Vec<i64>>,
    d_min: f64,
}

fn centered(v: i64, q: i64) -> i64 {
    let r = v.rem_euclid(q);
    if r > q / 2 {
        r - q
    } else {
        r
    }
}

impl Gadget {
    pub fn new(q: u32) -> Self {
        let k = log2_ceil(q) as usize;
        let qi = q as i64;
        let codewords: Vec<Vec<i64>> = (0..qi)
            .map(|t| (0..k).map(|j| centered(t << j, qi)).collect())
            .collect();
        let d_min = codewords[1..]
            .iter()
            .map(|c| c.iter().map(|v| (v * v) as f64).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        Gadget {
            q,
            k,
            codewords,
            d_min,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Minimum centered ℓ2 norm of a nonzero codeword.
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Nearest codeword to `c` (length `k`), with its squared distance.
    pub fn decode(&self, c: &[u32]) -> (u32, i64) {
        let qi = self.q as i64;
        let mut best = (0u32, i64::MAX);
        for (t, cw) in self.codewords.iter().enumerate() {
            let mut dist = 0i64;
            for j in 0..self.k {
                let diff = centered(c[j] as i64 - cw[j], qi);
                dist += diff * diff;
                if dist >= best.1 {
                    break;
                }
            }
            if dist < best.1 {
                best = (t as u32, dist);
            }
        }
        best
    }
}

/// Trapdoor matrix `R` (row-major, `m̄ × k`) and its decoding radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub m_bar: usize,
    pub k: usize,
    pub r: Vec<i8>,
}

impl Tau {
    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.r[i * self.k + j] as i64
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.r.iter().map(|&v| (v as i64 * v as i64) as f64).sum()
    }

    /// Per-position error norm below which decoding is guaranteed.
    ///
    /// The error seen by the gadget decoder is `[Rᵀ | I]·e`, whose norm is at
    /// most `√(1 + ‖R‖_F²)·‖e‖`; unique decoding needs it below `d_min/2`.
    pub fn radius(&self, gadget: &Gadget) -> f64 {
        gadget.d_min() / (2.0 * (1.0 + self.frobenius_sq()).sqrt())
    }
}

/// Samples `(a, τ)` with decoding radius strictly above `required`.
pub fn gen_trap<R: Rng + ?Sized>(
    ring: &Ring,
    m: usize,
    required: f64,
    rng: &mut R,
) -> Result<(Vec<Poly>, Tau)> {
    let gadget = Gadget::new(ring.q);
    let k = gadget.k();
    if m < k + 2 {
        return Err(param(format!(
            "m = {m} must be at least ⌈log2 q⌉ + 2 = {}",
            k + 2
        )));
    }
    if gadget.d_min() / 2.0 <= required {
        return Err(param(format!(
            "gadget half-distance {:.3} does not exceed the required radius {required:.3}",
            gadget.d_min() / 2.0
        )));
    }
    let m_bar = m - k;
    let a_bar: Vec<Poly> = (0..m_bar)
        .map(|_| (0..ring.n).map(|_| rng.random_range(0..ring.q)).collect())
        .collect();
    let tau = loop {
        let r: Vec<i8> = (0..m_bar * k)
            .map(|_| match rng.random_range(0..8u8) {
                0 => 1,
                1 => -1,
                _ => 0,
            })
            .collect();
        let tau = Tau { m_bar, k, r };
        if tau.radius(&gadget) > required {
            break tau;
        }
    };
    let mut a = a_bar.clone();
    for j in 0..k {
        let mut g = ring.zero();
        g[0] = ring.reduce(1i64 << j);
        for (i, ai) in a_bar.iter().enumerate() {
            let rij = tau.entry(i, j);
            if rij != 0 {
                g = ring.sub(&g, &ring.scale(ai, rij));
            }
        }
        a.push(g);
    }
    Ok((a, tau))
}

/// Recovers `s` from `y ≈ a·s`. The answer is re-checked: the residual
/// `y − a·s` must be below the decoding radius in every coefficient
/// position, otherwise `None` is returned.
pub fn invert(ring: &Ring, a: &[Poly], tau: &Tau, y: &[Poly]) -> Option<Poly> {
    let gadget = Gadget::new(ring.q);
    invert_with(ring, &gadget, a, tau, y)
}

pub(crate) fn invert_with(
    ring: &Ring,
    gadget: &Gadget,
    a: &[Poly],
    tau: &Tau,
    y: &[Poly],
) -> Option<Poly> {
    let (m_bar, k) = (tau.m_bar, tau.k);
    if y.len() != m_bar + k || a.len() != m_bar + k {
        return None;
    }
    let mut s = ring.zero();
    let mut c = vec![0u32; k];
    for pos in 0..ring.n {
        for (j, cj) in c.iter_mut().enumerate() {
            let mut v = y[m_bar + j][pos] as i64;
            for i in 0..m_bar {
                v += tau.entry(i, j) * y[i][pos] as i64;
            }
            *cj = ring.reduce(v);
        }
        s[pos] = gadget.decode(&c).0;
    }
    let radius = tau.radius(gadget);
    let residual: Vec<Poly> = a
        .iter()
        .zip(y)
        .map(|(ai, yi)| ring.sub(yi, &ring.mul(ai, &s)))
        .collect();
    for pos in 0..ring.n {
        let norm_sq: f64 = residual
            .iter()
            .map(|r| (ring.center(r[pos]).pow(2)) as f64)
            .sum();
        if norm_sq.sqrt() >= radius {
            return None;
        }
    }
    Some(s)
}

/// The constant `C_T` for which the guaranteed radius equals
/// `q / (C_T √(N log2 q))`.
pub fn c_t(ring: &Ring, radius: f64) -> f64 {
    ring.q as f64 / (radius * (ring.n as f64 * (ring.q as f64).log2()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    #[test]
    fn gadget_minimum_distances() {
        assert!((Gadget::new(257).d_min() - 147.80).abs() < 0.01);
        assert!((Gadget::new(31).d_min() - 17.61).abs() < 0.01);
        assert!((Gadget::new(13).d_min() - 6.78).abs() < 0.01);
    }

    #[test]
    fn zero_error_inverts() {
        let ring = Ring::new(8, 257).unwrap();
        let mut rng = trial_rng(3, 0);
        let (a, tau) = gen_trap(&ring, 11, 10.0, &mut rng).unwrap();
        let s: Poly = (0..8).map(|i| (i * 31 + 7) % 257).collect();
        let y: Vec<Poly> = a.iter().map(|ai| ring.mul(ai, &s)).collect();
        assert_eq!(invert(&ring, &a, &tau, &y), Some(s));
    }

    #[test]
    fn too_small_m_is_rejected() {
        let ring = Ring::new(4, 257).unwrap();
        assert!(gen_trap(&ring, 10, 1.0, &mut trial_rng(0, 0)).is_err());
    }
}
