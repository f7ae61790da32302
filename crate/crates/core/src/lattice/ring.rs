//! Arithmetic in `Z_q[X] / (X^N + 1)`.

use crate::error::{param, Result};

/// Ring parameters: degree `N` (a power of two) and an odd prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ring {
    pub n: usize,
    pub q: u32,
}

pub type Poly = Vec<u32>;

pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Number of bits needed to write residues mod `q`.
pub fn log2_ceil(q: u32) -> u32 {
    32 - (q - 1).leading_zeros()
}

impl Ring {
    pub fn new(n: usize, q: u32) -> Result<Self> {
        if !n.is_power_of_two() || n > 16 {
            return Err(param(format!(
                "ring degree {n} must be a power of two at most 16"
            )));
        }
        if q < 3 || !is_prime(q) || q > u16::MAX as u32 {
            return Err(param(format!(
                "modulus {q} must be an odd prime below 2^16"
            )));
        }
        Ok(Ring { n, q })
    }

    pub fn zero(&self) -> Poly {
        vec![0; self.n]
    }

    pub fn reduce(&self, v: i64) -> u32 {
        v.rem_euclid(self.q as i64) as u32
    }

    /// Representative in `(−q/2, q/2]`.
    pub fn center(&self, v: u32) -> i64 {
        let v = v as i64;
        let q = self.q as i64;
        if v > q / 2 {
            v - q
        } else {
            v
        }
    }

    pub fn add(&self, a: &[u32], b: &[u32]) -> Poly {
        a.iter().zip(b).map(|(&x, &y)| (x + y) % self.q).collect()
    }

    pub fn sub(&self, a: &[u32], b: &[u32]) -> Poly {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x + self.q - y) % self.q)
            .collect()
    }

    pub fn scale(&self, a: &[u32], c: i64) -> Poly {
        a.iter().map(|&x| self.reduce(x as i64 * c)).collect()
    }

    /// Negacyclic product.
    pub fn mul(&self, a: &[u32], b: &[u32]) -> Poly {
        let n = self.n;
        let mut acc = vec![0i64; n];
        for i in 0..n {
            if a[i] == 0 {
                continue;
            }
            for j in 0..n {
                let p = a[i] as i64 * b[j] as i64;
                let k = i + j;
                if k < n {
                    acc[k] += p;
                } else {
                    acc[k - n] -= p;
                }
            }
        }
        acc.into_iter().map(|v| self.reduce(v)).collect()
    }

    /// `Σ_i a_i · x` for a vector of ring elements, returning the vector.
    pub fn mul_vec(&self, a: &[Poly], x: &[u32]) -> Vec<Poly> {
        a.iter().map(|ai| self.mul(ai, x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_to_the_n_is_minus_one() {
        let r = Ring::new(4, 17).unwrap();
        let x = vec![0, 1, 0, 0];
        let x3 = vec![0, 0, 0, 1];
        assert_eq!(r.mul(&x, &x3), vec![16, 0, 0, 0]);
    }

    #[test]
    fn multiplication_is_commutative_and_distributes() {
        let r = Ring::new(8, 257).unwrap();
        let a: Poly = (0..8).map(|i| (i * 37 + 5) % 257).collect();
        let b: Poly = (0..8).map(|i| (i * i * 11 + 3) % 257).collect();
        let c: Poly = (0..8).map(|i| (200 - i * 9) % 257).collect();
        assert_eq!(r.mul(&a, &b), r.mul(&b, &a));
        assert_eq!(
            r.mul(&a, &r.add(&b, &c)),
            r.add(&r.mul(&a, &b), &r.mul(&a, &c))
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Ring::new(6, 17).is_err());
        assert!(Ring::new(4, 15).is_err());
        assert!(Ring::new(32, 17).is_err());
        assert_eq!(log2_ceil(257), 9);
        assert_eq!(log2_ceil(13), 4);
    }
}
