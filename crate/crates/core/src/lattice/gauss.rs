//! Truncated discrete Gaussian over `Z_q^n`.
//!
//! The density is proportional to `exp(−π‖x‖²/B²)`. Truncation is applied
//! per coordinate (`|x_i| ≤ ⌊B⌋`), so the normalizer factors into a product
//! of one-dimensional sums. Every point of the box also satisfies the
//! Euclidean bound `‖x‖ ≤ B√n`. `B = 0` gives the point mass at the origin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distances::KahanSum;
use crate::error::{domain, param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussParams {
    pub n_dim: usize,
    pub q: u32,
    pub b: f64,
}

impl GaussParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(param("dimension must be positive"));
        }
        if !self.b.is_finite() || self.b < 0.0 {
            return Err(param(format!(
                "width {} must be finite and nonnegative",
                self.b
            )));
        }
        if self.b * (self.n_dim as f64).sqrt() >= self.q as f64 / 2.0 {
            return Err(param("B·√n must stay below q/2"));
        }
        Ok(())
    }

    /// Largest coordinate magnitude in the support.
    pub fn bound(&self) -> i64 {
        self.b.floor() as i64
    }
}

/// One coordinate of the truncated Gaussian, tabulated on `[−⌊B⌋, ⌊B⌋]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauss1 {
    bound: i64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Gauss1 {
    pub fn new(b: f64) -> Self {
        let bound = b.floor() as i64;
        let weights: Vec<f64> = (-bound..=bound)
            .map(|t| {
                if b == 0.0 {
                    1.0
                } else {
                    (-std::f64::consts::PI * (t * t) as f64 / (b * b)).exp()
                }
            })
            .collect();
        let z: f64 = weights.iter().copied().collect::<KahanSum>().value();
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Gauss1 { bound, probs, cdf }
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn prob(&self, t: i64) -> f64 {
        if t.abs() > self.bound {
            0.0
        } else {
            self.probs[(t + self.bound) as usize]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.probs.len() - 1);
        i as i64 - self.bound
    }

    /// Number of support points.
    pub fn width(&self) -> usize {
        self.probs.len()
    }
}

/// Density at a centered vector; 0 outside the support.
pub fn gauss_density(p: &GaussParams, x: &[i64]) -> Result<f64> {
    p.validate()?;
    if x.len() != p.n_dim {
        return Err(domain(format!(
            "expected {} coordinates, got {}",
            p.n_dim,
            x.len()
        )));
    }
    let half = p.q as i64 / 2;
    if x.iter().any(|&v| v < -half || v > half) {
        return Err(domain("coordinates must be centered representatives"));
    }
    let g = Gauss1::new(p.b);
    Ok(x.iter().map(|&v| g.prob(v)).product())
}

/// Draws a centered vector.
pub fn gauss_sample<R: Rng + ?Sized>(p: &GaussParams, rng: &mut R) -> Result<Vec<i64>> {
    p.validate()?;
    let g = Gauss1::new(p.b);
    Ok((0..p.n_dim).map(|_| g.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    #[test]
    fn origin_is_the_mode_and_density_is_symmetric() {
        let p = GaussParams {
            n_dim: 2,
            q: 17,
            b: 2.5,
        };
        let d0 = gauss_density(&p, &[0, 0]).unwrap();
        for x in -2..=2 {
            for y in -2..=2 {
                let d = gauss_density(&p, &[x, y]).unwrap();
                assert!(d <= d0);
                assert_eq!(d, gauss_density(&p, &[-x, -y]).unwrap());
            }
        }
        assert_eq!(gauss_density(&p, &[3, 0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_width_is_a_point_mass() {
        let p = GaussParams {
            n_dim: 3,
            q: 17,
            b: 0.0,
        };
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(gauss_sample(&p, &mut rng).unwrap(), vec![0, 0, 0]);
        }
        assert_eq!(gauss_density(&p, &[0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(GaussParams {
            n_dim: 4,
            q: 17,
            b: 5.0
        }
        .validate()
        .is_err());
        assert!(GaussParams {
            n_dim: 1,
            q: 17,
            b: -1.0
        }
        .validate()
        .is_err());
        assert!(gauss_density(
            &GaussParams {
                n_dim: 1,
                q: 17,
                b: 2.0
            },
            &[0, 0]
        )
        .is_err());
    }
}
