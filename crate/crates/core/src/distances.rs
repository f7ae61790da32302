//! Statistical and quantum distances between finite distributions and pure
//! states.

use std::collections::BTreeMap;

use crate::error::{domain, Result};
use crate::qsim::{Label, SparseState};

/// Tolerance applied to caller-supplied normalizations.
pub const INPUT_TOL: f64 = 1e-9;
/// Tolerance for internal self-checks after renormalization.
pub const SELF_TOL: f64 = 1e-12;

/// Compensated (Kahan) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// A probability distribution over fixed-width byte-string labels.
///
/// Labels are kept in a sorted map so every sum iterates in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    width: usize,
    mass: BTreeMap<Vec<u8>, f64>,
}

impl Density {
    /// Builds a density, dropping zero-mass labels and renormalizing away
    /// rounding drift up to [`INPUT_TOL`].
    pub fn new(entries: impl IntoIterator<Item = (Vec<u8>, f64)>) -> Result<Self> {
        let mut mass = BTreeMap::new();
        let mut width = None;
        for (label, p) in entries {
            if !p.is_finite() || p < 0.0 {
                return Err(domain(format!("invalid mass {p}")));
            }
            match width {
                None => width = Some(label.len()),
                Some(w) if w != label.len() => {
                    return Err(domain("labels of a density must share one width"))
                }
                _ => {}
            }
            if p > 0.0 {
                *mass.entry(label).or_insert(0.0) += p;
            }
        }
        let total = kahan_sum(mass.values().copied());
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(domain(format!("masses sum to {total}, not 1")));
        }
        for p in mass.values_mut() {
            *p /= total;
        }
        let d = Density {
            width: width.unwrap_or(0),
            mass,
        };
        debug_assert!((d.total() - 1.0).abs() <= SELF_TOL);
        Ok(d)
    }

    /// Convenience constructor for single-byte labels `0..probs.len()`.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.len() > 256 {
            return Err(domain("from_probs supports at most 256 labels"));
        }
        Density::new(probs.iter().enumerate().map(|(i, &p)| (vec![i as u8], p)))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.mass.values().copied())
    }

    pub fn get(&self, label: &[u8]) -> f64 {
        self.mass.get(label).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, f64)> {
        self.mass.iter().map(|(k, &v)| (k, v))
    }

    /// The state `Σ √f(x) |x⟩` with labels read as little-endian integers.
    pub fn amplitude_state(&self) -> Result<SparseState<u64>> {
        if self.width > 8 {
            return Err(domain("labels wider than 8 bytes cannot be packed"));
        }
        let entries = self.mass.iter().map(|(label, &p)| {
            let mut word = [0u8; 8];
            word[..label.len()].copy_from_slice(label);
            (
                u64::from_le_bytes(word),
                num_complex::Complex64::new(p.sqrt(), 0.0),
            )
        });
        Ok(SparseState::from_entries(entries))
    }
}

fn unified_support<'a>(f1: &'a Density, f2: &'a Density) -> Result<Vec<&'a Vec<u8>>> {
    if !f1.is_empty() && !f2.is_empty() && f1.width != f2.width {
        return Err(domain(format!(
            "label widths {} and {} cannot be unified",
            f1.width, f2.width
        )));
    }
    let mut labels: Vec<&Vec<u8>> = f1.mass.keys().chain(f2.mass.keys()).collect();
    labels.sort();
    labels.dedup();
    Ok(labels)
}

/// Squared Hellinger distance `1 − Σ √(f1 f2)`.
pub fn hellinger_sq(f1: &Density, f2: &Density) -> Result<f64> {
    let labels = unified_support(f1, f2)?;
    let overlap = kahan_sum(labels.iter().map(|l| (f1.get(l) * f2.get(l)).sqrt()));
    Ok((1.0 - overlap).clamp(0.0, 1.0))
}

/// Total variation distance `½ Σ |f1 − f2|`.
pub fn tv_distance(f1: &Density, f2: &Density) -> Result<f64> {
    let labels = unified_support(f1, f2)?;
    let sum = kahan_sum(labels.iter().map(|l| (f1.get(l) - f2.get(l)).abs()));
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Upper bound `√(1 − (1 − H²)²)` on the trace distance between the
/// amplitude encodings of `f1` and `f2`.
pub fn superposition_trace_bound(f1: &Density, f2: &Density) -> Result<f64> {
    let h2 = hellinger_sq(f1, f2)?;
    let fid = 1.0 - h2;
    Ok((1.0 - fid * fid).max(0.0).sqrt())
}

/// Trace distance `√(1 − |⟨ψ1|ψ2⟩|²)` between two normalized pure states.
pub fn trace_distance_pure<K: Label>(psi1: &SparseState<K>, psi2: &SparseState<K>) -> Result<f64> {
    for (i, psi) in [psi1, psi2].into_iter().enumerate() {
        let n = psi.norm_sqr();
        if (n - 1.0).abs() > INPUT_TOL {
            return Err(domain(format!("state {} has squared norm {n}", i + 1)));
        }
    }
    let overlap = psi1.inner(psi2).norm_sqr();
    Ok((1.0 - overlap).clamp(0.0, 1.0).sqrt())
}

/// Total variation distance between two distributions given as sorted maps
/// with arbitrary ordered keys.
pub fn tv_maps<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut acc = KahanSum::new();
    for (k, &a) in p {
        acc.add((a - q.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, &b) in q {
        if !p.contains_key(k) {
            acc.add(b.abs());
        }
    }
    0.5 * acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> Density {
        Density::from_probs(&[a, b]).unwrap()
    }

    #[test]
    fn textbook_values() {
        let f1 = two(0.5, 0.5);
        let f2 = two(1.0, 0.0);
        let h2 = hellinger_sq(&f1, &f2).unwrap();
        assert!((h2 - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((tv_distance(&f1, &f2).unwrap() - 0.5).abs() < 1e-15);
        let bound = superposition_trace_bound(&f1, &f2).unwrap();
        assert!((bound - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let u = two(0.5, 0.5);
        assert_eq!(hellinger_sq(&u, &u).unwrap(), 0.0);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(superposition_trace_bound(&u, &u).unwrap(), 0.0);
        let a = two(1.0, 0.0);
        let b = two(0.0, 1.0);
        assert_eq!(hellinger_sq(&a, &b).unwrap(), 1.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(superposition_trace_bound(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Density::from_probs(&[0.5, 0.6]).is_err());
        assert!(Density::from_probs(&[1.5, -0.5]).is_err());
        let wide = Density::new(vec![(vec![0, 0], 1.0)]).unwrap();
        assert!(hellinger_sq(&wide, &two(1.0, 0.0)).is_err());
    }

    #[test]
    fn plus_versus_zero() {
        let plus = two(0.5, 0.5).amplitude_state().unwrap();
        let zero = two(1.0, 0.0).amplitude_state().unwrap();
        let td = trace_distance_pure(&plus, &zero).unwrap();
        assert!((td - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(trace_distance_pure(&plus, &plus).unwrap(), 0.0);
        let one = two(0.0, 1.0).amplitude_state().unwrap();
        assert_eq!(trace_distance_pure(&zero, &one).unwrap(), 1.0);
    }

    #[test]
    fn unnormalized_state_rejected() {
        let s = SparseState::from_entries([(0u64, num_complex::Complex64::new(0.5, 0.0))]);
        assert!(trace_distance_pure(&s, &s).is_err());
    }

    #[test]
    fn kahan_beats_naive() {
        let xs = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000));
        let k = kahan_sum(xs);
        assert!((k - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
