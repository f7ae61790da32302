use std::collections::hash_map::{DefaultHasher, Entry};
use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::{BuildHasherDefault, Hash};

use num_complex::Complex64;

use crate::distances::KahanSum;

/// Amplitudes below this magnitude are dropped from the map.
pub const PRUNE_EPS: f64 = 1e-12;

pub type C64 = Complex64;

pub(crate) type AmpMap<K> = HashMap<K, C64, BuildHasherDefault<DefaultHasher>>;

/// Anything usable as a basis label.
pub trait Label: Clone + Eq + Hash + Ord + Debug + Send + Sync {}
impl<T: Clone + Eq + Hash + Ord + Debug + Send + Sync> Label for T {}

/// Labels whose algorithm registers are packed into a `u64`.
pub trait Registers: Label {
    fn regs(&self) -> u64;
    fn with_regs(&self, regs: u64) -> Self;
}

impl Registers for u64 {
    fn regs(&self) -> u64 {
        *self
    }
    fn with_regs(&self, regs: u64) -> Self {
        regs
    }
}

/// Labels with a canonical hex rendering for state dumps.
pub trait HexLabel {
    fn to_hex(&self) -> String;
}

impl HexLabel for u64 {
    fn to_hex(&self) -> String {
        format!("{self:016x}")
    }
}

/// A pure state stored as a sparse map from basis labels to amplitudes.
///
/// The map uses a fixed-key hasher so that iteration order depends only on
/// the sequence of operations, which keeps floating-point reductions
/// reproducible across runs.
#[derive(Debug, Clone)]
pub struct SparseState<K: Label> {
    amps: AmpMap<K>,
    pruned_weight: f64,
}

impl<K: Label> Default for SparseState<K> {
    fn default() -> Self {
        Self {
            amps: AmpMap::default(),
            pruned_weight: 0.0,
        }
    }
}

impl<K: Label> PartialEq for SparseState<K> {
    fn eq(&self, other: &Self) -> bool {
        self.amps == other.amps
    }
}

impl<K: Label> SparseState<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn basis(label: K) -> Self {
        let mut s = Self::new();
        s.amps.insert(label, C64::new(1.0, 0.0));
        s
    }

    /// Sums duplicate labels and prunes negligible amplitudes.
    pub fn from_entries(entries: impl IntoIterator<Item = (K, C64)>) -> Self {
        let mut s = Self::new();
        for (k, a) in entries {
            s.add_amp(k, a);
        }
        s.prune();
        s
    }

    pub(crate) fn add_amp(&mut self, label: K, amp: C64) {
        match self.amps.entry(label) {
            Entry::Occupied(mut e) => *e.get_mut() += amp,
            Entry::Vacant(e) => {
                e.insert(amp);
            }
        }
    }

    /// Removes entries with magnitude below [`PRUNE_EPS`], recording the
    /// discarded weight for later audits.
    pub fn prune(&mut self) {
        let mut dropped = 0.0;
        self.amps.retain(|_, a| {
            let keep = a.norm() >= PRUNE_EPS;
            if !keep {
                dropped += a.norm_sqr();
            }
            keep
        });
        self.pruned_weight += dropped;
    }

    /// Total squared amplitude discarded by pruning so far.
    pub fn pruned_weight(&self) -> f64 {
        self.pruned_weight
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, label: &K) -> C64 {
        self.amps.get(label).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &C64)> {
        self.amps.iter()
    }

    /// Entries sorted by label.
    pub fn sorted(&self) -> Vec<(K, C64)> {
        let mut v: Vec<(K, C64)> = self.amps.iter().map(|(k, a)| (k.clone(), *a)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut entries: Vec<(&K, &C64)> = self.amps.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        entries
            .iter()
            .map(|(_, a)| a.norm_sqr())
            .collect::<KahanSum>()
            .value()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        let (small, large, conj_small) = if self.len() <= other.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut entries: Vec<(&K, &C64)> = small.amps.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut re = KahanSum::new();
        let mut im = KahanSum::new();
        for (k, a) in entries {
            if let Some(b) = large.amps.get(k) {
                let term = if conj_small {
                    a.conj() * b
                } else {
                    b.conj() * a
                };
                re.add(term.re);
                im.add(term.im);
            }
        }
        C64::new(re.value(), im.value())
    }

    /// `‖self − other‖²`.
    pub fn distance_sqr(&self, other: &Self) -> f64 {
        let mut acc = KahanSum::new();
        let mut keys: Vec<&K> = self.amps.keys().chain(other.amps.keys()).collect();
        keys.sort();
        keys.dedup();
        for k in keys {
            acc.add((self.amplitude(k) - other.amplitude(k)).norm_sqr());
        }
        acc.value()
    }

    pub fn scale(&mut self, c: C64) {
        for a in self.amps.values_mut() {
            *a *= c;
        }
        self.prune();
    }

    pub fn scaled(mut self, c: C64) -> Self {
        self.scale(c);
        self
    }

    /// Rescales to unit norm and returns the previous squared norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sqr();
        if n > 0.0 {
            self.scale(C64::new(1.0 / n.sqrt(), 0.0));
        }
        n
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// `self + c·other`.
    pub fn add_scaled(&mut self, other: &Self, c: C64) {
        for (k, a) in other.amps.iter() {
            self.add_amp(k.clone(), a * c);
        }
        self.prune();
    }

    /// Keeps only entries whose label satisfies `pred`.
    pub fn filter(&self, mut pred: impl FnMut(&K) -> bool) -> Self {
        let mut out = Self::new();
        for (k, a) in self.amps.iter() {
            if pred(k) {
                out.amps.insert(k.clone(), *a);
            }
        }
        out
    }

    /// Applies a linear map given by its action on basis labels. `f` is
    /// called once per entry and pushes `(label, coefficient)` pairs; the
    /// result is `Σ_k a_k Σ_j c_j |label_j⟩`.
    pub fn map_linear(&self, mut f: impl FnMut(&K, &mut Vec<(K, C64)>)) -> Self {
        let mut entries: Vec<(&K, &C64)> = self.amps.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = Self {
            amps: AmpMap::default(),
            pruned_weight: self.pruned_weight,
        };
        let mut buf = Vec::new();
        for (k, a) in entries {
            buf.clear();
            f(k, &mut buf);
            for (k2, c) in buf.drain(..) {
                out.add_amp(k2, a * c);
            }
        }
        out.prune();
        out
    }

    /// Relabels every entry. `f` must be injective for the map to be unitary.
    pub fn map_labels(&self, mut f: impl FnMut(&K) -> K) -> Self {
        self.map_linear(|k, out| out.push((f(k), C64::new(1.0, 0.0))))
    }

    /// Multiplies each amplitude by a label-dependent phase.
    pub fn map_phase(&self, mut f: impl FnMut(&K) -> C64) -> Self {
        let mut out = self.clone();
        for (k, a) in out.amps.iter_mut() {
            *a *= f(k);
        }
        out
    }
}

impl<K: Label + HexLabel> SparseState<K> {
    /// Sorted `(label-hex, re, im)` triples.
    pub fn dump(&self) -> Vec<(String, f64, f64)> {
        self.sorted()
            .into_iter()
            .map(|(k, a)| (k.to_hex(), a.re, a.im))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulates_and_prunes() {
        let s = SparseState::from_entries([
            (1u64, C64::new(0.5, 0.0)),
            (1u64, C64::new(-0.5, 0.0)),
            (2u64, C64::new(1.0, 0.0)),
            (3u64, C64::new(1e-14, 0.0)),
        ]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude(&2), C64::new(1.0, 0.0));
        assert!(s.pruned_weight() > 0.0);
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_slot() {
        let a = SparseState::from_entries([(0u64, C64::new(0.0, 1.0))]);
        let b = SparseState::from_entries([(0u64, C64::new(1.0, 0.0))]);
        assert_eq!(a.inner(&b), C64::new(0.0, -1.0));
        assert_eq!(b.inner(&a), C64::new(0.0, 1.0));
    }

    #[test]
    fn dump_is_sorted() {
        let s = SparseState::from_entries([(5u64, C64::new(0.6, 0.0)), (2u64, C64::new(0.0, 0.8))]);
        let d = s.dump();
        assert_eq!(d[0].0, "0000000000000002");
        assert_eq!(d[1].1, 0.6);
    }
}
