//! Range superpositions for claw-free families and their post-measurement
//! two-branch states.

use std::collections::BTreeMap;

use rand::Rng;

use super::layout::RegisterLayout;
use super::ops::{hadamard_all, parity128, project, register_distribution};
use super::state::{SparseState, C64};
use crate::distances::KahanSum;
use crate::error::{domain, Result};
use crate::tcf::{EnumerableNtcf, Ntcf};

/// Layout `B(1) | X(input) | Y(image)` for a family.
pub fn range_layout<F: EnumerableNtcf>(f: &F) -> Result<RegisterLayout> {
    RegisterLayout::from_widths([("B", 1), ("X", f.input_bits()), ("Y", f.image_bits())])
}

fn check_layout<F: EnumerableNtcf>(f: &F, layout: &RegisterLayout) -> Result<()> {
    let ok = layout.reg("B")?.width == 1
        && layout.reg("X")?.width == f.input_bits()
        && layout.reg("Y")?.width == f.image_bits();
    if !ok {
        return Err(domain("register layout does not match the key"));
    }
    Ok(())
}

/// `Σ_{b,x,y} √(f′_b(x)(y)) / √(2|X|) |b, x, y⟩`.
pub fn prepare_range_superposition<F: EnumerableNtcf>(
    f: &F,
    layout: &RegisterLayout,
) -> Result<SparseState<u64>> {
    check_layout(f, layout)?;
    let inputs = f.inputs()?;
    let scale = 1.0 / (2.0 * inputs.len() as f64).sqrt();
    let mut entries = Vec::new();
    for b in 0..2u8 {
        for &x in &inputs {
            for (y, p) in f.support(b, x)? {
                let mut label = layout.set(0, "B", b as u64);
                label = layout.set(label, "X", x as u64);
                label = layout.set(label, "Y", f.pack_image(&y));
                entries.push((label, C64::new(p.sqrt() * scale, 0.0)));
            }
        }
    }
    Ok(SparseState::from_entries(entries))
}

/// The state left after measuring the image `y`: at most one branch per bit,
/// with real nonnegative amplitudes summing in square to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapsed<I> {
    pub y: I,
    pub branches: Vec<(u8, u128, f64)>,
}

impl<I> Collapsed<I> {
    /// The preimage in branch `b`, if present.
    pub fn preimage(&self, b: u8) -> Option<u128> {
        self.branches.iter().find(|br| br.0 == b).map(|br| br.1)
    }

    pub fn is_claw(&self) -> bool {
        self.preimage(0).is_some() && self.preimage(1).is_some()
    }

    /// Branches with complex amplitudes, as consumed by the Hadamard sampler.
    pub fn complex_branches(&self) -> Vec<(u8, u128, C64)> {
        self.branches
            .iter()
            .map(|&(b, x, a)| (b, x, C64::new(a, 0.0)))
            .collect()
    }
}

/// Post-measurement state for an observed image, found by trapdoor
/// inversion. `None` when no preimage carries weight on `y`.
pub fn collapse_at<F: Ntcf>(f: &F, y: &F::Image) -> Option<Collapsed<F::Image>> {
    let mut branches = Vec::new();
    for b in 0..2u8 {
        if let Some(x) = f.invert(b, y) {
            let p = f.density(b, x, y);
            if p > 0.0 {
                branches.push((b, x, p.sqrt()));
            }
        }
    }
    let norm = branches.iter().map(|br| br.2 * br.2).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    for br in branches.iter_mut() {
        br.2 /= norm;
    }
    Some(Collapsed {
        y: y.clone(),
        branches,
    })
}

/// Samples the image measurement without building the full superposition:
/// draw `(b, x)` uniformly, draw `y`, then rebuild the branches through `y`.
pub fn collapse<F: Ntcf, R: Rng + ?Sized>(f: &F, rng: &mut R) -> Result<Collapsed<F::Image>> {
    let b: u8 = rng.random_range(0..2);
    let x = f.sample_input(rng);
    let y = f.sample_image(b, x, rng);
    collapse_at(f, &y).ok_or_else(|| domain("trapdoor failed to invert an honest image"))
}

/// The two-branch state on registers `B` and `X` of `layout`.
pub fn collapsed_state<I>(c: &Collapsed<I>, layout: &RegisterLayout) -> Result<SparseState<u64>> {
    layout.reg("B")?;
    layout.reg("X")?;
    Ok(SparseState::from_entries(c.branches.iter().map(
        |&(b, x, a)| {
            let label = layout.set(layout.set(0, "B", b as u64), "X", x as u64);
            (label, C64::new(a, 0.0))
        },
    )))
}

/// Outcome key `(packed y, z, d)` of the image measurement followed by a
/// Hadamard layer and measurement of `B` and `X`.
pub type JointOutcome = (u64, u8, u128);

/// Exact joint distribution computed on the full superposition.
pub fn joint_outcome_distribution_full<F: EnumerableNtcf>(
    f: &F,
) -> Result<BTreeMap<JointOutcome, f64>> {
    let layout = range_layout(f)?;
    let state = prepare_range_superposition(f, &layout)?;
    let (yr, br, xr) = (layout.reg("Y")?, layout.reg("B")?, layout.reg("X")?);
    let mut out = BTreeMap::new();
    for (yv, _) in register_distribution(&state, yr.mask()) {
        let y = yv >> yr.offset;
        let (post, _) = project(&state, &layout, "Y", y)?;
        let h = hadamard_all(&post, &layout, &["B", "X"])?;
        for (v, p) in register_distribution(&h, br.mask() | xr.mask()) {
            let z = ((v & br.mask()) >> br.offset) as u8;
            let d = ((v & xr.mask()) >> xr.offset) as u128;
            if p > 0.0 {
                out.insert((y, z, d), p);
            }
        }
    }
    Ok(out)
}

/// Exact joint distribution computed from the image marginal and the
/// collapsed two-branch states, evaluating the Hadamard transform directly.
pub fn joint_outcome_distribution_collapsed<F: EnumerableNtcf>(
    f: &F,
) -> Result<BTreeMap<JointOutcome, f64>> {
    let inputs = f.inputs()?;
    let weight = 1.0 / (2.0 * inputs.len() as f64);
    let mut image_prob: BTreeMap<F::Image, KahanSum> = BTreeMap::new();
    for b in 0..2u8 {
        for &x in &inputs {
            for (y, p) in f.support(b, x)? {
                image_prob.entry(y).or_default().add(p * weight);
            }
        }
    }
    let n = f.input_bits();
    let hadamard_norm = 1.0 / 2f64.powi(n as i32 + 1);
    let mut out = BTreeMap::new();
    for (y, py) in image_prob {
        let py = py.value();
        let c = collapse_at(f, &y).ok_or_else(|| domain("image without preimage"))?;
        let packed = f.pack_image(&y);
        for d in 0..(1u128 << n) {
            for z in 0..2u8 {
                let mut amp = 0.0;
                for &(b, x, a) in &c.branches {
                    let sign = (z & b) ^ parity128(d & x);
                    amp += if sign == 1 { -a } else { a };
                }
                let p = py * amp * amp * hadamard_norm;
                if p > 1e-300 {
                    out.insert((packed, z, d), p);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_maps;
    use crate::tcf::{ExactPair, FamilyTag};

    #[test]
    fn exact_n2_has_eight_uniform_entries() {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, 2, 1).unwrap();
        let layout = range_layout(&f).unwrap();
        let s = prepare_range_superposition(&f, &layout).unwrap();
        assert_eq!(s.len(), 8);
        for (_, a) in s.iter() {
            assert!((a.norm_sqr() - 0.125).abs() < 1e-15);
        }
        assert!(s.is_normalized(1e-12));
    }

    #[test]
    fn fast_and_full_paths_agree() {
        for fam in [FamilyTag::ExactClawFree, FamilyTag::InjectiveTwin] {
            let f = ExactPair::generate(fam, 4, 11).unwrap();
            let a = joint_outcome_distribution_full(&f).unwrap();
            let b = joint_outcome_distribution_collapsed(&f).unwrap();
            assert!(tv_maps(&a, &b) <= 1e-9);
        }
    }

    #[test]
    fn mismatched_layout_is_rejected() {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, 3, 1).unwrap();
        let layout = RegisterLayout::from_widths([("B", 1), ("X", 4), ("Y", 3)]).unwrap();
        assert!(prepare_range_superposition(&f, &layout).is_err());
    }
}
