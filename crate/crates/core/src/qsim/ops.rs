use std::collections::BTreeMap;

use rand::Rng;

use super::layout::RegisterLayout;
use super::state::{Registers, SparseState, C64};
use crate::distances::KahanSum;
use crate::error::{domain, Result};

/// A 2×2 complex matrix in row-major order.
pub type Gate1 = [[C64; 2]; 2];

pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn hadamard_gate() -> Gate1 {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

pub fn pauli_x() -> Gate1 {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    [[o, l], [l, o]]
}

/// `Rz(γ)·Ry(β)·Rz(α)` times a global phase; every U(2) element has this form.
pub fn u2_gate(alpha: f64, beta: f64, gamma: f64, phase: f64) -> Gate1 {
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let e = |t: f64| C64::from_polar(1.0, t);
    let g = e(phase);
    [
        [
            g * e(-(alpha + gamma) / 2.0) * c,
            -g * e((alpha - gamma) / 2.0) * s,
        ],
        [
            g * e((gamma - alpha) / 2.0) * s,
            g * e((alpha + gamma) / 2.0) * c,
        ],
    ]
}

/// Applies `u` to the qubit at absolute bit position `bit`.
pub fn apply_1q<K: Registers>(state: &SparseState<K>, bit: u32, u: &Gate1) -> SparseState<K> {
    let mask = 1u64 << bit;
    state.map_linear(|k, out| {
        let r = k.regs();
        let v = ((r & mask) != 0) as usize;
        let r0 = r & !mask;
        let r1 = r | mask;
        if u[0][v].norm() > 0.0 {
            out.push((k.with_regs(r0), u[0][v]));
        }
        if u[1][v].norm() > 0.0 {
            out.push((k.with_regs(r1), u[1][v]));
        }
    })
}

pub fn x_bit<K: Registers>(state: &SparseState<K>, bit: u32) -> SparseState<K> {
    let mask = 1u64 << bit;
    state.map_labels(|k| k.with_regs(k.regs() ^ mask))
}

pub fn cnot<K: Registers>(state: &SparseState<K>, control: u32, target: u32) -> SparseState<K> {
    let (c, t) = (1u64 << control, 1u64 << target);
    state.map_labels(|k| {
        let r = k.regs();
        k.with_regs(if r & c != 0 { r ^ t } else { r })
    })
}

pub fn hadamard_bits<K: Registers>(
    state: &SparseState<K>,
    bits: impl IntoIterator<Item = u32>,
) -> SparseState<K> {
    let h = hadamard_gate();
    let mut s = state.clone();
    for b in bits {
        s = apply_1q(&s, b, &h);
    }
    s
}

/// Hadamard on every qubit of the named registers.
pub fn hadamard_all<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    registers: &[&str],
) -> Result<SparseState<K>> {
    let mut bits = Vec::new();
    for name in registers {
        bits.extend(layout.reg(name)?.bits());
    }
    Ok(hadamard_bits(state, bits))
}

/// Reversible classical update `reg ← reg ⊕ f(label)`; `f` must not read
/// `reg` itself.
pub fn xor_into<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    reg: &str,
    mut f: impl FnMut(u64) -> u64,
) -> Result<SparseState<K>> {
    let r = layout.reg(reg)?.clone();
    Ok(state.map_labels(|k| {
        let regs = k.regs();
        let cur = (regs & r.mask()) >> r.offset;
        let v = (cur ^ f(regs)) & (r.mask() >> r.offset);
        k.with_regs((regs & !r.mask()) | (v << r.offset))
    }))
}

/// Probability of each value of `reg`, keyed by value.
pub fn marginal<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    reg: &str,
) -> Result<BTreeMap<u64, f64>> {
    let r = layout.reg(reg)?;
    let mut acc: BTreeMap<u64, KahanSum> = BTreeMap::new();
    for (k, a) in state.sorted() {
        let v = (k.regs() & r.mask()) >> r.offset;
        acc.entry(v).or_default().add(a.norm_sqr());
    }
    Ok(acc.into_iter().map(|(v, s)| (v, s.value())).collect())
}

/// Joint distribution of the whole packed register word (after masking).
pub fn register_distribution<K: Registers>(
    state: &SparseState<K>,
    mask: u64,
) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, KahanSum> = BTreeMap::new();
    for (k, a) in state.sorted() {
        acc.entry(k.regs() & mask).or_default().add(a.norm_sqr());
    }
    acc.into_iter().map(|(v, s)| (v, s.value())).collect()
}

/// Unnormalized projection onto `reg = value`, together with its squared norm.
pub fn project<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    reg: &str,
    value: u64,
) -> Result<(SparseState<K>, f64)> {
    let r = layout.reg(reg)?;
    let (mask, offset) = (r.mask(), r.offset);
    let p = state.filter(|k| (k.regs() & mask) >> offset == value);
    let n = p.norm_sqr();
    Ok((p, n))
}

#[derive(Debug, Clone)]
pub struct MeasurementOutcome<K: Registers> {
    pub register: String,
    pub value: u64,
    pub probability: f64,
    pub post_state: SparseState<K>,
}

/// Samples a value of `reg` from a cumulative table; outcomes are visited
/// in increasing order so a given RNG stream always maps to the same value.
pub fn sample_index<R: Rng + ?Sized>(probs: &[(u64, f64)], rng: &mut R) -> u64 {
    let total: f64 = probs.iter().map(|p| p.1).sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(v, p) in probs {
        acc += p;
        if u < acc {
            return v;
        }
    }
    probs
        .iter()
        .rev()
        .find(|p| p.1 > 0.0)
        .map(|p| p.0)
        .unwrap_or(0)
}

/// Born-rule measurement of `reg` in the computational basis. The state must
/// be normalized; the post-measurement state is renormalized.
pub fn measure<K: Registers, R: Rng + ?Sized>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    reg: &str,
    rng: &mut R,
) -> Result<MeasurementOutcome<K>> {
    let n = state.norm_sqr();
    if (n - 1.0).abs() > 1e-9 {
        return Err(domain(format!(
            "measure needs a normalized state, norm² = {n}"
        )));
    }
    let dist = marginal(state, layout, reg)?;
    let table: Vec<(u64, f64)> = dist.into_iter().collect();
    let value = sample_index(&table, rng);
    let (mut post, p) = project(state, layout, reg, value)?;
    post.normalize();
    Ok(MeasurementOutcome {
        register: reg.to_string(),
        value,
        probability: p,
        post_state: post,
    })
}

/// Multiplies `|x, e⟩` by `(−1)^{e·H(x)}` for a concrete Boolean function.
pub fn phase_query_concrete<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    h: impl Fn(u64) -> bool,
    x_reg: &str,
    e_reg: &str,
) -> Result<SparseState<K>> {
    let xr = layout.reg(x_reg)?.clone();
    let er = layout.reg(e_reg)?.clone();
    Ok(state.map_phase(|k| {
        let r = k.regs();
        let x = (r & xr.mask()) >> xr.offset;
        let e = (r & er.mask()) >> er.offset;
        if e & 1 == 1 && h(x) {
            C64::new(-1.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    }))
}

/// Sets a register known to hold a single definite value back to zero.
pub fn clear_register<K: Registers>(
    state: &SparseState<K>,
    layout: &RegisterLayout,
    reg: &str,
) -> Result<SparseState<K>> {
    let r = layout.reg(reg)?.clone();
    let mut seen = None;
    for (k, _) in state.iter() {
        let v = k.regs() & r.mask();
        match seen {
            None => seen = Some(v),
            Some(s) if s != v => {
                return Err(domain(format!("register {reg} is not in a definite state")))
            }
            _ => {}
        }
    }
    Ok(state.map_labels(|k| k.with_regs(k.regs() & !r.mask())))
}

/// Outcome of measuring the bit register `B` and word register `X` after a
/// Hadamard layer on the two-branch state `Σ_b c_b |b, x_b⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadamardOutcome {
    pub z: u8,
    pub d: u128,
}

pub fn parity128(v: u128) -> u8 {
    (v.count_ones() & 1) as u8
}

/// Samples the joint outcome of a Hadamard layer on `(b, x)` followed by a
/// computational-basis measurement, for a state supported on at most two
/// branches. `d` is uniform on `width`-bit strings and `z` follows
/// `|c_0 (−1)^{d·x_0} + c_1 (−1)^{z + d·x_1}|²`.
pub fn sample_hadamard_two_branch<R: Rng + ?Sized>(
    branches: &[(u8, u128, C64)],
    width: u32,
    rng: &mut R,
) -> HadamardOutcome {
    let d = random_bits(width, rng);
    let amp = |z: u8| {
        let mut acc = C64::new(0.0, 0.0);
        for &(b, x, c) in branches {
            let sign = (z & b) ^ parity128(d & x);
            acc += if sign == 1 { -c } else { c };
        }
        acc.norm_sqr()
    };
    let (p0, p1) = (amp(0), amp(1));
    let z = if rng.random::<f64>() * (p0 + p1) < p0 {
        0
    } else {
        1
    };
    HadamardOutcome { z, d }
}

pub fn random_bits<R: Rng + ?Sized>(width: u32, rng: &mut R) -> u128 {
    let v: u128 = rng.random();
    if width >= 128 {
        v
    } else {
        v & ((1u128 << width) - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    fn layout() -> RegisterLayout {
        RegisterLayout::from_widths([("B", 1), ("X", 3)]).unwrap()
    }

    #[test]
    fn hadamard_squares_to_identity() {
        let l = layout();
        let s = SparseState::from_entries([
            (0b0101u64, C64::new(0.6, 0.0)),
            (0b1110u64, C64::new(0.0, 0.8)),
        ]);
        let twice =
            hadamard_all(&hadamard_all(&s, &l, &["B", "X"]).unwrap(), &l, &["B", "X"]).unwrap();
        assert!(twice.distance_sqr(&s) < 1e-24);
    }

    #[test]
    fn hadamard_on_zero_is_uniform() {
        let l = layout();
        let s = hadamard_all(&SparseState::basis(0u64), &l, &["B", "X"]).unwrap();
        assert_eq!(s.len(), 16);
        for (_, a) in s.iter() {
            assert!((a.re - 0.25).abs() < 1e-15 && a.im == 0.0);
        }
    }

    #[test]
    fn claw_state_obeys_equation() {
        let l = layout();
        let (x0, x1) = (0b011u64, 0b110u64);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let s = SparseState::from_entries([
            (l.set(0, "X", x0), h),
            (l.set(l.set(0, "B", 1), "X", x1), h),
        ]);
        let t = hadamard_all(&s, &l, &["B", "X"]).unwrap();
        assert_eq!(t.len(), 8);
        for (k, a) in t.iter() {
            let z = l.get(*k, "B");
            let d = l.get(*k, "X");
            assert_eq!(z, ((d & (x0 ^ x1)).count_ones() & 1) as u64);
            assert!((a.norm_sqr() - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn measure_and_project() {
        let l = layout();
        let s = hadamard_all(&SparseState::basis(0u64), &l, &["B"]).unwrap();
        let mut rng = trial_rng(1, 0);
        let out = measure(&s, &l, "B", &mut rng).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-15);
        assert!(out.post_state.is_normalized(1e-12));
        let (p0, n0) = project(&s, &l, "B", 0).unwrap();
        let (_, n1) = project(&s, &l, "B", 1).unwrap();
        assert_eq!(p0.len(), 1);
        assert!((n0 + n1 - 1.0).abs() < 1e-15);
        assert!(measure(&s, &l, "Q", &mut rng).is_err());
    }

    #[test]
    fn u2_gates_are_unitary() {
        let u = u2_gate(0.3, 1.1, -0.7, 0.2);
        for i in 0..2 {
            for j in 0..2 {
                let dot: C64 = (0..2).map(|k| u[k][i].conj() * u[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn concrete_phase_query() {
        let l = RegisterLayout::from_widths([("X", 2), ("E", 1)]).unwrap();
        let s = hadamard_all(&SparseState::basis(0u64), &l, &["X", "E"]).unwrap();
        let h = |x: u64| x == 2;
        let q = phase_query_concrete(&s, &l, h, "X", "E").unwrap();
        let neg = l.set(l.set(0, "X", 2), "E", 1);
        assert!(q.amplitude(&neg).re < 0.0);
        let back = phase_query_concrete(&q, &l, h, "X", "E").unwrap();
        assert!(back.distance_sqr(&s) < 1e-30);
    }
}
