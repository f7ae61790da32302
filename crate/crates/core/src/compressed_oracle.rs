//! Compressed phase oracle for a uniformly random `H: {0,1}^n → {0,1}`.
//!
//! A database is a sorted list of `(input, value)` pairs; inputs not listed
//! are `⊥`. Databases are stored in the value basis, so the pairs together
//! with the algorithm registers form an orthonormal basis of labels.
//! Decompression at `x` acts as
//!
//! * `x` absent, `|D| < t`: `|D⟩ ↦ (|D ∪ (x,0)⟩ + |D ∪ (x,1)⟩)/√2`;
//! * `x` absent, `|D| = t`: identity;
//! * `x` present with value `v`:
//!   `|D⟩ ↦ |D ∖ x⟩/√2 + (−1)^v (|D_{x→0}⟩ − |D_{x→1}⟩)/2`.
//!
//! This sends the uniform value state `|+⟩` at `x` to `⊥`, fixes `|−⟩`, and
//! is an involution. A query with control `e` decompresses at the queried
//! input, applies `(−1)^{e·D(x)}` and recompresses. The budget `t` is set to
//! at least the number of queries, which stands in for growing the
//! capacity on every query.
//!
//! The purified oracle used as a reference keeps the whole truth table in a
//! register initialized to the uniform superposition.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distances::tv_maps;
use crate::error::{domain, param, Error, Result};
use crate::qsim::{
    apply_1q, cnot, hadamard_gate, register_distribution, u2_gate, Gate1, HexLabel, RegisterLayout,
    Registers, SparseState, C64,
};

/// Sorted `(input, value)` pairs with distinct inputs and bit values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Database(Vec<(u64, u8)>);

impl Database {
    pub fn new() -> Self {
        Database(Vec::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u8)>) -> Result<Self> {
        let mut v: Vec<(u64, u8)> = pairs.into_iter().collect();
        v.sort_unstable();
        let db = Database(v);
        if !db.is_canonical() {
            return Err(domain(
                "database pairs must have distinct inputs and bit values",
            ));
        }
        Ok(db)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: u64) -> Option<u8> {
        self.0
            .binary_search_by_key(&x, |e| e.0)
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn contains(&self, x: u64) -> bool {
        self.get(x).is_some()
    }

    pub fn entries(&self) -> &[(u64, u8)] {
        &self.0
    }

    pub fn inputs(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().map(|e| e.0)
    }

    /// Copy with `x` set to `v`.
    pub fn with(&self, x: u64, v: u8) -> Self {
        let mut d = self.0.clone();
        match d.binary_search_by_key(&x, |e| e.0) {
            Ok(i) => d[i].1 = v,
            Err(i) => d.insert(i, (x, v)),
        }
        Database(d)
    }

    /// Copy with `x` removed.
    pub fn without(&self, x: u64) -> Self {
        let mut d = self.0.clone();
        if let Ok(i) = d.binary_search_by_key(&x, |e| e.0) {
            d.remove(i);
        }
        Database(d)
    }

    /// Inputs strictly increasing and values in `{0, 1}`.
    pub fn is_canonical(&self) -> bool {
        self.0.windows(2).all(|w| w[0].0 < w[1].0) && self.0.iter().all(|e| e.1 < 2)
    }
}

/// A basis label: packed algorithm registers plus a database.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OracleLabel {
    pub regs: u64,
    pub db: Database,
}

impl OracleLabel {
    pub fn new(regs: u64) -> Self {
        OracleLabel {
            regs,
            db: Database::new(),
        }
    }
}

impl Registers for OracleLabel {
    fn regs(&self) -> u64 {
        self.regs
    }

    fn with_regs(&self, regs: u64) -> Self {
        OracleLabel {
            regs,
            db: self.db.clone(),
        }
    }
}

impl HexLabel for OracleLabel {
    fn to_hex(&self) -> String {
        let mut s = format!("{:016x}", self.regs);
        for (x, v) in self.db.entries() {
            s.push_str(&format!(":{x:x}={v}"));
        }
        s
    }
}

pub type OracleState = SparseState<OracleLabel>;

/// `StdDecomp_x` on a single database; `cap = None` means unbounded.
pub fn std_decomp_db(db: &Database, x: u64, cap: Option<usize>) -> Vec<(Database, f64)> {
    match db.get(x) {
        Some(v) => {
            let sign = if v == 0 { 1.0 } else { -1.0 };
            vec![
                (db.without(x), FRAC_1_SQRT_2),
                (db.with(x, 0), 0.5 * sign),
                (db.with(x, 1), -0.5 * sign),
            ]
        }
        None if cap.is_none_or(|t| db.len() < t) => {
            vec![
                (db.with(x, 0), FRAC_1_SQRT_2),
                (db.with(x, 1), FRAC_1_SQRT_2),
            ]
        }
        None => vec![(db.clone(), 1.0)],
    }
}

/// `StdDecomp` at the input held in `x_reg` of each basis label.
pub fn std_decomp(
    state: &OracleState,
    layout: &RegisterLayout,
    x_reg: &str,
    cap: Option<usize>,
) -> Result<OracleState> {
    let xr = layout.reg(x_reg)?.clone();
    Ok(state.map_linear(|k, out| {
        let x = (k.regs & xr.mask()) >> xr.offset;
        for (db, c) in std_decomp_db(&k.db, x, cap) {
            out.push((OracleLabel { regs: k.regs, db }, C64::new(c, 0.0)));
        }
    }))
}

/// `StdDecomp` at a fixed input.
pub fn std_decomp_at(state: &OracleState, x: u64, cap: Option<usize>) -> OracleState {
    state.map_linear(|k, out| {
        for (db, c) in std_decomp_db(&k.db, x, cap) {
            out.push((OracleLabel { regs: k.regs, db }, C64::new(c, 0.0)));
        }
    })
}

/// Which basis labels a query acts on.
pub type QueryControl<'a> = &'a dyn Fn(u64) -> bool;

/// One compressed phase query: on labels with `e = 1` (and `control` true),
/// decompress at `x`, apply `(−1)^{D(x)}`, recompress.
pub fn cpho_query(
    state: &OracleState,
    layout: &RegisterLayout,
    x_reg: &str,
    e_reg: &str,
    cap: Option<usize>,
) -> Result<OracleState> {
    cpho_query_controlled(state, layout, x_reg, e_reg, cap, &|_| true)
}

pub fn cpho_query_controlled(
    state: &OracleState,
    layout: &RegisterLayout,
    x_reg: &str,
    e_reg: &str,
    cap: Option<usize>,
    control: QueryControl<'_>,
) -> Result<OracleState> {
    let xr = layout.reg(x_reg)?.clone();
    let er = layout.reg(e_reg)?.clone();
    if er.width != 1 {
        return Err(domain("the phase control register must be one qubit"));
    }
    Ok(state.map_linear(|k, out| {
        let active = (k.regs & er.mask()) != 0 && control(k.regs);
        if !active {
            out.push((k.clone(), C64::new(1.0, 0.0)));
            return;
        }
        let x = (k.regs & xr.mask()) >> xr.offset;
        query_label(k, x, cap, out);
    }))
}

fn query_label(k: &OracleLabel, x: u64, cap: Option<usize>, out: &mut Vec<(OracleLabel, C64)>) {
    let mut acc: BTreeMap<Database, f64> = BTreeMap::new();
    for (db1, c1) in std_decomp_db(&k.db, x, cap) {
        let phase = if db1.get(x) == Some(1) { -1.0 } else { 1.0 };
        for (db2, c2) in std_decomp_db(&db1, x, cap) {
            *acc.entry(db2).or_default() += c1 * phase * c2;
        }
    }
    for (db, c) in acc {
        if c.abs() > 1e-15 {
            out.push((OracleLabel { regs: k.regs, db }, C64::new(c, 0.0)));
        }
    }
}

/// Phase query at a classical input `x`, controlled by qubit `control_bit`.
pub fn cpho_query_at(
    state: &OracleState,
    x: u64,
    control_bit: u32,
    cap: Option<usize>,
) -> OracleState {
    state.map_linear(|k, out| {
        if (k.regs >> control_bit) & 1 == 0 {
            out.push((k.clone(), C64::new(1.0, 0.0)));
            return;
        }
        query_label(k, x, cap, out);
    })
}

/// Standard-form query `|x, y⟩ ↦ |x, y ⊕ H(x)⟩`: the phase query conjugated
/// by Hadamard on the output qubit.
pub fn csto_query(
    state: &OracleState,
    layout: &RegisterLayout,
    x_reg: &str,
    y_reg: &str,
    cap: Option<usize>,
) -> Result<OracleState> {
    let bit = layout.reg(y_reg)?.offset;
    let h = hadamard_gate();
    let s = apply_1q(state, bit, &h);
    let s = cpho_query(&s, layout, x_reg, y_reg, cap)?;
    Ok(apply_1q(&s, bit, &h))
}

/// Decompresses at every input of `relevant` and at every input present in
/// any database of the state, with unbounded capacity.
pub fn decomp_all(state: &OracleState, relevant: &[u64]) -> OracleState {
    let mut xs: BTreeSet<u64> = relevant.iter().copied().collect();
    for (k, _) in state.iter() {
        xs.extend(k.db.inputs());
    }
    let mut s = state.clone();
    for x in xs {
        s = std_decomp_at(&s, x, None);
    }
    s
}

/// Squared norm of the part of the state accepted by `pred`.
pub fn projector_norm(state: &OracleState, pred: impl Fn(&OracleLabel) -> bool) -> f64 {
    state.filter(|k| pred(k)).norm_sqr()
}

/// Decompression of every input of an `n`-bit domain, as a brute-force
/// reference for [`decomp_all`].
pub fn decomp_full_domain(state: &OracleState, n: u32) -> Result<OracleState> {
    if n > 4 {
        return Err(param("full decompression is limited to n ≤ 4"));
    }
    let mut s = state.clone();
    for x in 0..(1u64 << n) {
        s = std_decomp_at(&s, x, None);
    }
    Ok(s)
}

/// Whether every database in the state is canonical and no larger than `bound`.
pub fn databases_well_formed(state: &OracleState, bound: usize) -> bool {
    state
        .iter()
        .all(|(k, _)| k.db.is_canonical() && k.db.len() <= bound)
}

/// A compressed-oracle simulation with a fixed query budget.
#[derive(Debug, Clone)]
pub struct OracleSim {
    pub state: OracleState,
    pub layout: RegisterLayout,
    pub budget: usize,
    pub queries: usize,
}

impl OracleSim {
    pub fn new(layout: RegisterLayout, regs: u64, budget: usize) -> Self {
        OracleSim {
            state: SparseState::basis(OracleLabel::new(regs)),
            layout,
            budget,
            queries: 0,
        }
    }

    fn charge(&mut self) -> Result<()> {
        if self.queries >= self.budget {
            return Err(Error::BudgetExhausted {
                used: self.queries + 1,
                budget: self.budget,
            });
        }
        self.queries += 1;
        Ok(())
    }

    pub fn phase_query(&mut self, x_reg: &str, e_reg: &str) -> Result<()> {
        self.charge()?;
        self.state = cpho_query(&self.state, &self.layout, x_reg, e_reg, Some(self.budget))?;
        debug_assert!(databases_well_formed(&self.state, self.queries));
        Ok(())
    }

    pub fn standard_query(&mut self, x_reg: &str, y_reg: &str) -> Result<()> {
        self.charge()?;
        self.state = csto_query(&self.state, &self.layout, x_reg, y_reg, Some(self.budget))?;
        debug_assert!(databases_well_formed(&self.state, self.queries));
        Ok(())
    }
}

/// Largest domain for the purified oracle.
pub const FULL_ORACLE_MAX_BITS: u32 = 4;

/// Adds the truth-table register `H` (width `2^n`) to a work layout and
/// returns the uniform superposition over truth tables times `|regs⟩`.
pub fn full_oracle_init(
    layout: &RegisterLayout,
    n: u32,
    regs: u64,
) -> Result<(RegisterLayout, SparseState<u64>)> {
    if n > FULL_ORACLE_MAX_BITS {
        return Err(param(format!(
            "purified oracle needs n ≤ {FULL_ORACLE_MAX_BITS}"
        )));
    }
    let full = layout.clone().with("H", 1 << n)?;
    let tables = 1u64 << (1u64 << n);
    let amp = C64::new(1.0 / (tables as f64).sqrt(), 0.0);
    let s = SparseState::from_entries((0..tables).map(|h| (full.set(regs, "H", h), amp)));
    Ok((full, s))
}

/// `|x, e, H⟩ ↦ (−1)^{e·H(x)} |x, e, H⟩` on the purified oracle.
pub fn full_phase_oracle_query(
    state: &SparseState<u64>,
    layout: &RegisterLayout,
    x_reg: &str,
    e_reg: &str,
) -> Result<SparseState<u64>> {
    let (xr, er, hr) = (
        layout.reg(x_reg)?.clone(),
        layout.reg(e_reg)?.clone(),
        layout.reg("H")?.clone(),
    );
    if xr.width > FULL_ORACLE_MAX_BITS {
        return Err(param(format!(
            "purified oracle needs n ≤ {FULL_ORACLE_MAX_BITS}"
        )));
    }
    Ok(state.map_phase(|&k| {
        let x = (k & xr.mask()) >> xr.offset;
        let e = (k & er.mask()) >> er.offset;
        let h = (k & hr.mask()) >> hr.offset;
        if e == 1 && (h >> x) & 1 == 1 {
            C64::new(-1.0, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    }))
}

/// One step of a random oracle circuit on the work registers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CircuitOp {
    Gate { qubit: u32, params: [f64; 4] },
    Cnot { control: u32, target: u32 },
    PhaseQuery,
    StandardQuery,
}

/// A circuit over work registers `X(n) | E(1) | W(w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCircuit {
    pub n: u32,
    pub work: u32,
    pub ops: Vec<CircuitOp>,
}

impl OracleCircuit {
    pub fn layout(&self) -> Result<RegisterLayout> {
        RegisterLayout::from_widths([("X", self.n), ("E", 1), ("W", self.work)])
    }

    pub fn queries(&self) -> usize {
        self.ops
            .iter()
            .filter(|o| matches!(o, CircuitOp::PhaseQuery | CircuitOp::StandardQuery))
            .count()
    }

    /// Random circuit with between 1 and `max_queries` queries, each
    /// preceded and followed by layers of random gates.
    pub fn random<R: Rng + ?Sized>(n: u32, work: u32, max_queries: usize, rng: &mut R) -> Self {
        let qubits = n + 1 + work;
        let mut ops = Vec::new();
        let layer = |ops: &mut Vec<CircuitOp>, rng: &mut R| {
            for q in 0..qubits {
                if rng.random_bool(0.7) {
                    let params = [
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.0..std::f64::consts::PI),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    ];
                    ops.push(CircuitOp::Gate { qubit: q, params });
                }
            }
            for _ in 0..rng.random_range(0..4) {
                let control = rng.random_range(0..qubits);
                let mut target = rng.random_range(0..qubits - 1);
                if target >= control {
                    target += 1;
                }
                ops.push(CircuitOp::Cnot { control, target });
            }
        };
        let queries = rng.random_range(1..=max_queries);
        for _ in 0..queries {
            layer(&mut ops, rng);
            ops.push(if rng.random_bool(0.5) {
                CircuitOp::PhaseQuery
            } else {
                CircuitOp::StandardQuery
            });
        }
        layer(&mut ops, rng);
        OracleCircuit { n, work, ops }
    }

    fn gate(params: &[f64; 4]) -> Gate1 {
        u2_gate(params[0], params[1], params[2], params[3])
    }

    /// Output distribution of the work registers under the compressed oracle.
    pub fn run_compressed(&self) -> Result<BTreeMap<u64, f64>> {
        let layout = self.layout()?;
        let mut sim = OracleSim::new(layout.clone(), 0, self.queries().max(1));
        for op in &self.ops {
            match op {
                CircuitOp::Gate { qubit, params } => {
                    sim.state = apply_1q(&sim.state, *qubit, &Self::gate(params))
                }
                CircuitOp::Cnot { control, target } => {
                    sim.state = cnot(&sim.state, *control, *target)
                }
                CircuitOp::PhaseQuery => sim.phase_query("X", "E")?,
                CircuitOp::StandardQuery => sim.standard_query("X", "E")?,
            }
        }
        Ok(register_distribution(
            &sim.state,
            (1u64 << layout.width()) - 1,
        ))
    }

    /// Output distribution of the work registers under the purified oracle.
    pub fn run_full(&self) -> Result<BTreeMap<u64, f64>> {
        let work = self.layout()?;
        let (layout, mut s) = full_oracle_init(&work, self.n, 0)?;
        let e_bit = layout.reg("E")?.offset;
        let h = hadamard_gate();
        for op in &self.ops {
            s = match op {
                CircuitOp::Gate { qubit, params } => apply_1q(&s, *qubit, &Self::gate(params)),
                CircuitOp::Cnot { control, target } => cnot(&s, *control, *target),
                CircuitOp::PhaseQuery => full_phase_oracle_query(&s, &layout, "X", "E")?,
                CircuitOp::StandardQuery => {
                    let t = apply_1q(&s, e_bit, &h);
                    let t = full_phase_oracle_query(&t, &layout, "X", "E")?;
                    apply_1q(&t, e_bit, &h)
                }
            };
        }
        Ok(register_distribution(&s, (1u64 << work.width()) - 1))
    }

    /// Total variation distance between the two simulations.
    pub fn equivalence_tv(&self) -> Result<f64> {
        Ok(tv_maps(&self.run_full()?, &self.run_compressed()?))
    }
}

/// Summary of a batch of random equivalence circuits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub circuits: usize,
    pub n: u32,
    pub max_queries: usize,
    pub max_tv: f64,
    pub tvs: Vec<f64>,
}

/// Runs `circuits` random circuits with `n`-bit oracle inputs and two
/// extra work qubits, comparing purified and compressed simulations.
pub fn oracle_equivalence(
    n: u32,
    circuits: usize,
    max_queries: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    use rayon::prelude::*;
    if max_queries == 0 {
        return Err(param("at least one query per circuit is needed"));
    }
    let tvs: Vec<f64> = (0..circuits as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::trial_rng(seed, i);
            OracleCircuit::random(n, 2, max_queries, &mut rng).equivalence_tv()
        })
        .collect::<Result<_>>()?;
    let max_tv = tvs.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        circuits,
        n,
        max_queries,
        max_tv,
        tvs,
    })
}
