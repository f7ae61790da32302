//! Structural checks on prover states under the compressed oracle, a
//! canonical verifier, and the claw extractor.
//!
//! A prover strategy is run in place of the honest sender, leaving a state
//! over algorithm registers and a database. For a repetition with claw
//! `(x_0, x_1)` and target bit `t`, every label is grouped by everything
//! except the two database slots, and each slot is rewritten in the basis
//! `{⊥, |+⟩, |−⟩}`. The coefficients of `(−, ⊥)`, `(⊥, −)`, `(−, −)` and
//! `(⊥, ⊥)` are `α_0`, `α_1`, `β` and `γ`. With the validity probability
//! `1 − ε`, these satisfy
//!
//! `Σ|α_1 − (−1)^t α_0|² + Σ|γ − (−1)^t β|² = 2ε`
//!
//! whenever no slot carries a `|+⟩` component, which holds for every state
//! reachable by compressed queries.
//!
//! The verifier holds the trapdoor. It recovers each claw, queries the
//! oracle at both preimages into an answer qubit and accepts iff every
//! answer matches its target, so it never accepts an inconsistent tuple.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressed_oracle::{cpho_query_at, Database, OracleLabel, OracleState};
use crate::distances::KahanSum;
use crate::error::{domain, param, Error, Result};
use crate::qsim::{
    clear_register, hadamard_bits, measure, parity128, sample_index, xor_into, RegisterLayout, C64,
};
use crate::rng::trial_rng;
use crate::tcf::{ExactPair, FamilyTag, Ntcf};
use crate::unexplainable::{
    apply_projector, measure_patterns, pattern_distribution, unexp_enc_compressed, CompressedRun,
    OutputMode, ParallelCiphertext, PreimagePattern, ProjectorKind, QueryPolicy, RandomOracle,
    TargetRule,
};

/// Tolerance for exact identities on simulated states.
pub const STATE_TOL: f64 = 1e-10;
/// Slack for the clean-structure inequalities.
pub const CLEAN_SLACK: f64 = 1e-9;

/// A strategy that replaces the honest sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProverStrategy {
    Honest,
    /// Never queries and reports the measured `(z, d)` as is.
    NoQueryGuess,
    /// Honest on the first `l` repetitions, guessing on the rest.
    PartialQuery(usize),
    Custom(CustomStrategy),
}

/// The same query policy on every repetition, optionally with the witness
/// qubit prepared in `|+⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomStrategy {
    pub name: String,
    pub policy: QueryPolicy,
    pub prepare_witness: bool,
}

impl ProverStrategy {
    /// The equal superposition of honest and guessing, controlled by `W`.
    pub fn mixture() -> Self {
        ProverStrategy::Custom(CustomStrategy {
            name: "mixture".into(),
            policy: QueryPolicy::WhenWitnessZero,
            prepare_witness: true,
        })
    }

    pub fn name(&self) -> String {
        match self {
            ProverStrategy::Honest => "honest".into(),
            ProverStrategy::NoQueryGuess => "noquery".into(),
            ProverStrategy::PartialQuery(l) => format!("partial:{l}"),
            ProverStrategy::Custom(c) => c.name.clone(),
        }
    }

    pub fn policies(&self, l: usize) -> Result<Vec<QueryPolicy>> {
        Ok(match self {
            ProverStrategy::Honest => vec![QueryPolicy::Always; l],
            ProverStrategy::NoQueryGuess => vec![QueryPolicy::Never; l],
            ProverStrategy::PartialQuery(k) => {
                if *k > l {
                    return Err(param(format!("partial:{k} exceeds L = {l}")));
                }
                (0..l)
                    .map(|i| {
                        if i < *k {
                            QueryPolicy::Always
                        } else {
                            QueryPolicy::Never
                        }
                    })
                    .collect()
            }
            ProverStrategy::Custom(c) => vec![c.policy; l],
        })
    }

    pub fn prepares_witness(&self) -> bool {
        matches!(self, ProverStrategy::Custom(c) if c.prepare_witness)
    }
}

impl FromStr for ProverStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honest" => Ok(ProverStrategy::Honest),
            "noquery" => Ok(ProverStrategy::NoQueryGuess),
            "mixture" => Ok(ProverStrategy::mixture()),
            _ => match s.strip_prefix("partial:").map(str::parse::<usize>) {
                Some(Ok(l)) => Ok(ProverStrategy::PartialQuery(l)),
                _ => Err(param(format!(
                    "unknown strategy '{s}' (expected honest, noquery, partial:<l> or mixture)"
                ))),
            },
        }
    }
}

/// Runs a strategy for `l` repetitions against the compressed oracle.
pub fn explain<F: Ntcf, R: Rng + ?Sized>(
    strategy: &ProverStrategy,
    m: u8,
    f: &F,
    l: usize,
    mode: OutputMode,
    rng: &mut R,
) -> Result<CompressedRun<F::Image>> {
    let policies = strategy.policies(l)?;
    unexp_enc_compressed(m, f, &policies, strategy.prepares_witness(), mode, rng)
}

/// Coefficients of one group of labels sharing everything but the two slots.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCoefficients {
    /// Registers and the database with both preimages removed.
    pub rest: OracleLabel,
    pub t: u8,
    pub alpha: [C64; 2],
    pub beta: C64,
    pub gamma: C64,
    /// Squared weight on components with a `|+⟩` slot.
    pub plus: f64,
}

/// Weights of the four presence classes of a repetition's preimages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub x0_only: f64,
    pub x1_only: f64,
    pub both: f64,
    pub neither: f64,
}

impl ClassWeights {
    pub fn total(&self) -> f64 {
        self.x0_only + self.x1_only + self.both + self.neither
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureDecomposition {
    pub repetition: usize,
    pub claw: (u64, u64),
    pub branches: Vec<BranchCoefficients>,
    pub classes: ClassWeights,
}

fn sign(t: u8) -> f64 {
    if t & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

impl StructureDecomposition {
    fn sum(&self, g: impl Fn(&BranchCoefficients) -> f64) -> f64 {
        let mut k = KahanSum::default();
        for b in &self.branches {
            k.add(g(b));
        }
        k.value()
    }

    /// `Σ |α_0|² + |α_1|²`.
    pub fn alpha_weight(&self) -> f64 {
        self.sum(|b| b.alpha[0].norm_sqr() + b.alpha[1].norm_sqr())
    }

    pub fn beta_weight(&self) -> f64 {
        self.sum(|b| b.beta.norm_sqr())
    }

    pub fn gamma_weight(&self) -> f64 {
        self.sum(|b| b.gamma.norm_sqr())
    }

    pub fn plus_weight(&self) -> f64 {
        self.sum(|b| b.plus)
    }

    /// Squared coefficients summed over all nine slot combinations.
    pub fn total_weight(&self) -> f64 {
        self.alpha_weight() + self.beta_weight() + self.gamma_weight() + self.plus_weight()
    }

    /// `Σ |α_0 − (−1)^t α_1|²`.
    pub fn phase_mismatch(&self) -> f64 {
        self.sum(|b| (b.alpha[0] - b.alpha[1] * sign(b.t)).norm_sqr())
    }

    /// `Σ |α_1 − (−1)^t α_0|² + Σ |γ − (−1)^t β|²`.
    pub fn xor_residual(&self) -> f64 {
        self.sum(|b| {
            let s = sign(b.t);
            (b.alpha[1] - b.alpha[0] * s).norm_sqr() + (b.gamma - b.beta * s).norm_sqr()
        })
    }
}

const BOT: usize = 2;
const PLUS: usize = 1;
const MINUS: usize = 2;
const NEW_BOT: usize = 0;

fn slot(v: Option<u8>) -> usize {
    v.map_or(BOT, |b| b as usize)
}

/// Value basis `(0, 1, ⊥)` to `(⊥, +, −)`.
fn to_sign_basis(a: [C64; 3]) -> [C64; 3] {
    [
        a[BOT],
        (a[0] + a[1]) * FRAC_1_SQRT_2,
        (a[0] - a[1]) * FRAC_1_SQRT_2,
    ]
}

/// `(⊥, +, −)` back to the value basis `(0, 1, ⊥)`.
fn to_value_basis(n: [C64; 3]) -> [C64; 3] {
    [
        (n[PLUS] + n[MINUS]) * FRAC_1_SQRT_2,
        (n[PLUS] - n[MINUS]) * FRAC_1_SQRT_2,
        n[NEW_BOT],
    ]
}

type SlotGrid = [[C64; 3]; 3];

fn transform(g: &SlotGrid, f: fn([C64; 3]) -> [C64; 3]) -> SlotGrid {
    let mut rows = [[C64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        rows[i] = f(g[i]);
    }
    let mut out = [[C64::new(0.0, 0.0); 3]; 3];
    for j in 0..3 {
        let col = f([rows[0][j], rows[1][j], rows[2][j]]);
        for i in 0..3 {
            out[i][j] = col[i];
        }
    }
    out
}

fn group_slots(state: &OracleState, claw: (u64, u64)) -> BTreeMap<OracleLabel, SlotGrid> {
    let mut groups: BTreeMap<OracleLabel, SlotGrid> = BTreeMap::new();
    for (k, a) in state.sorted() {
        let rest = OracleLabel {
            regs: k.regs,
            db: k.db.without(claw.0).without(claw.1),
        };
        let g = groups.entry(rest).or_insert([[C64::new(0.0, 0.0); 3]; 3]);
        g[slot(k.db.get(claw.0))][slot(k.db.get(claw.1))] += a;
    }
    groups
}

/// Decomposes the state of `run` around repetition `i`.
pub fn decompose_state<I>(run: &CompressedRun<I>, i: usize) -> Result<StructureDecomposition> {
    let claws = run.claws()?;
    let claw = *claws
        .get(i)
        .ok_or_else(|| domain(format!("no repetition {i}")))?;
    let rule = run.target_rule()?;
    let mut classes = ClassWeights::default();
    for (k, a) in run.state.iter() {
        let w = a.norm_sqr();
        match (k.db.contains(claw.0), k.db.contains(claw.1)) {
            (true, false) => classes.x0_only += w,
            (false, true) => classes.x1_only += w,
            (true, true) => classes.both += w,
            (false, false) => classes.neither += w,
        }
    }
    let branches = group_slots(&run.state, claw)
        .into_iter()
        .map(|(rest, g)| {
            let n = transform(&g, to_sign_basis);
            let mut plus = 0.0;
            for (r, row) in n.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    if r == PLUS || c == PLUS {
                        plus += v.norm_sqr();
                    }
                }
            }
            BranchCoefficients {
                t: rule.target(i, rest.regs, claw.0 ^ claw.1),
                alpha: [n[MINUS][NEW_BOT], n[NEW_BOT][MINUS]],
                beta: n[MINUS][MINUS],
                gamma: n[NEW_BOT][NEW_BOT],
                plus,
                rest,
            }
        })
        .collect();
    Ok(StructureDecomposition {
        repetition: i,
        claw,
        branches,
        classes,
    })
}

/// The symmetrized state: `α_1 := (−1)^t α_0` and `γ := (−1)^t β` in every
/// group, all other coefficients kept.
pub fn symmetrized<I>(run: &CompressedRun<I>, i: usize) -> Result<OracleState> {
    let claw = *run
        .claws()?
        .get(i)
        .ok_or_else(|| domain(format!("no repetition {i}")))?;
    let rule = run.target_rule()?;
    let mut entries = Vec::new();
    for (rest, g) in group_slots(&run.state, claw) {
        let mut n = transform(&g, to_sign_basis);
        let s = sign(rule.target(i, rest.regs, claw.0 ^ claw.1));
        n[NEW_BOT][MINUS] = n[MINUS][NEW_BOT] * s;
        n[NEW_BOT][NEW_BOT] = n[MINUS][MINUS] * s;
        let v = transform(&n, to_value_basis);
        for (r, row) in v.iter().enumerate() {
            for (c, a) in row.iter().enumerate() {
                let mut db = rest.db.clone();
                if r != BOT {
                    db = db.with(claw.0, r as u8);
                }
                if c != BOT {
                    db = db.with(claw.1, c as u8);
                }
                entries.push((
                    OracleLabel {
                        regs: rest.regs,
                        db,
                    },
                    *a,
                ));
            }
        }
    }
    Ok(OracleState::from_entries(entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorReport {
    pub epsilon: f64,
    pub bound: f64,
    /// `‖ψ − ψ′‖²` per repetition, from the rebuilt state.
    pub residuals: Vec<f64>,
    /// The same quantity from the coefficient formula.
    pub formula_residuals: Vec<f64>,
    pub plus_weights: Vec<f64>,
    pub holds: bool,
}

/// Builds the symmetrized state for every repetition and compares it with
/// the actual one. `epsilon` defaults to one minus the validity probability.
pub fn check_xor_structure<I>(run: &CompressedRun<I>, epsilon: Option<f64>) -> Result<XorReport> {
    let epsilon = match epsilon {
        Some(e) => e,
        None => 1.0 - run.validity()?,
    };
    let bound = 2.0 * epsilon;
    let mut rep = XorReport {
        epsilon,
        bound,
        residuals: Vec::new(),
        formula_residuals: Vec::new(),
        plus_weights: Vec::new(),
        holds: true,
    };
    for i in 0..run.repetitions() {
        let r = run.state.distance_sqr(&symmetrized(run, i)?);
        let dec = decompose_state(run, i)?;
        rep.holds &= r <= bound + STATE_TOL;
        rep.residuals.push(r);
        rep.formula_residuals.push(dec.xor_residual());
        rep.plus_weights.push(dec.plus_weight());
    }
    Ok(rep)
}

/// A run whose state had the sign of its `x_1`-only labels flipped inside
/// a block of registers.
#[derive(Debug, Clone)]
pub struct PhaseBroken<I> {
    pub run: CompressedRun<I>,
    /// Weight of the flipped labels.
    pub flipped_weight: f64,
    /// The residual this construction must produce: twice the weight of
    /// the broken block, which is four times the flipped weight.
    pub constructed_residual: f64,
}

/// Flips the sign of every label of repetition `i` holding `x_1` but not
/// `x_0` whose registers satisfy `block`.
pub fn break_phase<I: Clone>(
    run: &CompressedRun<I>,
    i: usize,
    block: impl Fn(u64) -> bool,
) -> Result<PhaseBroken<I>> {
    let (x0, x1) = *run
        .claws()?
        .get(i)
        .ok_or_else(|| domain(format!("no repetition {i}")))?;
    let hit = |k: &OracleLabel| k.db.contains(x1) && !k.db.contains(x0) && block(k.regs);
    let flipped_weight = run.state.filter(|k| hit(k)).norm_sqr();
    let state = run
        .state
        .map_phase(|k| C64::new(if hit(k) { -1.0 } else { 1.0 }, 0.0));
    let mut broken = run.clone();
    broken.state = state;
    Ok(PhaseBroken {
        run: broken,
        flipped_weight,
        constructed_residual: 4.0 * flipped_weight,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub repetitions: usize,
    pub l: usize,
    pub no_claw_norm: f64,
    pub at_most_norm: f64,
    pub precondition: bool,
    pub validity: f64,
    pub bound: f64,
    /// `None` when the precondition fails and the check is skipped.
    pub holds: Option<bool>,
}

/// Checks `‖Π_valid DecompAll ψ‖² ≤ 2^{l−L}` for a state inside the
/// no-claw and at-most-`l` subspaces.
pub fn check_no_preimage_bound<I>(run: &CompressedRun<I>, l: usize) -> Result<BoundReport> {
    let big_l = run.repetitions();
    let no_claw_norm = apply_projector(&run.projector(ProjectorKind::NoClaw)?, &run.state)?.1;
    let at_most_norm = apply_projector(&run.projector(ProjectorKind::AtMost(l))?, &run.state)?.1;
    let precondition = no_claw_norm >= 1.0 - STATE_TOL && at_most_norm >= 1.0 - STATE_TOL;
    let validity = run.validity()?;
    let bound = 2f64.powi(l as i32 - big_l as i32).min(1.0);
    Ok(BoundReport {
        repetitions: big_l,
        l,
        no_claw_norm,
        at_most_norm,
        precondition,
        validity,
        bound,
        holds: precondition.then_some(validity <= bound + STATE_TOL),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanStructureReport {
    pub strategy: String,
    pub n: u32,
    pub keys: usize,
    /// Ensemble validity minus one half.
    pub delta: f64,
    pub beta_weight: f64,
    pub alpha_weight: f64,
    pub phase_mismatch: f64,
    pub clause_i: bool,
    pub clause_ii: bool,
    pub clause_iii: bool,
    pub pass: bool,
}

/// Single-repetition coherent runs of `strategy` over the keys generated
/// from `key_seeds`, averaged.
pub fn check_clean_structure(
    strategy: &ProverStrategy,
    n: u32,
    key_seeds: &[u64],
    seed: u64,
) -> Result<CleanStructureReport> {
    if key_seeds.is_empty() {
        return Err(param("the key ensemble is empty"));
    }
    let mut sums = [
        KahanSum::default(),
        KahanSum::default(),
        KahanSum::default(),
        KahanSum::default(),
    ];
    for (j, &ks) in key_seeds.iter().enumerate() {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, n, ks)?;
        let mut rng = trial_rng(seed, j as u64);
        let run = explain(strategy, 0, &f, 1, OutputMode::Coherent, &mut rng)?;
        let dec = decompose_state(&run, 0)?;
        sums[0].add(run.validity()?);
        sums[1].add(dec.beta_weight());
        sums[2].add(dec.alpha_weight());
        sums[3].add(dec.phase_mismatch());
    }
    let k = key_seeds.len() as f64;
    let [valid, beta, alpha, mismatch] = sums.map(|s| s.value() / k);
    let delta = valid - 0.5;
    let clause_i = beta <= 1e-12;
    let clause_ii = alpha >= 2.0 * delta - CLEAN_SLACK;
    let clause_iii = mismatch <= alpha - 2.0 * delta + CLEAN_SLACK;
    Ok(CleanStructureReport {
        strategy: strategy.name(),
        n,
        keys: key_seeds.len(),
        delta,
        beta_weight: beta,
        alpha_weight: alpha,
        phase_mismatch: mismatch,
        clause_i,
        clause_ii,
        clause_iii,
        pass: clause_i && clause_ii && clause_iii,
    })
}

/// Claw of every image as database inputs, or `None` if any image has none.
fn verifier_claws<F: Ntcf>(f: &F, y: &[F::Image]) -> Option<Vec<(u64, u64)>> {
    y.iter()
        .map(|yi| {
            let (a, b) = f.claw(yi)?;
            Some((u64::try_from(a).ok()?, u64::try_from(b).ok()?))
        })
        .collect()
}

fn answer_bits(layout: &RegisterLayout, l: usize) -> Result<Vec<u32>> {
    if layout.reg("A")?.width as usize != l {
        return Err(domain(
            "answer register width does not match the repetitions",
        ));
    }
    (0..l as u32).map(|i| layout.bit("A", i)).collect()
}

/// `A_i ← H(x_0^i) ⊕ H(x_1^i)` by phase kickback: Hadamard, two controlled
/// queries, Hadamard. The map is its own inverse.
fn answer_layer(
    state: &OracleState,
    bits: &[u32],
    claws: &[(u64, u64)],
    cap: usize,
) -> OracleState {
    let mut s = state.clone();
    for (&a, &(x0, x1)) in bits.iter().zip(claws) {
        s = hadamard_bits(&s, [a]);
        s = cpho_query_at(&s, x0, a, Some(cap));
        s = cpho_query_at(&s, x1, a, Some(cap));
        s = hadamard_bits(&s, [a]);
    }
    s
}

fn flag_layer(
    state: &OracleState,
    layout: &RegisterLayout,
    bits: &[u32],
    claws: &[(u64, u64)],
    rule: &TargetRule,
) -> Result<OracleState> {
    xor_into(state, layout, "Q", |regs| {
        bits.iter()
            .zip(claws)
            .enumerate()
            .all(|(i, (&a, &(x0, x1)))| ((regs >> a) & 1) as u8 == rule.target(i, regs, x0 ^ x1))
            as u64
    })
}

/// Outcome of the verifier on a state.
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub accepted: bool,
    /// Probability of the observed outcome.
    pub probability: f64,
    /// Post-measurement state with the answer layer undone and `Q` cleared.
    pub state: OracleState,
    pub note: Option<String>,
}

/// Everything the verifier reads besides the state.
#[derive(Debug, Clone, Copy)]
pub struct VerifierInput<'a, I> {
    pub layout: &'a RegisterLayout,
    pub y: &'a [I],
    pub rule: &'a TargetRule,
    pub cap: usize,
}

impl<'a, I> VerifierInput<'a, I> {
    pub fn for_run(run: &'a CompressedRun<I>, rule: &'a TargetRule) -> Self {
        VerifierInput {
            layout: &run.layout,
            y: &run.y,
            rule,
            cap: run.cap,
        }
    }
}

/// The unnormalized accepting branch and its probability, after the answer
/// layer has been undone. `None` when some image has no claw.
pub fn accept_branch<F: Ntcf>(
    f: &F,
    input: &VerifierInput<'_, F::Image>,
    state: &OracleState,
) -> Result<Option<(f64, OracleState)>> {
    let Some(claws) = verifier_claws(f, input.y) else {
        return Ok(None);
    };
    let bits = answer_bits(input.layout, input.y.len())?;
    let q_bit = input.layout.bit("Q", 0)?;
    let s = answer_layer(state, &bits, &claws, input.cap);
    let s = flag_layer(&s, input.layout, &bits, &claws, input.rule)?;
    let acc = s.filter(|k| (k.regs >> q_bit) & 1 == 1);
    let p = acc.norm_sqr();
    let acc = answer_layer(&acc, &bits, &claws, input.cap);
    let acc = clear_register(&acc, input.layout, "Q").unwrap_or(acc);
    Ok(Some((p, acc)))
}

/// Runs the verifier and measures its flag.
pub fn verify_compressed<F: Ntcf, R: Rng + ?Sized>(
    f: &F,
    input: &VerifierInput<'_, F::Image>,
    state: &OracleState,
    rng: &mut R,
) -> Result<VerifyOutcome> {
    let Some(claws) = verifier_claws(f, input.y) else {
        return Ok(VerifyOutcome {
            accepted: false,
            probability: 1.0,
            state: state.clone(),
            note: Some("an image has no claw".into()),
        });
    };
    let bits = answer_bits(input.layout, input.y.len())?;
    let s = answer_layer(state, &bits, &claws, input.cap);
    let s = flag_layer(&s, input.layout, &bits, &claws, input.rule)?;
    let out = measure(&s, input.layout, "Q", rng)?;
    let s = answer_layer(&out.post_state, &bits, &claws, input.cap);
    let s = clear_register(&s, input.layout, "Q")?;
    Ok(VerifyOutcome {
        accepted: out.value == 1,
        probability: out.probability,
        state: s,
        note: None,
    })
}

/// The verifier against a concrete oracle: every claw exists and
/// `H(x_0) ⊕ H(x_1) = z′_i ⊕ m ⊕ d_i·(x_0 ⊕ x_1)`.
pub fn verify_concrete<F: Ntcf>(
    f: &F,
    h: &dyn RandomOracle,
    c: &ParallelCiphertext<F::Image>,
    m: u8,
) -> bool {
    c.validate(f.input_bits()).is_ok()
        && (0..c.len()).all(|i| match f.claw(&c.y[i]) {
            Some((x0, x1)) => {
                h.eval(x0) ^ h.eval(x1) == c.z_prime[i] ^ m ^ parity128(c.d[i] & (x0 ^ x1))
            }
            None => false,
        })
}

/// Pattern of `db` with respect to `y`, found by evaluating the public
/// check on every database input.
pub fn pattern_by_chk<F: Ntcf>(f: &F, db: &Database, y: &F::Image) -> PreimagePattern {
    let has = |b: u8| db.inputs().any(|x| f.chk(b, x as u128, y));
    PreimagePattern::from_presence(has(0), has(1))
}

fn find_preimage<F: Ntcf>(f: &F, db: &Database, b: u8, y: &F::Image) -> Option<u64> {
    db.inputs().find(|&x| f.chk(b, x as u128, y))
}

/// Largest prefix length sampled by the extractor.
pub fn prefix_limit(l: usize) -> usize {
    l.div_ceil(2).max(1)
}

/// A claw reported by the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundClaw {
    pub repetition: usize,
    pub x0: u128,
    pub x1: u128,
}

/// What happened in one extraction trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionTrial {
    pub prefix: usize,
    pub s: u8,
    pub patterns: Vec<PreimagePattern>,
    /// The outcome was `(⊥^{i−1}, s)`.
    pub pattern_match: bool,
    /// Preimages recorded after the pattern measurement: `(i, b, x_b)`.
    pub recorded: Vec<(usize, u8, u64)>,
    pub accepted: bool,
    pub claw: Option<FoundClaw>,
    /// The claw passes both public checks.
    pub claw_verified: bool,
}

/// Records every preimage that the measured patterns reveal.
fn record<F: Ntcf>(
    f: &F,
    state: &OracleState,
    y: &[F::Image],
    patterns: &[PreimagePattern],
) -> Vec<(usize, u8, u64)> {
    let Some((k, _)) = state.iter().next() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, p) in patterns.iter().enumerate() {
        let bits: &[u8] = match p {
            PreimagePattern::Neither => &[],
            PreimagePattern::Only(0) => &[0],
            PreimagePattern::Only(_) => &[1],
            PreimagePattern::Both => &[0, 1],
        };
        for &b in bits {
            if let Some(x) = find_preimage(f, &k.db, b, &y[i]) {
                out.push((i, b, x));
            }
        }
    }
    out
}

fn claw_in<F: Ntcf>(
    f: &F,
    db: &Database,
    y: &[F::Image],
    recorded: &[(usize, u8, u64)],
) -> Option<FoundClaw> {
    recorded.iter().find_map(|&(i, b, x)| {
        let other = find_preimage(f, db, 1 - b, &y[i])? as u128;
        let (x0, x1) = if b == 0 {
            (x as u128, other)
        } else {
            (other, x as u128)
        };
        Some(FoundClaw {
            repetition: i,
            x0,
            x1,
        })
    })
}

/// One run of the extractor: explain, measure a prefix pattern, verify, and
/// on acceptance measure the database.
pub fn extract_claw_trial<F: Ntcf, R: Rng + ?Sized>(
    f: &F,
    strategy: &ProverStrategy,
    l: usize,
    rng: &mut R,
) -> Result<ExtractionTrial> {
    let m: u8 = rng.random_range(0..2);
    let run = explain(strategy, m, f, l, OutputMode::Measured, rng)?;
    let prefix = rng.random_range(1..=prefix_limit(l));
    let s: u8 = rng.random_range(0..2);
    let reps: Vec<usize> = (0..prefix).collect();
    let (patterns, _, post) = measure_patterns(
        &run.state,
        &reps,
        |db, j| pattern_by_chk(f, db, &run.y[j]),
        rng,
    );
    let pattern_match = patterns[..prefix - 1]
        .iter()
        .all(|&p| p == PreimagePattern::Neither)
        && patterns[prefix - 1] == PreimagePattern::Only(s);
    let recorded = record(f, &post, &run.y, &patterns);
    let rule = run.target_rule()?;
    let vo = verify_compressed(f, &VerifierInput::for_run(&run, &rule), &post, rng)?;
    let mut trial = ExtractionTrial {
        prefix,
        s,
        patterns,
        pattern_match,
        recorded,
        accepted: vo.accepted,
        claw: None,
        claw_verified: false,
    };
    if vo.accepted {
        let table: Vec<(OracleLabel, f64)> = vo
            .state
            .sorted()
            .into_iter()
            .map(|(k, a)| (k, a.norm_sqr()))
            .collect();
        let idx: Vec<(u64, f64)> = table
            .iter()
            .enumerate()
            .map(|(i, e)| (i as u64, e.1))
            .collect();
        let db = &table[sample_index(&idx, rng) as usize].0.db;
        trial.claw = claw_in(f, db, &run.y, &trial.recorded);
        trial.claw_verified = trial.claw.is_some_and(|c| {
            let y = &run.y[c.repetition];
            f.chk(0, c.x0, y) && f.chk(1, c.x1, y)
        });
    }
    Ok(trial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub strategy: String,
    pub family: FamilyTag,
    pub n: u32,
    pub repetitions: usize,
    pub trials: u64,
    pub seed: u64,
    /// Trials in which the pattern measurement revealed a preimage.
    pub preimage_found: u64,
    /// Revealed preimage bits, first recorded preimage per trial.
    pub preimage_bits: [u64; 2],
    pub pattern_matches: u64,
    pub accepts: u64,
    pub claws: u64,
    pub claws_verified: u64,
    pub claw_rate: f64,
    pub accept_rate: f64,
    pub verifier: String,
}

/// Independent extraction trials against one key.
pub fn extract_claw<F: Ntcf>(
    f: &F,
    strategy: &ProverStrategy,
    l: usize,
    trials: u64,
    seed: u64,
) -> Result<ExtractionReport> {
    if trials == 0 {
        return Err(param("at least one trial is required"));
    }
    let outcomes: Vec<ExtractionTrial> = (0..trials)
        .into_par_iter()
        .map(|t| extract_claw_trial(f, strategy, l, &mut trial_rng(seed, t)))
        .collect::<Result<_>>()?;
    let mut r = ExtractionReport {
        strategy: strategy.name(),
        family: f.family(),
        n: f.input_bits(),
        repetitions: l,
        trials,
        seed,
        preimage_found: 0,
        preimage_bits: [0, 0],
        pattern_matches: 0,
        accepts: 0,
        claws: 0,
        claws_verified: 0,
        claw_rate: 0.0,
        accept_rate: 0.0,
        verifier: "trapdoored canonical verifier".into(),
    };
    for o in &outcomes {
        if let Some(&(_, b, _)) = o.recorded.first() {
            r.preimage_found += 1;
            r.preimage_bits[b as usize] += 1;
        }
        r.pattern_matches += o.pattern_match as u64;
        r.accepts += o.accepted as u64;
        r.claws += o.claw.is_some() as u64;
        r.claws_verified += o.claw_verified as u64;
    }
    r.claw_rate = r.claws_verified as f64 / trials as f64;
    r.accept_rate = r.accepts as f64 / trials as f64;
    Ok(r)
}

/// Exact probability that the extractor outputs a claw, given the state and
/// transcript left by one run of the strategy: every pattern outcome,
/// verifier outcome and database outcome is enumerated with its weight.
pub fn extraction_exact_rate<F: Ntcf>(f: &F, run: &CompressedRun<F::Image>) -> Result<f64> {
    let rule = run.target_rule()?;
    let input = VerifierInput::for_run(run, &rule);
    let limit = prefix_limit(run.repetitions());
    let mut total = KahanSum::default();
    for prefix in 1..=limit {
        let reps: Vec<usize> = (0..prefix).collect();
        let classify = |db: &Database, j: usize| pattern_by_chk(f, db, &run.y[j]);
        for (patterns, p) in pattern_distribution(&run.state, &reps, classify) {
            if p <= 0.0 {
                continue;
            }
            let mut post = run.state.filter(|k| {
                reps.iter()
                    .zip(&patterns)
                    .all(|(&j, &b)| classify(&k.db, j) == b)
            });
            post.normalize();
            let recorded = record(f, &post, &run.y, &patterns);
            let Some((pa, acc)) = accept_branch(f, &input, &post)? else {
                continue;
            };
            if pa <= 0.0 {
                continue;
            }
            let pc: f64 = acc
                .iter()
                .filter(|(k, _)| claw_in(f, &k.db, &run.y, &recorded).is_some())
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
                / pa;
            total.add(p * pa * pc / limit as f64);
        }
    }
    Ok(total.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::SparseState;
    use crate::unexplainable::{compressed_layout, sample_oracle, unexp_enc_concrete};

    fn key(n: u32, seed: u64) -> ExactPair {
        ExactPair::generate(FamilyTag::ExactClawFree, n, seed).unwrap()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ["honest", "noquery", "partial:2", "mixture"] {
            assert_eq!(s.parse::<ProverStrategy>().unwrap().name(), s);
        }
        assert!("partial:x".parse::<ProverStrategy>().is_err());
    }

    #[test]
    fn honest_structure_is_symmetric() {
        let f = key(6, 1);
        for (l, mode) in [
            (1, OutputMode::Coherent),
            (1, OutputMode::Measured),
            (3, OutputMode::Measured),
        ] {
            let mut rng = trial_rng(4, l as u64);
            let run = explain(&ProverStrategy::Honest, 1, &f, l, mode, &mut rng).unwrap();
            let rep = check_xor_structure(&run, None).unwrap();
            assert!(rep.epsilon.abs() < 1e-10);
            for i in 0..l {
                assert!(rep.residuals[i] <= 1e-10);
                assert!((rep.residuals[i] - rep.formula_residuals[i]).abs() < 1e-10);
                let d = decompose_state(&run, i).unwrap();
                assert!(d.classes.both < 1e-12 && d.classes.neither < 1e-12);
                assert!((d.classes.x0_only - d.classes.x1_only).abs() < 1e-10);
                assert!((d.total_weight() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn phase_break_matches_construction() {
        let f = key(6, 2);
        let mut rng = trial_rng(5, 0);
        let run = explain(
            &ProverStrategy::Honest,
            0,
            &f,
            1,
            OutputMode::Coherent,
            &mut rng,
        )
        .unwrap();
        let xbit = run.layout.bit("X", 0).unwrap();
        let broken = break_phase(&run, 0, |r| (r >> xbit) & 1 == 0).unwrap();
        assert!((broken.flipped_weight - 0.25).abs() < 1e-10);
        let rep = check_xor_structure(&broken.run, None).unwrap();
        assert!((rep.residuals[0] - broken.constructed_residual).abs() < 1e-10);
        assert!((rep.residuals[0] - rep.bound).abs() < 1e-10);
    }

    #[test]
    fn guessing_meets_the_bound_with_equality() {
        let f = key(6, 3);
        for (strategy, l, expected) in [
            (ProverStrategy::NoQueryGuess, 0, 0.125),
            (ProverStrategy::PartialQuery(1), 1, 0.25),
            (ProverStrategy::PartialQuery(2), 2, 0.5),
        ] {
            let mut rng = trial_rng(6, l as u64);
            let run = explain(&strategy, 0, &f, 3, OutputMode::Measured, &mut rng).unwrap();
            let r = check_no_preimage_bound(&run, l).unwrap();
            assert!(r.precondition);
            assert!((r.validity - expected).abs() < 1e-12);
            assert_eq!(r.holds, Some(true));
        }
        let mut rng = trial_rng(6, 9);
        let run = explain(
            &ProverStrategy::Honest,
            0,
            &f,
            3,
            OutputMode::Measured,
            &mut rng,
        )
        .unwrap();
        let r = check_no_preimage_bound(&run, 1).unwrap();
        assert!(!r.precondition);
        assert_eq!(r.holds, None);
    }

    #[test]
    fn clean_structure_deltas() {
        let seeds = [1, 2, 3];
        for (s, delta) in [
            (ProverStrategy::Honest, 0.5),
            (ProverStrategy::NoQueryGuess, 0.0),
            (ProverStrategy::mixture(), 0.25),
        ] {
            let r = check_clean_structure(&s, 5, &seeds, 8).unwrap();
            assert!(
                (r.delta - delta).abs() < 1e-10,
                "{} {}",
                r.strategy,
                r.delta
            );
            assert!(r.pass);
        }
    }

    #[test]
    fn verifier_accepts_honest_and_random_half() {
        let f = key(6, 4);
        let mut rng = trial_rng(7, 0);
        let run = explain(
            &ProverStrategy::Honest,
            1,
            &f,
            2,
            OutputMode::Measured,
            &mut rng,
        )
        .unwrap();
        let rule = run.target_rule().unwrap();
        let (p, _) = accept_branch(&f, &VerifierInput::for_run(&run, &rule), &run.state)
            .unwrap()
            .unwrap();
        assert!((p - 1.0).abs() < 1e-10);

        let layout = compressed_layout(6, 1).unwrap();
        let empty = SparseState::basis(OracleLabel::new(0));
        for trial in 0..8 {
            let y = vec![f.key.eval(0, trial * 7 % 64)];
            let rule = TargetRule::Ciphertext {
                z_prime: vec![(trial % 2) as u8],
                d: vec![trial as u128],
                m: 0,
            };
            let input = VerifierInput {
                layout: &layout,
                y: &y,
                rule: &rule,
                cap: 3,
            };
            let (p, _) = accept_branch(&f, &input, &empty).unwrap().unwrap();
            assert!((p - 0.5).abs() < 1e-12);
        }
        let y = vec![1u64 << 20];
        let rule = TargetRule::Ciphertext {
            z_prime: vec![0],
            d: vec![0],
            m: 0,
        };
        let input = VerifierInput {
            layout: &layout,
            y: &y,
            rule: &rule,
            cap: 3,
        };
        assert!(accept_branch(&f, &input, &empty).unwrap().is_none());
    }

    #[test]
    fn concrete_verifier_agrees_with_decryption() {
        let f = key(8, 5);
        let h = sample_oracle(8, 1);
        let mut rng = trial_rng(8, 0);
        for _ in 0..50 {
            let c = unexp_enc_concrete(1, &f, h.as_ref(), 3, &mut rng).unwrap();
            assert!(verify_concrete(&f, h.as_ref(), &c, 1));
            assert!(!verify_concrete(&f, h.as_ref(), &c, 0));
        }
    }

    #[test]
    fn extraction_rates() {
        let f = key(8, 6);
        let r = extract_claw(&f, &ProverStrategy::Honest, 2, 200, 3).unwrap();
        assert_eq!(r.claws, r.claws_verified);
        assert!(r.claws <= r.accepts && r.accepts <= r.trials);
        assert!(r.claw_rate > 0.1);
        let mut rng = trial_rng(9, 0);
        let run = explain(
            &ProverStrategy::Honest,
            0,
            &f,
            2,
            OutputMode::Measured,
            &mut rng,
        )
        .unwrap();
        let exact = extraction_exact_rate(&f, &run).unwrap();
        assert!((exact - 0.25).abs() < 1e-10, "{exact}");
        let r = extract_claw(&f, &ProverStrategy::NoQueryGuess, 2, 200, 3).unwrap();
        assert_eq!(r.claws, 0);
        let twin = ExactPair::generate(FamilyTag::InjectiveTwin, 8, 6).unwrap();
        let r = extract_claw(&twin, &ProverStrategy::Honest, 2, 50, 3).unwrap();
        assert_eq!(r.claws, 0);
        assert_eq!(r.accepts, 0);
    }
}
