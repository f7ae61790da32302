//! The `L`-fold parallel-repeated encryption scheme relative to a random
//! oracle `H: {0,1}^n → {0,1}`.
//!
//! Each repetition collapses the range superposition onto an image `y_i`,
//! queries the phase oracle on the preimage register, applies a Hadamard
//! layer and measures `(z_i, d_i)`. The honest outcome obeys
//! `z_i = d_i·(x_0 ⊕ x_1) ⊕ H(x_0) ⊕ H(x_1)`, and the ciphertext carries
//! `z′_i = z_i ⊕ m`. Decryption recomputes every `m_i` and outputs the common
//! value, or `⊥` when they disagree.
//!
//! Two oracle modes are offered. A concrete oracle (truth table or keyed
//! hash) supports decryption and large statistical runs. The compressed
//! oracle keeps the purified database in the state so that projectors on
//! the database can be applied afterwards; every repetition shares the same
//! oracle.
//!
//! Bit strings are little-endian throughout: bit `i` of a word is its
//! `i`-th least significant bit, and packed bit vectors put element `i` in
//! byte `i / 8`, bit `i % 8`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compressed_oracle::{
    cpho_query_controlled, decomp_all, Database, OracleLabel, OracleState,
};
use crate::deniable::CorrectnessStats;
use crate::distances::KahanSum;
use crate::error::{domain, param, Error, Result};
use crate::qsim::{
    clear_register, collapse, hadamard_all, hadamard_bits, measure, parity128,
    sample_hadamard_two_branch, sample_index, x_bit, RegisterLayout, SparseState, C64,
};
use crate::rng::trial_rng;
use crate::tcf::Ntcf;

/// Largest `L` for runs that keep the compressed database in the state.
pub const MAX_L_COMPRESSED: usize = 4;
/// Largest `L` for runs against a concrete oracle.
pub const MAX_L_CONCRETE: usize = 16;
/// Widest input for which a sampled oracle is stored as a truth table.
pub const TRUTH_TABLE_MAX_BITS: u32 = 16;

/// A fixed Boolean function standing in for one draw of the random oracle.
pub trait RandomOracle: Send + Sync {
    fn eval(&self, x: u128) -> u8;
}

/// A uniformly sampled truth table on `n ≤ 24` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    n: u32,
    words: Vec<u64>,
}

impl TruthTable {
    pub fn random<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Result<Self> {
        if n > 24 {
            return Err(param("truth tables are limited to 24 input bits"));
        }
        let len = (1usize << n).div_ceil(64);
        Ok(TruthTable {
            n,
            words: (0..len).map(|_| rng.random()).collect(),
        })
    }

    pub fn from_fn(n: u32, h: impl Fn(u64) -> u8) -> Result<Self> {
        if n > 24 {
            return Err(param("truth tables are limited to 24 input bits"));
        }
        let mut words = vec![0u64; (1usize << n).div_ceil(64)];
        for x in 0..(1u64 << n) {
            if h(x) & 1 == 1 {
                words[(x / 64) as usize] |= 1 << (x % 64);
            }
        }
        Ok(TruthTable { n, words })
    }

    pub fn n(&self) -> u32 {
        self.n
    }
}

impl RandomOracle for TruthTable {
    fn eval(&self, x: u128) -> u8 {
        let x = (x & ((1u128 << self.n) - 1)) as u64;
        ((self.words[(x / 64) as usize] >> (x % 64)) & 1) as u8
    }
}

/// `H(x)` = low bit of `SHA-256(key ‖ x)` with `x` as 16 little-endian bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyedOracle {
    key: [u8; 32],
}

impl KeyedOracle {
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"qdeny-oracle");
        h.update(seed.to_le_bytes());
        KeyedOracle {
            key: h.finalize().into(),
        }
    }
}

impl RandomOracle for KeyedOracle {
    fn eval(&self, x: u128) -> u8 {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(x.to_le_bytes());
        h.finalize()[0] & 1
    }
}

/// A truth table for narrow inputs, a keyed hash otherwise.
pub fn sample_oracle(input_bits: u32, seed: u64) -> Box<dyn RandomOracle> {
    if input_bits <= TRUTH_TABLE_MAX_BITS {
        let mut rng = trial_rng(seed, 0);
        Box::new(TruthTable::random(input_bits, &mut rng).expect("width checked"))
    } else {
        Box::new(KeyedOracle::from_seed(seed))
    }
}

/// Ciphertext `(z′, d, y)` with one component per repetition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCiphertext<I> {
    pub z_prime: Vec<u8>,
    pub d: Vec<u128>,
    pub y: Vec<I>,
}

/// Wire format: `z′` as a packed bit vector, `d` as the concatenation of
/// `⌈n/8⌉`-byte words, and one hex string per image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelWire {
    pub z_prime: String,
    pub d: String,
    pub y: Vec<String>,
}

fn hex_decode(s: &str) -> Result<Vec<u8>> {
    hex::decode(s).map_err(|e| Error::Serialization(e.to_string()))
}

impl<I> ParallelCiphertext<I> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Component counts agree, `z′` holds bits and every `d_i` fits in `n` bits.
    pub fn validate(&self, input_bits: u32) -> Result<()> {
        let l = self.y.len();
        if self.z_prime.len() != l || self.d.len() != l {
            return Err(domain("ciphertext components have different lengths"));
        }
        if l == 0 {
            return Err(domain("ciphertext has no repetitions"));
        }
        if self.z_prime.iter().any(|&z| z > 1) {
            return Err(domain("z′ entries must be bits"));
        }
        if input_bits < 128 && self.d.iter().any(|d| d >> input_bits != 0) {
            return Err(domain("d is wider than the key's input length"));
        }
        Ok(())
    }

    pub fn to_wire<F: Ntcf<Image = I>>(&self, f: &F) -> ParallelWire {
        let mut z = vec![0u8; self.z_prime.len().div_ceil(8)];
        for (i, &b) in self.z_prime.iter().enumerate() {
            z[i / 8] |= (b & 1) << (i % 8);
        }
        let nb = f.input_bits().div_ceil(8) as usize;
        let mut d = Vec::with_capacity(nb * self.d.len());
        for di in &self.d {
            d.extend_from_slice(&di.to_le_bytes()[..nb]);
        }
        ParallelWire {
            z_prime: hex::encode(z),
            d: hex::encode(d),
            y: self
                .y
                .iter()
                .map(|y| hex::encode(f.image_to_bytes(y)))
                .collect(),
        }
    }

    pub fn from_wire<F: Ntcf<Image = I>>(w: &ParallelWire, f: &F) -> Result<Self> {
        let l = w.y.len();
        let z_bytes = hex_decode(&w.z_prime)?;
        if z_bytes.len() != l.div_ceil(8) {
            return Err(domain("z′ has the wrong length"));
        }
        let z_prime: Vec<u8> = (0..l).map(|i| (z_bytes[i / 8] >> (i % 8)) & 1).collect();
        if !l.is_multiple_of(8) && z_bytes[l / 8] >> (l % 8) != 0 {
            return Err(domain("z′ has bits set past the last repetition"));
        }
        let nb = f.input_bits().div_ceil(8) as usize;
        let d_bytes = hex_decode(&w.d)?;
        if nb > 16 || d_bytes.len() != nb * l {
            return Err(domain("d has the wrong length"));
        }
        let d = d_bytes
            .chunks(nb)
            .map(|c| {
                let mut buf = [0u8; 16];
                buf[..nb].copy_from_slice(c);
                u128::from_le_bytes(buf)
            })
            .collect();
        let y =
            w.y.iter()
                .map(|s| f.image_from_bytes(&hex_decode(s)?))
                .collect::<Result<Vec<_>>>()?;
        let c = ParallelCiphertext { z_prime, d, y };
        c.validate(f.input_bits())?;
        Ok(c)
    }
}

/// Encryption against a concrete oracle.
pub fn unexp_enc_concrete<F: Ntcf, R: Rng + ?Sized>(
    m: u8,
    f: &F,
    h: &dyn RandomOracle,
    l: usize,
    rng: &mut R,
) -> Result<ParallelCiphertext<F::Image>> {
    if m > 1 {
        return Err(domain("the plaintext must be a bit"));
    }
    if l == 0 || l > MAX_L_CONCRETE {
        return Err(param(format!("L must lie in 1..={MAX_L_CONCRETE}")));
    }
    let mut c = ParallelCiphertext {
        z_prime: Vec::new(),
        d: Vec::new(),
        y: Vec::new(),
    };
    for _ in 0..l {
        let col = collapse(f, rng)?;
        let branches: Vec<(u8, u128, C64)> = col
            .branches
            .iter()
            .map(|&(b, x, a)| (b, x, C64::new(if h.eval(x) == 1 { -a } else { a }, 0.0)))
            .collect();
        let out = sample_hadamard_two_branch(&branches, f.input_bits(), rng);
        c.z_prime.push(out.z ^ m);
        c.d.push(out.d);
        c.y.push(col.y);
    }
    Ok(c)
}

/// Result of decryption: a plaintext bit or `⊥` with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decryption {
    Message(u8),
    Reject(String),
}

impl Decryption {
    pub fn message(&self) -> Option<u8> {
        match self {
            Decryption::Message(m) => Some(*m),
            Decryption::Reject(_) => None,
        }
    }
}

/// `m_i = z′_i ⊕ d_i·(x_0 ⊕ x_1) ⊕ H(x_0) ⊕ H(x_1)` per repetition, then
/// unanimity.
pub fn unexp_dec<F: Ntcf>(
    c: &ParallelCiphertext<F::Image>,
    f: &F,
    h: &dyn RandomOracle,
) -> Decryption {
    if let Err(e) = c.validate(f.input_bits()) {
        return Decryption::Reject(e.to_string());
    }
    let mut common = None;
    for i in 0..c.len() {
        let Some((x0, x1)) = f.claw(&c.y[i]) else {
            return Decryption::Reject(format!("repetition {i}: the image has no claw"));
        };
        let mi = c.z_prime[i] ^ parity128(c.d[i] & (x0 ^ x1)) ^ h.eval(x0) ^ h.eval(x1);
        match common {
            None => common = Some(mi),
            Some(m) if m != mi => {
                return Decryption::Reject(format!("repetition {i} disagrees with repetition 0"))
            }
            _ => {}
        }
    }
    Decryption::Message(common.expect("at least one repetition"))
}

/// Round trips with a fresh oracle and random plaintext per trial.
pub fn unexp_correctness<F: Ntcf>(f: &F, l: usize, trials: u64, seed: u64) -> CorrectnessStats {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let h = sample_oracle(f.input_bits(), rng.random());
            let m: u8 = rng.random_range(0..2);
            let mut s = CorrectnessStats {
                trials: 1,
                ..Default::default()
            };
            if let Ok(c) = unexp_enc_concrete(m, f, h.as_ref(), l, &mut rng) {
                let ok = unexp_dec(&c, f, h.as_ref()).message() == Some(m);
                s.decrypted = ok as u64;
                s.equation_holds = ok as u64;
                s.z_ones = c.z_prime.iter().map(|&z| z as u64).sum();
            }
            s
        })
        .reduce(CorrectnessStats::default, CorrectnessStats::merge)
}

/// When a repetition's oracle query is issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryPolicy {
    Always,
    Never,
    /// Controlled on the witness qubit `W` being `|0⟩`.
    WhenWitnessZero,
}

/// Whether `(z, d)` are measured after each repetition or left coherent in
/// the `B` and `X` registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    Measured,
    Coherent,
}

/// Layout `B(1) | X(n) | E(1) | W(1) | A(L) | Q(1)`: the bit and input
/// registers of the current repetition, the phase-control qubit, a witness
/// qubit for mixed strategies, and the verifier's answer and flag qubits.
pub fn compressed_layout(n: u32, l: usize) -> Result<RegisterLayout> {
    if l == 0 || l > MAX_L_COMPRESSED {
        return Err(param(format!(
            "L must lie in 1..={MAX_L_COMPRESSED} under the compressed oracle"
        )));
    }
    RegisterLayout::from_widths([
        ("B", 1),
        ("X", n),
        ("E", 1),
        ("W", 1),
        ("A", l as u32),
        ("Q", 1),
    ])
}

/// Where the target bit `t_i` of equation `i` comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetRule {
    /// `t_i = z′_i ⊕ m ⊕ d_i·s_i` from a classical ciphertext.
    Ciphertext {
        z_prime: Vec<u8>,
        d: Vec<u128>,
        m: u8,
    },
    /// `t = B ⊕ X·s` read from the unmeasured registers (one repetition).
    Registers {
        b_bit: u32,
        x_offset: u32,
        x_mask: u64,
    },
}

impl TargetRule {
    pub fn coherent(layout: &RegisterLayout) -> Result<Self> {
        let x = layout.reg("X")?;
        Ok(TargetRule::Registers {
            b_bit: layout.bit("B", 0)?,
            x_offset: x.offset,
            x_mask: x.mask(),
        })
    }

    /// `t_i` on a label with registers `regs`, for claw difference `s`.
    pub fn target(&self, i: usize, regs: u64, s: u64) -> u8 {
        match self {
            TargetRule::Ciphertext { z_prime, d, m } => {
                z_prime[i] ^ m ^ parity128(d[i] & s as u128)
            }
            TargetRule::Registers {
                b_bit,
                x_offset,
                x_mask,
            } => {
                let d = (regs & x_mask) >> x_offset;
                ((regs >> b_bit) & 1) as u8 ^ parity128((d & s) as u128)
            }
        }
    }

    fn repetitions(&self) -> Option<usize> {
        match self {
            TargetRule::Ciphertext { z_prime, .. } => Some(z_prime.len()),
            TargetRule::Registers { .. } => None,
        }
    }
}

/// An encryption (or a strategy posing as one) run against the compressed
/// oracle. The state keeps every register of the layout plus the database.
#[derive(Debug, Clone)]
pub struct CompressedRun<I> {
    pub layout: RegisterLayout,
    pub state: OracleState,
    pub m: u8,
    pub mode: OutputMode,
    pub y: Vec<I>,
    /// `[x_0, x_1]` through each `y_i`, `None` where no preimage exists.
    pub preimages: Vec<[Option<u64>; 2]>,
    /// The classical ciphertext in measured mode.
    pub ciphertext: Option<ParallelCiphertext<I>>,
    pub prover_queries: usize,
    /// Database capacity, large enough for the prover's and a verifier's queries.
    pub cap: usize,
}

impl<I> CompressedRun<I> {
    pub fn repetitions(&self) -> usize {
        self.y.len()
    }

    /// Claw `(x_0, x_1)` of every repetition, or a domain error.
    pub fn claws(&self) -> Result<Vec<(u64, u64)>> {
        claws_of(&self.preimages)
    }

    pub fn target_rule(&self) -> Result<TargetRule> {
        match (&self.mode, &self.ciphertext) {
            (OutputMode::Measured, Some(c)) => Ok(TargetRule::Ciphertext {
                z_prime: c.z_prime.clone(),
                d: c.d.clone(),
                m: self.m,
            }),
            (OutputMode::Coherent, _) => TargetRule::coherent(&self.layout),
            _ => Err(domain("measured run without a ciphertext")),
        }
    }

    /// Projector of `kind` bound to this run's images and targets.
    pub fn projector(&self, kind: ProjectorKind) -> Result<ProjectorSpec> {
        let targets = if self.claws().is_ok() {
            Some(self.target_rule()?)
        } else {
            None
        };
        Ok(ProjectorSpec {
            kind,
            preimages: self.preimages.clone(),
            targets,
        })
    }

    /// `‖Π_valid DecompAll ψ‖²` on this run's state.
    pub fn validity(&self) -> Result<f64> {
        validity_probability(&self.state, &self.projector(ProjectorKind::Valid)?)
    }
}

fn claws_of(preimages: &[[Option<u64>; 2]]) -> Result<Vec<(u64, u64)>> {
    preimages
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            [Some(a), Some(b)] => Ok((*a, *b)),
            _ => Err(domain(format!("repetition {i} has no claw under this key"))),
        })
        .collect()
}

fn to_u64(x: u128) -> Result<u64> {
    u64::try_from(x).map_err(|_| param("inputs wider than 64 bits cannot enter the database"))
}

/// Runs `policies.len()` repetitions against one shared compressed oracle.
/// `witness` prepares `W` in `|+⟩` first, for strategies that branch on it.
pub fn unexp_enc_compressed<F: Ntcf, R: Rng + ?Sized>(
    m: u8,
    f: &F,
    policies: &[QueryPolicy],
    witness: bool,
    mode: OutputMode,
    rng: &mut R,
) -> Result<CompressedRun<F::Image>> {
    if m > 1 {
        return Err(domain("the plaintext must be a bit"));
    }
    let l = policies.len();
    let layout = compressed_layout(f.input_bits(), l)?;
    if mode == OutputMode::Coherent && l != 1 {
        return Err(param(
            "coherent output is supported for a single repetition",
        ));
    }
    let cap = 3 * l;
    let (b_off, x_off) = (layout.reg("B")?.offset, layout.reg("X")?.offset);
    let e_bit = layout.bit("E", 0)?;
    let w_bit = layout.bit("W", 0)?;
    let mut state = SparseState::basis(OracleLabel::new(0));
    if witness {
        state = hadamard_bits(&state, [w_bit]);
    }
    let mut run = CompressedRun {
        layout: layout.clone(),
        state: OracleState::new(),
        m,
        mode,
        y: Vec::new(),
        preimages: Vec::new(),
        ciphertext: (mode == OutputMode::Measured).then(|| ParallelCiphertext {
            z_prime: Vec::new(),
            d: Vec::new(),
            y: Vec::new(),
        }),
        prover_queries: 0,
        cap,
    };
    for &policy in policies {
        let col = collapse(f, rng)?;
        let mut branches = Vec::with_capacity(col.branches.len());
        for &(b, x, a) in &col.branches {
            branches.push(((b as u64) << b_off | to_u64(x)? << x_off, a));
        }
        state = state.map_linear(|k, out| {
            for &(bits, a) in &branches {
                out.push((
                    OracleLabel {
                        regs: k.regs | bits,
                        db: k.db.clone(),
                    },
                    C64::new(a, 0.0),
                ));
            }
        });
        let control: &dyn Fn(u64) -> bool = match policy {
            QueryPolicy::Always => &|_| true,
            QueryPolicy::WhenWitnessZero => &move |r| (r >> w_bit) & 1 == 0,
            QueryPolicy::Never => &|_| false,
        };
        if policy != QueryPolicy::Never {
            state = x_bit(&state, e_bit);
            state = cpho_query_controlled(&state, &layout, "X", "E", Some(cap), control)?;
            state = x_bit(&state, e_bit);
            run.prover_queries += 1;
        }
        state = hadamard_all(&state, &layout, &["B", "X"])?;
        run.preimages.push([
            col.preimage(0).map(to_u64).transpose()?,
            col.preimage(1).map(to_u64).transpose()?,
        ]);
        if let Some(c) = run.ciphertext.as_mut() {
            let zb = measure(&state, &layout, "B", rng)?;
            let dx = measure(&zb.post_state, &layout, "X", rng)?;
            state = clear_register(&dx.post_state, &layout, "B")?;
            state = clear_register(&state, &layout, "X")?;
            c.z_prime.push(zb.value as u8 ^ m);
            c.d.push(dx.value as u128);
            c.y.push(col.y.clone());
        }
        run.y.push(col.y);
    }
    run.state = state;
    Ok(run)
}

/// The honest sender with measured outputs.
pub fn unexp_enc_honest<F: Ntcf, R: Rng + ?Sized>(
    m: u8,
    f: &F,
    l: usize,
    rng: &mut R,
) -> Result<CompressedRun<F::Image>> {
    unexp_enc_compressed(
        m,
        f,
        &vec![QueryPolicy::Always; l],
        false,
        OutputMode::Measured,
        rng,
    )
}

/// Which preimages of one image a database holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreimagePattern {
    Neither,
    Only(u8),
    Both,
}

impl PreimagePattern {
    pub fn from_presence(has0: bool, has1: bool) -> Self {
        match (has0, has1) {
            (false, false) => PreimagePattern::Neither,
            (true, false) => PreimagePattern::Only(0),
            (false, true) => PreimagePattern::Only(1),
            (true, true) => PreimagePattern::Both,
        }
    }

    /// Pattern of `db` with respect to the preimages `[x_0, x_1]`.
    pub fn of(db: &Database, pre: &[Option<u64>; 2]) -> Self {
        let has = |b: usize| pre[b].is_some_and(|x| db.contains(x));
        Self::from_presence(has(0), has(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectorKind {
    /// Every equation `D(x_0^i) ⊕ D(x_1^i) = t_i` holds.
    Valid,
    /// No repetition has both preimages in the database.
    NoClaw,
    /// At most `l` repetitions have any preimage in the database.
    AtMost(usize),
    /// Repetition `i` has pattern `b_i` for each listed `(i, b_i)`.
    Pattern(Vec<(usize, PreimagePattern)>),
}

/// A database projector bound to the preimages of a list of images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectorSpec {
    pub kind: ProjectorKind,
    pub preimages: Vec<[Option<u64>; 2]>,
    /// Required by `Valid`.
    pub targets: Option<TargetRule>,
}

impl ProjectorSpec {
    fn check(&self) -> Result<()> {
        let l = self.preimages.len();
        match &self.kind {
            ProjectorKind::Valid => {
                claws_of(&self.preimages)?;
                let rule = self
                    .targets
                    .as_ref()
                    .ok_or_else(|| domain("Π_valid needs target bits"))?;
                if rule.repetitions().is_some_and(|r| r != l) {
                    return Err(domain("target count does not match the images"));
                }
                if matches!(rule, TargetRule::Registers { .. }) && l != 1 {
                    return Err(domain("register targets cover a single repetition"));
                }
            }
            ProjectorKind::Pattern(p) => {
                if let Some(&(i, _)) = p.iter().find(|e| e.0 >= l) {
                    return Err(domain(format!("pattern names repetition {i} of {l}")));
                }
            }
            ProjectorKind::NoClaw | ProjectorKind::AtMost(_) => {}
        }
        if self
            .preimages
            .iter()
            .any(|p| p[0].is_none() && p[1].is_none())
        {
            return Err(domain("an image has no preimage under this key"));
        }
        Ok(())
    }

    /// Whether the basis label lies in the projector's range.
    pub fn accepts(&self, k: &OracleLabel) -> bool {
        let pat = |i: usize| PreimagePattern::of(&k.db, &self.preimages[i]);
        match &self.kind {
            ProjectorKind::Valid => {
                let rule = self.targets.as_ref().expect("checked");
                self.preimages.iter().enumerate().all(|(i, p)| {
                    let (x0, x1) = (p[0].expect("checked"), p[1].expect("checked"));
                    match (k.db.get(x0), k.db.get(x1)) {
                        (Some(v0), Some(v1)) => v0 ^ v1 == rule.target(i, k.regs, x0 ^ x1),
                        _ => false,
                    }
                })
            }
            ProjectorKind::NoClaw => {
                (0..self.preimages.len()).all(|i| pat(i) != PreimagePattern::Both)
            }
            ProjectorKind::AtMost(l) => {
                (0..self.preimages.len())
                    .filter(|&i| pat(i) != PreimagePattern::Neither)
                    .count()
                    <= *l
            }
            ProjectorKind::Pattern(p) => p.iter().all(|&(i, b)| pat(i) == b),
        }
    }
}

/// `(Πψ, ‖Πψ‖²)`.
pub fn apply_projector(spec: &ProjectorSpec, state: &OracleState) -> Result<(OracleState, f64)> {
    spec.check()?;
    let out = state.filter(|k| spec.accepts(k));
    let n = out.norm_sqr();
    Ok((out, n))
}

/// `‖Π_valid DecompAll ψ‖²`, decompressing at every preimage and every
/// input already in the database.
pub fn validity_probability(state: &OracleState, spec: &ProjectorSpec) -> Result<f64> {
    if spec.kind != ProjectorKind::Valid {
        return Err(domain("validity needs a Π_valid projector"));
    }
    spec.check()?;
    let relevant: Vec<u64> = spec.preimages.iter().flatten().flatten().copied().collect();
    Ok(apply_projector(spec, &decomp_all(state, &relevant))?.1)
}

/// Joint distribution of the patterns of repetitions `reps`, under a
/// caller-supplied classifier of databases.
pub fn pattern_distribution(
    state: &OracleState,
    reps: &[usize],
    classify: impl Fn(&Database, usize) -> PreimagePattern,
) -> BTreeMap<Vec<PreimagePattern>, f64> {
    let mut acc: BTreeMap<Vec<PreimagePattern>, KahanSum> = BTreeMap::new();
    for (k, a) in state.sorted() {
        let key: Vec<PreimagePattern> = reps.iter().map(|&i| classify(&k.db, i)).collect();
        acc.entry(key).or_default().add(a.norm_sqr());
    }
    acc.into_iter().map(|(k, s)| (k, s.value())).collect()
}

/// Measures the patterns of `reps`, returning the outcome, its probability
/// and the renormalized post-measurement state.
pub fn measure_patterns<R: Rng + ?Sized>(
    state: &OracleState,
    reps: &[usize],
    classify: impl Fn(&Database, usize) -> PreimagePattern,
    rng: &mut R,
) -> (Vec<PreimagePattern>, f64, OracleState) {
    let dist: Vec<(Vec<PreimagePattern>, f64)> = pattern_distribution(state, reps, &classify)
        .into_iter()
        .collect();
    let table: Vec<(u64, f64)> = dist
        .iter()
        .enumerate()
        .map(|(i, e)| (i as u64, e.1))
        .collect();
    let pick = sample_index(&table, rng) as usize;
    let (outcome, p) = dist[pick].clone();
    let mut post = state.filter(|k| {
        reps.iter()
            .zip(&outcome)
            .all(|(&i, &b)| classify(&k.db, i) == b)
    });
    post.normalize();
    (outcome, p, post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcf::{ExactPair, FamilyTag};

    fn key(n: u32, seed: u64) -> ExactPair {
        ExactPair::generate(FamilyTag::ExactClawFree, n, seed).unwrap()
    }

    #[test]
    fn concrete_round_trip() {
        let f = key(8, 3);
        for l in [1, 2, 3] {
            let s = unexp_correctness(&f, l, 300, 9);
            assert_eq!(s.decrypted, s.trials);
        }
    }

    #[test]
    fn tampering_breaks_unanimity() {
        let f = key(6, 1);
        let h = sample_oracle(6, 5);
        let mut rng = trial_rng(2, 0);
        let mut c = unexp_enc_concrete(1, &f, h.as_ref(), 3, &mut rng).unwrap();
        assert_eq!(unexp_dec(&c, &f, h.as_ref()), Decryption::Message(1));
        c.z_prime[1] ^= 1;
        assert!(matches!(
            unexp_dec(&c, &f, h.as_ref()),
            Decryption::Reject(_)
        ));
        let mut c1 = unexp_enc_concrete(0, &f, h.as_ref(), 1, &mut rng).unwrap();
        c1.z_prime[0] ^= 1;
        assert_eq!(unexp_dec(&c1, &f, h.as_ref()), Decryption::Message(1));
    }

    #[test]
    fn wire_round_trip() {
        let f = key(10, 4);
        let h = KeyedOracle::from_seed(8);
        let mut rng = trial_rng(1, 1);
        let c = unexp_enc_concrete(0, &f, &h, 11, &mut rng).unwrap();
        let w = c.to_wire(&f);
        assert_eq!(ParallelCiphertext::from_wire(&w, &f).unwrap(), c);
        let mut bad = w.clone();
        bad.y.pop();
        assert!(ParallelCiphertext::from_wire(&bad, &f).is_err());
    }

    #[test]
    fn truth_table_matches_function() {
        let t = TruthTable::from_fn(7, |x| (x.count_ones() & 1) as u8).unwrap();
        for x in 0..128u128 {
            assert_eq!(t.eval(x), (x.count_ones() & 1) as u8);
        }
    }

    #[test]
    fn honest_compressed_run_is_valid_and_symmetric() {
        let f = key(5, 2);
        for l in 1..=3 {
            let mut rng = trial_rng(7, l as u64);
            let run = unexp_enc_honest(1, &f, l, &mut rng).unwrap();
            assert!((run.validity().unwrap() - 1.0).abs() < 1e-10);
            assert!(run.state.is_normalized(1e-10));
            for i in 0..l {
                let d = pattern_distribution(&run.state, &[i], |db, j| {
                    PreimagePattern::of(db, &run.preimages[j])
                });
                let p0 = d
                    .get(&vec![PreimagePattern::Only(0)])
                    .copied()
                    .unwrap_or(0.0);
                let p1 = d
                    .get(&vec![PreimagePattern::Only(1)])
                    .copied()
                    .unwrap_or(0.0);
                assert!((p0 - 0.5).abs() < 1e-10 && (p1 - 0.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn guessing_without_queries_is_valid_half_the_time() {
        let f = key(5, 3);
        let mut rng = trial_rng(1, 0);
        let run = unexp_enc_compressed(
            0,
            &f,
            &[QueryPolicy::Never],
            false,
            OutputMode::Measured,
            &mut rng,
        )
        .unwrap();
        assert!((run.validity().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_prefix_pattern_vanishes_on_honest_state() {
        let f = key(5, 4);
        let mut rng = trial_rng(3, 0);
        let run = unexp_enc_honest(0, &f, 2, &mut rng).unwrap();
        let spec = run
            .projector(ProjectorKind::Pattern(vec![(0, PreimagePattern::Neither)]))
            .unwrap();
        assert!(apply_projector(&spec, &run.state).unwrap().1 < 1e-15);
        let total: f64 = pattern_distribution(&run.state, &[0, 1], |db, j| {
            PreimagePattern::of(db, &run.preimages[j])
        })
        .values()
        .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_mismatch_is_an_error() {
        let f = ExactPair::generate(FamilyTag::InjectiveTwin, 5, 1).unwrap();
        let mut rng = trial_rng(3, 0);
        let run = unexp_enc_honest(0, &f, 1, &mut rng).unwrap();
        let spec = run.projector(ProjectorKind::Valid).unwrap();
        assert!(apply_projector(&spec, &run.state).is_err());
        let spec = run
            .projector(ProjectorKind::Pattern(vec![(3, PreimagePattern::Neither)]))
            .unwrap();
        assert!(apply_projector(&spec, &run.state).is_err());
    }
}
