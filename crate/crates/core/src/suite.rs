//! The acceptance matrix: ten criteria with fixed parameters, derived seeds
//! and runtime budgets. The fast profile divides trial counts by ten.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::compressed_oracle::oracle_equivalence;
use crate::deniable::{correctness, deniability_experiment, INJECTIVE_TD_TOL};
use crate::distances::{
    hellinger_sq, superposition_trace_bound, trace_distance_pure, tv_distance, Density,
};
use crate::error::{param, Result};
use crate::lattice::{
    hellinger_gap, hellinger_gap_factorized, ntcf_eval_density, LatticePair, LatticeParams,
};
use crate::rigidity::{
    break_phase, check_clean_structure, check_no_preimage_bound, check_xor_structure, explain,
    extract_claw, extraction_exact_rate, verify_concrete, ProverStrategy, STATE_TOL,
};
use crate::rng::{sub_seed, trial_rng};
use crate::tcf::{EnumerableNtcf, ExactPair, FamilyTag, Ntcf};
use crate::unexplainable::{
    sample_oracle, unexp_correctness, unexp_enc_concrete, unexp_enc_honest, OutputMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Full,
    Fast,
}

impl Profile {
    pub fn scale(self, trials: u64) -> u64 {
        match self {
            Profile::Full => trials,
            Profile::Fast => (trials / 10).max(1),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "full" => Ok(Profile::Full),
            "fast" => Ok(Profile::Fast),
            _ => Err(param(format!(
                "unknown profile '{s}' (expected all or fast)"
            ))),
        }
    }
}

/// Identifier, short name and runtime budget in seconds.
pub const CRITERIA: [(&str, &str, f64); 10] = [
    ("C1", "correctness", 60.0),
    ("C2", "equation-identity", 30.0),
    ("C3", "injective-deniability", 60.0),
    ("C4", "oracle-equivalence", 120.0),
    ("C5", "no-preimage-bound", 30.0),
    ("C6", "xor-rigidity", 30.0),
    ("C7", "clean-structure", 30.0),
    ("C8", "extraction", 120.0),
    ("C9", "distance-toolbox", 10.0),
    ("C10", "lattice-clauses", 120.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    pub pass: bool,
    /// The checks passed, regardless of runtime.
    pub checks_pass: bool,
    pub metrics: BTreeMap<String, Value>,
    pub detail: String,
    pub runtime_s: f64,
    pub budget_s: f64,
    pub within_budget: bool,
}

/// Metrics and failure notes accumulated by one criterion.
#[derive(Default)]
struct Outcome {
    metrics: BTreeMap<String, Value>,
    failures: Vec<String>,
}

impl Outcome {
    fn metric(&mut self, name: &str, v: impl Serialize) {
        self.metrics.insert(name.to_string(), json!(v));
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

/// Runs criterion `id` (`"C1"` … `"C10"`).
pub fn run_criterion(id: &str, profile: Profile, seed: u64) -> Result<CriterionResult> {
    let &(cid, name, budget) = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| param(format!("unknown criterion '{id}'")))?;
    let start = Instant::now();
    let seed = sub_seed(seed, cid);
    let mut out = Outcome::default();
    let res = match cid {
        "C1" => c1(profile, seed, &mut out),
        "C2" => c2(profile, seed, &mut out),
        "C3" => c3(profile, seed, &mut out),
        "C4" => c4(profile, seed, &mut out),
        "C5" => c5(profile, seed, &mut out),
        "C6" => c6(profile, seed, &mut out),
        "C7" => c7(profile, seed, &mut out),
        "C8" => c8(profile, seed, &mut out),
        "C9" => c9(profile, seed, &mut out),
        _ => c10(profile, seed, &mut out),
    };
    if let Err(e) = res {
        out.failures.push(format!("error: {e}"));
    }
    let runtime_s = start.elapsed().as_secs_f64();
    let within_budget = runtime_s <= budget;
    let checks_pass = out.failures.is_empty();
    let mut detail = out.failures.join("; ");
    if !within_budget {
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("runtime {runtime_s:.1} s exceeds {budget} s"));
    }
    Ok(CriterionResult {
        id: cid.to_string(),
        name: name.to_string(),
        pass: checks_pass && within_budget,
        checks_pass,
        metrics: out.metrics,
        detail,
        runtime_s,
        budget_s: budget,
        within_budget,
    })
}

/// Every criterion in order.
pub fn run_suite(profile: Profile, seed: u64) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|c| run_criterion(c.0, profile, seed).expect("known criterion"))
        .collect()
}

fn exact_key(n: u32, seed: u64) -> Result<ExactPair> {
    ExactPair::generate(FamilyTag::ExactClawFree, n, seed)
}

fn c1(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let trials = p.scale(10_000);
    let f = exact_key(8, sub_seed(seed, "exact-key"))?;
    let s = correctness(&f, trials, sub_seed(seed, "deniable"));
    o.metric("deniable_exact_rate", s.rate());
    o.require(
        s.decrypted == s.trials,
        "deniable scheme failed to decrypt on the exact family",
    );
    for l in 1..=3usize {
        let s = unexp_correctness(&f, l, trials, sub_seed(seed, &format!("unexp-{l}")));
        o.metric(&format!("unexp_exact_rate_L{l}"), s.rate());
        o.require(
            s.decrypted == s.trials,
            format!("unexplainable scheme failed at L = {l}"),
        );
    }
    let lat = LatticePair::generate(&LatticeParams::DESK, sub_seed(seed, "lattice-key"))?;
    let s = correctness(&lat, trials, sub_seed(seed, "lattice-deniable"));
    o.metric("deniable_lattice_rate", s.rate());
    o.require(s.rate() >= 0.999, "deniable lattice rate below 0.999");
    for l in 1..=3usize {
        let s = unexp_correctness(
            &lat,
            l,
            trials,
            sub_seed(seed, &format!("lattice-unexp-{l}")),
        );
        o.metric(&format!("unexp_lattice_rate_L{l}"), s.rate());
        o.require(
            s.rate() >= 0.999,
            format!("unexplainable lattice rate below 0.999 at L = {l}"),
        );
    }
    Ok(())
}

fn c2(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let f = exact_key(8, sub_seed(seed, "exact-key"))?;
    let s = correctness(&f, p.scale(10_000), sub_seed(seed, "deniable"));
    o.metric("deniable_equations_held", s.equation_holds);
    o.metric("deniable_trials", s.trials);
    o.require(
        s.equation_holds == s.trials,
        "a deniable ciphertext violated its equation",
    );

    let runs = p.scale(100);
    let mut worst: f64 = 0.0;
    for l in 1..=3usize {
        for t in 0..runs {
            let mut rng = trial_rng(sub_seed(seed, &format!("compressed-{l}")), t);
            let m: u8 = rng.random_range(0..2);
            let run = unexp_enc_honest(m, &f, l, &mut rng)?;
            worst = worst.max((run.validity()? - 1.0).abs());
        }
    }
    o.metric("unexp_validity_max_deviation", worst);
    o.require(
        worst <= STATE_TOL,
        "an honest compressed run is not valid with probability 1",
    );

    let trials = p.scale(10_000);
    let mut held = 0u64;
    for t in 0..trials {
        let mut rng = trial_rng(sub_seed(seed, "concrete"), t);
        let h = sample_oracle(8, rng.random());
        let m: u8 = rng.random_range(0..2);
        let c = unexp_enc_concrete(m, &f, h.as_ref(), 3, &mut rng)?;
        held += verify_concrete(&f, h.as_ref(), &c, m) as u64;
    }
    o.metric("unexp_concrete_equations_held", held);
    o.require(
        held == trials,
        "an honest concrete ciphertext violated an oracle equation",
    );
    Ok(())
}

fn c3(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let r = deniability_experiment(FamilyTag::InjectiveTwin, 8, p.scale(100), seed)?;
    o.metric("keys", r.trials);
    o.metric("max_trace_distance", r.max_trace_distance);
    o.metric(
        "computational_indistinguishability",
        &r.computational_indistinguishability,
    );
    o.require(
        r.max_trace_distance <= INJECTIVE_TD_TOL,
        "trace distance above 1e-10",
    );
    Ok(())
}

fn c4(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let r = oracle_equivalence(3, p.scale(200) as usize, 3, seed)?;
    o.metric("circuits", r.circuits);
    o.metric("max_tv", r.max_tv);
    o.require(
        r.max_tv <= 1e-9,
        "a circuit's output distributions differ by more than 1e-9",
    );
    Ok(())
}

fn c5(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let runs = p.scale(20);
    let mut worst: f64 = 0.0;
    for big_l in 1..=3usize {
        for l in 0..big_l {
            let strategy = if l == 0 {
                ProverStrategy::NoQueryGuess
            } else {
                ProverStrategy::PartialQuery(l)
            };
            let expected = 2f64.powi(l as i32 - big_l as i32);
            let mut values = Vec::new();
            for t in 0..runs {
                let f = exact_key(8, sub_seed(seed, &format!("key-{t}")))?;
                let mut rng = trial_rng(sub_seed(seed, &format!("{big_l}-{l}")), t);
                let run = explain(&strategy, 0, &f, big_l, OutputMode::Measured, &mut rng)?;
                let r = check_no_preimage_bound(&run, l)?;
                o.require(
                    r.precondition,
                    format!("{} left the no-claw/at-most-{l} subspace", strategy.name()),
                );
                o.require(
                    r.holds == Some(true),
                    format!("bound violated by {}", strategy.name()),
                );
                worst = worst.max((r.validity - expected).abs());
                values.push(r.validity);
            }
            o.metric(&format!("validity_{}_L{big_l}", strategy.name()), values[0]);
        }
    }
    o.metric("max_deviation_from_2^(l-L)", worst);
    o.require(
        worst <= 1e-12,
        "validity differs from 2^(l−L) by more than 1e-12",
    );
    Ok(())
}

fn c6(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let runs = p.scale(10);
    let (mut honest, mut broken_gap): (f64, f64) = (0.0, 0.0);
    for t in 0..runs {
        let f = exact_key(6, sub_seed(seed, &format!("key-{t}")))?;
        for (l, mode) in [
            (1, OutputMode::Coherent),
            (2, OutputMode::Measured),
            (3, OutputMode::Measured),
        ] {
            let mut rng = trial_rng(sub_seed(seed, &format!("honest-{l}")), t);
            let run = explain(&ProverStrategy::Honest, 1, &f, l, mode, &mut rng)?;
            let r = check_xor_structure(&run, None)?;
            o.require(r.holds, "honest residual exceeds 2ε");
            honest = r.residuals.iter().fold(honest, |a, &b| a.max(b));
        }
        let mut rng = trial_rng(sub_seed(seed, "broken"), t);
        let run = explain(
            &ProverStrategy::Honest,
            0,
            &f,
            1,
            OutputMode::Coherent,
            &mut rng,
        )?;
        let xbit = run.layout.bit("X", (t % 6) as u32)?;
        let broken = break_phase(&run, 0, |r| (r >> xbit) & 1 == 0)?;
        let r = check_xor_structure(&broken.run, None)?;
        o.require(r.holds, "phase-broken residual exceeds 2ε");
        broken_gap = broken_gap.max((r.residuals[0] - broken.constructed_residual).abs());
        if t == 0 {
            o.metric("broken_residual", r.residuals[0]);
            o.metric("broken_constructed", broken.constructed_residual);
        }
    }
    o.metric("honest_max_residual", honest);
    o.metric("broken_max_gap", broken_gap);
    o.require(honest <= STATE_TOL, "honest residual above 1e-10");
    o.require(
        broken_gap <= STATE_TOL,
        "phase-broken residual differs from its constructed value",
    );
    Ok(())
}

fn c7(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let keys: Vec<u64> = (0..p.scale(10))
        .map(|i| sub_seed(seed, &format!("key-{i}")))
        .collect();
    for (s, delta) in [
        (ProverStrategy::Honest, 0.5),
        (ProverStrategy::NoQueryGuess, 0.0),
        (ProverStrategy::mixture(), 0.25),
    ] {
        let r = check_clean_structure(&s, 6, &keys, seed)?;
        o.metric(&format!("{}_delta", r.strategy), r.delta);
        o.metric(&format!("{}_alpha_weight", r.strategy), r.alpha_weight);
        o.metric(&format!("{}_phase_mismatch", r.strategy), r.phase_mismatch);
        o.require(
            (r.delta - delta).abs() <= STATE_TOL,
            format!("{}: δ = {}", r.strategy, r.delta),
        );
        o.require(r.clause_ii, format!("{}: clause (ii) fails", r.strategy));
        o.require(r.clause_iii, format!("{}: clause (iii) fails", r.strategy));
        o.require(
            r.clause_i,
            format!("{}: both-preimage weight is nonzero", r.strategy),
        );
    }
    Ok(())
}

fn c8(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let trials = p.scale(2000);
    let f = exact_key(8, sub_seed(seed, "key"))?;
    let mut rng = trial_rng(sub_seed(seed, "exact"), 0);
    let run = explain(
        &ProverStrategy::Honest,
        0,
        &f,
        2,
        OutputMode::Measured,
        &mut rng,
    )?;
    o.metric("honest_exact_rate", extraction_exact_rate(&f, &run)?);

    let r = extract_claw(
        &f,
        &ProverStrategy::Honest,
        2,
        trials,
        sub_seed(seed, "honest"),
    )?;
    o.metric("honest_claw_rate", r.claw_rate);
    o.metric("honest_accept_rate", r.accept_rate);
    o.metric("honest_preimage_bits", r.preimage_bits);
    o.require(r.claw_rate >= 0.2, "honest claw frequency below 0.2");
    o.require(
        r.claws == r.claws_verified,
        "a reported claw fails the public check",
    );

    let r = extract_claw(
        &f,
        &ProverStrategy::NoQueryGuess,
        2,
        trials,
        sub_seed(seed, "noquery"),
    )?;
    let target = 0.25;
    let sigma = (target * (1.0 - target) / trials as f64).sqrt();
    o.metric("noquery_claws", r.claws);
    o.metric("noquery_accept_rate", r.accept_rate);
    o.metric("noquery_accept_sigma", sigma);
    o.require(
        r.claws == 0,
        "claws extracted from a strategy that never queries",
    );
    o.require(
        (r.accept_rate - target).abs() <= 4.0 * sigma,
        "no-query accept rate outside 4σ of 2^−L",
    );
    Ok(())
}

fn random_density<R: Rng + ?Sized>(rng: &mut R) -> Result<Density> {
    let len = rng.random_range(1..=12);
    let entries: Vec<(Vec<u8>, f64)> = (0..len)
        .map(|_| (vec![rng.random_range(0..16u8)], rng.random::<f64>() + 1e-3))
        .collect();
    let mut merged: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (k, v) in entries {
        *merged.entry(k).or_default() += v;
    }
    let total: f64 = merged.values().sum();
    Density::new(merged.into_iter().map(|(k, v)| (k, v / total)))
}

fn c9(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let pairs = p.scale(1000);
    let (mut tv_gap, mut td_gap) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in 0..pairs {
        let mut rng = trial_rng(seed, t);
        let (a, b) = (random_density(&mut rng)?, random_density(&mut rng)?);
        let tv = tv_distance(&a, &b)?;
        let h2 = hellinger_sq(&a, &b)?;
        tv_gap = tv_gap.max(tv - (2.0 * h2).sqrt());
        let td = trace_distance_pure(&a.amplitude_state()?, &b.amplitude_state()?)?;
        td_gap = td_gap.max(td - superposition_trace_bound(&a, &b)?);
    }
    o.metric("pairs", pairs);
    o.metric("max_tv_minus_bound", tv_gap);
    o.metric("max_td_minus_bound", td_gap);
    o.require(tv_gap <= 1e-12, "tv exceeds √(2H²)");
    o.require(
        td_gap <= 1e-12,
        "trace distance exceeds the superposition bound",
    );
    Ok(())
}

fn c10(p: Profile, seed: u64, o: &mut Outcome) -> Result<()> {
    let mut worst_norm: f64 = 0.0;
    let mut chk_mismatch = 0u64;
    for (name, params) in [("micro", LatticeParams::MICRO), ("gap", LatticeParams::GAP)] {
        let pair = LatticePair::generate(&params, sub_seed(seed, name))?;
        let mut rng = trial_rng(sub_seed(seed, &format!("{name}-chk")), 0);
        for b in 0..2u8 {
            for x in pair.inputs()? {
                let xp = pair.key.decode_x(x).expect("enumerated input");
                let d = ntcf_eval_density(&pair, b, &xp)?;
                worst_norm = worst_norm.max((d.total() - 1.0).abs());
                for (y, p) in pair.support(b, x)? {
                    chk_mismatch += (pair.chk(b, x, &y) != (p > 0.0)) as u64;
                }
                for _ in 0..4 {
                    let y =
                        pair.unpack_image(rng.random::<u64>() & ((1u64 << pair.image_bits()) - 1));
                    let inside = pair.density(b, x, &y) > 0.0;
                    chk_mismatch += (pair.chk(b, x, &y) != inside) as u64;
                }
            }
        }
        if name == "gap" {
            let xs: Vec<_> = pair
                .inputs()?
                .into_iter()
                .map(|x| pair.key.decode_x(x).unwrap())
                .collect();
            let direct = hellinger_gap(&pair, 1, &xs)?;
            let factored = hellinger_gap_factorized(&pair);
            o.metric("gap_preset_hellinger", direct);
            o.metric("gap_preset_hellinger_factorized", factored);
            o.metric("gap_preset_mu", params.mu);
            o.require(direct < params.mu, "gap preset: Hellinger gap not below μ");
            o.require(
                (direct - factored).abs() <= 1e-9,
                "gap preset: the two gap computations disagree",
            );
        }
    }
    o.metric("max_normalization_error", worst_norm);
    o.metric("chk_support_mismatches", chk_mismatch);
    o.require(
        worst_norm <= 1e-9,
        "a density is not normalized within 1e-9",
    );
    o.require(chk_mismatch == 0, "Chk disagrees with the support");

    let desk = LatticePair::generate(&LatticeParams::DESK, sub_seed(seed, "desk"))?;
    let desk_gap = hellinger_gap_factorized(&desk);
    o.metric("desk_hellinger", desk_gap);
    o.metric("desk_mu", LatticeParams::DESK.mu);
    o.require(
        desk_gap < LatticeParams::DESK.mu,
        "desk preset: Hellinger gap not below μ",
    );
    let trials = p.scale(10_000);
    let mut ok = 0u64;
    for t in 0..trials {
        let mut rng = trial_rng(sub_seed(seed, "desk-invert"), t);
        let b: u8 = rng.random_range(0..2);
        let x = desk.sample_input(&mut rng);
        let y = desk.sample_image(b, x, &mut rng);
        let both = match desk.claw(&y) {
            Some((x0, x1)) => {
                [x0, x1][b as usize] == x && desk.chk(0, x0, &y) && desk.chk(1, x1, &y)
            }
            None => false,
        };
        ok += both as u64;
    }
    o.metric("desk_both_preimage_rate", ok as f64 / trials as f64);
    o.require(
        ok == trials,
        "an honest desk image did not invert to both preimages",
    );
    Ok(())
}
