//! Experiment dispatch: each experiment reads its parameters from an
//! [`ExperimentConfig`] and fills a [`Report`].

use std::time::Instant;

use anyhow::{bail, Result};
use qdeny::compressed_oracle::oracle_equivalence;
use qdeny::deniable::{deniability_experiment, INJECTIVE_TD_TOL};
use qdeny::rigidity::{
    break_phase, check_clean_structure, check_no_preimage_bound, check_xor_structure, explain,
    extract_claw, extraction_exact_rate, ProverStrategy, STATE_TOL,
};
use qdeny::rng::{sub_seed, trial_rng};
use qdeny::suite::{run_suite, Profile};
use qdeny::tcf::{ExactPair, FamilyTag};
use qdeny::unexplainable::{OutputMode, MAX_L_COMPRESSED};
use rand::Rng;

use crate::config::{check_tolerance_names, tolerance, Bound, ExperimentConfig};
use crate::report::Report;

pub const EXPERIMENTS: [&str; 7] = [
    "deniability-exp",
    "oracle-equiv",
    "xor-structure",
    "bound-check",
    "clean-structure",
    "extract-claw",
    "suite",
];

/// Largest oracle input length for the purified-oracle comparison.
const MAX_EQUIV_BITS: u32 = 4;

/// Runs the experiment named in `cfg`. Errors are usage or parameter
/// problems; failed assertions are recorded in the report instead.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    let mut report = Report::new(cfg);
    match cfg.experiment.as_str() {
        "deniability-exp" => deniability(cfg, &mut report)?,
        "oracle-equiv" => oracle_equiv(cfg, &mut report)?,
        "xor-structure" => xor_structure(cfg, &mut report)?,
        "bound-check" => bound_check(cfg, &mut report)?,
        "clean-structure" => clean_structure(cfg, &mut report)?,
        "extract-claw" => extract(cfg, &mut report)?,
        "suite" => suite(cfg, &mut report)?,
        other => bail!(
            "unknown experiment '{other}' (expected one of {})",
            EXPERIMENTS.join(", ")
        ),
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Rejects fields the experiment does not read, so a typo never silently
/// falls back to a default.
fn allow_fields(cfg: &ExperimentConfig, allowed: &[&str]) -> Result<()> {
    let present = [
        ("family", cfg.family.is_some()),
        ("n", cfg.n.is_some()),
        ("L", cfg.repetitions.is_some()),
        ("l", cfg.l.is_some()),
        ("trials", cfg.trials.is_some()),
        ("keys", cfg.keys.is_some()),
        ("circuits", cfg.circuits.is_some()),
        ("max_queries", cfg.max_queries.is_some()),
        ("strategy", cfg.strategy.is_some()),
        ("profile", cfg.profile.is_some()),
    ];
    for (name, set) in present {
        if set && !allowed.contains(&name) {
            bail!("experiment '{}' does not take '{name}'", cfg.experiment);
        }
    }
    Ok(())
}

fn positive(name: &str, v: u64) -> Result<u64> {
    if v == 0 {
        bail!("'{name}' must be at least 1");
    }
    Ok(v)
}

fn family(cfg: &ExperimentConfig, default: &str) -> Result<FamilyTag> {
    Ok(cfg.family.as_deref().unwrap_or(default).parse()?)
}

fn repetitions(cfg: &ExperimentConfig, default: usize) -> Result<usize> {
    let l = cfg.repetitions.unwrap_or(default);
    if l == 0 || l > MAX_L_COMPRESSED {
        bail!("L must lie in 1..={MAX_L_COMPRESSED} for compressed-oracle runs");
    }
    Ok(l)
}

fn strategy(cfg: &ExperimentConfig, default: &str) -> Result<ProverStrategy> {
    Ok(cfg.strategy.as_deref().unwrap_or(default).parse()?)
}

fn exact_key(n: u32, seed: u64, index: u64) -> Result<ExactPair> {
    Ok(ExactPair::generate(
        FamilyTag::ExactClawFree,
        n,
        sub_seed(seed, &format!("key-{index}")),
    )?)
}

fn deniability(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["family", "n", "trials"])?;
    check_tolerance_names(cfg, &["trace_distance"])?;
    let fam = family(cfg, "twin")?;
    let n = cfg.n.unwrap_or(8);
    let trials = positive("trials", cfg.trials.unwrap_or(100))?;
    let tol = tolerance(cfg, "trace_distance", INJECTIVE_TD_TOL, Bound::Upper)?;
    let d = deniability_experiment(fam, n, trials, cfg.seed)?;
    r.metric("family", fam.name());
    r.metric("n", d.n);
    r.metric("keys", d.trials);
    r.metric("trace_distances", &d.trace_distances);
    r.metric("max_trace_distance", d.max_trace_distance);
    r.metric("min_trace_distance", d.min_trace_distance);
    r.metric("support_partition", d.support_partition);
    r.metric(
        "computational_indistinguishability",
        &d.computational_indistinguishability,
    );
    match fam {
        FamilyTag::InjectiveTwin => r.criterion(
            "trace-distance",
            "residual states for z = 0 and z = 1 coincide on every key",
            d.max_trace_distance <= tol,
            format!("max {:.3e}, tolerance {tol:.1e}", d.max_trace_distance),
        ),
        _ => r.criterion(
            "support-partition",
            "for claw-free keys the d-register supports split by d·(x0 ⊕ x1)",
            d.support_partition == Some(true),
            "",
        ),
    }
    if fam == FamilyTag::LatticeNtcf {
        r.note("lattice keys use the micro preset; n is ignored");
    }
    r.note("computational indistinguishability of key families is assumed, not tested");
    Ok(())
}

fn oracle_equiv(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["n", "circuits", "max_queries"])?;
    check_tolerance_names(cfg, &["tv"])?;
    let n = cfg.n.unwrap_or(3);
    if n == 0 || n > MAX_EQUIV_BITS {
        bail!("n must lie in 1..={MAX_EQUIV_BITS} for the purified-oracle comparison");
    }
    let circuits = positive("circuits", cfg.circuits.unwrap_or(200) as u64)? as usize;
    let max_queries = cfg.max_queries.unwrap_or(3);
    let tol = tolerance(cfg, "tv", 1e-9, Bound::Upper)?;
    let e = oracle_equivalence(n, circuits, max_queries, cfg.seed)?;
    r.metric("n", e.n);
    r.metric("circuits", e.circuits);
    r.metric("max_queries", e.max_queries);
    r.metric("max_tv", e.max_tv);
    r.metric("tvs", &e.tvs);
    r.criterion(
        "tv",
        "compressed and purified oracles give the same output distribution",
        e.max_tv <= tol,
        format!("max {:.3e}, tolerance {tol:.1e}", e.max_tv),
    );
    Ok(())
}

fn xor_structure(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["n", "L", "keys", "strategy"])?;
    check_tolerance_names(cfg, &["residual"])?;
    let n = cfg.n.unwrap_or(6);
    let l = repetitions(cfg, 1)?;
    let keys = positive("keys", cfg.keys.unwrap_or(5))?;
    let tol = tolerance(cfg, "residual", STATE_TOL, Bound::Upper)?;
    let name = cfg.strategy.as_deref().unwrap_or("honest");
    let broken = name == "broken";
    let strat = if broken {
        ProverStrategy::Honest
    } else {
        strategy(cfg, "honest")?
    };
    let mode = if l == 1 {
        OutputMode::Coherent
    } else {
        OutputMode::Measured
    };

    let (mut all_hold, mut max_residual, mut max_epsilon, mut broken_gap) =
        (true, 0f64, 0f64, 0f64);
    let mut residuals = Vec::new();
    for t in 0..keys {
        let f = exact_key(n, cfg.seed, t)?;
        let mut rng = trial_rng(sub_seed(cfg.seed, "run"), t);
        let m: u8 = rng.random_range(0..2);
        let run = explain(&strat, m, &f, l, mode, &mut rng)?;
        let x = if broken {
            let xbit = run.layout.bit("X", (t % n as u64) as u32)?;
            let b = break_phase(&run, 0, |regs| (regs >> xbit) & 1 == 0)?;
            let x = check_xor_structure(&b.run, None)?;
            broken_gap = broken_gap.max((x.residuals[0] - b.constructed_residual).abs());
            x
        } else {
            check_xor_structure(&run, None)?
        };
        all_hold &= x.holds;
        max_epsilon = max_epsilon.max(x.epsilon);
        max_residual = x.residuals.iter().fold(max_residual, |a, &b| a.max(b));
        residuals.push(x.residuals);
    }
    r.metric("strategy", name);
    r.metric("n", n);
    r.metric("L", l);
    r.metric("keys", keys);
    r.metric("residuals", &residuals);
    r.metric("max_residual", max_residual);
    r.metric("max_epsilon", max_epsilon);
    r.criterion(
        "xor-bound",
        "residual at most 2ε on every repetition",
        all_hold,
        "",
    );
    if broken {
        r.metric("max_gap_to_constructed", broken_gap);
        r.criterion(
            "constructed-residual",
            "the phase-broken residual equals its constructed value",
            broken_gap <= tol,
            format!("max gap {broken_gap:.3e}, tolerance {tol:.1e}"),
        );
    } else if strat == ProverStrategy::Honest {
        r.criterion(
            "honest-exact",
            "honest runs have zero residual",
            max_residual <= tol,
            format!("max {max_residual:.3e}, tolerance {tol:.1e}"),
        );
    }
    Ok(())
}

fn bound_check(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["n", "L", "l", "keys", "strategy"])?;
    check_tolerance_names(cfg, &["equality"])?;
    let n = cfg.n.unwrap_or(8);
    let big_l = repetitions(cfg, 3)?;
    let l = cfg.l.unwrap_or(0);
    if l >= big_l {
        bail!("l = {l} must be below L = {big_l}");
    }
    let default = if l == 0 {
        "noquery".to_string()
    } else {
        format!("partial:{l}")
    };
    let strat = strategy(cfg, &default)?;
    let keys = positive("keys", cfg.keys.unwrap_or(5))?;
    let tol = tolerance(cfg, "equality", 1e-12, Bound::Upper)?;

    let (mut precondition, mut holds) = (true, true);
    let mut validities = Vec::new();
    let mut bound = 0.0;
    let (mut no_claw, mut at_most) = (f64::INFINITY, f64::INFINITY);
    for t in 0..keys {
        let f = exact_key(n, cfg.seed, t)?;
        let mut rng = trial_rng(sub_seed(cfg.seed, "run"), t);
        let m: u8 = rng.random_range(0..2);
        let run = explain(&strat, m, &f, big_l, OutputMode::Measured, &mut rng)?;
        let b = check_no_preimage_bound(&run, l)?;
        precondition &= b.precondition;
        holds &= b.holds != Some(false);
        no_claw = no_claw.min(b.no_claw_norm);
        at_most = at_most.min(b.at_most_norm);
        bound = b.bound;
        validities.push(b.validity);
    }
    let max_validity = validities.iter().copied().fold(0.0, f64::max);
    r.metric("strategy", strat.name());
    r.metric("n", n);
    r.metric("L", big_l);
    r.metric("l", l);
    r.metric("keys", keys);
    r.metric("validities", &validities);
    r.metric("max_validity", max_validity);
    r.metric("bound", bound);
    r.metric("precondition", precondition);
    r.metric("min_no_claw_norm", no_claw);
    r.metric("min_at_most_l_norm", at_most);
    if !precondition {
        r.note(format!(
            "the state leaves the no-claw, at-most-{l}-preimage subspace; the bound is not asserted"
        ));
        return Ok(());
    }
    r.criterion(
        "bound",
        "validity at most 2^(l−L)",
        holds,
        format!("max validity {max_validity:.6}, bound {bound:.6}"),
    );
    let tight = matches!(strat, ProverStrategy::NoQueryGuess if l == 0)
        || matches!(strat, ProverStrategy::PartialQuery(k) if k == l);
    if tight {
        let gap = validities
            .iter()
            .map(|v| (v - bound).abs())
            .fold(0.0, f64::max);
        r.metric("max_gap_to_bound", gap);
        r.criterion(
            "equality",
            "a strategy querying exactly l repetitions meets the bound",
            gap <= tol,
            format!("max gap {gap:.3e}, tolerance {tol:.1e}"),
        );
    }
    Ok(())
}

fn clean_structure(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["n", "keys", "strategy"])?;
    check_tolerance_names(cfg, &["delta"])?;
    let n = cfg.n.unwrap_or(6);
    let keys = positive("keys", cfg.keys.unwrap_or(10))?;
    let tol = tolerance(cfg, "delta", STATE_TOL, Bound::Upper)?;
    let strategies: Vec<ProverStrategy> = match &cfg.strategy {
        Some(s) => vec![s.parse()?],
        None => vec![
            ProverStrategy::Honest,
            ProverStrategy::NoQueryGuess,
            ProverStrategy::mixture(),
        ],
    };
    let key_seeds: Vec<u64> = (0..keys)
        .map(|i| sub_seed(cfg.seed, &format!("key-{i}")))
        .collect();
    for s in &strategies {
        let c = check_clean_structure(s, n, &key_seeds, cfg.seed)?;
        let id = c.strategy.clone();
        r.metric(&format!("{id}_delta"), c.delta);
        r.metric(&format!("{id}_beta_weight"), c.beta_weight);
        r.metric(&format!("{id}_alpha_weight"), c.alpha_weight);
        r.metric(&format!("{id}_phase_mismatch"), c.phase_mismatch);
        let expected = match s {
            ProverStrategy::Honest | ProverStrategy::PartialQuery(1) => Some(0.5),
            ProverStrategy::NoQueryGuess | ProverStrategy::PartialQuery(0) => Some(0.0),
            ProverStrategy::Custom(c) if c.name == "mixture" => Some(0.25),
            _ => None,
        };
        if let Some(want) = expected {
            r.criterion(
                &format!("{id}-delta"),
                "ensemble validity minus one half matches the strategy",
                (c.delta - want).abs() <= tol,
                format!("δ = {:.12}, expected {want}", c.delta),
            );
        }
        r.criterion(
            &format!("{id}-clause-i"),
            "no weight on both preimages",
            c.clause_i,
            "",
        );
        r.criterion(
            &format!("{id}-clause-ii"),
            "α-weight at least 2δ",
            c.clause_ii,
            "",
        );
        r.criterion(
            &format!("{id}-clause-iii"),
            "phase mismatch at most the α-weight minus 2δ",
            c.clause_iii,
            "",
        );
    }
    r.metric("n", n);
    r.metric("keys", keys);
    Ok(())
}

fn extract(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["family", "n", "L", "trials", "strategy"])?;
    check_tolerance_names(cfg, &["claw_rate_min", "accept_sigmas"])?;
    let fam = family(cfg, "exact")?;
    if fam == FamilyTag::LatticeNtcf {
        bail!("extract-claw supports the exact and twin families");
    }
    let n = cfg.n.unwrap_or(8);
    let l = repetitions(cfg, 2)?;
    let trials = positive("trials", cfg.trials.unwrap_or(2000))?;
    let strat = strategy(cfg, "honest")?;
    let claw_min = tolerance(cfg, "claw_rate_min", 0.2, Bound::Lower)?;
    let sigmas = tolerance(cfg, "accept_sigmas", 4.0, Bound::Upper)?;

    let f = ExactPair::generate(fam, n, sub_seed(cfg.seed, "key"))?;
    let mut rng = trial_rng(sub_seed(cfg.seed, "exact"), 0);
    let run = explain(&strat, 0, &f, l, OutputMode::Measured, &mut rng)?;
    let exact = extraction_exact_rate(&f, &run)?;
    let e = extract_claw(&f, &strat, l, trials, sub_seed(cfg.seed, "trials"))?;
    r.metric("family", fam.name());
    r.metric("strategy", &e.strategy);
    r.metric("n", e.n);
    r.metric("L", e.repetitions);
    r.metric("trials", e.trials);
    r.metric("preimage_found", e.preimage_found);
    r.metric("preimage_bits", e.preimage_bits);
    r.metric("pattern_matches", e.pattern_matches);
    r.metric("accepts", e.accepts);
    r.metric("claws", e.claws);
    r.metric("claws_verified", e.claws_verified);
    r.metric("claw_rate", e.claw_rate);
    r.metric("accept_rate", e.accept_rate);
    r.metric("exact_claw_rate_single_run", exact);
    r.metric("verifier", &e.verifier);

    r.criterion(
        "claws-verified",
        "every reported claw passes the public check",
        e.claws == e.claws_verified,
        format!("{} of {} verified", e.claws_verified, e.claws),
    );
    if fam == FamilyTag::InjectiveTwin {
        r.criterion(
            "no-claws",
            "injective keys have no claws to extract",
            e.claws == 0,
            "",
        );
        return Ok(());
    }
    match strat {
        ProverStrategy::Honest => r.criterion(
            "claw-rate",
            "the extractor finds claws against the honest sender",
            e.claw_rate >= claw_min,
            format!("rate {:.4}, minimum {claw_min}", e.claw_rate),
        ),
        ProverStrategy::NoQueryGuess => {
            let target = 0.5f64.powi(l as i32);
            let sigma = (target * (1.0 - target) / trials as f64).sqrt();
            r.metric("accept_target", target);
            r.metric("accept_sigma", sigma);
            r.criterion(
                "no-claws",
                "a sender that never queries yields no claws",
                e.claws == 0,
                "",
            );
            r.criterion(
                "accept-rate",
                "a sender that never queries passes with probability 2^−L",
                (e.accept_rate - target).abs() <= sigmas * sigma,
                format!("rate {:.4}, target {target}, σ {sigma:.4}", e.accept_rate),
            );
        }
        _ => {}
    }
    Ok(())
}

fn suite(cfg: &ExperimentConfig, r: &mut Report) -> Result<()> {
    allow_fields(cfg, &["profile"])?;
    check_tolerance_names(cfg, &[])?;
    let profile: Profile = cfg.profile.as_deref().unwrap_or("all").parse()?;
    for c in run_suite(profile, cfg.seed) {
        r.metric(&c.id, &c.metrics);
        r.timings.insert(c.id.clone(), c.runtime_s);
        r.criterion(&c.id, &c.name, c.pass, c.detail);
    }
    r.note("a criterion passes only if its checks pass within its runtime budget");
    Ok(())
}
