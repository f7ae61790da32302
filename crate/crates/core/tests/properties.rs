//! Property tests for projectors, the compressed oracle, the structure
//! decomposition, distances and the wire formats.

use proptest::prelude::*;
use qdeny::compressed_oracle::{std_decomp_at, Database, OracleLabel, OracleState};
use qdeny::deniable::{den_enc, DeniableCiphertext};
use qdeny::distances::{
    hellinger_sq, superposition_trace_bound, trace_distance_pure, tv_distance, Density,
};
use qdeny::qsim::{SparseState, C64};
use qdeny::rigidity::{check_xor_structure, decompose_state, explain, ProverStrategy};
use qdeny::rng::trial_rng;
use qdeny::tcf::{Envelope, ExactPair, FamilyTag, TcfKey, Trapdoor};
use qdeny::unexplainable::{
    apply_projector, pattern_distribution, sample_oracle, unexp_enc_concrete, OutputMode,
    ParallelCiphertext, PreimagePattern, ProjectorKind, ProjectorSpec,
};

const DOMAIN: u64 = 8;

fn database() -> impl Strategy<Value = Database> {
    prop::collection::btree_map(0..DOMAIN, 0..2u8, 0..5)
        .prop_map(|m| Database::from_pairs(m).expect("distinct inputs"))
}

fn oracle_state() -> impl Strategy<Value = OracleState> {
    prop::collection::vec((0..4u64, database(), -1.0..1.0f64, -1.0..1.0f64), 1..12).prop_map(
        |entries| {
            let mut s = SparseState::from_entries(
                entries
                    .into_iter()
                    .map(|(regs, db, re, im)| (OracleLabel { regs, db }, C64::new(re, im))),
            );
            if s.norm_sqr() < 1e-6 {
                s = SparseState::basis(OracleLabel::new(0));
            }
            s.normalize();
            s
        },
    )
}

/// Preimage pairs of distinct inputs, one per repetition.
fn preimages(reps: usize) -> impl Strategy<Value = Vec<[Option<u64>; 2]>> {
    prop::collection::vec((0..DOMAIN, 1..DOMAIN), reps).prop_map(|v| {
        v.into_iter()
            .map(|(a, d)| [Some(a), Some((a + d) % DOMAIN)])
            .collect()
    })
}

fn pattern() -> impl Strategy<Value = PreimagePattern> {
    prop_oneof![
        Just(PreimagePattern::Neither),
        Just(PreimagePattern::Only(0)),
        Just(PreimagePattern::Only(1)),
        Just(PreimagePattern::Both),
    ]
}

fn projector() -> impl Strategy<Value = ProjectorSpec> {
    (1..3usize).prop_flat_map(|reps| {
        let kind = prop_oneof![
            Just(ProjectorKind::NoClaw),
            (0..=reps).prop_map(ProjectorKind::AtMost),
            prop::collection::vec((0..reps, pattern()), 1..=reps).prop_map(ProjectorKind::Pattern),
        ];
        (kind, preimages(reps)).prop_map(|(kind, preimages)| ProjectorSpec {
            kind,
            preimages,
            targets: None,
        })
    })
}

fn density() -> impl Strategy<Value = Density> {
    prop::collection::btree_map(0..16u8, 1e-3..1.0f64, 1..10).prop_map(|m| {
        let total: f64 = m.values().sum();
        Density::new(m.into_iter().map(|(k, v)| (vec![k], v / total))).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projectors_are_idempotent_and_positive(psi in oracle_state(), spec in projector()) {
        let (p1, n1) = apply_projector(&spec, &psi).unwrap();
        let (p2, n2) = apply_projector(&spec, &p1).unwrap();
        prop_assert!(p1.distance_sqr(&p2) < 1e-24);
        prop_assert!((n1 - n2).abs() < 1e-12);
        let expectation = psi.inner(&p1);
        prop_assert!((expectation.re - n1).abs() < 1e-12);
        prop_assert!(expectation.im.abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n1));
    }

    #[test]
    fn pattern_outcomes_are_complementary(psi in oracle_state(), pre in preimages(2)) {
        let classify = |db: &Database, i: usize| PreimagePattern::of(db, &pre[i]);
        let dist = pattern_distribution(&psi, &[0, 1], classify);
        let total: f64 = dist.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (outcome, p) in &dist {
            let kind = ProjectorKind::Pattern(outcome.iter().copied().enumerate().collect());
            let spec = ProjectorSpec { kind, preimages: pre.clone(), targets: None };
            let (_, norm) = apply_projector(&spec, &psi).unwrap();
            prop_assert!((norm - p).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_std_decomp_is_an_involution(psi in oracle_state(), x in 0..DOMAIN) {
        let twice = std_decomp_at(&std_decomp_at(&psi, x, None), x, None);
        prop_assert!(psi.distance_sqr(&twice) < 1e-24);
        let once = std_decomp_at(&psi, x, None);
        prop_assert!((once.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distances_respect_their_bounds(a in density(), b in density()) {
        let tv = tv_distance(&a, &b).unwrap();
        let h2 = hellinger_sq(&a, &b).unwrap();
        prop_assert!((tv - tv_distance(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!((-1e-15..=1.0 + 1e-12).contains(&tv));
        prop_assert!(tv <= (2.0 * h2).sqrt() + 1e-12);
        let td = trace_distance_pure(&a.amplitude_state().unwrap(), &b.amplitude_state().unwrap()).unwrap();
        prop_assert!(td <= superposition_trace_bound(&a, &b).unwrap() + 1e-12);
        prop_assert!(tv_distance(&a, &a).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_covers_the_whole_state(
        seed in any::<u64>(),
        m in 0..2u8,
        which in 0..4usize,
    ) {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, 5, seed).unwrap();
        let strategy = [
            ProverStrategy::Honest,
            ProverStrategy::NoQueryGuess,
            ProverStrategy::PartialQuery(0),
            ProverStrategy::mixture(),
        ][which].clone();
        let run = explain(&strategy, m, &f, 1, OutputMode::Coherent, &mut trial_rng(seed, 1)).unwrap();
        let d = decompose_state(&run, 0).unwrap();
        prop_assert!((d.total_weight() - 1.0).abs() < 1e-10);
        prop_assert!((d.classes.total() - 1.0).abs() < 1e-10);
        let x = check_xor_structure(&run, None).unwrap();
        prop_assert!((x.residuals[0] - x.formula_residuals[0]).abs() < 1e-10);
        prop_assert!((x.residuals[0] - d.xor_residual()).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn key_envelopes_round_trip(n in 2u32..=20, seed in any::<u64>(), twin in any::<bool>()) {
        let fam = if twin { FamilyTag::InjectiveTwin } else { FamilyTag::ExactClawFree };
        let f = ExactPair::generate(fam, n, seed).unwrap();
        let key = TcfKey::from_envelope(&Envelope::from_json(&f.key.to_envelope().to_json()).unwrap()).unwrap();
        let td = Trapdoor::from_envelope(&Envelope::from_json(&f.td.to_envelope().to_json()).unwrap()).unwrap();
        prop_assert_eq!(key.id(), f.key.id());
        prop_assert!(td.matches(&key));
        for x in [0u64, (1 << n) - 1, seed & ((1 << n) - 1)] {
            prop_assert_eq!(key.eval(1, x), f.key.eval(1, x));
        }
    }

    #[test]
    fn ciphertexts_round_trip(n in 2u32..=16, seed in any::<u64>(), m in 0..2u8, l in 1usize..=4) {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, n, seed).unwrap();
        let mut rng = trial_rng(seed, 0);
        let (c, _) = den_enc(m, &f, &mut rng).unwrap();
        let w: qdeny::deniable::CiphertextWire =
            serde_json::from_str(&serde_json::to_string(&c.to_wire(&f)).unwrap()).unwrap();
        prop_assert_eq!(DeniableCiphertext::from_wire(&w, &f).unwrap(), c);

        let h = sample_oracle(n, seed);
        let pc = unexp_enc_concrete(m, &f, h.as_ref(), l, &mut rng).unwrap();
        let pw: qdeny::unexplainable::ParallelWire =
            serde_json::from_str(&serde_json::to_string(&pc.to_wire(&f)).unwrap()).unwrap();
        prop_assert_eq!(ParallelCiphertext::from_wire(&pw, &f).unwrap(), pc);
    }
}
