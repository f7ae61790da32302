//! Cross-checks of the bound, the extractor and the two ways of reading
//! preimage patterns from a database.

use qdeny::compressed_oracle::Database;
use qdeny::rigidity::{
    check_no_preimage_bound, explain, extract_claw, pattern_by_chk, ProverStrategy,
};
use qdeny::rng::trial_rng;
use qdeny::tcf::{ExactPair, FamilyTag};
use qdeny::unexplainable::{pattern_distribution, OutputMode, PreimagePattern};

fn key(n: u32, seed: u64) -> ExactPair {
    ExactPair::generate(FamilyTag::ExactClawFree, n, seed).unwrap()
}

#[test]
fn bound_grows_with_l_and_always_holds() {
    for (seed, strategy) in [
        (1, ProverStrategy::NoQueryGuess),
        (2, ProverStrategy::PartialQuery(1)),
    ] {
        let f = key(6, seed);
        let run = explain(
            &strategy,
            1,
            &f,
            3,
            OutputMode::Measured,
            &mut trial_rng(seed, 0),
        )
        .unwrap();
        let mut last = 0.0;
        for l in 0..3usize {
            let r = check_no_preimage_bound(&run, l).unwrap();
            assert_eq!(r.bound, 2f64.powi(l as i32 - 3));
            assert!(r.bound > last);
            last = r.bound;
            if r.precondition {
                assert_eq!(r.holds, Some(true), "{} at l = {l}", strategy.name());
            }
        }
    }
}

#[test]
fn recorded_preimage_bit_is_unbiased() {
    let f = key(8, 5);
    let r = extract_claw(&f, &ProverStrategy::Honest, 2, 600, 17).unwrap();
    let found = r.preimage_found as f64;
    assert!(found > 500.0);
    let sigma = (found * 0.25).sqrt();
    let zeros = r.preimage_bits[0] as f64;
    assert!(
        (zeros - found / 2.0).abs() <= 4.0 * sigma,
        "{:?} of {found}",
        r.preimage_bits
    );
    assert_eq!(r.claws, r.claws_verified);
}

#[test]
fn chk_and_preimage_patterns_agree() {
    for (seed, strategy) in [
        (3, ProverStrategy::Honest),
        (4, ProverStrategy::PartialQuery(1)),
        (6, ProverStrategy::mixture()),
    ] {
        let f = key(6, seed);
        for l in 1..=2usize {
            let run = explain(
                &strategy,
                0,
                &f,
                l,
                OutputMode::Measured,
                &mut trial_rng(seed, l as u64),
            )
            .unwrap();
            let reps: Vec<usize> = (0..l).collect();
            let by_chk = pattern_distribution(&run.state, &reps, |db: &Database, j| {
                pattern_by_chk(&f, db, &run.y[j])
            });
            let by_pre = pattern_distribution(&run.state, &reps, |db: &Database, j| {
                PreimagePattern::of(db, &run.preimages[j])
            });
            assert_eq!(by_chk.len(), by_pre.len(), "{} L = {l}", strategy.name());
            for (k, p) in &by_chk {
                assert!((p - by_pre[k]).abs() < 1e-12);
            }
        }
    }
}
