//! Exhaustive checks of the exact families, the Gaussian sampler against
//! its tabulated law, and trapdoor inversion at and beyond its radius.

use std::collections::{BTreeMap, BTreeSet};

use qdeny::lattice::{gauss_sample, gen_trap, invert, Gadget, GaussParams, Poly, Ring};
use qdeny::rng::{trial_rng, ExpRng};
use qdeny::tcf::{EnumerableNtcf, ExactPair, FamilyTag, Ntcf};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn exact_claw_free_keys_are_two_to_one_with_working_trapdoors() {
    for n in 2..=12u32 {
        let f = ExactPair::generate(FamilyTag::ExactClawFree, n, 100 + n as u64).unwrap();
        let mut preimages: BTreeMap<u64, Vec<(u8, u64)>> = BTreeMap::new();
        for b in 0..2u8 {
            for x in 0..1u64 << n {
                preimages.entry(f.key.eval(b, x)).or_default().push((b, x));
            }
        }
        assert_eq!(preimages.len(), 1 << n, "n = {n}: range size");
        for (&y, pre) in &preimages {
            assert_eq!(pre.len(), 2, "n = {n}: y = {y}");
            assert_eq!((pre[0].0, pre[1].0), (0, 1), "one preimage per branch");
            let (x0, x1) = (pre[0].1 as u128, pre[1].1 as u128);
            assert_eq!(f.claw(&y), Some((x0, x1)));
            assert_eq!(f.invert(0, &y), Some(x0));
            assert_eq!(f.invert(1, &y), Some(x1));
            assert!(f.chk(0, x0, &y) && f.chk(1, x1, &y));
            assert!(!f.chk(0, x1, &y) || x0 == x1);
        }
    }
}

#[test]
fn twin_keys_are_injective_with_disjoint_ranges() {
    for n in 2..=12u32 {
        let f = ExactPair::generate(FamilyTag::InjectiveTwin, n, 200 + n as u64).unwrap();
        let ranges: [BTreeSet<u64>; 2] =
            [0u8, 1].map(|b| (0..1u64 << n).map(|x| f.key.eval(b, x)).collect());
        assert_eq!(ranges[0].len(), 1 << n, "n = {n}: f_0 is injective");
        assert_eq!(ranges[1].len(), 1 << n, "n = {n}: f_1 is injective");
        assert!(ranges[0].is_disjoint(&ranges[1]));
        for y in 0..1u64 << f.image_bits() {
            for b in 0..2u8 {
                let inv = f.invert(b, &y);
                assert_eq!(inv.is_some(), ranges[b as usize].contains(&y));
                if let Some(x) = inv {
                    assert_eq!(f.key.eval(b, x as u64), y);
                }
            }
            assert_eq!(f.claw(&y), None);
        }
    }
}

#[test]
fn gaussian_sampler_matches_its_law() {
    let p = GaussParams {
        n_dim: 1,
        q: 17,
        b: 2.0,
    };
    let samples = 100_000u64;
    let support: Vec<i64> = (-2..=2).collect();
    let weights: Vec<f64> = support
        .iter()
        .map(|&t| (-std::f64::consts::PI * (t * t) as f64 / (p.b * p.b)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let mut counts = vec![0u64; support.len()];
    let mut rng = trial_rng(31, 0);
    for _ in 0..samples {
        let v = gauss_sample(&p, &mut rng).unwrap()[0];
        let i = support
            .iter()
            .position(|&t| t == v)
            .expect("sample inside the support");
        counts[i] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, w)| {
            let e = samples as f64 * w / z;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((support.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    assert!(chi2 < critical, "χ² = {chi2:.2}, critical {critical:.2}");
}

fn mul_add(ring: &Ring, a: &[Poly], s: &[u32], e: &[Vec<i64>]) -> Vec<Poly> {
    a.iter()
        .zip(e)
        .map(|(ai, ei)| {
            let prod = ring.mul(ai, s);
            prod.iter()
                .zip(ei)
                .map(|(&p, &v)| ring.reduce(p as i64 + v))
                .collect()
        })
        .collect()
}

#[test]
fn inversion_succeeds_inside_the_radius_and_is_sound_outside() {
    let ring = Ring::new(8, 257).unwrap();
    let m = 11;
    let mut rng = trial_rng(41, 0);
    let (a, tau) = gen_trap(&ring, m, 1.0, &mut rng).unwrap();
    let radius = tau.radius(&Gadget::new(ring.q));
    assert!(radius > 1.0);
    // Largest single-coefficient error strictly inside the radius.
    let edge = (radius - 1e-9).floor() as i64;
    let random_s =
        |rng: &mut ExpRng| -> Poly { (0..ring.n).map(|_| rng.random_range(0..ring.q)).collect() };

    for t in 0..1000u64 {
        let mut rng = trial_rng(42, t);
        let s = random_s(&mut rng);
        let mut e = vec![vec![0i64; ring.n]; m];
        for pos in 0..ring.n {
            let row = rng.random_range(0..m);
            e[row][pos] = if rng.random() { edge } else { -edge };
        }
        let y = mul_add(&ring, &a, &s, &e);
        assert_eq!(invert(&ring, &a, &tau, &y), Some(s.clone()), "trial {t}");
        let zero = vec![vec![0i64; ring.n]; m];
        assert_eq!(
            invert(&ring, &a, &tau, &mul_add(&ring, &a, &s, &zero)),
            Some(s)
        );
    }

    let (mut rejected, mut accepted) = (0, 0);
    for t in 0..1000u64 {
        let mut rng = trial_rng(43, t);
        let s = random_s(&mut rng);
        let e: Vec<Vec<i64>> = (0..m)
            .map(|_| (0..ring.n).map(|_| rng.random_range(-64..=64)).collect())
            .collect();
        let y = mul_add(&ring, &a, &s, &e);
        match invert(&ring, &a, &tau, &y) {
            None => rejected += 1,
            Some(s2) => {
                accepted += 1;
                for pos in 0..ring.n {
                    let norm_sq: i64 = a
                        .iter()
                        .zip(&y)
                        .map(|(ai, yi)| ring.center(ring.sub(yi, &ring.mul(ai, &s2))[pos]).pow(2))
                        .sum();
                    assert!(
                        (norm_sq as f64).sqrt() < radius,
                        "an accepted answer is outside the radius"
                    );
                }
            }
        }
    }
    assert!(
        rejected > accepted,
        "large errors should mostly be rejected"
    );
}
