//! Acceptance matrix: runs every criterion at full size and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use qdeny::suite::{run_criterion, Profile, CRITERIA};

const SEED: u64 = 20_240_601;

fn main() {
    let mut failed = 0;
    for &(id, name, _) in CRITERIA.iter() {
        let r = run_criterion(id, Profile::Full, SEED).expect("known criterion");
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {id:<3} {name:<22} {:>7.2}s / {:>5.0}s  {}",
            r.runtime_s,
            r.budget_s,
            serde_json::to_string(&r.metrics).unwrap_or_default()
        );
        if !r.pass {
            println!("     {}", r.detail);
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
