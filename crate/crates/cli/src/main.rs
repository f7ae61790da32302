//! `qdeny`: key generation, encryption and the experiment runner.
//!
//! Exit codes: 0 when every enabled check passes, 1 when a check fails (the
//! report is still written), 2 for usage, configuration or parameter errors.

mod config;
mod experiments;
mod keys;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qdeny::deniable::{den_dec, den_enc, DeniableCiphertext};
use qdeny::rng::{sub_seed, trial_rng};
use qdeny::tcf::{FamilyTag, Ntcf};
use qdeny::unexplainable::{
    sample_oracle, unexp_dec, unexp_enc_concrete, Decryption, ParallelCiphertext, MAX_L_CONCRETE,
};
use serde_json::json;

use config::ExperimentConfig;
use keys::{with_pair, AnyPair, CiphertextFile};

#[derive(Parser)]
#[command(
    name = "qdeny",
    version,
    about = "Deniable and unexplainable encryption on simulated TCF keys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key and its trapdoor.
    Keygen(KeygenArgs),
    /// Encrypt one bit.
    Encrypt(EncryptArgs),
    /// Decrypt a ciphertext file.
    Decrypt(DecryptArgs),
    /// Trace distance between the residual states for the two emitted bits.
    DeniabilityExp(DeniabilityArgs),
    /// Compare compressed and purified phase oracles on random circuits.
    OracleEquiv(OracleEquivArgs),
    /// XOR structure of sender states against the compressed oracle.
    XorStructure(XorArgs),
    /// Validity of strategies that hold few preimages.
    BoundCheck(BoundArgs),
    /// Ensemble decomposition of single-repetition strategies.
    CleanStructure(CleanArgs),
    /// Run the claw extractor against a sender strategy.
    ExtractClaw(ExtractArgs),
    /// Run the full acceptance matrix.
    Suite(SuiteArgs),
    /// Run an experiment described by a JSON config file.
    Run(RunArgs),
}

#[derive(Args)]
struct Common {
    /// Master seed; every random choice derives from it.
    #[arg(long)]
    seed: u64,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tighten a named tolerance, as NAME=VALUE.
    #[arg(long = "tol", value_parser = parse_tolerance)]
    tolerances: Vec<(String, f64)>,
}

impl Common {
    fn config(&self, experiment: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(experiment, self.seed);
        c.out = self.out.clone();
        c.tolerances = self.tolerances.iter().cloned().collect();
        c
    }
}

fn parse_tolerance(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance value: {e}"))?;
    Ok((k.to_string(), v))
}

#[derive(Args)]
struct DeniabilityArgs {
    #[command(flatten)]
    common: Common,
    /// Key family: twin, exact or lattice.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    /// Number of independently generated keys.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct OracleEquivArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    circuits: Option<usize>,
    #[arg(long)]
    max_queries: Option<usize>,
}

#[derive(Args)]
struct XorArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    /// Parallel repetitions.
    #[arg(long = "L")]
    repetitions: Option<usize>,
    #[arg(long)]
    keys: Option<u64>,
    /// honest, noquery, partial:<l>, mixture or broken.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    /// Parallel repetitions.
    #[arg(long = "L")]
    repetitions: Option<usize>,
    /// Repetitions allowed to hold a preimage.
    #[arg(long = "l")]
    l: Option<usize>,
    #[arg(long)]
    keys: Option<u64>,
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    keys: Option<u64>,
    /// One strategy; all three reference strategies when omitted.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    /// Parallel repetitions.
    #[arg(long = "L")]
    repetitions: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    common: Common,
    /// all (full size) or fast (trial counts divided by ten).
    #[arg(long)]
    profile: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where key material comes from: files, or regenerated from a seed.
#[derive(Args)]
struct KeySource {
    /// Public key file.
    #[arg(long, requires = "td", conflicts_with = "family")]
    key: Option<PathBuf>,
    /// Trapdoor file.
    #[arg(long, requires = "key")]
    td: Option<PathBuf>,
    /// Regenerate the key: twin, exact or lattice.
    #[arg(long, requires = "key_seed")]
    family: Option<String>,
    #[arg(long, default_value_t = 8)]
    n: u32,
    /// Lattice parameter preset.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    key_seed: Option<u64>,
}

impl KeySource {
    fn load(&self) -> Result<AnyPair> {
        match (&self.key, &self.td, &self.family, self.key_seed) {
            (Some(k), Some(t), None, _) => AnyPair::load(k, t),
            (None, None, Some(f), Some(s)) => {
                AnyPair::generate(f.parse()?, self.n, &self.preset, s)
            }
            _ => bail!("give either --key and --td, or --family and --key-seed"),
        }
    }
}

#[derive(Args)]
struct KeygenArgs {
    /// twin, exact or lattice.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 8)]
    n: u32,
    /// Lattice parameter preset: desk, micro or gap.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    key_out: Option<PathBuf>,
    #[arg(long)]
    td_out: Option<PathBuf>,
}

#[derive(Args)]
struct EncryptArgs {
    #[command(flatten)]
    keys: KeySource,
    /// deniable or unexp.
    #[arg(long)]
    scheme: String,
    /// The plaintext bit.
    #[arg(long, short = 'm')]
    message: u8,
    /// Parallel repetitions for the unexplainable scheme.
    #[arg(long = "L", default_value_t = 3)]
    repetitions: usize,
    /// Seed of the encryption randomness.
    #[arg(long)]
    seed: u64,
    /// Seed of the random oracle; derived from --seed when omitted.
    #[arg(long)]
    oracle_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecryptArgs {
    #[command(flatten)]
    keys: KeySource,
    /// Ciphertext file written by `encrypt`.
    #[arg(long = "in")]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `QDENY_THREADS` sizes the worker pool; results do not depend on it.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QDENY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .with_context(|| format!("QDENY_THREADS = '{v}' is not a count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<bool> {
    let cfg = match cmd {
        Command::Keygen(a) => return keygen(&a).map(|_| true),
        Command::Encrypt(a) => return encrypt(&a).map(|_| true),
        Command::Decrypt(a) => return decrypt(&a),
        Command::DeniabilityExp(a) => {
            let mut c = a.common.config("deniability-exp");
            (c.family, c.n, c.trials) = (a.family, a.n, a.trials);
            c
        }
        Command::OracleEquiv(a) => {
            let mut c = a.common.config("oracle-equiv");
            (c.n, c.circuits, c.max_queries) = (a.n, a.circuits, a.max_queries);
            c
        }
        Command::XorStructure(a) => {
            let mut c = a.common.config("xor-structure");
            (c.n, c.repetitions, c.keys, c.strategy) = (a.n, a.repetitions, a.keys, a.strategy);
            c
        }
        Command::BoundCheck(a) => {
            let mut c = a.common.config("bound-check");
            (c.n, c.repetitions, c.l, c.keys, c.strategy) =
                (a.n, a.repetitions, a.l, a.keys, a.strategy);
            c
        }
        Command::CleanStructure(a) => {
            let mut c = a.common.config("clean-structure");
            (c.n, c.keys, c.strategy) = (a.n, a.keys, a.strategy);
            c
        }
        Command::ExtractClaw(a) => {
            let mut c = a.common.config("extract-claw");
            (c.family, c.n, c.repetitions, c.trials, c.strategy) =
                (a.family, a.n, a.repetitions, a.trials, a.strategy);
            c
        }
        Command::Suite(a) => {
            let mut c = a.common.config("suite");
            c.profile = a.profile;
            c
        }
        Command::Run(a) => {
            let text = std::fs::read_to_string(&a.config)
                .with_context(|| format!("reading {}", a.config.display()))?;
            let mut c = ExperimentConfig::from_json(&text)?;
            if a.out.is_some() {
                c.out = a.out;
            }
            c
        }
    };
    let report = experiments::run(&cfg)?;
    let text = report.to_json()?;
    emit(cfg.out.as_deref(), &text)?;
    for c in &report.criteria {
        eprintln!(
            "{} {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.id,
            c.detail
        );
    }
    eprintln!(
        "{}: {}",
        report.experiment,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(report.pass)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn keygen(a: &KeygenArgs) -> Result<()> {
    let family: FamilyTag = a.family.parse()?;
    let pair = AnyPair::generate(family, a.n, &a.preset, a.seed)?;
    let (key, td) = pair.envelopes();
    match (&a.key_out, &a.td_out) {
        (Some(k), Some(t)) => {
            emit(Some(k), &(key.to_json() + "\n"))?;
            emit(Some(t), &(td.to_json() + "\n"))?;
            eprintln!("key {} written", pair.key_id());
        }
        (None, None) => {
            let both = json!({ "key": key, "trapdoor": td });
            emit(None, &(serde_json::to_string_pretty(&both)? + "\n"))?;
        }
        _ => bail!("give both --key-out and --td-out, or neither"),
    }
    Ok(())
}

fn encrypt(a: &EncryptArgs) -> Result<()> {
    if a.message > 1 {
        bail!("the message must be 0 or 1");
    }
    let pair = a.keys.load()?;
    let mut rng = trial_rng(a.seed, 0);
    let file = match a.scheme.as_str() {
        "deniable" => with_pair!(&pair, f => {
            let (c, _) = den_enc(a.message, f, &mut rng)?;
            CiphertextFile::Deniable { key_id: pair.key_id(), ciphertext: c.to_wire(f) }
        }),
        "unexp" => {
            if a.repetitions == 0 || a.repetitions > MAX_L_CONCRETE {
                bail!("L must lie in 1..={MAX_L_CONCRETE}");
            }
            let oracle_seed = a.oracle_seed.unwrap_or_else(|| sub_seed(a.seed, "oracle"));
            with_pair!(&pair, f => {
                let h = sample_oracle(f.input_bits(), oracle_seed);
                let c = unexp_enc_concrete(a.message, f, h.as_ref(), a.repetitions, &mut rng)?;
                CiphertextFile::Unexp { key_id: pair.key_id(), oracle_seed, ciphertext: c.to_wire(f) }
            })
        }
        other => bail!("unknown scheme '{other}' (expected deniable or unexp)"),
    };
    emit(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&file)? + "\n"),
    )
}

/// Prints the plaintext; returns `false` when an unexplainable ciphertext
/// is rejected.
fn decrypt(a: &DecryptArgs) -> Result<bool> {
    let pair = a.keys.load()?;
    let text = std::fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let file: CiphertextFile = serde_json::from_str(&text).context("invalid ciphertext file")?;
    if file.key_id() != pair.key_id() {
        bail!(
            "the ciphertext was made for key {}, not {}",
            file.key_id(),
            pair.key_id()
        );
    }
    let result = match &file {
        CiphertextFile::Deniable { ciphertext, .. } => with_pair!(&pair, f => {
            let c = DeniableCiphertext::from_wire(ciphertext, f)?;
            Decryption::Message(den_dec(&c, f)?)
        }),
        CiphertextFile::Unexp {
            oracle_seed,
            ciphertext,
            ..
        } => with_pair!(&pair, f => {
            let c = ParallelCiphertext::from_wire(ciphertext, f)?;
            unexp_dec(&c, f, sample_oracle(f.input_bits(), *oracle_seed).as_ref())
        }),
    };
    let out = match &result {
        Decryption::Message(m) => json!({ "message": m }),
        Decryption::Reject(why) => json!({ "message": null, "reject": why }),
    };
    println!("{out}");
    Ok(result.message().is_some())
}
