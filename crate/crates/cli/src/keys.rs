//! Key pairs of either family, and the ciphertext file format.

use std::path::Path;

use anyhow::{bail, Context, Result};
use qdeny::deniable::CiphertextWire;
use qdeny::lattice::{LatticeKey, LatticePair, LatticeParams, LatticeTrapdoor};
use qdeny::tcf::{Envelope, ExactPair, FamilyTag, TcfKey, Trapdoor};
use qdeny::unexplainable::ParallelWire;
use serde::{Deserialize, Serialize};

/// A key with its trapdoor, from any family.
pub enum AnyPair {
    Exact(ExactPair),
    Lattice(LatticePair),
}

/// Evaluates `$body` with `$f` bound to the concrete pair type.
macro_rules! with_pair {
    ($pair:expr, $f:ident => $body:expr) => {
        match $pair {
            $crate::keys::AnyPair::Exact($f) => $body,
            $crate::keys::AnyPair::Lattice($f) => $body,
        }
    };
}
pub(crate) use with_pair;

impl AnyPair {
    /// `n` is used by the exact families, `preset` by the lattice family.
    pub fn generate(family: FamilyTag, n: u32, preset: &str, seed: u64) -> Result<Self> {
        Ok(match family {
            FamilyTag::LatticeNtcf => AnyPair::Lattice(LatticePair::generate(
                &LatticeParams::preset(preset)?,
                seed,
            )?),
            _ => AnyPair::Exact(ExactPair::generate(family, n, seed)?),
        })
    }

    pub fn from_envelopes(key: &Envelope, td: &Envelope) -> Result<Self> {
        if key.family != td.family {
            bail!(
                "key family {} does not match trapdoor family {}",
                key.family.name(),
                td.family.name()
            );
        }
        Ok(match key.family {
            FamilyTag::LatticeNtcf => AnyPair::Lattice(LatticePair::new(
                LatticeKey::from_envelope(key)?,
                LatticeTrapdoor::from_envelope(td)?,
            )?),
            _ => AnyPair::Exact(ExactPair::new(
                TcfKey::from_envelope(key)?,
                Trapdoor::from_envelope(td)?,
            )?),
        })
    }

    pub fn load(key_path: &Path, td_path: &Path) -> Result<Self> {
        let read = |p: &Path| -> Result<Envelope> {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Envelope::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        };
        Self::from_envelopes(&read(key_path)?, &read(td_path)?)
    }

    pub fn envelopes(&self) -> (Envelope, Envelope) {
        match self {
            AnyPair::Exact(p) => (p.key.to_envelope(), p.td.to_envelope()),
            AnyPair::Lattice(p) => (p.key.to_envelope(), p.td.to_envelope(&p.key)),
        }
    }

    pub fn key_id(&self) -> String {
        match self {
            AnyPair::Exact(p) => hex::encode(p.key.id()),
            AnyPair::Lattice(p) => hex::encode(p.key.id()),
        }
    }
}

/// A ciphertext together with what the receiver needs to decrypt it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum CiphertextFile {
    Deniable {
        key_id: String,
        ciphertext: CiphertextWire,
    },
    Unexp {
        key_id: String,
        oracle_seed: u64,
        ciphertext: ParallelWire,
    },
}

impl CiphertextFile {
    pub fn key_id(&self) -> &str {
        match self {
            CiphertextFile::Deniable { key_id, .. } | CiphertextFile::Unexp { key_id, .. } => {
                key_id
            }
        }
    }
}
