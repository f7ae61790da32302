//! Trapdoor claw-free function families.
//!
//! Two exact families over `n`-bit inputs are provided here:
//!
//! * [`FamilyTag::ExactClawFree`]: `f_b(x) = P(x ⊕ b·s)` for a keyed
//!   Feistel permutation `P` and a nonzero offset `s`, so every image has
//!   exactly one claw `(x, x ⊕ s)`.
//! * [`FamilyTag::InjectiveTwin`]: `g_b(x) = P(x | b << n)` for a Feistel
//!   permutation on `n + 1` bits, so the two ranges are disjoint.
//!
//! Neither family offers any computational hardness. The key of the exact
//! family contains `s`, because evaluating `f_1` needs it. Both families
//! exist to exercise the interface at sizes where every set can be
//! enumerated.
//!
//! The [`Ntcf`] trait abstracts over these and the lattice family, so
//! that state preparation and the encryption schemes run unchanged on
//! either.

mod family;
mod feistel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, param, Error, Result};

pub use family::{EnumerableNtcf, ExactPair, Ntcf};
pub use feistel::{Feistel, TABLE_MAX_BITS};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    ExactClawFree,
    InjectiveTwin,
    LatticeNtcf,
}

impl FamilyTag {
    fn code(self) -> u8 {
        match self {
            FamilyTag::ExactClawFree => 0,
            FamilyTag::InjectiveTwin => 1,
            FamilyTag::LatticeNtcf => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(FamilyTag::ExactClawFree),
            1 => Ok(FamilyTag::InjectiveTwin),
            2 => Ok(FamilyTag::LatticeNtcf),
            _ => Err(Error::Serialization(format!("unknown family code {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::ExactClawFree => "exact-claw-free",
            FamilyTag::InjectiveTwin => "injective-twin",
            FamilyTag::LatticeNtcf => "lattice-ntcf",
        }
    }
}

impl std::str::FromStr for FamilyTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-claw-free" => Ok(FamilyTag::ExactClawFree),
            "twin" | "injective" | "injective-twin" => Ok(FamilyTag::InjectiveTwin),
            "lattice" | "lattice-ntcf" => Ok(FamilyTag::LatticeNtcf),
            _ => Err(param(format!("unknown key family '{s}'"))),
        }
    }
}

/// Serialized form shared by keys and trapdoors of every family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub family: FamilyTag,
    pub n: u32,
    pub payload: String,
}

impl Envelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn payload_bytes(&self) -> Result<Vec<u8>> {
        hex::decode(&self.payload).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// First eight bytes of SHA-256 over a public payload.
pub fn fingerprint(bytes: &[u8]) -> [u8; 8] {
    let h = Sha256::digest(bytes);
    h[..8].try_into().unwrap()
}

/// Public key of an exact family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcfKey {
    family: FamilyTag,
    n: u32,
    perm: Feistel,
    s: u64,
}

/// Inversion data for an exact family, bound to its key by fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trapdoor {
    key_id: [u8; 8],
    family: FamilyTag,
    n: u32,
    perm: Feistel,
    s: u64,
}

/// Two preimages sharing the image `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClawPair {
    pub x0: u64,
    pub x1: u64,
    pub y: u64,
}

fn check_bits(n: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&n) {
        return Err(param(format!(
            "preimage length {n} outside {MIN_BITS}..={MAX_BITS}"
        )));
    }
    Ok(())
}

/// Generates a key and trapdoor for an exact family, deterministically in
/// `seed`. Lattice keys come from [`crate::lattice::ntcf_gen`].
pub fn gen(family: FamilyTag, n: u32, seed: u64) -> Result<(TcfKey, Trapdoor)> {
    check_bits(n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keys: [u64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
    let (perm, s) = match family {
        FamilyTag::ExactClawFree => {
            let s = rng.random_range(1..(1u64 << n));
            (Feistel::new(n, keys), s)
        }
        FamilyTag::InjectiveTwin => (Feistel::new(n + 1, keys), 0),
        FamilyTag::LatticeNtcf => {
            return Err(Error::Unsupported(
                "lattice keys are generated by the lattice module".into(),
            ))
        }
    };
    let key = TcfKey {
        family,
        n,
        perm: perm.clone(),
        s,
    };
    let td = Trapdoor {
        key_id: fingerprint(&key.payload()),
        family,
        n,
        perm,
        s,
    };
    Ok((key, td))
}

fn encode(family: FamilyTag, n: u32, perm: &Feistel, s: u64) -> Vec<u8> {
    let mut out = vec![family.code(), n as u8];
    out.extend_from_slice(&s.to_le_bytes());
    for k in perm.keys() {
        out.extend_from_slice(&k.to_le_bytes());
    }
    out
}

fn decode(family: FamilyTag, n: u32, bytes: &[u8]) -> Result<(Feistel, u64)> {
    let bad = |m: &str| Error::Serialization(m.to_string());
    if bytes.len() != 2 + 8 + 32 {
        return Err(bad("payload has the wrong length"));
    }
    if FamilyTag::from_code(bytes[0])? != family || bytes[1] as u32 != n {
        return Err(bad("payload header disagrees with envelope"));
    }
    check_bits(n).map_err(|e| bad(&e.to_string()))?;
    let word = |i: usize| u64::from_le_bytes(bytes[2 + 8 * i..10 + 8 * i].try_into().unwrap());
    let s = word(0);
    let keys = [word(1), word(2), word(3), word(4)];
    let perm = match family {
        FamilyTag::ExactClawFree => {
            if s == 0 || s >= 1u64 << n {
                return Err(bad("claw offset out of range"));
            }
            Feistel::new(n, keys)
        }
        FamilyTag::InjectiveTwin => Feistel::new(n + 1, keys),
        FamilyTag::LatticeNtcf => return Err(bad("not an exact-family payload")),
    };
    Ok((perm, s))
}

impl TcfKey {
    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Width of image labels in bits.
    pub fn image_bits(&self) -> u32 {
        match self.family {
            FamilyTag::InjectiveTwin => self.n + 1,
            _ => self.n,
        }
    }

    fn input_mask(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    fn payload(&self) -> Vec<u8> {
        encode(self.family, self.n, &self.perm, self.s)
    }

    pub fn id(&self) -> [u8; 8] {
        fingerprint(&self.payload())
    }

    pub fn eval(&self, b: u8, x: u64) -> u64 {
        debug_assert!(b < 2 && x <= self.input_mask());
        match self.family {
            FamilyTag::ExactClawFree => self.perm.forward(x ^ (b as u64 * self.s)),
            _ => self.perm.forward(x | ((b as u64) << self.n)),
        }
    }

    /// `true` iff `y` is the image of `(b, x)`; inputs out of range give `false`.
    pub fn chk(&self, b: u8, x: u64, y: u64) -> bool {
        b < 2 && x <= self.input_mask() && self.eval(b, x) == y
    }

    pub fn to_envelope(&self) -> Envelope {
        Envelope {
            family: self.family,
            n: self.n,
            payload: hex::encode(self.payload()),
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        let (perm, s) = decode(env.family, env.n, &env.payload_bytes()?)?;
        Ok(TcfKey {
            family: env.family,
            n: env.n,
            perm,
            s,
        })
    }
}

impl Trapdoor {
    pub fn key_id(&self) -> [u8; 8] {
        self.key_id
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The claw offset of an exact claw-free key.
    pub fn offset(&self) -> Option<u64> {
        (self.family == FamilyTag::ExactClawFree).then_some(self.s)
    }

    pub fn matches(&self, key: &TcfKey) -> bool {
        self.key_id == key.id()
    }

    fn image_mask(&self) -> u64 {
        match self.family {
            FamilyTag::InjectiveTwin => (1u64 << (self.n + 1)) - 1,
            _ => (1u64 << self.n) - 1,
        }
    }

    /// The preimage of `y` under `f_b`, or `None` when `y` is not in its range.
    pub fn invert(&self, b: u8, y: u64) -> Option<u64> {
        if b > 1 || y > self.image_mask() {
            return None;
        }
        let p = self.perm.inverse(y);
        match self.family {
            FamilyTag::ExactClawFree => Some(p ^ (b as u64 * self.s)),
            _ => ((p >> self.n) as u8 == b).then_some(p & ((1u64 << self.n) - 1)),
        }
    }

    /// Joint recovery of `(b, x)` for the injective family.
    pub fn invert_joint(&self, y: u64) -> Option<(u8, u64)> {
        if self.family != FamilyTag::InjectiveTwin || y > self.image_mask() {
            return None;
        }
        let p = self.perm.inverse(y);
        Some(((p >> self.n) as u8, p & ((1u64 << self.n) - 1)))
    }

    /// The claw through `y`. Always `None` for the injective family.
    pub fn claw_of(&self, y: u64) -> Option<ClawPair> {
        if self.family != FamilyTag::ExactClawFree {
            return None;
        }
        Some(ClawPair {
            x0: self.invert(0, y)?,
            x1: self.invert(1, y)?,
            y,
        })
    }

    pub fn to_envelope(&self) -> Envelope {
        let mut bytes = self.key_id.to_vec();
        bytes.extend(encode(self.family, self.n, &self.perm, self.s));
        Envelope {
            family: self.family,
            n: self.n,
            payload: hex::encode(bytes),
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        let bytes = env.payload_bytes()?;
        if bytes.len() < 8 {
            return Err(Error::Serialization("trapdoor payload too short".into()));
        }
        let key_id: [u8; 8] = bytes[..8].try_into().unwrap();
        let (perm, s) = decode(env.family, env.n, &bytes[8..])?;
        Ok(Trapdoor {
            key_id,
            family: env.family,
            n: env.n,
            perm,
            s,
        })
    }
}

/// [`Trapdoor::invert`] after checking that `td` belongs to `key`.
pub fn invert(key: &TcfKey, td: &Trapdoor, b: u8, y: u64) -> Result<Option<u64>> {
    ensure_match(key, td)?;
    Ok(td.invert(b, y))
}

/// [`Trapdoor::claw_of`] after checking that `td` belongs to `key`.
pub fn claw_of(key: &TcfKey, td: &Trapdoor, y: u64) -> Result<Option<ClawPair>> {
    ensure_match(key, td)?;
    Ok(td.claw_of(y))
}

pub(crate) fn ensure_match(key: &TcfKey, td: &Trapdoor) -> Result<()> {
    if !td.matches(key) {
        return Err(domain("trapdoor does not belong to this key"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_family_is_two_to_one() {
        let (k, td) = gen(FamilyTag::ExactClawFree, 6, 3).unwrap();
        let s = td.offset().unwrap();
        assert_ne!(s, 0);
        for x in 0..64 {
            assert_eq!(k.eval(0, x), k.eval(1, x ^ s));
            let y = k.eval(0, x);
            assert_eq!(
                td.claw_of(y),
                Some(ClawPair {
                    x0: x,
                    x1: x ^ s,
                    y
                })
            );
        }
    }

    #[test]
    fn twin_ranges_are_disjoint_and_jointly_invertible() {
        let (k, td) = gen(FamilyTag::InjectiveTwin, 5, 2).unwrap();
        for x in 0..32 {
            for b in 0..2u8 {
                let y = k.eval(b, x);
                assert_eq!(td.invert(b, y), Some(x));
                assert_eq!(td.invert(1 - b, y), None);
                assert_eq!(td.invert_joint(y), Some((b, x)));
                assert_eq!(td.claw_of(y), None);
            }
        }
    }

    #[test]
    fn bits_outside_cap_are_rejected() {
        assert!(matches!(
            gen(FamilyTag::ExactClawFree, 1, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            gen(FamilyTag::ExactClawFree, 25, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn mismatched_trapdoor_is_a_domain_error() {
        let (k1, _) = gen(FamilyTag::ExactClawFree, 8, 1).unwrap();
        let (_, td2) = gen(FamilyTag::ExactClawFree, 8, 2).unwrap();
        assert!(matches!(invert(&k1, &td2, 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn out_of_range_queries_return_none() {
        let (k, td) = gen(FamilyTag::ExactClawFree, 4, 7).unwrap();
        assert_eq!(td.invert(0, 16), None);
        assert!(!k.chk(0, 16, 0));
        assert!(!k.chk(2, 0, k.eval(0, 0)));
    }

    #[test]
    fn envelopes_round_trip() {
        for fam in [FamilyTag::ExactClawFree, FamilyTag::InjectiveTwin] {
            let (k, td) = gen(fam, 10, 9).unwrap();
            let k2 =
                TcfKey::from_envelope(&Envelope::from_json(&k.to_envelope().to_json()).unwrap())
                    .unwrap();
            let td2 = Trapdoor::from_envelope(&td.to_envelope()).unwrap();
            assert_eq!(k, k2);
            assert_eq!(td, td2);
            assert!(td2.matches(&k2));
        }
    }
}
