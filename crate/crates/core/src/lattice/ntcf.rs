//! The noisy claw-free family over `R_q^m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::gauss::Gauss1;
use super::ring::{Poly, Ring};
use super::trapdoor::{gen_trap, invert_with, Gadget, Tau};
use super::LatticeParams;
use crate::distances::{hellinger_sq, Density};
use crate::error::{domain, param, Error, Result};
use crate::tcf::{fingerprint, EnumerableNtcf, Envelope, FamilyTag, Ntcf};

/// Largest image support enumerated explicitly.
pub const MAX_SUPPORT: usize = 1 << 18;

/// Public key `(a, u = a·s + e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeKey {
    pub params: LatticeParams,
    pub a: Vec<Poly>,
    pub u: Vec<Poly>,
}

/// Trapdoor matrix and secret, bound to a key by fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeTrapdoor {
    #[serde(with = "hex_id")]
    pub key_id: [u8; 8],
    pub tau: Tau,
    pub s: Poly,
}

mod hex_id {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(id: &[u8; 8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(id))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 8], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("key id must be 8 bytes"))
    }
}

/// Generates a key and trapdoor, deterministically in `seed`.
pub fn ntcf_gen(params: &LatticeParams, seed: u64) -> Result<(LatticeKey, LatticeTrapdoor)> {
    params.validate()?;
    let ring = params.ring()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (a, tau) = gen_trap(&ring, params.m, params.required_radius(), &mut rng)?;
    let s: Poly = (0..ring.n).map(|_| rng.random_range(0..ring.q)).collect();
    let noise = Gauss1::new(params.b_v);
    let u: Vec<Poly> = a
        .iter()
        .map(|ai| {
            let e: Vec<i64> = (0..ring.n).map(|_| noise.sample(&mut rng)).collect();
            let as_ = ring.mul(ai, &s);
            as_.iter()
                .zip(e)
                .map(|(&v, ei)| ring.reduce(v as i64 + ei))
                .collect()
        })
        .collect();
    let key = LatticeKey {
        params: *params,
        a,
        u,
    };
    let td = LatticeTrapdoor {
        key_id: key.id(),
        tau,
        s,
    };
    Ok((key, td))
}

impl LatticeKey {
    fn ring(&self) -> Ring {
        Ring {
            n: self.params.ring_n,
            q: self.params.q,
        }
    }

    pub fn id(&self) -> [u8; 8] {
        fingerprint(&serde_json::to_vec(self).expect("key serializes"))
    }

    pub fn input_bits(&self) -> u32 {
        self.params.input_bits()
    }

    /// Little-endian bit decomposition, `k` bits per coefficient.
    pub fn encode_x(&self, x: &[u32]) -> u128 {
        let k = self.params.k();
        x.iter()
            .enumerate()
            .fold(0u128, |acc, (i, &c)| acc | ((c as u128) << (i * k)))
    }

    /// Inverse of [`Self::encode_x`]; `None` for strings outside `Z_q^N`.
    pub fn decode_x(&self, bits: u128) -> Option<Poly> {
        let k = self.params.k();
        if self.input_bits() < 128 && bits >> self.input_bits() != 0 {
            return None;
        }
        let mask = (1u128 << k) - 1;
        let x: Poly = (0..self.params.ring_n)
            .map(|i| ((bits >> (i * k)) & mask) as u32)
            .collect();
        x.iter().all(|&c| c < self.params.q).then_some(x)
    }

    /// `a·x + b·u`, flattened.
    pub fn center(&self, b: u8, x: &[u32]) -> Vec<u32> {
        let ring = self.ring();
        let mut out = Vec::with_capacity(self.params.m * ring.n);
        for (ai, ui) in self.a.iter().zip(&self.u) {
            let mut c = ring.mul(ai, x);
            if b == 1 {
                c = ring.add(&c, ui);
            }
            out.extend(c);
        }
        out
    }

    fn valid_image(&self, y: &[u16]) -> bool {
        y.len() == self.params.m * self.params.ring_n
            && y.iter().all(|&v| (v as u32) < self.params.q)
    }

    /// Centered offsets `y − a·x − b·u`.
    fn offsets(&self, b: u8, x: &[u32], y: &[u16]) -> Vec<i64> {
        let ring = self.ring();
        self.center(b, x)
            .iter()
            .zip(y)
            .map(|(&c, &v)| ring.center(ring.reduce(v as i64 - c as i64)))
            .collect()
    }

    /// Support test that uses only public data.
    pub fn chk(&self, b: u8, x: &[u32], y: &[u16]) -> bool {
        if b > 1 || !self.valid_image(y) {
            return false;
        }
        let bound = self.params.b_p.floor() as i64;
        self.offsets(b, x, y).iter().all(|r| r.abs() <= bound)
    }

    pub fn density(&self, b: u8, x: &[u32], y: &[u16]) -> f64 {
        if b > 1 || !self.valid_image(y) {
            return 0.0;
        }
        let g = Gauss1::new(self.params.b_p);
        self.offsets(b, x, y).iter().map(|&r| g.prob(r)).product()
    }

    pub fn sample<R: Rng + ?Sized>(&self, b: u8, x: &[u32], rng: &mut R) -> Vec<u16> {
        let ring = self.ring();
        let g = Gauss1::new(self.params.b_p);
        self.center(b, x)
            .into_iter()
            .map(|c| ring.reduce(c as i64 + g.sample(rng)) as u16)
            .collect()
    }

    pub fn to_envelope(&self) -> Envelope {
        Envelope {
            family: FamilyTag::LatticeNtcf,
            n: self.input_bits(),
            payload: hex::encode(serde_json::to_vec(self).expect("key serializes")),
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        if env.family != FamilyTag::LatticeNtcf {
            return Err(Error::Serialization("not a lattice key".into()));
        }
        let key: LatticeKey = serde_json::from_slice(&env.payload_bytes()?)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        key.params
            .validate()
            .map_err(|e| Error::Serialization(e.to_string()))?;
        let shape_ok = key.a.len() == key.params.m
            && key.u.len() == key.params.m
            && key
                .a
                .iter()
                .chain(&key.u)
                .all(|p| p.len() == key.params.ring_n && p.iter().all(|&c| c < key.params.q));
        if !shape_ok || key.input_bits() != env.n {
            return Err(Error::Serialization(
                "lattice key has the wrong shape".into(),
            ));
        }
        Ok(key)
    }
}

impl LatticeTrapdoor {
    pub fn to_envelope(&self, key: &LatticeKey) -> Envelope {
        Envelope {
            family: FamilyTag::LatticeNtcf,
            n: key.input_bits(),
            payload: hex::encode(serde_json::to_vec(self).expect("trapdoor serializes")),
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        if env.family != FamilyTag::LatticeNtcf {
            return Err(Error::Serialization("not a lattice trapdoor".into()));
        }
        serde_json::from_slice(&env.payload_bytes()?)
            .map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn unflatten(y: &[u16], n: usize) -> Vec<Poly> {
    y.chunks(n)
        .map(|c| c.iter().map(|&v| v as u32).collect())
        .collect()
}

/// Key, trapdoor and derived data used by the simulator.
#[derive(Debug, Clone)]
pub struct LatticePair {
    pub key: LatticeKey,
    pub td: LatticeTrapdoor,
    ring: Ring,
    gadget: Gadget,
    key_error: Vec<i64>,
    noise: Gauss1,
}

impl LatticePair {
    pub fn new(key: LatticeKey, td: LatticeTrapdoor) -> Result<Self> {
        if td.key_id != key.id() {
            return Err(domain("trapdoor does not belong to this key"));
        }
        let ring = key.params.ring()?;
        let gadget = Gadget::new(ring.q);
        let mut key_error = Vec::new();
        for (ai, ui) in key.a.iter().zip(&key.u) {
            let as_ = ring.mul(ai, &td.s);
            key_error.extend(ring.sub(ui, &as_).into_iter().map(|v| ring.center(v)));
        }
        let noise = Gauss1::new(key.params.b_p);
        Ok(LatticePair {
            key,
            td,
            ring,
            gadget,
            key_error,
            noise,
        })
    }

    pub fn generate(params: &LatticeParams, seed: u64) -> Result<Self> {
        let (key, td) = ntcf_gen(params, seed)?;
        Self::new(key, td)
    }

    pub fn params(&self) -> &LatticeParams {
        &self.key.params
    }

    /// The key error `e = u − a·s`, centered and flattened.
    pub fn key_error(&self) -> &[i64] {
        &self.key_error
    }

    /// Decoding radius of the trapdoor.
    pub fn radius(&self) -> f64 {
        self.td.tau.radius(&self.gadget)
    }

    pub fn c_t(&self) -> f64 {
        super::trapdoor::c_t(&self.ring, self.radius())
    }

    /// Preimage of `y` under `f_b`, as a ring element.
    pub fn invert_poly(&self, b: u8, y: &[u16]) -> Option<Poly> {
        if b > 1 || !self.key.valid_image(y) {
            return None;
        }
        let yv = unflatten(y, self.ring.n);
        let v = invert_with(&self.ring, &self.gadget, &self.key.a, &self.td.tau, &yv)?;
        let r0 = self.key.offsets(0, &v, y);
        let bound = self.key.params.b_p.floor() as i64;
        let in0 = r0.iter().all(|r| r.abs() <= bound);
        let in1 = r0
            .iter()
            .zip(&self.key_error)
            .all(|(r, e)| (r - e).abs() <= bound);
        if !(in0 || in1) {
            return None;
        }
        Some(if b == 1 {
            self.ring.sub(&v, &self.td.s)
        } else {
            v
        })
    }

    /// Explicit image distribution enumerated around `center`.
    fn enumerate(&self, center: &[u32]) -> Result<Vec<(Vec<u16>, f64)>> {
        let bound = self.noise.bound();
        let width = self.noise.width();
        let dims = center.len();
        let size = (width as f64).powi(dims as i32);
        if size > MAX_SUPPORT as f64 {
            return Err(param(format!(
                "image support of {size} points exceeds {MAX_SUPPORT}"
            )));
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut digits = vec![0usize; dims];
        loop {
            let mut p = 1.0;
            let y: Vec<u16> = center
                .iter()
                .zip(&digits)
                .map(|(&c, &d)| {
                    let t = d as i64 - bound;
                    p *= self.noise.prob(t);
                    self.ring.reduce(c as i64 + t) as u16
                })
                .collect();
            out.push((y, p));
            let mut i = 0;
            while i < dims {
                digits[i] += 1;
                if digits[i] < width {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == dims {
                break;
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn to_density(entries: Vec<(Vec<u16>, f64)>) -> Result<Density> {
        Density::new(
            entries
                .into_iter()
                .map(|(y, p)| (y.iter().flat_map(|v| v.to_le_bytes()).collect(), p)),
        )
    }

    /// The idealized image distribution, centered at `a·x + b·a·s`.
    pub fn ideal_density(&self, b: u8, x: &[u32]) -> Result<Density> {
        let mut center = self.key.center(0, x);
        if b == 1 {
            let mut flat = Vec::new();
            for ai in &self.key.a {
                flat.extend(self.ring.mul(ai, &self.td.s));
            }
            center = center
                .iter()
                .zip(flat)
                .map(|(&c, v)| (c + v) % self.ring.q)
                .collect();
        }
        Self::to_density(self.enumerate(&center)?)
    }
}

/// The sampled image distribution `f′_b(x)` as an explicit density.
pub fn ntcf_eval_density(pair: &LatticePair, b: u8, x: &[u32]) -> Result<Density> {
    if b > 1 {
        return Err(domain("b must be a bit"));
    }
    LatticePair::to_density(pair.enumerate(&pair.key.center(b, x))?)
}

/// [`LatticePair::invert_poly`] after checking that `td` belongs to `key`.
pub fn ntcf_invert(
    key: &LatticeKey,
    td: &LatticeTrapdoor,
    b: u8,
    y: &[u16],
) -> Result<Option<Poly>> {
    let pair = LatticePair::new(key.clone(), td.clone())?;
    Ok(pair.invert_poly(b, y))
}

/// Average of `H²(f_b(x), f′_b(x))` over the given inputs, computed from
/// explicit densities.
pub fn hellinger_gap(pair: &LatticePair, b: u8, xs: &[Poly]) -> Result<f64> {
    if xs.is_empty() {
        return Err(domain("no inputs given"));
    }
    let mut acc = 0.0;
    for x in xs {
        acc += hellinger_sq(&pair.ideal_density(b, x)?, &ntcf_eval_density(pair, b, x)?)?;
    }
    Ok(acc / xs.len() as f64)
}

/// The same gap for `b = 1`, from the per-coordinate factorization
/// `1 − Π_i BC(e_i)`, where `BC(t)` is the Bhattacharyya coefficient of
/// the one-dimensional noise with its shift by `t`. It does not depend on `x`.
pub fn hellinger_gap_factorized(pair: &LatticePair) -> f64 {
    let g = &pair.noise;
    let bound = g.bound();
    let bc = |shift: i64| -> f64 {
        (-bound..=bound)
            .map(|t| (g.prob(t) * g.prob(t - shift)).sqrt())
            .sum()
    };
    1.0 - pair.key_error.iter().map(|&e| bc(e)).product::<f64>()
}

impl Ntcf for LatticePair {
    type Image = Vec<u16>;

    fn family(&self) -> FamilyTag {
        FamilyTag::LatticeNtcf
    }

    fn input_bits(&self) -> u32 {
        self.key.input_bits()
    }

    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        let x: Poly = (0..self.ring.n)
            .map(|_| rng.random_range(0..self.ring.q))
            .collect();
        self.key.encode_x(&x)
    }

    fn sample_image<R: Rng + ?Sized>(&self, b: u8, x: u128, rng: &mut R) -> Vec<u16> {
        let x = self.key.decode_x(x).expect("input outside the domain");
        self.key.sample(b, &x, rng)
    }

    fn chk(&self, b: u8, x: u128, y: &Vec<u16>) -> bool {
        self.key.decode_x(x).is_some_and(|x| self.key.chk(b, &x, y))
    }

    fn density(&self, b: u8, x: u128, y: &Vec<u16>) -> f64 {
        self.key
            .decode_x(x)
            .map_or(0.0, |x| self.key.density(b, &x, y))
    }

    fn invert(&self, b: u8, y: &Vec<u16>) -> Option<u128> {
        self.invert_poly(b, y).map(|x| self.key.encode_x(&x))
    }

    fn image_to_bytes(&self, y: &Vec<u16>) -> Vec<u8> {
        y.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn image_from_bytes(&self, bytes: &[u8]) -> Result<Vec<u16>> {
        if !bytes.len().is_multiple_of(2) {
            return Err(domain("image bytes must come in pairs"));
        }
        let y: Vec<u16> = bytes
            .chunks(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        if !self.key.valid_image(&y) {
            return Err(domain("image has the wrong shape for this key"));
        }
        Ok(y)
    }
}

impl EnumerableNtcf for LatticePair {
    fn inputs(&self) -> Result<Vec<u128>> {
        let count = (self.ring.q as f64).powi(self.ring.n as i32);
        if count > (1u64 << 20) as f64 {
            return Err(param(format!(
                "input domain of {count} points is too large to enumerate"
            )));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut x = self.ring.zero();
        loop {
            out.push(self.key.encode_x(&x));
            let mut i = 0;
            while i < self.ring.n {
                x[i] += 1;
                if x[i] < self.ring.q {
                    break;
                }
                x[i] = 0;
                i += 1;
            }
            if i == self.ring.n {
                break;
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    fn support(&self, b: u8, x: u128) -> Result<Vec<(Vec<u16>, f64)>> {
        let x = self
            .key
            .decode_x(x)
            .ok_or_else(|| domain("input outside the domain"))?;
        self.enumerate(&self.key.center(b, &x))
    }

    fn image_bits(&self) -> u32 {
        self.key.params.image_bits()
    }

    fn pack_image(&self, y: &Vec<u16>) -> u64 {
        let k = self.key.params.k();
        assert!(y.len() * k <= 64, "image too wide to pack");
        y.iter()
            .enumerate()
            .fold(0u64, |acc, (i, &v)| acc | ((v as u64) << (i * k)))
    }

    fn unpack_image(&self, v: u64) -> Vec<u16> {
        let k = self.key.params.k();
        let len = self.key.params.m * self.ring.n;
        (0..len)
            .map(|i| ((v >> (i * k)) & ((1u64 << k) - 1)) as u16)
            .collect()
    }
}
