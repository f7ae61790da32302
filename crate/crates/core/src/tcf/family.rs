//! A common interface for claw-free families, noisy or exact.

use rand::Rng;

use super::{ensure_match, FamilyTag, TcfKey, Trapdoor};
use crate::error::{domain, Result};
use crate::qsim::Label;

/// A key together with its trapdoor, as seen by the simulator.
///
/// Inputs are encoded as little-endian bit strings of width
/// [`Ntcf::input_bits`], packed into a `u128`. Images are opaque labels.
pub trait Ntcf: Send + Sync {
    type Image: Label;

    fn family(&self) -> FamilyTag;

    /// Width of the encoded input `x`.
    fn input_bits(&self) -> u32;

    /// A uniformly random element of the input domain.
    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> u128;

    /// Samples `y` from the image distribution of `(b, x)`.
    fn sample_image<R: Rng + ?Sized>(&self, b: u8, x: u128, rng: &mut R) -> Self::Image;

    /// Whether `y` lies in the support of the image distribution of `(b, x)`.
    /// Never consults the trapdoor.
    fn chk(&self, b: u8, x: u128, y: &Self::Image) -> bool;

    /// Probability of `y` under the image distribution of `(b, x)`.
    fn density(&self, b: u8, x: u128, y: &Self::Image) -> f64;

    /// Trapdoor inversion.
    fn invert(&self, b: u8, y: &Self::Image) -> Option<u128>;

    /// Both preimages of `y`, when both exist.
    fn claw(&self, y: &Self::Image) -> Option<(u128, u128)> {
        Some((self.invert(0, y)?, self.invert(1, y)?))
    }

    fn image_to_bytes(&self, y: &Self::Image) -> Vec<u8>;

    fn image_from_bytes(&self, bytes: &[u8]) -> Result<Self::Image>;
}

/// Families small enough to enumerate inputs and image supports.
pub trait EnumerableNtcf: Ntcf {
    /// Every encoded input, in increasing order.
    fn inputs(&self) -> Result<Vec<u128>>;

    /// The support of the image distribution of `(b, x)` with probabilities.
    fn support(&self, b: u8, x: u128) -> Result<Vec<(Self::Image, f64)>>;

    /// Width of a packed image register.
    fn image_bits(&self) -> u32;

    fn pack_image(&self, y: &Self::Image) -> u64;

    fn unpack_image(&self, v: u64) -> Self::Image;
}

/// An exact-family key paired with its trapdoor.
#[derive(Debug, Clone)]
pub struct ExactPair {
    pub key: TcfKey,
    pub td: Trapdoor,
}

impl ExactPair {
    pub fn new(key: TcfKey, td: Trapdoor) -> Result<Self> {
        ensure_match(&key, &td)?;
        Ok(ExactPair { key, td })
    }

    pub fn generate(family: FamilyTag, n: u32, seed: u64) -> Result<Self> {
        let (key, td) = super::gen(family, n, seed)?;
        Ok(ExactPair { key, td })
    }
}

impl Ntcf for ExactPair {
    type Image = u64;

    fn family(&self) -> FamilyTag {
        self.key.family()
    }

    fn input_bits(&self) -> u32 {
        self.key.n()
    }

    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        rng.random_range(0..(1u64 << self.key.n())) as u128
    }

    fn sample_image<R: Rng + ?Sized>(&self, b: u8, x: u128, _rng: &mut R) -> u64 {
        self.key.eval(b, x as u64)
    }

    fn chk(&self, b: u8, x: u128, y: &u64) -> bool {
        x < (1u128 << self.key.n()) && self.key.chk(b, x as u64, *y)
    }

    fn density(&self, b: u8, x: u128, y: &u64) -> f64 {
        if self.chk(b, x, y) {
            1.0
        } else {
            0.0
        }
    }

    fn invert(&self, b: u8, y: &u64) -> Option<u128> {
        self.td.invert(b, *y).map(u128::from)
    }

    fn image_to_bytes(&self, y: &u64) -> Vec<u8> {
        let width = self.key.image_bits().div_ceil(8) as usize;
        y.to_le_bytes()[..width].to_vec()
    }

    fn image_from_bytes(&self, bytes: &[u8]) -> Result<u64> {
        let width = self.key.image_bits().div_ceil(8) as usize;
        if bytes.len() != width {
            return Err(domain(format!(
                "image must be {width} bytes, got {}",
                bytes.len()
            )));
        }
        let mut buf = [0u8; 8];
        buf[..width].copy_from_slice(bytes);
        let y = u64::from_le_bytes(buf);
        if y >> self.key.image_bits() != 0 {
            return Err(domain("image exceeds the label width"));
        }
        Ok(y)
    }
}

impl EnumerableNtcf for ExactPair {
    fn inputs(&self) -> Result<Vec<u128>> {
        Ok((0..(1u128 << self.key.n())).collect())
    }

    fn support(&self, b: u8, x: u128) -> Result<Vec<(u64, f64)>> {
        Ok(vec![(self.key.eval(b, x as u64), 1.0)])
    }

    fn image_bits(&self) -> u32 {
        self.key.image_bits()
    }

    fn pack_image(&self, y: &u64) -> u64 {
        *y
    }

    fn unpack_image(&self, v: u64) -> u64 {
        v
    }
}
