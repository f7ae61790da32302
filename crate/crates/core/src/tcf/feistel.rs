//! Keyed permutation of `n`-bit strings built from a 4-round (possibly
//! unbalanced) Feistel network.

const ROUNDS: usize = 4;
/// Widths up to this many bits are served from precomputed tables.
pub const TABLE_MAX_BITS: u32 = 12;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feistel {
    bits: u32,
    keys: [u64; ROUNDS],
    table: Option<(Vec<u32>, Vec<u32>)>,
}

impl Feistel {
    /// `bits` must lie in `2..=63`.
    pub fn new(bits: u32, keys: [u64; ROUNDS]) -> Self {
        assert!(
            (2..=63).contains(&bits),
            "Feistel width {bits} out of range"
        );
        let mut f = Feistel {
            bits,
            keys,
            table: None,
        };
        if bits <= TABLE_MAX_BITS {
            let size = 1usize << bits;
            let fwd: Vec<u32> = (0..size as u64)
                .map(|x| f.forward_network(x) as u32)
                .collect();
            let mut inv = vec![0u32; size];
            for (x, &y) in fwd.iter().enumerate() {
                inv[y as usize] = x as u32;
            }
            f.table = Some((fwd, inv));
        }
        f
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn keys(&self) -> [u64; ROUNDS] {
        self.keys
    }

    fn round_fn(&self, r: usize, v: u64) -> u64 {
        mix(v ^ mix(self.keys[r].wrapping_add(r as u64)))
    }

    fn split(&self) -> (u32, u32) {
        let right = self.bits / 2;
        (self.bits - right, right)
    }

    /// Evaluates the network directly, bypassing any table.
    pub fn forward_network(&self, x: u64) -> u64 {
        let (mut wl, mut wr) = self.split();
        let mut l = x >> wr;
        let mut r = x & mask(wr);
        for k in 0..ROUNDS {
            let nl = r;
            let nr = (l ^ self.round_fn(k, r)) & mask(wl);
            l = nl;
            r = nr;
            std::mem::swap(&mut wl, &mut wr);
        }
        (l << wr) | r
    }

    pub fn inverse_network(&self, y: u64) -> u64 {
        // After an even number of rounds the widths are back to the initial split.
        let (mut wl, mut wr) = self.split();
        let mut l = y >> wr;
        let mut r = y & mask(wr);
        for k in (0..ROUNDS).rev() {
            std::mem::swap(&mut wl, &mut wr);
            let pr = l;
            let pl = (r ^ self.round_fn(k, pr)) & mask(wl);
            l = pl;
            r = pr;
        }
        (l << wr) | r
    }

    pub fn forward(&self, x: u64) -> u64 {
        debug_assert!(x <= mask(self.bits));
        match &self.table {
            Some((fwd, _)) => fwd[x as usize] as u64,
            None => self.forward_network(x),
        }
    }

    pub fn inverse(&self, y: u64) -> u64 {
        debug_assert!(y <= mask(self.bits));
        match &self.table {
            Some((_, inv)) => inv[y as usize] as u64,
            None => self.inverse_network(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijective_for_small_widths() {
        for bits in 2..=10 {
            let f = Feistel::new(bits, [1, 2, 3, bits as u64]);
            let mut seen = vec![false; 1 << bits];
            for x in 0..(1u64 << bits) {
                let y = f.forward(x);
                assert!(!seen[y as usize]);
                seen[y as usize] = true;
                assert_eq!(f.inverse(y), x);
                assert_eq!(f.forward_network(x), y);
            }
        }
    }

    #[test]
    fn network_inverse_for_wide_domains() {
        let f = Feistel::new(23, [9, 8, 7, 6]);
        for x in (0..(1u64 << 23)).step_by(7919) {
            assert_eq!(f.inverse(f.forward(x)), x);
        }
    }
}
