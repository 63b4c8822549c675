//! Counter-based random numbers.
//!
//! Every random draw in the crate is addressed by `(seed, path, a, b)`: a
//! [`Stream`] carries the seed and a split path, and [`Stream::rng`] opens an
//! independent generator for a pair of 32-bit coordinates (typically site
//! index and sweep number). Results therefore do not depend on the order in
//! which sites or chains are processed.

use rand::RngCore;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for _ in 0..10 {
        let p0 = (M0 as u64) * (c[0] as u64);
        let p1 = (M1 as u64) * (c[2] as u64);
        c = [
            ((p1 >> 32) as u32) ^ c[1] ^ k[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ c[3] ^ k[1],
            p0 as u32,
        ];
        k[0] = k[0].wrapping_add(W0);
        k[1] = k[1].wrapping_add(W1);
    }
    c
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A splittable family of generators derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: splitmix64(seed ^ 0x6A09_E667_F3BC_C908),
        }
    }

    /// Child stream; distinct tags give statistically independent children.
    pub fn split(&self, tag: u64) -> Self {
        Stream {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0x3C6E_F372_FE94_F82B))),
        }
    }

    /// Generator for the coordinate pair `(a, b)`.
    pub fn rng(&self, a: u32, b: u32) -> CounterRng {
        CounterRng::new([self.key as u32, (self.key >> 32) as u32], a, b)
    }
}

/// Philox-backed generator over a private 64-bit block counter.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    a: u32,
    b: u32,
    block: u64,
    buf: [u32; 4],
    used: usize,
}

impl CounterRng {
    pub fn new(key: [u32; 2], a: u32, b: u32) -> Self {
        CounterRng {
            key,
            a,
            b,
            block: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    fn refill(&mut self) {
        self.buf = philox4x32(
            [self.block as u32, (self.block >> 32) as u32, self.a, self.b],
            self.key,
        );
        self.block += 1;
        self.used = 0;
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let v = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
