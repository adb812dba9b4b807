//! Counter-based uniform stream.
//!
//! Draw `i` (1-based) of a stream with seed `s` is
//! `splitmix64_mix(key(s) + i * GOLDEN)` (the SplitMix64 output sequence
//! started from `key(s)`), with its top 52 bits mapped into the open interval
//! (0,1).
//! Because draws are a pure function of `(seed, i)`, a stream can be read
//! forwards, backwards or at random, and paths indexed by time never shift
//! when other consumers are added.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn open_unit(bits: u64) -> f64 {
    // 52 random bits, centred in their cell: never 0, never 1.
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Deterministic stream of iid Uniform(0,1) draws `U_1, U_2, ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformStream {
    seed: u64,
    key: u64,
    index: u64,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            key: mix(seed ^ 0x6a09_e667_f3bc_c909),
            index: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws consumed so far.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// `U_i` for `i >= 1`, without advancing the stream.
    #[inline]
    pub fn at(&self, i: u64) -> f64 {
        open_unit(mix(self.key.wrapping_add(i.wrapping_mul(GOLDEN))))
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.index += 1;
        self.at(self.index)
    }

    /// An independent stream keyed by `(seed, key)`.
    pub fn substream(&self, key: u64) -> UniformStream {
        UniformStream::new(mix(self.key ^ mix(key.wrapping_add(GOLDEN))))
    }
}

impl Iterator for UniformStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_uniform())
    }
}
