//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, slot, index)`, where the
//! stream identifies what is being drawn (arrival, sensing at node `i`,
//! fading on link `a -> b`, ...). Adding a node therefore leaves the draws of
//! every existing link untouched, and two runs that differ only in a
//! parameter see the same channel realisations (common random numbers).

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(seed.wrapping_add(GOLDEN)) }
    }

    /// Independent generator for replication `r`.
    pub fn replication(seed: u64, r: u64) -> Self {
        Self::new(mix(seed ^ mix(r.wrapping_mul(GOLDEN).wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    #[inline]
    pub fn bits(&self, stream: u64, slot: u64, index: u64) -> u64 {
        let a = mix(self.key ^ stream.wrapping_mul(GOLDEN));
        let b = mix(a ^ slot.wrapping_mul(0xd6e8_feb8_6659_fd93));
        mix(b ^ index.wrapping_add(GOLDEN).wrapping_mul(0xa076_1d64_78bd_642f))
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&self, stream: u64, slot: u64, index: u64) -> f64 {
        ((self.bits(stream, slot, index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with the given mean.
    #[inline]
    pub fn exponential(&self, mean: f64, stream: u64, slot: u64, index: u64) -> f64 {
        -mean * self.uniform(stream, slot, index).ln()
    }
}

/// What a stream draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Kind {
    Arrival = 1,
    Sense = 2,
    Access = 3,
    Fading = 4,
    Mc = 5,
}

/// Transmitter / receiver identities used to key fading streams.
pub mod node {
    pub const PRIMARY: u64 = 0;

    /// Secondary source `i` as a transmitter, or destination `D_i` as a receiver.
    pub fn secondary(i: usize) -> u64 {
        i as u64 + 1
    }

    /// Secondary source `i` listening to the primary.
    pub fn relay_rx(i: usize) -> u64 {
        (1 << 26) + i as u64
    }
}

#[inline]
pub fn stream(kind: Kind, a: u64, b: u64) -> u64 {
    (kind as u64) << 56 | (a & 0x0fff_ffff) << 28 | (b & 0x0fff_ffff)
}
