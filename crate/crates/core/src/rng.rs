//! Counter-based random streams.
//!
//! Every random draw in the simulator is a pure function of a master seed
//! plus a sequence of absorbed indices (layer, cell, ensemble, cycle, ...).
//! This makes results independent of evaluation order and thread count:
//! two schedules that visit the same (seed, indices) pairs produce
//! identical numbers.

/// Domain tags keep unrelated streams from colliding.
pub mod domain {
    pub const SAMPLE: u64 = 0x01;
    pub const PROGRAM: u64 = 0x02;
    pub const READ: u64 = 0x03;
    pub const DRIFT_NU: u64 = 0x04;
    pub const TOY: u64 = 0x05;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An immutable key identifying one random stream position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64, domain: u64) -> Self {
        StreamKey(mix(master_seed.wrapping_add(GOLDEN)).wrapping_add(mix(domain ^ GOLDEN)))
    }

    /// Absorb one index into the key.
    #[must_use]
    pub fn with(self, v: u64) -> Self {
        StreamKey(mix(self.0 ^ v.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(self) -> f64 {
        (mix(self.0) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller over two derived uniforms).
    pub fn normal(self) -> f64 {
        // u1 must be strictly positive for the log.
        let u1 = self.with(1).uniform().max(f64::MIN_POSITIVE);
        let u2 = self.with(2).uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Sequential draws from one stream; for single-threaded generators.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    key: StreamKey,
    ctr: u64,
}

impl KeyedRng {
    pub fn new(key: StreamKey) -> Self {
        KeyedRng { key, ctr: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        self.ctr += 1;
        self.key.with(self.ctr).uniform()
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.index(i + 1);
            v.swap(i, j);
        }
    }
}
