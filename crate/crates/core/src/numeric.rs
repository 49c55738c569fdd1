//! Small numerical helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Conversion factor from nats to bits.
pub const BITS_PER_NAT: f64 = std::f64::consts::LOG2_E;

#[inline]
pub fn nats_to_bits(nats: f64) -> f64 {
    nats * BITS_PER_NAT
}

#[inline]
pub fn bits_to_nats(bits: f64) -> f64 {
    bits / BITS_PER_NAT
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Derives an independent generator from a master seed and a stream label.
///
/// Every random stream in the crate goes through this function: the master
/// seed picks the key and the label picks the ChaCha stream, so results do not
/// depend on the order in which streams are consumed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs up to three small labels into one stream id.
pub fn stream_id(a: u64, b: u64, c: u64) -> u64 {
    debug_assert!(a < (1 << 16) && b < (1 << 24) && c < (1 << 24));
    (a << 48) | (b << 24) | c
}

/// SplitMix64 step, used to derive replicate seeds from a master seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` points spaced evenly in log scale over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0);
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both are zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16, 1.0, -1e16];
        values.extend(std::iter::repeat_n(1.0, 10));
        assert_eq!(compensated_sum(values), 11.0);
    }

    #[test]
    fn streams_are_independent_of_consumption_order() {
        use rand::Rng;
        let mut a = stream_rng(7, 1);
        let mut b = stream_rng(7, 2);
        let a1: u64 = a.random();
        let _: u64 = b.random();
        let mut a_again = stream_rng(7, 1);
        assert_eq!(a1, a_again.random::<u64>());
        assert_ne!(a1, stream_rng(7, 2).random::<u64>());
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(0.1, 10.0, 3);
        assert!((g[0] - 0.1).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-14);
        assert!((g[2] - 10.0).abs() < 1e-13);
    }
}
