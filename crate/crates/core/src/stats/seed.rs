use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Real;

/// Generator handed out for one draw of a stream.
pub type DrawRng = ChaCha8Rng;

/// Names an independent random stream.
///
/// Randomness is counter-based: the pair `(base_seed, stream_id)` keys a
/// ChaCha8 generator and the draw index selects its nonce, so draw `i` of a
/// stream is the same whichever worker produces it and in whatever order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub const fn new(base_seed: u64, stream_id: u64) -> Self {
        Self { base_seed, stream_id }
    }

    /// Derives a child stream. Distinct tags give unrelated streams.
    pub fn fork(&self, tag: u64) -> SeedSpec {
        SeedSpec {
            base_seed: self.base_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag ^ 0xD1B5_4A32_D192_ED03)),
        }
    }

    /// Generator for draw number `draw` of this stream.
    pub fn rng(&self, draw: u64) -> DrawRng {
        let mut key = [0u8; 32];
        let mut state = splitmix64(self.base_seed) ^ self.stream_id.rotate_left(17);
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state ^ self.stream_id);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(draw);
        rng
    }
}

/// One standard normal variate in the target precision.
#[inline]
pub fn standard_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Fills `out` with i.i.d. N(0, scale²) variates.
#[inline]
pub fn fill_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R, scale: T, out: &mut [T]) {
    for v in out.iter_mut() {
        *v = scale * standard_normal::<T, R>(rng);
    }
}

/// `count × dim` i.i.d. standard normal variates; row `i` comes from draw `i`
/// of `seed`, so any row range can be regenerated independently.
pub fn sample_standard_normal<T: Real>(seed: &SeedSpec, count: usize, dim: usize) -> Array2<T> {
    let mut out = Array2::from_elem((count, dim), T::zero());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut rng = seed.rng(i as u64);
        for v in row.iter_mut() {
            *v = standard_normal(&mut rng);
        }
    }
    out
}
