use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent, reproducible random stream keyed by `(seed, stream)`.
pub(crate) fn keyed_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids used across the crate. Feature maps use the ensemble member
// index directly, so these live far above any realistic member count.
pub(crate) const STREAM_TRUTH: u64 = 1 << 40;
pub(crate) const STREAM_INPUTS: u64 = (1 << 40) + 1;
pub(crate) const STREAM_NOISE: u64 = (1 << 40) + 2;
pub(crate) const STREAM_OUTLIERS: u64 = (1 << 40) + 3;
pub(crate) const STREAM_WEATHER: u64 = (1 << 40) + 4;
pub(crate) const STREAM_TRUTH_BASIS: u64 = (1 << 40) + 5;
