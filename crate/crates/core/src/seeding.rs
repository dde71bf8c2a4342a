use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for one (seed, tag, index) triple. Tagging by class label keeps a
/// class's random draws independent of which other classes are present.
pub(crate) fn derived_rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a over the tag, folded with the index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}
