//! Deterministic seed derivation.
//!
//! One root seed is split into independent streams by hashing a stream tag
//! and an index through SplitMix64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere randomness is needed.
pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `root`, a stream tag and an index.
pub fn derive(root: u64, stream: &str, index: u64) -> u64 {
    // FNV-1a over the tag keeps distinct streams apart.
    let tag = stream.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3));
    splitmix(splitmix(root ^ tag).wrapping_add(index))
}

/// Seeded generator.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    idx
}

/// Assign `n` rows to `k` folds after a seeded shuffle; returns the fold of each row.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let perm = permutation(n, seed);
    let mut fold = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_and_repeat() {
        assert_eq!(derive(7, "screen", 3), derive(7, "screen", 3));
        assert_ne!(derive(7, "screen", 3), derive(7, "screen", 4));
        assert_ne!(derive(7, "screen", 3), derive(7, "rfe", 3));
        assert_ne!(derive(7, "screen", 3), derive(8, "screen", 3));
    }

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(10, 3, 1);
        let counts: Vec<usize> = (0..3).map(|k| f.iter().filter(|&&x| x == k).count()).collect();
        assert_eq!(counts, vec![4, 3, 3]);
    }
}
