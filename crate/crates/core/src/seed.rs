//! Deterministic seed derivation.
//!
//! Every random stream in an evolutionary run is keyed by a path of integers
//! (master seed, generation, genome index, run index, ...) so that results do
//! not depend on evaluation order or thread count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `root`, producing an independent 64-bit seed.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(root.wrapping_add(GOLDEN)), |acc, &part| {
        splitmix(acc ^ splitmix(part.wrapping_add(GOLDEN)))
    })
}

/// Stream tags, so that different consumers of the same path never collide.
pub(crate) mod tag {
    pub const INIT: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const BREED: u64 = 3;
    pub const PLACEMENT: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const RERUN: u64 = 6;
    pub const DAMAGE: u64 = 7;
    pub const SWEEP: u64 = 8;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_order_sensitive() {
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_ne!(derive(7, &[1]), derive(8, &[1]));
        assert_eq!(derive(42, &[3, 4, 5]), derive(42, &[3, 4, 5]));
    }
}
