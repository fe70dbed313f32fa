//! Deterministic data harness: synthetic dataset generation, PPM/PGM
//! image IO, folder ingestion, manifests and augmentation.

pub mod augment;
pub mod ingest;
pub mod manifest;
pub mod ppm;
pub mod resize;
pub mod synth;

pub use augment::{sample_dihedral, DihedralOp};
pub use ingest::ingest_folder;
pub use manifest::{load_samples, DatasetManifest, FileEntry, Split};
pub use synth::{synth_generate, SynthSpec};

/// Splitmix64-based stream derivation so independent random streams
/// (init, augmentation, genotype sampling, per-file generation) never
/// share state even for adjacent seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named stream salts; logged seeds are always (seed, salt) pairs.
pub mod salts {
    pub const INIT: u64 = 1;
    pub const AUGMENT: u64 = 2;
    pub const GENOTYPE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const EVOLVE: u64 = 5;
    pub const GRADCHECK: u64 = 6;
}
