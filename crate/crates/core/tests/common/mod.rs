//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)] // each test target compiles this module separately

use slicescan::data::{load_samples, synth_generate, Split, SynthSpec};
use slicescan::net::ModelConfig;
use slicescan::scan::SliceGenotype;
use slicescan::train::{LossKind, Sample, TrainConfig};
use std::path::PathBuf;

/// Two-block, two-stage model over 32x32 inputs; both blocks sit on 8x8
/// maps so every slice candidate is admissible.
pub fn two_block_config() -> ModelConfig {
    ModelConfig {
        input_channels: 3,
        num_classes: 2,
        base_width: 8,
        state_dim: 4,
        encoder_depths: vec![1, 0],
        decoder_depths: vec![0, 1],
        input_resolution: (32, 32),
        genotype: SliceGenotype::default(),
        shared_s6: true,
        exact_zoh: true,
        d_skip: true,
    }
}

pub fn quick_train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        initial_lr: 2e-3,
        min_lr: 1e-5,
        t_max: epochs,
        weight_decay: 1e-2,
        seed,
        loss: LossKind::BceDice,
        deterministic: true,
        augment: true,
    }
}

/// Generates a synthetic dataset under target/tmp and loads the given
/// split (or all files when `split` is None).
pub fn synth_samples(
    spec: &SynthSpec,
    tag: &str,
    split: Option<Split>,
) -> (PathBuf, Vec<Sample<f32>>) {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    let manifest = synth_generate(spec, &dir).unwrap();
    let mpath = dir.join("manifest.json");
    let samples = match split {
        Some(s) => load_samples::<f32>(&manifest, &mpath, s).unwrap(),
        None => {
            let mut all = load_samples::<f32>(&manifest, &mpath, Split::Train).unwrap();
            all.extend(load_samples::<f32>(&manifest, &mpath, Split::Search).unwrap());
            all.extend(load_samples::<f32>(&manifest, &mpath, Split::Test).unwrap());
            all
        }
    };
    (dir, samples)
}

/// Anisotropy-rigged dataset (strong vertical structures) for the search
/// experiments.
pub fn rigged_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        count: 40,
        resolution: (32, 32),
        num_classes: 2,
        anisotropy: 1.0,
        noise_level: 0.5,
        seed,
    }
}
