//! Folder ingestion: matches image/mask pairs by filename stem, resizes
//! to the configured resolution (bilinear images, nearest masks),
//! rewrites canonical PPM/PGM pairs and emits a manifest with a seeded
//! train/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::manifest::{sha256_file, DatasetManifest, FileEntry, Split};
use crate::data::ppm::{read_pgm, read_ppm, write_pgm, write_ppm};
use crate::data::resize::{bilinear_rgb, nearest_mask};
use crate::data::{derive_seed, salts};
use crate::error::{err, Result};

fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().map_or(false, |e| e == ext) {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| err!(Data, "unreadable file name {}", path.display()))?
                .to_string();
            out.insert(stem, path);
        }
    }
    Ok(out)
}

/// Ingests a folder pair into `out_dir`. `ratio` is the train fraction
/// (default 0.7); the split is a seeded shuffle.
#[allow(clippy::too_many_arguments)]
pub fn ingest_folder(
    images_dir: &Path,
    masks_dir: &Path,
    ratio: f64,
    num_classes: usize,
    resolution: (usize, usize),
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(err!(Config, "split ratio must be in [0, 1], got {ratio}"));
    }
    let images = stems(images_dir, "ppm")?;
    let masks = stems(masks_dir, "pgm")?;
    if images.is_empty() {
        return Err(err!(Data, "no .ppm images found in {}", images_dir.display()));
    }
    for stem in images.keys() {
        if !masks.contains_key(stem) {
            return Err(err!(Data, "image {stem}.ppm has no matching mask"));
        }
    }
    for stem in masks.keys() {
        if !images.contains_key(stem) {
            return Err(err!(Data, "mask {stem}.pgm has no matching image"));
        }
    }
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("masks"))?;
    let (rh, rw) = resolution;
    let n = images.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, salts::SPLIT));
    order.shuffle(&mut rng);
    let train_count = ((n as f64) * ratio).round() as usize;
    let mut split = vec![Split::Test; n];
    for &i in order.iter().take(train_count) {
        split[i] = Split::Train;
    }

    let mut files = Vec::with_capacity(n);
    for (i, (stem, image_path)) in images.iter().enumerate() {
        let mask_path = &masks[stem];
        let (ih, iw, rgb) = read_ppm(image_path)?;
        let (mh, mw, labels) = read_pgm(mask_path)?;
        if (mh, mw) != (ih, iw) {
            return Err(err!(
                Data,
                "mask {} is {mh}x{mw} but image is {ih}x{iw}",
                mask_path.display()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&v| v as usize >= num_classes) {
            return Err(err!(
                Data,
                "mask {} contains class {bad}, declared count is {num_classes}",
                mask_path.display()
            ));
        }
        let rgb = if (ih, iw) == (rh, rw) {
            rgb
        } else {
            bilinear_rgb(&rgb, ih, iw, rh, rw)
        };
        let labels = if (mh, mw) == (rh, rw) {
            labels
        } else {
            nearest_mask(&labels, mh, mw, rh, rw)
        };
        let image_rel = format!("images/{stem}.ppm");
        let mask_rel = format!("masks/{stem}.pgm");
        write_ppm(&out_dir.join(&image_rel), &rgb, rh, rw)?;
        write_pgm(&out_dir.join(&mask_rel), &labels, rh, rw)?;
        files.push(FileEntry {
            image: image_rel.clone(),
            mask: mask_rel.clone(),
            split: split[i],
            image_sha256: sha256_file(&out_dir.join(&image_rel))?,
            mask_sha256: sha256_file(&out_dir.join(&mask_rel))?,
        });
    }
    let manifest = DatasetManifest {
        source: "folder".into(),
        num_classes,
        resolution,
        seed,
        files,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
