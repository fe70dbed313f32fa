//! Dataset manifests: file lists with split labels and per-file
//! checksums. Paths are stored relative to the manifest location and
//! checksums are re-verified on load.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::ppm::{read_pgm, read_ppm, rgb_to_tensor};
use crate::error::{err, Result};
use crate::metrics::Mask;
use crate::scalar::Scalar;
use crate::train::Sample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Search,
    Test,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub image: String,
    pub mask: String,
    pub split: Split,
    pub image_sha256: String,
    pub mask_sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    /// "synthetic" or "folder".
    pub source: String,
    pub num_classes: usize,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| err!(Data, "manifest serialization: {e}"))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| err!(Data, "{}: {e}", path.display()))
    }

    pub fn files_in(&self, split: Split) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(move |f| f.split == split)
    }

    /// Verifies every file checksum against the manifest.
    pub fn verify(&self, base: &Path) -> Result<()> {
        for entry in &self.files {
            for (rel, want) in [
                (&entry.image, &entry.image_sha256),
                (&entry.mask, &entry.mask_sha256),
            ] {
                let path = base.join(rel);
                let got = sha256_file(&path)
                    .map_err(|_| err!(Data, "missing dataset file {}", path.display()))?;
                if got != *want {
                    return Err(err!(
                        Data,
                        "checksum mismatch for {} (expected {want}, got {got})",
                        path.display()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Loads the samples of the requested split, verifying checksums and
/// label ranges. `manifest_path` locates the files (entries are relative
/// to its directory).
pub fn load_samples<T: Scalar>(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    split: Split,
) -> Result<Vec<Sample<T>>> {
    let base = manifest_dir(manifest_path);
    manifest.verify(&base)?;
    let (rh, rw) = manifest.resolution;
    let mut out = Vec::new();
    for entry in manifest.files_in(split) {
        let (h, w, rgb) = read_ppm(&base.join(&entry.image))?;
        if (h, w) != (rh, rw) {
            return Err(err!(Data, "{}: image is {h}x{w}, manifest says {rh}x{rw}", entry.image));
        }
        let (mh, mw, labels) = read_pgm(&base.join(&entry.mask))?;
        if (mh, mw) != (rh, rw) {
            return Err(err!(Data, "{}: mask is {mh}x{mw}, manifest says {rh}x{rw}", entry.mask));
        }
        if labels.iter().any(|&v| v as usize >= manifest.num_classes) {
            return Err(err!(Data, "{}: label exceeds {} classes", entry.mask, manifest.num_classes));
        }
        out.push(Sample {
            image: rgb_to_tensor(&rgb, h, w),
            mask: Mask::new(mh, mw, labels),
        });
    }
    Ok(out)
}

pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ppm::{write_pgm, write_ppm};

    fn tiny_manifest(dir: &Path) -> DatasetManifest {
        std::fs::create_dir_all(dir.join("images")).unwrap();
        std::fs::create_dir_all(dir.join("masks")).unwrap();
        let rgb = vec![128u8; 16 * 16 * 3];
        let gray = vec![1u8; 16 * 16];
        write_ppm(&dir.join("images/a.ppm"), &rgb, 16, 16).unwrap();
        write_pgm(&dir.join("masks/a.pgm"), &gray, 16, 16).unwrap();
        DatasetManifest {
            source: "synthetic".into(),
            num_classes: 2,
            resolution: (16, 16),
            seed: 0,
            files: vec![FileEntry {
                image: "images/a.ppm".into(),
                mask: "masks/a.pgm".into(),
                split: Split::Train,
                image_sha256: sha256_file(&dir.join("images/a.ppm")).unwrap(),
                mask_sha256: sha256_file(&dir.join("masks/a.pgm")).unwrap(),
            }],
        }
    }

    #[test]
    fn manifest_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let p1 = dir.path().join("manifest.json");
        m.save(&p1).unwrap();
        let loaded = DatasetManifest::load(&p1).unwrap();
        let p2 = dir.path().join("manifest2.json");
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn checksum_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        // corrupt the image
        let img = dir.path().join("images/a.ppm");
        let mut bytes = std::fs::read(&img).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&img, bytes).unwrap();
        let err = load_samples::<f32>(&m, &path, Split::Train).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn loads_samples_with_correct_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_manifest(dir.path());
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let samples = load_samples::<f32>(&m, &path, Split::Train).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].image.shape(), &[3, 16, 16]);
        assert_eq!(samples[0].mask.labels.len(), 256);
    }
}
