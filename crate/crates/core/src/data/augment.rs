//! Dihedral augmentation: right-angle rotation plus horizontal and
//! vertical flips, each an independent fair coin, which makes the
//! composite uniform over the 8 square symmetries. Right-angle rotations
//! keep masks exact (no interpolation).

use rand::Rng;

use crate::error::{err, Result};
use crate::metrics::Mask;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DihedralOp {
    pub rot90: bool,
    pub hflip: bool,
    pub vflip: bool,
}

impl DihedralOp {
    pub const IDENTITY: DihedralOp = DihedralOp {
        rot90: false,
        hflip: false,
        vflip: false,
    };
}

pub fn sample_dihedral<R: Rng>(rng: &mut R) -> DihedralOp {
    DihedralOp {
        rot90: rng.gen::<bool>(),
        hflip: rng.gen::<bool>(),
        vflip: rng.gen::<bool>(),
    }
}

/// Source pixel for destination (r, c) under rot90 (clockwise), then
/// hflip, then vflip.
fn src_pixel(mut r: usize, mut c: usize, h: usize, w: usize, op: DihedralOp) -> (usize, usize) {
    if op.vflip {
        r = h - 1 - r;
    }
    if op.hflip {
        c = w - 1 - c;
    }
    if op.rot90 {
        // clockwise: out(r, c) = in(h - 1 - c, r)
        let (r2, c2) = (h - 1 - c, r);
        r = r2;
        c = c2;
    }
    (r, c)
}

/// Applies the op to a [C, H, W] image. Rotation requires H == W.
pub fn apply_chw<T: Scalar>(image: &Tensor<T>, op: DihedralOp) -> Result<Tensor<T>> {
    let (ch, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    if op.rot90 && h != w {
        return Err(err!(Data, "rotation augment needs square images, got {h}x{w}"));
    }
    let mut out = Tensor::zeros(&[ch, h, w]);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = src_pixel(r, c, h, w, op);
            for k in 0..ch {
                out.data_mut()[k * h * w + r * w + c] = image.data()[k * h * w + sr * w + sc];
            }
        }
    }
    Ok(out)
}

pub fn apply_mask(mask: &Mask, op: DihedralOp) -> Result<Mask> {
    let (h, w) = (mask.height, mask.width);
    if op.rot90 && h != w {
        return Err(err!(Data, "rotation augment needs square masks, got {h}x{w}"));
    }
    let mut labels = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = src_pixel(r, c, h, w, op);
            labels[r * w + c] = mask.labels[sr * w + sc];
        }
    }
    Ok(Mask::new(h, w, labels))
}
