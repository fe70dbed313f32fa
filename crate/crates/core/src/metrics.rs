//! Segmentation evaluation: confusion-matrix metrics and the 95th
//! percentile Hausdorff distance over boundary pixels.

use crate::error::{err, Result};

/// Aggregate metrics over one prediction/ground-truth pair (or averaged
/// over a set). Fractions are in [0, 1]; HD95 is in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub miou: f64,
    pub dsc: f64,
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
    pub hd95: f64,
    /// Dice per foreground class, indexed by class - 1.
    pub per_class_dsc: Vec<f64>,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "miou,dsc,acc,spe,sen,hd95"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.miou, self.dsc, self.acc, self.spe, self.sen, self.hd95
        )
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn dsc(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn sen(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn spe(&self) -> f64 {
        let denom = self.tn + self.fp;
        if denom == 0 {
            1.0
        } else {
            self.tn as f64 / denom as f64
        }
    }
}

/// Options for metric conventions that differ between papers.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricsOptions {
    /// Include class 0 in the mIoU average; the default (false) averages
    /// over foreground classes only, matching how binary segmentation
    /// models usually report mIoU.
    pub miou_includes_background: bool,
}

/// Integer mask over a H x W grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Self {
        assert_eq!(labels.len(), height * width, "mask size");
        Mask {
            height,
            width,
            labels,
        }
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Per-class one-vs-rest confusion counts.
pub fn confusion(pred: &Mask, gt: &Mask, class: u8) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        match (p == class, g == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Boundary pixels of one class: foreground pixels with at least one
/// 4-neighbor that is background, counting the image border as
/// background.
pub fn boundary_pixels(mask: &Mask, class: u8) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height, mask.width);
    let is_fg = |r: isize, c: isize| -> bool {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            return false;
        }
        mask.labels[r as usize * w + c as usize] == class
    };
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.labels[r * w + c] != class {
                continue;
            }
            let (ri, ci) = (r as isize, c as isize);
            if !is_fg(ri - 1, ci) || !is_fg(ri + 1, ci) || !is_fg(ri, ci - 1) || !is_fg(ri, ci + 1)
            {
                out.push((r, c));
            }
        }
    }
    out
}

fn directed_distances(from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    from.iter()
        .map(|&(r, c)| {
            to.iter()
                .map(|&(r2, c2)| {
                    let dr = r as f64 - r2 as f64;
                    let dc = c as f64 - c2 as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Nearest-rank percentile: smallest value v with at least `q` of the
/// sorted sample <= v.
fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// HD95 for one class: 95th percentile of the pooled directed
/// boundary-to-boundary distances in both directions. If exactly one
/// side has no boundary the image diagonal is returned; if both are
/// empty there is no surface to compare and `None` is returned.
pub fn hd95_class(pred: &Mask, gt: &Mask, class: u8) -> Option<f64> {
    let pb = boundary_pixels(pred, class);
    let gb = boundary_pixels(gt, class);
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => None,
        (true, false) | (false, true) => {
            let h = pred.height as f64;
            let w = pred.width as f64;
            Some((h * h + w * w).sqrt())
        }
        (false, false) => {
            let mut dists = directed_distances(&pb, &gb);
            dists.extend(directed_distances(&gb, &pb));
            Some(percentile(&mut dists, 0.95))
        }
    }
}

/// Confusion-matrix metrics plus HD95, macro-averaged over foreground
/// classes (1..num_classes). Accuracy is global pixel accuracy. HD95 is
/// averaged over classes present in the ground truth.
pub fn segmentation_metrics(pred: &Mask, gt: &Mask, num_classes: usize) -> Result<MetricsReport> {
    segmentation_metrics_with(pred, gt, num_classes, MetricsOptions::default())
}

pub fn segmentation_metrics_with(
    pred: &Mask,
    gt: &Mask,
    num_classes: usize,
    opts: MetricsOptions,
) -> Result<MetricsReport> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(err!(
            Shape,
            "metrics: prediction {}x{} vs ground truth {}x{}",
            pred.height,
            pred.width,
            gt.height,
            gt.width
        ));
    }
    if num_classes < 2 {
        return Err(err!(Config, "metrics need at least 2 classes"));
    }
    let limit = (num_classes - 1) as u8;
    if pred.max_label() > limit || gt.max_label() > limit {
        return Err(err!(
            Data,
            "mask contains labels above class count {num_classes}"
        ));
    }
    let total = (pred.height * pred.width) as f64;
    let correct = pred
        .labels
        .iter()
        .zip(&gt.labels)
        .filter(|(p, g)| p == g)
        .count() as f64;

    let fg_classes: Vec<u8> = (1..num_classes as u8).collect();
    let miou_classes: Vec<u8> = if opts.miou_includes_background {
        (0..num_classes as u8).collect()
    } else {
        fg_classes.clone()
    };

    let mut per_class_dsc = Vec::new();
    let mut dsc_sum = 0.0;
    let mut sen_sum = 0.0;
    let mut spe_sum = 0.0;
    for &cls in &fg_classes {
        let c = confusion(pred, gt, cls);
        per_class_dsc.push(c.dsc());
        dsc_sum += c.dsc();
        sen_sum += c.sen();
        spe_sum += c.spe();
    }
    let miou = miou_classes
        .iter()
        .map(|&cls| confusion(pred, gt, cls).iou())
        .sum::<f64>()
        / miou_classes.len() as f64;

    let mut hd_sum = 0.0;
    let mut hd_count = 0usize;
    for &cls in &fg_classes {
        let gt_present = gt.labels.iter().any(|&v| v == cls);
        if !gt_present {
            continue;
        }
        if let Some(hd) = hd95_class(pred, gt, cls) {
            hd_sum += hd;
            hd_count += 1;
        }
    }
    let nf = fg_classes.len() as f64;
    Ok(MetricsReport {
        miou,
        dsc: dsc_sum / nf,
        acc: correct / total,
        spe: spe_sum / nf,
        sen: sen_sum / nf,
        hd95: if hd_count == 0 { 0.0 } else { hd_sum / hd_count as f64 },
        per_class_dsc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_confusion_example() {
        let pred = Mask::new(2, 2, vec![1, 1, 0, 0]);
        let gt = Mask::new(2, 2, vec![1, 0, 0, 0]);
        let r = segmentation_metrics(&pred, &gt, 2).unwrap();
        assert!((r.dsc - 2.0 / 3.0).abs() < 1e-9);
        assert!((r.miou - 0.5).abs() < 1e-9);
        assert!((r.acc - 0.75).abs() < 1e-9);
        assert!((r.sen - 1.0).abs() < 1e-9);
        assert!((r.spe - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_masks_are_perfect() {
        let m = Mask::new(3, 3, vec![0, 1, 1, 0, 1, 0, 0, 0, 2]);
        let r = segmentation_metrics(&m, &m, 3).unwrap();
        assert_eq!(r.dsc, 1.0);
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.acc, 1.0);
        assert_eq!(r.hd95, 0.0);
    }

    #[test]
    fn shifted_square_hd95_is_one() {
        let (h, w) = (16usize, 16usize);
        let square = |r0: usize, c0: usize| -> Mask {
            let mut labels = vec![0u8; h * w];
            for r in r0..r0 + 5 {
                for c in c0..c0 + 5 {
                    labels[r * w + c] = 1;
                }
            }
            Mask::new(h, w, labels)
        };
        let gt = square(4, 4);
        let pred = square(4, 5);
        let r = segmentation_metrics(&pred, &gt, 2).unwrap();
        assert_eq!(r.hd95, 1.0);
    }

    #[test]
    fn hd95_is_symmetric_and_handles_empties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let labels_a: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2u8)).collect();
            let labels_b: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2u8)).collect();
            let a = Mask::new(8, 8, labels_a);
            let b = Mask::new(8, 8, labels_b);
            assert_eq!(hd95_class(&a, &b, 1), hd95_class(&b, &a, 1));
        }
        let empty = Mask::new(4, 4, vec![0; 16]);
        let full = Mask::new(4, 4, vec![1; 16]);
        let diag = (32.0f64).sqrt();
        assert_eq!(hd95_class(&empty, &full, 1), Some(diag));
        assert_eq!(hd95_class(&empty, &empty, 1), None);
    }

    #[test]
    fn dsc_iou_identity_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let labels_p: Vec<u8> = (0..36).map(|_| rng.gen_range(0..3u8)).collect();
            let labels_g: Vec<u8> = (0..36).map(|_| rng.gen_range(0..3u8)).collect();
            let p = Mask::new(6, 6, labels_p);
            let g = Mask::new(6, 6, labels_g);
            for cls in 1..3u8 {
                let c = confusion(&p, &g, cls);
                let dsc = c.dsc();
                let iou = c.iou();
                assert!((dsc - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn miou_background_flag() {
        let pred = Mask::new(2, 2, vec![1, 1, 0, 0]);
        let gt = Mask::new(2, 2, vec![1, 0, 0, 0]);
        let fg = segmentation_metrics(&pred, &gt, 2).unwrap();
        let both = segmentation_metrics_with(
            &pred,
            &gt,
            2,
            MetricsOptions {
                miou_includes_background: true,
            },
        )
        .unwrap();
        assert!((fg.miou - 0.5).abs() < 1e-12);
        // background IoU: TP=2, FP=0, FN=1 -> 2/3; mean(1/2, 2/3) = 7/12
        assert!((both.miou - 7.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let pred = Mask::new(1, 2, vec![0, 3]);
        let gt = Mask::new(1, 2, vec![0, 1]);
        assert!(segmentation_metrics(&pred, &gt, 2).is_err());
    }

    #[test]
    fn boundary_uses_border_as_background() {
        // a full-frame mask: every pixel touches the border or interior?
        // interior pixels have all 4 neighbors foreground, so the boundary
        // is exactly the outer ring.
        let m = Mask::new(4, 4, vec![1; 16]);
        let b = boundary_pixels(&m, 1);
        assert_eq!(b.len(), 12);
        assert!(!b.contains(&(1, 1)));
    }
}
