//! Ingest-time resampling: bilinear for images, nearest-neighbor for
//! masks so class labels stay exact.

/// Bilinear resize of interleaved RGB bytes.
pub fn bilinear_rgb(
    src: &[u8],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<u8> {
    let mut out = vec![0u8; dst_h * dst_w * 3];
    let sy = src_h as f64 / dst_h as f64;
    let sx = src_w as f64 / dst_w as f64;
    for r in 0..dst_h {
        // sample at pixel centers
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, src_h as f64 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let wy = fy - y0 as f64;
        for c in 0..dst_w {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, src_w as f64 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..3 {
                let at = |y: usize, x: usize| src[(y * src_w + x) * 3 + ch] as f64;
                let top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
                let bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
                out[(r * dst_w + c) * 3 + ch] =
                    (top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Nearest-neighbor resize of a label raster.
pub fn nearest_mask(
    src: &[u8],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<u8> {
    let mut out = vec![0u8; dst_h * dst_w];
    let sy = src_h as f64 / dst_h as f64;
    let sx = src_w as f64 / dst_w as f64;
    for r in 0..dst_h {
        let y = (((r as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(src_h - 1);
        for c in 0..dst_w {
            let x = (((c as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(src_w - 1);
            out[r * dst_w + c] = src[y * src_w + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let src: Vec<u8> = (0..4 * 4 * 3).map(|i| (i % 251) as u8).collect();
        assert_eq!(bilinear_rgb(&src, 4, 4, 4, 4), src);
        let mask: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
        assert_eq!(nearest_mask(&mask, 4, 4, 4, 4), mask);
    }

    #[test]
    fn nearest_preserves_label_set() {
        let mask: Vec<u8> = vec![0, 1, 2, 1, 0, 2, 2, 1, 0, 0, 1, 2, 1, 2, 0, 1];
        let out = nearest_mask(&mask, 4, 4, 7, 5);
        assert!(out.iter().all(|&v| v <= 2));
    }

    #[test]
    fn bilinear_constant_image_stays_constant() {
        let src = vec![137u8; 8 * 8 * 3];
        let out = bilinear_rgb(&src, 8, 8, 3, 5);
        assert!(out.iter().all(|&v| v == 137));
    }
}
