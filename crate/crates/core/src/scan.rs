//! Slice-scan sequence geometry.
//!
//! A feature map is cut into horizontal slices of height `m` and vertical
//! slices of width `n`. Horizontal slices are traversed column by column
//! (top to bottom within a column), vertical slices row by row (left to
//! right within a row), each in a forward and a backward direction. The
//! four resulting orderings keep spatially adjacent pixels close in the
//! scan sequence: horizontal neighbors are at most `m` apart in the
//! horizontal scan and vertical neighbors at most `n` apart in the
//! vertical scan. With m = H and n = W the orderings degenerate to the
//! row-major/column-major cross-scan used by SS2D-style models.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Slice sizes: horizontal slices are `m` rows tall, vertical slices `n`
/// columns wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceConfig {
    pub m: usize,
    pub n: usize,
}

impl SliceConfig {
    pub fn new(m: usize, n: usize) -> Self {
        SliceConfig { m, n }
    }
}

impl std::fmt::Display for SliceConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m, self.n)
    }
}

impl std::str::FromStr for SliceConfig {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        let (m, n) = s
            .split_once('x')
            .ok_or_else(|| err!(Config, "slice config `{s}` is not of the form MxN"))?;
        let m = m
            .parse::<usize>()
            .map_err(|_| err!(Config, "bad slice height in `{s}`"))?;
        let n = n
            .parse::<usize>()
            .map_err(|_| err!(Config, "bad slice width in `{s}`"))?;
        if m == 0 || n == 0 {
            return Err(err!(Config, "slice sizes must be >= 1, got {m}x{n}"));
        }
        Ok(SliceConfig { m, n })
    }
}

/// Ordered list of per-block slice choices, one per scannable block in a
/// model (encoder stage-major, then decoder stage-major). Text format is
/// one line of comma-separated pairs, e.g. `2x2,4x2,2x4,4x4`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SliceGenotype {
    pub choices: Vec<SliceConfig>,
}

impl SliceGenotype {
    pub fn new(choices: Vec<SliceConfig>) -> Self {
        SliceGenotype { choices }
    }

    pub fn uniform(len: usize, config: SliceConfig) -> Self {
        SliceGenotype {
            choices: vec![config; len],
        }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

impl std::fmt::Display for SliceGenotype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, c) in self.choices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SliceGenotype {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(SliceGenotype::default());
        }
        let choices = s
            .split(',')
            .map(|part| part.trim().parse::<SliceConfig>())
            .collect::<Result<Vec<_>>>()?;
        Ok(SliceGenotype { choices })
    }
}

impl serde::Serialize for SliceGenotype {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for SliceGenotype {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanDirection {
    HFwd,
    HBwd,
    VFwd,
    VBwd,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::HFwd,
        ScanDirection::HBwd,
        ScanDirection::VFwd,
        ScanDirection::VBwd,
    ];
}

/// The four scan orderings for one (height, width, m, n) combination.
///
/// Each `perm_*` maps sequence position -> flat pixel index (row-major
/// r*W + c); each `inv_*` maps flat pixel index -> sequence position.
/// Plans are immutable once built and shared via `Arc`.
#[derive(Clone, Debug)]
pub struct ScanPlanSet {
    pub height: usize,
    pub width: usize,
    pub config: SliceConfig,
    pub perm_h_fwd: Arc<Vec<usize>>,
    pub perm_h_bwd: Arc<Vec<usize>>,
    pub perm_v_fwd: Arc<Vec<usize>>,
    pub perm_v_bwd: Arc<Vec<usize>>,
    pub inv_h_fwd: Arc<Vec<usize>>,
    pub inv_h_bwd: Arc<Vec<usize>>,
    pub inv_v_fwd: Arc<Vec<usize>>,
    pub inv_v_bwd: Arc<Vec<usize>>,
}

impl ScanPlanSet {
    pub fn perm(&self, dir: ScanDirection) -> &Arc<Vec<usize>> {
        match dir {
            ScanDirection::HFwd => &self.perm_h_fwd,
            ScanDirection::HBwd => &self.perm_h_bwd,
            ScanDirection::VFwd => &self.perm_v_fwd,
            ScanDirection::VBwd => &self.perm_v_bwd,
        }
    }

    pub fn inverse(&self, dir: ScanDirection) -> &Arc<Vec<usize>> {
        match dir {
            ScanDirection::HFwd => &self.inv_h_fwd,
            ScanDirection::HBwd => &self.inv_h_bwd,
            ScanDirection::VFwd => &self.inv_v_fwd,
            ScanDirection::VBwd => &self.inv_v_bwd,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.height * self.width
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (pos, &idx) in perm.iter().enumerate() {
        inv[idx] = pos;
    }
    inv
}

/// Builds the four scan orderings for an `height` x `width` map.
///
/// Horizontal forward: slice index i = r / m outermost, then columns left
/// to right, then rows top to bottom within the column segment, so pixel
/// (r, c) lands at i*(m*W) + c*m + (r - i*m). Vertical forward: slice
/// j = c / n, then rows, then columns, position j*(H*n) + r*n + (c - j*n).
/// Backward orderings are exact reversals.
pub fn build_slice_plan(height: usize, width: usize, config: SliceConfig) -> Result<ScanPlanSet> {
    if height == 0 || width == 0 {
        return Err(err!(Shape, "scan plan needs H, W >= 1, got {height}x{width}"));
    }
    if config.m == 0 || config.n == 0 {
        return Err(err!(Config, "slice config must have m, n >= 1, got {config}"));
    }
    if height % config.m != 0 || width % config.n != 0 {
        return Err(err!(
            Divisibility,
            "slice config {config} does not divide feature map {height}x{width} \
             (H={height} mod m={} is {}, W={width} mod n={} is {})",
            config.m,
            height % config.m,
            config.n,
            width % config.n
        ));
    }
    let len = height * width;
    let (m, n) = (config.m, config.n);

    let mut perm_h_fwd = vec![0usize; len];
    for r in 0..height {
        let i = r / m;
        for c in 0..width {
            let pos = i * (m * width) + c * m + (r - i * m);
            perm_h_fwd[pos] = r * width + c;
        }
    }
    let mut perm_v_fwd = vec![0usize; len];
    for r in 0..height {
        for c in 0..width {
            let j = c / n;
            let pos = j * (height * n) + r * n + (c - j * n);
            perm_v_fwd[pos] = r * width + c;
        }
    }
    let perm_h_bwd: Vec<usize> = perm_h_fwd.iter().rev().copied().collect();
    let perm_v_bwd: Vec<usize> = perm_v_fwd.iter().rev().copied().collect();

    Ok(ScanPlanSet {
        height,
        width,
        config,
        inv_h_fwd: Arc::new(invert(&perm_h_fwd)),
        inv_h_bwd: Arc::new(invert(&perm_h_bwd)),
        inv_v_fwd: Arc::new(invert(&perm_v_fwd)),
        inv_v_bwd: Arc::new(invert(&perm_v_bwd)),
        perm_h_fwd: Arc::new(perm_h_fwd),
        perm_h_bwd: Arc::new(perm_h_bwd),
        perm_v_fwd: Arc::new(perm_v_fwd),
        perm_v_bwd: Arc::new(perm_v_bwd),
    })
}

type PlanKey = (usize, usize, usize, usize);

/// Plans are reused every forward pass; cache them per (H, W, m, n).
pub fn cached_plan(height: usize, width: usize, config: SliceConfig) -> Result<Arc<ScanPlanSet>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<ScanPlanSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (height, width, config.m, config.n);
    if let Some(plan) = cache.lock().unwrap().get(&key) {
        return Ok(plan.clone());
    }
    let plan = Arc::new(build_slice_plan(height, width, config)?);
    cache.lock().unwrap().insert(key, plan.clone());
    Ok(plan)
}

/// Gathers a [C, H, W] feature map into a [C, H*W] sequence along one scan
/// direction: output position t holds the pixel at flat index perm[t].
pub fn apply_scan<T: Scalar>(
    features: &Tensor<T>,
    plan: &ScanPlanSet,
    direction: ScanDirection,
) -> Result<Tensor<T>> {
    let shape = features.shape();
    if shape.len() != 3 || shape[1] != plan.height || shape[2] != plan.width {
        return Err(err!(
            Shape,
            "apply_scan: features {:?} do not match plan {}x{}",
            shape,
            plan.height,
            plan.width
        ));
    }
    let channels = shape[0];
    let len = plan.seq_len();
    let perm = plan.perm(direction);
    let src = features.data();
    let mut out = vec![T::zero(); channels * len];
    for ch in 0..channels {
        let src_ch = &src[ch * len..(ch + 1) * len];
        let dst_ch = &mut out[ch * len..(ch + 1) * len];
        for (t, &idx) in perm.iter().enumerate() {
            dst_ch[t] = src_ch[idx];
        }
    }
    Ok(Tensor::from_vec(&[channels, len], out))
}

/// Scatters four [C, H*W] sequences back through their inverse orderings
/// and sums the restored maps element-wise.
pub fn restore_merge<T: Scalar>(
    seq_h_fwd: &Tensor<T>,
    seq_h_bwd: &Tensor<T>,
    seq_v_fwd: &Tensor<T>,
    seq_v_bwd: &Tensor<T>,
    plan: &ScanPlanSet,
) -> Result<Tensor<T>> {
    let len = plan.seq_len();
    let channels = seq_h_fwd.shape().first().copied().unwrap_or(0);
    for (name, seq) in [
        ("h_fwd", seq_h_fwd),
        ("h_bwd", seq_h_bwd),
        ("v_fwd", seq_v_fwd),
        ("v_bwd", seq_v_bwd),
    ] {
        seq.expect_shape(&[channels, len], &format!("restore_merge {name}"))?;
    }
    let mut out = vec![T::zero(); channels * len];
    for (seq, dir) in [
        (seq_h_fwd, ScanDirection::HFwd),
        (seq_h_bwd, ScanDirection::HBwd),
        (seq_v_fwd, ScanDirection::VFwd),
        (seq_v_bwd, ScanDirection::VBwd),
    ] {
        let perm = plan.perm(dir);
        let src = seq.data();
        for ch in 0..channels {
            let src_ch = &src[ch * len..(ch + 1) * len];
            let dst_ch = &mut out[ch * len..(ch + 1) * len];
            for (t, &idx) in perm.iter().enumerate() {
                dst_ch[idx] += src_ch[t];
            }
        }
    }
    Ok(Tensor::from_vec(&[channels, plan.height, plan.width], out))
}

/// Min-over-sequences position distances for adjacent pixel pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyProfile {
    pub max_h_neighbor_dist: usize,
    pub max_v_neighbor_dist: usize,
    /// Histogram of min distances over horizontally adjacent pairs,
    /// indexed by distance.
    pub hist_h: Vec<usize>,
    /// Same for vertically adjacent pairs.
    pub hist_v: Vec<usize>,
}

/// For every pair of horizontally (resp. vertically) adjacent pixels,
/// takes the minimum over the four scan sequences of the absolute
/// position difference, and reports maxima plus histograms.
pub fn adjacency_profile(plan: &ScanPlanSet) -> AdjacencyProfile {
    let (h, w) = (plan.height, plan.width);
    let inverses = [
        &plan.inv_h_fwd,
        &plan.inv_h_bwd,
        &plan.inv_v_fwd,
        &plan.inv_v_bwd,
    ];
    let min_dist = |a: usize, b: usize| -> usize {
        inverses
            .iter()
            .map(|inv| inv[a].abs_diff(inv[b]))
            .min()
            .unwrap()
    };
    let mut hist_h = vec![0usize; 1];
    let mut hist_v = vec![0usize; 1];
    let bump = |hist: &mut Vec<usize>, d: usize| {
        if d >= hist.len() {
            hist.resize(d + 1, 0);
        }
        hist[d] += 1;
    };
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                bump(&mut hist_h, min_dist(r * w + c, r * w + c + 1));
            }
            if r + 1 < h {
                bump(&mut hist_v, min_dist(r * w + c, (r + 1) * w + c));
            }
        }
    }
    let max_of = |hist: &[usize]| hist.iter().rposition(|&count| count > 0).unwrap_or(0);
    AdjacencyProfile {
        max_h_neighbor_dist: max_of(&hist_h),
        max_v_neighbor_dist: max_of(&hist_v),
        hist_h,
        hist_v,
    }
}
