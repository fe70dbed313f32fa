//! Encoder/decoder segmentation network built from slice-scan selective
//! state-space blocks.
//!
//! Layout conventions: images and logits cross the public API as
//! channel-first [C, H, W] tensors; internally every feature map is a
//! [H*W, C] row matrix (row-major positions, channels last) so linear
//! layers, layer norm and the scan gathers are all row operations.
//!
//! Stage plan for `s` stages: patch embed quarters the resolution to
//! width `C`, each encoder stage runs its blocks then halves resolution
//! and doubles channels, each decoder stage doubles resolution and
//! halves channels, adds the matching encoder skip, then runs its
//! blocks. The final mapping is two more expansions back to the input
//! resolution followed by a 1x1 projection to class logits.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::autodiff::Var;
use crate::error::{err, Result};
use crate::scalar::Scalar;
use crate::scan::{cached_plan, ScanDirection, SliceConfig, SliceGenotype};
use crate::ssm::S6Weights;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Candidate slice shapes searched per block.
pub const SLICE_CANDIDATES: [SliceConfig; 4] = [
    SliceConfig { m: 2, n: 2 },
    SliceConfig { m: 2, n: 4 },
    SliceConfig { m: 4, n: 2 },
    SliceConfig { m: 4, n: 4 },
];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub num_classes: usize,
    /// Channel width after patch embedding.
    pub base_width: usize,
    /// SSM state dimension per channel.
    pub state_dim: usize,
    /// Blocks per encoder stage; the length sets the stage count (1..=4).
    pub encoder_depths: Vec<usize>,
    /// Blocks per decoder stage, deepest stage first.
    pub decoder_depths: Vec<usize>,
    /// (height, width) of the input images.
    pub input_resolution: (usize, usize),
    /// Per-block slice choice, encoder stage-major then decoder
    /// stage-major. Empty means all 2x2.
    #[serde(default)]
    pub genotype: SliceGenotype,
    /// One S6 parameter set shared by the four scan directions (true) or
    /// four independent sets (false).
    #[serde(default = "default_true")]
    pub shared_s6: bool,
    /// Exact zero-order-hold B discretization; false uses B_bar = delta*B.
    #[serde(default = "default_true")]
    pub exact_zoh: bool,
    /// Include the learned per-channel D skip inside each scan.
    #[serde(default = "default_true")]
    pub d_skip: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Desk-scale default: trains on a laptop CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            input_channels: 3,
            num_classes: 2,
            base_width: 16,
            state_dim: 8,
            encoder_depths: vec![1, 1, 2, 1],
            decoder_depths: vec![1, 1, 1, 1],
            input_resolution: (64, 64),
            genotype: SliceGenotype::default(),
            shared_s6: true,
            exact_zoh: true,
            d_skip: true,
        }
    }

    /// Two-stage miniature for the gradient-check harness; small enough
    /// (under 5k parameters) that central finite differences over every
    /// component stay cheap.
    pub fn tiny_gradcheck() -> Self {
        ModelConfig {
            input_channels: 1,
            num_classes: 2,
            base_width: 4,
            state_dim: 2,
            encoder_depths: vec![1, 0],
            decoder_depths: vec![0, 1],
            input_resolution: (32, 32),
            genotype: SliceGenotype::default(),
            shared_s6: true,
            exact_zoh: true,
            d_skip: true,
        }
    }

    /// Full-scale preset (256x256 inputs, width 96).
    pub fn paper() -> Self {
        ModelConfig {
            input_channels: 3,
            num_classes: 2,
            base_width: 96,
            state_dim: 16,
            encoder_depths: vec![2, 2, 9, 2],
            decoder_depths: vec![2, 2, 2, 1],
            input_resolution: (256, 256),
            genotype: SliceGenotype::default(),
            shared_s6: true,
            exact_zoh: true,
            d_skip: true,
        }
    }

    pub fn stages(&self) -> usize {
        self.encoder_depths.len()
    }

    pub fn total_blocks(&self) -> usize {
        self.encoder_depths.iter().sum::<usize>() + self.decoder_depths.iter().sum::<usize>()
    }

    /// Feature-map size at a given stage index (same for encoder and the
    /// mirrored decoder stage).
    pub fn stage_resolution(&self, stage: usize) -> (usize, usize) {
        let (h, w) = self.input_resolution;
        (h / 4 >> stage, w / 4 >> stage)
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_width << stage
    }

    /// Stage index of each block, encoder stage-major then decoder
    /// stage-major (decoder stages in execution order, deepest first).
    pub fn block_stages(&self) -> Vec<usize> {
        let s = self.stages();
        let mut stages = Vec::with_capacity(self.total_blocks());
        for (i, &d) in self.encoder_depths.iter().enumerate() {
            stages.extend(std::iter::repeat(i).take(d));
        }
        for (j, &d) in self.decoder_depths.iter().enumerate() {
            stages.extend(std::iter::repeat(s - 1 - j).take(d));
        }
        stages
    }

    /// Fills an empty genotype with all-2x2 and validates everything.
    pub fn normalized(mut self) -> Result<Self> {
        if self.genotype.is_empty() {
            self.genotype = SliceGenotype::uniform(self.total_blocks(), SliceConfig::new(2, 2));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if s == 0 || s > 4 {
            return Err(err!(Config, "encoder_depths must have 1..=4 stages, got {s}"));
        }
        if self.decoder_depths.len() != s {
            return Err(err!(
                Config,
                "decoder_depths has {} stages, encoder has {s}",
                self.decoder_depths.len()
            ));
        }
        if self.input_channels == 0 || self.num_classes == 0 || self.state_dim == 0 {
            return Err(err!(Config, "channels, classes and state_dim must be >= 1"));
        }
        if self.base_width % 4 != 0 || self.base_width == 0 {
            return Err(err!(
                Config,
                "base_width must be a positive multiple of 4 (final mapping halves it twice), got {}",
                self.base_width
            ));
        }
        let (h, w) = self.input_resolution;
        let div = 4 << s;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(err!(
                Config,
                "input resolution {h}x{w} must be divisible by {div} for {s} stages"
            ));
        }
        if self.genotype.len() != self.total_blocks() {
            return Err(err!(
                Config,
                "genotype has {} entries for {} blocks",
                self.genotype.len(),
                self.total_blocks()
            ));
        }
        for (b, (&stage, cfg)) in self
            .block_stages()
            .iter()
            .zip(&self.genotype.choices)
            .enumerate()
        {
            let (sh, sw) = self.stage_resolution(stage);
            if sh % cfg.m != 0 || sw % cfg.n != 0 {
                return Err(err!(
                    Divisibility,
                    "block {b} (stage {stage}, {sh}x{sw}) cannot take slice config {cfg}"
                ));
            }
        }
        Ok(())
    }
}

pub struct LinearLayer<T: Scalar> {
    pub weight: Var<T>,
    pub bias: Option<Var<T>>,
}

impl<T: Scalar> LinearLayer<T> {
    fn init(fan_in: usize, fan_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        LinearLayer {
            weight: Var::param(Tensor::uniform(&[fan_in, fan_out], bound, rng)),
            bias: bias.then(|| Var::param(Tensor::uniform(&[fan_out], bound, rng))),
        }
    }

    pub fn apply(&self, x: &Var<T>) -> Var<T> {
        let y = x.matmul(&self.weight);
        match &self.bias {
            Some(b) => y.bias_add(b),
            None => y,
        }
    }
}

pub struct NormLayer<T: Scalar> {
    pub gamma: Var<T>,
    pub beta: Var<T>,
}

impl<T: Scalar> NormLayer<T> {
    fn init(width: usize) -> Self {
        NormLayer {
            gamma: Var::param(Tensor::full(&[width], T::one())),
            beta: Var::param(Tensor::zeros(&[width])),
        }
    }

    pub fn apply(&self, x: &Var<T>) -> Var<T> {
        x.layer_norm(&self.gamma, &self.beta, T::of_f64(LAYER_NORM_EPS))
    }
}

/// One selective-SSM parameter set as autodiff leaves.
pub struct S6Layer<T: Scalar> {
    pub a_log: Var<T>,
    pub d: Var<T>,
    pub w_delta_down: Var<T>,
    pub w_delta_up: Var<T>,
    pub delta_bias: Var<T>,
    pub w_b: Var<T>,
    pub w_c: Var<T>,
}

impl<T: Scalar> S6Layer<T> {
    fn init(channels: usize, state_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = S6Weights::<T>::init(channels, state_dim, true, true, rng);
        S6Layer {
            a_log: Var::param(w.core.a_log),
            d: Var::param(w.core.d),
            w_delta_down: Var::param(w.w_delta_down),
            w_delta_up: Var::param(w.w_delta_up),
            delta_bias: Var::param(w.delta_bias),
            w_b: Var::param(w.w_b),
            w_c: Var::param(w.w_c),
        }
    }

    /// Runs the selective scan on an already scan-ordered token sequence.
    pub fn scan(&self, seq: &Var<T>, exact_zoh: bool, d_skip: bool) -> Var<T> {
        let low = seq.matmul(&self.w_delta_down);
        let delta = low
            .matmul(&self.w_delta_up)
            .bias_add(&self.delta_bias)
            .softplus();
        let b_seq = seq.matmul(&self.w_b);
        let c_seq = seq.matmul(&self.w_c);
        let a = self.a_log.exp().neg();
        let y = Var::ssm_scan(seq, &delta, &b_seq, &c_seq, &a, exact_zoh);
        if d_skip {
            y.add(&seq.mul_row_vec(&self.d))
        } else {
            y
        }
    }
}

/// Slice-scan block: shared input embedding split into a scan path
/// (depth-wise conv, SiLU, four-direction slice scan, layer norm) and a
/// SiLU gate path, recombined multiplicatively and projected back onto a
/// residual connection.
pub struct SliceScanBlock<T: Scalar> {
    pub in_proj: LinearLayer<T>,
    pub dw_kernel: Var<T>,
    pub dw_bias: Var<T>,
    pub s6: Vec<S6Layer<T>>,
    pub norm: NormLayer<T>,
    pub out_proj: LinearLayer<T>,
    pub inner: usize,
}

impl<T: Scalar> SliceScanBlock<T> {
    pub fn init(channels: usize, state_dim: usize, shared_s6: bool, rng: &mut ChaCha8Rng) -> Self {
        let inner = 2 * channels;
        let dw_bound = 1.0 / 3.0;
        let s6_count = if shared_s6 { 1 } else { 4 };
        SliceScanBlock {
            in_proj: LinearLayer::init(channels, 2 * inner, true, rng),
            dw_kernel: Var::param(Tensor::uniform(&[inner, 9], dw_bound, rng)),
            dw_bias: Var::param(Tensor::uniform(&[inner], dw_bound, rng)),
            s6: (0..s6_count)
                .map(|_| S6Layer::init(inner, state_dim, rng))
                .collect(),
            norm: NormLayer::init(inner),
            out_proj: LinearLayer::init(inner, channels, true, rng),
            inner,
        }
    }

    pub fn forward(
        &self,
        x: &Var<T>,
        h: usize,
        w: usize,
        slice: SliceConfig,
        exact_zoh: bool,
        d_skip: bool,
    ) -> Result<Var<T>> {
        let u = self.in_proj.apply(x);
        let path1 = u.slice_cols(0, self.inner);
        let gate = u.slice_cols(self.inner, 2 * self.inner);
        let p1 = path1
            .dwconv3x3(&self.dw_kernel, &self.dw_bias, h, w)
            .silu();
        let merged = bss_forward(&p1, h, w, slice, &self.s6, exact_zoh, d_skip)?;
        let mixed = self.norm.apply(&merged);
        let gated = mixed.mul(&gate.silu());
        Ok(x.add(&self.out_proj.apply(&gated)))
    }
}

/// Bidirectional slice scan: gathers a [h*w, C] feature map into the
/// four slice-order sequences, runs the selective scan on each (one
/// shared parameter set, or one per direction when `s6` has four), and
/// restores by element-wise addition.
pub fn bss_forward<T: Scalar>(
    features: &Var<T>,
    h: usize,
    w: usize,
    slice: SliceConfig,
    s6: &[S6Layer<T>],
    exact_zoh: bool,
    d_skip: bool,
) -> Result<Var<T>> {
    assert!(s6.len() == 1 || s6.len() == 4, "one shared or four S6 sets");
    let plan = cached_plan(h, w, slice)?;
    let mut merged: Option<Var<T>> = None;
    for (i, dir) in ScanDirection::ALL.iter().enumerate() {
        let branch = if s6.len() == 1 { &s6[0] } else { &s6[i] };
        let seq = features.row_gather(Arc::clone(plan.perm(*dir)));
        let out = branch.scan(&seq, exact_zoh, d_skip);
        let restored = out.row_gather(Arc::clone(plan.inverse(*dir)));
        merged = Some(match merged {
            None => restored,
            Some(acc) => acc.add(&restored),
        });
    }
    Ok(merged.expect("four directions"))
}

pub struct MergeLayer<T: Scalar> {
    pub norm: NormLayer<T>,
    pub reduce: Var<T>,
}

pub struct ExpandLayer<T: Scalar> {
    pub expand: Var<T>,
}

pub struct EncoderStage<T: Scalar> {
    pub blocks: Vec<SliceScanBlock<T>>,
    pub merge: MergeLayer<T>,
}

pub struct DecoderStage<T: Scalar> {
    pub expand: ExpandLayer<T>,
    pub blocks: Vec<SliceScanBlock<T>>,
}

pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub embed_proj: LinearLayer<T>,
    pub embed_norm: NormLayer<T>,
    pub encoder: Vec<EncoderStage<T>>,
    pub decoder: Vec<DecoderStage<T>>,
    pub final_expand1: ExpandLayer<T>,
    pub final_expand2: ExpandLayer<T>,
    pub head: LinearLayer<T>,
    params: Vec<(String, Var<T>)>,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with freshly initialized weights; the construction
    /// order is fixed so a given seed always yields the same parameters.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let config = config.normalized()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.base_width;
        let s = config.stages();
        let patch_in = 16 * config.input_channels;

        let embed_proj = LinearLayer::init(patch_in, c, true, &mut rng);
        let embed_norm = NormLayer::init(c);
        let mut encoder = Vec::new();
        for (i, &depth) in config.encoder_depths.iter().enumerate() {
            let ch = config.stage_channels(i);
            let blocks = (0..depth)
                .map(|_| SliceScanBlock::init(ch, config.state_dim, config.shared_s6, &mut rng))
                .collect();
            let merge = MergeLayer {
                norm: NormLayer::init(4 * ch),
                reduce: Var::param(Tensor::uniform(
                    &[4 * ch, 2 * ch],
                    1.0 / ((4 * ch) as f64).sqrt(),
                    &mut rng,
                )),
            };
            encoder.push(EncoderStage { blocks, merge });
        }
        let mut decoder = Vec::new();
        for (j, &depth) in config.decoder_depths.iter().enumerate() {
            let ch_in = config.stage_channels(s - j);
            let ch = config.stage_channels(s - 1 - j);
            let expand = ExpandLayer {
                expand: Var::param(Tensor::uniform(
                    &[ch_in, 2 * ch_in],
                    1.0 / (ch_in as f64).sqrt(),
                    &mut rng,
                )),
            };
            let blocks = (0..depth)
                .map(|_| SliceScanBlock::init(ch, config.state_dim, config.shared_s6, &mut rng))
                .collect();
            decoder.push(DecoderStage { expand, blocks });
        }
        let final_expand1 = ExpandLayer {
            expand: Var::param(Tensor::uniform(&[c, 2 * c], 1.0 / (c as f64).sqrt(), &mut rng)),
        };
        let half = c / 2;
        let final_expand2 = ExpandLayer {
            expand: Var::param(Tensor::uniform(
                &[half, 2 * half],
                1.0 / (half as f64).sqrt(),
                &mut rng,
            )),
        };
        let head = LinearLayer::init(c / 4, config.num_classes, true, &mut rng);

        let mut model = Model {
            config,
            embed_proj,
            embed_norm,
            encoder,
            decoder,
            final_expand1,
            final_expand2,
            head,
            params: Vec::new(),
        };
        model.params = model.collect_params();
        Ok(model)
    }

    fn collect_params(&self) -> Vec<(String, Var<T>)> {
        let mut out: Vec<(String, Var<T>)> = Vec::new();
        let mut push = |name: String, v: &Var<T>| out.push((name, v.clone()));
        let linear = |push: &mut dyn FnMut(String, &Var<T>), prefix: &str, l: &LinearLayer<T>| {
            push(format!("{prefix}.weight"), &l.weight);
            if let Some(b) = &l.bias {
                push(format!("{prefix}.bias"), b);
            }
        };
        let norm = |push: &mut dyn FnMut(String, &Var<T>), prefix: &str, n: &NormLayer<T>| {
            push(format!("{prefix}.gamma"), &n.gamma);
            push(format!("{prefix}.beta"), &n.beta);
        };
        let block = |push: &mut dyn FnMut(String, &Var<T>), prefix: &str, b: &SliceScanBlock<T>| {
            linear(push, &format!("{prefix}.in_proj"), &b.in_proj);
            push(format!("{prefix}.dw.kernel"), &b.dw_kernel);
            push(format!("{prefix}.dw.bias"), &b.dw_bias);
            for (i, s6) in b.s6.iter().enumerate() {
                let sp = if b.s6.len() == 1 {
                    format!("{prefix}.s6")
                } else {
                    format!("{prefix}.s6{i}")
                };
                push(format!("{sp}.a_log"), &s6.a_log);
                push(format!("{sp}.d"), &s6.d);
                push(format!("{sp}.w_delta_down"), &s6.w_delta_down);
                push(format!("{sp}.w_delta_up"), &s6.w_delta_up);
                push(format!("{sp}.delta_bias"), &s6.delta_bias);
                push(format!("{sp}.w_b"), &s6.w_b);
                push(format!("{sp}.w_c"), &s6.w_c);
            }
            norm(push, &format!("{prefix}.norm"), &b.norm);
            linear(push, &format!("{prefix}.out_proj"), &b.out_proj);
        };
        linear(&mut push, "embed.proj", &self.embed_proj);
        norm(&mut push, "embed.norm", &self.embed_norm);
        for (i, stage) in self.encoder.iter().enumerate() {
            for (bi, b) in stage.blocks.iter().enumerate() {
                block(&mut push, &format!("enc{i}.block{bi}"), b);
            }
            norm(&mut push, &format!("enc{i}.merge.norm"), &stage.merge.norm);
            push(format!("enc{i}.merge.reduce"), &stage.merge.reduce);
        }
        for (j, stage) in self.decoder.iter().enumerate() {
            push(format!("dec{j}.expand"), &stage.expand.expand);
            for (bi, b) in stage.blocks.iter().enumerate() {
                block(&mut push, &format!("dec{j}.block{bi}"), b);
            }
        }
        push("final.expand1".into(), &self.final_expand1.expand);
        push("final.expand2".into(), &self.final_expand2.expand);
        linear(&mut push, "head", &self.head);
        out
    }

    pub fn named_params(&self) -> &[(String, Var<T>)] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.value().len()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// Forward from an input already laid out as [H*W, input_channels]
    /// rows, using the config genotype unless one is supplied.
    pub fn forward_rows(
        &self,
        rows: &Var<T>,
        genotype: Option<&SliceGenotype>,
    ) -> Result<Var<T>> {
        let cfg = &self.config;
        let genotype = genotype.unwrap_or(&cfg.genotype);
        if genotype.len() != cfg.total_blocks() {
            return Err(err!(
                Config,
                "genotype has {} entries for {} blocks",
                genotype.len(),
                cfg.total_blocks()
            ));
        }
        let (h0, w0) = cfg.input_resolution;
        rows.value()
            .expect_shape(&[h0 * w0, cfg.input_channels], "forward input")?;
        let s = cfg.stages();

        // patch embed: 4x4 space-to-depth then linear then norm
        let mut x = self
            .embed_norm
            .apply(&self.embed_proj.apply(&rows.space_to_depth(h0, w0, 4)));
        let (mut h, mut w) = (h0 / 4, w0 / 4);

        let mut gene = genotype.choices.iter();
        let mut skips: Vec<Var<T>> = Vec::with_capacity(s);
        for (i, stage) in self.encoder.iter().enumerate() {
            for (bi, b) in stage.blocks.iter().enumerate() {
                let slice = *gene.next().expect("genotype length checked");
                x = b
                    .forward(&x, h, w, slice, cfg.exact_zoh, cfg.d_skip)
                    .map_err(|e| err!(Divisibility, "encoder stage {i} block {bi}: {e}"))?;
            }
            skips.push(x.clone());
            // merge: 2x2 space-to-depth, norm, linear 4c -> 2c
            let merged = x.space_to_depth(h, w, 2);
            x = stage.merge.norm.apply(&merged).matmul(&stage.merge.reduce);
            h /= 2;
            w /= 2;
        }
        for (j, stage) in self.decoder.iter().enumerate() {
            // expand: linear c -> 2c, depth-to-space
            x = x.matmul(&stage.expand.expand).depth_to_space(h, w, 2);
            h *= 2;
            w *= 2;
            x = x.add(&skips[s - 1 - j]);
            for (bi, b) in stage.blocks.iter().enumerate() {
                let slice = *gene.next().expect("genotype length checked");
                x = b
                    .forward(&x, h, w, slice, cfg.exact_zoh, cfg.d_skip)
                    .map_err(|e| err!(Divisibility, "decoder stage {j} block {bi}: {e}"))?;
            }
        }
        x = x.matmul(&self.final_expand1.expand).depth_to_space(h, w, 2);
        h *= 2;
        w *= 2;
        x = x.matmul(&self.final_expand2.expand).depth_to_space(h, w, 2);
        Ok(self.head.apply(&x))
    }

    /// Forward from a [C, H, W] image; returns logits as [H*W, classes].
    pub fn forward_image(
        &self,
        image: &Tensor<T>,
        genotype: Option<&SliceGenotype>,
    ) -> Result<Var<T>> {
        let (h, w) = self.config.input_resolution;
        image.expect_shape(&[self.config.input_channels, h, w], "forward image")?;
        let rows = Var::constant(chw_to_rows(image));
        self.forward_rows(&rows, genotype)
    }

    /// Inference convenience: logits as a [classes, H, W] tensor.
    pub fn predict_logits(
        &self,
        image: &Tensor<T>,
        genotype: Option<&SliceGenotype>,
    ) -> Result<Tensor<T>> {
        let (h, w) = self.config.input_resolution;
        let out = self.forward_image(image, genotype)?;
        let logits = rows_to_chw(&out.value(), h, w);
        Ok(logits)
    }

    /// Hard segmentation mask from a forward pass.
    pub fn predict_mask(
        &self,
        image: &Tensor<T>,
        genotype: Option<&SliceGenotype>,
    ) -> Result<crate::metrics::Mask> {
        let (h, w) = self.config.input_resolution;
        let out = self.forward_image(image, genotype)?;
        let mask = mask_from_logit_rows(&out.value(), h, w);
        Ok(mask)
    }
}

/// Argmax over classes per pixel row; a single-channel row is treated as
/// a binary logit thresholded at zero.
pub fn mask_from_logit_rows<T: Scalar>(rows: &Tensor<T>, h: usize, w: usize) -> crate::metrics::Mask {
    let classes = rows.shape()[1];
    let labels = rows
        .data()
        .chunks(classes)
        .map(|row| {
            if classes == 1 {
                u8::from(row[0] > T::zero())
            } else {
                let mut best = 0usize;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best as u8
            }
        })
        .collect();
    crate::metrics::Mask::new(h, w, labels)
}

/// [C, H, W] -> [H*W, C].
pub fn chw_to_rows<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Tensor::zeros(&[h * w, c]);
    for ch in 0..c {
        for p in 0..h * w {
            out.data_mut()[p * c + ch] = t.data()[ch * h * w + p];
        }
    }
    out
}

/// [H*W, C] -> [C, H, W].
pub fn rows_to_chw<T: Scalar>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let c = t.shape()[1];
    assert_eq!(t.shape()[0], h * w, "rows_to_chw row count");
    let mut out = Tensor::zeros(&[c, h, w]);
    for p in 0..h * w {
        for ch in 0..c {
            out.data_mut()[ch * h * w + p] = t.data()[p * c + ch];
        }
    }
    out
}
