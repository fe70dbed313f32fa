//! The training loop: augment, forward, loss, exact gradients, AdamW,
//! cosine schedule. Single-threaded with all randomness drawn from
//! named, seed-derived streams, so identical configs give bit-identical
//! runs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::data::augment::{apply_chw, apply_mask, sample_dihedral, DihedralOp};
use crate::data::{derive_seed, salts};
use crate::error::{err, Result};
use crate::metrics::{segmentation_metrics, Mask};
use crate::net::{chw_to_rows, Model, ModelConfig};
use crate::scalar::Scalar;
use crate::scan::SliceGenotype;
use crate::tensor::Tensor;
use crate::train::loss::{bce_dice_loss, ce_dice_loss, LossKind};
use crate::train::optim::{cosine_lr, AdamW};

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    /// Cosine period in epochs.
    pub t_max: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Recorded for reproducibility; execution is always single-threaded
    /// with a fixed reduction order, so this flag does not change results.
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default = "default_true")]
    pub augment: bool,
}

impl TrainConfig {
    /// Desk-scale settings: small batches so tiny datasets still take
    /// enough optimizer steps per epoch.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 2,
            initial_lr: 2e-3,
            min_lr: 1e-5,
            t_max: 150,
            weight_decay: 1e-2,
            seed: 0,
            loss: LossKind::BceDice,
            deterministic: true,
            augment: true,
        }
    }

    /// Full-scale settings: batch 32, 300 epochs, cosine period 50.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            initial_lr: 1e-3,
            min_lr: 1e-5,
            t_max: 50,
            weight_decay: 1e-2,
            seed: 0,
            loss: LossKind::BceDice,
            deterministic: true,
            augment: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > self.min_lr && self.min_lr > 0.0) {
            return Err(err!(
                Config,
                "need initial_lr > min_lr > 0, got {} and {}",
                self.initial_lr,
                self.min_lr
            ));
        }
        if self.batch_size == 0 {
            return Err(err!(Config, "batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(err!(Config, "epochs must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Sample<T: Scalar> {
    pub image: Tensor<T>,
    pub mask: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub dsc: f64,
    pub miou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss,dsc,miou\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6},{:.6}\n",
                e.epoch, e.lr, e.loss, e.dsc, e.miou
            ));
        }
        out
    }

    pub fn final_dsc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.dsc)
    }
}

fn loss_for<T: Scalar>(kind: LossKind, logits: &Var<T>, mask: &Mask) -> Result<Var<T>> {
    match kind {
        LossKind::BceDice => bce_dice_loss(logits, &mask.labels),
        LossKind::CeDice => ce_dice_loss(logits, &mask.labels),
    }
}

fn validate_dataset<T: Scalar>(config: &ModelConfig, data: &[Sample<T>]) -> Result<()> {
    if data.is_empty() {
        return Err(err!(Data, "dataset is empty"));
    }
    let (h, w) = config.input_resolution;
    for (i, s) in data.iter().enumerate() {
        s.image
            .expect_shape(&[config.input_channels, h, w], &format!("sample {i} image"))?;
        if s.mask.height != h || s.mask.width != w {
            return Err(err!(Data, "sample {i} mask is {}x{}", s.mask.height, s.mask.width));
        }
        if s.mask.max_label() as usize >= config.num_classes {
            return Err(err!(Data, "sample {i} mask exceeds class count"));
        }
    }
    Ok(())
}

/// Mean DSC and mIoU of the model over a clean (unaugmented) sample set.
pub fn evaluate_dsc_miou<T: Scalar>(
    model: &Model<T>,
    data: &[Sample<T>],
    genotype: Option<&SliceGenotype>,
) -> Result<(f64, f64)> {
    let mut dsc = 0.0;
    let mut miou = 0.0;
    for s in data {
        let pred = model.predict_mask(&s.image, genotype)?;
        let report = segmentation_metrics(&pred, &s.mask, model.config.num_classes)?;
        dsc += report.dsc;
        miou += report.miou;
    }
    let n = data.len() as f64;
    Ok((dsc / n, miou / n))
}

/// Standard training entry point.
pub fn fit<T: Scalar>(
    model_config: ModelConfig,
    train_config: &TrainConfig,
    data: &[Sample<T>],
) -> Result<(Model<T>, TrainHistory)> {
    fit_with_sampler(model_config, train_config, data, |_| None)
}

/// Training loop with a per-step genotype hook: the supernet trainer
/// samples a genotype before every optimization step, plain `fit` keeps
/// the config genotype. Per-epoch metrics are measured on the clean
/// training set with the config genotype.
pub fn fit_with_sampler<T: Scalar>(
    model_config: ModelConfig,
    train_config: &TrainConfig,
    data: &[Sample<T>],
    mut genotype_for_step: impl FnMut(usize) -> Option<SliceGenotype>,
) -> Result<(Model<T>, TrainHistory)> {
    train_config.validate()?;
    let model = Model::init(model_config, derive_seed(train_config.seed, salts::INIT))?;
    validate_dataset(&model.config, data)?;
    let mut opt = AdamW::new(model.named_params(), train_config.weight_decay);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(derive_seed(train_config.seed, salts::AUGMENT));
    let mut history = TrainHistory::default();
    let mut step = 0usize;
    for epoch in 0..train_config.epochs {
        let lr = cosine_lr(epoch, train_config.initial_lr, train_config.min_lr, train_config.t_max);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut aug_rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for batch in order.chunks(train_config.batch_size) {
            let genotype = genotype_for_step(step);
            model.zero_grads();
            let mut batch_loss: Option<Var<T>> = None;
            for &i in batch {
                let sample = &data[i];
                let op = if train_config.augment {
                    sample_dihedral(&mut aug_rng)
                } else {
                    DihedralOp::IDENTITY
                };
                let (image, mask) = if op == DihedralOp::IDENTITY {
                    (sample.image.clone(), sample.mask.clone())
                } else {
                    (apply_chw(&sample.image, op)?, apply_mask(&sample.mask, op)?)
                };
                let rows = Var::constant(chw_to_rows(&image));
                let logits = model.forward_rows(&rows, genotype.as_ref())?;
                let loss = loss_for(train_config.loss, &logits, &mask)?;
                batch_loss = Some(match batch_loss {
                    None => loss,
                    Some(acc) => acc.add(&loss),
                });
            }
            let loss = batch_loss
                .expect("non-empty batch")
                .scale(T::one() / T::of_f64(batch.len() as f64));
            let loss_value = loss.item().as_f64();
            if !loss_value.is_finite() {
                return Err(err!(
                    Training,
                    "non-finite loss {loss_value} at epoch {epoch} step {step}"
                ));
            }
            loss.backward();
            opt.step(model.named_params(), lr);
            epoch_loss += loss_value;
            batches += 1;
            step += 1;
        }
        let (dsc, miou) = evaluate_dsc_miou(&model, data, None)?;
        history.epochs.push(EpochStats {
            epoch,
            lr,
            loss: epoch_loss / batches as f64,
            dsc,
            miou,
        });
    }
    Ok((model, history))
}
