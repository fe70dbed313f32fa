//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `--nocapture` to see them). Every tolerance is pinned here.

mod common;

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slicescan::data::SynthSpec;
use slicescan::metrics::{confusion, segmentation_metrics, Mask};
use slicescan::nas::{
    evaluate_genotype, evolve, exhaustive_search, supernet_split, train_supernet,
    EvolutionConfig, SearchSpace,
};
use slicescan::net::{Model, ModelConfig, SLICE_CANDIDATES};
use slicescan::scalar::Scalar;
use slicescan::scan::{apply_scan, build_slice_plan, restore_merge, ScanDirection, SliceConfig};
use slicescan::ssm::{ssm_conv_apply, ssm_conv_kernel, ssm_recurrence, zoh_discretize};
use slicescan::tensor::Tensor;
use slicescan::train::{fit, grad_check};

fn pass(number: usize, name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "criterion {number} took {elapsed:?}, budget {budget:?}"
    );
    println!("ACCEPTANCE {number} ({name}): PASS in {elapsed:?}");
}

#[test]
fn criterion_01_scan_roundtrip() {
    let start = Instant::now();
    for h in [4usize, 8, 16] {
        for w in [4usize, 8, 16] {
            for cfg in SLICE_CANDIDATES {
                if h % cfg.m != 0 || w % cfg.n != 0 {
                    continue;
                }
                let plan = build_slice_plan(h, w, cfg).unwrap();
                let map = Tensor::from_vec(
                    &[3, h, w],
                    (0..3 * h * w).map(|i| i as f32 * 0.25 - 7.0).collect(),
                );
                let seqs: Vec<Tensor<f32>> = ScanDirection::ALL
                    .iter()
                    .map(|&d| apply_scan(&map, &plan, d).unwrap())
                    .collect();
                let merged = restore_merge(&seqs[0], &seqs[1], &seqs[2], &seqs[3], &plan).unwrap();
                assert_eq!(merged, map.scale(4.0), "{h}x{w} {cfg}");
            }
        }
    }
    pass(1, "scan roundtrip is exactly 4x", start, Duration::from_secs(1));
}

#[test]
fn criterion_02_ss2d_degeneracy() {
    let start = Instant::now();
    for h in [4usize, 8, 16] {
        for w in [4usize, 8, 16] {
            let plan = build_slice_plan(h, w, SliceConfig::new(h, w)).unwrap();
            let row_major: Vec<usize> = (0..h * w).collect();
            let col_major: Vec<usize> = (0..w)
                .flat_map(|c| (0..h).map(move |r| r * w + c))
                .collect();
            let rev = |v: &[usize]| v.iter().rev().copied().collect::<Vec<usize>>();
            assert_eq!(*plan.perm_h_fwd, col_major);
            assert_eq!(*plan.perm_h_bwd, rev(&col_major));
            assert_eq!(*plan.perm_v_fwd, row_major);
            assert_eq!(*plan.perm_v_bwd, rev(&row_major));
        }
    }
    pass(2, "full-map slices are the cross-scan", start, Duration::from_secs(1));
}

#[test]
fn criterion_03_locality_bound() {
    let start = Instant::now();
    for h in 1..=16usize {
        for w in 1..=16usize {
            for m in (1..=h).filter(|m| h % m == 0) {
                for n in (1..=w).filter(|n| w % n == 0) {
                    let plan = build_slice_plan(h, w, SliceConfig::new(m, n)).unwrap();
                    for r in 0..h {
                        for c in 0..w {
                            if c + 1 < w {
                                let d = plan.inv_h_fwd[r * w + c]
                                    .abs_diff(plan.inv_h_fwd[r * w + c + 1]);
                                assert!(d <= m, "{h}x{w} m={m}: h-pair {d} apart");
                            }
                            if r + 1 < h {
                                let d = plan.inv_v_fwd[r * w + c]
                                    .abs_diff(plan.inv_v_fwd[(r + 1) * w + c]);
                                assert!(d <= n, "{h}x{w} n={n}: v-pair {d} apart");
                            }
                        }
                    }
                }
            }
        }
    }
    pass(3, "neighbor distance bound", start, Duration::from_secs(5));
}

/// Simpson-rule oracle for the exact ZOH input matrix.
fn quadrature_b_bar(a: f64, b: f64, delta: f64) -> f64 {
    let steps = 4096;
    let h = delta / steps as f64;
    let f = |tau: f64| (a * tau).exp();
    let mut acc = f(0.0) + f(delta);
    for i in 1..steps {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0 * b
}

#[test]
fn criterion_04_discretization_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..1000 {
        // every fifth draw exercises the series fallback |delta * a| < 1e-6
        let a = if trial % 5 == 0 {
            -(10f64).powf(rng.gen_range(-12.0..-7.0))
        } else {
            -rng.gen_range(1e-3f64..5.0)
        };
        let b = rng.gen_range(-3.0f64..3.0);
        let delta = rng.gen_range(1e-3f64..2.0);
        let (a_bar, b_bar) = zoh_discretize(&[a], &[b], delta).unwrap();
        assert!(
            (a_bar[0] - (delta * a).exp()).abs() <= 1e-6,
            "A_bar off at a={a} delta={delta}"
        );
        assert!(
            (b_bar[0] - quadrature_b_bar(a, b, delta)).abs() <= 1e-5,
            "B_bar off at a={a} b={b} delta={delta}"
        );
    }
    pass(4, "ZOH matches exp and quadrature", start, Duration::from_secs(1));
}

fn conv_equivalence_trials<T: Scalar>(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let state = rng.gen_range(1..=8usize);
        let len = rng.gen_range(1..=64usize);
        let a: Vec<T> = (0..state)
            .map(|_| T::of_f64(-rng.gen_range(0.05f64..3.0)))
            .collect();
        let b: Vec<T> = (0..state)
            .map(|_| T::of_f64(rng.gen_range(-1.0f64..1.0)))
            .collect();
        let c: Vec<T> = (0..state)
            .map(|_| T::of_f64(rng.gen_range(-1.0f64..1.0)))
            .collect();
        let delta = T::of_f64(rng.gen_range(0.05f64..1.5));
        let x: Vec<T> = (0..len)
            .map(|_| T::of_f64(rng.gen_range(-2.0f64..2.0)))
            .collect();
        let (a_bar, b_bar) = zoh_discretize(&a, &b, delta).unwrap();
        let rep = |v: &[T]| {
            Tensor::from_vec(&[len, state], (0..len).flat_map(|_| v.to_vec()).collect())
        };
        let y_rec = ssm_recurrence(&rep(&a_bar), &rep(&b_bar), &rep(&c), &x, T::zero()).unwrap();
        let kernel = ssm_conv_kernel(&a_bar, &b_bar, &c, len).unwrap();
        let y_conv = ssm_conv_apply(&kernel, &x).unwrap();
        let max_y = y_rec
            .iter()
            .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
            .max(1e-30);
        for (r, v) in y_rec.iter().zip(&y_conv) {
            assert!(
                (r.as_f64() - v.as_f64()).abs() <= 1e-5 * max_y,
                "recurrence vs convolution disagree"
            );
        }
    }
}

#[test]
fn criterion_05_recurrence_convolution_equivalence() {
    let start = Instant::now();
    conv_equivalence_trials::<f32>(5);
    conv_equivalence_trials::<f64>(55);
    pass(5, "recurrence equals global convolution", start, Duration::from_secs(5));
}

#[test]
fn criterion_06_gradient_check() {
    let start = Instant::now();
    let config = ModelConfig::tiny_gradcheck();
    let params = Model::<f64>::init(config.clone(), 0).unwrap().param_count();
    assert!(params <= 5000, "gradient-check model has {params} parameters");
    let samples = 250;
    let err = grad_check(config, 1e-3, samples, 0).unwrap();
    assert!(
        err <= 1e-3,
        "max relative gradient error {err:.3e} over {samples} coordinates"
    );
    pass(6, "finite-difference gradient check", start, Duration::from_secs(120));
}

#[test]
fn criterion_07_desk_overfit() {
    let start = Instant::now();
    let spec = SynthSpec {
        count: 8,
        resolution: (64, 64),
        num_classes: 2,
        anisotropy: 0.0,
        noise_level: 0.3,
        seed: 42,
    };
    let (_, samples) = common::synth_samples(&spec, "acceptance_overfit", None);
    assert_eq!(samples.len(), 8);
    let tc = slicescan::train::TrainConfig::desk();
    assert!(tc.epochs <= 300);
    let (_, history) = fit(ModelConfig::desk(), &tc, &samples).unwrap();
    let dsc = history.final_dsc();
    assert!(dsc >= 0.95, "train DSC {dsc:.4} after {} epochs", tc.epochs);
    pass(7, "desk overfit reaches DSC 0.95", start, Duration::from_secs(600));
}

#[test]
fn criterion_08_search_matches_exhaustive_oracle() {
    let start = Instant::now();
    let mut successes = 0;
    let seeds: Vec<u64> = (0..10).collect();
    for &seed in &seeds {
        let spec = common::rigged_spec(1000 + seed);
        let (_, samples) = common::synth_samples(
            &spec,
            &format!("acceptance_nas_{seed}"),
            Some(slicescan::data::Split::Train),
        );
        let (train_split, search_split) = supernet_split(&samples, seed).unwrap();
        let mut config = common::two_block_config();
        config.d_skip = false;
        let mut tc = common::quick_train_config(20, seed);
        tc.seed = seed;
        let (model, _, _) = train_supernet(config, &tc, &train_split).unwrap();
        let space = SearchSpace::for_model(&model.config).unwrap();
        assert_eq!(space.cardinality(), Some(16));
        let ranked =
            exhaustive_search(|g| evaluate_genotype(&model, g, &search_split), &space).unwrap();
        let best_exhaustive = ranked[0].1;
        let evo = EvolutionConfig {
            population_size: 16,
            parents_kept: 4,
            iterations: 10,
            mutation_probability: 0.1,
            seed,
        };
        let (_, best_evolve, log) = evolve(
            |g| evaluate_genotype(&model, g, &search_split),
            &space,
            &evo,
        )
        .unwrap();
        // the evolution log obeys monotonicity and the budget in every seed
        for pair in log.best_per_iteration().windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        assert!(log.entries.len() <= evo.eval_budget());
        if (best_exhaustive - best_evolve).abs() <= 0.02 {
            successes += 1;
        }
    }
    assert!(successes >= 8, "evolve matched the oracle in {successes}/10 seeds");
    println!("ACCEPTANCE 8 detail: evolve within 0.02 of exhaustive in {successes}/10 seeds");
    pass(8, "evolutionary search matches oracle", start, Duration::from_secs(1200));
}

#[test]
fn criterion_09_evolution_budget_and_monotonicity() {
    let start = Instant::now();
    // synthetic fitness oracle: additive per-gene score
    let score = |g: &slicescan::scan::SliceGenotype| -> slicescan::Result<f64> {
        Ok(g.choices
            .iter()
            .enumerate()
            .map(|(i, c)| (8 - c.m - c.n) as f64 * 0.01 * (i + 1) as f64)
            .sum())
    };
    let space = SearchSpace::uniform(4);
    let evo = EvolutionConfig::default(); // population 50, top 10, 20 iterations
    let (_, _, log) = evolve(score, &space, &evo).unwrap();
    let best = log.best_per_iteration();
    for pair in best.windows(2) {
        assert!(pair[1] >= pair[0], "best-ever DSC decreased");
    }
    let requests = evo.population_size + evo.iterations * (evo.population_size - evo.parents_kept);
    assert_eq!(log.entries.len() + log.cache_hits, requests);
    assert!(log.entries.len() <= evo.eval_budget());
    let unique: std::collections::BTreeSet<_> =
        log.entries.iter().map(|e| e.genotype.clone()).collect();
    assert_eq!(unique.len(), log.entries.len(), "a genotype was re-evaluated");
    pass(9, "evolution budget and monotonicity", start, Duration::from_secs(1));
}

#[test]
fn criterion_10_metrics_oracle() {
    let start = Instant::now();
    // hand-derived confusion example
    let pred = Mask::new(2, 2, vec![1, 1, 0, 0]);
    let gt = Mask::new(2, 2, vec![1, 0, 0, 0]);
    let r = segmentation_metrics(&pred, &gt, 2).unwrap();
    assert!((r.dsc - 2.0 / 3.0).abs() <= 1e-9);
    assert!((r.miou - 0.5).abs() <= 1e-9);
    assert!((r.acc - 0.75).abs() <= 1e-9);
    assert!((r.sen - 1.0).abs() <= 1e-9);
    assert!((r.spe - 2.0 / 3.0).abs() <= 1e-9);

    // Dice-IoU identity over 1000 random masks
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let p: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
        let g: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
        let c = confusion(&Mask::new(8, 8, p), &Mask::new(8, 8, g), 1);
        let (dsc, iou) = (c.dsc(), c.iou());
        assert!((dsc - 2.0 * iou / (1.0 + iou)).abs() <= 1e-12);
    }

    // shifted 5x5 square
    let square = |c0: usize| -> Mask {
        let mut labels = vec![0u8; 256];
        for r in 4..9 {
            for c in c0..c0 + 5 {
                labels[r * 16 + c] = 1;
            }
        }
        Mask::new(16, 16, labels)
    };
    let r = segmentation_metrics(&square(5), &square(4), 2).unwrap();
    assert_eq!(r.hd95, 1.0, "shifted square HD95");
    pass(10, "metrics oracle", start, Duration::from_secs(5));
}

#[test]
fn criterion_11_train_determinism() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_slicescan");
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let run = |args: &[&str]| {
        let output = Command::new(bin)
            .args(args)
            .current_dir(&dir)
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    run(&[
        "gen-data",
        "--out",
        "data",
        "--seed",
        "7",
        "--set",
        "synth.count=6",
        "--set",
        "synth.resolution=[32,32]",
    ]);
    let train_args = |out: &str| {
        vec![
            "train".to_string(),
            "--manifest".into(),
            "data/manifest.json".into(),
            "--out".into(),
            out.into(),
            "--seed".into(),
            "7".into(),
            "--deterministic".into(),
            "--set".into(),
            "model.base_width=8".into(),
            "--set".into(),
            "model.state_dim=4".into(),
            "--set".into(),
            "model.encoder_depths=[1,0]".into(),
            "--set".into(),
            "model.decoder_depths=[0,1]".into(),
            "--set".into(),
            "model.input_resolution=[32,32]".into(),
            "--set".into(),
            "train.epochs=10".into(),
            "--set".into(),
            "train.t_max=10".into(),
        ]
    };
    for out in ["run1", "run2"] {
        let args = train_args(out);
        let args_ref: Vec<&str> = args.iter().map(String::as_str).collect();
        run(&args_ref);
    }
    for file in ["model.ckpt", "history.csv", "config.json"] {
        let a = std::fs::read(dir.join("run1").join(file)).unwrap();
        let b = std::fs::read(dir.join("run2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    pass(11, "byte-identical training runs", start, Duration::from_secs(1200));
}

/// Supplementary: every acceptance-relevant artifact format stays loadable.
#[test]
fn checkpoint_embeds_canonical_config() {
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_ckpt");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let model = Model::<f32>::init(common::two_block_config(), 3).unwrap();
    let path = dir.join("m.ckpt");
    slicescan::checkpoint::save_model(&path, &model).unwrap();
    let loaded = slicescan::checkpoint::load_model::<f32>(&path).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.config.genotype.len(), 2);
}

/// Supplementary: Arc import kept exercised (row orderings shared).
#[test]
fn plans_share_permutations() {
    let plan = slicescan::scan::cached_plan(8, 8, SliceConfig::new(2, 2)).unwrap();
    let p: Arc<Vec<usize>> = Arc::clone(plan.perm(ScanDirection::HFwd));
    assert_eq!(p.len(), 64);
}
