//! Command-line interface. Every subcommand shares the global flags
//! `--config`, `--set`, `--seed`, `--deterministic` and `--out`; errors
//! print a single machine-parsable line `ERROR:<category>:<message>` and
//! exit 1, usage problems exit 2.

use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_model, save_model};
use crate::config::AppConfig;
use crate::data::manifest::{load_samples, DatasetManifest, Split};
use crate::data::{ingest_folder, synth_generate};
use crate::error::{err, Result};
use crate::metrics::{segmentation_metrics_with, MetricsOptions, MetricsReport};
use crate::nas::{
    evaluate_genotype, evolve, exhaustive_search, supernet_split, train_supernet, SearchSpace,
};
use crate::net::{Model, ModelConfig};
use crate::scan::{adjacency_profile, build_slice_plan, ScanPlanSet, SliceConfig};
use crate::train::{fit, grad_check, Sample};

#[derive(Parser)]
#[command(
    name = "slicescan",
    version,
    about = "Slice-scan selective state-space segmentation"
)]
struct Cli {
    /// JSON configuration file; omitted fields fall back to desk defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. --set train.epochs=50
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override every seed in the config (train, synth, evolution).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Force deterministic execution (recorded in configs; execution is
    /// single-threaded and seeded either way).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus manifest into --out.
    GenData,
    /// Ingest image/mask folders (PPM/PGM) into a canonical dataset.
    Ingest {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Train fraction of the split.
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
    },
    /// Train on the manifest's train split; writes model.ckpt and
    /// history.csv into --out.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train a weight-sharing supernet with per-step genotype sampling
    /// on 80% of the train split.
    SupernetTrain {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evolutionary genotype search on the supernet's search split.
    Evolve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate every genotype (small spaces only) on the search split.
    Exhaustive {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Metrics of a checkpoint over the manifest's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Average background into mIoU instead of foreground-only.
        #[arg(long)]
        miou_include_background: bool,
    },
    /// Segment PPM images (a file or a directory) into PGM masks.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare analytic gradients against central finite differences on
    /// a small built-in model (or the configured model when --config is
    /// given).
    GradCheck {
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 250)]
        samples: usize,
        /// Fail (exit 1) when the worst relative error exceeds this.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Print the four scan orderings and the adjacency profile of one
    /// slice configuration.
    ScanDemo {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// Write a color-coded scan-order image (binary PPM).
        #[arg(long, value_name = "PATH")]
        emit_ppm: Option<PathBuf>,
    },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ERROR:{}:{}", e.category(), e);
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = AppConfig::load(
        cli.config.as_deref(),
        &cli.set,
        cli.seed,
        cli.deterministic,
    )?;
    let out = &cli.out;
    match cli.command {
        Command::GenData => gen_data(&config, out),
        Command::Ingest { images, masks, ratio } => ingest(&config, &images, &masks, ratio, out),
        Command::Train { manifest } => train(&config, &manifest, out),
        Command::SupernetTrain { manifest } => supernet(&config, &manifest, out),
        Command::Evolve { checkpoint, manifest } => run_evolve(&config, &checkpoint, &manifest, out),
        Command::Exhaustive { checkpoint, manifest } => {
            run_exhaustive(&config, &checkpoint, &manifest, out)
        }
        Command::Eval {
            checkpoint,
            manifest,
            miou_include_background,
        } => eval(&checkpoint, &manifest, miou_include_background),
        Command::Predict { checkpoint, input } => predict(&checkpoint, &input, out),
        Command::GradCheck {
            eps,
            samples,
            tolerance,
        } => run_grad_check(&config, cli.config.is_some(), eps, samples, tolerance),
        Command::ScanDemo {
            height,
            width,
            m,
            n,
            emit_ppm,
        } => scan_demo(height, width, m, n, emit_ppm.as_deref()),
    }
}

fn ensure_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn gen_data(config: &AppConfig, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let manifest = synth_generate(&config.synth, out)?;
    println!(
        "generated {} pairs ({} train / {} test) at {}x{} with seed {} -> {}",
        manifest.files.len(),
        manifest.files_in(Split::Train).count(),
        manifest.files_in(Split::Test).count(),
        manifest.resolution.0,
        manifest.resolution.1,
        manifest.seed,
        out.join("manifest.json").display()
    );
    Ok(())
}

fn ingest(config: &AppConfig, images: &Path, masks: &Path, ratio: f64, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let manifest = ingest_folder(
        images,
        masks,
        ratio,
        config.model.num_classes,
        config.model.input_resolution,
        config.synth.seed,
        out,
    )?;
    println!(
        "ingested {} pairs ({} train / {} test) -> {}",
        manifest.files.len(),
        manifest.files_in(Split::Train).count(),
        manifest.files_in(Split::Test).count(),
        out.join("manifest.json").display()
    );
    Ok(())
}

fn load_split(manifest_path: &Path, split: Split) -> Result<(DatasetManifest, Vec<Sample<f32>>)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let samples = load_samples::<f32>(&manifest, manifest_path, split)?;
    Ok((manifest, samples))
}

fn train(config: &AppConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let (_, samples) = load_split(manifest_path, Split::Train)?;
    println!(
        "training on {} samples, seed {} (streams: init, augment)",
        samples.len(),
        config.train.seed
    );
    let (model, history) = fit(config.model.clone(), &config.train, &samples)?;
    let ckpt = out.join("model.ckpt");
    save_model(&ckpt, &model)?;
    fs::write(out.join("history.csv"), history.to_csv())?;
    fs::write(out.join("config.json"), config.to_json_pretty())?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "done: epoch {} loss {:.6} dsc {:.4} miou {:.4} -> {}",
        last.epoch,
        last.loss,
        last.dsc,
        last.miou,
        ckpt.display()
    );
    Ok(())
}

fn supernet(config: &AppConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let (_, samples) = load_split(manifest_path, Split::Train)?;
    let (train_split, search_split) = supernet_split(&samples, config.train.seed)?;
    println!(
        "supernet: {} train / {} search samples, seed {} (streams: init, augment, genotype, split)",
        train_split.len(),
        search_split.len(),
        config.train.seed
    );
    let (model, history, sampled) =
        train_supernet(config.model.clone(), &config.train, &train_split)?;
    let ckpt = out.join("supernet.ckpt");
    save_model(&ckpt, &model)?;
    fs::write(out.join("history.csv"), history.to_csv())?;
    let mut geno_log = String::from("step,genotype\n");
    for (step, g) in sampled.iter().enumerate() {
        geno_log.push_str(&format!("{step},\"{g}\"\n"));
    }
    fs::write(out.join("sampled_genotypes.csv"), geno_log)?;
    fs::write(out.join("config.json"), config.to_json_pretty())?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "done: epoch {} loss {:.6} ({} sampled genotypes) -> {}",
        last.epoch,
        last.loss,
        sampled.len(),
        ckpt.display()
    );
    Ok(())
}

/// The evolve/exhaustive search split must match supernet training:
/// it is re-derived from the train split and the same seed.
fn search_samples(
    config: &AppConfig,
    manifest_path: &Path,
) -> Result<Vec<Sample<f32>>> {
    let (_, samples) = load_split(manifest_path, Split::Train)?;
    let (_, search_split) = supernet_split(&samples, config.train.seed)?;
    Ok(search_split)
}

fn run_evolve(
    config: &AppConfig,
    checkpoint: &Path,
    manifest_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let model = load_model::<f32>(checkpoint)?;
    let search_split = search_samples(config, manifest_path)?;
    let space = SearchSpace::for_model(&model.config)?;
    let (best, dsc, log) = evolve(
        |g| evaluate_genotype(&model, g, &search_split),
        &space,
        &config.evolution,
    )?;
    fs::write(out.join("search_log.csv"), log.to_csv())?;
    fs::write(out.join("best_genotype.txt"), format!("{best}\n"))?;
    println!(
        "best genotype {best} dsc {dsc:.4} ({} evaluations, {} cache hits) -> {}",
        log.entries.len(),
        log.cache_hits,
        out.join("best_genotype.txt").display()
    );
    Ok(())
}

fn run_exhaustive(
    config: &AppConfig,
    checkpoint: &Path,
    manifest_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    let model = load_model::<f32>(checkpoint)?;
    let search_split = search_samples(config, manifest_path)?;
    let space = SearchSpace::for_model(&model.config)?;
    let ranked = exhaustive_search(|g| evaluate_genotype(&model, g, &search_split), &space)?;
    let mut csv = String::from("rank,genotype,dsc\n");
    for (rank, (g, dsc)) in ranked.iter().enumerate() {
        csv.push_str(&format!("{rank},\"{g}\",{dsc:.6}\n"));
    }
    fs::write(out.join("exhaustive.csv"), &csv)?;
    let (best, dsc) = &ranked[0];
    println!(
        "exhaustive best {best} dsc {dsc:.4} over {} genotypes -> {}",
        ranked.len(),
        out.join("exhaustive.csv").display()
    );
    Ok(())
}

fn eval(checkpoint: &Path, manifest_path: &Path, include_background: bool) -> Result<()> {
    let model = load_model::<f32>(checkpoint)?;
    let (manifest, samples) = load_split(manifest_path, Split::Test)?;
    if samples.is_empty() {
        return Err(err!(Data, "manifest has no test split"));
    }
    let opts = MetricsOptions {
        miou_includes_background: include_background,
    };
    let mut sums = MetricsReport {
        miou: 0.0,
        dsc: 0.0,
        acc: 0.0,
        spe: 0.0,
        sen: 0.0,
        hd95: 0.0,
        per_class_dsc: vec![],
    };
    for sample in &samples {
        let pred = model.predict_mask(&sample.image, None)?;
        let r = segmentation_metrics_with(&pred, &sample.mask, manifest.num_classes, opts)?;
        sums.miou += r.miou;
        sums.dsc += r.dsc;
        sums.acc += r.acc;
        sums.spe += r.spe;
        sums.sen += r.sen;
        sums.hd95 += r.hd95;
    }
    let n = samples.len() as f64;
    let mean = MetricsReport {
        miou: sums.miou / n,
        dsc: sums.dsc / n,
        acc: sums.acc / n,
        spe: sums.spe / n,
        sen: sums.sen / n,
        hd95: sums.hd95 / n,
        per_class_dsc: vec![],
    };
    println!("{}", MetricsReport::csv_header());
    println!("{}", mean.csv_row());
    Ok(())
}

fn predict(checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let model = load_model::<f32>(checkpoint)?;
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map_or(false, |x| x == "ppm"))
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    if files.is_empty() {
        return Err(err!(Data, "no .ppm inputs under {}", input.display()));
    }
    for file in files {
        let (h, w, rgb) = crate::data::ppm::read_ppm(&file)?;
        let (rh, rw) = model.config.input_resolution;
        if (h, w) != (rh, rw) {
            return Err(err!(
                Data,
                "{}: image is {h}x{w}, model expects {rh}x{rw}",
                file.display()
            ));
        }
        let image = crate::data::ppm::rgb_to_tensor::<f32>(&rgb, h, w);
        let mask = model.predict_mask(&image, None)?;
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("prediction");
        let dest = out.join(format!("{stem}_pred.pgm"));
        crate::data::ppm::write_pgm(&dest, &mask.labels, h, w)?;
        println!("{} -> {}", file.display(), dest.display());
    }
    Ok(())
}

fn run_grad_check(
    config: &AppConfig,
    explicit_config: bool,
    eps: f64,
    samples: usize,
    tolerance: f64,
) -> Result<()> {
    let model_config = if explicit_config {
        config.model.clone()
    } else {
        ModelConfig::tiny_gradcheck()
    };
    let param_count = Model::<f64>::init(model_config.clone(), 0)?.param_count();
    let err = grad_check(model_config, eps, samples, config.train.seed)?;
    println!(
        "grad-check: max relative error {err:.3e} over {samples} coordinates \
         ({param_count} parameters, eps {eps:.1e})"
    );
    if err > tolerance {
        return Err(err!(
            Numeric,
            "gradient error {err:.3e} exceeds tolerance {tolerance:.1e}"
        ));
    }
    Ok(())
}

fn scan_demo(height: usize, width: usize, m: usize, n: usize, emit: Option<&Path>) -> Result<()> {
    let plan = build_slice_plan(height, width, SliceConfig::new(m, n))?;
    println!("plan {height}x{width} slice {m}x{n}");
    for (name, perm) in [
        ("h_fwd", &plan.perm_h_fwd),
        ("h_bwd", &plan.perm_h_bwd),
        ("v_fwd", &plan.perm_v_fwd),
        ("v_bwd", &plan.perm_v_bwd),
    ] {
        let list: Vec<String> = perm.iter().map(|v| v.to_string()).collect();
        println!("{name}: {}", list.join(" "));
    }
    let profile = adjacency_profile(&plan);
    println!(
        "adjacency: max_h_neighbor_dist={} max_v_neighbor_dist={}",
        profile.max_h_neighbor_dist, profile.max_v_neighbor_dist
    );
    for (name, hist) in [("hist_h", &profile.hist_h), ("hist_v", &profile.hist_v)] {
        let cells: Vec<String> = hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, c)| format!("{d}:{c}"))
            .collect();
        println!("{name}: {}", cells.join(" "));
    }
    if let Some(path) = emit {
        write_scan_ppm(&plan, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Four panels (h_fwd, h_bwd / v_fwd, v_bwd) with pixels colored by
/// normalized sequence position.
fn write_scan_ppm(plan: &ScanPlanSet, path: &Path) -> Result<()> {
    let (h, w) = (plan.height, plan.width);
    let (rows, cols) = (2 * h + 1, 2 * w + 1);
    let mut rgb = vec![255u8; rows * cols * 3];
    let color = |t: f64| -> [u8; 3] {
        [
            (255.0 * t).round() as u8,
            (255.0 * (std::f64::consts::PI * t).sin()).round() as u8,
            (255.0 * (1.0 - t)).round() as u8,
        ]
    };
    let panels = [
        (&plan.inv_h_fwd, 0, 0),
        (&plan.inv_h_bwd, 0, w + 1),
        (&plan.inv_v_fwd, h + 1, 0),
        (&plan.inv_v_bwd, h + 1, w + 1),
    ];
    let len = plan.seq_len().max(2);
    for (inv, r0, c0) in panels {
        for r in 0..h {
            for c in 0..w {
                let t = inv[r * w + c] as f64 / (len - 1) as f64;
                let px = color(t);
                let at = ((r0 + r) * cols + c0 + c) * 3;
                rgb[at..at + 3].copy_from_slice(&px);
            }
        }
    }
    crate::data::ppm::write_ppm(path, &rgb, rows, cols)
}
