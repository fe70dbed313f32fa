//! Adaptive slice search: one-shot supernet training with uniform
//! per-step genotype sampling, forward-only genotype evaluation by
//! weight inheritance (a genotype changes only scan orderings, never
//! parameter shapes), evolutionary search over genotypes, and an
//! exhaustive-enumeration oracle for small spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::data::{derive_seed, salts};
use crate::error::{err, Result};
use crate::net::{Model, ModelConfig, SLICE_CANDIDATES};
use crate::scalar::Scalar;
use crate::scan::{SliceConfig, SliceGenotype};
use crate::train::{fit_with_sampler, Sample, TrainConfig, TrainHistory};

/// Per-block candidate lists. Blocks at coarse stages may admit fewer
/// slice shapes than the canonical candidate set when the feature map is
/// smaller than a slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    pub per_block: Vec<Vec<SliceConfig>>,
}

impl SearchSpace {
    /// The full candidate set for every one of `k` blocks.
    pub fn uniform(k: usize) -> Self {
        SearchSpace {
            per_block: vec![SLICE_CANDIDATES.to_vec(); k],
        }
    }

    /// Candidates restricted to the shapes each block's stage resolution
    /// divides evenly.
    pub fn for_model(config: &ModelConfig) -> Result<Self> {
        let per_block = config
            .block_stages()
            .iter()
            .enumerate()
            .map(|(b, &stage)| {
                let (h, w) = config.stage_resolution(stage);
                let options: Vec<SliceConfig> = SLICE_CANDIDATES
                    .iter()
                    .copied()
                    .filter(|c| h % c.m == 0 && w % c.n == 0)
                    .collect();
                if options.is_empty() {
                    Err(err!(
                        Search,
                        "block {b} at stage {stage} ({h}x{w}) admits no slice candidate"
                    ))
                } else {
                    Ok(options)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SearchSpace { per_block })
    }

    pub fn len(&self) -> usize {
        self.per_block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_block.is_empty()
    }

    /// Total number of genotypes, None on overflow.
    pub fn cardinality(&self) -> Option<usize> {
        self.per_block
            .iter()
            .try_fold(1usize, |acc, opts| acc.checked_mul(opts.len()))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SliceGenotype {
        SliceGenotype::new(
            self.per_block
                .iter()
                .map(|opts| opts[rng.gen_range(0..opts.len())])
                .collect(),
        )
    }

    /// Every genotype in lexicographic candidate order.
    pub fn enumerate(&self) -> Vec<SliceGenotype> {
        let mut out = vec![SliceGenotype::default()];
        for opts in &self.per_block {
            let mut next = Vec::with_capacity(out.len() * opts.len());
            for base in &out {
                for &opt in opts {
                    let mut choices = base.choices.clone();
                    choices.push(opt);
                    next.push(SliceGenotype::new(choices));
                }
            }
            out = next;
        }
        out
    }
}

/// Uniform genotype draw over the full candidate set.
pub fn sample_genotype<R: Rng>(rng: &mut R, k: usize) -> SliceGenotype {
    SearchSpace::uniform(k).sample(rng)
}

fn default_mutation() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub parents_kept: usize,
    pub iterations: usize,
    #[serde(default = "default_mutation")]
    pub mutation_probability: f64,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 50,
            parents_kept: 10,
            iterations: 20,
            mutation_probability: 0.1,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(err!(Search, "population_size must be >= 1"));
        }
        if self.parents_kept == 0 || self.parents_kept > self.population_size {
            return Err(err!(
                Search,
                "parents_kept must be in 1..=population_size, got {}",
                self.parents_kept
            ));
        }
        if self.iterations == 0 {
            return Err(err!(Search, "iterations must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(err!(Search, "mutation_probability must be in [0, 1]"));
        }
        Ok(())
    }

    /// Worst-case number of evaluator calls.
    pub fn eval_budget(&self) -> usize {
        self.population_size + self.iterations * (self.population_size - self.parents_kept)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchLogEntry {
    pub iteration: usize,
    pub genotype: SliceGenotype,
    pub dsc: f64,
}

/// Every evaluated genotype (deduplicated) plus cache accounting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchLog {
    pub entries: Vec<SearchLogEntry>,
    pub cache_hits: usize,
}

impl SearchLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,genotype,dsc\n");
        for e in &self.entries {
            out.push_str(&format!("{},\"{}\",{:.6}\n", e.iteration, e.genotype, e.dsc));
        }
        out
    }

    /// Best DSC seen up to and including each iteration.
    pub fn best_per_iteration(&self) -> Vec<f64> {
        let max_iter = self.entries.iter().map(|e| e.iteration).max().unwrap_or(0);
        let mut best = f64::NEG_INFINITY;
        (0..=max_iter)
            .map(|it| {
                for e in self.entries.iter().filter(|e| e.iteration == it) {
                    best = best.max(e.dsc);
                }
                best
            })
            .collect()
    }
}

/// Deterministic 80/20 train/search split of the training samples by
/// seeded shuffle; both the supernet trainer and the search phase derive
/// the identical split from (data order, seed).
pub fn supernet_split<T: Scalar>(
    data: &[Sample<T>],
    seed: u64,
) -> Result<(Vec<Sample<T>>, Vec<Sample<T>>)> {
    if data.len() < 2 {
        return Err(err!(Data, "supernet split needs at least 2 samples"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, salts::SPLIT));
    order.shuffle(&mut rng);
    let train_count = ((data.len() as f64) * 0.8)
        .round()
        .clamp(1.0, (data.len() - 1) as f64) as usize;
    let train = order[..train_count].iter().map(|&i| data[i].clone()).collect();
    let search = order[train_count..].iter().map(|&i| data[i].clone()).collect();
    Ok((train, search))
}

/// Supernet training over an explicit search space: every optimizer step
/// first samples one genotype and runs forward/backward with it. Returns
/// the per-step genotype log alongside the trained weights.
pub fn train_supernet_with_space<T: Scalar>(
    model_config: ModelConfig,
    train_config: &TrainConfig,
    train_split: &[Sample<T>],
    space: &SearchSpace,
) -> Result<(Model<T>, TrainHistory, Vec<SliceGenotype>)> {
    let config = model_config.normalized()?;
    if space.len() != config.total_blocks() {
        return Err(err!(
            Search,
            "search space covers {} blocks, model has {}",
            space.len(),
            config.total_blocks()
        ));
    }
    let geno_rng = RefCell::new(ChaCha8Rng::seed_from_u64(derive_seed(
        train_config.seed,
        salts::GENOTYPE,
    )));
    let sampled = RefCell::new(Vec::new());
    let (model, history) = fit_with_sampler(config, train_config, train_split, |_step| {
        let g = space.sample(&mut *geno_rng.borrow_mut());
        sampled.borrow_mut().push(g.clone());
        Some(g)
    })?;
    Ok((model, history, sampled.into_inner()))
}

/// Supernet training over the model's own restricted space.
pub fn train_supernet<T: Scalar>(
    model_config: ModelConfig,
    train_config: &TrainConfig,
    train_split: &[Sample<T>],
) -> Result<(Model<T>, TrainHistory, Vec<SliceGenotype>)> {
    let config = model_config.normalized()?;
    let space = SearchSpace::for_model(&config)?;
    train_supernet_with_space(config, train_config, train_split, &space)
}

/// Forward-only mean DSC of one genotype on the search split, inheriting
/// the supernet weights unchanged.
pub fn evaluate_genotype<T: Scalar>(
    model: &Model<T>,
    genotype: &SliceGenotype,
    search_split: &[Sample<T>],
) -> Result<f64> {
    if search_split.is_empty() {
        return Err(err!(Search, "genotype evaluation needs a non-empty search split"));
    }
    if genotype.len() != model.config.total_blocks() {
        return Err(err!(
            Search,
            "genotype has {} entries for {} blocks",
            genotype.len(),
            model.config.total_blocks()
        ));
    }
    let mut dsc = 0.0;
    for sample in search_split {
        let pred = model.predict_mask(&sample.image, Some(genotype))?;
        let report =
            crate::metrics::segmentation_metrics(&pred, &sample.mask, model.config.num_classes)?;
        dsc += report.dsc;
    }
    Ok(dsc / search_split.len() as f64)
}

struct CachedEvaluator<'a, F> {
    evaluator: F,
    cache: BTreeMap<SliceGenotype, f64>,
    log: &'a mut SearchLog,
}

impl<F: FnMut(&SliceGenotype) -> Result<f64>> CachedEvaluator<'_, F> {
    fn eval(&mut self, genotype: &SliceGenotype, iteration: usize) -> Result<f64> {
        if let Some(&dsc) = self.cache.get(genotype) {
            self.log.cache_hits += 1;
            return Ok(dsc);
        }
        let dsc = (self.evaluator)(genotype)?;
        self.cache.insert(genotype.clone(), dsc);
        self.log.entries.push(SearchLogEntry {
            iteration,
            genotype: genotype.clone(),
            dsc,
        });
        Ok(dsc)
    }

    /// Highest-DSC genotype; ties go to the lexicographically smallest.
    fn best(&self) -> Option<(SliceGenotype, f64)> {
        let mut best: Option<(&SliceGenotype, f64)> = None;
        for (g, &d) in &self.cache {
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((g, d));
            }
        }
        best.map(|(g, d)| (g.clone(), d))
    }

    /// Top `n` genotypes by DSC, ties lexicographic.
    fn parents(&self, n: usize) -> Vec<SliceGenotype> {
        let mut all: Vec<(&SliceGenotype, f64)> =
            self.cache.iter().map(|(g, &d)| (g, d)).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        all.into_iter().take(n).map(|(g, _)| g.clone()).collect()
    }
}

fn crossover<R: Rng>(a: &SliceGenotype, b: &SliceGenotype, rng: &mut R) -> SliceGenotype {
    SliceGenotype::new(
        a.choices
            .iter()
            .zip(&b.choices)
            .map(|(&ga, &gb)| if rng.gen::<bool>() { ga } else { gb })
            .collect(),
    )
}

fn mutate<R: Rng>(
    mut genotype: SliceGenotype,
    space: &SearchSpace,
    probability: f64,
    rng: &mut R,
) -> SliceGenotype {
    for (gene, opts) in genotype.choices.iter_mut().zip(&space.per_block) {
        if rng.gen_range(0.0..1.0) < probability {
            *gene = opts[rng.gen_range(0..opts.len())];
        }
    }
    genotype
}

/// Evolutionary search: iteration 0 samples the population uniformly;
/// each following iteration keeps the top `parents_kept` of everything
/// evaluated so far and refills by uniform crossover of two random
/// parents plus per-gene mutation. Duplicate genotypes are served from
/// the cache and never re-evaluated.
pub fn evolve(
    mut evaluator: impl FnMut(&SliceGenotype) -> Result<f64>,
    space: &SearchSpace,
    config: &EvolutionConfig,
) -> Result<(SliceGenotype, f64, SearchLog)> {
    config.validate()?;
    let mut log = SearchLog::default();
    let mut cached = CachedEvaluator {
        evaluator: &mut evaluator,
        cache: BTreeMap::new(),
        log: &mut log,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, salts::EVOLVE));
    let mut population: Vec<SliceGenotype> = (0..config.population_size)
        .map(|_| space.sample(&mut rng))
        .collect();
    for g in &population {
        cached.eval(g, 0)?;
    }
    for iteration in 1..=config.iterations {
        let parents = cached.parents(config.parents_kept);
        let mut next = parents.clone();
        while next.len() < config.population_size {
            let a = &parents[rng.gen_range(0..parents.len())];
            let b = &parents[rng.gen_range(0..parents.len())];
            let child = mutate(
                crossover(a, b, &mut rng),
                space,
                config.mutation_probability,
                &mut rng,
            );
            next.push(child);
        }
        for g in next.iter().skip(config.parents_kept) {
            cached.eval(g, iteration)?;
        }
        population = next;
    }
    let _ = population;
    let (best, dsc) = cached.best().expect("population is non-empty");
    Ok((best, dsc, log))
}

/// Evaluates every genotype in the space (at most 256) and returns them
/// ranked by DSC descending, ties broken lexicographically.
pub fn exhaustive_search(
    mut evaluator: impl FnMut(&SliceGenotype) -> Result<f64>,
    space: &SearchSpace,
) -> Result<Vec<(SliceGenotype, f64)>> {
    let size = space
        .cardinality()
        .ok_or_else(|| err!(Search, "search space size overflows"))?;
    if size > 256 {
        return Err(err!(
            Search,
            "exhaustive search over {size} genotypes exceeds the 256 limit"
        ));
    }
    let mut out: Vec<(SliceGenotype, f64)> = Vec::with_capacity(size);
    for genotype in space.enumerate() {
        let dsc = evaluator(&genotype)?;
        out.push((genotype, dsc));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
