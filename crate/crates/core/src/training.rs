//! Label collection with the exact separator, dataset files, and imitation
//! training of the policy network.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{cutting_plane, Limits, SeparationInput, Separator};
use crate::error::{Error, Result};
use crate::gnn::{predict_on_tape, FeaturedGraph, GnnParams};
use crate::graph::{WeightedGraph, DEPOT};
use crate::instances::{ceil_div, CvrpInstance};
use crate::neuralsep::{assign_and_lift, gamma_coarsen, CoarseGraph, DEFAULT_GAMMA, MAX_COARSENING_ROUNDS, MIN_VERTICES};
use crate::nn::{Adam, AdamConfig, CosineWarmRestarts, Tape};
use crate::scalar::Scalar;
use crate::sep_exact::{exact_separate, ExactConfig, SeparationProblem};

/// Exact optimum of one separation problem on a recorded support graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub instance: String,
    /// Cutting-plane iteration the support graph was recorded at.
    pub iteration: usize,
    /// Augmented support graph with x̄ weights and vertex demands.
    pub graph: WeightedGraph<f64>,
    pub capacity: u32,
    pub vehicles: u32,
    pub m: u32,
    /// ŷ_i per vertex; the depot is 0.
    pub labels: Vec<u8>,
    pub z: f64,
    pub violated: bool,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_vertices();
        if self.labels.len() != n {
            return Err(Error::Shape { expected: vec![n], got: vec![self.labels.len()] });
        }
        if self.labels[DEPOT] != 0 {
            return Err(Error::Validation("depot label must be 0".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Validation("labels must be 0 or 1".into()));
        }
        let demand: u64 = self
            .labels
            .iter()
            .zip(self.graph.demands())
            .map(|(&y, &d)| y as u64 * d)
            .sum();
        if demand < self.m as u64 * self.capacity as u64 + 1 {
            return Err(Error::Validation(format!(
                "labeled demand {demand} is below M·Q + 1 = {}",
                self.m as u64 * self.capacity as u64 + 1
            )));
        }
        Ok(())
    }

    /// Customers labeled 1.
    pub fn selected(&self) -> Vec<usize> {
        (1..self.labels.len()).filter(|&i| self.labels[i] == 1).collect()
    }
}

/// Samples grouped by `M` on demand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `D_M` for every `M` present.
    pub fn groups(&self) -> BTreeMap<u32, Vec<&LabeledSample>> {
        let mut out: BTreeMap<u32, Vec<&LabeledSample>> = BTreeMap::new();
        for s in &self.samples {
            out.entry(s.m).or_default().push(s);
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LabelConfig {
    /// Cutting-plane rounds per instance; `None` uses the size default.
    pub max_iter: Option<usize>,
    pub exact: ExactConfig,
    pub keep_non_violated: bool,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { max_iter: None, exact: ExactConfig::default(), keep_non_violated: true }
    }
}

/// One sample per `M` on an augmented support graph. A timed-out `M` is
/// skipped with a warning.
pub fn samples_from_support(
    instance: &str,
    iteration: usize,
    graph: &WeightedGraph<f64>,
    capacity: u32,
    vehicles: u32,
    config: &LabelConfig,
) -> Result<Vec<LabeledSample>> {
    let levels = ceil_div(graph.total_demand(), capacity as u64) as u32;
    let mut out = Vec::with_capacity(levels as usize);
    for m in 0..levels {
        let problem = SeparationProblem::new(graph, capacity, m)?;
        let r = match exact_separate(&problem, &config.exact) {
            Ok(r) => r,
            Err(Error::Timeout) => {
                log::warn!("{instance} iteration {iteration}: exact separation timed out for M = {m}, sample skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        if !r.violated && !config.keep_non_violated {
            continue;
        }
        out.push(LabeledSample {
            instance: instance.to_string(),
            iteration,
            graph: graph.clone(),
            capacity,
            vehicles,
            m,
            labels: r.labels,
            z: r.z,
            violated: r.violated,
        });
    }
    Ok(out)
}

/// Exact separator that keeps every optimum it computes as a sample.
struct LabelingSeparator<'c> {
    instance: String,
    iteration: usize,
    config: &'c LabelConfig,
    samples: Vec<LabeledSample>,
}

impl Separator<f64> for LabelingSeparator<'_> {
    fn name(&self) -> &str {
        "exact"
    }

    fn separate(&mut self, input: &SeparationInput<'_, f64>) -> Result<Vec<Vec<usize>>> {
        let found = samples_from_support(
            &self.instance,
            self.iteration,
            input.augmented,
            input.capacity,
            input.vehicles,
            self.config,
        )?;
        self.iteration += 1;
        let mut cuts: Vec<Vec<usize>> = Vec::new();
        for s in &found {
            let subset = s.selected();
            if s.violated && !cuts.contains(&subset) {
                cuts.push(subset);
            }
        }
        self.samples.extend(found);
        Ok(cuts)
    }
}

/// Runs the exact cutting-plane loop on every instance and keeps one sample
/// per `M` and iteration.
pub fn collect_labels(instances: &[CvrpInstance], config: &LabelConfig) -> Result<Dataset> {
    let mut samples = Vec::new();
    for inst in instances {
        let mut sep = LabelingSeparator { instance: inst.name.clone(), iteration: 0, config, samples: Vec::new() };
        let mut limits = Limits::for_instance(inst);
        if let Some(m) = config.max_iter {
            limits.max_iter = m;
        }
        let trace = cutting_plane::<f64>(inst, &mut sep, &limits)?;
        log::info!(
            "{}: {} samples, lb {:.2} after {} rounds",
            inst.name,
            sep.samples.len(),
            trace.final_lb,
            trace.iterations()
        );
        samples.extend(sep.samples);
    }
    Ok(Dataset { samples })
}

/// `ρ_M = Σ(1 − ŷ) / Σŷ` pooled over every vertex of every sample.
pub fn positive_weight(samples: &[&LabeledSample]) -> Result<f64> {
    let pos: usize = samples.iter().map(|s| s.labels.iter().filter(|&&y| y == 1).count()).sum();
    let total: usize = samples.iter().map(|s| s.labels.len()).sum();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    Ok((total - pos) as f64 / pos as f64)
}

/// A zero ratio (no negatives at all) is degenerate and replaced by 1.
pub fn effective_weight(rho: f64) -> f64 {
    if rho > 0.0 {
        rho
    } else {
        1.0
    }
}

/// Label-driven coarsening trajectory of one sample: level 0 first, then
/// one entry per round until at most three vertices remain, no edge can be
/// contracted, or the round cap is hit.
pub fn teacher_forced_levels<T: Scalar>(
    sample: &LabeledSample,
    gamma: f64,
    max_rounds: usize,
) -> Result<Vec<(CoarseGraph<T>, Vec<u8>)>> {
    let mut cg = CoarseGraph::identity(sample.graph.cast::<T>());
    let mut levels = vec![(cg.clone(), sample.labels.clone())];
    for _ in 0..max_rounds {
        if cg.num_vertices() <= MIN_VERTICES {
            break;
        }
        let labels = cg.carry_labels(&sample.labels);
        let p: Vec<T> = labels.iter().map(|&y| T::from_u8(y).unwrap()).collect();
        let next = gamma_coarsen(&cg, &p, gamma)?;
        if next.num_vertices() == cg.num_vertices() {
            break;
        }
        cg = next;
        levels.push((cg.clone(), cg.carry_labels(&sample.labels)));
    }
    Ok(levels)
}

/// Subset recovered by assigning carried labels on the coarsest
/// teacher-forced level and lifting.
pub fn teacher_forced_recovery(sample: &LabeledSample, gamma: f64) -> Result<Vec<usize>> {
    let levels = teacher_forced_levels::<f64>(sample, gamma, MAX_COARSENING_ROUNDS)?;
    let (cg, labels) = levels.last().expect("level 0 is always present");
    let p: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    Ok(assign_and_lift(cg, &p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub schedule: CosineWarmRestarts,
    pub adam: AdamConfig,
    pub drop_non_violated: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            gamma: DEFAULT_GAMMA,
            max_rounds: MAX_COARSENING_ROUNDS,
            seed: 0,
            schedule: CosineWarmRestarts::default(),
            adam: AdamConfig::default(),
            drop_non_violated: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput<T> {
    pub params: GnnParams<T>,
    /// Mean optimizer-step loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
}

struct Prepared<'d> {
    sample: &'d LabeledSample,
    rho: f64,
    weight: f64,
}

/// Imitation training. Each batch is coarsened level by level with label
/// driven contraction probabilities; every level contributes one Adam step
/// on `Σ_M w_M · mean_{batch ∩ D_M} BCE_ρM`, `w_M = |D_M| / Σ|D_m|`.
pub fn train<T: Scalar>(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput<T>> {
    let groups = dataset.groups();
    let mut kept: BTreeMap<u32, (f64, Vec<&LabeledSample>)> = BTreeMap::new();
    for (m, samples) in groups {
        let samples: Vec<&LabeledSample> = samples
            .into_iter()
            .filter(|s| s.violated || !config.drop_non_violated)
            .collect();
        if samples.is_empty() {
            continue;
        }
        match positive_weight(&samples) {
            Ok(rho) => {
                kept.insert(m, (effective_weight(rho), samples));
            }
            Err(Error::NoPositives) => log::warn!("D_{m} has no positive labels and is dropped"),
            Err(e) => return Err(e),
        }
    }
    let total: usize = kept.values().map(|(_, s)| s.len()).sum();
    if total == 0 {
        return Err(Error::Validation("training needs a nonempty dataset".into()));
    }
    let mut prepared = Vec::with_capacity(total);
    for (rho, samples) in kept.values() {
        let weight = samples.len() as f64 / total as f64;
        for &s in samples {
            s.validate()?;
            prepared.push(Prepared { sample: s, rho: *rho, weight });
        }
    }

    let mut params = GnnParams::<T>::init(config.seed);
    let mut adam = Adam::new(&params.store, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let first_step = step_losses.len();
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut active: Vec<(&Prepared, CoarseGraph<T>, Vec<u8>)> = batch
                .iter()
                .map(|&i| {
                    let p = &prepared[i];
                    (p, CoarseGraph::identity(p.sample.graph.cast::<T>()), p.sample.labels.clone())
                })
                .collect();
            let mut rounds = 0;
            while !active.is_empty() {
                let mut per_m: BTreeMap<u32, usize> = BTreeMap::new();
                for (p, _, _) in &active {
                    *per_m.entry(p.sample.m).or_default() += 1;
                }
                let mut grads = params.store.zero_grads();
                let mut loss = 0.0;
                for (p, cg, labels) in &active {
                    let s = p.sample;
                    let coef = p.weight / per_m[&s.m] as f64;
                    let fg = FeaturedGraph::new(cg.graph.clone(), s.capacity, s.vehicles, s.m)?;
                    let mut tape = Tape::new(&params.store);
                    let out = predict_on_tape(&mut tape, &params, &fg)?;
                    let y: Vec<T> = labels.iter().map(|&v| T::from_u8(v).unwrap()).collect();
                    let l = tape.bce(out, y, T::lit(p.rho))?;
                    loss += coef * tape.value(l)[0].as_f64();
                    tape.backward_into(l, T::lit(coef), &mut grads)?;
                }
                let lr = config.schedule.lr(adam.step);
                adam.update(&mut params.store, &grads, lr);
                step_losses.push(loss);

                rounds += 1;
                let mut next = Vec::with_capacity(active.len());
                for (p, cg, _) in active {
                    if cg.num_vertices() <= MIN_VERTICES || rounds > config.max_rounds {
                        continue;
                    }
                    let carried = cg.carry_labels(&p.sample.labels);
                    let q: Vec<T> = carried.iter().map(|&v| T::from_u8(v).unwrap()).collect();
                    let coarse = gamma_coarsen(&cg, &q, config.gamma)?;
                    if coarse.num_vertices() < cg.num_vertices() {
                        let labels = coarse.carry_labels(&p.sample.labels);
                        next.push((p, coarse, labels));
                    }
                }
                active = next;
            }
        }
        let steps = &step_losses[first_step..];
        let mean = steps.iter().sum::<f64>() / steps.len().max(1) as f64;
        log::info!("epoch {epoch}: mean loss {mean:.5} over {} steps", steps.len());
        epoch_losses.push(mean);
    }
    Ok(TrainOutput { params, epoch_losses, step_losses })
}

pub const DATASET_FORMAT: &str = "rcisep-labels";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Header line, then one JSON sample per line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let header = Header { format: DATASET_FORMAT.into(), version: DATASET_VERSION };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for s in &dataset.samples {
        writeln!(out, "{}", serde_json::to_string(s)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_dataset`]. An empty input is an empty dataset.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let h: Header = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad header: {e}") })?;
            if h.format != DATASET_FORMAT || h.version != DATASET_VERSION {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unsupported dataset {} v{}", h.format, h.version),
                });
            }
            header_seen = true;
            continue;
        }
        let s: LabeledSample =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        s.validate().map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        samples.push(s);
    }
    Ok(Dataset { samples })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(f))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_dataset(BufReader::new(f))
}
