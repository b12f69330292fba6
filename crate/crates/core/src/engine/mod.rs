//! Cutting-plane driver and the separator backends it drives.

mod report;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GnnParams;
use crate::graph::WeightedGraph;
use crate::instances::{ceil_div, CvrpInstance};
use crate::lp_relax::{build_relaxation, emit_rci, support_graph, VIOLATION_TOL};
use crate::neuralsep::{neural_separate, NeuralConfig};
use crate::scalar::Scalar;
use crate::sep_baseline::{connected_components_separate, greedy_separate_all};
use crate::sep_exact::{exact_separate, violation, ExactConfig, SeparationProblem};

pub use report::{
    compare_instances, gap, read_summary_csv, read_trace_csv, read_ub_file, separation_metrics,
    write_metrics_csv, write_summary_csv, write_trace_csv, SeparationMetrics, SummaryRow,
};

/// What a separator sees at one cutting-plane iteration.
#[derive(Clone, Copy, Debug)]
pub struct SeparationInput<'a, T> {
    /// Edges with x̄ above the support threshold.
    pub support: &'a WeightedGraph<T>,
    /// `support` plus zero-weight edges to every depot neighbor it lacks.
    pub augmented: &'a WeightedGraph<T>,
    pub capacity: u32,
    pub vehicles: u32,
}

/// A backend that proposes customer subsets whose RCIs are violated.
pub trait Separator<T: Scalar> {
    fn name(&self) -> &str;
    fn separate(&mut self, input: &SeparationInput<'_, T>) -> Result<Vec<Vec<usize>>>;
}

/// One exact problem per `M`; a timed-out `M` is skipped with a warning.
#[derive(Clone, Debug, Default)]
pub struct ExactSeparator {
    pub config: ExactConfig,
    pub timeouts: usize,
}

impl<T: Scalar> Separator<T> for ExactSeparator {
    fn name(&self) -> &str {
        "exact"
    }

    fn separate(&mut self, input: &SeparationInput<'_, T>) -> Result<Vec<Vec<usize>>> {
        let g = input.augmented;
        let levels = ceil_div(g.total_demand(), input.capacity as u64) as u32;
        let mut out: Vec<Vec<usize>> = Vec::new();
        for m in 0..levels {
            let problem = SeparationProblem::new(g, input.capacity, m)?;
            match exact_separate(&problem, &self.config) {
                Ok(r) => {
                    if r.violated && !out.contains(&r.subset) {
                        out.push(r.subset);
                    }
                }
                Err(Error::Timeout) => {
                    log::warn!("exact separation timed out for M = {m}");
                    self.timeouts += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComponentsSeparator;

impl<T: Scalar> Separator<T> for ComponentsSeparator {
    fn name(&self) -> &str {
        "components"
    }

    fn separate(&mut self, input: &SeparationInput<'_, T>) -> Result<Vec<Vec<usize>>> {
        Ok(connected_components_separate(input.support, input.capacity))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GreedySeparator;

impl<T: Scalar> Separator<T> for GreedySeparator {
    fn name(&self) -> &str {
        "greedy"
    }

    fn separate(&mut self, input: &SeparationInput<'_, T>) -> Result<Vec<Vec<usize>>> {
        Ok(greedy_separate_all(input.support, input.capacity))
    }
}

#[derive(Clone, Debug)]
pub struct NeuralSeparator<T> {
    pub params: Arc<GnnParams<T>>,
    pub config: NeuralConfig,
    /// Largest coarsening-round count seen so far.
    pub max_rounds: usize,
}

impl<T: Scalar> NeuralSeparator<T> {
    pub fn new(params: Arc<GnnParams<T>>) -> Self {
        NeuralSeparator { params, config: NeuralConfig::default(), max_rounds: 0 }
    }
}

impl<T: Scalar> Separator<T> for NeuralSeparator<T> {
    fn name(&self) -> &str {
        "neural"
    }

    fn separate(&mut self, input: &SeparationInput<'_, T>) -> Result<Vec<Vec<usize>>> {
        let run = neural_separate(&self.params, input.augmented, input.capacity, input.vehicles, &self.config)?;
        self.max_rounds = self.max_rounds.max(run.max_rounds());
        Ok(run.cuts)
    }
}

/// Backend selector usable across threads.
#[derive(Clone, Debug)]
pub enum SeparatorSpec {
    Exact(ExactConfig),
    Components,
    Greedy,
    Neural(Arc<GnnParams<f64>>),
}

impl SeparatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SeparatorSpec::Exact(_) => "exact",
            SeparatorSpec::Components => "components",
            SeparatorSpec::Greedy => "greedy",
            SeparatorSpec::Neural(_) => "neural",
        }
    }

    pub fn build(&self) -> Box<dyn Separator<f64> + Send> {
        match self {
            SeparatorSpec::Exact(c) => Box::new(ExactSeparator { config: *c, timeouts: 0 }),
            SeparatorSpec::Components => Box::new(ComponentsSeparator),
            SeparatorSpec::Greedy => Box::new(GreedySeparator),
            SeparatorSpec::Neural(p) => Box::new(NeuralSeparator::new(p.clone())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    /// Separation rounds; 0 records only the initial bound.
    pub max_iter: usize,
    pub time_limit: Option<Duration>,
}

impl Limits {
    pub fn for_instance(inst: &CvrpInstance) -> Self {
        Limits { max_iter: default_max_iter(inst.num_vertices()), time_limit: None }
    }
}

/// 200 rounds below 300 vertices, 100 up to 500, 50 beyond.
pub fn default_max_iter(n_vertices: usize) -> usize {
    match n_vertices {
        0..=299 => 200,
        300..=500 => 100,
        _ => 50,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    NoCuts,
    IterationLimit,
    TimeLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::NoCuts => "no-cuts",
            Termination::IterationLimit => "iteration-limit",
            Termination::TimeLimit => "time-limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lb: f64,
    pub cuts_added: usize,
    pub sep_time_s: f64,
    pub lp_pivots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub final_lb: f64,
    pub termination: Termination,
    /// Every subset whose RCI entered the LP, in insertion order.
    pub cuts: Vec<Vec<usize>>,
    pub wall_s: f64,
}

impl RunTrace {
    /// Number of separation rounds that added cuts.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records.windows(2).all(|w| w[1].lb >= w[0].lb - tol)
    }
}

/// Root cutting-plane loop: solve the LP, separate on its support graph, add
/// the violated RCIs, repeat until no cut is found or a limit is hit.
pub fn cutting_plane<T: Scalar>(
    inst: &CvrpInstance,
    separator: &mut dyn Separator<T>,
    limits: &Limits,
) -> Result<RunTrace> {
    let start = Instant::now();
    let mut model = build_relaxation::<T>(inst)?;
    let mut sol = model.solve()?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        lb: sol.objective.as_f64(),
        cuts_added: 0,
        sep_time_s: 0.0,
        lp_pivots: sol.iterations,
    }];
    let mut cuts = Vec::new();
    let termination = loop {
        let iteration = records.len();
        if iteration > limits.max_iter {
            break Termination::IterationLimit;
        }
        if limits.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break Termination::TimeLimit;
        }
        let support = support_graph(&sol, inst, false);
        let augmented = support_graph(&sol, inst, true);
        let input = SeparationInput {
            support: &support,
            augmented: &augmented,
            capacity: inst.capacity,
            vehicles: inst.vehicles,
        };
        let t = Instant::now();
        let subsets = separator.separate(&input)?;
        let sep_time_s = t.elapsed().as_secs_f64();
        let mut added = 0;
        for s in subsets {
            if s.is_empty() || violation(&s, &support, inst.capacity)? <= T::lit(VIOLATION_TOL) {
                continue;
            }
            if model.add_cut(emit_rci::<T>(&s, inst)?) {
                cuts.push(s);
                added += 1;
            }
        }
        if added == 0 {
            break Termination::NoCuts;
        }
        sol = model.solve().map_err(|e| match e {
            Error::Infeasible { row } => {
                Error::State(format!("LP infeasible after adding cuts (row {row}); a cut is invalid"))
            }
            e => e,
        })?;
        log::debug!("{} iteration {iteration}: lb {} (+{added} cuts)", separator.name(), sol.objective);
        records.push(IterationRecord {
            iteration,
            lb: sol.objective.as_f64(),
            cuts_added: added,
            sep_time_s,
            lp_pivots: sol.iterations,
        });
    };
    Ok(RunTrace {
        final_lb: records.last().expect("initial record").lb,
        records,
        termination,
        cuts,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
