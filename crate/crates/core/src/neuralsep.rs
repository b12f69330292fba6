//! Learned separation: predict, contract, repeat, then assign and lift.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gnn::{predict, FeaturedGraph, GnnParams};
use crate::graph::{WeightedGraph, DEPOT};
use crate::instances::ceil_div;
use crate::lp_relax::VIOLATION_TOL;
use crate::scalar::Scalar;
use crate::sep_exact::violation;

pub const DEFAULT_GAMMA: f64 = 0.75;
pub const MAX_COARSENING_ROUNDS: usize = 50;
/// Coarsening stops at a depot plus two super-vertices.
pub const MIN_VERTICES: usize = 3;

/// A contracted graph and the original vertices behind each super-vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseGraph<T> {
    pub level: usize,
    pub graph: WeightedGraph<T>,
    pub members: Vec<Vec<usize>>,
}

impl<T: Scalar> CoarseGraph<T> {
    pub fn identity(graph: WeightedGraph<T>) -> Self {
        let members = (0..graph.num_vertices()).map(|i| vec![i]).collect();
        CoarseGraph { level: 0, graph, members }
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices()
    }

    /// Original vertices of the selected super-vertices, sorted.
    pub fn lift(&self, selected: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = selected.iter().flat_map(|&s| self.members[s].iter().copied()).collect();
        out.sort_unstable();
        out
    }

    /// Label of each super-vertex, read off its first member.
    pub fn carry_labels(&self, labels: &[u8]) -> Vec<u8> {
        self.members.iter().map(|m| labels[m[0]]).collect()
    }
}

#[inline]
fn q_of<T: Scalar>(pi: T, pj: T) -> T {
    pi * pj + (T::one() - pi) * (T::one() - pj)
}

/// `q_ij = p_i p_j + (1 − p_i)(1 − p_j)` per edge, 0 on depot edges.
pub fn contraction_probs<T: Scalar>(p: &[T], graph: &WeightedGraph<T>) -> Vec<T> {
    graph
        .edges()
        .iter()
        .map(|e| if e.touches_depot() { T::zero() } else { q_of(p[e.u], p[e.v]) })
        .collect()
}

/// One coarsening round: contracts the highest-`q` edge until at most
/// `max(⌊γ|V|⌋, 3)` vertices remain or every `q` is zero. Merged vertices
/// keep the probability of the survivor (the smaller index).
pub fn gamma_coarsen<T: Scalar>(cg: &CoarseGraph<T>, p: &[T], gamma: f64) -> Result<CoarseGraph<T>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Validation(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let n = cg.num_vertices();
    if p.len() != n {
        return Err(Error::Shape { expected: vec![n], got: vec![p.len()] });
    }
    let target = ((gamma * n as f64).floor() as usize).max(MIN_VERTICES);
    let mut adj: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); n];
    for e in cg.graph.edges() {
        adj[e.u].insert(e.v, e.w);
        adj[e.v].insert(e.u, e.w);
    }
    let mut demand: Vec<u64> = cg.graph.demands().to_vec();
    let mut members = cg.members.clone();
    let mut alive = vec![true; n];
    let mut count = n;

    while count > target {
        let mut best: Option<(usize, usize, T)> = None;
        for i in 1..n {
            if !alive[i] {
                continue;
            }
            for &j in adj[i].range(i + 1..).map(|(j, _)| j) {
                let q = q_of(p[i], p[j]);
                if best.is_none_or(|(_, _, b)| q > b) {
                    best = Some((i, j, q));
                }
            }
        }
        let Some((keep, gone, q)) = best else { break };
        if q <= T::zero() {
            break;
        }
        let moved = std::mem::take(&mut adj[gone]);
        for (k, w) in moved {
            adj[k].remove(&gone);
            if k != keep {
                *adj[keep].entry(k).or_insert(T::zero()) += w;
                *adj[k].entry(keep).or_insert(T::zero()) += w;
            }
        }
        demand[keep] += demand[gone];
        let m = std::mem::take(&mut members[gone]);
        members[keep].extend(m);
        alive[gone] = false;
        count -= 1;
    }

    if count == n {
        let mut same = cg.clone();
        same.level += 1;
        return Ok(same);
    }
    let mut new_id = vec![usize::MAX; n];
    let mut kept = Vec::with_capacity(count);
    for i in (0..n).filter(|&i| alive[i]) {
        new_id[i] = kept.len();
        kept.push(i);
    }
    let edges = kept.iter().flat_map(|&i| {
        let new_id = &new_id;
        adj[i].range(i + 1..).map(move |(&j, &w)| (new_id[i], new_id[j], w))
    });
    let graph = WeightedGraph::new(kept.iter().map(|&i| demand[i]).collect(), edges.collect::<Vec<_>>())?;
    let members = kept
        .iter()
        .map(|&i| {
            let mut m = members[i].clone();
            m.sort_unstable();
            m
        })
        .collect();
    Ok(CoarseGraph { level: cg.level + 1, graph, members })
}

/// Thresholds `p` at 1/2 (the depot never selected), falling back to the
/// customer super-vertex of largest `p`, and lifts to original vertices.
pub fn assign_and_lift<T: Scalar>(cg: &CoarseGraph<T>, p: &[T]) -> Vec<usize> {
    let half = T::lit(0.5);
    let mut selected: Vec<usize> = (1..cg.num_vertices()).filter(|&i| p[i] > half).collect();
    if selected.is_empty() {
        let mut best: Option<usize> = None;
        for i in 1..cg.num_vertices() {
            if best.is_none_or(|b| p[i] > p[b]) {
                best = Some(i);
            }
        }
        selected.extend(best);
    }
    cg.lift(&selected)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuralConfig {
    pub gamma: f64,
    pub max_rounds: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig { gamma: DEFAULT_GAMMA, max_rounds: MAX_COARSENING_ROUNDS }
    }
}

/// Candidate of one threshold `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralCandidate {
    pub m: u32,
    pub subset: Vec<usize>,
    pub violated: bool,
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralRun {
    pub candidates: Vec<NeuralCandidate>,
    /// Violated subsets, deduplicated across `M`.
    pub cuts: Vec<Vec<usize>>,
}

impl NeuralRun {
    pub fn max_rounds(&self) -> usize {
        self.candidates.iter().map(|c| c.rounds).max().unwrap_or(0)
    }
}

/// Coarsens `graph` under the policy for threshold `m` and returns the lifted
/// subset with the number of coarsening rounds.
pub fn neural_candidate<T: Scalar>(
    params: &GnnParams<T>,
    graph: &WeightedGraph<T>,
    capacity: u32,
    vehicles: u32,
    m: u32,
    config: &NeuralConfig,
) -> Result<(Vec<usize>, usize)> {
    let mut cg = CoarseGraph::identity(graph.clone());
    let mut rounds = 0;
    while cg.num_vertices() > MIN_VERTICES && rounds < config.max_rounds {
        let fg = FeaturedGraph::new(cg.graph.clone(), capacity, vehicles, m)?;
        let p = predict(params, &fg)?;
        let next = gamma_coarsen(&cg, &p, config.gamma)?;
        rounds += 1;
        if next.num_vertices() == cg.num_vertices() {
            break;
        }
        cg = next;
    }
    let p = predict(params, &FeaturedGraph::new(cg.graph.clone(), capacity, vehicles, m)?)?;
    Ok((assign_and_lift(&cg, &p), rounds))
}

/// Runs the learned separator for every `M = 0..⌈Σd/Q⌉`.
pub fn neural_separate<T: Scalar>(
    params: &GnnParams<T>,
    support: &WeightedGraph<T>,
    capacity: u32,
    vehicles: u32,
    config: &NeuralConfig,
) -> Result<NeuralRun> {
    let levels = ceil_div(support.total_demand(), capacity as u64) as u32;
    let mut candidates = Vec::with_capacity(levels as usize);
    let mut cuts: Vec<Vec<usize>> = Vec::new();
    for m in 0..levels {
        let (subset, rounds) = neural_candidate(params, support, capacity, vehicles, m, config)?;
        let violated = !subset.is_empty()
            && !subset.contains(&DEPOT)
            && violation(&subset, support, capacity)? > T::lit(VIOLATION_TOL);
        if violated && !cuts.contains(&subset) {
            cuts.push(subset.clone());
        }
        candidates.push(NeuralCandidate { m, subset, violated, rounds });
    }
    Ok(NeuralRun { candidates, cuts })
}

/// `⌈log(|V|/3) / log(1/γ)⌉ + 1`
pub fn round_bound(n_vertices: usize, gamma: f64) -> usize {
    if n_vertices <= MIN_VERTICES {
        return 1;
    }
    ((n_vertices as f64 / MIN_VERTICES as f64).ln() / (1.0 / gamma).ln()).ceil() as usize + 1
}
