//! Exact RCI separation.
//!
//! For a demand threshold `M`, find the customer set `S` with
//! `Σ_{i∈S} d_i ≥ M·Q + 1` minimizing the crossing weight x̄(δ(S)) = z(M).
//! A violated RCI exists for that `M` iff `z(M) < 2(M + 1)`.
//!
//! Two solvers share one visiting order: subsets are scanned as bitmasks in
//! increasing numeric order (customer `i` is bit `i − 1`), and a candidate
//! replaces the incumbent only when it is strictly better by more than
//! [`TIE_EPS`]. Among optimal sets the one with the smallest mask wins, i.e.
//! the set whose largest differing vertex is absent. Plain enumeration and
//! the depth-first branch-and-bound (which fixes the highest vertex first,
//! `y = 0` before `y = 1`) therefore return the same set.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::{WeightedGraph, DEPOT};
use crate::instances::{ceil_div, k_of_set};
use crate::lp_relax::VIOLATION_TOL;
use crate::scalar::Scalar;

/// Crossing weights closer than this are treated as ties.
pub const TIE_EPS: f64 = 1e-9;

/// Largest customer count handled by enumeration under [`Strategy::Auto`].
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    /// Enumeration up to [`ENUMERATION_LIMIT`] customers, branch-and-bound above.
    #[default]
    Auto,
    Enumerate,
    BranchAndBound,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExactConfig {
    pub strategy: Strategy,
    /// Per-problem wall-clock budget.
    pub time_limit: Option<Duration>,
}

/// One exact separation problem on a support graph.
#[derive(Clone, Copy, Debug)]
pub struct SeparationProblem<'a, T> {
    pub graph: &'a WeightedGraph<T>,
    pub capacity: u32,
    pub m: u32,
}

impl<'a, T: Scalar> SeparationProblem<'a, T> {
    pub fn new(graph: &'a WeightedGraph<T>, capacity: u32, m: u32) -> Result<Self> {
        let p = SeparationProblem { graph, capacity, m };
        p.validate()?;
        Ok(p)
    }

    fn threshold(&self) -> u64 {
        self.m as u64 * self.capacity as u64 + 1
    }

    fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Validation("capacity must be positive".into()));
        }
        if self.graph.demands()[DEPOT] != 0 {
            return Err(Error::Validation("depot carries demand".into()));
        }
        let total = self.graph.total_demand();
        if self.m as u64 * self.capacity as u64 >= total {
            return Err(Error::Validation(format!(
                "M·Q = {} is not below the total demand {total}",
                self.m as u64 * self.capacity as u64
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationResult<T> {
    pub m: u32,
    /// Optimal customer set, sorted.
    pub subset: Vec<usize>,
    /// z(M) = x̄(δ(subset)).
    pub z: T,
    /// Whether the RCI on `subset` is violated by more than the tolerance.
    pub violated: bool,
    /// y*_i per vertex; the depot is always 0.
    pub labels: Vec<u8>,
}

/// 2k(S) − x̄(δ(S)); positive iff the RCI on `S` is violated.
pub fn violation<T: Scalar>(subset: &[usize], graph: &WeightedGraph<T>, capacity: u32) -> Result<T> {
    let demands: Vec<u32> = graph.demands().iter().map(|&d| d as u32).collect();
    let k = k_of_set(subset, &demands, capacity)?;
    let z = graph.crossing_weight(&graph.indicator(subset));
    Ok(T::lit(2.0 * k as f64) - z)
}

pub fn exact_separate<T: Scalar>(
    problem: &SeparationProblem<'_, T>,
    config: &ExactConfig,
) -> Result<SeparationResult<T>> {
    problem.validate()?;
    let n_customers = problem.graph.num_vertices() - 1;
    let use_enum = match config.strategy {
        Strategy::Enumerate => true,
        Strategy::BranchAndBound => false,
        Strategy::Auto => n_customers <= ENUMERATION_LIMIT,
    };
    let deadline = config.time_limit.map(|d| Instant::now() + d);
    let best = if use_enum {
        if n_customers > 40 {
            return Err(Error::Validation(format!(
                "enumeration over {n_customers} customers is not supported"
            )));
        }
        enumerate(problem, deadline)?
    } else {
        BranchAndBound::new(problem, deadline).run()?
    };
    let (z, in_set) = best.ok_or_else(|| Error::State("no feasible subset found".into()))?;
    let subset: Vec<usize> = (1..in_set.len()).filter(|&i| in_set[i]).collect();
    let labels = in_set.iter().map(|&b| b as u8).collect();
    let viol = violation(&subset, problem.graph, problem.capacity)?;
    Ok(SeparationResult {
        m: problem.m,
        subset,
        z,
        violated: viol > T::lit(VIOLATION_TOL),
        labels,
    })
}

/// Solves every `M ∈ {0, …, ⌈Σd/Q⌉ − 1}` in ascending order.
pub fn exact_separate_all<T: Scalar>(
    graph: &WeightedGraph<T>,
    capacity: u32,
    config: &ExactConfig,
) -> Result<Vec<SeparationResult<T>>> {
    let levels = ceil_div(graph.total_demand(), capacity as u64) as u32;
    (0..levels)
        .map(|m| exact_separate(&SeparationProblem::new(graph, capacity, m)?, config))
        .collect()
}

/// Distinct violated subsets among `results`, in order of `M`.
pub fn violated_subsets<T: Scalar>(results: &[SeparationResult<T>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for r in results {
        if r.violated && !out.contains(&r.subset) {
            out.push(r.subset.clone());
        }
    }
    out
}

/// Incumbent bookkeeping shared by both solvers.
struct Incumbent<T> {
    z: T,
    set: Option<Vec<bool>>,
}

impl<T: Scalar> Incumbent<T> {
    fn new() -> Self {
        Incumbent { z: T::infinity(), set: None }
    }

    /// Offers a feasible leaf whose approximate crossing weight is `approx`.
    /// The exact weight is recomputed in edge order before comparing.
    fn offer(&mut self, graph: &WeightedGraph<T>, in_set: &[bool], approx: T) {
        if approx > self.z - T::lit(TIE_EPS) + T::lit(1e-6) {
            return;
        }
        let z = graph.crossing_weight(in_set);
        if z < self.z - T::lit(TIE_EPS) {
            self.z = z;
            self.set = Some(in_set.to_vec());
        }
    }

    fn into_result(self) -> Option<(T, Vec<bool>)> {
        self.set.map(|s| (self.z, s))
    }
}

fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() > d => Err(Error::Timeout),
        _ => Ok(()),
    }
}

fn enumerate<T: Scalar>(
    p: &SeparationProblem<'_, T>,
    deadline: Option<Instant>,
) -> Result<Option<(T, Vec<bool>)>> {
    let g = p.graph;
    let n = g.num_vertices();
    let nc = n - 1;
    let adj = g.adjacency();
    let demands = g.demands();
    let threshold = p.threshold();
    let mut in_set = vec![false; n];
    let mut cross = T::zero();
    let mut demand = 0u64;
    let mut inc = Incumbent::new();

    let flip = |v: usize, in_set: &mut [bool], cross: &mut T, demand: &mut u64| {
        let side = in_set[v];
        for &(u, w) in &adj[v] {
            if in_set[u] == side {
                *cross += w;
            } else {
                *cross -= w;
            }
        }
        in_set[v] = !side;
        if side {
            *demand -= demands[v];
        } else {
            *demand += demands[v];
        }
    };

    let total: u64 = 1u64 << nc;
    for mask in 1..total {
        // mask−1 → mask clears the trailing ones and sets the next bit.
        let t = (mask - 1).trailing_ones() as usize;
        for b in 0..t {
            flip(b + 1, &mut in_set, &mut cross, &mut demand);
        }
        flip(t + 1, &mut in_set, &mut cross, &mut demand);
        if mask & 0xffff == 0 {
            check_deadline(deadline)?;
            // Resynchronize the running sum.
            cross = g.crossing_weight(&in_set);
        }
        if demand >= threshold {
            inc.offer(g, &in_set, cross);
        }
    }
    Ok(inc.into_result())
}

struct BranchAndBound<'p, 'g, T> {
    p: &'p SeparationProblem<'g, T>,
    adj: Vec<Vec<(usize, T)>>,
    fixed: Vec<bool>,
    in_set: Vec<bool>,
    /// For unfixed vertices: weight to fixed vertices inside / outside S.
    to_in: Vec<T>,
    to_out: Vec<T>,
    cross: T,
    demand_in: u64,
    demand_free: u64,
    inc: Incumbent<T>,
    deadline: Option<Instant>,
    nodes: u64,
}

impl<'p, 'g, T: Scalar> BranchAndBound<'p, 'g, T> {
    fn new(p: &'p SeparationProblem<'g, T>, deadline: Option<Instant>) -> Self {
        let g = p.graph;
        let n = g.num_vertices();
        let mut bb = BranchAndBound {
            p,
            adj: g.adjacency(),
            fixed: vec![false; n],
            in_set: vec![false; n],
            to_in: vec![T::zero(); n],
            to_out: vec![T::zero(); n],
            cross: T::zero(),
            demand_in: 0,
            demand_free: g.total_demand(),
            inc: Incumbent::new(),
            deadline,
            nodes: 0,
        };
        bb.fix(DEPOT, false);
        bb
    }

    fn fix(&mut self, v: usize, side: bool) {
        self.fixed[v] = true;
        self.in_set[v] = side;
        self.demand_free -= self.p.graph.demands()[v];
        if side {
            self.demand_in += self.p.graph.demands()[v];
            self.cross += self.to_out[v];
        } else {
            self.cross += self.to_in[v];
        }
        for &(u, w) in &self.adj[v] {
            if !self.fixed[u] {
                if side {
                    self.to_in[u] += w;
                } else {
                    self.to_out[u] += w;
                }
            }
        }
    }

    fn unfix(&mut self, v: usize) {
        let side = self.in_set[v];
        for &(u, w) in &self.adj[v] {
            if !self.fixed[u] {
                if side {
                    self.to_in[u] -= w;
                } else {
                    self.to_out[u] -= w;
                }
            }
        }
        if side {
            self.demand_in -= self.p.graph.demands()[v];
            self.cross -= self.to_out[v];
        } else {
            self.cross -= self.to_in[v];
        }
        self.demand_free += self.p.graph.demands()[v];
        self.fixed[v] = false;
        self.in_set[v] = false;
    }

    fn lower_bound(&self) -> T {
        let mut lb = self.cross;
        for v in 1..self.fixed.len() {
            if !self.fixed[v] {
                lb += self.to_in[v].min(self.to_out[v]);
            }
        }
        lb
    }

    fn run(mut self) -> Result<Option<(T, Vec<bool>)>> {
        let top = self.p.graph.num_vertices() - 1;
        self.branch(top)?;
        Ok(self.inc.into_result())
    }

    /// Fixes vertices `v, v−1, …, 1`.
    fn branch(&mut self, v: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes & 0xfff == 0 {
            check_deadline(self.deadline)?;
        }
        if self.demand_in + self.demand_free < self.p.threshold() {
            return Ok(());
        }
        if self.lower_bound() >= self.inc.z - T::lit(TIE_EPS) + T::lit(1e-11) {
            return Ok(());
        }
        if v == 0 {
            if self.demand_in >= self.p.threshold() {
                let g = self.p.graph;
                let in_set = self.in_set.clone();
                self.inc.offer(g, &in_set, self.cross);
            }
            return Ok(());
        }
        for side in [false, true] {
            self.fix(v, side);
            let r = self.branch(v - 1);
            self.unfix(v);
            r?;
        }
        Ok(())
    }
}
