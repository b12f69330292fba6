//! The relaxed two-index LP, rounded capacity inequality rows, and support
//! graphs built from LP solutions.

mod simplex;

use std::collections::HashSet;
use std::fmt::Write as _;

pub use simplex::{Sense, SparseRow};
use simplex::DualSimplex;

use crate::error::{Error, Result};
use crate::graph::{WeightedGraph, DEPOT};
use crate::instances::{k_of_set, CvrpInstance};
use crate::scalar::Scalar;

/// Edges with x̄ at or below this value are left out of support graphs.
pub const SUPPORT_EPS: f64 = 1e-6;

/// A cut counts as violated when `2k(S) − x̄(δ(S))` exceeds this.
pub const VIOLATION_TOL: f64 = 1e-4;

/// Index of edge variable `x_ij` (`i < j`) among `n` vertices.
#[inline]
pub fn edge_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// The three equivalent ways of writing the same RCI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RciForm {
    /// x(S:S) ≤ |S| − k(S)
    EdgesInside,
    /// x(δ(S)) ≥ 2k(S)
    Crossing,
    /// x(S̄:S̄) + ½x(0:S̄) − ½x(0:S) ≤ |S̄| − k(S), with S̄ = V_C ∖ S
    Complement,
}

/// A rounded capacity inequality for customer set `subset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rci<T> {
    pub subset: Vec<usize>,
    pub k: u32,
    pub form: RciForm,
    pub row: SparseRow<T>,
}

/// Builds the row of the given form for customer set `subset` (sorted or not).
pub fn rci_row<T: Scalar>(subset: &[usize], inst: &CvrpInstance, form: RciForm) -> Result<Rci<T>> {
    let n = inst.num_vertices();
    let k = k_of_set(subset, &inst.demands, inst.capacity)?;
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.iter().any(|&i| i == DEPOT || i >= n) {
        return Err(Error::Validation(format!("{sorted:?} is not a customer subset")));
    }
    let mut in_s = vec![false; n];
    for &i in &sorted {
        in_s[i] = true;
    }
    let half = T::lit(0.5);
    let mut coeffs = Vec::new();
    let row = match form {
        RciForm::EdgesInside => {
            for (a, &i) in sorted.iter().enumerate() {
                for &j in &sorted[a + 1..] {
                    coeffs.push((edge_index(n, i, j), T::one()));
                }
            }
            SparseRow {
                coeffs,
                sense: Sense::Le,
                rhs: T::from_usize_(sorted.len()) - T::lit(k as f64),
            }
        }
        RciForm::Crossing => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if in_s[i] != in_s[j] {
                        coeffs.push((edge_index(n, i, j), T::one()));
                    }
                }
            }
            SparseRow { coeffs, sense: Sense::Ge, rhs: T::lit(2.0 * k as f64) }
        }
        RciForm::Complement => {
            let comp: Vec<usize> = (1..n).filter(|&i| !in_s[i]).collect();
            for j in 1..n {
                let c = if in_s[j] { -half } else { half };
                coeffs.push((edge_index(n, DEPOT, j), c));
            }
            for (a, &i) in comp.iter().enumerate() {
                for &j in &comp[a + 1..] {
                    coeffs.push((edge_index(n, i, j), T::one()));
                }
            }
            coeffs.sort_unstable_by_key(|&(j, _)| j);
            SparseRow {
                coeffs,
                sense: Sense::Le,
                rhs: T::from_usize_(comp.len()) - T::lit(k as f64),
            }
        }
    };
    Ok(Rci { subset: sorted, k, form, row })
}

/// The row actually added to the LP: form (i) when `|S| ≤ |V|/2`, otherwise
/// form (iii). Both keep the number of nonzeros small.
pub fn emit_rci<T: Scalar>(subset: &[usize], inst: &CvrpInstance) -> Result<Rci<T>> {
    let form = if 2 * subset.len() <= inst.num_vertices() {
        RciForm::EdgesInside
    } else {
        RciForm::Complement
    };
    rci_row(subset, inst, form)
}

/// Solution of the current LP.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedSolution<T> {
    pub n_vertices: usize,
    /// One value per edge variable, in [`edge_index`] order.
    pub values: Vec<T>,
    pub objective: T,
    /// Pivots spent by the solve that produced this solution.
    pub iterations: usize,
}

impl<T: Scalar> RelaxedSolution<T> {
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> T {
        let (a, b) = (i.min(j), i.max(j));
        self.values[edge_index(self.n_vertices, a, b)]
    }

    /// x̄(δ(S)).
    pub fn crossing(&self, in_set: &[bool]) -> T {
        let n = self.n_vertices;
        let mut z = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                if in_set[i] != in_set[j] {
                    z += self.values[edge_index(n, i, j)];
                }
            }
        }
        z
    }
}

/// Relaxed two-index CVRP LP with an append-only cut pool.
#[derive(Clone, Debug)]
pub struct LpModel<T> {
    n_vertices: usize,
    cost: Vec<T>,
    upper: Vec<T>,
    degree_rows: Vec<SparseRow<T>>,
    cuts: Vec<Rci<T>>,
    extra_rows: Vec<SparseRow<T>>,
    pooled: HashSet<Vec<usize>>,
    solver: DualSimplex<T>,
    pivot_budget: usize,
}

/// Minimize Σ c_ij x_ij subject to the customer degree equalities, with
/// `0 ≤ x_ij ≤ 1` between customers and `0 ≤ x_0j ≤ 2` at the depot.
pub fn build_relaxation<T: Scalar>(inst: &CvrpInstance) -> Result<LpModel<T>> {
    inst.validate()?;
    let n = inst.num_vertices();
    let mut cost = Vec::with_capacity(n * (n - 1) / 2);
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            cost.push(T::lit(inst.cost(i, j)));
            upper.push(if i == DEPOT { T::lit(2.0) } else { T::one() });
        }
    }
    let mut solver = DualSimplex::new(cost.clone(), vec![T::zero(); cost.len()], upper.clone())?;
    let mut degree_rows = Vec::with_capacity(n - 1);
    for i in 1..n {
        let mut coeffs: Vec<(usize, T)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (edge_index(n, i.min(j), i.max(j)), T::one()))
            .collect();
        coeffs.sort_unstable_by_key(|&(j, _)| j);
        let row = SparseRow { coeffs, sense: Sense::Eq, rhs: T::lit(2.0) };
        solver.add_row(&row);
        degree_rows.push(row);
    }
    let pivot_budget = 50 * (cost.len() + n) + 10_000;
    Ok(LpModel {
        n_vertices: n,
        cost,
        upper,
        degree_rows,
        cuts: Vec::new(),
        extra_rows: Vec::new(),
        pooled: HashSet::new(),
        solver,
        pivot_budget,
    })
}

impl<T: Scalar> LpModel<T> {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn degree_rows(&self) -> &[SparseRow<T>] {
        &self.degree_rows
    }

    pub fn cuts(&self) -> &[Rci<T>] {
        &self.cuts
    }

    pub fn upper_bound(&self, var: usize) -> T {
        self.upper[var]
    }

    /// Total pivots performed over the model's lifetime.
    pub fn total_pivots(&self) -> usize {
        self.solver.total_pivots
    }

    /// Re-optimizes from the current basis.
    pub fn solve(&mut self) -> Result<RelaxedSolution<T>> {
        let iterations = self.solver.optimize(self.pivot_budget)?;
        Ok(RelaxedSolution {
            n_vertices: self.n_vertices,
            values: self.solver.values().to_vec(),
            objective: self.solver.objective(),
            iterations,
        })
    }

    /// Appends a cut unless one on the same subset is already pooled.
    pub fn add_cut(&mut self, rci: Rci<T>) -> bool {
        if !self.pooled.insert(rci.subset.clone()) {
            return false;
        }
        self.solver.add_row(&rci.row);
        self.cuts.push(rci);
        true
    }

    /// Appends an arbitrary row (not tracked as a cut).
    pub fn add_row(&mut self, row: SparseRow<T>) {
        self.solver.add_row(&row);
        self.extra_rows.push(row);
    }

    pub fn contains_cut(&self, subset: &[usize]) -> bool {
        self.pooled.contains(subset)
    }

    /// CPLEX LP text rendering, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let n = self.n_vertices;
        let name = |v: usize| -> String {
            // invert edge_index by scanning rows of the triangle
            let mut i = 0;
            let mut start = 0;
            while start + (n - i - 1) <= v {
                start += n - i - 1;
                i += 1;
            }
            format!("x_{}_{}", i, i + 1 + (v - start))
        };
        let term = |a: T, v: usize| -> String {
            let a = a.as_f64();
            if a < 0.0 {
                format!(" - {} {}", -a, name(v))
            } else {
                format!(" + {} {}", a, name(v))
            }
        };
        let mut s = String::from("\\ relaxed two-index CVRP\nMinimize\n obj:");
        for (v, c) in self.cost.iter().enumerate() {
            s.push_str(&term(*c, v));
        }
        s.push_str("\nSubject To\n");
        let rows = self
            .degree_rows
            .iter()
            .chain(self.cuts.iter().map(|c| &c.row))
            .chain(self.extra_rows.iter());
        for (r, row) in rows.enumerate() {
            let _ = write!(s, " r{r}:");
            for &(v, a) in &row.coeffs {
                s.push_str(&term(a, v));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", row.rhs.as_f64());
        }
        s.push_str("Bounds\n");
        for (v, u) in self.upper.iter().enumerate() {
            let _ = writeln!(s, " 0 <= {} <= {}", name(v), u.as_f64());
        }
        s.push_str("End\n");
        s
    }
}

/// Support graph of `sol`: edges with x̄ above [`SUPPORT_EPS`]. With
/// `augment`, every missing depot edge is added with weight 0 so the graph is
/// connected through the depot.
pub fn support_graph<T: Scalar>(
    sol: &RelaxedSolution<T>,
    inst: &CvrpInstance,
    augment: bool,
) -> WeightedGraph<T> {
    let n = inst.num_vertices();
    let eps = T::lit(SUPPORT_EPS);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = sol.values[edge_index(n, i, j)];
            if x > eps {
                edges.push((i, j, x));
            } else if augment && i == DEPOT {
                edges.push((i, j, T::zero()));
            }
        }
    }
    let demands = inst.demands.iter().map(|&d| d as u64).collect();
    WeightedGraph::new(demands, edges).expect("support graph edges are valid")
}
