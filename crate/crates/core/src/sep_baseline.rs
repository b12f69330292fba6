//! Heuristic RCI separators: connected components and greedy set growth.

use crate::graph::{WeightedGraph, DEPOT};
use crate::instances::ceil_div;
use crate::lp_relax::{SUPPORT_EPS, VIOLATION_TOL};
use crate::scalar::Scalar;
use crate::sep_exact::violation;

/// Per-iteration cut cap of the heuristic separators: `min{|V|, 100}`.
pub fn heuristic_cut_cap(n_vertices: usize) -> usize {
    n_vertices.min(100)
}

fn is_violated<T: Scalar>(subset: &[usize], g: &WeightedGraph<T>, capacity: u32) -> bool {
    !subset.is_empty()
        && violation(subset, g, capacity)
            .map(|v| v > T::lit(VIOLATION_TOL))
            .unwrap_or(false)
}

/// Connected-components heuristic on an un-augmented support graph.
///
/// Every component `S_i` of the customer subgraph and its complement
/// `V_C ∖ S_i` are tested. If none is violated, the union of all components
/// with no support edge to the depot is tested. Results are deduplicated and
/// capped at [`heuristic_cut_cap`].
pub fn connected_components_separate<T: Scalar>(g: &WeightedGraph<T>, capacity: u32) -> Vec<Vec<usize>> {
    let n = g.num_vertices();
    let eps = T::lit(SUPPORT_EPS);
    let components = g.customer_components(eps);
    let mut found: Vec<Vec<usize>> = Vec::new();
    let push = |s: Vec<usize>, found: &mut Vec<Vec<usize>>| {
        if is_violated(&s, g, capacity) && !found.contains(&s) {
            found.push(s);
        }
    };
    for comp in &components {
        push(comp.clone(), &mut found);
        let mut in_comp = vec![false; n];
        for &i in comp {
            in_comp[i] = true;
        }
        let complement: Vec<usize> = (1..n).filter(|&i| !in_comp[i]).collect();
        push(complement, &mut found);
    }
    if found.is_empty() {
        let mut touches_depot = vec![false; n];
        for e in g.edges() {
            if e.u == DEPOT && e.w > eps {
                touches_depot[e.v] = true;
            }
        }
        let mut union: Vec<usize> = components
            .iter()
            .filter(|c| !c.iter().any(|&i| touches_depot[i]))
            .flatten()
            .copied()
            .collect();
        union.sort_unstable();
        push(union, &mut found);
    }
    found.truncate(heuristic_cut_cap(n));
    found
}

/// Greedy growth for demand threshold `M`.
///
/// Starts from the most violated singleton and keeps adding the support
/// neighbor that best lowers the crossing weight per unit of added demand,
/// until the set's demand exceeds `M·Q`. Returns the set if its RCI is
/// violated.
pub fn greedy_separate<T: Scalar>(g: &WeightedGraph<T>, capacity: u32, m: u32) -> Option<Vec<usize>> {
    let n = g.num_vertices();
    if n < 2 {
        return None;
    }
    let adj = g.adjacency();
    let demands = g.demands();
    let threshold = m as u64 * capacity as u64;
    if g.total_demand() <= threshold {
        return None;
    }
    let degree: Vec<T> = adj.iter().map(|a| a.iter().map(|&(_, w)| w).sum()).collect();

    let singleton_violation = |i: usize| -> T {
        T::lit(2.0 * ceil_div(demands[i], capacity as u64) as f64) - degree[i]
    };
    let mut start = 1;
    for i in 2..n {
        if singleton_violation(i) > singleton_violation(start) {
            start = i;
        }
    }

    let mut in_set = vec![false; n];
    in_set[start] = true;
    let mut demand = demands[start];
    // weight from each vertex into the current set
    let mut into_set = vec![T::zero(); n];
    for &(u, w) in &adj[start] {
        into_set[u] += w;
    }
    let eps = T::lit(SUPPORT_EPS);
    while demand <= threshold {
        let frontier: Vec<usize> = (1..n)
            .filter(|&v| !in_set[v] && into_set[v] > eps)
            .collect();
        let pool: Vec<usize> = if frontier.is_empty() {
            (1..n).filter(|&v| !in_set[v]).collect()
        } else {
            frontier
        };
        // Δ crossing when adding v: deg(v) − 2·w(v, S)
        let score = |v: usize| -> T {
            let delta = degree[v] - T::lit(2.0) * into_set[v];
            -delta / T::lit(demands[v].max(1) as f64)
        };
        let mut best = *pool.first()?;
        for &v in &pool[1..] {
            if score(v) > score(best) {
                best = v;
            }
        }
        in_set[best] = true;
        demand += demands[best];
        for &(u, w) in &adj[best] {
            into_set[u] += w;
        }
    }
    let subset: Vec<usize> = (1..n).filter(|&i| in_set[i]).collect();
    is_violated(&subset, g, capacity).then_some(subset)
}

/// Greedy growth for every `M`, deduplicated and capped.
pub fn greedy_separate_all<T: Scalar>(g: &WeightedGraph<T>, capacity: u32) -> Vec<Vec<usize>> {
    let levels = ceil_div(g.total_demand(), capacity as u64) as u32;
    let mut out: Vec<Vec<usize>> = Vec::new();
    for m in 0..levels {
        if let Some(s) = greedy_separate(g, capacity, m) {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out.truncate(heuristic_cut_cap(g.num_vertices()));
    out
}
