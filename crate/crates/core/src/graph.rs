use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of the depot in every graph of this crate.
pub const DEPOT: usize = 0;

/// Undirected edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub u: usize,
    pub v: usize,
    pub w: T,
}

impl<T: Copy> Edge<T> {
    #[inline]
    pub fn touches_depot(&self) -> bool {
        self.u == DEPOT
    }

    #[inline]
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// Undirected graph with integer vertex demands; vertex 0 is the depot.
///
/// Edges are kept sorted by `(u, v)` with no parallel edges and no loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph<T> {
    demands: Vec<u64>,
    edges: Vec<Edge<T>>,
}

impl<T: Scalar> WeightedGraph<T> {
    /// Builds a graph from arbitrary `(a, b, w)` triples. Endpoints are
    /// normalized, parallel edges are summed, and loops are rejected.
    pub fn new(demands: Vec<u64>, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let n = demands.len();
        if n == 0 {
            return Err(Error::Validation("graph without a depot".into()));
        }
        let mut list: Vec<Edge<T>> = Vec::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::Validation(format!("loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Validation(format!("edge ({a},{b}) outside {n} vertices")));
            }
            list.push(Edge { u: a.min(b), v: a.max(b), w });
        }
        list.sort_by_key(|e| (e.u, e.v));
        let mut edges: Vec<Edge<T>> = Vec::with_capacity(list.len());
        for e in list {
            match edges.last_mut() {
                Some(last) if last.u == e.u && last.v == e.v => last.w += e.w,
                _ => edges.push(e),
            }
        }
        Ok(WeightedGraph { demands, edges })
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.demands.len()
    }

    #[inline]
    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    #[inline]
    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<T> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by_key(&key, |e| (e.u, e.v))
            .ok()
            .map(|i| self.edges[i].w)
    }

    /// Neighbor lists `(neighbor, weight)` for every vertex.
    pub fn adjacency(&self) -> Vec<Vec<(usize, T)>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for e in &self.edges {
            adj[e.u].push((e.v, e.w));
            adj[e.v].push((e.u, e.w));
        }
        adj
    }

    /// x̄(δ(S)) for the vertex set marked in `in_set`. Summation follows
    /// edge order, so equal sets always give bit-identical results.
    pub fn crossing_weight(&self, in_set: &[bool]) -> T {
        let mut z = T::zero();
        for e in &self.edges {
            if in_set[e.u] != in_set[e.v] {
                z += e.w;
            }
        }
        z
    }

    pub fn set_demand(&self, in_set: &[bool]) -> u64 {
        self.demands
            .iter()
            .zip(in_set)
            .filter(|(_, &s)| s)
            .map(|(&d, _)| d)
            .sum()
    }

    /// Indicator vector of `subset`.
    pub fn indicator(&self, subset: &[usize]) -> Vec<bool> {
        let mut flags = vec![false; self.num_vertices()];
        for &i in subset {
            flags[i] = true;
        }
        flags
    }

    /// Same graph with edge weights converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> WeightedGraph<U> {
        WeightedGraph {
            demands: self.demands.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge { u: e.u, v: e.v, w: U::lit(e.w.as_f64()) })
                .collect(),
        }
    }

    /// Connected components of the customer subgraph (depot removed),
    /// considering only edges with weight above `eps`. Components are listed
    /// by smallest member, each sorted.
    pub fn customer_components(&self, eps: T) -> Vec<Vec<usize>> {
        let n = self.num_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            if e.u != DEPOT && e.w > eps {
                let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 1..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_edges_are_summed() {
        let g = WeightedGraph::new(vec![0, 1, 1], [(2, 1, 0.5), (1, 2, 0.5), (0, 1, 2.0)]).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.edge_weight(1, 2), Some(1.0));
        assert_eq!(g.edge_weight(2, 0), None);
    }

    #[test]
    fn loops_rejected() {
        assert!(WeightedGraph::new(vec![0, 1], [(1, 1, 1.0f64)]).is_err());
    }

    #[test]
    fn components_ignore_depot_and_light_edges() {
        let g = WeightedGraph::new(
            vec![0, 1, 1, 1, 1],
            [(0, 1, 1.0), (0, 3, 1.0), (1, 2, 1.0), (3, 4, 1e-9)],
        )
        .unwrap();
        assert_eq!(g.customer_components(1e-6), vec![vec![1, 2], vec![3], vec![4]]);
    }
}
