//! Message-passing policy network producing per-vertex selection
//! probabilities.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::nn::{Activation, Mlp, ParamStore, Tape, Var};
use crate::scalar::Scalar;

pub const EMBED_DIM: usize = 32;
pub const HIDDEN: [usize; 2] = [64, 32];
pub const NUM_LAYERS: usize = 5;
pub const VERTEX_FEATURES: usize = 2;
pub const EDGE_FEATURES: usize = 1;

/// Edge update `f_e` and vertex update `f_v` of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnLayer {
    pub edge: Mlp,
    pub vertex: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams<T> {
    pub store: ParamStore<T>,
    pub vertex_encoder: Mlp,
    pub edge_encoder: Mlp,
    pub layers: Vec<GnnLayer>,
    pub head: Mlp,
}

impl<T: Scalar> GnnParams<T> {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let (e, [h1, h2]) = (EMBED_DIM, HIDDEN);
        let vertex_encoder = Mlp::init(&mut store, "enc_v", &[VERTEX_FEATURES, h1, e], Activation::Identity, &mut rng);
        let edge_encoder = Mlp::init(&mut store, "enc_e", &[EDGE_FEATURES, h1, e], Activation::Identity, &mut rng);
        let layers = (0..NUM_LAYERS)
            .map(|l| GnnLayer {
                edge: Mlp::init(&mut store, &format!("layer{l}.f_e"), &[3 * e, h1, h2, e], Activation::Identity, &mut rng),
                vertex: Mlp::init(&mut store, &format!("layer{l}.f_v"), &[2 * e, h1, h2, e], Activation::Identity, &mut rng),
            })
            .collect();
        let head = Mlp::init(&mut store, "head", &[e, h1, h2, 1], Activation::Sigmoid, &mut rng);
        GnnParams { store, vertex_encoder, edge_encoder, layers, head }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.store.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut p = Self::init(0);
        p.store.load(path)?;
        Ok(p)
    }
}

/// A support graph with the features the policy consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturedGraph<T> {
    pub base: WeightedGraph<T>,
    pub capacity: u32,
    pub vehicles: u32,
    pub m: u32,
}

impl<T: Scalar> FeaturedGraph<T> {
    pub fn new(base: WeightedGraph<T>, capacity: u32, vehicles: u32, m: u32) -> Result<Self> {
        if capacity == 0 || vehicles == 0 {
            return Err(Error::Validation("capacity and vehicle count must be positive".into()));
        }
        Ok(FeaturedGraph { base, capacity, vehicles, m })
    }

    /// Row-major `(d_i/Q, M/K)` per vertex.
    pub fn vertex_features(&self) -> Vec<T> {
        let q = T::from_u32(self.capacity).unwrap();
        let mk = T::from_u32(self.m).unwrap() / T::from_u32(self.vehicles).unwrap();
        self.base
            .demands()
            .iter()
            .flat_map(|&d| [T::lit(d as f64) / q, mk])
            .collect()
    }

    /// `x̄_ij` per undirected edge.
    pub fn edge_features(&self) -> Vec<T> {
        self.base.edges().iter().map(|e| e.w).collect()
    }
}

/// Directed-edge index structure. Every undirected edge `k` appears as
/// `2k: u→v` and `2k+1: v→u`; vertex `i` aggregates the edges leaving it.
struct Topology {
    src: Vec<usize>,
    dst: Vec<usize>,
    undirected: Vec<usize>,
    outgoing: Vec<Vec<usize>>,
}

impl Topology {
    fn new<T: Scalar>(g: &WeightedGraph<T>) -> Self {
        let m = g.edges().len();
        let mut src = Vec::with_capacity(2 * m);
        let mut dst = Vec::with_capacity(2 * m);
        let mut undirected = Vec::with_capacity(2 * m);
        let mut outgoing = vec![Vec::new(); g.num_vertices()];
        for (k, e) in g.edges().iter().enumerate() {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                outgoing[a].push(src.len());
                src.push(a);
                dst.push(b);
                undirected.push(k);
            }
        }
        Topology { src, dst, undirected, outgoing }
    }
}

/// Records the policy on `tape`; returns the `|V| × 1` probability column.
pub fn predict_on_tape<T: Scalar>(tape: &mut Tape<'_, T>, params: &GnnParams<T>, graph: &FeaturedGraph<T>) -> Result<Var> {
    let n = graph.base.num_vertices();
    let topo = Topology::new(&graph.base);
    let xv = tape.input(n, VERTEX_FEATURES, graph.vertex_features())?;
    let xe = tape.input(graph.base.edges().len(), EDGE_FEATURES, graph.edge_features())?;
    let mut h = params.vertex_encoder.forward(tape, xv)?;
    let he = params.edge_encoder.forward(tape, xe)?;
    let mut h_edge = tape.gather(he, topo.undirected.clone())?;
    for layer in &params.layers {
        // first f_e layer applied blockwise to [h_src, h_dst, h_edge]
        let first = layer.edge.layers[0];
        let a = tape.linear_rows(h, first.weight, None, 0)?;
        let b = tape.linear_rows(h, first.weight, None, EMBED_DIM)?;
        let c = tape.linear_rows(h_edge, first.weight, Some(first.bias), 2 * EMBED_DIM)?;
        let ga = tape.gather(a, topo.src.clone())?;
        let gb = tape.gather(b, topo.dst.clone())?;
        let s = tape.add(ga, gb)?;
        let s = tape.add(s, c)?;
        let s = tape.relu(s);
        h_edge = layer.edge.forward_from(tape, s, 1)?;
        let agg = tape.segment_mean(h_edge, topo.outgoing.clone())?;
        let cat = tape.concat(&[h, agg])?;
        h = layer.vertex.forward(tape, cat)?;
    }
    params.head.forward(tape, h)
}

/// Selection probability for every vertex, depot included.
pub fn predict<T: Scalar>(params: &GnnParams<T>, graph: &FeaturedGraph<T>) -> Result<Vec<T>> {
    let mut tape = Tape::new(&params.store);
    let p = predict_on_tape(&mut tape, params, graph)?;
    Ok(tape.value(p).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fixture() -> WeightedGraph<f64> {
        WeightedGraph::new(
            vec![0, 60, 60, 60],
            [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn probabilities_in_open_unit_interval() {
        let params = GnnParams::<f64>::init(1);
        let fg = FeaturedGraph::new(fixture(), 100, 2, 1).unwrap();
        let p = predict(&params, &fg).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|&x| x.is_finite() && x > 0.0 && x < 1.0));
    }

    #[test]
    fn permutation_equivariance() {
        let params = GnnParams::<f64>::init(7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 9;
        let demands: Vec<u64> = std::iter::once(0).chain((1..n).map(|_| rng.gen_range(1..50))).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.4) || i == 0 {
                    edges.push((i, j, rng.gen_range(0.0..1.0)));
                }
            }
        }
        let g = WeightedGraph::new(demands.clone(), edges.iter().copied()).unwrap();
        // permutation fixing the depot
        let sigma = [0, 4, 7, 1, 8, 2, 6, 3, 5];
        let mut pd = vec![0; n];
        for i in 0..n {
            pd[sigma[i]] = demands[i];
        }
        let gp = WeightedGraph::new(pd, edges.iter().map(|&(a, b, w)| (sigma[a], sigma[b], w))).unwrap();
        let p = predict(&params, &FeaturedGraph::new(g, 100, 3, 1).unwrap()).unwrap();
        let pp = predict(&params, &FeaturedGraph::new(gp, 100, 3, 1).unwrap()).unwrap();
        for i in 0..n {
            assert!((p[i] - pp[sigma[i]]).abs() <= 1e-9);
        }
    }

    #[test]
    fn depends_on_m_only_through_ratio() {
        let params = GnnParams::<f64>::init(2);
        let a = predict(&params, &FeaturedGraph::new(fixture(), 100, 2, 1).unwrap()).unwrap();
        let b = predict(&params, &FeaturedGraph::new(fixture(), 100, 4, 2).unwrap()).unwrap();
        let c = predict(&params, &FeaturedGraph::new(fixture(), 100, 4, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let params = GnnParams::<f64>::init(5);
        params.save(&path).unwrap();
        let back = GnnParams::<f64>::load(&path).unwrap();
        assert_eq!(params, back);
    }
}
