//! Cutting-plane lower bounds for the capacitated vehicle routing problem
//! with exact, heuristic and learned separation of rounded capacity
//! inequalities.

pub mod engine;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod instances;
pub mod lp_relax;
pub mod neuralsep;
pub mod nn;
pub mod scalar;
pub mod sep_baseline;
pub mod sep_exact;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Graph = graph::WeightedGraph<f64>;
pub type Graph32 = graph::WeightedGraph<f32>;
pub type Lp = lp_relax::LpModel<f64>;
pub type Lp32 = lp_relax::LpModel<f32>;
pub type Gnn = gnn::GnnParams<f64>;
pub type Gnn32 = gnn::GnnParams<f32>;
