//! Base maps, skew products and fibre dynamics.

mod fibre;
mod map;
mod skew;

use thiserror::Error;

use crate::expr::ExprError;

pub use fibre::{
    base_orbit, basin_grid, basin_grid_by, classify_point, default_escape_threshold,
    graph_sign_classify, graph_sign_classify_with, invariant_graph_value, iterate_fibre,
    weighted_birkhoff, BasinGrid, BasinLabel, ClassifyOptions, GraphOptions, GraphValue,
    Trajectory, OVERFLOW_GUARD,
};
pub use map::{Branch, IntervalMap, CHECK_GRID};
pub use skew::{Check, HypothesisReport, Observable, SkewProduct, Verdict};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("{what} did not converge (residual {residual:e})")]
    Convergence { what: &'static str, residual: f64 },
    #[error("invariant graph undetermined after {terms} terms")]
    Undetermined { terms: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}
