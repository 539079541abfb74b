//! Riddled basins of skew products over expanding interval maps: fibre
//! dynamics, transfer operators and pressure, stability indices and the
//! multifractal spectrum of the invariant graph.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod expr;
pub mod models;
pub mod multifractal;
pub mod numeric;
pub mod stability;
pub mod thermo;

pub use dynamics::{
    BasinGrid, BasinLabel, ClassifyOptions, DynamicsError, GraphValue, HypothesisReport,
    IntervalMap, Observable, SkewProduct, Verdict,
};
pub use expr::{ExprError, Expression};
