//! Ready-made systems used by tests, benches and the command line.

use crate::dynamics::{IntervalMap, Observable, SkewProduct};

pub const PAPER_F: &str = "(2 + sin(2*pi*x))/5";
pub const PAPER_LAMBDA: &str = "4/5 + cos(2*pi*x)/4";

/// Doubling map with `f = (2 + sin 2πx)/5`, `λ = 4/5 + cos(2πx)/4`; the
/// fixed point 0 is the expanding witness.
pub fn paper_example() -> SkewProduct {
    SkewProduct::new(
        IntervalMap::doubling(),
        Observable::parse(PAPER_F).expect("valid formula"),
        Observable::parse(PAPER_LAMBDA).expect("valid formula"),
        1.0,
        Some(&[0.0]),
    )
    .expect("paper example satisfies the standing hypotheses")
}

/// Doubling map with constant `λ = c` and constant `f = value`.
pub fn constant_fibre(c: f64, value: f64) -> SkewProduct {
    SkewProduct::new(
        IntervalMap::doubling(),
        Observable::constant(value),
        Observable::constant(c),
        1.0,
        Some(&[0.0]),
    )
    .expect("positive constants")
}

/// Doubling map with `f = 1` and `λ` equal to `l1` on `[0, 1/2)` and `l2`
/// on `[1/2, 1]`.
pub fn two_level_lambda(l1: f64, l2: f64) -> SkewProduct {
    let lambda = Observable::PerBranch(vec![
        crate::expr::Expression::constant(l1),
        crate::expr::Expression::constant(l2),
    ]);
    SkewProduct::new(
        IntervalMap::doubling(),
        Observable::constant(1.0),
        lambda,
        1.0,
        Some(&[0.0, 0.0]),
    )
    .expect("positive constants")
}

/// A three-branch full Markov map with non-constant derivative.
pub fn wavy_three() -> IntervalMap {
    IntervalMap::new(
        "wavy-3",
        vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        &[
            "3*x + 0.1*sin(3*pi*x)",
            "3*x - 1 - 0.1*sin(3*pi*x)",
            "3*x - 2 + 0.1*sin(3*pi*x)",
        ],
        None,
    )
    .expect("wavy-3 is a valid Markov map")
}
