//! Piecewise expanding Markov maps of the unit interval.

use crate::expr::{ExprError, Expression};

use super::DynamicsError;

/// Grid size used for every sampled check on the base map and observables.
pub const CHECK_GRID: usize = 4096;

const MARKOV_TOL: f64 = 1e-9;
const PREIMAGE_TOL: f64 = 1e-12;
const PREIMAGE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub map: Expression,
    pub derivative: Expression,
    /// True when `derivative` was obtained symbolically from `map`.
    pub derived: bool,
}

/// A uniformly expanding Markov map of `[0, 1]`.
///
/// Branch `j` acts on `[t_j, t_{j+1})`; the last branch also owns `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMap {
    name: String,
    partition: Vec<f64>,
    branches: Vec<Branch>,
    images: Vec<(f64, f64)>,
    expansion_floor: f64,
    mixing_assumed: bool,
    linear_full_branch: bool,
}

impl IntervalMap {
    /// Builds and validates a map from its partition and branch formulas.
    /// Missing derivatives are derived symbolically.
    pub fn new(
        name: impl Into<String>,
        partition: Vec<f64>,
        maps: &[&str],
        derivatives: Option<&[&str]>,
    ) -> Result<Self, DynamicsError> {
        let maps = maps
            .iter()
            .map(|s| Expression::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let derivatives = derivatives
            .map(|ds| {
                ds.iter()
                    .map(|s| Expression::parse(s))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Self::from_expressions(name, partition, maps, derivatives)
    }

    pub fn from_expressions(
        name: impl Into<String>,
        partition: Vec<f64>,
        maps: Vec<Expression>,
        derivatives: Option<Vec<Expression>>,
    ) -> Result<Self, DynamicsError> {
        let name = name.into();
        if partition.len() < 2
            || partition[0] != 0.0
            || *partition.last().unwrap() != 1.0
            || partition.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(DynamicsError::InvalidMap(
                "partition must increase strictly from 0 to 1".into(),
            ));
        }
        if maps.len() != partition.len() - 1 {
            return Err(DynamicsError::InvalidMap(format!(
                "{} branches for {} partition intervals",
                maps.len(),
                partition.len() - 1
            )));
        }
        if let Some(ds) = &derivatives {
            if ds.len() != maps.len() {
                return Err(DynamicsError::InvalidMap(
                    "derivative count differs from branch count".into(),
                ));
            }
        }
        let mut branches = Vec::with_capacity(maps.len());
        for (j, map) in maps.into_iter().enumerate() {
            let branch = match &derivatives {
                Some(ds) => Branch {
                    map,
                    derivative: ds[j].clone(),
                    derived: false,
                },
                None => Branch {
                    derivative: map.derivative()?,
                    map,
                    derived: true,
                },
            };
            branches.push(branch);
        }

        let mut m = IntervalMap {
            name,
            partition,
            branches,
            images: Vec::new(),
            expansion_floor: 0.0,
            mixing_assumed: true,
            linear_full_branch: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// `T(x) = 2x mod 1`.
    pub fn doubling() -> Self {
        Self::linear(2).expect("doubling map is valid")
    }

    /// `T(x) = b x mod 1` with `b` full linear branches.
    pub fn linear(b: usize) -> Result<Self, DynamicsError> {
        if b < 2 {
            return Err(DynamicsError::InvalidMap(
                "linear map needs at least two branches".into(),
            ));
        }
        let partition: Vec<f64> = (0..=b).map(|j| j as f64 / b as f64).collect();
        let maps: Vec<String> = (0..b)
            .map(|j| {
                if j == 0 {
                    format!("{b}*x")
                } else {
                    format!("{b}*x - {j}")
                }
            })
            .collect();
        let maps: Vec<&str> = maps.iter().map(String::as_str).collect();
        let slope = b.to_string();
        let derivs = vec![slope.as_str(); b];
        let name = if b == 2 {
            "doubling".to_string()
        } else {
            format!("linear-{b}")
        };
        Self::new(name, partition, &maps, Some(&derivs))
    }

    fn validate(&mut self) -> Result<(), DynamicsError> {
        let mut images = Vec::with_capacity(self.branches.len());
        for j in 0..self.branches.len() {
            let (a, b) = (self.partition[j], self.partition[j + 1]);
            let ya = self.eval_branch(j, a)?;
            let yb = self.eval_branch(j, b)?;
            for y in [ya, yb] {
                let nearest = self
                    .partition
                    .iter()
                    .map(|t| (t - y).abs())
                    .fold(f64::INFINITY, f64::min);
                if nearest > MARKOV_TOL {
                    return Err(DynamicsError::InvalidMap(format!(
                        "branch {j} image endpoint {y} is not a partition point"
                    )));
                }
            }
            images.push((ya.min(yb), ya.max(yb)));
        }

        let mut floor = f64::INFINITY;
        let mut all_constant = true;
        for j in 0..self.branches.len() {
            let (a, b) = (self.partition[j], self.partition[j + 1]);
            let mut sign = 0.0f64;
            let mut first_slope = None;
            for k in 0..=CHECK_GRID {
                let x = a + (b - a) * k as f64 / CHECK_GRID as f64;
                let d = self.branches[j].derivative.eval(x)?;
                if d == 0.0 || (sign != 0.0 && d.signum() != sign) {
                    return Err(DynamicsError::InvalidMap(format!(
                        "branch {j} is not strictly monotone near x = {x}"
                    )));
                }
                sign = d.signum();
                floor = floor.min(d.abs());
                match first_slope {
                    None => first_slope = Some(d.abs()),
                    Some(s) if (s - d.abs()).abs() > 1e-12 * s => all_constant = false,
                    _ => {}
                }
            }
        }
        if floor <= 1.0 {
            return Err(DynamicsError::InvalidMap(format!(
                "map is not expanding: inf |T'| = {floor}"
            )));
        }

        let full = images.iter().all(|&(lo, hi)| lo == 0.0 && hi == 1.0)
            || images
                .iter()
                .all(|&(lo, hi)| lo.abs() < MARKOV_TOL && (hi - 1.0).abs() < MARKOV_TOL);
        self.images = images;
        self.expansion_floor = floor;
        self.mixing_assumed = !self.transition_matrix_is_primitive();
        self.linear_full_branch = full && all_constant;
        Ok(())
    }

    // A Markov map is mixing when its 0/1 interval transition matrix is primitive.
    fn transition_matrix_is_primitive(&self) -> bool {
        let b = self.branches.len();
        let mut adj = vec![vec![false; b]; b];
        for (row, &(lo, hi)) in adj.iter_mut().zip(&self.images) {
            for (cell, w) in row.iter_mut().zip(self.partition.windows(2)) {
                *cell = w[0] >= lo - MARKOV_TOL && w[1] <= hi + MARKOV_TOL;
            }
        }
        // Wielandt bound: primitive iff A^((b-1)^2 + 1) is positive.
        let steps = (b - 1) * (b - 1) + 1;
        let mut power = adj.clone();
        for _ in 1..steps {
            let mut next = vec![vec![false; b]; b];
            for i in 0..b {
                for k in 0..b {
                    if power[i][k] {
                        for j in 0..b {
                            next[i][j] |= adj[k][j];
                        }
                    }
                }
            }
            power = next;
        }
        power.iter().all(|row| row.iter().all(|&v| v))
    }

    /// Text that identifies the map up to formula spelling.
    pub fn fingerprint(&self) -> String {
        let mut out = format!("{}|{:?}", self.name, self.partition);
        for b in &self.branches {
            out.push_str(&format!("|{};{}", b.map, b.derivative));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Sampled `inf |T'|`, the expansion floor `θ⁻¹ > 1`.
    pub fn expansion_floor(&self) -> f64 {
        self.expansion_floor
    }

    /// Set when the interval transition matrix is not primitive, so mixing
    /// could not be confirmed and is only assumed.
    pub fn mixing_assumed(&self) -> bool {
        self.mixing_assumed
    }

    /// True for maps whose branches are all full and affine with a common
    /// slope, where Lebesgue measure is the SRB measure.
    pub fn is_linear_full_branch(&self) -> bool {
        self.linear_full_branch
    }

    /// Closure of the image of branch `j`.
    pub fn image(&self, j: usize) -> (f64, f64) {
        self.images[j]
    }

    /// Index of the branch whose half-open interval `[t_j, t_{j+1})` holds `x`.
    pub fn branch_of(&self, x: f64) -> usize {
        let b = self.branches.len();
        if x >= 1.0 {
            return b - 1;
        }
        // partition_point returns the count of t_j <= x, at least 1 for x >= 0
        self.partition[1..b].partition_point(|&t| t <= x)
    }

    /// True when `x` coincides with an interior partition point.
    pub fn on_partition_point(&self, x: f64) -> bool {
        self.partition[1..self.partition.len() - 1].contains(&x)
    }

    /// Branch `j` formula at `x`, without clamping.
    pub fn eval_branch(&self, j: usize, x: f64) -> Result<f64, ExprError> {
        self.branches[j].map.eval(x)
    }

    /// `T(x)` for `x ∈ [0, 1]`, clamped to `[0, 1]`.
    pub fn apply(&self, x: f64) -> f64 {
        let j = self.branch_of(x);
        // Branch formulas were validated on their whole interval; an
        // evaluation failure here would mean x lies outside [0, 1].
        let y = self.eval_branch(j, x).unwrap_or(f64::NAN);
        y.clamp(0.0, 1.0)
    }

    /// `|T'(x)|` using the branch that owns `x`.
    pub fn abs_derivative(&self, x: f64) -> f64 {
        self.abs_derivative_on(self.branch_of(x), x)
    }

    pub fn abs_derivative_on(&self, branch: usize, y: f64) -> f64 {
        self.branches[branch]
            .derivative
            .eval(y)
            .map(f64::abs)
            .unwrap_or(f64::NAN)
    }

    /// `T(x)` followed by a refresh of the lowest mantissa bits.
    ///
    /// Expanding maps shift information out of the mantissa: in binary
    /// floating point every orbit of `2x mod 1` reaches `0` after at most
    /// 54 steps. Every orbit in this crate is generated with this step, which
    /// overwrites the lowest 12 mantissa bits of `T(x)` with bits of a hash of
    /// `T(x)`, a relative change below `2⁻⁴⁰`. The step is a deterministic function of `x`, so orbits are
    /// reproducible and `step^(a+b) = step^b ∘ step^a` exactly; exact zeros
    /// are left untouched.
    pub fn step(&self, x: f64) -> f64 {
        refresh_low_bits(self.apply(x))
    }

    /// One preimage per branch whose image covers `x`, as `(branch, y)`.
    pub fn inverse_branches(&self, x: f64) -> Result<Vec<(usize, f64)>, DynamicsError> {
        let mut out = Vec::with_capacity(self.branches.len());
        for j in 0..self.branches.len() {
            let (lo, hi) = self.images[j];
            if x < lo - PREIMAGE_TOL || x > hi + PREIMAGE_TOL {
                continue;
            }
            out.push((j, self.preimage_on(j, x)?));
        }
        Ok(out)
    }

    /// Solves `T(y) = x` on branch `j` by safeguarded Newton iteration.
    pub fn preimage_on(&self, j: usize, x: f64) -> Result<f64, DynamicsError> {
        let (mut a, mut b) = (self.partition[j], self.partition[j + 1]);
        let g = |y: f64| self.eval_branch(j, y).map(|v| v - x);
        let ga = g(a)?;
        if ga.abs() <= PREIMAGE_TOL {
            return Ok(a);
        }
        let gb = g(b)?;
        if gb.abs() <= PREIMAGE_TOL {
            return Ok(b);
        }
        if ga.signum() == gb.signum() {
            return Err(DynamicsError::Convergence {
                what: "preimage (point outside branch image)",
                residual: ga.abs().min(gb.abs()),
            });
        }
        let increasing = gb > 0.0;
        let mut y = 0.5 * (a + b);
        let mut residual = f64::INFINITY;
        for _ in 0..PREIMAGE_MAX_ITER {
            let gy = g(y)?;
            residual = gy.abs();
            if residual <= PREIMAGE_TOL {
                return Ok(y);
            }
            if (gy > 0.0) == increasing {
                b = y;
            } else {
                a = y;
            }
            if b - a <= f64::EPSILON * b.abs().max(1e-300) {
                // bracket exhausted; the closer end is the best available
                let (ga, gb) = (g(a)?.abs(), g(b)?.abs());
                let best = if ga < gb { (a, ga) } else { (b, gb) };
                if best.1 <= PREIMAGE_TOL {
                    return Ok(best.0);
                }
                residual = best.1;
                break;
            }
            let slope = self.branches[j].derivative.eval(y)?;
            let newton = y - gy / slope;
            y = if newton > a && newton < b && newton.is_finite() {
                newton
            } else {
                0.5 * (a + b)
            };
        }
        Err(DynamicsError::Convergence {
            what: "preimage",
            residual,
        })
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const REFRESH_BITS: u32 = 12;

#[inline]
fn refresh_low_bits(y: f64) -> f64 {
    if y == 0.0 || !y.is_normal() {
        return y;
    }
    let bits = y.to_bits();
    let mask = (1u64 << REFRESH_BITS) - 1;
    let fresh = splitmix64(bits) & mask;
    f64::from_bits((bits & !mask) | fresh).min(1.0)
}
