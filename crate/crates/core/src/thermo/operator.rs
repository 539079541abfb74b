//! Finite-rank approximations of weighted transfer operators.

use rayon::prelude::*;

use super::potential::Potential;
use super::ThermoError;
use crate::dynamics::IntervalMap;

const POWER_MAX_ITER: usize = 10_000;
const RAYLEIGH_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

// Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// `∫_a^b g` by 8-point Gauss–Legendre.
pub(crate) fn gauss8<G: FnMut(f64) -> Result<f64, ThermoError>>(
    a: f64,
    b: f64,
    mut g: G,
) -> Result<f64, ThermoError> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * g(mid + half * x)?;
    }
    Ok(acc * half)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discretization {
    /// Piecewise-linear interpolation on the nodes `i / (n − 1)`.
    Collocation(usize),
    /// Cell averages on `n` equal cells.
    Ulam(usize),
}

impl Discretization {
    pub fn size(self) -> usize {
        match self {
            Discretization::Collocation(n) | Discretization::Ulam(n) => n,
        }
    }

    pub fn method_name(self) -> &'static str {
        match self {
            Discretization::Collocation(_) => "collocation",
            Discretization::Ulam(_) => "ulam",
        }
    }

    /// Parses `"collocation"` / `"ulam"` with a size.
    pub fn from_name(name: &str, n: usize) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "collocation" => Some(Discretization::Collocation(n)),
            "ulam" => Some(Discretization::Ulam(n)),
            _ => None,
        }
    }
}

impl std::fmt::Display for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({})", self.method_name(), self.size())
    }
}

/// Nonnegative matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate `(row, col)` entries.
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry pushed") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn mul_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (j, a) in self.row(i) {
                y[j] += a * xi;
            }
        }
    }

    /// Dense copy, row-major; meant for tests on small matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        out
    }
}

/// A discretised transfer operator with its leading eigen-data.
///
/// `left` sums to 1 and `left · right = 1`; both are entrywise positive.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub method: Discretization,
    pub matrix: SparseMatrix,
    pub eigenvalue: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    /// `‖A r − ρ r‖∞ / (ρ ‖r‖∞)`.
    pub residual: f64,
    pub iterations: usize,
}

impl TransferOperator {
    pub fn build(
        map: &IntervalMap,
        psi: &Potential,
        method: Discretization,
    ) -> Result<Self, ThermoError> {
        let n = method.size();
        if n < 16 {
            return Err(ThermoError::InvalidDiscretization(format!(
                "{method} needs at least 16 nodes"
            )));
        }
        let matrix = match method {
            Discretization::Collocation(n) => collocation_matrix(map, psi, n)?,
            Discretization::Ulam(n) => ulam_matrix(map, psi, n)?,
        };
        let (eigenvalue, right, residual, iterations) = leading_right(&matrix)?;
        let mut left = leading_left(&matrix, eigenvalue)?;
        if right.iter().chain(&left).any(|&v| !(v > 0.0)) {
            return Err(ThermoError::NotPositive { method });
        }
        let total: f64 = left.iter().sum();
        left.iter_mut().for_each(|v| *v /= total);
        let pairing: f64 = left.iter().zip(&right).map(|(l, r)| l * r).sum();
        let right = right.into_iter().map(|v| v / pairing).collect();
        Ok(TransferOperator {
            method,
            matrix,
            eigenvalue,
            right,
            left,
            residual,
            iterations,
        })
    }

    pub fn log_eigenvalue(&self) -> f64 {
        self.eigenvalue.ln()
    }

    /// Weights of the equilibrium state, `lᵢ rᵢ`, summing to 1.
    pub fn measure_weights(&self) -> Vec<f64> {
        let w: Vec<f64> = self
            .left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| l * r)
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    /// The point or cell of index `i`: node `i/(n−1)` for collocation,
    /// cell `[i/n, (i+1)/n]` for Ulam.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        match self.method {
            Discretization::Collocation(n) => {
                let x = i as f64 / (n - 1) as f64;
                (x, x)
            }
            Discretization::Ulam(n) => (i as f64 / n as f64, (i + 1) as f64 / n as f64),
        }
    }

    /// `∫ g dμ` from the eigenvectors: node values for collocation, cell
    /// averages for Ulam.
    pub fn integrate<G>(&self, mut g: G) -> Result<f64, ThermoError>
    where
        G: FnMut(f64) -> Result<f64, ThermoError>,
    {
        let w = self.measure_weights();
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let (a, b) = self.cell(i);
            let value = if a == b {
                g(a)?
            } else {
                gauss8(a, b, &mut g)? / (b - a)
            };
            acc += wi * value;
        }
        Ok(acc)
    }
}

fn collocation_matrix(
    map: &IntervalMap,
    psi: &Potential,
    n: usize,
) -> Result<SparseMatrix, ThermoError> {
    let scale = (n - 1) as f64;
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / scale;
            let mut row = Vec::with_capacity(2 * map.branch_count());
            for (k, y) in map.inverse_branches(x)? {
                let weight = psi.eval_on(map, k, y)?.exp();
                let pos = (y * scale).clamp(0.0, scale);
                let m = (pos.floor() as usize).min(n - 2);
                let theta = pos - m as f64;
                row.push((i, m, weight * (1.0 - theta)));
                if theta > 0.0 {
                    row.push((i, m + 1, weight * theta));
                }
            }
            Ok(row)
        })
        .collect::<Result<_, ThermoError>>()?;
    Ok(SparseMatrix::from_triplets(
        n,
        rows.into_iter().flatten().collect(),
    ))
}

/// `A[i][j] = (1/h) ∫_{cell j ∩ T⁻¹(cell i)} e^{ψ(y)} |T′(y)| dy`, the
/// cell-average projection of `L_ψ` acting on densities.
fn ulam_matrix(map: &IntervalMap, psi: &Potential, n: usize) -> Result<SparseMatrix, ThermoError> {
    let h = 1.0 / n as f64;
    let parts = map.partition();
    let per_branch: Vec<Vec<(usize, usize, f64)>> = (0..map.branch_count())
        .into_par_iter()
        .map(|k| {
            let (a, b) = (parts[k], parts[k + 1]);
            let (c, d) = map.image(k);
            let mut cuts = vec![a, b];
            let first = (a * n as f64).ceil() as usize;
            let last = (b * n as f64).floor() as usize;
            cuts.extend((first..=last).map(|j| j as f64 * h));
            let first = (c * n as f64).ceil() as usize;
            let last = (d * n as f64).floor() as usize;
            for m in first..=last {
                let target = m as f64 * h;
                if target > c && target < d {
                    cuts.push(map.preimage_on(k, target)?);
                }
            }
            cuts.retain(|&y| y >= a && y <= b);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut out = Vec::with_capacity(cuts.len());
            for w in cuts.windows(2) {
                let (u, v) = (w[0], w[1]);
                if v - u <= 1e-15 {
                    continue;
                }
                let mid = 0.5 * (u + v);
                let j = ((mid * n as f64) as usize).min(n - 1);
                let image = map.eval_branch(k, mid)?.clamp(0.0, 1.0);
                let i = ((image * n as f64) as usize).min(n - 1);
                let mass = gauss8(u, v, |y| {
                    Ok(psi.eval_on(map, k, y)?.exp() * map.abs_derivative_on(k, y))
                })?;
                out.push((i, j, mass / h));
            }
            Ok(out)
        })
        .collect::<Result<_, ThermoError>>()?;
    Ok(SparseMatrix::from_triplets(
        n,
        per_branch.into_iter().flatten().collect(),
    ))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn rayleigh(v: &[f64], av: &[f64]) -> f64 {
    let num: f64 = v.iter().zip(av).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|a| a * a).sum();
    num / den
}

/// Power iteration from the all-ones vector.
fn leading_right(a: &SparseMatrix) -> Result<(f64, Vec<f64>, f64, usize), ThermoError> {
    power_iteration(a.dim(), |x, y| a.mul(x, y))
}

fn leading_left(a: &SparseMatrix, rho: f64) -> Result<Vec<f64>, ThermoError> {
    let (rho_t, v, _, _) = power_iteration(a.dim(), |x, y| a.mul_transpose(x, y))?;
    if (rho_t - rho).abs() > 1e-8 * rho {
        return Err(ThermoError::NonConvergence {
            iterations: POWER_MAX_ITER,
            residual: (rho_t - rho).abs() / rho,
        });
    }
    Ok(v)
}

fn power_iteration<M>(n: usize, mut apply: M) -> Result<(f64, Vec<f64>, f64, usize), ThermoError>
where
    M: FnMut(&[f64], &mut [f64]),
{
    let mut v = vec![1.0; n];
    let mut av = vec![0.0; n];
    let mut rho_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        apply(&v, &mut av);
        let rho = rayleigh(&v, &av);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ThermoError::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        let vmax = sup_norm(&v);
        residual = v
            .iter()
            .zip(&av)
            .map(|(x, y)| (y - rho * x).abs())
            .fold(0.0f64, f64::max)
            / (rho * vmax);
        let settled = (rho - rho_prev).abs() <= RAYLEIGH_TOL * rho;
        if settled && residual <= 0.1 * RESIDUAL_TOL {
            return Ok((rho, v, residual, it));
        }
        rho_prev = rho;
        let scale = sup_norm(&av);
        for (x, y) in v.iter_mut().zip(&av) {
            *x = y / scale;
        }
    }
    if residual <= RESIDUAL_TOL {
        apply(&v, &mut av);
        return Ok((rayleigh(&v, &av), v, residual, POWER_MAX_ITER));
    }
    Err(ThermoError::NonConvergence {
        iterations: POWER_MAX_ITER,
        residual,
    })
}
