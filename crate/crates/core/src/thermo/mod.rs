//! Transfer operators, topological pressure and equilibrium states.

mod cache;
mod operator;
mod potential;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynamics::{Check, DynamicsError, IntervalMap, SkewProduct, Verdict};
use crate::expr::ExprError;
use crate::numeric::{brent, RootError};

pub use operator::{Discretization, SparseMatrix, TransferOperator};
pub use potential::{Potential, PotentialKind, PotentialSpec, Term};

/// The discretisation used when none is given.
pub const DEFAULT_DISCRETIZATION: Discretization = Discretization::Collocation(256);

const FD_STEP: f64 = 1e-5;
const INTEGRAL_AGREEMENT: f64 = 1e-3;
const S_HI_LIMIT: f64 = 256.0;

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("invalid discretisation: {0}")]
    InvalidDiscretization(String),
    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("leading eigenvector of the {method} operator is not positive")]
    NotPositive { method: Discretization },
    #[error("equilibrium integral routes disagree: eigenvectors {spectral}, pressure derivative {derivative}")]
    MethodDisagreement { spectral: f64, derivative: f64 },
    #[error("no root of the pressure function on [0, {s_hi}]")]
    NoRoot { s_hi: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone)]
pub struct PressureResult {
    pub p: f64,
    pub operator: TransferOperator,
}

pub fn pressure(
    map: &IntervalMap,
    psi: &Potential,
    disc: Discretization,
) -> Result<PressureResult, ThermoError> {
    let operator = TransferOperator::build(map, psi, disc)?;
    Ok(PressureResult {
        p: operator.log_eigenvalue(),
        operator,
    })
}

/// Pressures from both discretisations and `|p_collocation − p_ulam|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureAgreement {
    pub collocation: f64,
    pub ulam: f64,
    pub difference: f64,
}

pub fn pressure_both(
    map: &IntervalMap,
    psi: &Potential,
    n_collocation: usize,
    n_ulam: usize,
) -> Result<PressureAgreement, ThermoError> {
    let c = pressure(map, psi, Discretization::Collocation(n_collocation))?.p;
    let u = pressure(map, psi, Discretization::Ulam(n_ulam))?.p;
    Ok(PressureAgreement {
        collocation: c,
        ulam: u,
        difference: (c - u).abs(),
    })
}

/// Records `P(φ)` as the offset, so that the returned potential has zero
/// pressure under `disc`.
pub fn normalise_potential(
    map: &IntervalMap,
    phi: &PotentialSpec,
    disc: Discretization,
) -> Result<PotentialSpec, ThermoError> {
    let base = PotentialSpec {
        pressure_offset: 0.0,
        normalised: false,
        ..phi.clone()
    };
    let p = pressure(map, &base.potential(), disc)?.p;
    Ok(PotentialSpec {
        normalised: true,
        pressure_offset: p,
        ..base
    })
}

/// Both estimates of `∫ g dμ_ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumIntegral {
    /// `Σ lᵢ g(xᵢ) rᵢ / Σ lᵢ rᵢ`.
    pub spectral: f64,
    /// `(P(ψ + εg) − P(ψ − εg)) / 2ε`.
    pub derivative: f64,
}

pub fn equilibrium_integral_routes(
    map: &IntervalMap,
    psi: &Potential,
    g: &Potential,
    disc: Discretization,
) -> Result<EquilibriumIntegral, ThermoError> {
    let op = TransferOperator::build(map, psi, disc)?;
    let spectral = op.integrate(|x| g.eval(map, x))?;
    let up = pressure(map, &psi.clone().plus(&g.clone().scaled(FD_STEP)), disc)?.p;
    let down = pressure(map, &psi.clone().plus(&g.clone().scaled(-FD_STEP)), disc)?.p;
    Ok(EquilibriumIntegral {
        spectral,
        derivative: (up - down) / (2.0 * FD_STEP),
    })
}

/// `∫ g dμ_ψ` for the equilibrium state of `ψ`, checked against the
/// derivative of the pressure.
pub fn equilibrium_integral(
    map: &IntervalMap,
    psi: &Potential,
    g: &Potential,
    disc: Discretization,
) -> Result<f64, ThermoError> {
    let r = equilibrium_integral_routes(map, psi, g, disc)?;
    if (r.spectral - r.derivative).abs() > INTEGRAL_AGREEMENT {
        return Err(ThermoError::MethodDisagreement {
            spectral: r.spectral,
            derivative: r.derivative,
        });
    }
    Ok(r.spectral)
}

/// `p(s) = P(φ + s log λ)`.
pub fn tilted_pressure(
    sp: &SkewProduct,
    phi: &Potential,
    s: f64,
    disc: Discretization,
) -> Result<f64, ThermoError> {
    Ok(pressure(sp.base(), &phi.clone().tilted(s, sp.lambda()), disc)?.p)
}

/// Central difference of `p` at `s` with step `1e-5`.
pub fn tilted_pressure_slope(
    sp: &SkewProduct,
    phi: &Potential,
    s: f64,
    disc: Discretization,
) -> Result<f64, ThermoError> {
    let up = tilted_pressure(sp, phi, s + FD_STEP, disc)?;
    let down = tilted_pressure(sp, phi, s - FD_STEP, disc)?;
    Ok((up - down) / (2.0 * FD_STEP))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoynesExponent {
    pub s_star: f64,
    /// `p(s*)` at the accepted root.
    pub p_at_root: f64,
    pub slope_at_root: f64,
    pub slope_at_zero: f64,
    pub bracket: (f64, f64),
    /// `p′(s*) ≤ 0`: the root is not the transversal crossing the theory
    /// predicts.
    pub degenerate: bool,
}

/// The positive root of `p(s) = P(φ + s log λ)`.
///
/// For normalised `φ` the bracket starts where `p < 0` just right of 0 and
/// doubles until `p > 0`. Otherwise the bracket doubles from `[0, 1]` until
/// `p` changes sign. Either way `s` stops at 256.
pub fn loynes_exponent(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    disc: Discretization,
) -> Result<LoynesExponent, ThermoError> {
    let psi = phi.potential();
    let p = |s: f64| tilted_pressure(sp, &psi, s, disc);
    let slope_at_zero = tilted_pressure_slope(sp, &psi, 0.0, disc)?;
    if !(slope_at_zero < 0.0) {
        return Err(ThermoError::Hypothesis(format!(
            "p'(0) = int log lambda dmu = {slope_at_zero} is not negative"
        )));
    }
    let p0 = p(0.0)?;
    let (mut lo, mut p_lo) = (0.0, p0);
    if p0.abs() <= 1e-8 {
        // step off the trivial root at 0
        let mut s = 1.0;
        loop {
            let v = p(s)?;
            if v < 0.0 {
                lo = s;
                p_lo = v;
                break;
            }
            s *= 0.5;
            if s < 1e-9 {
                return Err(ThermoError::Hypothesis(
                    "p is not negative to the right of 0".into(),
                ));
            }
        }
    }
    let sign = p_lo.signum();
    let mut hi = lo.max(0.5);
    let mut p_hi;
    loop {
        hi *= 2.0;
        if hi > S_HI_LIMIT {
            return Err(ThermoError::NoRoot { s_hi: S_HI_LIMIT });
        }
        p_hi = p(hi)?;
        if p_hi.signum() != sign || p_hi == 0.0 {
            break;
        }
        lo = hi;
    }
    let root = brent(|s| p(s).ok(), lo, hi, 1e-14, 1e-11, 200)?;
    let slope_at_root = tilted_pressure_slope(sp, &psi, root.x, disc)?;
    Ok(LoynesExponent {
        s_star: root.x,
        p_at_root: p(root.x)?,
        slope_at_root,
        slope_at_zero,
        bracket: (lo, hi),
        degenerate: !(slope_at_root > 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressurePoint {
    pub s: f64,
    pub p: f64,
    pub eigenvalue: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureCurve {
    pub method: Discretization,
    pub points: Vec<PressurePoint>,
    /// Second differences `h_+ [Δp_+/h_+ − Δp_−/h_−]`, equal to the usual
    /// second differences on uniform grids.
    pub second_differences: Vec<f64>,
    pub cache_file: Option<PathBuf>,
    pub cached_points: usize,
}

impl PressureCurve {
    /// All second differences are at least `−1e-8`.
    pub fn is_convex(&self) -> bool {
        self.second_differences.iter().all(|&d| d >= -1e-8)
    }
}

/// `p(s)` on a sorted grid. With `cache_dir`, previously computed values
/// for the same system and discretisation are reused and new ones saved.
pub fn pressure_curve(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    s_grid: &[f64],
    disc: Discretization,
    cache_dir: Option<&Path>,
) -> Result<PressureCurve, ThermoError> {
    if s_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ThermoError::Domain(
            "s grid must be strictly increasing".into(),
        ));
    }
    let psi = phi.potential();
    let parts = [
        sp.base().fingerprint(),
        format!("{psi}"),
        format!("{}", sp.lambda()),
        disc.method_name().to_string(),
        disc.size().to_string(),
    ];
    let part_refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    let cache = cache_dir.map(|d| cache::CurveCache::new(d, &part_refs));
    let mut known = cache.as_ref().map(|c| c.load()).unwrap_or_default();
    let mut cached_points = 0;
    let mut points = Vec::with_capacity(s_grid.len());
    let mut fresh = false;
    for &s in s_grid {
        if let Some(pt) = known.get(&s.to_bits()) {
            cached_points += 1;
            points.push(*pt);
            continue;
        }
        let op = TransferOperator::build(sp.base(), &psi.clone().tilted(s, sp.lambda()), disc)?;
        let pt = PressurePoint {
            s,
            p: op.log_eigenvalue(),
            eigenvalue: op.eigenvalue,
            residual: op.residual,
        };
        known.insert(s.to_bits(), pt);
        points.push(pt);
        fresh = true;
    }
    if let (Some(c), true) = (&cache, fresh) {
        c.store(&known, disc.method_name(), disc.size());
    }
    let second_differences = points
        .windows(3)
        .map(|w| {
            let (h0, h1) = (w[1].s - w[0].s, w[2].s - w[1].s);
            h1 * ((w[2].p - w[1].p) / h1 - (w[1].p - w[0].p) / h0)
        })
        .collect();
    Ok(PressureCurve {
        method: disc,
        points,
        second_differences,
        cache_file: cache.map(|c| c.path().to_path_buf()),
        cached_points,
    })
}

/// Fills in the `μ` half of (H3) using the equilibrium state of `φ`;
/// returns `∫ log λ dμ_φ`.
pub fn complete_report(
    sp: &mut SkewProduct,
    phi: &PotentialSpec,
    disc: Discretization,
) -> Result<f64, ThermoError> {
    let psi = phi.potential();
    let g = Potential::zero().with(1.0, Term::Log(sp.lambda().clone()));
    let value = equilibrium_integral(sp.base(), &psi, &g, disc)?;
    let check = Check::new(if value < 0.0 {
        Verdict::Holds
    } else {
        Verdict::Fails
    })
    .witness("int log lambda dmu", value)
    .note(format!("equilibrium state of {phi}, {disc}"));
    sp.hypothesis_report_mut().h3_mu_contracting = check;
    Ok(value)
}
