//! The spectrum of stability indices: `S(q)`, `α(q) = −S′(q)`,
//! `f = S + qα` and the frontier `q*`.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::SkewProduct;
use crate::numeric::{brent, RootError};
use crate::thermo::{
    equilibrium_integral, pressure, Discretization, Potential, PotentialKind, PotentialSpec, Term,
    ThermoError, TransferOperator,
};

const S_TOL: f64 = 1e-12;
const S_LIMIT: f64 = 1024.0;
const ALPHA_STEP: f64 = 1e-4;
const ROUTE_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MultifractalError {
    #[error("no sign change for {what} on [{lo}, {hi}]")]
    BracketFailure {
        what: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("alpha routes disagree at q = {q}: equilibrium ratio {ratio}, finite difference {difference}")]
    RouteDisagreement { q: f64, ratio: f64, difference: f64 },
    #[error("q* = {q_star} lies outside (0, 1) for the SRB measure")]
    QStarOutOfRange { q_star: f64 },
    #[error("pressure residual {residual:e} at S({q}) exceeds 1e-9")]
    Residual { q: f64, residual: f64 },
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Root(#[from] RootError),
}

/// `−S log |T′| + q s* log λ`.
pub fn spectrum_potential(sp: &SkewProduct, s: f64, q: f64, s_star: f64) -> Potential {
    Potential::zero()
        .with(-s, Term::LogAbsDerivative)
        .tilted(q * s_star, sp.lambda())
}

fn residual_at(
    sp: &SkewProduct,
    s: f64,
    q: f64,
    s_star: f64,
    disc: Discretization,
) -> Result<f64, ThermoError> {
    Ok(pressure(sp.base(), &spectrum_potential(sp, s, q, s_star), disc)?.p)
}

/// The root `S` of `P(−S log |T′| + q s* log λ) = 0`.
pub fn s_of_q(
    sp: &SkewProduct,
    q: f64,
    s_star: f64,
    disc: Discretization,
) -> Result<f64, MultifractalError> {
    let g = |s: f64| residual_at(sp, s, q, s_star, disc);
    // P decreases in S, so look for g(lo) > 0 > g(hi), doubling outwards
    // from [0, 4]
    let (mut lo, mut hi) = (0.0, 4.0);
    let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
    while !(g_lo >= 0.0 && g_hi <= 0.0) {
        if lo < -S_LIMIT || hi > S_LIMIT {
            return Err(MultifractalError::BracketFailure {
                what: "S(q)",
                lo,
                hi,
            });
        }
        if g_lo < 0.0 {
            lo = if lo == 0.0 { -4.0 } else { 2.0 * lo };
            g_lo = g(lo)?;
        }
        if g_hi > 0.0 {
            hi *= 2.0;
            g_hi = g(hi)?;
        }
    }
    let root = brent(|s| g(s).ok(), lo, hi, 1e-15, S_TOL, 200)?;
    if root.residual > 1e-9 {
        return Err(MultifractalError::Residual {
            q,
            residual: root.residual,
        });
    }
    Ok(root.x)
}

/// Both estimates of `α(q) = −S′(q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRoutes {
    pub s: f64,
    /// `−s* ∫ log λ dμ_q / ∫ log |T′| dμ_q`.
    pub ratio: f64,
    /// `−(S(q + h) − S(q − h)) / 2h`, `h = 1e-4`.
    pub difference: f64,
    pub int_log_lambda: f64,
    pub int_log_derivative: f64,
}

pub fn alpha_routes(
    sp: &SkewProduct,
    q: f64,
    s_star: f64,
    disc: Discretization,
) -> Result<AlphaRoutes, MultifractalError> {
    let s = s_of_q(sp, q, s_star, disc)?;
    let psi = spectrum_potential(sp, s, q, s_star);
    let log_lambda = Potential::zero().with(1.0, Term::Log(sp.lambda().clone()));
    let log_deriv = Potential::zero().with(1.0, Term::LogAbsDerivative);
    let int_log_lambda = equilibrium_integral(sp.base(), &psi, &log_lambda, disc)?;
    let int_log_derivative = equilibrium_integral(sp.base(), &psi, &log_deriv, disc)?;
    let up = s_of_q(sp, q + ALPHA_STEP, s_star, disc)?;
    let down = s_of_q(sp, q - ALPHA_STEP, s_star, disc)?;
    Ok(AlphaRoutes {
        s,
        ratio: -s_star * int_log_lambda / int_log_derivative,
        difference: -(up - down) / (2.0 * ALPHA_STEP),
        int_log_lambda,
        int_log_derivative,
    })
}

/// `α(q)` by the equilibrium ratio, checked against the finite difference.
pub fn alpha_of_q(
    sp: &SkewProduct,
    q: f64,
    s_star: f64,
    disc: Discretization,
) -> Result<f64, MultifractalError> {
    let r = alpha_routes(sp, q, s_star, disc)?;
    check_routes(q, &r)?;
    Ok(r.ratio)
}

fn check_routes(q: f64, r: &AlphaRoutes) -> Result<(), MultifractalError> {
    if (r.ratio - r.difference).abs() > ROUTE_TOL {
        return Err(MultifractalError::RouteDisagreement {
            q,
            ratio: r.ratio,
            difference: r.difference,
        });
    }
    Ok(())
}

/// `∫ log λ dμ_q` from the eigenvectors of the operator at `(S(q), q)`.
pub fn int_log_lambda_at(
    sp: &SkewProduct,
    q: f64,
    s_star: f64,
    disc: Discretization,
) -> Result<f64, MultifractalError> {
    let s = s_of_q(sp, q, s_star, disc)?;
    let op = TransferOperator::build(sp.base(), &spectrum_potential(sp, s, q, s_star), disc)?;
    let lambda = sp.lambda();
    let base = sp.base();
    Ok(op.integrate(|x| Ok(lambda.eval(base, x)?.ln()))?)
}

/// The root of `q ↦ ∫ log λ dμ_q`. For the SRB measure it must lie in
/// `(0, 1)`.
pub fn q_star(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    s_star: f64,
    disc: Discretization,
) -> Result<f64, MultifractalError> {
    let g = |q: f64| int_log_lambda_at(sp, q, s_star, disc);
    let (mut lo, mut hi) = (-4.0, 4.0);
    let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
    while !(g_lo < 0.0 && g_hi > 0.0) {
        if lo < -64.0 || hi > 64.0 {
            return Err(MultifractalError::BracketFailure { what: "q*", lo, hi });
        }
        if g_lo >= 0.0 {
            lo *= 2.0;
            g_lo = g(lo)?;
        }
        if g_hi <= 0.0 {
            hi *= 2.0;
            g_hi = g(hi)?;
        }
    }
    let root = brent(|q| g(q).ok(), lo, hi, 1e-14, 1e-10, 200)?;
    if matches!(phi.kind, PotentialKind::Srb) && !(root.x > 0.0 && root.x < 1.0) {
        return Err(MultifractalError::QStarOutOfRange { q_star: root.x });
    }
    Ok(root.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub q: f64,
    pub s: f64,
    pub alpha: f64,
    /// `S + q α`.
    pub f_dim: f64,
    pub int_log_lambda: f64,
    /// `q < q*`.
    pub valid: bool,
    /// Finite-difference estimate of `α`, for audit.
    pub alpha_difference: f64,
}

#[derive(Debug)]
pub struct Spectrum {
    pub q_star: f64,
    pub s_star: f64,
    /// Points in grid order; failures are kept with their error.
    pub entries: Vec<(f64, Result<SpectrumPoint, MultifractalError>)>,
}

impl Spectrum {
    pub fn points(&self) -> impl Iterator<Item = &SpectrumPoint> {
        self.entries.iter().filter_map(|(_, r)| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (f64, &MultifractalError)> {
        self.entries
            .iter()
            .filter_map(|(q, r)| r.as_ref().err().map(|e| (*q, e)))
    }

    /// Second differences of `S` over consecutive computed points.
    pub fn s_second_differences(&self) -> Vec<f64> {
        let pts: Vec<&SpectrumPoint> = self.points().collect();
        pts.windows(3)
            .map(|w| {
                let (h0, h1) = (w[1].q - w[0].q, w[2].q - w[1].q);
                h1 * ((w[2].s - w[1].s) / h1 - (w[1].s - w[0].s) / h0)
            })
            .collect()
    }

    pub fn s_strictly_convex(&self) -> bool {
        self.s_second_differences().iter().all(|&d| d > 0.0)
    }

    /// `f` is concave as a function of `α` on valid points.
    pub fn f_concave(&self) -> bool {
        let mut pts: Vec<&SpectrumPoint> = self.points().filter(|p| p.valid).collect();
        pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        let slopes: Vec<f64> = pts
            .windows(2)
            .filter(|w| w[1].alpha > w[0].alpha)
            .map(|w| (w[1].f_dim - w[0].f_dim) / (w[1].alpha - w[0].alpha))
            .collect();
        slopes.windows(2).all(|w| w[1] <= w[0] + 1e-6)
    }

    /// `α` strictly decreasing in `q` on valid points.
    pub fn alpha_decreasing(&self) -> bool {
        let pts: Vec<&SpectrumPoint> = self.points().filter(|p| p.valid).collect();
        pts.windows(2).all(|w| w[1].alpha < w[0].alpha)
    }
}

/// 81 points on `[−4, q* − 0.05]`.
pub fn default_q_grid(q_star: f64) -> Vec<f64> {
    let (a, b) = (-4.0, q_star - 0.05);
    (0..81).map(|i| a + (b - a) * i as f64 / 80.0).collect()
}

pub fn spectrum_point(
    sp: &SkewProduct,
    q: f64,
    s_star: f64,
    q_star: f64,
    disc: Discretization,
) -> Result<SpectrumPoint, MultifractalError> {
    let r = alpha_routes(sp, q, s_star, disc)?;
    check_routes(q, &r)?;
    Ok(SpectrumPoint {
        q,
        s: r.s,
        alpha: r.ratio,
        f_dim: r.s + q * r.ratio,
        int_log_lambda: r.int_log_lambda,
        valid: q < q_star,
        alpha_difference: r.difference,
    })
}

/// Evaluates the spectrum on `q_grid` (computed in parallel, returned in
/// grid order).
pub fn spectrum(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    s_star: f64,
    q_grid: &[f64],
    disc: Discretization,
) -> Result<Spectrum, MultifractalError> {
    let q_star = q_star(sp, phi, s_star, disc)?;
    let entries = q_grid
        .par_iter()
        .map(|&q| (q, spectrum_point(sp, q, s_star, q_star, disc)))
        .collect();
    Ok(Spectrum {
        q_star,
        s_star,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::thermo::{loynes_exponent, DEFAULT_DISCRETIZATION};

    const D: Discretization = DEFAULT_DISCRETIZATION;

    fn paper_s_star() -> f64 {
        let sp = models::paper_example();
        loynes_exponent(&sp, &PotentialSpec::srb(), D)
            .unwrap()
            .s_star
    }

    #[test]
    fn anchors() {
        let sp = models::paper_example();
        let s_star = paper_s_star();
        assert!((s_of_q(&sp, 0.0, s_star, D).unwrap() - 1.0).abs() < 1e-8);
        assert!((s_of_q(&sp, 1.0, s_star, D).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_lambda_is_linear() {
        let c: f64 = 0.6;
        let sp = models::constant_fibre(c, 1.0);
        let s_star = 1.7;
        let ln2 = std::f64::consts::LN_2;
        for q in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let s = s_of_q(&sp, q, s_star, D).unwrap();
            assert!((s - (1.0 + q * s_star * c.ln() / ln2)).abs() < 1e-9);
            let a = alpha_of_q(&sp, q, s_star, D).unwrap();
            assert!((a + s_star * c.ln() / ln2).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_at_zero_is_typical_index() {
        let sp = models::paper_example();
        let s_star = paper_s_star();
        let a = alpha_of_q(&sp, 0.0, s_star, D).unwrap();
        let integral = ((0.8 + 0.5775f64.sqrt()) / 2.0).ln();
        assert!((a + s_star * integral / std::f64::consts::LN_2).abs() < 1e-6);
        assert!(a > 0.0);
    }

    #[test]
    fn routes_agree_at_random_q() {
        use rand::{Rng, SeedableRng};
        let sp = models::paper_example();
        let s_star = paper_s_star();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let q: f64 = rng.gen_range(-3.0..1.0);
            let r = alpha_routes(&sp, q, s_star, D).unwrap();
            assert!((r.ratio - r.difference).abs() <= 1e-3, "{q}: {r:?}");
        }
    }

    #[test]
    fn q_star_properties() {
        let sp = models::paper_example();
        let s_star = paper_s_star();
        let qs = q_star(&sp, &PotentialSpec::srb(), s_star, D).unwrap();
        assert!(qs > 0.0 && qs < 1.0);
        assert!(int_log_lambda_at(&sp, qs, s_star, D).unwrap().abs() < 1e-6);
        assert!(int_log_lambda_at(&sp, qs - 0.5, s_star, D).unwrap() < 0.0);
        assert!(int_log_lambda_at(&sp, qs + 0.5, s_star, D).unwrap() > 0.0);
    }

    #[test]
    fn spectrum_shape() {
        let sp = models::paper_example();
        let s_star = paper_s_star();
        let qs = q_star(&sp, &PotentialSpec::srb(), s_star, D).unwrap();
        let mut grid: Vec<f64> = (0..21).map(|i| -2.0 + 0.1 * i as f64).collect();
        grid.push(qs + 0.1);
        let spec = spectrum(&sp, &PotentialSpec::srb(), s_star, &grid, D).unwrap();
        assert_eq!(spec.failures().count(), 0);
        let pts: Vec<&SpectrumPoint> = spec.points().collect();
        let at_zero = pts.iter().find(|p| p.q.abs() < 1e-12).unwrap();
        assert!((at_zero.f_dim - at_zero.s).abs() < 1e-15);
        assert!((at_zero.f_dim - 1.0).abs() < 1e-8);
        assert!(!pts.last().unwrap().valid);
        assert!(pts
            .iter()
            .filter(|p| p.valid)
            .all(|p| p.alpha > 0.0 && p.int_log_lambda < 0.0));
        assert!(pts.iter().all(|p| p.f_dim <= at_zero.s + 1e-6));
        assert!(spec.s_strictly_convex());
        assert!(spec.alpha_decreasing());
        assert!(spec.f_concave());
    }
}
