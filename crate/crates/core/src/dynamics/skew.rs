//! Fibre data over a base map and the checks on it.

use std::fmt;

use crate::expr::{ExprError, Expression};

use super::map::{IntervalMap, CHECK_GRID};
use super::DynamicsError;

/// A real function on `[0, 1]`, either one formula or one per branch of the
/// base map. Per-branch observables are evaluated with the branch that owns
/// the point, or with an explicitly given branch at preimages.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Formula(Expression),
    PerBranch(Vec<Expression>),
}

impl Observable {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        Ok(Observable::Formula(Expression::parse(text)?))
    }

    pub fn parse_per_branch(texts: &[&str]) -> Result<Self, ExprError> {
        Ok(Observable::PerBranch(
            texts
                .iter()
                .map(|t| Expression::parse(t))
                .collect::<Result<_, _>>()?,
        ))
    }

    pub fn constant(v: f64) -> Self {
        Observable::Formula(Expression::constant(v))
    }

    #[inline]
    pub fn eval_on(&self, branch: usize, x: f64) -> Result<f64, ExprError> {
        match self {
            Observable::Formula(e) => e.eval(x),
            Observable::PerBranch(es) => es[branch].eval(x),
        }
    }

    #[inline]
    pub fn eval(&self, map: &IntervalMap, x: f64) -> Result<f64, ExprError> {
        match self {
            Observable::Formula(e) => e.eval(x),
            Observable::PerBranch(es) => es[map.branch_of(x)].eval(x),
        }
    }

    /// Pointwise natural logarithm.
    pub fn ln(&self) -> Observable {
        match self {
            Observable::Formula(e) => Observable::Formula(e.ln()),
            Observable::PerBranch(es) => {
                Observable::PerBranch(es.iter().map(Expression::ln).collect())
            }
        }
    }

    fn check_branches(&self, map: &IntervalMap) -> Result<(), DynamicsError> {
        if let Observable::PerBranch(es) = self {
            if es.len() != map.branch_count() {
                return Err(DynamicsError::InvalidMap(format!(
                    "observable has {} pieces but the map has {} branches",
                    es.len(),
                    map.branch_count()
                )));
            }
        }
        Ok(())
    }

    /// Min and max over the closed check grid of every branch interval.
    pub fn sampled_range(&self, map: &IntervalMap) -> Result<(f64, f64), ExprError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let t = map.partition();
        for j in 0..map.branch_count() {
            let per_branch = CHECK_GRID / map.branch_count();
            for k in 0..=per_branch {
                let x = t[j] + (t[j + 1] - t[j]) * k as f64 / per_branch as f64;
                let v = self.eval_on(j, x)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Ok((lo, hi))
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Formula(e) => write!(f, "{e}"),
            Observable::PerBranch(es) => {
                f.write_str("[")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "FAILS",
            Verdict::Unknown => "unknown",
        })
    }
}

/// A verdict together with the numbers that support it.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub verdict: Verdict,
    pub witnesses: Vec<(String, f64)>,
    pub note: Option<String>,
}

impl Check {
    pub fn new(verdict: Verdict) -> Self {
        Check {
            verdict,
            witnesses: Vec::new(),
            note: None,
        }
    }

    pub fn witness(mut self, name: &str, value: f64) -> Self {
        self.witnesses.push((name.to_string(), value));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.witnesses
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Sampled verdicts for the four standing hypotheses.
///
/// The `μ` half of (H3) needs an equilibrium state and is filled in by
/// [`crate::thermo::complete_report`]; here it is `Unknown`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub h1_base: Check,
    pub h2_f: Check,
    pub h3_lambda_positive: Check,
    pub h3_mu_contracting: Check,
    pub h3_zeta_expanding: Check,
    pub h4_partially_hyperbolic: Check,
}

impl HypothesisReport {
    /// (H1)–(H3) all hold or are at worst unknown.
    pub fn h1_to_h3_not_failed(&self) -> bool {
        [
            &self.h1_base,
            &self.h2_f,
            &self.h3_lambda_positive,
            &self.h3_mu_contracting,
            &self.h3_zeta_expanding,
        ]
        .iter()
        .all(|c| c.verdict != Verdict::Fails)
    }

    pub fn rows(&self) -> Vec<(&'static str, &Check)> {
        vec![
            ("H1 base map expanding Markov", &self.h1_base),
            ("H2 f > 0", &self.h2_f),
            ("H3 lambda > 0", &self.h3_lambda_positive),
            ("H3 int log lambda dmu < 0", &self.h3_mu_contracting),
            ("H3 int log lambda dzeta > 0", &self.h3_zeta_expanding),
            ("H4 partially hyperbolic", &self.h4_partially_hyperbolic),
        ]
    }
}

/// The skew product `(x, t) ↦ (T x, −f(x) + t / λ(x))`.
#[derive(Debug, Clone)]
pub struct SkewProduct {
    base: IntervalMap,
    f: Observable,
    lambda: Observable,
    log_lambda: Observable,
    holder_alpha: f64,
    sup_f: f64,
    report: HypothesisReport,
}

impl SkewProduct {
    /// Validates `f > 0` and `λ > 0` on the check grid and records the
    /// remaining hypothesis witnesses. `zeta_orbit`, when given, should be a
    /// periodic orbit of the base map used as the (H3) expanding witness.
    pub fn new(
        base: IntervalMap,
        f: Observable,
        lambda: Observable,
        holder_alpha: f64,
        zeta_orbit: Option<&[f64]>,
    ) -> Result<Self, DynamicsError> {
        if !(holder_alpha > 0.0 && holder_alpha <= 1.0) {
            return Err(DynamicsError::InvalidMap(format!(
                "Hölder exponent {holder_alpha} outside (0, 1]"
            )));
        }
        f.check_branches(&base)?;
        lambda.check_branches(&base)?;
        let (f_min, f_max) = f.sampled_range(&base)?;
        let (l_min, l_max) = lambda.sampled_range(&base)?;
        if f_min <= 0.0 {
            return Err(DynamicsError::Hypothesis(format!(
                "f must be positive; sampled min f = {f_min}"
            )));
        }
        if l_min <= 0.0 {
            return Err(DynamicsError::Hypothesis(format!(
                "lambda must be positive; sampled min lambda = {l_min}"
            )));
        }

        let h1 = Check::new(if base.mixing_assumed() {
            Verdict::Unknown
        } else {
            Verdict::Holds
        })
        .witness("inf |T'|", base.expansion_floor())
        .witness("branches", base.branch_count() as f64)
        .note(if base.mixing_assumed() {
            "transition matrix not primitive; mixing assumed"
        } else {
            "Markov, expanding, transition matrix primitive"
        });
        let h2 = Check::new(Verdict::Holds)
            .witness("min f", f_min)
            .witness("max f", f_max);
        let h3_pos = Check::new(Verdict::Holds)
            .witness("min lambda", l_min)
            .witness("max lambda", l_max);
        let h3_mu = Check::new(Verdict::Unknown).note("needs an equilibrium state");
        let h3_zeta = zeta_check(&base, &lambda, l_max, zeta_orbit)?;

        let figure = l_min * base.expansion_floor().powf(holder_alpha);
        let h4 = Check::new(if figure > 1.0 {
            Verdict::Holds
        } else {
            Verdict::Fails
        })
        .witness("m(lambda) m(|T'|)^alpha", figure)
        .witness("alpha", holder_alpha);

        let log_lambda = lambda.ln();
        Ok(SkewProduct {
            base,
            f,
            lambda,
            log_lambda,
            holder_alpha,
            sup_f: f_max,
            report: HypothesisReport {
                h1_base: h1,
                h2_f: h2,
                h3_lambda_positive: h3_pos,
                h3_mu_contracting: h3_mu,
                h3_zeta_expanding: h3_zeta,
                h4_partially_hyperbolic: h4,
            },
        })
    }

    pub fn base(&self) -> &IntervalMap {
        &self.base
    }

    pub fn f(&self) -> &Observable {
        &self.f
    }

    pub fn lambda(&self) -> &Observable {
        &self.lambda
    }

    pub fn log_lambda(&self) -> &Observable {
        &self.log_lambda
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    /// Sampled `sup f`.
    pub fn sup_f(&self) -> f64 {
        self.sup_f
    }

    pub fn hypothesis_report(&self) -> &HypothesisReport {
        &self.report
    }

    pub fn hypothesis_report_mut(&mut self) -> &mut HypothesisReport {
        &mut self.report
    }

    /// `(f(x), λ(x))` with the branch that owns `x`.
    #[inline]
    pub fn fibre_coefficients(&self, x: f64) -> (f64, f64) {
        let j = self.base.branch_of(x);
        // f and λ were checked on every branch interval, so failures only
        // arise for x outside [0, 1]; NaN then propagates to the caller.
        let f = self.f.eval_on(j, x).unwrap_or(f64::NAN);
        let l = self.lambda.eval_on(j, x).unwrap_or(f64::NAN);
        (f, l)
    }
}

fn zeta_check(
    base: &IntervalMap,
    lambda: &Observable,
    l_max: f64,
    orbit: Option<&[f64]>,
) -> Result<Check, DynamicsError> {
    if l_max <= 1.0 {
        return Ok(Check::new(Verdict::Fails)
            .witness("max lambda", l_max)
            .note("log lambda <= 0 everywhere; no invariant measure can expand"));
    }
    let Some(orbit) = orbit.filter(|o| !o.is_empty()) else {
        return Ok(Check::new(Verdict::Unknown).note("no periodic orbit supplied"));
    };
    let mut gap: f64 = 0.0;
    for (i, &x) in orbit.iter().enumerate() {
        let next = orbit[(i + 1) % orbit.len()];
        gap = gap.max((base.apply(x) - next).abs());
    }
    let mut sum = 0.0;
    for &x in orbit {
        sum += lambda.eval(base, x)?.ln();
    }
    let average = sum / orbit.len() as f64;
    let check = Check::new(if gap > 1e-9 {
        Verdict::Unknown
    } else if average > 0.0 {
        Verdict::Holds
    } else {
        Verdict::Fails
    })
    .witness("orbit mean log lambda", average)
    .witness("period", orbit.len() as f64)
    .witness("periodicity defect", gap);
    Ok(if gap > 1e-9 {
        check.note("supplied points are not a periodic orbit")
    } else {
        check
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn paper_example_report() {
        let sp = models::paper_example();
        let r = sp.hypothesis_report();
        let figure = r
            .h4_partially_hyperbolic
            .get("m(lambda) m(|T'|)^alpha")
            .unwrap();
        assert!((figure - 1.1).abs() < 1e-12, "{figure}");
        assert_eq!(r.h4_partially_hyperbolic.verdict, Verdict::Holds);
        let zeta = r.h3_zeta_expanding.get("orbit mean log lambda").unwrap();
        assert!((zeta - (21.0f64 / 20.0).ln()).abs() < 1e-12);
        assert_eq!(r.h3_zeta_expanding.verdict, Verdict::Holds);
        assert_eq!(r.h1_base.verdict, Verdict::Holds);
        assert!((sp.sup_f() - 0.6).abs() < 1e-9);
    }

    #[test]
    fn constant_contraction_has_no_expanding_witness() {
        let sp = models::constant_fibre(0.5, 1.0);
        assert_eq!(
            sp.hypothesis_report().h3_zeta_expanding.verdict,
            Verdict::Fails
        );
    }

    #[test]
    fn rejects_nonpositive_fibre_data() {
        let m = IntervalMap::doubling();
        let bad_f = SkewProduct::new(
            m.clone(),
            Observable::parse("sin(2*pi*x)").unwrap(),
            Observable::constant(0.5),
            1.0,
            None,
        );
        assert!(matches!(bad_f, Err(DynamicsError::Hypothesis(_))));
        let bad_l = SkewProduct::new(
            m,
            Observable::constant(1.0),
            Observable::parse("x - 0.5").unwrap(),
            1.0,
            None,
        );
        assert!(matches!(bad_l, Err(DynamicsError::Hypothesis(_))));
    }

    #[test]
    fn per_branch_observable_uses_owning_branch() {
        let sp = models::two_level_lambda(0.5, 1.5);
        let (_, l) = sp.fibre_coefficients(0.25);
        assert_eq!(l, 0.5);
        let (_, l) = sp.fibre_coefficients(0.5);
        assert_eq!(l, 1.5);
        assert_eq!(sp.lambda().eval_on(0, 0.5).unwrap(), 0.5);
    }
}
