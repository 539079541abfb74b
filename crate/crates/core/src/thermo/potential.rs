use std::fmt;

use super::ThermoError;
use crate::dynamics::{IntervalMap, Observable};
use crate::expr::Expression;

/// One summand of a potential, evaluated branch by branch at preimages.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `log |T′(y)|`
    LogAbsDerivative,
    /// `log g(y)`; `g` must be positive.
    Log(Observable),
    /// `g(y)`
    Plain(Observable),
}

impl Term {
    pub fn eval_on(&self, map: &IntervalMap, branch: usize, y: f64) -> Result<f64, ThermoError> {
        Ok(match self {
            Term::LogAbsDerivative => map.abs_derivative_on(branch, y).ln(),
            Term::Log(g) => {
                let v = g.eval_on(branch, y)?;
                if !(v > 0.0) {
                    return Err(ThermoError::Domain(format!("log of {v} at x = {y}")));
                }
                v.ln()
            }
            Term::Plain(g) => g.eval_on(branch, y)?,
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::LogAbsDerivative => f.write_str("log|T'|"),
            Term::Log(g) => write!(f, "log({g})"),
            Term::Plain(g) => write!(f, "({g})"),
        }
    }
}

/// `ψ = c + Σ aₖ termₖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub constant: f64,
    pub terms: Vec<(f64, Term)>,
}

impl Potential {
    pub fn zero() -> Self {
        Potential {
            constant: 0.0,
            terms: Vec::new(),
        }
    }

    /// `−log |T′|`.
    pub fn srb() -> Self {
        Potential::zero().with(-1.0, Term::LogAbsDerivative)
    }

    pub fn constant(c: f64) -> Self {
        Potential::zero().shifted(c)
    }

    pub fn expression(e: Expression) -> Self {
        Potential::zero().with(1.0, Term::Plain(Observable::Formula(e)))
    }

    pub fn with(mut self, coef: f64, term: Term) -> Self {
        if coef != 0.0 {
            self.terms.push((coef, term));
        }
        self
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// `self + s log λ`.
    pub fn tilted(self, s: f64, lambda: &Observable) -> Self {
        self.with(s, Term::Log(lambda.clone()))
    }

    /// `self + other`, merging constants.
    pub fn plus(mut self, other: &Potential) -> Self {
        self.constant += other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.constant *= a;
        for t in &mut self.terms {
            t.0 *= a;
        }
        self
    }

    pub fn eval_on(&self, map: &IntervalMap, branch: usize, y: f64) -> Result<f64, ThermoError> {
        let mut acc = self.constant;
        for (a, t) in &self.terms {
            acc += a * t.eval_on(map, branch, y)?;
        }
        Ok(acc)
    }

    /// Evaluation with the branch that owns `x`.
    pub fn eval(&self, map: &IntervalMap, x: f64) -> Result<f64, ThermoError> {
        self.eval_on(map, map.branch_of(x), x)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for (a, t) in &self.terms {
            write!(f, " + {a}*{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `φ = −log |T′|`
    Srb,
    Custom(Expression),
}

/// A base potential together with the pressure subtracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub normalised: bool,
    pub pressure_offset: f64,
}

impl PotentialSpec {
    pub fn srb() -> Self {
        PotentialSpec {
            kind: PotentialKind::Srb,
            normalised: false,
            pressure_offset: 0.0,
        }
    }

    pub fn custom(e: Expression) -> Self {
        PotentialSpec {
            kind: PotentialKind::Custom(e),
            normalised: false,
            pressure_offset: 0.0,
        }
    }

    /// The potential with `pressure_offset` subtracted.
    pub fn potential(&self) -> Potential {
        let base = match &self.kind {
            PotentialKind::Srb => Potential::srb(),
            PotentialKind::Custom(e) => Potential::expression(e.clone()),
        };
        base.shifted(-self.pressure_offset)
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PotentialKind::Srb => f.write_str("-log|T'|")?,
            PotentialKind::Custom(e) => write!(f, "{e}")?,
        }
        if self.pressure_offset != 0.0 {
            write!(f, " - {}", self.pressure_offset)?;
        }
        Ok(())
    }
}
