//! Scalar root finding and least squares.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{a}, {b}] (values {fa:e}, {fb:e})")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("root finder stalled after {iterations} iterations (|g| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("function evaluation failed at {x}")]
    Evaluation { x: f64 },
}

/// A root located by [`brent`], with `|g(x)| = residual`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Brent's method on a sign-changing bracket. Stops when `|g| <= ftol` or
/// the bracket is narrower than `xtol`; the bracket end with the smaller
/// residual is returned in the second case.
pub fn brent<G>(
    mut g: G,
    a: f64,
    b: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Root, RootError>
where
    G: FnMut(f64) -> Option<f64>,
{
    let eval = |g: &mut G, x: f64| {
        g(x).filter(|v| v.is_finite())
            .ok_or(RootError::Evaluation { x })
    };
    let (mut a, mut b) = (a, b);
    let mut fa = eval(&mut g, a)?;
    let mut fb = eval(&mut g, b)?;
    if fa.abs() <= ftol {
        return Ok(Root {
            x: a,
            residual: fa.abs(),
            iterations: 0,
        });
    }
    if fb.abs() <= ftol {
        return Ok(Root {
            x: b,
            residual: fb.abs(),
            iterations: 0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { a, b, fa, fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol {
            return Ok(Root {
                x: b,
                residual: fb.abs(),
                iterations: it,
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = eval(&mut g, b)?;
    }
    Err(RootError::NoConvergence {
        iterations: max_iter,
        residual: fb.abs(),
    })
}

/// Ordinary least squares fit of `y = slope · x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub standard_error: f64,
    pub points: usize,
}

/// `None` with fewer than two points or when all `x` coincide.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<RegressionFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let standard_error = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(RegressionFit {
        slope,
        intercept,
        r_squared,
        standard_error,
        points: n,
    })
}
