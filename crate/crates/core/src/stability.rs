//! Monte Carlo estimators: tail of the invariant graph, local basin
//! fractions, stability indices and fibre Lyapunov exponents.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    classify_point, graph_sign_classify, invariant_graph_value, BasinLabel, ClassifyOptions,
    DynamicsError, GraphValue, SkewProduct,
};
use crate::numeric::{linear_fit, RegressionFit};
use crate::thermo::{
    equilibrium_integral, loynes_exponent, Discretization, Potential, PotentialSpec, Term,
    ThermoError, TransferOperator,
};

const CHUNK: usize = 1 << 16;
const MIN_TAIL_HITS: usize = 100;
const MIN_BALL_MASS: f64 = 1e-6;
const MAX_UNDECIDED: f64 = 0.1;
const TAIL_GRAPH_TOL: f64 = 1e-6;
const GRAPH_MAX_TERMS: usize = 5000;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("only {hits} samples exceed M = {m} (need {needed})")]
    InsufficientTail {
        m: f64,
        hits: usize,
        needed: usize,
        counts: Vec<(f64, usize)>,
        samples: usize,
    },
    #[error("mu(B_r(x)) = {mass:e} is below the sampling floor at x = {x}, r = {r}")]
    RejectionStall { x: f64, r: f64, mass: f64 },
    #[error("undecided fraction {undecided} exceeds 0.1 at r = {r}")]
    Inconclusive {
        r: f64,
        undecided: f64,
        partial: Vec<ScaleCounts>,
    },
    #[error("point ({x}, {t}) is not above the invariant graph ({label:?})")]
    WrongSide { x: f64, t: f64, label: BasinLabel },
    #[error("invariant graph is not finite at x = {x}")]
    GraphNotFinite { x: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// The measure `μ` as a sampling procedure.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerMeasure {
    /// Uniform on `[0, 1]`; the SRB measure of constant-slope full-branch maps.
    LebesgueSrb,
    /// Piecewise-constant density with the given cell masses on equal cells.
    UlamDensity(Arc<CellDistribution>),
}

/// Cell masses on `n` equal cells of `[0, 1]` with their running totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistribution {
    cumulative: Vec<f64>,
}

impl CellDistribution {
    pub fn from_masses(masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        let mut cumulative = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for m in masses {
            acc += m / total;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;
        CellDistribution { cumulative }
    }

    pub fn cells(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.cells();
        let pos = x.clamp(0.0, 1.0) * n as f64;
        let i = (pos as usize).min(n - 1);
        let frac = pos - i as f64;
        self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.cells();
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .saturating_sub(1)
            .min(n - 1);
        let (lo, hi) = (self.cumulative[i], self.cumulative[i + 1]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        (i as f64 + frac.clamp(0.0, 1.0)) / n as f64
    }
}

/// A seeded sampler; `(seed, stream)` determines every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub measure: SamplerMeasure,
    pub seed: u64,
    pub stream: u64,
}

impl SamplerSpec {
    pub fn lebesgue(seed: u64, stream: u64) -> Self {
        SamplerSpec {
            measure: SamplerMeasure::LebesgueSrb,
            seed,
            stream,
        }
    }

    /// Stationary cell masses of the Ulam operator for `phi`.
    pub fn ulam_density(
        sp: &SkewProduct,
        phi: &PotentialSpec,
        cells: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self, StabilityError> {
        let op = TransferOperator::build(sp.base(), &phi.potential(), Discretization::Ulam(cells))?;
        Ok(SamplerSpec {
            measure: SamplerMeasure::UlamDensity(Arc::new(CellDistribution::from_masses(
                &op.measure_weights(),
            ))),
            seed,
            stream,
        })
    }

    /// Lebesgue for SRB on constant-slope full-branch maps, Ulam otherwise.
    pub fn for_system(
        sp: &SkewProduct,
        phi: &PotentialSpec,
        seed: u64,
    ) -> Result<Self, StabilityError> {
        let srb = matches!(phi.kind, crate::thermo::PotentialKind::Srb);
        if srb && sp.base().is_linear_full_branch() {
            Ok(SamplerSpec::lebesgue(seed, 0))
        } else {
            SamplerSpec::ulam_density(sp, phi, 8192, seed, 0)
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        SamplerSpec {
            stream,
            ..self.clone()
        }
    }

    /// Generator for sub-stream `sub` of this sampler's stream.
    pub fn rng(&self, sub: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream.wrapping_shl(32) ^ sub);
        rng
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.measure {
            SamplerMeasure::LebesgueSrb => rng.gen::<f64>(),
            SamplerMeasure::UlamDensity(d) => d.quantile(rng.gen::<f64>()),
        }
    }

    /// `μ([a, b])`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        match &self.measure {
            SamplerMeasure::LebesgueSrb => (b.min(1.0) - a.max(0.0)).max(0.0),
            SamplerMeasure::UlamDensity(d) => d.cdf(b) - d.cdf(a),
        }
    }

    /// A draw from `μ` conditioned on `[a, b]`, by inverting the restricted
    /// distribution function.
    pub fn draw_in<R: Rng>(&self, rng: &mut R, a: f64, b: f64) -> f64 {
        match &self.measure {
            SamplerMeasure::LebesgueSrb => rng.gen_range(a..=b),
            SamplerMeasure::UlamDensity(d) => {
                let (lo, hi) = (d.cdf(a), d.cdf(b));
                d.quantile(lo + (hi - lo) * rng.gen::<f64>()).clamp(a, b)
            }
        }
    }
}

/// `n` i.i.d. draws from `μ`.
pub fn sample_mu(sampler: &SamplerSpec, n: usize) -> Vec<f64> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = sampler.rng(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(move |_| sampler.draw(&mut rng))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Tail regression of `−log μ(u > M)` on `log M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub fit: RegressionFit,
    /// `(M, number of samples with u > M)`.
    pub counts: Vec<(f64, usize)>,
    pub samples: usize,
    /// Samples with a divergent (or undetermined) graph value, counted as
    /// exceeding every `M`.
    pub divergent: usize,
}

/// Slope of `−log μ̂(u > M)` against `log M`, an estimate of `s*`.
pub fn empirical_tail_exponent(
    sp: &SkewProduct,
    sampler: &SamplerSpec,
    n_samples: usize,
    m_grid: &[f64],
) -> Result<TailFit, StabilityError> {
    if m_grid.len() < 3 || m_grid.windows(2).any(|w| !(w[0] < w[1])) || m_grid[0] <= 0.0 {
        return Err(StabilityError::InvalidParameters(
            "M grid needs at least 3 increasing positive values".into(),
        ));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let zero = || (vec![0usize; m_grid.len()], 0usize);
    let (hits, divergent) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sampler.rng(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let (mut hits, mut divergent) = zero();
            for _ in 0..len {
                let x = sampler.draw(&mut rng);
                let u = match invariant_graph_value(sp, x, TAIL_GRAPH_TOL, GRAPH_MAX_TERMS) {
                    Ok(GraphValue::Finite { u, .. }) => u,
                    _ => {
                        divergent += 1;
                        f64::INFINITY
                    }
                };
                for (h, &m) in hits.iter_mut().zip(m_grid) {
                    if u > m {
                        *h += 1;
                    }
                }
            }
            (hits, divergent)
        })
        .reduce(zero, |(mut a, da), (b, db)| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            (a, da + db)
        });
    let counts: Vec<(f64, usize)> = m_grid.iter().copied().zip(hits.iter().copied()).collect();
    let (m_top, top) = *counts.last().expect("grid is nonempty");
    if top < MIN_TAIL_HITS {
        return Err(StabilityError::InsufficientTail {
            m: m_top,
            hits: top,
            needed: MIN_TAIL_HITS,
            counts,
            samples: n_samples,
        });
    }
    let xs: Vec<f64> = m_grid.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = hits
        .iter()
        .map(|&h| -(h as f64 / n_samples as f64).ln())
        .collect();
    let fit = linear_fit(&xs, &ys).expect("distinct abscissae");
    Ok(TailFit {
        fit,
        counts,
        samples: n_samples,
        divergent,
    })
}

/// Classification counts for one ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleCounts {
    pub r: f64,
    pub minus: usize,
    pub plus: usize,
    pub undecided: usize,
    pub samples: usize,
}

impl ScaleCounts {
    pub fn sigma_minus(&self) -> f64 {
        self.minus as f64 / self.samples as f64
    }

    pub fn sigma_plus(&self) -> f64 {
        self.plus as f64 / self.samples as f64
    }

    pub fn undecided_fraction(&self) -> f64 {
        self.undecided as f64 / self.samples as f64
    }
}

/// Fractions of `B_r(x, t)` (with `x′ ~ μ` restricted to the ball and `t′`
/// uniform) in each basin.
#[allow(clippy::too_many_arguments)]
pub fn local_fraction(
    sp: &SkewProduct,
    sampler: &SamplerSpec,
    opts: &ClassifyOptions,
    x: f64,
    t: f64,
    r: f64,
    n_samples: usize,
) -> Result<ScaleCounts, StabilityError> {
    if !(r > 0.0) || n_samples == 0 {
        return Err(StabilityError::InvalidParameters(
            "radius and sample count must be positive".into(),
        ));
    }
    let (a, b) = ((x - r).max(0.0), (x + r).min(1.0));
    let mass = sampler.mass(a, b);
    if mass < MIN_BALL_MASS {
        return Err(StabilityError::RejectionStall { x, r, mass });
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let zero = || [0usize; 3];
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sampler.rng(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut k = zero();
            for _ in 0..len {
                let xp = sampler.draw_in(&mut rng, a, b);
                let tp = rng.gen_range(t - r..=t + r);
                match classify_point(sp, xp, tp, opts) {
                    BasinLabel::Minus => k[0] += 1,
                    BasinLabel::Plus => k[1] += 1,
                    BasinLabel::Undecided(_) => k[2] += 1,
                }
            }
            k
        })
        .reduce(zero, |mut a, b| {
            (0..3).for_each(|i| a[i] += b[i]);
            a
        });
    Ok(ScaleCounts {
        r,
        minus: counts[0],
        plus: counts[1],
        undecided: counts[2],
        samples: n_samples,
    })
}

/// Fitted index for one side of the fibre.
#[derive(Debug, Clone, PartialEq)]
pub enum SideIndex {
    /// Slope of `log Σ̂` against `log r` over the scales with `Σ̂ > 0`.
    Fit(RegressionFit),
    /// `Σ̂ = 0` at every scale.
    Infinite,
    /// Fewer than three scales with `Σ̂ > 0`.
    Insufficient { positive_scales: usize },
}

impl SideIndex {
    pub fn slope(&self) -> Option<f64> {
        match self {
            SideIndex::Fit(f) => Some(f.slope),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEstimate {
    pub x: f64,
    pub t: f64,
    pub scales: Vec<ScaleCounts>,
    pub minus: SideIndex,
    pub plus: SideIndex,
}

/// The default radii: 8 geometric scales from `1e-2` down to `1e-4`.
pub fn default_r_schedule() -> Vec<f64> {
    (0..8)
        .map(|k| 10f64.powf(-2.0 - 2.0 * k as f64 / 7.0))
        .collect()
}

fn side_index(scales: &[ScaleCounts], pick: impl Fn(&ScaleCounts) -> f64) -> SideIndex {
    let (xs, ys): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .filter(|s| pick(s) > 0.0)
        .map(|s| (s.r.ln(), pick(s).ln()))
        .unzip();
    match xs.len() {
        0 => SideIndex::Infinite,
        n if n < 3 => SideIndex::Insufficient { positive_scales: n },
        _ => SideIndex::Fit(linear_fit(&xs, &ys).expect("distinct radii")),
    }
}

/// Regressions of `log Σ̂±` on `log r`; sub-stream `k` of `sampler`
/// serves scale `k`.
pub fn estimate_stability_index(
    sp: &SkewProduct,
    sampler: &SamplerSpec,
    opts: &ClassifyOptions,
    x: f64,
    t: f64,
    r_schedule: &[f64],
    n_per_r: usize,
) -> Result<StabilityEstimate, StabilityError> {
    if r_schedule.len() < 4 || r_schedule.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(StabilityError::InvalidParameters(
            "r schedule needs at least 4 decreasing radii".into(),
        ));
    }
    let mut scales = Vec::with_capacity(r_schedule.len());
    for (k, &r) in r_schedule.iter().enumerate() {
        let sub = sampler.with_stream(sampler.stream.wrapping_add((k as u64 + 1) << 16));
        let counts = local_fraction(sp, &sub, opts, x, t, r, n_per_r)?;
        scales.push(counts);
        if counts.undecided_fraction() > MAX_UNDECIDED {
            return Err(StabilityError::Inconclusive {
                r,
                undecided: counts.undecided_fraction(),
                partial: scales,
            });
        }
    }
    Ok(StabilityEstimate {
        x,
        t,
        minus: side_index(&scales, ScaleCounts::sigma_minus),
        plus: side_index(&scales, ScaleCounts::sigma_plus),
        scales,
    })
}

/// `s* ∫ log λ dμ_φ / ∫ log |T′| dμ_φ`, together with `s*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedIndex {
    pub sigma: f64,
    pub s_star: f64,
    pub int_log_lambda: f64,
    pub int_log_derivative: f64,
}

pub fn predicted_stability_index(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    disc: Discretization,
) -> Result<PredictedIndex, StabilityError> {
    let s_star = loynes_exponent(sp, phi, disc)?.s_star;
    let psi = phi.potential();
    let log_lambda = Potential::zero().with(1.0, Term::Log(sp.lambda().clone()));
    let log_deriv = Potential::zero().with(1.0, Term::LogAbsDerivative);
    let int_log_lambda = equilibrium_integral(sp.base(), &psi, &log_lambda, disc)?;
    let int_log_derivative = equilibrium_integral(sp.base(), &psi, &log_deriv, disc)?;
    Ok(PredictedIndex {
        sigma: s_star * int_log_lambda / int_log_derivative,
        s_star,
        int_log_lambda,
        int_log_derivative,
    })
}

/// `(1/n) log gⁿ_x(t)` for a point above the graph, accumulated in the log
/// domain.
pub fn fibre_lyapunov(sp: &SkewProduct, x: f64, t: f64, n: usize) -> Result<f64, StabilityError> {
    if n == 0 {
        return Err(StabilityError::InvalidParameters(
            "n must be positive".into(),
        ));
    }
    let label = graph_sign_classify(sp, x, t, 1e-9);
    if label != BasinLabel::Plus {
        return Err(StabilityError::WrongSide { x, t, label });
    }
    let mut log_t = t.ln();
    let mut x = x;
    for _ in 0..n {
        let (f, l) = sp.fibre_coefficients(x);
        // t' = t/λ − f  ⇒  log t' = log t − log λ + log(1 − λ f / t)
        log_t += -l.ln() + (-(l * f) * (-log_t).exp()).ln_1p();
        x = sp.base().step(x);
    }
    Ok(log_t / n as f64)
}

/// [`estimate_stability_index`] at `t = u(x)`.
pub fn on_graph_index_probe(
    sp: &SkewProduct,
    sampler: &SamplerSpec,
    opts: &ClassifyOptions,
    x: f64,
    r_schedule: &[f64],
    n_per_r: usize,
) -> Result<StabilityEstimate, StabilityError> {
    let u = invariant_graph_value(sp, x, 1e-12, GRAPH_MAX_TERMS)?
        .finite()
        .ok_or(StabilityError::GraphNotFinite { x })?;
    estimate_stability_index(sp, sampler, opts, x, u, r_schedule, n_per_r)
}

/// A `μ`-typical base point with a finite graph value, drawn from
/// sub-stream `sub`.
pub fn typical_point(
    sp: &SkewProduct,
    sampler: &SamplerSpec,
    sub: u64,
) -> Result<(f64, f64), StabilityError> {
    let mut rng = sampler.rng(sub);
    for _ in 0..1000 {
        let x = sampler.draw(&mut rng);
        if let Ok(GraphValue::Finite { u, .. }) =
            invariant_graph_value(sp, x, 1e-12, GRAPH_MAX_TERMS)
        {
            return Ok((x, u));
        }
    }
    Err(StabilityError::GraphNotFinite { x: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::thermo::DEFAULT_DISCRETIZATION;

    #[test]
    fn lebesgue_mean_and_determinism() {
        let s = SamplerSpec::lebesgue(42, 0);
        let xs = sample_mu(&s, 1_000_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.002);
        let again = sample_mu(&s, 1_000_000);
        assert!(xs
            .iter()
            .zip(&again)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let other = sample_mu(&s.with_stream(1), 16);
        assert_ne!(&xs[..16], &other[..]);
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn ulam_sampler_for_doubling_is_uniform() {
        let sp = models::paper_example();
        let s = SamplerSpec::ulam_density(&sp, &PotentialSpec::srb(), 1024, 3, 0).unwrap();
        assert!(ks_uniform(sample_mu(&s, 100_000)) <= 0.01);
        let mass = s.mass(0.25, 0.5);
        assert!((mass - 0.25).abs() < 1e-9);
        let mut rng = s.rng(0);
        for _ in 0..1000 {
            let y = s.draw_in(&mut rng, 0.3, 0.31);
            assert!((0.3..=0.31).contains(&y));
        }
    }

    #[test]
    fn bounded_graph_has_no_tail() {
        let sp = models::constant_fibre(0.5, 1.0);
        let s = SamplerSpec::lebesgue(1, 0);
        let r = empirical_tail_exponent(&sp, &s, 10_000, &[2.0, 4.0, 8.0]);
        assert!(matches!(
            r,
            Err(StabilityError::InsufficientTail { hits: 0, .. })
        ));
    }

    #[test]
    fn tail_fit_on_synthetic_power_law() {
        // two-level λ with f = 1 has s* = 1; the local slope approaches it
        // only for M in the hundreds
        let sp = models::two_level_lambda(0.5, 1.5);
        let s = SamplerSpec::lebesgue(9, 0);
        let r = empirical_tail_exponent(&sp, &s, 200_000, &[64.0, 128.0, 256.0, 512.0]).unwrap();
        assert!((r.fit.slope - 1.0).abs() < 0.15, "{:?}", r);
    }

    #[test]
    fn local_fractions_far_from_graph() {
        let sp = models::constant_fibre(0.5, 1.0);
        let opts = ClassifyOptions::for_spec(&sp);
        let s = SamplerSpec::lebesgue(5, 0);
        let below = local_fraction(&sp, &s, &opts, 0.4, -5.0, 0.1, 5000).unwrap();
        assert_eq!(below.minus, 5000);
        let above = local_fraction(&sp, &s, &opts, 0.4, 7.0, 0.1, 5000).unwrap();
        assert_eq!(above.plus, 5000);
        let on = local_fraction(&sp, &s, &opts, 0.4, 1.0, 0.1, 5000).unwrap();
        assert_eq!(on.minus + on.plus + on.undecided, on.samples);
        assert!(on.sigma_minus() > 0.4 && on.sigma_minus() < 0.6);
    }

    #[test]
    fn index_conventions() {
        let sp = models::constant_fibre(0.5, 1.0);
        let opts = ClassifyOptions::for_spec(&sp);
        let s = SamplerSpec::lebesgue(5, 0);
        let sched = default_r_schedule();
        assert_eq!(sched.len(), 8);
        assert!((sched[0] - 1e-2).abs() < 1e-15 && (sched[7] - 1e-4).abs() < 1e-15);
        let below = estimate_stability_index(&sp, &s, &opts, 0.4, -5.0, &sched, 2000).unwrap();
        assert_eq!(below.plus, SideIndex::Infinite);
        assert!(below.minus.slope().unwrap().abs() < 1e-12);
        let on = on_graph_index_probe(&sp, &s, &opts, 0.4, &sched, 4000).unwrap();
        assert!(on.minus.slope().unwrap().abs() < 0.1);
        assert!(on.plus.slope().unwrap().abs() < 0.1);
        assert!(matches!(
            estimate_stability_index(&sp, &s, &opts, 0.4, 1.0, &sched[..3], 10),
            Err(StabilityError::InvalidParameters(_))
        ));
    }

    #[test]
    fn predicted_indices() {
        let sp = models::two_level_lambda(0.5, 1.5);
        let p =
            predicted_stability_index(&sp, &PotentialSpec::srb(), DEFAULT_DISCRETIZATION).unwrap();
        let want = 0.5 * 0.75f64.ln() / std::f64::consts::LN_2;
        assert!((p.sigma - want).abs() < 1e-8, "{p:?}");
        let paper = models::paper_example();
        let p = predicted_stability_index(&paper, &PotentialSpec::srb(), DEFAULT_DISCRETIZATION)
            .unwrap();
        assert!(p.sigma < 0.0);
        assert!((p.sigma - p.s_star * p.int_log_lambda / std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_constant_and_paper() {
        let sp = models::constant_fibre(0.5, 1.0);
        for n in [30, 100, 1000] {
            let v = fibre_lyapunov(&sp, 0.3, 2.0, n).unwrap();
            assert!((v - 2f64.ln()).abs() < 1e-6);
        }
        assert!(matches!(
            fibre_lyapunov(&sp, 0.3, 0.5, 10),
            Err(StabilityError::WrongSide { .. })
        ));

        let paper = models::paper_example();
        let (x, u) = typical_point(&paper, &SamplerSpec::lebesgue(17, 0), 0).unwrap();
        let a = fibre_lyapunov(&paper, x, u + 1.0, 100_000).unwrap();
        let b = fibre_lyapunov(&paper, x, u + 1.0, 200_000).unwrap();
        assert!((a - 0.2485).abs() < 0.01, "{a}");
        assert!((a - b).abs() <= 0.01 * a.abs(), "{a} {b}");
    }

    #[test]
    fn stall_on_massless_ball() {
        let d = CellDistribution::from_masses(&[1.0, 0.0, 0.0, 1.0]);
        let s = SamplerSpec {
            measure: SamplerMeasure::UlamDensity(Arc::new(d)),
            seed: 0,
            stream: 0,
        };
        let sp = models::constant_fibre(0.5, 1.0);
        let opts = ClassifyOptions::for_spec(&sp);
        assert!(matches!(
            local_fraction(&sp, &s, &opts, 0.5, 0.0, 0.1, 100),
            Err(StabilityError::RejectionStall { .. })
        ));
    }
}
