//! The `riddle` subcommands. Each writes its files under the output
//! directory and returns summary lines for the terminal.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use riddle_core::dynamics::{
    basin_grid, basin_grid_by, default_escape_threshold, invariant_graph_value, BasinGrid,
    BasinLabel, ClassifyOptions, GraphValue, SkewProduct, Verdict,
};
use riddle_core::multifractal::{default_q_grid, q_star, spectrum_point, Spectrum};
use riddle_core::stability::{
    default_r_schedule, empirical_tail_exponent, estimate_stability_index,
    predicted_stability_index, typical_point, SamplerSpec, ScaleCounts, SideIndex, StabilityError,
};
use riddle_core::thermo::{
    complete_report, loynes_exponent, pressure, pressure_curve, Discretization, PotentialSpec,
};

use crate::config::{PointX, RunConfig};
use crate::output::{num, CsvTable, Panel, Svg};
use crate::CliError;

const STREAM_LOYNES: u64 = 1;
const STREAM_STABILITY: u64 = 2;
/// `|t − u(x)|` below this counts as a point on the graph.
const ON_GRAPH_TOL: f64 = 1e-12;
const GRAPH_TOL: f64 = 1e-10;
const GRAPH_MAX_TERMS: usize = 5000;

/// A loaded configuration with command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub config_hash: String,
}

impl Run {
    pub fn new(mut config: RunConfig, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.output_dir = out;
        }
        let config_hash = config.content_hash();
        Run {
            out_dir: config.output_dir.clone(),
            config,
            config_hash,
        }
    }

    pub fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        Ok(Run::new(RunConfig::load(path)?, out, seed))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn table(
        &self,
        name: &str,
        meta: &[(&str, String)],
        header: &[&str],
    ) -> Result<CsvTable, CliError> {
        CsvTable::create(&self.path(name), &self.config_hash, meta, header)
    }

    fn system(&self) -> Result<(SkewProduct, PotentialSpec, Discretization), CliError> {
        Ok((
            self.config.skew_product()?,
            self.config.potential()?,
            self.config.discretization()?,
        ))
    }
}

/// What a command produced. `failure` is set when output was written but
/// the command must still exit nonzero.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

pub fn check(run: &Run) -> Result<Outcome, CliError> {
    let (mut sp, phi, disc) = run.system()?;
    let mut out = Outcome::default();
    if let Err(e) = complete_report(&mut sp, &phi, disc) {
        out.line(format!("warning: int log lambda dmu not computed: {e}"));
    }
    let report = sp.hypothesis_report();
    for (label, check) in report.rows() {
        let mut s = format!("{label}: {}", check.verdict);
        for (name, v) in &check.witnesses {
            s.push_str(&format!("  {name} = {v:.6}"));
        }
        if let Some(note) = &check.note {
            s.push_str(&format!("  ({note})"));
        }
        out.line(s);
    }
    let failed: Vec<&str> = report
        .rows()
        .into_iter()
        .filter(|(label, c)| c.verdict == Verdict::Fails && !label.starts_with("H4"))
        .map(|(label, _)| label)
        .collect();
    if report.h4_partially_hyperbolic.verdict == Verdict::Fails {
        out.line("warning: H4 fails; the skew product is not partially hyperbolic");
    }
    if !failed.is_empty() {
        out.failure = Some(CliError::Hypothesis(format!(
            "failed: {}",
            failed.join(", ")
        )));
    }
    Ok(out)
}

/// Graph values at the centres of `nx` cells of `x_range`.
pub fn column_graph(sp: &SkewProduct, x_range: (f64, f64), nx: usize) -> Vec<Option<GraphValue>> {
    (0..nx)
        .into_par_iter()
        .map(|i| {
            let x = x_range.0 + (x_range.1 - x_range.0) * (i as f64 + 0.5) / nx as f64;
            invariant_graph_value(sp, x, GRAPH_TOL, GRAPH_MAX_TERMS).ok()
        })
        .collect()
}

/// Basin grid by the sign of `t − u(x)`, with `u` evaluated once per column.
pub fn graph_sign_grid(
    sp: &SkewProduct,
    x_range: (f64, f64),
    t_range: (f64, f64),
    nx: usize,
    nt: usize,
) -> BasinGrid {
    let columns = column_graph(sp, x_range, nx);
    basin_grid_by(sp, x_range, t_range, nx, nt, |x, t| {
        let i = (((x - x_range.0) / (x_range.1 - x_range.0)) * nx as f64) as usize;
        match columns[i.min(nx - 1)] {
            Some(GraphValue::Divergent) => BasinLabel::Minus,
            Some(GraphValue::Finite { u, .. }) if t > u => BasinLabel::Plus,
            Some(GraphValue::Finite { u, .. }) if t < u => BasinLabel::Minus,
            Some(GraphValue::Finite { .. }) => BasinLabel::Undecided(0),
            None => BasinLabel::Undecided(GRAPH_MAX_TERMS),
        }
    })
}

/// Minus fraction among decided cells in each horizontal band of height 1
/// (the last band may be shorter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub t_lo: f64,
    pub t_hi: f64,
    pub decided: usize,
    pub minus: usize,
}

impl Band {
    pub fn fraction(&self) -> f64 {
        self.minus as f64 / self.decided.max(1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        let p = self.fraction();
        (p * (1.0 - p) / self.decided.max(1) as f64).sqrt()
    }
}

pub fn unit_bands(grid: &BasinGrid) -> Vec<Band> {
    let (t0, t1) = grid.t_range;
    let n_bands = (t1 - t0).ceil().max(1.0) as usize;
    let mut bands: Vec<Band> = (0..n_bands)
        .map(|k| Band {
            t_lo: t0 + k as f64,
            t_hi: (t0 + k as f64 + 1.0).min(t1),
            decided: 0,
            minus: 0,
        })
        .collect();
    for j in 0..grid.nt {
        let k = ((grid.t_center(j) - t0).floor() as usize).min(n_bands - 1);
        for i in 0..grid.nx {
            match grid.label(i, j) {
                BasinLabel::Minus => {
                    bands[k].decided += 1;
                    bands[k].minus += 1;
                }
                BasinLabel::Plus => bands[k].decided += 1,
                BasinLabel::Undecided(_) => {}
            }
        }
    }
    bands
}

/// Fraction of cells decided by both grids on which they agree, and the
/// number of such cells.
pub fn agreement(a: &BasinGrid, b: &BasinGrid) -> (f64, usize) {
    let both: Vec<(BasinLabel, BasinLabel)> = a
        .labels
        .iter()
        .zip(&b.labels)
        .filter(|(x, y)| x.is_decided() && y.is_decided())
        .map(|(x, y)| (*x, *y))
        .collect();
    let same = both.iter().filter(|(x, y)| x == y).count();
    (same as f64 / both.len().max(1) as f64, both.len())
}

pub fn basin(run: &Run) -> Result<Outcome, CliError> {
    let cfg = run
        .config
        .basin
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [basin] block".into()))?;
    if cfg.nx == 0
        || cfg.nt == 0
        || !(cfg.x_range[0] < cfg.x_range[1])
        || !(cfg.t_range[0] < cfg.t_range[1])
    {
        return Err(CliError::Config(
            "basin grid needs positive sizes and increasing ranges".into(),
        ));
    }
    let sp = run.config.skew_product()?;
    let x_range = (cfg.x_range[0], cfg.x_range[1]);
    let t_range = (cfg.t_range[0], cfg.t_range[1]);
    let grid = match cfg.classifier.as_deref().unwrap_or("iterate") {
        "iterate" => {
            let opts = ClassifyOptions {
                max_iter: cfg.max_iter,
                escape_threshold: cfg
                    .escape_threshold
                    .unwrap_or_else(|| default_escape_threshold(&sp)),
            };
            basin_grid(&sp, x_range, t_range, cfg.nx, cfg.nt, &opts)
        }
        "graph" => graph_sign_grid(&sp, x_range, t_range, cfg.nx, cfg.nt),
        other => {
            return Err(CliError::Config(format!(
                "basin.classifier must be iterate or graph, got {other:?}"
            )))
        }
    };

    let mut out = Outcome::default();
    let mut table = run.table("basin_grid.csv", &[], &["x", "t", "label"])?;
    for j in 0..grid.nt {
        for i in 0..grid.nx {
            table.row([
                num(grid.x_center(i)),
                num(grid.t_center(j)),
                grid.label(i, j).as_str().to_string(),
            ])?;
        }
    }
    out.files.push(table.finish()?);

    let columns = column_graph(&sp, x_range, cfg.nx);
    out.files
        .push(basin_svg(&grid, &columns).save(&run.path("basin.svg"))?);

    out.line(format!(
        "cells {}x{}: minus {:.4}, plus {:.4}, undecided {:.4}",
        grid.nx,
        grid.nt,
        grid.fraction(BasinLabel::Minus),
        grid.fraction(BasinLabel::Plus),
        grid.fraction(BasinLabel::Undecided(0))
    ));
    for b in unit_bands(&grid) {
        out.line(format!(
            "  t in [{:.2}, {:.2}): minus fraction {:.4} +- {:.4}",
            b.t_lo,
            b.t_hi,
            b.fraction(),
            b.standard_error()
        ));
    }
    Ok(out)
}

fn basin_svg(grid: &BasinGrid, columns: &[Option<GraphValue>]) -> Svg {
    let cell = (512 / grid.nx.max(grid.nt)).max(1) as f64;
    let (w, h) = (grid.nx as f64 * cell, grid.nt as f64 * cell);
    let mut svg = Svg::new(w, h);
    svg.rect(0.0, 0.0, w, h, "#ffffff");
    for j in 0..grid.nt {
        let y = (grid.nt - 1 - j) as f64 * cell;
        let mut i = 0;
        while i < grid.nx {
            let label = grid.label(i, j);
            let start = i;
            while i < grid.nx && grid.label(i, j).as_str() == label.as_str() {
                i += 1;
            }
            let fill = match label {
                BasinLabel::Minus => "#3b6ea8",
                BasinLabel::Undecided(_) => "#e4572e",
                BasinLabel::Plus => continue,
            };
            svg.rect(
                start as f64 * cell,
                y,
                (i - start) as f64 * cell,
                cell,
                fill,
            );
        }
    }
    let panel = Panel {
        left: 0.0,
        top: 0.0,
        width: w,
        height: h,
        x_range: grid.x_range,
        y_range: grid.t_range,
    };
    let mut segment = Vec::new();
    for (i, c) in columns.iter().enumerate() {
        match c.and_then(|g| g.finite()) {
            Some(u) if u >= grid.t_range.0 && u <= grid.t_range.1 => {
                segment.push(panel.px(grid.x_center(i), u));
            }
            _ => {
                svg.polyline(&segment, "#000000", 1.0);
                segment.clear();
            }
        }
    }
    svg.polyline(&segment, "#000000", 1.0);
    svg
}

pub fn graph(run: &Run) -> Result<Outcome, CliError> {
    let cfg = run
        .config
        .graph
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [graph] block".into()))?;
    if cfg.points < 2 || !(cfg.tol > 0.0) {
        return Err(CliError::Config(
            "graph needs at least 2 points and tol > 0".into(),
        ));
    }
    let sp = run.config.skew_product()?;
    let (a, b) = (cfg.x_range[0], cfg.x_range[1]);
    let xs: Vec<f64> = (0..cfg.points)
        .map(|i| a + (b - a) * i as f64 / (cfg.points - 1) as f64)
        .chain(cfg.extra.iter().flatten().copied())
        .collect();
    let values: Vec<_> = xs
        .par_iter()
        .map(|&x| invariant_graph_value(&sp, x, cfg.tol, cfg.max_terms))
        .collect();
    let mut table = run.table(
        "graph.csv",
        &[
            ("tol", num(cfg.tol)),
            ("max_terms", cfg.max_terms.to_string()),
        ],
        &["x", "u", "status", "truncation_bound"],
    )?;
    let (mut finite, mut divergent, mut undetermined) = (0, 0, 0);
    for (x, v) in xs.iter().zip(&values) {
        let row = match v {
            Ok(GraphValue::Finite {
                u,
                truncation_bound,
            }) => {
                finite += 1;
                [num(*x), num(*u), "finite".into(), num(*truncation_bound)]
            }
            Ok(GraphValue::Divergent) => {
                divergent += 1;
                [
                    num(*x),
                    "DIVERGENT".into(),
                    "divergent".into(),
                    String::new(),
                ]
            }
            Err(_) => {
                undetermined += 1;
                [
                    num(*x),
                    "UNDETERMINED".into(),
                    "undetermined".into(),
                    String::new(),
                ]
            }
        };
        table.row(row)?;
    }
    let mut out = Outcome::default();
    out.files.push(table.finish()?);
    out.line(format!(
        "{} points: {finite} finite, {divergent} divergent, {undetermined} undetermined",
        xs.len()
    ));
    Ok(out)
}

pub fn pressure_cmd(run: &Run) -> Result<Outcome, CliError> {
    let cfg = run
        .config
        .pressure
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [pressure] block".into()))?;
    let (sp, phi, disc) = run.system()?;
    let curve = pressure_curve(&sp, &phi, &cfg.s_grid, disc, cfg.cache_dir.as_deref())?;
    let ulam: Option<Vec<f64>> = match cfg.compare_ulam {
        Some(n) => Some(
            curve
                .points
                .iter()
                .map(|pt| {
                    pressure(
                        sp.base(),
                        &phi.potential().tilted(pt.s, sp.lambda()),
                        Discretization::Ulam(n),
                    )
                    .map(|r| r.p)
                })
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };
    let mut header = vec!["s", "p", "eigenvalue", "residual", "second_difference"];
    if ulam.is_some() {
        header.extend(["p_ulam", "difference"]);
    }
    let mut table = run.table(
        "pressure.csv",
        &[
            ("method", disc.to_string()),
            ("potential", phi.to_string()),
            ("convex", curve.is_convex().to_string()),
        ],
        &header,
    )?;
    for (k, pt) in curve.points.iter().enumerate() {
        let d2 = if k >= 1 && k + 1 < curve.points.len() {
            num(curve.second_differences[k - 1])
        } else {
            String::new()
        };
        let mut row = vec![
            num(pt.s),
            num(pt.p),
            num(pt.eigenvalue),
            num(pt.residual),
            d2,
        ];
        if let Some(u) = &ulam {
            row.push(num(u[k]));
            row.push(num((u[k] - pt.p).abs()));
        }
        table.row(row)?;
    }
    let mut out = Outcome::default();
    out.files.push(table.finish()?);
    out.line(format!(
        "{} points with {disc}, convex: {}, from cache: {}",
        curve.points.len(),
        curve.is_convex(),
        curve.cached_points
    ));
    if let Some(f) = curve.cache_file {
        out.line(format!("cache file {}", f.display()));
    }
    Ok(out)
}

pub fn loynes(run: &Run) -> Result<Outcome, CliError> {
    let cfg = run
        .config
        .loynes
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [loynes] block".into()))?;
    let (mut sp, phi, disc) = run.system()?;
    let int_log_lambda = complete_report(&mut sp, &phi, disc)?;
    if sp.hypothesis_report().h3_mu_contracting.verdict != Verdict::Holds {
        return Err(CliError::Hypothesis(format!(
            "int log lambda dmu = {int_log_lambda} is not negative"
        )));
    }
    let thermo = loynes_exponent(&sp, &phi, disc)?;
    let sampler = SamplerSpec::for_system(&sp, &phi, run.config.seed)?.with_stream(STREAM_LOYNES);
    let tail = empirical_tail_exponent(&sp, &sampler, cfg.samples, &cfg.m_grid);

    let mut out = Outcome::default();
    let (counts, samples) = match &tail {
        Ok(fit) => (fit.counts.clone(), fit.samples),
        Err(StabilityError::InsufficientTail {
            counts, samples, ..
        }) => (counts.clone(), *samples),
        Err(_) => (Vec::new(), cfg.samples),
    };
    let mut table = run.table(
        "loynes_tail.csv",
        &[("samples", samples.to_string())],
        &["M", "count", "fraction", "log_M", "neg_log_fraction"],
    )?;
    for &(m, c) in &counts {
        let frac = c as f64 / samples as f64;
        table.row([
            m.to_string(),
            c.to_string(),
            num(frac),
            num(m.ln()),
            num(-frac.ln()),
        ])?;
    }
    out.files.push(table.finish()?);

    let (empirical, se) = match &tail {
        Ok(t) => (t.fit.slope, t.fit.standard_error),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let gap = (empirical - thermo.s_star).abs() / thermo.s_star;
    let mut table = run.table(
        "loynes_summary.csv",
        &[("method", disc.to_string())],
        &[
            "s_star_thermo",
            "s_star_empirical",
            "standard_error",
            "relative_gap",
            "int_log_lambda",
            "degenerate",
        ],
    )?;
    table.row([
        num(thermo.s_star),
        num(empirical),
        num(se),
        num(gap),
        num(int_log_lambda),
        thermo.degenerate.to_string(),
    ])?;
    out.files.push(table.finish()?);

    out.line(format!("s* (thermodynamic, {disc}) = {:.8}", thermo.s_star));
    match tail {
        Ok(_) => out.line(format!(
            "s* (empirical, {samples} samples) = {empirical:.4} +- {se:.4}, relative gap {gap:.4}"
        )),
        Err(e) => {
            out.line(format!("empirical tail exponent unavailable: {e}"));
            out.failure = Some(e.into());
        }
    }
    Ok(out)
}

fn side_value(s: &SideIndex) -> f64 {
    match s {
        SideIndex::Fit(f) => f.slope,
        SideIndex::Infinite => f64::INFINITY,
        SideIndex::Insufficient { .. } => f64::NAN,
    }
}

fn side_error(s: &SideIndex) -> f64 {
    match s {
        SideIndex::Fit(f) => f.standard_error,
        _ => f64::NAN,
    }
}

fn side_text(s: &SideIndex) -> String {
    match s {
        SideIndex::Fit(f) => format!("{:.4} +- {:.4}", f.slope, f.standard_error),
        SideIndex::Infinite => "infinite".into(),
        SideIndex::Insufficient { positive_scales } => {
            format!("insufficient ({positive_scales} scales with hits)")
        }
    }
}

pub fn stability(run: &Run) -> Result<Outcome, CliError> {
    let cfg = run
        .config
        .stability
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [stability] block".into()))?;
    let (sp, phi, disc) = run.system()?;
    let predicted = predicted_stability_index(&sp, &phi, disc)?;
    let sampler =
        SamplerSpec::for_system(&sp, &phi, run.config.seed)?.with_stream(STREAM_STABILITY);
    let opts = ClassifyOptions {
        max_iter: cfg.max_iter,
        escape_threshold: default_escape_threshold(&sp),
    };
    let schedule = cfg.r_schedule.clone().unwrap_or_else(default_r_schedule);

    let mut out = Outcome::default();
    out.line(format!(
        "predicted index above the graph: {:.4} (s* = {:.6}, int log lambda = {:.6}, int log|T'| = {:.6})",
        predicted.sigma, predicted.s_star, predicted.int_log_lambda, predicted.int_log_derivative
    ));
    let mut scales_table = run.table(
        "stability_scales.csv",
        &[],
        &[
            "point",
            "x",
            "t",
            "r",
            "minus",
            "plus",
            "undecided",
            "samples",
            "sigma_minus",
            "sigma_plus",
        ],
    )?;
    let mut summary = run.table(
        "stability_summary.csv",
        &[("predicted_sigma_above", num(predicted.sigma))],
        &[
            "point",
            "x",
            "t",
            "u",
            "position",
            "predicted_sigma",
            "sigma_minus_fit",
            "sigma_minus_se",
            "sigma_plus_fit",
            "sigma_plus_se",
            "sigma_fit",
            "status",
        ],
    )?;
    let mut write_scales =
        |k: usize, x: f64, t: f64, scales: &[ScaleCounts]| -> Result<(), CliError> {
            for s in scales {
                scales_table.row([
                    k.to_string(),
                    num(x),
                    num(t),
                    num(s.r),
                    s.minus.to_string(),
                    s.plus.to_string(),
                    s.undecided.to_string(),
                    s.samples.to_string(),
                    num(s.sigma_minus()),
                    num(s.sigma_plus()),
                ])?;
            }
            Ok(())
        };

    for (k, point) in cfg.points.iter().enumerate() {
        let (x, u) = match point.x {
            PointX::Value(x) => {
                let u = invariant_graph_value(&sp, x, 1e-12, GRAPH_MAX_TERMS)?
                    .finite()
                    .ok_or_else(|| {
                        CliError::Compute(format!("invariant graph diverges at x = {x}"))
                    })?;
                (x, u)
            }
            PointX::Keyword(_) => typical_point(&sp, &sampler, k as u64)?,
        };
        let t = point.t.unwrap_or_else(|| u + point.offset.unwrap_or(0.0));
        let (position, predicted_sigma) = if (t - u).abs() <= ON_GRAPH_TOL * u.abs().max(1.0) {
            ("on", 0.0)
        } else if t > u {
            ("above", predicted.sigma)
        } else {
            ("below", f64::INFINITY)
        };
        let sub = sampler.with_stream(sampler.stream.wrapping_add((k as u64 + 1) << 40));
        match estimate_stability_index(&sp, &sub, &opts, x, t, &schedule, cfg.samples_per_scale) {
            Ok(est) => {
                write_scales(k, x, t, &est.scales)?;
                let fit = side_value(&est.plus) - side_value(&est.minus);
                summary.row([
                    k.to_string(),
                    num(x),
                    num(t),
                    num(u),
                    position.to_string(),
                    num(predicted_sigma),
                    num(side_value(&est.minus)),
                    num(side_error(&est.minus)),
                    num(side_value(&est.plus)),
                    num(side_error(&est.plus)),
                    num(fit),
                    "ok".into(),
                ])?;
                out.line(format!(
                    "point {k} ({position} the graph) x = {x:.6}, t = {t:.6}: sigma- {}, sigma+ {}, index {} (predicted {})",
                    side_text(&est.minus),
                    side_text(&est.plus),
                    num(fit),
                    num(predicted_sigma)
                ));
            }
            Err(StabilityError::Inconclusive {
                r,
                undecided,
                partial,
            }) => {
                write_scales(k, x, t, &partial)?;
                summary.row([
                    k.to_string(),
                    num(x),
                    num(t),
                    num(u),
                    position.to_string(),
                    num(predicted_sigma),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "inconclusive".into(),
                ])?;
                out.line(format!(
                    "point {k} ({position} the graph) x = {x:.6}: inconclusive, undecided fraction {undecided:.3} at r = {r:e}"
                ));
                out.failure.get_or_insert(CliError::Inconclusive(format!(
                    "point {k}: undecided fraction {undecided} at r = {r}"
                )));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.files.push(scales_table.finish()?);
    out.files.push(summary.finish()?);
    Ok(out)
}

/// `q*` and the spectrum on the configured grid, or on 81 points of
/// `[−4, q* − 0.05]` together with `q = 0` and `q = 1`.
pub fn compute_spectrum(
    sp: &SkewProduct,
    phi: &PotentialSpec,
    disc: Discretization,
    q_grid: Option<&[f64]>,
) -> Result<Spectrum, CliError> {
    let s_star = loynes_exponent(sp, phi, disc)?.s_star;
    let q_star = q_star(sp, phi, s_star, disc)?;
    let grid = match q_grid {
        Some(g) => g.to_vec(),
        None => {
            let mut g = default_q_grid(q_star);
            g.extend([0.0, 1.0]);
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    };
    let entries = grid
        .par_iter()
        .map(|&q| (q, spectrum_point(sp, q, s_star, q_star, disc)))
        .collect();
    Ok(Spectrum {
        q_star,
        s_star,
        entries,
    })
}

pub fn spectrum(run: &Run) -> Result<Outcome, CliError> {
    let (sp, phi, disc) = run.system()?;
    let grid = run
        .config
        .spectrum
        .as_ref()
        .and_then(|s| s.q_grid.as_deref());
    let spec = compute_spectrum(&sp, &phi, disc, grid)?;
    let mut table = run.table(
        "spectrum.csv",
        &[
            ("s_star", num(spec.s_star)),
            ("q_star", num(spec.q_star)),
            ("method", disc.to_string()),
        ],
        &[
            "q",
            "S",
            "alpha",
            "f_dim",
            "int_log_lambda",
            "valid",
            "alpha_difference",
            "error",
        ],
    )?;
    for (q, entry) in &spec.entries {
        match entry {
            Ok(p) => table.row([
                num(p.q),
                num(p.s),
                num(p.alpha),
                num(p.f_dim),
                num(p.int_log_lambda),
                p.valid.to_string(),
                num(p.alpha_difference),
                String::new(),
            ])?,
            Err(e) => table.row([
                num(*q),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                String::new(),
                e.to_string(),
            ])?,
        }
    }
    let mut out = Outcome::default();
    out.files.push(table.finish()?);
    out.files
        .push(spectrum_svg(&spec).save(&run.path("spectrum.svg"))?);
    let failures = spec.failures().count();
    out.line(format!("s* = {:.8}, q* = {:.8}", spec.s_star, spec.q_star));
    out.line(format!(
        "{} points, {failures} failed; S strictly convex: {}, f concave: {}, alpha decreasing: {}",
        spec.entries.len(),
        spec.s_strictly_convex(),
        spec.f_concave(),
        spec.alpha_decreasing()
    ));
    Ok(out)
}

fn spectrum_svg(spec: &Spectrum) -> Svg {
    let (pw, ph, margin) = (360.0, 300.0, 30.0);
    let mut svg = Svg::new(2.0 * pw + 3.0 * margin, ph + 2.0 * margin);
    svg.rect(
        0.0,
        0.0,
        2.0 * pw + 3.0 * margin,
        ph + 2.0 * margin,
        "#ffffff",
    );

    let mut valid: Vec<_> = spec.points().filter(|p| p.valid).collect();
    valid.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let left = Panel {
        left: margin,
        top: margin,
        width: pw,
        height: ph,
        x_range: Panel::padded_range(valid.iter().map(|p| p.alpha)),
        y_range: Panel::padded_range(valid.iter().map(|p| p.f_dim)),
    };
    svg.frame(left.left, left.top, pw, ph, "#444444");
    let pts: Vec<_> = valid.iter().map(|p| left.px(p.alpha, p.f_dim)).collect();
    svg.polyline(&pts, "#3b6ea8", 1.5);

    let all: Vec<_> = spec.points().collect();
    let right = Panel {
        left: 2.0 * margin + pw,
        top: margin,
        width: pw,
        height: ph,
        x_range: Panel::padded_range(all.iter().map(|p| p.q).chain([spec.q_star])),
        y_range: Panel::padded_range(all.iter().map(|p| p.s)),
    };
    svg.frame(right.left, right.top, pw, ph, "#444444");
    let pts: Vec<_> = all.iter().map(|p| right.px(p.q, p.s)).collect();
    svg.polyline(&pts, "#3b6ea8", 1.5);
    let (y0, y1) = right.y_range;
    svg.polyline(
        &[right.px(spec.q_star, y0), right.px(spec.q_star, y1)],
        "#e4572e",
        1.0,
    );
    svg
}
