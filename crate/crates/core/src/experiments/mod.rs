//! The experiment families: diffusion, advection and a Jacobi fixed point,
//! each run with inline compression against analytic references.
//!
//! A run has two halves. The reference pass advances the uncompressed
//! state `u`, its double-double replay `ũ` and the exact solution `û`.
//! Then one compressed run per plane count `β` is made.
//! Every reported quantity is relative to `‖û_t‖∞`.

pub mod exact;
pub mod extended;
pub mod plot;
pub mod schemes;

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    beta_for_tolerance_kreiss, extra_iterations, k_beta_simplified, BetaSelection, BoundParams, FloatFormat,
};
use crate::error::{Error, Result};
use crate::iterops::{
    inf, inf_diff, inf_norm, iterate_simultaneous_observed, AdvancementOperator, Boundary, BoundMode, IterConfig, StencilOperator,
    StepOrder, Storage,
};

use self::extended::ExtendedRun;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Diffusion2d,
    Diffusion3d,
    Advect1d,
    Advect2d,
    Poisson2d,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::Diffusion2d, Family::Diffusion3d, Family::Advect1d, Family::Advect2d, Family::Poisson2d];

    pub fn name(self) -> &'static str {
        match self {
            Family::Diffusion2d => "diffusion2d",
            Family::Diffusion3d => "diffusion3d",
            Family::Advect1d => "advect1d",
            Family::Advect2d => "advect2d",
            Family::Poisson2d => "poisson2d",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Family::Advect1d => 1,
            Family::Diffusion3d => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Preset problem sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Full-size grids and step counts.
    #[default]
    Full,
    /// Smaller grids that finish in seconds.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    /// Extents of the state array, row-major.
    pub dims: Vec<usize>,
    pub dx: f64,
    /// Unused by the Jacobi iteration.
    pub dt: f64,
    pub steps: usize,
    pub betas: Vec<u32>,
    /// Echoed only; the experiments draw no random numbers.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Diffusion coefficient.
    pub diffusivity: f64,
    /// Advection speed, applied along every axis.
    pub velocity: f64,
    /// Scales the initial condition; ignored by the Jacobi problem.
    pub amplitude: f64,
    /// 0-based index of the unit source (diffusion).
    pub source: Vec<usize>,
    /// Contraction constant used in the fixed-point bound. Defaults to the
    /// spectral radius `cos(pi dx)` of the Jacobi operator.
    pub lipschitz: Option<f64>,
    /// Kreiss constant for the advection bound.
    pub kreiss: f64,
    /// Tolerances for the extra-iteration table.
    pub tolerances: Vec<f64>,
    /// Horizon at which the extra-iteration precondition is tested.
    pub feasibility_horizon: usize,
    /// Relative size below which sine modes are dropped.
    pub series_threshold: f64,
    pub order: StepOrder,
    /// Run the double-double round-off baseline.
    pub extended: bool,
}

impl ExperimentConfig {
    pub fn new(family: Family, scale: Scale) -> Self {
        match scale {
            Scale::Full => Self::full(family),
            Scale::Desk => Self::desk(family),
        }
    }

    fn base(family: Family) -> Self {
        Self {
            family,
            dims: vec![],
            dx: 0.0,
            dt: 0.0,
            steps: 0,
            betas: vec![],
            seed: 0,
            out_dir: None,
            diffusivity: 1.0,
            velocity: 1.0,
            amplitude: 1.0,
            source: vec![],
            lipschitz: None,
            kreiss: 2.0,
            tolerances: vec![],
            feasibility_horizon: 7000,
            series_threshold: 1e-30,
            order: StepOrder::AdvanceDecompressed,
            extended: true,
        }
    }

    /// Full-size parameters. The diffusion time step is
    /// `dx^2 / 32`, inside the FTCS stability range.
    pub fn full(family: Family) -> Self {
        let b = Self::base(family);
        match family {
            Family::Diffusion2d => Self {
                dims: vec![99, 99],
                dx: 0.01,
                dt: 3.125e-6,
                steps: 3000,
                betas: vec![64, 59, 44, 32, 16],
                source: vec![49, 49],
                ..b
            },
            Family::Diffusion3d => Self {
                dims: vec![39, 39, 39],
                dx: 1.0 / 40.0,
                dt: 2.5e-5,
                steps: 3000,
                betas: vec![64, 54, 44, 32, 16],
                source: vec![18, 18, 18],
                ..b
            },
            Family::Advect1d => {
                Self { dims: vec![100], dx: 1.0 / 90.0, dt: 0.01, steps: 1000, betas: vec![64, 32, 24, 16], ..b }
            }
            Family::Advect2d => {
                Self { dims: vec![100, 100], dx: 1.0 / 90.0, dt: 0.01, steps: 100, betas: vec![64, 32, 26, 16], ..b }
            }
            Family::Poisson2d => Self {
                dims: vec![101, 101],
                dx: 0.01,
                steps: 25000,
                betas: vec![64, 32, 29, 16],
                tolerances: vec![0.1, 0.01, 0.001],
                ..b
            },
        }
    }

    /// Reduced sizes with the same mesh ratios.
    pub fn desk(family: Family) -> Self {
        let p = Self::full(family);
        match family {
            Family::Diffusion2d => {
                let dx = 1.0 / 53.0;
                Self { dims: vec![52, 52], dx, dt: dx * dx / 32.0, steps: 500, source: vec![25, 25], ..p }
            }
            Family::Diffusion3d => {
                let dx = 1.0 / 20.0;
                Self { dims: vec![19, 19, 19], dx, dt: 0.04 * dx * dx, steps: 300, source: vec![9, 9, 9], ..p }
            }
            Family::Advect1d => Self { steps: 200, ..p },
            Family::Advect2d => Self { dims: vec![40, 40], dx: 1.0 / 36.0, dt: 0.025, steps: 40, ..p },
            Family::Poisson2d => Self {
                dims: vec![41, 41],
                dx: 0.025,
                steps: 3000,
                betas: vec![64, 32, 29, 24],
                feasibility_horizon: 1000,
                ..p
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = self.family.dimension();
        if self.dims.len() != d {
            return bad(format!("dims: {} expects {d} extents, got {}", self.family, self.dims.len()));
        }
        if self.dims.iter().any(|&n| n == 0) {
            return bad("dims: extents must be positive".into());
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return bad(format!("dx: must be positive, got {}", self.dx));
        }
        if self.family != Family::Poisson2d && !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt: must be positive, got {}", self.dt));
        }
        if self.betas.is_empty() {
            return bad("betas: list is empty".into());
        }
        if let Some(b) = self.betas.iter().find(|&&b| !(1..=64).contains(&b)) {
            return bad(format!("betas: {b} outside 1..=64"));
        }
        if !self.amplitude.is_finite() {
            return bad("amplitude: must be finite".into());
        }
        match self.family {
            Family::Diffusion2d | Family::Diffusion3d => {
                if self.source.len() != d || self.source.iter().zip(&self.dims).any(|(s, n)| s >= n) {
                    return bad(format!("source: {:?} not an index into {:?}", self.source, self.dims));
                }
            }
            Family::Poisson2d => {
                if self.dims.iter().any(|&n| n < 3) {
                    return bad("dims: the Jacobi grid needs at least 3 nodes per axis".into());
                }
                if let Some(l) = self.lipschitz {
                    if !(l > 0.0 && l < 1.0) {
                        return bad(format!("lipschitz: {l} outside (0, 1)"));
                    }
                }
                if self.tolerances.iter().any(|&e| !(e > 0.0)) {
                    return bad("tolerances: must be positive".into());
                }
            }
            Family::Advect1d | Family::Advect2d => {
                if !(self.kreiss >= 1.0) {
                    return bad(format!("kreiss: {} below 1", self.kreiss));
                }
            }
        }
        Ok(())
    }

    /// CFL number `a dt / dx`.
    pub fn cfl(&self) -> f64 {
        self.velocity * self.dt / self.dx
    }

    /// Contraction constant for the fixed-point bound.
    pub fn jacobi_lipschitz(&self) -> f64 {
        self.lipschitz.unwrap_or_else(|| (PI * self.dx).cos())
    }

    fn operator(&self) -> Result<StencilOperator> {
        match self.family {
            Family::Diffusion2d | Family::Diffusion3d => {
                schemes::ftcs_diffusion(&self.dims, self.diffusivity, self.dt, self.dx)
            }
            Family::Advect1d => schemes::lax_wendroff_1d(self.dims[0], self.cfl()),
            Family::Advect2d => schemes::richtmyer_2d([self.dims[0], self.dims[1]], self.cfl(), self.cfl()),
            Family::Poisson2d => Ok(schemes::poisson_jacobi([self.dims[0], self.dims[1]], 4.0, self.dx)),
        }
    }

    fn bound_mode(&self) -> BoundMode {
        match self.family {
            Family::Diffusion2d | Family::Diffusion3d => BoundMode::Lipschitz(1.0),
            Family::Advect1d | Family::Advect2d => BoundMode::Kreiss(self.kreiss),
            Family::Poisson2d => BoundMode::Lipschitz(self.jacobi_lipschitz()),
        }
    }
}

/// Field-by-field overrides read from a config file. Absent fields keep
/// the preset value.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub scale: Option<Scale>,
    pub dims: Option<Vec<usize>>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub betas: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub diffusivity: Option<f64>,
    pub velocity: Option<f64>,
    pub amplitude: Option<f64>,
    pub source: Option<Vec<usize>>,
    pub lipschitz: Option<f64>,
    pub kreiss: Option<f64>,
    pub tolerances: Option<Vec<f64>>,
    pub feasibility_horizon: Option<usize>,
    pub series_threshold: Option<f64>,
    pub order: Option<StepOrder>,
    pub extended: Option<bool>,
}

impl ConfigOverrides {
    /// Preset for `family` at the requested scale with these fields applied.
    pub fn resolve(&self, family: Family) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(family, self.scale.unwrap_or_default());
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { c.$f = v.clone(); } )*};
        }
        set!(dims, dx, dt, steps, betas, seed, diffusivity, velocity, amplitude, source, kreiss, tolerances);
        set!(feasibility_horizon, series_threshold, order, extended);
        if self.out_dir.is_some() {
            c.out_dir = self.out_dir.clone();
        }
        if self.lipschitz.is_some() {
            c.lipschitz = self.lipschitz;
        }
        c
    }
}

/// One row of an error series. All errors are relative to `‖û_t‖∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub step: usize,
    pub exact_norm: f64,
    /// `‖v - u‖ / ‖û‖`: error added by compression.
    pub rel_compression_error: f64,
    /// `‖u - û‖ / ‖û‖`: discretization plus round-off.
    pub rel_total_error: f64,
    pub rel_bound: f64,
    /// `‖u - ũ‖ / ‖û‖`: double-precision round-off.
    pub rel_fp_roundoff: f64,
    /// `‖v - û‖ / ‖û‖`.
    pub rel_zfp_total_error: f64,
    pub compression_ratio: f64,
}

pub const SERIES_HEADER: [&str; 8] = [
    "step",
    "exact_norm",
    "rel_compression_error",
    "rel_total_error",
    "rel_bound",
    "rel_fp_roundoff",
    "rel_zfp_total_error",
    "compression_ratio",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorSeries {
    pub rows: Vec<ErrorRow>,
}

impl ErrorSeries {
    /// CSV with [`SERIES_HEADER`]; floats in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(SERIES_HEADER).map_err(io)?;
        for r in &self.rows {
            wr.write_record([
                r.step.to_string(),
                r.exact_norm.to_string(),
                r.rel_compression_error.to_string(),
                r.rel_total_error.to_string(),
                r.rel_bound.to_string(),
                r.rel_fp_roundoff.to_string(),
                r.rel_zfp_total_error.to_string(),
                r.compression_ratio.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// A step at which the measured compression error exceeded the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub beta: u32,
    pub step: usize,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaRun {
    pub beta: u32,
    pub series: ErrorSeries,
    pub violations: Vec<Violation>,
    /// `‖v_t - û‖∞` without normalization.
    #[serde(skip)]
    pub distance_to_exact: Vec<f64>,
}

/// Per-step data shared by all plane counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReferencePass {
    pub exact_norm: Vec<f64>,
    /// `‖u_t - û_t‖∞`.
    pub total_error: Vec<f64>,
    /// `‖u_t - ũ_t‖∞`; zero when the baseline is disabled.
    pub fp_roundoff: Vec<f64>,
}

/// Single-use constants for one plane count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KBetaEntry {
    pub beta: u32,
    /// Plane count after clamping to the lossless cap.
    pub effective_beta: u32,
    pub k_beta: f64,
    pub k_beta_simplified: f64,
}

/// One row of the extra-iteration table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoRow {
    pub beta: u32,
    pub eps: f64,
    /// Uncompressed run: first `n` with `‖u_{n+1} - û‖ <= eps`.
    pub n: Option<usize>,
    pub n_actual: Option<usize>,
    pub rho_actual: Option<f64>,
    pub m: Option<u64>,
    pub rho_predicted: Option<f64>,
    pub rho_predicted_simplified: Option<f64>,
    /// Whether the extra-iteration precondition holds at `n`.
    pub feasible: bool,
}

/// Where a compressed Jacobi run stops improving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Plateau {
    pub beta: u32,
    /// `‖v_t - û‖∞` at the last step.
    pub level: f64,
    /// `K_beta / (1 - L)`.
    pub predicted: f64,
    /// The uncompressed run ended below half the level, so the compressed
    /// run has stopped short of the fixed point.
    pub stalled: bool,
    /// First step within 5% of the level, when stalled.
    pub stall_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoissonSummary {
    pub lipschitz: f64,
    pub spectral_radius: f64,
    pub rho: Vec<RhoRow>,
    pub plateaus: Vec<Plateau>,
    pub feasibility_horizon: usize,
    /// Smallest plane count satisfying the precondition at the horizon.
    pub feasibility_floor: Option<u32>,
    pub feasibility_floor_simplified: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    /// `‖A‖∞` of the advancement operator.
    pub inf_norm: f64,
    pub lipschitz: Option<f64>,
    pub kreiss: Option<f64>,
    pub cfl: Option<f64>,
    pub k_beta: Vec<KBetaEntry>,
    pub series_threshold: Option<f64>,
    /// Total error of the uncompressed run at the last step, relative.
    pub final_total_error: f64,
    /// Plane count suggested by the Kreiss-type selection rule for that
    /// tolerance, with `L_k = 1` for diffusion.
    pub beta_selection: Option<BetaSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub metadata: Metadata,
    pub runs: Vec<BetaRun>,
    pub poisson: Option<PoissonSummary>,
}

impl ExperimentResult {
    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.runs.iter().flat_map(|r| &r.violations)
    }

    pub fn run(&self, beta: u32) -> Option<&BetaRun> {
        self.runs.iter().find(|r| r.beta == beta)
    }
}

/// Exact solution by step index.
enum Exact {
    Diffusion { series: exact::SineSeries, dt: f64, amp: f64 },
    Advect1d { n: usize, dx: f64, a: f64, dt: f64, amp: f64 },
    Advect2d { n: [usize; 2], dx: f64, a: f64, dt: f64, amp: f64 },
    Fixed(Vec<f64>),
}

impl Exact {
    fn new(cfg: &ExperimentConfig) -> Self {
        let amp = cfg.amplitude;
        match cfg.family {
            Family::Diffusion2d | Family::Diffusion3d => Exact::Diffusion {
                series: exact::SineSeries::new(&cfg.dims, &cfg.source, cfg.diffusivity, cfg.series_threshold),
                dt: cfg.dt,
                amp,
            },
            Family::Advect1d => Exact::Advect1d { n: cfg.dims[0], dx: cfg.dx, a: cfg.velocity, dt: cfg.dt, amp },
            Family::Advect2d => {
                Exact::Advect2d { n: [cfg.dims[0], cfg.dims[1]], dx: cfg.dx, a: cfg.velocity, dt: cfg.dt, amp }
            }
            Family::Poisson2d => Exact::Fixed(exact::poisson([cfg.dims[0], cfg.dims[1]], cfg.dx)),
        }
    }

    fn at(&self, step: usize) -> Vec<f64> {
        let scale = |v: Vec<f64>, amp: f64| if amp == 1.0 { v } else { v.into_iter().map(|x| x * amp).collect() };
        match self {
            Exact::Diffusion { series, dt, amp } => scale(series.eval(step as f64 * dt), *amp),
            Exact::Advect1d { n, dx, a, dt, amp } => scale(exact::advection_1d(*n, *dx, *a, step as f64 * dt), *amp),
            Exact::Advect2d { n, dx, a, dt, amp } => scale(exact::advection_2d(*n, *dx, *a, step as f64 * dt), *amp),
            Exact::Fixed(v) => v.clone(),
        }
    }
}

fn initial_state(cfg: &ExperimentConfig, ex: &Exact) -> Vec<f64> {
    match cfg.family {
        Family::Diffusion2d | Family::Diffusion3d => {
            let mut x = vec![0.0; cfg.dims.iter().product()];
            let flat = cfg.source.iter().zip(&cfg.dims).fold(0, |acc, (&s, &n)| acc * n + s);
            x[flat] = cfg.amplitude;
            x
        }
        Family::Poisson2d => exact::poisson_initial([cfg.dims[0], cfg.dims[1]], cfg.dx),
        Family::Advect1d | Family::Advect2d => ex.at(0),
    }
}

/// `a / n`, with `0 / 0 = 0`.
fn rel(a: f64, n: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / n
    }
}

fn reference_pass(op: &StencilOperator, x0: &[f64], ex: &Exact, cfg: &ExperimentConfig) -> ReferencePass {
    let mut out = ReferencePass::default();
    let mut u = x0.to_vec();
    let mut scratch = vec![0.0; u.len()];
    let mut ext = cfg.extended.then(|| ExtendedRun::new(op, x0));
    for t in 0..=cfg.steps {
        let e = ex.at(t);
        out.exact_norm.push(inf(&e));
        out.total_error.push(inf_diff(&u, &e));
        out.fp_roundoff.push(ext.as_ref().map_or(0.0, |r| r.distance(&u)));
        if t == cfg.steps {
            break;
        }
        op.apply(&u, &mut scratch);
        std::mem::swap(&mut u, &mut scratch);
        if let Some(r) = ext.as_mut() {
            r.step();
        }
    }
    out
}

fn beta_run(
    op: &StencilOperator,
    x0: &[f64],
    ex: &Exact,
    reference: &ReferencePass,
    cfg: &ExperimentConfig,
    beta: u32,
) -> Result<BetaRun> {
    let mut ic = IterConfig::new(cfg.steps, beta, Storage::Zfp { dims: cfg.dims.clone() });
    ic.bound = cfg.bound_mode();
    ic.order = cfg.order;
    let mut distance = Vec::with_capacity(cfg.steps + 1);
    let pair = iterate_simultaneous_observed(op, x0, &ic, |t, x, _| {
        distance.push(inf_diff(x, &ex.at(t)));
        Ok(())
    })?;
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut violations = Vec::new();
    for (i, rec) in pair.compressed.records.iter().enumerate() {
        let n = reference.exact_norm[i];
        let bound = rec.bound.unwrap_or(0.0);
        if rec.err_measured > bound {
            violations.push(Violation { beta, step: rec.step, measured: rec.err_measured, bound });
        }
        rows.push(ErrorRow {
            step: rec.step,
            exact_norm: n,
            rel_compression_error: rel(rec.err_measured, n),
            rel_total_error: rel(reference.total_error[i], n),
            rel_bound: rel(bound, n),
            rel_fp_roundoff: rel(reference.fp_roundoff[i], n),
            rel_zfp_total_error: rel(distance[i], n),
            compression_ratio: rec.ratio,
        });
    }
    Ok(BetaRun { beta, series: ErrorSeries { rows }, violations, distance_to_exact: distance })
}

pub fn k_beta_entry(d: usize, beta: u32) -> Result<KBetaEntry> {
    let p = BoundParams::for_codec(d, FloatFormat::DOUBLE, beta)?;
    Ok(KBetaEntry {
        beta,
        effective_beta: p.beta,
        k_beta: p.k_beta(),
        k_beta_simplified: k_beta_simplified(d, p.beta),
    })
}

/// First `n` with `err[n + 1] <= eps`.
fn first_below(err: &[f64], eps: f64) -> Option<usize> {
    err.iter().skip(1).position(|&e| e <= eps)
}

fn plateau(beta: u32, dist: &[f64], reference: &[f64], predicted: f64) -> Plateau {
    let level = *dist.last().expect("run has a step 0");
    let stalled = *reference.last().expect("run has a step 0") < 0.5 * level;
    let stall_step = stalled.then(|| dist.iter().position(|&e| (e - level).abs() <= 0.05 * level)).flatten();
    Plateau { beta, level, predicted, stalled, stall_step }
}

/// Smallest plane count whose constant passes the extra-iteration
/// precondition at horizon `t`.
pub fn feasibility_floor(l: f64, t: usize, d: usize, simplified: bool) -> Result<Option<u32>> {
    for beta in 1..=64 {
        let e = k_beta_entry(d, beta)?;
        let k = if simplified { e.k_beta_simplified } else { e.k_beta };
        if extra_iterations(l, k, t).is_ok() {
            return Ok(Some(beta));
        }
    }
    Ok(None)
}

fn poisson_summary(
    cfg: &ExperimentConfig,
    op: &StencilOperator,
    reference: &ReferencePass,
    runs: &[BetaRun],
) -> Result<PoissonSummary> {
    let d = cfg.family.dimension();
    let l = cfg.jacobi_lipschitz();
    let mut rho = Vec::new();
    let mut plateaus = Vec::new();
    for run in runs {
        let kb = k_beta_entry(d, run.beta)?;
        plateaus.push(plateau(run.beta, &run.distance_to_exact, &reference.total_error, kb.k_beta / (1.0 - l)));
        for &eps in &cfg.tolerances {
            let n = first_below(&reference.total_error, eps).filter(|&n| n > 0);
            let n_actual = first_below(&run.distance_to_exact, eps);
            let mut row = RhoRow {
                beta: run.beta,
                eps,
                n,
                n_actual,
                rho_actual: None,
                m: None,
                rho_predicted: None,
                rho_predicted_simplified: None,
                feasible: false,
            };
            if let Some(n) = n {
                let nf = n as f64;
                row.rho_actual = n_actual.map(|a| a as f64 / nf);
                if let Ok(x) = extra_iterations(l, kb.k_beta, n) {
                    row.feasible = true;
                    row.m = Some(x.m);
                    row.rho_predicted = Some((nf + x.threshold) / nf);
                }
                if let Ok(x) = extra_iterations(l, kb.k_beta_simplified, n) {
                    row.rho_predicted_simplified = Some((nf + x.threshold) / nf);
                }
            }
            rho.push(row);
        }
    }
    Ok(PoissonSummary {
        lipschitz: l,
        spectral_radius: crate::iterops::symmetric_spectral_radius(&interior_part(op), 2000)?,
        rho,
        plateaus,
        feasibility_horizon: cfg.feasibility_horizon,
        feasibility_floor: feasibility_floor(l, cfg.feasibility_horizon, d, false)?,
        feasibility_floor_simplified: feasibility_floor(l, cfg.feasibility_horizon, d, true)?,
    })
}

/// The Jacobi operator restricted to interior unknowns, without its
/// source term.
fn interior_part(op: &StencilOperator) -> StencilOperator {
    let dims = op.dims.iter().map(|n| n - 2).collect();
    StencilOperator::new(dims, op.taps.clone(), Boundary::Zero)
}

/// Runs one experiment: the reference pass, then every plane count.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let op = cfg.operator()?;
    let ex = Exact::new(cfg);
    let x0 = initial_state(cfg, &ex);
    let reference = reference_pass(&op, &x0, &ex, cfg);
    let runs: Vec<BetaRun> =
        cfg.betas.par_iter().map(|&b| beta_run(&op, &x0, &ex, &reference, cfg, b)).collect::<Result<_>>()?;

    let d = cfg.family.dimension();
    let last = cfg.steps;
    let final_total_error = rel(reference.total_error[last], reference.exact_norm[last]);
    let (lipschitz, kreiss) = match cfg.bound_mode() {
        BoundMode::Lipschitz(l) => (Some(l), None),
        BoundMode::Kreiss(k) => (None, Some(k)),
        BoundMode::None => (None, None),
    };
    let beta_selection = match cfg.family {
        Family::Poisson2d => None,
        _ if final_total_error > 0.0 && last > 0 => {
            beta_for_tolerance_kreiss(final_total_error, kreiss.unwrap_or(1.0), 1.0, last, d, FloatFormat::DOUBLE).ok()
        }
        _ => None,
    };
    let metadata = Metadata {
        config: cfg.clone(),
        inf_norm: inf_norm(&op)?,
        lipschitz,
        kreiss,
        cfl: matches!(cfg.family, Family::Advect1d | Family::Advect2d).then(|| cfg.cfl()),
        k_beta: cfg.betas.iter().map(|&b| k_beta_entry(d, b)).collect::<Result<_>>()?,
        series_threshold: matches!(cfg.family, Family::Diffusion2d | Family::Diffusion3d)
            .then_some(cfg.series_threshold),
        final_total_error,
        beta_selection,
    };
    let poisson = match cfg.family {
        Family::Poisson2d => Some(poisson_summary(cfg, &op, &reference, &runs)?),
        _ => None,
    };
    Ok(ExperimentResult { metadata, runs, poisson })
}

const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#000000", "#9467bd", "#ff7f0e"];

/// Writes series CSVs, metadata JSON and SVG charts into `dir`. Returns the
/// paths written, in order.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let fam = result.metadata.config.family.name();
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    for run in &result.runs {
        let mut buf = Vec::new();
        run.series.write_csv(&mut buf)?;
        put(format!("{fam}_beta{}.csv", run.beta), buf)?;
        let rows = &run.series.rows;
        let curve = |label, color, f: fn(&ErrorRow) -> f64| plot::Series {
            label,
            color,
            points: rows.iter().map(|r| (r.step as f64, f(r))).collect(),
        };
        let svg = plot::line_chart(
            &format!("{fam}, beta = {}", run.beta),
            "step",
            &[
                curve("compression error", COLORS[0], |r| r.rel_compression_error),
                curve("total error", COLORS[1], |r| r.rel_total_error),
                curve("bound", COLORS[2], |r| r.rel_bound),
                curve("round-off", COLORS[3], |r| r.rel_fp_roundoff),
            ],
            true,
        );
        put(format!("{fam}_beta{}.svg", run.beta), svg.into_bytes())?;
    }
    let labels: Vec<String> = result.runs.iter().map(|r| format!("beta = {}", r.beta)).collect();
    let per_beta = |f: fn(&ErrorRow) -> f64| -> Vec<plot::Series<'_>> {
        result
            .runs
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (r, l))| plot::Series {
                label: l,
                color: COLORS[i % COLORS.len()],
                points: r.series.rows.iter().map(|row| (row.step as f64, f(row))).collect(),
            })
            .collect()
    };
    let ratio = plot::line_chart(&format!("{fam} compression ratio"), "step", &per_beta(|r| r.compression_ratio), false);
    put(format!("{fam}_ratio.svg"), ratio.into_bytes())?;
    let conv = plot::line_chart(&format!("{fam} distance to exact"), "step", &per_beta(|r| r.rel_zfp_total_error), true);
    put(format!("{fam}_exact.svg"), conv.into_bytes())?;

    if let Some(p) = &result.poisson {
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record([
            "beta",
            "eps",
            "n",
            "n_actual",
            "rho_actual",
            "m",
            "rho_predicted",
            "rho_predicted_simplified",
            "feasible",
        ])
        .map_err(io)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &p.rho {
            wr.write_record([
                r.beta.to_string(),
                r.eps.to_string(),
                opt(r.n.map(|v| v.to_string())),
                opt(r.n_actual.map(|v| v.to_string())),
                opt(r.rho_actual.map(|v| v.to_string())),
                opt(r.m.map(|v| v.to_string())),
                opt(r.rho_predicted.map(|v| v.to_string())),
                opt(r.rho_predicted_simplified.map(|v| v.to_string())),
                r.feasible.to_string(),
            ])
            .map_err(io)?;
        }
        let buf = wr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        put(format!("{fam}_rho.csv"), buf)?;
    }
    let json = serde_json::to_vec_pretty(&serde_json::json!({
        "metadata": result.metadata,
        "poisson": result.poisson,
        "violations": result.violations().collect::<Vec<_>>(),
    }))
    .map_err(|e| Error::Io(e.to_string()))?;
    put(format!("{fam}.json"), json)?;
    Ok(written)
}
