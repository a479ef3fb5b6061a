//! Advancement operators, operator constants, stationary splittings, and the
//! compress-advance iteration loops.
//!
//! Every loop runs two sequences from the same start: the reference
//! `y_{t+1} = g(y_t)` and the compressed `x_{t+1} = g(DC(x_t))`. The
//! recorded error at step `t` is `||x_t - y_t||`, where `x_t` is the freshly
//! advanced state before it is compressed for storage.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{
    successive_displacement_bound, BlockDominanceProfile, BoundParams, FloatFormat, StationarySplit,
};
use crate::codec::{
    compress_array, compression_ratio, decode_block, decompress_array, encode_block, CodecParams,
    CompressedBlock, HEADER_BYTES,
};
use crate::dd::DoubleDouble;
use crate::error::{Error, Result};

/// Largest dimension for which dense products, inverses and SVDs are used.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    GeneralLipschitz,
    LinearDense,
    LinearStencil,
}

/// Constants known analytically for an operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct OperatorMeta {
    pub lipschitz: Option<f64>,
    pub kreiss: Option<f64>,
}

/// The map taking the state at step `t` to step `t+1`.
pub trait AdvancementOperator: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, x: &[f64], out: &mut [f64]);

    fn kind(&self) -> OperatorKind;

    fn meta(&self) -> OperatorMeta {
        OperatorMeta::default()
    }

    /// Linear part as a dense matrix. Affine constants are dropped.
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        Err(Error::Kind(format!("{:?} has no matrix form", self.kind())))
    }

    /// Exact `||A||_inf` of the linear part.
    fn linear_inf_norm(&self) -> Result<f64> {
        Err(Error::Kind(format!("{:?} is not linear", self.kind())))
    }
}

/// Maximum absolute row sum of a linear operator.
pub fn inf_norm(op: &dyn AdvancementOperator) -> Result<f64> {
    op.linear_inf_norm()
}

/// Maximum absolute row sum of a dense matrix.
pub fn matrix_inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// A general map with optional known constants.
pub struct FnOperator<F> {
    n: usize,
    f: F,
    meta: OperatorMeta,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(n: usize, f: F, meta: OperatorMeta) -> Self {
        Self { n, f, meta }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> AdvancementOperator for FnOperator<F> {
    fn len(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::GeneralLipschitz
    }
    fn meta(&self) -> OperatorMeta {
        self.meta
    }
}

/// `x -> A x + c`.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub a: DMatrix<f64>,
    pub c: Option<DVector<f64>>,
    pub meta: OperatorMeta,
}

impl DenseOperator {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a, c: None, meta: OperatorMeta::default() }
    }
}

impl AdvancementOperator for DenseOperator {
    fn len(&self) -> usize {
        self.a.nrows()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                s += self.a[(i, j)] * xj;
            }
            if let Some(c) = &self.c {
                s += c[i];
            }
            *o = s;
        }
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::LinearDense
    }
    fn meta(&self) -> OperatorMeta {
        self.meta
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
    fn linear_inf_norm(&self) -> Result<f64> {
        Ok(matrix_inf_norm(&self.a))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    /// Indices wrap around every axis.
    Periodic,
    /// The outermost layer of cells is held at its current values.
    Fixed,
    /// Neighbors outside the grid read as zero.
    Zero,
}

/// A constant-coefficient stencil on a row-major grid, plus an optional
/// constant added at updated cells.
#[derive(Clone, Debug)]
pub struct StencilOperator {
    pub dims: Vec<usize>,
    /// `(offset per axis, coefficient)`.
    pub taps: Vec<(Vec<isize>, f64)>,
    pub boundary: Boundary,
    pub source: f64,
    pub meta: OperatorMeta,
}

impl StencilOperator {
    pub fn new(dims: Vec<usize>, taps: Vec<(Vec<isize>, f64)>, boundary: Boundary) -> Self {
        Self { dims, taps, boundary, source: 0.0, meta: OperatorMeta::default() }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for a in (0..self.dims.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    fn is_fixed(&self, idx: &[usize]) -> bool {
        self.boundary == Boundary::Fixed
            && idx.iter().zip(&self.dims).any(|(&i, &n)| i == 0 || i + 1 == n)
    }

    fn for_each_cell(&self, mut f: impl FnMut(usize, &[usize])) {
        let n: usize = self.dims.iter().product();
        let mut idx = vec![0usize; self.dims.len()];
        for flat in 0..n {
            f(flat, &idx);
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Flat index of `idx + off`, or `None` outside a fixed-boundary grid.
    fn neighbor(&self, idx: &[usize], off: &[isize], strides: &[usize]) -> Option<usize> {
        let mut flat = 0;
        for a in 0..idx.len() {
            let n = self.dims[a] as isize;
            let mut j = idx[a] as isize + off[a];
            match self.boundary {
                Boundary::Periodic => j = j.rem_euclid(n),
                _ if j < 0 || j >= n => return None,
                _ => {}
            }
            flat += j as usize * strides[a];
        }
        Some(flat)
    }
}

/// One row of a stencil operator: a held cell or a list of taps.
#[derive(Clone, Debug, PartialEq)]
pub enum StencilRow {
    Held,
    Taps(Vec<(usize, f64)>),
}

impl StencilOperator {
    /// Per-cell rows in the order [`AdvancementOperator::apply`] sums them.
    pub fn rows(&self) -> Vec<StencilRow> {
        let strides = self.strides();
        let mut rows = Vec::with_capacity(self.len());
        self.for_each_cell(|_, idx| {
            if self.is_fixed(idx) {
                rows.push(StencilRow::Held);
            } else {
                let taps = self
                    .taps
                    .iter()
                    .filter_map(|(off, c)| self.neighbor(idx, off, &strides).map(|j| (j, *c)))
                    .collect();
                rows.push(StencilRow::Taps(taps));
            }
        });
        rows
    }
}

impl AdvancementOperator for StencilOperator {
    fn len(&self) -> usize {
        self.dims.iter().product()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let strides = self.strides();
        let radius = self.taps.iter().flat_map(|(o, _)| o.iter().map(|v| v.unsigned_abs())).max().unwrap_or(0);
        let flat_taps: Vec<(isize, f64)> = self
            .taps
            .iter()
            .map(|(o, c)| (o.iter().zip(&strides).map(|(&d, &s)| d * s as isize).sum(), *c))
            .collect();
        self.for_each_cell(|flat, idx| {
            if self.is_fixed(idx) {
                out[flat] = x[flat];
                return;
            }
            let inside = idx.iter().zip(&self.dims).all(|(&i, &n)| i >= radius && i + radius < n);
            let mut s = 0.0;
            if inside {
                for &(off, c) in &flat_taps {
                    s += c * x[(flat as isize + off) as usize];
                }
            } else {
                for (off, c) in &self.taps {
                    if let Some(j) = self.neighbor(idx, off, &strides) {
                        s += c * x[j];
                    }
                }
            }
            out[flat] = s + self.source;
        });
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::LinearStencil
    }
    fn meta(&self) -> OperatorMeta {
        self.meta
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n > DENSE_LIMIT {
            return Err(Error::Size(n, DENSE_LIMIT));
        }
        let strides = self.strides();
        let mut a = DMatrix::zeros(n, n);
        self.for_each_cell(|flat, idx| {
            if self.is_fixed(idx) {
                a[(flat, flat)] = 1.0;
                return;
            }
            for (off, c) in &self.taps {
                if let Some(j) = self.neighbor(idx, off, &strides) {
                    a[(flat, j)] += c;
                }
            }
        });
        Ok(a)
    }
    /// Closed form: interior rows sum `|c|` over the taps; held boundary
    /// rows are identity rows.
    fn linear_inf_norm(&self) -> Result<f64> {
        let interior: f64 = self.taps.iter().map(|(_, c)| c.abs()).sum();
        let has_fixed = self.boundary == Boundary::Fixed;
        let has_interior = self.dims.iter().all(|&n| n > 2) || self.boundary != Boundary::Fixed;
        let mut norm: f64 = 0.0;
        if has_interior {
            norm = norm.max(interior);
        }
        if has_fixed {
            norm = norm.max(1.0);
        }
        Ok(norm)
    }
}

/// Largest singular value.
pub fn two_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Where a Kreiss constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KreissSource {
    Analytic,
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KreissEstimate {
    pub value: f64,
    pub source: KreissSource,
}

/// `max_{1 <= i <= horizon} ||A^i||_2`, a lower estimate of the Kreiss
/// constant. Analytic metadata takes precedence.
pub fn kreiss_constant_estimate(op: &dyn AdvancementOperator, horizon: usize) -> Result<KreissEstimate> {
    if let Some(value) = op.meta().kreiss {
        return Ok(KreissEstimate { value, source: KreissSource::Analytic });
    }
    if op.kind() == OperatorKind::GeneralLipschitz {
        return Err(Error::Kind("Kreiss constant needs a linear operator".into()));
    }
    if horizon == 0 {
        return Err(Error::Range("horizon must be at least 1".into()));
    }
    if op.len() > DENSE_LIMIT {
        return Err(Error::Size(op.len(), DENSE_LIMIT));
    }
    let a = op.to_dense()?;
    let mut p = a.clone();
    let mut best = two_norm(&p);
    for _ in 1..horizon {
        p = &a * &p;
        best = best.max(two_norm(&p));
    }
    Ok(KreissEstimate { value: best, source: KreissSource::Estimated })
}

/// Largest eigenvalue magnitude of a symmetric linear part, by power
/// iteration on `A^T A` started from a fixed vector.
pub fn symmetric_spectral_radius(op: &dyn AdvancementOperator, iters: usize) -> Result<f64> {
    if op.kind() == OperatorKind::GeneralLipschitz {
        return Err(Error::Kind("spectral radius needs a linear operator".into()));
    }
    let n = op.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut w = vec![0.0; n];
    let mut lam = 0.0;
    for _ in 0..iters {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut w);
        let mut w2 = vec![0.0; n];
        op.apply(&w, &mut w2);
        lam = w2.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().sqrt();
        v = w2;
    }
    Ok(lam)
}

/// How a norm of an inverse was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPath {
    Exact,
    Estimated,
}

/// Hager's estimate of `||B||_1` from products with `B` and `B^T`.
pub fn hager_one_norm(
    n: usize,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    apply_t: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for iter in 0..5 {
        let y = apply(&x);
        est = y.iter().map(|v| v.abs()).sum();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = apply_t(&xi);
        let (j, zj) = z.iter().enumerate().fold((0, 0.0f64), |b, (i, &v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
        if iter > 0 && zj <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    est
}

/// A splitting `A = M - N` with its iteration matrices.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    /// `M^-1 N`.
    pub g: DMatrix<f64>,
    /// `N M^-1`.
    pub h: DMatrix<f64>,
    pub stats: StationarySplit,
    pub minv_path: NormPath,
    lower: bool,
}

impl Splitting {
    /// Solves `M z = r`.
    pub fn solve_m(&self, r: &DVector<f64>) -> DVector<f64> {
        if self.lower {
            self.m.solve_lower_triangular(r).expect("checked nonsingular")
        } else {
            r.component_div(&self.m.diagonal())
        }
    }

    /// One step `y <- M^-1 (N y + b)`.
    pub fn step(&self, y: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        self.solve_m(&(&self.n * y + b))
    }
}

fn finish_split(a: &DMatrix<f64>, m: DMatrix<f64>, lower: bool) -> Result<Splitting> {
    let n_dim = a.nrows();
    if m.diagonal().iter().any(|&v| v == 0.0) {
        return Err(Error::SingularSplit("zero on the diagonal of M".into()));
    }
    let nn = &m - a;
    let solve = |r: &DVector<f64>| -> DVector<f64> {
        if lower {
            m.solve_lower_triangular(r).expect("diagonal checked")
        } else {
            r.component_div(&m.diagonal())
        }
    };
    let solve_t = |r: &DVector<f64>| -> DVector<f64> {
        if lower {
            m.tr_solve_lower_triangular(r).expect("diagonal checked")
        } else {
            r.component_div(&m.diagonal())
        }
    };
    let mut g = DMatrix::zeros(n_dim, n_dim);
    for (j, col) in nn.column_iter().enumerate() {
        g.set_column(j, &solve(&col.into_owned()));
    }
    // N M^-1 = (M^-T N^T)^T.
    let nt = nn.transpose();
    let mut ht = DMatrix::zeros(n_dim, n_dim);
    for (j, col) in nt.column_iter().enumerate() {
        ht.set_column(j, &solve_t(&col.into_owned()));
    }
    let h = ht.transpose();
    let (minv_norm, minv_path) = if n_dim <= DENSE_LIMIT {
        let mut inv = DMatrix::zeros(n_dim, n_dim);
        for j in 0..n_dim {
            let mut e = DVector::zeros(n_dim);
            e[j] = 1.0;
            inv.set_column(j, &solve(&e));
        }
        (matrix_inf_norm(&inv), NormPath::Exact)
    } else {
        // ||M^-1||_inf = ||M^-T||_1.
        (hager_one_norm(n_dim, solve_t, solve), NormPath::Estimated)
    };
    let ih = DMatrix::identity(n_dim, n_dim) - &h;
    let stats = StationarySplit {
        sigma: matrix_inf_norm(&g),
        omega: matrix_inf_norm(&h),
        a_norm: matrix_inf_norm(a),
        m_norm: matrix_inf_norm(&m),
        n_norm: matrix_inf_norm(&nn),
        minv_norm,
        i_minus_h_norm: matrix_inf_norm(&ih),
        c_tilde: n_dim as f64,
        gamma: 1.0,
    };
    Ok(Splitting { m, n: nn, g, h, stats, minv_path, lower })
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::SingularSplit(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// `M = diag(A)`.
pub fn jacobi_split(a: &DMatrix<f64>) -> Result<Splitting> {
    check_square(a)?;
    let m = DMatrix::from_diagonal(&a.diagonal());
    finish_split(a, m, false)
}

/// `M` = lower triangle of `A`, diagonal included.
pub fn gauss_seidel_split(a: &DMatrix<f64>) -> Result<Splitting> {
    check_square(a)?;
    finish_split(a, a.lower_triangle(), true)
}

/// `B` padded with identity rows and columns up to a multiple of `block`.
pub fn pad_to_blocks(b: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    let n = b.nrows();
    let np = n.div_ceil(block) * block;
    let mut p = DMatrix::zeros(np, np);
    p.view_mut((0, 0), (n, n)).copy_from(b);
    for i in n..np {
        p[(i, i)] = 1.0;
    }
    p
}

/// Block norms and dominance verdict of `B` in `block x block` tiles.
pub fn dominance_profile(b: &DMatrix<f64>, block: usize) -> Result<BlockDominanceProfile> {
    if b.nrows() != b.ncols() || block == 0 {
        return Err(Error::Range(format!("matrix is {}x{}", b.nrows(), b.ncols())));
    }
    let p = pad_to_blocks(b, block);
    let nb = p.nrows() / block;
    let tile = |i: usize, j: usize| p.view((i * block, j * block), (block, block)).into_owned();
    let norms: Vec<Vec<f64>> = (0..nb).map(|i| (0..nb).map(|j| matrix_inf_norm(&tile(i, j))).collect()).collect();
    let diag: Vec<f64> = (0..nb)
        .map(|k| match tile(k, k).try_inverse() {
            Some(inv) => 1.0 / matrix_inf_norm(&inv),
            None => 0.0,
        })
        .collect();
    let mut prof = BlockDominanceProfile::from_block_norms(&norms, diag);
    if prof.violation.is_none() {
        prof.violation = prof.diag_inv_norm_inv.iter().position(|&v| v == 0.0);
    }
    Ok(prof)
}

/// Which error bound accompanies a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum BoundMode {
    None,
    /// Accumulated bound for a Lipschitz map with this constant.
    Lipschitz(f64),
    /// Accumulated bound for a linear map with this Kreiss constant.
    Kreiss(f64),
}

/// Order of compression and advancement within a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    /// `x_{t+1} = g(DC(x_t))`.
    #[default]
    AdvanceDecompressed,
    /// `x_{t+1} = DC(g(x_t))`.
    CompressAdvanced,
}

/// Storage used by the compressed run.
#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    /// Fixed-precision blocks over an array of these extents.
    Zfp { dims: Vec<usize> },
    /// Plain doubles, for harness self-tests.
    Identity,
}

#[derive(Clone, Debug)]
pub struct IterConfig {
    pub steps: usize,
    /// Planes kept at step `t`; the last entry repeats.
    pub schedule: Vec<u32>,
    pub storage: Storage,
    pub bound: BoundMode,
    pub order: StepOrder,
    /// Norm above which the run is abandoned.
    pub ceiling: f64,
    /// Store full states every this many steps; `None` stores none.
    pub snapshot_stride: Option<usize>,
}

impl IterConfig {
    pub fn new(steps: usize, beta: u32, storage: Storage) -> Self {
        Self {
            steps,
            schedule: vec![beta],
            storage,
            bound: BoundMode::None,
            order: StepOrder::default(),
            ceiling: 1e100,
            snapshot_stride: None,
        }
    }

    pub fn beta(&self, t: usize) -> u32 {
        self.schedule[t.min(self.schedule.len() - 1)]
    }

    /// Single-use constant for the plane count used at step `t`.
    pub fn k_beta(&self, t: usize) -> Result<f64> {
        match &self.storage {
            Storage::Identity => Ok(0.0),
            Storage::Zfp { dims } => {
                Ok(BoundParams::for_codec(dims.len().max(1), FloatFormat::DOUBLE, self.beta(t))?.k_beta())
            }
        }
    }
}

/// One recorded step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub norm: f64,
    pub err_measured: f64,
    pub bound: Option<f64>,
    pub ratio: f64,
    pub beta: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    /// Writes `step,norm,err_measured,bound,ratio,beta`. Floats use the
    /// shortest representation that reads back to the same value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["step", "norm", "err_measured", "bound", "ratio", "beta"]).map_err(io)?;
        for r in &self.records {
            wr.write_record([
                r.step.to_string(),
                r.norm.to_string(),
                r.err_measured.to_string(),
                r.bound.map(|b| b.to_string()).unwrap_or_default(),
                r.ratio.to_string(),
                r.beta.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Compressed and reference runs from one start.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPair {
    pub compressed: Trajectory,
    pub reference: Trajectory,
}

pub fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Stores a state: returns what a later read sees, and the compression ratio.
fn store(x: &[f64], cfg: &IterConfig, t: usize) -> Result<(Vec<f64>, f64)> {
    match &cfg.storage {
        Storage::Identity => Ok((x.to_vec(), 1.0)),
        Storage::Zfp { dims } => {
            let p = CodecParams::double(dims.len(), cfg.beta(t))?;
            let ca = compress_array(x, dims, &p)?;
            Ok((decompress_array(&ca)?, compression_ratio(&ca, 64)))
        }
    }
}

fn guard(step: usize, x: &[f64], ceiling: f64) -> Result<f64> {
    let norm = inf(x);
    if !norm.is_finite() || norm > ceiling {
        return Err(Error::Divergence { step, norm });
    }
    Ok(norm)
}

/// Runs both sequences for `cfg.steps` steps.
pub fn iterate_simultaneous(op: &dyn AdvancementOperator, x0: &[f64], cfg: &IterConfig) -> Result<RunPair> {
    iterate_simultaneous_observed(op, x0, cfg, |_, _, _| Ok(()))
}

/// As [`iterate_simultaneous`], calling `observe(t, x_t, y_t)` at every
/// recorded step.
pub fn iterate_simultaneous_observed(
    op: &dyn AdvancementOperator,
    x0: &[f64],
    cfg: &IterConfig,
    mut observe: impl FnMut(usize, &[f64], &[f64]) -> Result<()>,
) -> Result<RunPair> {
    let n = op.len();
    if x0.len() != n {
        return Err(Error::Range(format!("state length {} differs from operator length {n}", x0.len())));
    }
    if cfg.schedule.is_empty() {
        return Err(Error::Range("empty plane schedule".into()));
    }
    if let Storage::Zfp { dims } = &cfg.storage {
        if dims.iter().product::<usize>() != n {
            return Err(Error::Range(format!("extents {dims:?} do not cover {n} values")));
        }
    }
    if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut scratch = vec![0.0; n];
    let mut comp = Trajectory::default();
    let mut refr = Trajectory::default();
    // Same recurrences as the bounds module, advanced one term at a time.
    let mut acc = DoubleDouble::ZERO;
    let mut next_ratio: Option<f64> = None;
    let snap = |t: usize| cfg.snapshot_stride.is_some_and(|s| s > 0 && t % s == 0);

    for t in 0..=cfg.steps {
        let norm = guard(t, &x, cfg.ceiling)?;
        let (stored, ratio) = match cfg.order {
            StepOrder::AdvanceDecompressed => store(&x, cfg, t)?,
            StepOrder::CompressAdvanced => {
                let r = match next_ratio.take() {
                    Some(r) => r,
                    None => store(&x, cfg, t)?.1,
                };
                (x.clone(), r)
            }
        };
        let bound = match cfg.bound {
            BoundMode::None => None,
            BoundMode::Lipschitz(_) => Some(acc.to_f64()),
            BoundMode::Kreiss(lk) => Some((acc * lk).to_f64()),
        };
        observe(t, &x, &y)?;
        comp.records.push(StepRecord { step: t, norm, err_measured: inf_diff(&x, &y), bound, ratio, beta: cfg.beta(t) });
        refr.records.push(StepRecord { step: t, norm: inf(&y), err_measured: 0.0, bound: None, ratio: 1.0, beta: 64 });
        if snap(t) {
            comp.snapshots.push((t, x.clone()));
            refr.snapshots.push((t, y.clone()));
        }
        if t == cfg.steps {
            break;
        }
        op.apply(&y, &mut scratch);
        std::mem::swap(&mut y, &mut scratch);
        op.apply(&stored, &mut scratch);
        let k = cfg.k_beta(t)?;
        match cfg.order {
            StepOrder::AdvanceDecompressed => {
                acc = match cfg.bound {
                    BoundMode::Lipschitz(l) => (acc + k * norm) * l,
                    _ => acc + k * norm,
                };
                std::mem::swap(&mut x, &mut scratch);
            }
            StepOrder::CompressAdvanced => {
                let term = k * inf(&scratch);
                acc = match cfg.bound {
                    BoundMode::Lipschitz(l) => acc * l + term,
                    _ => acc + term,
                };
                let (read, r) = store(&scratch, cfg, t)?;
                x = read;
                next_ratio = Some(r);
            }
        }
    }
    comp.final_state = x;
    refr.final_state = y;
    Ok(RunPair { compressed: comp, reference: refr })
}

/// Rows of block `i`: `sum_col B[k, col] read[col] + c[k]`.
fn block_rows(b: &DMatrix<f64>, c: Option<&DVector<f64>>, read: &[f64], i: usize, out: &mut [f64; 4]) {
    for (r, o) in out.iter_mut().enumerate() {
        let k = 4 * i + r;
        let mut s = 0.0;
        for (col, &v) in read.iter().enumerate() {
            s += b[(k, col)] * v;
        }
        if let Some(c) = c {
            s += c[k];
        }
        *o = s;
    }
}

/// Result of a successive-displacement run.
#[derive(Clone, Debug)]
pub struct SuccessiveRun {
    pub pair: RunPair,
    pub profile: BlockDominanceProfile,
}

/// Block successive displacement `x_i <- sum_{j<i} B_ij DC(x_j^new) +
/// sum_{j>=i} B_ij DC(x_j^old) + c_i` over 4-blocks, each block recompressed
/// as soon as it is updated.
///
/// The state is padded to a multiple of 4 with ghost unknowns held at zero.
/// With `with_bound` the dominance-based bound is attached, and a
/// non-dominant `B` is an error.
pub fn iterate_successive(
    b: &DMatrix<f64>,
    c: Option<&DVector<f64>>,
    x0: &[f64],
    cfg: &IterConfig,
    with_bound: bool,
) -> Result<SuccessiveRun> {
    let n = b.nrows();
    if b.ncols() != n || x0.len() != n || c.is_some_and(|c| c.len() != n) {
        return Err(Error::Range("operator, constant and state sizes differ".into()));
    }
    if cfg.schedule.is_empty() {
        return Err(Error::Range("empty plane schedule".into()));
    }
    if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if let Storage::Zfp { dims } = &cfg.storage {
        if dims.len() != 1 {
            return Err(Error::Dimension(dims.len()));
        }
    }
    let profile = dominance_profile(b, 4)?;
    if with_bound {
        if let Some(k) = profile.violation {
            return Err(Error::DominanceViolated(k));
        }
    }
    let bp = pad_to_blocks(b, 4);
    let np = bp.nrows();
    let cp = c.map(|c| {
        let mut v = DVector::zeros(np);
        v.rows_mut(0, n).copy_from(c);
        v
    });
    let nb = np / 4;
    let zfp = matches!(cfg.storage, Storage::Zfp { .. });

    let mut x = x0.to_vec();
    x.resize(np, 0.0);
    let mut y = x.clone();
    let mut read = x.clone();
    let mut blocks: Vec<Option<CompressedBlock>> = vec![None; nb];
    let params = |t: usize| CodecParams::double(1, cfg.beta(t));

    // Initial storage of x_0.
    if zfp {
        let p = params(0)?;
        for i in 0..nb {
            let cb = encode_block(&x[4 * i..4 * i + 4], &p)?;
            read[4 * i..4 * i + 4].copy_from_slice(&decode_block(&cb, &p)?);
            blocks[i] = Some(cb);
        }
    }
    let ratio_of = |blocks: &[Option<CompressedBlock>]| -> f64 {
        if !zfp {
            return 1.0;
        }
        let bits: usize = blocks.iter().flatten().map(CompressedBlock::bit_len).sum();
        (np * 64) as f64 / (8 * HEADER_BYTES + bits) as f64
    };

    let mut comp = Trajectory::default();
    let mut refr = Trajectory::default();
    let snap = |t: usize| cfg.snapshot_stride.is_some_and(|s| s > 0 && t % s == 0);
    let mut rows = [0.0; 4];

    for t in 0..=cfg.steps {
        let norm = guard(t, &x, cfg.ceiling)?;
        comp.records.push(StepRecord {
            step: t,
            norm,
            err_measured: inf_diff(&x, &y),
            bound: None,
            ratio: ratio_of(&blocks),
            beta: cfg.beta(t),
        });
        refr.records.push(StepRecord { step: t, norm: inf(&y), err_measured: 0.0, bound: None, ratio: 1.0, beta: 64 });
        if snap(t) {
            comp.snapshots.push((t, x[..n].to_vec()));
            refr.snapshots.push((t, y[..n].to_vec()));
        }
        if t == cfg.steps {
            break;
        }
        let p = if zfp { Some(params(t + 1)?) } else { None };
        for i in 0..nb {
            block_rows(&bp, cp.as_ref(), &y, i, &mut rows);
            y[4 * i..4 * i + 4].copy_from_slice(&rows);
            block_rows(&bp, cp.as_ref(), &read, i, &mut rows);
            x[4 * i..4 * i + 4].copy_from_slice(&rows);
            match &p {
                Some(p) => {
                    let cb = encode_block(&rows, p)?;
                    read[4 * i..4 * i + 4].copy_from_slice(&decode_block(&cb, p)?);
                    blocks[i] = Some(cb);
                }
                None => read[4 * i..4 * i + 4].copy_from_slice(&rows),
            }
        }
    }
    if with_bound {
        let kterms: Vec<f64> = comp
            .records
            .iter()
            .map(|r| Ok(cfg.k_beta(r.step)? * r.norm))
            .collect::<Result<_>>()?;
        let series = successive_displacement_bound(&profile, &kterms)?;
        for (r, bnd) in comp.records.iter_mut().zip(series) {
            r.bound = Some(bnd);
        }
    }
    x.truncate(n);
    y.truncate(n);
    comp.final_state = x;
    refr.final_state = y;
    Ok(SuccessiveRun { pair: RunPair { compressed: comp, reference: refr }, profile })
}
