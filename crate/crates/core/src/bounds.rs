//! Closed-form error constants, accumulated bounds and bit-plane selection.
//!
//! Everything here is a pure function of norms and parameters. Two forms of
//! the single-use constant are exposed: [`k_beta`] evaluates the full
//! expression and [`k_beta_simplified`] keeps only the leading
//! `(15/4)^d (8/3) (2^d+1) eps_beta` term. Accumulated bounds use the full
//! form; the plane-selection rules are derived from the simplified one.

use crate::dd::DoubleDouble;
use crate::error::{Error, Result};
use serde::Serialize;

/// `eps_m = 2^(1-m)`.
pub fn eps(m: u32) -> f64 {
    2f64.powi(1 - m as i32)
}

/// Mantissa and exponent widths of a source floating-point format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FloatFormat {
    pub k: u32,
    pub e: u32,
}

impl FloatFormat {
    pub const DOUBLE: Self = Self { k: 53, e: 11 };
    pub const SINGLE: Self = Self { k: 24, e: 8 };

    /// Block-float precision `q = k + e - 2`.
    pub fn q(&self) -> u32 {
        self.k + self.e - 2
    }
}

/// `(d, k, e, q, beta)` with the derived constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParams {
    pub d: usize,
    pub k: u32,
    pub e: u32,
    pub q: u32,
    pub beta: u32,
}

impl BoundParams {
    pub fn new(d: usize, fmt: FloatFormat, beta: u32) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        let p = Self { d, k: fmt.k, e: fmt.e, q: fmt.q(), beta };
        if beta > p.beta_cap() {
            return Err(Error::Range(format!(
                "beta = {beta} exceeds q - 2d + 2 = {}",
                p.beta_cap()
            )));
        }
        Ok(p)
    }

    /// Parameters for a codec run keeping `beta` planes. Keeping more than
    /// `q - 2d + 2` planes cannot increase the error, so the bound for the
    /// cap applies.
    pub fn for_codec(d: usize, fmt: FloatFormat, beta: u32) -> Result<Self> {
        let cap = (fmt.q() + 2).saturating_sub(2 * d as u32);
        Self::new(d, fmt, beta.min(cap))
    }

    pub fn beta_cap(&self) -> u32 {
        (self.q + 2).saturating_sub(2 * self.d as u32)
    }

    pub fn eps_k(&self) -> f64 {
        eps(self.k)
    }

    pub fn eps_q(&self) -> f64 {
        eps(self.q)
    }

    pub fn eps_beta(&self) -> f64 {
        eps(self.beta)
    }

    pub fn k_t(&self) -> f64 {
        k_t(self.d)
    }

    pub fn k_beta(&self) -> f64 {
        k_beta_raw(self.d, self.k, self.q, self.beta)
    }
}

/// Transform error constant `k_T = (7/4)(2^d - 1)`.
pub fn k_t(d: usize) -> f64 {
    1.75 * ((1u32 << d) - 1) as f64
}

fn k_beta_raw(d: usize, k: u32, q: u32, beta: u32) -> f64 {
    let (ek, eq, eb) = (eps(k), eps(q), eps(beta));
    let kt = k_t(d);
    3.75f64.powi(d as i32)
        * ((1.0 + ek) * (8.0 / 3.0 * eb + eq * (1.0 + 8.0 / 3.0 * eb) * (kt * (1.0 + eq) + 1.0)) + ek)
}

/// Single-use constant: `||DC(x) - x|| <= K_beta ||x||`.
pub fn k_beta(p: &BoundParams) -> f64 {
    p.k_beta()
}

/// Leading-order constant `(15/4)^d (8/3) (2^d+1) eps_beta`.
pub fn k_beta_simplified(d: usize, beta: u32) -> f64 {
    3.75f64.powi(d as i32) * 8.0 / 3.0 * ((1u32 << d) + 1) as f64 * eps(beta)
}

/// One step of a recorded trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub step: usize,
    pub norm: f64,
    pub beta: u32,
    pub measured: f64,
    pub bound: f64,
}

/// Per-step terms `K_{beta_j} ||x_j||` for a record list.
pub fn accumulation_terms(records: &[IterationRecord], d: usize, fmt: FloatFormat) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| Ok(BoundParams::for_codec(d, fmt, r.beta)?.k_beta() * r.norm))
        .collect()
}

/// `out[t+1] = sum_{j<=t} L^(t-j+1) terms[j]`, with `out[0] = 0`.
///
/// Evaluated by the recurrence `out[t+1] = L (out[t] + terms[t])` in
/// double-double arithmetic.
pub fn lipschitz_accumulated_bound(terms: &[f64], l: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(terms.len() + 1);
    let mut acc = DoubleDouble::ZERO;
    out.push(0.0);
    for &a in terms {
        acc = (acc + a) * l;
        out.push(acc.to_f64());
    }
    out
}

/// `out[t+1] = L_k sum_{j<=t} terms[j]`, with `out[0] = 0`.
pub fn kreiss_accumulated_bound(terms: &[f64], l_k: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(terms.len() + 1);
    let mut acc = DoubleDouble::ZERO;
    out.push(0.0);
    for &a in terms {
        acc = acc + a;
        out.push((acc * l_k).to_f64());
    }
    out
}

/// A plane count chosen from a closed-form threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaSelection {
    /// Real-valued right-hand side of the inequality `beta >= threshold`.
    pub threshold: f64,
    /// Smallest admissible integer, clamped to `[1, q - 2d + 2]`.
    pub beta: u32,
}

fn select(threshold: f64, cap: u32) -> BetaSelection {
    let beta = if threshold.is_nan() || threshold >= cap as f64 {
        cap
    } else {
        (threshold.ceil().max(1.0)) as u32
    };
    BetaSelection { threshold, beta: beta.clamp(1, cap) }
}

fn cap_for(d: usize, fmt: FloatFormat) -> Result<u32> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    Ok((fmt.q() + 2).saturating_sub(2 * d as u32))
}

fn k_q(d: usize, fmt: FloatFormat) -> f64 {
    k_beta_raw(d, fmt.k, fmt.q(), fmt.q())
}

/// Planes needed so that a contraction with constant `l < 1` keeps the
/// accumulated compression error below `tol` after `t + 1` steps.
pub fn beta_for_tolerance_lipschitz(
    tol: f64,
    l: f64,
    gamma: f64,
    t: usize,
    d: usize,
    fmt: FloatFormat,
) -> Result<BetaSelection> {
    let cap = cap_for(d, fmt)?;
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Range(format!("Lipschitz constant {l} outside (0, 1)")));
    }
    let floor = k_q(d, fmt) * gamma / (1.0 - l);
    if tol < floor {
        return Err(Error::InfeasibleTolerance(format!("tolerance {tol} below K_q gamma/(1-L) = {floor}")));
    }
    let geo = l * (1.0 - l.powi(t as i32 + 2));
    let inner = (4.0f64 / 15.0).powi(d as i32) * 3.0 * tol * (1.0 - l)
        / (8.0 * gamma * ((1u32 << d) + 1) as f64 * geo);
    Ok(select(1.0 - inner.log2(), cap))
}

/// Planes needed for a Kreiss-bounded linear operator over `t` steps.
pub fn beta_for_tolerance_kreiss(
    tol: f64,
    l_k: f64,
    gamma: f64,
    t: usize,
    d: usize,
    fmt: FloatFormat,
) -> Result<BetaSelection> {
    let cap = cap_for(d, fmt)?;
    if t == 0 {
        return Err(Error::Range("horizon t must be at least 1".into()));
    }
    if l_k < 1.0 {
        let floor = k_q(d, fmt) * gamma / (1.0 - l_k);
        if tol < floor {
            return Err(Error::InfeasibleTolerance(format!("tolerance {tol} below {floor}")));
        }
    }
    let inner = (4.0f64 / 15.0).powi(d as i32) * 3.0 * tol
        / (8.0 * ((1u32 << d) + 1) as f64 * gamma * l_k * t as f64);
    Ok(select(1.0 - inner.log2(), cap))
}

/// Asymptotic distance to the fixed point: `L K ||y*|| / (1 - L(1 + K))`.
pub fn fixed_point_limit(l: f64, k_tilde: f64, ystar_norm: f64) -> Result<f64> {
    let upper = 1.0 / (1.0 + k_tilde);
    if !(l > 0.0 && l < upper) {
        return Err(Error::ContractionViolated(format!("L = {l} outside (0, {upper})")));
    }
    let theta = l * (1.0 + k_tilde);
    Ok(l * k_tilde * ystar_norm / (1.0 - theta))
}

/// Extra iterations `m` needed by the compressed fixed-point iteration to
/// reach the uncompressed error level after `t + 1` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtraIterations {
    pub c: f64,
    /// Real-valued right-hand side of `m >= ...`.
    pub threshold: f64,
    pub m: u64,
}

pub fn extra_iterations(l: f64, k_tilde: f64, t: usize) -> Result<ExtraIterations> {
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Range(format!("Lipschitz constant {l} outside (0, 1)")));
    }
    let c = k_tilde / (1.0 - l);
    let limit = l.powf(t as f64 + 1.0);
    if c > limit || c >= 1.0 {
        return Err(Error::Infeasible { c, limit });
    }
    let threshold = ((limit - c) / (1.0 - c)).ln() / l.ln() - (t as f64 + 1.0);
    let m = threshold.ceil().max(1.0) as u64;
    Ok(ExtraIterations { c, threshold, m })
}

/// Block dominance data for a `4 x 4`-blocked operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockDominanceProfile {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    /// `||B_kk^-1||^-1` per block.
    pub diag_inv_norm_inv: Vec<f64>,
    /// Off-diagonal block-column sums `sum_{j != k} ||B_jk||`.
    pub col_offdiag: Vec<f64>,
    pub nu: f64,
    pub eta: f64,
    pub mu_max: f64,
    /// First block row failing the dominance test, if any.
    pub violation: Option<usize>,
}

impl BlockDominanceProfile {
    /// Builds the profile from block norms `norms[i][j] = ||B_ij||` and the
    /// per-block `||B_kk^-1||^-1`.
    pub fn from_block_norms(norms: &[Vec<f64>], diag_inv_norm_inv: Vec<f64>) -> Self {
        let n = norms.len();
        let alpha: Vec<f64> = (0..n).map(|i| norms[i][..i].iter().sum()).collect();
        let gamma: Vec<f64> = (0..n).map(|i| norms[i][i + 1..].iter().sum()).collect();
        let mu: Vec<f64> = alpha.iter().zip(&gamma).map(|(a, g)| a + g).collect();
        let col_offdiag: Vec<f64> =
            (0..n).map(|k| (0..n).filter(|&j| j != k).map(|j| norms[j][k]).sum()).collect();
        let violation = (0..n).find(|&k| {
            !(diag_inv_norm_inv[k] >= col_offdiag[k]) || !(diag_inv_norm_inv[k] < 1.0)
        });
        let nu = (0..n).map(|i| gamma[i] / (1.0 - alpha[i])).fold(0.0, f64::max);
        let eta = 1.0 + (0..n).map(|i| alpha[i] / (1.0 - alpha[i])).fold(0.0, f64::max);
        let mu_max = mu.iter().copied().fold(0.0, f64::max);
        Self { alpha, gamma, mu, diag_inv_norm_inv, col_offdiag, nu, eta, mu_max, violation }
    }

    pub fn is_dominant(&self) -> bool {
        self.violation.is_none()
    }
}

/// `out[t+1] = eta sum_{j<=t+1} nu^(t-j+1) terms[j]`, `out[0] = 0`.
///
/// `terms[j] = K_{beta_j} ||x_j||` must be given for `j = 0..=T`; the
/// series has length `T + 1`.
pub fn successive_displacement_bound(profile: &BlockDominanceProfile, terms: &[f64]) -> Result<Vec<f64>> {
    if let Some(k) = profile.violation {
        return Err(Error::DominanceViolated(k));
    }
    let mut out = vec![0.0];
    let mut acc = DoubleDouble::from(terms.first().copied().unwrap_or(0.0));
    for &a in terms.iter().skip(1) {
        acc = acc * profile.nu + a;
        out.push((acc * profile.eta).to_f64());
    }
    Ok(out)
}

/// Norm data of a splitting `A = M - N` and run constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationarySplit {
    pub sigma: f64,
    pub omega: f64,
    pub a_norm: f64,
    pub m_norm: f64,
    pub n_norm: f64,
    pub minv_norm: f64,
    pub i_minus_h_norm: f64,
    pub c_tilde: f64,
    pub gamma: f64,
}

impl StationarySplit {
    pub fn kappa(&self) -> f64 {
        self.m_norm * self.minv_norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// Floating-point arithmetic term (`Phi_FP` or `Omega_FP`).
    pub fp: f64,
    /// Compression term (`Phi_ZFP` or `Omega_ZFP`).
    pub zfp: f64,
    pub theta: f64,
    pub total: f64,
}

impl ErrorBudget {
    /// True when arithmetic error dominates compression error.
    pub fn fp_dominates(&self) -> bool {
        self.fp >= self.zfp
    }
}

fn theta(rate: f64, t: usize) -> f64 {
    (1.0 - rate.powi(t as i32 + 1)) / (1.0 - rate)
}

/// Forward error budget after `t + 1` steps for constant `k_tilde`.
pub fn forward_error_budget(
    s: &StationarySplit,
    k_tilde: f64,
    eps_k: f64,
    t: usize,
    x0_err: f64,
    xstar_norm: f64,
) -> Result<ErrorBudget> {
    if !(s.sigma < 1.0) {
        return Err(Error::SpectralViolation(format!("sigma = {} >= 1", s.sigma)));
    }
    let fp = eps_k * s.c_tilde * (1.0 + s.gamma) * s.minv_norm * (s.n_norm + s.m_norm);
    let zfp = k_tilde * s.gamma * (eps_k * s.c_tilde * s.minv_norm * s.n_norm + s.sigma);
    let th = theta(s.sigma, t);
    let total = s.sigma.powi(t as i32 + 1) * x0_err + (fp + zfp) * th * xstar_norm;
    Ok(ErrorBudget { fp, zfp, theta: th, total })
}

/// Backward (residual) budget after `t + 1` steps.
pub fn backward_error_budget(
    s: &StationarySplit,
    k_tilde: f64,
    eps_k: f64,
    t: usize,
    r0_norm: f64,
    xstar_norm: f64,
) -> Result<ErrorBudget> {
    if !(s.omega < 1.0) {
        return Err(Error::SpectralViolation(format!("omega = {} >= 1", s.omega)));
    }
    let fp = s.i_minus_h_norm * eps_k * s.c_tilde * (1.0 + s.gamma) * (s.m_norm + s.n_norm);
    let zfp = k_tilde * s.gamma * (eps_k * s.c_tilde * s.i_minus_h_norm * s.n_norm + s.a_norm * s.omega);
    let th = theta(s.omega, t);
    let total = s.omega.powi(t as i32 + 1) * r0_norm + (fp + zfp) * th * xstar_norm;
    Ok(ErrorBudget { fp, zfp, theta: th, total })
}

fn floor_scale(d: usize) -> f64 {
    (4.0f64 / 15.0).powi(d as i32) * 3.0 / (8.0 * ((1u32 << d) + 1) as f64)
}

/// Smallest `beta` for which arithmetic error dominates compression error
/// in the forward budget. `kappa` is `kappa_inf(M)`.
pub fn beta_forward_floor(c_tilde: f64, sigma: f64, kappa: f64, d: usize, k: u32) -> Result<BetaSelection> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let limit = 1.0 / (eps(k) * kappa);
    if !(c_tilde > 0.0 && c_tilde <= limit) {
        return Err(Error::AssumptionViolated(format!("c = {c_tilde} not in (0, 1/(eps_k kappa)] = (0, {limit}]")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::SpectralViolation(format!("sigma = {sigma} outside (0, 1)")));
    }
    let threshold = k as f64 - ((1.0 + sigma) / sigma * c_tilde * floor_scale(d)).log2();
    Ok(BetaSelection { threshold, beta: threshold.ceil().max(0.0) as u32 })
}

/// Backward counterpart of [`beta_forward_floor`].
pub fn beta_backward_floor(c_tilde: f64, omega: f64, d: usize, k: u32) -> Result<BetaSelection> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let limit = 1.0 / eps(k);
    if !(c_tilde > 0.0 && c_tilde <= limit) {
        return Err(Error::AssumptionViolated(format!("c = {c_tilde} not in (0, 1/eps_k]")));
    }
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::SpectralViolation(format!("omega = {omega} outside [0, 1)")));
    }
    let threshold = k as f64 - ((1.0 - omega) / (1.0 + 2.0 * omega) * c_tilde * floor_scale(d)).log2();
    Ok(BetaSelection { threshold, beta: threshold.ceil().max(0.0) as u32 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourMode {
    Forward,
    Backward,
}

/// One grid cell of a floor contour; `beta` is `None` where the floor formula's
/// precondition fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourCell {
    pub c_tilde: f64,
    pub rate: f64,
    pub threshold: Option<f64>,
    pub beta: Option<u32>,
}

/// Evaluates the forward or backward floor over `c_tilde x rate` grids.
/// Forward cells use `kappa = 1`. Thresholds above `k` are capped at `k`.
pub fn contour_grid(c_axis: &[f64], rate_axis: &[f64], mode: ContourMode, d: usize, k: u32) -> Vec<ContourCell> {
    let mut cells = Vec::with_capacity(c_axis.len() * rate_axis.len());
    for &c in c_axis {
        for &r in rate_axis {
            let sel = match mode {
                ContourMode::Forward => beta_forward_floor(c, r, 1.0, d, k),
                ContourMode::Backward => beta_backward_floor(c, r, d, k),
            };
            let cell = match sel {
                Ok(s) => ContourCell {
                    c_tilde: c,
                    rate: r,
                    threshold: Some(s.threshold.min(k as f64)),
                    beta: Some(s.beta.min(k)),
                },
                Err(_) => ContourCell { c_tilde: c, rate: r, threshold: None, beta: None },
            };
            cells.push(cell);
        }
    }
    cells
}

/// Evenly spaced axis.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Logarithmically spaced axis.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), n).into_iter().map(|e| 10f64.powf(e)).collect()
}
