//! Variational Bayes recovery from one-bit measurements.
//!
//! The likelihood of each sign is bounded by the Jaakkola-Jordan quadratic
//! bound with points `δ`. The prior on `x` is a Gaussian scale mixture with
//! per-coefficient variances `τ`, rates `λ` in the flat (Rayleigh
//! posterior) limit of the Gamma layer, and an optional copula correction
//! `P` that couples neighboring coefficients of the same subband:
//!
//! ```text
//! p(x | τ) ∝ exp(-½ x̃ᵀ (I + P) x̃),   x̃_j = x_j / √τ_j
//! ```
//!
//! Under the mean-field factorization `q(x) q(τ) q(λ) q(n)`, `q(x)` is
//! Gaussian with precision `2AᵀΛ_δA + D^½(I + P)D^½`, `D = diag⟨1/τ⟩`,
//! `q(τ)` is GIG(½), `q(λ)` is Rayleigh and `q(n)` is Gaussian.

use std::io::Write;

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::solvers::DenseSolveCore;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, Par, Side};

use crate::copula::{
    assemble_precision_correction, fit_pyramid_copulas, fit_scale_marginal, CopulaFitConfig, DirectionWeights,
    SparseSymmetric,
};
use crate::error::{Error, Result};
use crate::linalg::{col, dot, matvec, matvec_t, norm};
use crate::onebit::reconstruction_snr;
use crate::special::ln_sigmoid;
use crate::wavelet::PyramidLayout;

/// Lower clamp on the GIG parameter `b`.
pub const GIG_B_FLOOR: f64 = 1e-12;
const TAU_HALVINGS: usize = 30;

/// `tanh(δ/2) / (4δ)`, with its limit `1/8` at zero.
pub fn jj_lambda(delta: f64) -> f64 {
    let d = delta.abs();
    if d < 1e-4 {
        // tanh(u)/u = 1 - u²/3 + 2u⁴/15 with u = d/2
        let u2 = 0.25 * d * d;
        return 0.125 * (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0);
    }
    (0.5 * d).tanh() / (4.0 * d)
}

/// Moments `(⟨τ⟩, ⟨1/τ⟩)` of GIG(½, a, b) with density `∝ τ^-½ exp(-(aτ + b/τ)/2)`.
pub fn gig_moments(a: f64, b: f64) -> (f64, f64) {
    ((b / a).sqrt() + 1.0 / a, (a / b).sqrt())
}

/// `⟨λ²⟩ = 2/⟨τ⟩` of the Rayleigh posterior with scale `1/√⟨τ⟩`.
pub fn rayleigh_lambda_sq(tau_mean: f64) -> f64 {
    2.0 / tau_mean
}

/// When copula correlations are re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaRefit {
    EveryIteration,
    Once,
}

/// Settings of one recovery run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    /// Pyramid shape of the signal.
    pub layout: PyramidLayout,
    pub max_iter: usize,
    /// Threshold on `‖Δμ‖ / ‖μ‖`.
    pub tol: f64,
    /// Initial `⟨τ⟩`; `⟨1/τ⟩` starts at its reciprocal.
    pub tau0: f64,
    /// Initial `⟨λ²⟩`.
    pub lambda0: f64,
    pub delta0: f64,
    pub copula_enabled: bool,
    pub sigma_refit: SigmaRefit,
    pub direction_weights: DirectionWeights,
    /// Neighborhood size `L` of the copula windows.
    pub neighborhood: usize,
    /// Assumed noise standard deviation.
    pub sigma_n: f64,
}

impl RecoveryConfig {
    pub fn new(layout: PyramidLayout) -> Self {
        Self {
            layout,
            max_iter: 300,
            tol: 1e-6,
            tau0: 1e-8,
            lambda0: 1e-8,
            delta0: 1.0,
            copula_enabled: true,
            sigma_refit: SigmaRefit::EveryIteration,
            direction_weights: DirectionWeights::default(),
            neighborhood: 3,
            sigma_n: 0.0,
        }
    }

    /// The same settings with the copula switched off.
    pub fn ablation(&self) -> Self {
        Self { copula_enabled: false, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        let positive = [("tau0", self.tau0), ("lambda0", self.lambda0), ("delta0", self.delta0), ("tol", self.tol)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma_n >= 0.0 && self.sigma_n.is_finite()) {
            return Err(Error::Parameter(format!("sigma_n must be nonnegative, got {}", self.sigma_n)));
        }
        if self.neighborhood < 2 {
            return Err(Error::Parameter(format!("neighborhood size must be >= 2, got {}", self.neighborhood)));
        }
        Ok(())
    }
}

/// Variational posterior statistics.
#[derive(Debug, Clone)]
pub struct VBState {
    pub mu_x: Vec<f64>,
    pub sigma_x: Mat<f64>,
    pub tau_mean: Vec<f64>,
    pub tau_inv_mean: Vec<f64>,
    pub lambda_sq_mean: Vec<f64>,
    pub delta: Vec<f64>,
    pub mu_n: Vec<f64>,
    /// Diagonal noise posterior variances (zero when noiseless).
    pub sigma_n_var: Vec<f64>,
    /// GIG parameters `(a, b)` of the current `q(τ)`.
    pub gig_a: Vec<f64>,
    pub gig_b: Vec<f64>,
    pub iteration: usize,
    /// `aᵢᵀ Σ_x aᵢ` per measurement.
    quad_rows: Vec<f64>,
    ln_det_sigma: f64,
    factor: Mat<f64>,
}

impl VBState {
    /// Prior-only state with `μ_x = 0` and `Σ_x = diag(τ0)`.
    pub fn initial(m: usize, n: usize, config: &RecoveryConfig) -> Self {
        Self {
            mu_x: vec![0.0; m],
            sigma_x: Mat::from_fn(m, m, |i, j| if i == j { config.tau0 } else { 0.0 }),
            tau_mean: vec![config.tau0; m],
            tau_inv_mean: vec![1.0 / config.tau0; m],
            lambda_sq_mean: vec![config.lambda0; m],
            delta: vec![config.delta0; n],
            mu_n: vec![0.0; n],
            sigma_n_var: vec![0.0; n],
            gig_a: vec![config.lambda0; m],
            gig_b: vec![0.0; m],
            iteration: 0,
            quad_rows: vec![0.0; n],
            ln_det_sigma: m as f64 * config.tau0.ln(),
            factor: Mat::from_fn(m, m, |i, j| if i == j { config.tau0.powf(-0.5) } else { 0.0 }),
        }
    }

    /// `⟨x_i x_j⟩`.
    pub fn second_moment(&self, i: usize, j: usize) -> f64 {
        self.sigma_x[(i, j)] + self.mu_x[i] * self.mu_x[j]
    }

    /// Cholesky factor `L` of the posterior precision, `Σ_x⁻¹ = L Lᵀ`.
    pub fn precision_factor(&self) -> &Mat<f64> {
        &self.factor
    }

    /// `ln|Σ_x|`.
    pub fn ln_det_sigma(&self) -> f64 {
        self.ln_det_sigma
    }
}

fn half_signs(t: &[u8]) -> Vec<f64> {
    t.iter().map(|&ti| if ti == 1 { 0.5 } else { -0.5 }).collect()
}

/// Updates `q(x)`. Returns the ridge that had to be added to the precision.
pub fn update_x(state: &mut VBState, a: &Mat<f64>, t: &[u8], p: Option<&SparseSymmetric>) -> Result<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    let lam: Vec<f64> = state.delta.iter().map(|&d| jj_lambda(d)).collect();
    let mut weighted = a.clone();
    for j in 0..m {
        let c = weighted.col_mut(j).try_as_col_major_mut().expect("column-major").as_slice_mut();
        for (v, l) in c.iter_mut().zip(&lam) {
            *v *= 2.0 * l;
        }
    }
    let mut q = Mat::<f64>::zeros(m, m);
    tri_matmul(
        q.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        a.transpose(),
        BlockStructure::Rectangular,
        weighted.as_ref(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    let d = &state.tau_inv_mean;
    for j in 0..m {
        q[(j, j)] += d[j];
    }
    if let Some(p) = p {
        for (i, j, v) in p.iter() {
            if i >= j {
                q[(i, j)] += v * (d[i] * d[j]).sqrt();
            }
        }
    }

    let mean_diag = (0..m).map(|j| q[(j, j)]).sum::<f64>() / m as f64;
    let mut ridge = 0.0;
    let llt = loop {
        match q.llt(Side::Lower) {
            Ok(f) => break f,
            Err(_) => {
                let next = if ridge == 0.0 { 1e-8 * mean_diag } else { ridge * 10.0 };
                if !(next.is_finite()) || next > mean_diag {
                    return Err(Error::LinearAlgebra("posterior precision is not positive definite".into()));
                }
                for j in 0..m {
                    q[(j, j)] += next - ridge;
                }
                log::debug!("adding ridge {next:e} to the posterior precision");
                ridge = next;
            }
        }
    };
    let l = llt.L().to_owned();
    let sigma = llt.inverse();
    let r: Vec<f64> = half_signs(t)
        .iter()
        .zip(&lam)
        .zip(&state.mu_n)
        .map(|((s, l), mn)| s - 2.0 * l * mn)
        .collect();
    let rhs = matvec_t(a, &r);
    state.mu_x = (0..m).map(|i| dot(col(&sigma, i), &rhs)).collect();
    state.ln_det_sigma = -2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
    state.sigma_x = sigma;

    // aᵢᵀΣaᵢ = ‖L⁻¹aᵢ‖²
    let mut z = a.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), z.as_mut(), Par::Seq);
    state.quad_rows = (0..n).map(|i| col(&z, i).iter().map(|v| v * v).sum()).collect();
    state.factor = l;
    Ok(ridge)
}

/// Coordinate `i`'s share of the copula term, `Σ_j P_ij ⟨x_i x_j⟩ √(d_j / d_i)`.
pub fn copula_shares(state: &VBState, p: &SparseSymmetric) -> Vec<f64> {
    let d = &state.tau_inv_mean;
    (0..p.dim())
        .map(|i| {
            let (cols, vals) = p.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&j, &v)| v * state.second_moment(i, j) * (d[j] / d[i]).sqrt())
                .sum()
        })
        .collect()
}

/// Updates `q(τ)` to GIG(½, ⟨λ²⟩, ⟨x²⟩ + c).
pub fn update_tau(state: &mut VBState, shares: Option<&[f64]>) {
    for i in 0..state.mu_x.len() {
        let mut b = state.second_moment(i, i);
        if let Some(c) = shares {
            b += c[i];
        }
        set_tau(state, i, state.lambda_sq_mean[i], b.max(GIG_B_FLOOR));
    }
}

fn set_tau(state: &mut VBState, i: usize, a: f64, b: f64) {
    let (tm, tim) = gig_moments(a, b);
    state.tau_mean[i] = tm;
    state.tau_inv_mean[i] = tim;
    state.gig_a[i] = a;
    state.gig_b[i] = b;
}

/// Copula-coupled `q(τ)` update: moves the GIG parameters from their current
/// values towards the [`update_tau`] target along a geometric path, halving
/// the step until the bound does not decrease. Returns the accepted step.
pub fn update_tau_guarded(state: &mut VBState, p: &SparseSymmetric) -> f64 {
    let m = state.mu_x.len();
    let start: Vec<(f64, f64)> = (0..m).map(|i| (state.gig_a[i], state.gig_b[i])).collect();
    if start.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
        let shares = copula_shares(state, p);
        update_tau(state, Some(&shares));
        return 1.0;
    }
    let base = tau_terms(state, Some(p));
    let shares = copula_shares(state, p);
    let target: Vec<(f64, f64)> = (0..m)
        .map(|i| (state.lambda_sq_mean[i], (state.second_moment(i, i) + shares[i]).max(GIG_B_FLOOR)))
        .collect();
    let mut step = 1.0;
    for _ in 0..TAU_HALVINGS {
        for i in 0..m {
            let (a0, b0) = start[i];
            let (a1, b1) = target[i];
            set_tau(state, i, a0 * (a1 / a0).powf(step), b0 * (b1 / b0).powf(step));
        }
        if tau_terms(state, Some(p)) >= base {
            return step;
        }
        step *= 0.5;
    }
    for (i, &(a0, b0)) in start.iter().enumerate() {
        set_tau(state, i, a0, b0);
    }
    0.0
}

/// Updates `q(λ)` to the Rayleigh posterior.
pub fn update_lambda(state: &mut VBState) {
    for (l, &t) in state.lambda_sq_mean.iter_mut().zip(&state.tau_mean) {
        *l = rayleigh_lambda_sq(t);
    }
}

fn second_moments_y(state: &VBState, ax: &[f64]) -> Vec<f64> {
    (0..ax.len())
        .map(|i| {
            let mn = state.mu_n[i];
            state.quad_rows[i] + ax[i] * ax[i] + 2.0 * ax[i] * mn + mn * mn + state.sigma_n_var[i]
        })
        .collect()
}

/// Tightens the sigmoid bound: `δᵢ = √⟨yᵢ²⟩`.
pub fn update_delta(state: &mut VBState, a: &Mat<f64>) {
    let ax = matvec(a, &state.mu_x);
    state.delta = second_moments_y(state, &ax).into_iter().map(|y2| y2.max(0.0).sqrt()).collect();
}

/// Updates the Gaussian noise posterior; a zero noise level pins it at zero.
pub fn update_noise(state: &mut VBState, a: &Mat<f64>, t: &[u8], sigma_n: f64) {
    if sigma_n == 0.0 {
        state.mu_n.iter_mut().for_each(|v| *v = 0.0);
        state.sigma_n_var.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let ax = matvec(a, &state.mu_x);
    let prec0 = 1.0 / (sigma_n * sigma_n);
    for (i, s) in half_signs(t).into_iter().enumerate() {
        let l = jj_lambda(state.delta[i]);
        let var = 1.0 / (prec0 + 2.0 * l);
        state.sigma_n_var[i] = var;
        state.mu_n[i] = var * (s - 2.0 * l * ax[i]);
    }
}

fn ln_bessel_k_half(omega: f64) -> f64 {
    0.5 * (std::f64::consts::PI / (2.0 * omega)).ln() - omega
}

/// Terms of the bound that depend on `q(τ)`.
fn tau_terms(state: &VBState, p: Option<&SparseSymmetric>) -> f64 {
    let m = state.mu_x.len();
    let mut total = 0.0;
    let d = &state.tau_inv_mean;
    for j in 0..m {
        total -= 0.5 * d[j] * state.second_moment(j, j);
    }
    if let Some(p) = p {
        for (i, j, v) in p.iter() {
            total -= 0.5 * v * state.second_moment(i, j) * (d[i] * d[j]).sqrt();
        }
    }

    let ln2 = std::f64::consts::LN_2;
    for j in 0..m {
        let (ga, gb) = (state.gig_a[j], state.gig_b[j]);
        // prior of τ given λ, without the ⟨ln λ⟩ terms that cancel
        total += -ln2 - 0.5 * state.lambda_sq_mean[j] * state.tau_mean[j];
        // entropy of q(τ) without ½⟨ln τ⟩, which cancels against p(x | τ)
        total += -0.25 * (ga / gb).ln()
            + ln2
            + ln_bessel_k_half((ga * gb).sqrt())
            + 0.5 * (ga * state.tau_mean[j] + gb * state.tau_inv_mean[j]);
        // entropy of the Rayleigh q(λ) with ⟨λ²⟩ = 2s²
        total += (0.5 * state.lambda_sq_mean[j]).ln() + 1.0;
    }
    total
}

/// Variational lower bound on the log evidence, up to additive constants
/// that do not depend on the variational distributions or on `P`.
pub fn evidence_bound(state: &VBState, a: &Mat<f64>, t: &[u8], p: Option<&SparseSymmetric>, sigma_n: f64) -> f64 {
    let ax = matvec(a, &state.mu_x);
    let y2 = second_moments_y(state, &ax);
    let mut total = 0.0;
    for i in 0..t.len() {
        let sgn = if t[i] == 1 { 1.0 } else { -1.0 };
        let z = sgn * (ax[i] + state.mu_n[i]);
        let d = state.delta[i];
        total += ln_sigmoid(d) + 0.5 * (z - d) - jj_lambda(d) * (y2[i] - d * d);
    }

    total += tau_terms(state, p);
    total += 0.5 * state.ln_det_sigma;

    if sigma_n > 0.0 {
        let v0 = sigma_n * sigma_n;
        for i in 0..t.len() {
            let (mn, vn) = (state.mu_n[i], state.sigma_n_var[i]);
            total += -0.5 * v0.ln() - (mn * mn + vn) / (2.0 * v0) + 0.5 * vn.ln();
        }
    }
    total
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Bound after the sweep.
    pub bound: f64,
    /// Bound of the state entering the sweep, under the sweep's copula
    /// correction. `NaN` on the first sweep.
    pub bound_before: f64,
    /// Marginal parameters fit on the finest scale of the current mean.
    pub eta: f64,
    pub f: f64,
    pub delta_mean: f64,
    /// Reconstruction SNR when the true signal is known, else `NaN`.
    pub snr_db: f64,
    pub rel_change: f64,
    pub ridge: f64,
    /// Accepted fraction of the copula-coupled `q(τ)` move.
    pub tau_step: f64,
}

impl TraceRow {
    /// Relative decrease of the bound over the sweep; zero or negative when
    /// the bound did not decrease.
    pub fn bound_drop(&self) -> f64 {
        if self.bound_before.is_nan() {
            return 0.0;
        }
        (self.bound_before - self.bound) / self.bound_before.abs().max(f64::MIN_POSITIVE)
    }
}

/// Writes the trace as CSV.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: &mut W) -> Result<()> {
    writeln!(out, "iteration,bound_value,eta,f,delta_mean,snr_if_known")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.iteration, r.bound, r.eta, r.f, r.delta_mean, r.snr_db)?;
    }
    Ok(())
}

/// Result of [`recover`].
#[derive(Debug, Clone)]
pub struct Recovery {
    /// Unit-norm estimate.
    pub x_hat: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub state: VBState,
}

/// Runs the variational recovery.
pub fn recover(t: &[u8], a: &Mat<f64>, config: &RecoveryConfig) -> Result<Recovery> {
    recover_tracked(t, a, config, None)
}

/// [`recover`] that also reports the SNR against `truth` in the trace.
pub fn recover_tracked(t: &[u8], a: &Mat<f64>, config: &RecoveryConfig, truth: Option<&[f64]>) -> Result<Recovery> {
    config.validate()?;
    let (n, m) = (a.nrows(), a.ncols());
    if t.len() != n {
        return Err(Error::Dimension(format!("{} signs for {n} measurements", t.len())));
    }
    if config.layout.len() != m {
        return Err(Error::Dimension(format!("layout holds {} coefficients, matrix has {m} columns", config.layout.len())));
    }
    if let Some(x) = truth {
        if x.len() != m {
            return Err(Error::Dimension(format!("true signal has {} entries, expected {m}", x.len())));
        }
    }

    let fit_config = CopulaFitConfig {
        size: config.neighborhood,
        weights: config.direction_weights,
        ..CopulaFitConfig::default()
    };
    let mut state = VBState::initial(m, n, config);
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut correction: Option<SparseSymmetric> = None;
    let mut converged = false;

    for it in 1..=config.max_iter {
        state.iteration = it;
        let started = it > 1;
        let (mut eta, mut f) = (f64::NAN, f64::NAN);
        if started {
            match fit_scale_marginal(&state.mu_x, &config.layout, 1, 1e-8, 200) {
                Ok(pm) => (eta, f) = (pm.eta(), pm.shape()),
                Err(e) => log::debug!("marginal fit failed at iteration {it}: {e}"),
            }
            let refit = config.sigma_refit == SigmaRefit::EveryIteration || correction.is_none();
            if config.copula_enabled && refit {
                match fit_pyramid_copulas(&state.mu_x, &config.layout, &fit_config)
                    .and_then(|c| assemble_precision_correction(&c, &config.layout, &config.direction_weights))
                {
                    Ok(p) => correction = Some(p),
                    Err(e) => log::warn!("copula fit failed at iteration {it}, keeping the previous correction: {e}"),
                }
            }
        }
        let p = correction.as_ref();
        let bound_before = if started { evidence_bound(&state, a, t, p, config.sigma_n) } else { f64::NAN };

        let previous = state.mu_x.clone();
        let ridge = update_x(&mut state, a, t, p).map_err(|e| Error::Numerical {
            iteration: it,
            message: e.to_string(),
            trace: trace.clone(),
        })?;
        let tau_step = match p {
            Some(p) => update_tau_guarded(&mut state, p),
            None => {
                update_tau(&mut state, None);
                1.0
            }
        };
        update_lambda(&mut state);
        update_delta(&mut state, a);
        update_noise(&mut state, a, t, config.sigma_n);

        let bound = evidence_bound(&state, a, t, p, config.sigma_n);
        let mu_norm = norm(&state.mu_x);
        if !(bound.is_finite() && mu_norm.is_finite()) || mu_norm == 0.0 {
            return Err(Error::Numerical {
                iteration: it,
                message: format!("non-finite or vanishing state (bound {bound}, |mu| {mu_norm})"),
                trace,
            });
        }
        let diff: Vec<f64> = state.mu_x.iter().zip(&previous).map(|(x, y)| x - y).collect();
        let rel_change = norm(&diff) / mu_norm;
        let snr_db = match truth {
            Some(x) => {
                let unit: Vec<f64> = state.mu_x.iter().map(|v| v / mu_norm).collect();
                reconstruction_snr(x, &unit).unwrap_or(f64::NAN)
            }
            None => f64::NAN,
        };
        let row = TraceRow {
            iteration: it,
            bound,
            bound_before,
            eta,
            f,
            delta_mean: state.delta.iter().sum::<f64>() / n.max(1) as f64,
            snr_db,
            rel_change,
            ridge,
            tau_step,
        };
        if row.bound_drop() > 0.0 {
            log::debug!("bound decreased by {:e} (relative) at iteration {it}", row.bound_drop());
        }
        trace.push(row);
        if rel_change < config.tol {
            converged = true;
            break;
        }
    }

    let mu_norm = norm(&state.mu_x);
    let x_hat = state.mu_x.iter().map(|v| v / mu_norm).collect();
    Ok(Recovery { x_hat, iterations: trace.len(), trace, converged, state })
}
