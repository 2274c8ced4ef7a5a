//! One-bit measurements `t = [Ax + w ≥ 0]` and recovery quality metrics.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{col, matvec, norm};

/// Reconstruction SNR reported for exact recovery.
pub const SNR_CAP_DB: f64 = 150.0;

const MATRIX_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Sensing matrix, observed signs and noise level of one problem.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    pub a: Mat<f64>,
    /// Signs in `{0, 1}`, with 1 for a nonnegative measurement.
    pub t: Vec<u8>,
    pub sigma_n: f64,
    pub seed: u64,
}

impl MeasurementEnsemble {
    /// Draws `A` (`n x x.len()`) and the noise from `seed` and quantizes `Ax + w`.
    pub fn generate(x: &[f64], n: usize, sigma_n: f64, seed: u64) -> Result<Self> {
        let a = generate_matrix(n, x.len(), seed);
        let t = measure(&a, x, sigma_n, seed)?;
        Ok(Self { a, t, sigma_n, seed })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }
}

/// I.i.d. standard normal `n x m` matrix with unit-norm columns.
pub fn generate_matrix(n: usize, m: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MATRIX_STREAM);
    let mut a = Mat::<f64>::zeros(n, m);
    for j in 0..m {
        let mut sq = 0.0;
        for i in 0..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            a[(i, j)] = v;
            sq += v * v;
        }
        let inv = 1.0 / sq.sqrt();
        for i in 0..n {
            a[(i, j)] *= inv;
        }
    }
    a
}

/// `t_i = 1` if `(Ax + w)_i ≥ 0`, else 0, with `w ~ N(0, σ_n² I)` drawn from `seed`.
pub fn measure(a: &Mat<f64>, x: &[f64], sigma_n: f64, seed: u64) -> Result<Vec<u8>> {
    if a.ncols() != x.len() {
        return Err(Error::Dimension(format!("matrix has {} columns, signal has {} entries", a.ncols(), x.len())));
    }
    if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
        return Err(Error::Parameter(format!("noise level must be nonnegative, got {sigma_n}")));
    }
    let mut y = matvec(a, x);
    if sigma_n > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        let noise = Normal::new(0.0, sigma_n).expect("validated noise level");
        for yi in &mut y {
            *yi += noise.sample(&mut rng);
        }
    }
    Ok(y.iter().map(|&v| u8::from(v >= 0.0)).collect())
}

/// `10 log10(‖x̄‖² / ‖x̄ - x̂‖²)` with `x̄ = x_true / ‖x_true‖`, capped at [`SNR_CAP_DB`].
pub fn reconstruction_snr(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::Dimension(format!("signal lengths {} and {} differ", x_true.len(), x_hat.len())));
    }
    let nt = norm(x_true);
    if nt == 0.0 {
        return Err(Error::Degenerate("reference signal is zero".into()));
    }
    let nh = norm(x_hat);
    if (nh - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("estimate must have unit norm, got {nh}")));
    }
    let err: f64 = x_true.iter().zip(x_hat).map(|(a, b)| (a / nt - b).powi(2)).sum();
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((-10.0 * err.log10()).min(SNR_CAP_DB))
}

/// Fraction of measurements whose sign under `x_hat` agrees with `t`.
pub fn sign_consistency(a: &Mat<f64>, x_hat: &[f64], t: &[u8]) -> Result<f64> {
    if a.ncols() != x_hat.len() || a.nrows() != t.len() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix against {} coefficients and {} signs",
            a.nrows(),
            a.ncols(),
            x_hat.len(),
            t.len()
        )));
    }
    if t.is_empty() {
        return Ok(1.0);
    }
    let y = matvec(a, x_hat);
    let agree = y.iter().zip(t).filter(|(&yi, &ti)| u8::from(yi >= 0.0) == ti).count();
    Ok(agree as f64 / t.len() as f64)
}

/// Number of measurements whose sign disagrees with `t`.
pub fn sign_mismatches(a: &Mat<f64>, x: &[f64], t: &[u8]) -> usize {
    matvec(a, x).iter().zip(t).filter(|(&yi, &ti)| u8::from(yi >= 0.0) != ti).count()
}

/// Maps `{0, 1}` signs to `{-1, +1}`.
pub fn signed(t: &[u8]) -> Vec<f64> {
    t.iter().map(|&ti| if ti == 1 { 1.0 } else { -1.0 }).collect()
}

/// Column norms of `a`, for diagnostics.
pub fn column_norms(a: &Mat<f64>) -> Vec<f64> {
    (0..a.ncols()).map(|j| norm(col(a, j))).collect()
}
