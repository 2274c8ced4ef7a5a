//! The double-Lomax (DL) marginal: density `(η/2)(1 + η|x|/f)^-(f+1)`,
//! its CDF and quantile, hierarchical sampling and maximum-likelihood
//! fitting.
//!
//! # Hierarchical form
//!
//! With `λ ~ Gamma(shape f, rate f)`, `τ | λ ~ Exp(rate λ²/2)` and
//! `x' | τ ~ N(0, τ)`, integrating out `τ` gives `x' | λ ~ Laplace(λ)` and
//! integrating out `λ` gives `½(1 + |x'|/f)^-(f+1)`, the unit-scale DL
//! density. The scale `η` does not appear in that hierarchy, so samples are
//! returned as `x = x'/η`, which has exactly the DL(η, f) density.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

use crate::error::{Error, Result};

/// Lower end of the shape bracket used by [`fit_shape`].
pub const SHAPE_MIN: f64 = 1e-3;
/// Upper end of the shape bracket used by [`fit_shape`].
pub const SHAPE_MAX: f64 = 1e3;

/// Scale `eta` and shape `f` of a double-Lomax distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DLParams {
    eta: f64,
    f: f64,
}

impl DLParams {
    pub fn new(eta: f64, f: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!("DL scale must be positive, got {eta}")));
        }
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Parameter(format!("DL shape must be positive, got {f}")));
        }
        Ok(Self { eta, f })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn shape(&self) -> f64 {
        self.f
    }

    pub fn pdf(&self, x: f64) -> f64 {
        0.5 * self.eta * (1.0 + self.eta * x.abs() / self.f).powf(-(self.f + 1.0))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (0.5 * self.eta).ln() - (self.f + 1.0) * (self.eta * x.abs() / self.f).ln_1p()
    }

    /// Mass in the tail beyond `|t|`, i.e. `P(X < -|t|)`.
    pub fn tail(&self, t: f64) -> f64 {
        0.5 * (-self.f * (self.eta * t.abs() / self.f).ln_1p()).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let tail = self.tail(t);
        if t <= 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        let p = if u < 0.5 { u } else { 1.0 - u };
        let magnitude = self.tail_quantile(p);
        Ok(if u < 0.5 { -magnitude } else { magnitude })
    }

    /// `|t|` such that `tail(t) = p`, for `p` in `(0, 0.5]`.
    pub(crate) fn tail_quantile(&self, p: f64) -> f64 {
        (self.f / self.eta) * ((-(2.0 * p).ln() / self.f).exp_m1())
    }

    /// Log-likelihood of a sample.
    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        let m = xs.len() as f64;
        m * (0.5 * self.eta).ln()
            - (self.f + 1.0) * xs.iter().map(|x| (self.eta * x.abs() / self.f).ln_1p()).sum::<f64>()
    }
}

/// One draw of the Gaussian-Exponential-Gamma hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchicalSample {
    pub x: f64,
    /// Gaussian variance of the unit-scale draw.
    pub tau: f64,
    pub lambda: f64,
}

/// Draws `count` samples through the hierarchy; the marginal of `x` is DL(η, f).
pub fn sample_hierarchical<R: Rng + ?Sized>(p: &DLParams, rng: &mut R, count: usize) -> Vec<HierarchicalSample> {
    let gamma = Gamma::new(p.f, 1.0 / p.f).expect("validated shape");
    (0..count)
        .map(|_| {
            let lambda: f64 = gamma.sample(rng);
            let tau = Exp::new(0.5 * lambda * lambda).expect("positive rate").sample(rng);
            let unit = Normal::new(0.0, tau.sqrt()).expect("finite variance").sample(rng);
            HierarchicalSample { x: unit / p.eta, tau, lambda }
        })
        .collect()
}

/// `Σ (f+1)|x| / (f + η|x|)`, the denominator of the scale fixed point.
fn scale_sum(abs: &[f64], eta: f64, f: f64) -> f64 {
    abs.iter().map(|&a| (f + 1.0) * a / (f + eta * a)).sum()
}

/// Relative residual `|η·Σ(...) − M| / M` of the scale fixed-point equation.
pub fn scale_residual(coeffs: &[f64], eta: f64, f: f64) -> f64 {
    let abs: Vec<f64> = coeffs.iter().map(|x| x.abs()).collect();
    let m = coeffs.len() as f64;
    (eta * scale_sum(&abs, eta, f) - m).abs() / m
}

/// Maximum-likelihood scale for a fixed shape, by iterating
/// `η = M / Σ (f+1)|x| / (f + η|x|)` from `η = 1`.
pub fn fit_eta(coeffs: &[f64], f_hat: f64, tol: f64, max_iter: usize) -> Result<f64> {
    if coeffs.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 coefficients, got {}", coeffs.len())));
    }
    if !(f_hat > 0.0) {
        return Err(Error::Parameter(format!("shape must be positive, got {f_hat}")));
    }
    let abs: Vec<f64> = coeffs.iter().map(|x| x.abs()).collect();
    let m = abs.len() as f64;
    let nonzero = abs.iter().filter(|&&a| a > 0.0).count() as f64;
    // η·Σ(...) increases from 0 to (f+1)·nnz, so a root exists only above M.
    if (f_hat + 1.0) * nonzero <= m {
        return Err(Error::Degenerate(format!(
            "{} of {} coefficients are zero; no finite scale fits",
            m - nonzero,
            m
        )));
    }

    let mut eta = 1.0_f64;
    let mut last_step = 0.0_f64;
    for _ in 0..max_iter {
        let target = m / scale_sum(&abs, eta, f_hat);
        let mut step = target - eta;
        if step * last_step < 0.0 {
            step *= 0.5;
        }
        let next = eta + step;
        last_step = step;
        let rel = (next - eta).abs() / next;
        eta = next;
        if rel < tol && (eta * scale_sum(&abs, eta, f_hat) - m).abs() / m < tol {
            return Ok(eta);
        }
    }
    Err(Error::Convergence { iterations: max_iter, last: eta })
}

struct Derivatives {
    d_f: f64,
    d_ff: f64,
    d_ee: f64,
    d_ef: f64,
}

fn derivatives(abs: &[f64], eta: f64, f: f64) -> Derivatives {
    let m = abs.len() as f64;
    let (mut log_sum, mut r1, mut r2, mut a1, mut a2, mut q) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &a in abs {
        let u = eta * a;
        let den = f + u;
        log_sum += (u / f).ln_1p();
        r1 += u / den;
        r2 += u / (den * den);
        a1 += a / den;
        a2 += a / (den * den);
        q += a * a / (den * den);
    }
    let d_f = -log_sum + (f + 1.0) / f * r1;
    let d_ff = (f - 1.0) / (f * f) * r1 - (f + 1.0) / f * r2;
    let d_ee = -m / (eta * eta) + (f + 1.0) * q;
    let d_ef = -a1 + (f + 1.0) * a2;
    Derivatives { d_f, d_ff, d_ee, d_ef }
}

/// Joint maximum-likelihood fit of `(η, f)`.
///
/// Alternates the scale fixed point with a Newton step on the profile
/// likelihood in `f`, bracketed in `[SHAPE_MIN, SHAPE_MAX]` with log-scale
/// bisection when Newton leaves the bracket. If the likelihood keeps
/// increasing towards a bracket end the shape is clamped there and a
/// warning is logged.
pub fn fit_shape(coeffs: &[f64], tol: f64, max_iter: usize) -> Result<DLParams> {
    if coeffs.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 coefficients, got {}", coeffs.len())));
    }
    let abs: Vec<f64> = coeffs.iter().map(|x| x.abs()).collect();
    let m = abs.len() as f64;
    let eta_iter = 500;

    let (mut lo, mut hi) = (SHAPE_MIN, SHAPE_MAX);
    let (mut lo_tested, mut hi_tested) = (false, false);
    let mut f = 1.0_f64;
    for _ in 0..max_iter {
        let eta = fit_eta(coeffs, f, tol, eta_iter)?;
        let d = derivatives(&abs, eta, f);
        if d.d_f.abs() < tol * m {
            return DLParams::new(eta, f);
        }
        if d.d_f > 0.0 {
            if f >= SHAPE_MAX {
                log::warn!("DL shape estimate hit the upper bound {SHAPE_MAX}; clamping");
                return DLParams::new(eta, SHAPE_MAX);
            }
            lo = f;
            lo_tested = true;
        } else {
            if f <= SHAPE_MIN {
                log::warn!("DL shape estimate hit the lower bound {SHAPE_MIN}; clamping");
                return DLParams::new(eta, SHAPE_MIN);
            }
            hi = f;
            hi_tested = true;
        }

        let curvature = d.d_ff - d.d_ef * d.d_ef / d.d_ee;
        let newton = f - d.d_f / curvature;
        f = if curvature < 0.0 && newton > lo && newton < hi {
            newton
        } else if newton >= hi && !hi_tested && d.d_f > 0.0 {
            // probe the open end before bisecting towards it
            if f * 10.0 < hi {
                f * 10.0
            } else {
                hi
            }
        } else if newton <= lo && !lo_tested && d.d_f < 0.0 {
            if f / 10.0 > lo {
                f / 10.0
            } else {
                lo
            }
        } else {
            (lo * hi).sqrt()
        };
        if hi - lo < 1e-14 * hi {
            return DLParams::new(fit_eta(coeffs, f, tol, eta_iter)?, f);
        }
    }
    Err(Error::Convergence { iterations: max_iter, last: f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dl(eta: f64, f: f64) -> DLParams {
        DLParams::new(eta, f).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DLParams::new(0.0, 1.0).is_err());
        assert!(DLParams::new(1.0, -1.0).is_err());
        assert!(DLParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn density_at_zero_and_symmetry() {
        for (eta, f) in [(0.5, 0.5), (2.0, 3.0), (8.0, 10.0)] {
            let p = dl(eta, f);
            assert_eq!(p.pdf(0.0), eta / 2.0);
            for x in [0.1, 1.0, 17.0] {
                assert_eq!(p.pdf(x), p.pdf(-x));
                assert!((p.ln_pdf(x) - p.pdf(x).ln()).abs() < 1e-12);
            }
        }
        let p = dl(2.0, 3.0);
        assert!((p.pdf(1.5) - 1.0 * (1.0 + 2.0 * 1.5 / 3.0f64).powf(-4.0)).abs() < 1e-15);
    }

    #[test]
    fn cdf_median_and_limits() {
        let p = dl(2.0, 3.0);
        assert_eq!(p.cdf(0.0), 0.5);
        assert!(p.cdf(1e12) > 1.0 - 1e-12);
        assert!(p.cdf(-1e12) < 1e-12);
        let mut prev = 0.0;
        for k in -200..=200 {
            let c = p.cdf(k as f64 * 0.05);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn quantile_round_trips() {
        for (eta, f) in [(0.5, 0.5), (2.0, 3.0), (8.0, 10.0)] {
            let p = dl(eta, f);
            assert_eq!(p.inverse_cdf(0.5).unwrap(), 0.0);
            for u in [1e-6, 0.01, 0.25, 0.49, 0.51, 0.9, 0.999] {
                let x = p.inverse_cdf(u).unwrap();
                assert!((p.cdf(x) - u).abs() < 1e-12, "u={u}");
                assert_eq!(x < 0.0, u < 0.5);
            }
        }
        let p = dl(1.0, 1.0);
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(p.inverse_cdf(u), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn sampler_is_deterministic_and_centered() {
        let p = dl(1.0, 3.0);
        let a = sample_hierarchical(&p, &mut ChaCha8Rng::seed_from_u64(11), 2000);
        let b = sample_hierarchical(&p, &mut ChaCha8Rng::seed_from_u64(11), 2000);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.tau > 0.0 && s.lambda > 0.0));

        let n = 100_000;
        let xs: Vec<f64> = sample_hierarchical(&p, &mut ChaCha8Rng::seed_from_u64(5), n)
            .into_iter()
            .map(|s| s.x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn fit_eta_degenerate_inputs() {
        assert!(matches!(fit_eta(&[0.0, 0.0, 0.0], 3.0, 1e-8, 500), Err(Error::Degenerate(_))));
        assert!(matches!(fit_eta(&[1.0], 3.0, 1e-8, 500), Err(Error::Degenerate(_))));
        assert!(matches!(fit_eta(&[1.0, 2.0], 3.0, 1e-8, 1), Err(Error::Convergence { .. })));
    }

    #[test]
    fn fit_eta_fixed_point_and_equivariance() {
        let p = dl(2.0, 3.0);
        let xs: Vec<f64> = sample_hierarchical(&p, &mut ChaCha8Rng::seed_from_u64(2), 20_000)
            .into_iter()
            .map(|s| s.x)
            .collect();
        let eta = fit_eta(&xs, 3.0, 1e-8, 500).unwrap();
        assert!(scale_residual(&xs, eta, 3.0) < 1e-8);
        for c in [0.01, 7.0, 1e4] {
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let eta_c = fit_eta(&scaled, 3.0, 1e-10, 500).unwrap();
            assert!((eta_c * c - eta).abs() / eta < 1e-7, "c={c}");
        }
    }

    #[test]
    fn fit_shape_is_a_local_maximum() {
        let p = dl(2.0, 3.0);
        let xs: Vec<f64> = sample_hierarchical(&p, &mut ChaCha8Rng::seed_from_u64(9), 20_000)
            .into_iter()
            .map(|s| s.x)
            .collect();
        let fit = fit_shape(&xs, 1e-8, 200).unwrap();
        let best = fit.log_likelihood(&xs);
        for (de, df) in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.02), (1.0, 0.98), (1.01, 1.02), (0.99, 0.98)] {
            let q = dl(fit.eta() * de, fit.shape() * df);
            assert!(q.log_likelihood(&xs) <= best);
        }
        let d = derivatives(&xs.iter().map(|x| x.abs()).collect::<Vec<_>>(), fit.eta(), fit.shape());
        assert!(d.d_f.abs() < 1e-8 * xs.len() as f64);
    }

    #[test]
    fn gaussian_data_clamps_shape_at_upper_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
        let fit = fit_shape(&xs, 1e-8, 200).unwrap();
        assert_eq!(fit.shape(), SHAPE_MAX);
    }
}
