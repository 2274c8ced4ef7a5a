//! Reference implementations used as test oracles. None of these call into
//! the library.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, fc: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// `∫ exp(g(s)) ds` over `[lo, hi]` by the trapezoid rule on a uniform grid,
/// returned as `(ln of the integral)`. Exponentially accurate for smooth,
/// rapidly decaying integrands.
pub fn ln_trapezoid<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let values: Vec<f64> = (0..=steps).map(|k| g(lo + k as f64 * h)).collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            w * (v - top).exp()
        })
        .sum();
    top + (sum * h).ln()
}

/// `(⟨τ⟩, ⟨1/τ⟩)` of the density `∝ τ^-½ exp(-(aτ + b/τ)/2)` by quadrature
/// in `s = ln τ`.
pub fn gig_moments_by_quadrature(a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (b / a).ln();
    let (lo, hi) = (center - 40.0, center + 40.0);
    let steps = 80_000;
    let base = |s: f64| 0.5 * s - 0.5 * (a * s.exp() + b * (-s).exp());
    let z = ln_trapezoid(&base, lo, hi, steps);
    let m1 = ln_trapezoid(&|s: f64| base(s) + s, lo, hi, steps);
    let mi = ln_trapezoid(&|s: f64| base(s) - s, lo, hi, steps);
    ((m1 - z).exp(), (mi - z).exp())
}

/// `⟨λ²⟩` of the density `∝ λ exp(-λ² c / 2)` by quadrature in `s = ln λ`.
pub fn rayleigh_second_moment_by_quadrature(c: f64) -> f64 {
    let center = -0.5 * c.ln();
    let (lo, hi) = (center - 40.0, center + 5.0);
    let steps = 60_000;
    // λ dλ = λ² ds
    let base = |s: f64| 2.0 * s - 0.5 * c * (2.0 * s).exp();
    let z = ln_trapezoid(&base, lo, hi, steps);
    let m2 = ln_trapezoid(&|s: f64| base(s) + 2.0 * s, lo, hi, steps);
    (m2 - z).exp()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Double-Lomax density `(η/2)(1 + η|x|/f)^-(f+1)`.
pub fn dl_pdf(x: f64, eta: f64, f: f64) -> f64 {
    0.5 * eta * (1.0 + eta * x.abs() / f).powf(-(f + 1.0))
}

/// Double-Lomax CDF.
pub fn dl_cdf(x: f64, eta: f64, f: f64) -> f64 {
    let tail = 0.5 * (1.0 + eta * x.abs() / f).powf(-f);
    if x < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Inverse of [`dl_cdf`].
pub fn dl_quantile(u: f64, eta: f64, f: f64) -> f64 {
    let (tail, sign) = if u < 0.5 { (u, -1.0) } else { (1.0 - u, 1.0) };
    sign * f / eta * ((2.0 * tail).powf(-1.0 / f) - 1.0)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

/// Cholesky factor of a small SPD matrix stored as nested rows.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Log of the multivariate Gaussian copula density at normal scores `z`,
/// `-½ ln|Σ| - ½ zᵀ(Σ⁻¹ - I) z`.
pub fn ln_gaussian_copula_direct(sigma: &[Vec<f64>], z: &[f64]) -> f64 {
    let l = cholesky(sigma);
    let n = z.len();
    let mut y = z.to_vec();
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (z[i] - s) / l[i][i];
    }
    let ln_det: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
    let quad: f64 = y.iter().map(|v| v * v).sum::<f64>() - z.iter().map(|v| v * v).sum::<f64>();
    -0.5 * ln_det - 0.5 * quad
}

/// Correlation matrix `D^-½ B Bᵀ D^-½` of a random `d x (d + 2)` Gaussian `B`.
pub fn random_correlation<R: rand::Rng>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let b: Vec<Vec<f64>> = (0..d).map(|_| (0..d + 2).map(|_| StandardNormal.sample(rng)).collect()).collect();
    let mut s = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            s[i][j] = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
        }
    }
    (0..d).map(|i| (0..d).map(|j| s[i][j] / (s[i][i] * s[j][j]).sqrt()).collect()).collect()
}
