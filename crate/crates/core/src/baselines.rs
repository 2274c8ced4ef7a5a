//! Binary iterative hard thresholding (BIHT).

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, norm};
use crate::onebit::{sign_mismatches, signed};

/// Settings of [`biht_recover`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BihtConfig {
    pub sparsity_k: usize,
    pub step: f64,
    pub max_iter: usize,
    /// Halve the step whenever a move would increase the number of sign
    /// mismatches.
    pub step_halving: bool,
}

impl BihtConfig {
    pub fn new(sparsity_k: usize) -> Self {
        Self { sparsity_k, step: 1.0, max_iter: 300, step_halving: false }
    }
}

/// Result of [`biht_recover`].
#[derive(Debug, Clone, PartialEq)]
pub struct BihtOutput {
    /// Unit-norm estimate.
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    /// Sign mismatches of the final iterate.
    pub mismatches: usize,
}

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
pub fn hard_threshold(x: &mut [f64], k: usize) {
    if k >= x.len() {
        return;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    for &i in &order[k..] {
        x[i] = 0.0;
    }
}

/// One BIHT move `H_k(x + (step/2) Aᵀ((2t-1) - sign(Ax)))`.
pub fn biht_step(a: &Mat<f64>, s: &[f64], x: &[f64], step: f64, k: usize) -> Vec<f64> {
    let ax = matvec(a, x);
    let residual: Vec<f64> = s.iter().zip(&ax).map(|(&si, &yi)| si - if yi >= 0.0 { 1.0 } else { -1.0 }).collect();
    let g = matvec_t(a, &residual);
    let mut next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + 0.5 * step * gi).collect();
    hard_threshold(&mut next, k);
    next
}

/// Runs BIHT from `x = 0` and returns the normalized final iterate.
pub fn biht_recover(t: &[u8], a: &Mat<f64>, config: &BihtConfig) -> Result<BihtOutput> {
    let (n, m) = (a.nrows(), a.ncols());
    if t.len() != n {
        return Err(Error::Dimension(format!("{} signs for {n} measurements", t.len())));
    }
    if config.sparsity_k == 0 || config.sparsity_k > m {
        return Err(Error::Range(format!("sparsity {} outside 1..={m}", config.sparsity_k)));
    }
    if !(config.step > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {}", config.step)));
    }
    let s = signed(t);
    let k = config.sparsity_k;
    let mut x = vec![0.0; m];
    let mut mismatches = sign_mismatches(a, &x, t);
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        if mismatches == 0 && norm(&x) > 0.0 {
            break;
        }
        iterations += 1;
        let mut step = config.step;
        let mut next = biht_step(a, &s, &x, step, k);
        let mut next_mismatches = sign_mismatches(a, &next, t);
        if config.step_halving {
            let mut halvings = 0;
            while next_mismatches > mismatches && halvings < 40 {
                step *= 0.5;
                halvings += 1;
                next = biht_step(a, &s, &x, step, k);
                next_mismatches = sign_mismatches(a, &next, t);
            }
            if next_mismatches > mismatches {
                break;
            }
        }
        if next == x {
            break;
        }
        x = next;
        mismatches = next_mismatches;
    }
    let nx = norm(&x);
    if nx == 0.0 {
        return Err(Error::Degenerate("BIHT iterate vanished".into()));
    }
    Ok(BihtOutput { x_hat: x.iter().map(|v| v / nx).collect(), iterations, mismatches })
}

/// Smallest number of entries holding `fraction` of the energy of `x`.
pub fn energy_support_size(x: &[f64], fraction: f64) -> usize {
    let mut e: Vec<f64> = x.iter().map(|v| v * v).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = e.iter().sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, v) in e.iter().enumerate() {
        acc += v;
        if acc >= fraction * total {
            return i + 1;
        }
    }
    e.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onebit::{generate_matrix, measure};

    #[test]
    fn threshold_keeps_largest() {
        let mut x = vec![0.1, -3.0, 2.0, 0.5, -2.0];
        hard_threshold(&mut x, 2);
        assert_eq!(x, vec![0.0, -3.0, 2.0, 0.0, 0.0]);
        let mut y = vec![1.0, 2.0];
        hard_threshold(&mut y, 2);
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn consistent_sparse_point_is_fixed() {
        let a = generate_matrix(50, 10, 1);
        let mut x = vec![0.0; 10];
        x[2] = 1.0;
        x[7] = -0.5;
        let t = measure(&a, &x, 0.0, 1).unwrap();
        assert_eq!(biht_step(&a, &signed(&t), &x, 1.0, 2), x);
    }

    #[test]
    fn output_is_k_sparse_and_unit_norm() {
        let a = generate_matrix(120, 20, 2);
        let x: Vec<f64> = (0..20).map(|i| if i % 4 == 0 { (i + 1) as f64 } else { 0.0 }).collect();
        let t = measure(&a, &x, 0.0, 2).unwrap();
        for halving in [false, true] {
            let cfg = BihtConfig { step_halving: halving, ..BihtConfig::new(5) };
            let out = biht_recover(&t, &a, &cfg).unwrap();
            assert_eq!(out.x_hat.iter().filter(|v| **v != 0.0).count(), 5);
            assert!((norm(&out.x_hat) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(biht_recover(&t, &a, &BihtConfig::new(21)), Err(Error::Range(_))));
    }

    #[test]
    fn support_size() {
        assert_eq!(energy_support_size(&[3.0, 0.0, 4.0], 0.95), 2);
        assert_eq!(energy_support_size(&[0.0, 10.0, 0.1], 0.95), 1);
    }
}
