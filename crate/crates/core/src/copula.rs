//! Gaussian copulas over double-Lomax marginals: the probit transform,
//! copula and D-vine densities, directional correlation fitting and the
//! sparse precision correction consumed by the variational engine.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use faer::{Mat, Side};

use crate::dlomax::{fit_shape, DLParams};
use crate::error::{Error, Result};
use crate::special::normal_quantile;
use crate::wavelet::{grid_neighborhoods, Direction, NeighborhoodSet, PyramidLayout};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before the probit.
pub const CDF_CLAMP: f64 = 1e-15;
/// Eigenvalue floor of the SPD projection.
pub const EIGEN_FLOOR: f64 = 1e-6;

/// `v = Φ⁻¹(F(x))` elementwise. Computed from the lower tail so the map is
/// exactly odd and keeps full precision for large `|x|`.
pub fn v_transform(coeffs: &[f64], p: &DLParams) -> Vec<f64> {
    coeffs.iter().map(|&x| v_scalar(x, p)).collect()
}

fn v_scalar(x: f64, p: &DLParams) -> f64 {
    let tail = p.tail(x).clamp(CDF_CLAMP, 0.5);
    let mag = -normal_quantile(tail);
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Lower Cholesky factor, or a linear-algebra error if `a` is not SPD.
pub(crate) fn cholesky(a: &Mat<f64>) -> Result<Mat<f64>> {
    a.llt(Side::Lower)
        .map(|llt| llt.L().to_owned())
        .map_err(|e| Error::LinearAlgebra(format!("matrix is not positive definite: {e:?}")))
}

/// Solves `L y = b` for lower-triangular `l`.
fn forward_solve(l: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Log of the Gaussian copula density evaluated at normal scores `v`.
pub fn gaussian_copula_ln_density_scores(v: &[f64], sigma: &Mat<f64>) -> Result<f64> {
    let d = v.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::Dimension(format!(
            "{d} scores against a {}x{} correlation matrix",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let l = cholesky(sigma)?;
    let half_ln_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
    let y = forward_solve(&l, v);
    let quad = y.iter().map(|a| a * a).sum::<f64>() - v.iter().map(|a| a * a).sum::<f64>();
    Ok(-half_ln_det - 0.5 * quad)
}

/// `|Σ|^-½ exp(-vᵀ(Σ⁻¹ - I)v / 2)` with `v = Φ⁻¹(u)`.
pub fn gaussian_copula_density(u: &[f64], sigma: &Mat<f64>) -> Result<f64> {
    if let Some(bad) = u.iter().find(|&&ui| !(ui > 0.0 && ui < 1.0)) {
        return Err(Error::Domain(format!("copula argument {bad} outside (0, 1)")));
    }
    let v: Vec<f64> = u.iter().map(|&ui| normal_quantile(ui)).collect();
    Ok(gaussian_copula_ln_density_scores(&v, sigma)?.exp())
}

/// Fitted dependence of one direction at one wavelet scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalCopula {
    pub direction: Direction,
    pub size: usize,
    pub sigma: Mat<f64>,
    pub scale: usize,
    /// Marginal used for the probit transform.
    pub marginal: DLParams,
}

impl DirectionalCopula {
    /// `Σ⁻¹ - I`.
    pub fn precision_excess(&self) -> Result<Mat<f64>> {
        let l = cholesky(&self.sigma)?;
        let n = self.size;
        let mut k = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let y = forward_solve(&l, &e);
            // column j of Σ⁻¹ = L⁻ᵀ y
            let mut x = y;
            for i in (0..n).rev() {
                let mut s = x[i];
                for r in i + 1..n {
                    s -= l[(r, i)] * x[r];
                }
                x[i] = s / l[(i, i)];
            }
            for i in 0..n {
                k[(i, j)] = x[i];
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = s;
                k[(j, i)] = s;
            }
            k[(i, i)] -= 1.0;
        }
        Ok(k)
    }

    /// Plain-text block of `key value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "direction {}", self.direction);
        let _ = writeln!(out, "size {}", self.size);
        let _ = writeln!(out, "scale {}", self.scale);
        let _ = writeln!(out, "eta {}", self.marginal.eta());
        let _ = writeln!(out, "f {}", self.marginal.shape());
        let entries: Vec<String> = (0..self.size)
            .flat_map(|i| (0..self.size).map(move |j| (i, j)))
            .map(|(i, j)| self.sigma[(i, j)].to_string())
            .collect();
        let _ = writeln!(out, "sigma {}", entries.join(" "));
        out
    }
}

/// Serializes copulas as blank-line separated blocks.
pub fn write_copulas(copulas: &[DirectionalCopula]) -> String {
    copulas.iter().map(DirectionalCopula::to_text).collect::<Vec<_>>().join("\n")
}

/// Parses the output of [`write_copulas`].
pub fn parse_copulas(text: &str) -> Result<Vec<DirectionalCopula>> {
    let mut out = Vec::new();
    let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).chain(std::iter::once((0, "")));
    for (line, content) in lines {
        if content.is_empty() {
            if !fields.is_empty() {
                out.push(copula_from_fields(&fields)?);
                fields.clear();
            }
            continue;
        }
        let (key, value) = content
            .split_once(' ')
            .ok_or_else(|| Error::Parse { line, message: format!("expected 'key value', got '{content}'") })?;
        if fields.insert(key, (line, value.trim())).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate key '{key}'") });
        }
    }
    Ok(out)
}

fn copula_from_fields(fields: &BTreeMap<&str, (usize, &str)>) -> Result<DirectionalCopula> {
    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| Error::Parse { line: 0, message: format!("missing key '{key}'") })
    };
    fn num<T: std::str::FromStr>((line, s): (usize, &str)) -> Result<T> {
        s.parse().map_err(|_| Error::Parse { line, message: format!("bad number '{s}'") })
    }
    let direction: Direction = get("direction")?.1.parse()?;
    let size: usize = num(get("size")?)?;
    let scale: usize = num(get("scale")?)?;
    let marginal = DLParams::new(num(get("eta")?)?, num(get("f")?)?)?;
    let (line, sigma_text) = get("sigma")?;
    let entries: Vec<f64> = sigma_text.split_whitespace().map(|s| num((line, s))).collect::<Result<_>>()?;
    if entries.len() != size * size {
        return Err(Error::Parse { line, message: format!("sigma needs {} entries, got {}", size * size, entries.len()) });
    }
    let sigma = Mat::from_fn(size, size, |i, j| entries[i * size + j]);
    Ok(DirectionalCopula { direction, size, sigma, scale, marginal })
}

/// Normalizes a covariance to unit diagonal and projects it onto the SPD
/// cone by flooring eigenvalues at [`EIGEN_FLOOR`]. The flag reports
/// whether the projection changed anything.
pub fn project_correlation(cov: &Mat<f64>) -> Result<(Mat<f64>, bool)> {
    let n = cov.nrows();
    let mut r = unit_diagonal(cov)?;
    let evd = r
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let min = (0..n).map(|i| s[i]).fold(f64::INFINITY, f64::min);
    if min >= EIGEN_FLOOR {
        return Ok((r, false));
    }
    let u = evd.U();
    let clipped = Mat::from_fn(n, n, |i, j| (0..n).map(|k| u[(i, k)] * s[k].max(EIGEN_FLOOR) * u[(j, k)]).sum());
    r = unit_diagonal(&clipped)?;
    Ok((r, true))
}

fn unit_diagonal(cov: &Mat<f64>) -> Result<Mat<f64>> {
    let n = cov.nrows();
    let d: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
    if let Some(bad) = d.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Estimation(format!("non-positive variance {bad} in sample covariance")));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]) / (d[i] * d[j]).sqrt();
            v.clamp(-1.0, 1.0)
        }
    }))
}

/// Fits the window correlation of one subband.
pub fn fit_sigma(windows: &NeighborhoodSet, coeffs: &[f64], p: &DLParams, scale: usize) -> Result<DirectionalCopula> {
    fit_sigma_pooled(&[(windows, coeffs)], p, scale)
}

/// Fits one correlation matrix from windows pooled over several subbands
/// sharing direction and size.
pub fn fit_sigma_pooled(groups: &[(&NeighborhoodSet, &[f64])], p: &DLParams, scale: usize) -> Result<DirectionalCopula> {
    let first = groups.first().ok_or_else(|| Error::Estimation("no windows to fit".into()))?.0;
    let (direction, size) = (first.direction, first.size);
    if groups.iter().any(|(w, _)| w.direction != direction || w.size != size) {
        return Err(Error::Structure("pooled windows disagree on direction or size".into()));
    }
    let count: usize = groups.iter().map(|(w, _)| w.windows.len()).sum();
    if count < size + 1 {
        return Err(Error::Estimation(format!("{count} windows cannot fit a {size}x{size} correlation")));
    }
    let mut cov = Mat::<f64>::zeros(size, size);
    for (set, coeffs) in groups {
        let v = v_transform(coeffs, p);
        for w in &set.windows {
            for a in 0..size {
                let va = v[w[a]];
                for b in 0..=a {
                    cov[(a, b)] += va * v[w[b]];
                }
            }
        }
    }
    for a in 0..size {
        for b in 0..=a {
            let s = cov[(a, b)] / count as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    let (sigma, _) = project_correlation(&cov)?;
    cholesky(&sigma).map_err(|_| Error::Estimation("correlation estimate is singular after projection".into()))?;
    Ok(DirectionalCopula { direction, size, sigma, scale, marginal: *p })
}

/// One pair-copula edge of a D-vine.
#[derive(Debug, Clone, PartialEq)]
pub struct VineEdge {
    pub conditioned: (usize, usize),
    pub conditioning: Vec<usize>,
    /// Partial correlation of the Gaussian pair copula.
    pub rho: f64,
}

/// A drawable vine on nodes `0..d` in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct VineStructure {
    size: usize,
    trees: Vec<Vec<VineEdge>>,
}

impl VineStructure {
    /// D-vine with the given partial correlations: `rhos[t][i]` belongs to
    /// the edge `(i, i + t + 1)` of tree `t + 1`.
    pub fn new(size: usize, rhos: &[Vec<f64>]) -> Result<Self> {
        if size < 2 {
            return Err(Error::Structure(format!("a vine needs at least 2 nodes, got {size}")));
        }
        if rhos.len() != size - 1 {
            return Err(Error::Structure(format!("{size} nodes need {} trees, got {}", size - 1, rhos.len())));
        }
        let trees = rhos
            .iter()
            .enumerate()
            .map(|(t, level)| {
                let lag = t + 1;
                level
                    .iter()
                    .enumerate()
                    .map(|(i, &rho)| VineEdge { conditioned: (i, i + lag), conditioning: (i + 1..i + lag).collect(), rho })
                    .collect()
            })
            .collect();
        Self::from_trees(size, trees)
    }

    /// Validates an explicit edge list.
    pub fn from_trees(size: usize, trees: Vec<Vec<VineEdge>>) -> Result<Self> {
        if size < 2 || trees.len() != size - 1 {
            return Err(Error::Structure(format!("{size} nodes need {} trees, got {}", size.saturating_sub(1), trees.len())));
        }
        for (t, level) in trees.iter().enumerate() {
            let lag = t + 1;
            if level.len() != size - lag {
                return Err(Error::Structure(format!("tree {lag} needs {} edges, got {}", size - lag, level.len())));
            }
            let mut degree = vec![0usize; size];
            for (i, e) in level.iter().enumerate() {
                let expected: Vec<usize> = (i + 1..i + lag).collect();
                if e.conditioned != (i, i + lag) || e.conditioning != expected {
                    return Err(Error::Structure(format!("edge {i} of tree {lag} is not a path edge")));
                }
                if !(e.rho.abs() < 1.0) {
                    return Err(Error::Structure(format!("partial correlation {} outside (-1, 1)", e.rho)));
                }
                degree[e.conditioned.0] += 1;
                degree[e.conditioned.1] += 1;
            }
            if degree.iter().any(|&d| d > 2) {
                return Err(Error::Structure(format!("tree {lag} has a node of degree above 2")));
            }
        }
        Ok(Self { size, trees })
    }

    /// D-vine whose pair copulas reproduce the Gaussian copula of `sigma`.
    pub fn from_correlation(sigma: &Mat<f64>) -> Result<Self> {
        let d = sigma.nrows();
        let mut rhos = Vec::with_capacity(d.saturating_sub(1));
        for lag in 1..d {
            let mut level = Vec::with_capacity(d - lag);
            for i in 0..d - lag {
                // partial correlation from the inverse of the block i..=i+lag
                let sub = Mat::from_fn(lag + 1, lag + 1, |a, b| sigma[(i + a, i + b)]);
                let l = cholesky(&sub)?;
                let mut e0 = vec![0.0; lag + 1];
                e0[0] = 1.0;
                let mut en = vec![0.0; lag + 1];
                en[lag] = 1.0;
                let y0 = forward_solve(&l, &e0);
                let yn = forward_solve(&l, &en);
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let k0n = dot(&y0, &yn);
                level.push(-k0n / (dot(&y0, &y0) * dot(&yn, &yn)).sqrt());
            }
            rhos.push(level);
        }
        Self::new(d, &rhos)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn trees(&self) -> &[Vec<VineEdge>] {
        &self.trees
    }

    /// Sum of log pair-copula densities at normal scores `z`.
    pub fn ln_copula_density_scores(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.size {
            return Err(Error::Dimension(format!("vine on {} nodes evaluated at {} values", self.size, z.len())));
        }
        // a[i]: node i conditioned on the nodes after it in the current window,
        // b[j]: node j conditioned on the nodes before it.
        let mut a = z.to_vec();
        let mut b = z.to_vec();
        let mut total = 0.0;
        for (t, level) in self.trees.iter().enumerate() {
            let lag = t + 1;
            for (i, e) in level.iter().enumerate() {
                total += ln_pair_density(a[i], b[i + lag], e.rho);
            }
            let mut next_a = a.clone();
            let mut next_b = b.clone();
            for i in 0..level.len().saturating_sub(1) {
                next_a[i] = h_score(a[i], b[i + lag], level[i].rho);
                next_b[i + lag + 1] = h_score(b[i + lag + 1], a[i + 1], level[i + 1].rho);
            }
            a = next_a;
            b = next_b;
        }
        Ok(total)
    }
}

/// Normal score of the Gaussian h-function, `Φ⁻¹(h(u₁ | u₂; ρ))`.
fn h_score(z1: f64, z2: f64, rho: f64) -> f64 {
    (z1 - rho * z2) / (1.0 - rho * rho).sqrt()
}

fn ln_pair_density(z1: f64, z2: f64, rho: f64) -> f64 {
    let r2 = rho * rho;
    -0.5 * (1.0 - r2).ln() - (r2 * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * (1.0 - r2))
}

/// Log joint density of DL marginals coupled by a Gaussian D-vine.
pub fn dvine_log_density(x: &[f64], p: &DLParams, vine: &VineStructure) -> Result<f64> {
    if x.len() != vine.size() {
        return Err(Error::Dimension(format!("vine on {} nodes evaluated at {} values", vine.size(), x.len())));
    }
    let marginal: f64 = x.iter().map(|&xi| p.ln_pdf(xi)).sum();
    Ok(marginal + vine.ln_copula_density_scores(&v_transform(x, p))?)
}

/// Symmetric sparse matrix in compressed-row form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Builds the matrix by summing `(i, j, v)` entries. Each off-diagonal
    /// entry is mirrored, so callers supply one triangle or both.
    fn from_accumulator(dim: usize, acc: BTreeMap<(usize, usize), f64>) -> Self {
        let mut row_ptr = vec![0; dim + 1];
        let mut col_idx = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for (&(i, j), &v) in &acc {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// Largest `|P_ij - P_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.iter().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }
}

/// Relative weight of each direction's correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionWeights {
    pub row: f64,
    pub column: f64,
    pub diagonal: f64,
    pub antidiagonal: f64,
}

impl Default for DirectionWeights {
    fn default() -> Self {
        Self { row: 1.0 / 3.0, column: 1.0 / 3.0, diagonal: 1.0 / 3.0, antidiagonal: 0.0 }
    }
}

impl DirectionWeights {
    pub fn get(&self, d: Direction) -> f64 {
        match d {
            Direction::Row => self.row,
            Direction::Column => self.column,
            Direction::Diagonal => self.diagonal,
            Direction::AntiDiagonal => self.antidiagonal,
        }
    }

    /// Directions with a nonzero weight.
    pub fn active(&self) -> Vec<Direction> {
        [Direction::Row, Direction::Column, Direction::Diagonal, Direction::AntiDiagonal]
            .into_iter()
            .filter(|&d| self.get(d) != 0.0)
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.row + self.column + self.diagonal + self.antidiagonal
    }
}

/// Embeds every fitted copula into an `m x m` correction.
///
/// Each copula acts on all detail subbands of its scale. Window
/// contributions `Σ⁻¹ - I` are scaled entrywise by `1/√(c_j c_k)`, where
/// `c` counts the windows of that direction covering a coefficient, so the
/// diagonal is the coverage average and the per-direction sum
/// `I + P_d` stays positive definite. Coefficients that no window covers
/// receive no correction. Directions are combined with `weights`.
pub fn assemble_precision_correction(
    copulas: &[DirectionalCopula],
    layout: &PyramidLayout,
    weights: &DirectionWeights,
) -> Result<SparseSymmetric> {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for cop in copulas {
        let w = weights.get(cop.direction);
        if w == 0.0 {
            continue;
        }
        let k = cop.precision_excess()?;
        for band in layout.details(cop.scale) {
            let set = grid_neighborhoods(band.rows, band.cols, cop.direction, cop.size)?;
            let scale: Vec<f64> = set
                .coverage(band.len())
                .iter()
                .map(|&c| if c > 0 { 1.0 / (c as f64).sqrt() } else { 0.0 })
                .collect();
            for win in &set.windows {
                for (a, &ja) in win.iter().enumerate() {
                    for (b, &jb) in win.iter().enumerate() {
                        let v = w * k[(a, b)] * scale[ja] * scale[jb];
                        *acc.entry((band.offset + ja, band.offset + jb)).or_insert(0.0) += v;
                    }
                }
            }
        }
    }
    Ok(SparseSymmetric::from_accumulator(layout.len(), acc))
}

/// Settings for fitting copulas from a coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaFitConfig {
    pub size: usize,
    pub weights: DirectionWeights,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CopulaFitConfig {
    fn default() -> Self {
        Self { size: 3, weights: DirectionWeights::default(), tol: 1e-8, max_iter: 200 }
    }
}

/// DL marginal of one detail scale, fit on all its coefficients.
pub fn fit_scale_marginal(coeffs: &[f64], layout: &PyramidLayout, scale: usize, tol: f64, max_iter: usize) -> Result<DLParams> {
    let pooled: Vec<f64> = layout.details(scale).flat_map(|b| coeffs[b.range()].iter().copied()).collect();
    fit_shape(&pooled, tol, max_iter)
}

/// Fits marginals and directional copulas for every detail scale of a flat
/// coefficient vector. Windows are pooled over the three orientations of a
/// scale. Scales too small for the window size are skipped.
pub fn fit_pyramid_copulas(coeffs: &[f64], layout: &PyramidLayout, config: &CopulaFitConfig) -> Result<Vec<DirectionalCopula>> {
    if coeffs.len() != layout.len() {
        return Err(Error::Dimension(format!("{} coefficients for a layout of {}", coeffs.len(), layout.len())));
    }
    let mut out = Vec::new();
    for scale in 1..=layout.levels() {
        let marginal = fit_scale_marginal(coeffs, layout, scale, config.tol, config.max_iter)?;
        for direction in config.weights.active() {
            let bands: Vec<_> = layout.details(scale).copied().collect();
            let sets: Vec<NeighborhoodSet> = match bands
                .iter()
                .map(|b| grid_neighborhoods(b.rows, b.cols, direction, config.size))
                .collect::<Result<_>>()
            {
                Ok(s) => s,
                Err(Error::Range(msg)) => {
                    log::debug!("skipping scale {scale} {direction}: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let groups: Vec<(&NeighborhoodSet, &[f64])> =
                sets.iter().zip(&bands).map(|(s, b)| (s, &coeffs[b.range()])).collect();
            let count: usize = sets.iter().map(|s| s.windows.len()).sum();
            if count < config.size + 1 {
                log::debug!("skipping scale {scale} {direction}: only {count} windows");
                continue;
            }
            out.push(fit_sigma_pooled(&groups, &marginal, scale)?);
        }
    }
    Ok(out)
}
