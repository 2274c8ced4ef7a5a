//! Oversampling-rate sweeps: test signals, per-cell recovery runs, CSV
//! results and median/IQR summaries.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{biht_recover, energy_support_size, BihtConfig};
use crate::copula::DirectionWeights;
use crate::dlomax::DLParams;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{matvec, norm};
use crate::onebit::{generate_matrix, measure, reconstruction_snr, sign_consistency};
use crate::special::normal_cdf;
use crate::vb::{recover, RecoveryConfig, SigmaRefit};
use crate::wavelet::{analyze, synthesize, Filter, Orientation, PyramidLayout, WaveletPyramid};

/// Synthetic test signal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    /// Piecewise-constant rectangles.
    Blocks,
    /// Smooth ramp with step edges and a disk.
    GradientEdges,
    /// Pyramid drawn directly from the DL marginal with AR(1) Gaussian
    /// dependence inside each detail subband.
    ModelMatched,
}

impl ImageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::Blocks => "blocks",
            ImageKind::GradientEdges => "gradient-edges",
            ImageKind::ModelMatched => "model-matched",
        }
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(ImageKind::Blocks),
            "gradient-edges" | "gradient" => Ok(ImageKind::GradientEdges),
            "model-matched" | "model" => Ok(ImageKind::ModelMatched),
            other => Err(Error::Parameter(format!("unknown image kind '{other}'"))),
        }
    }
}

/// Parameters of the model-matched generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    /// AR(1) correlation between row and column neighbors.
    pub rho: f64,
    /// DL shape of every subband.
    pub shape: f64,
    /// DL scale at the finest scale; it halves with each coarser scale.
    pub eta_finest: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self { rho: 0.6, shape: 1.5, eta_finest: 4.0 }
    }
}

/// Stationary AR(1) field with unit variance: correlation `ρ^|di| ρ^|dj|`.
fn ar_field<R: Rng + ?Sized>(rows: usize, cols: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    let c = (1.0 - rho * rho).sqrt();
    for i in 0..rows {
        for j in 1..cols {
            g[i * cols + j] = rho * g[i * cols + j - 1] + c * g[i * cols + j];
        }
    }
    for i in 1..rows {
        for j in 0..cols {
            g[i * cols + j] = rho * g[(i - 1) * cols + j] + c * g[i * cols + j];
        }
    }
    g
}

/// Draws a model-matched coefficient pyramid.
pub fn model_matched_pyramid(layout: &PyramidLayout, params: &GeneratorParams, seed: u64) -> Result<WaveletPyramid> {
    if !(params.rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("AR correlation must lie in (-1, 1), got {}", params.rho)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![0.0; layout.len()];
    for band in layout.subbands() {
        let (scale_index, rho) = if band.orientation == Orientation::LL {
            (layout.levels() + 1, 0.0)
        } else {
            (band.scale, params.rho)
        };
        let eta = params.eta_finest / 2f64.powi(scale_index as i32 - 1);
        let p = DLParams::new(eta, params.shape)?;
        let g = ar_field(band.rows, band.cols, rho, &mut rng);
        for (dst, z) in coeffs[band.range()].iter_mut().zip(g) {
            *dst = p.inverse_cdf(normal_cdf(z).clamp(1e-16, 1.0 - 1e-16))?;
        }
    }
    WaveletPyramid::from_flat(layout.clone(), coeffs)
}

/// Generates a test image of the given kind.
pub fn synthesize_test_image(kind: ImageKind, rows: usize, cols: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ImageKind::Blocks => {
            let mut img = Image::from_vec(rows, cols, vec![0.5; rows * cols])?;
            for _ in 0..6 {
                let (r0, c0) = (rng.random_range(0..rows), rng.random_range(0..cols));
                let (r1, c1) = (rng.random_range(r0..rows) + 1, rng.random_range(c0..cols) + 1);
                let level: f64 = rng.random_range(-0.4..0.4);
                for i in r0..r1 {
                    for j in c0..c1 {
                        img.set(i, j, img.get(i, j) + level);
                    }
                }
            }
            Ok(img)
        }
        ImageKind::GradientEdges => {
            let (gx, gy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let edge_col = rng.random_range(cols / 4..=3 * cols / 4);
            let edge_row = rng.random_range(rows / 4..=3 * rows / 4);
            let (cy, cx) = (rng.random_range(0.0..rows as f64), rng.random_range(0.0..cols as f64));
            let radius = 0.2 * rows.min(cols) as f64;
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    let (u, v) = (i as f64 / rows as f64, j as f64 / cols as f64);
                    let mut value = 0.5 + 0.3 * (gx * v + gy * u);
                    if j >= edge_col {
                        value += 0.2;
                    }
                    if i >= edge_row {
                        value -= 0.15;
                    }
                    if (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2) <= radius * radius {
                        value += 0.25;
                    }
                    data.push(value);
                }
            }
            Image::from_vec(rows, cols, data)
        }
        ImageKind::ModelMatched => {
            let layout = PyramidLayout::new(rows, cols, 2)?;
            synthesize(&model_matched_pyramid(&layout, &GeneratorParams::default(), seed)?, Filter::Haar)
        }
    }
}

/// Recovery algorithms compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    DgvcMdl,
    VbAblation,
    Biht,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::DgvcMdl, Algorithm::VbAblation, Algorithm::Biht];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DgvcMdl => "dgvc-mdl",
            Algorithm::VbAblation => "vb-ablation",
            Algorithm::Biht => "biht",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgvc-mdl" => Ok(Algorithm::DgvcMdl),
            "vb-ablation" => Ok(Algorithm::VbAblation),
            "biht" => Ok(Algorithm::Biht),
            other => Err(Error::Parameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Where the signal of each trial comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Synthetic(ImageKind),
    Pgm(PathBuf),
}

/// Measurement noise of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Absolute(f64),
    /// Multiple of the root-mean-square of the noiseless measurements.
    RelativeRms(f64),
}

/// Full description of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub image: ImageSource,
    pub rows: usize,
    pub cols: usize,
    pub levels: usize,
    pub filter: Filter,
    pub rates: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub noise: NoiseLevel,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub neighborhood: usize,
    pub weights: DirectionWeights,
    pub sigma_refit: SigmaRefit,
    pub biht_max_iter: usize,
    pub biht_step: f64,
    pub generator: GeneratorParams,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            image: ImageSource::Synthetic(ImageKind::ModelMatched),
            rows: 32,
            cols: 32,
            levels: 2,
            filter: Filter::Haar,
            rates: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            trials: 20,
            algorithms: Algorithm::ALL.to_vec(),
            noise: NoiseLevel::Absolute(0.0),
            output_dir: PathBuf::from("results"),
            seed: 1,
            max_iter: 300,
            tol: 1e-6,
            neighborhood: 3,
            weights: DirectionWeights::default(),
            sigma_refit: SigmaRefit::EveryIteration,
            biht_max_iter: 300,
            biht_step: 1.0,
            generator: GeneratorParams::default(),
            workers: None,
        }
    }
}

fn parse_list<T: FromStr>(value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Parse { line, message: format!("bad list entry '{s}'") }))
        .collect()
}

fn parse_value<T: FromStr>(value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse { line, message: format!("bad value '{value}'") })
}

impl ExperimentSpec {
    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut m: Option<(usize, usize)> = None;
        let mut dims_given = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected key = value, got '{content}'") })?;
            let (key, value) = (key.trim(), value.trim());
            let wrap = |e: Error| match e {
                Error::Parse { .. } => e,
                other => Error::Parse { line, message: other.to_string() },
            };
            match key {
                "image" => {
                    spec.image = if value.ends_with(".pgm") {
                        ImageSource::Pgm(PathBuf::from(value))
                    } else {
                        ImageSource::Synthetic(value.parse().map_err(wrap)?)
                    }
                }
                "m" => m = Some((parse_value(value, line)?, line)),
                "rows" => {
                    spec.rows = parse_value(value, line)?;
                    dims_given = true;
                }
                "cols" => {
                    spec.cols = parse_value(value, line)?;
                    dims_given = true;
                }
                "levels" => spec.levels = parse_value(value, line)?,
                "filter" => spec.filter = value.parse().map_err(wrap)?,
                "rates" => spec.rates = parse_list(value, line)?,
                "trials" => spec.trials = parse_value(value, line)?,
                "algorithms" => spec.algorithms = parse_list(value, line)?,
                "sigma_n" => spec.noise = NoiseLevel::Absolute(parse_value(value, line)?),
                "sigma_n_rms" => spec.noise = NoiseLevel::RelativeRms(parse_value(value, line)?),
                "output_dir" => spec.output_dir = PathBuf::from(value),
                "seed" => spec.seed = parse_value(value, line)?,
                "max_iter" => spec.max_iter = parse_value(value, line)?,
                "tol" => spec.tol = parse_value(value, line)?,
                "neighborhood" => spec.neighborhood = parse_value(value, line)?,
                "weights" => {
                    let w: Vec<f64> = parse_list(value, line)?;
                    if !(3..=4).contains(&w.len()) {
                        return Err(Error::Parse { line, message: "weights takes 3 or 4 numbers".into() });
                    }
                    spec.weights = DirectionWeights {
                        row: w[0],
                        column: w[1],
                        diagonal: w[2],
                        antidiagonal: w.get(3).copied().unwrap_or(0.0),
                    };
                }
                "sigma_refit" => {
                    spec.sigma_refit = match value {
                        "every" | "every-iteration" => SigmaRefit::EveryIteration,
                        "once" => SigmaRefit::Once,
                        other => return Err(Error::Parse { line, message: format!("bad sigma_refit '{other}'") }),
                    }
                }
                "biht_max_iter" => spec.biht_max_iter = parse_value(value, line)?,
                "biht_step" => spec.biht_step = parse_value(value, line)?,
                "rho" => spec.generator.rho = parse_value(value, line)?,
                "shape" => spec.generator.shape = parse_value(value, line)?,
                "eta_finest" => spec.generator.eta_finest = parse_value(value, line)?,
                "workers" => spec.workers = Some(parse_value(value, line)?),
                other => return Err(Error::Parse { line, message: format!("unknown key '{other}'") }),
            }
        }
        if let Some((m, line)) = m {
            let side = (m as f64).sqrt().round() as usize;
            if dims_given {
                if spec.rows * spec.cols != m {
                    return Err(Error::Parse { line, message: format!("m = {m} disagrees with rows x cols") });
                }
            } else if side * side == m {
                spec.rows = side;
                spec.cols = side;
            } else {
                return Err(Error::Parse { line, message: format!("m = {m} is not a square; give rows and cols") });
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn m(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.iter().any(|&r| !(r >= 1.0 && r.is_finite())) {
            return Err(Error::Parameter("rates must be a nonempty list of values >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Parameter("no algorithms selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Parameter("workers must be at least 1".into()));
        }
        PyramidLayout::new(self.rows, self.cols, self.levels)?;
        Ok(())
    }

    /// Recovery settings shared by both variational arms.
    pub fn recovery_config(&self) -> Result<RecoveryConfig> {
        let mut cfg = RecoveryConfig::new(PyramidLayout::new(self.rows, self.cols, self.levels)?);
        cfg.max_iter = self.max_iter;
        cfg.tol = self.tol;
        cfg.neighborhood = self.neighborhood;
        cfg.direction_weights = self.weights;
        cfg.sigma_refit = self.sigma_refit;
        Ok(cfg)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a list of words: FNV-1a over the little-endian bytes,
/// finished with a splitmix64 mix.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    splitmix64(h)
}

const SIGNAL_TAG: u64 = 0x5349_474e_414c;
const MEASURE_TAG: u64 = 0x4d45_4153;

/// Seed of the signal of one trial; independent of the rate.
pub fn signal_seed(seed: u64, trial: usize) -> u64 {
    stable_hash(&[SIGNAL_TAG, seed, trial as u64])
}

/// Seed of the measurements of one `(rate, trial)` cell.
pub fn cell_seed(seed: u64, rate: f64, trial: usize) -> u64 {
    stable_hash(&[MEASURE_TAG, seed, rate.to_bits(), trial as u64])
}

/// Outcome of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub rate: f64,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub sign_consistency: f64,
    pub iterations: usize,
    pub status: Status,
    pub wall_ms: f64,
}

/// The signal vector (wavelet coefficients) of one trial.
pub fn trial_signal(spec: &ExperimentSpec, trial: usize) -> Result<Vec<f64>> {
    let layout = PyramidLayout::new(spec.rows, spec.cols, spec.levels)?;
    let seed = signal_seed(spec.seed, trial);
    let x = match &spec.image {
        ImageSource::Synthetic(ImageKind::ModelMatched) => model_matched_pyramid(&layout, &spec.generator, seed)?.into_flat(),
        ImageSource::Synthetic(kind) => {
            analyze(&synthesize_test_image(*kind, spec.rows, spec.cols, seed)?, spec.levels, spec.filter)?.into_flat()
        }
        ImageSource::Pgm(path) => {
            let img = Image::read_pgm(path)?;
            if (img.rows(), img.cols()) != (spec.rows, spec.cols) {
                return Err(Error::Dimension(format!(
                    "image is {}x{}, spec expects {}x{}",
                    img.rows(),
                    img.cols(),
                    spec.rows,
                    spec.cols
                )));
            }
            analyze(&img, spec.levels, spec.filter)?.into_flat()
        }
    };
    if norm(&x) == 0.0 {
        return Err(Error::Degenerate("test signal is identically zero".into()));
    }
    Ok(x)
}

fn measurement_count(rate: f64, m: usize) -> usize {
    (rate * m as f64).round().max(1.0) as usize
}

fn run_algorithm(
    algorithm: Algorithm,
    spec: &ExperimentSpec,
    x: &[f64],
    a: &faer::Mat<f64>,
    t: &[u8],
    sigma_n: f64,
) -> Result<(Vec<f64>, usize)> {
    match algorithm {
        Algorithm::DgvcMdl | Algorithm::VbAblation => {
            let mut cfg = spec.recovery_config()?;
            cfg.sigma_n = sigma_n;
            if algorithm == Algorithm::VbAblation {
                cfg = cfg.ablation();
            }
            let r = recover(t, a, &cfg)?;
            Ok((r.x_hat, r.iterations))
        }
        Algorithm::Biht => {
            let k = energy_support_size(x, 0.95).max(1);
            let cfg = BihtConfig { sparsity_k: k, step: spec.biht_step, max_iter: spec.biht_max_iter, step_halving: false };
            let out = biht_recover(t, a, &cfg)?;
            Ok((out.x_hat, out.iterations))
        }
    }
}

fn run_cell_group(spec: &ExperimentSpec, rate: f64, trial: usize) -> Vec<ResultRow> {
    let failed = |algorithm: Algorithm, wall_ms: f64| ResultRow {
        rate,
        trial,
        algorithm,
        snr_db: f64::NAN,
        sign_consistency: f64::NAN,
        iterations: 0,
        status: Status::Failed,
        wall_ms,
    };
    let prepared = (|| -> Result<_> {
        let x = trial_signal(spec, trial)?;
        let seed = cell_seed(spec.seed, rate, trial);
        let n = measurement_count(rate, x.len());
        let a = generate_matrix(n, x.len(), seed);
        let sigma_n = match spec.noise {
            NoiseLevel::Absolute(s) => s,
            NoiseLevel::RelativeRms(c) => c * norm(&matvec(&a, &x)) / (n as f64).sqrt(),
        };
        let t = measure(&a, &x, sigma_n, seed)?;
        Ok((x, a, t, sigma_n))
    })();
    let (x, a, t, sigma_n) = match prepared {
        Ok(p) => p,
        Err(e) => {
            log::error!("rate {rate} trial {trial}: setup failed: {e}");
            return spec.algorithms.iter().map(|&alg| failed(alg, 0.0)).collect();
        }
    };
    spec.algorithms
        .iter()
        .map(|&algorithm| {
            let start = Instant::now();
            let outcome = run_algorithm(algorithm, spec, &x, &a, &t, sigma_n).and_then(|(x_hat, iterations)| {
                Ok((reconstruction_snr(&x, &x_hat)?, sign_consistency(&a, &x_hat, &t)?, iterations))
            });
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok((snr_db, consistency, iterations)) => {
                    log::info!("rate {rate} trial {trial} {algorithm}: {snr_db:.2} dB in {iterations} iterations");
                    ResultRow {
                        rate,
                        trial,
                        algorithm,
                        snr_db,
                        sign_consistency: consistency,
                        iterations,
                        status: Status::Ok,
                        wall_ms,
                    }
                }
                Err(e) => {
                    log::error!("rate {rate} trial {trial} {algorithm}: {e}");
                    failed(algorithm, wall_ms)
                }
            }
        })
        .collect()
}

/// Sorts rows by rate, algorithm name and trial.
pub fn sort_canonical(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.rate
            .total_cmp(&b.rate)
            .then_with(|| a.algorithm.as_str().cmp(b.algorithm.as_str()))
            .then(a.trial.cmp(&b.trial))
    });
}

/// Runs every `(rate, trial, algorithm)` cell. Cells that fail are
/// recorded with status `failed`; the sweep itself only fails on an
/// invalid spec or an unreadable image.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if let ImageSource::Pgm(_) = spec.image {
        trial_signal(spec, 0)?;
    }
    let groups: Vec<(f64, usize)> =
        spec.rates.iter().flat_map(|&rate| (0..spec.trials).map(move |trial| (rate, trial))).collect();
    let work = || -> Vec<ResultRow> {
        groups.par_iter().flat_map_iter(|&(rate, trial)| run_cell_group(spec, rate, trial)).collect()
    };
    let mut rows = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {w} workers: {e}")))?
            .install(work),
        None => work(),
    };
    sort_canonical(&mut rows);
    Ok(rows)
}

pub const RESULTS_HEADER: &str = "rate,trial,algorithm,snr_db,sign_consistency,iterations,status,wall_ms";

/// Writes the results table as CSV.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: &mut W) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{},{},{:.1}",
            r.rate,
            r.trial,
            r.algorithm,
            r.snr_db,
            r.sign_consistency,
            r.iterations,
            r.status.as_str(),
            r.wall_ms
        )?;
    }
    Ok(())
}

/// Parses a results CSV written by [`write_results_csv`].
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::Parse { line: 1, message: format!("expected header '{RESULTS_HEADER}'") }),
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(Error::Parse { line, message: format!("expected 8 fields, got {}", f.len()) });
        }
        let status = match f[6] {
            "ok" => Status::Ok,
            "failed" => Status::Failed,
            other => return Err(Error::Parse { line, message: format!("bad status '{other}'") }),
        };
        rows.push(ResultRow {
            rate: parse_value(f[0], line)?,
            trial: parse_value(f[1], line)?,
            algorithm: f[2].parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
            snr_db: parse_value(f[3], line)?,
            sign_consistency: parse_value(f[4], line)?,
            iterations: parse_value(f[5], line)?,
            status,
            wall_ms: parse_value(f[7], line)?,
        });
    }
    Ok(rows)
}

/// Quantile of sorted data at plotting position `(n + 1) p`, linearly
/// interpolated and clamped to the sample range (Hyndman-Fan type 6).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = ((n + 1) as f64 * p).clamp(1.0, n as f64) - 1.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-(rate, algorithm) statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub rate: f64,
    pub algorithm: Algorithm,
    pub median_snr_db: f64,
    pub q1_snr_db: f64,
    pub q3_snr_db: f64,
    pub median_sign_consistency: f64,
    pub successes: usize,
    pub failures: usize,
}

impl SummaryRow {
    pub fn iqr(&self) -> f64 {
        self.q3_snr_db - self.q1_snr_db
    }
}

/// Medians and interquartile ranges of successful cells.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no results to summarize".into()));
    }
    let mut sorted = rows.to_vec();
    sort_canonical(&mut sorted);
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let key = (sorted[start].rate, sorted[start].algorithm);
        let end = start + sorted[start..].iter().take_while(|r| (r.rate, r.algorithm) == key).count();
        let cell = &sorted[start..end];
        let ok: Vec<&ResultRow> = cell.iter().filter(|r| r.status == Status::Ok).collect();
        let mut snr: Vec<f64> = ok.iter().map(|r| r.snr_db).collect();
        snr.sort_by(f64::total_cmp);
        let mut sc: Vec<f64> = ok.iter().map(|r| r.sign_consistency).collect();
        sc.sort_by(f64::total_cmp);
        out.push(SummaryRow {
            rate: key.0,
            algorithm: key.1,
            median_snr_db: quantile_sorted(&snr, 0.5),
            q1_snr_db: quantile_sorted(&snr, 0.25),
            q3_snr_db: quantile_sorted(&snr, 0.75),
            median_sign_consistency: quantile_sorted(&sc, 0.5),
            successes: ok.len(),
            failures: cell.len() - ok.len(),
        });
        start = end;
    }
    Ok(out)
}

pub const SUMMARY_HEADER: &str = "rate,algorithm,median_snr_db,q1_snr_db,q3_snr_db,iqr_snr_db,median_sign_consistency,successes,failures";

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: &mut W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.rate,
            r.algorithm,
            r.median_snr_db,
            r.q1_snr_db,
            r.q3_snr_db,
            r.iqr(),
            r.median_sign_consistency,
            r.successes,
            r.failures
        )?;
    }
    Ok(())
}

/// Plot data: one block per algorithm with `rate median_snr_db` lines,
/// blocks separated by two blank lines.
pub fn write_plot_data<W: Write>(rows: &[SummaryRow], out: &mut W) -> Result<()> {
    let mut algorithms: Vec<Algorithm> = rows.iter().map(|r| r.algorithm).collect();
    algorithms.sort_by_key(|a| a.as_str());
    algorithms.dedup();
    for (k, alg) in algorithms.iter().enumerate() {
        if k > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# {alg}")?;
        writeln!(out, "# rate median_snr_db")?;
        for r in rows.iter().filter(|r| r.algorithm == *alg) {
            writeln!(out, "{} {:.6}", r.rate, r.median_snr_db)?;
        }
    }
    Ok(())
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `results.csv`, `summary.csv` and `plot.dat` into `dir`.
pub fn write_outputs(rows: &[ResultRow], dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let files = OutputFiles { results: dir.join("results.csv"), summary: dir.join("summary.csv"), plot: dir.join("plot.dat") };
    let mut buf = Vec::new();
    write_results_csv(rows, &mut buf)?;
    std::fs::write(&files.results, buf)?;
    let summary = summarize(rows)?;
    let mut buf = Vec::new();
    write_summary_csv(&summary, &mut buf)?;
    std::fs::write(&files.summary, buf)?;
    let mut buf = Vec::new();
    write_plot_data(&summary, &mut buf)?;
    std::fs::write(&files.plot, buf)?;
    Ok(files)
}
