//! Separable 2-D orthonormal wavelet transform with periodic boundaries,
//! plus subband layout and intrascale neighborhood bookkeeping.
//!
//! Coefficients are stored in one flat vector. The order is the coarsest
//! `LL` band first, then for every scale from coarsest to finest the
//! `LH`, `HL`, `HH` bands, each row-major. Scale `1` is the finest scale;
//! scale `levels` is the coarsest and also carries `LL`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;

/// Orthonormal wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Filter {
    #[default]
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Daubechies4,
}

impl Filter {
    fn lowpass(self) -> Vec<f64> {
        match self {
            Filter::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            Filter::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let k = h.len();
        (0..k)
            .map(|j| if j % 2 == 0 { h[k - 1 - j] } else { -h[k - 1 - j] })
            .collect()
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Filter::Haar),
            "db4" | "daubechies4" | "db2" => Ok(Filter::Daubechies4),
            other => Err(Error::Parameter(format!("unknown wavelet filter '{other}'"))),
        }
    }
}

/// Subband orientation. `LH` is lowpass along rows and highpass along
/// columns; `HL` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    LL,
    LH,
    HL,
    HH,
}

impl Orientation {
    pub const DETAILS: [Orientation; 3] = [Orientation::LH, Orientation::HL, Orientation::HH];
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Orientation::LL => "LL",
            Orientation::LH => "LH",
            Orientation::HL => "HL",
            Orientation::HH => "HH",
        };
        f.write_str(s)
    }
}

/// Position and shape of one subband inside the flat coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subband {
    pub scale: usize,
    pub orientation: Orientation,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Subband {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index range of this subband.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Shape bookkeeping of a pyramid, independent of the coefficient values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidLayout {
    rows: usize,
    cols: usize,
    levels: usize,
    subbands: Vec<Subband>,
}

impl PyramidLayout {
    pub fn new(rows: usize, cols: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Range("at least one decomposition level is required".into()));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("image must be non-empty".into()));
        }
        let step = 1usize
            .checked_shl(levels as u32)
            .ok_or_else(|| Error::Range(format!("{levels} levels is too deep")))?;
        if step > rows || step > cols {
            return Err(Error::Range(format!(
                "{levels} levels is too deep for a {rows}x{cols} image"
            )));
        }
        if !rows.is_multiple_of(step) || !cols.is_multiple_of(step) {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} is not divisible by 2^{levels}"
            )));
        }

        let mut subbands = Vec::with_capacity(3 * levels + 1);
        let (mut r, mut c) = (rows >> levels, cols >> levels);
        let mut offset = 0;
        subbands.push(Subband { scale: levels, orientation: Orientation::LL, rows: r, cols: c, offset });
        offset += r * c;
        for scale in (1..=levels).rev() {
            for orientation in Orientation::DETAILS {
                subbands.push(Subband { scale, orientation, rows: r, cols: c, offset });
                offset += r * c;
            }
            r *= 2;
            c *= 2;
        }
        debug_assert_eq!(offset, rows * cols);
        Ok(Self { rows, cols, levels, subbands })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Total number of coefficients, `rows * cols`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All subbands in flatten order.
    pub fn subbands(&self) -> &[Subband] {
        &self.subbands
    }

    /// Detail subbands of one scale, in `LH`, `HL`, `HH` order.
    pub fn details(&self, scale: usize) -> impl Iterator<Item = &Subband> {
        self.subbands
            .iter()
            .filter(move |b| b.scale == scale && b.orientation != Orientation::LL)
    }

    pub fn subband(&self, scale: usize, orientation: Orientation) -> Result<&Subband> {
        self.subbands
            .iter()
            .find(|b| b.scale == scale && b.orientation == orientation)
            .ok_or_else(|| Error::Range(format!("no {orientation} subband at scale {scale}")))
    }

    /// Number of coefficients `M_s` in the detail subbands of `scale`.
    pub fn scale_len(&self, scale: usize) -> usize {
        self.details(scale).map(Subband::len).sum()
    }
}

/// Wavelet coefficients of an image together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    layout: PyramidLayout,
    coeffs: Vec<f64>,
}

impl WaveletPyramid {
    /// Wraps a flat coefficient vector (the signal `x`) with a layout.
    pub fn from_flat(layout: PyramidLayout, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != layout.len() {
            return Err(Error::Structure(format!(
                "expected {} coefficients, got {}",
                layout.len(),
                coeffs.len()
            )));
        }
        Ok(Self { layout, coeffs })
    }

    pub fn zeros(layout: PyramidLayout) -> Self {
        let coeffs = vec![0.0; layout.len()];
        Self { layout, coeffs }
    }

    pub fn layout(&self) -> &PyramidLayout {
        &self.layout
    }

    pub fn levels(&self) -> usize {
        self.layout.levels
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.layout.rows, self.layout.cols)
    }

    /// The flattened signal vector.
    pub fn as_flat(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coeffs
    }

    /// Row-major coefficients of one subband.
    pub fn subband(&self, scale: usize, orientation: Orientation) -> Result<&[f64]> {
        let band = self.layout.subband(scale, orientation)?;
        Ok(&self.coeffs[band.range()])
    }

    pub fn subband_mut(&mut self, scale: usize, orientation: Orientation) -> Result<&mut [f64]> {
        let band = *self.layout.subband(scale, orientation)?;
        Ok(&mut self.coeffs[band.range()])
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

fn analyze_1d(input: &[f64], lo: &[f64], hi: &[f64], out_lo: &mut [f64], out_hi: &mut [f64]) {
    let n = input.len();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for (j, (&h, &g)) in lo.iter().zip(hi).enumerate() {
            let x = input[(2 * k + j) % n];
            a += h * x;
            d += g * x;
        }
        out_lo[k] = a;
        out_hi[k] = d;
    }
}

fn synthesize_1d(approx: &[f64], detail: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for k in 0..n / 2 {
        for (j, (&h, &g)) in lo.iter().zip(hi).enumerate() {
            out[(2 * k + j) % n] += h * approx[k] + g * detail[k];
        }
    }
}

/// One analysis level applied in place to the top-left `r x c` block of a
/// row-major buffer with row stride `stride`.
fn analyze_level(buf: &mut [f64], stride: usize, r: usize, c: usize, lo: &[f64], hi: &[f64]) {
    let (hr, hc) = (r / 2, c / 2);
    let mut line = vec![0.0; r.max(c)];
    let mut a = vec![0.0; hr.max(hc)];
    let mut d = vec![0.0; hr.max(hc)];

    for i in 0..r {
        let row = &mut buf[i * stride..i * stride + c];
        line[..c].copy_from_slice(row);
        analyze_1d(&line[..c], lo, hi, &mut a[..hc], &mut d[..hc]);
        row[..hc].copy_from_slice(&a[..hc]);
        row[hc..].copy_from_slice(&d[..hc]);
    }
    for j in 0..c {
        for i in 0..r {
            line[i] = buf[i * stride + j];
        }
        analyze_1d(&line[..r], lo, hi, &mut a[..hr], &mut d[..hr]);
        for i in 0..hr {
            buf[i * stride + j] = a[i];
            buf[(i + hr) * stride + j] = d[i];
        }
    }
}

fn synthesize_level(buf: &mut [f64], stride: usize, r: usize, c: usize, lo: &[f64], hi: &[f64]) {
    let (hr, hc) = (r / 2, c / 2);
    let mut line = vec![0.0; r.max(c)];
    let mut a = vec![0.0; hr.max(hc)];
    let mut d = vec![0.0; hr.max(hc)];

    for j in 0..c {
        for i in 0..hr {
            a[i] = buf[i * stride + j];
            d[i] = buf[(i + hr) * stride + j];
        }
        synthesize_1d(&a[..hr], &d[..hr], lo, hi, &mut line[..r]);
        for i in 0..r {
            buf[i * stride + j] = line[i];
        }
    }
    for i in 0..r {
        let row = &mut buf[i * stride..i * stride + c];
        a[..hc].copy_from_slice(&row[..hc]);
        d[..hc].copy_from_slice(&row[hc..]);
        synthesize_1d(&a[..hc], &d[..hc], lo, hi, &mut line[..c]);
        row.copy_from_slice(&line[..c]);
    }
}

/// Position of subband element `(i, j)` in the Mallat-ordered image buffer.
fn mallat_origin(band: &Subband) -> (usize, usize) {
    let (r, c) = (band.rows, band.cols);
    match band.orientation {
        Orientation::LL => (0, 0),
        Orientation::LH => (r, 0),
        Orientation::HL => (0, c),
        Orientation::HH => (r, c),
    }
}

/// Multi-level separable analysis.
pub fn analyze(image: &Image, levels: usize, filter: Filter) -> Result<WaveletPyramid> {
    let layout = PyramidLayout::new(image.rows(), image.cols(), levels)?;
    let (lo, hi) = (filter.lowpass(), filter.highpass());
    let stride = image.cols();
    let mut buf = image.as_slice().to_vec();
    let (mut r, mut c) = (image.rows(), image.cols());
    for _ in 0..levels {
        analyze_level(&mut buf, stride, r, c, &lo, &hi);
        r /= 2;
        c /= 2;
    }

    let mut coeffs = vec![0.0; layout.len()];
    for band in layout.subbands() {
        let (oi, oj) = mallat_origin(band);
        for i in 0..band.rows {
            let src = (oi + i) * stride + oj;
            let dst = band.offset + i * band.cols;
            coeffs[dst..dst + band.cols].copy_from_slice(&buf[src..src + band.cols]);
        }
    }
    Ok(WaveletPyramid { layout, coeffs })
}

/// Inverse of [`analyze`].
pub fn synthesize(pyramid: &WaveletPyramid, filter: Filter) -> Result<Image> {
    let layout = &pyramid.layout;
    let check = PyramidLayout::new(layout.rows, layout.cols, layout.levels)?;
    if &check != layout || pyramid.coeffs.len() != layout.len() {
        return Err(Error::Structure("inconsistent subband dimensions".into()));
    }
    let (lo, hi) = (filter.lowpass(), filter.highpass());
    let stride = layout.cols;
    let mut buf = vec![0.0; layout.len()];
    for band in layout.subbands() {
        let (oi, oj) = mallat_origin(band);
        for i in 0..band.rows {
            let dst = (oi + i) * stride + oj;
            let src = band.offset + i * band.cols;
            buf[dst..dst + band.cols].copy_from_slice(&pyramid.coeffs[src..src + band.cols]);
        }
    }
    for level in (0..layout.levels).rev() {
        let (r, c) = (layout.rows >> level, layout.cols >> level);
        synthesize_level(&mut buf, stride, r, c, &lo, &hi);
    }
    Image::from_vec(layout.rows, layout.cols, buf)
}

/// Walking direction of a neighborhood window inside a subband.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Row,
    Column,
    /// `(i, j) -> (i + 1, j + 1)`.
    Diagonal,
    /// `(i, j) -> (i + 1, j - 1)`.
    AntiDiagonal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Row => "row",
            Direction::Column => "column",
            Direction::Diagonal => "diagonal",
            Direction::AntiDiagonal => "antidiagonal",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Direction::Row),
            "column" | "col" => Ok(Direction::Column),
            "diagonal" | "diag" => Ok(Direction::Diagonal),
            "antidiagonal" | "anti-diagonal" => Ok(Direction::AntiDiagonal),
            other => Err(Error::Parameter(format!("unknown direction '{other}'"))),
        }
    }
}

/// Sliding windows of `size` coefficients along one direction of a
/// subband. Indices are row-major positions inside the subband.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSet {
    pub direction: Direction,
    pub size: usize,
    pub windows: Vec<Vec<usize>>,
}

impl NeighborhoodSet {
    /// Number of windows covering each subband position.
    pub fn coverage(&self, subband_len: usize) -> Vec<usize> {
        let mut cov = vec![0; subband_len];
        for w in &self.windows {
            for &i in w {
                cov[i] += 1;
            }
        }
        cov
    }
}

/// Stride-1 windows of length `size` along `direction` in a `rows x cols` grid.
pub fn grid_neighborhoods(rows: usize, cols: usize, direction: Direction, size: usize) -> Result<NeighborhoodSet> {
    if size < 2 {
        return Err(Error::Range(format!("neighborhood size must be >= 2, got {size}")));
    }
    let (di, dj): (usize, isize) = match direction {
        Direction::Row => (0, 1),
        Direction::Column => (1, 0),
        Direction::Diagonal => (1, 1),
        Direction::AntiDiagonal => (1, -1),
    };
    let need_rows = if di == 0 { 1 } else { size };
    let need_cols = if dj == 0 { 1 } else { size };
    if rows < need_rows || cols < need_cols {
        return Err(Error::Range(format!(
            "window of {size} along {direction} does not fit a {rows}x{cols} subband"
        )));
    }

    let mut windows = Vec::new();
    for i in 0..=rows - need_rows {
        for j0 in 0..=cols - need_cols {
            let j = if dj < 0 { j0 + size - 1 } else { j0 };
            let w = (0..size)
                .map(|k| {
                    let jj = (j as isize + dj * k as isize) as usize;
                    (i + di * k) * cols + jj
                })
                .collect();
            windows.push(w);
        }
    }
    Ok(NeighborhoodSet { direction, size, windows })
}

/// Neighborhood windows of one subband of `pyramid`.
pub fn extract_neighborhoods(
    pyramid: &WaveletPyramid,
    scale: usize,
    orientation: Orientation,
    direction: Direction,
    size: usize,
) -> Result<NeighborhoodSet> {
    let band = pyramid.layout().subband(scale, orientation)?;
    grid_neighborhoods(band.rows, band.cols, direction, size)
}
