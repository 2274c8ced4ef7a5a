//! Grayscale images and binary PGM (P5) input/output.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grid of real pixel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reads a binary 8-bit PGM and rescales samples to `[0, 1]`.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::decode_pgm(BufReader::new(file))
    }

    pub fn decode_pgm<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut header = Vec::new();
        // magic, width, height, maxval
        while header.len() < 4 {
            let token = next_token(&mut reader)?;
            header.push(token);
        }
        if header[0] != "P5" {
            return Err(Error::Parse { line: 1, message: format!("expected P5 magic, found '{}'", header[0]) });
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line: 1, message: format!("bad {what} '{s}'") })
        };
        let cols = parse(&header[1], "width")?;
        let rows = parse(&header[2], "height")?;
        let maxval = parse(&header[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Parse { line: 1, message: format!("only 8-bit PGM is supported (maxval {maxval})") });
        }
        let mut raw = vec![0u8; rows * cols];
        reader.read_exact(&mut raw)?;
        let scale = maxval as f64;
        let data = raw.iter().map(|&b| b as f64 / scale).collect();
        Self::from_vec(rows, cols, data)
    }

    /// Writes a binary 8-bit PGM, mapping `[min, max]` of the image to `[0, 255]`.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.encode_pgm(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn encode_pgm<W: Write>(&self, out: &mut W) -> Result<()> {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        write!(out, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }
}

fn next_token<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            return Err(Error::Parse { line: 1, message: "truncated PGM header".into() });
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut skip = Vec::new();
            reader.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c as char);
    }
}
