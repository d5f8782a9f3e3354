//! Sparse datasets, LIBSVM ingestion and seeded synthetic problems.
//!
//! A LIBSVM line looks like
//!
//! ```text
//! +1 1:0.5 3:2.0 # optional comment
//! ```
//!
//! Feature indices are 1-based on disk and 0-based in memory.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

/// Sparse row with strictly increasing indices and finite, nonzero values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a sparse vector, dropping explicit zeros.
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (idx, val) in entries {
            if !val.is_finite() {
                return Err(argument(format!("non-finite value at index {idx}")));
            }
            if let Some(&last) = indices.last() {
                if idx <= last {
                    return Err(argument(format!(
                        "indices must be strictly increasing ({idx} after {last})"
                    )));
                }
            }
            if val != 0.0 {
                indices.push(idx);
                values.push(val);
            }
        }
        Ok(Self { indices, values })
    }

    /// Builds a sparse vector from a dense slice.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Largest index plus one, or zero for an empty row.
    pub fn extent(&self) -> usize {
        self.indices.last().map_or(0, |i| i + 1)
    }

    /// Inner product with a dense vector without bounds checking beyond debug builds.
    #[inline]
    pub(crate) fn dot_unchecked(&self, w: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * w[i]).sum()
    }

    /// `y += a * self`
    #[inline]
    pub(crate) fn axpy_into(&self, a: f64, y: &mut [f64]) {
        for (i, v) in self.iter() {
            y[i] += a * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy_into(1.0, &mut out);
        out
    }

    fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

/// Inner product `xᵀw`.
pub fn dot(x: &SparseVector, w: &[f64]) -> Result<f64> {
    if x.extent() > w.len() {
        return Err(Error::Dimension(format!(
            "sparse index {} out of range for dense length {}",
            x.extent() - 1,
            w.len()
        )));
    }
    Ok(x.dot_unchecked(w))
}

/// Immutable collection of labelled sparse samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<SparseVector>,
    labels: Vec<f64>,
    dim: usize,
    sq_norms: Vec<f64>,
}

impl Dataset {
    /// `dim` defaults to the largest extent over all samples.
    pub fn new(samples: Vec<SparseVector>, labels: Vec<f64>, dim: Option<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().position(|y| !y.is_finite()) {
            return Err(argument(format!("label {bad} is not finite")));
        }
        let extent = samples.iter().map(SparseVector::extent).max().unwrap_or(0);
        let dim = match dim {
            Some(d) if d < extent => {
                return Err(Error::Dimension(format!(
                    "dim {d} smaller than largest feature index {}",
                    extent - 1
                )))
            }
            Some(d) => d,
            None => extent,
        };
        let sq_norms = samples.iter().map(SparseVector::norm_sq).collect();
        Ok(Self {
            samples,
            labels,
            dim,
            sq_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &SparseVector {
        &self.samples[i]
    }

    pub fn samples(&self) -> &[SparseVector] {
        &self.samples
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Cached `‖x_i‖²`.
    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&y| y == 1.0 || y == -1.0)
    }

    /// Rescales every nonempty sample to unit Euclidean norm.
    pub fn normalize_rows(&mut self) {
        for (x, sq) in self.samples.iter_mut().zip(self.sq_norms.iter_mut()) {
            if *sq > 0.0 {
                x.scale(1.0 / sq.sqrt());
                *sq = x.norm_sq();
            }
        }
    }

    /// Copy with labels replaced.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::new(self.samples.clone(), labels, Some(self.dim))
    }

    /// Dense row-major copy of the feature matrix.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|x| x.to_dense(self.dim)).collect()
    }
}

/// Parses LIBSVM text. Blank lines and `#` comments are ignored.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line, message };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(perr(format!("non-finite label {label_tok:?}")));
        }
        let mut entries = Vec::new();
        let mut last: Option<usize> = None;
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| perr(format!("bad feature index {idx_s:?}")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            if last.is_some_and(|l| idx <= l) {
                return Err(perr(format!("non-increasing feature index {idx}")));
            }
            last = Some(idx);
            let val: f64 = val_s
                .parse()
                .map_err(|_| perr(format!("bad feature value {val_s:?}")))?;
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value {val_s:?}")));
            }
            entries.push((idx - 1, val));
        }
        samples.push(SparseVector::new(entries).map_err(|e| perr(e.to_string()))?);
        labels.push(label);
    }
    Dataset::new(samples, labels, None)
}

/// Serializes to LIBSVM text; values use shortest round-trip formatting.
pub fn to_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for (x, y) in data.samples.iter().zip(&data.labels) {
        write!(out, "{y}").unwrap();
        for (i, v) in x.iter() {
            write!(out, " {}:{v}", i + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads a LIBSVM file, transparently decompressing gzip input.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path.as_ref())?;
    let text = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut s = String::new();
        GzDecoder::new(bytes.as_slice()).read_to_string(&mut s)?;
        s
    } else {
        String::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 0,
            message: format!("not UTF-8: {e}"),
        })?
    };
    parse_libsvm(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// Linearly separable ±1 labels for classification losses.
    Separable,
    /// Over-determined noisy least squares (`n > d`).
    Underparam,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Self::Separable),
            "underparam" => Ok(Self::Underparam),
            other => Err(argument(format!("unknown synthetic mode {other:?}"))),
        }
    }
}

pub const SEPARABLE_MARGIN: f64 = 0.1;
const MARGIN_ATTEMPTS: usize = 100;

/// Seeded synthetic dataset. Features are Gaussian with variance `1/d` per
/// coordinate so that `‖x_i‖ ≈ 1`.
///
/// * `Separable`: labels are `sign(xᵀw_true)` with `|xᵀw_true| ≥ 0.1`, where
///   `w_true` has unit norm. A positive `noise` flips each label with that
///   probability (and breaks separability).
/// * `Underparam`: `y_i = xᵀw_true + noise·ξ_i`. The planted vector is returned
///   only when `noise == 0`, in which case it is the exact least-squares minimizer.
///
/// The generator is ChaCha8 seeded from `seed` alone.
pub fn synth_dataset(
    seed: u64,
    n: usize,
    d: usize,
    mode: SynthMode,
    noise: f64,
) -> Result<(Dataset, Option<Vec<f64>>)> {
    if n == 0 || d == 0 {
        return Err(argument("synthetic data needs n >= 1 and d >= 1"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(argument("noise must be finite and nonnegative"));
    }
    if mode == SynthMode::Underparam && n <= d {
        return Err(argument(format!(
            "underparam mode needs n > d (n={n}, d={d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let gaussian = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> {
        (0..d)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut w_true = gaussian(&mut rng, 1.0);
    let wn = crate::linalg::norm(&w_true);
    w_true.iter_mut().for_each(|v| *v /= wn);

    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match mode {
        SynthMode::Separable => {
            if noise > 1.0 {
                return Err(argument("label-flip probability must be at most 1"));
            }
            for _ in 0..n {
                let mut x = gaussian(&mut rng, scale);
                let mut t = crate::linalg::dot(&x, &w_true);
                let mut attempts = 1;
                while t.abs() < SEPARABLE_MARGIN && attempts < MARGIN_ATTEMPTS {
                    x = gaussian(&mut rng, scale);
                    t = crate::linalg::dot(&x, &w_true);
                    attempts += 1;
                }
                if t.abs() < SEPARABLE_MARGIN {
                    // high dimension: push the sample out along w_true
                    let target = if t < 0.0 {
                        -SEPARABLE_MARGIN
                    } else {
                        SEPARABLE_MARGIN
                    };
                    crate::linalg::axpy(target - t, &w_true, &mut x);
                    t = crate::linalg::dot(&x, &w_true);
                }
                let mut y = if t >= 0.0 { 1.0 } else { -1.0 };
                if noise > 0.0 && rng.random::<f64>() < noise {
                    y = -y;
                }
                samples.push(SparseVector::from_dense(&x));
                labels.push(y);
            }
            Ok((Dataset::new(samples, labels, Some(d))?, None))
        }
        SynthMode::Underparam => {
            for _ in 0..n {
                let x = gaussian(&mut rng, scale);
                let xi: f64 = rng.sample(StandardNormal);
                labels.push(crate::linalg::dot(&x, &w_true) + noise * xi);
                samples.push(SparseVector::from_dense(&x));
            }
            let planted = (noise == 0.0).then_some(w_true);
            Ok((Dataset::new(samples, labels, Some(d))?, planted))
        }
    }
}
