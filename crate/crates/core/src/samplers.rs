//! Isotropic samplers for the body catalog, gaussian noise, and the
//! convolved-rescaled vector `Z = (X + Y)/√(1 + v)`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann;
use crate::model::{BodyKind, BodySpec, ConvolutionSchedule, GaussianSpec, SubspaceBasis, Validate};
use crate::rng::{chunk_count, chunk_rng, chunk_span, derive_seed, Purpose, CHUNK_SIZE};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Where a batch came from, recorded in sidecars and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SampleSource {
    Body { body: BodySpec },
    Gaussian { gaussian: GaussianSpec<f64> },
    Convolved {
        base: Box<SampleSource>,
        noise_variance: f64,
        rescaled: bool,
        noise_seed: u64,
    },
    Whitened { base: Box<SampleSource> },
    Projected { base: Box<SampleSource>, ambient_dim: usize },
    External,
}

/// `count` vectors in `R^dimension`, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub dimension: usize,
    pub count: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub source: SampleSource,
}

impl SampleBatch {
    pub fn from_rows(rows: &[Vec<f64>], seed: u64, source: SampleSource) -> Result<Self> {
        let dimension = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dimension) {
            return Err(Error::Dimension("rows have inconsistent dimension".into()));
        }
        Self {
            dimension,
            count: rows.len(),
            data: rows.concat(),
            seed,
            source,
        }
        .validate()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dimension.max(1))
    }

    pub fn norms(&self) -> Vec<f64> {
        self.rows().map(norm).collect()
    }

    /// Mean vector and covariance (normalized by `count`).
    pub fn moments(&self) -> Moments {
        let mut m = Moments::new(self.dimension);
        for chunk in self.data.chunks(CHUNK_SIZE * self.dimension.max(1)) {
            m.merge(&Moments::of_rows(self.dimension, chunk));
        }
        m
    }
}

impl Validate for SampleBatch {
    fn check(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Dimension("sample dimension must be >= 1".into()));
        }
        if self.data.len() != self.count * self.dimension {
            return Err(Error::invalid(format!(
                "batch stores {} values, expected count*dimension = {}",
                self.data.len(),
                self.count * self.dimension
            )));
        }
        Ok(())
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Running first and second moments; merged in a fixed order for determinism.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub dimension: usize,
    pub count: usize,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            count: 0,
            sum: vec![0.0; dimension],
            cross: vec![0.0; dimension * dimension],
        }
    }

    pub fn of_rows(dimension: usize, data: &[f64]) -> Self {
        let mut m = Self::new(dimension);
        for row in data.chunks_exact(dimension) {
            m.count += 1;
            for i in 0..dimension {
                m.sum[i] += row[i];
                let base = i * dimension;
                for j in i..dimension {
                    m.cross[base + j] += row[i] * row[j];
                }
            }
        }
        m
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.cross.iter_mut().zip(&other.cross).for_each(|(a, b)| *a += b);
    }

    pub fn mean(&self) -> Vec<f64> {
        let c = self.count as f64;
        self.sum.iter().map(|s| s / c).collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dimension;
        let c = self.count as f64;
        let mean = self.mean();
        DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.cross[a * d + b] / c - mean[i] * mean[j]
        })
    }

    /// `(max |mean_i|, max |Cov_ij - δ_ij|)`.
    pub fn isotropy_deviation(&self) -> (f64, f64) {
        let mean_dev = self.mean().iter().fold(0.0f64, |a, m| a.max(m.abs()));
        let cov = self.covariance();
        let mut cov_dev = 0.0f64;
        for i in 0..self.dimension {
            for j in 0..self.dimension {
                let target = if i == j { 1.0 } else { 0.0 };
                cov_dev = cov_dev.max((cov[(i, j)] - target).abs());
            }
        }
        (mean_dev, cov_dev)
    }
}

fn fill_body_row<R: Rng>(kind: BodyKind, rng: &mut R, out: &mut [f64]) {
    let n = out.len();
    match kind {
        BodyKind::Cube => {
            for v in out.iter_mut() {
                *v = SQRT_3 * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        BodyKind::Ball => loop {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let len = norm(out);
            if len == 0.0 {
                continue;
            }
            let u = 1.0 - rng.random::<f64>();
            let radius = ((n + 2) as f64).sqrt() * u.powf(1.0 / n as f64);
            let scale = radius / len;
            out.iter_mut().for_each(|v| *v *= scale);
            break;
        },
        BodyKind::Simplex => {
            // Uniform point of {x >= 0, Σx <= 1} from n + 1 exponential spacings,
            // then the exact whitening map of that simplex.
            let mut total: f64 = rng.sample(Exp1);
            for v in out.iter_mut() {
                *v = rng.sample(Exp1);
                total += *v;
            }
            let nf = n as f64;
            let center = 1.0 / (nf + 1.0);
            let mut shift = 0.0;
            for v in out.iter_mut() {
                *v = *v / total - center;
                shift += *v;
            }
            let mean = shift / nf;
            let a = ((nf + 1.0) * (nf + 2.0)).sqrt();
            let b = (nf + 1.0) * (nf + 2.0).sqrt();
            for v in out.iter_mut() {
                *v = a * (*v - mean) + b * mean;
            }
        }
        BodyKind::ProductLaplace => {
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            for v in out.iter_mut() {
                let e: f64 = rng.sample(Exp1);
                *v = if rng.random::<bool>() { e * scale } else { -e * scale };
            }
        }
        BodyKind::StandardGaussian => {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
    }
}

fn body_chunk(spec: &BodySpec, seed: u64, count: usize, chunk: usize) -> Vec<f64> {
    let (_, rows) = chunk_span(count, chunk);
    let mut rng = chunk_rng(derive_seed(seed, Purpose::Body, 0), chunk);
    let mut buf = vec![0.0; rows * spec.dimension];
    for row in buf.chunks_exact_mut(spec.dimension) {
        fill_body_row(spec.kind, &mut rng, row);
    }
    buf
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    Ok(())
}

/// I.i.d. samples from the isotropic version of `spec`.
pub fn sample_body(spec: &BodySpec, count: usize, seed: u64) -> Result<SampleBatch> {
    Pipeline::new(*spec, count, seed).collect()
}

/// I.i.d. samples from `γ_n[v]`.
pub fn sample_gaussian(spec: &GaussianSpec<f64>, count: usize, seed: u64) -> Result<SampleBatch> {
    spec.check()?;
    check_count(count)?;
    let n = spec.dimension;
    let sd = spec.variance.sqrt();
    let stream = derive_seed(seed, Purpose::Gaussian, 0);
    let chunks: Vec<Vec<f64>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let (_, rows) = chunk_span(count, c);
            let mut rng = chunk_rng(stream, c);
            (0..rows * n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    Ok(SampleBatch {
        dimension: n,
        count,
        data: chunks.concat(),
        seed,
        source: SampleSource::Gaussian { gaussian: *spec },
    })
}

/// Adds fresh `γ_n[v]` noise to every row, optionally dividing by `√(1 + v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStep {
    pub variance: f64,
    pub rescale: bool,
    pub seed: u64,
}

impl NoiseStep {
    pub fn from_schedule(schedule: &ConvolutionSchedule<f64>, rescale: bool, seed: u64) -> Self {
        Self {
            variance: schedule.noise_variance,
            rescale,
            seed,
        }
    }

    fn apply(&self, data: &mut [f64], chunk: usize) {
        if self.variance == 0.0 {
            return;
        }
        let sd = self.variance.sqrt();
        let scale = if self.rescale { (1.0 + self.variance).sqrt().recip() } else { 1.0 };
        let mut rng = chunk_rng(derive_seed(self.seed, Purpose::Noise, 0), chunk);
        for v in data.iter_mut() {
            let y: f64 = rng.sample(StandardNormal);
            *v = (*v + sd * y) * scale;
        }
    }
}

/// `Z_i = (x_i + y_i)/√(1 + v)` with `v` the schedule's noise variance.
pub fn convolve_and_rescale(x: &SampleBatch, schedule: &ConvolutionSchedule<f64>, seed: u64) -> Result<SampleBatch> {
    schedule.check()?;
    convolve_with_variance(x, schedule.noise_variance, true, seed)
}

/// Adds `γ_n[variance]` noise; `variance == 0` is the identity.
pub fn convolve_with_variance(x: &SampleBatch, variance: f64, rescale: bool, seed: u64) -> Result<SampleBatch> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be >= 0, got {variance}")));
    }
    let step = NoiseStep { variance, rescale, seed };
    let n = x.dimension;
    let mut data = x.data.clone();
    data.par_chunks_mut(CHUNK_SIZE * n)
        .enumerate()
        .for_each(|(c, chunk)| step.apply(chunk, c));
    Ok(SampleBatch {
        dimension: n,
        count: x.count,
        data,
        seed: x.seed,
        source: SampleSource::Convolved {
            base: Box::new(x.source.clone()),
            noise_variance: variance,
            rescaled: rescale,
            noise_seed: seed,
        },
    })
}

/// Affine map to zero empirical mean and identity empirical covariance,
/// using the Cholesky factor of the covariance.
pub fn whiten(batch: &SampleBatch) -> Result<SampleBatch> {
    let n = batch.dimension;
    if batch.count < n + 1 {
        return Err(Error::SingularCovariance(format!(
            "{} samples cannot span dimension {}",
            batch.count, n
        )));
    }
    let moments = batch.moments();
    let mean = DVector::from_vec(moments.mean());
    let cov = moments.covariance();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularCovariance("Cholesky factorization failed".into()))?;
    let l = chol.l();
    let diag_min = l.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let diag_max = l.diagonal().iter().fold(0.0f64, |a, b| a.max(*b));
    if !(diag_min > 1e-12 * diag_max) {
        return Err(Error::SingularCovariance(format!("condition too large (min pivot {diag_min:e})")));
    }
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::SingularCovariance("triangular inverse failed".into()))?;
    let mut data = vec![0.0; batch.data.len()];
    data.par_chunks_mut(n)
        .zip(batch.data.par_chunks(n))
        .for_each(|(out, row)| {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l_inv[(i, j)] * (row[j] - mean[j]);
                }
                out[i] = acc;
            }
        });
    Ok(SampleBatch {
        dimension: n,
        count: batch.count,
        data,
        seed: batch.seed,
        source: SampleSource::Whitened {
            base: Box::new(batch.source.clone()),
        },
    })
}

/// Streaming sampler: body draw, optional noise, optional projection.
///
/// Chunks are produced independently, so arbitrarily large batches can be
/// reduced without materializing them; [`Pipeline::collect`] is
/// bit-identical to `project(convolve(sample_body(..)))`.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    pub body: BodySpec,
    pub count: usize,
    pub seed: u64,
    pub noise: Option<NoiseStep>,
    pub basis: Option<&'a SubspaceBasis>,
}

impl<'a> Pipeline<'a> {
    pub fn new(body: BodySpec, count: usize, seed: u64) -> Self {
        Self {
            body,
            count,
            seed,
            noise: None,
            basis: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseStep) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_basis(mut self, basis: &'a SubspaceBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn output_dim(&self) -> usize {
        self.basis.map_or(self.body.dimension, |b| b.subspace_dim)
    }

    fn validate(&self) -> Result<()> {
        self.body.check()?;
        check_count(self.count)?;
        if let Some(b) = self.basis {
            if b.ambient_dim != self.body.dimension {
                return Err(Error::Dimension(format!(
                    "basis ambient dimension {} != body dimension {}",
                    b.ambient_dim, self.body.dimension
                )));
            }
        }
        Ok(())
    }

    fn chunk(&self, c: usize) -> Vec<f64> {
        let mut data = body_chunk(&self.body, self.seed, self.count, c);
        if let Some(noise) = &self.noise {
            noise.apply(&mut data, c);
        }
        match self.basis {
            Some(basis) => grassmann::project_rows(basis, &data),
            None => data,
        }
    }

    /// Applies `f(chunk_index, rows)` to every chunk, returning results in chunk order.
    pub fn map_chunks<R, F>(&self, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(usize, &[f64]) -> R + Sync,
    {
        self.validate()?;
        Ok((0..chunk_count(self.count))
            .into_par_iter()
            .map(|c| f(c, &self.chunk(c)))
            .collect())
    }

    pub fn moments(&self) -> Result<Moments> {
        let d = self.output_dim();
        let parts = self.map_chunks(|_, rows| Moments::of_rows(d, rows))?;
        let mut total = Moments::new(d);
        parts.iter().for_each(|p| total.merge(p));
        Ok(total)
    }

    pub fn norms(&self) -> Result<Vec<f64>> {
        let d = self.output_dim();
        Ok(self
            .map_chunks(|_, rows| rows.chunks_exact(d).map(norm).collect::<Vec<_>>())?
            .concat())
    }

    pub fn source(&self) -> SampleSource {
        let mut source = SampleSource::Body { body: self.body };
        if let Some(noise) = &self.noise {
            source = SampleSource::Convolved {
                base: Box::new(source),
                noise_variance: noise.variance,
                rescaled: noise.rescale,
                noise_seed: noise.seed,
            };
        }
        if self.basis.is_some() {
            source = SampleSource::Projected {
                base: Box::new(source),
                ambient_dim: self.body.dimension,
            };
        }
        source
    }

    pub fn collect(&self) -> Result<SampleBatch> {
        let data = self.map_chunks(|_, rows| rows.to_vec())?.concat();
        Ok(SampleBatch {
            dimension: self.output_dim(),
            count: self.count,
            data,
            seed: self.seed,
            source: self.source(),
        })
    }
}

/// Sidecar metadata written next to a binary batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSidecar {
    pub schema_version: u32,
    pub dimension: usize,
    pub count: usize,
    pub seed: u64,
    pub source: SampleSource,
    pub layout: String,
    /// Resolved experiment configuration, when written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub const BIN_LAYOUT: &str = "column_major_f64_le";

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the batch as little-endian `f64`, column-major (all values of
/// coordinate 0, then coordinate 1, ...), plus a JSON sidecar at `<path>.json`.
pub fn write_bin(batch: &SampleBatch, path: &Path) -> Result<()> {
    write_bin_with_config(batch, path, None)
}

pub fn write_bin_with_config(batch: &SampleBatch, path: &Path, config: Option<serde_json::Value>) -> Result<()> {
    let mut bytes = Vec::with_capacity(batch.data.len() * 8);
    for j in 0..batch.dimension {
        for i in 0..batch.count {
            bytes.extend_from_slice(&batch.data[i * batch.dimension + j].to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = BatchSidecar {
        schema_version: 1,
        dimension: batch.dimension,
        count: batch.count,
        seed: batch.seed,
        source: batch.source.clone(),
        layout: BIN_LAYOUT.into(),
        config,
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_bin(path: &Path) -> Result<SampleBatch> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: BatchSidecar = serde_json::from_str(&text)?;
    if sidecar.layout != BIN_LAYOUT {
        return Err(Error::invalid(format!("unsupported layout `{}`", sidecar.layout)));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (n, count) = (sidecar.dimension, sidecar.count);
    if bytes.len() != n * count * 8 {
        return Err(Error::invalid(format!(
            "{} holds {} bytes, sidecar implies {}",
            path.display(),
            bytes.len(),
            n * count * 8
        )));
    }
    let mut data = vec![0.0; n * count];
    for (k, word) in bytes.chunks_exact(8).enumerate() {
        let (j, i) = (k / count, k % count);
        data[i * n + j] = f64::from_le_bytes(word.try_into().expect("8-byte chunk"));
    }
    SampleBatch {
        dimension: n,
        count,
        data,
        seed: sidecar.seed,
        source: sidecar.source,
    }
    .validate()
}

/// CSV with a header row `x0,x1,...` and one sample per line.
pub fn write_csv<W: Write>(batch: &SampleBatch, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let header: Vec<String> = (0..batch.dimension).map(|j| format!("x{j}")).collect();
    let io = |e| Error::io("<csv>", e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in batch.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
