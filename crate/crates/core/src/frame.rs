//! Construction and verification of maximally separated classifier frames.
//!
//! A [`Frame`] is a `d x N` matrix of unit-norm class-center vectors. For
//! `d >= N-1` the optimum of the pairwise max-min separation objective is a
//! simplex equiangular tight frame: every pairwise inner product equals
//! `-1/(N-1)`. [`etf_closed_form`] builds that optimum exactly;
//! [`frame_iterative`] runs projected gradient ascent on the separation
//! objective and also handles `d < N-1`, where no equiangular arrangement
//! exists and the optimizer settles on a best-effort packing.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeds;

/// A set of `num_classes` class-center vectors in `dim` dimensions,
/// stored column-major: column `i` is the center for class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    vectors: Array2<f64>,
}

impl Frame {
    /// Wrap an existing `dim x num_classes` matrix. Entries must be finite;
    /// unit norms are not required (see [`verify_frame`]).
    pub fn from_vectors(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "frame must have at least one row and one column".into(),
            ));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "frame entries must be finite".into(),
            ));
        }
        Ok(Self { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Center vector for class `i`.
    pub fn center(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.column(i)
    }

    /// The equiangular inner-product value `-1/(N-1)` for this frame's size.
    pub fn equiangular_target(&self) -> f64 {
        -1.0 / (self.num_classes() as f64 - 1.0)
    }
}

/// Settings for [`frame_iterative`].
#[derive(Debug, Clone)]
pub struct IterativeConfig {
    /// Maximum number of gradient-ascent iterations.
    pub max_iters: usize,
    /// Initial step size.
    pub learning_rate: f64,
    /// Stop once the best objective improves by less than this over
    /// [`IterativeConfig::stall_window`] iterations (checked only after the
    /// step size has reached its final scheduled value).
    pub stop_threshold: f64,
    /// Seed for the Gaussian initialization.
    pub seed: u64,
    /// Multiply the step size by `decay_factor` every `decay_every` iterations.
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Length of the no-improvement window for the stop test.
    pub stall_window: usize,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            learning_rate: 0.1,
            stop_threshold: 1e-7,
            seed: 0,
            decay_every: 500,
            decay_factor: 0.5,
            stall_window: 10,
        }
    }
}

/// Outcome of the iterative optimizer: the best iterate seen, whether the
/// stop test fired before `max_iters`, and the separation objective at the
/// initial and best iterates.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub frame: Frame,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub initial_objective: f64,
}

/// Sum over columns of the squared distance to the nearest other column.
pub fn min_distance_objective(vectors: &ArrayView2<f64>) -> f64 {
    let (_, dist2) = nearest_neighbors(vectors);
    dist2.iter().sum()
}

/// For each column, the index of the nearest other column (ties break to the
/// lowest index) and the squared distance to it.
pub fn nearest_neighbors(vectors: &ArrayView2<f64>) -> (Vec<usize>, Vec<f64>) {
    let n = vectors.ncols();
    let gram = vectors.t().dot(vectors);
    let sq_norms: Vec<f64> = (0..n).map(|i| gram[[i, i]]).collect();
    let mut nn = vec![0usize; n];
    let mut dist2 = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = (sq_norms[i] + sq_norms[j] - 2.0 * gram[[i, j]]).max(0.0);
            if d2 < dist2[i] {
                dist2[i] = d2;
                nn[i] = j;
            }
        }
    }
    (nn, dist2)
}

/// Build the exact maximally separated frame for `dim >= num_classes - 1`.
///
/// The frame is the canonical simplex configuration expressed in an
/// orthonormal basis of the hyperplane orthogonal to the all-ones direction,
/// embedded into `dim` dimensions by a seeded random orthonormal map. Same
/// seed, same frame, bitwise.
pub fn etf_closed_form(num_classes: usize, dim: usize, seed: u64) -> Result<Frame> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "num_classes must be >= 2, got {num_classes}"
        )));
    }
    if dim + 1 < num_classes {
        return Err(Error::DimensionMismatch(format!(
            "closed form requires dim >= num_classes - 1 ({} < {})",
            dim,
            num_classes - 1
        )));
    }
    let n = num_classes;
    let k = n - 1;

    // Simplex coordinates in R^{N-1}: columns have unit norm and pairwise
    // inner products exactly -1/(N-1). Row `r` is the r-th Helmert basis
    // vector of the hyperplane orthogonal to the all-ones vector, scaled by
    // sqrt(N/(N-1)).
    let scale = (n as f64 / k as f64).sqrt();
    let mut coords = Array2::<f64>::zeros((k, n));
    for r in 1..n {
        let inv = 1.0 / ((r as f64) * (r as f64 + 1.0)).sqrt();
        for i in 0..r {
            coords[[r - 1, i]] = scale * inv;
        }
        coords[[r - 1, r]] = -scale * (r as f64) * inv;
    }

    let mut rng = seeds::stream_rng(seed, "etf-rotation");
    let basis = random_orthonormal(dim, k, &mut rng);
    let vectors = basis.dot(&coords);
    Frame::from_vectors(vectors)
}

/// Gradient-ascent construction of a separated frame for any `dim >= 1`.
///
/// Columns start as normalized Gaussian draws. Each iteration repels every
/// column from its nearest neighbor (step `2 * (w_i - w_nn)` scaled by the
/// learning rate), renormalizes, and tracks the best iterate by objective.
/// The returned frame is always that best iterate.
pub fn frame_iterative(
    num_classes: usize,
    dim: usize,
    config: &IterativeConfig,
) -> Result<IterativeResult> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "num_classes must be >= 2, got {num_classes}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning_rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    if config.stop_threshold < 0.0 {
        return Err(Error::InvalidArgument(
            "stop_threshold must be >= 0".into(),
        ));
    }

    let mut rng = seeds::stream_rng(config.seed, "frame-iterative-init");
    let mut w = gaussian_matrix(dim, num_classes, &mut rng);
    normalize_columns(&mut w);

    let initial_objective = min_distance_objective(&w.view());
    let mut best = w.clone();
    let mut best_obj = initial_objective;

    // The stop test only arms on the final learning-rate plateau; stalls at
    // a large step size are jitter, not convergence.
    let last_decay = if config.decay_every == 0 {
        0
    } else {
        ((config.max_iters - 1) / config.decay_every) * config.decay_every
    };
    let window = config.stall_window.max(1);
    let mut best_history: Vec<f64> = Vec::with_capacity(config.max_iters.min(1 << 20));

    let mut tau = config.learning_rate;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=config.max_iters {
        iterations = t;
        let (nn, dist2) = nearest_neighbors(&w.view());
        let obj: f64 = dist2.iter().sum();
        if obj > best_obj {
            best_obj = obj;
            best.assign(&w);
        }
        best_history.push(best_obj);

        if t >= last_decay + window && best_history.len() > window {
            let prev = best_history[best_history.len() - 1 - window];
            if best_obj - prev < config.stop_threshold {
                converged = true;
                break;
            }
        }

        // Ascent step: repel each column from its nearest neighbor.
        let mut updated = Array2::<f64>::zeros((dim, num_classes));
        for i in 0..num_classes {
            let wi = w.column(i);
            let wj = w.column(nn[i]);
            for r in 0..dim {
                updated[[r, i]] = wi[r] + tau * 2.0 * (wi[r] - wj[r]);
            }
        }
        normalize_columns(&mut updated);
        w = updated;

        if config.decay_every != 0 && t % config.decay_every == 0 {
            tau *= config.decay_factor;
        }
    }

    Ok(IterativeResult {
        frame: Frame::from_vectors(best)?,
        converged,
        iterations,
        objective: best_obj,
        initial_objective,
    })
}

/// Norm and equiangularity deviations of a frame.
#[derive(Debug, Clone, Copy)]
pub struct VerifyReport {
    /// `max_i | ||w_i|| - 1 |`
    pub max_norm_deviation: f64,
    /// `max_{i != j} | cos(w_i, w_j) + 1/(N-1) |`
    pub max_cosine_deviation: f64,
    /// True iff both deviations are within the tolerance.
    pub is_etf: bool,
}

/// Measure how far `frame` is from a unit-norm equiangular configuration.
pub fn verify_frame(frame: &Frame, tolerance: f64) -> VerifyReport {
    let n = frame.num_classes();
    let target = frame.equiangular_target();
    let norms: Vec<f64> = (0..n)
        .map(|i| frame.center(i).dot(&frame.center(i)).sqrt())
        .collect();
    let max_norm_deviation = norms
        .iter()
        .map(|&nm| (nm - 1.0).abs())
        .fold(0.0, f64::max);

    let mut max_cosine_deviation: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let denom = norms[i] * norms[j];
            let dev = if denom > 0.0 {
                (frame.center(i).dot(&frame.center(j)) / denom - target).abs()
            } else {
                f64::INFINITY
            };
            max_cosine_deviation = max_cosine_deviation.max(dev);
        }
    }

    VerifyReport {
        max_norm_deviation,
        max_cosine_deviation,
        is_etf: max_norm_deviation <= tolerance && max_cosine_deviation <= tolerance,
    }
}

/// The `N x N` matrix of pairwise cosine similarities between columns.
///
/// Errors on a zero-norm column.
pub fn pairwise_cosine(frame: &Frame) -> Result<Array2<f64>> {
    let n = frame.num_classes();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let nm = frame.center(i).dot(&frame.center(i)).sqrt();
        if !(nm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "column {i} has zero norm; cosine undefined"
            )));
        }
        norms.push(nm);
    }
    let gram = frame.vectors().t().dot(frame.vectors());
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = if i == j {
                1.0
            } else {
                gram[[i, j]] / (norms[i] * norms[j])
            };
        }
    }
    Ok(out)
}

const FRAME_MAGIC: &[u8; 4] = b"ETF1";

/// Write a frame as `"ETF1"`, little-endian `u32` dim, `u32` num_classes,
/// then `dim * num_classes` little-endian `f64` values column-major.
pub fn write_frame_binary<W: Write>(frame: &Frame, writer: &mut W) -> Result<()> {
    writer.write_all(FRAME_MAGIC)?;
    writer.write_all(&(frame.dim() as u32).to_le_bytes())?;
    writer.write_all(&(frame.num_classes() as u32).to_le_bytes())?;
    for col in frame.vectors().columns() {
        for &v in col.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a frame written by [`write_frame_binary`].
pub fn read_frame_binary<R: Read>(reader: &mut R) -> Result<Frame> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected {FRAME_MAGIC:?}"
        )));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    reader.read_exact(&mut word)?;
    let num_classes = u32::from_le_bytes(word) as usize;
    if dim == 0 || num_classes == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    if dim.saturating_mul(num_classes) > (1 << 28) {
        return Err(Error::Format(format!(
            "implausible frame size {dim} x {num_classes}"
        )));
    }
    let mut vectors = Array2::<f64>::zeros((dim, num_classes));
    let mut buf = [0u8; 8];
    for c in 0..num_classes {
        for r in 0..dim {
            reader.read_exact(&mut buf)?;
            vectors[[r, c]] = f64::from_le_bytes(buf);
        }
    }
    let mut trailing = [0u8; 1];
    match reader.read(&mut trailing)? {
        0 => Frame::from_vectors(vectors),
        _ => Err(Error::Format("trailing data after frame values".into())),
    }
}

/// Write the CSV debug form: a header row of class indices, then `dim` rows
/// with one column per class.
pub fn write_frame_csv<W: Write>(frame: &Frame, writer: &mut W) -> Result<()> {
    let header: Vec<String> = (0..frame.num_classes()).map(|i| i.to_string()).collect();
    writeln!(writer, "{}", header.join(","))?;
    for r in 0..frame.dim() {
        let row: Vec<String> = (0..frame.num_classes())
            .map(|c| frame.vectors()[[r, c]].to_string())
            .collect();
        writeln!(writer, "{}", row.join(","))?;
    }
    Ok(())
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    m
}

fn normalize_columns(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
}

/// Orthonormalize `k` seeded Gaussian columns in `dim` dimensions by
/// Gram-Schmidt with a re-orthogonalization pass. Degenerate draws are
/// re-sampled, so the result is always a full orthonormal set.
fn random_orthonormal(dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    assert!(k <= dim, "cannot fit {k} orthonormal columns in {dim} dims");
    let mut basis = Array2::<f64>::zeros((dim, k));
    let mut col = 0;
    while col < k {
        let mut v: Array1<f64> = Array1::from_iter((0..dim).map(|_| StandardNormal.sample(rng)));
        for _ in 0..2 {
            for j in 0..col {
                let bj = basis.column(j);
                let proj = v.dot(&bj);
                v.zip_mut_with(&bj, |vi, &bji| *vi -= proj * bji);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            v.mapv_inplace(|x| x / norm);
            basis.column_mut(col).assign(&v);
            col += 1;
        }
    }
    basis
}
