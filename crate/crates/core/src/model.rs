//! The two-matrix bilinear score model `G(i, j) = <W_i, O_j>`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type ContextId = usize;
pub type TargetId = usize;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Format(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Format("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }
}

/// Dot product with four interleaved accumulators.
///
/// Every score in the crate goes through this function, so the summation
/// order is identical whether a score is computed alone or as part of a row.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Input embeddings `W` (one row per context) and output layer `O` (one row
/// per target), sharing the embedding dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w: Matrix,
    pub o: Matrix,
}

impl ModelParams {
    pub fn new(w: Matrix, o: Matrix) -> Result<Self> {
        if w.cols() != o.cols() {
            return Err(Error::Format(format!(
                "embedding dimension mismatch: W has {} columns, O has {}",
                w.cols(),
                o.cols()
            )));
        }
        if w.cols() == 0 || w.rows() == 0 || o.rows() == 0 {
            return Err(Error::Config("model matrices must be non-empty".into()));
        }
        let p = ModelParams { w, o };
        if !p.is_finite() {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn card_i(&self) -> usize {
        self.w.rows()
    }

    pub fn card_j(&self) -> usize {
        self.o.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w.as_slice().iter().chain(self.o.as_slice()).all(|x| x.is_finite())
    }

    pub fn check_context(&self, i: ContextId) -> Result<()> {
        if i >= self.card_i() {
            return Err(Error::IndexOutOfRange {
                space: "context",
                index: i,
                len: self.card_i(),
            });
        }
        Ok(())
    }

    pub fn check_target(&self, j: TargetId) -> Result<()> {
        if j >= self.card_j() {
            return Err(Error::IndexOutOfRange {
                space: "target",
                index: j,
                len: self.card_j(),
            });
        }
        Ok(())
    }

    pub fn score(&self, i: ContextId, j: TargetId) -> Result<f64> {
        self.check_context(i)?;
        self.check_target(j)?;
        Ok(dot(self.w.row(i), self.o.row(j)))
    }

    pub fn score_all_targets(&self, i: ContextId) -> Result<Vec<f64>> {
        self.check_context(i)?;
        let mut out = vec![0.0; self.card_j()];
        self.fill_scores(i, &mut out);
        Ok(out)
    }

    /// Writes every target score for context `i` into `out`. The caller has
    /// already validated `i`.
    pub(crate) fn fill_scores(&self, i: ContextId, out: &mut [f64]) {
        let wi = self.w.row(i);
        for (j, s) in out.iter_mut().enumerate() {
            *s = dot(wi, self.o.row(j));
        }
    }
}

/// Uniform initialization in `[-scale, scale]` from a seeded ChaCha stream:
/// `W` first, then `O`, both row-major.
pub fn init_params(card_i: usize, card_j: usize, d: usize, seed: u64, scale: f64) -> Result<ModelParams> {
    if card_i == 0 || card_j == 0 || d == 0 {
        return Err(Error::Config(format!(
            "model dimensions must be positive (card_i={card_i}, card_j={card_j}, d={d})"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("init scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
    };
    let w = Matrix::from_vec(card_i, d, draw(card_i * d))?;
    let o = Matrix::from_vec(card_j, d, draw(card_j * d))?;
    ModelParams::new(w, o)
}

/// Conventional default scale `0.5 / d`.
pub fn default_init_scale(d: usize) -> f64 {
    0.5 / d as f64
}
