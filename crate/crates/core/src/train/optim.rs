use crate::model::{axpy, ContextId, Matrix, ModelParams, TargetId};
use crate::train::config::OptimizerKind;

/// Dense gradient accumulators with a record of the rows touched since the
/// last clear.
pub(crate) struct GradBuffer {
    pub gw: Matrix,
    pub go: Matrix,
    touched_w: Vec<bool>,
    touched_o: Vec<bool>,
    pub w_rows: Vec<ContextId>,
    pub o_rows: Vec<TargetId>,
}

impl GradBuffer {
    pub fn new(card_i: usize, card_j: usize, d: usize) -> Self {
        GradBuffer {
            gw: Matrix::zeros(card_i, d),
            go: Matrix::zeros(card_j, d),
            touched_w: vec![false; card_i],
            touched_o: vec![false; card_j],
            w_rows: Vec::new(),
            o_rows: Vec::new(),
        }
    }

    /// Adds `c * x` to the gradient of `W_i`.
    #[inline]
    pub fn add_w(&mut self, i: ContextId, c: f64, x: &[f64]) {
        if !self.touched_w[i] {
            self.touched_w[i] = true;
            self.w_rows.push(i);
        }
        axpy(c, x, self.gw.row_mut(i));
    }

    #[inline]
    pub fn add_o(&mut self, j: TargetId, c: f64, x: &[f64]) {
        if !self.touched_o[j] {
            self.touched_o[j] = true;
            self.o_rows.push(j);
        }
        axpy(c, x, self.go.row_mut(j));
    }

    /// Sorts touched rows so updates run in a fixed order.
    pub fn finish(&mut self) {
        self.w_rows.sort_unstable();
        self.o_rows.sort_unstable();
    }

    pub fn clear(&mut self) {
        for &i in &self.w_rows {
            self.gw.row_mut(i).fill(0.0);
            self.touched_w[i] = false;
        }
        for &j in &self.o_rows {
            self.go.row_mut(j).fill(0.0);
            self.touched_o[j] = false;
        }
        self.w_rows.clear();
        self.o_rows.clear();
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Per-entry optimizer state, updated only on touched rows (lazy Adam and
/// Adagrad skip rows without gradient).
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    w1: Vec<f64>,
    w2: Vec<f64>,
    o1: Vec<f64>,
    o2: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        let (nw, no) = (params.w.as_slice().len(), params.o.as_slice().len());
        let sized = |n: usize, used: bool| if used { vec![0.0; n] } else { Vec::new() };
        let first = kind != OptimizerKind::Sgd;
        let second = kind == OptimizerKind::Adam;
        Optimizer {
            kind,
            w1: sized(nw, first),
            w2: sized(nw, second),
            o1: sized(no, first),
            o2: sized(no, second),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, g: &GradBuffer, lr: f64) {
        self.t = self.t.saturating_add(1);
        let d = params.dim();
        let kind = self.kind;
        let t = self.t;
        for &i in &g.w_rows {
            let r = i * d..(i + 1) * d;
            update(kind, t, lr, &mut params.w.as_mut_slice()[r.clone()], g.gw.row(i), &mut self.w1, &mut self.w2, r);
        }
        for &j in &g.o_rows {
            let r = j * d..(j + 1) * d;
            update(kind, t, lr, &mut params.o.as_mut_slice()[r.clone()], g.go.row(j), &mut self.o1, &mut self.o2, r);
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update(
    kind: OptimizerKind,
    t: i32,
    lr: f64,
    p: &mut [f64],
    g: &[f64],
    s1: &mut [f64],
    s2: &mut [f64],
    range: std::ops::Range<usize>,
) {
    match kind {
        OptimizerKind::Sgd => axpy(-lr, g, p),
        OptimizerKind::Adagrad => {
            let acc = &mut s1[range];
            for k in 0..p.len() {
                acc[k] += g[k] * g[k];
                p[k] -= lr * g[k] / (acc[k].sqrt() + EPS);
            }
        }
        OptimizerKind::Adam => {
            let (m, v) = (&mut s1[range.clone()], &mut s2[range]);
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> ModelParams {
        ModelParams::new(
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sgd_touches_only_marked_rows() {
        let mut p = one();
        let mut g = GradBuffer::new(1, 2, 2);
        g.add_o(1, 2.0, &[1.0, -1.0]);
        g.finish();
        Optimizer::new(OptimizerKind::Sgd, &p).step(&mut p, &g, 0.5);
        assert_eq!(p.o.row(1), &[1.0, 3.0]);
        assert_eq!(p.o.row(0), &[0.0, 0.0]);
        assert_eq!(p.w.row(0), &[1.0, 1.0]);
        g.clear();
        assert!(g.o_rows.is_empty());
        assert_eq!(g.go.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = one();
        let mut g = GradBuffer::new(1, 2, 2);
        g.add_w(0, 1.0, &[3.0, -0.5]);
        g.finish();
        Optimizer::new(OptimizerKind::Adam, &p).step(&mut p, &g, 0.1);
        assert!((p.w.row(0)[0] - 0.9).abs() < 1e-6);
        assert!((p.w.row(0)[1] - 1.1).abs() < 1e-6);
        let mut p = one();
        Optimizer::new(OptimizerKind::Adagrad, &p).step(&mut p, &g, 0.1);
        assert!((p.w.row(0)[0] - 0.9).abs() < 1e-6);
    }
}
