//! A two-layer graph convolutional network with hand-written backprop.
//!
//! `hidden = ReLU(Â X W1 + b1)`, `probs = softmax(Â hidden W2 + b2)`, trained
//! with mean cross-entropy over a node mask.

mod adjacency;
mod matrix;
mod optim;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adjacency::{normalize_adjacency, NormalizedAdjacency};
pub use matrix::{real, sparse_matmul, sparse_t_matmul, Matrix, Real};
pub use optim::{optimizer_step, AdamSettings, OptimizerKind, OptimizerState};

use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum GcnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("mask selects no node")]
    EmptyMask,
    #[error("non-finite value in gradient tensor {0}")]
    NonFiniteGradient(&'static str),
    #[error("parameter vector has length {got}, expected {expected}")]
    FlatLength { expected: usize, got: usize },
}

/// Layer widths: features → hidden → classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl GcnDims {
    pub fn num_params(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.classes + self.classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

pub const TENSOR_NAMES: [&str; 4] = ["W1", "b1", "W2", "b2"];

impl<T: Real> GcnParams<T> {
    pub fn zeros(dims: GcnDims) -> Self {
        Self {
            w1: Matrix::zeros(dims.input, dims.hidden),
            b1: vec![T::zero(); dims.hidden],
            w2: Matrix::zeros(dims.hidden, dims.classes),
            b2: vec![T::zero(); dims.classes],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: rand::Rng>(dims: GcnDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        for w in [&mut p.w1, &mut p.w2] {
            let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for x in w.as_mut_slice() {
                *x = real(rng.gen_range(-limit..limit));
            }
        }
        p
    }

    pub fn dims(&self) -> GcnDims {
        GcnDims {
            input: self.w1.rows(),
            hidden: self.w1.cols(),
            classes: self.w2.cols(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.dims().num_params()
    }

    /// Tensors in canonical order: W1, b1, W2, b2.
    pub fn tensors(&self) -> [&[T]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            flat.extend_from_slice(t);
        }
        flat
    }

    pub fn unflatten(dims: GcnDims, flat: &[T]) -> Result<Self, GcnError> {
        if flat.len() != dims.num_params() {
            return Err(GcnError::FlatLength {
                expected: dims.num_params(),
                got: flat.len(),
            });
        }
        let mut p = Self::zeros(dims);
        let mut offset = 0;
        for t in p.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn cast<U: Real>(&self) -> GcnParams<U> {
        let c = |x: T| U::from(x).expect("cast");
        GcnParams {
            w1: self.w1.map(c),
            b1: self.b1.iter().map(|&x| c(x)).collect(),
            w2: self.w2.map(c),
            b2: self.b2.iter().map(|&x| c(x)).collect(),
        }
    }

    /// Writes `<stem>.bin` (little-endian reals, tensors in canonical order)
    /// and `<stem>.json` (shape header).
    pub fn write_checkpoint(&self, stem: &Path) -> std::io::Result<()> {
        let dims = self.dims();
        let width = std::mem::size_of::<T>();
        let mut bytes = Vec::with_capacity(self.num_params() * width);
        for x in self.flatten() {
            if width == 4 {
                bytes.extend_from_slice(&x.to_f32().expect("f32").to_le_bytes());
            } else {
                bytes.extend_from_slice(&x.to_f64().expect("f64").to_le_bytes());
            }
        }
        let shapes = [
            [dims.input, dims.hidden],
            [1, dims.hidden],
            [dims.hidden, dims.classes],
            [1, dims.classes],
        ];
        let header = serde_json::json!({
            "dtype": T::NAME,
            "little_endian": true,
            "dims": dims,
            "tensors": TENSOR_NAMES.iter().zip(shapes).map(|(n, s)| serde_json::json!({"name": n, "shape": s})).collect::<Vec<_>>(),
        });
        fs::write(stem.with_extension("bin"), bytes)?;
        fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&header).expect("json header"),
        )
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Pre-activation of the first layer, `Â X W1 + b1`.
    pub pre_hidden: Matrix<T>,
    /// `ReLU(pre_hidden)`.
    pub hidden: Matrix<T>,
    pub logits: Matrix<T>,
    pub probs: Matrix<T>,
}

fn check_inputs<T: Real>(
    params: &GcnParams<T>,
    adj: &NormalizedAdjacency<T>,
    x: &CsrMatrix<T>,
) -> Result<(), GcnError> {
    let dims = params.dims();
    if x.cols() != dims.input {
        return Err(GcnError::Dimension(format!(
            "features have {} columns, model expects {}",
            x.cols(),
            dims.input
        )));
    }
    if x.rows() != adj.num_nodes() {
        return Err(GcnError::Dimension(format!(
            "features have {} rows, adjacency has {} nodes",
            x.rows(),
            adj.num_nodes()
        )));
    }
    if params.b1.len() != dims.hidden
        || params.w2.rows() != dims.hidden
        || params.b2.len() != dims.classes
    {
        return Err(GcnError::Dimension("inconsistent parameter shapes".into()));
    }
    Ok(())
}

pub fn forward<T: Real>(
    params: &GcnParams<T>,
    adj: &NormalizedAdjacency<T>,
    x: &CsrMatrix<T>,
) -> Result<ForwardPass<T>, GcnError> {
    check_inputs(params, adj, x)?;
    let mut pre_hidden = adj.propagate(&sparse_matmul(x, &params.w1));
    pre_hidden.add_row_vector(&params.b1);
    let hidden = pre_hidden.map(|z| z.max(T::zero()));
    let mut logits = adj.propagate(&hidden.matmul(&params.w2));
    logits.add_row_vector(&params.b2);
    let mut probs = logits.clone();
    for r in 0..probs.rows() {
        softmax_in_place(probs.row_mut(r));
    }
    Ok(ForwardPass {
        pre_hidden,
        hidden,
        logits,
        probs,
    })
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

/// Class-probability matrix (one row per node).
pub fn predict_soft_labels<T: Real>(
    params: &GcnParams<T>,
    adj: &NormalizedAdjacency<T>,
    x: &CsrMatrix<T>,
) -> Result<Matrix<T>, GcnError> {
    forward(params, adj, x).map(|f| f.probs)
}

#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: T,
    pub grad: GcnParams<T>,
}

/// Mean cross-entropy over the nodes selected by `mask` and its exact
/// gradient.
pub fn loss_and_grad<T: Real>(
    params: &GcnParams<T>,
    adj: &NormalizedAdjacency<T>,
    x: &CsrMatrix<T>,
    labels: &[u32],
    mask: &[bool],
) -> Result<LossAndGrad<T>, GcnError> {
    let n = adj.num_nodes();
    if labels.len() != n || mask.len() != n {
        return Err(GcnError::Dimension(format!(
            "labels/mask lengths {}/{} for {n} nodes",
            labels.len(),
            mask.len()
        )));
    }
    let selected = mask.iter().filter(|&&m| m).count();
    if selected == 0 {
        return Err(GcnError::EmptyMask);
    }
    let pass = forward(params, adj, x)?;
    let k = params.dims().classes;
    let scale = T::one() / real::<T>(selected as f64);

    // running mean, so identical per-node terms reproduce that term exactly
    let mut loss = T::zero();
    let mut seen = 0usize;
    let mut d_logits = Matrix::zeros(n, k);
    for u in (0..n).filter(|&u| mask[u]) {
        let y = labels[u] as usize;
        if y >= k {
            return Err(GcnError::Dimension(format!("label {y} >= {k} classes")));
        }
        let z = pass.logits.row(u);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        seen += 1;
        loss += (log_sum - z[y] - loss) / real::<T>(seen as f64);
        let d = d_logits.row_mut(u);
        for (c, (dv, &p)) in d.iter_mut().zip(pass.probs.row(u)).enumerate() {
            let target = if c == y { T::one() } else { T::zero() };
            *dv = (p - target) * scale;
        }
    }

    let b2 = d_logits.column_sums();
    let d_hw = adj.propagate(&d_logits);
    let w2 = pass.hidden.t_matmul(&d_hw);
    let mut d_pre = d_hw.matmul_t(&params.w2);
    for (d, &z) in d_pre.as_mut_slice().iter_mut().zip(pass.pre_hidden.as_slice()) {
        if z <= T::zero() {
            *d = T::zero();
        }
    }
    let b1 = d_pre.column_sums();
    let d_xw = adj.propagate(&d_pre);
    let w1 = sparse_t_matmul(x, &d_xw);

    Ok(LossAndGrad {
        loss,
        grad: GcnParams { w1, b1, w2, b2 },
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of masked nodes whose argmax class equals the label.
pub fn accuracy<T: Real>(probs: &Matrix<T>, labels: &[u32], mask: &[bool]) -> Result<f64, GcnError> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for u in (0..probs.rows()).filter(|&u| mask[u]) {
        total += 1;
        if argmax(probs.row(u)) == labels[u] as usize {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(GcnError::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::testutil::graph;
    use crate::rng::seeded;

    fn ones(n: usize, f: usize) -> CsrMatrix<f64> {
        CsrMatrix::from_dense(n, f, &vec![1.0; n * f])
    }

    #[test]
    fn zero_params_give_uniform_probs_and_ln_k_loss() {
        let g = graph(3, &[(0, 1)], &[0, 1, 2], 3);
        let adj = normalize_adjacency::<f64>(&g);
        let params = GcnParams::zeros(GcnDims { input: 2, hidden: 4, classes: 3 });
        let probs = predict_soft_labels(&params, &adj, &ones(3, 2)).unwrap();
        for r in 0..3 {
            for &p in probs.row(r) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let out = loss_and_grad(&params, &adj, &ones(3, 2), &[0, 1, 2], &[true; 3]).unwrap();
        assert_eq!(out.loss, 3f64.ln());
    }

    #[test]
    fn bias_forces_three_to_one_odds() {
        let g = graph(1, &[], &[0], 2);
        let adj = normalize_adjacency::<f64>(&g);
        let mut params = GcnParams::zeros(GcnDims { input: 1, hidden: 2, classes: 2 });
        params.b2 = vec![3f64.ln(), 0.0];
        let probs = predict_soft_labels(&params, &adj, &ones(1, 1)).unwrap();
        assert!((probs.get(0, 0) - 0.75).abs() < 1e-12);
        assert!((probs.get(0, 1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = graph(2, &[(0, 1)], &[], 2);
        let adj = normalize_adjacency::<f64>(&g);
        let params = GcnParams::<f64>::zeros(GcnDims { input: 3, hidden: 2, classes: 2 });
        assert!(matches!(forward(&params, &adj, &ones(2, 2)), Err(GcnError::Dimension(_))));
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = graph(2, &[(0, 1)], &[], 2);
        let adj = normalize_adjacency::<f64>(&g);
        let params = GcnParams::<f64>::zeros(GcnDims { input: 1, hidden: 2, classes: 2 });
        assert_eq!(
            loss_and_grad(&params, &adj, &ones(2, 1), &[0, 1], &[false, false]).unwrap_err(),
            GcnError::EmptyMask
        );
        let probs = Matrix::<f64>::zeros(2, 2);
        assert_eq!(accuracy(&probs, &[0, 1], &[false, false]), Err(GcnError::EmptyMask));
    }

    #[test]
    fn accuracy_examples() {
        let one_hot = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(accuracy(&one_hot, &[0, 1, 0], &[true; 3]).unwrap(), 1.0);
        assert!((accuracy(&one_hot, &[0, 1, 1], &[true; 3]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let uniform = Matrix::from_vec(1, 2, vec![0.5, 0.5]);
        assert_eq!(accuracy(&uniform, &[0], &[true]).unwrap(), 1.0);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
    }

    #[test]
    fn flatten_round_trip_is_exact() {
        let dims = GcnDims { input: 5, hidden: 3, classes: 4 };
        let p = GcnParams::<f32>::glorot(dims, &mut seeded(9));
        let flat = p.flatten();
        assert_eq!(flat.len(), dims.num_params());
        assert_eq!(GcnParams::unflatten(dims, &flat).unwrap(), p);
        assert!(GcnParams::<f32>::unflatten(dims, &flat[1..]).is_err());
    }

    #[test]
    fn checkpoint_files_have_expected_size() {
        let dims = GcnDims { input: 3, hidden: 2, classes: 2 };
        let p = GcnParams::<f32>::glorot(dims, &mut seeded(1));
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        p.write_checkpoint(&stem).unwrap();
        let bytes = std::fs::read(stem.with_extension("bin")).unwrap();
        assert_eq!(bytes.len(), dims.num_params() * 4);
        assert_eq!(f32::from_le_bytes(bytes[0..4].try_into().unwrap()), p.w1.get(0, 0));
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(header["dtype"], "f32");
    }

    #[test]
    fn glorot_respects_limit() {
        let dims = GcnDims { input: 10, hidden: 6, classes: 3 };
        let p = GcnParams::<f64>::glorot(dims, &mut seeded(4));
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(p.w1.as_slice().iter().all(|x| x.abs() <= limit));
        assert!(p.b1.iter().all(|&b| b == 0.0));
    }
}
