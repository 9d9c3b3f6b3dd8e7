//! Trainable parameters and the Adam update.

use crate::matrix::DenseMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// One trainable tensor with its gradient accumulator and Adam moments.
/// All four matrices share one shape.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    first_moment: DenseMatrix,
    second_moment: DenseMatrix,
    steps: u64,
}

impl Parameter {
    fn new(value: DenseMatrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            grad: DenseMatrix::zeros(r, c),
            first_moment: DenseMatrix::zeros(r, c),
            second_moment: DenseMatrix::zeros(r, c),
            steps: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

/// Glorot-uniform sample with explicit fan sizes.
pub fn glorot_uniform(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.range(-limit, limit)).collect(),
    )
    .expect("glorot shape")
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, value: DenseMatrix) -> ParamId {
        self.params.push(Parameter::new(value));
        ParamId(self.params.len() - 1)
    }

    /// Weight matrix init with fan sizes taken from the shape (x·W layout).
    pub fn add_glorot(&mut self, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        self.add(glorot_uniform(rows, cols, rows, cols, rng))
    }

    /// Attention-style vectors and head rows: fan based on the feature dim.
    pub fn add_glorot_fan(
        &mut self,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> ParamId {
        self.add(glorot_uniform(rows, cols, fan_in, fan_out, rng))
    }

    pub fn add_zeros(&mut self, rows: usize, cols: usize) -> ParamId {
        self.add(DenseMatrix::zeros(rows, cols))
    }

    pub fn add_scalar(&mut self, v: f64) -> ParamId {
        self.add(DenseMatrix::scalar(v))
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = DenseMatrix::zeros(p.grad.rows(), p.grad.cols());
        }
    }

    /// Total number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Standard bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, lr: f64) {
    adam_step_with(params, AdamHyper::with_lr(lr));
}

pub fn adam_step_with(params: &mut ParamSet, hyper: AdamHyper) {
    for p in &mut params.params {
        p.steps += 1;
        let t = p.steps as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        let n = p.value.data().len();
        for idx in 0..n {
            let g = p.grad.data()[idx];
            let m = hyper.beta1 * p.first_moment.data()[idx] + (1.0 - hyper.beta1) * g;
            let v = hyper.beta2 * p.second_moment.data()[idx] + (1.0 - hyper.beta2) * g * g;
            p.first_moment.data_mut()[idx] = m;
            p.second_moment.data_mut()[idx] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            p.value.data_mut()[idx] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
        p.grad = DenseMatrix::zeros(p.grad.rows(), p.grad.cols());
    }
}
