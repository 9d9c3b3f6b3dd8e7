//! Finite-difference gradient checking.
//!
//! The oracle is forward-only: central differences of the loss at step h,
//! never touching the backward pass it certifies. `run_suite` covers every
//! differentiable tape op plus the flat and hierarchical model builders,
//! with a per-check fault hook so the suite's own sensitivity is testable
//! (a deliberately scaled analytic gradient must be caught).

use std::rc::Rc;

use super::{Mode, NeighborLists, NodeId, RunningStats, Tape};
use crate::data::Graph;
use crate::error::Result;
use crate::layers::GnnVariant;
use crate::matrix::DenseMatrix;
use crate::pooling::PoolKind;
use crate::rng::Rng;
use crate::trainer::{batch_graphs, ExperimentConfig, GraphBatch, Model};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Central finite differences of a scalar function at `at`.
pub fn central_difference(
    f: &mut dyn FnMut(&DenseMatrix) -> Result<f64>,
    at: &DenseMatrix,
    step: f64,
) -> Result<DenseMatrix> {
    let mut grad = DenseMatrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for idx in 0..at.data().len() {
        let original = probe.data()[idx];
        probe.data_mut()[idx] = original + step;
        let plus = f(&probe)?;
        probe.data_mut()[idx] = original - step;
        let minus = f(&probe)?;
        probe.data_mut()[idx] = original;
        grad.data_mut()[idx] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Worst per-entry relative error, with an absolute floor of 1 in the
/// denominator so near-zero gradients are compared absolutely.
pub fn relative_error(analytic: &DenseMatrix, numeric: &DenseMatrix) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |worst, (&a, &n)| {
            worst.max((a - n).abs() / 1.0f64.max(a.abs()).max(n.abs()))
        })
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub worst_rel_err: f64,
    pub pass: bool,
}

/// Test hook: scales the analytic gradient of one named check so the suite
/// must flag it.
#[derive(Debug, Clone)]
pub struct FaultInjection {
    pub name: String,
    pub scale: f64,
}

impl FaultInjection {
    pub fn for_check(name: impl Into<String>) -> Self {
        FaultInjection {
            name: name.into(),
            scale: 1.01,
        }
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.range(-2.0, 2.0)).collect(),
    )
    .expect("shape")
}

/// Entries drawn without replacement from a lattice over [-2, 2] offset away
/// from zero, so ReLU kinks and max-op ties stay clear of the FD step.
fn separated_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let need = rows * cols;
    let lattice: Vec<f64> = (0..160).map(|k| -2.0 + 0.0123 + k as f64 * 0.025).collect();
    assert!(need <= lattice.len());
    let mut picks = lattice;
    rng.shuffle(&mut picks);
    DenseMatrix::from_vec(rows, cols, picks[..need].to_vec()).expect("shape")
}

fn random_graph(n: usize, rng: &mut Rng) -> Rc<NeighborLists> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.uniform() < 0.5 {
                edges.push((a, b));
            }
        }
    }
    Rc::new(NeighborLists::from_edges(n, &edges))
}

fn projected_loss(
    inputs: &[DenseMatrix],
    build: &dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
    projection: &DenseMatrix,
) -> Result<(Tape, Vec<NodeId>, NodeId)> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let w = tape.constant(projection.clone());
    let weighted = tape.mul(out, w)?;
    let loss = tape.sum_all(weighted);
    Ok((tape, ids, loss))
}

fn run_op_check(
    inputs: &[DenseMatrix],
    build: &dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
    rng: &mut Rng,
    fault_scale: f64,
) -> Result<f64> {
    // draw the projection from the output shape
    let projection = {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
        let out = build(&mut tape, &ids)?;
        let (r, c) = tape.value(out).shape();
        uniform_matrix(r, c, rng)
    };

    let (mut tape, ids, loss) = projected_loss(inputs, build, &projection)?;
    tape.backward(loss)?;

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(ids[i])
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(input.rows(), input.cols()))
            .scale(fault_scale);
        let numeric = central_difference(
            &mut |replacement| {
                let mut probe_inputs: Vec<DenseMatrix> = inputs.to_vec();
                probe_inputs[i] = replacement.clone();
                let (probe_tape, _, probe_loss) =
                    projected_loss(&probe_inputs, build, &projection)?;
                Ok(probe_tape.value(probe_loss).get(0, 0))
            },
            input,
            DEFAULT_STEP,
        )?;
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

type CheckFn = fn(u64, f64) -> Result<f64>;

/// `run_op_check` builds loss = Σ (op(inputs) ⊙ W) with a fixed random
/// projection W, takes analytic grads from one backward pass, and compares
/// against central differences on each input in turn.
fn matmul_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 4, &mut rng),
        uniform_matrix(4, 2, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.matmul(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn transpose_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(3, 4, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| Ok(t.transpose(ids[0])),
        &mut rng,
        fault_scale,
    )
}

fn add_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 4, &mut rng),
        uniform_matrix(3, 4, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.add(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn sub_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 4, &mut rng),
        uniform_matrix(3, 4, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.sub(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn mul_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 4, &mut rng),
        uniform_matrix(3, 4, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.mul(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn add_row_broadcast_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(4, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.add_row_broadcast(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn sub_row_broadcast_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(4, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.sub_row_broadcast(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn relu_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![separated_matrix(4, 5, &mut rng)];
    run_op_check(&inputs, &|t, ids| Ok(t.relu(ids[0])), &mut rng, fault_scale)
}

fn scale_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let c = rng.range(-2.0, 2.0);
    let inputs = vec![uniform_matrix(3, 4, &mut rng)];
    run_op_check(
        &inputs,
        &move |t, ids| Ok(t.scale(ids[0], c)),
        &mut rng,
        fault_scale,
    )
}

fn scale_by_scalar_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 4, &mut rng),
        uniform_matrix(1, 1, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| t.scale_by_scalar(ids[0], ids[1]),
        &mut rng,
        fault_scale,
    )
}

fn softmax_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(6, 1, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| t.softmax_columns(ids[0]),
        &mut rng,
        fault_scale,
    )
}

fn batch_norm_train_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(5, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| {
            let mut stats = RunningStats::new(3);
            t.batch_norm(ids[0], ids[1], ids[2], &mut stats, Mode::Train)
        },
        &mut rng,
        fault_scale,
    )
}

fn batch_norm_eval_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(4, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
        uniform_matrix(1, 3, &mut rng),
    ];
    run_op_check(
        &inputs,
        &|t, ids| {
            let mut stats = RunningStats::new(3);
            stats.mean = vec![0.3, -0.2, 0.1];
            stats.var = vec![1.5, 0.7, 2.0];
            t.batch_norm(ids[0], ids[1], ids[2], &mut stats, Mode::Eval)
        },
        &mut rng,
        fault_scale,
    )
}

fn dropout_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(4, 4, &mut rng)];
    let mask_seed = seed.wrapping_mul(77).wrapping_add(13);
    run_op_check(
        &inputs,
        &move |t, ids| {
            let mut mask_rng = Rng::new(mask_seed);
            t.dropout(ids[0], 0.4, Mode::Train, &mut mask_rng)
        },
        &mut rng,
        fault_scale,
    )
}

fn cross_entropy_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let labels: Vec<usize> = (0..4).map(|_| rng.below(3)).collect();
    let inputs = vec![uniform_matrix(4, 3, &mut rng)];
    run_op_check(
        &inputs,
        &move |t, ids| t.cross_entropy(ids[0], &labels),
        &mut rng,
        fault_scale,
    )
}

fn neighbor_sum_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let graph = random_graph(5, &mut rng);
    let inputs = vec![uniform_matrix(5, 3, &mut rng)];
    run_op_check(
        &inputs,
        &move |t, ids| t.neighbor_sum(ids[0], &graph),
        &mut rng,
        fault_scale,
    )
}

fn neighbor_max_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let graph = random_graph(5, &mut rng);
    let inputs = vec![separated_matrix(5, 3, &mut rng)];
    run_op_check(
        &inputs,
        &move |t, ids| t.neighbor_max(ids[0], &graph),
        &mut rng,
        fault_scale,
    )
}

fn row_scale_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let weights = Rc::new((0..4).map(|_| rng.range(0.1, 2.0)).collect::<Vec<f64>>());
    let inputs = vec![uniform_matrix(4, 3, &mut rng)];
    run_op_check(
        &inputs,
        &move |t, ids| t.row_scale(ids[0], Rc::clone(&weights)),
        &mut rng,
        fault_scale,
    )
}

fn rows_sum_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(5, 3, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| Ok(t.rows_sum(ids[0])),
        &mut rng,
        fault_scale,
    )
}

fn rows_mean_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(5, 3, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| Ok(t.rows_mean(ids[0])),
        &mut rng,
        fault_scale,
    )
}

fn rows_max_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![separated_matrix(5, 3, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| Ok(t.rows_max(ids[0])),
        &mut rng,
        fault_scale,
    )
}

fn slice_rows_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(6, 3, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| t.slice_rows(ids[0], 2, 3),
        &mut rng,
        fault_scale,
    )
}

fn concat_cols_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(3, 2, &mut rng),
        uniform_matrix(3, 4, &mut rng),
    ];
    run_op_check(&inputs, &|t, ids| t.concat_cols(ids), &mut rng, fault_scale)
}

fn concat_rows_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(2, 4, &mut rng),
        uniform_matrix(3, 4, &mut rng),
    ];
    run_op_check(&inputs, &|t, ids| t.concat_rows(ids), &mut rng, fault_scale)
}

fn block_diag_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![
        uniform_matrix(2, 2, &mut rng),
        uniform_matrix(3, 3, &mut rng),
    ];
    run_op_check(&inputs, &|t, ids| t.block_diag(ids), &mut rng, fault_scale)
}

fn reshape_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(3, 4, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| t.reshape(ids[0], 2, 6),
        &mut rng,
        fault_scale,
    )
}

fn sum_all_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let inputs = vec![uniform_matrix(3, 4, &mut rng)];
    run_op_check(
        &inputs,
        &|t, ids| Ok(t.sum_all(ids[0])),
        &mut rng,
        fault_scale,
    )
}

fn tiny_batch(rng: &mut Rng) -> Result<GraphBatch> {
    let a = Graph {
        node_count: 3,
        edges: vec![(0, 1), (0, 2), (1, 2)],
        features: uniform_matrix(3, 3, rng),
        label: 0,
    };
    let b = Graph {
        node_count: 2,
        edges: vec![(0, 1)],
        features: uniform_matrix(2, 3, rng),
        label: 1,
    };
    batch_graphs(&[&a, &b])
}

fn model_check(config: &ExperimentConfig, seed: u64, fault_scale: f64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let batch = tiny_batch(&mut rng)?;
    let dropout_seed = seed.wrapping_mul(31).wrapping_add(7);

    let mut init_rng = Rng::new(seed ^ 0xabcd);
    let mut model = Model::build(config, 3, 2, 2.5, &mut init_rng)?;

    let loss_value = |model: &mut Model| -> Result<f64> {
        let mut tape = Tape::new();
        let mut dropout_rng = Rng::new(dropout_seed);
        let logits = model.logits(&mut tape, &batch, Mode::Train, &mut dropout_rng)?;
        let loss = tape.cross_entropy(logits, &batch.labels)?;
        Ok(tape.value(loss).get(0, 0))
    };

    // analytic gradients for every parameter
    {
        let mut tape = Tape::new();
        let mut dropout_rng = Rng::new(dropout_seed);
        let logits = model.logits(&mut tape, &batch, Mode::Train, &mut dropout_rng)?;
        let loss = tape.cross_entropy(logits, &batch.labels)?;
        tape.backward(loss)?;
        model.params_mut().zero_grads();
        tape.collect_param_grads(model.params_mut());
    }
    let analytic: Vec<DenseMatrix> = model
        .params()
        .ids()
        .map(|id| model.params().get(id).grad.clone().scale(fault_scale))
        .collect();

    let ids: Vec<_> = model.params().ids().collect();
    let mut worst = 0.0f64;
    for (pi, &pid) in ids.iter().enumerate() {
        let at = model.params().value(pid).clone();
        let numeric = central_difference(
            &mut |replacement| {
                model.params_mut().get_mut(pid).value = replacement.clone();
                loss_value(&mut model)
            },
            &at,
            DEFAULT_STEP,
        )?;
        model.params_mut().get_mut(pid).value = at;
        worst = worst.max(relative_error(&analytic[pi], &numeric));
    }
    Ok(worst)
}

fn flat_model_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut config =
        ExperimentConfig::new("gradcheck", GnnVariant::SumMlpGinEps, PoolKind::SopoolBimap);
    config.hidden = 4;
    config.reduced_dim = Some(2);
    config.dropout = 0.3;
    config.allow_off_grid = true;
    model_check(&config, seed, fault_scale)
}

fn hierarchical_model_check(seed: u64, fault_scale: f64) -> Result<f64> {
    let mut config =
        ExperimentConfig::new("gradcheck", GnnVariant::SumMlpGin0, PoolKind::SopoolMattn);
    config.hidden = 4;
    config.blocks = Some(2);
    config.head_count = Some(2);
    config.dropout = 0.3;
    config.allow_off_grid = true;
    model_check(&config, seed, fault_scale)
}

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("matmul", matmul_check),
    ("transpose", transpose_check),
    ("add", add_check),
    ("sub", sub_check),
    ("mul", mul_check),
    ("add_row_broadcast", add_row_broadcast_check),
    ("sub_row_broadcast", sub_row_broadcast_check),
    ("relu", relu_check),
    ("scale", scale_check),
    ("scale_by_scalar", scale_by_scalar_check),
    ("softmax_columns", softmax_check),
    ("batch_norm_train", batch_norm_train_check),
    ("batch_norm_eval", batch_norm_eval_check),
    ("dropout", dropout_check),
    ("cross_entropy", cross_entropy_check),
    ("neighbor_sum", neighbor_sum_check),
    ("neighbor_max", neighbor_max_check),
    ("row_scale", row_scale_check),
    ("rows_sum", rows_sum_check),
    ("rows_mean", rows_mean_check),
    ("rows_max", rows_max_check),
    ("slice_rows", slice_rows_check),
    ("concat_cols", concat_cols_check),
    ("concat_rows", concat_rows_check),
    ("block_diag", block_diag_check),
    ("reshape", reshape_check),
    ("sum_all", sum_all_check),
    ("flat_model", flat_model_check),
    ("hierarchical_model", hierarchical_model_check),
];

/// Runs every check over `seeds` seeds. Model checks are heavier, so they
/// run on a reduced seed schedule (at least 5, at most the requested count).
pub fn run_suite(
    seeds: u64,
    tol: f64,
    fault: Option<&FaultInjection>,
) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::with_capacity(CHECKS.len());
    for &(name, check) in CHECKS {
        let n = if name.ends_with("_model") {
            seeds.clamp(1, 5)
        } else {
            seeds.max(1)
        };
        let scale = match fault {
            Some(f) if f.name == name => f.scale,
            _ => 1.0,
        };
        let mut worst = 0.0f64;
        for s in 0..n {
            worst = worst.max(check(1000 + s, scale)?);
        }
        outcomes.push(CheckOutcome {
            name,
            worst_rel_err: worst,
            pass: worst < tol,
        });
    }
    Ok(outcomes)
}
