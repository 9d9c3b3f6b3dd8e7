//! The cross-validation training loop.

use std::time::Instant;

use rayon::prelude::*;

use super::results::{mean_std, CVResult, SCHEMA_VERSION};
use super::{batch_graphs, EpochSelect, ExperimentConfig, Model, GRID_BATCH, GRID_HIDDEN};
use crate::autograd::{adam_step, Mode, Tape};
use crate::data::{stratified_kfold, Dataset, FoldSplit};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Step-decayed learning rate: `base · decay^⌊epoch / every⌋`.
pub fn learning_rate_at(config: &ExperimentConfig, epoch: usize) -> f64 {
    config.base_lr * config.lr_decay.powi((epoch / config.lr_decay_every) as i32)
}

/// Per-fold count of how many gradient-contributing batches each graph
/// appeared in; validation graphs must stay at zero for their fold.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub grad_contributions: Vec<Vec<u64>>,
}

/// Accuracy of eval-mode argmax predictions over the given graph ids.
pub fn evaluate_accuracy(model: &mut Model, dataset: &Dataset, ids: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    // chunked scoring; batch composition cannot change eval predictions
    for chunk in ids.chunks(64) {
        let graphs: Vec<_> = chunk.iter().map(|&id| &dataset.graphs[id]).collect();
        let batch = batch_graphs(&graphs)?;
        let mut tape = Tape::new();
        let mut unused_rng = Rng::new(0);
        let logits = model.logits(&mut tape, &batch, Mode::Eval, &mut unused_rng)?;
        let lm = tape.value(logits);
        for (row, &label) in batch.labels.iter().enumerate() {
            let pred = (0..lm.cols())
                .max_by(|&a, &b| {
                    lm.get(row, a)
                        .partial_cmp(&lm.get(row, b))
                        .expect("finite logits")
                })
                .expect("at least one class");
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / ids.len() as f64)
}

fn train_fold(
    config: &ExperimentConfig,
    dataset: &Dataset,
    fold: &FoldSplit,
    fold_rng: &Rng,
) -> Result<(Vec<f64>, Vec<u64>)> {
    let mut init_rng = fold_rng.stream(0);
    let mut train_rng = fold_rng.stream(1);
    let mut model = Model::build(
        config,
        dataset.feature_dim,
        dataset.num_classes,
        dataset.average_node_count(),
        &mut init_rng,
    )?;

    let mut contributions = vec![0u64; dataset.len()];
    let mut epoch_accuracy = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = learning_rate_at(config, epoch);
        let mut order = fold.train_ids.clone();
        train_rng.shuffle(&mut order);
        // a trailing single-graph batch would starve batch norm (and, with
        // one pooled node per graph, hit the 1-row train constraint), so it
        // joins the previous batch
        let merged_tail: Vec<usize>;
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            let tail = batches.pop().expect("checked non-empty");
            let prev = batches.pop().expect("len > 1");
            merged_tail = prev.iter().chain(tail).copied().collect();
            batches.push(&merged_tail);
        }
        for chunk in batches {
            let graphs: Vec<_> = chunk.iter().map(|&id| &dataset.graphs[id]).collect();
            let batch = batch_graphs(&graphs)?;
            let mut tape = Tape::new();
            let logits = model.logits(&mut tape, &batch, Mode::Train, &mut train_rng)?;
            let loss = tape.cross_entropy(logits, &batch.labels)?;
            let loss_value = tape.value(loss).get(0, 0);
            if !loss_value.is_finite() {
                return Err(Error::Divergence(format!(
                    "fold {} epoch {epoch}: loss {loss_value}; aborting fold",
                    fold.fold_index
                )));
            }
            tape.backward(loss)?;
            tape.collect_param_grads(model.params_mut());
            adam_step(model.params_mut(), lr);
            for &id in chunk {
                contributions[id] += 1;
            }
        }
        epoch_accuracy.push(evaluate_accuracy(
            &mut model,
            dataset,
            &fold.validation_ids,
        )?);
    }
    Ok((epoch_accuracy, contributions))
}

/// Stratified k-fold training. Folds run in parallel; each owns its model,
/// parameters, and random streams, so the result is identical to a
/// sequential run with the same seed.
pub fn train_cv(config: &ExperimentConfig, dataset: &Dataset) -> Result<(CVResult, TrainTrace)> {
    config.validate()?;
    let started = Instant::now();
    let folds = stratified_kfold(dataset, config.folds, config.seed)?;
    let root = Rng::new(config.seed);

    let outcomes: Vec<Result<(Vec<f64>, Vec<u64>)>> = folds
        .par_iter()
        .map(|fold| train_fold(config, dataset, fold, &root.stream(fold.fold_index as u64)))
        .collect();
    let mut curves = Vec::with_capacity(folds.len());
    let mut contributions = Vec::with_capacity(folds.len());
    for outcome in outcomes {
        let (curve, contrib) = outcome?;
        curves.push(curve);
        contributions.push(contrib);
    }

    // epoch with the best fold-averaged validation accuracy, earliest on ties
    let epochs = curves[0].len();
    let mean_curve: Vec<f64> = (0..epochs)
        .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
        .collect();
    let selected_epoch = mean_curve
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0;

    let per_fold: Vec<f64> = match config.epoch_select {
        EpochSelect::Mean => curves.iter().map(|c| c[selected_epoch]).collect(),
        EpochSelect::PerFold => curves
            .iter()
            .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    };
    let (mean, std) = mean_std(&per_fold);

    let result = CVResult {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.name.clone(),
        model: config.model_name(),
        config: config.clone(),
        per_fold_epoch_accuracy: curves,
        selected_epoch,
        mean_accuracy: mean,
        std_accuracy: std,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((
        result,
        TrainTrace {
            grad_contributions: contributions,
        },
    ))
}

/// Sweeps the hidden-units × batch-size grid and returns the configuration
/// with the best mean accuracy (first on ties, in grid order).
pub fn grid_search(
    base: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<(ExperimentConfig, CVResult)> {
    let mut best: Option<(ExperimentConfig, CVResult)> = None;
    for &hidden in &GRID_HIDDEN {
        for &batch in &GRID_BATCH {
            let mut config = base.clone();
            config.hidden = hidden;
            config.batch_size = batch;
            let (result, _) = train_cv(&config, dataset)?;
            let better = match &best {
                None => true,
                Some((_, b)) => result.mean_accuracy > b.mean_accuracy,
            };
            if better {
                best = Some((config, result));
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}
