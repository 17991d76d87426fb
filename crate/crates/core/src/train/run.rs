use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::metrics::{metrics, MetricsReport, OVERALL};
use super::optim::{adam_step, clip_global_norm, sgd_step, AdamState, Optimizer};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tape;

/// One line of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss of the epoch (normalised units, dropout active).
    pub train_mae: f64,
    /// Validation MAE in normalised units; `None` without validation windows.
    pub val_mae: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MAE (training MAE
    /// when there is no validation split).
    pub best: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Writes the history as CSV with columns `epoch, train_mae, val_mae, wall_ms`.
pub fn write_history_csv<W: Write>(history: &[EpochRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Config(format!("writing history: {e}"));
    out.write_record(["epoch", "train_mae", "val_mae", "wall_ms"]).map_err(err)?;
    for r in history {
        out.write_record([
            r.epoch.to_string(),
            r.train_mae.to_string(),
            r.val_mae.map_or_else(String::new, |v| v.to_string()),
            r.wall_ms.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::Config(format!("writing history: {e}")))
}

fn strided(len: usize, stride: usize) -> Vec<usize> {
    (0..len).step_by(stride).collect()
}

/// Rounds every parameter to the nearest `f32` so checkpoints hold the
/// exact training state.
fn quantize(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Minimises the MAE loss on the training windows with minibatches drawn in
/// a seeded shuffled order, keeping the parameters of the best validation
/// epoch.
pub fn train(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&model, data)?;
    let train_idx = strided(data.windows.len(Split::Train), cfg.window_stride);
    if train_idx.is_empty() {
        return Err(Error::InsufficientData("training split holds no windows".into()));
    }
    let val_idx = strided(data.windows.len(Split::Val), cfg.val_stride);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let mut flat = model.params.flatten();
    quantize(&mut flat);
    model.params.assign_flat(&flat)?;
    let mut adam = AdamState::new(flat.len());
    let adam_cfg = cfg.adam();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // Batch membership is random; order within a batch is not, so the
            // loss of a given batch does not depend on the shuffle.
            let mut chunk = chunk.to_vec();
            chunk.sort_unstable();
            let (x, y) = data.windows.batch(Split::Train, &chunk)?;
            let mut tape = Tape::new();
            let coords = |e: Error| match e {
                Error::Numeric { context } => Error::Numeric {
                    context: format!("epoch {epoch} batch {bi}: {context}"),
                },
                other => other,
            };
            let out = model.forward(&mut tape, &x, &data.graph, true, &mut rng).map_err(coords)?;
            let loss = tape.mae_loss(out.pred, &y).map_err(coords)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Numeric {
                    context: format!("epoch {epoch} batch {bi}: loss is {lv}"),
                });
            }
            tape.backward(loss).map_err(coords)?;
            let mut grads = Vec::with_capacity(flat.len());
            out.params.visit(|_, v| match tape.grad(*v) {
                Some(g) => grads.extend_from_slice(g.data()),
                None => grads.extend(std::iter::repeat_n(0.0, tape.value(*v).len())),
            });
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            match cfg.optimizer {
                Optimizer::Adam => adam_step(&mut flat, &grads, &mut adam, &adam_cfg),
                Optimizer::Sgd => sgd_step(&mut flat, &grads, cfg.learning_rate),
            }
            quantize(&mut flat);
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    context: format!("epoch {epoch} batch {bi}: parameters became non-finite"),
                });
            }
            model.params.assign_flat(&flat)?;
            loss_sum += lv * chunk.len() as f64;
        }
        let train_mae = loss_sum / order.len() as f64;
        let val_mae = if val_idx.is_empty() {
            None
        } else {
            Some(normalized_mae(&model, data, Split::Val, &val_idx, cfg.batch_size)?)
        };
        history.push(EpochRecord {
            epoch,
            train_mae,
            val_mae,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        log::info!(
            "epoch {epoch}: train_mae {train_mae:.5} val_mae {}",
            val_mae.map_or_else(|| "-".into(), |v| format!("{v:.5}"))
        );
        let score = val_mae.unwrap_or(train_mae);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
        if let (Some(p), Some((_, be, _))) = (cfg.patience, &best) {
            if epoch - be >= p {
                log::info!("no validation improvement for {p} epochs, stopping");
                break;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// Checks that the model's modalities and window lengths fit `data`.
pub fn check_compatible(model: &Model, data: &Dataset) -> Result<()> {
    model.config.check_graph(&data.graph)?;
    let c = &model.config;
    let w = &data.windows;
    if (c.input_len, c.horizon, c.features) != (w.input_len(), w.horizon(), w.features()) {
        return Err(Error::Config(format!(
            "model expects P={} Q={} F={}, data windows have P={} Q={} F={}",
            c.input_len,
            c.horizon,
            c.features,
            w.input_len(),
            w.horizon(),
            w.features()
        )));
    }
    Ok(())
}

/// Evaluation-mode predictions and targets for `samples` of `split`, both
/// flattened `[S, Q, N_M, F]` in normalised units.
pub fn predict_split(
    model: &Model,
    data: &Dataset,
    split: Split,
    samples: &[usize],
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_compatible(model, data)?;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let (x, y) = data.windows.batch(split, chunk)?;
        pred.extend_from_slice(model.predict(&x, &data.graph)?.data());
        truth.extend_from_slice(y.data());
    }
    Ok((pred, truth))
}

fn normalized_mae(model: &Model, data: &Dataset, split: Split, samples: &[usize], batch: usize) -> Result<f64> {
    let (p, y) = predict_split(model, data, split, samples, batch)?;
    Ok(p.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// Per-modality and overall metrics of denormalised flat `[S, Q, N_M, F]`
/// buffers, averaged over every horizon step.
pub fn report_from_flat(pred: &[f64], truth: &[f64], data: &Dataset) -> Result<MetricsReport> {
    let g = &data.graph;
    let f = data.features();
    let row = g.node_count() * f;
    let mut rows = Vec::with_capacity(g.modality_count() + 1);
    for m in 0..g.modality_count() {
        let r = g.range(m);
        let pick = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(row)
                .flat_map(|c| c[r.start * f..r.end * f].iter().copied())
                .collect()
        };
        rows.push((g.names[m].clone(), metrics(&pick(pred), &pick(truth))?));
    }
    rows.push((OVERALL.to_string(), metrics(pred, truth)?));
    Ok(MetricsReport { rows })
}

/// Evaluation-mode metrics on every window of `split`, in original units.
pub fn evaluate(model: &Model, data: &Dataset, split: Split) -> Result<MetricsReport> {
    let samples: Vec<usize> = (0..data.windows.len(split)).collect();
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!("{} split holds no windows", split.name())));
    }
    let (pred, truth) = predict_split(model, data, split, &samples, 64)?;
    let f = data.features();
    let pred = data.normalizer.denormalize_joint(&pred, f, &data.graph);
    let truth = data.normalizer.denormalize_joint(&truth, f, &data.graph);
    report_from_flat(&pred, &truth, data)
}

/// Predicts each node's training-span mean at every horizon step.
pub fn historical_average(data: &Dataset, split: Split) -> Result<MetricsReport> {
    let w = &data.windows;
    let row = w.nodes() * w.features();
    let train = w.bounds().train.clone();
    if train.is_empty() {
        return Err(Error::InsufficientData("historical average needs a training span".into()));
    }
    let mut mean = vec![0.0; row];
    for t in train.clone() {
        for (m, v) in mean.iter_mut().zip(&w.values()[t * row..(t + 1) * row]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    let samples: Vec<usize> = (0..w.len(split)).collect();
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!("{} split holds no windows", split.name())));
    }
    let mut truth = Vec::new();
    for chunk in samples.chunks(256) {
        truth.extend_from_slice(w.batch(split, chunk)?.1.data());
    }
    let pred: Vec<f64> = (0..truth.len()).map(|i| mean[i % row]).collect();
    let f = w.features();
    let pred = data.normalizer.denormalize_joint(&pred, f, &data.graph);
    let truth = data.normalizer.denormalize_joint(&truth, f, &data.graph);
    report_from_flat(&pred, &truth, data)
}
