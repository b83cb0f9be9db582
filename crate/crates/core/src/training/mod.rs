//! Optimisation loop, evaluation, cross-validation and held-out-device
//! protocols.

mod adam;
mod checkpoint;
mod protocols;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT};
pub use protocols::{
    composition_is_exact, crossvalidate, heldout_eval, CvResult, FoldResult, HoldoutResult, ResponsePoint,
};

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::ExperimentConfig;
use crate::data::{signal_scale, Dataset, Instance};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    /// Mean per-instance bound in nats (no L2 term).
    pub bound: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub records: Vec<EpochRecord>,
    /// Ids of every instance that contributed a gradient.
    pub gradient_ids: BTreeSet<String>,
}

/// Model for `cfg` with signal scales taken from the `train` instances.
pub fn build_model(cfg: &ExperimentConfig, dataset: &Dataset, train: &[usize]) -> Result<Model> {
    let times = dataset.common_times()?;
    let scale = signal_scale(train.iter().map(|&i| &dataset.instances[i]));
    Model::new(cfg, dataset.catalog.clone(), times, scale)
}

fn numerical(epoch: usize, batch: usize, params_norm: f64, msg: impl std::fmt::Display) -> Error {
    Error::Numerical(format!("epoch {epoch}, batch {batch}: {msg} (parameter norm {params_norm:.6e})"))
}

/// Train on `dataset.instances[train]` for `cfg.training.epochs` epochs,
/// optionally continuing from `resume`. `on_epoch` sees each record as it is
/// produced.
pub fn train(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    train: &[usize],
    seed: u64,
    resume: Option<Checkpoint>,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let tc = &cfg.training;
    let insts: Vec<&Instance> = train.iter().map(|&i| &dataset.instances[i]).collect();
    let train_ids: Vec<String> = insts.iter().map(|i| i.id.clone()).collect();
    let (model, mut ckpt) = match resume {
        Some(c) => {
            c.check_config(cfg)?;
            if c.train_ids != train_ids {
                return Err(Error::Checkpoint("checkpoint was trained on a different split".into()));
            }
            if c.epoch > tc.epochs {
                return Err(Error::Checkpoint(format!("checkpoint is at epoch {} > configured {}", c.epoch, tc.epochs)));
            }
            (c.model()?, c)
        }
        None => {
            let model = build_model(cfg, dataset, train)?;
            let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(seed))?;
            let adam = AdamState::new(&params);
            let ckpt = Checkpoint {
                format: FORMAT.to_string(),
                config_hash: cfg.hash(),
                config: cfg.clone(),
                epoch: 0,
                seed,
                catalog: model.catalog.clone(),
                times: model.grid.times().to_vec(),
                scale: model.scale,
                train_ids,
                params,
                adam,
            };
            (model, ckpt)
        }
    };
    ckpt.config = cfg.clone();
    let adam_cfg = AdamConfig::from(tc);
    let estimator = cfg.model.estimator;
    let mut records = Vec::new();
    let mut gradient_ids = BTreeSet::new();
    for epoch in ckpt.epoch..tc.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..insts.len()).collect();
        order.shuffle(&mut rng);
        let mut bound_sum = 0.0;
        for (bi, batch) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&Instance> = batch.iter().map(|&i| insts[i]).collect();
            let micro: Vec<(&[&Instance], Vec<Tensor<f64>>)> = batch
                .chunks(tc.micro_batch)
                .map(|c| (c, model.draw_noise(&mut rng, c.len(), tc.k_train)))
                .collect();
            let params = &ckpt.params;
            let results: Vec<_> = micro
                .par_iter()
                .map(|(c, eps)| model.batch_gradients(params, c, eps, estimator))
                .collect();
            let (penalty, mut grads) = model.l2_penalty(params);
            let inv_b = 1.0 / batch.len() as f64;
            let mut batch_bound = 0.0;
            for r in results {
                let (bounds, g) = r.map_err(|e| numerical(epoch + 1, bi, params.norm(), e))?;
                batch_bound += bounds.iter().sum::<f64>();
                for (acc, g) in grads.iter_mut().zip(&g) {
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a -= inv_b * v;
                    }
                }
            }
            gradient_ids.extend(batch.iter().map(|i| i.id.clone()));
            let loss = -batch_bound * inv_b + penalty;
            let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
            if !loss.is_finite() {
                return Err(numerical(epoch + 1, bi, params.norm(), format!("loss is {loss}")));
            }
            if !(norm <= tc.max_grad_norm) {
                return Err(numerical(epoch + 1, bi, params.norm(), format!("gradient norm {norm:.6e} exceeds limit")));
            }
            bound_sum += batch_bound;
            adam_step(&mut ckpt.params, &grads, &mut ckpt.adam, &adam_cfg);
        }
        ckpt.epoch = epoch + 1;
        let rec = EpochRecord {
            epoch: epoch + 1,
            split: "train".into(),
            bound: bound_sum / insts.len() as f64,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        log::info!("epoch {} train bound {:.4} ({} ms)", rec.epoch, rec.bound, rec.wall_ms);
        on_epoch(&rec)?;
        records.push(rec);
    }
    Ok(TrainRun { checkpoint: ckpt, records, gradient_ids })
}

/// Predictions for each instance, one tape per instance and `chunk`
/// samples at a time. Instance `i` uses random stream `i` of `seed`.
pub fn evaluate(model: &Model, ckpt: &Checkpoint, instances: &[&Instance], seed: u64) -> Result<Vec<Prediction>> {
    let tc = &ckpt.config.training;
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut p = model.predict(&ckpt.params, &[*inst], tc.k_eval, tc.eval_chunk, &mut rng)?;
            Ok(p.remove(0))
        })
        .collect()
}

/// Pooled per-signal RMSE of predictive means against observations.
pub fn rmse(instances: &[&Instance], preds: &[Prediction]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (s, o) in out.iter_mut().enumerate() {
        let (mut ss, mut n) = (0.0, 0usize);
        for (inst, p) in instances.iter().zip(preds) {
            for (y, m) in inst.y[s].iter().zip(&p.mean[s]) {
                ss += (y - m) * (y - m);
                n += 1;
            }
        }
        *o = if n > 0 { (ss / n as f64).sqrt() } else { f64::NAN };
    }
    out
}
