use serde::Serialize;

use super::{evaluate, rmse, train, Checkpoint, EpochRecord, TrainRun};
use crate::config::ExperimentConfig;
use crate::data::{assign_folds, holdout_split, Dataset, Folds, Instance};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub run: TrainRun,
    pub predictions: Vec<Prediction>,
    pub mean_bound: f64,
    pub rmse: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Folds,
    pub results: Vec<FoldResult>,
    /// Mean test bound over every instance.
    pub pooled_mean: f64,
    pub pooled_rmse: [f64; 4],
}

fn audit(run: &TrainRun, dataset: &Dataset, test: &[usize]) -> Result<()> {
    if let Some(&i) = test.iter().find(|&&i| run.gradient_ids.contains(&dataset.instances[i].id)) {
        return Err(Error::Invalid(format!("test instance `{}` contributed a gradient", dataset.instances[i].id)));
    }
    Ok(())
}

/// Train on each fold's complement, evaluate on the fold. `on_epoch`
/// receives `(fold, record)`.
pub fn crossvalidate(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    on_epoch: &mut dyn FnMut(usize, &EpochRecord) -> Result<()>,
) -> Result<CvResult> {
    let seed = cfg.training.seed;
    let folds = assign_folds(dataset, cfg.training.n_folds, seed)?;
    let mut results = Vec::new();
    for f in 0..folds.n_folds {
        let split = folds.split(f);
        log::info!("fold {f}: {} train, {} test", split.train.len(), split.test.len());
        let run = train(cfg, dataset, &split.train, seed.wrapping_add(f as u64), None, &mut |r| on_epoch(f, r))?;
        audit(&run, dataset, &split.test)?;
        let model = run.checkpoint.model()?;
        let test: Vec<&Instance> = split.test.iter().map(|&i| &dataset.instances[i]).collect();
        let predictions = evaluate(&model, &run.checkpoint, &test, seed)?;
        let mean_bound = predictions.iter().map(|p| p.bound).sum::<f64>() / test.len() as f64;
        let rmse = rmse(&test, &predictions);
        log::info!("fold {f}: test bound {mean_bound:.4}");
        results.push(FoldResult { fold: f, train: split.train, test: split.test, run, predictions, mean_bound, rmse });
    }
    let n: usize = results.iter().map(|r| r.test.len()).sum();
    let pooled_mean = results.iter().flat_map(|r| &r.predictions).map(|p| p.bound).sum::<f64>() / n as f64;
    let all: Vec<&Instance> = results.iter().flat_map(|r| r.test.iter().map(|&i| &dataset.instances[i])).collect();
    let preds: Vec<Prediction> = results.iter().flat_map(|r| r.predictions.iter().cloned()).collect();
    let pooled_rmse = rmse(&all, &preds);
    Ok(CvResult { folds, results, pooled_mean, pooled_rmse })
}

/// Final-time predictive summary of one signal for one treatment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponsePoint {
    pub instance_id: String,
    pub c6: f64,
    pub c12: f64,
    pub signal: String,
    pub observed: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct HoldoutResult {
    pub device: String,
    pub test: Vec<usize>,
    pub run: TrainRun,
    pub predictions: Vec<Prediction>,
    pub mean_bound: f64,
    pub rmse: [f64; 4],
    /// Posterior means of the group parameters composed for the held-out device.
    pub group_means: Vec<(String, f64)>,
    pub composition_exact: bool,
    pub response: Vec<ResponsePoint>,
}

/// True when every group-level quantity of `device` is bitwise the sum of
/// its cassettes' entries.
pub fn composition_is_exact(model: &Model, ckpt: &Checkpoint, device: &str) -> Result<bool> {
    let parts = model.catalog.parse_device(device)?;
    let g = model.catalog.encode_device(&parts)?;
    let rows: Vec<usize> = parts.iter().enumerate().map(|(s, p)| model.catalog.offset(s, p)).collect::<Result<_>>()?;
    for name in ["q.group.nu", "q.group.eta", "theta.group.w1", "theta.group.w2"] {
        let Some(t) = ckpt.params.get(name) else { continue };
        let ng = t.shape()[1];
        for j in 0..ng {
            let via_code = g.iter().enumerate().fold(0.0, |acc, (r, &gr)| acc + gr * t.data()[r * ng + j]);
            let via_cassettes = rows.iter().fold(0.0, |acc, &r| acc + t.data()[r * ng + j]);
            if via_code != via_cassettes {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Train on every device except `device`, then predict it zero-shot.
pub fn heldout_eval(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    device: &str,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<HoldoutResult> {
    let split = holdout_split(dataset, device)?;
    let seed = cfg.training.seed;
    let run = train(cfg, dataset, &split.train, seed, None, on_epoch)?;
    audit(&run, dataset, &split.test)?;
    let model = run.checkpoint.model()?;
    let test: Vec<&Instance> = split.test.iter().map(|&i| &dataset.instances[i]).collect();
    let predictions = evaluate(&model, &run.checkpoint, &test, seed)?;
    let mean_bound = predictions.iter().map(|p| p.bound).sum::<f64>() / test.len() as f64;
    let g = dataset.catalog.encode_device_name(device)?;
    let group_means = if model.layout.count(crate::posterior::Block::Group) > 0 {
        model.group_posterior_means(&run.checkpoint.params, &g)?
    } else {
        Vec::new()
    };
    let composition_exact = composition_is_exact(&model, &run.checkpoint, device)?;
    let mut response = Vec::new();
    for (inst, p) in test.iter().zip(&predictions) {
        let last = inst.n_times() - 1;
        for (s, name) in crate::dynamics::SIGNALS.iter().enumerate() {
            response.push(ResponsePoint {
                instance_id: inst.id.clone(),
                c6: inst.u[0],
                c12: inst.u[1],
                signal: name.to_string(),
                observed: inst.y[s][last],
                mean: p.mean[s][last],
                std: p.std[s][last],
            });
        }
    }
    Ok(HoldoutResult {
        device: device.to_string(),
        rmse: rmse(&test, &predictions),
        test: split.test,
        run,
        predictions,
        mean_bound,
        group_means,
        composition_exact,
        response,
    })
}
