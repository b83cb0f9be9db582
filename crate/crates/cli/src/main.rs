use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hds_core::config::ExperimentConfig;
use hds_core::data::{save_dataset, synth_generate, Instance};
use hds_core::report::{self, MetricLog};
use hds_core::training::{self, Checkpoint};
use hds_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hds", version, about = "Amortised inference for hierarchical ODE models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the training (or, for `synth`, data) seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output_dir` from the config, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset and its ground truth.
    Synth(Common),
    /// Train on every instance of the configured dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue a previous run.
        #[arg(long)]
        from_checkpoint: Option<PathBuf>,
    },
    /// K-fold cross-validation.
    Crossval(Common),
    /// Hold out one device, train on the rest and predict it.
    Holdout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        device: String,
    },
    /// Bounds and predictive trajectories for every instance under a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn setup(c: &Common, seed_is_data: bool) -> Result<Ctx> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        if seed_is_data {
            cfg.data.seed = Some(s);
        } else {
            cfg.training.seed = s;
        }
    }
    let out = c.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    Ok(Ctx { cfg, out })
}

fn cmd_synth(c: &Common) -> Result<()> {
    let ctx = setup(c, true)?;
    let (d, truth) = synth_generate(&ctx.cfg.data.synth, &ctx.cfg.catalog()?, ctx.cfg.data_seed())?;
    save_dataset(&d, &ctx.out.join("dataset.csv"))?;
    report::write_json(&ctx.out.join("ground_truth.json"), &truth)?;
    log::info!("wrote {} instances to {}", d.len(), ctx.out.display());
    Ok(())
}

fn cmd_train(c: &Common, from: Option<&Path>) -> Result<()> {
    let ctx = setup(c, false)?;
    let d = ctx.cfg.dataset()?;
    let resume = from.map(Checkpoint::load).transpose()?;
    let all: Vec<usize> = (0..d.len()).collect();
    let mut log = MetricLog::create(&ctx.out.join("metrics.ndjson"), resume.is_some())?;
    let run = training::train(&ctx.cfg, &d, &all, ctx.cfg.training.seed, resume, &mut |r| log.write(r))?;
    run.checkpoint.save(&ctx.out.join("checkpoint.json"))
}

fn instances<'a>(d: &'a hds_core::data::Dataset, idx: &[usize]) -> Vec<&'a Instance> {
    idx.iter().map(|&i| &d.instances[i]).collect()
}

fn cmd_crossval(c: &Common) -> Result<()> {
    let ctx = setup(c, false)?;
    let d = ctx.cfg.dataset()?;
    let n = ctx.cfg.training.n_folds;
    let mut logs = (0..n)
        .map(|f| MetricLog::create(&ctx.out.join(format!("fold{f}")).join("metrics.ndjson"), false))
        .collect::<Result<Vec<_>>>()?;
    let cv = training::crossvalidate(&ctx.cfg, &d, &mut |f, r| logs[f].write(r))?;
    let mut folds = Vec::new();
    let (mut all, mut preds) = (Vec::new(), Vec::new());
    for r in &cv.results {
        let dir = ctx.out.join(format!("fold{}", r.fold));
        r.run.checkpoint.save(&dir.join("checkpoint.json"))?;
        let test = instances(&d, &r.test);
        report::write_bounds(&dir.join("bounds.csv"), &test, &r.predictions)?;
        folds.push(json!({
            "fold": r.fold,
            "n_train": r.train.len(),
            "n_test": r.test.len(),
            "mean_bound": r.mean_bound,
            "rmse": report::by_signal(r.rmse),
        }));
        all.extend(test);
        preds.extend(r.predictions.iter().cloned());
    }
    report::write_bounds(&ctx.out.join("bounds.csv"), &all, &preds)?;
    report::write_predictive(&ctx.out.join("predictive.csv"), &all, &preds)?;
    let assignment: serde_json::Map<String, serde_json::Value> =
        d.instances.iter().zip(&cv.folds.assignment).map(|(i, f)| (i.id.clone(), json!(f))).collect();
    report::write_json(
        &ctx.out.join("summary.json"),
        &json!({
            "config_hash": ctx.cfg.hash(),
            "folds": folds,
            "pooled_mean_bound": cv.pooled_mean,
            "pooled_rmse": report::by_signal(cv.pooled_rmse),
            "assignment": assignment,
        }),
    )?;
    log::info!("pooled test bound {:.4}", cv.pooled_mean);
    Ok(())
}

fn cmd_holdout(c: &Common, device: &str) -> Result<()> {
    let ctx = setup(c, false)?;
    let d = ctx.cfg.dataset()?;
    let mut log = MetricLog::create(&ctx.out.join("metrics.ndjson"), false)?;
    let h = training::heldout_eval(&ctx.cfg, &d, device, &mut |r| log.write(r))?;
    h.run.checkpoint.save(&ctx.out.join("checkpoint.json"))?;
    let test = instances(&d, &h.test);
    report::write_bounds(&ctx.out.join("bounds.csv"), &test, &h.predictions)?;
    report::write_predictive(&ctx.out.join("predictive.csv"), &test, &h.predictions)?;
    report::write_response(&ctx.out.join("response_curve.csv"), &h.response)?;
    let groups: serde_json::Map<String, serde_json::Value> =
        h.group_means.iter().map(|(n, v)| (n.clone(), json!(v))).collect();
    report::write_json(
        &ctx.out.join("summary.json"),
        &json!({
            "config_hash": ctx.cfg.hash(),
            "device": h.device,
            "n_test": h.test.len(),
            "mean_bound": h.mean_bound,
            "rmse": report::by_signal(h.rmse),
            "group_posterior_means": groups,
            "composition_exact": h.composition_exact,
        }),
    )?;
    Ok(())
}

fn cmd_eval(c: &Common, checkpoint: &Path) -> Result<()> {
    let ctx = setup(c, false)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.model()?;
    let d = ctx.cfg.dataset()?;
    let all: Vec<&Instance> = d.instances.iter().collect();
    let preds = training::evaluate(&model, &ckpt, &all, ctx.cfg.training.seed)?;
    report::write_bounds(&ctx.out.join("bounds.csv"), &all, &preds)?;
    report::write_predictive(&ctx.out.join("predictive.csv"), &all, &preds)?;
    let mean = preds.iter().map(|p| p.bound).sum::<f64>() / preds.len().max(1) as f64;
    report::write_json(
        &ctx.out.join("summary.json"),
        &json!({ "n": preds.len(), "mean_bound": mean, "rmse": report::by_signal(training::rmse(&all, &preds)) }),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HDS_LOG", "info")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Synth(c) => cmd_synth(c),
        Cmd::Train { common, from_checkpoint } => cmd_train(common, from_checkpoint.as_deref()),
        Cmd::Crossval(c) => cmd_crossval(c),
        Cmd::Holdout { common, device } => cmd_holdout(common, device),
        Cmd::Eval { common, checkpoint } => cmd_eval(common, checkpoint),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
