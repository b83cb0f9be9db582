//! Tidy output files: per-instance bounds, predictive trajectories,
//! response curves, metric logs and JSON summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::data::Instance;
use crate::dynamics::SIGNALS;
use crate::error::Result;
use crate::model::Prediction;
use crate::training::{EpochRecord, ResponsePoint};

pub const BOUNDS_HEADER: [&str; 5] = ["instance_id", "device", "C6", "C12", "bound"];
pub const PREDICTIVE_HEADER: [&str; 5] = ["instance_id", "signal", "time", "mean", "std"];
pub const RESPONSE_HEADER: [&str; 9] = ["instance_id", "C6", "C12", "signal", "observed", "mean", "std", "lower", "upper"];

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(File::create(path)?)
}

pub fn write_bounds(path: &Path, instances: &[&Instance], preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(BOUNDS_HEADER)?;
    for (i, p) in instances.iter().zip(preds) {
        w.write_record([i.id.clone(), i.device.clone(), i.u[0].to_string(), i.u[1].to_string(), p.bound.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictive(path: &Path, instances: &[&Instance], preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(PREDICTIVE_HEADER)?;
    for (i, p) in instances.iter().zip(preds) {
        for (s, name) in SIGNALS.iter().enumerate() {
            for (t, time) in i.times.iter().enumerate() {
                w.write_record([
                    i.id.clone(),
                    name.to_string(),
                    time.to_string(),
                    p.mean[s][t].to_string(),
                    p.std[s][t].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Final-time predictive mean with a ±2 std band per treatment.
pub fn write_response(path: &Path, points: &[ResponsePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(RESPONSE_HEADER)?;
    for p in points {
        w.write_record([
            p.instance_id.clone(),
            p.c6.to_string(),
            p.c12.to_string(),
            p.signal.clone(),
            p.observed.to_string(),
            p.mean.to_string(),
            p.std.to_string(),
            (p.mean - 2.0 * p.std).to_string(),
            (p.mean + 2.0 * p.std).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Append-or-create newline-delimited JSON metric log.
pub struct MetricLog {
    out: BufWriter<File>,
}

impl MetricLog {
    pub fn create(path: &Path, append: bool) -> Result<Self> {
        let f = if append {
            std::fs::OpenOptions::new().create(true).append(true).open(path)?
        } else {
            create(path)?
        };
        Ok(Self { out: BufWriter::new(f) })
    }

    pub fn write(&mut self, rec: &EpochRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Per-signal values keyed by signal name.
pub fn by_signal(v: [f64; 4]) -> std::collections::BTreeMap<String, f64> {
    SIGNALS.iter().map(|s| s.to_string()).zip(v).collect()
}
