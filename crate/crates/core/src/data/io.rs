//! Long-format CSV: one row per instance and time point.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{CassetteCatalog, Dataset, Instance};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = ["instance_id", "device", "C6", "C12", "time", "OD", "RFP", "YFP", "CFP"];

pub fn write_dataset<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for inst in &dataset.instances {
        for (t, time) in inst.times.iter().enumerate() {
            out.write_record([
                inst.id.clone(),
                inst.device.clone(),
                inst.u[0].to_string(),
                inst.u[1].to_string(),
                time.to_string(),
                inst.y[0][t].to_string(),
                inst.y[1][t].to_string(),
                inst.y[2][t].to_string(),
                inst.y[3][t].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_dataset(dataset, File::create(path)?)
}

fn schema(row: usize, column: &str, msg: impl Into<String>) -> Error {
    Error::Schema { row, column: column.to_string(), msg: msg.into() }
}

/// Parse a dataset. Row numbers in errors are 1-based file lines (the header
/// is line 1).
pub fn read_dataset<R: Read>(r: R, catalog: &CassetteCatalog) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    let mut col = [0usize; 9];
    for (i, name) in CSV_HEADER.iter().enumerate() {
        col[i] = header
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| schema(1, name, "missing column"))?;
    }
    let mut instances: Vec<Instance> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 2;
        let rec = rec.map_err(|e| schema(row, "*", e.to_string()))?;
        let field = |i: usize| rec.get(col[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            let s = field(i);
            let v: f64 = s.parse().map_err(|_| schema(row, CSV_HEADER[i], format!("`{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(schema(row, CSV_HEADER[i], "value is not finite"));
            }
            Ok(v)
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(schema(row, "instance_id", "empty"));
        }
        let device = field(1).to_string();
        let g = catalog
            .encode_device_name(&device)
            .map_err(|e| schema(row, "device", e.to_string()))?;
        let u = [num(2)?, num(3)?];
        if u.iter().any(|&c| c < 0.0) {
            return Err(schema(row, if u[0] < 0.0 { "C6" } else { "C12" }, "negative concentration"));
        }
        let time = num(4)?;
        let ys = [num(5)?, num(6)?, num(7)?, num(8)?];
        let inst = match instances.iter_mut().rposition(|i| i.id == id) {
            Some(p) if p + 1 == instances.len() => &mut instances[p],
            Some(_) => return Err(schema(row, "instance_id", format!("rows of `{id}` are not contiguous"))),
            None => {
                instances.push(Instance { id: id.clone(), device: device.clone(), g, u, times: vec![], y: Default::default() });
                instances.last_mut().unwrap()
            }
        };
        if inst.device != device {
            return Err(schema(row, "device", format!("instance `{id}` changes device")));
        }
        if inst.u != u {
            return Err(schema(row, "C6", format!("instance `{id}` changes treatment")));
        }
        if let Some(&last) = inst.times.last() {
            if !(time > last) {
                return Err(schema(row, "time", "times must be strictly increasing within an instance"));
            }
        }
        inst.times.push(time);
        for (s, v) in ys.into_iter().enumerate() {
            inst.y[s].push(v);
        }
    }
    Dataset::new(catalog.clone(), instances)
}

pub fn load_dataset(path: &Path, catalog: &CassetteCatalog) -> Result<Dataset> {
    read_dataset(File::open(path)?, catalog)
}
