//! Devices, instances and datasets: cassette encoding, CSV ingestion, the
//! synthetic generator and fold assignment.

mod folds;
mod io;
mod synth;

pub use folds::{assign_folds, holdout_split, Folds, Split};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, CSV_HEADER};
pub use synth::{simulate_truth, synth_generate, GroundTruth, SynthSpec, TruthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Component names per cassette slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteCatalog {
    pub blocks: Vec<Vec<String>>,
}

impl Default for CassetteCatalog {
    fn default() -> Self {
        let b = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self { blocks: vec![b(&["Pcat", "RS100", "R33"]), b(&["Pcat", "S32", "S175", "S34"])] }
    }
}

impl CassetteCatalog {
    pub fn new(blocks: Vec<Vec<String>>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::Config("every cassette block needs at least one component".into()));
        }
        for (s, b) in blocks.iter().enumerate() {
            for (i, n) in b.iter().enumerate() {
                if n.is_empty() || n.contains('-') || n.contains(',') {
                    return Err(Error::Config(format!("invalid component name `{n}` in block {s}")));
                }
                if b[..i].contains(n) {
                    return Err(Error::Config(format!("duplicate component `{n}` in block {s}")));
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Length of a group code.
    pub fn code_len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Position in the group code of component `name` of block `block`.
    pub fn offset(&self, block: usize, name: &str) -> Result<usize> {
        let b = self.blocks.get(block).ok_or_else(|| Error::Invalid(format!("no cassette block {block}")))?;
        let i = b.iter().position(|n| n == name).ok_or_else(|| Error::UnknownComponent {
            name: name.to_string(),
            block,
            valid: b.join(", "),
        })?;
        Ok(self.blocks[..block].iter().map(Vec::len).sum::<usize>() + i)
    }

    /// Multi-hot code for one component per block.
    pub fn encode_device(&self, names: &[&str]) -> Result<Vec<f64>> {
        if names.len() != self.blocks.len() {
            return Err(Error::GroupCode(format!(
                "device has {} components, catalog has {} blocks",
                names.len(),
                self.blocks.len()
            )));
        }
        let mut g = vec![0.0; self.code_len()];
        for (s, n) in names.iter().enumerate() {
            g[self.offset(s, n)?] = 1.0;
        }
        Ok(g)
    }

    /// Split a device name like `R33-S34` into its components.
    pub fn parse_device<'a>(&self, device: &'a str) -> Result<Vec<&'a str>> {
        let parts: Vec<&str> = device.split('-').collect();
        if parts.len() != self.blocks.len() {
            return Err(Error::GroupCode(format!(
                "device `{device}` should have {} `-`-separated components",
                self.blocks.len()
            )));
        }
        for (s, p) in parts.iter().enumerate() {
            self.offset(s, p)?;
        }
        Ok(parts)
    }

    pub fn encode_device_name(&self, device: &str) -> Result<Vec<f64>> {
        let parts = self.parse_device(device)?;
        self.encode_device(&parts)
    }
}

pub fn encode_device(names: &[&str], catalog: &CassetteCatalog) -> Result<Vec<f64>> {
    catalog.encode_device(names)
}

/// One experimental time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub device: String,
    pub g: Vec<f64>,
    /// `[C6, C12]` in nM.
    pub u: [f64; 2],
    pub times: Vec<f64>,
    /// Signal rows OD, RFP, YFP, CFP; each of length `times.len()`.
    pub y: [Vec<f64>; 4],
}

impl Instance {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub catalog: CassetteCatalog,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(catalog: CassetteCatalog, instances: Vec<Instance>) -> Result<Self> {
        let d = Self { catalog, instances };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, inst) in self.instances.iter().enumerate() {
            let g = self.catalog.encode_device_name(&inst.device)?;
            if g != inst.g {
                return Err(Error::GroupCode(format!("instance `{}` code does not match its device", inst.id)));
            }
            if inst.u.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
                return Err(Error::Invalid(format!("instance `{}` has a negative or non-finite treatment", inst.id)));
            }
            if inst.y.iter().any(|row| row.len() != inst.times.len()) {
                return Err(Error::Invalid(format!("instance `{}` signals do not match its time grid", inst.id)));
            }
            if self.instances[..i].iter().any(|o| o.id == inst.id) {
                return Err(Error::Invalid(format!("duplicate instance id `{}`", inst.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Distinct device names in first-appearance order.
    pub fn devices(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for i in &self.instances {
            if !out.contains(&i.device) {
                out.push(i.device.clone());
            }
        }
        out
    }

    /// Time grid shared by every instance.
    pub fn common_times(&self) -> Result<Vec<f64>> {
        let first = self.instances.first().ok_or_else(|| Error::Invalid("empty dataset".into()))?;
        for i in &self.instances {
            if i.times != first.times {
                return Err(Error::Invalid(format!(
                    "instance `{}` uses a different time grid from `{}`",
                    i.id, first.id
                )));
            }
        }
        Ok(first.times.clone())
    }
}

/// Per-signal maximum absolute value over `instances` (1 where a signal is
/// identically zero).
pub fn signal_scale<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> [f64; 4] {
    let mut m = [0.0f64; 4];
    for inst in instances {
        for (s, row) in inst.y.iter().enumerate() {
            for &v in row {
                m[s] = m[s].max(v.abs());
            }
        }
    }
    m.map(|v| if v > 0.0 { v } else { 1.0 })
}
