//! Cross-validation folds and held-out-device splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Instance indices used for fitting and for evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fold index of every instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    pub assignment: Vec<usize>,
    pub n_folds: usize,
}

impl Folds {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_folds];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    pub fn split(&self, fold: usize) -> Split {
        let (test, train) = (0..self.assignment.len()).partition(|&i| self.assignment[i] == fold);
        Split { train, test }
    }
}

/// Stratified assignment: each device's instances are shuffled and the
/// concatenation is dealt round-robin, so every device is spread evenly over
/// the folds.
pub fn assign_folds(dataset: &Dataset, n_folds: usize, seed: u64) -> Result<Folds> {
    if n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
    }
    if dataset.len() < n_folds {
        return Err(Error::Config(format!("{} instances cannot fill {n_folds} folds", dataset.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(dataset.len());
    for device in dataset.devices() {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.instances[i].device == device).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    let mut assignment = vec![0; dataset.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % n_folds;
    }
    Ok(Folds { assignment, n_folds })
}

/// Hold out every instance of `device`. Each of its cassette components must
/// appear in some training device, otherwise its group parameters are not
/// identifiable from the training data.
pub fn holdout_split(dataset: &Dataset, device: &str) -> Result<Split> {
    let parts = dataset.catalog.parse_device(device)?;
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.instances[i].device == device);
    if test.is_empty() {
        return Err(Error::Identifiability { device: device.to_string(), msg: "no instances in the dataset".into() });
    }
    if train.is_empty() {
        return Err(Error::Identifiability { device: device.to_string(), msg: "no training devices remain".into() });
    }
    for (block, name) in parts.iter().enumerate() {
        let seen = train.iter().any(|&i| {
            let other = &dataset.instances[i].device;
            dataset.catalog.parse_device(other).map(|p| p[block] == *name).unwrap_or(false)
        });
        if !seen {
            return Err(Error::Identifiability {
                device: device.to_string(),
                msg: format!("cassette `{name}` never appears in a training device"),
            });
        }
    }
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CassetteCatalog, Instance};

    fn toy(devices: &[(&str, usize)]) -> Dataset {
        let c = CassetteCatalog::default();
        let mut inst = Vec::new();
        for (d, n) in devices {
            for k in 0..*n {
                inst.push(Instance {
                    id: format!("{d}-{k}"),
                    device: d.to_string(),
                    g: c.encode_device_name(d).unwrap(),
                    u: [0.0, 0.0],
                    times: vec![0.0],
                    y: [vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
                });
            }
        }
        Dataset::new(c, inst).unwrap()
    }

    #[test]
    fn equal_fold_sizes() {
        let d = toy(&[("Pcat-Pcat", 52), ("R33-S34", 52), ("R33-S175", 52), ("RS100-S34", 52), ("RS100-S32", 52), ("R33-S32", 52)]);
        let f = assign_folds(&d, 4, 0).unwrap();
        assert_eq!(f.sizes(), vec![78; 4]);
    }

    #[test]
    fn holdout_guard() {
        let d = toy(&[("R33-S175", 2), ("RS100-S34", 2), ("R33-S34", 2)]);
        let s = holdout_split(&d, "R33-S34").unwrap();
        assert_eq!(s.test, vec![4, 5]);
        assert_eq!(s.train, vec![0, 1, 2, 3]);
        let d = toy(&[("R33-S175", 2), ("Pcat-Pcat", 2)]);
        assert!(matches!(holdout_split(&d, "Pcat-Pcat"), Err(Error::Identifiability { .. })));
        assert!(holdout_split(&d, "R33-S34").is_err());
    }

    #[test]
    fn one_fold_rejected() {
        assert!(assign_folds(&toy(&[("Pcat-Pcat", 3)]), 1, 0).is_err());
    }
}
