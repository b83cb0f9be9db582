//! Synthetic datasets from the white-box model with known parameters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CassetteCatalog, Dataset, Instance};
use crate::dynamics::whitebox::{self, WhiteBoxParams};
use crate::dynamics::{observe, ModelKind};
use crate::error::{Error, Result};
use crate::solver::{simulate, TimeGrid};

fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Placeholder "true" parameters for synthetic studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSpec {
    pub population: BTreeMap<String, f64>,
    /// Medians of the per-instance parameters `r, K, t_lag, r_c, c0`.
    pub individual: BTreeMap<String, f64>,
    /// Log-scale standard deviation of per-instance variation.
    pub spread: f64,
    /// `a_R` per component of the first cassette block.
    pub a_r: BTreeMap<String, f64>,
    /// `a_S` per component of the second cassette block.
    pub a_s: BTreeMap<String, f64>,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            population: map(&[
                ("d_RFP", 0.2),
                ("d_CFP", 0.3),
                ("d_YFP", 0.3),
                ("d_R", 0.5),
                ("d_S", 0.5),
                ("a_CFP", 1.0),
                ("a_YFP", 1.0),
                ("a_480", 0.05),
                ("a_530", 0.05),
                ("K_R6", 0.05),
                ("K_R12", 0.001),
                ("K_S6", 0.0005),
                ("K_S12", 0.02),
                ("n_R", 1.5),
                ("n_S", 1.5),
                ("K_GR76", 0.01),
                ("K_GS76", 1e-4),
                ("K_GR81", 1e-4),
                ("K_GS81", 0.01),
                ("eps76", 0.05),
                ("eps81", 0.05),
            ]),
            individual: map(&[("r", 1.0), ("K", 1.0), ("t_lag", 2.5), ("r_c", 10.0), ("c0", 0.01)]),
            spread: 0.1,
            a_r: map(&[("Pcat", 1.0), ("RS100", 0.3), ("R33", 3.0)]),
            a_s: map(&[("Pcat", 1.0), ("S32", 0.4), ("S175", 2.0), ("S34", 4.0)]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub devices: Vec<String>,
    /// C6 dilution series (C12 = 0).
    pub c6: Vec<f64>,
    /// C12 dilution series (C6 = 0).
    pub c12: Vec<f64>,
    pub n_times: usize,
    pub t_end: f64,
    /// Noise std per signal as a fraction of that signal's noiseless maximum.
    pub noise_frac: f64,
    pub substeps: usize,
    pub truth: TruthSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let series = vec![0.0, 0.5, 5.0, 50.0, 500.0, 5000.0];
        Self {
            devices: ["Pcat-Pcat", "RS100-S32", "RS100-S34", "R33-S32", "R33-S175", "R33-S34"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            c6: series.clone(),
            c12: series,
            n_times: 50,
            t_end: 24.0,
            noise_frac: 0.05,
            substeps: 8,
            truth: TruthSpec::default(),
        }
    }
}

impl SynthSpec {
    pub fn treatments(&self) -> Vec<[f64; 2]> {
        self.c6.iter().map(|&c| [c, 0.0]).chain(self.c12.iter().map(|&c| [0.0, c])).collect()
    }
}

/// Everything needed to regenerate the noiseless signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub substeps: usize,
    /// Injected noise std per signal (OD, RFP, YFP, CFP).
    pub noise_sigma: BTreeMap<String, f64>,
    pub population: BTreeMap<String, f64>,
    /// Per-cassette values: `a_R` by first-block component, `a_S` by second.
    pub cassettes: BTreeMap<String, BTreeMap<String, f64>>,
    /// Resolved group parameters per device.
    pub devices: BTreeMap<String, BTreeMap<String, f64>>,
    /// Per-instance `r, K, t_lag, r_c, c0`.
    pub instances: BTreeMap<String, BTreeMap<String, f64>>,
}

impl GroundTruth {
    pub fn sigma(&self) -> [f64; 4] {
        crate::dynamics::SIGNALS.map(|s| self.noise_sigma.get(s).copied().unwrap_or(f64::NAN))
    }

    pub fn params_for(&self, inst: &Instance) -> Result<(WhiteBoxParams<f64>, f64)> {
        let ind = self
            .instances
            .get(&inst.id)
            .ok_or_else(|| Error::Invalid(format!("no ground truth for instance `{}`", inst.id)))?;
        let dev = self
            .devices
            .get(&inst.device)
            .ok_or_else(|| Error::Invalid(format!("no ground truth for device `{}`", inst.device)))?;
        let p = WhiteBoxParams::try_from_fn(|n| {
            ind.get(n).or_else(|| dev.get(n)).or_else(|| self.population.get(n)).copied()
        })?;
        let c0 = *ind.get("c0").ok_or_else(|| Error::Invalid("ground truth lacks c0".into()))?;
        Ok((p, c0))
    }
}

/// Noiseless white-box signals for `inst` under its recorded truth.
pub fn simulate_truth(truth: &GroundTruth, inst: &Instance) -> Result<[Vec<f64>; 4]> {
    let (p, c0) = truth.params_for(inst)?;
    simulate_signals(&p, c0, inst.u, &inst.times, truth.substeps)
}

fn simulate_signals(p: &WhiteBoxParams<f64>, c0: f64, u: [f64; 2], times: &[f64], substeps: usize) -> Result<[Vec<f64>; 4]> {
    let grid = TimeGrid::new(times.to_vec(), substeps)?;
    let kin = whitebox::Kinetics::new(*p, u[0], u[1]);
    let mut x0 = vec![0.0; whitebox::N_STATES];
    x0[whitebox::C] = c0;
    let traj = simulate(|t, x: &[f64]| kin.rhs(t, x), x0, &grid)?;
    let mut y: [Vec<f64>; 4] = Default::default();
    for s in &traj.states {
        let obs = observe(s, ModelKind::Whitebox)?;
        for (row, v) in y.iter_mut().zip(obs) {
            row.push(v);
        }
    }
    Ok(y)
}

fn group_truth(spec: &TruthSpec, catalog: &CassetteCatalog, device: &str) -> Result<BTreeMap<String, f64>> {
    let parts = catalog.parse_device(device)?;
    if parts.len() != 2 {
        return Err(Error::Config("synthetic generator expects two cassette blocks".into()));
    }
    let get = |m: &BTreeMap<String, f64>, k: &str, name: &str| {
        m.get(k).copied().ok_or_else(|| Error::Config(format!("synthetic truth lacks {name} for `{k}`")))
    };
    Ok(map(&[("a_R", get(&spec.a_r, parts[0], "a_R")?), ("a_S", get(&spec.a_s, parts[1], "a_S")?)]))
}

/// Simulate every (device, treatment) pair, add Gaussian noise, and return
/// the dataset with its ground truth. Deterministic in `seed`.
pub fn synth_generate(spec: &SynthSpec, catalog: &CassetteCatalog, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if spec.n_times < 2 || !(spec.t_end > 0.0) {
        return Err(Error::Config("synthetic grid needs at least 2 times and t_end > 0".into()));
    }
    if !(spec.noise_frac >= 0.0) || !(spec.truth.spread >= 0.0) {
        return Err(Error::Config("noise_frac and spread must be non-negative".into()));
    }
    let grid = TimeGrid::equispaced(0.0, spec.t_end, spec.n_times, spec.substeps)?;
    let times = grid.times().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut devices = BTreeMap::new();
    let mut ind_truth = BTreeMap::new();
    let mut instances = Vec::new();
    let mut clean = Vec::new();
    for device in &spec.devices {
        let g = catalog.encode_device_name(device)?;
        let group = group_truth(&spec.truth, catalog, device)?;
        devices.insert(device.clone(), group.clone());
        for (k, u) in spec.treatments().into_iter().enumerate() {
            let id = format!("{device}-u{k:02}");
            let mut ind = BTreeMap::new();
            for name in ["r", "K", "t_lag", "r_c", "c0"] {
                let median = *spec
                    .truth
                    .individual
                    .get(name)
                    .ok_or_else(|| Error::Config(format!("synthetic truth lacks individual `{name}`")))?;
                ind.insert(name.to_string(), median * (spec.truth.spread * normal()).exp());
            }
            let p = WhiteBoxParams::try_from_fn(|n| {
                ind.get(n).or_else(|| group.get(n)).or_else(|| spec.truth.population.get(n)).copied()
            })
            .map_err(|e| Error::Config(e.to_string()))?;
            p.validate()?;
            let y = simulate_signals(&p, ind["c0"], u, &times, spec.substeps)?;
            clean.push(y.clone());
            instances.push(Instance { id: id.clone(), device: device.clone(), g: g.clone(), u, times: times.clone(), y });
            ind_truth.insert(id, ind);
        }
    }

    let mut sigma = [0.0f64; 4];
    for y in &clean {
        for (s, row) in y.iter().enumerate() {
            sigma[s] = sigma[s].max(row.iter().fold(0.0, |a: f64, &v| a.max(v.abs())));
        }
    }
    let sigma = sigma.map(|m| m * spec.noise_frac);
    for inst in &mut instances {
        for (s, row) in inst.y.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v += sigma[s] * normal();
            }
        }
    }

    let mut cassettes = BTreeMap::new();
    cassettes.insert("a_R".to_string(), spec.truth.a_r.clone());
    cassettes.insert("a_S".to_string(), spec.truth.a_s.clone());
    let truth = GroundTruth {
        seed,
        substeps: spec.substeps,
        noise_sigma: crate::dynamics::SIGNALS.iter().zip(sigma).map(|(k, v)| (k.to_string(), v)).collect(),
        population: spec.truth.population.clone(),
        cassettes,
        devices,
        instances: ind_truth,
    };
    Ok((Dataset::new(catalog.clone(), instances)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            devices: vec!["R33-S34".into(), "Pcat-S32".into()],
            c6: vec![0.0, 50.0],
            c12: vec![5.0],
            n_times: 12,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_matches_observer() {
        let spec = SynthSpec { noise_frac: 0.0, ..small() };
        let (d, truth) = synth_generate(&spec, &CassetteCatalog::default(), 3).unwrap();
        assert_eq!(d.len(), 6);
        for inst in &d.instances {
            assert_eq!(simulate_truth(&truth, inst).unwrap(), inst.y);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let c = CassetteCatalog::default();
        let a = synth_generate(&small(), &c, 9).unwrap();
        let b = synth_generate(&small(), &c, 9).unwrap();
        assert_eq!(a, b);
        let other = synth_generate(&small(), &c, 10).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn od_is_nondecreasing() {
        let spec = SynthSpec { noise_frac: 0.0, ..small() };
        let (d, _) = synth_generate(&spec, &CassetteCatalog::default(), 1).unwrap();
        for inst in &d.instances {
            assert!(inst.y[0].windows(2).all(|w| w[1] >= w[0]), "{}", inst.id);
        }
    }

    #[test]
    fn unknown_device_is_rejected() {
        let spec = SynthSpec { devices: vec!["R9-S34".into()], ..small() };
        assert!(synth_generate(&spec, &CassetteCatalog::default(), 1).is_err());
    }
}
