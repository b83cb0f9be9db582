//! Experiment configuration (TOML). One file determines a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, synth_generate, CassetteCatalog, Dataset, SynthSpec};
use crate::dynamics::whitebox::{GROUP, INDIVIDUAL, POPULATION};
use crate::dynamics::{BlackBoxConfig, ModelKind, SIGNALS};
use crate::error::{Error, Result};
use crate::objective::Estimator;
use crate::posterior::{Block, DistKind, EncoderConfig, LatentLayout, LatentSpec, PriorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// One standard deviation per signal, a population latent.
    #[default]
    Constant,
    /// Variance trajectories from the learned noise networks (black-box only).
    TimeVarying,
}

/// How the white-box initial cell density is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialDensity {
    /// Individual latent `c0`.
    #[default]
    Latent,
    /// First observed OD value (floored at [`OBSERVED_DENSITY_FLOOR`]).
    Observed,
}

pub const OBSERVED_DENSITY_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub noise: NoiseKind,
    pub substeps: usize,
    pub initial_density: InitialDensity,
    pub estimator: Estimator,
    pub blackbox: BlackBoxConfig,
    /// White-box parameters held at a fixed value instead of inferred.
    pub fixed: BTreeMap<String, f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Whitebox,
            noise: NoiseKind::Constant,
            substeps: 4,
            initial_density: InitialDensity::Latent,
            estimator: Estimator::Dreg,
            blackbox: BlackBoxConfig::default(),
            fixed: BTreeMap::new(),
        }
    }
}

/// Prior entry as written in the config. The block is implied by the model
/// and may be given only as a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<Block>,
    pub kind: DistKind,
    pub mean: f64,
    pub std: f64,
}

impl PriorEntry {
    pub fn lognormal(median: f64, std: f64) -> Self {
        Self { block: None, kind: DistKind::Lognormal, mean: median.ln(), std }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        Self { block: None, kind: DistKind::Normal, mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub k_train: usize,
    pub k_eval: usize,
    /// Samples per tape during evaluation.
    pub eval_chunk: usize,
    /// Instances per tape during training; micro-batches run in parallel.
    pub micro_batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub n_folds: usize,
    /// Abort when the gradient norm exceeds this.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 36,
            k_train: 100,
            k_eval: 1000,
            eval_chunk: 250,
            micro_batch: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            n_folds: 4,
            max_grad_norm: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Long-format CSV. When absent the synthetic generator provides the data.
    pub path: Option<PathBuf>,
    /// Cassette components per block; the default R/S catalog when absent.
    pub catalog: Option<Vec<Vec<String>>>,
    /// Generator seed; falls back to the training seed.
    pub seed: Option<u64>,
    pub synth: SynthSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, catalog: None, seed: None, synth: SynthSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Entries read from TOML override the defaults for the model kind.
    #[serde(default)]
    pub prior: BTreeMap<String, PriorEntry>,
    pub encoder: EncoderConfig,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub output_dir: Option<PathBuf>,
    /// Directory a relative `data.path` is resolved against; set by [`Self::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            prior: whitebox_priors(),
            encoder: EncoderConfig::default(),
            training: TrainConfig::default(),
            data: DataConfig::default(),
            output_dir: None,
            base_dir: None,
        }
    }
}

/// Placeholder white-box priors centred on the synthetic generator's truth.
pub fn whitebox_priors() -> BTreeMap<String, PriorEntry> {
    let truth = crate::data::TruthSpec::default();
    let mut p = BTreeMap::new();
    for (name, &v) in &truth.population {
        let e = match name.as_str() {
            "n_R" | "n_S" => PriorEntry::lognormal(v - 1.0, 0.1),
            "eps76" | "eps81" => PriorEntry::normal((v / (1.0 - v)).ln(), 0.1),
            _ => PriorEntry::lognormal(v, 0.1),
        };
        p.insert(name.clone(), e);
    }
    for name in GROUP {
        p.insert(name.to_string(), PriorEntry::lognormal(1.0, 1.0));
    }
    for (name, &v) in &truth.individual {
        p.insert(name.clone(), PriorEntry::lognormal(v, 0.3));
    }
    for s in SIGNALS {
        p.insert(format!("sigma_{s}"), PriorEntry::lognormal(0.05, 0.5));
    }
    p
}

/// Standard-normal priors for every black-box latent plus the noise scales.
pub fn blackbox_priors(bb: &BlackBoxConfig) -> BTreeMap<String, PriorEntry> {
    let mut p = BTreeMap::new();
    for (prefix, n) in [("zP", bb.n_p), ("zG", bb.n_g), ("zI", bb.n_i)] {
        for i in 0..n {
            p.insert(format!("{prefix}{i}"), PriorEntry::normal(0.0, 1.0));
        }
    }
    for s in SIGNALS {
        p.insert(format!("sigma_{s}"), PriorEntry::lognormal(0.05, 0.5));
    }
    p
}

impl ExperimentConfig {
    pub fn blackbox() -> Self {
        let model = ModelConfig { kind: ModelKind::Blackbox, ..Default::default() };
        Self { prior: blackbox_priors(&model.blackbox), model, ..Default::default() }
    }

    /// Default priors for the configured model, restricted to its latents.
    pub fn default_priors(&self) -> BTreeMap<String, PriorEntry> {
        let mut p = match self.model.kind {
            ModelKind::Whitebox => whitebox_priors(),
            ModelKind::Blackbox => blackbox_priors(&self.model.blackbox),
        };
        let names: Vec<String> = self.latent_names().into_iter().map(|(n, _)| n).collect();
        p.retain(|k, _| names.contains(k));
        p
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let mut prior = cfg.default_priors();
        prior.append(&mut cfg.prior);
        cfg.prior = prior;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; a relative `data.path` is taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// `data.path` resolved against the config's directory.
    pub fn data_path(&self) -> Option<PathBuf> {
        let p = self.data.path.as_ref()?;
        Some(match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn catalog(&self) -> Result<CassetteCatalog> {
        match &self.data.catalog {
            Some(b) => CassetteCatalog::new(b.clone()),
            None => Ok(CassetteCatalog::default()),
        }
    }

    /// The configured CSV, or a freshly generated synthetic dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        let catalog = self.catalog()?;
        match self.data_path() {
            Some(p) => load_dataset(&p, &catalog),
            None => Ok(synth_generate(&self.data.synth, &catalog, self.data_seed())?.0),
        }
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.training.seed)
    }

    /// Latent names and blocks for the configured model, in layout order.
    pub fn latent_names(&self) -> Vec<(String, Block)> {
        let mut out = Vec::new();
        let free = |n: &str| !self.model.fixed.contains_key(n);
        match self.model.kind {
            ModelKind::Whitebox => {
                out.extend(POPULATION.iter().filter(|n| free(n)).map(|n| (n.to_string(), Block::Population)));
                out.extend(GROUP.iter().filter(|n| free(n)).map(|n| (n.to_string(), Block::Group)));
                out.extend(INDIVIDUAL.iter().filter(|n| free(n)).map(|n| (n.to_string(), Block::Individual)));
                if self.model.initial_density == InitialDensity::Latent && free("c0") {
                    out.push(("c0".to_string(), Block::Individual));
                }
            }
            ModelKind::Blackbox => {
                let bb = &self.model.blackbox;
                for (prefix, n, b) in
                    [("zP", bb.n_p, Block::Population), ("zG", bb.n_g, Block::Group), ("zI", bb.n_i, Block::Individual)]
                {
                    out.extend((0..n).map(|i| (format!("{prefix}{i}"), b)));
                }
            }
        }
        if self.model.noise == NoiseKind::Constant {
            // Noise scales come after the model's population latents.
            let at = out.iter().rposition(|(_, b)| *b == Block::Population).map_or(0, |i| i + 1);
            let sig: Vec<_> = SIGNALS
                .iter()
                .map(|s| format!("sigma_{s}"))
                .filter(|n| free(n))
                .map(|n| (n, Block::Population))
                .collect();
            out.splice(at..at, sig);
        }
        out
    }

    pub fn layout(&self) -> Result<LatentLayout> {
        let specs = self
            .latent_names()
            .into_iter()
            .map(|(name, block)| {
                let e = self
                    .prior
                    .get(&name)
                    .ok_or_else(|| Error::Config(format!("latent `{name}` has no prior entry")))?;
                if e.block.is_some_and(|b| b != block) {
                    return Err(Error::Config(format!("prior `{name}` is declared in the wrong block")));
                }
                Ok(LatentSpec { name, prior: PriorSpec { block, kind: e.kind, mean: e.mean, std: e.std } })
            })
            .collect::<Result<_>>()?;
        LatentLayout::new(specs)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.substeps == 0 {
            return Err(Error::Config("model.substeps must be at least 1".into()));
        }
        match m.kind {
            ModelKind::Whitebox => {
                if m.noise == NoiseKind::TimeVarying {
                    return Err(Error::Config("time-varying noise requires the black-box model".into()));
                }
            }
            ModelKind::Blackbox => {
                m.blackbox.validate()?;
                if !m.fixed.keys().all(|k| k.starts_with("sigma_")) {
                    return Err(Error::Config("only noise scales can be fixed in the black-box model".into()));
                }
            }
        }
        let known: Vec<String> = self.latent_names().into_iter().map(|(n, _)| n).collect();
        for name in self.prior.keys() {
            if !known.contains(name) {
                return Err(Error::Config(format!(
                    "prior for unknown or fixed latent `{name}`; expected one of: {}",
                    known.join(", ")
                )));
            }
        }
        let fixable = |n: &str| {
            POPULATION.contains(&n) || GROUP.contains(&n) || INDIVIDUAL.contains(&n) || n == "c0" || n.starts_with("sigma_")
        };
        for (name, v) in &m.fixed {
            if !fixable(name) || (name.starts_with("sigma_") && !SIGNALS.iter().any(|s| name == &format!("sigma_{s}"))) {
                return Err(Error::Config(format!("cannot fix unknown parameter `{name}`")));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("fixed value of `{name}` is not finite")));
            }
        }
        if m.initial_density == InitialDensity::Observed && m.fixed.contains_key("c0") {
            return Err(Error::Config("c0 cannot be fixed when the initial density is observed".into()));
        }
        self.layout()?;
        self.catalog()?;
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || t.k_train == 0 || t.k_eval == 0 || t.eval_chunk == 0 || t.micro_batch == 0 {
            return Err(Error::Config("training counts must be positive".into()));
        }
        if !(t.lr > 0.0) || !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || !(t.adam_eps > 0.0) {
            return Err(Error::Config("invalid Adam settings".into()));
        }
        if t.n_folds < 2 {
            return Err(Error::Config("training.n_folds must be at least 2".into()));
        }
        if !(self.encoder.l2 >= 0.0) {
            return Err(Error::Config("encoder.l2 must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the configuration with `training.epochs` cleared, so a run
    /// can be extended from its checkpoint.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.training.epochs = 0;
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
