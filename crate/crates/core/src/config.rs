//! Flat `key = value` experiment files for the `train` subcommand.
//!
//! ```text
//! # lines starting with '#' are ignored
//! config = 4422
//! base_channels = 16
//! dataset = images/train      # relative to this file
//! out = runs/4422
//! seed = 1
//! noise = gaussian
//! sigma = 30
//! ```
//!
//! Recognized keys: `config`, `base_channels`, `residual`, `model`,
//! `dataset`, `dataset_name`, `pattern`, `grayscale`, `out`, `seed`,
//! `noise`, `sigma`, `clip`, `target_psnr`, `lr`, `halve_every`, `epochs`,
//! `steps_per_epoch`, `batch_size`, `patch_size`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{DatasetName, DatasetSpec};
use crate::error::{Error, Result};
use crate::network::{StageConfig, DEFAULT_BASE_CHANNELS};
use crate::noise::NoiseModel;
use crate::train::TrainPlan;

const KEYS: [&str; 20] = [
    "config",
    "base_channels",
    "residual",
    "model",
    "dataset",
    "dataset_name",
    "pattern",
    "grayscale",
    "out",
    "seed",
    "noise",
    "sigma",
    "clip",
    "target_psnr",
    "lr",
    "halve_every",
    "epochs",
    "steps_per_epoch",
    "batch_size",
    "patch_size",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stage: StageConfig,
    /// Start from this saved model instead of a fresh initialization.
    pub model: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub plan: TrainPlan,
    /// Calibrate σ so the noisy training images reach this PSNR.
    pub target_psnr: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {raw:?}"
        ))),
    }
}

impl ExperimentConfig {
    /// Parses `text`; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {k:?}",
                    n + 1
                )));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let path = |k: &str| -> Result<PathBuf> {
            let v = get(k).ok_or_else(|| Error::Config(format!("missing required key {k:?}")))?;
            Ok(base_dir.join(v))
        };

        let seed = get("seed").map_or(Ok(0), |v| parse_value("seed", v))?;
        let base = get("base_channels").map_or(Ok(DEFAULT_BASE_CHANNELS), |v| {
            parse_value("base_channels", v)
        })?;
        let residual = get("residual").map_or(Ok(false), |v| parse_bool("residual", v))?;
        let stage =
            StageConfig::new(get("config").unwrap_or("4422"), base)?.with_residual(residual);

        let root = path("dataset")?;
        let dataset = DatasetSpec {
            name: get("dataset_name")
                .map(DatasetName::from_label)
                .unwrap_or_else(|| DatasetSpec::from_dir(&root).name),
            root,
            pattern: get("pattern").unwrap_or("*").to_string(),
            grayscale: get("grayscale").map_or(Ok(true), |v| parse_bool("grayscale", v))?,
        };

        let defaults = TrainPlan::default();
        let mut noise = defaults.noise.with_seed(seed);
        if let Some(v) = get("noise") {
            noise.model = NoiseModel::from_str(v)?;
        }
        if let Some(v) = get("sigma") {
            noise.sigma = parse_value("sigma", v)?;
        }
        if let Some(v) = get("clip") {
            noise.clip = parse_bool("clip", v)?;
        }
        let num = |k: &str, d: usize| get(k).map_or(Ok(d), |v| parse_value(k, v));
        let plan = TrainPlan {
            base_lr: get("lr").map_or(Ok(defaults.base_lr), |v| parse_value("lr", v))?,
            halve_every: num("halve_every", defaults.halve_every)?,
            epochs: num("epochs", defaults.epochs)?,
            steps_per_epoch: num("steps_per_epoch", defaults.steps_per_epoch)?,
            batch_size: num("batch_size", defaults.batch_size)?,
            patch_size: num("patch_size", defaults.patch_size)?,
            noise,
            seed,
        };

        let config = Self {
            stage,
            model: get("model").map(|v| base_dir.join(v)),
            dataset,
            plan,
            target_psnr: get("target_psnr")
                .map(|v| parse_value("target_psnr", v))
                .transpose()?,
            out: path("out")?,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Checks the plan and that every referenced input path exists.
    pub fn validate(&self) -> Result<()> {
        self.plan.validate(self.stage.input_multiple())?;
        if !self.dataset.root.is_dir() {
            return Err(Error::Config(format!(
                "dataset directory {} does not exist",
                self.dataset.root.display()
            )));
        }
        if let Some(m) = &self.model {
            if !m.is_file() {
                return Err(Error::Config(format!(
                    "model {} does not exist",
                    m.display()
                )));
            }
        }
        Ok(())
    }
}
