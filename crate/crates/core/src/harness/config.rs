//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! dataset.kind = blobs            # blobs | smooth | idx
//! dataset.n_per_class = 100
//! model.hidden = 16               # comma-separated hidden sizes
//! federation.transform = adadefense
//! attack.methods = analytic-fc, grad-match
//! run.seed = 1
//! ```
//!
//! Every key has a default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{AttackConfig, AttackMethod, Distance};
use crate::defense::TransformKind;
use crate::error::{Error, Result};
use crate::fedsim::RoundConfig;
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    /// Gaussian blobs on scaled unit axes.
    Blobs { n_per_class: usize, dims: usize, classes: usize, spread: f64, scale: f64 },
    /// Smooth synthetic `size x size` images in `[0, 1]` with random labels.
    Smooth { count: usize, size: usize, classes: usize },
    /// IDX image/label files, block-downsampled by `downsample`.
    Idx { images: PathBuf, labels: PathBuf, downsample: usize, limit: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub federation: RoundConfig,
    pub clients: usize,
    pub rounds: u64,
    pub attack: AttackConfig,
    pub methods: Vec<AttackMethod>,
    pub defenses: Vec<TransformKind>,
    pub seed: u64,
    pub seeds: usize,
    pub output: PathBuf,
    /// Directory holding the dumps consumed by `attack` (defaults to `output`).
    pub attack_input: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::Smooth { count: 64, size: 8, classes: 4 },
            hidden: vec![16],
            activation: Activation::Tanh,
            federation: RoundConfig {
                local_iterations: 5,
                batch_size: 16,
                ..RoundConfig::new(TransformKind::AdaDefense)
            },
            clients: 4,
            rounds: 50,
            attack: AttackConfig { distance: Distance::Cosine, ..AttackConfig::default() },
            methods: vec![AttackMethod::AnalyticFc, AttackMethod::GradMatch],
            defenses: vec![TransformKind::Identity, TransformKind::AdaDefense],
            seed: 0,
            seeds: 3,
            output: PathBuf::from("out"),
            attack_input: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::Config(format!("{key} = '{raw}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Splits the text into `key -> value`, rejecting malformed or repeated keys.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", lineno + 1)))?;
        let key = key.trim().to_ascii_lowercase();
        if !key.contains('.') {
            return Err(Error::Config(format!("line {}: key '{key}' has no section", lineno + 1)));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        let mut cfg = ExperimentConfig::default();
        let mut take = |key: &str| pairs.remove(key);

        let kind = take("dataset.kind").unwrap_or_else(|| "smooth".into());
        cfg.dataset = match kind.as_str() {
            "blobs" => DatasetConfig::Blobs {
                n_per_class: take("dataset.n_per_class").map(|v| parse_value("dataset.n_per_class", &v)).transpose()?.unwrap_or(100),
                dims: take("dataset.dims").map(|v| parse_value("dataset.dims", &v)).transpose()?.unwrap_or(8),
                classes: take("dataset.classes").map(|v| parse_value("dataset.classes", &v)).transpose()?.unwrap_or(4),
                spread: take("dataset.spread").map(|v| parse_value("dataset.spread", &v)).transpose()?.unwrap_or(0.5),
                scale: take("dataset.scale").map(|v| parse_value("dataset.scale", &v)).transpose()?.unwrap_or(2.0),
            },
            "smooth" => DatasetConfig::Smooth {
                count: take("dataset.count").map(|v| parse_value("dataset.count", &v)).transpose()?.unwrap_or(64),
                size: take("dataset.size").map(|v| parse_value("dataset.size", &v)).transpose()?.unwrap_or(8),
                classes: take("dataset.classes").map(|v| parse_value("dataset.classes", &v)).transpose()?.unwrap_or(4),
            },
            "idx" => DatasetConfig::Idx {
                images: take("dataset.images")
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config("dataset.images is required for idx".into()))?,
                labels: take("dataset.labels")
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config("dataset.labels is required for idx".into()))?,
                downsample: take("dataset.downsample").map(|v| parse_value("dataset.downsample", &v)).transpose()?.unwrap_or(1),
                limit: take("dataset.limit").map(|v| parse_value("dataset.limit", &v)).transpose()?,
            },
            other => return Err(Error::Config(format!("unknown dataset.kind '{other}'"))),
        };

        if let Some(v) = take("model.hidden") {
            cfg.hidden = parse_list("model.hidden", &v)?;
        }
        if let Some(v) = take("model.activation") {
            cfg.activation = parse_value("model.activation", &v)?;
        }

        if let Some(v) = take("federation.transform") {
            let t: TransformKind = parse_value("federation.transform", &v)?;
            cfg.federation = RoundConfig {
                transform: t,
                server_lr: RoundConfig::new(t).server_lr,
                ..cfg.federation
            };
        }
        let f = &mut cfg.federation;
        if let Some(v) = take("federation.local_iterations") {
            f.local_iterations = parse_value("federation.local_iterations", &v)?;
        }
        if let Some(v) = take("federation.batch_size") {
            f.batch_size = parse_value("federation.batch_size", &v)?;
        }
        if let Some(v) = take("federation.local_lr") {
            f.local_lr = parse_value("federation.local_lr", &v)?;
        }
        if let Some(v) = take("federation.server_lr") {
            f.server_lr = parse_value("federation.server_lr", &v)?;
        }
        if let Some(v) = take("federation.clients") {
            cfg.clients = parse_value("federation.clients", &v)?;
        }
        if let Some(v) = take("federation.rounds") {
            cfg.rounds = parse_value("federation.rounds", &v)?;
        }

        let a = &mut cfg.attack;
        if let Some(v) = take("attack.distance") {
            a.distance = parse_value("attack.distance", &v)?;
        }
        if let Some(v) = take("attack.iterations") {
            a.iterations = parse_value("attack.iterations", &v)?;
        }
        if let Some(v) = take("attack.step_size") {
            a.step_size = parse_value("attack.step_size", &v)?;
        }
        if let Some(v) = take("attack.finite_diff_h") {
            a.finite_diff_h = parse_value("attack.finite_diff_h", &v)?;
        }
        if let Some(v) = take("attack.methods") {
            cfg.methods = parse_list("attack.methods", &v)?;
        }
        if let Some(v) = take("attack.defenses") {
            cfg.defenses = parse_list("attack.defenses", &v)?;
        }
        if let Some(v) = take("attack.input") {
            cfg.attack_input = Some(PathBuf::from(v));
        }

        if let Some(v) = take("run.seed") {
            cfg.seed = parse_value("run.seed", &v)?;
        }
        if let Some(v) = take("run.seeds") {
            cfg.seeds = parse_value("run.seeds", &v)?;
        }
        if let Some(v) = take("run.output") {
            cfg.output = PathBuf::from(v);
        }

        if let Some(key) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        if self.clients == 0 {
            return Err(Error::Config("federation.clients must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("federation.rounds must be >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("run.seeds must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("model.hidden sizes must be positive".into()));
        }
        if self.methods.is_empty() || self.defenses.is_empty() {
            return Err(Error::Config("attack.methods and attack.defenses must be non-empty".into()));
        }
        self.federation.validate().map_err(wrap)?;
        self.attack.validate().map_err(wrap)?;
        match &self.dataset {
            DatasetConfig::Idx { images, labels, downsample, .. } => {
                for p in [images, labels] {
                    if !p.exists() {
                        return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                    }
                }
                if *downsample == 0 {
                    return Err(Error::Config("dataset.downsample must be >= 1".into()));
                }
            }
            DatasetConfig::Blobs { classes, n_per_class, dims, .. } => {
                if *classes < 2 || *n_per_class == 0 || *dims == 0 {
                    return Err(Error::Config("blobs need classes >= 2 and positive sizes".into()));
                }
            }
            DatasetConfig::Smooth { count, size, classes } => {
                if *count == 0 || *size == 0 || *classes < 2 {
                    return Err(Error::Config("smooth images need positive sizes and classes >= 2".into()));
                }
            }
        }
        Ok(())
    }
}
