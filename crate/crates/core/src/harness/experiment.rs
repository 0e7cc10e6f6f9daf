//! The runs behind the CLI subcommands: federated training, round-one
//! gradient dumps, attacks on dumps, and the defense-efficacy table.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DatasetConfig, ExperimentConfig};
use super::data::{downsample, gen_blobs, gen_smooth_image};
use super::dump::{DumpContent, DumpHeader, GradientDump};
use super::idx::load_idx;
use super::pgm::write_pgm;
use crate::attacks::{self, AttackMethod, AttackReport};
use crate::error::{Error, Result};
use crate::fedsim::{self, ClientState, RoundConfig, RunHistory, StandinMessage};
use crate::metrics::{self, ImagePair, Quality};
use crate::nn::{init_params, GradientSet, MlpSpec, Params, Sample};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// `(rows, cols)` of the image each input vector encodes.
    pub image_shape: (usize, usize),
    /// Intensity range of the original data; network inputs are divided by it.
    pub value_range: f64,
    pub classes: usize,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        self.image_shape.0 * self.image_shape.1
    }

    /// Network-space vector back to an image in the original intensity range.
    pub fn to_image(&self, x: &Tensor) -> Result<Tensor> {
        x.map(|v| v * self.value_range)
            .reshape(vec![self.image_shape.0, self.image_shape.1])
    }
}

/// Label of a smooth image: which of `classes` equal row-major bands of
/// pixels has the largest mean.
fn brightest_band(pixels: &[f64], classes: usize) -> usize {
    let mut sums = vec![(0.0, 0usize); classes];
    for (i, &p) in pixels.iter().enumerate() {
        let band = i * classes / pixels.len();
        sums[band].0 += p;
        sums[band].1 += 1;
    }
    let means: Vec<f64> = sums.iter().map(|&(s, n)| s / n as f64).collect();
    crate::nn::argmax(&means)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        &DatasetConfig::Blobs { n_per_class, dims, classes, spread, scale } => Ok(Dataset {
            name: format!("blobs-{dims}d-{classes}c"),
            train: gen_blobs(n_per_class, dims, classes, spread, scale, cfg.seed)?,
            test: gen_blobs(n_per_class.div_ceil(2), dims, classes, spread, scale, cfg.seed.wrapping_add(1))?,
            image_shape: (1, dims),
            value_range: 1.0,
            classes,
        }),
        &DatasetConfig::Smooth { count, size, classes } => {
            if classes < 2 || classes > size * size {
                return Err(Error::Config(format!("dataset.classes must be in 2..={}", size * size)));
            }
            let make = |n: usize, offset: u64| -> Result<Vec<Sample>> {
                (0..n)
                    .map(|i| {
                        let x = gen_smooth_image(size, size, offset + i as u64)?.reshape(vec![size * size])?;
                        Ok(Sample { label: brightest_band(x.data(), classes), x })
                    })
                    .collect()
            };
            let base = cfg.seed.wrapping_mul(1_000_003);
            let train = make(count, base)?;
            let test = make(count.div_ceil(4), base.wrapping_add(count as u64))?;
            Ok(Dataset {
                name: format!("smooth-{size}x{size}"),
                train,
                test,
                image_shape: (size, size),
                value_range: 1.0,
                classes,
            })
        }
        DatasetConfig::Idx { images, labels, downsample: k, limit } => {
            let mut samples = load_idx(images, labels)?;
            if let Some(n) = limit {
                samples.truncate(*n);
            }
            if samples.is_empty() {
                return Err(Error::Config("IDX dataset is empty".into()));
            }
            let mut shape = (0, 0);
            let mut converted = Vec::with_capacity(samples.len());
            for s in samples {
                let small = downsample(&s.x, *k)?;
                shape = (small.shape()[0], small.shape()[1]);
                let n = small.len();
                converted.push(Sample { x: small.map(|v| v / 255.0).reshape(vec![n])?, label: s.label });
            }
            let classes = converted.iter().map(|s| s.label).max().unwrap() + 1;
            let split = converted.len() - converted.len() / 5;
            let test = converted.split_off(split);
            Ok(Dataset {
                name: format!("idx-{}x{}", shape.0, shape.1),
                train: converted,
                test,
                image_shape: shape,
                value_range: 255.0,
                classes: classes.max(2),
            })
        }
    }
}

pub fn model_spec(cfg: &ExperimentConfig, ds: &Dataset) -> Result<MlpSpec> {
    let mut sizes = vec![ds.input_dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(ds.classes);
    MlpSpec::new(sizes, cfg.activation)
}

/// Federated training with the configured transform.
pub fn run_training(cfg: &ExperimentConfig) -> Result<RunHistory> {
    let ds = load_dataset(cfg)?;
    let spec = model_spec(cfg, &ds)?;
    let init = init_params(&spec, cfg.seed);
    let mut clients = fedsim::make_clients(ds.train.clone(), cfg.clients, &init, cfg.seed)?;
    fedsim::run_federation(&mut clients, &spec, init, &cfg.federation, cfg.rounds, &ds.test)
}

pub fn write_history_csv(history: &RunHistory, cfg: &ExperimentConfig, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "transform", "train_loss", "test_accuracy", "payload_norm"])?;
    for r in &history.records {
        w.write_record([
            r.round.to_string(),
            cfg.federation.transform.to_string(),
            r.train_loss.to_string(),
            r.test_accuracy.to_string(),
            r.payload_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Round-one message of a client whose shard is the single `sample`.
fn batch_one_message(
    cfg: &ExperimentConfig,
    spec: &MlpSpec,
    params: &Params,
    sample: &Sample,
    transform: crate::defense::TransformKind,
    seed: u64,
) -> Result<StandinMessage> {
    let mut client = ClientState::new(0, vec![sample.clone()], params, seed)?;
    let round_cfg = RoundConfig { batch_size: 1, transform, ..cfg.federation };
    fedsim::local_round(&mut client, spec, params, &round_cfg, 1)
}

fn pick_target(ds: &Dataset, seed: u64) -> &Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A26_E7D1);
    &ds.train[rng.random_range(0..ds.train.len())]
}

/// Runs one attack against `payload`. Analytic reconstruction with no usable
/// row yields an all-zero guess.
fn run_attack(
    method: AttackMethod,
    cfg: &ExperimentConfig,
    spec: &MlpSpec,
    params: &Params,
    payload: &GradientSet,
    seed: u64,
) -> Result<AttackReport> {
    match method {
        AttackMethod::AnalyticFc => {
            let first = &payload.layers()[0];
            let reconstruction = match attacks::analytic_fc_reconstruct(&first.weight, &first.bias) {
                Ok(x) => x,
                Err(Error::NoUsableRow(_)) => Tensor::zeros(vec![spec.input_dim()]),
                Err(e) => return Err(e),
            };
            let label = attacks::infer_label_sign(payload.layers().last().unwrap().bias.data());
            Ok(AttackReport { reconstruction, label, trace: Vec::new(), quality: None })
        }
        AttackMethod::LabelSign => {
            let label = attacks::infer_label_sign(payload.layers().last().unwrap().bias.data());
            Ok(AttackReport {
                reconstruction: Tensor::zeros(vec![spec.input_dim()]),
                label,
                trace: Vec::new(),
                quality: None,
            })
        }
        AttackMethod::GradMatch => {
            let attack_cfg = crate::attacks::AttackConfig { method, seed, ..cfg.attack };
            attacks::grad_match_attack(payload, spec, params, &attack_cfg, None)
        }
    }
}

fn score(ds: &Dataset, truth: &Tensor, reconstruction: &Tensor) -> Result<Quality> {
    let t = ds.to_image(truth)?;
    let r = ds.to_image(reconstruction)?;
    metrics::quality(&ImagePair::new(&t, &r, ds.value_range)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub method: AttackMethod,
    pub model: String,
    pub dataset: String,
    pub defense: String,
    pub quality: Quality,
    pub seed: u64,
}

/// Defense-efficacy table: every (seed, defense, method) combination attacks
/// a batch-one round-one message from a fresh client.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    if cfg.methods.contains(&AttackMethod::LabelSign) {
        return Err(Error::Config(
            "label-sign has no reconstruction to score; use the attack subcommand".into(),
        ));
    }
    let ds = load_dataset(cfg)?;
    let spec = model_spec(cfg, &ds)?;
    let per_seed = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let params = init_params(&spec, seed);
            let target = pick_target(&ds, seed);
            let mut rows = Vec::new();
            for &defense in &cfg.defenses {
                let msg = batch_one_message(cfg, &spec, &params, target, defense, seed)?;
                for &method in &cfg.methods {
                    let report = run_attack(method, cfg, &spec, &params, &msg.payload, seed)?;
                    rows.push(ExperimentRow {
                        method,
                        model: spec.name(),
                        dataset: ds.name.clone(),
                        defense: defense.to_string(),
                        quality: score(&ds, &target.x, &report.reconstruction)?,
                        seed,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn write_experiment_csv(rows: &[ExperimentRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "model", "dataset", "defense", "mse", "psnr", "ssim", "seed"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.model.clone(),
            r.dataset.clone(),
            r.defense.clone(),
            r.quality.mse.to_string(),
            r.quality.psnr.to_string(),
            r.quality.ssim.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const GRADS_FILE: &str = "grads.bin";
pub const PARAMS_FILE: &str = "params.bin";
pub const TRUTH_FILE: &str = "truth.bin";

/// Writes the round-one batch-one message of client 0 (with the configured
/// transform), the global parameters, and the ground-truth sample.
pub fn dump_round_one(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ds = load_dataset(cfg)?;
    let spec = model_spec(cfg, &ds)?;
    let params = init_params(&spec, cfg.seed);
    let target = pick_target(&ds, cfg.seed);
    let transform = cfg.federation.transform;
    let msg = batch_one_message(cfg, &spec, &params, target, transform, cfg.seed)?;

    let header = DumpHeader {
        content: DumpContent::Gradients,
        transform,
        spec_hash: spec.fingerprint(),
        round: 1,
        client_id: msg.client_id as u64,
        label: None,
    };
    GradientDump::from_params(header.clone(), &msg.payload).write(&dir.join(GRADS_FILE))?;
    GradientDump::from_params(
        DumpHeader { content: DumpContent::Parameters, round: 0, ..header.clone() },
        &params,
    )
    .write(&dir.join(PARAMS_FILE))?;
    GradientDump {
        header: DumpHeader { content: DumpContent::Sample, label: Some(target.label as u64), ..header },
        tensors: vec![target.x.clone()],
    }
    .write(&dir.join(TRUTH_FILE))?;
    write_pgm(&ds.to_image(&target.x)?, ds.value_range, &dir.join("truth.pgm"))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub method: AttackMethod,
    pub defense: String,
    pub inferred_label: usize,
    pub true_label: usize,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub quality: Option<Quality>,
    pub seed: u64,
}

fn read_dump(path: &Path, content: DumpContent, spec: &MlpSpec) -> Result<GradientDump> {
    let dump = GradientDump::read(path)?;
    if dump.header.content != content {
        return Err(Error::Format(format!("{} holds {:?}, expected {content:?}", path.display(), dump.header.content)));
    }
    if dump.header.spec_hash != spec.fingerprint() {
        return Err(Error::Format(format!(
            "{} was written for a different model than {}",
            path.display(),
            spec.name()
        )));
    }
    Ok(dump)
}

/// Attacks the dumps in `input` with every configured method, writing
/// `attack.csv` and reconstructions to `out`.
pub fn attack_dumps(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<Vec<AttackRow>> {
    let ds = load_dataset(cfg)?;
    let spec = model_spec(cfg, &ds)?;
    let grads_dump = read_dump(&input.join(GRADS_FILE), DumpContent::Gradients, &spec)?;
    let grads = grads_dump.to_params()?;
    let params = read_dump(&input.join(PARAMS_FILE), DumpContent::Parameters, &spec)?.to_params()?;
    let truth_dump = read_dump(&input.join(TRUTH_FILE), DumpContent::Sample, &spec)?;
    let truth = truth_dump
        .tensors
        .first()
        .ok_or_else(|| Error::Format("sample dump holds no tensor".into()))?;
    let true_label = truth_dump.header.label.unwrap_or(u64::MAX) as usize;
    grads.check_congruent(&params)?;
    if !params.conforms(&spec) {
        return Err(Error::Format("dumped parameters do not match the configured model".into()));
    }

    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let report = run_attack(method, cfg, &spec, &params, &grads, cfg.seed)?;
        let quality = match method {
            AttackMethod::LabelSign => None,
            _ => {
                write_pgm(
                    &ds.to_image(&report.reconstruction)?,
                    ds.value_range,
                    &out.join(format!("recon_{method}.pgm")),
                )?;
                Some(score(&ds, truth, &report.reconstruction)?)
            }
        };
        rows.push(AttackRow {
            method,
            defense: grads_dump.header.transform.to_string(),
            inferred_label: report.label,
            true_label,
            iterations: report.trace.len(),
            final_objective: report.final_objective(),
            quality,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

pub fn write_attack_csv(rows: &[AttackRow], out: impl Write) -> Result<()> {
    let na = || "na".to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "defense",
        "inferred_label",
        "true_label",
        "iterations",
        "final_objective",
        "mse",
        "psnr",
        "ssim",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.defense.clone(),
            r.inferred_label.to_string(),
            r.true_label.to_string(),
            r.iterations.to_string(),
            r.final_objective.map_or_else(na, |v| v.to_string()),
            r.quality.map_or_else(na, |q| q.mse.to_string()),
            r.quality.map_or_else(na, |q| q.psnr.to_string()),
            r.quality.map_or_else(na, |q| q.ssim.to_string()),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
