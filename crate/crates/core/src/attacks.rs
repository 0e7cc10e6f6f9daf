//! Gradient-leakage attacks used to evaluate the transforms in
//! [`crate::defense`]: closed-form input recovery from an affine layer,
//! sign-based label inference, and gradient matching.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, ImagePair, Quality};
use crate::nn::{self, GradientSet, MlpSpec, Params};
use crate::tensor::Tensor;

/// Largest input dimension the finite-difference matcher accepts.
pub const GRAD_MATCH_DIM_BUDGET: usize = 256;

/// Bias-gradient magnitude below which a row is unusable for reconstruction.
pub const ANALYTIC_ROW_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    AnalyticFc,
    LabelSign,
    GradMatch,
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMethod::AnalyticFc => "analytic-fc",
            AttackMethod::LabelSign => "label-sign",
            AttackMethod::GradMatch => "grad-match",
        })
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic-fc" | "analyticfc" => Ok(AttackMethod::AnalyticFc),
            "label-sign" | "labelsign" => Ok(AttackMethod::LabelSign),
            "grad-match" | "gradmatch" => Ok(AttackMethod::GradMatch),
            other => Err(Error::InvalidArgument(format!("unknown attack method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    L2,
    Cosine,
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::L2 => "l2",
            Distance::Cosine => "cosine",
        })
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(Distance::L2),
            "cosine" | "cosinesim" => Ok(Distance::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown distance '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub distance: Distance,
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
    pub finite_diff_h: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::GradMatch,
            distance: Distance::L2,
            iterations: 2000,
            step_size: 0.1,
            seed: 0,
            finite_diff_h: 1e-5,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("attack iterations must be >= 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidArgument("attack step size must be positive".into()));
        }
        if !(self.finite_diff_h > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub reconstruction: Tensor,
    pub label: usize,
    /// Objective value after each accepted iteration, starting at the initial point.
    pub trace: Vec<f64>,
    pub quality: Option<Quality>,
}

impl AttackReport {
    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().copied()
    }

    /// Scores the reconstruction against the ground truth, reshaping it to
    /// the truth's image shape.
    pub fn score(&mut self, truth: &Tensor, value_range: f64) -> Result<Quality> {
        let image = self.reconstruction.clone().reshape(truth.shape().to_vec())?;
        let q = metrics::quality(&ImagePair::new(truth, &image, value_range)?)?;
        self.quality = Some(q);
        Ok(q)
    }
}

/// Recovers the input of an affine layer from its batch-1 gradients: with
/// `∂L/∂W = δ xᵀ` and `∂L/∂b = δ`, any row with `δ_i ≠ 0` gives `x = ∂L/∂W_i / δ_i`.
pub fn analytic_fc_reconstruct(grad_w: &Tensor, grad_b: &Tensor) -> Result<Tensor> {
    if grad_w.shape().len() != 2 || grad_b.shape() != [grad_w.rows()] {
        return Err(Error::ShapeMismatch(format!(
            "weight gradient {:?} and bias gradient {:?} are incompatible",
            grad_w.shape(),
            grad_b.shape()
        )));
    }
    let (row, pivot) = grad_b
        .data()
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v.abs() > bv.abs() { (i, v) } else { (bi, bv) });
    if pivot.abs() < ANALYTIC_ROW_THRESHOLD {
        return Err(Error::NoUsableRow(ANALYTIC_ROW_THRESHOLD));
    }
    Tensor::vector(grad_w.row(row).iter().map(|w| w / pivot).collect())
}

/// `‖G - σ₁u₁v₁ᵀ‖_F / ‖G‖_F`, with the leading singular pair found by power
/// iteration on `GᵀG`. A zero matrix has residual 0.
pub fn rank1_residual(g: &Tensor) -> Result<f64> {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 500;

    if g.shape().len() != 2 || g.rows() < 2 || g.cols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "rank-1 residual needs a matrix with at least 2 rows and columns, got {:?}",
            g.shape()
        )));
    }
    let (rows, cols) = (g.rows(), g.cols());
    let frob = g.sum_squares().sqrt();
    if frob == 0.0 {
        return Ok(0.0);
    }

    let times = |v: &[f64]| -> Vec<f64> {
        (0..rows).map(|i| g.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    };
    let times_t = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cols];
        for (i, ui) in u.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(g.row(i)) {
                *o += a * ui;
            }
        }
        out
    };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        n
    };

    // Start from the heaviest row.
    let start = (0..rows)
        .max_by(|&a, &b| {
            let na: f64 = g.row(a).iter().map(|x| x * x).sum();
            let nb: f64 = g.row(b).iter().map(|x| x * x).sum();
            na.total_cmp(&nb)
        })
        .unwrap();
    let mut v = g.row(start).to_vec();
    normalize(&mut v);
    for _ in 0..MAX_ITER {
        let mut next = times_t(&times(&v));
        if normalize(&mut next) == 0.0 {
            break;
        }
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = next;
        if change < TOL {
            break;
        }
    }

    let gv = times(&v);
    let mut residual = 0.0;
    for i in 0..rows {
        for (j, a) in g.row(i).iter().enumerate() {
            residual += (a - gv[i] * v[j]).powi(2);
        }
    }
    Ok(residual.sqrt() / frob)
}

/// The class whose last-layer bias gradient `p - y` is negative; `argmin`
/// when that entry is not unique.
pub fn infer_label_sign(grad_b_last: &[f64]) -> usize {
    let mut negatives = grad_b_last.iter().enumerate().filter(|(_, &v)| v < 0.0);
    match (negatives.next(), negatives.next()) {
        (Some((i, _)), None) => i,
        _ => grad_b_last
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
            .0,
    }
}

/// `L2`: `Σ (a - b)²`. `Cosine`: `1 - ⟨a, b⟩ / (‖a‖ ‖b‖)` over the flattened sets.
pub fn gradient_distance(a: &GradientSet, b: &GradientSet, kind: Distance) -> Result<f64> {
    a.check_congruent(b)?;
    match kind {
        Distance::L2 => Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()),
        Distance::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b.iter()) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(Error::UndefinedDirection);
            }
            Ok(1.0 - dot / (na.sqrt() * nb.sqrt()))
        }
    }
}

/// Gradient matching from a standard-normal start drawn with `cfg.seed`.
/// `label = None` infers the label from the target with [`infer_label_sign`].
pub fn grad_match_attack(
    target: &GradientSet,
    spec: &MlpSpec,
    params: &Params,
    cfg: &AttackConfig,
    label: Option<usize>,
) -> Result<AttackReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<f64> = (0..spec.input_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    grad_match_attack_from(target, spec, params, cfg, label, init)
}

/// Gradient matching from a given starting point.
///
/// Minimizes `D(∇θ L(x̂, ŷ; θ), target)` over `x̂` by gradient descent. The
/// descent direction comes from central differences over the input
/// coordinates; a step that does not lower the objective is halved until it
/// does, and the step grows again after each success, so the recorded trace
/// never increases.
pub fn grad_match_attack_from(
    target: &GradientSet,
    spec: &MlpSpec,
    params: &Params,
    cfg: &AttackConfig,
    label: Option<usize>,
    init: Vec<f64>,
) -> Result<AttackReport> {
    cfg.validate()?;
    let dim = spec.input_dim();
    if dim > GRAD_MATCH_DIM_BUDGET {
        return Err(Error::OverBudget { dim, budget: GRAD_MATCH_DIM_BUDGET });
    }
    if init.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "initial guess has {} values, model expects {dim}",
            init.len()
        )));
    }
    if !params.conforms(spec) {
        return Err(Error::ShapeMismatch("parameters do not match the model spec".into()));
    }
    params.check_congruent(target)?;
    let label = match label {
        Some(l) => l,
        None => infer_label_sign(target.layers().last().unwrap().bias.data()),
    };

    let objective = |x: &[f64]| -> Result<f64> {
        let (_, g, _) = nn::loss_and_grad(spec, params, x, label)?;
        gradient_distance(&g, target, cfg.distance)
    };
    let h = cfg.finite_diff_h;

    let mut x = init;
    let mut f = objective(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("initial matching objective is {f}")));
    }
    let mut trace = Vec::with_capacity(cfg.iterations);
    trace.push(f);
    let mut step = cfg.step_size;

    'outer: while trace.len() < cfg.iterations {
        if f == 0.0 {
            break;
        }
        let grad: Vec<f64> = (0..dim)
            .into_par_iter()
            .map(|k| {
                let mut probe = x.clone();
                probe[k] = x[k] + h;
                let up = objective(&probe)?;
                probe[k] = x[k] - h;
                let down = objective(&probe)?;
                Ok((up - down) / (2.0 * h))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = grad.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("objective gradient entry {bad}")));
        }
        if grad.iter().all(|&v| v == 0.0) {
            break;
        }
        loop {
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(a, d)| a - step * d).collect();
            match objective(&candidate) {
                Ok(fc) if fc.is_finite() && fc < f => {
                    x = candidate;
                    f = fc;
                    step *= 2.0;
                    break;
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-300 {
                        break 'outer;
                    }
                }
            }
        }
        trace.push(f);
    }

    Ok(AttackReport { reconstruction: Tensor::vector(x)?, label, trace, quality: None })
}
