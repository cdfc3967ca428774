//! Training objectives over a shared Adam loop: plain risk minimization,
//! raw-space adversarial training, local-linearity regularization, a
//! toward-one perturbation penalty, causal adversarial training over the
//! CAP, and the decomposed causal regularizer (twin loss + local-linearity
//! estimate + dual-norm gradient term).
//!
//! The gradient-norm and linearization-error terms depend on input
//! gradients, so their exact parameter gradient would need second-order
//! backprop. Each inner quantity is replaced by a central finite-difference
//! surrogate at frozen perturbation points (`h = 1e-3`), which makes the
//! whole objective first-order differentiable with ordinary backprop at an
//! `O(h^2)` approximation cost. Perturbation directions are recomputed every
//! step from the current parameters.

pub mod pgd;

use crate::classifier::{bce_from_logit, ClassifierModel, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::{MetricConfig, PNorm};
use crate::par;
use crate::rng;
use crate::scm::{Instance, ScmSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Finite-difference step for the first-order surrogates.
pub const FD_H: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Erm,
    Al,
    Llr,
    Ross,
    Cal,
    Capify,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 6] = [
        TrainerKind::Erm,
        TrainerKind::Al,
        TrainerKind::Llr,
        TrainerKind::Ross,
        TrainerKind::Cal,
        TrainerKind::Capify,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerKind::Erm => "erm",
            TrainerKind::Al => "al",
            TrainerKind::Llr => "llr",
            TrainerKind::Ross => "ross",
            TrainerKind::Cal => "cal",
            TrainerKind::Capify => "capify",
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(TrainerKind::Erm),
            "al" => Ok(TrainerKind::Al),
            "llr" => Ok(TrainerKind::Llr),
            "ross" => Ok(TrainerKind::Ross),
            "cal" => Ok(TrainerKind::Cal),
            "capify" => Ok(TrainerKind::Capify),
            other => Err(Error::InvalidTrainConfig(format!("unknown trainer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: TrainerKind,
    /// Perturbation radius.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mu")]
    pub mu1: f64,
    #[serde(default = "default_mu")]
    pub mu2: f64,
    #[serde(default = "default_mu")]
    pub mu3: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_pgd_steps")]
    pub pgd_steps: usize,
    /// Defaults to `delta / 4` when unset.
    #[serde(default)]
    pub pgd_step_size: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.05
}
fn default_mu() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    100
}
fn default_epochs() -> usize {
    10
}
fn default_pgd_steps() -> usize {
    10
}

impl TrainConfig {
    pub fn new(kind: TrainerKind) -> Self {
        TrainConfig {
            kind,
            delta: default_delta(),
            mu1: default_mu(),
            mu2: default_mu(),
            mu3: default_mu(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            pgd_steps: default_pgd_steps(),
            pgd_step_size: None,
            seed: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.pgd_step_size.unwrap_or(self.delta / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta < 0.0 {
            return Err(Error::InvalidTrainConfig("delta must be >= 0".into()));
        }
        if self.mu1 < 0.0 || self.mu2 < 0.0 || self.mu3 < 0.0 {
            return Err(Error::InvalidTrainConfig("regularizer weights must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidTrainConfig("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("batch size and epochs must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config: TrainConfig,
    pub dataset_id: String,
    pub scm_id: String,
    /// Mean training objective per epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: ClassifierModel,
    pub provenance: Provenance,
}

impl TrainedModel {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<TrainedModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// A weighted loss term: (input point, label, weight).
type Term = (Vec<f64>, f64, f64);

/// Appends the surrogate terms for `weight * |value - linear part|` of a
/// linearization error: `|f(a) - f(base) - ‖δ‖ . directional_fd|`, where the
/// directional derivative is approximated centrally at `base ± h e`.
/// `points` are full input vectors; the current model fixes the sign.
#[allow(clippy::too_many_arguments)]
fn push_linearization_terms(
    terms: &mut Vec<Term>,
    model: &ClassifierModel,
    point_a: &[f64],
    base: &[f64],
    point_hi: &[f64],
    point_lo: &[f64],
    delta_l2: f64,
    y: f64,
    weight: f64,
) {
    let a = bce_from_logit(model.logit(point_a), y);
    let b = bce_from_logit(model.logit(base), y);
    let fd = (bce_from_logit(model.logit(point_hi), y) - bce_from_logit(model.logit(point_lo), y))
        / (2.0 * FD_H);
    let resid = a - b - delta_l2 * fd;
    let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
    let w = weight * sign;
    terms.push((point_a.to_vec(), y, w));
    terms.push((base.to_vec(), y, -w));
    terms.push((point_hi.to_vec(), y, -w * delta_l2 / (2.0 * FD_H)));
    terms.push((point_lo.to_vec(), y, w * delta_l2 / (2.0 * FD_H)));
}

/// Appends the surrogate terms for `weight * |δ . ∇f|` realized as a central
/// difference along the unit-l2 direction `e` scaled by `‖δ‖_2`.
fn push_directional_terms(
    terms: &mut Vec<Term>,
    model: &ClassifierModel,
    point_hi: &[f64],
    point_lo: &[f64],
    delta_l2: f64,
    y: f64,
    weight: f64,
) {
    let fd = (bce_from_logit(model.logit(point_hi), y) - bce_from_logit(model.logit(point_lo), y))
        / (2.0 * FD_H);
    let sign = if fd >= 0.0 { 1.0 } else { -1.0 };
    let w = weight * sign * delta_l2 / (2.0 * FD_H);
    terms.push((point_hi.to_vec(), y, w));
    terms.push((point_lo.to_vec(), y, -w));
}

fn l2(xs: &[f64]) -> f64 {
    PNorm::Two.norm(xs)
}

fn add_offset(v: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    v.iter().zip(dir).map(|(a, b)| a + scale * b).collect()
}

/// Builds the per-item weighted loss terms for the configured objective.
#[allow(clippy::too_many_arguments)]
fn build_terms(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    cfg: &TrainConfig,
    twins: Option<&[Instance]>,
    v: &Instance,
    y: f64,
    seed: u64,
) -> Result<Vec<Term>> {
    let mut terms: Vec<Term> = Vec::new();
    match cfg.kind {
        TrainerKind::Erm => {
            terms.push((v.values.clone(), y, 1.0));
        }
        TrainerKind::Al => {
            let (w_star, _) = pgd::inner_max_plain(
                model,
                v,
                y,
                cfg.delta,
                mcfg.p,
                cfg.pgd_steps,
                cfg.step_size(),
                seed,
            );
            terms.push((w_star.values, y, 1.0));
        }
        TrainerKind::Cal => {
            let (w_star, _) = pgd::inner_max_cap(
                model,
                scm,
                mcfg,
                v,
                y,
                cfg.delta,
                cfg.pgd_steps,
                cfg.step_size(),
                seed,
            )?;
            terms.push((w_star.values, y, 1.0));
        }
        TrainerKind::Ross => {
            terms.push((v.values.clone(), y, 1.0));
            if cfg.mu1 > 0.0 {
                let (w_star, _) = pgd::inner_min_plain_toward(
                    model,
                    v,
                    1.0,
                    cfg.delta,
                    mcfg.p,
                    cfg.pgd_steps,
                    cfg.step_size(),
                    seed,
                );
                terms.push((w_star.values, 1.0, cfg.mu1));
            }
        }
        TrainerKind::Llr => {
            terms.push((v.values.clone(), y, 1.0));
            if cfg.mu2 > 0.0 {
                let grad = model.input_grad_loss(&v.values, y);
                let dir = mcfg.p.steepest_unit(&grad);
                let dn = l2(&dir);
                if dn > 0.0 {
                    let e: Vec<f64> = dir.iter().map(|d| d / dn).collect();
                    let hi = add_offset(&v.values, &e, FD_H);
                    let lo = add_offset(&v.values, &e, -FD_H);
                    push_directional_terms(&mut terms, model, &hi, &lo, dn, y, cfg.mu2);
                }
            }
            if cfg.mu1 > 0.0 && cfg.delta > 0.0 {
                let eval = |d: &[f64]| {
                    let point = add_offset(&v.values, d, 1.0);
                    let loss = bce_from_logit(model.logit(&point), y);
                    (loss, model.input_grad_loss(&point, y))
                };
                let (_, d_gamma) = pgd::linearization_error_search(
                    &eval,
                    v.dim(),
                    cfg.delta,
                    mcfg.p,
                    cfg.pgd_steps,
                    cfg.step_size(),
                    rng::mix(seed, 1),
                );
                let dn = l2(&d_gamma);
                if dn > 0.0 {
                    let e: Vec<f64> = d_gamma.iter().map(|d| d / dn).collect();
                    let a = add_offset(&v.values, &d_gamma, 1.0);
                    let hi = add_offset(&v.values, &e, FD_H);
                    let lo = add_offset(&v.values, &e, -FD_H);
                    push_linearization_terms(
                        &mut terms, model, &a, &v.values, &hi, &lo, dn, y, cfg.mu1,
                    );
                }
            }
        }
        TrainerKind::Capify => {
            terms.push((v.values.clone(), y, 1.0));
            if cfg.mu1 > 0.0 {
                let twins = twins.expect("twins are precomputed for the causal objectives");
                let worst = twins
                    .iter()
                    .map(|t| (t, bce_from_logit(model.logit(&t.values), y)))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .expect("at least one twin");
                terms.push((worst.0.values.clone(), y, cfg.mu1));
            }
            if (cfg.mu2 > 0.0 || cfg.mu3 > 0.0) && scm.continuous_indices().is_empty() {
                return Ok(terms);
            }
            if cfg.mu2 > 0.0 && cfg.delta > 0.0 {
                let (_, d_gamma) = pgd::gamma_search(
                    model,
                    scm,
                    v,
                    y,
                    cfg.delta,
                    mcfg.p,
                    cfg.pgd_steps,
                    cfg.step_size(),
                    rng::mix(seed, 2),
                )?;
                let dn = l2(&d_gamma);
                if dn > 0.0 {
                    let view = pgd::SemiLatentView::new(scm, v)?;
                    let e: Vec<f64> = d_gamma.iter().map(|d| d / dn).collect();
                    let a = view.instance_at(&d_gamma);
                    let hi = view.instance_at(&e.iter().map(|x| x * FD_H).collect::<Vec<_>>());
                    let lo = view.instance_at(&e.iter().map(|x| -x * FD_H).collect::<Vec<_>>());
                    push_linearization_terms(
                        &mut terms, model, &a.values, &v.values, &hi.values, &lo.values, dn, y,
                        cfg.mu2,
                    );
                }
            }
            if cfg.mu3 > 0.0 {
                let grad = model.grad_input_continuous(scm, v, y)?;
                let dir = mcfg.p.steepest_unit(&grad);
                let dn = l2(&dir);
                if dn > 0.0 {
                    let view = pgd::SemiLatentView::new(scm, v)?;
                    let e: Vec<f64> = dir.iter().map(|d| d / dn).collect();
                    let hi = view.instance_at(&e.iter().map(|x| x * FD_H).collect::<Vec<_>>());
                    let lo = view.instance_at(&e.iter().map(|x| -x * FD_H).collect::<Vec<_>>());
                    push_directional_terms(
                        &mut terms,
                        model,
                        &hi.values,
                        &lo.values,
                        dn,
                        y,
                        cfg.mu3 * cfg.delta,
                    );
                }
            }
        }
    }
    Ok(terms)
}

/// The decomposed causal regularizer value at a point:
/// `μ1 max_s bce(h(twin_s), y) + μ2 γ̂(Δ, v) + μ3 Δ ‖∇ f(v)‖_*`, with the
/// gradient taken over the continuous semi-latent coordinates and the dual
/// norm matching the continuous metric.
pub fn capify_regularizer(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    v: &Instance,
    y: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    if cfg.mu1 > 0.0 {
        let worst = scm
            .twins(v)?
            .iter()
            .map(|t| bce_from_logit(model.logit(&t.values), y))
            .fold(f64::NEG_INFINITY, f64::max);
        total += cfg.mu1 * worst;
    }
    if cfg.mu2 > 0.0 {
        total += cfg.mu2 * gamma_estimate(model, scm, mcfg, v, y, cfg.delta, cfg, seed)?;
    }
    if cfg.mu3 > 0.0 {
        let grad = model.grad_input_continuous(scm, v, y)?;
        total += cfg.mu3 * cfg.delta * mcfg.dual_p().norm(&grad);
    }
    Ok(total)
}

/// Feasible-point estimate of the local-linearity constant over the
/// continuous semi-latent disk of radius `Δ`.
pub fn gamma_estimate(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    v: &Instance,
    y: f64,
    delta: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let step = if delta > 0.0 { cfg.pgd_step_size.unwrap_or(delta / 4.0) } else { 0.0 };
    Ok(pgd::gamma_search(model, scm, v, y, delta, mcfg.p, cfg.pgd_steps, step, seed)?.0)
}

/// Runs the configured objective with Adam. Instances are interpreted in
/// SCM coordinates; the model internally carries the standardization fitted
/// on this dataset, so callers pass raw-coordinate data.
pub fn train(
    dataset: &Dataset,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    spec: ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    mcfg.validate(scm)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if spec.input_dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: spec.input_dim(),
        });
    }

    let mut model = ClassifierModel::init(spec, rng::derive(cfg.seed, &[0x1417]))?;
    if dataset.standardization.is_none() {
        model.set_scaler(Some(dataset.fit_scaler().0));
    }

    let needs_twins = matches!(cfg.kind, TrainerKind::Capify) && cfg.mu1 > 0.0;
    let twin_cache: Option<Vec<Vec<Instance>>> = if needs_twins {
        Some(
            dataset
                .instances
                .iter()
                .map(|v| scm.twins(v))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let n = dataset.len();
    let n_params = model.n_params();
    let mut adam = Adam::new(n_params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, &[0x5f1e]);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Vec<f64>)>> = par::map_collect(batch, |&i| {
                let v = &dataset.instances[i];
                let y = dataset.labels[i];
                let seed = rng::derive(cfg.seed, &[0x96d, epoch as u64, i as u64]);
                let terms = build_terms(
                    &model,
                    scm,
                    mcfg,
                    cfg,
                    twin_cache.as_ref().map(|c| c[i].as_slice()),
                    v,
                    y,
                    seed,
                )?;
                Ok(model.weighted_loss_param_grad(&terms))
            });
            let mut batch_loss = 0.0;
            let mut grad = vec![0.0; n_params];
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss;
                for (slot, gi) in grad.iter_mut().zip(&g) {
                    *slot += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            let mut params = model.params_flat();
            adam.step(&mut params, &grad);
            model.set_params_flat(&params)?;
            epoch_loss += batch_loss * batch.len() as f64;
        }
        trace.push(epoch_loss / n as f64);
    }

    Ok(TrainedModel {
        model,
        provenance: Provenance {
            config: cfg.clone(),
            dataset_id: dataset.source.clone(),
            scm_id: scm.name().to_string(),
            loss_trace: trace,
        },
    })
}
