//! Projected gradient ascent over perturbation sets, in raw feature space
//! and over the continuous semi-latent coordinates.

use crate::classifier::ClassifierModel;
use crate::error::Result;
use crate::metric::{
    continuous_jacobian, from_semi_latent, theta_set, to_semi_latent, counterfactual_via_mask,
    MetricConfig, PNorm, SemiLatentPoint,
};
use crate::rng;
use crate::scm::{Instance, ScmSpec};

#[derive(Debug, Clone, Copy)]
pub struct PgdSettings {
    pub steps: usize,
    pub step_size: f64,
    pub p: PNorm,
    pub radius: f64,
}

/// Gradient ascent with projection; tracks the best value over every
/// visited iterate of every start, so the result never falls below the
/// best start value.
pub fn ascend(
    settings: &PgdSettings,
    eval: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    starts: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let dim = starts[0].len();
    let mut best_val = f64::NEG_INFINITY;
    let mut best = vec![0.0; dim];
    for start in starts {
        let mut delta = start.clone();
        settings.p.project(&mut delta, settings.radius);
        let (mut val, mut grad) = eval(&delta);
        if val > best_val {
            best_val = val;
            best = delta.clone();
        }
        for _ in 0..settings.steps {
            let dir = settings.p.steepest_unit(&grad);
            if dir.iter().all(|d| *d == 0.0) {
                break;
            }
            for (x, d) in delta.iter_mut().zip(&dir) {
                *x += settings.step_size * d;
            }
            settings.p.project(&mut delta, settings.radius);
            let (v, g) = eval(&delta);
            val = v;
            grad = g;
            if val > best_val {
                best_val = val;
                best = delta.clone();
            }
        }
    }
    (best_val, best)
}

/// Zero start plus one random restart inside the ball.
pub fn default_starts(settings: &PgdSettings, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[0x57a27]);
    vec![vec![0.0; dim], settings.p.sample_in_ball(&mut r, dim, settings.radius)]
}

/// View of the loss through the semi-latent transform around a base point:
/// `δ -> bce(h(T^{-1}(T(base) + δ)), y)` over the continuous coordinates.
pub struct SemiLatentView<'a> {
    scm: &'a ScmSpec,
    cont: Vec<usize>,
    base_q: SemiLatentPoint,
}

impl<'a> SemiLatentView<'a> {
    pub fn new(scm: &'a ScmSpec, base: &Instance) -> Result<Self> {
        Ok(SemiLatentView {
            scm,
            cont: scm.continuous_indices(),
            base_q: to_semi_latent(scm, base)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.cont.len()
    }

    pub fn instance_at(&self, delta: &[f64]) -> Instance {
        let mut q = self.base_q.clone();
        for (k, &i) in self.cont.iter().enumerate() {
            q.values[i] += delta[k];
        }
        from_semi_latent(self.scm, &q).expect("dimensions fixed by construction")
    }

    pub fn loss_at(&self, model: &ClassifierModel, delta: &[f64], y: f64) -> f64 {
        crate::classifier::bce_from_logit(model.logit(&self.instance_at(delta).values), y)
    }

    /// Loss and its gradient with respect to `δ`, chained through the
    /// Jacobian of `T^{-1}` at the perturbed point.
    pub fn loss_grad_at(&self, model: &ClassifierModel, delta: &[f64], y: f64) -> (f64, Vec<f64>) {
        let v = self.instance_at(delta);
        let loss = crate::classifier::bce_from_logit(model.logit(&v.values), y);
        let grad_v = model.input_grad_loss(&v.values, y);
        (loss, self.chain(&v, &grad_v))
    }

    /// Logit and its gradient with respect to `δ`.
    pub fn logit_grad_at(&self, model: &ClassifierModel, delta: &[f64]) -> (f64, Vec<f64>) {
        let v = self.instance_at(delta);
        let logit = model.logit(&v.values);
        let grad_v = model.input_grad_logit(&v.values);
        (logit, self.chain(&v, &grad_v))
    }

    fn chain(&self, v: &Instance, grad_v: &[f64]) -> Vec<f64> {
        let jac = continuous_jacobian(self.scm, v);
        let mut grad = vec![0.0; self.cont.len()];
        for (i, row) in jac.iter().enumerate() {
            if grad_v[i] != 0.0 {
                for (k, jik) in row.iter().enumerate() {
                    grad[k] += grad_v[i] * jik;
                }
            }
        }
        grad
    }
}

/// Worst-case raw-space perturbation: PGD ascent of the loss over
/// `‖δ‖_p <= Δ` around `v`, all coordinates perturbed. Returns the
/// perturbed instance and its loss, never below the loss at `v`.
pub fn inner_max_plain(
    model: &ClassifierModel,
    v: &Instance,
    y: f64,
    delta: f64,
    p: PNorm,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> (Instance, f64) {
    let base_loss = crate::classifier::bce_from_logit(model.logit(&v.values), y);
    if delta == 0.0 {
        return (v.clone(), base_loss);
    }
    let settings = PgdSettings { steps, step_size, p, radius: delta };
    let eval = |d: &[f64]| {
        let point: Vec<f64> = v.values.iter().zip(d).map(|(a, b)| a + b).collect();
        let loss = crate::classifier::bce_from_logit(model.logit(&point), y);
        let grad = model.input_grad_loss(&point, y);
        (loss, grad)
    };
    let starts = default_starts(&settings, v.dim(), seed);
    let (val, best) = ascend(&settings, &eval, &starts);
    let point: Vec<f64> = v.values.iter().zip(&best).map(|(a, b)| a + b).collect();
    (Instance::new(point), val)
}

/// Raw-space PGD *descent* of `bce(h(v+δ), target)` over the ball; used by
/// the objective that pulls perturbed points toward a fixed label.
pub fn inner_min_plain_toward(
    model: &ClassifierModel,
    v: &Instance,
    target: f64,
    delta: f64,
    p: PNorm,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> (Instance, f64) {
    if delta == 0.0 {
        let loss = crate::classifier::bce_from_logit(model.logit(&v.values), target);
        return (v.clone(), loss);
    }
    let settings = PgdSettings { steps, step_size, p, radius: delta };
    let eval = |d: &[f64]| {
        let point: Vec<f64> = v.values.iter().zip(d).map(|(a, b)| a + b).collect();
        let loss = crate::classifier::bce_from_logit(model.logit(&point), target);
        let grad: Vec<f64> =
            model.input_grad_loss(&point, target).iter().map(|g| -g).collect();
        (-loss, grad)
    };
    let starts = default_starts(&settings, v.dim(), seed);
    let (neg_val, best) = ascend(&settings, &eval, &starts);
    let point: Vec<f64> = v.values.iter().zip(&best).map(|(a, b)| a + b).collect();
    (Instance::new(point), -neg_val)
}

/// Worst-case causal perturbation: for each admissible categorical
/// assignment, PGD over the continuous semi-latent disk around the
/// corresponding twin; returns the arg-max across assignments. The value is
/// never below the worst twin loss.
pub fn inner_max_cap(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    v: &Instance,
    y: f64,
    delta: f64,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<(Instance, f64)> {
    let thetas = theta_set(scm, mcfg, v, delta)?;
    let cats = scm.categorical_indices();
    let base_cat: Vec<f64> = cats.iter().map(|&i| v.values[i]).collect();
    let mut best: Option<(Instance, f64)> = None;
    for (ti, theta) in thetas.iter().enumerate() {
        let d_sq = mcfg.categorical_dist_sq(scm, theta, &base_cat)?;
        let r_theta = (delta * delta - d_sq).max(0.0).sqrt();
        let twin = counterfactual_via_mask(scm, v, &cats, theta)?;
        let twin_loss = crate::classifier::bce_from_logit(model.logit(&twin.values), y);
        let candidate = if r_theta == 0.0 {
            (twin, twin_loss)
        } else {
            let view = SemiLatentView::new(scm, &twin)?;
            let settings = PgdSettings { steps, step_size, p: mcfg.p, radius: r_theta };
            let eval = |d: &[f64]| view.loss_grad_at(model, d, y);
            let starts = default_starts(&settings, view.dim(), rng::mix(seed, ti as u64));
            let (val, delta_best) = ascend(&settings, &eval, &starts);
            (view.instance_at(&delta_best), val)
        };
        if best.as_ref().is_none_or(|(_, b)| candidate.1 > *b) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("theta set always holds the factual assignment"))
}

/// PGD search for the maximal linearization error of a function given by
/// value/gradient evaluations over `‖δ‖_p <= radius`: the largest
/// `|f(δ) - f(0) - δ . ∇f(0)|` found, with the achieving offset.
pub fn linearization_error_search(
    eval: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    dim: usize,
    radius: f64,
    p: PNorm,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> (f64, Vec<f64>) {
    if radius == 0.0 || dim == 0 {
        return (0.0, vec![0.0; dim]);
    }
    let (f0, g0) = eval(&vec![0.0; dim]);
    let settings = PgdSettings { steps, step_size, p, radius };
    let err_eval = |d: &[f64]| {
        let (f, g) = eval(d);
        let lin: f64 = f0 + d.iter().zip(&g0).map(|(a, b)| a * b).sum::<f64>();
        let resid = f - lin;
        let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
        let grad: Vec<f64> = g.iter().zip(&g0).map(|(a, b)| sign * (a - b)).collect();
        (resid.abs(), grad)
    };
    let starts = default_starts(&settings, dim, seed);
    ascend(&settings, &err_eval, &starts)
}

/// Feasible-point estimate of the local-linearity constant: the maximal
/// absolute linearization error of `δ -> bce(h(T^{-1}(T(v)+δ)), y)` found by
/// PGD over the continuous disk of radius `Δ`. Always >= 0 and a lower
/// bound on the true maximum. Also returns the achieving offset.
pub fn gamma_search(
    model: &ClassifierModel,
    scm: &ScmSpec,
    v: &Instance,
    y: f64,
    delta: f64,
    p: PNorm,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let view = SemiLatentView::new(scm, v)?;
    let eval = |d: &[f64]| view.loss_grad_at(model, d, y);
    Ok(linearization_error_search(&eval, view.dim(), delta, p, steps, step_size, seed))
}
