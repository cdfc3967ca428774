//! Fairness and robustness audits: accuracy and MCC, search-based
//! unfairness rates over the CAP, the analytical unfair band for a linear
//! SCM with a linear classifier, label-flip mitigation, and the ε-δ
//! individual-fairness check.
//!
//! The search records, for every audited point, the smallest fair-metric
//! radius at which a label flip was found (exactly for a GLM over a linear
//! SCM, by PGD with restarts otherwise). Rates at any radius derive from
//! that evidence, which makes the unfairness rate monotone in the radius
//! and in the search budget, and makes the twin/robustness/CAP event
//! inclusions hold by construction. For searched models a negative answer
//! means "no violation found within the budget".

use crate::classifier::ClassifierModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::{counterfactual_via_mask, theta_set, MetricConfig, BOUNDARY_TOL};
use crate::par;
use crate::rng;
use crate::scm::{Instance, ScmSpec};
use crate::train::pgd::SemiLatentView;
use serde::{Deserialize, Serialize};

// ── confusion-matrix metrics ───────────────────────────────────────────

pub fn accuracy(model: &ClassifierModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = ds
        .instances
        .iter()
        .zip(&ds.labels)
        .filter(|(v, y)| f64::from(model.predict_label(&v.values)) == **y)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Matthews correlation coefficient; 0 when the denominator vanishes.
pub fn mcc(model: &ClassifierModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut tp, mut tn, mut fp, mut fnn) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (v, y) in ds.instances.iter().zip(&ds.labels) {
        let pred = model.predict_label(&v.values);
        match (pred, *y as u8) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fnn += 1.0,
            _ => unreachable!("labels are binary"),
        }
    }
    Ok(mcc_from_counts(tp, tn, fp, fnn))
}

pub fn mcc_from_counts(tp: f64, tn: f64, fp: f64, fnn: f64) -> f64 {
    let denom = ((tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fnn) / denom
    }
}

// ── flip-evidence search ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    /// Random PGD restarts per (assignment, radius) in addition to the
    /// zero start.
    pub restarts: usize,
    pub pgd_steps: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { restarts: 2, pgd_steps: 10 }
    }
}

/// Per-point audit evidence: the smallest fair-metric radii at which label
/// flips were found.
#[derive(Debug, Clone, Copy)]
pub struct PointEvidence {
    /// Some counterfactual twin receives a different label (exact).
    pub cf_flip: bool,
    /// Least `d_fair` of any found flip in the CAP.
    pub min_cap_radius: Option<f64>,
    /// Least offset norm of any found flip around the factual level.
    pub min_robust_radius: Option<f64>,
}

impl PointEvidence {
    pub fn cap_flip_within(&self, delta: f64) -> bool {
        self.min_cap_radius.is_some_and(|r| r <= delta + BOUNDARY_TOL)
    }

    pub fn robust_flip_within(&self, delta: f64) -> bool {
        // The zero-radius continuous ball is the point itself.
        delta > 0.0 && self.min_robust_radius.is_some_and(|r| r <= delta + BOUNDARY_TOL)
    }
}

/// Exact continuous-flip geometry for a GLM over a linear SCM: the logit
/// responds linearly to semi-latent offsets with sensitivity `kappa`.
struct LinearFlip {
    kappa: f64,
}

fn linear_flip(model: &ClassifierModel, scm: &ScmSpec, mcfg: &MetricConfig) -> Option<LinearFlip> {
    let (w, _) = model.as_linear()?;
    let f = scm.reduced_form()?;
    let cont = scm.continuous_indices();
    let mut wf = vec![0.0; cont.len()];
    for (k, &j) in cont.iter().enumerate() {
        for (i, wi) in w.iter().enumerate() {
            wf[k] += wi * f.matrix[i][j];
        }
    }
    Some(LinearFlip { kappa: mcfg.dual_p().norm(&wf) })
}

fn merge_min(slot: &mut Option<f64>, value: f64) {
    if slot.is_none_or(|cur| value < cur) {
        *slot = Some(value);
    }
}

/// Searches the CAP around `v` for label flips at every requested radius,
/// recording minimal-evidence distances.
#[allow(clippy::too_many_arguments)]
fn audit_point(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    linear: Option<&LinearFlip>,
    v: &Instance,
    radii: &[f64],
    budget: SearchBudget,
    seed: u64,
) -> Result<PointEvidence> {
    let label_v = model.predict_label(&v.values);
    let sign_v = if label_v == 1 { 1.0 } else { -1.0 };

    let mut evidence = PointEvidence { cf_flip: false, min_cap_radius: None, min_robust_radius: None };

    // Exact twin check over the full sensitive level set.
    for t in scm.twins(v)? {
        if model.predict_label(&t.values) != label_v {
            evidence.cf_flip = true;
        }
    }

    let max_radius = radii.iter().fold(0.0f64, |m, r| m.max(*r));
    let cats = scm.categorical_indices();
    let base_cat: Vec<f64> = cats.iter().map(|&i| v.values[i]).collect();

    for (ti, theta) in theta_set(scm, mcfg, v, max_radius)?.iter().enumerate() {
        let d_z = mcfg.categorical_dist_sq(scm, theta, &base_cat)?.sqrt();
        let twin = counterfactual_via_mask(scm, v, &cats, theta)?;
        let is_factual = theta == &base_cat;

        if model.predict_label(&twin.values) != label_v {
            merge_min(&mut evidence.min_cap_radius, d_z);
            // The factual assignment reproduces v itself, so a flip here is
            // impossible; no robustness evidence from this branch.
        }

        if let Some(lin) = linear {
            // Minimal offset norm that moves the twin logit across zero.
            if lin.kappa > 0.0 {
                let logit_twin = model.logit(&twin.values);
                let needed = logit_twin.abs() / lin.kappa;
                let total = (d_z * d_z + needed * needed).sqrt();
                merge_min(&mut evidence.min_cap_radius, total);
                if is_factual {
                    merge_min(&mut evidence.min_robust_radius, needed.max(f64::MIN_POSITIVE));
                }
            }
            continue;
        }

        // PGD flip search toward the decision boundary at each admissible
        // radius; every flipped iterate contributes evidence.
        let view = SemiLatentView::new(scm, &twin)?;
        for (ri, &delta) in radii.iter().enumerate() {
            let r_sq = delta * delta - d_z * d_z;
            if r_sq <= 0.0 {
                continue;
            }
            let radius = r_sq.sqrt();
            let step = radius / 4.0;
            for restart in 0..=budget.restarts {
                let mut offset = if restart == 0 {
                    vec![0.0; view.dim()]
                } else {
                    let mut r = rng::stream(seed, &[ti as u64, ri as u64, restart as u64]);
                    mcfg.p.sample_in_ball(&mut r, view.dim(), radius)
                };
                for _ in 0..budget.pgd_steps {
                    let (logit, grad) = view.logit_grad_at(model, &offset);
                    if (logit > 0.0) as u8 != label_v {
                        let norm = mcfg.p.norm(&offset);
                        let total = (d_z * d_z + norm * norm).sqrt();
                        merge_min(&mut evidence.min_cap_radius, total);
                        if is_factual {
                            merge_min(&mut evidence.min_robust_radius, norm);
                        }
                    }
                    // Ascend -sign_v * logit to push across the boundary.
                    let dir = mcfg.p.steepest_unit(&grad.iter().map(|g| -sign_v * g).collect::<Vec<_>>());
                    if dir.iter().all(|d| *d == 0.0) {
                        break;
                    }
                    for (x, d) in offset.iter_mut().zip(&dir) {
                        *x += step * d;
                    }
                    mcfg.p.project(&mut offset, radius);
                }
                let (logit, _) = view.logit_grad_at(model, &offset);
                if (logit > 0.0) as u8 != label_v {
                    let norm = mcfg.p.norm(&offset);
                    let total = (d_z * d_z + norm * norm).sqrt();
                    merge_min(&mut evidence.min_cap_radius, total);
                    if is_factual {
                        merge_min(&mut evidence.min_robust_radius, norm);
                    }
                }
            }
        }
    }
    Ok(evidence)
}

/// Evidence for every dataset point, searched at the given radii.
pub fn audit_evidence(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    ds: &Dataset,
    radii: &[f64],
    budget: SearchBudget,
    seed: u64,
) -> Result<Vec<PointEvidence>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let linear = linear_flip(model, scm, mcfg);
    let results = par::map_indexed(&ds.instances, |i, v| {
        audit_point(model, scm, mcfg, linear.as_ref(), v, radii, budget, rng::mix(seed, i as u64))
    });
    results.into_iter().collect()
}

/// True when a differently-labeled point exists in the radius-`Δ` CAP
/// around `v`: exact twin check plus per-level continuous search (closed
/// form for a GLM over a linear SCM, PGD with restarts otherwise).
pub fn is_capi_unfair(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    v: &Instance,
    delta: f64,
    budget: SearchBudget,
    seed: u64,
) -> Result<bool> {
    let linear = linear_flip(model, scm, mcfg);
    let ev = audit_point(model, scm, mcfg, linear.as_ref(), v, &[delta], budget, seed)?;
    Ok(ev.cap_flip_within(delta))
}

/// Fraction of dataset points whose CAP contains a differently-labeled
/// point (a Monte-Carlo estimate of the unfair-area probability).
pub fn uai(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    ds: &Dataset,
    delta: f64,
    budget: SearchBudget,
    seed: u64,
) -> Result<f64> {
    let evidence = audit_evidence(model, scm, mcfg, ds, &[delta], budget, seed)?;
    Ok(rate(&evidence, |e| e.cap_flip_within(delta)))
}

/// Fraction of points with a differently-labeled counterfactual twin.
pub fn cf_rate(model: &ClassifierModel, scm: &ScmSpec, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let flags = par::map_collect(&ds.instances, |v| -> Result<bool> {
        let label = model.predict_label(&v.values);
        Ok(scm.twins(v)?.iter().any(|t| model.predict_label(&t.values) != label))
    });
    let flags = flags.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

/// Like `uai` but searching only the continuous ball around the factual
/// point (no twins): the non-robustness rate.
pub fn robustness_rate(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    ds: &Dataset,
    delta: f64,
    budget: SearchBudget,
    seed: u64,
) -> Result<f64> {
    let evidence = audit_evidence(model, scm, mcfg, ds, &[delta], budget, seed)?;
    Ok(rate(&evidence, |e| e.robust_flip_within(delta)))
}

/// Fraction of points where a `w` with `d_fair(v, w) <= δ` and output
/// distance above `ε` was found. Outputs are hard labels under the discrete
/// metric, so `ε >= 1` is never violated and `ε < 1` reduces to the CAP
/// unfairness check at radius `δ`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_delta_check(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    ds: &Dataset,
    epsilon: f64,
    delta: f64,
    budget: SearchBudget,
    seed: u64,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if epsilon >= 1.0 {
        return Ok(0.0);
    }
    uai(model, scm, mcfg, ds, delta, budget, seed)
}

fn rate(evidence: &[PointEvidence], flag: impl Fn(&PointEvidence) -> bool) -> f64 {
    evidence.iter().filter(|e| flag(e)).count() as f64 / evidence.len() as f64
}

// ── audit report ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub accuracy: f64,
    pub mcc: f64,
    /// (radius, unfairness rate), in the order requested.
    pub uai: Vec<(f64, f64)>,
    pub cf_rate: f64,
    /// (radius, non-robustness rate).
    pub robustness: Vec<(f64, f64)>,
    pub n_points: usize,
    pub search_restarts: usize,
    pub pgd_steps: usize,
}

impl AuditReport {
    pub fn uai_at(&self, radius: f64) -> Option<f64> {
        self.uai.iter().find(|(r, _)| *r == radius).map(|(_, v)| *v)
    }

    pub fn robustness_at(&self, radius: f64) -> Option<f64> {
        self.robustness.iter().find(|(r, _)| *r == radius).map(|(_, v)| *v)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Runs the full audit at the given radii. With a protected (all distances
/// zero) sensitive pseudometric the twin set is inside every CAP, so the
/// counterfactual rate equals the unfairness rate at radius zero.
pub fn audit_dataset(
    model: &ClassifierModel,
    scm: &ScmSpec,
    mcfg: &MetricConfig,
    ds: &Dataset,
    radii: &[f64],
    budget: SearchBudget,
    seed: u64,
) -> Result<AuditReport> {
    let evidence = audit_evidence(model, scm, mcfg, ds, radii, budget, seed)?;
    Ok(AuditReport {
        accuracy: accuracy(model, ds)?,
        mcc: mcc(model, ds)?,
        uai: radii.iter().map(|&r| (r, rate(&evidence, |e| e.cap_flip_within(r)))).collect(),
        cf_rate: cf_rate(model, scm, ds)?,
        robustness: radii
            .iter()
            .map(|&r| (r, rate(&evidence, |e| e.robust_flip_within(r))))
            .collect(),
        n_points: ds.len(),
        search_restarts: budget.restarts,
        pgd_steps: budget.pgd_steps,
    })
}

// ── analytical unfair band (linear SCM + GLM) ──────────────────────────

/// Closed-form unfair-area geometry for a linear SCM with one binary
/// sensitive root and a linear classifier `h(v) = sign(w.v - b)`.
///
/// `c1` is the counterfactual half-width `|w.[F]_s| / ‖w‖_{p*}`; `c2(Δ)`
/// buffers it by `Δ ‖w_{-s}^T F_{-s}‖_{p*} / ‖w‖_{p*}`. Membership tests
/// run on logits, anchored at the counterfactual band (anchoring the buffer
/// at the decision boundary instead does not reproduce the search oracle).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnfairBand {
    pub w: Vec<f64>,
    pub b: f64,
    pub sensitive_index: usize,
    /// Logit shift of the `0 -> 1` twin move: `w . [F]_s`.
    pub twin_shift: f64,
    /// Dual-norm sensitivity of the logit to continuous offsets.
    pub kappa: f64,
    /// `‖w‖_{p*}`.
    pub w_norm: f64,
    pub c1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    Negative,
    Positive,
}

impl UnfairBand {
    pub fn c2(&self, delta: f64) -> f64 {
        delta * self.kappa / self.w_norm
    }

    pub fn logit(&self, v: &Instance) -> f64 {
        self.w.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>() - self.b
    }

    /// Logit shift when flipping the binary sensitive value of `v`.
    pub fn twin_logit_shift(&self, v: &Instance) -> f64 {
        (1.0 - 2.0 * v.values[self.sensitive_index]) * self.twin_shift
    }

    /// Membership in the counterfactual unfair area: the twin label differs.
    pub fn in_counterfactual_band(&self, v: &Instance) -> bool {
        let z = self.logit(v);
        let flipped = z + self.twin_logit_shift(v);
        (z > 0.0) != (flipped > 0.0)
    }

    /// Which signed region of the counterfactual band holds `v`.
    pub fn counterfactual_side(&self, v: &Instance) -> Option<BandSide> {
        if !self.in_counterfactual_band(v) {
            None
        } else if self.logit(v) > 0.0 {
            Some(BandSide::Positive)
        } else {
            Some(BandSide::Negative)
        }
    }

    /// Membership in the radius-`Δ` unfair area: the counterfactual band
    /// buffered by `c2(Δ)`, evaluated exactly on logits.
    pub fn in_delta_band(&self, v: &Instance, delta: f64) -> bool {
        let z = self.logit(v);
        let shift = self.twin_logit_shift(v);
        let reach = delta * self.kappa;
        if z > 0.0 {
            // Flip needs some reachable logit <= 0.
            z + shift.min(0.0) - reach <= 0.0
        } else {
            z + shift.max(0.0) + reach > 0.0
        }
    }

    /// Signed distance (in `l2` units of the continuous block) from the
    /// decision boundary, the coordinate the band widths `c1`, `c2` live in.
    pub fn signed_distance(&self, v: &Instance) -> f64 {
        self.logit(v) / self.w_norm
    }
}

/// Builds the band, rejecting nonlinear SCMs, non-GLM models, and sensitive
/// layouts other than one binary root.
pub fn analytical_unfair_band(
    scm: &ScmSpec,
    model: &ClassifierModel,
    mcfg: &MetricConfig,
) -> Result<UnfairBand> {
    let (w, b) = model
        .as_linear()
        .ok_or_else(|| Error::Audit("analytical band requires a linear classifier".into()))?;
    let f = scm
        .reduced_form()
        .ok_or_else(|| Error::Audit("analytical band requires a linear SCM".into()))?;
    let sens = scm.sensitive_indices();
    if sens.len() != 1 {
        return Err(Error::Audit("analytical band requires exactly one sensitive attribute".into()));
    }
    let s = sens[0];
    if scm.levels(s) != Some(&[0.0, 1.0][..]) {
        return Err(Error::Audit("sensitive attribute must be binary with levels 0/1".into()));
    }
    if scm.categorical_indices().len() != 1 {
        return Err(Error::Audit("all non-sensitive features must be continuous".into()));
    }
    let col = f.column(s);
    let twin_shift: f64 = w.iter().zip(&col).map(|(a, b)| a * b).sum();
    let cont = scm.continuous_indices();
    let mut wf = vec![0.0; cont.len()];
    for (k, &j) in cont.iter().enumerate() {
        for (i, wi) in w.iter().enumerate() {
            wf[k] += wi * f.matrix[i][j];
        }
    }
    let dual = mcfg.dual_p();
    let kappa = dual.norm(&wf);
    let w_norm = dual.norm(&w);
    if w_norm == 0.0 {
        return Err(Error::Audit("classifier weights are all zero".into()));
    }
    Ok(UnfairBand {
        c1: twin_shift.abs() / w_norm,
        w,
        b,
        sensitive_index: s,
        twin_shift,
        kappa,
        w_norm,
    })
}

// ── counterfactual mitigation ──────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    /// Flip negatively labeled unfair points to positive.
    NegativeToPositive,
    /// Flip positively labeled unfair points to negative.
    PositiveToNegative,
}

impl FlipDirection {
    fn source_label(&self) -> u8 {
        match self {
            FlipDirection::NegativeToPositive => 0,
            FlipDirection::PositiveToNegative => 1,
        }
    }

    fn target_label(&self) -> u8 {
        1 - self.source_label()
    }
}

/// A post-processed classifier that flips predictions on a subset of the
/// counterfactually unfair region (the side given by `direction`). With the
/// whole side selected, every mixed-label twin class collapses to the
/// target label and counterfactual unfairness vanishes.
pub struct MitigatedClassifier<'a> {
    model: &'a ClassifierModel,
    scm: &'a ScmSpec,
    direction: FlipDirection,
    selector: Option<&'a (dyn Fn(&Instance) -> bool + Sync)>,
}

impl MitigatedClassifier<'_> {
    /// Membership in the flip set: unfair, on the source side, selected.
    pub fn in_flip_set(&self, v: &Instance) -> Result<bool> {
        let label = self.model.predict_label(&v.values);
        if label != self.direction.source_label() {
            return Ok(false);
        }
        if let Some(sel) = self.selector {
            if !sel(v) {
                return Ok(false);
            }
        }
        let target = self.direction.target_label();
        Ok(self.scm.twins(v)?.iter().any(|t| self.model.predict_label(&t.values) == target))
    }

    pub fn predict_label(&self, v: &Instance) -> Result<u8> {
        if self.in_flip_set(v)? {
            Ok(self.direction.target_label())
        } else {
            Ok(self.model.predict_label(&v.values))
        }
    }
}

/// Wraps `model` with label flipping on `selector ∩ (source side of the
/// counterfactual unfair region)`. The selector is validated on the given
/// sample: selecting a point outside that region is an error. A `None`
/// selector takes the whole side, which removes counterfactual unfairness
/// completely.
pub fn counterfactual_mitigate<'a>(
    model: &'a ClassifierModel,
    scm: &'a ScmSpec,
    direction: FlipDirection,
    selector: Option<&'a (dyn Fn(&Instance) -> bool + Sync)>,
    validation: &[Instance],
) -> Result<MitigatedClassifier<'a>> {
    if let Some(sel) = selector {
        for v in validation {
            if sel(v) {
                let label = model.predict_label(&v.values);
                let target = direction.target_label();
                let unfair_source = label == direction.source_label()
                    && scm.twins(v)?.iter().any(|t| model.predict_label(&t.values) == target);
                if !unfair_source {
                    return Err(Error::InvalidSelector(format!(
                        "selected point {:?} is outside the flip region",
                        v.values
                    )));
                }
            }
        }
    }
    Ok(MitigatedClassifier { model, scm, direction, selector })
}

/// Owned, serializable form of a fully mitigated classifier (the whole
/// unfair side flipped); the file format behind the post-processing CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigatedModel {
    pub model: ClassifierModel,
    pub direction: FlipDirection,
}

impl MitigatedModel {
    pub fn as_classifier<'a>(&'a self, scm: &'a ScmSpec) -> MitigatedClassifier<'a> {
        MitigatedClassifier { model: &self.model, scm, direction: self.direction, selector: None }
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Monte-Carlo accounting of a mitigation: region probabilities from one
/// sample, the residual counterfactual rate from a fresh sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationReport {
    pub pre_cf_rate: f64,
    pub post_cf_rate: f64,
    /// P(counterfactually unfair area).
    pub p_unfair: f64,
    /// P(flip set C).
    pub p_flip: f64,
    /// P(points whose twin lies in C).
    pub p_flip_twins: f64,
    /// `p_unfair - p_flip - p_flip_twins`: the unfair mass the flip leaves.
    pub predicted_remaining: f64,
    /// Binomial standard error scale of the estimates.
    pub standard_error: f64,
    pub n_samples: usize,
}

pub fn mitigation_report(
    mitigated: &MitigatedClassifier<'_>,
    n: usize,
    seed: u64,
) -> Result<MitigationReport> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let model = mitigated.model;
    let scm = mitigated.scm;
    let sample_a = scm.sample(n, rng::mix(seed, 1))?;
    let target = mitigated.direction.target_label();

    let flags = par::map_collect(&sample_a, |v| -> Result<(bool, bool, bool)> {
        let label = model.predict_label(&v.values);
        let twins = scm.twins(v)?;
        let unfair = twins.iter().any(|t| model.predict_label(&t.values) != label);
        let in_flip = mitigated.in_flip_set(v)?;
        // Twin-of-flip membership: on the target side with a twin in C.
        let mut twin_in_flip = false;
        if unfair && label == target {
            for t in &twins {
                if t.values != v.values && mitigated.in_flip_set(t)? {
                    twin_in_flip = true;
                }
            }
        }
        Ok((unfair, in_flip, twin_in_flip))
    });
    let mut p_unfair = 0.0;
    let mut p_flip = 0.0;
    let mut p_flip_twins = 0.0;
    for f in flags {
        let (unfair, in_flip, twin_in_flip) = f?;
        p_unfair += f64::from(unfair);
        p_flip += f64::from(in_flip);
        p_flip_twins += f64::from(twin_in_flip);
    }
    p_unfair /= n as f64;
    p_flip /= n as f64;
    p_flip_twins /= n as f64;

    let sample_b = scm.sample(n, rng::mix(seed, 2))?;
    let post_flags = par::map_collect(&sample_b, |v| -> Result<bool> {
        let label = mitigated.predict_label(v)?;
        let twins = scm.twins(v)?;
        for t in &twins {
            if mitigated.predict_label(t)? != label {
                return Ok(true);
            }
        }
        Ok(false)
    });
    let mut post = 0.0;
    for f in post_flags {
        post += f64::from(f?);
    }
    post /= n as f64;

    let predicted = p_unfair - p_flip - p_flip_twins;
    let se = (p_unfair * (1.0 - p_unfair) / n as f64).sqrt()
        + (post * (1.0 - post) / n as f64).sqrt();
    Ok(MitigationReport {
        pre_cf_rate: p_unfair,
        post_cf_rate: post,
        p_unfair,
        p_flip,
        p_flip_twins,
        predicted_remaining: predicted,
        standard_error: se,
        n_samples: n,
    })
}
