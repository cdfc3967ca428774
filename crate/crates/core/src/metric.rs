//! Semi-latent transform, causal fair metric, and causal adversarial
//! perturbation (CAP) geometry.
//!
//! The semi-latent transform `T` keeps sensitive coordinates observed and
//! replaces every other coordinate by its exogenous noise. The fair metric
//! is the push-forward of a product metric on that space: a pseudometric on
//! each categorical coordinate (the trivial pseudometric makes an attribute
//! protected), an `l_p` norm on the continuous block, and an L2 combiner
//! across components. The CAP of radius `Δ` around `v` is the `d_fair` ball;
//! it decomposes into continuous disks around the counterfactual twins.

use crate::error::{Error, Result};
use crate::rng;
use crate::scm::{Instance, Mechanism, ScmSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Boundary tolerance for ball membership; double-precision abduction round
/// trips land within this of the exact distance.
pub const BOUNDARY_TOL: f64 = 1e-9;

// ── l_p norms ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    One,
    Two,
    Inf,
}

impl PNorm {
    pub fn norm(&self, xs: &[f64]) -> f64 {
        match self {
            PNorm::One => xs.iter().map(|x| x.abs()).sum(),
            PNorm::Two => xs.iter().map(|x| x * x).sum::<f64>().sqrt(),
            PNorm::Inf => xs.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Conjugate exponent: 1 <-> inf, 2 <-> 2.
    pub fn dual(&self) -> PNorm {
        match self {
            PNorm::One => PNorm::Inf,
            PNorm::Two => PNorm::Two,
            PNorm::Inf => PNorm::One,
        }
    }

    /// A unit-`p`-norm vector maximizing `d^T g`; zero vector when `g = 0`.
    pub fn steepest_unit(&self, g: &[f64]) -> Vec<f64> {
        match self {
            PNorm::Two => {
                let n = PNorm::Two.norm(g);
                if n == 0.0 {
                    vec![0.0; g.len()]
                } else {
                    g.iter().map(|x| x / n).collect()
                }
            }
            PNorm::Inf => g.iter().map(|x| if *x == 0.0 { 0.0 } else { x.signum() }).collect(),
            PNorm::One => {
                let mut best = 0usize;
                let mut best_abs = 0.0;
                for (i, x) in g.iter().enumerate() {
                    if x.abs() > best_abs {
                        best_abs = x.abs();
                        best = i;
                    }
                }
                let mut out = vec![0.0; g.len()];
                if best_abs > 0.0 {
                    out[best] = g[best].signum();
                }
                out
            }
        }
    }

    /// Projects `xs` onto the closed `p`-ball of the given radius.
    pub fn project(&self, xs: &mut [f64], radius: f64) {
        if radius <= 0.0 {
            xs.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        match self {
            PNorm::Two => {
                let n = PNorm::Two.norm(xs);
                if n > radius {
                    let s = radius / n;
                    xs.iter_mut().for_each(|x| *x *= s);
                }
            }
            PNorm::Inf => {
                xs.iter_mut().for_each(|x| *x = x.clamp(-radius, radius));
            }
            PNorm::One => {
                if PNorm::One.norm(xs) <= radius {
                    return;
                }
                // Euclidean projection onto the l1 ball (sort-based).
                let mut mags: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
                mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mut acc = 0.0;
                let mut theta = 0.0;
                for (k, m) in mags.iter().enumerate() {
                    acc += m;
                    let t = (acc - radius) / (k as f64 + 1.0);
                    if *m > t {
                        theta = t;
                    } else {
                        break;
                    }
                }
                for x in xs.iter_mut() {
                    *x = x.signum() * (x.abs() - theta).max(0.0);
                }
            }
        }
    }

    /// Uniform sample from the closed `p`-ball of the given radius.
    pub fn sample_in_ball<R: Rng>(&self, rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
        if dim == 0 || radius <= 0.0 {
            return vec![0.0; dim];
        }
        match self {
            PNorm::Inf => (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect(),
            PNorm::Two => {
                let normal = rand_distr::StandardNormal;
                let g: Vec<f64> =
                    (0..dim).map(|_| rand_distr::Distribution::sample(&normal, rng)).collect();
                let n = PNorm::Two.norm(&g);
                if n == 0.0 {
                    return vec![0.0; dim];
                }
                let u: f64 = rng.gen::<f64>();
                let r = radius * u.powf(1.0 / dim as f64);
                g.iter().map(|x| x / n * r).collect()
            }
            PNorm::One => {
                // Exponential spacings make (g_1..g_d)/(sum + e) uniform on
                // the simplex interior scaled into the ball.
                let exp = rand_distr::Exp::new(1.0).unwrap();
                let g: Vec<f64> =
                    (0..dim).map(|_| rand_distr::Distribution::sample(&exp, rng)).collect();
                let e: f64 = rand_distr::Distribution::sample(&exp, rng);
                let total: f64 = g.iter().sum::<f64>() + e;
                g.iter()
                    .map(|x| {
                        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        sign * radius * x / total
                    })
                    .collect()
            }
        }
    }
}

// ── pseudometrics on categorical levels ────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudometricSpec {
    /// All distances zero: the attribute is fully protected.
    Trivial,
    /// 0 iff equal, else 1.
    Discrete,
    /// Symmetric nonnegative matrix over level positions.
    Table(Vec<Vec<f64>>),
}

impl PseudometricSpec {
    /// Checks the pseudometric axioms for a table over `n` levels.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let PseudometricSpec::Table(t) = self {
            if t.len() != n || t.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidMetric(format!("table must be {n}x{n}")));
            }
            for i in 0..n {
                if t[i][i] != 0.0 {
                    return Err(Error::InvalidMetric("nonzero diagonal".into()));
                }
                for j in 0..n {
                    if t[i][j] < 0.0 {
                        return Err(Error::InvalidMetric("negative distance".into()));
                    }
                    if (t[i][j] - t[j][i]).abs() > 0.0 {
                        return Err(Error::InvalidMetric("asymmetric table".into()));
                    }
                    for k in 0..n {
                        if t[i][j] > t[i][k] + t[k][j] + 1e-12 {
                            return Err(Error::InvalidMetric(format!(
                                "triangle inequality fails at ({i},{j},{k})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Distance between level positions `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            PseudometricSpec::Trivial => 0.0,
            PseudometricSpec::Discrete => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            PseudometricSpec::Table(t) => t[i][j],
        }
    }
}

// ── metric configuration ───────────────────────────────────────────────

/// Product-metric configuration: a pseudometric for sensitive attributes,
/// the discrete metric for any other categorical coordinate, an `l_p` norm
/// on the continuous block, and an L2 combiner across components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub sensitive: PseudometricSpec,
    #[serde(with = "p_wire")]
    pub p: PNorm,
}

mod p_wire {
    use super::PNorm;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &PNorm, s: S) -> Result<S::Ok, S::Error> {
        match p {
            PNorm::One => s.serialize_u32(1),
            PNorm::Two => s.serialize_u32(2),
            PNorm::Inf => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PNorm, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Num(u32),
            Str(String),
        }
        match Wire::deserialize(d)? {
            Wire::Num(1) => Ok(PNorm::One),
            Wire::Num(2) => Ok(PNorm::Two),
            Wire::Str(s) if s == "inf" => Ok(PNorm::Inf),
            _ => Err(serde::de::Error::custom("p must be 1, 2 or \"inf\"")),
        }
    }
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { sensitive: PseudometricSpec::Trivial, p: PNorm::Two }
    }
}

impl MetricConfig {
    pub fn dual_p(&self) -> PNorm {
        self.p.dual()
    }

    pub fn validate(&self, scm: &ScmSpec) -> Result<()> {
        for &s in scm.sensitive_indices() {
            let n = scm.levels(s).map_or(0, |l| l.len());
            self.sensitive.validate(n)?;
        }
        Ok(())
    }

    fn coord_metric<'a>(&'a self, scm: &ScmSpec, idx: usize) -> &'a PseudometricSpec {
        if scm.sensitive_indices().contains(&idx) {
            &self.sensitive
        } else {
            &PseudometricSpec::Discrete
        }
    }

    /// Squared categorical-block distance between two level assignments
    /// given as values of the categorical coordinates of `scm`.
    pub fn categorical_dist_sq(&self, scm: &ScmSpec, a: &[f64], b: &[f64]) -> Result<f64> {
        let cats = scm.categorical_indices();
        if a.len() != cats.len() || b.len() != cats.len() {
            return Err(Error::DimensionMismatch { expected: cats.len(), got: a.len() });
        }
        let mut acc = 0.0;
        for (k, &idx) in cats.iter().enumerate() {
            let levels = scm.levels(idx).expect("categorical node has levels");
            let pos = |val: f64| -> Result<usize> {
                levels.iter().position(|&l| l == val).ok_or_else(|| {
                    Error::InvalidMetric(format!(
                        "value {val} is not a level of {}",
                        scm.nodes()[idx].name
                    ))
                })
            };
            let d = self.coord_metric(scm, idx).distance(pos(a[k])?, pos(b[k])?);
            acc += d * d;
        }
        Ok(acc)
    }
}

// ── semi-latent space ──────────────────────────────────────────────────

/// A point in the semi-latent space: sensitive coordinates observed, all
/// others replaced by their exogenous noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiLatentPoint {
    pub values: Vec<f64>,
}

impl SemiLatentPoint {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The transform `T`: `q_i = v_i` for sensitive `i`, `q_i = u_i` otherwise.
pub fn to_semi_latent(scm: &ScmSpec, v: &Instance) -> Result<SemiLatentPoint> {
    let u = scm.abduct(v)?;
    let q = (0..scm.dim())
        .map(|i| if scm.sensitive_indices().contains(&i) { v.values[i] } else { u.values[i] })
        .collect();
    Ok(SemiLatentPoint { values: q })
}

/// The inverse transform `T^{-1}`, evaluated in topological order.
pub fn from_semi_latent(scm: &ScmSpec, q: &SemiLatentPoint) -> Result<Instance> {
    if q.dim() != scm.dim() {
        return Err(Error::DimensionMismatch { expected: scm.dim(), got: q.dim() });
    }
    let mut v = vec![0.0; scm.dim()];
    for i in 0..scm.dim() {
        v[i] = if scm.sensitive_indices().contains(&i) {
            q.values[i]
        } else {
            match &scm.nodes()[i].mechanism {
                Mechanism::Fixed(c) => *c,
                _ => scm.mechanism_value(i, &v) + q.values[i],
            }
        };
    }
    Ok(Instance::new(v))
}

/// Hard counterfactual through the masking identity: `T^{-1}(T(v) ⊙_I θ)`.
/// Targets must be categorical coordinates; equals
/// `counterfactual(v, Hard(targets := values))` exactly.
pub fn counterfactual_via_mask(
    scm: &ScmSpec,
    v: &Instance,
    targets: &[usize],
    values: &[f64],
) -> Result<Instance> {
    if targets.len() != values.len() {
        return Err(Error::InvalidIntervention("targets and values differ in length".into()));
    }
    for (&t, &val) in targets.iter().zip(values) {
        if t >= scm.dim() || !scm.nodes()[t].kind.is_categorical() {
            return Err(Error::InvalidIntervention(format!(
                "mask target {t} is not a categorical coordinate"
            )));
        }
        let levels = scm.levels(t).expect("categorical");
        if !levels.contains(&val) {
            return Err(Error::InvalidIntervention(format!(
                "value {val} is not a level of {}",
                scm.nodes()[t].name
            )));
        }
    }
    let mut q = to_semi_latent(scm, v)?;
    for (&t, &val) in targets.iter().zip(values) {
        q.values[t] = val;
    }
    from_semi_latent(scm, &q)
}

/// Categorical coordinate values of an instance, in categorical-index order.
fn categorical_part(scm: &ScmSpec, v: &Instance) -> Vec<f64> {
    scm.categorical_indices().iter().map(|&i| v.values[i]).collect()
}

fn continuous_part(scm: &ScmSpec, q: &SemiLatentPoint) -> Vec<f64> {
    scm.continuous_indices().iter().map(|&i| q.values[i]).collect()
}

/// The causal fair metric `d_fair(v, w) = d_Q(T(v), T(w))`.
pub fn fair_distance(
    scm: &ScmSpec,
    cfg: &MetricConfig,
    v: &Instance,
    w: &Instance,
) -> Result<f64> {
    let qv = to_semi_latent(scm, v)?;
    let qw = to_semi_latent(scm, w)?;
    let cat_sq =
        cfg.categorical_dist_sq(scm, &categorical_part(scm, v), &categorical_part(scm, w))?;
    let xv = continuous_part(scm, &qv);
    let xw = continuous_part(scm, &qw);
    let diff: Vec<f64> = xv.iter().zip(&xw).map(|(a, b)| a - b).collect();
    let cont = cfg.p.norm(&diff);
    Ok((cat_sq + cont * cont).sqrt())
}

// ── causal adversarial perturbation ────────────────────────────────────

/// Jacobian of `T^{-1}` with respect to the continuous semi-latent
/// coordinates, evaluated at `v`: `J[i][k] = ∂v_i / ∂q_{cont_k}`. Computed
/// in topological order through the mechanism partials.
pub fn continuous_jacobian(scm: &ScmSpec, v: &Instance) -> Vec<Vec<f64>> {
    let n = scm.dim();
    let cont = scm.continuous_indices();
    let sensitive = scm.sensitive_indices();
    let mut jac = vec![vec![0.0; cont.len()]; n];
    for i in 0..n {
        if sensitive.contains(&i) {
            continue; // observed coordinate, independent of the latent block
        }
        for (k, &qk) in cont.iter().enumerate() {
            let mut acc = if i == qk { 1.0 } else { 0.0 };
            for &p in &scm.nodes()[i].parents {
                let df = scm.mechanism_partial(i, p, &v.values);
                if df != 0.0 {
                    acc += df * jac[p][k];
                }
            }
            jac[i][k] = acc;
        }
    }
    jac
}

#[derive(Debug, Clone)]
pub struct CapBall {
    pub center: Instance,
    pub radius: f64,
}

impl CapBall {
    pub fn new(center: Instance, radius: f64) -> Result<Self> {
        if radius < 0.0 {
            return Err(Error::InvalidMetric(format!("CAP radius must be >= 0, got {radius}")));
        }
        Ok(CapBall { center, radius })
    }
}

/// Categorical level assignments within distance `Δ` of `v`'s categorical
/// part, in level-product order. With a trivial sensitive pseudometric and
/// no other categorical variables this is the whole sensitive level set for
/// every `Δ >= 0`.
pub fn theta_set(
    scm: &ScmSpec,
    cfg: &MetricConfig,
    v: &Instance,
    delta: f64,
) -> Result<Vec<Vec<f64>>> {
    if delta < 0.0 {
        return Err(Error::InvalidMetric(format!("radius must be >= 0, got {delta}")));
    }
    let cats = scm.categorical_indices();
    let mut assignments: Vec<Vec<f64>> = vec![vec![]];
    for &idx in &cats {
        let levels = scm.levels(idx).expect("categorical");
        let mut next = Vec::with_capacity(assignments.len() * levels.len());
        for prefix in &assignments {
            for &lv in levels {
                let mut a = prefix.clone();
                a.push(lv);
                next.push(a);
            }
        }
        assignments = next;
    }
    let base = categorical_part(scm, v);
    let mut out = Vec::new();
    for a in assignments {
        let d_sq = cfg.categorical_dist_sq(scm, &a, &base)?;
        if d_sq.sqrt() <= delta + BOUNDARY_TOL {
            out.push(a);
        }
    }
    Ok(out)
}

/// Smallest positive pairwise categorical distance: below this radius the
/// CAP decomposes into full-radius disks around the twins. Infinite when
/// every categorical distance is zero.
pub fn delta_zero(scm: &ScmSpec, cfg: &MetricConfig) -> f64 {
    let mut best = f64::INFINITY;
    for &idx in &scm.categorical_indices() {
        let levels = scm.levels(idx).expect("categorical");
        let metric = if scm.sensitive_indices().contains(&idx) {
            cfg.sensitive.clone()
        } else {
            PseudometricSpec::Discrete
        };
        for i in 0..levels.len() {
            for j in (i + 1)..levels.len() {
                let d = metric.distance(i, j);
                if d > 0.0 && d < best {
                    best = d;
                }
            }
        }
    }
    best
}

/// Whether `w` lies in the CAP: `d_fair(center, w) <= Δ` up to the boundary
/// tolerance.
pub fn cap_contains(scm: &ScmSpec, cfg: &MetricConfig, ball: &CapBall, w: &Instance) -> Result<bool> {
    Ok(fair_distance(scm, cfg, &ball.center, w)? <= ball.radius + BOUNDARY_TOL)
}

/// Samples the CAP through the union decomposition: pick an admissible
/// categorical assignment uniformly, then a continuous offset uniform in the
/// disk of radius `sqrt(Δ² - d_Z²)`. This is a coverage sampler over the
/// set, not a volume-faithful sampler.
pub fn cap_sample(
    scm: &ScmSpec,
    cfg: &MetricConfig,
    ball: &CapBall,
    n: usize,
    seed: u64,
) -> Result<Vec<Instance>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    scm.validate_instance(&ball.center)?;
    let thetas = theta_set(scm, cfg, &ball.center, ball.radius)?;
    let base = categorical_part(scm, &ball.center);
    let cat_indices = scm.categorical_indices();
    let cont_indices = scm.continuous_indices();
    let mut rng = rng::stream(seed, &[0xca9]);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = &thetas[rng.gen_range(0..thetas.len())];
        let d_sq = cfg.categorical_dist_sq(scm, theta, &base)?;
        let radius_theta = (ball.radius * ball.radius - d_sq).max(0.0).sqrt();
        let twin = counterfactual_via_mask(scm, &ball.center, &cat_indices, theta)?;
        let mut q = to_semi_latent(scm, &twin)?;
        let offset = cfg.p.sample_in_ball(&mut rng, cont_indices.len(), radius_theta);
        for (k, &i) in cont_indices.iter().enumerate() {
            q.values[i] += offset[k];
        }
        out.push(from_semi_latent(scm, &q)?);
    }
    Ok(out)
}
