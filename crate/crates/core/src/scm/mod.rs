//! Additive-noise structural causal models.
//!
//! An SCM is a DAG of nodes stored in topological order. Continuous nodes
//! follow the additive-noise form `V_i := f_i(V_pa(i)) + U_i`, which makes
//! abduction closed-form: `U = V - f(V)`. Categorical nodes are restricted
//! to roots with the identity mechanism `V := U`; abduction for a non-root
//! categorical node has no defined inverse and is rejected at construction.
//!
//! Values are `f64` throughout; categorical coordinates hold level codes.
//! An `ScmSpec` is immutable after construction and safe to share across
//! threads. Sampling takes an explicit seed; there is no global state.

pub mod builtin;
mod io;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::rng;
use rand::Rng;
use rand_distr::Distribution;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Continuous,
    Categorical { levels: Vec<f64> },
}

impl NodeKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, NodeKind::Categorical { .. })
    }
}

/// Structural equation of a node, excluding its noise term.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// `V := U` (roots).
    Identity,
    /// `V := c`, produced by hard interventions; the noise is ignored.
    Fixed(f64),
    /// `V := sum_k coeffs[k] * V_parents[k] + intercept + U`.
    Linear { coeffs: Vec<f64>, intercept: f64 },
    /// `V := expr(V_parents) + U`.
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDist {
    Bernoulli { p: f64 },
    /// Parameterized by mean and variance.
    Normal { mean: f64, var: f64 },
    /// Shape/scale parameterization.
    Gamma { shape: f64, scale: f64 },
}

impl NoiseDist {
    fn validate(&self) -> Result<()> {
        match self {
            NoiseDist::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidDistribution(format!(
                        "Bernoulli p must be in [0,1], got {p}"
                    )));
                }
            }
            NoiseDist::Normal { var, .. } => {
                if !(*var > 0.0) {
                    return Err(Error::InvalidDistribution(format!(
                        "Normal variance must be positive, got {var}"
                    )));
                }
            }
            NoiseDist::Gamma { shape, scale } => {
                if !(*shape > 0.0 && *scale > 0.0) {
                    return Err(Error::InvalidDistribution(format!(
                        "Gamma parameters must be positive, got shape {shape}, scale {scale}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseDist::Bernoulli { p } => {
                if rng.gen_bool(*p) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseDist::Normal { mean, var } => {
                rand_distr::Normal::new(*mean, var.sqrt()).unwrap().sample(rng)
            }
            NoiseDist::Gamma { shape, scale } => {
                rand_distr::Gamma::new(*shape, *scale).unwrap().sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    pub mechanism: Mechanism,
    pub noise: NoiseDist,
    /// Indices of direct causes; all strictly smaller than this node's index.
    pub parents: Vec<usize>,
}

/// An assignment of the observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub values: Vec<f64>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// An assignment of the exogenous noise variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPoint {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    /// `do(V_targets := values)`: severs the targets' mechanisms.
    Hard { targets: Vec<usize>, values: Vec<f64> },
    /// Shifts the targets' mechanisms by the given amounts.
    Additive { targets: Vec<usize>, shifts: Vec<f64> },
    /// Hard part on categorical targets, additive part on continuous ones.
    Middle {
        hard_targets: Vec<usize>,
        hard_values: Vec<f64>,
        additive_targets: Vec<usize>,
        shifts: Vec<f64>,
    },
}

/// Reduced form of a linear SCM: `v = F * (c + u)` where `c` collects the
/// intercepts and `F = (I - A)^{-1}` for the coefficient matrix `A`.
#[derive(Debug, Clone)]
pub struct ReducedForm {
    /// Row-major `n x n` matrix.
    pub matrix: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl ReducedForm {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.iter().map(|row| row[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    name: String,
    nodes: Vec<NodeSpec>,
    sensitive: Vec<usize>,
}

impl ScmSpec {
    /// Validates and constructs an SCM. Nodes must already be listed in a
    /// topological order (every parent index smaller than the node index).
    pub fn new(name: impl Into<String>, nodes: Vec<NodeSpec>, sensitive: Vec<usize>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidScm("SCM must have at least one node".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            for &p in &node.parents {
                if p >= i {
                    return Err(Error::InvalidScm(format!(
                        "node {} has parent index {p} >= its own index {i}; \
                         nodes must be in topological order",
                        node.name
                    )));
                }
            }
            node.noise.validate()?;
            match &node.kind {
                NodeKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::InvalidScm(format!(
                            "categorical node {} has an empty level set",
                            node.name
                        )));
                    }
                    if !node.parents.is_empty() {
                        return Err(Error::InvalidScm(format!(
                            "categorical node {} has parents; abduction is only \
                             defined for categorical roots",
                            node.name
                        )));
                    }
                    if !matches!(node.mechanism, Mechanism::Identity | Mechanism::Fixed(_)) {
                        return Err(Error::InvalidScm(format!(
                            "categorical root {} must use the identity mechanism",
                            node.name
                        )));
                    }
                    if let NoiseDist::Bernoulli { .. } = node.noise {
                        if !(levels.contains(&0.0) && levels.contains(&1.0)) {
                            return Err(Error::InvalidScm(format!(
                                "Bernoulli noise on {} requires levels 0 and 1",
                                node.name
                            )));
                        }
                    }
                }
                NodeKind::Continuous => {}
            }
            match &node.mechanism {
                Mechanism::Linear { coeffs, .. } => {
                    if coeffs.len() != node.parents.len() {
                        return Err(Error::InvalidScm(format!(
                            "node {} has {} coefficients for {} parents",
                            node.name,
                            coeffs.len(),
                            node.parents.len()
                        )));
                    }
                }
                Mechanism::Expr(e) => {
                    for v in e.vars() {
                        if !node.parents.contains(&v) {
                            return Err(Error::InvalidScm(format!(
                                "node {} mechanism references non-parent node index {v}",
                                node.name
                            )));
                        }
                    }
                }
                Mechanism::Identity => {
                    if !node.parents.is_empty() {
                        return Err(Error::InvalidScm(format!(
                            "identity mechanism on non-root node {}",
                            node.name
                        )));
                    }
                }
                Mechanism::Fixed(_) => {}
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &s in &sensitive {
            if s >= n {
                return Err(Error::InvalidScm(format!("sensitive index {s} out of range")));
            }
            if !nodes[s].kind.is_categorical() {
                return Err(Error::InvalidScm(format!(
                    "sensitive node {} must be categorical with declared levels",
                    nodes[s].name
                )));
            }
            if !seen.insert(s) {
                return Err(Error::InvalidScm(format!("duplicate sensitive index {s}")));
            }
        }
        Ok(ScmSpec { name: name.into(), nodes, sensitive })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn sensitive_indices(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.nodes[i].kind.is_categorical()).collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.nodes[i].kind.is_categorical()).collect()
    }

    pub fn levels(&self, i: usize) -> Option<&[f64]> {
        match &self.nodes[i].kind {
            NodeKind::Categorical { levels } => Some(levels),
            NodeKind::Continuous => None,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    /// Checks dimension and that categorical coordinates hold declared levels.
    pub fn validate_instance(&self, v: &Instance) -> Result<()> {
        self.check_dim(v.dim())?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Categorical { levels } = &node.kind {
                if !levels.contains(&v.values[i]) {
                    return Err(Error::InvalidScm(format!(
                        "value {} of categorical node {} is not a declared level",
                        v.values[i], node.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Structural function `f_i` evaluated at the given full instance values,
    /// excluding the noise term. `Fixed` nodes return their constant.
    pub fn mechanism_value(&self, i: usize, values: &[f64]) -> f64 {
        let node = &self.nodes[i];
        match &node.mechanism {
            Mechanism::Identity => 0.0,
            Mechanism::Fixed(c) => *c,
            Mechanism::Linear { coeffs, intercept } => {
                let mut acc = *intercept;
                for (k, &p) in node.parents.iter().enumerate() {
                    acc += coeffs[k] * values[p];
                }
                acc
            }
            Mechanism::Expr(e) => e.eval(values),
        }
    }

    /// `∂f_i/∂V_j` at the given values; zero when `j` is not a parent.
    pub fn mechanism_partial(&self, i: usize, j: usize, values: &[f64]) -> f64 {
        let node = &self.nodes[i];
        match &node.mechanism {
            Mechanism::Identity | Mechanism::Fixed(_) => 0.0,
            Mechanism::Linear { coeffs, .. } => node
                .parents
                .iter()
                .position(|&p| p == j)
                .map_or(0.0, |k| coeffs[k]),
            Mechanism::Expr(e) => {
                if node.parents.contains(&j) {
                    e.partial(j, values)
                } else {
                    0.0
                }
            }
        }
    }

    /// Recovers the exogenous noise for an observed instance: `u = v - f(v)`.
    pub fn abduct(&self, v: &Instance) -> Result<ExogenousPoint> {
        self.validate_instance(v)?;
        let u = (0..self.dim())
            .map(|i| match &self.nodes[i].mechanism {
                // Hard-intervened nodes carry no noise; store zero.
                Mechanism::Fixed(_) => 0.0,
                _ => v.values[i] - self.mechanism_value(i, &v.values),
            })
            .collect();
        Ok(ExogenousPoint { values: u })
    }

    /// Evaluates the structural equations in topological order: `v = F(u)`.
    pub fn push_forward(&self, u: &ExogenousPoint) -> Result<Instance> {
        self.check_dim(u.values.len())?;
        let mut v = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            v[i] = match &self.nodes[i].mechanism {
                Mechanism::Fixed(c) => *c,
                _ => self.mechanism_value(i, &v) + u.values[i],
            };
        }
        Ok(Instance::new(v))
    }

    fn validate_hard_target(&self, t: usize, value: f64) -> Result<()> {
        if t >= self.dim() {
            return Err(Error::InvalidIntervention(format!("target index {t} out of range")));
        }
        if let NodeKind::Categorical { levels } = &self.nodes[t].kind {
            if !levels.contains(&value) {
                return Err(Error::InvalidIntervention(format!(
                    "value {value} is not a level of {}",
                    self.nodes[t].name
                )));
            }
        }
        Ok(())
    }

    fn validate_additive_target(&self, t: usize) -> Result<()> {
        if t >= self.dim() {
            return Err(Error::InvalidIntervention(format!("target index {t} out of range")));
        }
        if self.nodes[t].kind.is_categorical() {
            return Err(Error::InvalidIntervention(format!(
                "additive intervention on categorical node {}",
                self.nodes[t].name
            )));
        }
        Ok(())
    }

    /// Returns a new SCM with structural equations replaced according to the
    /// intervention; `self` is unchanged.
    pub fn intervene(&self, iv: &Intervention) -> Result<ScmSpec> {
        let (hard, additive): (Vec<(usize, f64)>, Vec<(usize, f64)>) = match iv {
            Intervention::Hard { targets, values } => {
                if targets.len() != values.len() {
                    return Err(Error::InvalidIntervention(
                        "hard targets and values differ in length".into(),
                    ));
                }
                (targets.iter().copied().zip(values.iter().copied()).collect(), Vec::new())
            }
            Intervention::Additive { targets, shifts } => {
                if targets.len() != shifts.len() {
                    return Err(Error::InvalidIntervention(
                        "additive targets and shifts differ in length".into(),
                    ));
                }
                (Vec::new(), targets.iter().copied().zip(shifts.iter().copied()).collect())
            }
            Intervention::Middle { hard_targets, hard_values, additive_targets, shifts } => {
                if hard_targets.len() != hard_values.len() || additive_targets.len() != shifts.len() {
                    return Err(Error::InvalidIntervention(
                        "middle intervention target/value lengths differ".into(),
                    ));
                }
                for &t in hard_targets {
                    if t < self.dim() && !self.nodes[t].kind.is_categorical() {
                        return Err(Error::InvalidIntervention(format!(
                            "middle intervention hard part must target categorical nodes, \
                             got {}",
                            self.nodes[t].name
                        )));
                    }
                }
                (
                    hard_targets.iter().copied().zip(hard_values.iter().copied()).collect(),
                    additive_targets.iter().copied().zip(shifts.iter().copied()).collect(),
                )
            }
        };
        for &(t, val) in &hard {
            self.validate_hard_target(t, val)?;
        }
        for &(t, _) in &additive {
            self.validate_additive_target(t)?;
            if hard.iter().any(|&(h, _)| h == t) {
                return Err(Error::InvalidIntervention(format!(
                    "node {} targeted by both hard and additive parts",
                    self.nodes[t].name
                )));
            }
        }

        let mut nodes = self.nodes.clone();
        for &(t, val) in &hard {
            nodes[t].mechanism = Mechanism::Fixed(val);
        }
        for &(t, delta) in &additive {
            nodes[t].mechanism = match nodes[t].mechanism.clone() {
                Mechanism::Identity => Mechanism::Linear { coeffs: vec![], intercept: delta },
                Mechanism::Fixed(c) => Mechanism::Fixed(c + delta),
                Mechanism::Linear { coeffs, intercept } => {
                    Mechanism::Linear { coeffs, intercept: intercept + delta }
                }
                Mechanism::Expr(e) => {
                    Mechanism::Expr(Expr::Add(Box::new(e), Box::new(Expr::Const(delta))))
                }
            };
        }
        Ok(ScmSpec { name: self.name.clone(), nodes, sensitive: self.sensitive.clone() })
    }

    /// Abduction, action, prediction: the three-step counterfactual.
    pub fn counterfactual(&self, v: &Instance, iv: &Intervention) -> Result<Instance> {
        let u = self.abduct(v)?;
        let intervened = self.intervene(iv)?;
        intervened.push_forward(&u)
    }

    /// All joint level assignments of the sensitive attributes, in level-set
    /// product order.
    pub fn sensitive_assignments(&self) -> Result<Vec<Vec<f64>>> {
        if self.sensitive.is_empty() {
            return Err(Error::InvalidScm("no sensitive attribute declared".into()));
        }
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for &s in &self.sensitive {
            let levels = self.levels(s).expect("sensitive nodes are categorical");
            let mut next = Vec::with_capacity(out.len() * levels.len());
            for prefix in &out {
                for &lv in levels {
                    let mut a = prefix.clone();
                    a.push(lv);
                    next.push(a);
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Counterfactual twins `{CF(v, do(S := s)) : s}` over the sensitive
    /// level assignments, in `sensitive_assignments` order. The entry at the
    /// factual assignment equals `v`.
    pub fn twins(&self, v: &Instance) -> Result<Vec<Instance>> {
        let assignments = self.sensitive_assignments()?;
        let u = self.abduct(v)?;
        assignments
            .iter()
            .map(|a| {
                let iv = Intervention::Hard { targets: self.sensitive.to_vec(), values: a.clone() };
                let intervened = self.intervene(&iv)?;
                intervened.push_forward(&u)
            })
            .collect()
    }

    /// Draws one exogenous point from the declared noise distributions.
    pub fn sample_exogenous<R: Rng>(&self, rng: &mut R) -> ExogenousPoint {
        ExogenousPoint { values: self.nodes.iter().map(|n| n.noise.sample(rng)).collect() }
    }

    /// Ancestral sampling: `n` instances, deterministic for a given seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Instance>> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = rng::stream(seed, &[0x5c4]);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = self.sample_exogenous(&mut rng);
            out.push(self.push_forward(&u)?);
        }
        Ok(out)
    }

    pub fn is_linear(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| matches!(n.mechanism, Mechanism::Identity | Mechanism::Linear { .. }))
    }

    /// Reduced form `F = (I - A)^{-1}` for linear SCMs, where `A` holds the
    /// linear coefficients. `None` when any mechanism is nonlinear or fixed.
    pub fn reduced_form(&self) -> Option<ReducedForm> {
        if !self.is_linear() {
            return None;
        }
        let n = self.dim();
        let mut f = vec![vec![0.0; n]; n];
        let mut intercepts = vec![0.0; n];
        for i in 0..n {
            // Row i of F: e_i + sum over parents of coeff * row(parent).
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            if let Mechanism::Linear { coeffs, intercept } = &self.nodes[i].mechanism {
                intercepts[i] = *intercept;
                for (k, &p) in self.nodes[i].parents.iter().enumerate() {
                    for j in 0..n {
                        row[j] += coeffs[k] * f[p][j];
                    }
                }
            }
            f[i] = row;
        }
        Some(ReducedForm { matrix: f, intercepts })
    }
}

#[cfg(test)]
mod tests {
    use super::builtin;
    use super::*;
    use approx::assert_relative_eq;

    fn lin() -> ScmSpec {
        builtin::by_name("lin").unwrap()
    }

    fn nlm() -> ScmSpec {
        builtin::by_name("nlm").unwrap()
    }

    fn imf() -> ScmSpec {
        builtin::by_name("imf").unwrap()
    }

    #[test]
    fn abduct_lin_by_hand() {
        // U1 = X1 - 2S, U2 = X2 - S + X1
        let u = lin().abduct(&Instance::new(vec![0.0, 1.0, -0.5])).unwrap();
        assert_relative_eq!(u.values[0], 0.0);
        assert_relative_eq!(u.values[1], 1.0);
        assert_relative_eq!(u.values[2], 0.5);
    }

    #[test]
    fn abduct_imf_is_identity() {
        let scm = imf();
        let v = Instance::new(vec![1.0, 0.3, -2.2]);
        let u = scm.abduct(&v).unwrap();
        assert_eq!(u.values, v.values);
    }

    #[test]
    fn abduct_round_trips_push_forward() {
        let scm = lin();
        let mut r = crate::rng::stream(11, &[]);
        for _ in 0..100 {
            let u0 = scm.sample_exogenous(&mut r);
            let v = scm.push_forward(&u0).unwrap();
            let u = scm.abduct(&v).unwrap();
            for (a, b) in u.values.iter().zip(&u0.values) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn push_forward_examples() {
        let v = lin().push_forward(&ExogenousPoint { values: vec![0.0, 1.0, 0.5] }).unwrap();
        assert_eq!(v.values, vec![0.0, 1.0, -0.5]);

        let v = nlm().push_forward(&ExogenousPoint { values: vec![1.0, 1.0, 1.0] }).unwrap();
        assert_relative_eq!(v.values[1], 3.0);
        assert_relative_eq!(v.values[2], -7.0);

        let v = lin().push_forward(&ExogenousPoint { values: vec![0.0, 0.0, 0.0] }).unwrap();
        assert_eq!(v.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hard_intervention_replaces_equation() {
        let scm = lin();
        let iv = Intervention::Hard { targets: vec![0], values: vec![1.0] };
        let m = scm.intervene(&iv).unwrap();
        assert_eq!(m.nodes()[0].mechanism, Mechanism::Fixed(1.0));
        assert_eq!(m.nodes()[1].mechanism, scm.nodes()[1].mechanism);
        // Original unchanged.
        assert_eq!(scm.nodes()[0].mechanism, Mechanism::Identity);
    }

    #[test]
    fn additive_intervention_shifts_mechanism() {
        let scm = lin();
        let iv = Intervention::Additive { targets: vec![1], shifts: vec![0.5] };
        let m = scm.intervene(&iv).unwrap();
        match &m.nodes()[1].mechanism {
            Mechanism::Linear { coeffs, intercept } => {
                assert_eq!(coeffs, &vec![2.0]);
                assert_relative_eq!(*intercept, 0.5);
            }
            other => panic!("unexpected mechanism {other:?}"),
        }
    }

    #[test]
    fn middle_intervention_applies_both() {
        let scm = lin();
        let iv = Intervention::Middle {
            hard_targets: vec![0],
            hard_values: vec![1.0],
            additive_targets: vec![2],
            shifts: vec![1.0],
        };
        let m = scm.intervene(&iv).unwrap();
        assert_eq!(m.nodes()[0].mechanism, Mechanism::Fixed(1.0));
        match &m.nodes()[2].mechanism {
            Mechanism::Linear { intercept, .. } => assert_relative_eq!(*intercept, 1.0),
            other => panic!("unexpected mechanism {other:?}"),
        }
    }

    #[test]
    fn intervention_validation() {
        let scm = lin();
        assert!(scm
            .intervene(&Intervention::Hard { targets: vec![9], values: vec![0.0] })
            .is_err());
        assert!(scm
            .intervene(&Intervention::Hard { targets: vec![0], values: vec![0.5] })
            .is_err());
        assert!(scm
            .intervene(&Intervention::Additive { targets: vec![0], shifts: vec![0.5] })
            .is_err());
        assert!(scm
            .intervene(&Intervention::Middle {
                hard_targets: vec![1],
                hard_values: vec![0.0],
                additive_targets: vec![],
                shifts: vec![],
            })
            .is_err());
    }

    #[test]
    fn counterfactual_lin_do_s1() {
        let v = Instance::new(vec![0.0, 1.0, -0.5]);
        let cf = lin()
            .counterfactual(&v, &Intervention::Hard { targets: vec![0], values: vec![1.0] })
            .unwrap();
        assert_relative_eq!(cf.values[0], 1.0);
        assert_relative_eq!(cf.values[1], 3.0);
        assert_relative_eq!(cf.values[2], -1.5);
    }

    #[test]
    fn counterfactual_at_factual_level_is_identity() {
        let v = Instance::new(vec![0.0, 1.0, -0.5]);
        let cf = lin()
            .counterfactual(&v, &Intervention::Hard { targets: vec![0], values: vec![0.0] })
            .unwrap();
        assert_eq!(cf.values, v.values);
    }

    #[test]
    fn counterfactual_nlm() {
        let v = Instance::new(vec![0.0, 1.0, 0.0]);
        let cf = nlm()
            .counterfactual(&v, &Intervention::Hard { targets: vec![0], values: vec![1.0] })
            .unwrap();
        assert_relative_eq!(cf.values[1], 3.0);
        assert_relative_eq!(cf.values[2], -7.0);
    }

    #[test]
    fn twins_lin_example() {
        let v = Instance::new(vec![0.0, 1.0, -0.5]);
        let tw = lin().twins(&v).unwrap();
        assert_eq!(tw.len(), 2);
        assert_eq!(tw[0].values, v.values);
        assert_relative_eq!(tw[1].values[1], 3.0);
        assert_relative_eq!(tw[1].values[2], -1.5);
    }

    #[test]
    fn twins_imf_differ_only_in_s() {
        let scm = imf();
        let v = Instance::new(vec![0.0, 0.7, -1.1]);
        for (i, tw) in scm.twins(&v).unwrap().iter().enumerate() {
            assert_eq!(tw.values[0], i as f64);
            assert_eq!(&tw.values[1..], &v.values[1..]);
        }
    }

    #[test]
    fn twin_of_twin_returns_original() {
        let scm = lin();
        let v = Instance::new(vec![0.0, 1.0, -0.5]);
        let tw = scm.twins(&v).unwrap();
        for t in &tw {
            let back = scm.twins(t).unwrap();
            let factual = &back[0]; // level 0 = the original's level
            for (a, b) in factual.values.iter().zip(&v.values) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn twins_require_sensitive_attribute() {
        let node = NodeSpec {
            name: "X".into(),
            kind: NodeKind::Continuous,
            mechanism: Mechanism::Identity,
            noise: NoiseDist::Normal { mean: 0.0, var: 1.0 },
            parents: vec![],
        };
        let scm = ScmSpec::new("bare", vec![node], vec![]).unwrap();
        assert!(scm.twins(&Instance::new(vec![0.0])).is_err());
    }

    #[test]
    fn sampling_mean_of_s_near_half() {
        let data = lin().sample(10_000, 7).unwrap();
        let mean_s: f64 = data.iter().map(|v| v.values[0]).sum::<f64>() / data.len() as f64;
        assert!((mean_s - 0.5).abs() < 0.02, "mean S = {mean_s}");
    }

    #[test]
    fn sampling_rejects_zero_count() {
        assert!(lin().sample(0, 7).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = lin().sample(200, 99).unwrap();
        let b = lin().sample(200, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_intervention_screens_off() {
        let m = lin()
            .intervene(&Intervention::Hard { targets: vec![0], values: vec![1.0] })
            .unwrap();
        for v in m.sample(500, 3).unwrap() {
            assert_eq!(v.values[0], 1.0);
        }
    }

    #[test]
    fn additive_intervention_shifts_abducted_noise() {
        let scm = lin();
        let v = Instance::new(vec![1.0, 2.0, 0.25]);
        let delta = 0.75;
        let cf = scm
            .counterfactual(&v, &Intervention::Additive { targets: vec![1], shifts: vec![delta] })
            .unwrap();
        let u = scm.abduct(&v).unwrap();
        let u_cf = scm.abduct(&cf).unwrap();
        assert_relative_eq!(u_cf.values[1], u.values[1] + delta, max_relative = 1e-12);
        assert_relative_eq!(u_cf.values[2], u.values[2], max_relative = 1e-12);
    }

    #[test]
    fn categorical_non_root_rejected() {
        let nodes = vec![
            NodeSpec {
                name: "S".into(),
                kind: NodeKind::Categorical { levels: vec![0.0, 1.0] },
                mechanism: Mechanism::Identity,
                noise: NoiseDist::Bernoulli { p: 0.5 },
                parents: vec![],
            },
            NodeSpec {
                name: "C".into(),
                kind: NodeKind::Categorical { levels: vec![0.0, 1.0] },
                mechanism: Mechanism::Linear { coeffs: vec![1.0], intercept: 0.0 },
                noise: NoiseDist::Bernoulli { p: 0.5 },
                parents: vec![0],
            },
        ];
        assert!(ScmSpec::new("bad", nodes, vec![0]).is_err());
    }

    #[test]
    fn invalid_noise_rejected() {
        let node = NodeSpec {
            name: "X".into(),
            kind: NodeKind::Continuous,
            mechanism: Mechanism::Identity,
            noise: NoiseDist::Normal { mean: 0.0, var: 0.0 },
            parents: vec![],
        };
        assert!(ScmSpec::new("bad", vec![node], vec![]).is_err());
    }

    #[test]
    fn reduced_form_of_lin() {
        let f = lin().reduced_form().unwrap();
        // F = [[1,0,0],[2,1,0],[-1,-1,1]]
        assert_eq!(f.matrix[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(f.matrix[1], vec![2.0, 1.0, 0.0]);
        assert_eq!(f.matrix[2], vec![-1.0, -1.0, 1.0]);
        assert_eq!(f.column(0), vec![1.0, 2.0, -1.0]);
        assert!(nlm().reduced_form().is_none());
    }

    #[test]
    fn reduced_form_twin_shift_matches_counterfactual() {
        let scm = lin();
        let f = scm.reduced_form().unwrap();
        let col = f.column(0);
        let v = Instance::new(vec![0.0, 0.4, 1.3]);
        let tw = scm.twins(&v).unwrap();
        for (i, val) in tw[1].values.iter().enumerate() {
            assert_relative_eq!(*val, v.values[i] + col[i], max_relative = 1e-12);
        }
    }
}
