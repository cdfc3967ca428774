//! JSON (de)serialization of SCM specifications.
//!
//! The on-disk format refers to parents by node name and stores expression
//! mechanisms as strings, e.g.
//!
//! ```json
//! {
//!   "name": "lin",
//!   "sensitive": ["S"],
//!   "nodes": [
//!     {"name": "S", "kind": {"categorical": [0.0, 1.0]}, "parents": [],
//!      "mechanism": "identity", "noise": {"dist": "bernoulli", "params": [0.5]}},
//!     {"name": "X1", "kind": "continuous", "parents": ["S"],
//!      "mechanism": {"linear": {"coeffs": [2.0], "intercept": 0.0}},
//!      "noise": {"dist": "normal", "params": [0.0, 1.0]}}
//!   ]
//! }
//! ```

use super::{Mechanism, NodeKind, NodeSpec, NoiseDist, ScmSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct ScmWire {
    name: String,
    sensitive: Vec<String>,
    nodes: Vec<NodeWire>,
}

#[derive(Serialize, Deserialize)]
struct NodeWire {
    name: String,
    kind: KindWire,
    parents: Vec<String>,
    mechanism: MechanismWire,
    noise: NoiseWire,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindWire {
    Continuous,
    Categorical(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MechanismWire {
    Identity,
    Fixed(f64),
    Linear { coeffs: Vec<f64>, intercept: f64 },
    Expr(String),
}

#[derive(Serialize, Deserialize)]
struct NoiseWire {
    dist: String,
    params: Vec<f64>,
}

fn noise_to_wire(noise: &NoiseDist) -> NoiseWire {
    match noise {
        NoiseDist::Bernoulli { p } => NoiseWire { dist: "bernoulli".into(), params: vec![*p] },
        NoiseDist::Normal { mean, var } => {
            NoiseWire { dist: "normal".into(), params: vec![*mean, *var] }
        }
        NoiseDist::Gamma { shape, scale } => {
            NoiseWire { dist: "gamma".into(), params: vec![*shape, *scale] }
        }
    }
}

fn noise_from_wire(w: &NoiseWire) -> Result<NoiseDist> {
    let need = |n: usize| -> Result<()> {
        if w.params.len() != n {
            return Err(Error::InvalidDistribution(format!(
                "{} expects {n} parameters, got {}",
                w.dist,
                w.params.len()
            )));
        }
        Ok(())
    };
    match w.dist.as_str() {
        "bernoulli" => {
            need(1)?;
            Ok(NoiseDist::Bernoulli { p: w.params[0] })
        }
        "normal" => {
            need(2)?;
            Ok(NoiseDist::Normal { mean: w.params[0], var: w.params[1] })
        }
        "gamma" => {
            need(2)?;
            Ok(NoiseDist::Gamma { shape: w.params[0], scale: w.params[1] })
        }
        other => Err(Error::InvalidDistribution(format!("unknown distribution {other:?}"))),
    }
}

impl ScmSpec {
    pub fn to_json(&self) -> Result<String> {
        let names = self.node_names();
        let nodes = self
            .nodes()
            .iter()
            .map(|n| NodeWire {
                name: n.name.clone(),
                kind: match &n.kind {
                    NodeKind::Continuous => KindWire::Continuous,
                    NodeKind::Categorical { levels } => KindWire::Categorical(levels.clone()),
                },
                parents: n.parents.iter().map(|&p| names[p].clone()).collect(),
                mechanism: match &n.mechanism {
                    Mechanism::Identity => MechanismWire::Identity,
                    Mechanism::Fixed(c) => MechanismWire::Fixed(*c),
                    Mechanism::Linear { coeffs, intercept } => MechanismWire::Linear {
                        coeffs: coeffs.clone(),
                        intercept: *intercept,
                    },
                    Mechanism::Expr(e) => MechanismWire::Expr(e.render(&names)),
                },
                noise: noise_to_wire(&n.noise),
            })
            .collect();
        let wire = ScmWire {
            name: self.name().to_string(),
            sensitive: self.sensitive_indices().iter().map(|&s| names[s].clone()).collect(),
            nodes,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<ScmSpec> {
        let wire: ScmWire = serde_json::from_str(text)?;
        let names: Vec<String> = wire.nodes.iter().map(|n| n.name.clone()).collect();
        let index_of = |name: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidScm(format!("unknown node name {name:?}")))
        };
        let mut nodes = Vec::with_capacity(wire.nodes.len());
        for nw in &wire.nodes {
            let parents: Vec<usize> =
                nw.parents.iter().map(|p| index_of(p)).collect::<Result<_>>()?;
            let mechanism = match &nw.mechanism {
                MechanismWire::Identity => Mechanism::Identity,
                MechanismWire::Fixed(c) => Mechanism::Fixed(*c),
                MechanismWire::Linear { coeffs, intercept } => {
                    Mechanism::Linear { coeffs: coeffs.clone(), intercept: *intercept }
                }
                MechanismWire::Expr(src) => Mechanism::Expr(Expr::parse(src, &|s| {
                    names.iter().position(|n| n == s)
                })?),
            };
            nodes.push(NodeSpec {
                name: nw.name.clone(),
                kind: match &nw.kind {
                    KindWire::Continuous => NodeKind::Continuous,
                    KindWire::Categorical(levels) => {
                        NodeKind::Categorical { levels: levels.clone() }
                    }
                },
                mechanism,
                noise: noise_from_wire(&nw.noise)?,
                parents,
            });
        }
        let sensitive: Vec<usize> =
            wire.sensitive.iter().map(|s| index_of(s)).collect::<Result<_>>()?;
        ScmSpec::new(wire.name, nodes, sensitive)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<ScmSpec> {
        ScmSpec::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::builtin;
    use super::super::Instance;
    use approx::assert_relative_eq;

    #[test]
    fn builtins_round_trip_through_json() {
        for name in builtin::NAMES {
            let scm = builtin::by_name(name).unwrap();
            let json = scm.to_json().unwrap();
            let back = super::ScmSpec::from_json(&json).unwrap();
            assert_eq!(back.name(), scm.name());
            assert_eq!(back.sensitive_indices(), scm.sensitive_indices());
            // Mechanisms must agree numerically on sampled instances.
            for v in scm.sample(20, 3).unwrap() {
                let u_a = scm.abduct(&v).unwrap();
                let u_b = back.abduct(&v).unwrap();
                for (a, b) in u_a.values.iter().zip(&u_b.values) {
                    assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_unknown_parent_names() {
        let json = r#"{
            "name": "bad",
            "sensitive": [],
            "nodes": [
                {"name": "X", "kind": "continuous", "parents": ["Y"],
                 "mechanism": {"linear": {"coeffs": [1.0], "intercept": 0.0}},
                 "noise": {"dist": "normal", "params": [0.0, 1.0]}}
            ]
        }"#;
        assert!(super::ScmSpec::from_json(json).is_err());
    }

    #[test]
    fn instances_stay_valid_after_round_trip() {
        let scm = builtin::by_name("loan").unwrap();
        let back = super::ScmSpec::from_json(&scm.to_json().unwrap()).unwrap();
        let v = Instance::new(scm.sample(1, 9).unwrap()[0].values.clone());
        back.validate_instance(&v).unwrap();
    }
}
