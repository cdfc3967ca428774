//! Built-in synthetic SCMs: `lin`, `nlm`, `imf`, and the semi-synthetic
//! `loan` model.
//!
//! Each model has one binary sensitive attribute. The loan model states its
//! education equation in additive-noise form (the noise enters the equation
//! additively rather than inside the logistic), which is what makes
//! abduction well-defined for it.

use super::{Mechanism, NodeKind, NodeSpec, NoiseDist, ScmSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;

fn binary_root(name: &str, p: f64) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        kind: NodeKind::Categorical { levels: vec![0.0, 1.0] },
        mechanism: Mechanism::Identity,
        noise: NoiseDist::Bernoulli { p },
        parents: vec![],
    }
}

fn gauss(name: &str, mechanism: Mechanism, var: f64, parents: Vec<usize>) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        kind: NodeKind::Continuous,
        mechanism,
        noise: NoiseDist::Normal { mean: 0.0, var },
        parents,
    }
}

fn expr(src: &str, names: &[&str]) -> Mechanism {
    Mechanism::Expr(
        Expr::parse(src, &|s| names.iter().position(|n| *n == s))
            .expect("built-in mechanism parses"),
    )
}

/// `S := U_S; X1 := 2S + U1; X2 := S - X1 + U2` with `S` sensitive.
pub fn lin() -> ScmSpec {
    let nodes = vec![
        binary_root("S", 0.5),
        gauss("X1", Mechanism::Linear { coeffs: vec![2.0], intercept: 0.0 }, 1.0, vec![0]),
        gauss("X2", Mechanism::Linear { coeffs: vec![1.0, -1.0], intercept: 0.0 }, 1.0, vec![0, 1]),
    ];
    ScmSpec::new("lin", nodes, vec![0]).expect("lin is valid")
}

/// `S := U_S; X1 := 2S^2 + U1; X2 := S - X1^2 + U2` with `S` sensitive.
pub fn nlm() -> ScmSpec {
    let names = ["S", "X1", "X2"];
    let nodes = vec![
        binary_root("S", 0.5),
        gauss("X1", expr("2*S^2", &names), 1.0, vec![0]),
        gauss("X2", expr("S - X1^2", &names), 1.0, vec![0, 1]),
    ];
    ScmSpec::new("nlm", nodes, vec![0]).expect("nlm is valid")
}

/// Independent manipulable features: `X1 := U1; X2 := U2`.
pub fn imf() -> ScmSpec {
    let nodes = vec![
        binary_root("S", 0.5),
        gauss("X1", Mechanism::Identity, 1.0, vec![]),
        gauss("X2", Mechanism::Identity, 1.0, vec![]),
    ];
    ScmSpec::new("imf", nodes, vec![0]).expect("imf is valid")
}

/// Semi-synthetic loan model over gender, age, education, loan amount,
/// duration, income and savings; `G` is the sensitive attribute.
pub fn loan() -> ScmSpec {
    let names = ["G", "A", "E", "L", "D", "I", "S"];
    let nodes = vec![
        binary_root("G", 0.5),
        NodeSpec {
            name: "A".into(),
            kind: NodeKind::Continuous,
            mechanism: Mechanism::Linear { coeffs: vec![], intercept: -35.0 },
            noise: NoiseDist::Gamma { shape: 10.0, scale: 3.5 },
            parents: vec![],
        },
        gauss(
            "E",
            expr("-0.5 + logistic(-1 + 0.5*G + logistic(0.1*A))", &names),
            0.25,
            vec![0, 1],
        ),
        gauss("L", expr("1 + 0.01*(A - 5)*(5 - A) + G", &names), 4.0, vec![0, 1]),
        gauss(
            "D",
            Mechanism::Linear { coeffs: vec![2.0, 0.1, 1.0], intercept: -1.0 },
            9.0,
            vec![0, 1, 3],
        ),
        gauss("I", expr("-4 + 0.1*(A + 35) + 2*G + G*E", &names), 4.0, vec![0, 1, 2]),
        gauss("S", expr("-4 + 1.5*indicator(I)*I", &names), 25.0, vec![5]),
    ];
    ScmSpec::new("loan", nodes, vec![0]).expect("loan is valid")
}

/// Looks up one of the built-in SCMs by name.
pub fn by_name(name: &str) -> Result<ScmSpec> {
    match name {
        "lin" => Ok(lin()),
        "nlm" => Ok(nlm()),
        "imf" => Ok(imf()),
        "loan" => Ok(loan()),
        other => Err(Error::UnknownDataset(other.into())),
    }
}

pub const NAMES: [&str; 4] = ["lin", "nlm", "imf", "loan"];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn all_builtins_construct_and_sample() {
        for name in NAMES {
            let scm = by_name(name).unwrap();
            let data = scm.sample(50, 5).unwrap();
            assert_eq!(data.len(), 50);
            for v in &data {
                scm.validate_instance(v).unwrap();
            }
        }
    }

    #[test]
    fn loan_sensitive_is_gender() {
        let scm = loan();
        assert_eq!(scm.sensitive_indices(), &[0]);
        assert_eq!(scm.nodes()[0].name, "G");
    }

    #[test]
    fn loan_mechanisms_evaluate_as_written() {
        let scm = loan();
        // G=1, A=0, E=0.3, L=2, D=1, I=4, S irrelevant for these checks.
        let vals = [1.0, 0.0, 0.3, 2.0, 1.0, 4.0, 0.0];
        let e = scm.mechanism_value(2, &vals);
        assert_relative_eq!(e, -0.5 + crate::expr::logistic(-1.0 + 0.5 + 0.5), max_relative = 1e-12);
        let l = scm.mechanism_value(3, &vals);
        assert_relative_eq!(l, 1.0 + 0.01 * (-5.0) * 5.0 + 1.0, max_relative = 1e-12);
        let d = scm.mechanism_value(4, &vals);
        assert_relative_eq!(d, -1.0 + 2.0 + 0.0 + 2.0, max_relative = 1e-12);
        let i = scm.mechanism_value(5, &vals);
        assert_relative_eq!(i, -4.0 + 3.5 + 2.0 + 0.3, max_relative = 1e-12);
        let s = scm.mechanism_value(6, &vals);
        assert_relative_eq!(s, -4.0 + 1.5 * 4.0, max_relative = 1e-12);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(by_name("adult").is_err());
    }
}
