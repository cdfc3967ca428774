//! Property tests for the causal-machinery invariants: round trips, twin
//! involutions, intervention algebra, and fair-metric axioms.

use capify_core::metric::{
    fair_distance, from_semi_latent, to_semi_latent, MetricConfig, PNorm, PseudometricSpec,
};
use capify_core::scm::{builtin, ExogenousPoint, Instance, Intervention, ScmSpec};
use proptest::prelude::*;

fn builtin_scm() -> impl Strategy<Value = ScmSpec> {
    prop_oneof![
        Just(builtin::by_name("lin").unwrap()),
        Just(builtin::by_name("nlm").unwrap()),
        Just(builtin::by_name("imf").unwrap()),
        Just(builtin::by_name("loan").unwrap()),
    ]
}

/// An instance built by pushing bounded exogenous noise through the SCM,
/// so categorical coordinates always hold declared levels.
fn instance_for(scm: &ScmSpec, raw: &[f64], flags: &[bool]) -> Instance {
    let u: Vec<f64> = (0..scm.dim())
        .map(|i| {
            if scm.nodes()[i].kind.is_categorical() {
                if flags[i % flags.len()] {
                    1.0
                } else {
                    0.0
                }
            } else {
                raw[i % raw.len()]
            }
        })
        .collect();
    scm.push_forward(&ExogenousPoint { values: u }).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let scale = x.abs().max(y.abs()).max(1.0);
        (x - y).abs() <= tol * scale
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn push_forward_inverts_abduction(
        scm in builtin_scm(),
        raw in prop::collection::vec(-20.0f64..20.0, 8),
        flags in prop::collection::vec(any::<bool>(), 4),
    ) {
        let v = instance_for(&scm, &raw, &flags);
        let u = scm.abduct(&v).unwrap();
        let back = scm.push_forward(&u).unwrap();
        prop_assert!(close(&back.values, &v.values, 1e-12));
    }

    #[test]
    fn twin_involution_and_factual_identity(
        scm in builtin_scm(),
        raw in prop::collection::vec(-10.0f64..10.0, 8),
        flags in prop::collection::vec(any::<bool>(), 4),
    ) {
        let v = instance_for(&scm, &raw, &flags);
        let s_idx = scm.sensitive_indices()[0];
        let factual_level = v.values[s_idx];

        // Intervening at the factual level is the identity.
        let same = scm
            .counterfactual(&v, &Intervention::Hard { targets: vec![s_idx], values: vec![factual_level] })
            .unwrap();
        prop_assert!(close(&same.values, &v.values, 1e-12));

        // The twin of the twin is the original.
        for level in [0.0, 1.0] {
            let twin = scm
                .counterfactual(&v, &Intervention::Hard { targets: vec![s_idx], values: vec![level] })
                .unwrap();
            let back = scm
                .counterfactual(
                    &twin,
                    &Intervention::Hard { targets: vec![s_idx], values: vec![factual_level] },
                )
                .unwrap();
            prop_assert!(close(&back.values, &v.values, 1e-12));
        }
    }

    #[test]
    fn additive_intervention_shifts_only_its_noise(
        scm in builtin_scm(),
        raw in prop::collection::vec(-10.0f64..10.0, 8),
        flags in prop::collection::vec(any::<bool>(), 4),
        shift in -3.0f64..3.0,
        pick in any::<prop::sample::Index>(),
    ) {
        let v = instance_for(&scm, &raw, &flags);
        let cont = scm.continuous_indices();
        let target = cont[pick.index(cont.len())];
        let cf = scm
            .counterfactual(&v, &Intervention::Additive { targets: vec![target], shifts: vec![shift] })
            .unwrap();
        let u = scm.abduct(&v).unwrap();
        let u_cf = scm.abduct(&cf).unwrap();
        for i in 0..scm.dim() {
            let expect = if i == target { u.values[i] + shift } else { u.values[i] };
            let scale = expect.abs().max(1.0);
            prop_assert!((u_cf.values[i] - expect).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn semi_latent_round_trip(
        scm in builtin_scm(),
        raw in prop::collection::vec(-20.0f64..20.0, 8),
        flags in prop::collection::vec(any::<bool>(), 4),
    ) {
        let v = instance_for(&scm, &raw, &flags);
        let q = to_semi_latent(&scm, &v).unwrap();
        let back = from_semi_latent(&scm, &q).unwrap();
        prop_assert!(close(&back.values, &v.values, 1e-12));
    }

    #[test]
    fn fair_metric_axioms(
        scm in builtin_scm(),
        raw in prop::collection::vec(-10.0f64..10.0, 24),
        flags in prop::collection::vec(any::<bool>(), 12),
        sensitive_metric in prop_oneof![
            Just(PseudometricSpec::Trivial),
            Just(PseudometricSpec::Discrete)
        ],
        p in prop_oneof![Just(PNorm::One), Just(PNorm::Two), Just(PNorm::Inf)],
    ) {
        let cfg = MetricConfig { sensitive: sensitive_metric, p };
        let a = instance_for(&scm, &raw[0..8], &flags[0..4]);
        let b = instance_for(&scm, &raw[8..16], &flags[4..8]);
        let c = instance_for(&scm, &raw[16..24], &flags[8..12]);
        let dab = fair_distance(&scm, &cfg, &a, &b).unwrap();
        let dba = fair_distance(&scm, &cfg, &b, &a).unwrap();
        prop_assert_eq!(dab.to_bits(), dba.to_bits(), "symmetry must be exact");
        prop_assert!(fair_distance(&scm, &cfg, &a, &a).unwrap() == 0.0);
        let dac = fair_distance(&scm, &cfg, &a, &c).unwrap();
        let dcb = fair_distance(&scm, &cfg, &c, &b).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-9, "triangle: {} > {} + {}", dab, dac, dcb);
    }

    #[test]
    fn scm_json_round_trip_preserves_semantics(
        scm in builtin_scm(),
        raw in prop::collection::vec(-10.0f64..10.0, 8),
        flags in prop::collection::vec(any::<bool>(), 4),
    ) {
        let back = ScmSpec::from_json(&scm.to_json().unwrap()).unwrap();
        let v = instance_for(&scm, &raw, &flags);
        let u1 = scm.abduct(&v).unwrap();
        let u2 = back.abduct(&v).unwrap();
        prop_assert!(close(&u1.values, &u2.values, 1e-12));
    }
}
