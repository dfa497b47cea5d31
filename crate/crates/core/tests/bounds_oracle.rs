//! Effect bounds checked against exhaustive basic-solution enumeration and
//! against the generating models' true effects.

mod common;

use ivsign_core::bounds::{balke_pearl_bounds, response_type_polytope, SignVerdict};
use ivsign_core::estimands::sign;
use ivsign_core::search::{random_spec, GenOutcomeMode, SearchConfig};
use ivsign_core::{fixtures, stratum_estimands};

fn bernoulli_config(seed: u64) -> SearchConfig {
    SearchConfig {
        n_strata: (1, 2),
        outcome_mode: GenOutcomeMode::Bernoulli,
        seed,
        ..SearchConfig::default()
    }
}

/// The simplex endpoints agree with brute-force vertex enumeration.
#[test]
fn lp_matches_vertex_enumeration() {
    let config = bernoulli_config(31);
    let mut compared = 0;
    for draw in 0..120u64 {
        let spec = random_spec(&config, draw).unwrap();
        for s in &spec.strata {
            let polytope = response_type_polytope(&spec, &s.label).unwrap();
            let (lo_oracle, hi_oracle) =
                common::vertex_enum_bounds(&polytope.rows, &polytope.rhs, &polytope.objective)
                    .expect("laws from a valid model are feasible");
            let bounds = balke_pearl_bounds(&spec, &s.label).unwrap();
            assert!(bounds.feasible, "draw {draw} stratum {}", s.label);
            assert!(
                (bounds.lower - lo_oracle).abs() <= 1e-8,
                "draw {draw} {}: {} vs {lo_oracle}",
                s.label,
                bounds.lower
            );
            assert!(
                (bounds.upper - hi_oracle).abs() <= 1e-8,
                "draw {draw} {}: {} vs {hi_oracle}",
                s.label,
                bounds.upper
            );
            compared += 1;
        }
    }
    assert!(compared >= 120);
}

/// The true effect always lies inside the bounds, the interval is sane,
/// and decisive verdicts always match the true sign.
#[test]
fn soundness_on_random_models() {
    let config = bernoulli_config(32);
    let mut decisive = 0;
    for draw in 0..1000u64 {
        let spec = random_spec(&config, draw).unwrap();
        let table = stratum_estimands(&spec);
        for s in &spec.strata {
            let bounds = balke_pearl_bounds(&spec, &s.label).unwrap();
            let gamma = table.get(&s.label).unwrap().gamma;
            assert!(bounds.lower <= bounds.upper);
            assert!(bounds.lower >= -1.0 - 1e-12 && bounds.upper <= 1.0 + 1e-12);
            assert!(
                bounds.lower - 1e-9 <= gamma && gamma <= bounds.upper + 1e-9,
                "draw {draw} {}: {gamma} outside [{}, {}]",
                s.label,
                bounds.lower,
                bounds.upper
            );
            match bounds.sign_verdict {
                SignVerdict::Positive => {
                    decisive += 1;
                    assert_eq!(sign(gamma), 1, "draw {draw}");
                }
                SignVerdict::Negative => {
                    decisive += 1;
                    assert_eq!(sign(gamma), -1, "draw {draw}");
                }
                SignVerdict::Unidentified => {}
            }
        }
    }
    // Partial compliance rarely pins the sign, but it must happen sometimes.
    assert!(decisive > 0, "no decisive verdict in 1000 draws");
}

/// Perfect compliance collapses the interval onto the true effect.
#[test]
fn perfect_compliance_point_identification() {
    let bounds = balke_pearl_bounds(&fixtures::spec_bin(), "l0").unwrap();
    assert!((bounds.lower - 0.5).abs() <= 1e-10);
    assert!((bounds.upper - 0.5).abs() <= 1e-10);
    assert_eq!(bounds.sign_verdict, SignVerdict::Positive);

    let polytope = response_type_polytope(&fixtures::spec_bin(), "l0").unwrap();
    let (lo, hi) =
        common::vertex_enum_bounds(&polytope.rows, &polytope.rhs, &polytope.objective).unwrap();
    assert!((lo - 0.5).abs() <= 1e-10);
    assert!((hi - 0.5).abs() <= 1e-10);
}

/// Frozen regression values for a confounded partial-compliance model with
/// true effect 0.5 (endpoints fixed by the enumeration oracle).
#[test]
fn confounded_partial_compliance_interval() {
    let spec = common::confounded_bin_spec();
    let gamma = stratum_estimands(&spec).get("l0").unwrap().gamma;
    assert!((gamma - 0.5).abs() <= 1e-12);

    let polytope = response_type_polytope(&spec, "l0").unwrap();
    let (lo_oracle, hi_oracle) =
        common::vertex_enum_bounds(&polytope.rows, &polytope.rhs, &polytope.objective).unwrap();

    let bounds = balke_pearl_bounds(&spec, "l0").unwrap();
    assert!((bounds.lower - lo_oracle).abs() <= 1e-10);
    assert!((bounds.upper - hi_oracle).abs() <= 1e-10);
    assert!(bounds.lower <= 0.5 && 0.5 <= bounds.upper);
    // Frozen from the oracle run.
    assert!(
        (bounds.lower - 0.155).abs() <= 1e-9,
        "lower = {}",
        bounds.lower
    );
    assert!(
        (bounds.upper - 0.655).abs() <= 1e-9,
        "upper = {}",
        bounds.upper
    );
    assert_eq!(bounds.sign_verdict, SignVerdict::Positive);
}

/// An irrelevant instrument yields the vacuous no-instrument interval.
#[test]
fn irrelevant_instrument_interval_confirmed_by_oracle() {
    let mut spec = fixtures::spec_bin();
    spec.strata[0].latent[0].p_a_z1 = 0.5;
    spec.strata[0].latent[0].p_a_zm1 = 0.5;
    let polytope = response_type_polytope(&spec, "l0").unwrap();
    let (lo, hi) =
        common::vertex_enum_bounds(&polytope.rows, &polytope.rhs, &polytope.objective).unwrap();
    let bounds = balke_pearl_bounds(&spec, "l0").unwrap();
    assert!((bounds.lower - lo).abs() <= 1e-9);
    assert!((bounds.upper - hi).abs() <= 1e-9);
    assert!(bounds.lower < 0.0 && bounds.upper > 0.0);
    assert_eq!(bounds.sign_verdict, SignVerdict::Unidentified);
}
