//! Witness search: determinism, predicate semantics, and the lattice
//! consequences that make some predicates unsatisfiable.

mod common;

use ivsign_core::conditions::{implication_audit, DEFAULT_CONDITION_TOL};
use ivsign_core::scm::{ScmSpec, DENOM_TOL};
use ivsign_core::search::{
    evaluate_predicate, find_witness, random_spec, PredicateExpr, SearchConfig, SearchError,
};

fn config(seed: u64, budget: u64) -> SearchConfig {
    SearchConfig {
        seed,
        budget,
        ..SearchConfig::default()
    }
}

/// The separation predicate has witnesses in a modest budget, the result is
/// identical across worker counts, and the witness re-verifies after a
/// serialization round trip.
#[test]
fn separation_witness_is_found_deterministically() {
    let predicate: PredicateExpr = "eq4_nec_suf AND NOT han_a AND NOT cui_a7".parse().unwrap();
    let config = config(5, 2_000);

    let pool1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = pool1.install(|| find_witness(&config, &predicate).unwrap());
    let b = pool4.install(|| find_witness(&config, &predicate).unwrap());
    let a = a.expect("witness exists in budget");
    let b = b.expect("witness exists in budget");
    assert_eq!(a.draw_index, b.draw_index);
    assert_eq!(a.spec, b.spec);

    // Lowest-index-wins: no earlier candidate satisfies the predicate.
    for i in 0..a.draw_index {
        let spec = random_spec(&config, i).unwrap();
        assert!(!evaluate_predicate(&spec, &predicate, DEFAULT_CONDITION_TOL).unwrap());
    }

    // Round trip through the documented JSON format.
    assert!(a.spec.validate(DENOM_TOL).is_valid());
    let text = a.spec.to_canonical_json();
    let reparsed = ScmSpec::from_json_str(&text).unwrap();
    assert!(evaluate_predicate(&reparsed, &predicate, DEFAULT_CONDITION_TOL).unwrap());

    // The sidecar reports certify the predicate's condition values.
    assert!(a.conditions["eq4_nec_suf"].satisfied);
    assert!(!a.conditions["han_a"].satisfied);
    assert!(!a.conditions["cui_a7"].satisfied);
}

/// A falsifier (necessity failure with a flipped Wald sign) exists too.
#[test]
fn falsifier_witness_is_found() {
    let predicate: PredicateExpr = "NOT eq4_nec_suf AND sign_mismatch".parse().unwrap();
    let witness = find_witness(&config(6, 5_000), &predicate)
        .unwrap()
        .expect("falsifier exists in budget");
    assert!(evaluate_predicate(&witness.spec, &predicate, DEFAULT_CONDITION_TOL).unwrap());
}

/// A lattice-impossible predicate is never satisfied, even though the
/// constructive generator grants it the equality condition it asks for.
#[test]
fn impossible_predicate_returns_not_found() {
    let predicate: PredicateExpr = "cui_a7 AND NOT eq4_nec_suf".parse().unwrap();
    let outcome = find_witness(&config(7, 500), &predicate).unwrap();
    assert!(outcome.is_none());
}

/// Positive equality predicates are feasible thanks to the constructive
/// generation mode.
#[test]
fn equality_predicates_are_constructively_satisfiable() {
    for text in ["cui_a8", "qiu_a5b1b", "cui_a7 AND eq4_nec_suf"] {
        let predicate: PredicateExpr = text.parse().unwrap();
        let witness = find_witness(&config(8, 50), &predicate)
            .unwrap()
            .unwrap_or_else(|| panic!("no witness for {text}"));
        assert_eq!(
            witness.draw_index, 0,
            "{text} should hold at the first draw"
        );
        assert!(evaluate_predicate(&witness.spec, &predicate, DEFAULT_CONDITION_TOL).unwrap());
    }
}

/// Unsatisfiable margins surface as a generation error, not a hang.
#[test]
fn unsatisfiable_margins_error_out() {
    let config = SearchConfig {
        margin_gamma: 10.0,
        ..SearchConfig::default()
    };
    let err = random_spec(&config, 0).unwrap_err();
    assert!(matches!(err, SearchError::GenerationExhausted { .. }));
}

/// Invalid configs are rejected before any drawing happens.
#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        SearchConfig {
            n_strata: (0, 2),
            ..SearchConfig::default()
        },
        SearchConfig {
            n_latent: (3, 2),
            ..SearchConfig::default()
        },
        SearchConfig {
            margin_delta: 0.0,
            ..SearchConfig::default()
        },
        SearchConfig {
            mean_range: (1.0, 1.0),
            ..SearchConfig::default()
        },
    ] {
        assert!(matches!(
            random_spec(&bad, 0),
            Err(SearchError::InvalidConfig(_))
        ));
    }
}

/// The implication lattice holds over a thousand random models.
#[test]
fn lattice_soundness_on_random_models() {
    let config = config(9, 0);
    for draw in 0..1000u64 {
        let spec = random_spec(&config, draw).unwrap();
        let audit = implication_audit(&spec, DEFAULT_CONDITION_TOL).unwrap();
        assert!(audit.pass, "draw {draw}: {:?}", audit.violations);
    }
}
