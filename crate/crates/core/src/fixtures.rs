//! Canonical reference models used across tests, docs, and the CLI examples.
//!
//! These four models pin the regression values for the estimand engine and
//! exercise the sign-identification boundary: `spec_t` has no confounding
//! heterogeneity at all, `spec_a` is confounded yet sign-identified,
//! `spec_b` is the same model with its compliance profiles swapped so the
//! Wald sign flips against the true effect, and `spec_bin` is a binary
//! perfect-compliance model where bounds collapse to a point.

use crate::scm::{LatentClass, OutcomeModel, ScmSpec, Stratum};

/// One stratum, one latent profile: γ̃ ≡ 0.5, δ̃ ≡ 0.4.
pub fn spec_t() -> ScmSpec {
    ScmSpec {
        strata: vec![Stratum {
            label: "l0".to_string(),
            prob: 1.0,
            p_z: 0.5,
            latent: vec![LatentClass {
                label: "u0".to_string(),
                prob: 1.0,
                p_a_z1: 0.7,
                p_a_zm1: 0.3,
                outcome: OutcomeModel::mean(0.9, 0.4),
            }],
        }],
    }
}

/// Two latent classes whose compliance and effect heterogeneity point the
/// same way: the Wald sign matches the true sign even though neither the
/// value function nor the effect itself is identified.
pub fn spec_a() -> ScmSpec {
    ScmSpec {
        strata: vec![Stratum {
            label: "l0".to_string(),
            prob: 1.0,
            p_z: 0.5,
            latent: vec![
                LatentClass {
                    label: "u0".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.7,
                    p_a_zm1: 0.3,
                    outcome: OutcomeModel::mean(1.0, 0.0),
                },
                LatentClass {
                    label: "u1".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.3,
                    p_a_zm1: 0.5,
                    outcome: OutcomeModel::mean(0.0, 0.5),
                },
            ],
        }],
    }
}

/// `spec_a` with the two compliance rows swapped between classes; the Wald
/// contrast turns negative while the true effect stays positive.
pub fn spec_b() -> ScmSpec {
    ScmSpec {
        strata: vec![Stratum {
            label: "l0".to_string(),
            prob: 1.0,
            p_z: 0.5,
            latent: vec![
                LatentClass {
                    label: "u0".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.3,
                    p_a_zm1: 0.5,
                    outcome: OutcomeModel::mean(1.0, 0.0),
                },
                LatentClass {
                    label: "u1".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.7,
                    p_a_zm1: 0.3,
                    outcome: OutcomeModel::mean(0.0, 0.5),
                },
            ],
        }],
    }
}

/// Binary outcome under perfect compliance (A = Z); the treatment effect is
/// point-identified and the nonparametric bounds collapse onto it.
pub fn spec_bin() -> ScmSpec {
    ScmSpec {
        strata: vec![Stratum {
            label: "l0".to_string(),
            prob: 1.0,
            p_z: 0.5,
            latent: vec![LatentClass {
                label: "u0".to_string(),
                prob: 1.0,
                p_a_z1: 1.0,
                p_a_zm1: 0.0,
                outcome: OutcomeModel::bernoulli(0.8, 0.3),
            }],
        }],
    }
}
