//! Named identifying-condition checkers, the implication lattice among
//! them, and the three-level identification classifier with direct numeric
//! verification.
//!
//! Each checker works on an exact model, so "satisfied" is a deterministic
//! fact, not a statistical claim. Equality-type conditions compare against
//! a tolerance because they are measure-zero; the necessary-and-sufficient
//! positivity condition is strict. The classifier never reports a level
//! identified on assumption text alone: every claim is paired with a
//! direct numeric check (objective equals value function, Wald equals the
//! effect, signs agree) that must also pass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{all_bounds, SignVerdict};
use crate::estimands::{
    all_regimes, policy_objective, sign, stratum_estimands, value_function, EstimandError,
    ObjectiveKind, Regime,
};
use crate::scm::{ScmSpec, Stratum, DENOM_TOL};

/// Default tolerance for equality-type conditions.
pub const DEFAULT_CONDITION_TOL: f64 = 1e-9;

/// Tolerance for the classifier's direct numeric verifications.
pub const VERIFICATION_TOL: f64 = 1e-10;

/// Exhaustive regime enumeration is capped at this many strata.
pub const MAX_EXHAUSTIVE_STRATA: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionName {
    /// Cov(γ̃, δ̃ | l) = 0: no unmeasured common effect modifier.
    CuiA7,
    /// δ̃(l, u) = δ(l) for every class: independent compliance type.
    CuiA8,
    /// γ̃(l, u) = γ(l) for every class: no unmeasured treatment-outcome
    /// effect modification.
    QiuA5b1b,
    /// Same predicate as `CuiA8`, reported under its own name.
    QiuA5b2b,
    /// γ̃ and δ̃ each keep one sign within the stratum (zeros allowed).
    HanA,
    /// E[(γ̃/γ)(δ̃/δ) | l] > 0: necessary and sufficient for the Wald sign
    /// to identify the optimal action.
    Eq4NecSuf,
    /// Cov(γ̃/γ, δ̃/δ | l) ≥ 0: the sufficient covariance variant.
    Eq6PosCov,
    /// γ̃ and δ̃ comonotone in the declared class order, and
    /// sign(γ) = sign(δ).
    RationalAgents,
}

impl ConditionName {
    pub const ALL: [ConditionName; 8] = [
        ConditionName::CuiA7,
        ConditionName::CuiA8,
        ConditionName::QiuA5b1b,
        ConditionName::QiuA5b2b,
        ConditionName::HanA,
        ConditionName::Eq4NecSuf,
        ConditionName::Eq6PosCov,
        ConditionName::RationalAgents,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionName::CuiA7 => "cui_a7",
            ConditionName::CuiA8 => "cui_a8",
            ConditionName::QiuA5b1b => "qiu_a5b1b",
            ConditionName::QiuA5b2b => "qiu_a5b2b",
            ConditionName::HanA => "han_a",
            ConditionName::Eq4NecSuf => "eq4_nec_suf",
            ConditionName::Eq6PosCov => "eq6_pos_cov",
            ConditionName::RationalAgents => "rational_agents",
        }
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionName {
    type Err = ConditionError;

    fn from_str(s: &str) -> Result<ConditionName, ConditionError> {
        ConditionName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ConditionError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("unknown condition name {0:?}")]
    UnknownName(String),
    #[error(
        "condition {condition} undefined in stratum {stratum:?}: |{quantity}| below tolerance"
    )]
    Undefined {
        condition: ConditionName,
        stratum: String,
        quantity: String,
    },
    #[error("exhaustive verification supports at most {max} strata, spec has {count}")]
    TooManyStrata { count: usize, max: usize },
    #[error(transparent)]
    Estimand(#[from] EstimandError),
}

/// Verdict and diagnostic for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCondition {
    pub satisfied: bool,
    pub diagnostic: f64,
    pub note: String,
}

/// Verdict for one named condition over the whole model; satisfied overall
/// iff satisfied in every stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionName,
    pub tol: f64,
    pub satisfied: bool,
    pub strata: BTreeMap<String, StratumCondition>,
}

fn require_defined(s: &Stratum, condition: ConditionName) -> Result<(f64, f64), ConditionError> {
    let gamma = s.gamma();
    let delta = s.delta();
    if delta.abs() <= DENOM_TOL {
        return Err(ConditionError::Undefined {
            condition,
            stratum: s.label.clone(),
            quantity: "delta".to_string(),
        });
    }
    if gamma.abs() <= DENOM_TOL {
        return Err(ConditionError::Undefined {
            condition,
            stratum: s.label.clone(),
            quantity: "gamma".to_string(),
        });
    }
    Ok((gamma, delta))
}

/// Magnitude of a sign crossing: zero when all values share a weak sign,
/// otherwise the smaller excursion across zero.
fn sign_crossing(values: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for v in values {
        max = max.max(v);
        min = min.min(v);
    }
    f64::max(max, 0.0).min(f64::max(-min, 0.0))
}

/// Largest step violating the given direction (`+1` non-decreasing,
/// `-1` non-increasing) along the declared class order.
fn monotonicity_violation(values: &[f64], direction: i8) -> f64 {
    values
        .windows(2)
        .map(|w| {
            let step = w[1] - w[0];
            match direction {
                1 => (-step).max(0.0),
                _ => step.max(0.0),
            }
        })
        .fold(0.0, f64::max)
}

fn stratum_condition(
    s: &Stratum,
    name: ConditionName,
    tol: f64,
) -> Result<StratumCondition, ConditionError> {
    let gammas: Vec<f64> = s.latent.iter().map(|u| u.gamma_tilde()).collect();
    let deltas: Vec<f64> = s.latent.iter().map(|u| u.delta_tilde()).collect();
    Ok(match name {
        ConditionName::CuiA7 => {
            let cov = s.cov_gamma_delta();
            StratumCondition {
                satisfied: cov.abs() <= tol,
                diagnostic: cov,
                note: format!("cov(gamma_tilde, delta_tilde) = {cov}"),
            }
        }
        ConditionName::CuiA8 | ConditionName::QiuA5b2b => {
            let delta = s.delta();
            let dev = deltas.iter().map(|d| (d - delta).abs()).fold(0.0, f64::max);
            StratumCondition {
                satisfied: dev <= tol,
                diagnostic: dev,
                note: format!("max |delta_tilde - delta| = {dev}"),
            }
        }
        ConditionName::QiuA5b1b => {
            let gamma = s.gamma();
            let dev = gammas.iter().map(|g| (g - gamma).abs()).fold(0.0, f64::max);
            StratumCondition {
                satisfied: dev <= tol,
                diagnostic: dev,
                note: format!("max |gamma_tilde - gamma| = {dev}"),
            }
        }
        ConditionName::HanA => {
            let g_cross = sign_crossing(gammas.iter().copied());
            let d_cross = sign_crossing(deltas.iter().copied());
            let diag = g_cross.max(d_cross);
            StratumCondition {
                satisfied: diag <= tol,
                diagnostic: diag,
                note: format!("sign crossing: gamma_tilde {g_cross}, delta_tilde {d_cross}"),
            }
        }
        ConditionName::Eq4NecSuf => {
            let (gamma, delta) = require_defined(s, name)?;
            let stat = s.c() / delta / gamma;
            StratumCondition {
                satisfied: stat > 0.0,
                diagnostic: stat,
                note: format!("E[(gamma_tilde/gamma)(delta_tilde/delta)] = {stat}"),
            }
        }
        ConditionName::Eq6PosCov => {
            let (gamma, delta) = require_defined(s, name)?;
            let cov_form = s.c() / delta / gamma - 1.0;
            StratumCondition {
                satisfied: cov_form >= -tol,
                diagnostic: cov_form,
                note: format!("cov(gamma_tilde/gamma, delta_tilde/delta) = {cov_form}"),
            }
        }
        ConditionName::RationalAgents => {
            let (gamma, delta) = require_defined(s, name)?;
            let mono = [1i8, -1i8]
                .into_iter()
                .map(|dir| {
                    monotonicity_violation(&gammas, dir).max(monotonicity_violation(&deltas, dir))
                })
                .fold(f64::INFINITY, f64::min);
            let signs_agree = sign(gamma) == sign(delta);
            let margin = gamma.abs().min(delta.abs());
            let (satisfied, diagnostic) = if mono > tol {
                (false, -mono)
            } else if !signs_agree {
                (false, -margin)
            } else {
                (true, margin)
            };
            StratumCondition {
                satisfied,
                diagnostic,
                note: format!(
                    "comonotonicity violation {mono}; sign(gamma) {} sign(delta)",
                    if signs_agree {
                        "matches"
                    } else {
                        "differs from"
                    }
                ),
            }
        }
    })
}

/// Evaluate one named condition, per stratum and overall.
pub fn check_condition(
    spec: &ScmSpec,
    name: ConditionName,
    tol: f64,
) -> Result<ConditionReport, ConditionError> {
    let mut strata = BTreeMap::new();
    for s in &spec.strata {
        strata.insert(s.label.clone(), stratum_condition(s, name, tol)?);
    }
    let satisfied = strata.values().all(|c| c.satisfied);
    Ok(ConditionReport {
        condition: name,
        tol,
        satisfied,
        strata,
    })
}

/// Evaluate every named condition once.
pub fn all_conditions(
    spec: &ScmSpec,
    tol: f64,
) -> Result<BTreeMap<String, ConditionReport>, ConditionError> {
    ConditionName::ALL
        .into_iter()
        .map(|name| Ok((name.as_str().to_string(), check_condition(spec, name, tol)?)))
        .collect()
}

/// One implication edge of the lattice checked on a concrete model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEdge {
    pub antecedent: ConditionName,
    pub consequent: ConditionName,
    pub antecedent_holds: bool,
    pub consequent_holds: bool,
    /// `!antecedent_holds || consequent_holds`.
    pub holds: bool,
}

/// Result of asserting every lattice edge on one model. A violation would
/// be an implementation bug, not a property of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub edges: Vec<AuditEdge>,
    pub violations: Vec<AuditEdge>,
    pub pass: bool,
}

const LATTICE_EDGES: [(ConditionName, ConditionName); 6] = [
    (ConditionName::CuiA8, ConditionName::CuiA7),
    (ConditionName::CuiA7, ConditionName::Eq4NecSuf),
    (ConditionName::QiuA5b1b, ConditionName::CuiA7),
    (ConditionName::HanA, ConditionName::Eq4NecSuf),
    (ConditionName::Eq6PosCov, ConditionName::Eq4NecSuf),
    (ConditionName::RationalAgents, ConditionName::Eq6PosCov),
];

/// Evaluate all conditions and assert every implication edge on this model.
pub fn implication_audit(spec: &ScmSpec, tol: f64) -> Result<AuditReport, ConditionError> {
    let reports = all_conditions(spec, tol)?;
    let holds = |name: ConditionName| reports[name.as_str()].satisfied;
    let edges: Vec<AuditEdge> = LATTICE_EDGES
        .into_iter()
        .map(|(ante, cons)| {
            let antecedent_holds = holds(ante);
            let consequent_holds = holds(cons);
            AuditEdge {
                antecedent: ante,
                consequent: cons,
                antecedent_holds,
                consequent_holds,
                holds: !antecedent_holds || consequent_holds,
            }
        })
        .collect();
    let violations: Vec<AuditEdge> = edges.iter().filter(|e| !e.holds).cloned().collect();
    let pass = violations.is_empty();
    Ok(AuditReport {
        edges,
        violations,
        pass,
    })
}

/// What can be identified at each level of the assumption hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentificationLevel {
    ValueFunction,
    Cate,
    CateSign,
}

/// Whether one listed assumption holds; structural assumptions hold by
/// model construction and are never computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionStatus {
    pub name: String,
    pub satisfied: bool,
    pub structural: bool,
}

/// The direct numeric verification backing a level's identification claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelVerification {
    /// Worst gap between the weighted objective and the true value over all
    /// regimes.
    ValueFunction {
        max_abs_gap: f64,
        worst_regime: Regime,
        objective_at_worst: f64,
        value_at_worst: f64,
    },
    /// Worst gap between the Wald ratio and the true effect over strata.
    Cate {
        max_abs_gap: f64,
        worst_stratum: String,
        wald_at_worst: f64,
        gamma_at_worst: f64,
    },
    /// Whether the Wald sign matches the true sign in every stratum.
    CateSign {
        agree: bool,
        mismatched_strata: Vec<String>,
    },
}

/// One row of the identification summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: IdentificationLevel,
    pub assumptions: Vec<AssumptionStatus>,
    /// True only when a listed assumption holds and the paired verification
    /// passes.
    pub identified: bool,
    pub verified: bool,
    pub verification: LevelVerification,
}

/// Per-stratum effect bounds summarized for the classification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    pub lower: f64,
    pub upper: f64,
    pub verdict: SignVerdict,
}

/// The bounds route to sign identification: available for binary outcomes,
/// identified when every stratum's interval excludes zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub strata: BTreeMap<String, BoundsSummary>,
    pub all_decisive: bool,
    /// Decisive verdicts compared against the true sign of the effect.
    pub decisive_match_true_sign: bool,
    pub identified: bool,
}

/// Identification summary: which quantities this model identifies, each
/// claim backed by a direct numeric check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tol: f64,
    pub value_function: LevelRow,
    pub cate: LevelRow,
    pub cate_sign: LevelRow,
    /// `None` when the model has non-binary outcomes.
    pub sign_from_bounds: Option<BoundsRow>,
}

fn assumption(name: &str, satisfied: bool) -> AssumptionStatus {
    AssumptionStatus {
        name: name.to_string(),
        satisfied,
        structural: false,
    }
}

fn structural(name: &str) -> AssumptionStatus {
    AssumptionStatus {
        name: name.to_string(),
        satisfied: true,
        structural: true,
    }
}

/// Classify what the model identifies, verifying each claimed level
/// numerically.
pub fn classify_identification(
    spec: &ScmSpec,
    tol: f64,
) -> Result<ClassificationReport, ConditionError> {
    if spec.strata.len() > MAX_EXHAUSTIVE_STRATA {
        return Err(ConditionError::TooManyStrata {
            count: spec.strata.len(),
            max: MAX_EXHAUSTIVE_STRATA,
        });
    }
    let reports = all_conditions(spec, tol)?;
    let holds = |name: ConditionName| reports[name.as_str()].satisfied;
    let table = stratum_estimands(spec);

    // Value-function level: the weighted objective must reproduce the value
    // function for every regime.
    let value_row = {
        let mut max_gap = f64::NEG_INFINITY;
        let mut worst = None;
        for regime in all_regimes(spec) {
            let f1 = policy_objective(spec, &regime, ObjectiveKind::F1)?;
            let value = value_function(spec, &regime)?;
            let gap = (f1 - value).abs();
            if gap > max_gap {
                max_gap = gap;
                worst = Some((regime, f1, value));
            }
        }
        let (worst_regime, objective_at_worst, value_at_worst) =
            worst.expect("at least one regime exists");
        let assumption_holds = holds(ConditionName::CuiA8);
        let verified = max_gap <= VERIFICATION_TOL;
        LevelRow {
            level: IdentificationLevel::ValueFunction,
            assumptions: vec![
                assumption("cui_a8", holds(ConditionName::CuiA8)),
                structural("qiu_a5b2a"),
                assumption("qiu_a5b2b", holds(ConditionName::QiuA5b2b)),
            ],
            identified: assumption_holds && verified,
            verified,
            verification: LevelVerification::ValueFunction {
                max_abs_gap: max_gap,
                worst_regime,
                objective_at_worst,
                value_at_worst,
            },
        }
    };

    // Effect level: the Wald ratio must reproduce the effect per stratum.
    let cate_row = {
        let mut max_gap = f64::NEG_INFINITY;
        let mut worst = None;
        for s in &spec.strata {
            let e = table.get(&s.label).expect("table covers all strata");
            let wald = e.wald.ok_or_else(|| ConditionError::Undefined {
                condition: ConditionName::CuiA7,
                stratum: s.label.clone(),
                quantity: "delta".to_string(),
            })?;
            let gap = (wald - e.gamma).abs();
            if gap > max_gap {
                max_gap = gap;
                worst = Some((s.label.clone(), wald, e.gamma));
            }
        }
        let (worst_stratum, wald_at_worst, gamma_at_worst) =
            worst.expect("at least one stratum exists");
        let assumption_holds = holds(ConditionName::CuiA7) || holds(ConditionName::QiuA5b1b);
        let verified = max_gap <= VERIFICATION_TOL;
        LevelRow {
            level: IdentificationLevel::Cate,
            assumptions: vec![
                assumption("cui_a7", holds(ConditionName::CuiA7)),
                structural("qiu_a5b1a"),
                assumption("qiu_a5b1b", holds(ConditionName::QiuA5b1b)),
            ],
            identified: assumption_holds && verified,
            verified,
            verification: LevelVerification::Cate {
                max_abs_gap: max_gap,
                worst_stratum,
                wald_at_worst,
                gamma_at_worst,
            },
        }
    };

    // Sign level: the Wald sign must match the true sign per stratum.
    let sign_row = {
        let mut mismatched = Vec::new();
        for s in &spec.strata {
            let e = table.get(&s.label).expect("table covers all strata");
            let d_wald = e.d_wald.ok_or_else(|| ConditionError::Undefined {
                condition: ConditionName::Eq4NecSuf,
                stratum: s.label.clone(),
                quantity: "delta".to_string(),
            })?;
            if d_wald != e.d_star {
                mismatched.push(s.label.clone());
            }
        }
        let agree = mismatched.is_empty();
        let assumption_holds = holds(ConditionName::Eq4NecSuf);
        LevelRow {
            level: IdentificationLevel::CateSign,
            assumptions: vec![
                assumption("han_a", holds(ConditionName::HanA)),
                assumption("eq4_nec_suf", holds(ConditionName::Eq4NecSuf)),
                assumption("eq6_pos_cov", holds(ConditionName::Eq6PosCov)),
                assumption("rational_agents", holds(ConditionName::RationalAgents)),
            ],
            identified: assumption_holds && agree,
            verified: agree,
            verification: LevelVerification::CateSign {
                agree,
                mismatched_strata: mismatched,
            },
        }
    };

    let sign_from_bounds = if spec.is_bernoulli() {
        let bounds = all_bounds(spec).expect("bernoulli spec with known strata");
        let strata: BTreeMap<String, BoundsSummary> = bounds
            .iter()
            .map(|(label, b)| {
                (
                    label.clone(),
                    BoundsSummary {
                        lower: b.lower,
                        upper: b.upper,
                        verdict: b.sign_verdict,
                    },
                )
            })
            .collect();
        let all_decisive = strata
            .values()
            .all(|b| b.verdict != SignVerdict::Unidentified);
        let decisive_match_true_sign = strata.iter().all(|(label, b)| {
            let d_star = table.get(label).expect("table covers all strata").d_star;
            match b.verdict {
                SignVerdict::Positive => d_star == 1,
                SignVerdict::Negative => d_star == -1,
                SignVerdict::Unidentified => true,
            }
        });
        Some(BoundsRow {
            strata,
            all_decisive,
            decisive_match_true_sign,
            identified: all_decisive && decisive_match_true_sign,
        })
    } else {
        None
    };

    Ok(ClassificationReport {
        tol,
        value_function: value_row,
        cate: cate_row,
        cate_sign: sign_row,
        sign_from_bounds,
    })
}
