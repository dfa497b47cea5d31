//! Nonparametric bounds on the per-stratum treatment effect for binary
//! outcomes, via linear programming over canonical response types.
//!
//! For binary `Y`, every joint law of the potential responses can be
//! written as a distribution over 16 response types: four compliance types
//! (how `A` reacts to `Z`) crossed with four outcome types (how `Y` reacts
//! to `A`). The observed cells `P(Y=y, A=a | Z=z)` pin eight linear
//! constraints on those 16 probabilities, and the treatment effect
//! `E[Y_1 - Y_{-1}]` is linear in them, so its exact range is a pair of
//! small LPs. When the range excludes zero the sign of the effect — and
//! hence the stratum's optimal action — is identified without any further
//! assumptions. The fixed 16-variable program is solved by a dense exact
//! method; no general-purpose solver is involved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimands::observed_law;
use crate::scm::{Arm, ScmSpec};
use crate::simplex::{self, LpOutcome};

/// How the treatment responds to the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceType {
    AlwaysTaker,
    NeverTaker,
    Complier,
    Defier,
}

impl ComplianceType {
    pub const ALL: [ComplianceType; 4] = [
        ComplianceType::AlwaysTaker,
        ComplianceType::NeverTaker,
        ComplianceType::Complier,
        ComplianceType::Defier,
    ];

    /// The treatment taken when the instrument is `z`.
    pub fn action(self, z: Arm) -> Arm {
        match self {
            ComplianceType::AlwaysTaker => Arm::Treat,
            ComplianceType::NeverTaker => Arm::Control,
            ComplianceType::Complier => z,
            ComplianceType::Defier => z.flip(),
        }
    }
}

/// How the binary outcome responds to the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    Always1,
    Never1,
    Helped,
    Hurt,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] = [
        ResponseType::Always1,
        ResponseType::Never1,
        ResponseType::Helped,
        ResponseType::Hurt,
    ];

    /// The outcome value under treatment arm `a`.
    pub fn outcome(self, a: Arm) -> u8 {
        match (self, a) {
            (ResponseType::Always1, _) => 1,
            (ResponseType::Never1, _) => 0,
            (ResponseType::Helped, Arm::Treat) => 1,
            (ResponseType::Helped, Arm::Control) => 0,
            (ResponseType::Hurt, Arm::Treat) => 0,
            (ResponseType::Hurt, Arm::Control) => 1,
        }
    }

    /// Contribution to `E[Y_1 - Y_{-1}]`.
    pub fn effect(self) -> f64 {
        f64::from(self.outcome(Arm::Treat)) - f64::from(self.outcome(Arm::Control))
    }
}

/// Number of joint response-type variables.
pub const NUM_TYPES: usize = 16;

/// Column index of `q(c, r)` in the LP.
pub fn type_index(c: ComplianceType, r: ResponseType) -> usize {
    let ci = ComplianceType::ALL.iter().position(|&x| x == c).unwrap();
    let ri = ResponseType::ALL.iter().position(|&x| x == r).unwrap();
    ci * 4 + ri
}

/// The feasible set for one stratum: equality rows over the 16 joint
/// response-type probabilities, plus the normalization row, with the
/// treatment-effect objective vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTypePolytope {
    pub stratum: String,
    /// Eight observed-cell rows (z, a, y in a fixed order) followed by the
    /// all-ones normalization row.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// Coefficients of `E[Y_1 - Y_{-1}]`.
    pub objective: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("unknown stratum {0:?}")]
    UnknownStratum(String),
    #[error("stratum {0:?} has a non-binary outcome model; bounds need bernoulli mode")]
    UnsupportedOutcome(String),
}

/// Build the response-type polytope from the exact observed law.
pub fn response_type_polytope(
    spec: &ScmSpec,
    stratum: &str,
) -> Result<ResponseTypePolytope, BoundsError> {
    let s = spec
        .stratum(stratum)
        .ok_or_else(|| BoundsError::UnknownStratum(stratum.to_string()))?;
    if !s.is_bernoulli() {
        return Err(BoundsError::UnsupportedOutcome(stratum.to_string()));
    }
    let law = observed_law(spec, stratum).expect("stratum existence checked");
    let joint = law.joint.expect("bernoulli law carries the joint table");

    let mut rows = Vec::with_capacity(9);
    let mut rhs = Vec::with_capacity(9);
    for &z in &Arm::BOTH {
        for &a in &Arm::BOTH {
            for y in [1u8, 0u8] {
                let mut row = vec![0.0; NUM_TYPES];
                for &c in &ComplianceType::ALL {
                    if c.action(z) != a {
                        continue;
                    }
                    for &r in &ResponseType::ALL {
                        if r.outcome(a) == y {
                            row[type_index(c, r)] = 1.0;
                        }
                    }
                }
                rows.push(row);
                rhs.push(joint[z.index()][a.index()][usize::from(y)]);
            }
        }
    }
    rows.push(vec![1.0; NUM_TYPES]);
    rhs.push(1.0);

    let mut objective = vec![0.0; NUM_TYPES];
    for &c in &ComplianceType::ALL {
        for &r in &ResponseType::ALL {
            objective[type_index(c, r)] = r.effect();
        }
    }

    Ok(ResponseTypePolytope {
        stratum: stratum.to_string(),
        rows,
        rhs,
        objective,
    })
}

/// Verdict read off an effect interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignVerdict {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
    #[serde(rename = "unidentified")]
    Unidentified,
}

/// Exact effect bounds for one stratum and the implied sign verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub stratum: String,
    pub lower: f64,
    pub upper: f64,
    pub sign_verdict: SignVerdict,
    /// False only if numerical tolerances made the polytope unsolvable,
    /// which cannot happen for laws generated from a storable model.
    pub feasible: bool,
}

/// Strict-inequality sign rule: `+1` when the whole interval is positive,
/// `-1` when negative, otherwise unidentified.
pub fn sign_from_bounds(lower: f64, upper: f64) -> SignVerdict {
    if lower > 0.0 {
        SignVerdict::Positive
    } else if upper < 0.0 {
        SignVerdict::Negative
    } else {
        SignVerdict::Unidentified
    }
}

/// Minimize and maximize the treatment effect over the stratum's polytope.
pub fn balke_pearl_bounds(spec: &ScmSpec, stratum: &str) -> Result<BoundsResult, BoundsError> {
    let polytope = response_type_polytope(spec, stratum)?;
    let lo = simplex::solve_min(&polytope.rows, &polytope.rhs, &polytope.objective);
    let hi = simplex::solve_max(&polytope.rows, &polytope.rhs, &polytope.objective);
    match (lo, hi) {
        (LpOutcome::Optimal { objective: lo, .. }, LpOutcome::Optimal { objective: hi, .. }) => {
            let lo = lo.clamp(-1.0, 1.0);
            let hi = hi.clamp(-1.0, 1.0);
            let (lower, upper) = (lo.min(hi), lo.max(hi));
            Ok(BoundsResult {
                stratum: stratum.to_string(),
                lower,
                upper,
                sign_verdict: sign_from_bounds(lower, upper),
                feasible: true,
            })
        }
        _ => Ok(BoundsResult {
            stratum: stratum.to_string(),
            lower: -1.0,
            upper: 1.0,
            sign_verdict: SignVerdict::Unidentified,
            feasible: false,
        }),
    }
}

/// Bounds for every stratum of a binary-outcome model.
pub fn all_bounds(spec: &ScmSpec) -> Result<BTreeMap<String, BoundsResult>, BoundsError> {
    spec.strata
        .iter()
        .map(|s| Ok((s.label.clone(), balke_pearl_bounds(spec, &s.label)?)))
        .collect()
}
