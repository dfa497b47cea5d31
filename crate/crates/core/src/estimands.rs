//! Exact estimands, observed-data laws, value functions, and policy
//! objectives for a finite model.
//!
//! Every quantity is computed by exact summation over the finite joint
//! distribution. Three numbers drive everything per stratum: the treatment
//! effect γ(l), the compliance contrast δ(l), and the instrument-outcome
//! contrast C(l) = Σ_u P(u|l) γ̃ δ̃. The Wald ratio C/δ identifies the sign
//! of γ exactly when E[(γ̃/γ)(δ̃/δ)|l] is positive, and that statistic is
//! tabulated here alongside its covariance form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scm::{Arm, ScmSpec, Stratum, DENOM_TOL};

/// Three-valued sign with exact zero mapped to 0.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Error)]
pub enum EstimandError {
    #[error("unknown stratum {0:?}")]
    UnknownStratum(String),
    #[error("{quantity} is within tolerance of zero in stratum {stratum:?}; ratio undefined")]
    UndefinedRatio { stratum: String, quantity: String },
    #[error("tie: {estimand} is within tolerance of zero in stratum {stratum:?}")]
    Tie { stratum: String, estimand: String },
    #[error("regime does not cover stratum {0:?}")]
    RegimeMissingStratum(String),
    #[error("regime assigns an action to unknown stratum {0:?}")]
    RegimeUnknownStratum(String),
}

/// A deterministic treatment rule: one ±1 action per stratum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Regime {
    actions: BTreeMap<String, Arm>,
}

impl Regime {
    pub fn new(actions: BTreeMap<String, Arm>) -> Regime {
        Regime { actions }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Regime
    where
        I: IntoIterator<Item = (S, Arm)>,
        S: Into<String>,
    {
        Regime {
            actions: pairs.into_iter().map(|(l, a)| (l.into(), a)).collect(),
        }
    }

    /// The constant regime assigning `arm` in every stratum of `spec`.
    pub fn uniform(spec: &ScmSpec, arm: Arm) -> Regime {
        Regime {
            actions: spec.labels().map(|l| (l.to_string(), arm)).collect(),
        }
    }

    pub fn action(&self, label: &str) -> Option<Arm> {
        self.actions.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Arm)> {
        self.actions.iter().map(|(l, a)| (l.as_str(), *a))
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Error unless the regime assigns exactly one action to every stratum
    /// of `spec` and nothing else.
    pub fn require_covers(&self, spec: &ScmSpec) -> Result<(), EstimandError> {
        for s in &spec.strata {
            if !self.actions.contains_key(&s.label) {
                return Err(EstimandError::RegimeMissingStratum(s.label.clone()));
            }
        }
        for label in self.actions.keys() {
            if spec.stratum(label).is_none() {
                return Err(EstimandError::RegimeUnknownStratum(label.clone()));
            }
        }
        Ok(())
    }
}

/// Per-stratum exact quantities. Ratios are populated only when their
/// denominators clear [`DENOM_TOL`]; signs map exact zero to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimands {
    /// γ(l) = E[Y_1 − Y_{-1} | l].
    pub gamma: f64,
    /// δ(l) = P(A=1|Z=1,l) − P(A=1|Z=−1,l).
    pub delta: f64,
    /// C(l) = E[Y|Z=1,l] − E[Y|Z=−1,l] = Σ_u P(u|l) γ̃ δ̃.
    pub c: f64,
    /// Conditional Wald ratio C(l)/δ(l).
    pub wald: Option<f64>,
    /// E[(γ̃/γ)(δ̃/δ) | l], computed as wald/γ.
    pub theorem1_stat: Option<f64>,
    /// Cov(γ̃/γ, δ̃/δ | l) = theorem1_stat − 1.
    pub cov_form: Option<f64>,
    /// sign(γ(l)).
    pub d_star: i8,
    /// sign(C(l)/δ(l)), when the Wald ratio is defined.
    pub d_wald: Option<i8>,
}

/// Map stratum label → exact estimands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimandTable {
    pub strata: BTreeMap<String, StratumEstimands>,
}

impl EstimandTable {
    pub fn get(&self, label: &str) -> Option<&StratumEstimands> {
        self.strata.get(label)
    }
}

fn stratum_record(s: &Stratum) -> StratumEstimands {
    let gamma = s.gamma();
    let delta = s.delta();
    let c = s.c();
    let wald = (delta.abs() > DENOM_TOL).then(|| c / delta);
    let theorem1_stat = match wald {
        Some(w) if gamma.abs() > DENOM_TOL => Some(w / gamma),
        _ => None,
    };
    StratumEstimands {
        gamma,
        delta,
        c,
        wald,
        theorem1_stat,
        cov_form: theorem1_stat.map(|t| t - 1.0),
        d_star: sign(gamma),
        d_wald: wald.map(sign),
    }
}

/// Tabulate every stratum's estimands by exact summation over latent
/// classes.
pub fn stratum_estimands(spec: &ScmSpec) -> EstimandTable {
    EstimandTable {
        strata: spec
            .strata
            .iter()
            .map(|s| (s.label.clone(), stratum_record(s)))
            .collect(),
    }
}

/// Margins of the observed data in one cell (Z = z, A = a) of a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedCell {
    /// P(A = a | Z = z, l).
    pub p_a: f64,
    /// E[Y · 1{A = a} | Z = z, l].
    pub y_partial: f64,
}

/// The exact observed-data law given `L = l`, marginalized over the latent
/// classes. For binary outcomes the full joint `P(Y=y, A=a | Z=z)` is also
/// tabulated (y indexed 0/1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedLawTable {
    pub stratum: String,
    /// P(Z = 1 | l), copied from the stratum for downstream reweighting.
    pub p_z: f64,
    /// Indexed by `[z.index()][a.index()]`.
    pub cells: [[ObservedCell; 2]; 2],
    /// Bernoulli mode only: `joint[z.index()][a.index()][y]` = P(Y=y, A=a | Z=z, l).
    pub joint: Option<[[[f64; 2]; 2]; 2]>,
}

impl ObservedLawTable {
    pub fn cell(&self, z: Arm, a: Arm) -> &ObservedCell {
        &self.cells[z.index()][a.index()]
    }

    /// E[Y | Z = z, l].
    pub fn e_y_given_z(&self, z: Arm) -> f64 {
        let row = &self.cells[z.index()];
        row[0].y_partial + row[1].y_partial
    }

    /// C(l) recomputed through the observed law.
    pub fn wald_numerator(&self) -> f64 {
        self.e_y_given_z(Arm::Treat) - self.e_y_given_z(Arm::Control)
    }

    /// P(A = a | l), marginalizing the instrument.
    pub fn p_a_marginal(&self, a: Arm) -> f64 {
        Arm::BOTH
            .iter()
            .map(|&z| self.p_z_arm(z) * self.cell(z, a).p_a)
            .sum()
    }

    /// E[Y | A = a, Z = z, l], undefined when the cell has no mass.
    pub fn e_y_given_a_z(&self, a: Arm, z: Arm) -> Option<f64> {
        let cell = self.cell(z, a);
        (cell.p_a.abs() > DENOM_TOL).then(|| cell.y_partial / cell.p_a)
    }

    /// E[Y · 1{A = a} | l].
    pub fn e_y_and_a(&self, a: Arm) -> f64 {
        Arm::BOTH
            .iter()
            .map(|&z| self.p_z_arm(z) * self.cell(z, a).y_partial)
            .sum()
    }

    /// E[Y | A = a, l], undefined when the arm has no mass.
    pub fn e_y_given_a(&self, a: Arm) -> Option<f64> {
        let p = self.p_a_marginal(a);
        (p.abs() > DENOM_TOL).then(|| self.e_y_and_a(a) / p)
    }

    /// Naive treated-vs-control contrast E[Y|A=1,l] − E[Y|A=−1,l].
    pub fn naive_contrast(&self) -> Option<f64> {
        Some(self.e_y_given_a(Arm::Treat)? - self.e_y_given_a(Arm::Control)?)
    }

    fn p_z_arm(&self, z: Arm) -> f64 {
        match z {
            Arm::Treat => self.p_z,
            Arm::Control => 1.0 - self.p_z,
        }
    }
}

/// Marginalize one stratum's model over its latent classes.
pub fn observed_law(spec: &ScmSpec, stratum: &str) -> Result<ObservedLawTable, EstimandError> {
    let s = spec
        .stratum(stratum)
        .ok_or_else(|| EstimandError::UnknownStratum(stratum.to_string()))?;

    let mut cells = [[ObservedCell {
        p_a: 0.0,
        y_partial: 0.0,
    }; 2]; 2];
    for &z in &Arm::BOTH {
        for &a in &Arm::BOTH {
            let mut p_a = 0.0;
            let mut y_partial = 0.0;
            for u in &s.latent {
                let p_treat = u.p_treat_given_z(z);
                let p_this = match a {
                    Arm::Treat => p_treat,
                    Arm::Control => 1.0 - p_treat,
                };
                p_a += u.prob * p_this;
                y_partial += u.prob * p_this * u.outcome.arm_mean(a);
            }
            cells[z.index()][a.index()] = ObservedCell { p_a, y_partial };
        }
    }

    let joint = s.is_bernoulli().then(|| {
        let mut table = [[[0.0f64; 2]; 2]; 2];
        for &z in &Arm::BOTH {
            for &a in &Arm::BOTH {
                for u in &s.latent {
                    let p_treat = u.p_treat_given_z(z);
                    let p_this = match a {
                        Arm::Treat => p_treat,
                        Arm::Control => 1.0 - p_treat,
                    };
                    let p_y1 = u.outcome.arm_mean(a);
                    table[z.index()][a.index()][1] += u.prob * p_this * p_y1;
                    table[z.index()][a.index()][0] += u.prob * p_this * (1.0 - p_y1);
                }
            }
        }
        table
    });

    Ok(ObservedLawTable {
        stratum: s.label.clone(),
        p_z: s.p_z,
        cells,
        joint,
    })
}

/// E[Y_{D(L)}]: the exact population value of a regime.
pub fn value_function(spec: &ScmSpec, regime: &Regime) -> Result<f64, EstimandError> {
    regime.require_covers(spec)?;
    let mut total = 0.0;
    for s in &spec.strata {
        let arm = regime.action(&s.label).expect("coverage checked");
        let inner: f64 = s
            .latent
            .iter()
            .map(|u| u.prob * u.outcome.arm_mean(arm))
            .sum();
        total += s.prob * inner;
    }
    Ok(total)
}

/// Which population objective to evaluate for a regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// E[ZAY·1{A=D(L)} / (δ(L) f(Z|L))], via its latent decomposition.
    F1,
    /// E[Y·1{Z=D(L)} / (δ(L) f(Z|L))]; differs from f1 by a regime-free offset.
    F2,
    /// E[(γ̃δ̃/δ(L)) · 1{D(L)=1}].
    F3,
    /// E[Y·1{D(L)=A} / f(A|L)] through the observed law; biased under
    /// confounding, which is exactly what it is here to demonstrate.
    QianNaive,
}

fn require_delta(s: &Stratum) -> Result<f64, EstimandError> {
    let delta = s.delta();
    if delta.abs() <= DENOM_TOL {
        return Err(EstimandError::UndefinedRatio {
            stratum: s.label.clone(),
            quantity: "delta".to_string(),
        });
    }
    Ok(delta)
}

/// Evaluate a population policy objective exactly.
pub fn policy_objective(
    spec: &ScmSpec,
    regime: &Regime,
    kind: ObjectiveKind,
) -> Result<f64, EstimandError> {
    regime.require_covers(spec)?;
    match kind {
        ObjectiveKind::F1 => {
            let mut total = 0.0;
            for s in &spec.strata {
                let delta = require_delta(s)?;
                let arm = regime.action(&s.label).expect("coverage checked");
                let inner: f64 = s
                    .latent
                    .iter()
                    .map(|u| u.prob * u.delta_tilde() * u.outcome.arm_mean(arm))
                    .sum();
                total += s.prob * inner / delta;
            }
            Ok(total)
        }
        ObjectiveKind::F2 => {
            let f1 = policy_objective(spec, regime, ObjectiveKind::F1)?;
            let mut offset = 0.0;
            for s in &spec.strata {
                let delta = require_delta(s)?;
                let inner: f64 = s
                    .latent
                    .iter()
                    .map(|u| {
                        u.prob
                            * (u.p_a_zm1 * u.outcome.arm_mean(Arm::Treat)
                                + (1.0 - u.p_a_zm1) * u.outcome.arm_mean(Arm::Control))
                    })
                    .sum();
                offset += s.prob * inner / delta;
            }
            Ok(f1 + offset)
        }
        ObjectiveKind::F3 => {
            let mut total = 0.0;
            for s in &spec.strata {
                let delta = require_delta(s)?;
                if regime.action(&s.label) == Some(Arm::Treat) {
                    total += s.prob * s.c() / delta;
                }
            }
            Ok(total)
        }
        ObjectiveKind::QianNaive => {
            let mut total = 0.0;
            for s in &spec.strata {
                let law = observed_law(spec, &s.label)?;
                let arm = regime.action(&s.label).expect("coverage checked");
                let p_arm = law.p_a_marginal(arm);
                if p_arm.abs() <= DENOM_TOL {
                    return Err(EstimandError::UndefinedRatio {
                        stratum: s.label.clone(),
                        quantity: format!("f(A={}|L)", arm.code()),
                    });
                }
                total += s.prob * law.e_y_and_a(arm) / p_arm;
            }
            Ok(total)
        }
    }
}

/// Which estimand the regime's sign is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeSource {
    /// sign(γ(l)) — the true optimum.
    TrueGamma,
    /// sign(C(l)/δ(l)) — the instrument-identified candidate.
    Wald,
}

/// Per-stratum sign regime from the named estimand. Ties and undefined
/// ratios are errors, never guesses.
pub fn optimal_regime(spec: &ScmSpec, source: RegimeSource) -> Result<Regime, EstimandError> {
    let mut actions = BTreeMap::new();
    for s in &spec.strata {
        let arm = match source {
            RegimeSource::TrueGamma => {
                let gamma = s.gamma();
                if gamma.abs() <= DENOM_TOL {
                    return Err(EstimandError::Tie {
                        stratum: s.label.clone(),
                        estimand: "gamma".to_string(),
                    });
                }
                if gamma > 0.0 {
                    Arm::Treat
                } else {
                    Arm::Control
                }
            }
            RegimeSource::Wald => {
                let delta = require_delta(s)?;
                let c = s.c();
                if c.abs() <= DENOM_TOL {
                    return Err(EstimandError::Tie {
                        stratum: s.label.clone(),
                        estimand: "wald".to_string(),
                    });
                }
                if c / delta > 0.0 {
                    Arm::Treat
                } else {
                    Arm::Control
                }
            }
        };
        actions.insert(s.label.clone(), arm);
    }
    Ok(Regime { actions })
}

/// Enumerate all `2^n` regimes over the spec's strata in a deterministic
/// order (stratum list order, `Treat` bit first).
pub fn all_regimes(spec: &ScmSpec) -> Vec<Regime> {
    let labels: Vec<&str> = spec.labels().collect();
    let n = labels.len();
    assert!(n <= 20, "exhaustive regime enumeration capped at 20 strata");
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0..(1u32 << n) {
        let actions = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let arm = if mask & (1 << i) == 0 {
                    Arm::Treat
                } else {
                    Arm::Control
                };
                (l.to_string(), arm)
            })
            .collect();
        out.push(Regime { actions });
    }
    out
}
