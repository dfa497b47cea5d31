//! Exact representation of finite structural causal models with a binary
//! instrument.
//!
//! A model is a mixture over observed covariate strata `L`. Each stratum
//! carries an instrument propensity `P(Z=1|L)`, a finite latent-class law
//! `P(U|L)`, per-class compliance probabilities `P(A=1|Z=z,L,U)`, and a
//! per-class outcome model for the potential outcomes `Y_1` and `Y_-1`.
//! The instrument is independent of `U` given `L` by construction, and the
//! outcome depends on the instrument only through the treatment, so the
//! standard exclusion and independence conditions hold for every storable
//! model. Everything downstream (estimands, condition checks, bounds,
//! simulation) is an exact function of these parameters.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Probability vectors must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Denominator guard: ratios and signs over quantities smaller than this are
/// reported as undefined rather than evaluated.
pub const DENOM_TOL: f64 = 1e-9;

/// Two-valued ±1 code shared by the instrument and the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Arm {
    /// Encoded as +1.
    Treat,
    /// Encoded as -1.
    Control,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treat, Arm::Control];

    /// The ±1 integer code used in datasets and reports.
    pub fn code(self) -> i8 {
        match self {
            Arm::Treat => 1,
            Arm::Control => -1,
        }
    }

    /// The ±1 code as a float, for use in weighted objectives.
    pub fn value(self) -> f64 {
        f64::from(self.code())
    }

    pub fn flip(self) -> Arm {
        match self {
            Arm::Treat => Arm::Control,
            Arm::Control => Arm::Treat,
        }
    }

    /// Stable index for fixed-size tables: `Treat → 0`, `Control → 1`.
    pub fn index(self) -> usize {
        match self {
            Arm::Treat => 0,
            Arm::Control => 1,
        }
    }
}

impl From<Arm> for i8 {
    fn from(a: Arm) -> i8 {
        a.code()
    }
}

impl TryFrom<i8> for Arm {
    type Error = String;

    fn try_from(v: i8) -> Result<Arm, String> {
        match v {
            1 => Ok(Arm::Treat),
            -1 => Ok(Arm::Control),
            other => Err(format!("arm code must be 1 or -1, got {other}")),
        }
    }
}

/// Conditional law of the two potential outcomes given `(L, U)`.
///
/// Only the per-arm marginals are represented; every estimand and the
/// sampling law of the observed outcome depend on nothing else. Mean mode
/// carries Gaussian sampling noise that exact computations never touch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawOutcome", try_from = "RawOutcome")]
pub enum OutcomeModel {
    Mean { m1: f64, mm1: f64, noise_sd: f64 },
    Bernoulli { p1: f64, pm1: f64 },
}

/// Default sampling noise for mean-mode outcomes.
pub const DEFAULT_NOISE_SD: f64 = 0.5;

impl OutcomeModel {
    pub fn mean(m1: f64, mm1: f64) -> OutcomeModel {
        OutcomeModel::Mean {
            m1,
            mm1,
            noise_sd: DEFAULT_NOISE_SD,
        }
    }

    pub fn bernoulli(p1: f64, pm1: f64) -> OutcomeModel {
        OutcomeModel::Bernoulli { p1, pm1 }
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self, OutcomeModel::Bernoulli { .. })
    }

    /// E[Y_a | L, U] for the given arm.
    pub fn arm_mean(&self, a: Arm) -> f64 {
        match (self, a) {
            (OutcomeModel::Mean { m1, .. }, Arm::Treat) => *m1,
            (OutcomeModel::Mean { mm1, .. }, Arm::Control) => *mm1,
            (OutcomeModel::Bernoulli { p1, .. }, Arm::Treat) => *p1,
            (OutcomeModel::Bernoulli { pm1, .. }, Arm::Control) => *pm1,
        }
    }
}

/// Flat on-disk form of [`OutcomeModel`]; `mode` selects which fields must be
/// present and all others are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutcome {
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    m1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mm1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pm1: Option<f64>,
}

impl From<OutcomeModel> for RawOutcome {
    fn from(o: OutcomeModel) -> RawOutcome {
        match o {
            OutcomeModel::Mean { m1, mm1, noise_sd } => RawOutcome {
                mode: "mean".to_string(),
                m1: Some(m1),
                mm1: Some(mm1),
                noise_sd: Some(noise_sd),
                p1: None,
                pm1: None,
            },
            OutcomeModel::Bernoulli { p1, pm1 } => RawOutcome {
                mode: "bernoulli".to_string(),
                m1: None,
                mm1: None,
                noise_sd: None,
                p1: Some(p1),
                pm1: Some(pm1),
            },
        }
    }
}

impl TryFrom<RawOutcome> for OutcomeModel {
    type Error = String;

    fn try_from(raw: RawOutcome) -> Result<OutcomeModel, String> {
        match raw.mode.as_str() {
            "mean" => {
                if raw.p1.is_some() || raw.pm1.is_some() {
                    return Err("mean-mode outcome must not carry p1/pm1".to_string());
                }
                let m1 = raw.m1.ok_or("mean-mode outcome requires m1")?;
                let mm1 = raw.mm1.ok_or("mean-mode outcome requires mm1")?;
                Ok(OutcomeModel::Mean {
                    m1,
                    mm1,
                    noise_sd: raw.noise_sd.unwrap_or(DEFAULT_NOISE_SD),
                })
            }
            "bernoulli" => {
                if raw.m1.is_some() || raw.mm1.is_some() || raw.noise_sd.is_some() {
                    return Err("bernoulli-mode outcome must not carry m1/mm1/noise_sd".to_string());
                }
                let p1 = raw.p1.ok_or("bernoulli-mode outcome requires p1")?;
                let pm1 = raw.pm1.ok_or("bernoulli-mode outcome requires pm1")?;
                Ok(OutcomeModel::Bernoulli { p1, pm1 })
            }
            other => Err(format!("unknown outcome mode {other:?}")),
        }
    }
}

/// One latent class `U = u` within a stratum.
///
/// The position of a class in its stratum's list defines the ordering used
/// by monotonicity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentClass {
    pub label: String,
    /// P(U = u | L = l).
    pub prob: f64,
    /// P(A = 1 | Z = 1, L = l, U = u).
    pub p_a_z1: f64,
    /// P(A = 1 | Z = -1, L = l, U = u).
    pub p_a_zm1: f64,
    pub outcome: OutcomeModel,
}

impl LatentClass {
    /// Compliance score: P(A=1|Z=1,L,U) − P(A=1|Z=−1,L,U).
    pub fn delta_tilde(&self) -> f64 {
        self.p_a_z1 - self.p_a_zm1
    }

    /// Class-level treatment effect: E[Y_1 − Y_{-1} | L, U].
    pub fn gamma_tilde(&self) -> f64 {
        self.outcome.arm_mean(Arm::Treat) - self.outcome.arm_mean(Arm::Control)
    }

    /// P(A = 1 | Z = z, L, U).
    pub fn p_treat_given_z(&self, z: Arm) -> f64 {
        match z {
            Arm::Treat => self.p_a_z1,
            Arm::Control => self.p_a_zm1,
        }
    }
}

/// One covariate stratum `L = l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub label: String,
    /// P(L = l).
    pub prob: f64,
    /// P(Z = 1 | L = l); instrument positivity requires 0 < p_z < 1.
    pub p_z: f64,
    #[serde(rename = "u")]
    pub latent: Vec<LatentClass>,
}

impl Stratum {
    /// P(Z = z | L = l).
    pub fn p_z_arm(&self, z: Arm) -> f64 {
        match z {
            Arm::Treat => self.p_z,
            Arm::Control => 1.0 - self.p_z,
        }
    }

    /// Conditional average treatment effect γ(l) = Σ_u P(u|l) γ̃(l,u).
    pub fn gamma(&self) -> f64 {
        self.latent.iter().map(|u| u.prob * u.gamma_tilde()).sum()
    }

    /// Average compliance score δ(l) = Σ_u P(u|l) δ̃(l,u).
    pub fn delta(&self) -> f64 {
        self.latent.iter().map(|u| u.prob * u.delta_tilde()).sum()
    }

    /// Instrument-outcome contrast C(l) = Σ_u P(u|l) γ̃(l,u) δ̃(l,u).
    pub fn c(&self) -> f64 {
        self.latent
            .iter()
            .map(|u| u.prob * u.gamma_tilde() * u.delta_tilde())
            .sum()
    }

    /// Cov(γ̃, δ̃ | l) = C(l) − γ(l) δ(l).
    pub fn cov_gamma_delta(&self) -> f64 {
        self.c() - self.gamma() * self.delta()
    }

    pub fn is_bernoulli(&self) -> bool {
        self.latent.iter().all(|u| u.outcome.is_bernoulli())
    }
}

/// A complete finite model: the marginal law of `L` plus everything inside
/// each stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    pub strata: Vec<Stratum>,
}

impl ScmSpec {
    /// Parse the documented JSON spec format. Unknown keys are rejected.
    pub fn from_json_str(s: &str) -> Result<ScmSpec, SpecError> {
        serde_json::from_str(s).map_err(|e| SpecError::Parse(e.to_string()))
    }

    /// Compact canonical JSON used for digests and byte-stable output.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization cannot fail")
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in hash {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    pub fn stratum(&self, label: &str) -> Option<&Stratum> {
        self.strata.iter().find(|s| s.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.strata.iter().map(|s| s.label.as_str())
    }

    pub fn is_bernoulli(&self) -> bool {
        self.strata.iter().all(Stratum::is_bernoulli)
    }

    /// Check every structural invariant and flag weak instruments.
    ///
    /// Malformed probabilities are error-level findings; an IV-relevance
    /// failure (|δ(l)| ≤ `tol_delta`) is a warning because the model is
    /// still storable and sampleable, only its estimand ratios are
    /// undefined.
    pub fn validate(&self, tol_delta: f64) -> ValidationReport {
        let mut findings = Vec::new();
        let mut error = |location: &str, message: String| {
            findings.push(Finding {
                severity: Severity::Error,
                location: location.to_string(),
                message,
            });
        };

        if self.strata.is_empty() {
            error("spec", "spec has no strata".to_string());
            return ValidationReport { findings };
        }

        let mut seen = BTreeSet::new();
        for s in &self.strata {
            if !seen.insert(s.label.as_str()) {
                error("spec", format!("duplicate stratum label {:?}", s.label));
            }
        }

        let total: f64 = self.strata.iter().map(|s| s.prob).sum();
        if !((total - 1.0).abs() <= PROB_SUM_TOL) {
            error("spec", format!("stratum probabilities sum to {total}"));
        }

        for s in &self.strata {
            let loc = format!("stratum {}", s.label);
            if !(s.prob > 0.0 && s.prob <= 1.0) {
                error(
                    &loc,
                    format!("stratum probability {} outside (0, 1]", s.prob),
                );
            }
            if !(s.p_z > 0.0 && s.p_z < 1.0) {
                error(
                    &loc,
                    format!("p_z {} violates instrument positivity (0, 1)", s.p_z),
                );
            }
            if s.latent.is_empty() {
                error(&loc, "stratum has no latent classes".to_string());
                continue;
            }

            let mut seen_u = BTreeSet::new();
            for u in &s.latent {
                if !seen_u.insert(u.label.as_str()) {
                    error(&loc, format!("duplicate latent label {:?}", u.label));
                }
            }

            let latent_total: f64 = s.latent.iter().map(|u| u.prob).sum();
            if !((latent_total - 1.0).abs() <= PROB_SUM_TOL) {
                error(&loc, format!("latent probabilities sum to {latent_total}"));
            }

            for u in &s.latent {
                let uloc = format!("stratum {} class {}", s.label, u.label);
                if !(u.prob > 0.0 && u.prob <= 1.0) {
                    error(
                        &uloc,
                        format!("latent probability {} outside (0, 1]", u.prob),
                    );
                }
                for (name, p) in [("p_a_z1", u.p_a_z1), ("p_a_zm1", u.p_a_zm1)] {
                    if !(0.0..=1.0).contains(&p) {
                        error(&uloc, format!("{name} {p} outside [0, 1]"));
                    }
                }
                match &u.outcome {
                    OutcomeModel::Mean { m1, mm1, noise_sd } => {
                        for (name, v) in [("m1", *m1), ("mm1", *mm1)] {
                            if !v.is_finite() {
                                error(&uloc, format!("{name} {v} is not finite"));
                            }
                        }
                        if !(noise_sd.is_finite() && *noise_sd >= 0.0) {
                            error(
                                &uloc,
                                format!("noise_sd {noise_sd} must be finite and >= 0"),
                            );
                        }
                    }
                    OutcomeModel::Bernoulli { p1, pm1 } => {
                        for (name, p) in [("p1", *p1), ("pm1", *pm1)] {
                            if !(0.0..=1.0).contains(&p) {
                                error(&uloc, format!("{name} {p} outside [0, 1]"));
                            }
                        }
                    }
                }
            }
        }

        // Relevance is checked only on structurally sound strata.
        if findings.is_empty() {
            for s in &self.strata {
                let delta = s.delta();
                if delta.abs() <= tol_delta {
                    findings.push(Finding {
                        severity: Severity::Warning,
                        location: format!("stratum {}", s.label),
                        message: format!("IV relevance fails: delta({}) = {delta}", s.label),
                    });
                }
            }
        }

        ValidationReport { findings }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

/// Outcome of [`ScmSpec::validate`]: all invariant violations plus
/// warning-level diagnostics, in deterministic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        !self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("failed to parse spec JSON: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_specs_are_valid_without_warnings() {
        for spec in [
            fixtures::spec_t(),
            fixtures::spec_a(),
            fixtures::spec_b(),
            fixtures::spec_bin(),
        ] {
            let report = spec.validate(DENOM_TOL);
            assert!(report.is_valid(), "unexpected findings: {report:?}");
            assert_eq!(report.findings.len(), 0);
        }
    }

    #[test]
    fn latent_prob_sum_violation_is_reported() {
        let mut spec = fixtures::spec_a();
        spec.strata[0].latent[0].prob = 0.5;
        spec.strata[0].latent[1].prob = 0.6;
        let report = spec.validate(DENOM_TOL);
        assert!(!report.is_valid());
        let messages: Vec<&str> = report.errors().map(|f| f.message.as_str()).collect();
        assert!(
            messages.contains(&"latent probabilities sum to 1.1"),
            "got {messages:?}"
        );
    }

    #[test]
    fn zero_delta_is_a_relevance_warning_not_an_error() {
        let mut spec = fixtures::spec_t();
        spec.strata[0].latent[0].p_a_zm1 = spec.strata[0].latent[0].p_a_z1;
        let report = spec.validate(DENOM_TOL);
        assert!(report.is_valid());
        let warning = report.warnings().next().expect("relevance warning");
        assert!(warning.message.starts_with("IV relevance fails"));
    }

    #[test]
    fn instrument_positivity_is_enforced() {
        for p_z in [0.0, 1.0, -0.25, 1.5] {
            let mut spec = fixtures::spec_t();
            spec.strata[0].p_z = p_z;
            assert!(!spec.validate(DENOM_TOL).is_valid(), "p_z = {p_z}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"strata": [], "extra": 1}"#;
        assert!(ScmSpec::from_json_str(text).is_err());
    }

    #[test]
    fn outcome_mode_fields_must_not_mix() {
        let text = r#"{"strata": [{"label": "l0", "prob": 1.0, "p_z": 0.5,
            "u": [{"label": "u0", "prob": 1.0, "p_a_z1": 0.7, "p_a_zm1": 0.3,
                   "outcome": {"mode": "mean", "m1": 0.9, "mm1": 0.4, "p1": 0.5}}]}]}"#;
        let err = ScmSpec::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("must not carry p1/pm1"), "{err}");
    }

    #[test]
    fn noise_sd_defaults_when_absent() {
        let text = r#"{"strata": [{"label": "l0", "prob": 1.0, "p_z": 0.5,
            "u": [{"label": "u0", "prob": 1.0, "p_a_z1": 0.7, "p_a_zm1": 0.3,
                   "outcome": {"mode": "mean", "m1": 0.9, "mm1": 0.4}}]}]}"#;
        let spec = ScmSpec::from_json_str(text).unwrap();
        match &spec.strata[0].latent[0].outcome {
            OutcomeModel::Mean { noise_sd, .. } => assert_eq!(*noise_sd, DEFAULT_NOISE_SD),
            other => panic!("expected mean mode, got {other:?}"),
        }
    }

    #[test]
    fn digest_is_stable_across_reparse() {
        let spec = fixtures::spec_a();
        let text = spec.to_canonical_json();
        let reparsed = ScmSpec::from_json_str(&text).unwrap();
        assert_eq!(spec, reparsed);
        assert_eq!(spec.digest(), reparsed.digest());
    }
}
