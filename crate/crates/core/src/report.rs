//! Consolidated per-model report: estimands, every named condition, the
//! identification classification, and effect bounds for binary outcomes,
//! in one schema-versioned JSON document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::{all_bounds, BoundsResult};
use crate::conditions::{
    all_conditions, classify_identification, ClassificationReport, ConditionError, ConditionReport,
};
use crate::estimands::{stratum_estimands, EstimandTable};
use crate::scm::{ScmSpec, ValidationReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything the engine can say about one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedReport {
    pub schema_version: u32,
    pub spec_digest: String,
    pub validation: ValidationReport,
    pub estimands: EstimandTable,
    pub conditions: BTreeMap<String, ConditionReport>,
    pub classification: ClassificationReport,
    /// Present only when every outcome model is binary.
    pub bounds: Option<BTreeMap<String, BoundsResult>>,
}

/// Assemble the consolidated report for a validated model.
pub fn consolidated_report(spec: &ScmSpec, tol: f64) -> Result<ConsolidatedReport, ConditionError> {
    let bounds = if spec.is_bernoulli() {
        Some(all_bounds(spec).expect("bernoulli spec with its own strata"))
    } else {
        None
    };
    Ok(ConsolidatedReport {
        schema_version: SCHEMA_VERSION,
        spec_digest: spec.digest(),
        validation: spec.validate(crate::scm::DENOM_TOL),
        estimands: stratum_estimands(spec),
        conditions: all_conditions(spec, tol)?,
        classification: classify_identification(spec, tol)?,
        bounds,
    })
}
