//! A deterministic laboratory for instrumental-variable identification of
//! optimal individualized treatment regimes.
//!
//! The engine represents finite structural causal models exactly — observed
//! covariate strata, a binary instrument, latent confounding classes,
//! binary treatment, and per-class potential-outcome laws — and computes
//! every estimand of interest by exact summation rather than estimation:
//! conditional treatment effects, compliance contrasts, Wald ratios, policy
//! values, and weighted policy objectives.
//!
//! On top of the exact layer sit four tools:
//!
//! - [`conditions`]: named checkers for the identifying assumptions that
//!   make the Wald sign trustworthy, the implication lattice among them,
//!   and a three-level classifier (value function / effect / sign) where
//!   every claim is verified numerically.
//! - [`bounds`]: exact nonparametric effect bounds for binary outcomes via
//!   linear programming over canonical response types, with the implied
//!   sign verdict.
//! - [`montecarlo`]: seeded, worker-count-independent simulation of
//!   observed data, plug-in estimation, empirical policy learning, and
//!   regret against the exact optimum.
//! - [`search`]: deterministic randomized search for models that witness a
//!   boolean combination of the above conditions.

pub mod bounds;
pub mod conditions;
pub mod estimands;
pub mod fixtures;
pub mod montecarlo;
pub mod report;
pub mod scm;
pub mod search;
mod simplex;

pub use bounds::{balke_pearl_bounds, sign_from_bounds, BoundsError, BoundsResult, SignVerdict};
pub use conditions::{
    check_condition, classify_identification, implication_audit, ClassificationReport,
    ConditionError, ConditionName, ConditionReport,
};
pub use estimands::{
    observed_law, optimal_regime, policy_objective, stratum_estimands, value_function,
    EstimandError, EstimandTable, ObjectiveKind, Regime, RegimeSource,
};
pub use montecarlo::{
    empirical_estimands, evaluate_regret, learn_regime, run_study, sample, LearnMethod, McError,
    SampleDataset,
};
pub use report::{consolidated_report, ConsolidatedReport, SCHEMA_VERSION};
pub use scm::{
    Arm, LatentClass, OutcomeModel, ScmSpec, SpecError, Stratum, ValidationReport, DENOM_TOL,
};
pub use search::{find_witness, random_spec, PredicateExpr, SearchConfig, SearchError, Witness};
