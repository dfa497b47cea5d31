//! Randomized generation of valid models and predicate-driven search for
//! witnesses and falsifiers.
//!
//! Generation is pure rejection sampling: candidate `draw_index` is a
//! deterministic function of `(config.seed, draw_index)`, and candidates
//! that miss the effect/compliance margins are redrawn in place. Search
//! walks candidates in index order and returns the lowest-index match, so
//! the outcome is identical however many workers evaluate candidates.
//! Equality-type conditions hold on a measure-zero set, so predicates that
//! require them positively switch the generator into a constructive mode
//! that copies one class's compliance or outcome profile across the
//! stratum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{check_condition, ConditionError, ConditionName, ConditionReport};
use crate::estimands::stratum_estimands;
use crate::scm::{LatentClass, OutcomeModel, ScmSpec, Stratum};

/// Redraws allowed for a single candidate before giving up.
pub const MAX_REDRAWS: usize = 10_000;

const PREDICATE_TOL: f64 = crate::conditions::DEFAULT_CONDITION_TOL;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("margin constraints unsatisfiable: candidate {draw_index} rejected {attempts} times")]
    GenerationExhausted { draw_index: u64, attempts: usize },
    #[error("predicate parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenOutcomeMode {
    Mean,
    Bernoulli,
}

/// Parameters of the random-model generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Inclusive range of stratum counts.
    pub n_strata: (usize, usize),
    /// Inclusive range of latent-class counts per stratum.
    pub n_latent: (usize, usize),
    /// Minimum |γ(l)| for every stratum.
    pub margin_gamma: f64,
    /// Minimum |δ(l)| for every stratum.
    pub margin_delta: f64,
    pub outcome_mode: GenOutcomeMode,
    /// Mean-mode outcome means are drawn uniformly from this interval.
    pub mean_range: (f64, f64),
    /// Candidates examined before a search reports not-found.
    pub budget: u64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            n_strata: (1, 3),
            n_latent: (1, 4),
            margin_gamma: 1e-3,
            margin_delta: 1e-3,
            outcome_mode: GenOutcomeMode::Mean,
            mean_range: (-1.0, 1.0),
            budget: 10_000,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let check_range = |name: &str, (lo, hi): (usize, usize)| {
            if lo == 0 || hi < lo {
                return Err(SearchError::InvalidConfig(format!(
                    "{name} range ({lo}, {hi}) is empty"
                )));
            }
            Ok(())
        };
        check_range("n_strata", self.n_strata)?;
        check_range("n_latent", self.n_latent)?;
        if !(self.margin_gamma > 0.0 && self.margin_delta > 0.0) {
            return Err(SearchError::InvalidConfig(
                "margins must be > 0".to_string(),
            ));
        }
        if !(self.mean_range.0 < self.mean_range.1) {
            return Err(SearchError::InvalidConfig(
                "mean range is empty".to_string(),
            ));
        }
        Ok(())
    }
}

/// Boolean combination over named conditions and the per-model sign
/// relation between the Wald regime and the true regime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateExpr {
    Cond(ConditionName),
    /// d_wald(l) = d_star(l) in every stratum.
    SignMatch,
    /// Some stratum has d_wald(l) ≠ d_star(l).
    SignMismatch,
    Not(Box<PredicateExpr>),
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateExpr::Cond(c) => f.write_str(c.as_str()),
            PredicateExpr::SignMatch => f.write_str("sign_match"),
            PredicateExpr::SignMismatch => f.write_str("sign_mismatch"),
            PredicateExpr::Not(e) => write!(f, "NOT {e}"),
            PredicateExpr::And(a, b) => write!(f, "({a} AND {b})"),
            PredicateExpr::Or(a, b) => write!(f, "({a} OR {b})"),
        }
    }
}

impl FromStr for PredicateExpr {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<PredicateExpr, SearchError> {
        Parser::new(s)?.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    And,
    Or,
    Not,
    Open,
    Close,
    Ident(String),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, SearchError> {
        let mut tokens = Vec::new();
        let mut chars = text.chars().peekable();
        while let Some(&ch) = chars.peek() {
            match ch {
                c if c.is_whitespace() => {
                    chars.next();
                }
                '(' => {
                    chars.next();
                    tokens.push(Token::Open);
                }
                ')' => {
                    chars.next();
                    tokens.push(Token::Close);
                }
                c if c.is_ascii_alphanumeric() || c == '_' => {
                    let mut word = String::new();
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            word.push(c);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    match word.to_ascii_lowercase().as_str() {
                        "and" => tokens.push(Token::And),
                        "or" => tokens.push(Token::Or),
                        "not" => tokens.push(Token::Not),
                        _ => tokens.push(Token::Ident(word)),
                    }
                }
                other => {
                    return Err(SearchError::Parse(format!(
                        "unexpected character {other:?} in predicate"
                    )))
                }
            }
        }
        Ok(Parser { tokens, pos: 0 })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse(&mut self) -> Result<PredicateExpr, SearchError> {
        let expr = self.parse_or()?;
        match self.peek() {
            None => Ok(expr),
            Some(t) => Err(SearchError::Parse(format!(
                "unexpected trailing token {t:?}"
            ))),
        }
    }

    fn parse_or(&mut self) -> Result<PredicateExpr, SearchError> {
        let mut left = self.parse_and()?;
        while matches!(self.peek(), Some(Token::Or)) {
            self.next();
            let right = self.parse_and()?;
            left = PredicateExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<PredicateExpr, SearchError> {
        let mut left = self.parse_unary()?;
        while matches!(self.peek(), Some(Token::And)) {
            self.next();
            let right = self.parse_unary()?;
            left = PredicateExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> Result<PredicateExpr, SearchError> {
        match self.next() {
            Some(Token::Not) => Ok(PredicateExpr::Not(Box::new(self.parse_unary()?))),
            Some(Token::Open) => {
                let inner = self.parse_or()?;
                match self.next() {
                    Some(Token::Close) => Ok(inner),
                    _ => Err(SearchError::Parse(
                        "missing closing parenthesis".to_string(),
                    )),
                }
            }
            Some(Token::Ident(word)) => match word.as_str() {
                "sign_match" => Ok(PredicateExpr::SignMatch),
                "sign_mismatch" => Ok(PredicateExpr::SignMismatch),
                _ => {
                    let name: ConditionName = word
                        .parse()
                        .map_err(|_| SearchError::Parse(format!("unknown condition {word:?}")))?;
                    Ok(PredicateExpr::Cond(name))
                }
            },
            other => Err(SearchError::Parse(format!(
                "expected condition or NOT/(, got {other:?}"
            ))),
        }
    }
}

impl PredicateExpr {
    fn collect_names(&self, out: &mut Vec<ConditionName>) {
        match self {
            PredicateExpr::Cond(c) => {
                if !out.contains(c) {
                    out.push(*c);
                }
            }
            PredicateExpr::SignMatch | PredicateExpr::SignMismatch => {}
            PredicateExpr::Not(e) => e.collect_names(out),
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    /// Condition names referenced under an even number of negations.
    fn positive_names(&self, negated: bool, out: &mut Vec<ConditionName>) {
        match self {
            PredicateExpr::Cond(c) => {
                if !negated && !out.contains(c) {
                    out.push(*c);
                }
            }
            PredicateExpr::SignMatch | PredicateExpr::SignMismatch => {}
            PredicateExpr::Not(e) => e.positive_names(!negated, out),
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                a.positive_names(negated, out);
                b.positive_names(negated, out);
            }
        }
    }
}

/// Evaluate a predicate on a model, computing exactly the conditions it
/// references.
pub fn evaluate_predicate(
    spec: &ScmSpec,
    expr: &PredicateExpr,
    tol: f64,
) -> Result<bool, ConditionError> {
    let mut names = Vec::new();
    expr.collect_names(&mut names);
    let mut reports: BTreeMap<ConditionName, ConditionReport> = BTreeMap::new();
    for name in names {
        reports.insert(name, check_condition(spec, name, tol)?);
    }

    fn sign_match(spec: &ScmSpec) -> Result<bool, ConditionError> {
        let table = stratum_estimands(spec);
        for (label, e) in &table.strata {
            let d_wald = e.d_wald.ok_or_else(|| ConditionError::Undefined {
                condition: ConditionName::Eq4NecSuf,
                stratum: label.clone(),
                quantity: "delta".to_string(),
            })?;
            if d_wald != e.d_star {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn eval(
        expr: &PredicateExpr,
        reports: &BTreeMap<ConditionName, ConditionReport>,
        spec: &ScmSpec,
    ) -> Result<bool, ConditionError> {
        Ok(match expr {
            PredicateExpr::Cond(c) => reports[c].satisfied,
            PredicateExpr::SignMatch => sign_match(spec)?,
            PredicateExpr::SignMismatch => !sign_match(spec)?,
            PredicateExpr::Not(e) => !eval(e, reports, spec)?,
            PredicateExpr::And(a, b) => eval(a, reports, spec)? && eval(b, reports, spec)?,
            PredicateExpr::Or(a, b) => eval(a, reports, spec)? || eval(b, reports, spec)?,
        })
    }

    eval(expr, &reports, spec)
}

#[derive(Debug, Clone, Copy, Default)]
struct ConstructiveMode {
    /// Copy one class's compliance pair across each stratum (δ̃ constant).
    delta_const: bool,
    /// Copy one class's outcome model across each stratum (γ̃ constant).
    gamma_const: bool,
}

fn constructive_mode(expr: &PredicateExpr) -> ConstructiveMode {
    let mut positive = Vec::new();
    expr.positive_names(false, &mut positive);
    ConstructiveMode {
        delta_const: positive.iter().any(|c| {
            matches!(
                c,
                ConditionName::CuiA8 | ConditionName::QiuA5b2b | ConditionName::CuiA7
            )
        }),
        gamma_const: positive.contains(&ConditionName::QiuA5b1b),
    }
}

/// Flat (uniform) draw from the probability simplex via normalized
/// exponentials.
fn simplex_draw(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn range_draw(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.05..0.95)
}

fn draw_candidate(rng: &mut ChaCha8Rng, config: &SearchConfig, mode: ConstructiveMode) -> ScmSpec {
    let n_strata = range_draw(rng, config.n_strata);
    let stratum_probs = simplex_draw(rng, n_strata);
    let strata = (0..n_strata)
        .map(|si| {
            let n_latent = range_draw(rng, config.n_latent);
            let latent_probs = simplex_draw(rng, n_latent);
            let p_z = unit_draw(rng);
            let mut latent: Vec<LatentClass> = (0..n_latent)
                .map(|ui| {
                    let p_a_z1 = unit_draw(rng);
                    let p_a_zm1 = unit_draw(rng);
                    let outcome = match config.outcome_mode {
                        GenOutcomeMode::Mean => OutcomeModel::mean(
                            rng.random_range(config.mean_range.0..config.mean_range.1),
                            rng.random_range(config.mean_range.0..config.mean_range.1),
                        ),
                        GenOutcomeMode::Bernoulli => {
                            OutcomeModel::bernoulli(unit_draw(rng), unit_draw(rng))
                        }
                    };
                    LatentClass {
                        label: format!("u{ui}"),
                        prob: latent_probs[ui],
                        p_a_z1,
                        p_a_zm1,
                        outcome,
                    }
                })
                .collect();
            if mode.delta_const {
                let (p1, pm1) = (latent[0].p_a_z1, latent[0].p_a_zm1);
                for u in latent.iter_mut() {
                    u.p_a_z1 = p1;
                    u.p_a_zm1 = pm1;
                }
            }
            if mode.gamma_const {
                let outcome = latent[0].outcome.clone();
                for u in latent.iter_mut() {
                    u.outcome = outcome.clone();
                }
            }
            Stratum {
                label: format!("l{si}"),
                prob: stratum_probs[si],
                p_z,
                latent,
            }
        })
        .collect();
    ScmSpec { strata }
}

fn meets_margins(spec: &ScmSpec, config: &SearchConfig) -> bool {
    spec.strata
        .iter()
        .all(|s| s.gamma().abs() >= config.margin_gamma && s.delta().abs() >= config.margin_delta)
}

fn random_spec_with(
    config: &SearchConfig,
    draw_index: u64,
    mode: ConstructiveMode,
) -> Result<ScmSpec, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(draw_index);
    for _ in 0..MAX_REDRAWS {
        let candidate = draw_candidate(&mut rng, config, mode);
        if meets_margins(&candidate, config) {
            return Ok(candidate);
        }
    }
    Err(SearchError::GenerationExhausted {
        draw_index,
        attempts: MAX_REDRAWS,
    })
}

/// Deterministic candidate generator: the result depends only on
/// `(config, draw_index)`.
pub fn random_spec(config: &SearchConfig, draw_index: u64) -> Result<ScmSpec, SearchError> {
    config.validate()?;
    random_spec_with(config, draw_index, ConstructiveMode::default())
}

/// A found model together with the condition reports that certify its
/// predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub draw_index: u64,
    pub spec: ScmSpec,
    pub conditions: BTreeMap<String, ConditionReport>,
}

/// Scan candidates `0..budget` and return the lowest-index model satisfying
/// the predicate, or `None` when the budget is exhausted. Candidate
/// evaluation may run in parallel; the lowest index always wins.
pub fn find_witness(
    config: &SearchConfig,
    predicate: &PredicateExpr,
) -> Result<Option<Witness>, SearchError> {
    config.validate()?;
    let mode = constructive_mode(predicate);

    enum Step {
        Hit(Box<Witness>),
        Miss,
        Fail(SearchError),
    }

    let outcome = (0..config.budget)
        .into_par_iter()
        .map(|draw_index| {
            let spec = match random_spec_with(config, draw_index, mode) {
                Ok(spec) => spec,
                Err(e) => return Step::Fail(e),
            };
            match evaluate_predicate(&spec, predicate, PREDICATE_TOL) {
                Ok(true) => {
                    let mut conditions = BTreeMap::new();
                    let mut names = Vec::new();
                    predicate.collect_names(&mut names);
                    for name in names {
                        match check_condition(&spec, name, PREDICATE_TOL) {
                            Ok(report) => {
                                conditions.insert(name.as_str().to_string(), report);
                            }
                            Err(e) => return Step::Fail(e.into()),
                        }
                    }
                    Step::Hit(Box::new(Witness {
                        draw_index,
                        spec,
                        conditions,
                    }))
                }
                Ok(false) => Step::Miss,
                Err(e) => Step::Fail(e.into()),
            }
        })
        .find_first(|step| !matches!(step, Step::Miss));

    match outcome {
        Some(Step::Hit(witness)) => Ok(Some(*witness)),
        Some(Step::Fail(e)) => Err(e),
        Some(Step::Miss) => unreachable!("misses are filtered"),
        None => Ok(None),
    }
}
