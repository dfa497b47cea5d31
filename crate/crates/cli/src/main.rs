//! `ivsign` — one binary exposing validation, exact estimands, condition
//! checking, identification classification, effect bounds, seeded
//! simulation, empirical estimation and learning, and witness search.
//!
//! Exit codes: 0 success; 1 validation or spec error; 2 not-found or
//! undefined estimand; 3 usage error. Every error also prints a one-line
//! diagnostic on stderr. All randomness requires an explicit `--seed`, and
//! a fixed invocation produces byte-identical output regardless of worker
//! count.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ivsign_core::conditions::DEFAULT_CONDITION_TOL;
use ivsign_core::montecarlo::{
    empirical_estimands, run_study, sample, LearnMethod, McError, SampleDataset,
};
use ivsign_core::scm::DENOM_TOL;
use ivsign_core::search::{find_witness, GenOutcomeMode, PredicateExpr, SearchConfig, SearchError};
use ivsign_core::{
    balke_pearl_bounds, bounds, check_condition, classify_identification, consolidated_report,
    stratum_estimands, ConditionError, ConditionName, EstimandError, ScmSpec,
};

#[derive(Parser)]
#[command(
    name = "ivsign",
    version,
    about = "Exact identification lab for IV treatment regimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutcomeModeArg {
    Mean,
    Bernoulli,
}

#[derive(Subcommand)]
enum Command {
    /// Check a spec file's structural invariants and instrument relevance.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        /// Relevance threshold: |delta(l)| at or below this warns.
        #[arg(long, default_value_t = DENOM_TOL)]
        tol_delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact per-stratum estimands.
    Estimands {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one named identifying condition.
    Check {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        condition: String,
        #[arg(long, default_value_t = DEFAULT_CONDITION_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-level identification classification with numeric verification.
    Classify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONDITION_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nonparametric effect bounds per stratum (binary outcomes).
    Bounds {
        #[arg(long)]
        spec: PathBuf,
        /// Restrict to one stratum label.
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a seeded dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Include the latent class column (oracle debugging only).
        #[arg(long)]
        keep_latent: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate from a dataset file, or run a seeded simulate-learn-score
    /// study against a spec.
    Estimate {
        /// Dataset CSV (y,l,a,z[,u]); mutually exclusive with --spec.
        #[arg(long, conflicts_with_all = ["spec", "n", "seed", "replications", "method", "pz_known"])]
        data: Option<PathBuf>,
        #[arg(long, requires_all = ["n", "seed", "method"])]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        replications: u64,
        /// wald_sign | f1_max | f2_max | naive.
        #[arg(long)]
        method: Option<String>,
        /// Use the spec's true instrument propensities instead of plug-in
        /// frequencies.
        #[arg(long)]
        pz_known: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a model satisfying a boolean predicate over conditions.
    Search {
        /// e.g. "eq4_nec_suf AND NOT han_a AND NOT cui_a7".
        #[arg(long)]
        predicate: String,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_strata: usize,
        #[arg(long, default_value_t = 3)]
        max_strata: usize,
        #[arg(long, default_value_t = 1)]
        min_latent: usize,
        #[arg(long, default_value_t = 4)]
        max_latent: usize,
        #[arg(long, default_value_t = 1e-3)]
        margin_gamma: f64,
        #[arg(long, default_value_t = 1e-3)]
        margin_delta: f64,
        #[arg(long, value_enum, default_value = "mean")]
        outcome_mode: OutcomeModeArg,
        /// Witness spec JSON destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sidecar JSON with the witness's condition reports.
        #[arg(long)]
        conditions_out: Option<PathBuf>,
    },
    /// Consolidated report: estimands, all conditions, classification, and
    /// bounds for binary-outcome specs.
    Report {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONDITION_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code plus one-line diagnostic.
type Failure = (u8, String);

const EXIT_SPEC: u8 = 1;
const EXIT_UNDEFINED: u8 = 2;
const EXIT_USAGE: u8 = 3;

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    (EXIT_SPEC, format!("{}: {e}", path.display()))
}

fn estimand_code(e: &EstimandError) -> u8 {
    match e {
        EstimandError::UndefinedRatio { .. } | EstimandError::Tie { .. } => EXIT_UNDEFINED,
        _ => EXIT_SPEC,
    }
}

fn condition_code(e: &ConditionError) -> u8 {
    match e {
        ConditionError::Undefined { .. } => EXIT_UNDEFINED,
        ConditionError::UnknownName(_) => EXIT_USAGE,
        ConditionError::TooManyStrata { .. } => EXIT_SPEC,
        ConditionError::Estimand(inner) => estimand_code(inner),
    }
}

fn mc_code(e: &McError) -> u8 {
    match e {
        McError::IncompleteStratum(_) | McError::DeltaNearZero(_) => EXIT_UNDEFINED,
        McError::EmptyDataset => EXIT_USAGE,
        McError::Csv(_) | McError::MissingPz(_) => EXIT_SPEC,
        McError::Estimand(inner) => estimand_code(inner),
    }
}

fn search_code(e: &SearchError) -> u8 {
    match e {
        SearchError::Parse(_) | SearchError::InvalidConfig(_) => EXIT_USAGE,
        SearchError::GenerationExhausted { .. } => EXIT_UNDEFINED,
        SearchError::Condition(inner) => condition_code(inner),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    text.push('\n');
    text
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| io_failure(path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Parse and structurally validate a spec file; errors are fatal, warnings
/// are not.
fn load_spec(path: &Path) -> Result<ScmSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let spec = ScmSpec::from_json_str(&text).map_err(|e| (EXIT_SPEC, e.to_string()))?;
    let report = spec.validate(DENOM_TOL);
    if !report.is_valid() {
        let first = report.errors().next().expect("invalid report has an error");
        let count = report.errors().count();
        return Err((
            EXIT_SPEC,
            format!(
                "invalid spec ({count} error{}): {} — {}",
                if count == 1 { "" } else { "s" },
                first.location,
                first.message
            ),
        ));
    }
    Ok(spec)
}

fn estimands_csv(spec: &ScmSpec) -> Result<String, Failure> {
    let table = stratum_estimands(spec);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writer
        .write_record([
            "stratum",
            "gamma",
            "delta",
            "c",
            "wald",
            "theorem1_stat",
            "cov_form",
            "d_star",
            "d_wald",
        ])
        .and_then(|()| {
            for (label, e) in &table.strata {
                writer.write_record([
                    label.clone(),
                    e.gamma.to_string(),
                    e.delta.to_string(),
                    e.c.to_string(),
                    fmt_opt(e.wald),
                    fmt_opt(e.theorem1_stat),
                    fmt_opt(e.cov_form),
                    e.d_star.to_string(),
                    e.d_wald.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
            Ok(())
        })
        .map_err(|e| (EXIT_SPEC, format!("csv output: {e}")))?;
    let bytes = writer
        .into_inner()
        .map_err(|e| (EXIT_SPEC, format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| (EXIT_SPEC, format!("csv output: {e}")))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate {
            spec,
            tol_delta,
            out,
        } => {
            let text = fs::read_to_string(&spec).map_err(|e| io_failure(&spec, e))?;
            let parsed = ScmSpec::from_json_str(&text).map_err(|e| (EXIT_SPEC, e.to_string()))?;
            let report = parsed.validate(tol_delta);
            emit(out.as_deref(), &to_json(&report))?;
            if !report.is_valid() {
                return Err((EXIT_SPEC, "spec failed validation".to_string()));
            }
            Ok(())
        }
        Command::Estimands { spec, format, out } => {
            let spec = load_spec(&spec)?;
            let content = match format {
                OutputFormat::Json => to_json(&stratum_estimands(&spec)),
                OutputFormat::Csv => estimands_csv(&spec)?,
            };
            emit(out.as_deref(), &content)
        }
        Command::Check {
            spec,
            condition,
            tol,
            out,
        } => {
            let spec = load_spec(&spec)?;
            let name: ConditionName = condition
                .parse()
                .map_err(|e: ConditionError| (EXIT_USAGE, e.to_string()))?;
            let report = check_condition(&spec, name, tol)
                .map_err(|e| (condition_code(&e), e.to_string()))?;
            emit(out.as_deref(), &to_json(&report))
        }
        Command::Classify { spec, tol, out } => {
            let spec = load_spec(&spec)?;
            let report = classify_identification(&spec, tol)
                .map_err(|e| (condition_code(&e), e.to_string()))?;
            emit(out.as_deref(), &to_json(&report))
        }
        Command::Bounds { spec, stratum, out } => {
            let spec = load_spec(&spec)?;
            let content = match stratum {
                Some(label) => {
                    let result = balke_pearl_bounds(&spec, &label)
                        .map_err(|e| (EXIT_SPEC, e.to_string()))?;
                    to_json(&result)
                }
                None => {
                    let results =
                        bounds::all_bounds(&spec).map_err(|e| (EXIT_SPEC, e.to_string()))?;
                    to_json(&results)
                }
            };
            emit(out.as_deref(), &content)
        }
        Command::Simulate {
            spec,
            n,
            seed,
            keep_latent,
            out,
        } => {
            let spec = load_spec(&spec)?;
            let data =
                sample(&spec, n, seed, keep_latent).map_err(|e| (mc_code(&e), e.to_string()))?;
            let csv_text = data
                .to_csv_string()
                .map_err(|e| (mc_code(&e), e.to_string()))?;
            emit(out.as_deref(), &csv_text)
        }
        Command::Estimate {
            data,
            spec,
            n,
            seed,
            replications,
            method,
            pz_known,
            out,
        } => match (data, spec) {
            (Some(path), None) => {
                let file = fs::File::open(&path).map_err(|e| io_failure(&path, e))?;
                let dataset =
                    SampleDataset::read_csv(file).map_err(|e| (mc_code(&e), e.to_string()))?;
                let estimands =
                    empirical_estimands(&dataset).map_err(|e| (mc_code(&e), e.to_string()))?;
                emit(out.as_deref(), &to_json(&estimands))
            }
            (None, Some(path)) => {
                let spec = load_spec(&path)?;
                let method: LearnMethod = method
                    .expect("clap requires --method with --spec")
                    .parse()
                    .map_err(|e: String| (EXIT_USAGE, e))?;
                let n = n.expect("clap requires --n with --spec");
                let seed = seed.expect("clap requires --seed with --spec");
                let records = run_study(&spec, n, seed, replications, method, pz_known)
                    .map_err(|e| (mc_code(&e), e.to_string()))?;
                emit(out.as_deref(), &to_json(&records))
            }
            _ => Err((
                EXIT_USAGE,
                "estimate needs exactly one of --data or --spec".to_string(),
            )),
        },
        Command::Search {
            predicate,
            budget,
            seed,
            min_strata,
            max_strata,
            min_latent,
            max_latent,
            margin_gamma,
            margin_delta,
            outcome_mode,
            out,
            conditions_out,
        } => {
            let predicate: PredicateExpr = predicate
                .parse()
                .map_err(|e: SearchError| (search_code(&e), e.to_string()))?;
            let config = SearchConfig {
                n_strata: (min_strata, max_strata),
                n_latent: (min_latent, max_latent),
                margin_gamma,
                margin_delta,
                outcome_mode: match outcome_mode {
                    OutcomeModeArg::Mean => GenOutcomeMode::Mean,
                    OutcomeModeArg::Bernoulli => GenOutcomeMode::Bernoulli,
                },
                mean_range: (-1.0, 1.0),
                budget,
                seed,
            };
            let witness = find_witness(&config, &predicate)
                .map_err(|e| (search_code(&e), e.to_string()))?
                .ok_or_else(|| {
                    (
                        EXIT_UNDEFINED,
                        format!("no witness found within budget {budget}"),
                    )
                })?;
            if let Some(path) = conditions_out.as_deref() {
                let sidecar = json!({
                    "draw_index": witness.draw_index,
                    "predicate": predicate.to_string(),
                    "conditions": witness.conditions,
                });
                emit(Some(path), &to_json(&sidecar))?;
            }
            emit(out.as_deref(), &to_json(&witness.spec))
        }
        Command::Report { spec, tol, out } => {
            let spec = load_spec(&spec)?;
            let report =
                consolidated_report(&spec, tol).map_err(|e| (condition_code(&e), e.to_string()))?;
            emit(out.as_deref(), &to_json(&report))
        }
    }
}
