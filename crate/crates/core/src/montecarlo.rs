//! Seeded forward simulation of observed data, plug-in estimation, and
//! empirical policy learning with regret against the exact optimum.
//!
//! Sampling is deterministic given `(spec, n, seed)` and independent of the
//! number of worker threads: rows are generated in fixed-size chunks of
//! 4096, each chunk drawing from its own counter-indexed substream of the
//! seeded generator. The estimation layer is intentionally plain — sample
//! means per cell and the standard plug-in variance — because its job is to
//! show what the exact theory predicts: the instrument-based learners
//! recover the identified regime while the naive contrast keeps its
//! confounding bias no matter how large the sample grows.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimands::{optimal_regime, sign, value_function, EstimandError, Regime, RegimeSource};
use crate::scm::{Arm, OutcomeModel, ScmSpec};

/// Rows per deterministic sampling chunk.
pub const CHUNK_SIZE: usize = 4096;

/// Empirical delta smaller than this makes Wald-type learning undefined.
pub const EMPIRICAL_DELTA_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum McError {
    #[error("cannot sample or estimate from zero rows")]
    EmptyDataset,
    #[error("stratum {0:?} is incomplete: a required (z, a) cell has no rows")]
    IncompleteStratum(String),
    #[error("stratum {0:?} has |delta_hat| below 1e-9; Wald-type learning undefined")]
    DeltaNearZero(String),
    #[error("no known p_z supplied for stratum {0:?}")]
    MissingPz(String),
    #[error("dataset CSV error: {0}")]
    Csv(String),
    #[error(transparent)]
    Estimand(#[from] EstimandError),
}

/// Provenance of a dataset. Digest and seed are unknown for data read back
/// from a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec_digest: Option<String>,
    pub seed: Option<u64>,
    pub n: usize,
}

/// Simulated observed rows `(y, l, a, z)` with an optional latent column
/// for oracle debugging. Stored column-wise with interned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDataset {
    pub meta: DatasetMeta,
    stratum_labels: Vec<String>,
    latent_labels: Vec<String>,
    y: Vec<f64>,
    l: Vec<u32>,
    a: Vec<i8>,
    z: Vec<i8>,
    u: Option<Vec<u32>>,
}

/// One logical row, borrowed from the column store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowRef<'a> {
    pub y: f64,
    pub l: &'a str,
    pub a: i8,
    pub z: i8,
    pub u: Option<&'a str>,
}

impl SampleDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn has_latent(&self) -> bool {
        self.u.is_some()
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn row(&self, i: usize) -> RowRef<'_> {
        RowRef {
            y: self.y[i],
            l: &self.stratum_labels[self.l[i] as usize],
            a: self.a[i],
            z: self.z[i],
            u: self
                .u
                .as_ref()
                .map(|u| self.latent_labels[u[i] as usize].as_str()),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowRef<'_>> {
        (0..self.len()).map(|i| self.row(i))
    }

    /// Write `y,l,a,z[,u]` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), McError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: &[&str] = if self.has_latent() {
            &["y", "l", "a", "z", "u"]
        } else {
            &["y", "l", "a", "z"]
        };
        w.write_record(header)
            .map_err(|e| McError::Csv(e.to_string()))?;
        for i in 0..self.len() {
            let row = self.row(i);
            let y = row.y.to_string();
            let a = row.a.to_string();
            let z = row.z.to_string();
            let result = match row.u {
                Some(u) => w.write_record([y.as_str(), row.l, a.as_str(), z.as_str(), u]),
                None => w.write_record([y.as_str(), row.l, a.as_str(), z.as_str()]),
            };
            result.map_err(|e| McError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| McError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, McError> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        String::from_utf8(out).map_err(|e| McError::Csv(e.to_string()))
    }

    /// Read the documented CSV format back. Digest and seed metadata are
    /// unknown for external files.
    pub fn read_csv<R: Read>(reader: R) -> Result<SampleDataset, McError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| McError::Csv(e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        let has_u = match cols.as_slice() {
            ["y", "l", "a", "z"] => false,
            ["y", "l", "a", "z", "u"] => true,
            other => {
                return Err(McError::Csv(format!(
                    "expected header y,l,a,z[,u], got {other:?}"
                )))
            }
        };

        let mut stratum_labels: Vec<String> = Vec::new();
        let mut stratum_index: BTreeMap<String, u32> = BTreeMap::new();
        let mut latent_labels: Vec<String> = Vec::new();
        let mut latent_index: BTreeMap<String, u32> = BTreeMap::new();
        let mut y = Vec::new();
        let mut l = Vec::new();
        let mut a = Vec::new();
        let mut z = Vec::new();
        let mut u = has_u.then(Vec::new);

        let parse_arm = |field: &str, name: &str| -> Result<i8, McError> {
            match field {
                "1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(McError::Csv(format!(
                    "{name} must be 1 or -1, got {other:?}"
                ))),
            }
        };
        for record in r.records() {
            let record = record.map_err(|e| McError::Csv(e.to_string()))?;
            let y_val: f64 = record[0]
                .parse()
                .map_err(|_| McError::Csv(format!("bad y value {:?}", &record[0])))?;
            y.push(y_val);
            let label = &record[1];
            let idx = *stratum_index.entry(label.to_string()).or_insert_with(|| {
                stratum_labels.push(label.to_string());
                (stratum_labels.len() - 1) as u32
            });
            l.push(idx);
            a.push(parse_arm(&record[2], "a")?);
            z.push(parse_arm(&record[3], "z")?);
            if let Some(u_col) = u.as_mut() {
                let label = &record[4];
                let idx = *latent_index.entry(label.to_string()).or_insert_with(|| {
                    latent_labels.push(label.to_string());
                    (latent_labels.len() - 1) as u32
                });
                u_col.push(idx);
            }
        }

        let n = y.len();
        Ok(SampleDataset {
            meta: DatasetMeta {
                spec_digest: None,
                seed: None,
                n,
            },
            stratum_labels,
            latent_labels,
            y,
            l,
            a,
            z,
            u,
        })
    }
}

struct ClassSampler {
    cum: f64,
    p_a_z1: f64,
    p_a_zm1: f64,
    outcome: OutcomeModel,
    latent_global: u32,
}

struct StratumSampler {
    cum: f64,
    p_z: f64,
    classes: Vec<ClassSampler>,
}

fn build_samplers(spec: &ScmSpec) -> (Vec<StratumSampler>, Vec<String>) {
    let mut latent_labels = Vec::new();
    let mut latent_index: BTreeMap<String, u32> = BTreeMap::new();
    let mut strata = Vec::with_capacity(spec.strata.len());
    let mut cum_l = 0.0;
    for s in &spec.strata {
        cum_l += s.prob;
        let mut cum_u = 0.0;
        let classes = s
            .latent
            .iter()
            .map(|u| {
                cum_u += u.prob;
                let global = *latent_index.entry(u.label.clone()).or_insert_with(|| {
                    latent_labels.push(u.label.clone());
                    (latent_labels.len() - 1) as u32
                });
                ClassSampler {
                    cum: cum_u,
                    p_a_z1: u.p_a_z1,
                    p_a_zm1: u.p_a_zm1,
                    outcome: u.outcome.clone(),
                    latent_global: global,
                }
            })
            .collect();
        strata.push(StratumSampler {
            cum: cum_l,
            p_z: s.p_z,
            classes,
        });
    }
    (strata, latent_labels)
}

struct Chunk {
    y: Vec<f64>,
    l: Vec<u32>,
    a: Vec<i8>,
    z: Vec<i8>,
    u: Option<Vec<u32>>,
}

fn sample_chunk(
    samplers: &[StratumSampler],
    seed: u64,
    chunk_index: u64,
    len: usize,
    keep_latent: bool,
) -> Chunk {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk_index);
    let mut chunk = Chunk {
        y: Vec::with_capacity(len),
        l: Vec::with_capacity(len),
        a: Vec::with_capacity(len),
        z: Vec::with_capacity(len),
        u: keep_latent.then(|| Vec::with_capacity(len)),
    };
    for _ in 0..len {
        let draw_l: f64 = rng.random();
        let li = samplers
            .iter()
            .position(|s| draw_l < s.cum)
            .unwrap_or(samplers.len() - 1);
        let stratum = &samplers[li];

        let draw_u: f64 = rng.random();
        let ui = stratum
            .classes
            .iter()
            .position(|c| draw_u < c.cum)
            .unwrap_or(stratum.classes.len() - 1);
        let class = &stratum.classes[ui];

        let z = if rng.random_bool(stratum.p_z) {
            Arm::Treat
        } else {
            Arm::Control
        };
        let p_a = match z {
            Arm::Treat => class.p_a_z1,
            Arm::Control => class.p_a_zm1,
        };
        let a = if rng.random_bool(p_a) {
            Arm::Treat
        } else {
            Arm::Control
        };
        let y = match &class.outcome {
            OutcomeModel::Bernoulli { .. } => {
                let p = class.outcome.arm_mean(a);
                if rng.random_bool(p) {
                    1.0
                } else {
                    0.0
                }
            }
            OutcomeModel::Mean { noise_sd, .. } => {
                let noise: f64 = rng.sample(StandardNormal);
                class.outcome.arm_mean(a) + noise_sd * noise
            }
        };

        chunk.y.push(y);
        chunk.l.push(li as u32);
        chunk.a.push(a.code());
        chunk.z.push(z.code());
        if let Some(u) = chunk.u.as_mut() {
            u.push(class.latent_global);
        }
    }
    chunk
}

/// Draw `n` iid rows. Deterministic given `(spec, n, seed)` regardless of
/// how many workers run the chunks.
pub fn sample(
    spec: &ScmSpec,
    n: usize,
    seed: u64,
    keep_latent: bool,
) -> Result<SampleDataset, McError> {
    if n == 0 {
        return Err(McError::EmptyDataset);
    }
    let (samplers, latent_labels) = build_samplers(spec);
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * CHUNK_SIZE;
            let len = CHUNK_SIZE.min(n - start);
            sample_chunk(&samplers, seed, k as u64, len, keep_latent)
        })
        .collect();

    let mut y = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut u = keep_latent.then(|| Vec::with_capacity(n));
    for chunk in chunks {
        y.extend(chunk.y);
        l.extend(chunk.l);
        a.extend(chunk.a);
        z.extend(chunk.z);
        if let (Some(u), Some(cu)) = (u.as_mut(), chunk.u) {
            u.extend(cu);
        }
    }

    Ok(SampleDataset {
        meta: DatasetMeta {
            spec_digest: Some(spec.digest()),
            seed: Some(seed),
            n,
        },
        stratum_labels: spec.labels().map(str::to_string).collect(),
        latent_labels,
        y,
        l,
        a,
        z,
        u,
    })
}

/// Counts and outcome sums for one (z, a) cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellStat {
    pub count: usize,
    pub y_sum: f64,
    pub y_sumsq: f64,
}

/// Plug-in estimates for one observed stratum. Cells are indexed
/// `[z.index()][a.index()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub n: usize,
    pub cells: [[CellStat; 2]; 2],
    /// All four arm margins are observed: both instrument arms and both
    /// treatment arms. Joint (z, a) cells may still be empty, as under
    /// perfect compliance.
    pub complete: bool,
    /// Ê[Y|Z=1] − Ê[Y|Z=−1], when both instrument arms are observed.
    pub c_hat: Option<f64>,
    pub c_se: Option<f64>,
    /// P̂(A=1|Z=1) − P̂(A=1|Z=−1).
    pub delta_hat: Option<f64>,
    pub delta_se: Option<f64>,
    /// c_hat / delta_hat, present only when complete and delta_hat ≠ 0.
    pub wald_hat: Option<f64>,
    /// Ê[Y|A=1] − Ê[Y|A=−1].
    pub naive_contrast: Option<f64>,
}

impl StratumEstimate {
    pub fn cell(&self, z: Arm, a: Arm) -> &CellStat {
        &self.cells[z.index()][a.index()]
    }

    fn arm_n(&self, z: Arm) -> usize {
        self.cells[z.index()][0].count + self.cells[z.index()][1].count
    }
}

/// Stratified plug-in estimates keyed by observed stratum label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmpiricalEstimands {
    pub strata: BTreeMap<String, StratumEstimate>,
}

/// Stratified sample means, contrasts, and plug-in standard errors.
pub fn empirical_estimands(data: &SampleDataset) -> Result<EmpiricalEstimands, McError> {
    if data.is_empty() {
        return Err(McError::EmptyDataset);
    }
    let n_labels = data.stratum_labels.len();
    let mut cells = vec![[[CellStat::default(); 2]; 2]; n_labels];
    let mut totals = vec![0usize; n_labels];
    for i in 0..data.len() {
        let li = data.l[i] as usize;
        let z = usize::from(data.z[i] != 1);
        let a = usize::from(data.a[i] != 1);
        let y = data.y[i];
        let cell = &mut cells[li][z][a];
        cell.count += 1;
        cell.y_sum += y;
        cell.y_sumsq += y * y;
        totals[li] += 1;
    }

    let mut strata = BTreeMap::new();
    for (li, label) in data.stratum_labels.iter().enumerate() {
        if totals[li] == 0 {
            continue;
        }
        let cells = cells[li];
        let z_margin = |z: usize| -> usize { cells[z][0].count + cells[z][1].count };
        let a_margin = |a: usize| -> usize { cells[0][a].count + cells[1][a].count };
        let complete = z_margin(0) > 0 && z_margin(1) > 0 && a_margin(0) > 0 && a_margin(1) > 0;

        let z1 = Arm::Treat.index();
        let zm1 = Arm::Control.index();
        let arm = |z: usize| -> (usize, f64, f64) {
            let n = cells[z][0].count + cells[z][1].count;
            let sum = cells[z][0].y_sum + cells[z][1].y_sum;
            let sumsq = cells[z][0].y_sumsq + cells[z][1].y_sumsq;
            (n, sum, sumsq)
        };
        let (n1, sum1, sumsq1) = arm(z1);
        let (nm1, summ1, sumsqm1) = arm(zm1);

        let (c_hat, c_se, delta_hat, delta_se) = if n1 > 0 && nm1 > 0 {
            let mean1 = sum1 / n1 as f64;
            let meanm1 = summ1 / nm1 as f64;
            let var1 = (sumsq1 / n1 as f64 - mean1 * mean1).max(0.0);
            let varm1 = (sumsqm1 / nm1 as f64 - meanm1 * meanm1).max(0.0);
            let c_hat = mean1 - meanm1;
            let c_se = (var1 / n1 as f64 + varm1 / nm1 as f64).sqrt();

            let p1 = cells[z1][Arm::Treat.index()].count as f64 / n1 as f64;
            let pm1 = cells[zm1][Arm::Treat.index()].count as f64 / nm1 as f64;
            let delta_hat = p1 - pm1;
            let delta_se = (p1 * (1.0 - p1) / n1 as f64 + pm1 * (1.0 - pm1) / nm1 as f64).sqrt();
            (Some(c_hat), Some(c_se), Some(delta_hat), Some(delta_se))
        } else {
            (None, None, None, None)
        };

        let wald_hat = match (complete, c_hat, delta_hat) {
            (true, Some(c), Some(d)) if d.abs() > 0.0 => Some(c / d),
            _ => None,
        };

        let a1 = Arm::Treat.index();
        let am1 = Arm::Control.index();
        let a_arm = |a: usize| -> (usize, f64) {
            let n = cells[z1][a].count + cells[zm1][a].count;
            let sum = cells[z1][a].y_sum + cells[zm1][a].y_sum;
            (n, sum)
        };
        let (na1, suma1) = a_arm(a1);
        let (nam1, sumam1) = a_arm(am1);
        let naive_contrast =
            (na1 > 0 && nam1 > 0).then(|| suma1 / na1 as f64 - sumam1 / nam1 as f64);

        strata.insert(
            label.clone(),
            StratumEstimate {
                n: totals[li],
                cells,
                complete,
                c_hat,
                c_se,
                delta_hat,
                delta_se,
                wald_hat,
                naive_contrast,
            },
        );
    }
    Ok(EmpiricalEstimands { strata })
}

/// Empirical policy learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnMethod {
    /// sign(c_hat / delta_hat) per stratum.
    WaldSign,
    /// Per-stratum argmax of the empirical instrument-weighted objective.
    F1Max,
    /// Per-stratum argmax of the instrument-assignment variant.
    F2Max,
    /// sign of the naive treated-vs-control contrast.
    Naive,
}

impl LearnMethod {
    pub const ALL: [LearnMethod; 4] = [
        LearnMethod::WaldSign,
        LearnMethod::F1Max,
        LearnMethod::F2Max,
        LearnMethod::Naive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnMethod::WaldSign => "wald_sign",
            LearnMethod::F1Max => "f1_max",
            LearnMethod::F2Max => "f2_max",
            LearnMethod::Naive => "naive",
        }
    }
}

impl std::str::FromStr for LearnMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<LearnMethod, String> {
        LearnMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown learning method {s:?}"))
    }
}

fn tie_break(label: &str, method: LearnMethod) -> Arm {
    log::warn!(
        "empirical tie in stratum {label:?} for {}; resolved to +1",
        method.as_str()
    );
    Arm::Treat
}

/// Learn a regime from data. `pz_known` supplies the true P(Z=1|l) per
/// stratum; otherwise the stratum frequency is plugged in.
pub fn learn_regime(
    data: &SampleDataset,
    method: LearnMethod,
    pz_known: Option<&BTreeMap<String, f64>>,
) -> Result<Regime, McError> {
    let estimates = empirical_estimands(data)?;
    let mut actions = BTreeMap::new();
    for (label, est) in &estimates.strata {
        let require_complete = || -> Result<(), McError> {
            if !est.complete {
                return Err(McError::IncompleteStratum(label.clone()));
            }
            Ok(())
        };
        let delta_checked = || -> Result<f64, McError> {
            let delta = est
                .delta_hat
                .ok_or_else(|| McError::IncompleteStratum(label.clone()))?;
            if delta.abs() < EMPIRICAL_DELTA_TOL {
                return Err(McError::DeltaNearZero(label.clone()));
            }
            Ok(delta)
        };
        let f_z = |z: Arm| -> Result<f64, McError> {
            let p = match pz_known {
                Some(map) => *map
                    .get(label)
                    .ok_or_else(|| McError::MissingPz(label.clone()))?,
                None => est.arm_n(Arm::Treat) as f64 / est.n as f64,
            };
            Ok(match z {
                Arm::Treat => p,
                Arm::Control => 1.0 - p,
            })
        };

        let arm = match method {
            LearnMethod::WaldSign => {
                require_complete()?;
                let delta = delta_checked()?;
                let c = est.c_hat.expect("complete stratum has c_hat");
                match sign(c / delta) {
                    1 => Arm::Treat,
                    -1 => Arm::Control,
                    _ => tie_break(label, method),
                }
            }
            LearnMethod::F1Max => {
                require_complete()?;
                let delta = delta_checked()?;
                let score = |d: Arm| -> Result<f64, McError> {
                    let mut total = 0.0;
                    for &z in &Arm::BOTH {
                        let weight = z.value() * d.value();
                        total += weight * est.cell(z, d).y_sum / (delta * f_z(z)?);
                    }
                    Ok(total)
                };
                let s_treat = score(Arm::Treat)?;
                let s_control = score(Arm::Control)?;
                if s_treat > s_control {
                    Arm::Treat
                } else if s_control > s_treat {
                    Arm::Control
                } else {
                    tie_break(label, method)
                }
            }
            LearnMethod::F2Max => {
                require_complete()?;
                let delta = delta_checked()?;
                let score = |d: Arm| -> Result<f64, McError> {
                    let y_sum = est.cell(d, Arm::Treat).y_sum + est.cell(d, Arm::Control).y_sum;
                    Ok(y_sum / (delta * f_z(d)?))
                };
                let s_treat = score(Arm::Treat)?;
                let s_control = score(Arm::Control)?;
                if s_treat > s_control {
                    Arm::Treat
                } else if s_control > s_treat {
                    Arm::Control
                } else {
                    tie_break(label, method)
                }
            }
            LearnMethod::Naive => {
                let contrast = est
                    .naive_contrast
                    .ok_or_else(|| McError::IncompleteStratum(label.clone()))?;
                match sign(contrast) {
                    1 => Arm::Treat,
                    -1 => Arm::Control,
                    _ => tie_break(label, method),
                }
            }
        };
        actions.insert(label.clone(), arm);
    }
    Ok(Regime::new(actions))
}

/// Value gap of a regime against the exact optimum of the generating model.
pub fn evaluate_regret(spec: &ScmSpec, regime: &Regime) -> Result<f64, McError> {
    let best = optimal_regime(spec, RegimeSource::TrueGamma)?;
    let v_best = value_function(spec, &best)?;
    let v_regime = value_function(spec, regime)?;
    Ok(v_best - v_regime)
}

/// One replication of a simulate → estimate → learn → evaluate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub seed: u64,
    pub method: LearnMethod,
    pub regime: Regime,
    pub regret: f64,
    pub estimands: EmpiricalEstimands,
}

/// Run `replications` seeded studies; seeds are `base_seed + r`.
pub fn run_study(
    spec: &ScmSpec,
    n: usize,
    base_seed: u64,
    replications: u64,
    method: LearnMethod,
    pz_known: bool,
) -> Result<Vec<StudyRecord>, McError> {
    let pz_map: Option<BTreeMap<String, f64>> = pz_known.then(|| {
        spec.strata
            .iter()
            .map(|s| (s.label.clone(), s.p_z))
            .collect()
    });
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(r);
            let data = sample(spec, n, seed, false)?;
            let estimands = empirical_estimands(&data)?;
            let regime = learn_regime(&data, method, pz_map.as_ref())?;
            let regret = evaluate_regret(spec, &regime)?;
            Ok(StudyRecord {
                seed,
                method,
                regime,
                regret,
                estimands,
            })
        })
        .collect()
}
