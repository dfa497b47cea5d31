//! Shared test oracles and constructed-model generators.
//!
//! The oracles here recompute quantities from first principles, along
//! routes that are deliberately different from the library's own:
//! estimands are enumerated through the full (latent, instrument,
//! treatment) cell decomposition of the observed law, the weighted
//! objectives are evaluated from their original reweighting formulas
//! rather than their latent decompositions, and the effect bounds are
//! found by exhaustive basic-solution enumeration of the response-type
//! polytope instead of the simplex method.
#![allow(dead_code)]

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ivsign_core::estimands::Regime;
use ivsign_core::scm::{Arm, LatentClass, OutcomeModel, ScmSpec, Stratum};

/// Mass and expected outcome of one (stratum, class, z, a) cell.
fn cells(spec: &ScmSpec) -> Vec<(usize, f64, f64, Arm, Arm, f64)> {
    let mut out = Vec::new();
    for (si, s) in spec.strata.iter().enumerate() {
        for u in &s.latent {
            for &z in &Arm::BOTH {
                for &a in &Arm::BOTH {
                    let p_a = match a {
                        Arm::Treat => u.p_treat_given_z(z),
                        Arm::Control => 1.0 - u.p_treat_given_z(z),
                    };
                    let mass = s.prob * u.prob * s.p_z_arm(z) * p_a;
                    out.push((si, mass, s.p_z_arm(z), z, a, u.outcome.arm_mean(a)));
                }
            }
        }
    }
    out
}

pub fn oracle_gamma(s: &Stratum) -> f64 {
    s.latent
        .iter()
        .map(|u| u.prob * (u.outcome.arm_mean(Arm::Treat) - u.outcome.arm_mean(Arm::Control)))
        .sum()
}

pub fn oracle_delta(s: &Stratum) -> f64 {
    s.latent
        .iter()
        .map(|u| u.prob * (u.p_a_z1 - u.p_a_zm1))
        .sum()
}

/// C(l) through the observed law: E[Y|Z=1,l] − E[Y|Z=−1,l], enumerated
/// over (u, a) cells.
pub fn oracle_c_observed(s: &Stratum) -> f64 {
    let e_y_given_z = |z: Arm| -> f64 {
        s.latent
            .iter()
            .map(|u| {
                let p = u.p_treat_given_z(z);
                u.prob
                    * (p * u.outcome.arm_mean(Arm::Treat)
                        + (1.0 - p) * u.outcome.arm_mean(Arm::Control))
            })
            .sum()
    };
    e_y_given_z(Arm::Treat) - e_y_given_z(Arm::Control)
}

pub fn oracle_value(spec: &ScmSpec, regime: &Regime) -> f64 {
    spec.strata
        .iter()
        .map(|s| {
            let arm = regime.action(&s.label).expect("regime covers spec");
            s.prob
                * s.latent
                    .iter()
                    .map(|u| u.prob * u.outcome.arm_mean(arm))
                    .sum::<f64>()
        })
        .sum()
}

/// E[ZAY·1{A=D(L)} / (δ(L) f(Z|L))] from the original reweighting formula.
pub fn oracle_f1(spec: &ScmSpec, regime: &Regime) -> f64 {
    cells(spec)
        .into_iter()
        .map(|(si, mass, p_z, z, a, e_y)| {
            let s = &spec.strata[si];
            let action = regime.action(&s.label).expect("regime covers spec");
            if a != action {
                return 0.0;
            }
            mass * z.value() * a.value() * e_y / (oracle_delta(s) * p_z)
        })
        .sum()
}

/// E[Y·1{Z=D(L)} / (δ(L) f(Z|L))] from the original reweighting formula.
pub fn oracle_f2(spec: &ScmSpec, regime: &Regime) -> f64 {
    cells(spec)
        .into_iter()
        .map(|(si, mass, p_z, z, _a, e_y)| {
            let s = &spec.strata[si];
            let action = regime.action(&s.label).expect("regime covers spec");
            if z != action {
                return 0.0;
            }
            mass * e_y / (oracle_delta(s) * p_z)
        })
        .sum()
}

/// E[Y·1{D(L)=A} / f(A|L)] from the original reweighting formula.
pub fn oracle_qian_naive(spec: &ScmSpec, regime: &Regime) -> f64 {
    let mut total = 0.0;
    for s in &spec.strata {
        let action = regime.action(&s.label).expect("regime covers spec");
        let p_a: f64 = s
            .latent
            .iter()
            .map(|u| {
                u.prob
                    * Arm::BOTH
                        .iter()
                        .map(|&z| {
                            let p = u.p_treat_given_z(z);
                            s.p_z_arm(z)
                                * match action {
                                    Arm::Treat => p,
                                    Arm::Control => 1.0 - p,
                                }
                        })
                        .sum::<f64>()
            })
            .sum();
        let e_y_and_a: f64 = s
            .latent
            .iter()
            .map(|u| {
                u.prob
                    * Arm::BOTH
                        .iter()
                        .map(|&z| {
                            let p = u.p_treat_given_z(z);
                            let p_this = match action {
                                Arm::Treat => p,
                                Arm::Control => 1.0 - p,
                            };
                            s.p_z_arm(z) * p_this * u.outcome.arm_mean(action)
                        })
                        .sum::<f64>()
            })
            .sum();
        total += s.prob * e_y_and_a / p_a;
    }
    total
}

/// Population treated-vs-control contrast E[Y|A=1,l] − E[Y|A=−1,l].
pub fn oracle_naive_contrast(s: &Stratum) -> f64 {
    let arm_stats = |a: Arm| -> (f64, f64) {
        let mut p = 0.0;
        let mut y = 0.0;
        for u in &s.latent {
            for &z in &Arm::BOTH {
                let p_treat = u.p_treat_given_z(z);
                let p_this = match a {
                    Arm::Treat => p_treat,
                    Arm::Control => 1.0 - p_treat,
                };
                p += u.prob * s.p_z_arm(z) * p_this;
                y += u.prob * s.p_z_arm(z) * p_this * u.outcome.arm_mean(a);
            }
        }
        (p, y)
    };
    let (p1, y1) = arm_stats(Arm::Treat);
    let (pm1, ym1) = arm_stats(Arm::Control);
    y1 / p1 - ym1 / pm1
}

// ---------------------------------------------------------------------
// Brute-force LP oracle: exhaustive basic-solution enumeration.
// ---------------------------------------------------------------------

/// Gauss-Jordan reduction keeping only independent rows.
/// Returns `None` on an inconsistent system.
fn independent_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = rows[0].len();
    let mut a = rows.to_vec();
    let mut b = rhs.to_vec();
    let m = a.len();
    let mut rank = 0;
    for col in 0..n {
        if rank == m {
            break;
        }
        let (pivot_row, pivot_abs) = (rank..m)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot_abs <= 1e-11 {
            continue;
        }
        a.swap(rank, pivot_row);
        b.swap(rank, pivot_row);
        let pivot = a[rank][col];
        for j in 0..n {
            a[rank][j] /= pivot;
        }
        b[rank] /= pivot;
        for r in 0..m {
            if r != rank && a[r][col] != 0.0 {
                let f = a[r][col];
                for j in 0..n {
                    a[r][j] -= f * a[rank][j];
                }
                b[r] -= f * b[rank];
            }
        }
        rank += 1;
    }
    for r in rank..m {
        if b[r].abs() > 1e-8 {
            return None;
        }
    }
    a.truncate(rank);
    b.truncate(rank);
    Some((a, b))
}

fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot_abs < 1e-9 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = m[col][col];
        for j in 0..n {
            m[col][j] /= pivot;
        }
        rhs[col] /= pivot;
        for r in 0..n {
            if r != col && m[r][col] != 0.0 {
                let f = m[r][col];
                for j in 0..n {
                    m[r][j] -= f * m[col][j];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some(rhs)
}

/// Min/max of `objective · x` over `{rows · x = rhs, x ≥ 0}` by
/// enumerating every basic solution. Exponential and proud of it.
pub fn vertex_enum_bounds(rows: &[Vec<f64>], rhs: &[f64], objective: &[f64]) -> Option<(f64, f64)> {
    let n = rows[0].len();
    let (a, b) = independent_rows(rows, rhs)?;
    let rank = a.len();
    if rank == 0 {
        return Some((0.0, 0.0));
    }
    let mut best: Option<(f64, f64)> = None;
    for cols in (0..n).combinations(rank) {
        let square: Vec<Vec<f64>> = a
            .iter()
            .map(|row| cols.iter().map(|&c| row[c]).collect())
            .collect();
        let Some(x_basis) = solve_square(&square, &b) else {
            continue;
        };
        if x_basis.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let value: f64 = cols
            .iter()
            .zip(&x_basis)
            .map(|(&c, &v)| objective[c] * v)
            .sum();
        best = Some(match best {
            None => (value, value),
            Some((lo, hi)) => (lo.min(value), hi.max(value)),
        });
    }
    best
}

// ---------------------------------------------------------------------
// Constructed model generators for equality-mode and sign-mode regimes.
// ---------------------------------------------------------------------

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

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

/// A random model whose compliance score is constant across classes, so
/// the independent-compliance condition holds exactly.
pub fn delta_const_spec(seed: u64, index: u64) -> ScmSpec {
    let mut rng = rng_for(seed, index);
    build_constructed(&mut rng, true, false)
}

/// A random model whose class-level effect is constant, so the
/// no-effect-modification condition holds exactly.
pub fn gamma_const_spec(seed: u64, index: u64) -> ScmSpec {
    let mut rng = rng_for(seed, index);
    build_constructed(&mut rng, false, true)
}

fn build_constructed(rng: &mut ChaCha8Rng, delta_const: bool, gamma_const: bool) -> ScmSpec {
    let n_strata = rng.random_range(1..=3);
    let stratum_probs = simplex_draw(rng, n_strata);
    let strata = (0..n_strata)
        .map(|si| {
            let n_latent = rng.random_range(2..=4);
            let latent_probs = simplex_draw(rng, n_latent);
            let shared_pa = (rng.random_range(0.5..0.95), rng.random_range(0.05..0.45));
            let shared_outcome =
                OutcomeModel::mean(rng.random_range(0.1..1.0), rng.random_range(-1.0..-0.1));
            let latent = (0..n_latent)
                .map(|ui| {
                    let (p_a_z1, p_a_zm1) = if delta_const {
                        shared_pa
                    } else {
                        (rng.random_range(0.5..0.95), rng.random_range(0.05..0.45))
                    };
                    let outcome = if gamma_const {
                        shared_outcome.clone()
                    } else {
                        OutcomeModel::mean(rng.random_range(0.1..1.0), rng.random_range(-1.0..-0.1))
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
            Stratum {
                label: format!("l{si}"),
                prob: stratum_probs[si],
                p_z: rng.random_range(0.2..0.8),
                latent,
            }
        })
        .collect();
    ScmSpec { strata }
}

/// A random model where γ̃ and δ̃ each keep one strict sign per stratum,
/// so the single-sign condition holds with margin.
pub fn han_spec(seed: u64, index: u64) -> ScmSpec {
    let mut rng = rng_for(seed, index);
    let n_strata = rng.random_range(1..=3);
    let stratum_probs = simplex_draw(&mut rng, n_strata);
    let strata = (0..n_strata)
        .map(|si| {
            let direction: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let n_latent = rng.random_range(2..=4);
            let latent_probs = simplex_draw(&mut rng, n_latent);
            let latent = (0..n_latent)
                .map(|ui| {
                    let effect = rng.random_range(0.1..0.9) * direction;
                    let base = if direction > 0.0 {
                        rng.random_range(-1.0..0.0)
                    } else {
                        rng.random_range(0.0..1.0)
                    };
                    let compliance = rng.random_range(0.05..0.4) * direction;
                    let low = rng.random_range(0.05..0.55);
                    let (p_a_z1, p_a_zm1) = if direction > 0.0 {
                        (low + compliance.abs(), low)
                    } else {
                        (low, low + compliance.abs())
                    };
                    LatentClass {
                        label: format!("u{ui}"),
                        prob: latent_probs[ui],
                        p_a_z1,
                        p_a_zm1,
                        outcome: OutcomeModel::mean(base + effect, base),
                    }
                })
                .collect();
            Stratum {
                label: format!("l{si}"),
                prob: stratum_probs[si],
                p_z: rng.random_range(0.2..0.8),
                latent,
            }
        })
        .collect();
    ScmSpec { strata }
}

/// A random model with sorted class profiles: γ̃ and δ̃ are comonotone in
/// the declared order and share the sign of their averages, so the
/// rational-agents condition holds.
pub fn comonotone_spec(seed: u64, index: u64) -> ScmSpec {
    let mut rng = rng_for(seed, index);
    let n_strata = rng.random_range(1..=3);
    let stratum_probs = simplex_draw(&mut rng, n_strata);
    let strata = (0..n_strata)
        .map(|si| {
            let n_latent = rng.random_range(2..=4);
            let latent_probs = simplex_draw(&mut rng, n_latent);
            let mut effects: Vec<f64> =
                (0..n_latent).map(|_| rng.random_range(0.05..0.9)).collect();
            let mut compliances: Vec<f64> =
                (0..n_latent).map(|_| rng.random_range(0.05..0.4)).collect();
            effects.sort_by(f64::total_cmp);
            compliances.sort_by(f64::total_cmp);
            let latent = (0..n_latent)
                .map(|ui| {
                    let base = rng.random_range(-1.0..0.0);
                    let low = 0.05;
                    LatentClass {
                        label: format!("u{ui}"),
                        prob: latent_probs[ui],
                        p_a_z1: low + compliances[ui],
                        p_a_zm1: low,
                        outcome: OutcomeModel::mean(base + effects[ui], base),
                    }
                })
                .collect();
            Stratum {
                label: format!("l{si}"),
                prob: stratum_probs[si],
                p_z: rng.random_range(0.2..0.8),
                latent,
            }
        })
        .collect();
    ScmSpec { strata }
}

/// A confounded model where the naive treated-vs-control contrast has the
/// wrong sign at population level while the instrument identifies both the
/// effect and the value function exactly.
pub fn naive_flip_spec() -> ScmSpec {
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
                    p_a_zm1: 0.1,
                    outcome: OutcomeModel::mean(1.0, 0.8),
                },
                LatentClass {
                    label: "u1".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.9,
                    p_a_zm1: 0.7,
                    outcome: OutcomeModel::mean(0.2, 0.0),
                },
            ],
        }],
    }
}

/// Binary-outcome confounded model with partial compliance and true effect
/// 0.5: the bounds must cover 0.5 without collapsing.
pub fn confounded_bin_spec() -> ScmSpec {
    ScmSpec {
        strata: vec![Stratum {
            label: "l0".to_string(),
            prob: 1.0,
            p_z: 0.5,
            latent: vec![
                LatentClass {
                    label: "u0".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.9,
                    p_a_zm1: 0.2,
                    outcome: OutcomeModel::bernoulli(0.9, 0.2),
                },
                LatentClass {
                    label: "u1".to_string(),
                    prob: 0.5,
                    p_a_z1: 0.6,
                    p_a_zm1: 0.3,
                    outcome: OutcomeModel::bernoulli(0.5, 0.2),
                },
            ],
        }],
    }
}
