//! Minimal dense two-phase simplex for tiny equality-form programs.
//!
//! Solves `min c·x  s.t.  A x = b, x ≥ 0` with Bland's rule, which cannot
//! cycle. The systems here are at most a handful of rows and sixteen
//! columns, so a dense tableau is the whole story. Redundant rows are
//! eliminated up front by Gauss-Jordan so the phase-one basis is always
//! removable.

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Reduce `A x = b` to an equivalent full-row-rank system.
/// Returns `None` when the system is inconsistent.
fn reduce_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = rows.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let mut b: Vec<f64> = rhs.to_vec();
    let m = a.len();

    let mut rank = 0;
    for col in 0..n {
        if rank == m {
            break;
        }
        // Partial pivoting within the unreduced rows.
        let (best_row, best_abs) = (rank..m)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("row range non-empty");
        if best_abs <= 1e-11 {
            continue;
        }
        a.swap(rank, best_row);
        b.swap(rank, best_row);
        let pivot = a[rank][col];
        for j in 0..n {
            a[rank][j] /= pivot;
        }
        b[rank] /= pivot;
        for r in 0..m {
            if r != rank {
                let factor = a[r][col];
                if factor != 0.0 {
                    for j in 0..n {
                        a[r][j] -= factor * a[rank][j];
                    }
                    b[r] -= factor * b[rank];
                }
            }
        }
        rank += 1;
    }

    // Remaining rows are numerically zero; they must have zero rhs.
    for r in rank..m {
        if b[r].abs() > FEAS_EPS {
            return None;
        }
    }
    a.truncate(rank);
    b.truncate(rank);
    Some((a, b))
}

struct Tableau {
    /// `m x (width + 1)` rows; last column is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= pivot;
        }
        for r in 0..self.rows.len() {
            if r != row {
                let factor = self.rows[r][col];
                if factor != 0.0 {
                    for j in 0..=self.width {
                        self.rows[r][j] -= factor * self.rows[row][j];
                    }
                }
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule iteration for `min` with reduced costs recomputed from
    /// the given objective. `active` limits the entering columns.
    fn run(&mut self, cost: &[f64], active: usize) -> Result<(), ()> {
        loop {
            // Reduced costs: c_j − c_B · B^{-1} A_j, using the tableau rows.
            let mut entering = None;
            for j in 0..active {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost.get(j).copied().unwrap_or(0.0);
                for (r, &bv) in self.basis.iter().enumerate() {
                    let cb = cost.get(bv).copied().unwrap_or(0.0);
                    if cb != 0.0 {
                        reduced -= cb * self.rows[r][j];
                    }
                }
                if reduced < -PIVOT_EPS {
                    entering = Some(j);
                    break; // Bland: lowest-index entering column.
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };

            // Ratio test; Bland tie-break on the lowest basis index.
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let coef = self.rows[r][col];
                if coef > PIVOT_EPS {
                    let ratio = self.rows[r][self.width] / coef;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(()); // Unbounded direction.
            };
            self.pivot(row, col);
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(r, &bv)| cost.get(bv).copied().unwrap_or(0.0) * self.rows[r][self.width])
            .sum()
    }
}

/// Solve `min objective · x  s.t.  rows · x = rhs, x ≥ 0`.
pub(crate) fn solve_min(rows: &[Vec<f64>], rhs: &[f64], objective: &[f64]) -> LpOutcome {
    let n = objective.len();
    let Some((mut a, mut b)) = reduce_rows(rows, rhs) else {
        return LpOutcome::Infeasible;
    };
    let m = a.len();
    for r in 0..m {
        if b[r] < 0.0 {
            for v in a[r].iter_mut() {
                *v = -*v;
            }
            b[r] = -b[r];
        }
    }

    // Phase I: artificial columns n..n+m with an identity start basis.
    let width = n + m;
    let mut tab = Tableau {
        rows: (0..m)
            .map(|r| {
                let mut row = vec![0.0; width + 1];
                row[..n].copy_from_slice(&a[r]);
                row[n + r] = 1.0;
                row[width] = b[r];
                row
            })
            .collect(),
        basis: (n..n + m).collect(),
        width,
    };
    let mut phase1_cost = vec![0.0; width];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    if tab.run(&phase1_cost, width).is_err() {
        return LpOutcome::Unbounded; // Cannot happen in phase I.
    }
    if tab.objective(&phase1_cost) > FEAS_EPS {
        return LpOutcome::Infeasible;
    }

    // Drive any zero-level artificials out of the basis; with full-row-rank
    // constraints a structural pivot always exists.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| tab.rows[r][j].abs() > PIVOT_EPS) {
                tab.pivot(r, col);
            }
        }
    }

    // Phase II over the structural columns only.
    match tab.run(objective, n) {
        Ok(()) => {
            let mut x = vec![0.0; n];
            for (r, &bv) in tab.basis.iter().enumerate() {
                if bv < n {
                    x[bv] = tab.rows[r][tab.width].max(0.0);
                }
            }
            LpOutcome::Optimal {
                objective: tab.objective(objective),
                x,
            }
        }
        Err(()) => LpOutcome::Unbounded,
    }
}

/// Solve `max objective · x` over the same feasible set.
pub(crate) fn solve_max(rows: &[Vec<f64>], rhs: &[f64], objective: &[f64]) -> LpOutcome {
    let negated: Vec<f64> = objective.iter().map(|v| -v).collect();
    match solve_min(rows, rhs, &negated) {
        LpOutcome::Optimal { objective, x } => LpOutcome::Optimal {
            objective: -objective,
            x,
        },
        other => other,
    }
}
