//! Dense two-phase tableau simplex for `max c·x  s.t.  A x <= b, x >= 0`.
//!
//! Entering columns follow Dantzig's rule until the objective has stalled for
//! `2 * (rows + cols)` consecutive pivots, after which Bland's rule is used for
//! the rest of the solve.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub status: SimplexStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // last entry of each row is the rhs
    cost: Vec<f64>,      // reduced costs; last entry is the objective value
    basis: Vec<usize>,
    blocked: Vec<bool>,
    bland: bool,
    stalled: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.cost.len() - 1
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let width = self.cost.len();
        let p = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for j in 0..width {
                    row[j] -= f * pivot_row[j];
                }
                row[e] = 0.0;
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for j in 0..width {
                self.cost[j] -= f * pivot_row[j];
            }
            self.cost[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn entering(&self) -> Option<usize> {
        let candidates = (0..self.ncols()).filter(|&j| !self.blocked[j] && self.cost[j] < -COST_EPS);
        if self.bland {
            candidates.min()
        } else {
            candidates.min_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)))
        }
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let rhs = self.ncols();
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if row[e] > PIVOT_EPS {
                let ratio = row[rhs] / row[e];
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }

    /// Runs pivots until optimal; returns false when unbounded.
    fn run(&mut self) -> Result<bool> {
        let stall_limit = 2 * (self.rows.len() + self.ncols());
        loop {
            let Some(e) = self.entering() else {
                return Ok(true);
            };
            let Some(r) = self.leaving(e) else {
                return Ok(false);
            };
            if self.iterations >= self.max_iterations {
                return Err(Error::SimplexIterationLimit {
                    iterations: self.iterations,
                });
            }
            let before = self.cost[self.ncols()];
            self.pivot(r, e);
            self.iterations += 1;
            if self.cost[self.ncols()] - before <= COST_EPS {
                self.stalled += 1;
                if self.stalled >= stall_limit {
                    self.bland = true;
                }
            } else {
                self.stalled = 0;
            }
        }
    }
}

/// Maximizes `c·x` subject to `a x <= b` and `x >= 0`. Columns flagged in
/// `fixed_zero` never enter the basis and are reported as exactly zero.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64], fixed_zero: &[bool]) -> Result<SimplexOutcome> {
    let nv = c.len();
    let m = a.len();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if fixed_zero.len() != nv {
        return Err(Error::DimensionMismatch {
            expected: nv,
            found: fixed_zero.len(),
        });
    }
    if let Some(row) = a.iter().find(|r| r.len() != nv) {
        return Err(Error::DimensionMismatch {
            expected: nv,
            found: row.len(),
        });
    }

    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let na = negative.len();
    let ncols = nv + m + na;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        if b[i] >= 0.0 {
            row[..nv].copy_from_slice(&a[i]);
            row[nv + i] = 1.0;
            row[ncols] = b[i];
            basis.push(nv + i);
        } else {
            for j in 0..nv {
                row[j] = -a[i][j];
            }
            row[nv + i] = -1.0;
            row[nv + m + art] = 1.0;
            row[ncols] = -b[i];
            basis.push(nv + m + art);
            art += 1;
        }
        rows.push(row);
    }
    let mut blocked = vec![false; ncols];
    blocked[..nv].copy_from_slice(fixed_zero);

    let mut t = Tableau {
        rows,
        cost: vec![0.0; ncols + 1],
        basis,
        blocked,
        bland: false,
        stalled: 0,
        iterations: 0,
        max_iterations: 50 * (m + ncols) + 1000,
    };

    if na > 0 {
        // phase one: maximize -sum(artificials)
        for j in nv + m..ncols {
            t.cost[j] = 1.0;
        }
        for i in 0..m {
            if t.basis[i] >= nv + m {
                let row = t.rows[i].clone();
                for j in 0..=ncols {
                    t.cost[j] -= row[j];
                }
            }
        }
        t.run()?;
        if t.cost[ncols] < -1e-9 {
            return Ok(SimplexOutcome {
                status: SimplexStatus::Infeasible,
                x: vec![0.0; nv],
                objective: 0.0,
                iterations: t.iterations,
            });
        }
        // drive zero-level artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= nv + m {
                let col = (0..nv + m).find(|&j| !t.blocked[j] && t.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for j in nv + m..ncols {
            t.blocked[j] = true;
        }
        t.bland = false;
        t.stalled = 0;
    }

    t.cost.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..nv {
        t.cost[j] = -c[j];
    }
    for i in 0..t.rows.len() {
        let bj = t.basis[i];
        let f = t.cost[bj];
        if f != 0.0 {
            let row = t.rows[i].clone();
            for j in 0..=ncols {
                t.cost[j] -= f * row[j];
            }
        }
    }
    let bounded = t.run()?;

    let mut x = vec![0.0; nv];
    for (i, &bj) in t.basis.iter().enumerate() {
        if bj < nv {
            x[bj] = t.rows[i][ncols];
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(SimplexOutcome {
        status: if bounded {
            SimplexStatus::Optimal
        } else {
            SimplexStatus::Unbounded
        },
        x,
        objective,
        iterations: t.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let out = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
            &[false, false],
        )
        .unwrap();
        assert_eq!(out.status, SimplexStatus::Optimal);
        assert!((out.objective - 36.0).abs() < 1e-12);
        assert!((out.x[0] - 2.0).abs() < 1e-12 && (out.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn phase_one_handles_lower_bounds() {
        // max -x - y, x + y >= 2 (as -x - y <= -2), x <= 3 -> objective -2
        let out = maximize(
            &[-1.0, -1.0],
            &[vec![-1.0, -1.0], vec![1.0, 0.0]],
            &[-2.0, 3.0],
            &[false, false],
        )
        .unwrap();
        assert_eq!(out.status, SimplexStatus::Optimal);
        assert!((out.objective + 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = maximize(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0], &[false]).unwrap();
        assert_eq!(inf.status, SimplexStatus::Infeasible);
        let unb = maximize(&[1.0, 0.0], &[vec![0.0, 1.0]], &[1.0], &[false, false]).unwrap();
        assert_eq!(unb.status, SimplexStatus::Unbounded);
    }

    #[test]
    fn fixed_columns_stay_zero() {
        let out = maximize(&[1.0, 2.0], &[vec![1.0, 1.0]], &[1.0], &[false, true]).unwrap();
        assert_eq!(out.x, vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance
        let c = [0.75, -20.0, 0.5, -6.0];
        let a = vec![
            vec![0.25, -8.0, -1.0, 9.0],
            vec![0.5, -12.0, -0.5, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let out = maximize(&c, &a, &[0.0, 0.0, 1.0], &[false; 4]).unwrap();
        assert_eq!(out.status, SimplexStatus::Optimal);
        assert!((out.objective - 1.25).abs() < 1e-10, "{}", out.objective);
    }

    #[test]
    fn dimension_errors() {
        assert!(maximize(&[1.0], &[vec![1.0, 2.0]], &[1.0], &[false]).is_err());
        assert!(maximize(&[1.0], &[vec![1.0]], &[], &[false]).is_err());
    }
}
