//! Dense tableau simplex for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! Every capacity program in this crate has that shape (the origin is always
//! feasible), so a single phase suffices. Pivoting follows Bland's rule: the
//! lowest-index improving column enters and ratio-test ties leave by lowest
//! basic variable index. Results are therefore deterministic and the method
//! cannot cycle.

use thiserror::Error;

/// Feasibility and optimality tolerance.
pub const TOLERANCE: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("right-hand side {0} of row {1} is negative; origin must be feasible")]
    NegativeRhs(f64, usize),
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
    #[error("coefficient refers to variable {0} but the program has {1}")]
    BadVariable(usize, usize),
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Basic variable per row; indices `>= x.len()` are slacks.
    pub basis: Vec<usize>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    /// Adds `Σ coeff·x_var ≤ rhs`. Repeated variables are summed.
    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((coeffs, rhs));
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_vars();
        let m = self.rows.len();
        let width = n + m + 1;
        let rhs_col = n + m;

        // Row 0 holds reduced costs (negated objective), rows 1..=m constraints.
        let mut t = vec![0.0f64; (m + 1) * width];
        for (j, &c) in self.objective.iter().enumerate() {
            t[j] = -c;
        }
        for (i, (coeffs, rhs)) in self.rows.iter().enumerate() {
            if *rhs < 0.0 {
                return Err(LpError::NegativeRhs(*rhs, i));
            }
            let row = (i + 1) * width;
            for &(var, a) in coeffs {
                if var >= n {
                    return Err(LpError::BadVariable(var, n));
                }
                t[row + var] += a;
            }
            t[row + n + i] = 1.0;
            t[row + rhs_col] = *rhs;
        }
        let mut basis: Vec<usize> = (n..n + m).collect();

        let mut pivots = 0;
        while let Some(enter) = (0..n + m).find(|&j| t[j] < -TOLERANCE) {
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = t[(i + 1) * width + enter];
                if a <= TOLERANCE {
                    continue;
                }
                let ratio = t[(i + 1) * width + rhs_col] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((best, r)) => {
                        if ratio < r - TOLERANCE
                            || (ratio <= r + TOLERANCE && basis[i] < basis[best])
                        {
                            Some((i, ratio))
                        } else {
                            Some((best, r))
                        }
                    }
                };
            }
            let Some((leave, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            pivot(&mut t, width, m, leave + 1, enter);
            basis[leave] = enter;
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit(MAX_PIVOTS));
            }
        }

        let mut x = vec![0.0; n];
        for (i, &var) in basis.iter().enumerate() {
            if var < n {
                let v = t[(i + 1) * width + rhs_col];
                x[var] = if v.abs() < TOLERANCE { 0.0 } else { v };
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            objective,
            x,
            basis,
        })
    }
}

fn pivot(t: &mut [f64], width: usize, m: usize, prow: usize, pcol: usize) {
    let p = t[prow * width + pcol];
    for j in 0..width {
        t[prow * width + j] /= p;
    }
    t[prow * width + pcol] = 1.0;
    let (before, rest) = t.split_at_mut(prow * width);
    let (pivot_row, after) = rest.split_at_mut(width);
    let eliminate = |row: &mut [f64]| {
        let f = row[pcol];
        if f != 0.0 {
            for (r, &pv) in row.iter_mut().zip(pivot_row.iter()) {
                *r -= f * pv;
            }
            row[pcol] = 0.0;
        }
    };
    for row in before.chunks_mut(width) {
        eliminate(row);
    }
    for row in after.chunks_mut(width).take(m + 1 - prow - 1) {
        eliminate(row);
    }
}
