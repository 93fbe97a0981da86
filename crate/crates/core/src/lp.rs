//! Dense two-phase simplex for the small linear programs behind tension
//! feasibility and wrench capability.
//!
//! Solves `min c.x  s.t.  A x = b,  0 <= x <= upper` (upper may be infinite).
//! Finite upper bounds become explicit slack rows. Bland's rule keeps the
//! pivoting deterministic and cycle-free.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 5_000;

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    /// No point satisfies the constraints; `x` minimizes the total violation.
    Infeasible { x: DVector<f64>, violation: f64 },
    Unbounded,
    /// Pivot limit reached.
    Stalled,
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    rows: usize,
    /// Structural columns (originals + bound slacks).
    structural: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(row, j)] /= p;
        }
        for i in 0..=self.rows {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..ncols {
                    let v = self.t[(row, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
                self.t[(i, col)] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex pivots on the objective row; `enterable` limits entering columns.
    fn iterate(&mut self, enterable: usize) -> Result<(), LpOutcome> {
        let obj = self.rows;
        let rhs = self.rhs_col();
        for _ in 0..MAX_PIVOTS {
            let entering = (0..enterable).find(|&j| self.t[(obj, j)] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best || (ratio == best && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return Err(LpOutcome::Unbounded),
            }
        }
        Err(LpOutcome::Stalled)
    }

    fn solution(&self, n: usize) -> DVector<f64> {
        let mut x = DVector::zeros(n);
        let rhs = self.rhs_col();
        for (i, &var) in self.basis.iter().enumerate() {
            if var < n {
                x[var] = self.t[(i, rhs)].max(0.0);
            }
        }
        x
    }
}

impl LinearProgram {
    /// Solves the program; `feasibility_tol` bounds the accepted total
    /// constraint violation at the end of phase one.
    pub fn solve(&self, feasibility_tol: f64) -> LpOutcome {
        let m = self.a.nrows();
        let n = self.a.ncols();
        debug_assert_eq!(self.b.len(), m);
        debug_assert_eq!(self.c.len(), n);
        debug_assert_eq!(self.upper.len(), n);

        let bounded: Vec<usize> = (0..n).filter(|&j| self.upper[j].is_finite()).collect();
        let rows = m + bounded.len();
        let structural = n + bounded.len();
        let cols = structural + rows + 1;
        let mut t = DMatrix::<f64>::zeros(rows + 1, cols);
        let rhs = cols - 1;

        for i in 0..m {
            let sign = if self.b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[(i, j)] = sign * self.a[(i, j)];
            }
            t[(i, rhs)] = sign * self.b[i];
        }
        for (k, &j) in bounded.iter().enumerate() {
            let r = m + k;
            t[(r, j)] = 1.0;
            t[(r, n + k)] = 1.0;
            t[(r, rhs)] = self.upper[j];
        }
        for i in 0..rows {
            t[(i, structural + i)] = 1.0;
        }
        // phase one: minimize the sum of artificials
        for j in 0..structural {
            let s: f64 = (0..rows).map(|i| t[(i, j)]).sum();
            t[(rows, j)] = -s;
        }
        t[(rows, rhs)] = -(0..rows).map(|i| t[(i, rhs)]).sum::<f64>();

        let mut tab = Tableau {
            t,
            basis: (structural..structural + rows).collect(),
            rows,
            structural,
        };
        if let Err(e) = tab.iterate(structural) {
            return e;
        }
        let violation: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= tab.structural)
            .map(|(i, _)| tab.t[(i, rhs)].abs())
            .sum();
        if violation > feasibility_tol {
            return LpOutcome::Infeasible {
                x: tab.solution(n),
                violation,
            };
        }

        // drive zero-valued artificials out of the basis where possible
        for i in 0..rows {
            if tab.basis[i] >= tab.structural {
                if let Some(j) = (0..tab.structural).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }

        // phase two objective row
        for j in 0..cols {
            tab.t[(rows, j)] = 0.0;
        }
        for j in 0..n {
            tab.t[(rows, j)] = self.c[j];
        }
        for i in 0..rows {
            let var = tab.basis[i];
            let cb = if var < n { self.c[var] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..cols {
                    let v = tab.t[(i, j)];
                    tab.t[(rows, j)] -= cb * v;
                }
            }
        }
        if let Err(e) = tab.iterate(structural) {
            return e;
        }
        let x = tab.solution(n);
        let objective = self.c.dot(&x);
        LpOutcome::Optimal { x, objective }
    }
}
