//! Tension distribution: turn a desired grip wrench into eight bounded,
//! pull-only string tensions.
//!
//! The distribution is the solution of
//!
//! ```text
//!     minimize   |t - t_mid|^2
//!     subject to A t = w,   t_min <= t_i <= t_max
//! ```
//!
//! with `t_mid = (t_min + t_max) / 2`, which keeps every string well inside its
//! range. The equality constraints are first reduced to an orthonormal basis of
//! the row space of `A` (this also absorbs rank loss, e.g. a zero-diameter
//! attachment circle), a feasible start is found with a phase-one simplex, and a
//! primal active-set method on the bound constraints finishes the job.

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpOutcome};
use crate::rig::{RigConfig, StructureMatrix, Wrench, STRING_COUNT};

/// Relative singular-value cutoff used to decide the rank of `A`.
const RANK_TOL: f64 = 1e-10;
const MAX_ACTIVE_SET_ITERATIONS: usize = 200;
/// Residual bound an `Optimal` report guarantees, relative to `max(1, |w|_inf)`.
pub const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensionError {
    #[error("tension bounds must satisfy 0 < min < max, got [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("structure matrix or wrench contains non-finite values")]
    NonFinite,
    #[error("capability direction must have unit norm, got {norm}")]
    InvalidDirection { norm: f64 },
    #[error("tension solve failed numerically (condition estimate {condition:.3e})")]
    NumericalFailure { condition: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionBounds {
    pub min: f64,
    pub max: f64,
}

impl TensionBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, TensionError> {
        let b = Self { min, max };
        b.check()?;
        Ok(b)
    }

    pub fn of(rig: &RigConfig) -> Self {
        Self {
            min: rig.tension_min,
            max: rig.tension_max,
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    fn check(&self) -> Result<(), TensionError> {
        if self.min > 0.0 && self.min < self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(TensionError::InvalidBounds {
                min: self.min,
                max: self.max,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensions(pub [f64; STRING_COUNT]);

impl Tensions {
    pub fn as_array(&self) -> &[f64; STRING_COUNT] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionSolveReport {
    pub tensions: Tensions,
    /// `|A t - w|_inf` in N / N·m.
    pub residual_norm: f64,
    /// `|t - t_mid|^2` in N².
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl TensionSolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Orthonormal basis of the span of some matrix rows, built by pivoted
/// Gram-Schmidt with one re-orthogonalization pass.
///
/// (nalgebra's SVD returns inaccurate singular vectors when singular values
/// cluster, which is the normal case for the row-orthonormal systems here.)
struct RowBasis {
    /// Orthonormal rows.
    q: DMatrix<f64>,
    /// `q = coeff * rows`
    coeff: DMatrix<f64>,
    kept: Vec<usize>,
    rejected: Vec<usize>,
}

fn row_basis(rows: &DMatrix<f64>, rel_tol: f64) -> RowBasis {
    let (m, n) = rows.shape();
    let scale = (0..m).map(|i| rows.row(i).norm()).fold(0.0, f64::max);
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut coeff: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut remaining: Vec<usize> = (0..m).collect();
    // residual of every remaining row against the basis so far
    let mut resid: Vec<(DVector<f64>, DVector<f64>)> = (0..m)
        .map(|i| {
            let mut c = DVector::zeros(m);
            c[i] = 1.0;
            (rows.row(i).transpose(), c)
        })
        .collect();
    while !remaining.is_empty() && scale > 0.0 {
        let (pos, &pick) = remaining
            .iter()
            .enumerate()
            .max_by(|x, y| resid[*x.1].0.norm().total_cmp(&resid[*y.1].0.norm()))
            .unwrap();
        let (mut v, mut c) = resid[pick].clone();
        for _ in 0..2 {
            for (qk, ck) in q.iter().zip(&coeff) {
                let d = qk.dot(&v);
                v -= qk * d;
                c -= ck * d;
            }
        }
        let norm = v.norm();
        if norm <= rel_tol * scale {
            break;
        }
        remaining.remove(pos);
        let qn = v / norm;
        let cn = c / norm;
        for &i in &remaining {
            let d = qn.dot(&resid[i].0);
            let (ri, ci) = &mut resid[i];
            *ri -= &qn * d;
            *ci -= &cn * d;
        }
        q.push(qn);
        coeff.push(cn);
        kept.push(pick);
    }
    let r = q.len();
    RowBasis {
        q: DMatrix::from_fn(r, n, |k, j| q[k][j]),
        coeff: DMatrix::from_fn(r, m, |k, j| coeff[k][j]),
        kept,
        rejected: remaining,
    }
}

/// Equality constraints `A t = w` rewritten as `E t = f` with orthonormal rows.
struct ReducedEquality {
    e: DMatrix<f64>,
    f: DVector<f64>,
    /// Largest violation of the dependent rows of `A t = w`.
    inconsistency: f64,
    condition: f64,
}

fn reduce(a: &SMatrix<f64, 6, STRING_COUNT>, w: &Wrench) -> ReducedEquality {
    let rows = DMatrix::from_fn(6, STRING_COUNT, |i, j| a[(i, j)]);
    let basis = row_basis(&rows, RANK_TOL);
    let wd = DVector::from_column_slice(w.as_slice());
    let f = &basis.coeff * &wd;
    // a dependent row a_j = sum_k (a_j . e_k) e_k must agree with w_j
    let inconsistency = basis
        .rejected
        .iter()
        .map(|&j| {
            let implied: f64 = (0..basis.q.nrows())
                .map(|k| rows.row(j).dot(&basis.q.row(k)) * f[k])
                .sum();
            (w[j] - implied).abs()
        })
        .fold(0.0, f64::max);
    debug_assert_eq!(basis.kept.len() + basis.rejected.len(), 6);
    let sv = a.transpose().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    ReducedEquality {
        e: basis.q,
        f,
        inconsistency,
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
    }
}

fn residual(a: &StructureMatrix, t: &[f64; STRING_COUNT], w: &Wrench) -> f64 {
    (a.apply(t) - w).amax()
}

fn check_finite(a: &StructureMatrix, w: &Wrench) -> Result<(), TensionError> {
    if a.0.iter().chain(w.iter()).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensionError::NonFinite)
    }
}

/// Finds the bounded tension vector closest to `t_mid` that reproduces `w`.
///
/// An unreachable wrench is reported with [`SolveStatus::Infeasible`] and the
/// least-violating tensions found; it is never scaled here.
pub fn solve_tensions(
    a: &StructureMatrix,
    w: &Wrench,
    bounds: TensionBounds,
) -> Result<TensionSolveReport, TensionError> {
    bounds.check()?;
    check_finite(a, w)?;
    let scale = w.amax().max(1.0);
    let mid = bounds.mid();
    let red = reduce(&a.0, w);

    let infeasible = |t: [f64; STRING_COUNT], iterations| TensionSolveReport {
        residual_norm: residual(a, &t, w),
        objective: t.iter().map(|x| (x - mid).powi(2)).sum(),
        tensions: Tensions(t),
        status: SolveStatus::Infeasible,
        iterations,
    };

    if red.inconsistency > 1e-9 * scale {
        return Ok(infeasible([mid; STRING_COUNT], 0));
    }

    // phase one on y = t - t_min
    let r = red.e.nrows();
    let span = bounds.max - bounds.min;
    let rhs = &red.f - &red.e * DVector::from_element(STRING_COUNT, bounds.min);
    let lp = LinearProgram {
        a: red.e.clone(),
        b: rhs,
        c: DVector::zeros(STRING_COUNT),
        upper: vec![span; STRING_COUNT],
    };
    let start = match lp.solve(1e-9 * (1.0 + bounds.max)) {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible { x, .. } => {
            let t = std::array::from_fn(|i| (bounds.min + x[i]).clamp(bounds.min, bounds.max));
            return Ok(infeasible(t, 0));
        }
        LpOutcome::Unbounded | LpOutcome::Stalled => {
            return Err(TensionError::NumericalFailure {
                condition: red.condition,
            })
        }
    };
    let mut t: [f64; STRING_COUNT] =
        std::array::from_fn(|i| (bounds.min + start[i]).clamp(bounds.min, bounds.max));

    let iterations = if r == 0 {
        // no equality constraints: the box projection of t_mid is optimal
        t = [mid; STRING_COUNT];
        0
    } else {
        active_set(&red.e, &mut t, mid, bounds).ok_or(TensionError::NumericalFailure {
            condition: red.condition,
        })?
    };

    let residual_norm = residual(a, &t, w);
    if residual_norm > RESIDUAL_TOL * scale {
        return Err(TensionError::NumericalFailure {
            condition: red.condition,
        });
    }
    Ok(TensionSolveReport {
        tensions: Tensions(t),
        residual_norm,
        objective: t.iter().map(|x| (x - mid).powi(2)).sum(),
        status: SolveStatus::Optimal,
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Active {
    Free,
    Lower,
    Upper,
}

/// Primal active-set iterations from a feasible `t`. Returns the iteration
/// count, or `None` if the iteration cap is hit.
fn active_set(
    e: &DMatrix<f64>,
    t: &mut [f64; STRING_COUNT],
    mid: f64,
    bounds: TensionBounds,
) -> Option<usize> {
    let mut working = [Active::Free; STRING_COUNT];
    for iteration in 1..=MAX_ACTIVE_SET_ITERATIONS {
        let free: Vec<usize> = (0..STRING_COUNT)
            .filter(|&i| working[i] == Active::Free)
            .collect();
        let g: [f64; STRING_COUNT] = std::array::from_fn(|i| t[i] - mid);
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));

        // Row space of E restricted to free columns, via SVD of E_F^T.
        let (step, lambda) = if free.is_empty() {
            (DVector::zeros(0), DVector::zeros(e.nrows()))
        } else {
            let ef = DMatrix::from_fn(e.nrows(), free.len(), |a, b| e[(a, free[b])]);
            let basis = row_basis(&ef, RANK_TOL);
            let c = &basis.q * &g_free;
            let in_range = basis.q.transpose() * &c;
            let lambda = basis.coeff.transpose() * c;
            (-(g_free.clone() - in_range), lambda)
        };

        let step_norm = step.amax();
        if step_norm <= 1e-12 {
            // multipliers of the active bounds
            let et_lambda = e.transpose() * &lambda;
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..STRING_COUNT {
                let r = g[i] - et_lambda[i];
                let mu = match working[i] {
                    Active::Free => continue,
                    Active::Lower => r,
                    Active::Upper => -r,
                };
                if mu < -1e-9 && worst.map_or(true, |(_, m)| mu < m) {
                    worst = Some((i, mu));
                }
            }
            match worst {
                None => return Some(iteration),
                Some((i, _)) => working[i] = Active::Free,
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking: Option<(usize, Active)> = None;
        for (k, &i) in free.iter().enumerate() {
            let p = step[k];
            let (limit, side) = if p < -1e-15 {
                ((bounds.min - t[i]) / p, Active::Lower)
            } else if p > 1e-15 {
                ((bounds.max - t[i]) / p, Active::Upper)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            if limit < alpha {
                alpha = limit;
                blocking = Some((i, side));
            }
        }
        for (k, &i) in free.iter().enumerate() {
            t[i] = (t[i] + alpha * step[k]).clamp(bounds.min, bounds.max);
        }
        if let Some((i, side)) = blocking {
            t[i] = if side == Active::Lower {
                bounds.min
            } else {
                bounds.max
            };
            working[i] = side;
        }
    }
    None
}

/// Tension state holding the grip at rest (zero wrench).
///
/// Optimal exactly when a bounded, strictly positive null-space tension exists
/// at this pose.
pub fn pretension(
    a: &StructureMatrix,
    bounds: TensionBounds,
) -> Result<TensionSolveReport, TensionError> {
    solve_tensions(a, &Wrench::zeros(), bounds)
}

/// Largest `s >= 0` such that `s * direction` can be produced with bounded
/// tensions. Zero when even the zero wrench is out of reach.
pub fn wrench_capability(
    a: &StructureMatrix,
    bounds: TensionBounds,
    direction: &Wrench,
) -> Result<f64, TensionError> {
    bounds.check()?;
    check_finite(a, direction)?;
    let norm = direction.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(TensionError::InvalidDirection { norm });
    }
    let n = STRING_COUNT + 1;
    let lhs = DMatrix::from_fn(6, n, |i, j| {
        if j < STRING_COUNT {
            a.0[(i, j)]
        } else {
            -direction[i]
        }
    });
    let base = a.apply(&[bounds.min; STRING_COUNT]);
    let mut c = DVector::zeros(n);
    c[STRING_COUNT] = -1.0;
    let mut upper = vec![bounds.max - bounds.min; STRING_COUNT];
    upper.push(f64::INFINITY);
    let lp = LinearProgram {
        a: lhs,
        b: -DVector::from_column_slice(base.as_slice()),
        c,
        upper,
    };
    match lp.solve(1e-9 * (1.0 + bounds.max)) {
        LpOutcome::Optimal { x, .. } => Ok(x[STRING_COUNT].max(0.0)),
        LpOutcome::Infeasible { .. } => Ok(0.0),
        LpOutcome::Unbounded | LpOutcome::Stalled => Err(TensionError::NumericalFailure {
            condition: a.condition_number().unwrap_or(f64::INFINITY),
        }),
    }
}

/// Wrench closure in the unbounded sense: some strictly positive tension
/// vector produces zero wrench, and `A` has full rank. Scale invariant, so
/// `t >= 1` stands in for `t > 0`.
pub fn wrench_closure(a: &StructureMatrix) -> Result<bool, TensionError> {
    check_finite(a, &Wrench::zeros())?;
    if a.condition_number().is_none() {
        return Ok(false);
    }
    let lhs = DMatrix::from_fn(6, STRING_COUNT, |i, j| a.0[(i, j)]);
    let base = a.apply(&[1.0; STRING_COUNT]);
    let lp = LinearProgram {
        a: lhs,
        b: -DVector::from_column_slice(base.as_slice()),
        c: DVector::zeros(STRING_COUNT),
        upper: vec![f64::INFINITY; STRING_COUNT],
    };
    match lp.solve(1e-9) {
        LpOutcome::Optimal { .. } => Ok(true),
        LpOutcome::Infeasible { .. } => Ok(false),
        LpOutcome::Unbounded | LpOutcome::Stalled => Err(TensionError::NumericalFailure {
            condition: a.condition_number().unwrap_or(f64::INFINITY),
        }),
    }
}

/// Fraction `s in [0, 1]` such that `s * w` is the largest feasible multiple
/// of `w` not exceeding it. `None` when not even the zero wrench is feasible.
pub fn feasible_scale(
    a: &StructureMatrix,
    bounds: TensionBounds,
    w: &Wrench,
) -> Result<Option<f64>, TensionError> {
    let norm = w.norm();
    if norm == 0.0 {
        return Ok(pretension(a, bounds)?.is_optimal().then_some(1.0));
    }
    let cap = wrench_capability(a, bounds, &(w / norm))?;
    if cap <= 0.0 && !pretension(a, bounds)?.is_optimal() {
        return Ok(None);
    }
    Ok(Some((cap / norm).min(1.0)))
}
