//! Grip pose from measured string lengths (the sensing path of the device).
//!
//! Damped nonlinear least squares over position and a local rotation
//! increment composed onto the current quaternion. The length Jacobian is the
//! negated transpose of the structure matrix: pulling the grip along a string
//! direction shortens that string, and rotating it moves the attachment point
//! along `omega x (R r_i)`.

use nalgebra::{SMatrix, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rig::{build_structure_matrix, string_lengths, GripPose, RigConfig, RigError, STRING_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("string lengths must be finite and positive")]
    InvalidLengths,
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error("pose estimate did not converge after {iterations} iterations (rms residual {residual_rms:.3e} m)")]
    NoConvergence { residual_rms: f64, iterations: usize },
    #[error("pose is not observable from the string lengths (Jacobian singular value ratio {ratio:.3e})")]
    RankDeficient { estimate: PoseEstimate, ratio: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: GripPose,
    pub residual_rms: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub step_tol: f64,
    pub residual_change_tol: f64,
    /// Residual above which a stalled solve is a failure.
    pub stall_residual: f64,
    /// Smallest accepted `sigma_min / sigma_max` of the Jacobian at the solution.
    pub rank_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            step_tol: 1e-10,
            residual_change_tol: 1e-12,
            stall_residual: 1e-4,
            rank_tol: 1e-8,
        }
    }
}

pub type LengthJacobian = SMatrix<f64, STRING_COUNT, 6>;

/// `d lengths / d (position, rotation increment)` at `pose`.
pub fn length_jacobian(rig: &RigConfig, pose: &GripPose) -> Result<LengthJacobian, RigError> {
    Ok(-build_structure_matrix(rig, pose)?.0.transpose())
}

fn residuals(
    rig: &RigConfig,
    pose: &GripPose,
    lengths: &[f64; STRING_COUNT],
) -> Result<SMatrix<f64, STRING_COUNT, 1>, RigError> {
    let model = string_lengths(rig, pose)?;
    Ok(SMatrix::from_fn(|i, _| model[i] - lengths[i]))
}

fn rms(r: &SMatrix<f64, STRING_COUNT, 1>) -> f64 {
    (r.norm_squared() / STRING_COUNT as f64).sqrt()
}

fn retract(pose: &GripPose, delta: &SMatrix<f64, 6, 1>) -> GripPose {
    let dp = Vector3::new(delta[0], delta[1], delta[2]);
    let dr = UnitQuaternion::from_scaled_axis(Vector3::new(delta[3], delta[4], delta[5]));
    GripPose::from_parts(pose.position + dp, dr * pose.orientation)
}

pub fn estimate_pose(
    rig: &RigConfig,
    lengths: &[f64; STRING_COUNT],
    initial_guess: &GripPose,
) -> Result<PoseEstimate, PoseError> {
    estimate_pose_with(rig, lengths, initial_guess, &LmOptions::default())
}

pub fn estimate_pose_with(
    rig: &RigConfig,
    lengths: &[f64; STRING_COUNT],
    initial_guess: &GripPose,
    opts: &LmOptions,
) -> Result<PoseEstimate, PoseError> {
    if !lengths.iter().all(|l| l.is_finite() && *l > 0.0) {
        return Err(PoseError::InvalidLengths);
    }
    let mut pose = *initial_guess;
    let mut r = residuals(rig, &pose, lengths)?;
    let mut cost = r.norm_squared();
    let mut damping = opts.initial_damping;
    let mut converged = false;
    let mut stalled = false;
    let mut accepted = 0;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let j = length_jacobian(rig, &pose)?;
        let jt = j.transpose();
        let normal = jt * j;
        let gradient = jt * r;
        let damped = normal + SMatrix::<f64, 6, 6>::identity() * damping;
        let Some(chol) = damped.cholesky() else {
            damping *= 10.0;
            continue;
        };
        let delta = -chol.solve(&gradient);
        if delta.norm() < opts.step_tol {
            converged = true;
            break;
        }
        let candidate = retract(&pose, &delta);
        let r_new = match residuals(rig, &candidate, lengths) {
            Ok(r) => r,
            Err(_) => {
                damping *= 10.0;
                continue;
            }
        };
        let cost_new = r_new.norm_squared();
        if cost_new < cost {
            let change = rms(&r) - rms(&r_new);
            pose = candidate;
            accepted += 1;
            r = r_new;
            cost = cost_new;
            damping = (damping / 10.0).max(1e-15);
            if change < opts.residual_change_tol {
                converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                stalled = true;
                break;
            }
        }
    }

    let estimate = PoseEstimate {
        pose,
        residual_rms: rms(&r),
        iterations,
    };
    // A zero first step at a large residual is a stationary point of the
    // guess (e.g. a symmetric but inconsistent length set), not a solution.
    let stuck = accepted == 0 && estimate.residual_rms > opts.stall_residual;
    if stuck || (!converged && !(stalled && estimate.residual_rms <= opts.stall_residual)) {
        return Err(PoseError::NoConvergence {
            residual_rms: estimate.residual_rms,
            iterations,
        });
    }

    let sv = length_jacobian(rig, &pose)?.svd(false, false).singular_values;
    let ratio = if sv.max() > 0.0 { sv.min() / sv.max() } else { 0.0 };
    if ratio < opts.rank_tol {
        return Err(PoseError::RankDeficient { estimate, ratio });
    }
    Ok(estimate)
}
