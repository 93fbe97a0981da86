#![allow(dead_code)]

use nalgebra::{SMatrix, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use shw_core::rig::{string_lengths, GripPose, RigConfig, StructureMatrix, Wrench};
use shw_core::scene::Vec3;
use shw_core::tension::TensionBounds;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Pose with position in the central half of the default rig box and a
/// rotation of at most `max_angle`.
pub fn central_pose(rng: &mut ChaCha8Rng, max_angle: f64) -> GripPose {
    let half = [0.35, 0.2, 0.25];
    let p = Vector3::from_fn(|k, _| rng.gen_range(-0.5..0.5) * half[k]);
    let axis = loop {
        let a = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        if a.norm() > 0.1 && a.norm() <= 1.0 {
            break a.normalize();
        }
    };
    let angle = rng.gen_range(0.0..max_angle);
    GripPose::from_parts(p, UnitQuaternion::from_scaled_axis(axis * angle))
}

/// Random wrench: force up to `f_max` N, torque up to `t_max` N·m, random directions.
pub fn random_wrench(rng: &mut ChaCha8Rng, f_max: f64, t_max: f64) -> Wrench {
    let dir = |rng: &mut ChaCha8Rng| loop {
        let a = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        if a.norm() > 0.1 && a.norm() <= 1.0 {
            break a.normalize();
        }
    };
    let f = dir(rng) * rng.gen_range(0.0..f_max);
    let t = dir(rng) * rng.gen_range(0.0..t_max);
    Vector6::new(f.x, f.y, f.z, t.x, t.y, t.z)
}

pub struct OracleSolution {
    pub tensions: [f64; 8],
    pub objective: f64,
}

/// Minimum of `|t - t_mid|^2` s.t. `A t = w`, bounds, by enumerating every
/// assignment of each string to {at min, at max, free} (3^8 cases). For each
/// case the free tensions solve the equality-constrained least-distance
/// problem through the 6x6 Gram matrix `A_F A_F^T`, pseudo-inverted from its
/// symmetric eigen-decomposition. Candidates violating bounds or `A t = w`
/// are dropped; the best survivor is the optimum.
pub fn enumerate_tensions(
    a: &StructureMatrix,
    w: &Wrench,
    bounds: TensionBounds,
) -> Option<OracleSolution> {
    let mid = bounds.mid();
    let tol_bound = 1e-9 * bounds.max;
    let tol_res = 1e-7 * w.amax().max(1.0);
    let mut best: Option<OracleSolution> = None;
    for code in 0..3usize.pow(8) {
        let mut c = code;
        let mut t = [mid; 8];
        let mut free = [false; 8];
        for i in 0..8 {
            match c % 3 {
                0 => free[i] = true,
                1 => t[i] = bounds.min,
                _ => t[i] = bounds.max,
            }
            c /= 3;
        }
        // residual the free strings must produce, measured from t_mid
        let mut r = *w;
        for i in 0..8 {
            r -= a.0.column(i) * t[i];
        }
        let mut gram = SMatrix::<f64, 6, 6>::zeros();
        for i in (0..8).filter(|&i| free[i]) {
            let col = a.0.column(i);
            gram += col * col.transpose();
        }
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let mut y = Vector6::zeros();
        for k in 0..6 {
            let lam = eig.eigenvalues[k];
            if lam > 1e-12 * top.max(1e-300) {
                let v = eig.eigenvectors.column(k);
                y += v * (v.dot(&r) / lam);
            }
        }
        for i in (0..8).filter(|&i| free[i]) {
            t[i] += a.0.column(i).dot(&y);
        }
        if t.iter().any(|&x| x < bounds.min - tol_bound || x > bounds.max + tol_bound) {
            continue;
        }
        let res = a.apply(&t) - w;
        if res.amax() > tol_res {
            continue;
        }
        let objective: f64 = t.iter().map(|x| (x - mid) * (x - mid)).sum();
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(OracleSolution {
                tensions: t,
                objective,
            });
        }
    }
    best
}

/// Central finite-difference gradient of each string length with respect to
/// grip position (8 x 3), step `h`.
pub fn length_gradient_fd(rig: &RigConfig, pose: &GripPose, h: f64) -> SMatrix<f64, 8, 3> {
    let mut g = SMatrix::<f64, 8, 3>::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        let plus = string_lengths(rig, &GripPose::from_parts(pose.position + e, pose.orientation))
            .unwrap();
        let minus = string_lengths(rig, &GripPose::from_parts(pose.position - e, pose.orientation))
            .unwrap();
        for i in 0..8 {
            g[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    g
}

/// Penetration of a capsule into the half space `z <= height` (an infinite
/// plate), by sampling the axis densely: `radius - min z` over the axis.
pub fn capsule_plate_depth(a: &Vec3, b: &Vec3, radius: f64, height: f64, samples: usize) -> f64 {
    let lowest = (0..=samples)
        .map(|k| (a + (b - a) * (k as f64 / samples as f64)).z)
        .fold(f64::INFINITY, f64::min);
    radius - (lowest - height)
}

/// Seam coverage by brute force: `n` evenly spaced arc-length points, each
/// covered when some sample lies within `tol`.
pub fn coverage_dense(seam: &[Vec3], samples: &[Vec3], tol: f64, n: usize) -> f64 {
    let seg_len: Vec<f64> = seam.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let mut covered = 0;
    for k in 0..n {
        let s = (k as f64 + 0.5) / n as f64 * total;
        let mut acc = 0.0;
        let mut q = seam[seam.len() - 1];
        for (i, l) in seg_len.iter().enumerate() {
            if s <= acc + l {
                q = seam[i] + (seam[i + 1] - seam[i]) * ((s - acc) / l);
                break;
            }
            acc += l;
        }
        if samples.iter().any(|p| (p - q).norm() <= tol) {
            covered += 1;
        }
    }
    covered as f64 / n as f64
}

/// Distance from `p` to a polyline, by brute force over segments.
pub fn polyline_distance(seam: &[Vec3], p: &Vec3) -> f64 {
    seam.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let s = ((p - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (p - (w[0] + d * s)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Angle between two orientations (rad).
pub fn angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}
