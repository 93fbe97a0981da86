mod common;

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use proptest::prelude::*;
use rand::Rng;

use shw_core::kinematics::{estimate_pose, length_jacobian, PoseError};
use shw_core::rig::{
    build_structure_matrix, string_lengths, GripPose, RigConfig, RigError, StructureMatrix,
    Wrench, STRING_COUNT,
};
use shw_core::tension::{
    pretension, solve_tensions, wrench_capability, SolveStatus, TensionBounds,
};
use shw_core::workspace::{analyze_workspace, axis_capabilities, diameter_sweep, evaluate_cell, GridSpec};

use common::{central_pose, enumerate_tensions, length_gradient_fd, random_wrench, rng};

fn rig() -> RigConfig {
    RigConfig::default_rig()
}

// ---- rig geometry -------------------------------------------------------

#[test]
fn mirrored_strings_have_equal_lengths_at_center() {
    let l = string_lengths(&rig(), &GripPose::identity()).unwrap();
    for j in 0..4 {
        assert!((l[j] - l[j + 4]).abs() < 1e-12, "{j}: {} vs {}", l[j], l[j + 4]);
    }
}

#[test]
fn zero_diameter_lengths_are_motor_distances() {
    let rig = rig().with_diameter(0.0);
    let p = Vector3::new(0.1, -0.05, 0.12);
    let pose = GripPose::from_parts(p, UnitQuaternion::from_euler_angles(0.2, -0.1, 0.4));
    let l = string_lengths(&rig, &pose).unwrap();
    for (i, li) in l.iter().enumerate() {
        assert_eq!(*li, (rig.motor_of(i) - p).norm());
    }
}

#[test]
fn lengths_match_direct_recomputation() {
    let rig = rig();
    let mut r = rng(1);
    let r_circle = 0.5 * rig.circle_diameter;
    let local = [
        Vector3::new(r_circle, 0.0, 0.0),
        Vector3::new(0.0, r_circle, 0.0),
        Vector3::new(-r_circle, 0.0, 0.0),
        Vector3::new(0.0, -r_circle, 0.0),
    ];
    for _ in 0..100 {
        let pose = central_pose(&mut r, 0.5);
        let l = string_lengths(&rig, &pose).unwrap();
        for i in 0..STRING_COUNT {
            let route = rig.string_pairing[i];
            let a = pose.position + pose.orientation * local[route.attachment];
            let expected = (rig.motor_positions[route.motor] - a).norm();
            assert!((l[i] - expected).abs() <= 1e-12, "string {i}");
        }
    }
}

#[test]
fn attachment_on_motor_is_degenerate() {
    let rig = rig().with_diameter(0.0);
    let pose = GripPose::at(rig.motor_positions[3]);
    assert!(matches!(string_lengths(&rig, &pose), Err(RigError::DegenerateString { .. })));
    assert!(matches!(build_structure_matrix(&rig, &pose), Err(RigError::DegenerateString { .. })));
}

#[test]
fn equal_tensions_cancel_at_center() {
    let a = build_structure_matrix(&rig(), &GripPose::identity()).unwrap();
    let w = a.apply(&[7.0; STRING_COUNT]);
    assert!(w.amax() <= 1e-12, "{w}");
}

#[test]
fn zero_diameter_has_zero_torque_rows() {
    let mut r = rng(2);
    let rig = rig().with_diameter(0.0);
    for _ in 0..20 {
        let a = build_structure_matrix(&rig, &central_pose(&mut r, 1.0)).unwrap();
        assert!(a.0.fixed_rows::<3>(3).iter().all(|&x| x == 0.0));
        assert!(a.rank(1e-9) <= 3);
    }
}

#[test]
fn force_rows_are_negative_length_gradient() {
    let rig = rig();
    let mut r = rng(3);
    for _ in 0..100 {
        let pose = central_pose(&mut r, 0.5);
        let a = build_structure_matrix(&rig, &pose).unwrap();
        let g = length_gradient_fd(&rig, &pose, 1e-6);
        for i in 0..STRING_COUNT {
            let col = a.0.fixed_view::<3, 1>(0, i);
            assert!((col.norm() - 1.0).abs() < 1e-9);
            for k in 0..3 {
                assert!((col[k] + g[(i, k)]).abs() <= 1e-5, "string {i} axis {k}");
            }
        }
    }
}

#[test]
fn translating_everything_leaves_matrix_unchanged() {
    let mut r = rng(4);
    let base = rig();
    for _ in 0..20 {
        let pose = central_pose(&mut r, 0.5);
        let shift = Vector3::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let mut moved = base.clone();
        for m in moved.motor_positions.iter_mut() {
            *m += shift;
        }
        let a = build_structure_matrix(&base, &pose).unwrap();
        let b = build_structure_matrix(&moved, &GripPose::from_parts(pose.position + shift, pose.orientation))
            .unwrap();
        assert!((a.0 - b.0).amax() <= 1e-12);
    }
}

#[test]
fn full_rank_across_recommended_diameters() {
    let mut r = rng(5);
    for d in [0.10, 0.15, 0.20, 0.25, 0.30] {
        let rig = rig().with_diameter(d);
        for _ in 0..30 {
            let a = build_structure_matrix(&rig, &central_pose(&mut r, 0.3)).unwrap();
            let sv = a.singular_values();
            assert!(sv[5] > 1e-6, "d={d}: {sv}");
        }
    }
}

#[test]
fn rig_file_round_trips() {
    let rig = rig();
    let text = rig.to_toml_string();
    assert_eq!(RigConfig::from_toml_str(&text).unwrap(), rig);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rig.toml");
    std::fs::write(&path, &text).unwrap();
    assert_eq!(RigConfig::load(&path).unwrap(), rig);
}

// ---- tension distribution ----------------------------------------------

#[test]
fn zero_wrench_at_center_is_midpoint() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let a = build_structure_matrix(&rig, &GripPose::identity()).unwrap();
    let report = pretension(&a, bounds).unwrap();
    assert!(report.is_optimal());
    for t in report.tensions.0 {
        assert!((t - bounds.mid()).abs() < 1e-9);
    }
    let zero_d = build_structure_matrix(&rig.with_diameter(0.0), &GripPose::identity()).unwrap();
    assert!(pretension(&zero_d, bounds).unwrap().is_optimal());
}

#[test]
fn force_beyond_all_strings_is_infeasible() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let a = build_structure_matrix(&rig, &GripPose::identity()).unwrap();
    let w = Wrench::new(9.0 * rig.tension_max, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert_eq!(solve_tensions(&a, &w, bounds).unwrap().status, SolveStatus::Infeasible);
}

/// Direction-wise capability, so random wrenches can be placed inside it.
fn capability_along(a: &StructureMatrix, bounds: TensionBounds, w: &Wrench) -> f64 {
    wrench_capability(a, bounds, &w.normalize()).unwrap()
}

#[test]
fn half_capability_wrenches_match_enumeration() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let mut r = rng(6);
    let mut done = 0;
    while done < 100 {
        let pose = central_pose(&mut r, 0.3);
        let a = build_structure_matrix(&rig, &pose).unwrap();
        let dir = random_wrench(&mut r, 1.0, 0.1);
        let cap = capability_along(&a, bounds, &dir);
        if cap == 0.0 {
            // no bounded pretension at this pose: both sides must say so
            assert!(!pretension(&a, bounds).unwrap().is_optimal());
            assert!(enumerate_tensions(&a, &Wrench::zeros(), bounds).is_none());
            continue;
        }
        let w = dir.normalize() * (0.5 * cap);
        let report = solve_tensions(&a, &w, bounds).unwrap();
        assert!(report.is_optimal());
        assert!(report.residual_norm <= 1e-8, "{}", report.residual_norm);
        let oracle = enumerate_tensions(&a, &w, bounds).expect("oracle infeasible");
        assert!(
            (report.objective - oracle.objective).abs() <= 1e-6,
            "{} vs {}",
            report.objective,
            oracle.objective
        );
        done += 1;
    }
}

#[test]
fn scaled_down_wrench_stays_feasible() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let mut r = rng(7);
    let mut checked = 0;
    for _ in 0..100 {
        let pose = central_pose(&mut r, 0.3);
        let a = build_structure_matrix(&rig, &pose).unwrap();
        let w = random_wrench(&mut r, 60.0, 4.0);
        if !pretension(&a, bounds).unwrap().is_optimal() {
            continue;
        }
        if solve_tensions(&a, &w, bounds).unwrap().is_optimal() {
            checked += 1;
            assert!(solve_tensions(&a, &(w * 0.5), bounds).unwrap().is_optimal());
        }
    }
    assert!(checked > 10);
}

#[test]
fn solves_are_bit_identical() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let mut r = rng(8);
    for _ in 0..20 {
        let a = build_structure_matrix(&rig, &central_pose(&mut r, 0.3)).unwrap();
        let w = random_wrench(&mut r, 40.0, 3.0);
        let x = solve_tensions(&a, &w, bounds).unwrap();
        let y = solve_tensions(&a, &w, bounds).unwrap();
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
        for (p, q) in x.tensions.0.iter().zip(y.tensions.0.iter()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
}

/// Largest feasible multiple by bisection on the enumeration oracle.
fn capability_by_bisection(a: &StructureMatrix, bounds: TensionBounds, d: &Wrench) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while enumerate_tensions(a, &(d * hi), bounds).is_some() {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if enumerate_tensions(a, &(d * mid), bounds).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn capability_matches_bisection() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let a = build_structure_matrix(&rig, &GripPose::identity()).unwrap();
    let dirs = [
        Wrench::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        Wrench::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        Wrench::new(0.6, 0.0, 0.8, 0.0, 0.0, 0.0),
    ];
    for d in dirs {
        let lp = wrench_capability(&a, bounds, &d).unwrap();
        let bis = capability_by_bisection(&a, bounds, &d);
        assert!(lp > 0.0);
        assert!((lp - bis).abs() <= 1e-4 * bis, "{d}: lp {lp} bisection {bis}");
    }
}

#[test]
fn capability_is_symmetric_at_center() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let a = build_structure_matrix(&rig, &GripPose::identity()).unwrap();
    let mut r = rng(9);
    for _ in 0..20 {
        let d = random_wrench(&mut r, 1.0, 1.0).normalize();
        let plus = wrench_capability(&a, bounds, &d).unwrap();
        let minus = wrench_capability(&a, bounds, &-d).unwrap();
        assert!((plus - minus).abs() <= 1e-6 * plus.max(1.0), "{plus} vs {minus}");
    }
}

#[test]
fn zero_diameter_has_no_torque_capability() {
    let rig = rig().with_diameter(0.0);
    let a = build_structure_matrix(&rig, &GripPose::identity()).unwrap();
    let d = Wrench::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    assert_eq!(wrench_capability(&a, TensionBounds::of(&rig), &d).unwrap(), 0.0);
}

// ---- pose estimation ----------------------------------------------------

fn perturbed(r: &mut rand_chacha::ChaCha8Rng, pose: &GripPose) -> GripPose {
    let dp = Vector3::from_fn(|_, _| r.gen_range(-1.0..1.0)).normalize() * r.gen_range(0.0..0.05);
    let axis = Vector3::from_fn(|_, _| r.gen_range(-1.0..1.0)).normalize();
    let dq = UnitQuaternion::from_scaled_axis(axis * r.gen_range(0.0..0.3));
    GripPose::from_parts(pose.position + dp, dq * pose.orientation)
}

#[test]
fn identity_is_a_fixed_point() {
    let rig = rig();
    let l = string_lengths(&rig, &GripPose::identity()).unwrap();
    let est = estimate_pose(&rig, &l, &GripPose::identity()).unwrap();
    assert!(est.residual_rms <= 1e-9);
    assert!(est.pose.position.norm() <= 1e-9);
    assert!(est.pose.orientation.angle() <= 1e-9);
}

#[test]
fn exact_lengths_round_trip() {
    let rig = rig();
    let mut r = rng(10);
    for _ in 0..100 {
        let truth = central_pose(&mut r, 0.5);
        let l = string_lengths(&rig, &truth).unwrap();
        let est = estimate_pose(&rig, &l, &perturbed(&mut r, &truth)).unwrap();
        assert!((est.pose.position - truth.position).norm() <= 1e-6);
        assert!(est.pose.orientation.angle_to(&truth.orientation) <= 1e-6);
        let back = string_lengths(&rig, &est.pose).unwrap();
        for i in 0..STRING_COUNT {
            assert!((back[i] - l[i]).abs() <= 1e-9);
        }
    }
}

#[test]
fn noisy_lengths_stay_within_bounds() {
    let rig = rig();
    let mut r = rng(11);
    let mut good = 0;
    for _ in 0..100 {
        let truth = central_pose(&mut r, 0.5);
        let mut l = string_lengths(&rig, &truth).unwrap();
        for li in l.iter_mut() {
            *li += r.gen_range(-5e-4..5e-4);
        }
        if let Ok(est) = estimate_pose(&rig, &l, &perturbed(&mut r, &truth)) {
            if (est.pose.position - truth.position).norm() <= 5e-3
                && est.pose.orientation.angle_to(&truth.orientation) <= 0.05
            {
                good += 1;
            }
        }
    }
    assert!(good >= 95, "{good}/100");
}

#[test]
fn zero_diameter_orientation_is_unobservable() {
    let rig = rig().with_diameter(0.0);
    let l = string_lengths(&rig, &GripPose::at(Vector3::new(0.05, 0.0, 0.0))).unwrap();
    assert!(matches!(
        estimate_pose(&rig, &l, &GripPose::identity()),
        Err(PoseError::RankDeficient { .. })
    ));
}

#[test]
fn invalid_lengths_are_rejected() {
    let mut l = string_lengths(&rig(), &GripPose::identity()).unwrap();
    l[2] = -1.0;
    assert_eq!(estimate_pose(&rig(), &l, &GripPose::identity()), Err(PoseError::InvalidLengths));
    l[2] = f64::NAN;
    assert_eq!(estimate_pose(&rig(), &l, &GripPose::identity()), Err(PoseError::InvalidLengths));
}

#[test]
fn jacobian_matches_finite_differences() {
    let rig = rig();
    let mut r = rng(12);
    let h = 1e-6;
    for _ in 0..20 {
        let pose = central_pose(&mut r, 0.5);
        let j = length_jacobian(&rig, &pose).unwrap();
        for k in 0..6 {
            let mut delta = Vector6::zeros();
            delta[k] = h;
            let step = |s: f64| {
                let d = delta * s;
                let p = pose.position + Vector3::new(d[0], d[1], d[2]);
                let q = UnitQuaternion::from_scaled_axis(Vector3::new(d[3], d[4], d[5])) * pose.orientation;
                string_lengths(&rig, &GripPose::from_parts(p, q)).unwrap()
            };
            let (plus, minus) = (step(1.0), step(-1.0));
            for i in 0..STRING_COUNT {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                assert!(
                    (j[(i, k)] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "({i},{k}): {} vs {fd}",
                    j[(i, k)]
                );
            }
        }
    }
}

// ---- workspace ----------------------------------------------------------

#[test]
fn torque_rows_are_linear_in_radius() {
    let mut r = rng(13);
    for _ in 0..20 {
        let u: [Vector3<f64>; STRING_COUNT] =
            std::array::from_fn(|_| Vector3::from_fn(|_, _| r.gen_range(-1.0..1.0)).normalize());
        let arm: [Vector3<f64>; STRING_COUNT] =
            std::array::from_fn(|_| Vector3::from_fn(|_, _| r.gen_range(-0.2..0.2)));
        let doubled: [Vector3<f64>; STRING_COUNT] = std::array::from_fn(|i| arm[i] * 2.0);
        let a = StructureMatrix::from_parts(&u, &arm);
        let b = StructureMatrix::from_parts(&u, &doubled);
        assert_eq!(a.0.fixed_rows::<3>(0), b.0.fixed_rows::<3>(0));
        assert_eq!(a.0.fixed_rows::<3>(3) * 2.0, b.0.fixed_rows::<3>(3));
    }
}

#[test]
fn sweep_torque_capability_increases_with_diameter() {
    let rows = diameter_sweep(&rig(), &[0.0, 0.05, 0.10, 0.20, 0.30]).unwrap();
    assert_eq!(rows[0].torque_capability, 0.0);
    assert!(rows[0].condition_number.is_none());
    for w in rows.windows(2) {
        assert!(w[1].torque_capability > w[0].torque_capability, "{w:?}");
    }
    assert!(rows[3].condition_number.is_some_and(|c| c.is_finite() && c >= 1.0));
}

#[test]
fn sweep_rejects_unsorted_or_negative() {
    assert!(diameter_sweep(&rig(), &[0.2, 0.1]).is_err());
    assert!(diameter_sweep(&rig(), &[-0.1]).is_err());
}

#[test]
fn zero_diameter_workspace_has_no_torque() {
    let rig = rig().with_diameter(0.0);
    let grid = GridSpec::centered(rig.center(), [0.6, 0.4, 0.4], [3, 3, 3]);
    let report = analyze_workspace(&rig, &grid, &UnitQuaternion::identity()).unwrap();
    assert!(report.cells.iter().all(|c| c.torque_capability == 0.0 && !c.wrench_closed));
}

#[test]
fn central_grid_is_closed_and_pretension_agrees() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let grid = GridSpec::centered(rig.center(), [0.6, 0.4, 0.4], [5, 5, 5]);
    let report = analyze_workspace(&rig, &grid, &UnitQuaternion::identity()).unwrap();
    assert_eq!(report.cells.len(), 125);
    assert_eq!(report.closed_fraction, 1.0);
    for (flat, cell) in report.cells.iter().enumerate() {
        assert_eq!(cell.index, grid.cell_index(flat));
        let pose = GripPose::at(Vector3::from(cell.position));
        let a = build_structure_matrix(&rig, &pose).unwrap();
        assert_eq!(cell.pretension_feasible, enumerate_tensions(&a, &Wrench::zeros(), bounds).is_some());
        assert!(cell.force_capability >= 0.0 && cell.torque_capability >= 0.0);
        assert!(cell.condition_number.is_some_and(|c| c >= 1.0));
    }
}

#[test]
fn single_cell_matches_direct_capability() {
    let rig = rig();
    let bounds = TensionBounds::of(&rig);
    let c = rig.center();
    let cell = evaluate_cell(&rig, c, &UnitQuaternion::identity(), [0, 0, 0]).unwrap();
    let a = build_structure_matrix(&rig, &GripPose::at(c)).unwrap();
    let mut force = f64::INFINITY;
    let mut torque = f64::INFINITY;
    for k in 0..6 {
        for s in [1.0, -1.0] {
            let mut d = Wrench::zeros();
            d[k] = s;
            let cap = wrench_capability(&a, bounds, &d).unwrap();
            if k < 3 {
                force = force.min(cap);
            } else {
                torque = torque.min(cap);
            }
        }
    }
    assert_eq!(cell.force_capability.to_bits(), force.to_bits());
    assert_eq!(cell.torque_capability.to_bits(), torque.to_bits());
    assert_eq!(axis_capabilities(&a, bounds).unwrap(), (force, torque));
}

#[test]
fn report_serialization_round_trips() {
    let rig = rig();
    let grid = GridSpec::centered(rig.center(), [0.4, 0.3, 0.3], [2, 3, 2]);
    let q = UnitQuaternion::from_euler_angles(0.1, 0.0, 0.2);
    let report = analyze_workspace(&rig, &grid, &q).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: shw_core::workspace::WorkspaceReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);

    let dir = tempfile::tempdir().unwrap();
    report.write_csv(dir.path().join("w.csv")).unwrap();
    report.write_summary(dir.path().join("w.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.cells.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_solves_satisfy_statics(
        px in -0.15f64..0.15, py in -0.1f64..0.1, pz in -0.1f64..0.1,
        roll in -0.3f64..0.3, pitch in -0.3f64..0.3, yaw in -0.3f64..0.3,
        w in proptest::array::uniform6(-20.0f64..20.0),
    ) {
        let rig = rig();
        let bounds = TensionBounds::of(&rig);
        let pose = GripPose::from_parts(Vector3::new(px, py, pz), UnitQuaternion::from_euler_angles(roll, pitch, yaw));
        let a = build_structure_matrix(&rig, &pose).unwrap();
        let mut w = Wrench::from_column_slice(&w);
        w.fixed_rows_mut::<3>(3).scale_mut(0.1);
        let report = solve_tensions(&a, &w, bounds).unwrap();
        if report.is_optimal() {
            let res = (a.apply(&report.tensions.0) - w).amax();
            prop_assert!(res <= 1e-7 * w.amax().max(1.0));
            prop_assert!(report.tensions.0.iter().all(|&t| t >= bounds.min - 1e-9 && t <= bounds.max + 1e-9));
        }
    }

    #[test]
    fn quaternion_is_normalized_on_construction(
        w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
    ) {
        prop_assume!((w * w + x * x + y * y + z * z).sqrt() > 1e-3);
        let pose = GripPose::new(Vector3::zeros(), w, x, y, z);
        let n = pose.orientation.quaternion().norm();
        prop_assert!((n - 1.0).abs() <= 1e-9);
    }
}
