mod common;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use proptest::prelude::*;
use rand::Rng;

use shw_core::rig::GripPose;
use shw_core::scene::synth::{self, CarBodyPanel};
use shw_core::scene::{
    contact_wrench, handle_replica_state, project_shadow, query_contacts, resolve_tip_motion,
    seam_metrics, sweep_tip, LoadOptions, MixedProp, NosePrimitive, PenaltyGains, Plane,
    PuttyBead, PuttySample, PuttySettings, SceneError, SeamPath, TriMesh, Vec3,
};

use common::{capsule_plate_depth, coverage_dense, polyline_distance, rng};

fn random_point(r: &mut rand_chacha::ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::from_fn(|_, _| r.gen_range(-half..half))
}

fn assert_queries_agree(mesh: &TriMesh, r: &mut rand_chacha::ChaCha8Rng, half: f64) {
    for _ in 0..100 {
        let p = random_point(r, half);
        let fast = mesh.closest_point(&p);
        let slow = mesh.closest_point_brute(&p);
        assert!((fast.distance - slow.distance).abs() <= 1e-12);
        assert!((fast.point - slow.point).norm() <= 1e-12);

        let q = random_point(r, half);
        match (mesh.first_hit(&p, &q), mesh.first_hit_brute(&p, &q)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                assert!((a.t - b.t).abs() <= 1e-12);
                assert!((a.point - b.point).norm() <= 1e-12);
            }
            other => panic!("hit mismatch {other:?}"),
        }
        let fast = mesh.segment_closest(&p, &q);
        let slow = mesh.segment_closest_brute(&p, &q);
        assert!((fast.distance - slow.distance).abs() <= 1e-12);
    }
}

#[test]
fn bvh_matches_brute_force() {
    let mut r = rng(20);
    assert_queries_agree(&synth::icosphere(0.1, 3), &mut r, 0.2);
    assert_queries_agree(&synth::unit_cube(), &mut r, 1.0);
    assert_queries_agree(&CarBodyPanel::mesh(), &mut r, 0.5);
    assert_queries_agree(&synth::plate(0.3, 0.0, 6), &mut r, 0.4);
}

#[test]
fn cube_and_degenerate_triangles() {
    let cube = synth::unit_cube();
    assert_eq!((cube.vertices().len(), cube.triangles().len()), (8, 12));
    let text = cube.to_obj_string();
    let back = TriMesh::from_obj_str(&text, LoadOptions::default()).unwrap();
    assert_eq!((back.vertices().len(), back.triangles().len()), (8, 12));

    let sliver = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
    let mesh = TriMesh::from_obj_str(sliver, LoadOptions::default()).unwrap();
    assert_eq!(mesh.triangles().len(), 1);
    assert_eq!(mesh.warnings().len(), 1);
}

#[test]
fn obj_and_stl_round_trip() {
    let panel = CarBodyPanel::mesh();
    let obj = TriMesh::from_obj_str(&panel.to_obj_string(), LoadOptions::default()).unwrap();
    assert_eq!(obj.triangles(), panel.triangles());
    for (a, b) in obj.vertices().iter().zip(panel.vertices()) {
        assert_eq!(a, b);
    }
    let sphere = synth::icosphere(0.2, 2);
    let stl = TriMesh::from_stl_bytes(&sphere.to_stl_bytes(), LoadOptions::default()).unwrap();
    assert_eq!(stl.triangles().len(), sphere.triangles().len());
    assert_eq!(stl.vertices().len(), sphere.vertices().len());
    // STL stores f32
    for t in 0..sphere.triangles().len() {
        let (a, b) = (sphere.triangle_vertices(t), stl.triangle_vertices(t));
        for k in 0..3 {
            assert!((a[k] - b[k]).norm() < 1e-7);
        }
    }
}

#[test]
fn flipped_winding_reverses_normals() {
    let text = synth::icosphere(0.1, 1).to_obj_string();
    let a = TriMesh::from_obj_str(&text, LoadOptions::default()).unwrap();
    let b = TriMesh::from_obj_str(&text, LoadOptions { flip_winding: true }).unwrap();
    for t in 0..a.triangles().len() {
        assert_eq!(a.face_normal(t), -b.face_normal(t));
    }
    let outside = Vec3::new(0.0, 0.0, 0.5);
    assert!(a.signed_distance(&outside).0 > 0.0);
    assert!(b.signed_distance(&outside).0 < 0.0);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let bad = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 4\n";
    match TriMesh::from_obj_str(bad, LoadOptions::default()) {
        Err(SceneError::Parse { line: Some(4), .. }) => {}
        other => panic!("{other:?}"),
    }
    let bad = "v 0 0 0\nv 1 zero 0\n";
    match TriMesh::from_obj_str(bad, LoadOptions::default()) {
        Err(SceneError::Parse { line: Some(2), .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        TriMesh::from_obj_str("# nothing\n", LoadOptions::default()),
        Err(SceneError::EmptyMesh)
    ));
    assert!(TriMesh::from_stl_bytes(&[0u8; 40], LoadOptions::default()).is_err());
    let err = TriMesh::load("/no/such/mesh.obj", LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("/no/such/mesh.obj"));
}

fn sphere_prop(radius: f64) -> MixedProp {
    MixedProp {
        nose: vec![NosePrimitive::Sphere { center: Vec3::zeros(), radius }],
        tip: Vec3::zeros(),
        nose_root: Vec3::zeros(),
        ..MixedProp::putty_gun()
    }
}

#[test]
fn sphere_against_plate() {
    let plate = synth::plate(0.3, 0.0, 4);
    let prop = sphere_prop(0.01);
    assert!(query_contacts(&plate, &prop, &GripPose::at(Vector3::new(0.02, 0.01, 0.015))).is_empty());
    let c = query_contacts(&plate, &prop, &GripPose::at(Vector3::new(0.02, 0.01, 0.005)));
    assert!((c[0].depth - 0.005).abs() < 1e-12);
    let c = query_contacts(&plate, &prop, &GripPose::at(Vector3::new(0.02, 0.01, -0.005)));
    assert_eq!(c.len(), 1);
    assert!((c[0].depth - 0.015).abs() < 1e-12);
    assert!((c[0].normal - Vec3::z()).norm() < 1e-12);
}

fn capsule_prop(a: Vec3, b: Vec3, radius: f64) -> MixedProp {
    MixedProp {
        nose: vec![NosePrimitive::Capsule { a, b, radius }],
        tip: b,
        nose_root: a,
        ..MixedProp::putty_gun()
    }
}

#[test]
fn tilted_capsule_on_plate_matches_analytic_depth() {
    let plate = synth::plate(0.3, 0.0, 4);
    let mut r = rng(21);
    for _ in 0..50 {
        let a = Vec3::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(0.0..0.02));
        let b = Vec3::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(0.0..0.02));
        let radius = 0.012;
        let expected = capsule_plate_depth(&a, &b, radius, 0.0, 4000);
        let c = query_contacts(&plate, &capsule_prop(a, b, radius), &GripPose::identity());
        if expected <= 0.0 {
            assert!(c.is_empty());
        } else {
            assert_eq!(c.len(), 1);
            assert!((c[0].depth - expected).abs() <= 1e-4, "{} vs {expected}", c[0].depth);
        }
    }
}

#[test]
fn grazing_capsule_on_sphere_matches_sampled_depth() {
    // fine tessellation: facet sag well under the 0.1 mm tolerance
    let big = 0.1;
    let mesh = synth::icosphere(big, 5);
    let mut r = rng(22);
    let radius = 0.012;
    for _ in 0..50 {
        let n = random_point(&mut r, 1.0).normalize();
        let mut t = n.cross(&random_point(&mut r, 1.0)).normalize();
        t = (t + n * r.gen_range(-0.2..0.2)).normalize();
        let clearance = r.gen_range(0.2..0.9) * radius;
        let mid = n * (big + clearance) + t * r.gen_range(-0.02..0.02);
        let half = r.gen_range(0.01..0.05);
        let (a, b) = (mid - t * half, mid + t * half);
        // dense samples of the axis against the analytic sphere
        let nearest = (0..=4000)
            .map(|k| (a + (b - a) * (k as f64 / 4000.0)).norm())
            .fold(f64::INFINITY, f64::min);
        let expected = radius - (nearest - big);
        let c = query_contacts(&mesh, &capsule_prop(a, b, radius), &GripPose::identity());
        assert_eq!(c.len(), 1);
        assert!((c[0].depth - expected).abs() <= 1e-4, "{} vs {expected}", c[0].depth);
        assert!((c[0].normal.norm() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn sweep_into_unit_sphere() {
    let sphere = synth::icosphere(1.0, 4);
    assert!(sweep_tip(&sphere, &Vec3::new(2.0, 2.0, 0.0), &Vec3::new(2.0, -2.0, 0.0)).is_none());
    let hit = sweep_tip(&sphere, &Vec3::new(0.0, 0.0, 2.0), &Vec3::zeros()).unwrap();
    assert!((hit.time_of_impact.unwrap() - 0.5).abs() <= 0.02);
    let inside = sweep_tip(&sphere, &Vec3::new(0.0, 0.1, 0.0), &Vec3::new(0.0, 0.2, 0.0)).unwrap();
    assert_eq!(inside.time_of_impact, Some(0.0));
}

/// Strictly inside a convex mesh: behind every face plane.
fn strictly_inside_convex(mesh: &TriMesh, p: &Vec3) -> bool {
    (0..mesh.triangles().len()).all(|t| {
        let v = mesh.triangle_vertices(t)[0];
        mesh.face_normal(t).dot(&(p - v)) < 0.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tip_never_ends_inside_sphere(seed in any::<u64>(), slide in any::<bool>()) {
        let mesh = synth::icosphere(0.1, 3);
        let mut r = rng(seed);
        let mut tip = Vec3::new(0.0, 0.0, 0.15);
        for _ in 0..200 {
            // bias toward the sphere so most steps hit it
            let target = random_point(&mut r, 0.12);
            let mut step = target - tip;
            let len = r.gen_range(0.0..0.1);
            if step.norm() > 0.0 {
                step = step.normalize() * len;
            }
            tip = resolve_tip_motion(&mesh, &tip, &(tip + step), slide).position;
            prop_assert!(!strictly_inside_convex(&mesh, &tip), "tip {tip}");
        }
    }
}

#[test]
fn penalty_law() {
    let pose = GripPose::at(Vector3::new(0.0, 0.0, 0.2));
    let gains = PenaltyGains { stiffness: 2000.0, damping: 5.0 };
    assert_eq!(contact_wrench(&[], &pose, &Vector6::zeros(), &gains), Vector6::zeros());

    let c = shw_core::scene::Contact {
        point: Vec3::new(0.0, 0.0, 0.2),
        normal: Vec3::z(),
        depth: 0.002,
        primitive: 0,
        time_of_impact: None,
    };
    let w = contact_wrench(&[c], &pose, &Vector6::zeros(), &gains);
    assert!((w[2] - 4.0).abs() < 1e-12);
    assert_eq!(w.fixed_rows::<3>(3).norm(), 0.0);

    // receding faster than the spring pushes: no adhesion
    let away = Vector6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0);
    assert_eq!(contact_wrench(&[c], &pose, &away, &gains), Vector6::zeros());

    // onset continuity
    let mut last = f64::INFINITY;
    for k in 1..=12 {
        let depth = 10f64.powi(-k);
        let w = contact_wrench(&[shw_core::scene::Contact { depth, ..c }], &pose, &Vector6::zeros(), &gains);
        assert!(w.norm() < last);
        last = w.norm();
    }
    assert!(last < 1e-8);
}

fn random_offset(r: &mut rand_chacha::ChaCha8Rng) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::from(random_point(r, 0.02)),
        UnitQuaternion::from_scaled_axis(random_point(r, 0.2)),
    )
}

#[test]
fn calibration_offset_never_changes_contacts() {
    let mesh = CarBodyPanel::mesh();
    let mut r = rng(23);
    let mut touching = 0;
    for _ in 0..200 {
        let seam = CarBodyPanel::seam();
        let on = seam[r.gen_range(0..seam.len())];
        let pose = GripPose::from_parts(
            on + Vec3::new(0.0, 0.0, 0.16 + r.gen_range(-0.01..0.01)),
            UnitQuaternion::from_scaled_axis(random_point(&mut r, 0.2)),
        );
        let base = MixedProp::putty_gun();
        let reference = query_contacts(&mesh, &base, &pose);
        touching += usize::from(!reference.is_empty());
        let shifted = MixedProp { calibration_offset: random_offset(&mut r), ..base.clone() };
        assert_eq!(format!("{reference:?}"), format!("{:?}", query_contacts(&mesh, &shifted, &pose)));
    }
    assert!(touching > 20);
}

#[test]
fn junction_gap_is_offset_displacement() {
    let mut r = rng(24);
    let pose = GripPose::from_parts(Vector3::new(0.1, 0.0, 0.2), UnitQuaternion::from_euler_angles(0.3, 0.1, -0.2));
    let base = MixedProp::putty_gun();
    let identity = handle_replica_state(&base, &pose);
    assert_eq!(identity.junction_gap, 0.0);
    assert_eq!(identity.frame, pose.to_isometry());

    let five_mm = MixedProp {
        calibration_offset: Isometry3::translation(0.003, 0.0, 0.004),
        ..base.clone()
    };
    assert!((handle_replica_state(&five_mm, &pose).junction_gap - 0.005).abs() <= 1e-12);

    for _ in 0..50 {
        let offset = random_offset(&mut r);
        let prop = MixedProp { calibration_offset: offset, ..base.clone() };
        let root: nalgebra::Point3<f64> = base.nose_root.into();
        let expected = (offset.transform_point(&root) - root).norm();
        assert!((handle_replica_state(&prop, &pose).junction_gap - expected).abs() <= 1e-12);
    }
}

#[test]
fn shadows_are_plane_exact_and_idempotent() {
    let mut r = rng(25);
    let verts: Vec<Vec3> = (0..200).map(|_| random_point(&mut r, 1.0)).collect();
    for _ in 0..20 {
        let plane = Plane::new(random_point(&mut r, 1.0), r.gen_range(-1.0..1.0)).unwrap();
        let mut light = random_point(&mut r, 1.0).normalize();
        if plane.normal.dot(&light).abs() < 0.1 {
            light = plane.normal.into_inner();
        }
        let once = project_shadow(&verts, &light, &plane).unwrap();
        let twice = project_shadow(&once, &light, &plane).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!(plane.signed_distance(a).abs() <= 1e-9);
            assert!((a - b).norm() <= 1e-12);
        }
    }
    // 45 degrees: offset equals height
    let light = Vec3::new(1.0, 0.0, -1.0).normalize();
    let s = project_shadow(&[Vec3::new(0.2, 0.3, 0.7)], &light, &Plane::ground(0.0)).unwrap();
    assert!((s[0] - Vec3::new(0.9, 0.3, 0.0)).norm() <= 1e-12);
}

fn bead_through(points: &[Vec3], spacing: f64) -> PuttyBead {
    let mut bead = PuttyBead::new(PuttySettings { min_spacing: spacing, ..PuttySettings::default() });
    // walk the polyline in steps much finer than the spacing
    let mut time = 0.0;
    for w in points.windows(2) {
        let n = ((w[1] - w[0]).norm() / 1e-4).ceil() as usize;
        for k in 0..n {
            bead.extrude(PuttySample { position: w[0] + (w[1] - w[0]) * (k as f64 / n as f64), time });
            time += 1e-3;
        }
    }
    bead.extrude(PuttySample { position: *points.last().unwrap(), time });
    bead
}

fn seam_line() -> SeamPath {
    SeamPath::new(vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.2, 0.05, 0.0)], 0.005).unwrap()
}

#[test]
fn seam_metrics_against_dense_oracle() {
    let seam = seam_line();
    let pts = seam.points().to_vec();

    let on = bead_through(&pts, 0.002);
    let m = seam_metrics(&on, &seam);
    assert_eq!((m.coverage, m.slip_events), (1.0, 0));
    assert!(m.max_deviation <= 1e-12);

    let off: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(0.0, 0.0, 0.010)).collect();
    let m = seam_metrics(&bead_through(&off, 0.002), &seam);
    assert_eq!((m.coverage, m.slip_events), (0.0, 1));

    // on seam up to the midpoint, then lifted 2 cm
    let half = seam.length() / 2.0;
    let mut path: Vec<Vec3> = (0..=50).map(|k| seam.point_at(half * k as f64 / 50.0)).collect();
    path.extend((0..=50).map(|k| seam.point_at(half + half * k as f64 / 50.0) + Vec3::new(0.0, 0.0, 0.02)));
    let bead = bead_through(&path, 0.002);
    let m = seam_metrics(&bead, &seam);
    let samples: Vec<Vec3> = bead.samples().iter().map(|s| s.position).collect();
    let oracle = coverage_dense(&pts, &samples, 0.005, 20_000);
    assert!((m.coverage - oracle).abs() <= 0.002 / seam.length() + 1e-3, "{} vs {oracle}", m.coverage);
    assert!((m.coverage - 0.5).abs() <= 0.005 / seam.length());
    assert_eq!(m.slip_events, 1);
    let deviation = samples.iter().map(|p| polyline_distance(&pts, p)).fold(0.0, f64::max);
    assert!((m.max_deviation - deviation).abs() <= 1e-12);
}

#[test]
fn seam_metrics_survive_resampling() {
    let seam = seam_line();
    let half = seam.length() / 2.0;
    let mut path: Vec<Vec3> = (0..=40).map(|k| seam.point_at(half * k as f64 / 40.0)).collect();
    path.extend((0..=40).map(|k| seam.point_at(half + half * k as f64 / 40.0) + Vec3::new(0.0, 0.03, 0.0)));
    let coarse = seam_metrics(&bead_through(&path, 0.0025), &seam);
    for spacing in [0.002, 0.001, 0.0005] {
        let fine = seam_metrics(&bead_through(&path, spacing), &seam);
        assert_eq!(fine.slip_events, coarse.slip_events);
        assert!((fine.coverage - coarse.coverage).abs() <= 0.0025 / seam.length() + 1e-3);
    }
}

#[test]
fn seam_file_round_trip_and_errors() {
    let seam = SeamPath::new(CarBodyPanel::seam(), 0.005).unwrap();
    let back = SeamPath::parse(&seam.to_text(), 0.005).unwrap();
    assert_eq!(back.points(), seam.points());
    assert!(SeamPath::new(vec![Vec3::zeros()], 0.005).is_err());
    assert!(SeamPath::new(vec![Vec3::zeros(), Vec3::zeros()], 0.005).is_err());
    match SeamPath::parse("0 0 0\n0.1 0 0\n0.2 x 0\n", 0.005) {
        Err(SceneError::Parse { line: Some(3), .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn straight_bead_counts() {
    let bead = bead_through(&[Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)], 0.002);
    assert_eq!(bead.samples().len(), 51);
    assert!((bead.length() - 0.1).abs() < 1e-9);
    assert_eq!(bead.tube_vertices().len(), 8 * 51);
}
