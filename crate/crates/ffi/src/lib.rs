//! C ABI over `shw-core`: opaque handles for the rig, a collision mesh and a
//! haptic-loop simulation, plus the pure statics and pose-sensing calls.
//!
//! Every function returns a [`ShwStatus`]; on failure the message is
//! available from [`shw_last_error`] on the same thread. Handles are created
//! by `*_new`/`*_load`/`*_default` and released by the matching `*_free`.
//! Poses are `position[3]` (m) plus a `w, x, y, z` quaternion; matrices are
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;
use shw_core::hapticd::{FrameStatus, HapticError, Scene, SimParams, Simulation};
use shw_core::kinematics::{estimate_pose, PoseError};
use shw_core::rig::{build_structure_matrix, string_lengths, RigError, STRING_COUNT};
use shw_core::scene::{LoadOptions, MixedProp, SceneError, TriMesh};
use shw_core::tension::{solve_tensions, wrench_capability, SolveStatus, TensionError};
use shw_core::{GripPose, RigConfig, TensionBounds, Wrench};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShwStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DegenerateString = 5,
    /// The requested wrench is out of reach; outputs are still filled.
    Infeasible = 6,
    NoConvergence = 7,
    RankDeficient = 8,
    Numerical = 9,
    Panic = 10,
}

/// Rig geometry and tension bounds.
pub struct ShwRig {
    inner: RigConfig,
}

/// Triangle mesh with its acceleration structure.
pub struct ShwMesh {
    inner: TriMesh,
}

/// One haptic loop over a mesh, stepped by the caller.
pub struct ShwSimulation {
    inner: Simulation,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShwPose {
    pub position: [f64; 3],
    /// w, x, y, z
    pub quaternion: [f64; 4],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShwTensionReport {
    pub tensions: [f64; 8],
    pub residual_norm: f64,
    pub objective: f64,
    pub iterations: u32,
    pub optimal: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShwPoseEstimate {
    pub pose: ShwPose,
    pub residual_rms: f64,
    pub iterations: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShwFrame {
    pub tick: u64,
    pub sim_time: f64,
    pub pose: ShwPose,
    /// Contact wrench on the grip (force N, torque N·m).
    pub wrench: [f64; 6],
    /// Zero when the solver did not produce tensions.
    pub tensions: [f64; 8],
    /// 0 not run, 1 optimal, 2 scaled to the capability boundary, 3 failed.
    pub status: u8,
    pub infeasible: bool,
    pub trigger: bool,
    pub wrench_scale: f64,
    pub junction_gap: f64,
    pub contact_count: u32,
    pub bead_delta_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn shw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn shw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

struct Fail(ShwStatus, String);

impl From<RigError> for Fail {
    fn from(e: RigError) -> Self {
        let status = match e {
            RigError::DegenerateString { .. } => ShwStatus::DegenerateString,
            RigError::InvalidConfig(_) => ShwStatus::InvalidArgument,
            RigError::Io { .. } => ShwStatus::Io,
            RigError::Parse { .. } => ShwStatus::Parse,
        };
        Fail(status, e.to_string())
    }
}

impl From<TensionError> for Fail {
    fn from(e: TensionError) -> Self {
        let status = match e {
            TensionError::NumericalFailure { .. } => ShwStatus::Numerical,
            _ => ShwStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<SceneError> for Fail {
    fn from(e: SceneError) -> Self {
        let status = match e {
            SceneError::Io { .. } => ShwStatus::Io,
            SceneError::Parse { .. } | SceneError::ParseAt { .. } | SceneError::EmptyMesh => {
                ShwStatus::Parse
            }
            _ => ShwStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<HapticError> for Fail {
    fn from(e: HapticError) -> Self {
        match e {
            HapticError::Rig(r) => r.into(),
            HapticError::Scene(s) => s.into(),
            other => Fail(ShwStatus::InvalidArgument, other.to_string()),
        }
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's
/// error message.
fn guard(f: impl FnOnce() -> Result<ShwStatus, Fail>) -> ShwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ShwStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(ShwStatus::NullArgument, format!("{name} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(ShwStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn pose_from(p: &ShwPose) -> Result<GripPose, Fail> {
    let q = p.quaternion;
    let finite = p.position.iter().chain(&q).all(|x| x.is_finite());
    if !finite || q.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
        return Err(Fail(
            ShwStatus::InvalidArgument,
            "pose must be finite with a nonzero quaternion".into(),
        ));
    }
    Ok(GripPose::new(Vector3::from(p.position), q[0], q[1], q[2], q[3]))
}

fn pose_to(p: &GripPose) -> ShwPose {
    ShwPose {
        position: p.position.into(),
        quaternion: p.quaternion_wxyz(),
    }
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output"));
    }
    out.write(value);
    Ok(())
}

/// Default rig: 1.4 x 0.8 x 1.0 m motor box, 20 cm circle, 0.5..30 N.
///
/// # Safety
/// `out` must be a valid pointer to write a handle to.
#[no_mangle]
pub unsafe extern "C" fn shw_rig_default(out: *mut *mut ShwRig) -> ShwStatus {
    guard(|| {
        let rig = Box::new(ShwRig {
            inner: RigConfig::default_rig(),
        });
        put(out, Box::into_raw(rig))?;
        Ok(ShwStatus::Ok)
    })
}

/// Loads a rig from its TOML file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_rig_load(path: *const c_char, out: *mut *mut ShwRig) -> ShwStatus {
    guard(|| {
        let path = path_arg(path)?;
        let rig = RigConfig::load(&path)?;
        rig.validate()?;
        put(out, Box::into_raw(Box::new(ShwRig { inner: rig })))?;
        Ok(ShwStatus::Ok)
    })
}

/// Copy of `rig` with another attachment-circle diameter (m).
///
/// # Safety
/// `rig` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_rig_with_diameter(
    rig: *const ShwRig,
    diameter: f64,
    out: *mut *mut ShwRig,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let inner = rig.inner.with_diameter(diameter);
        inner.validate()?;
        put(out, Box::into_raw(Box::new(ShwRig { inner })))?;
        Ok(ShwStatus::Ok)
    })
}

/// # Safety
/// `rig` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shw_rig_free(rig: *mut ShwRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// Writes the 8 string lengths (m) at `pose`.
///
/// # Safety
/// `out_lengths` must hold 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn shw_string_lengths(
    rig: *const ShwRig,
    pose: *const ShwPose,
    out_lengths: *mut f64,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let pose = pose_from(deref(pose, "pose")?)?;
        let l = string_lengths(&rig.inner, &pose)?;
        if out_lengths.is_null() {
            return Err(null("out_lengths"));
        }
        ptr::copy_nonoverlapping(l.as_ptr(), out_lengths, STRING_COUNT);
        Ok(ShwStatus::Ok)
    })
}

/// Writes the 6x8 structure matrix, row-major (48 doubles).
///
/// # Safety
/// `out_matrix` must hold 48 doubles.
#[no_mangle]
pub unsafe extern "C" fn shw_structure_matrix(
    rig: *const ShwRig,
    pose: *const ShwPose,
    out_matrix: *mut f64,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let pose = pose_from(deref(pose, "pose")?)?;
        let a = build_structure_matrix(&rig.inner, &pose)?;
        if out_matrix.is_null() {
            return Err(null("out_matrix"));
        }
        for i in 0..6 {
            for j in 0..STRING_COUNT {
                out_matrix.add(i * STRING_COUNT + j).write(a.0[(i, j)]);
            }
        }
        Ok(ShwStatus::Ok)
    })
}

/// Tensions producing `wrench` (6 doubles) at `pose`. Returns
/// `Infeasible` with the report filled when the wrench is out of reach.
///
/// # Safety
/// `wrench` must hold 6 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_solve_tensions(
    rig: *const ShwRig,
    pose: *const ShwPose,
    wrench: *const f64,
    out: *mut ShwTensionReport,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let pose = pose_from(deref(pose, "pose")?)?;
        if wrench.is_null() {
            return Err(null("wrench"));
        }
        let w = Wrench::from_column_slice(std::slice::from_raw_parts(wrench, 6));
        let a = build_structure_matrix(&rig.inner, &pose)?;
        let report = solve_tensions(&a, &w, TensionBounds::of(&rig.inner))?;
        put(
            out,
            ShwTensionReport {
                tensions: report.tensions.0,
                residual_norm: report.residual_norm,
                objective: report.objective,
                iterations: report.iterations as u32,
                optimal: report.is_optimal(),
            },
        )?;
        Ok(match report.status {
            SolveStatus::Optimal => ShwStatus::Ok,
            SolveStatus::Infeasible => {
                set_error("wrench is outside the bounded-tension capability");
                ShwStatus::Infeasible
            }
        })
    })
}

/// Largest magnitude along the unit 6-vector `direction` the rig can exert
/// at `pose` within its tension bounds.
///
/// # Safety
/// `direction` must hold 6 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_wrench_capability(
    rig: *const ShwRig,
    pose: *const ShwPose,
    direction: *const f64,
    out: *mut f64,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let pose = pose_from(deref(pose, "pose")?)?;
        if direction.is_null() {
            return Err(null("direction"));
        }
        let d = Wrench::from_column_slice(std::slice::from_raw_parts(direction, 6));
        let a = build_structure_matrix(&rig.inner, &pose)?;
        put(out, wrench_capability(&a, TensionBounds::of(&rig.inner), &d)?)?;
        Ok(ShwStatus::Ok)
    })
}

/// Grip pose from 8 measured lengths, starting at `guess`. On
/// `RankDeficient` the estimate is still written.
///
/// # Safety
/// `lengths` must hold 8 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_estimate_pose(
    rig: *const ShwRig,
    lengths: *const f64,
    guess: *const ShwPose,
    out: *mut ShwPoseEstimate,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let guess = pose_from(deref(guess, "guess")?)?;
        if lengths.is_null() {
            return Err(null("lengths"));
        }
        let mut l = [0.0; STRING_COUNT];
        l.copy_from_slice(std::slice::from_raw_parts(lengths, STRING_COUNT));
        let write = |est: &shw_core::kinematics::PoseEstimate| {
            put(
                out,
                ShwPoseEstimate {
                    pose: pose_to(&est.pose),
                    residual_rms: est.residual_rms,
                    iterations: est.iterations as u32,
                },
            )
        };
        match estimate_pose(&rig.inner, &l, &guess) {
            Ok(est) => {
                write(&est)?;
                Ok(ShwStatus::Ok)
            }
            Err(e) => {
                let status = match &e {
                    PoseError::InvalidLengths => ShwStatus::InvalidArgument,
                    PoseError::Rig(r) => return Err(r.clone().into()),
                    PoseError::NoConvergence { .. } => ShwStatus::NoConvergence,
                    PoseError::RankDeficient { estimate, .. } => {
                        write(estimate)?;
                        ShwStatus::RankDeficient
                    }
                };
                Err(Fail(status, e.to_string()))
            }
        }
    })
}

/// Loads an OBJ or binary STL mesh.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_mesh_load(
    path: *const c_char,
    flip_winding: bool,
    out: *mut *mut ShwMesh,
) -> ShwStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = TriMesh::load(&path, LoadOptions { flip_winding })?;
        put(out, Box::into_raw(Box::new(ShwMesh { inner })))?;
        Ok(ShwStatus::Ok)
    })
}

/// # Safety
/// `mesh` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shw_mesh_triangle_count(mesh: *const ShwMesh, out: *mut u64) -> ShwStatus {
    guard(|| {
        let mesh = deref(mesh, "mesh")?;
        put(out, mesh.inner.triangles().len() as u64)?;
        Ok(ShwStatus::Ok)
    })
}

/// # Safety
/// `mesh` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shw_mesh_free(mesh: *mut ShwMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// New loop over copies of `rig` and `mesh` with the putty-gun prop and
/// default gains; `dt_ns` is the tick length.
///
/// # Safety
/// `rig` and `mesh` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_sim_new(
    rig: *const ShwRig,
    mesh: *const ShwMesh,
    dt_ns: u64,
    out: *mut *mut ShwSimulation,
) -> ShwStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let mesh = deref(mesh, "mesh")?;
        let params = SimParams {
            dt_ns,
            ..SimParams::default()
        };
        let scene = Scene::new(mesh.inner.clone(), None, MixedProp::putty_gun());
        let inner = Simulation::new(rig.inner.clone(), scene, params)?;
        put(out, Box::into_raw(Box::new(ShwSimulation { inner })))?;
        Ok(ShwStatus::Ok)
    })
}

/// Advances one tick towards `commanded`.
///
/// # Safety
/// `sim` must be a live handle not used concurrently; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shw_sim_step(
    sim: *mut ShwSimulation,
    commanded: *const ShwPose,
    trigger: bool,
    out: *mut ShwFrame,
) -> ShwStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let pose = pose_from(deref(commanded, "commanded")?)?;
        let f = sim.inner.step(&pose, trigger)?;
        put(
            out,
            ShwFrame {
                tick: f.tick,
                sim_time: f.sim_time,
                pose: pose_to(&f.pose),
                wrench: f.wrench.into(),
                tensions: f.tensions.map_or([0.0; 8], |t| t.0),
                status: f.status.code(),
                infeasible: f.infeasible,
                trigger: f.trigger,
                wrench_scale: f.wrench_scale,
                junction_gap: f.junction_gap,
                contact_count: f.contacts.len() as u32,
                bead_delta_count: f.bead_delta.len() as u32,
            },
        )?;
        Ok(if f.status == FrameStatus::Failed {
            set_error("tension solve failed for this tick");
            ShwStatus::Numerical
        } else {
            ShwStatus::Ok
        })
    })
}

/// Total putty samples extruded so far.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shw_sim_bead_sample_count(
    sim: *const ShwSimulation,
    out: *mut u64,
) -> ShwStatus {
    guard(|| {
        let sim = deref(sim, "sim")?;
        put(out, sim.inner.trail().sample_count() as u64)?;
        Ok(ShwStatus::Ok)
    })
}

/// # Safety
/// `sim` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shw_sim_free(sim: *mut ShwSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
