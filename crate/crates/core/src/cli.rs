//! `shw` command line. Exit codes: 0 success, 1 usage error, 2 data error
//! (unreadable or invalid input), 3 infeasible result.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::json;

use crate::hapticd::{
    run_scenario, serve, HapticError, ScenarioScript, Scene, ServiceConfig, SimParams,
};
use crate::kinematics::{estimate_pose, PoseError};
use crate::rig::{build_structure_matrix, GripPose, RigConfig, Wrench, STRING_COUNT};
use crate::scene::{
    project_shadow, putty::DEFAULT_SLIP_TOLERANCE, LoadOptions, MixedProp, Plane, SeamPath,
    TriMesh, Vec3,
};
use crate::tension::{solve_tensions, SolveStatus, TensionBounds};
use crate::workspace::{analyze_workspace, diameter_sweep, GridSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Structured,
}

#[derive(Parser, Debug)]
#[command(name = "shw", version, about = "Stringed haptic workbench simulator")]
struct Cli {
    /// Output style: aligned table or one JSON document.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tension distribution for one pose and wrench.
    Solve {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Grip position x,y,z (m); default rig center.
        #[arg(long, value_parser = parse_vec3)]
        position: Option<[f64; 3]>,
        /// Grip orientation quaternion w,x,y,z.
        #[arg(long, value_parser = parse_quat, default_value = "1,0,0,0")]
        orientation: [f64; 4],
        /// Wrench fx,fy,fz,tx,ty,tz (N, N·m) the strings must exert.
        #[arg(long, value_parser = parse_wrench, default_value = "0,0,0,0,0,0")]
        wrench: [f64; 6],
    },
    /// Grip pose from eight string lengths.
    Pose {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Eight comma-separated string lengths (m).
        #[arg(long, value_parser = parse_lengths)]
        lengths: [f64; STRING_COUNT],
        /// Initial position guess x,y,z (m); default rig center.
        #[arg(long, value_parser = parse_vec3)]
        guess_position: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_quat, default_value = "1,0,0,0")]
        guess_orientation: [f64; 4],
        /// Adds i.i.d. uniform noise of this half-width (m) to the lengths.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Wrench-closure and capability grid; writes workspace.csv and workspace.json.
    Workspace {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Grid center x,y,z (m); default rig center.
        #[arg(long, value_parser = parse_vec3)]
        center: Option<[f64; 3]>,
        /// Grid extent x,y,z (m).
        #[arg(long, value_parser = parse_vec3, default_value = "0.6,0.4,0.4")]
        size: [f64; 3],
        #[arg(long, value_parser = parse_resolution, default_value = "5,5,5")]
        resolution: [usize; 3],
        #[arg(long, value_parser = parse_quat, default_value = "1,0,0,0")]
        orientation: [f64; 4],
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Center conditioning and torque capability per attachment-circle diameter.
    Sweep {
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Comma-separated ascending diameters (m).
        #[arg(long, value_parser = parse_number, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3")]
        diameters: Vec<f64>,
    },
    /// Deterministic scripted run of the haptic loop.
    Replay {
        /// Service config supplying rig, scene and loop parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        mesh: Option<PathBuf>,
        #[arg(long)]
        seam: Option<PathBuf>,
        #[arg(long)]
        rig: Option<PathBuf>,
        #[arg(long)]
        flip_winding: bool,
        /// Loop period (µs); overrides the config.
        #[arg(long)]
        dt_us: Option<u64>,
        #[arg(long)]
        script: PathBuf,
        /// Binary frame log output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Structured-text (JSON lines) frame log output.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        /// Summary and seam metrics report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the real-time service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this many seconds; runs until killed otherwise.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Planar shadow of a mesh.
    Shadow {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        flip_winding: bool,
        /// Light travel direction x,y,z.
        #[arg(long, value_parser = parse_vec3, default_value = "0.3,0.2,-1")]
        light: [f64; 3],
        /// Plane nx,ny,nz,offset (n·x = offset); default ground 1 cm below the mesh.
        #[arg(long, value_parser = parse_plane)]
        plane: Option<[f64; 4]>,
        /// Projected mesh output (OBJ).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Data(String),
    Infeasible(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

fn parse_fixed<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = parse_list(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_number(s: &str) -> Result<f64, String> {
    let x = s.trim();
    match x.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("invalid number '{x}'")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_fixed(s)
}

fn parse_quat(s: &str) -> Result<[f64; 4], String> {
    let q: [f64; 4] = parse_fixed(s)?;
    if q.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
        return Err("quaternion must be nonzero".into());
    }
    Ok(q)
}

fn parse_wrench(s: &str) -> Result<[f64; 6], String> {
    parse_fixed(s)
}

fn parse_plane(s: &str) -> Result<[f64; 4], String> {
    parse_fixed(s)
}

fn parse_lengths(s: &str) -> Result<[f64; STRING_COUNT], String> {
    parse_fixed(s)
}

fn parse_resolution(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("invalid count '{}'", x.trim())))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<usize>| format!("expected 3 counts, got {}", v.len()))
}

fn quat(q: [f64; 4]) -> UnitQuaternion<f64> {
    GripPose::new(Vector3::zeros(), q[0], q[1], q[2], q[3]).orientation
}

fn load_rig(path: &Option<PathBuf>) -> Result<RigConfig, Failure> {
    let rig = match path {
        Some(p) => RigConfig::load(p)?,
        None => RigConfig::default_rig(),
    };
    rig.validate().map_err(|e| match path {
        Some(p) => Failure::Data(format!("{}: {e}", p.display())),
        None => Failure::Data(e.to_string()),
    })?;
    Ok(rig)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{text}")?;
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| format!("{v:.6}"))
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Data(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DATA
        }
        Err(Failure::Infeasible(m)) => {
            let _ = writeln!(err, "infeasible: {m}");
            EXIT_INFEASIBLE
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let format = cli.format;
    match cli.command {
        Command::Solve {
            rig,
            position,
            orientation,
            wrench,
        } => cmd_solve(out, format, &rig, position, orientation, wrench),
        Command::Pose {
            rig,
            lengths,
            guess_position,
            guess_orientation,
            noise,
            seed,
        } => cmd_pose(
            out,
            format,
            &rig,
            lengths,
            guess_position,
            guess_orientation,
            noise,
            seed,
        ),
        Command::Workspace {
            rig,
            center,
            size,
            resolution,
            orientation,
            out: dir,
        } => cmd_workspace(out, format, &rig, center, size, resolution, orientation, &dir),
        Command::Sweep { rig, diameters } => cmd_sweep(out, format, &rig, &diameters),
        Command::Replay {
            config,
            mesh,
            seam,
            rig,
            flip_winding,
            dt_us,
            script,
            log,
            jsonl,
            report,
        } => {
            let (rig, scene, mut params) = match &config {
                Some(path) => {
                    let cfg = ServiceConfig::load(path)?;
                    let mut scene = cfg.load_scene()?;
                    if let Some(m) = &mesh {
                        scene.mesh = TriMesh::load(m, LoadOptions { flip_winding })?.into();
                    }
                    if let Some(s) = &seam {
                        scene.seam = Some(SeamPath::load(s, cfg.scene.slip_tolerance)?);
                    }
                    let rig = match &rig {
                        Some(_) => load_rig(&rig)?,
                        None => cfg.load_rig()?,
                    };
                    (rig, scene, cfg.params()?)
                }
                None => {
                    let mesh_path = mesh.expect("clap requires --mesh without --config");
                    let mesh = TriMesh::load(&mesh_path, LoadOptions { flip_winding })?;
                    let seam = match &seam {
                        Some(s) => Some(SeamPath::load(s, DEFAULT_SLIP_TOLERANCE)?),
                        None => None,
                    };
                    let scene = Scene::new(mesh, seam, MixedProp::putty_gun());
                    (load_rig(&rig)?, scene, SimParams::default())
                }
            };
            if let Some(us) = dt_us {
                params.dt_ns = us
                    .checked_mul(1000)
                    .ok_or_else(|| Failure::Data("dt_us too large".into()))?;
                params.validate()?;
            }
            let script = ScenarioScript::load(&script)?;
            let run = run_scenario(&script, &scene, &rig, &params)?;
            if let Some(p) = &log {
                write_file(p, &run.log.to_bytes())?;
            }
            if let Some(p) = &jsonl {
                write_file(p, run.log.to_jsonl().as_bytes())?;
            }
            let doc = json!({ "summary": run.summary, "metrics": run.metrics });
            if let Some(p) = &report {
                let text = serde_json::to_string_pretty(&doc).expect("report serializes");
                write_file(p, text.as_bytes())?;
            }
            match format {
                Format::Structured => emit_json(out, &doc)?,
                Format::Table => {
                    let s = &run.summary;
                    writeln!(out, "{:<22} value", "quantity")?;
                    writeln!(out, "{:<22} {}", "ticks", s.ticks)?;
                    writeln!(out, "{:<22} {:.6}", "duration_s", s.duration)?;
                    writeln!(out, "{:<22} {:.6}", "max_force_N", s.max_force)?;
                    writeln!(out, "{:<22} {:.6}", "max_torque_Nm", s.max_torque)?;
                    writeln!(out, "{:<22} {}", "infeasible_ticks", s.infeasible_ticks)?;
                    writeln!(out, "{:<22} {}", "beads", s.bead_count)?;
                    writeln!(out, "{:<22} {}", "bead_samples", s.bead_samples)?;
                    writeln!(out, "{:<22} {:.6}", "coverage", s.coverage)?;
                    writeln!(out, "{:<22} {:.6}", "max_deviation_m", s.max_deviation)?;
                    writeln!(out, "{:<22} {}", "slip_events", s.slip_events)?;
                    writeln!(out, "{:<22} {}", "digest_sha256", s.digest)?;
                }
            }
            Ok(())
        }
        Command::Serve { config, duration } => {
            let cfg = ServiceConfig::load(&config)?;
            let handle = serve(&cfg).map_err(|e| match e {
                HapticError::Bind { .. } => Failure::Data(e.to_string()),
                other => Failure::Data(format!("{}: {other}", config.display())),
            })?;
            writeln!(out, "udp {}", handle.udp_addr)?;
            writeln!(out, "websocket ws://{}", handle.ws_addr)?;
            out.flush()?;
            let started = Instant::now();
            let limit = duration.map(Duration::from_secs_f64);
            while handle.is_running() && limit.is_none_or(|d| started.elapsed() < d) {
                std::thread::sleep(Duration::from_millis(20));
            }
            let stats = handle.stop();
            match format {
                Format::Structured => emit_json(out, &stats)?,
                Format::Table => {
                    writeln!(out, "ticks {}", stats.ticks)?;
                    writeln!(out, "commands {}", stats.commands)?;
                    writeln!(out, "malformed {}", stats.malformed)?;
                    writeln!(out, "published {}", stats.published)?;
                    writeln!(out, "dropped {}", stats.dropped)?;
                    writeln!(out, "step_errors {}", stats.step_errors)?;
                }
            }
            Ok(())
        }
        Command::Shadow {
            mesh,
            flip_winding,
            light,
            plane,
            out: path,
        } => {
            let m = TriMesh::load(&mesh, LoadOptions { flip_winding })?;
            let plane = match plane {
                Some([nx, ny, nz, d]) => Plane::new(Vec3::new(nx, ny, nz), d)?,
                None => Plane::ground(m.bounds().min.z - 0.01),
            };
            let light = Vec3::from(light);
            let projected = project_shadow(m.vertices(), &light, &plane)?;
            let mut text = String::new();
            for v in &projected {
                text.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
            }
            for t in m.triangles() {
                text.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
            }
            write_file(&path, text.as_bytes())?;
            let doc = json!({
                "output": path.display().to_string(),
                "vertices": projected.len(),
                "triangles": m.triangles().len(),
                "plane": [plane.normal.x, plane.normal.y, plane.normal.z, plane.offset],
            });
            match format {
                Format::Structured => emit_json(out, &doc)?,
                Format::Table => {
                    writeln!(out, "output {}", path.display())?;
                    writeln!(out, "vertices {}", projected.len())?;
                    writeln!(out, "triangles {}", m.triangles().len())?;
                }
            }
            Ok(())
        }
    }
}

fn cmd_solve(
    out: &mut dyn Write,
    format: Format,
    rig_path: &Option<PathBuf>,
    position: Option<[f64; 3]>,
    orientation: [f64; 4],
    wrench: [f64; 6],
) -> Result<(), Failure> {
    let rig = load_rig(rig_path)?;
    let position = position.map_or_else(|| rig.center(), Vector3::from);
    let pose = GripPose::from_parts(position, quat(orientation));
    let a = build_structure_matrix(&rig, &pose)?;
    let w = Wrench::from(wrench);
    let report = solve_tensions(&a, &w, TensionBounds::of(&rig))?;
    match format {
        Format::Structured => emit_json(out, &report)?,
        Format::Table => {
            writeln!(out, "string tension_N")?;
            for (i, t) in report.tensions.0.iter().enumerate() {
                writeln!(out, "{i:<6} {t:.9}")?;
            }
            writeln!(out, "status {:?}", report.status)?;
            writeln!(out, "residual_inf {:.3e}", report.residual_norm)?;
            writeln!(out, "objective_N2 {:.9}", report.objective)?;
            writeln!(out, "iterations {}", report.iterations)?;
        }
    }
    if report.status == SolveStatus::Infeasible {
        return Err(Failure::Infeasible(
            "wrench is outside the tension-bounded capability at this pose".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pose(
    out: &mut dyn Write,
    format: Format,
    rig_path: &Option<PathBuf>,
    mut lengths: [f64; STRING_COUNT],
    guess_position: Option<[f64; 3]>,
    guess_orientation: [f64; 4],
    noise: f64,
    seed: u64,
) -> Result<(), Failure> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Failure::Data(format!("noise must be >= 0, got {noise}")));
    }
    let rig = load_rig(rig_path)?;
    if noise > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for l in &mut lengths {
            *l += rng.gen_range(-noise..=noise);
        }
    }
    let guess = GripPose::from_parts(
        guess_position.map_or_else(|| rig.center(), Vector3::from),
        quat(guess_orientation),
    );
    let est = match estimate_pose(&rig, &lengths, &guess) {
        Ok(e) => e,
        Err(e @ (PoseError::InvalidLengths | PoseError::Rig(_))) => return Err(e.into()),
        Err(e) => return Err(Failure::Infeasible(e.to_string())),
    };
    match format {
        Format::Structured => emit_json(out, &json!({
            "position": [est.pose.position.x, est.pose.position.y, est.pose.position.z],
            "quaternion": est.pose.quaternion_wxyz(),
            "residual_rms": est.residual_rms,
            "iterations": est.iterations,
            "lengths": lengths,
        }))?,
        Format::Table => {
            let p = est.pose.position;
            let q = est.pose.quaternion_wxyz();
            writeln!(out, "position_m {:.9} {:.9} {:.9}", p.x, p.y, p.z)?;
            writeln!(out, "quaternion_wxyz {:.9} {:.9} {:.9} {:.9}", q[0], q[1], q[2], q[3])?;
            writeln!(out, "residual_rms_m {:.3e}", est.residual_rms)?;
            writeln!(out, "iterations {}", est.iterations)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_workspace(
    out: &mut dyn Write,
    format: Format,
    rig_path: &Option<PathBuf>,
    center: Option<[f64; 3]>,
    size: [f64; 3],
    resolution: [usize; 3],
    orientation: [f64; 4],
    dir: &Path,
) -> Result<(), Failure> {
    let rig = load_rig(rig_path)?;
    let center = center.map_or_else(|| rig.center(), Vector3::from);
    let grid = GridSpec::centered(center, size, resolution);
    let report = analyze_workspace(&rig, &grid, &quat(orientation))?;
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    let csv = dir.join("workspace.csv");
    let summary = dir.join("workspace.json");
    report.write_csv(&csv)?;
    report.write_summary(&summary)?;
    let min_force = report.cells.iter().map(|c| c.force_capability).fold(f64::INFINITY, f64::min);
    let min_torque = report.cells.iter().map(|c| c.torque_capability).fold(f64::INFINITY, f64::min);
    let worst_cond = report
        .cells
        .iter()
        .map(|c| c.condition_number.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    match format {
        Format::Structured => emit_json(out, &json!({
            "cells": report.cells.len(),
            "feasible_fraction": report.feasible_fraction,
            "closed_fraction": report.closed_fraction,
            "min_force_capability": min_force,
            "min_torque_capability": min_torque,
            "max_condition_number": if worst_cond.is_finite() { Some(worst_cond) } else { None },
            "csv": csv.display().to_string(),
            "summary": summary.display().to_string(),
        }))?,
        Format::Table => {
            writeln!(out, "cells {}", report.cells.len())?;
            writeln!(out, "feasible_fraction {:.6}", report.feasible_fraction)?;
            writeln!(out, "closed_fraction {:.6}", report.closed_fraction)?;
            writeln!(out, "min_force_capability_N {min_force:.6}")?;
            writeln!(out, "min_torque_capability_Nm {min_torque:.6}")?;
            writeln!(out, "max_condition_number {}", fmt_opt(worst_cond.is_finite().then_some(worst_cond)))?;
            writeln!(out, "csv {}", csv.display())?;
            writeln!(out, "summary {}", summary.display())?;
        }
    }
    Ok(())
}

fn cmd_sweep(
    out: &mut dyn Write,
    format: Format,
    rig_path: &Option<PathBuf>,
    diameters: &[f64],
) -> Result<(), Failure> {
    let rig = load_rig(rig_path)?;
    let rows = diameter_sweep(&rig, diameters)?;
    match format {
        Format::Structured => emit_json(out, &rows)?,
        Format::Table => {
            writeln!(out, "{:<12} {:<18} torque_capability_Nm", "diameter_m", "condition_number")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:<12.4} {:<18} {:.6}",
                    r.diameter,
                    fmt_opt(r.condition_number),
                    r.torque_capability
                )?;
            }
        }
    }
    Ok(())
}
