//! Workspace and singularity analysis.
//!
//! Each grid cell center is checked for wrench closure (the zero wrench is
//! reachable with bounded tensions and `A` has full rank), the conditioning of
//! `A`, and the worst-case capability over the six signed axis directions for
//! pure force and pure torque.

use std::io::Write;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rig::{build_structure_matrix, GripPose, RigConfig, StructureMatrix, Wrench};
use crate::tension::{pretension, wrench_capability, wrench_closure, TensionBounds, TensionError};

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("grid resolution must be at least 2 per axis, got {0:?}")]
    Resolution([usize; 3]),
    #[error("grid bounds must satisfy min <= max on every axis")]
    Bounds,
    #[error("diameters must be non-negative and sorted ascending")]
    Diameters,
    #[error(transparent)]
    Tension(#[from] TensionError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub resolution: [usize; 3],
}

impl GridSpec {
    /// Box of the given size centered on `center`.
    pub fn centered(center: Vector3<f64>, size: [f64; 3], resolution: [usize; 3]) -> Self {
        Self {
            min: std::array::from_fn(|k| center[k] - 0.5 * size[k]),
            max: std::array::from_fn(|k| center[k] + 0.5 * size[k]),
            resolution,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Cell index triple for a flat index (x fastest).
    pub fn cell_index(&self, flat: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [flat % nx, (flat / nx) % ny, flat / (nx * ny)]
    }

    pub fn cell_center(&self, index: [usize; 3]) -> Vector3<f64> {
        Vector3::from_fn(|k, _| {
            let h = (self.max[k] - self.min[k]) / self.resolution[k] as f64;
            self.min[k] + (index[k] as f64 + 0.5) * h
        })
    }

    fn validate(&self) -> Result<(), WorkspaceError> {
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(WorkspaceError::Resolution(self.resolution));
        }
        if (0..3).any(|k| !(self.min[k] <= self.max[k])) {
            return Err(WorkspaceError::Bounds);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub index: [usize; 3],
    pub position: [f64; 3],
    /// Some strictly positive tension vector balances to zero (no bounds).
    pub wrench_closed: bool,
    /// A zero-wrench tension vector exists within the rig's tension bounds.
    pub pretension_feasible: bool,
    /// `None` when `A` is rank deficient (or the pose is degenerate).
    pub condition_number: Option<f64>,
    /// N
    pub force_capability: f64,
    /// N·m
    pub torque_capability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceReport {
    pub grid: GridSpec,
    /// `[w, x, y, z]`
    pub orientation: [f64; 4],
    pub cells: Vec<CellReport>,
    /// Fraction of cells whose pretension is feasible within bounds.
    pub feasible_fraction: f64,
    pub closed_fraction: f64,
}

const AXES: [Vector3<f64>; 6] = [
    Vector3::new(1.0, 0.0, 0.0),
    Vector3::new(-1.0, 0.0, 0.0),
    Vector3::new(0.0, 1.0, 0.0),
    Vector3::new(0.0, -1.0, 0.0),
    Vector3::new(0.0, 0.0, 1.0),
    Vector3::new(0.0, 0.0, -1.0),
];

fn min_axis_capability(
    a: &StructureMatrix,
    bounds: TensionBounds,
    torque: bool,
) -> Result<f64, TensionError> {
    let mut worst = f64::INFINITY;
    for axis in &AXES {
        let mut d = Wrench::zeros();
        let offset = if torque { 3 } else { 0 };
        d.fixed_rows_mut::<3>(offset).copy_from(axis);
        worst = worst.min(wrench_capability(a, bounds, &d)?);
    }
    Ok(worst)
}

/// Pure-force and pure-torque capability at a matrix, each the minimum over
/// the six signed axis directions.
pub fn axis_capabilities(
    a: &StructureMatrix,
    bounds: TensionBounds,
) -> Result<(f64, f64), TensionError> {
    Ok((
        min_axis_capability(a, bounds, false)?,
        min_axis_capability(a, bounds, true)?,
    ))
}

/// Analysis of a single grip position at a fixed orientation.
pub fn evaluate_cell(
    rig: &RigConfig,
    position: Vector3<f64>,
    orientation: &UnitQuaternion<f64>,
    index: [usize; 3],
) -> Result<CellReport, TensionError> {
    let pose = GripPose::from_parts(position, *orientation);
    let bounds = TensionBounds::of(rig);
    let degenerate = CellReport {
        index,
        position: position.into(),
        wrench_closed: false,
        pretension_feasible: false,
        condition_number: None,
        force_capability: 0.0,
        torque_capability: 0.0,
    };
    let Ok(a) = build_structure_matrix(rig, &pose) else {
        return Ok(degenerate);
    };
    let condition_number = a.condition_number();
    let (force_capability, torque_capability) = axis_capabilities(&a, bounds)?;
    Ok(CellReport {
        wrench_closed: wrench_closure(&a)?,
        pretension_feasible: pretension(&a, bounds)?.is_optimal(),
        condition_number,
        force_capability,
        torque_capability,
        ..degenerate
    })
}

pub fn analyze_workspace(
    rig: &RigConfig,
    grid: &GridSpec,
    orientation: &UnitQuaternion<f64>,
) -> Result<WorkspaceReport, WorkspaceError> {
    grid.validate()?;
    let cells = (0..grid.cell_count())
        .into_par_iter()
        .map(|flat| {
            let index = grid.cell_index(flat);
            evaluate_cell(rig, grid.cell_center(index), orientation, index)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fraction = |f: fn(&CellReport) -> bool| {
        cells.iter().filter(|c| f(c)).count() as f64 / cells.len() as f64
    };
    let q = orientation.quaternion();
    Ok(WorkspaceReport {
        grid: *grid,
        orientation: [q.w, q.i, q.j, q.k],
        feasible_fraction: fraction(|c| c.pretension_feasible),
        closed_fraction: fraction(|c| c.wrench_closed),
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub diameter: f64,
    pub condition_number: Option<f64>,
    pub torque_capability: f64,
}

/// Center conditioning and torque capability for each attachment-circle
/// diameter, all other rig parameters held fixed.
pub fn diameter_sweep(
    rig_template: &RigConfig,
    diameters: &[f64],
) -> Result<Vec<SweepRow>, WorkspaceError> {
    if diameters.iter().any(|d| !(*d >= 0.0) || !d.is_finite())
        || diameters.windows(2).any(|w| w[0] > w[1])
    {
        return Err(WorkspaceError::Diameters);
    }
    let center = rig_template.center();
    diameters
        .iter()
        .map(|&d| {
            let rig = rig_template.with_diameter(d);
            let cell = evaluate_cell(&rig, center, &UnitQuaternion::identity(), [0, 0, 0])?;
            Ok(SweepRow {
                diameter: d,
                condition_number: cell.condition_number,
                torque_capability: cell.torque_capability,
            })
        })
        .collect()
}

/// Advisory check that the attachment circle stays within twice the prop size.
pub fn prop_size_warning(circle_diameter: f64, prop_size: f64) -> Option<String> {
    (circle_diameter > 2.0 * prop_size).then(|| {
        format!(
            "attachment circle ({circle_diameter:.3} m) exceeds twice the prop size ({prop_size:.3} m)"
        )
    })
}

impl WorkspaceReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), WorkspaceError> {
        let path = path.as_ref();
        let io = |source| WorkspaceError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        w.write_record([
            "ix", "iy", "iz", "x_m", "y_m", "z_m", "wrench_closed", "pretension_feasible",
            "condition_number",
            "force_capability_N", "torque_capability_Nm",
        ])
        .map_err(|e| io(e.into()))?;
        for c in &self.cells {
            w.write_record(&[
                c.index[0].to_string(),
                c.index[1].to_string(),
                c.index[2].to_string(),
                format!("{}", c.position[0]),
                format!("{}", c.position[1]),
                format!("{}", c.position[2]),
                c.wrench_closed.to_string(),
                c.pretension_feasible.to_string(),
                c.condition_number.map_or("inf".into(), |v| v.to_string()),
                c.force_capability.to_string(),
                c.torque_capability.to_string(),
            ])
            .map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<(), WorkspaceError> {
        let path = path.as_ref();
        let io = |source| WorkspaceError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        f.write_all(text.as_bytes()).map_err(io)
    }
}
