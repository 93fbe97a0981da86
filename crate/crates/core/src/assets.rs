//! The bundled data set under `data/`: car-body panel, its seam, the rig,
//! the service config and two putty scenarios. Everything is generated from
//! code here (see `examples/gen_assets.rs`); a test keeps the files in sync.

use std::path::{Path, PathBuf};

use nalgebra::UnitQuaternion;

use crate::hapticd::{seam_follow_script, ScenarioScript, SeamFollowPlan};
use crate::rig::RigConfig;
use crate::scene::putty::DEFAULT_SLIP_TOLERANCE;
use crate::scene::synth::CarBodyPanel;
use crate::scene::{MixedProp, SeamPath, Vec3};

pub const MESH_FILE: &str = "car_body.obj";
pub const SEAM_FILE: &str = "car_body.seam";
pub const RIG_FILE: &str = "rig_default.toml";
pub const CONFIG_FILE: &str = "hapticd.toml";
pub const SEAM_FOLLOW_SCRIPT: &str = "seam_follow.script";
pub const HALF_SLIP_SCRIPT: &str = "seam_half_slip.script";

/// Lateral offset of the half-slip scenario: twice the slip tolerance.
pub const HALF_SLIP_OFFSET: f64 = 2.0 * DEFAULT_SLIP_TOLERANCE;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn seam() -> SeamPath {
    SeamPath::new(CarBodyPanel::seam(), DEFAULT_SLIP_TOLERANCE).expect("panel seam is valid")
}

pub fn seam_follow() -> ScenarioScript {
    seam_follow_script(
        &CarBodyPanel::seam(),
        &MixedProp::putty_gun(),
        UnitQuaternion::identity(),
        &SeamFollowPlan::default(),
    )
}

pub fn half_slip() -> ScenarioScript {
    seam_follow_script(
        &CarBodyPanel::seam(),
        &MixedProp::putty_gun(),
        UnitQuaternion::identity(),
        &SeamFollowPlan {
            slip_offset: Some(Vec3::new(0.0, HALF_SLIP_OFFSET, 0.0)),
            ..SeamFollowPlan::default()
        },
    )
}

const CONFIG: &str = r#"# hapticd service configuration
rig = "rig_default.toml"

[scene]
mesh = "car_body.obj"
seam = "car_body.seam"
flip_winding = false
slip_tolerance = 0.005

[loop]
dt_us = 1000
publish_interval_ms = 16
silence_timeout_ms = 1000
slide = true
home = [0.0, 0.05, 0.1]

[gains]
stiffness = 2000.0
damping = 5.0

[putty]
radius = 0.004
min_spacing = 0.002
ring_segments = 8

[network]
udp = "127.0.0.1:7701"
websocket = "127.0.0.1:7702"
"#;

/// File name and contents of every bundled file.
pub fn bundled_files() -> Vec<(&'static str, String)> {
    vec![
        (MESH_FILE, CarBodyPanel::mesh().to_obj_string()),
        (SEAM_FILE, seam().to_text()),
        (RIG_FILE, RigConfig::default_rig().to_toml_string()),
        (CONFIG_FILE, CONFIG.to_string()),
        (SEAM_FOLLOW_SCRIPT, seam_follow().to_text()),
        (HALF_SLIP_SCRIPT, half_slip().to_text()),
    ]
}
