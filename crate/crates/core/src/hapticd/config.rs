//! Service configuration (TOML). Relative paths resolve against the
//! config file's directory.
//!
//! ```toml
//! rig = "rig_default.toml"          # optional, default rig otherwise
//!
//! [scene]
//! mesh = "car_body.obj"
//! seam = "car_body.seam"            # optional
//! flip_winding = false
//! slip_tolerance = 0.005
//!
//! [loop]
//! dt_us = 1000
//! publish_interval_ms = 16
//! silence_timeout_ms = 1000
//! slide = true
//! home = [0.0, 0.0, 0.1]
//!
//! [gains]
//! stiffness = 2000.0
//! damping = 5.0
//!
//! [putty]
//! radius = 0.004
//! min_spacing = 0.002
//! ring_segments = 8
//!
//! [network]
//! udp = "127.0.0.1:7701"
//! websocket = "127.0.0.1:7702"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::sim::{Scene, SimParams};
use super::HapticError;
use crate::rig::RigConfig;
use crate::scene::{
    putty::DEFAULT_SLIP_TOLERANCE, LoadOptions, MixedProp, PenaltyGains, PuttySettings, SeamPath,
    TriMesh,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub mesh: PathBuf,
    #[serde(default)]
    pub seam: Option<PathBuf>,
    #[serde(default)]
    pub flip_winding: bool,
    #[serde(default = "default_slip_tolerance")]
    pub slip_tolerance: f64,
}

fn default_slip_tolerance() -> f64 {
    DEFAULT_SLIP_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSection {
    pub dt_us: u64,
    pub publish_interval_ms: u64,
    pub silence_timeout_ms: u64,
    pub slide: bool,
    /// Grip position held until the first command (m).
    pub home: [f64; 3],
}

impl Default for LoopSection {
    fn default() -> Self {
        Self {
            dt_us: 1000,
            publish_interval_ms: 16,
            silence_timeout_ms: 1000,
            slide: true,
            home: [0.0, 0.0, 0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub udp: String,
    pub websocket: String,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            udp: "127.0.0.1:7701".into(),
            websocket: "127.0.0.1:7702".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub rig: Option<PathBuf>,
    pub scene: SceneSection,
    #[serde(default, rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub gains: PenaltyGains,
    #[serde(default)]
    pub putty: PuttySettings,
    #[serde(default)]
    pub network: NetworkSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, HapticError> {
        let mut cfg: ServiceConfig =
            toml::from_str(text).map_err(|e| HapticError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.params()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HapticError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HapticError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
            .map_err(|e| HapticError::Config(format!("{}: {e}", path.display())))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn params(&self) -> Result<SimParams, HapticError> {
        let params = SimParams {
            dt_ns: self
                .loop_
                .dt_us
                .checked_mul(1000)
                .ok_or_else(|| HapticError::Config("dt_us too large".into()))?,
            gains: self.gains,
            putty: self.putty,
            slide: self.loop_.slide,
        };
        params.validate()?;
        if self.loop_.publish_interval_ms == 0 {
            return Err(HapticError::Config("publish_interval_ms must be > 0".into()));
        }
        Ok(params)
    }

    pub fn publish_interval(&self) -> Duration {
        Duration::from_millis(self.loop_.publish_interval_ms)
    }

    pub fn silence_timeout(&self) -> Duration {
        Duration::from_millis(self.loop_.silence_timeout_ms)
    }

    pub fn load_rig(&self) -> Result<RigConfig, HapticError> {
        match &self.rig {
            Some(p) => Ok(RigConfig::load(self.resolve(p))?),
            None => Ok(RigConfig::default_rig()),
        }
    }

    pub fn load_scene(&self) -> Result<Scene, HapticError> {
        let opts = LoadOptions {
            flip_winding: self.scene.flip_winding,
        };
        let mesh = TriMesh::load(self.resolve(&self.scene.mesh), opts)?;
        let seam = match &self.scene.seam {
            Some(p) => Some(SeamPath::load(self.resolve(p), self.scene.slip_tolerance)?),
            None => None,
        };
        Ok(Scene::new(mesh, seam, MixedProp::putty_gun()))
    }
}
