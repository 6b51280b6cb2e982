//! Synthetic, labelled clips from a physical model of the grid, the lamp
//! flicker and the camera shutter.

mod grid;
mod recipe;
mod render;
mod scene;

use serde::{Deserialize, Serialize};

pub use grid::{synthesize_enf_trace, voltage_waveform, EnfTrace, GridModel, ImbalanceWalk, TRACE_RATE_HZ};
pub use recipe::{write_clip, ClipRecipe, GroundTruthSidecar};
pub use render::{exposure_average, render_video};
pub use scene::{BouncePath, IlluminationDrift, MovingObject, SceneModel, Shape, ShutterKind, ShutterModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClipLabel {
    #[serde(alias = "H1", alias = "present")]
    EnfPresent,
    #[serde(alias = "H0", alias = "absent")]
    EnfAbsent,
}

impl ClipLabel {
    pub fn is_positive(self) -> bool {
        self == ClipLabel::EnfPresent
    }
}

impl std::fmt::Display for ClipLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClipLabel::EnfPresent => "EnfPresent",
            ClipLabel::EnfAbsent => "EnfAbsent",
        })
    }
}

impl std::str::FromStr for ClipLabel {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "enfpresent" | "present" | "h1" | "positive" => Ok(ClipLabel::EnfPresent),
            "enfabsent" | "absent" | "h0" | "negative" => Ok(ClipLabel::EnfAbsent),
            _ => Err(crate::Error::config(format!("unknown label {s:?}"))),
        }
    }
}

/// What the renderer knows about a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub enf_trace: EnfTrace,
    /// Where the flicker fundamental folds to at the clip's frame rate.
    pub flicker_alias_hz: f64,
    pub label: ClipLabel,
}
