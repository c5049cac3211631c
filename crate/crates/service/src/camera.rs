//! Camera descriptions in JSON: an input view index, a look-at pose, or
//! explicit intrinsics with a row-major world-to-camera matrix.

use semsplat::{PinholeCamera, SceneError};
use serde::{Deserialize, Serialize};

/// Largest accepted image side.
pub const MAX_SIDE: u32 = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraSpec {
    View {
        view: usize,
    },
    LookAt {
        eye: [f64; 3],
        target: [f64; 3],
        #[serde(default = "default_up")]
        up: [f64; 3],
        fx: f64,
        #[serde(default)]
        fy: Option<f64>,
        width: u32,
        height: u32,
    },
    Matrix {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: [f64; 16],
    },
}

fn default_up() -> [f64; 3] {
    [0.0, -1.0, 0.0]
}

impl CameraSpec {
    pub fn from_camera(cam: &PinholeCamera) -> Self {
        Self::Matrix {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            world_to_camera: cam.world_to_camera,
        }
    }

    /// Builds the camera; `inputs` are the scene's input views.
    pub fn resolve(&self, inputs: &[PinholeCamera]) -> Result<PinholeCamera, SceneError> {
        let cam = match *self {
            Self::View { view } => *inputs.get(view).ok_or_else(|| {
                SceneError::InvalidCamera(format!("view {view} out of range, scene has {}", inputs.len()))
            })?,
            Self::LookAt {
                eye,
                target,
                up,
                fx,
                fy,
                width,
                height,
            } => PinholeCamera::look_at(eye, target, up, fx, fy.unwrap_or(fx), width, height)?,
            Self::Matrix {
                fx,
                fy,
                cx,
                cy,
                width,
                height,
                world_to_camera,
            } => PinholeCamera::new(fx, fy, cx, cy, width, height, world_to_camera)?,
        };
        if cam.width > MAX_SIDE || cam.height > MAX_SIDE {
            return Err(SceneError::InvalidCamera(format!(
                "{}x{} exceeds the {MAX_SIDE} pixel limit",
                cam.width, cam.height
            )));
        }
        Ok(cam)
    }
}
