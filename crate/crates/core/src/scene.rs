//! Core scene types: semantic Gaussians, pinhole cameras, label maps,
//! feature maps and language embeddings.
//!
//! Everything here is plain data. Constructors validate; the fields stay
//! public so that file readers and test fixtures can build values directly
//! and run [`validate_scene`] afterwards.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Feature assigned to Gaussians that originate from unlabeled pixels.
///
/// It sits outside the `[0, 1]^3` cube that holds every lattice ID, so it can
/// never be confused with a real object.
pub const BACKGROUND_FEATURE: [f32; 3] = [-1.0, -1.0, -1.0];

/// Quaternions whose norm is this close to one are kept bit-for-bit.
const QUAT_NORM_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("gaussian {index}: field `{field}` is not finite")]
    NonFinite { index: usize, field: &'static str },
    #[error("gaussian {index}: field `{field}` = {value} is out of range")]
    OutOfRange {
        index: usize,
        field: &'static str,
        value: f32,
    },
    #[error("gaussian {index}: rotation quaternion norm {norm} is not 1")]
    NonUnitQuaternion { index: usize, norm: f32 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
}

/// One splat: mean, covariance factors, opacity, color and a 3-dim semantic
/// feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticGaussian {
    pub mean: [f32; 3],
    /// Per-axis standard deviations, all strictly positive.
    pub scale: [f32; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f32; 4],
    pub opacity: f32,
    pub color: [f32; 3],
    pub feature: [f32; 3],
}

impl SemanticGaussian {
    /// Builds a Gaussian, normalizing the quaternion and checking every
    /// invariant.
    pub fn new(
        mean: [f32; 3],
        scale: [f32; 3],
        rotation: [f32; 4],
        opacity: f32,
        color: [f32; 3],
        feature: [f32; 3],
    ) -> Result<Self, SceneError> {
        let mut g = Self {
            mean,
            scale,
            rotation,
            opacity,
            color,
            feature,
        };
        if rotation.iter().all(|c| c.is_finite()) {
            g.rotation = normalize_quaternion(rotation);
        }
        g.check(0)?;
        Ok(g)
    }

    /// Isotropic, unrotated Gaussian. Handy for fixtures.
    pub fn isotropic(
        mean: [f32; 3],
        sigma: f32,
        opacity: f32,
        color: [f32; 3],
        feature: [f32; 3],
    ) -> Result<Self, SceneError> {
        Self::new(
            mean,
            [sigma; 3],
            [1.0, 0.0, 0.0, 0.0],
            opacity,
            color,
            feature,
        )
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation.map(f64::from);
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    /// Checks the type invariants, reporting `index` on failure.
    pub fn check(&self, index: usize) -> Result<(), SceneError> {
        let groups: [(&'static str, &[f32]); 6] = [
            ("mean", &self.mean),
            ("scale", &self.scale),
            ("rotation", &self.rotation),
            ("opacity", std::slice::from_ref(&self.opacity)),
            ("color", &self.color),
            ("feature", &self.feature),
        ];
        for (field, values) in groups {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(SceneError::NonFinite { index, field });
            }
        }
        if let Some(&value) = self.scale.iter().find(|&&s| s <= 0.0) {
            return Err(SceneError::OutOfRange {
                index,
                field: "scale",
                value,
            });
        }
        let norm = self.rotation.iter().map(|c| c * c).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
            return Err(SceneError::NonUnitQuaternion { index, norm });
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(SceneError::OutOfRange {
                index,
                field: "opacity",
                value: self.opacity,
            });
        }
        if let Some(&value) = self.color.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(SceneError::OutOfRange {
                index,
                field: "color",
                value,
            });
        }
        if self.feature != BACKGROUND_FEATURE {
            if let Some(&value) = self.feature.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(SceneError::OutOfRange {
                    index,
                    field: "feature",
                    value,
                });
            }
        }
        Ok(())
    }
}

fn normalize_quaternion(q: [f32; 4]) -> [f32; 4] {
    let norm = q.iter().map(|c| c * c).sum::<f32>().sqrt();
    if norm == 0.0 || (norm - 1.0).abs() <= QUAT_NORM_TOLERANCE {
        return q;
    }
    let n = q.map(f64::from).iter().map(|c| c * c).sum::<f64>().sqrt();
    q.map(|c| (f64::from(c) / n) as f32)
}

/// `R * diag(scale^2) * R^T`.
pub fn covariance_of(g: &SemanticGaussian) -> Matrix3<f64> {
    let r = g.unit_quaternion().to_rotation_matrix().into_inner();
    let s = Vector3::from(g.scale.map(f64::from));
    let rs = Matrix3::from_columns(&[
        r.column(0) * s.x,
        r.column(1) * s.y,
        r.column(2) * s.z,
    ]);
    rs * rs.transpose()
}

/// Returns the first violated invariant, with its index.
pub fn validate_scene(gaussians: &[SemanticGaussian]) -> Result<(), SceneError> {
    gaussians
        .iter()
        .enumerate()
        .try_for_each(|(i, g)| g.check(i))
}

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera space looks down `+z` with `x` to the right and `y` down. Pixel
/// `(x, y)` has its center at the integer coordinate `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 4x4 rigid transform.
    pub world_to_camera: [f64; 16],
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: [f64; 16],
    ) -> Result<Self, SceneError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
        };
        cam.check()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll. The image
    /// `y` axis points away from `up`.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, SceneError> {
        let eye = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye).normalize();
        let right = forward.cross(&Vector3::from(up)).normalize();
        let down = forward.cross(&right);
        if !(right.iter().all(|v| v.is_finite()) && down.iter().all(|v| v.is_finite())) {
            return Err(SceneError::InvalidCamera(
                "look_at: up vector parallel to view direction".into(),
            ));
        }
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        #[rustfmt::skip]
        let m = [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ];
        Self::new(
            fx,
            fy,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            m,
        )
    }

    pub fn check(&self) -> Result<(), SceneError> {
        let intrinsics = [self.fx, self.fy, self.cx, self.cy];
        if intrinsics
            .iter()
            .chain(self.world_to_camera.iter())
            .any(|v| !v.is_finite())
        {
            return Err(SceneError::InvalidCamera("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(SceneError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::InvalidCamera(format!(
                "image size {}x{} is empty",
                self.width, self.height
            )));
        }
        let r = self.rotation();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-5 {
            return Err(SceneError::InvalidCamera(format!(
                "rotation block is not orthonormal (error {err:e})"
            )));
        }
        let m = &self.world_to_camera;
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(SceneError::InvalidCamera(
                "last row of world_to_camera must be [0, 0, 0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let m = &self.world_to_camera;
        Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10])
    }

    pub fn translation(&self) -> Vector3<f64> {
        let m = &self.world_to_camera;
        Vector3::new(m[3], m[7], m[11])
    }

    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    /// World-space unit direction of the ray through pixel coordinate `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let d = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation().transpose() * d).normalize()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Object label. `0` means unlabeled; object indices start at 1.
pub type Label = u16;

/// Per-pixel integer object labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<Label>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<Label>) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidMap(format!("empty label map {width}x{height}")));
        }
        if labels.len() != width as usize * height as usize {
            return Err(SceneError::InvalidMap(format!(
                "label map {width}x{height} has {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, label: Label) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Label {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel 3-vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<[f32; 3]>,
}

impl FeatureMap {
    pub fn new(width: u32, height: u32, values: Vec<[f32; 3]>) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidMap(format!("empty feature map {width}x{height}")));
        }
        if values.len() != width as usize * height as usize {
            return Err(SceneError::InvalidMap(format!(
                "feature map {width}x{height} has {} values",
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidMap("feature map has non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: [f32; 3]) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// High-dimensional language embedding. The all-zero vector marks an object
/// that is absent from a view.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt()
    }

    /// Unit-L2 copy; the zero sentinel stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|&v| (f64::from(v) / n) as f32).collect())
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(feature: [f32; 3]) -> SemanticGaussian {
        SemanticGaussian::isotropic([0.0; 3], 1.0, 0.5, [0.5; 3], feature).unwrap()
    }

    #[test]
    fn covariance_identity_and_diagonal() {
        let g = unit([0.0; 3]);
        assert_abs_diff_eq!(covariance_of(&g), Matrix3::identity(), epsilon = 1e-12);

        let mut g = g;
        g.scale = [2.0, 1.0, 1.0];
        assert_abs_diff_eq!(
            covariance_of(&g),
            Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn covariance_quarter_turn_about_z_swaps_axes() {
        let half = std::f32::consts::FRAC_PI_4;
        let g = SemanticGaussian::new(
            [0.0; 3],
            [2.0, 1.0, 1.0],
            [half.cos(), 0.0, 0.0, half.sin()],
            1.0,
            [0.0; 3],
            [0.0; 3],
        )
        .unwrap();
        // R = [[0,-1,0],[1,0,0],[0,0,1]]; R diag(4,1,1) R^T = diag(1,4,1).
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0));
        assert_abs_diff_eq!(covariance_of(&g), expected, epsilon = 1e-6);
    }

    #[test]
    fn constructor_normalizes_quaternion() {
        let g = SemanticGaussian::new([0.0; 3], [1.0; 3], [2.0, 0.0, 0.0, 0.0], 1.0, [0.0; 3], [0.0; 3])
            .unwrap();
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        let zero = SemanticGaussian::new([0.0; 3], [1.0; 3], [0.0; 4], 1.0, [0.0; 3], [0.0; 3]);
        assert!(matches!(zero, Err(SceneError::NonUnitQuaternion { .. })));
    }

    #[test]
    fn validate_scene_reports_first_violation() {
        assert_eq!(validate_scene(&[]), Ok(()));
        let mut scene = vec![unit([0.2, 0.3, 0.4]); 5];
        assert_eq!(validate_scene(&scene[..1]), Ok(()));
        scene[3].opacity = 1.5;
        scene[4].mean[0] = f32::NAN;
        let err = validate_scene(&scene).unwrap_err();
        assert_eq!(
            err,
            SceneError::OutOfRange {
                index: 3,
                field: "opacity",
                value: 1.5
            }
        );
        assert!(err.to_string().contains("gaussian 3"));
        assert!(err.to_string().contains("opacity"));
    }

    #[test]
    fn validate_scene_catches_each_field() {
        let base = unit([0.0; 3]);
        let mut g = base;
        g.scale[1] = 0.0;
        assert!(matches!(g.check(0), Err(SceneError::OutOfRange { field: "scale", .. })));
        let mut g = base;
        g.rotation = [0.5, 0.0, 0.0, 0.0];
        assert!(matches!(g.check(0), Err(SceneError::NonUnitQuaternion { .. })));
        let mut g = base;
        g.feature = [1.2, 0.0, 0.0];
        assert!(matches!(g.check(0), Err(SceneError::OutOfRange { field: "feature", .. })));
        let mut g = base;
        g.color[2] = f32::INFINITY;
        assert!(matches!(g.check(0), Err(SceneError::NonFinite { field: "color", .. })));
        let mut g = base;
        g.feature = BACKGROUND_FEATURE;
        assert_eq!(g.check(0), Ok(()));
    }

    #[test]
    fn camera_validation() {
        let ok = PinholeCamera::look_at([0.0, 0.0, -5.0], [0.0; 3], [0.0, -1.0, 0.0], 100.0, 100.0, 64, 48)
            .unwrap();
        assert_abs_diff_eq!(ok.center(), Vector3::new(0.0, 0.0, -5.0), epsilon = 1e-12);
        assert_abs_diff_eq!(ok.to_camera(Vector3::zeros()), Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-12);

        let mut bad = ok;
        bad.fx = 0.0;
        assert!(bad.check().is_err());
        let mut bad = ok;
        bad.world_to_camera[0] = 2.0;
        assert!(bad.check().is_err());
        let mut bad = ok;
        bad.height = 0;
        assert!(bad.check().is_err());
    }

    #[test]
    fn map_constructors_check_sizes() {
        assert!(LabelMap::new(2, 2, vec![0; 3]).is_err());
        assert!(FeatureMap::new(1, 1, vec![[f32::NAN, 0.0, 0.0]]).is_err());
        assert_eq!(LabelMap::new(2, 1, vec![3, 4]).unwrap().get(1, 0), 4);
    }

    #[test]
    fn embedding_normalization_keeps_sentinel() {
        let e = Embedding(vec![3.0, 4.0]).normalized();
        assert_abs_diff_eq!(e.norm(), 1.0, epsilon = 1e-7);
        assert!(Embedding::zeros(4).normalized().is_zero());
    }
}
