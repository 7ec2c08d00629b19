//! Pinhole camera model and rigid camera/world transforms.
//!
//! Extrinsics are stored camera→world: `p_world = rotation * p_cam + translation`,
//! so `translation` is the camera center in world coordinates. Camera frame
//! follows the usual image convention: +x right, +y down, +z along the optical axis.
//! Pixel centers sit at integer coordinates.

use nalgebra::{Matrix3, Point3 as NaPoint3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3D point in meters. The frame (world or camera) depends on context.
pub type Point3 = NaPoint3<f64>;

/// Tolerance for the orthonormality check on rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Identifier of a camera view.
pub type ViewId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the image plane")]
    Behind,
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("view {view_id}: {reason}")]
    InvalidCalibration { view_id: ViewId, reason: String },
}

/// Continuous image coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Nearest integer pixel (round half away from zero).
    pub fn rounded(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

/// Intrinsics plus camera→world rigid transform for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub view_id: ViewId,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera→world rotation.
    pub rotation: Matrix3<f64>,
    /// Camera center in world coordinates, meters.
    pub translation: Vector3<f64>,
}

impl CameraCalibration {
    /// Builds a calibration and checks its invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        view_id: ViewId,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let calib = Self {
            view_id,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        };
        calib.validate()?;
        Ok(calib)
    }

    /// Identity extrinsics with the given intrinsics.
    pub fn identity(view_id: ViewId, width: u32, height: u32, f: f64, cx: f64, cy: f64) -> Self {
        Self {
            view_id,
            fx: f,
            fy: f,
            cx,
            cy,
            width,
            height,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `center` looking at `target`, with `up` giving the world's
    /// upward direction (the image +y axis points opposite to it).
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        view_id: ViewId,
        width: u32,
        height: u32,
        f: f64,
        center: Point3,
        target: Point3,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = (target - center).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(GeometryError::InvalidCalibration {
                view_id,
                reason: "viewing direction parallel to up vector".into(),
            });
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(
            view_id,
            width,
            height,
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            center.coords,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |reason: String| GeometryError::InvalidCalibration {
            view_id: self.view_id,
            reason,
        };
        let scalars = [self.fx, self.fy, self.cx, self.cy];
        if scalars.iter().any(|v| !v.is_finite())
            || self.rotation.iter().any(|v| !v.is_finite())
            || self.translation.iter().any(|v| !v.is_finite())
        {
            return Err(bad("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(bad(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(bad("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(bad(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let worst = (gram - Matrix3::identity()).abs().max();
        if worst > ORTHONORMAL_TOL {
            return Err(bad(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {worst:e})"
            )));
        }
        Ok(())
    }

    /// World point into the camera frame.
    pub fn world_to_camera(&self, p_world: &Point3) -> Point3 {
        Point3::from(self.rotation.transpose() * (p_world.coords - self.translation))
    }

    /// Camera-frame point into the world frame.
    pub fn camera_to_world(&self, p_cam: &Point3) -> Point3 {
        Point3::from(self.rotation * p_cam.coords + self.translation)
    }

    /// Projects a world point. The returned pixel may lie outside the image.
    pub fn project(&self, p_world: &Point3) -> Result<(Pixel, f64), GeometryError> {
        if !p_world.coords.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let pc = self.world_to_camera(p_world);
        if pc.z <= 0.0 {
            return Err(GeometryError::Behind);
        }
        Ok((self.project_camera(&pc), pc.z))
    }

    /// Projects a camera-frame point with positive depth.
    pub fn project_camera(&self, pc: &Point3) -> Pixel {
        Pixel::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        )
    }

    /// Lifts a pixel at camera-frame depth `depth` to the world frame.
    pub fn unproject(&self, px: Pixel, depth: f64) -> Result<Point3, GeometryError> {
        if !px.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !depth.is_finite() || depth <= 0.0 {
            return Err(GeometryError::InvalidDepth(depth));
        }
        Ok(self.camera_to_world(&self.unproject_camera(px, depth)))
    }

    /// Camera-frame point for a pixel at depth `depth`; no checks.
    #[inline]
    pub fn unproject_camera(&self, px: Pixel, depth: f64) -> Point3 {
        Point3::new(
            (px.u - self.cx) * depth / self.fx,
            (px.v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3 {
        Point3::from(self.translation)
    }

    pub fn contains(&self, px: Pixel) -> bool {
        let (u, v) = px.rounded();
        u >= 0 && v >= 0 && (u as u64) < self.width as u64 && (v as u64) < self.height as u64
    }

    /// Returns the same camera with a world→world rigid motion applied:
    /// a point `p` seen by `self` is seen by the result at `rotation * p + translation`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        Self {
            rotation: rotation * self.rotation,
            translation: rotation * self.translation + translation,
            ..self.clone()
        }
    }

    /// Converts a world→camera extrinsic pair into the stored camera→world form.
    pub fn invert_extrinsics(&mut self) {
        let r_t = self.rotation.transpose();
        self.translation = -(r_t * self.translation);
        self.rotation = r_t;
    }
}

/// A rigid world→world motion.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation from an axis-angle vector (radians) plus translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::new(axis_angle).into_inner();
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_camera(&self, calib: &CameraCalibration) -> CameraCalibration {
        calib.transformed(&self.rotation, &self.translation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ident() -> CameraCalibration {
        CameraCalibration::identity(0, 640, 480, 500.0, 320.0, 240.0)
    }

    #[test]
    fn on_axis_point_hits_principal_point() {
        let (px, d) = ident().project(&Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(px, Pixel::new(320.0, 240.0));
        assert_eq!(d, 2.0);
    }

    #[test]
    fn negative_z_is_behind() {
        assert_eq!(
            ident().project(&Point3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::Behind)
        );
        assert_eq!(
            ident().project(&Point3::new(0.3, 0.0, 0.0)),
            Err(GeometryError::Behind)
        );
    }

    #[test]
    fn unproject_principal_ray() {
        let p = ident().unproject(Pixel::new(320.0, 240.0), 3.0).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn unproject_off_axis() {
        // (820 - 320) * 1 / 500 = 1
        let p = ident().unproject(Pixel::new(820.0, 240.0), 1.0).unwrap();
        assert_eq!(p, Point3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn unproject_rejects_bad_depth() {
        let c = ident();
        assert!(matches!(
            c.unproject(Pixel::new(1.0, 1.0), 0.0),
            Err(GeometryError::InvalidDepth(_))
        ));
        assert!(c.unproject(Pixel::new(1.0, 1.0), -2.0).is_err());
        assert!(c.unproject(Pixel::new(1.0, 1.0), f64::NAN).is_err());
        assert!(c.unproject(Pixel::new(f64::INFINITY, 1.0), 1.0).is_err());
    }

    #[test]
    fn validation_catches_bad_rotation_and_intrinsics() {
        let mut c = ident();
        c.rotation[(0, 1)] = 1e-6;
        assert!(c.validate().is_err());
        let mut c = ident();
        c.fx = 0.0;
        assert!(c.validate().is_err());
        let mut c = ident();
        c.cx = 640.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("view 0"), "{err}");
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let c = CameraCalibration::look_at(
            1,
            640,
            480,
            525.0,
            Point3::new(3.0, 0.0, 1.5),
            Point3::new(0.0, 0.0, 1.0),
            Vector3::z(),
        )
        .unwrap();
        let (px, _) = c.project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((px.u - 320.0).abs() < 1e-9 && (px.v - 240.0).abs() < 1e-9);
        // world up maps to image up (smaller v)
        let (above, _) = c.project(&Point3::new(0.0, 0.0, 1.5)).unwrap();
        assert!(above.v < 240.0);
    }

    #[test]
    fn inverting_extrinsics_twice_is_identity() {
        let t = RigidTransform::from_axis_angle(
            Vector3::new(0.2, -0.4, 1.0),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let c = t.apply_camera(&ident());
        let mut d = c.clone();
        d.invert_extrinsics();
        d.invert_extrinsics();
        assert!((d.rotation - c.rotation).abs().max() < 1e-12);
        assert!((d.translation - c.translation).abs().max() < 1e-12);
    }

    prop_compose! {
        fn arb_calib()(
            aa in prop::array::uniform3(-3.0f64..3.0),
            t in prop::array::uniform3(-5.0f64..5.0),
            f in 200.0f64..1200.0,
            aspect in 0.8f64..1.2,
            cx in 1.0f64..639.0,
            cy in 1.0f64..479.0,
        ) -> CameraCalibration {
            let r = RigidTransform::from_axis_angle(Vector3::from(aa), Vector3::from(t));
            CameraCalibration::new(0, 640, 480, f, f * aspect, cx, cy, r.rotation, r.translation).unwrap()
        }
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(
            c in arb_calib(),
            pc in prop::array::uniform3(-4.0f64..4.0),
            z in 0.05f64..10.0,
        ) {
            let p_world = c.camera_to_world(&Point3::new(pc[0], pc[1], z));
            let (px, depth) = c.project(&p_world).unwrap();
            prop_assert_eq!(depth, c.world_to_camera(&p_world).z);
            let back = c.unproject(px, depth).unwrap();
            prop_assert!((back - p_world).norm() < 1e-9, "err {}", (back - p_world).norm());
        }
    }
}
