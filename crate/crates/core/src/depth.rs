//! Cross-shaped median depth sampling and lifting of 2D poses into world-frame proposals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraCalibration, Pixel, Point3, ViewId};
use crate::skeleton::{Pose2D, SkeletonDefinition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("depth image is {got} values but {width}x{height} needs {expected}")]
    Size {
        width: u32,
        height: u32,
        got: usize,
        expected: usize,
    },
    #[error("depth value {value} at index {index} is negative or non-finite")]
    BadValue { index: usize, value: f32 },
    #[error("view mismatch: pose {pose}, depth {depth}, calibration {calib}")]
    ViewMismatch {
        pose: ViewId,
        depth: ViewId,
        calib: ViewId,
    },
    #[error("depth image {got_w}x{got_h} does not match calibration {want_w}x{want_h}")]
    Dimensions {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("invalid cross parameters: {0}")]
    Cross(String),
}

/// Row-major depth map in meters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub view_id: ViewId,
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl DepthImage {
    pub fn new(
        view_id: ViewId,
        width: u32,
        height: u32,
        values: Vec<f32>,
    ) -> Result<Self, DepthError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(DepthError::Size {
                width,
                height,
                got: values.len(),
                expected,
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(DepthError::BadValue { index, value });
        }
        Ok(Self {
            view_id,
            width,
            height,
            values,
        })
    }

    /// All-invalid image.
    pub fn empty(view_id: ViewId, width: u32, height: u32) -> Self {
        Self {
            view_id,
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Constant-depth image.
    pub fn filled(view_id: ViewId, width: u32, height: u32, depth: f32) -> Self {
        assert!(depth.is_finite() && depth >= 0.0);
        Self {
            view_id,
            width,
            height,
            values: vec![depth; width as usize * height as usize],
        }
    }

    pub fn for_camera(calib: &CameraCalibration) -> Self {
        Self::empty(calib.view_id, calib.width, calib.height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Writes a pixel. Negative or non-finite values are stored as invalid.
    #[inline]
    pub fn set(&mut self, x: u32, y: u32, depth: f32) {
        let d = if depth.is_finite() && depth > 0.0 {
            depth
        } else {
            0.0
        };
        self.values[y as usize * self.width as usize + x as usize] = d;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn check_matches(&self, calib: &CameraCalibration) -> Result<(), DepthError> {
        if self.width != calib.width || self.height != calib.height {
            return Err(DepthError::Dimensions {
                got_w: self.width,
                got_h: self.height,
                want_w: calib.width,
                want_h: calib.height,
            });
        }
        Ok(())
    }
}

/// Shape of the sampling cross: a horizontal `arm_length × thickness` rectangle
/// unioned with a vertical `thickness × arm_length` one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossParams {
    pub arm_length: u32,
    pub thickness: u32,
    pub min_valid: u32,
}

impl Default for CrossParams {
    fn default() -> Self {
        Self {
            arm_length: 11,
            thickness: 3,
            min_valid: 5,
        }
    }
}

impl CrossParams {
    pub fn new(arm_length: u32, thickness: u32, min_valid: u32) -> Result<Self, DepthError> {
        let p = Self {
            arm_length,
            thickness,
            min_valid,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        if self.thickness < 1 || self.arm_length < self.thickness {
            return Err(DepthError::Cross(format!(
                "need arm_length >= thickness >= 1 (got {} and {})",
                self.arm_length, self.thickness
            )));
        }
        if self.arm_length.is_multiple_of(2) || self.thickness.is_multiple_of(2) {
            return Err(DepthError::Cross(
                "arm_length and thickness must be odd".into(),
            ));
        }
        if self.min_valid < 1 {
            return Err(DepthError::Cross("min_valid must be at least 1".into()));
        }
        Ok(())
    }

    /// Pixel count of the full (unclipped) cross.
    pub fn pixel_count(&self) -> usize {
        let (a, t) = (self.arm_length as usize, self.thickness as usize);
        2 * a * t - t * t
    }
}

/// Reusable buffer for [`sample_depth_with`].
#[derive(Debug, Default)]
pub struct SampleScratch {
    buf: Vec<f32>,
}

/// Median depth over the valid pixels of the cross centered at `round(px)`.
/// Returns `None` when fewer than `min_valid` valid pixels are covered.
pub fn sample_depth(img: &DepthImage, px: Pixel, params: &CrossParams) -> Option<f64> {
    sample_depth_with(img, px, params, &mut SampleScratch::default())
}

pub fn sample_depth_with(
    img: &DepthImage,
    px: Pixel,
    params: &CrossParams,
    scratch: &mut SampleScratch,
) -> Option<f64> {
    if !px.is_finite() {
        return None;
    }
    let (cu, cv) = px.rounded();
    let arm = params.arm_length as i64 / 2;
    let thick = params.thickness as i64 / 2;
    let (w, h) = (img.width as i64, img.height as i64);
    let buf = &mut scratch.buf;
    buf.clear();

    let mut collect = |x0: i64, x1: i64, y0: i64, y1: i64, skip: Option<(i64, i64, i64, i64)>| {
        let (x0, x1) = (x0.max(0), x1.min(w - 1));
        let (y0, y1) = (y0.max(0), y1.min(h - 1));
        for y in y0..=y1 {
            let row = &img.values[(y * w) as usize..((y + 1) * w) as usize];
            for x in x0..=x1 {
                if let Some((sx0, sx1, sy0, sy1)) = skip {
                    if x >= sx0 && x <= sx1 && y >= sy0 && y <= sy1 {
                        continue;
                    }
                }
                let d = row[x as usize];
                if d > 0.0 {
                    buf.push(d);
                }
            }
        }
    };
    // horizontal bar, then the vertical bar minus the shared center block
    collect(cu - arm, cu + arm, cv - thick, cv + thick, None);
    collect(
        cu - thick,
        cu + thick,
        cv - arm,
        cv + arm,
        Some((cu - thick, cu + thick, cv - thick, cv + thick)),
    );

    let n = buf.len();
    if n < params.min_valid as usize || n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, f32::total_cmp);
    let upper = *upper as f64;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let below = lower.iter().copied().fold(f32::MIN, f32::max) as f64;
        Some((below + upper) / 2.0)
    }
}

/// One lifted joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalJoint {
    pub position: Point3,
    pub confidence: f64,
}

/// One person's 3D pose as lifted from a single view.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseProposal3D {
    pub source_view: ViewId,
    /// Index of the detection within its view; used for deterministic tie-breaks.
    pub detection: usize,
    pub joints: Vec<Option<ProposalJoint>>,
}

impl PoseProposal3D {
    pub fn empty(source_view: ViewId, detection: usize, joint_count: usize) -> Self {
        Self {
            source_view,
            detection,
            joints: vec![None; joint_count],
        }
    }

    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    pub fn position(&self, j: usize) -> Option<Point3> {
        self.joints.get(j).copied().flatten().map(|pj| pj.position)
    }

    pub fn positions(&self) -> Vec<Option<Point3>> {
        self.joints
            .iter()
            .map(|j| j.map(|pj| pj.position))
            .collect()
    }
}

/// Lifts one detected pose to a world-frame proposal.
///
/// Joints whose cross sample fails are left absent; a proposal without any
/// joints is still returned.
pub fn lift_pose(
    pose: &Pose2D,
    detection: usize,
    img: &DepthImage,
    calib: &CameraCalibration,
    skel: &SkeletonDefinition,
    params: &CrossParams,
    apply_offsets: bool,
) -> Result<PoseProposal3D, DepthError> {
    lift_pose_with(
        pose,
        detection,
        img,
        calib,
        skel,
        params,
        apply_offsets,
        &mut SampleScratch::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn lift_pose_with(
    pose: &Pose2D,
    detection: usize,
    img: &DepthImage,
    calib: &CameraCalibration,
    skel: &SkeletonDefinition,
    params: &CrossParams,
    apply_offsets: bool,
    scratch: &mut SampleScratch,
) -> Result<PoseProposal3D, DepthError> {
    if pose.view_id != img.view_id || img.view_id != calib.view_id {
        return Err(DepthError::ViewMismatch {
            pose: pose.view_id,
            depth: img.view_id,
            calib: calib.view_id,
        });
    }
    let mut out = PoseProposal3D::empty(pose.view_id, detection, skel.joint_count());
    for kp in pose.keypoints.values() {
        if kp.joint >= skel.joint_count() {
            continue;
        }
        let Some(d) = sample_depth_with(img, kp.pixel, params, scratch) else {
            continue;
        };
        let d = if apply_offsets {
            d + skel.depth_offset(kp.joint)
        } else {
            d
        };
        if let Ok(position) = calib.unproject(kp.pixel, d) {
            out.joints[kp.joint] = Some(ProposalJoint {
                position,
                confidence: kp.confidence,
            });
        }
    }
    Ok(out)
}

/// Lifts every detection of one view.
pub fn lift_view(
    poses: &[Pose2D],
    img: &DepthImage,
    calib: &CameraCalibration,
    skel: &SkeletonDefinition,
    params: &CrossParams,
    apply_offsets: bool,
) -> Result<Vec<PoseProposal3D>, DepthError> {
    let mut scratch = SampleScratch::default();
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| lift_pose_with(p, i, img, calib, skel, params, apply_offsets, &mut scratch))
        .collect()
}
