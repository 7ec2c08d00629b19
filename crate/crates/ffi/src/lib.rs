//! C ABI for the depthpose fusion core.
//!
//! Handles are opaque and owned by the caller. Every call returns an
//! [`SdpStatus`]; on failure `sdp_last_error` describes the cause. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use depthpose::depth::lift_view;
use depthpose::tracking::FusedPose3D;
use depthpose::{
    CameraCalibration, CrossParams, DepthImage, FusionConfig, Keypoint2D, Pixel, Pose2D,
    SkeletonDefinition, Tracker,
};
use nalgebra::{Matrix3, Vector3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownView = 3,
    OutOfRange = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: SdpStatus, msg: impl Into<String>) -> SdpStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`SdpStatus::Panic`].
fn guard(f: impl FnOnce() -> SdpStatus) -> SdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SdpStatus::Ok {
                set_error("");
            }
            s
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(SdpStatus::Panic, msg)
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SdpStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- skeleton

/// Opaque skeleton definition.
pub struct SdpSkeleton(SkeletonDefinition);

/// Built-in 13-joint skeleton. Free with `sdp_skeleton_free`.
#[no_mangle]
pub extern "C" fn sdp_skeleton_coco13() -> *mut SdpSkeleton {
    Box::into_raw(Box::new(SdpSkeleton(SkeletonDefinition::coco13())))
}

/// Parses a skeleton from NUL-terminated JSON.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sdp_skeleton_from_json(
    json: *const c_char,
    out: *mut *mut SdpSkeleton,
) -> SdpStatus {
    guard(|| {
        non_null!(json, out);
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(SdpStatus::InvalidArgument, "skeleton JSON is not UTF-8");
        };
        match SkeletonDefinition::from_json(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SdpSkeleton(s)));
                SdpStatus::Ok
            }
            Err(e) => fail(SdpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of joints, 0 for a null handle.
///
/// # Safety
/// `skel` must be null or a live skeleton handle.
#[no_mangle]
pub unsafe extern "C" fn sdp_skeleton_joint_count(skel: *const SdpSkeleton) -> usize {
    skel.as_ref().map_or(0, |s| s.0.joint_count())
}

/// Index of a joint by name.
///
/// # Safety
/// `skel` must be a live handle, `name` a valid C string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sdp_skeleton_joint_index(
    skel: *const SdpSkeleton,
    name: *const c_char,
    out: *mut usize,
) -> SdpStatus {
    guard(|| {
        non_null!(skel, name, out);
        let name = CStr::from_ptr(name).to_string_lossy();
        match (*skel).0.joint_index(&name) {
            Some(j) => {
                *out = j;
                SdpStatus::Ok
            }
            None => fail(SdpStatus::OutOfRange, format!("no joint named `{name}`")),
        }
    })
}

/// # Safety
/// `skel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdp_skeleton_free(skel: *mut SdpSkeleton) {
    if !skel.is_null() {
        drop(Box::from_raw(skel));
    }
}

// ---------------------------------------------------------------- parameters

/// Depth sampling neighborhood.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpCrossParams {
    pub arm_length: u32,
    pub thickness: u32,
    pub min_valid: u32,
}

/// Association, filtering and fusion settings.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpFusionParams {
    pub match_threshold: f64,
    pub new_person_cluster_threshold: f64,
    pub drop_after: u32,
    pub limb_threshold: f64,
    pub topk: usize,
    pub min_shared_joints: usize,
    pub min_support: usize,
    pub min_proposal_joints: usize,
}

impl From<SdpCrossParams> for CrossParams {
    fn from(p: SdpCrossParams) -> Self {
        CrossParams {
            arm_length: p.arm_length,
            thickness: p.thickness,
            min_valid: p.min_valid,
        }
    }
}

impl From<SdpFusionParams> for FusionConfig {
    fn from(p: SdpFusionParams) -> Self {
        FusionConfig {
            match_threshold: p.match_threshold,
            new_person_cluster_threshold: p.new_person_cluster_threshold,
            drop_after: p.drop_after,
            limb_threshold: p.limb_threshold,
            topk: p.topk,
            min_shared_joints: p.min_shared_joints,
            min_support: p.min_support,
            min_proposal_joints: p.min_proposal_joints,
        }
    }
}

#[no_mangle]
pub extern "C" fn sdp_cross_params_default() -> SdpCrossParams {
    let c = CrossParams::default();
    SdpCrossParams {
        arm_length: c.arm_length,
        thickness: c.thickness,
        min_valid: c.min_valid,
    }
}

#[no_mangle]
pub extern "C" fn sdp_fusion_params_default() -> SdpFusionParams {
    let f = FusionConfig::default();
    SdpFusionParams {
        match_threshold: f.match_threshold,
        new_person_cluster_threshold: f.new_person_cluster_threshold,
        drop_after: f.drop_after,
        limb_threshold: f.limb_threshold,
        topk: f.topk,
        min_shared_joints: f.min_shared_joints,
        min_support: f.min_support,
        min_proposal_joints: f.min_proposal_joints,
    }
}

/// Pinhole camera. `rotation` (row-major) and `translation` map camera
/// coordinates to world coordinates; `translation` is the camera center.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpCamera {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

// ---------------------------------------------------------------- fuser

/// Opaque multi-view fuser: calibrations, queued views and tracker state.
pub struct SdpFuser {
    skeleton: SkeletonDefinition,
    cross: CrossParams,
    apply_offsets: bool,
    cameras: BTreeMap<u32, CameraCalibration>,
    pending: BTreeMap<u32, (DepthImage, Vec<Pose2D>)>,
    tracker: Tracker,
    poses: Vec<FusedPose3D>,
}

/// Creates a fuser. `fusion` and `cross` may be null for defaults; the
/// skeleton is copied.
///
/// # Safety
/// `skel` must be a live handle; `fusion` and `cross` null or valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_new(
    skel: *const SdpSkeleton,
    fusion: *const SdpFusionParams,
    cross: *const SdpCrossParams,
    apply_offsets: bool,
    out: *mut *mut SdpFuser,
) -> SdpStatus {
    guard(|| {
        non_null!(skel, out);
        let cross: CrossParams = cross
            .as_ref()
            .map_or_else(CrossParams::default, |c| (*c).into());
        if let Err(e) = cross.validate() {
            return fail(SdpStatus::InvalidArgument, e.to_string());
        }
        let fusion: FusionConfig = fusion
            .as_ref()
            .map_or_else(FusionConfig::default, |f| (*f).into());
        let tracker = match Tracker::new(fusion) {
            Ok(t) => t,
            Err(e) => return fail(SdpStatus::InvalidArgument, e.to_string()),
        };
        *out = Box::into_raw(Box::new(SdpFuser {
            skeleton: (*skel).0.clone(),
            cross,
            apply_offsets,
            cameras: BTreeMap::new(),
            pending: BTreeMap::new(),
            tracker,
            poses: Vec::new(),
        }));
        SdpStatus::Ok
    })
}

/// Registers or replaces one camera.
///
/// # Safety
/// `fuser` must be a live handle and `camera` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_set_camera(
    fuser: *mut SdpFuser,
    camera: *const SdpCamera,
) -> SdpStatus {
    guard(|| {
        non_null!(fuser, camera);
        let c = &*camera;
        let calib = CameraCalibration::new(
            c.view_id,
            c.width,
            c.height,
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            Matrix3::from_row_slice(&c.rotation),
            Vector3::from_row_slice(&c.translation),
        );
        match calib {
            Ok(calib) => {
                (*fuser).cameras.insert(c.view_id, calib);
                SdpStatus::Ok
            }
            Err(e) => fail(SdpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Queues one view for the next `sdp_fuser_step`.
///
/// `depth` holds `width * height` meters row-major, 0 for invalid pixels, and
/// must match the camera's image size. `keypoints` holds `persons` blocks of
/// `joint_count * 3` values (u, v, confidence); a NaN u or v marks an absent
/// joint. It may be null when `persons` is 0. Data is copied.
///
/// # Safety
/// `fuser` must be a live handle; `depth` must point to `width * height`
/// floats; `keypoints` to `persons * joint_count * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_add_view(
    fuser: *mut SdpFuser,
    view_id: u32,
    depth: *const f32,
    width: u32,
    height: u32,
    keypoints: *const f64,
    persons: usize,
) -> SdpStatus {
    guard(|| {
        non_null!(fuser, depth);
        if persons > 0 {
            non_null!(keypoints);
        }
        let f = &mut *fuser;
        let Some(calib) = f.cameras.get(&view_id) else {
            return fail(
                SdpStatus::UnknownView,
                format!("view {view_id} has no camera"),
            );
        };
        if (calib.width, calib.height) != (width, height) {
            return fail(
                SdpStatus::InvalidArgument,
                format!(
                    "depth is {width}x{height} but camera {view_id} is {}x{}",
                    calib.width, calib.height
                ),
            );
        }
        let values = std::slice::from_raw_parts(depth, width as usize * height as usize).to_vec();
        let img = match DepthImage::new(view_id, width, height, values) {
            Ok(img) => img,
            Err(e) => return fail(SdpStatus::InvalidArgument, e.to_string()),
        };
        let joints = f.skeleton.joint_count();
        let raw: &[f64] = if persons == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(keypoints, persons * joints * 3)
        };
        let mut poses = Vec::with_capacity(persons);
        for block in raw.chunks_exact(joints * 3) {
            let mut pose = Pose2D::new(view_id);
            for (j, kp) in block.chunks_exact(3).enumerate() {
                if kp[0].is_nan() || kp[1].is_nan() {
                    continue;
                }
                if !kp[0].is_finite() || !kp[1].is_finite() {
                    return fail(
                        SdpStatus::InvalidArgument,
                        format!("joint {j} has an infinite pixel"),
                    );
                }
                pose.insert(Keypoint2D {
                    joint: j,
                    pixel: Pixel::new(kp[0], kp[1]),
                    confidence: kp[2],
                });
            }
            poses.push(pose);
        }
        f.pending.insert(view_id, (img, poses));
        SdpStatus::Ok
    })
}

/// Fuses the queued views into poses and advances the tracker by one frame.
/// Views not queued count as empty. Writes the number of output poses.
///
/// # Safety
/// `fuser` must be a live handle; `count` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_step(fuser: *mut SdpFuser, count: *mut usize) -> SdpStatus {
    guard(|| {
        non_null!(fuser);
        let f = &mut *fuser;
        let mut proposals = Vec::new();
        for (view, (img, poses)) in std::mem::take(&mut f.pending) {
            let calib = &f.cameras[&view];
            match lift_view(&poses, &img, calib, &f.skeleton, &f.cross, f.apply_offsets) {
                Ok(p) => proposals.extend(p),
                Err(e) => return fail(SdpStatus::InvalidArgument, format!("view {view}: {e}")),
            }
        }
        f.poses = f.tracker.step(proposals, &f.skeleton);
        if let Some(c) = count.as_mut() {
            *c = f.poses.len();
        }
        SdpStatus::Ok
    })
}

/// Number of poses from the last step.
///
/// # Safety
/// `fuser` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_pose_count(fuser: *const SdpFuser) -> usize {
    fuser.as_ref().map_or(0, |f| f.poses.len())
}

/// Copies pose `index` of the last step. `joints` receives `joint_count * 3`
/// world coordinates (NaN for absent joints); `support` (nullable) receives
/// `joint_count` proposal counts (0 for absent joints).
///
/// # Safety
/// `fuser` must be a live handle, `person_id` and `joints` valid, `support`
/// null or valid, with the sizes above.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_get_pose(
    fuser: *const SdpFuser,
    index: usize,
    person_id: *mut u64,
    joints: *mut f64,
    support: *mut u32,
) -> SdpStatus {
    guard(|| {
        non_null!(fuser, person_id, joints);
        let f = &*fuser;
        let Some(pose) = f.poses.get(index) else {
            return fail(
                SdpStatus::OutOfRange,
                format!("pose {index} requested, {} available", f.poses.len()),
            );
        };
        *person_id = pose.person_id;
        let n = pose.joints.len();
        let xyz = std::slice::from_raw_parts_mut(joints, n * 3);
        for (j, joint) in pose.joints.iter().enumerate() {
            let p = joint.map_or([f64::NAN; 3], |fj| {
                [fj.position.x, fj.position.y, fj.position.z]
            });
            xyz[3 * j..3 * j + 3].copy_from_slice(&p);
        }
        if !support.is_null() {
            let s = std::slice::from_raw_parts_mut(support, n);
            for (dst, joint) in s.iter_mut().zip(&pose.joints) {
                *dst = joint.map_or(0, |fj| fj.support as u32);
            }
        }
        SdpStatus::Ok
    })
}

/// Number of live tracks, including ones missing this frame.
///
/// # Safety
/// `fuser` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_track_count(fuser: *const SdpFuser) -> usize {
    fuser.as_ref().map_or(0, |f| f.tracker.tracks().len())
}

/// # Safety
/// `fuser` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdp_fuser_free(fuser: *mut SdpFuser) {
    if !fuser.is_null() {
        drop(Box::from_raw(fuser));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(sdp_last_error()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn null_handles_are_reported() {
        let mut out = ptr::null_mut();
        let s = unsafe { sdp_fuser_new(ptr::null(), ptr::null(), ptr::null(), true, &mut out) };
        assert_eq!(s, SdpStatus::NullPointer);
        assert!(last_error().contains("skel"));
        assert_eq!(
            unsafe { sdp_fuser_step(ptr::null_mut(), ptr::null_mut()) },
            SdpStatus::NullPointer
        );
        assert_eq!(unsafe { sdp_fuser_pose_count(ptr::null()) }, 0);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let skel = sdp_skeleton_coco13();
        let mut cross = sdp_cross_params_default();
        cross.arm_length = 4;
        let mut out = ptr::null_mut();
        let s = unsafe { sdp_fuser_new(skel, ptr::null(), &cross, true, &mut out) };
        assert_eq!(s, SdpStatus::InvalidArgument);
        assert!(out.is_null());
        let mut fusion = sdp_fusion_params_default();
        fusion.topk = 0;
        let s = unsafe { sdp_fuser_new(skel, &fusion, ptr::null(), true, &mut out) };
        assert_eq!(s, SdpStatus::InvalidArgument);
        unsafe { sdp_skeleton_free(skel) };
    }

    #[test]
    fn defaults_mirror_core() {
        assert_eq!(
            CrossParams::from(sdp_cross_params_default()),
            CrossParams::default()
        );
        assert_eq!(
            FusionConfig::from(sdp_fusion_params_default()),
            FusionConfig::default()
        );
    }

    #[test]
    fn version_and_error_strings() {
        let v = unsafe { CStr::from_ptr(sdp_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
        let json = CString::new("{").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { sdp_skeleton_from_json(json.as_ptr(), &mut out) },
            SdpStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());
        let skel = sdp_skeleton_coco13();
        let mut idx = 0;
        let name = CString::new("left_knee").unwrap();
        assert_eq!(
            unsafe { sdp_skeleton_joint_index(skel, name.as_ptr(), &mut idx) },
            SdpStatus::Ok
        );
        assert!(last_error().is_empty());
        assert_eq!(unsafe { sdp_skeleton_joint_count(skel) }, 13);
        unsafe { sdp_skeleton_free(skel) };
    }
}
