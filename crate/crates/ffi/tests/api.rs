use std::ptr;

use depthpose::pipeline::{FrameBundle, Pipeline, PipelineConfig};
use depthpose::synth::{self, SceneConfig};
use depthpose::SkeletonDefinition;
use depthpose_ffi::*;

fn camera(c: &depthpose::CameraCalibration) -> SdpCamera {
    let mut rotation = [0.0; 9];
    for r in 0..3 {
        for k in 0..3 {
            rotation[3 * r + k] = c.rotation[(r, k)];
        }
    }
    SdpCamera {
        view_id: c.view_id,
        width: c.width,
        height: c.height,
        fx: c.fx,
        fy: c.fy,
        cx: c.cx,
        cy: c.cy,
        rotation,
        translation: [c.translation.x, c.translation.y, c.translation.z],
    }
}

fn keypoint_block(poses: &[depthpose::Pose2D], joints: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; poses.len() * joints * 3];
    for (i, pose) in poses.iter().enumerate() {
        for (j, kp) in &pose.keypoints {
            let at = (i * joints + j) * 3;
            out[at..at + 3].copy_from_slice(&[kp.pixel.u, kp.pixel.v, kp.confidence]);
        }
    }
    out
}

#[test]
fn matches_the_core_pipeline() {
    let scene = SceneConfig {
        seed: 3,
        orbit_rate: 0.02,
        ..Default::default()
    };
    let skel = SkeletonDefinition::coco13();
    let frames: Vec<_> = (0..6)
        .map(|f| synth::synthesize_frame(&scene, &skel, f).unwrap())
        .collect();
    let mut core = Pipeline::new(
        PipelineConfig::default(),
        skel.clone(),
        &frames[0].calibrations,
    )
    .unwrap();

    unsafe {
        let handle = sdp_skeleton_coco13();
        let mut fuser = ptr::null_mut();
        assert_eq!(
            sdp_fuser_new(handle, ptr::null(), ptr::null(), true, &mut fuser),
            SdpStatus::Ok
        );
        sdp_skeleton_free(handle);
        for c in &frames[0].calibrations {
            assert_eq!(sdp_fuser_set_camera(fuser, &camera(c)), SdpStatus::Ok);
        }
        for frame in &frames {
            let expected = core
                .process(&FrameBundle::from_synthetic(frame))
                .unwrap()
                .poses;
            // queue views in reverse to show order does not matter
            for v in (0..frame.depth.len()).rev() {
                let img = &frame.depth[v];
                let kps = keypoint_block(&frame.detections[v], 13);
                let status = sdp_fuser_add_view(
                    fuser,
                    img.view_id,
                    img.values().as_ptr(),
                    img.width(),
                    img.height(),
                    kps.as_ptr(),
                    frame.detections[v].len(),
                );
                assert_eq!(status, SdpStatus::Ok);
            }
            let mut count = 0;
            assert_eq!(sdp_fuser_step(fuser, &mut count), SdpStatus::Ok);
            assert_eq!(count, expected.len());
            for (i, want) in expected.iter().enumerate() {
                let mut id = 0;
                let mut xyz = [0.0; 39];
                let mut support = [0u32; 13];
                assert_eq!(
                    sdp_fuser_get_pose(fuser, i, &mut id, xyz.as_mut_ptr(), support.as_mut_ptr()),
                    SdpStatus::Ok
                );
                assert_eq!(id, want.person_id);
                for (j, fj) in want.joints.iter().enumerate() {
                    match fj {
                        Some(fj) => {
                            assert_eq!(&xyz[3 * j..3 * j + 3], fj.position.coords.as_slice());
                            assert_eq!(support[j] as usize, fj.support);
                        }
                        None => {
                            assert!(xyz[3 * j].is_nan());
                            assert_eq!(support[j], 0);
                        }
                    }
                }
            }
            let mut id = 0;
            let mut xyz = [0.0; 39];
            let s = sdp_fuser_get_pose(
                fuser,
                expected.len(),
                &mut id,
                xyz.as_mut_ptr(),
                ptr::null_mut(),
            );
            assert_eq!(s, SdpStatus::OutOfRange);
        }
        assert_eq!(sdp_fuser_track_count(fuser), core.tracker().tracks().len());
        sdp_fuser_free(fuser);
    }
}

#[test]
fn view_errors() {
    unsafe {
        let skel = sdp_skeleton_coco13();
        let mut fuser = ptr::null_mut();
        assert_eq!(
            sdp_fuser_new(skel, ptr::null(), ptr::null(), true, &mut fuser),
            SdpStatus::Ok
        );
        let depth = [1.0f32; 4 * 3];
        assert_eq!(
            sdp_fuser_add_view(fuser, 7, depth.as_ptr(), 4, 3, ptr::null(), 0),
            SdpStatus::UnknownView
        );
        let cam = SdpCamera {
            view_id: 7,
            width: 4,
            height: 3,
            fx: 10.0,
            fy: 10.0,
            cx: 2.0,
            cy: 1.5,
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
        };
        assert_eq!(sdp_fuser_set_camera(fuser, &cam), SdpStatus::Ok);
        assert_eq!(
            sdp_fuser_add_view(fuser, 7, depth.as_ptr(), 5, 3, ptr::null(), 0),
            SdpStatus::InvalidArgument
        );
        assert_eq!(
            sdp_fuser_add_view(fuser, 7, depth.as_ptr(), 4, 3, ptr::null(), 1),
            SdpStatus::NullPointer
        );
        let bad_rot = SdpCamera {
            rotation: [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ..cam
        };
        assert_eq!(
            sdp_fuser_set_camera(fuser, &bad_rot),
            SdpStatus::InvalidArgument
        );
        assert_eq!(
            sdp_fuser_add_view(fuser, 7, depth.as_ptr(), 4, 3, ptr::null(), 0),
            SdpStatus::Ok
        );
        let mut count = 9;
        assert_eq!(sdp_fuser_step(fuser, &mut count), SdpStatus::Ok);
        assert_eq!(count, 0);
        sdp_fuser_free(fuser);
        sdp_skeleton_free(skel);
    }
}
