//! On-disk formats: calibration, keypoints, depth images, dataset manifests,
//! ground truth and fused predictions.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{DepthError, DepthImage};
use crate::geometry::{CameraCalibration, GeometryError, Pixel, Point3, ViewId};
use crate::metrics::JointSet;
use crate::skeleton::{Keypoint2D, Pose2D, SkeletonDefinition, SkeletonError};
use crate::tracking::{FusedPose3D, PersonId};

/// Magic bytes of the raw float depth format.
pub const RAW_DEPTH_MAGIC: &[u8; 4] = b"SDPD";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Skeleton {
        path: PathBuf,
        #[source]
        source: SkeletonError,
    },
    #[error("{path}: {source}")]
    Geometry {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: {source}")]
    Depth {
        path: PathBuf,
        #[source]
        source: DepthError,
    },
}

fn invalid(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------- calibration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtrinsicsConvention {
    /// `p_world = R·p_cam + t`.
    #[default]
    CameraToWorld,
    /// `p_cam = R·p_world + t`.
    WorldToCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewCalibrationDoc {
    pub view_id: ViewId,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 3×3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationDoc {
    #[serde(default)]
    pub convention: ExtrinsicsConvention,
    pub views: Vec<ViewCalibrationDoc>,
}

impl CalibrationDoc {
    pub fn from_calibrations(calibs: &[CameraCalibration]) -> Self {
        Self {
            convention: ExtrinsicsConvention::CameraToWorld,
            views: calibs
                .iter()
                .map(|c| {
                    let r = &c.rotation;
                    ViewCalibrationDoc {
                        view_id: c.view_id,
                        width: c.width,
                        height: c.height,
                        fx: c.fx,
                        fy: c.fy,
                        cx: c.cx,
                        cy: c.cy,
                        rotation: [
                            r[(0, 0)],
                            r[(0, 1)],
                            r[(0, 2)],
                            r[(1, 0)],
                            r[(1, 1)],
                            r[(1, 2)],
                            r[(2, 0)],
                            r[(2, 1)],
                            r[(2, 2)],
                        ],
                        translation: [c.translation.x, c.translation.y, c.translation.z],
                        distortion: None,
                    }
                })
                .collect(),
        }
    }
}

/// Loads calibrations and converts them to the camera→world convention.
/// `invert` flips the declared convention (for files that mislabel it).
pub fn read_calibration(path: &Path, invert: bool) -> Result<Vec<CameraCalibration>, FormatError> {
    let doc: CalibrationDoc = read_json(path)?;
    let mut out: Vec<CameraCalibration> = Vec::with_capacity(doc.views.len());
    for v in &doc.views {
        if out.iter().any(|c| c.view_id == v.view_id) {
            return Err(invalid(path, format!("duplicate view_id {}", v.view_id)));
        }
        if v.distortion
            .as_ref()
            .is_some_and(|d| d.iter().any(|&k| k != 0.0))
        {
            log::warn!(
                "{}: view {} has distortion coefficients; they are ignored (pinhole model)",
                path.display(),
                v.view_id
            );
        }
        let mut calib = CameraCalibration::new(
            v.view_id,
            v.width,
            v.height,
            v.fx,
            v.fy,
            v.cx,
            v.cy,
            Matrix3::from_row_slice(&v.rotation),
            Vector3::from_column_slice(&v.translation),
        )
        .map_err(|source| FormatError::Geometry {
            path: path.to_path_buf(),
            source,
        })?;
        let world_to_camera = doc.convention == ExtrinsicsConvention::WorldToCamera;
        if world_to_camera != invert {
            calib.invert_extrinsics();
        }
        out.push(calib);
    }
    Ok(out)
}

pub fn write_calibration(path: &Path, calibs: &[CameraCalibration]) -> Result<(), FormatError> {
    write_json(path, &CalibrationDoc::from_calibrations(calibs))
}

pub fn read_skeleton(path: &Path) -> Result<SkeletonDefinition, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    SkeletonDefinition::from_json(&text).map_err(|source| FormatError::Skeleton {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------- keypoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointPersonDoc {
    /// Joint name → `[u, v, confidence]`.
    pub keypoints: BTreeMap<String, [f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointFileDoc {
    pub frame_index: u64,
    pub view_id: ViewId,
    pub persons: Vec<KeypointPersonDoc>,
}

pub fn keypoints_to_doc(
    frame_index: u64,
    view_id: ViewId,
    poses: &[Pose2D],
    skel: &SkeletonDefinition,
) -> KeypointFileDoc {
    KeypointFileDoc {
        frame_index,
        view_id,
        persons: poses
            .iter()
            .map(|p| KeypointPersonDoc {
                keypoints: p
                    .keypoints
                    .values()
                    .map(|k| {
                        (
                            skel.joint_name(k.joint).to_string(),
                            [k.pixel.u, k.pixel.v, k.confidence],
                        )
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn read_keypoints(
    path: &Path,
    view_id: ViewId,
    skel: &SkeletonDefinition,
) -> Result<Vec<Pose2D>, FormatError> {
    let doc: KeypointFileDoc = read_json(path)?;
    if doc.view_id != view_id {
        return Err(invalid(
            path,
            format!("expected view {view_id}, file says {}", doc.view_id),
        ));
    }
    doc.persons
        .iter()
        .map(|person| {
            let mut pose = Pose2D::new(view_id);
            for (name, &[u, v, c]) in &person.keypoints {
                let joint = skel
                    .joint_index(name)
                    .ok_or_else(|| invalid(path, format!("unknown joint `{name}`")))?;
                if !(u.is_finite() && v.is_finite() && c.is_finite()) {
                    return Err(invalid(path, format!("non-finite keypoint `{name}`")));
                }
                pose.insert(Keypoint2D {
                    joint,
                    pixel: Pixel::new(u, v),
                    confidence: c,
                });
            }
            Ok(pose)
        })
        .collect()
}

// ---------------------------------------------------------------- depth

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormat {
    /// 16-bit grayscale PNG in millimeters, 0 = invalid.
    #[default]
    Png,
    /// `SDPD`, u32 width, u32 height, then f32 meters (little endian).
    Raw,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Png => "png",
            DepthFormat::Raw => "sdpd",
        }
    }
}

pub fn write_depth(path: &Path, img: &DepthImage, format: DepthFormat) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        DepthFormat::Png => {
            let mut enc = png::Encoder::new(&mut w, img.width(), img.height());
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut bytes = Vec::with_capacity(img.values().len() * 2);
            for &d in img.values() {
                let mm = (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
                bytes.extend_from_slice(&mm.to_be_bytes());
            }
            let mut writer = enc
                .write_header()
                .map_err(|e| invalid(path, e.to_string()))?;
            writer
                .write_image_data(&bytes)
                .map_err(|e| invalid(path, e.to_string()))?;
        }
        DepthFormat::Raw => {
            w.write_all(RAW_DEPTH_MAGIC).map_err(io_err(path))?;
            w.write_all(&img.width().to_le_bytes())
                .map_err(io_err(path))?;
            w.write_all(&img.height().to_le_bytes())
                .map_err(io_err(path))?;
            for &d in img.values() {
                w.write_all(&d.to_le_bytes()).map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a depth image; the format follows the file extension.
pub fn read_depth(path: &Path, view_id: ViewId) -> Result<DepthImage, FormatError> {
    let depth_err = |source| FormatError::Depth {
        path: path.to_path_buf(),
        source,
    };
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("png") {
        let file = File::open(path).map_err(io_err(path))?;
        let reader = png::Decoder::new(BufReader::new(file));
        let mut reader = reader
            .read_info()
            .map_err(|e| invalid(path, e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| invalid(path, "image too large"))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| invalid(path, e.to_string()))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen
        {
            return Err(invalid(path, "depth PNG must be 16-bit grayscale"));
        }
        let values = buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 1000.0)
            .collect();
        DepthImage::new(view_id, info.width, info.height, values).map_err(depth_err)
    } else {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
        if bytes.len() < 12 || &bytes[..4] != RAW_DEPTH_MAGIC {
            return Err(invalid(path, "not a raw depth file"));
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        let h = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        let body = &bytes[12..];
        if body.len() != w as usize * h as usize * 4 {
            return Err(invalid(
                path,
                format!("expected {}x{} floats, got {} bytes", w, h, body.len()),
            ));
        }
        let values = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        DepthImage::new(view_id, w, h, values).map_err(depth_err)
    }
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub view_id: ViewId,
    /// Paths are relative to the manifest's directory.
    pub depth: PathBuf,
    pub keypoints: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_index: u64,
    pub views: Vec<ViewEntry>,
}

/// Unsynchronized recordings: one list per camera, paired by timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamEntry {
    pub view_id: ViewId,
    pub samples: Vec<ViewEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub calibration: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub streams: Vec<StreamEntry>,
}

pub const MANIFEST_NAME: &str = "dataset.json";

/// Nearest-neighbor pairing against the first stream. A frame is kept only if
/// every other stream has a sample within `window_ms` of the reference sample.
pub fn pair_streams(streams: &[StreamEntry], window_ms: f64) -> (Vec<FrameEntry>, usize) {
    let Some((reference, others)) = streams.split_first() else {
        return (Vec::new(), 0);
    };
    let mut frames = Vec::new();
    let mut dropped = 0;
    for (i, r) in reference.samples.iter().enumerate() {
        let Some(t) = r.timestamp_ms else {
            dropped += 1;
            continue;
        };
        let mut views = vec![r.clone()];
        for s in others {
            let best = s
                .samples
                .iter()
                .filter_map(|e| e.timestamp_ms.map(|ts| ((ts - t).abs(), e)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match best {
                Some((dt, e)) if dt <= window_ms => views.push(e.clone()),
                _ => {}
            }
        }
        if views.len() == streams.len() {
            frames.push(FrameEntry {
                frame_index: i as u64,
                views,
            });
        } else {
            dropped += 1;
        }
    }
    (frames, dropped)
}

// ---------------------------------------------------------------- ground truth / predictions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonDoc {
    pub person_id: PersonId,
    /// Meters, skeleton order; `null` = absent.
    pub joints: Vec<Option<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

impl PersonDoc {
    pub fn joint_set(&self) -> JointSet {
        self.joints
            .iter()
            .map(|j| j.map(|[x, y, z]| Point3::new(x, y, z)))
            .collect()
    }

    pub fn from_joint_set(person_id: PersonId, joints: &[Option<Point3>]) -> Self {
        Self {
            person_id,
            joints: joints.iter().map(|j| j.map(|p| [p.x, p.y, p.z])).collect(),
            views: None,
            support: None,
        }
    }

    pub fn from_fused(pose: &FusedPose3D) -> Self {
        Self {
            person_id: pose.person_id,
            joints: pose
                .joints
                .iter()
                .map(|j| j.map(|f| [f.position.x, f.position.y, f.position.z]))
                .collect(),
            views: Some(pose.views),
            support: Some(
                pose.joints
                    .iter()
                    .map(|j| j.map_or(0, |f| f.support))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePosesDoc {
    pub frame_index: u64,
    pub persons: Vec<PersonDoc>,
}

/// Ground truth, or one frame of predictions when `frames` has a single entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesDoc {
    pub joint_names: Vec<String>,
    pub frames: Vec<FramePosesDoc>,
}

impl PosesDoc {
    pub fn check_joints(&self, skel: &SkeletonDefinition, path: &Path) -> Result<(), FormatError> {
        if self.joint_names != skel.joint_names() {
            return Err(invalid(
                path,
                format!(
                    "joint set {:?} does not match skeleton `{}` {:?}",
                    self.joint_names,
                    skel.name(),
                    skel.joint_names()
                ),
            ));
        }
        for f in &self.frames {
            for p in &f.persons {
                if p.joints.len() != self.joint_names.len() {
                    return Err(invalid(
                        path,
                        format!(
                            "frame {} person {}: wrong joint count",
                            f.frame_index, p.person_id
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub frame_index: u64,
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkippedFrame {
    pub frame_index: u64,
    pub reason: String,
}

/// Manifest of a `run` output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputIndex {
    pub joint_names: Vec<String>,
    pub frames: Vec<IndexEntry>,
    pub skipped: Vec<SkippedFrame>,
}

pub const INDEX_NAME: &str = "index.json";

pub fn frame_file_name(frame_index: u64) -> String {
    format!("frame_{frame_index:06}.json")
}

/// Loads every prediction frame listed in `dir/index.json`. A missing index
/// means no predictions.
pub fn read_predictions(dir: &Path) -> Result<PosesDoc, FormatError> {
    let index_path = dir.join(INDEX_NAME);
    if !index_path.exists() {
        return Ok(PosesDoc {
            joint_names: Vec::new(),
            frames: Vec::new(),
        });
    }
    let index: OutputIndex = read_json(&index_path)?;
    let mut frames = Vec::with_capacity(index.frames.len());
    for e in &index.frames {
        let path = dir.join(&e.file);
        let doc: PosesDoc = read_json(&path)?;
        if doc.joint_names != index.joint_names {
            return Err(invalid(&path, "joint names differ from index"));
        }
        frames.extend(doc.frames);
    }
    Ok(PosesDoc {
        joint_names: index.joint_names,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    #[test]
    fn depth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = DepthImage::empty(3, 7, 5);
        img.set(1, 2, 1.234);
        img.set(6, 4, 4.5);
        let raw = dir.path().join("d.sdpd");
        write_depth(&raw, &img, DepthFormat::Raw).unwrap();
        assert_eq!(read_depth(&raw, 3).unwrap(), img);
        let png = dir.path().join("d.png");
        write_depth(&png, &img, DepthFormat::Png).unwrap();
        let back = read_depth(&png, 3).unwrap();
        assert_eq!(back.get(1, 2), 1.234);
        assert_eq!(back.get(6, 4), 4.5);
        assert_eq!(back.valid_count(), 2);
        fs::write(&raw, b"SDPD\x02\0\0\0\x02\0\0\0").unwrap();
        assert!(read_depth(&raw, 3).is_err());
    }

    #[test]
    fn calibration_conventions() {
        let dir = tempfile::tempdir().unwrap();
        let t = RigidTransform::from_axis_angle(
            Vector3::new(0.1, -0.4, 0.3),
            Vector3::new(1.0, 2.0, 0.5),
        );
        let c = t.apply_camera(&CameraCalibration::identity(
            4, 640, 480, 500.0, 320.0, 240.0,
        ));
        let path = dir.path().join("calib.json");
        write_calibration(&path, std::slice::from_ref(&c)).unwrap();
        let back = read_calibration(&path, false).unwrap();
        assert!((back[0].rotation - c.rotation).norm() < 1e-15);
        assert!((back[0].translation - c.translation).norm() < 1e-15);

        // the same camera described world→camera
        let mut doc = CalibrationDoc::from_calibrations(std::slice::from_ref(&c));
        let mut inv = c.clone();
        inv.invert_extrinsics();
        doc.views = CalibrationDoc::from_calibrations(&[inv]).views;
        doc.convention = ExtrinsicsConvention::WorldToCamera;
        write_json(&path, &doc).unwrap();
        let back = read_calibration(&path, false).unwrap();
        assert!((back[0].translation - c.translation).norm() < 1e-12);
        let flipped = read_calibration(&path, true).unwrap();
        assert!((flipped[0].translation - c.translation).norm() > 0.1);
    }

    #[test]
    fn keypoints_round_trip_and_reject_unknown_joint() {
        let dir = tempfile::tempdir().unwrap();
        let skel = SkeletonDefinition::coco13();
        let mut pose = Pose2D::new(2);
        pose.insert(Keypoint2D {
            joint: 4,
            pixel: Pixel::new(10.5, 20.25),
            confidence: 0.7,
        });
        let path = dir.path().join("k.json");
        write_json(
            &path,
            &keypoints_to_doc(0, 2, std::slice::from_ref(&pose), &skel),
        )
        .unwrap();
        assert_eq!(read_keypoints(&path, 2, &skel).unwrap(), vec![pose]);
        assert!(read_keypoints(&path, 1, &skel).is_err());
        fs::write(
            &path,
            r#"{"frame_index":0,"view_id":2,"persons":[{"keypoints":{"tail":[1,2,1]}}]}"#,
        )
        .unwrap();
        let err = read_keypoints(&path, 2, &skel).unwrap_err().to_string();
        assert!(err.contains("tail"), "{err}");
    }

    #[test]
    fn pairing_window() {
        let entry = |v: u32, t: f64| ViewEntry {
            view_id: v,
            depth: format!("d{v}_{t}").into(),
            keypoints: "k".into(),
            timestamp_ms: Some(t),
        };
        let streams = vec![
            StreamEntry {
                view_id: 0,
                samples: vec![entry(0, 0.0), entry(0, 100.0), entry(0, 200.0)],
            },
            StreamEntry {
                view_id: 1,
                samples: vec![entry(1, 10.0), entry(1, 170.0), entry(1, 260.0)],
            },
        ];
        let (frames, dropped) = pair_streams(&streams, 50.0);
        assert_eq!(dropped, 1);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].views[1].timestamp_ms, Some(10.0));
        assert_eq!(frames[1].frame_index, 2);
        assert_eq!(frames[1].views[1].timestamp_ms, Some(170.0));
    }
}
