//! Data-driven skeleton definitions and 2D keypoint types.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pixel, ViewId};

/// Largest per-joint surface-to-center offset accepted, meters.
pub const MAX_DEPTH_OFFSET: f64 = 0.15;

pub type JointIndex = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("duplicate joint name `{0}`")]
    DuplicateJoint(String),
    #[error("joint `{joint}`: field `{field}`: {reason}")]
    Joint {
        joint: String,
        field: &'static str,
        reason: String,
    },
    #[error("limb {index}: joint index {joint} out of range")]
    Limb { index: usize, joint: usize },
    #[error("`{field}` has {got} entries but there are {expected} joints")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("malformed skeleton document: {0}")]
    Parse(String),
}

/// Joint list, outlier-filter neighbor graph, per-joint depth offsets and limbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonDocument", into = "SkeletonDocument")]
pub struct SkeletonDefinition {
    name: String,
    joints: Vec<String>,
    neighbors: Vec<Vec<JointIndex>>,
    depth_offsets: Vec<f64>,
    limbs: Vec<(JointIndex, JointIndex)>,
}

/// On-disk form, field for field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonDocument {
    pub name: String,
    pub joints: Vec<String>,
    pub neighbors: Vec<Vec<JointIndex>>,
    pub depth_offsets: Vec<f64>,
    pub limbs: Vec<[JointIndex; 2]>,
}

impl TryFrom<SkeletonDocument> for SkeletonDefinition {
    type Error = SkeletonError;

    fn try_from(doc: SkeletonDocument) -> Result<Self, Self::Error> {
        SkeletonDefinition::new(
            doc.name,
            doc.joints,
            doc.neighbors,
            doc.depth_offsets,
            doc.limbs.into_iter().map(|[a, b]| (a, b)).collect(),
        )
    }
}

impl From<SkeletonDefinition> for SkeletonDocument {
    fn from(s: SkeletonDefinition) -> Self {
        Self {
            name: s.name,
            joints: s.joints,
            neighbors: s.neighbors,
            depth_offsets: s.depth_offsets,
            limbs: s.limbs.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

impl SkeletonDefinition {
    pub fn new(
        name: String,
        joints: Vec<String>,
        neighbors: Vec<Vec<JointIndex>>,
        depth_offsets: Vec<f64>,
        limbs: Vec<(JointIndex, JointIndex)>,
    ) -> Result<Self, SkeletonError> {
        let n = joints.len();
        if n == 0 {
            return Err(SkeletonError::Empty);
        }
        for (i, name) in joints.iter().enumerate() {
            if joints[..i].contains(name) {
                return Err(SkeletonError::DuplicateJoint(name.clone()));
            }
        }
        if neighbors.len() != n {
            return Err(SkeletonError::Length {
                field: "neighbors",
                got: neighbors.len(),
                expected: n,
            });
        }
        if depth_offsets.len() != n {
            return Err(SkeletonError::Length {
                field: "depth_offsets",
                got: depth_offsets.len(),
                expected: n,
            });
        }
        for (j, list) in neighbors.iter().enumerate() {
            let joint_err = |reason: String| SkeletonError::Joint {
                joint: joints[j].clone(),
                field: "neighbors",
                reason,
            };
            if list.is_empty() {
                return Err(joint_err("needs at least one neighbor".into()));
            }
            for &k in list {
                if k >= n {
                    return Err(joint_err(format!("index {k} out of range (0..{n})")));
                }
                if k == j {
                    return Err(joint_err("joint lists itself as a neighbor".into()));
                }
            }
        }
        for (j, &off) in depth_offsets.iter().enumerate() {
            if !(0.0..=MAX_DEPTH_OFFSET).contains(&off) {
                return Err(SkeletonError::Joint {
                    joint: joints[j].clone(),
                    field: "depth_offsets",
                    reason: format!("{off} outside [0, {MAX_DEPTH_OFFSET}] m"),
                });
            }
        }
        for (i, &(a, b)) in limbs.iter().enumerate() {
            for joint in [a, b] {
                if joint >= n {
                    return Err(SkeletonError::Limb { index: i, joint });
                }
            }
        }
        Ok(Self {
            name,
            joints,
            neighbors,
            depth_offsets,
            limbs,
        })
    }

    /// The 13-keypoint body skeleton: nose, shoulders, elbows, wrists, hips, knees, ankles.
    pub fn coco13() -> Self {
        use coco13::*;
        let joints = NAMES.iter().map(|s| s.to_string()).collect();
        let mut neighbors = vec![Vec::new(); 13];
        neighbors[NOSE] = vec![L_SHOULDER, R_SHOULDER];
        for (s, o, e, h) in [
            (L_SHOULDER, R_SHOULDER, L_ELBOW, L_HIP),
            (R_SHOULDER, L_SHOULDER, R_ELBOW, R_HIP),
        ] {
            neighbors[s] = vec![e, o, h];
        }
        for (e, s, w) in [
            (L_ELBOW, L_SHOULDER, L_WRIST),
            (R_ELBOW, R_SHOULDER, R_WRIST),
        ] {
            neighbors[e] = vec![s, w];
            neighbors[w] = vec![e];
        }
        for (h, o, k, s) in [
            (L_HIP, R_HIP, L_KNEE, L_SHOULDER),
            (R_HIP, L_HIP, R_KNEE, R_SHOULDER),
        ] {
            neighbors[h] = vec![k, o, s];
        }
        for (k, h, a) in [(L_KNEE, L_HIP, L_ANKLE), (R_KNEE, R_HIP, R_ANKLE)] {
            neighbors[k] = vec![h, a];
            neighbors[a] = vec![k];
        }

        let mut depth_offsets = vec![0.0; 13];
        depth_offsets[NOSE] = 0.01;
        for j in [L_SHOULDER, R_SHOULDER, L_KNEE, R_KNEE, L_ANKLE, R_ANKLE] {
            depth_offsets[j] = 0.03;
        }
        for j in [L_ELBOW, R_ELBOW] {
            depth_offsets[j] = 0.02;
        }
        for j in [L_WRIST, R_WRIST] {
            depth_offsets[j] = 0.01;
        }
        for j in [L_HIP, R_HIP] {
            depth_offsets[j] = 0.06;
        }

        let limbs = vec![
            (L_SHOULDER, L_ELBOW),
            (L_ELBOW, L_WRIST),
            (R_SHOULDER, R_ELBOW),
            (R_ELBOW, R_WRIST),
            (L_HIP, L_KNEE),
            (L_KNEE, L_ANKLE),
            (R_HIP, R_KNEE),
            (R_KNEE, R_ANKLE),
            (L_SHOULDER, L_HIP),
            (R_SHOULDER, R_HIP),
            (L_SHOULDER, R_SHOULDER),
            (L_HIP, R_HIP),
            (NOSE, L_SHOULDER),
            (NOSE, R_SHOULDER),
        ];
        Self::new("coco13".into(), joints, neighbors, depth_offsets, limbs)
            .expect("builtin skeleton is valid")
    }

    /// Parses and validates a JSON skeleton document.
    pub fn from_json(text: &str) -> Result<Self, SkeletonError> {
        let doc: SkeletonDocument =
            serde_json::from_str(text).map_err(|e| SkeletonError::Parse(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joints
    }

    pub fn joint_name(&self, j: JointIndex) -> &str {
        &self.joints[j]
    }

    pub fn joint_index(&self, name: &str) -> Option<JointIndex> {
        self.joints.iter().position(|n| n == name)
    }

    pub fn neighbors(&self, j: JointIndex) -> &[JointIndex] {
        &self.neighbors[j]
    }

    pub fn depth_offset(&self, j: JointIndex) -> f64 {
        self.depth_offsets[j]
    }

    pub fn depth_offsets(&self) -> &[f64] {
        &self.depth_offsets
    }

    pub fn limbs(&self) -> &[(JointIndex, JointIndex)] {
        &self.limbs
    }

    /// Copy with different per-joint offsets (validated).
    pub fn with_depth_offsets(&self, offsets: Vec<f64>) -> Result<Self, SkeletonError> {
        Self::new(
            self.name.clone(),
            self.joints.clone(),
            self.neighbors.clone(),
            offsets,
            self.limbs.clone(),
        )
    }
}

/// Joint indices of the builtin 13-joint skeleton.
pub mod coco13 {
    use super::JointIndex;

    pub const NOSE: JointIndex = 0;
    pub const L_SHOULDER: JointIndex = 1;
    pub const R_SHOULDER: JointIndex = 2;
    pub const L_ELBOW: JointIndex = 3;
    pub const R_ELBOW: JointIndex = 4;
    pub const L_WRIST: JointIndex = 5;
    pub const R_WRIST: JointIndex = 6;
    pub const L_HIP: JointIndex = 7;
    pub const R_HIP: JointIndex = 8;
    pub const L_KNEE: JointIndex = 9;
    pub const R_KNEE: JointIndex = 10;
    pub const L_ANKLE: JointIndex = 11;
    pub const R_ANKLE: JointIndex = 12;

    pub const NAMES: [&str; 13] = [
        "nose",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
    ];
}

/// One detected 2D joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub joint: JointIndex,
    pub pixel: Pixel,
    pub confidence: f64,
}

/// One person's detections in one view. Absent joints were not detected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pose2D {
    pub view_id: ViewId,
    pub keypoints: BTreeMap<JointIndex, Keypoint2D>,
}

impl Pose2D {
    pub fn new(view_id: ViewId) -> Self {
        Self {
            view_id,
            keypoints: BTreeMap::new(),
        }
    }

    /// Inserts a keypoint, replacing any previous one for the same joint.
    pub fn insert(&mut self, kp: Keypoint2D) {
        self.keypoints.insert(kp.joint, kp);
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Drops keypoints below a confidence threshold.
    pub fn retain_confident(&mut self, min_confidence: f64) {
        self.keypoints
            .retain(|_, kp| kp.confidence >= min_confidence);
    }
}

#[cfg(test)]
mod tests {
    use super::coco13::*;
    use super::*;

    #[test]
    fn coco13_shape() {
        let s = SkeletonDefinition::coco13();
        assert_eq!(s.joint_count(), 13);
        let mut knee = s.neighbors(L_KNEE).to_vec();
        knee.sort();
        assert_eq!(knee, vec![L_HIP, L_ANKLE]);
        assert_eq!(s.neighbors(R_KNEE), &[R_HIP, R_ANKLE]);
        assert_eq!(s.depth_offset(L_SHOULDER), 0.03);
        assert_eq!(s.depth_offset(R_KNEE), 0.03);
        assert_eq!(s.depth_offset(L_WRIST), 0.01);
        assert_eq!(s.neighbors(L_WRIST), &[L_ELBOW]);
        assert_eq!(s.neighbors(NOSE), &[L_SHOULDER, R_SHOULDER]);
        assert_eq!(s.limbs().len(), 14);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let s = SkeletonDefinition::coco13();
        let back = SkeletonDefinition::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn neighbor_out_of_range_names_joint() {
        let mut doc: SkeletonDocument = SkeletonDefinition::coco13().into();
        doc.neighbors[L_ELBOW] = vec![L_SHOULDER, 42];
        let err = SkeletonDefinition::try_from(doc).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("left_elbow") && msg.contains("neighbors"),
            "{msg}"
        );
    }

    #[test]
    fn self_neighbor_and_empty_neighbors_rejected() {
        let mut doc: SkeletonDocument = SkeletonDefinition::coco13().into();
        doc.neighbors[NOSE] = vec![NOSE];
        assert!(SkeletonDefinition::try_from(doc).is_err());
        let mut doc: SkeletonDocument = SkeletonDefinition::coco13().into();
        doc.neighbors[NOSE].clear();
        assert!(SkeletonDefinition::try_from(doc).is_err());
    }

    #[test]
    fn offset_bounds_enforced() {
        let s = SkeletonDefinition::coco13();
        let mut offs = s.depth_offsets().to_vec();
        offs[R_HIP] = 0.2;
        let msg = s.with_depth_offsets(offs).unwrap_err().to_string();
        assert!(msg.contains("right_hip"), "{msg}");
        assert!(s.with_depth_offsets(vec![0.0; 13]).is_ok());
    }

    #[test]
    fn bad_limb_and_lengths_rejected() {
        let mut doc: SkeletonDocument = SkeletonDefinition::coco13().into();
        doc.limbs.push([0, 13]);
        assert!(matches!(
            SkeletonDefinition::try_from(doc),
            Err(SkeletonError::Limb { joint: 13, .. })
        ));
        let mut doc: SkeletonDocument = SkeletonDefinition::coco13().into();
        doc.depth_offsets.pop();
        assert!(matches!(
            SkeletonDefinition::try_from(doc),
            Err(SkeletonError::Length { .. })
        ));
        assert!(SkeletonDefinition::from_json("{\"name\": 3}").is_err());
    }

    #[test]
    fn pose2d_keeps_one_keypoint_per_joint() {
        let mut p = Pose2D::new(2);
        p.insert(Keypoint2D {
            joint: 3,
            pixel: Pixel::new(1.0, 2.0),
            confidence: 0.4,
        });
        p.insert(Keypoint2D {
            joint: 3,
            pixel: Pixel::new(5.0, 6.0),
            confidence: 0.9,
        });
        assert_eq!(p.len(), 1);
        assert_eq!(p.keypoints[&3].pixel, Pixel::new(5.0, 6.0));
        p.retain_confident(0.95);
        assert!(p.is_empty());
    }
}
