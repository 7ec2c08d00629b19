//! Association of per-view proposals to persons, neighbor-center outlier
//! filtering, and top-k fusion into final poses.
//!
//! Per frame: proposals are matched greedily to the tracks of the previous
//! frame, left-overs are clustered into new persons, every group is filtered
//! and fused, and the track table is aged.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::PoseProposal3D;
use crate::geometry::{Point3, RigidTransform, ViewId};
use crate::skeleton::SkeletonDefinition;

pub type PersonId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionConfigError {
    #[error("{0} must be positive and finite")]
    Threshold(&'static str),
    #[error("{0} must be at least 1")]
    Count(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Largest pose distance (m) at which a proposal may join an existing track.
    pub match_threshold: f64,
    /// Largest pairwise pose distance (m) inside a newly created person.
    pub new_person_cluster_threshold: f64,
    /// Unmatched tracks are removed once they have missed this many frames.
    pub drop_after: u32,
    /// Outlier filter radius around the neighbor center (m).
    pub limb_threshold: f64,
    pub topk: usize,
    /// Shared joints required for two poses to be comparable.
    pub min_shared_joints: usize,
    /// Surviving proposals required before a joint is output.
    pub min_support: usize,
    /// Proposals with fewer joints are ignored: they cannot be compared with any pose.
    pub min_proposal_joints: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            match_threshold: 0.8,
            new_person_cluster_threshold: 0.8,
            drop_after: 10,
            limb_threshold: 0.5,
            topk: 3,
            min_shared_joints: 3,
            min_support: 1,
            min_proposal_joints: 3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionConfigError> {
        for (name, v) in [
            ("match_threshold", self.match_threshold),
            (
                "new_person_cluster_threshold",
                self.new_person_cluster_threshold,
            ),
            ("limb_threshold", self.limb_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FusionConfigError::Threshold(name));
            }
        }
        for (name, v) in [
            ("topk", self.topk),
            ("drop_after", self.drop_after as usize),
            ("min_shared_joints", self.min_shared_joints),
            ("min_support", self.min_support),
            ("min_proposal_joints", self.min_proposal_joints),
        ] {
            if v < 1 {
                return Err(FusionConfigError::Count(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedJoint {
    pub position: Point3,
    /// Number of proposals averaged into this joint.
    pub support: usize,
}

/// Final pose of one person in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPose3D {
    pub person_id: PersonId,
    pub joints: Vec<Option<FusedJoint>>,
    /// Number of views that contributed at least one joint.
    pub views: usize,
}

impl FusedPose3D {
    pub fn positions(&self) -> Vec<Option<Point3>> {
        self.joints.iter().map(|j| j.map(|f| f.position)).collect()
    }

    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack {
    pub person_id: PersonId,
    pub last_pose: FusedPose3D,
    pub missed_frames: u32,
}

/// Mean Euclidean distance over joints present in both poses, or `None`
/// when fewer than `min_shared` joints are shared.
pub fn pose_distance(a: &[Option<Point3>], b: &[Option<Point3>], min_shared: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (pa, pb) in a.iter().zip(b) {
        if let (Some(pa), Some(pb)) = (pa, pb) {
            sum += (pa - pb).norm();
            shared += 1;
        }
    }
    (shared >= min_shared.max(1)).then(|| sum / shared as f64)
}

/// Where a proposal goes after association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Track(PersonId),
    /// Index of a new-person cluster, numbered in order of first member.
    New(usize),
}

fn key(p: &PoseProposal3D) -> (ViewId, usize) {
    (p.source_view, p.detection)
}

fn cmp_dist(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Greedy global association of proposals to tracks, then greedy clustering of
/// the left-overs into new persons. Returns one target per input proposal.
pub fn associate(
    proposals: &[PoseProposal3D],
    tracks: &[PersonTrack],
    cfg: &FusionConfig,
) -> Vec<Target> {
    let positions: Vec<Vec<Option<Point3>>> = proposals.iter().map(|p| p.positions()).collect();
    let mut target: Vec<Option<Target>> = vec![None; proposals.len()];

    // proposal ↔ track
    let track_positions: Vec<Vec<Option<Point3>>> =
        tracks.iter().map(|t| t.last_pose.positions()).collect();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, pp) in positions.iter().enumerate() {
        for (k, tp) in track_positions.iter().enumerate() {
            if let Some(d) = pose_distance(pp, tp, cfg.min_shared_joints) {
                if d < cfg.match_threshold {
                    edges.push((d, i, k));
                }
            }
        }
    }
    edges.sort_by(|a, b| {
        cmp_dist(a.0, b.0)
            .then_with(|| key(&proposals[a.1]).cmp(&key(&proposals[b.1])))
            .then_with(|| tracks[a.2].person_id.cmp(&tracks[b.2].person_id))
    });
    let mut views_taken: Vec<BTreeSet<ViewId>> = vec![BTreeSet::new(); tracks.len()];
    for (_, i, k) in edges {
        if target[i].is_some() || views_taken[k].contains(&proposals[i].source_view) {
            continue;
        }
        views_taken[k].insert(proposals[i].source_view);
        target[i] = Some(Target::Track(tracks[k].person_id));
    }

    // left-overs → new persons. Complete linkage over comparable pairs: a merge
    // needs one close pair and no comparable pair beyond the threshold; pairs
    // without enough shared joints neither link nor block.
    let mut rest: Vec<usize> = (0..proposals.len())
        .filter(|&i| target[i].is_none())
        .collect();
    rest.sort_by_key(|&i| key(&proposals[i]));
    let n = rest.len();
    let mut far = vec![false; n * n];
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let (i, j) = (rest[a], rest[b]);
            if proposals[i].source_view == proposals[j].source_view {
                continue;
            }
            if let Some(d) = pose_distance(&positions[i], &positions[j], cfg.min_shared_joints) {
                if d < cfg.new_person_cluster_threshold {
                    pairs.push((d, a, b));
                } else {
                    far[a * n + b] = true;
                    far[b * n + a] = true;
                }
            }
        }
    }
    pairs.sort_by(|x, y| cmp_dist(x.0, y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut cluster_of: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|a| vec![a]).collect();
    for (_, a, b) in pairs {
        let (ca, cb) = (cluster_of[a], cluster_of[b]);
        if ca == cb {
            continue;
        }
        let views_a: BTreeSet<ViewId> = members[ca]
            .iter()
            .map(|&m| proposals[rest[m]].source_view)
            .collect();
        let disjoint = members[cb]
            .iter()
            .all(|&m| !views_a.contains(&proposals[rest[m]].source_view));
        let linked = members[ca]
            .iter()
            .all(|&x| members[cb].iter().all(|&y| !far[x * n + y]));
        if disjoint && linked {
            let (keep, gone) = (ca.min(cb), ca.max(cb));
            let moved = std::mem::take(&mut members[gone]);
            for &m in &moved {
                cluster_of[m] = keep;
            }
            members[keep].extend(moved);
        }
    }
    // clusters are numbered by their smallest member, which is their index in `members`
    let mut next = 0;
    let mut number = vec![usize::MAX; n];
    for a in 0..n {
        let c = cluster_of[a];
        if number[c] == usize::MAX {
            number[c] = next;
            next += 1;
        }
        target[rest[a]] = Some(Target::New(number[c]));
    }
    target
        .into_iter()
        .map(|t| t.expect("every proposal assigned"))
        .collect()
}

/// Mean position of every joint over the group, ignoring absent instances.
fn joint_means(group: &[PoseProposal3D], joint_count: usize) -> Vec<Option<Point3>> {
    (0..joint_count)
        .map(|j| {
            let mut sum = nalgebra::Vector3::zeros();
            let mut n = 0usize;
            for p in group {
                if let Some(pos) = p.position(j) {
                    sum += pos.coords;
                    n += 1;
                }
            }
            (n > 0).then(|| Point3::from(sum / n as f64))
        })
        .collect()
}

/// Center of a joint's neighbors within the group: the mean of the neighbors'
/// group means. `None` if no neighbor is present anywhere in the group.
pub fn neighbor_centers(
    group: &[PoseProposal3D],
    skel: &SkeletonDefinition,
) -> Vec<Option<Point3>> {
    let means = joint_means(group, skel.joint_count());
    (0..skel.joint_count())
        .map(|j| {
            let mut sum = nalgebra::Vector3::zeros();
            let mut n = 0usize;
            for &nb in skel.neighbors(j) {
                if let Some(m) = means[nb] {
                    sum += m.coords;
                    n += 1;
                }
            }
            (n > 0).then(|| Point3::from(sum / n as f64))
        })
        .collect()
}

/// Drops every joint proposal farther than `limb_threshold` from the center of
/// its neighbor joints. Centers come from the unfiltered group (single pass).
pub fn filter_outliers(
    group: &[PoseProposal3D],
    skel: &SkeletonDefinition,
    limb_threshold: f64,
) -> Vec<PoseProposal3D> {
    let centers = neighbor_centers(group, skel);
    group
        .iter()
        .map(|p| {
            let mut out = p.clone();
            for (j, slot) in out.joints.iter_mut().enumerate() {
                if let (Some(pj), Some(Some(c))) = (*slot, centers.get(j)) {
                    if (pj.position - c).norm() > limb_threshold {
                        *slot = None;
                    }
                }
            }
            out
        })
        .collect()
}

/// Averages the surviving instances of one joint: all of them when there are at
/// most `topk`, otherwise the `topk` closest to their mean.
pub fn fuse_points(points: &[Point3], topk: usize) -> Option<FusedJoint> {
    if points.is_empty() {
        return None;
    }
    let mean = |pts: &mut dyn Iterator<Item = &Point3>| {
        let mut sum = nalgebra::Vector3::zeros();
        let mut n = 0usize;
        for p in pts {
            sum += p.coords;
            n += 1;
        }
        Point3::from(sum / n as f64)
    };
    let topk = topk.max(1);
    if points.len() <= topk {
        return Some(FusedJoint {
            position: mean(&mut points.iter()),
            support: points.len(),
        });
    }
    let center = mean(&mut points.iter());
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - center).norm(), i))
        .collect();
    order.sort_by(|a, b| cmp_dist(a.0, b.0).then(a.1.cmp(&b.1)));
    order.truncate(topk);
    order.sort_by_key(|&(_, i)| i);
    Some(FusedJoint {
        position: mean(&mut order.iter().map(|&(_, i)| &points[i])),
        support: topk,
    })
}

/// Per-joint top-k fusion of a filtered group.
pub fn fuse_group(
    group: &[PoseProposal3D],
    joint_count: usize,
    topk: usize,
    min_support: usize,
) -> Vec<Option<FusedJoint>> {
    let mut pts = Vec::with_capacity(group.len());
    (0..joint_count)
        .map(|j| {
            pts.clear();
            pts.extend(group.iter().filter_map(|p| p.position(j)));
            if pts.len() < min_support.max(1) {
                return None;
            }
            fuse_points(&pts, topk)
        })
        .collect()
}

/// Proposals of one person before and after outlier filtering.
#[derive(Debug, Clone)]
pub struct GroupTrace {
    pub target: Target,
    pub person_id: Option<PersonId>,
    pub before: Vec<PoseProposal3D>,
    pub after: Vec<PoseProposal3D>,
}

/// Stateful multi-person tracker and fuser.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: FusionConfig,
    tracks: Vec<PersonTrack>,
    next_id: PersonId,
}

impl Tracker {
    pub fn new(cfg: FusionConfig) -> Result<Self, FusionConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[PersonTrack] {
        &self.tracks
    }

    /// Applies one rigid motion to every stored track pose.
    pub fn transform(&mut self, t: &RigidTransform) {
        for track in &mut self.tracks {
            for j in track.last_pose.joints.iter_mut().flatten() {
                j.position = t.apply(&j.position);
            }
        }
    }

    /// Processes one frame of proposals from all views.
    pub fn step(
        &mut self,
        proposals: Vec<PoseProposal3D>,
        skel: &SkeletonDefinition,
    ) -> Vec<FusedPose3D> {
        self.step_traced(proposals, skel).0
    }

    pub fn step_traced(
        &mut self,
        mut proposals: Vec<PoseProposal3D>,
        skel: &SkeletonDefinition,
    ) -> (Vec<FusedPose3D>, Vec<GroupTrace>) {
        let min_joints = self.cfg.min_proposal_joints;
        proposals.retain(|p| p.present_count() >= min_joints);
        proposals.sort_by_key(key);
        let targets = associate(&proposals, &self.tracks, &self.cfg);

        let mut groups: Vec<(Target, Vec<PoseProposal3D>)> = Vec::new();
        let mut order: Vec<Target> = targets
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        // tracks first in table order, then new clusters by number
        order.sort_by_key(|t| match t {
            Target::Track(id) => (
                0,
                self.tracks
                    .iter()
                    .position(|tr| tr.person_id == *id)
                    .unwrap_or(0),
            ),
            Target::New(n) => (1, *n),
        });
        for t in order {
            let members = proposals
                .iter()
                .zip(&targets)
                .filter(|(_, tt)| **tt == t)
                .map(|(p, _)| p.clone())
                .collect();
            groups.push((t, members));
        }

        let n_joints = skel.joint_count();
        let mut matched: BTreeSet<PersonId> = BTreeSet::new();
        let mut outputs = Vec::new();
        let mut traces = Vec::new();
        let mut born = Vec::new();
        for (target, group) in groups {
            let filtered = filter_outliers(&group, skel, self.cfg.limb_threshold);
            let joints = fuse_group(&filtered, n_joints, self.cfg.topk, self.cfg.min_support);
            let views = filtered.iter().filter(|p| p.present_count() > 0).count();
            let non_empty = joints.iter().any(|j| j.is_some());
            let person_id = if !non_empty {
                None
            } else {
                match target {
                    Target::Track(id) => Some(id),
                    Target::New(_) => {
                        let id = self.next_id;
                        self.next_id += 1;
                        Some(id)
                    }
                }
            };
            if let Some(id) = person_id {
                let pose = FusedPose3D {
                    person_id: id,
                    joints,
                    views,
                };
                match target {
                    Target::Track(_) => {
                        matched.insert(id);
                        let track = self
                            .tracks
                            .iter_mut()
                            .find(|t| t.person_id == id)
                            .expect("track exists");
                        track.last_pose = pose.clone();
                        track.missed_frames = 0;
                    }
                    Target::New(_) => born.push(PersonTrack {
                        person_id: id,
                        last_pose: pose.clone(),
                        missed_frames: 0,
                    }),
                }
                outputs.push(pose);
            }
            traces.push(GroupTrace {
                target,
                person_id,
                before: group,
                after: filtered,
            });
        }

        let drop_after = self.cfg.drop_after;
        for track in &mut self.tracks {
            if !matched.contains(&track.person_id) {
                track.missed_frames += 1;
            }
        }
        self.tracks.retain(|t| t.missed_frames < drop_after);
        self.tracks.extend(born);
        outputs.sort_by_key(|p| p.person_id);
        (outputs, traces)
    }
}
