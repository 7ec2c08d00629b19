//! Multi-person 3D pose metrics: PCP, PCK@100/500, MPJPE, Recall@100/500,
//! Invalid and F1.
//!
//! Persons are matched greedily on ascending mean joint distance, at most once
//! per side, with a distance gate (default 500 mm). Ties go to the lower ground
//! truth index, then the lower prediction index.

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::skeleton::SkeletonDefinition;

pub const DEFAULT_GATE_MM: f64 = 500.0;

/// Per-joint positions in meters; `None` = not predicted / not labeled.
pub type JointSet = Vec<Option<Point3>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFrame {
    pub predictions: Vec<JointSet>,
    pub ground_truth: Vec<JointSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pcp: f64,
    pub pck100: f64,
    pub pck500: f64,
    /// Absent when no joint pair was matched.
    pub mpjpe_mm: Option<f64>,
    pub recall100: f64,
    pub recall500: f64,
    pub invalid_pct: f64,
    pub f1: f64,
    pub fps: Option<f64>,
    pub frames: usize,
    pub gt_persons: usize,
    pub predicted_persons: usize,
    pub matched_persons: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str =
        "pcp,pck100,pck500,mpjpe_mm,recall100,recall500,invalid_pct,f1,fps,frames,gt_persons,predicted_persons,matched_persons";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        format!(
            "{:.3},{:.3},{:.3},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{}",
            self.pcp,
            self.pck100,
            self.pck500,
            opt(self.mpjpe_mm),
            self.recall100,
            self.recall500,
            self.invalid_pct,
            self.f1,
            opt(self.fps),
            self.frames,
            self.gt_persons,
            self.predicted_persons,
            self.matched_persons
        )
    }
}

/// Result of person matching for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// (ground-truth index, prediction index, mean distance in mm)
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Mean distance in mm over joints valid in `gt` and present in `pred`.
pub fn person_distance_mm(gt: &[Option<Point3>], pred: &[Option<Point3>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (g, p) in gt.iter().zip(pred) {
        if let (Some(g), Some(p)) = (g, p) {
            sum += (g - p).norm() * 1000.0;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn match_persons(frame: &EvalFrame, gate_mm: f64) -> Matching {
    let mut cands = Vec::new();
    for (g, gt) in frame.ground_truth.iter().enumerate() {
        for (p, pred) in frame.predictions.iter().enumerate() {
            if let Some(d) = person_distance_mm(gt, pred) {
                if d <= gate_mm {
                    cands.push((d, g, p));
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; frame.ground_truth.len()];
    let mut pred_used = vec![false; frame.predictions.len()];
    let mut pairs = Vec::new();
    for (d, g, p) in cands {
        if !gt_used[g] && !pred_used[p] {
            gt_used[g] = true;
            pred_used[p] = true;
            pairs.push((g, p, d));
        }
    }
    pairs.sort_by_key(|&(g, _, _)| g);
    Matching {
        pairs,
        unmatched_gt: (0..gt_used.len()).filter(|&g| !gt_used[g]).collect(),
        unmatched_pred: (0..pred_used.len()).filter(|&p| !pred_used[p]).collect(),
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    err_sum_mm: f64,
    err_count: usize,
    matched_gt_joints: usize,
    pck100: usize,
    pck500: usize,
    all_gt_joints: usize,
    recall100: usize,
    recall500: usize,
    limbs: usize,
    limbs_ok: usize,
    gt_persons: usize,
    preds: usize,
    matched: usize,
}

fn pct(num: usize, den: usize, vacuous: f64) -> f64 {
    if den == 0 {
        vacuous
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Aggregates every metric over all frames.
pub fn compute(frames: &[EvalFrame], skel: &SkeletonDefinition, gate_mm: f64) -> MetricReport {
    let mut t = Tally::default();
    for frame in frames {
        let m = match_persons(frame, gate_mm);
        t.gt_persons += frame.ground_truth.len();
        t.preds += frame.predictions.len();
        t.matched += m.pairs.len();
        for gt in &frame.ground_truth {
            t.all_gt_joints += gt.iter().filter(|j| j.is_some()).count();
        }
        for &(g, p, _) in &m.pairs {
            let (gt, pred) = (&frame.ground_truth[g], &frame.predictions[p]);
            let err = |j: usize| -> Option<f64> {
                match (gt.get(j).copied().flatten(), pred.get(j).copied().flatten()) {
                    (Some(a), Some(b)) => Some((a - b).norm() * 1000.0),
                    _ => None,
                }
            };
            for (j, g) in gt.iter().enumerate() {
                if g.is_none() {
                    continue;
                }
                t.matched_gt_joints += 1;
                if let Some(e) = err(j) {
                    t.err_sum_mm += e;
                    t.err_count += 1;
                    if e < 100.0 {
                        t.pck100 += 1;
                        t.recall100 += 1;
                    }
                    if e < 500.0 {
                        t.pck500 += 1;
                        t.recall500 += 1;
                    }
                }
            }
            for &(a, b) in skel.limbs() {
                let (Some(ga), Some(gb)) =
                    (gt.get(a).copied().flatten(), gt.get(b).copied().flatten())
                else {
                    continue;
                };
                t.limbs += 1;
                let half = 0.5 * (ga - gb).norm() * 1000.0;
                if matches!((err(a), err(b)), (Some(ea), Some(eb)) if ea <= half && eb <= half) {
                    t.limbs_ok += 1;
                }
            }
        }
    }
    let precision = pct(t.matched, t.preds, 100.0);
    let recall = pct(t.matched, t.gt_persons, 100.0);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    // with ground truth present but nothing matched, per-joint scores are 0
    let joint_vacuous = if t.all_gt_joints == 0 { 100.0 } else { 0.0 };
    MetricReport {
        pcp: pct(t.limbs_ok, t.limbs, joint_vacuous),
        pck100: pct(t.pck100, t.matched_gt_joints, joint_vacuous),
        pck500: pct(t.pck500, t.matched_gt_joints, joint_vacuous),
        mpjpe_mm: (t.err_count > 0).then(|| t.err_sum_mm / t.err_count as f64),
        recall100: pct(t.recall100, t.all_gt_joints, 100.0),
        recall500: pct(t.recall500, t.all_gt_joints, 100.0),
        invalid_pct: pct(t.preds - t.matched, t.preds, 0.0),
        f1,
        fps: None,
        frames: frames.len(),
        gt_persons: t.gt_persons,
        predicted_persons: t.preds,
        matched_persons: t.matched,
    }
}
