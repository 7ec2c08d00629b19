//! Per-frame orchestration and the file-level `run`, `eval`, `bench`,
//! `inspect` and `synth` operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{
    cloud_to_depth, cloud_to_voxelmap, depth_to_cloud, merge_clouds, voxelmap_to_depth,
};
use crate::depth::{lift_view, CrossParams, DepthError, DepthImage, PoseProposal3D};
use crate::geometry::{CameraCalibration, ViewId};
use crate::io::{
    self, DepthFormat, FormatError, FramePosesDoc, IndexEntry, OutputIndex, PersonDoc, PosesDoc,
    SkippedFrame,
};
use crate::metrics::{self, EvalFrame, MetricReport};
use crate::skeleton::{Pose2D, SkeletonDefinition};
use crate::synth::{self, SceneConfig, SynthError};
use crate::tracking::{FusedPose3D, FusionConfig, FusionConfigError, GroupTrace, Target, Tracker};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no calibration for view {0}")]
    MissingCalibration(ViewId),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Fusion(#[from] FusionConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthSource {
    /// Sample the sensor depth images.
    #[default]
    Direct,
    /// Merge all views into a point cloud and re-render it per view.
    Pc2dimg,
    /// Voxelize the merged cloud and render voxel centers per view.
    Pc2vmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Skeleton JSON; the dataset's skeleton or the built-in 13-joint one when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<PathBuf>,
    pub cross: CrossParams,
    pub fusion: FusionConfig,
    pub apply_offsets: bool,
    pub depth_source: DepthSource,
    pub voxel_resolution: f64,
    pub cloud_stride: u32,
    pub splat_radius: u32,
    /// Views to use; all calibrated views when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<ViewId>>,
    /// Keypoints below this confidence are ignored.
    pub min_confidence: f64,
    pub pairing_window_ms: f64,
    /// Treat the calibration file's extrinsics as the opposite convention.
    pub invert_extrinsics: bool,
    pub parallel: bool,
    /// Dataset directory or manifest file.
    pub input: PathBuf,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            skeleton: None,
            cross: CrossParams::default(),
            fusion: FusionConfig::default(),
            apply_offsets: true,
            depth_source: DepthSource::Direct,
            voxel_resolution: 0.05,
            cloud_stride: 2,
            splat_radius: 1,
            cameras: None,
            min_confidence: 0.0,
            pairing_window_ms: 50.0,
            invert_extrinsics: false,
            parallel: true,
            input: PathBuf::from("."),
            output: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.cross.validate()?;
        self.fusion.validate()?;
        if self.cameras.as_ref().is_some_and(|c| c.is_empty()) {
            return bad("camera subset must not be empty".into());
        }
        match self.depth_source {
            DepthSource::Direct => {}
            DepthSource::Pc2dimg | DepthSource::Pc2vmap => {
                if self.cloud_stride == 0 {
                    return bad("cloud_stride must be at least 1".into());
                }
            }
        }
        if self.depth_source == DepthSource::Pc2vmap
            && !(self.voxel_resolution > 0.0 && self.voxel_resolution.is_finite())
        {
            return bad(format!(
                "voxel_resolution must be positive, got {}",
                self.voxel_resolution
            ));
        }
        if self.pairing_window_ms.is_nan() || self.pairing_window_ms < 0.0 {
            return bad("pairing_window_ms must be non-negative".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// One view's observations in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewInput {
    pub depth: DepthImage,
    pub poses: Vec<Pose2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame_index: u64,
    pub views: Vec<ViewInput>,
    pub timestamps: Option<Vec<f64>>,
}

impl FrameBundle {
    pub fn from_synthetic(frame: &synth::SyntheticFrame) -> Self {
        Self {
            frame_index: frame.frame_index,
            views: frame
                .depth
                .iter()
                .zip(&frame.detections)
                .map(|(d, p)| ViewInput {
                    depth: d.clone(),
                    poses: p.clone(),
                })
                .collect(),
            timestamps: None,
        }
    }
}

/// Wall-clock per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub cloud_ms: f64,
    pub depth_ms: f64,
    pub fusion_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: u64,
    pub poses: Vec<FusedPose3D>,
    pub proposals: Vec<PoseProposal3D>,
    pub timing: StageTiming,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// The stateful per-frame pipeline over a fixed camera set.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    skel: SkeletonDefinition,
    calibs: BTreeMap<ViewId, CameraCalibration>,
    tracker: Tracker,
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        skel: SkeletonDefinition,
        calibrations: &[CameraCalibration],
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let all: BTreeMap<ViewId, CameraCalibration> = calibrations
            .iter()
            .map(|c| (c.view_id, c.clone()))
            .collect();
        let calibs = match &cfg.cameras {
            None => all,
            Some(subset) => subset
                .iter()
                .map(|v| {
                    all.get(v)
                        .cloned()
                        .map(|c| (*v, c))
                        .ok_or(PipelineError::MissingCalibration(*v))
                })
                .collect::<Result<_, _>>()?,
        };
        let tracker = Tracker::new(cfg.fusion)?;
        Ok(Self {
            cfg,
            skel,
            calibs,
            tracker,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn skeleton(&self) -> &SkeletonDefinition {
        &self.skel
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn calibrations(&self) -> impl Iterator<Item = &CameraCalibration> {
        self.calibs.values()
    }

    /// Views of `bundle` this pipeline uses, checked against their calibration.
    fn select<'a>(&self, bundle: &'a FrameBundle) -> Result<Vec<&'a ViewInput>, PipelineError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in &bundle.views {
            let id = v.depth.view_id;
            if let Some(subset) = &self.cfg.cameras {
                if !subset.contains(&id) {
                    continue;
                }
            }
            let calib = self
                .calibs
                .get(&id)
                .ok_or(PipelineError::MissingCalibration(id))?;
            if !seen.insert(id) {
                return Err(PipelineError::Config(format!(
                    "view {id} appears twice in frame {}",
                    bundle.frame_index
                )));
            }
            v.depth.check_matches(calib)?;
            out.push(v);
        }
        Ok(out)
    }

    /// Depth images the lifting stage samples from.
    fn depth_inputs(&self, views: &[&ViewInput]) -> Vec<DepthImage> {
        let render = |f: &(dyn Fn(&CameraCalibration) -> DepthImage + Sync)| -> Vec<DepthImage> {
            if self.cfg.parallel {
                views
                    .par_iter()
                    .map(|v| f(&self.calibs[&v.depth.view_id]))
                    .collect()
            } else {
                views
                    .iter()
                    .map(|v| f(&self.calibs[&v.depth.view_id]))
                    .collect()
            }
        };
        match self.cfg.depth_source {
            DepthSource::Direct => views.iter().map(|v| v.depth.clone()).collect(),
            DepthSource::Pc2dimg | DepthSource::Pc2vmap => {
                let clouds: Vec<_> = views
                    .iter()
                    .map(|v| {
                        depth_to_cloud(
                            &v.depth,
                            &self.calibs[&v.depth.view_id],
                            self.cfg.cloud_stride,
                        )
                    })
                    .collect();
                let merged = merge_clouds(clouds);
                if self.cfg.depth_source == DepthSource::Pc2dimg {
                    render(&|c| cloud_to_depth(&merged, c, self.cfg.splat_radius))
                } else {
                    let vmap = cloud_to_voxelmap(&merged, self.cfg.voxel_resolution);
                    render(&|c| voxelmap_to_depth(&vmap, c))
                }
            }
        }
    }

    fn lift(
        &self,
        views: &[&ViewInput],
        depth: &[DepthImage],
    ) -> Result<Vec<PoseProposal3D>, PipelineError> {
        let one =
            |(v, img): (&&ViewInput, &DepthImage)| -> Result<Vec<PoseProposal3D>, DepthError> {
                let poses: Vec<Pose2D> = v
                    .poses
                    .iter()
                    .map(|p| {
                        let mut p = p.clone();
                        p.retain_confident(self.cfg.min_confidence);
                        p
                    })
                    .collect();
                lift_view(
                    &poses,
                    img,
                    &self.calibs[&img.view_id],
                    &self.skel,
                    &self.cfg.cross,
                    self.cfg.apply_offsets,
                )
            };
        let per_view: Vec<Result<Vec<PoseProposal3D>, DepthError>> = if self.cfg.parallel {
            views.par_iter().zip(depth.par_iter()).map(one).collect()
        } else {
            views.iter().zip(depth.iter()).map(one).collect()
        };
        let mut out = Vec::new();
        for r in per_view {
            out.extend(r?);
        }
        Ok(out)
    }

    pub fn process(&mut self, bundle: &FrameBundle) -> Result<FrameOutput, PipelineError> {
        self.process_traced(bundle).map(|(o, _)| o)
    }

    /// Like [`Pipeline::process`], also returning each fused group before and after filtering.
    pub fn process_traced(
        &mut self,
        bundle: &FrameBundle,
    ) -> Result<(FrameOutput, Vec<GroupTrace>), PipelineError> {
        let start = Instant::now();
        let views = self.select(bundle)?;
        let t = Instant::now();
        let depth = self.depth_inputs(&views);
        let cloud_ms = if self.cfg.depth_source == DepthSource::Direct {
            0.0
        } else {
            ms(t)
        };
        let t = Instant::now();
        let proposals = self.lift(&views, &depth)?;
        let depth_ms = ms(t);
        let t = Instant::now();
        let (poses, traces) = self.tracker.step_traced(proposals.clone(), &self.skel);
        let fusion_ms = ms(t);
        Ok((
            FrameOutput {
                frame_index: bundle.frame_index,
                poses,
                proposals,
                timing: StageTiming {
                    cloud_ms,
                    depth_ms,
                    fusion_ms,
                    total_ms: ms(start),
                },
            },
            traces,
        ))
    }
}

// ---------------------------------------------------------------- files

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A dataset resolved from its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub base: PathBuf,
    pub manifest: io::DatasetManifest,
    pub skeleton: SkeletonDefinition,
    pub calibrations: Vec<CameraCalibration>,
    pub frames: Vec<io::FrameEntry>,
}

impl Dataset {
    pub fn open(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let manifest_path = if cfg.input.is_dir() {
            cfg.input.join(io::MANIFEST_NAME)
        } else {
            cfg.input.clone()
        };
        let manifest: io::DatasetManifest = io::read_json(&manifest_path)?;
        let base = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let skeleton = match (&cfg.skeleton, &manifest.skeleton) {
            (Some(p), _) => io::read_skeleton(p)?,
            (None, Some(p)) => io::read_skeleton(&base.join(p))?,
            (None, None) => SkeletonDefinition::coco13(),
        };
        let calibrations =
            io::read_calibration(&base.join(&manifest.calibration), cfg.invert_extrinsics)?;
        let mut frames = manifest.frames.clone();
        if !manifest.streams.is_empty() {
            let (paired, dropped) = io::pair_streams(&manifest.streams, cfg.pairing_window_ms);
            if dropped > 0 {
                log::warn!(
                    "{dropped} frame(s) dropped: no sample of every view within {} ms",
                    cfg.pairing_window_ms
                );
            }
            frames.extend(paired);
        }
        Ok(Self {
            base,
            manifest,
            skeleton,
            calibrations,
            frames,
        })
    }

    /// Hard error if any used view of any frame lacks a calibration.
    pub fn check_calibrated(&self, cfg: &PipelineConfig) -> Result<(), PipelineError> {
        let known: BTreeSet<ViewId> = self.calibrations.iter().map(|c| c.view_id).collect();
        if let Some(subset) = &cfg.cameras {
            if let Some(v) = subset.iter().find(|v| !known.contains(v)) {
                return Err(PipelineError::MissingCalibration(*v));
            }
        }
        for f in &self.frames {
            for v in &f.views {
                let used = cfg.cameras.as_ref().is_none_or(|s| s.contains(&v.view_id));
                if used && !known.contains(&v.view_id) {
                    return Err(PipelineError::MissingCalibration(v.view_id));
                }
            }
        }
        Ok(())
    }

    pub fn load_frame(
        &self,
        entry: &io::FrameEntry,
        cfg: &PipelineConfig,
    ) -> Result<FrameBundle, PipelineError> {
        let mut views = Vec::new();
        let mut timestamps = Vec::new();
        for v in &entry.views {
            if cfg
                .cameras
                .as_ref()
                .is_some_and(|s| !s.contains(&v.view_id))
            {
                continue;
            }
            let depth = io::read_depth(&self.base.join(&v.depth), v.view_id)?;
            let poses =
                io::read_keypoints(&self.base.join(&v.keypoints), v.view_id, &self.skeleton)?;
            timestamps.extend(v.timestamp_ms);
            views.push(ViewInput { depth, poses });
        }
        let timestamps =
            (timestamps.len() == views.len() && !views.is_empty()).then_some(timestamps);
        Ok(FrameBundle {
            frame_index: entry.frame_index,
            views,
            timestamps,
        })
    }

    pub fn ground_truth(&self) -> Result<Option<PosesDoc>, PipelineError> {
        match &self.manifest.ground_truth {
            None => Ok(None),
            Some(p) => {
                let path = self.base.join(p);
                let doc: PosesDoc = io::read_json(&path)?;
                doc.check_joints(&self.skeleton, &path)?;
                Ok(Some(doc))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub joint_names: Vec<String>,
    pub frames: Vec<(u64, Vec<FusedPose3D>)>,
    pub timings: Vec<(u64, StageTiming)>,
    pub skipped: Vec<SkippedFrame>,
}

impl RunSummary {
    pub fn predictions(&self) -> PosesDoc {
        PosesDoc {
            joint_names: self.joint_names.clone(),
            frames: self
                .frames
                .iter()
                .map(|(i, poses)| FramePosesDoc {
                    frame_index: *i,
                    persons: poses.iter().map(PersonDoc::from_fused).collect(),
                })
                .collect(),
        }
    }

    pub fn fps(&self) -> Option<f64> {
        mean_fps(self.timings.iter().map(|(_, t)| t.total_ms))
    }
}

fn mean_fps(totals: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = totals.fold((0.0, 0usize), |(s, n), t| (s + t, n + 1));
    (n > 0 && sum > 0.0).then(|| 1000.0 * n as f64 / sum)
}

pub const TIMING_NAME: &str = "timing.csv";
const TIMING_HEADER: &str = "frame_index,load_ms,cloud_ms,depth_ms,fusion_ms,total_ms";

/// Processes every frame of the configured dataset and writes one file per frame,
/// an index and a timing log into `cfg.output`.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let data = Dataset::open(cfg)?;
    data.check_calibrated(cfg)?;
    let mut pipeline = Pipeline::new(cfg.clone(), data.skeleton.clone(), &data.calibrations)?;
    let out_dir = &cfg.output;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut summary = RunSummary {
        joint_names: data.skeleton.joint_names().to_vec(),
        frames: Vec::new(),
        timings: Vec::new(),
        skipped: Vec::new(),
    };
    let mut index = OutputIndex {
        joint_names: summary.joint_names.clone(),
        ..Default::default()
    };
    let mut timing_csv = String::from(TIMING_HEADER);
    timing_csv.push('\n');
    for entry in &data.frames {
        let t = Instant::now();
        let bundle = match data.load_frame(entry, cfg) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("frame {} skipped: {e}", entry.frame_index);
                summary.skipped.push(SkippedFrame {
                    frame_index: entry.frame_index,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let load_ms = ms(t);
        let out = match pipeline.process(&bundle) {
            Ok(o) => o,
            Err(e @ PipelineError::MissingCalibration(_)) => return Err(e),
            Err(e) => {
                log::warn!("frame {} skipped: {e}", entry.frame_index);
                summary.skipped.push(SkippedFrame {
                    frame_index: entry.frame_index,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let file = PathBuf::from(io::frame_file_name(out.frame_index));
        let doc = PosesDoc {
            joint_names: summary.joint_names.clone(),
            frames: vec![FramePosesDoc {
                frame_index: out.frame_index,
                persons: out.poses.iter().map(PersonDoc::from_fused).collect(),
            }],
        };
        io::write_json(&out_dir.join(&file), &doc)?;
        index.frames.push(IndexEntry {
            frame_index: out.frame_index,
            file,
        });
        let tm = out.timing;
        writeln!(
            timing_csv,
            "{},{},{},{},{},{}",
            out.frame_index, load_ms, tm.cloud_ms, tm.depth_ms, tm.fusion_ms, tm.total_ms
        )
        .expect("string write");
        summary.timings.push((out.frame_index, tm));
        summary.frames.push((out.frame_index, out.poses));
    }
    index.skipped = summary.skipped.clone();
    io::write_json(&out_dir.join(io::INDEX_NAME), &index)?;
    let timing_path = out_dir.join(TIMING_NAME);
    fs::write(&timing_path, timing_csv).map_err(io_err(&timing_path))?;
    log::info!(
        "{} frame(s) processed, {} skipped, output in {}",
        summary.frames.len(),
        summary.skipped.len(),
        out_dir.display()
    );
    Ok(summary)
}

/// Metrics of predictions against ground truth, frames matched by index.
/// Ground-truth frames without predictions count as empty predictions.
pub fn evaluate(
    pred: &PosesDoc,
    gt: &PosesDoc,
    skel: &SkeletonDefinition,
    fps: Option<f64>,
) -> Result<MetricReport, PipelineError> {
    if gt.joint_names != skel.joint_names() {
        return Err(PipelineError::Config(format!(
            "ground-truth joints {:?} differ from skeleton `{}`",
            gt.joint_names,
            skel.name()
        )));
    }
    if !pred.frames.is_empty() && pred.joint_names != gt.joint_names {
        return Err(PipelineError::Config(format!(
            "prediction joints {:?} differ from ground-truth joints {:?}",
            pred.joint_names, gt.joint_names
        )));
    }
    let by_index: BTreeMap<u64, &FramePosesDoc> =
        pred.frames.iter().map(|f| (f.frame_index, f)).collect();
    let frames: Vec<EvalFrame> = gt
        .frames
        .iter()
        .map(|g| EvalFrame {
            ground_truth: g.persons.iter().map(PersonDoc::joint_set).collect(),
            predictions: by_index
                .get(&g.frame_index)
                .map(|p| p.persons.iter().map(PersonDoc::joint_set).collect())
                .unwrap_or_default(),
        })
        .collect();
    let extra = by_index
        .keys()
        .filter(|i| !gt.frames.iter().any(|g| g.frame_index == **i))
        .count();
    if extra > 0 {
        log::warn!("{extra} predicted frame(s) have no ground truth and are ignored");
    }
    let mut report = metrics::compute(&frames, skel, metrics::DEFAULT_GATE_MM);
    report.fps = fps;
    Ok(report)
}

fn read_timing_fps(dir: &Path) -> Result<Option<f64>, PipelineError> {
    let path = dir.join(TIMING_NAME);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut totals = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let total = line
            .rsplit(',')
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                PipelineError::Config(format!("{}: malformed line `{line}`", path.display()))
            })?;
        totals.push(total);
    }
    Ok(mean_fps(totals.into_iter()))
}

/// Evaluates a `run` output directory against a ground-truth file.
pub fn eval(
    pred_dir: &Path,
    gt_file: &Path,
    skel: &SkeletonDefinition,
) -> Result<MetricReport, PipelineError> {
    let gt: PosesDoc = io::read_json(gt_file)?;
    gt.check_joints(skel, gt_file)?;
    let pred = io::read_predictions(pred_dir)?;
    evaluate(&pred, &gt, skel, read_timing_fps(pred_dir)?)
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn write_report(dir: &Path, report: &MetricReport) -> Result<(), PipelineError> {
    io::write_json(&dir.join("report.json"), report)?;
    let path = dir.join("report.csv");
    fs::write(
        &path,
        format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row()),
    )
    .map_err(io_err(&path))
}

// ---------------------------------------------------------------- synth

/// Writes a synthetic dataset in the pipeline's input formats plus ground truth.
pub fn write_synthetic_dataset(
    dir: &Path,
    scene: &SceneConfig,
    skel: &SkeletonDefinition,
    frames: u64,
    depth_format: DepthFormat,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (_, calibs) = synth::generate_scene(scene, 0)?;
    io::write_calibration(&dir.join("calibration.json"), &calibs)?;
    let skel_path = dir.join("skeleton.json");
    fs::write(&skel_path, skel.to_json()).map_err(io_err(&skel_path))?;
    let mut manifest = io::DatasetManifest {
        calibration: "calibration.json".into(),
        skeleton: Some("skeleton.json".into()),
        ground_truth: Some("ground_truth.json".into()),
        ..Default::default()
    };
    let mut gt = PosesDoc {
        joint_names: skel.joint_names().to_vec(),
        frames: Vec::new(),
    };
    for f in 0..frames {
        let frame = synth::synthesize_frame(scene, skel, f)?;
        let mut views = Vec::new();
        for ((calib, img), poses) in frame
            .calibrations
            .iter()
            .zip(&frame.depth)
            .zip(&frame.detections)
        {
            let v = calib.view_id;
            let depth = PathBuf::from(format!("depth/{f:06}_v{v}.{}", depth_format.extension()));
            let keypoints = PathBuf::from(format!("keypoints/{f:06}_v{v}.json"));
            io::write_depth(&dir.join(&depth), img, depth_format)?;
            io::write_json(
                &dir.join(&keypoints),
                &io::keypoints_to_doc(f, v, poses, skel),
            )?;
            views.push(io::ViewEntry {
                view_id: v,
                depth,
                keypoints,
                timestamp_ms: None,
            });
        }
        manifest.frames.push(io::FrameEntry {
            frame_index: f,
            views,
        });
        gt.frames.push(FramePosesDoc {
            frame_index: f,
            persons: frame
                .ground_truth
                .iter()
                .enumerate()
                .map(|(i, j)| PersonDoc::from_joint_set(i as u64 + 1, j))
                .collect(),
        });
    }
    io::write_json(&dir.join("ground_truth.json"), &gt)?;
    io::write_json(&dir.join(io::MANIFEST_NAME), &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean_ms: 0.0,
                median_ms: 0.0,
                p95_ms: 0.0,
                samples: 0,
            };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            mean_ms: s.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: s[rank - 1],
            samples: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub views: usize,
    pub persons: usize,
    pub frames: usize,
    pub repetitions: usize,
    /// Stage name → per-frame statistics.
    pub stages: BTreeMap<String, StageStats>,
    /// Every repetition produced bit-identical poses.
    pub deterministic: bool,
}

/// Times every stage single-threaded on a synthetic workload.
pub fn bench(
    scene: &SceneConfig,
    base: &PipelineConfig,
    frames: u64,
    repetitions: usize,
) -> Result<BenchReport, PipelineError> {
    let skel = match &base.skeleton {
        Some(p) => io::read_skeleton(p)?,
        None => SkeletonDefinition::coco13(),
    };
    let data: Vec<synth::SyntheticFrame> = (0..frames)
        .map(|f| synth::synthesize_frame(scene, &skel, f))
        .collect::<Result<_, _>>()?;
    let calibs = data
        .first()
        .map(|f| f.calibrations.clone())
        .unwrap_or_default();
    let bundles: Vec<FrameBundle> = data.iter().map(FrameBundle::from_synthetic).collect();

    let mut stages: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut reference: Option<Vec<Vec<FusedPose3D>>> = None;
    let mut deterministic = true;
    for source in [
        DepthSource::Direct,
        DepthSource::Pc2dimg,
        DepthSource::Pc2vmap,
    ] {
        let cfg = PipelineConfig {
            depth_source: source,
            parallel: false,
            cameras: None,
            ..base.clone()
        };
        for _ in 0..repetitions {
            let mut p = Pipeline::new(cfg.clone(), skel.clone(), &calibs)?;
            let mut outs = Vec::with_capacity(bundles.len());
            for b in &bundles {
                let o = p.process(b)?;
                let t = o.timing;
                match source {
                    DepthSource::Direct => {
                        stages
                            .entry("depth_extraction".into())
                            .or_default()
                            .push(t.depth_ms);
                        stages.entry("fusion".into()).or_default().push(t.fusion_ms);
                        stages.entry("total".into()).or_default().push(t.total_ms);
                    }
                    DepthSource::Pc2dimg => stages
                        .entry("pc2dimg_cloud".into())
                        .or_default()
                        .push(t.cloud_ms),
                    DepthSource::Pc2vmap => stages
                        .entry("pc2vmap_cloud".into())
                        .or_default()
                        .push(t.cloud_ms),
                }
                outs.push(o.poses);
            }
            if source == DepthSource::Direct {
                match &reference {
                    None => reference = Some(outs),
                    Some(r) => deterministic &= *r == outs,
                }
            }
        }
    }
    Ok(BenchReport {
        views: calibs.len(),
        persons: scene.person_count,
        frames: bundles.len(),
        repetitions,
        stages: stages
            .iter()
            .map(|(k, v)| (k.clone(), StageStats::from_samples(v)))
            .collect(),
        deterministic,
    })
}

// ---------------------------------------------------------------- inspect

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalDump {
    pub view_id: ViewId,
    pub detection: usize,
    pub joints: Vec<Option<[f64; 3]>>,
}

impl From<&PoseProposal3D> for ProposalDump {
    fn from(p: &PoseProposal3D) -> Self {
        Self {
            view_id: p.source_view,
            detection: p.detection,
            joints: p
                .joints
                .iter()
                .map(|j| j.map(|j| [j.position.x, j.position.y, j.position.z]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDump {
    /// `track` or `new`.
    pub kind: String,
    pub person_id: Option<u64>,
    pub before: Vec<ProposalDump>,
    pub after: Vec<ProposalDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub frame_index: u64,
    pub joint_names: Vec<String>,
    pub groups: Vec<GroupDump>,
}

/// Replays the dataset up to `frame_index` and dumps that frame's groups
/// before and after outlier filtering.
pub fn inspect(cfg: &PipelineConfig, frame_index: u64) -> Result<InspectReport, PipelineError> {
    cfg.validate()?;
    let data = Dataset::open(cfg)?;
    data.check_calibrated(cfg)?;
    let mut pipeline = Pipeline::new(cfg.clone(), data.skeleton.clone(), &data.calibrations)?;
    for entry in &data.frames {
        if entry.frame_index > frame_index {
            break;
        }
        let bundle = match data.load_frame(entry, cfg) {
            Ok(b) => b,
            Err(e) if entry.frame_index < frame_index => {
                log::warn!("frame {} skipped: {e}", entry.frame_index);
                continue;
            }
            Err(e) => return Err(e),
        };
        let (_, traces) = pipeline.process_traced(&bundle)?;
        if entry.frame_index == frame_index {
            return Ok(InspectReport {
                frame_index,
                joint_names: data.skeleton.joint_names().to_vec(),
                groups: traces
                    .iter()
                    .map(|t| GroupDump {
                        kind: match t.target {
                            Target::Track(_) => "track".into(),
                            Target::New(_) => "new".into(),
                        },
                        person_id: t.person_id,
                        before: t.before.iter().map(ProposalDump::from).collect(),
                        after: t.after.iter().map(ProposalDump::from).collect(),
                    })
                    .collect(),
            });
        }
    }
    Err(PipelineError::Config(format!(
        "frame {frame_index} not in dataset"
    )))
}
