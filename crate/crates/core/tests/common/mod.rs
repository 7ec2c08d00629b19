#![allow(dead_code)]

use std::time::{Duration, Instant};

use depthpose::metrics::{self, EvalFrame, MetricReport};
use depthpose::pipeline::{FrameBundle, Pipeline, PipelineConfig};
use depthpose::skeleton::SkeletonDefinition;
use depthpose::synth::{self, SceneConfig, SyntheticFrame};
use depthpose::tracking::FusedPose3D;

pub struct SceneRun {
    pub frames: Vec<SyntheticFrame>,
    pub outputs: Vec<Vec<FusedPose3D>>,
    pub eval: Vec<EvalFrame>,
    pub elapsed: Duration,
}

impl SceneRun {
    pub fn report(&self, skel: &SkeletonDefinition) -> MetricReport {
        metrics::compute(&self.eval, skel, metrics::DEFAULT_GATE_MM)
    }
}

/// Synthesizes `frames` frames and runs them through one pipeline.
pub fn run_scene(
    scene: &SceneConfig,
    cfg: &PipelineConfig,
    skel: &SkeletonDefinition,
    frames: u64,
) -> SceneRun {
    let start = Instant::now();
    let mut pipeline: Option<Pipeline> = None;
    let mut out = SceneRun {
        frames: Vec::new(),
        outputs: Vec::new(),
        eval: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for f in 0..frames {
        let frame = synth::synthesize_frame(scene, skel, f).expect("scene synthesizes");
        let p = pipeline.get_or_insert_with(|| {
            Pipeline::new(cfg.clone(), skel.clone(), &frame.calibrations).expect("valid pipeline")
        });
        let result = p
            .process(&FrameBundle::from_synthetic(&frame))
            .expect("frame processes");
        out.eval.push(EvalFrame {
            predictions: result.poses.iter().map(FusedPose3D::positions).collect(),
            ground_truth: frame.ground_truth.clone(),
        });
        out.outputs.push(result.poses);
        out.frames.push(frame);
    }
    out.elapsed = start.elapsed();
    out
}

/// The built-in skeleton with offsets equal to the synthetic body's radii.
pub fn oracle_skeleton(scene: &SceneConfig) -> SkeletonDefinition {
    synth::matching_offsets(&SkeletonDefinition::coco13(), scene).expect("offsets")
}
