//! `depthpose` command line: run, eval, synth, bench, inspect.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use depthpose::io::{self, DepthFormat, PosesDoc};
use depthpose::metrics::MetricReport;
use depthpose::pipeline::{self, DepthSource, PipelineConfig};
use depthpose::skeleton::SkeletonDefinition;
use depthpose::synth::{self, SceneConfig};
use depthpose::ViewId;

#[derive(Parser)]
#[command(
    name = "depthpose",
    version,
    about = "Multi-view multi-person 3D pose fusion from RGB-D"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse every frame of a dataset into 3D poses.
    Run(Box<RunArgs>),
    /// Score a run's output against ground truth.
    Eval(Box<EvalArgs>),
    /// Write a synthetic dataset with ground truth.
    Synth(Box<SynthArgs>),
    /// Time every stage on a synthetic workload.
    Bench(Box<BenchArgs>),
    /// Dump one frame's proposals before and after outlier filtering.
    Inspect(Box<InspectArgs>),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Direct,
    Pc2dimg,
    Pc2vmap,
}

impl From<SourceArg> for DepthSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Direct => DepthSource::Direct,
            SourceArg::Pc2dimg => DepthSource::Pc2dimg,
            SourceArg::Pc2vmap => DepthSource::Pc2vmap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Raw,
}

/// Pipeline configuration: a TOML file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Skeleton JSON file.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long, value_enum)]
    depth_source: Option<SourceArg>,
    /// Comma-separated view ids to use.
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<ViewId>>,
    /// Disable per-joint depth offsets.
    #[arg(long)]
    no_offsets: bool,
    #[arg(long)]
    arm_length: Option<u32>,
    #[arg(long)]
    thickness: Option<u32>,
    #[arg(long)]
    min_valid: Option<u32>,
    #[arg(long)]
    match_threshold: Option<f64>,
    #[arg(long)]
    cluster_threshold: Option<f64>,
    #[arg(long)]
    drop_after: Option<u32>,
    #[arg(long)]
    limb_threshold: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    min_shared_joints: Option<usize>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    min_proposal_joints: Option<usize>,
    #[arg(long)]
    voxel_resolution: Option<f64>,
    #[arg(long)]
    cloud_stride: Option<u32>,
    #[arg(long)]
    splat_radius: Option<u32>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    pairing_window_ms: Option<f64>,
    /// Read calibration extrinsics as the opposite convention.
    #[arg(long)]
    invert_extrinsics: bool,
    /// Lift views on one thread.
    #[arg(long)]
    serial: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                PipelineConfig::from_toml(&text)
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v.into();
                }
            };
        }
        set!(cfg.input, self.input);
        set!(cfg.output, self.output);
        if self.skeleton.is_some() {
            cfg.skeleton = self.skeleton.clone();
        }
        set!(cfg.depth_source, self.depth_source);
        if self.cameras.is_some() {
            cfg.cameras = self.cameras.clone();
        }
        if self.no_offsets {
            cfg.apply_offsets = false;
        }
        set!(cfg.cross.arm_length, self.arm_length);
        set!(cfg.cross.thickness, self.thickness);
        set!(cfg.cross.min_valid, self.min_valid);
        set!(cfg.fusion.match_threshold, self.match_threshold);
        set!(
            cfg.fusion.new_person_cluster_threshold,
            self.cluster_threshold
        );
        set!(cfg.fusion.drop_after, self.drop_after);
        set!(cfg.fusion.limb_threshold, self.limb_threshold);
        set!(cfg.fusion.topk, self.topk);
        set!(cfg.fusion.min_shared_joints, self.min_shared_joints);
        set!(cfg.fusion.min_support, self.min_support);
        set!(cfg.fusion.min_proposal_joints, self.min_proposal_joints);
        set!(cfg.voxel_resolution, self.voxel_resolution);
        set!(cfg.cloud_stride, self.cloud_stride);
        set!(cfg.splat_radius, self.splat_radius);
        set!(cfg.min_confidence, self.min_confidence);
        set!(cfg.pairing_window_ms, self.pairing_window_ms);
        if self.invert_extrinsics {
            cfg.invert_extrinsics = true;
        }
        if self.serial {
            cfg.parallel = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved config, or `None` after printing it.
    fn resolve_or_print(&self) -> Result<Option<PipelineConfig>> {
        let cfg = self.resolve()?;
        if self.print_config {
            print!("{}", cfg.to_toml());
            return Ok(None);
        }
        Ok(Some(cfg))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also evaluate against this ground-truth file (default: the dataset's).
    #[arg(long, value_name = "GT")]
    eval: Option<Option<PathBuf>>,
}

#[derive(Args)]
struct EvalArgs {
    /// Output directory of `run`.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth poses file.
    #[arg(long)]
    gt: PathBuf,
    /// Skeleton JSON; the built-in 13-joint skeleton when absent.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Where to write report.json and report.csv (default: the prediction directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Synthetic scene: a TOML scene file plus per-field overrides.
#[derive(Args)]
struct SceneArgs {
    /// TOML scene file; flags override its values.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    persons: Option<usize>,
    /// Number of ring cameras.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Persons orbit the center at this rate, radians per frame.
    #[arg(long)]
    orbit_rate: Option<f64>,
    #[arg(long)]
    ring_radius: Option<f64>,
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    limb_radius: Option<f64>,
    #[arg(long)]
    torso_radius: Option<f64>,
    /// Depth noise sigma, meters.
    #[arg(long)]
    depth_sigma: Option<f64>,
    /// Keypoint noise sigma, pixels.
    #[arg(long)]
    pixel_sigma: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    depth_holes: Option<f64>,
    /// Emit occluded keypoints too.
    #[arg(long)]
    occluded_keypoints: bool,
}

impl SceneArgs {
    fn resolve(&self) -> Result<SceneConfig> {
        let mut s = match &self.scene {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SceneConfig::default(),
        };
        let set = |field: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        if let Some(v) = self.persons {
            s.person_count = v;
        }
        if let Some(v) = self.views {
            s.camera_count = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.width {
            s.image_width = v;
        }
        if let Some(v) = self.height {
            s.image_height = v;
        }
        set(&mut s.orbit_rate, self.orbit_rate);
        set(&mut s.camera_ring_radius, self.ring_radius);
        set(&mut s.focal_px, self.focal);
        set(&mut s.limb_radius, self.limb_radius);
        set(&mut s.torso_radius, self.torso_radius);
        set(&mut s.noise.depth_sigma, self.depth_sigma);
        set(&mut s.noise.pixel_sigma, self.pixel_sigma);
        set(&mut s.noise.keypoint_dropout, self.dropout);
        set(&mut s.noise.depth_holes, self.depth_holes);
        if self.occluded_keypoints {
            s.noise.occluded_keypoints = true;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset directory to create.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    frames: u64,
    #[command(flatten)]
    scene: SceneArgs,
    /// Skeleton JSON; the built-in 13-joint skeleton when absent.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Set the skeleton's depth offsets to the synthetic body's radii.
    #[arg(long)]
    matched_offsets: bool,
    #[arg(long, value_enum, default_value = "png")]
    depth_format: FormatArg,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 20)]
    frames: u64,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Frame index to dump.
    #[arg(long)]
    frame: u64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn load_skeleton(path: Option<&Path>) -> Result<SkeletonDefinition> {
    Ok(match path {
        Some(p) => io::read_skeleton(p)?,
        None => SkeletonDefinition::coco13(),
    })
}

fn print_report(report: &MetricReport) {
    println!("{}", MetricReport::CSV_HEADER);
    println!("{}", report.csv_row());
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let Some(cfg) = args.config.resolve_or_print()? else {
        return Ok(());
    };
    let summary = pipeline::run(&cfg)?;
    let Some(gt_arg) = args.eval else {
        return Ok(());
    };
    let data = pipeline::Dataset::open(&cfg)?;
    let gt: PosesDoc = match gt_arg {
        None => data
            .ground_truth()?
            .context("dataset lists no ground truth; pass --eval <file>")?,
        Some(path) => {
            let doc: PosesDoc = io::read_json(&path)?;
            doc.check_joints(&data.skeleton, &path)?;
            doc
        }
    };
    let report = pipeline::evaluate(&summary.predictions(), &gt, &data.skeleton, summary.fps())?;
    pipeline::write_report(&cfg.output, &report)?;
    print_report(&report);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let skel = load_skeleton(args.skeleton.as_deref())?;
    let report = pipeline::eval(&args.pred, &args.gt, &skel)?;
    pipeline::write_report(args.out.as_deref().unwrap_or(&args.pred), &report)?;
    print_report(&report);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let scene = args.scene.resolve()?;
    let mut skel = load_skeleton(args.skeleton.as_deref())?;
    if args.matched_offsets {
        skel = synth::matching_offsets(&skel, &scene)?;
    }
    let format = match args.depth_format {
        FormatArg::Png => DepthFormat::Png,
        FormatArg::Raw => DepthFormat::Raw,
    };
    pipeline::write_synthetic_dataset(&args.out, &scene, &skel, args.frames, format)?;
    log::info!(
        "{} frames, {} views, {} persons written to {}",
        args.frames,
        scene.camera_count,
        scene.person_count,
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let Some(cfg) = args.config.resolve_or_print()? else {
        return Ok(());
    };
    let scene = args.scene.resolve()?;
    let report = pipeline::bench(&scene, &cfg, args.frames, args.repetitions)?;
    println!(
        "{} views {}x{}, {} persons, {} frames x {} repetitions, deterministic: {}",
        report.views,
        scene.image_width,
        scene.image_height,
        report.persons,
        report.frames,
        report.repetitions,
        report.deterministic
    );
    println!(
        "{:<18} {:>10} {:>10} {:>10} {:>8}",
        "stage", "mean_ms", "median_ms", "p95_ms", "samples"
    );
    for (name, s) in &report.stages {
        println!(
            "{name:<18} {:>10.3} {:>10.3} {:>10.3} {:>8}",
            s.mean_ms, s.median_ms, s.p95_ms, s.samples
        );
    }
    if let Some(p) = &args.json {
        io::write_json(p, &report)?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let Some(cfg) = args.config.resolve_or_print()? else {
        return Ok(());
    };
    let report = pipeline::inspect(&cfg, args.frame)?;
    match &args.dump {
        Some(p) => io::write_json(p, &report)?,
        None => writeln!(
            std::io::stdout(),
            "{}",
            serde_json::to_string_pretty(&report)?
        )?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match Cli::parse().command {
        Command::Run(a) => cmd_run(*a),
        Command::Eval(a) => cmd_eval(*a),
        Command::Synth(a) => cmd_synth(*a),
        Command::Bench(a) => cmd_bench(*a),
        Command::Inspect(a) => cmd_inspect(*a),
    };
    // a closed downstream pipe is not a failure
    match result {
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            Ok(())
        }
        r => r,
    }
}
