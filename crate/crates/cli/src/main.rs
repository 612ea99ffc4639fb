//! `mvs`: synthetic data, depth estimation, fusion, evaluation and self
//! checks over a project directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use mvs_core::eval::EvalReport;
use mvs_core::features::{FeatureExtractor, FeatureMap};
use mvs_core::fusion::{FusionParams, ViewEstimate};
use mvs_core::geometry::{DepthSampling, HypothesisSpace};
use mvs_core::io::{
    read_cam, read_confidence, read_depth, read_pairs, read_ply, read_pnm, read_weights, write_cam, write_confidence,
    write_depth, write_pairs, write_ply, write_pnm, CamFile, PlyFormat, ProjectLayout,
};
use mvs_core::maps::ConfidenceMap;
use mvs_core::pipeline::{estimate_view_depth, fuse_views, FilterKind, RegularizerChoice};
use mvs_core::synth::{perturb_depths, sample_surface_cloud, Dataset, Perturbation, SceneKind};

/// Relative padding of the synthetic hypothesis range beyond the true depths.
const SYNTH_RANGE_MARGIN: f64 = 0.05;
/// Hypothesis count written to synthetic camera files.
const SYNTH_DEPTH_COUNT: usize = 32;
/// At most this many ranked sources are written per view to pair.txt.
const SYNTH_MAX_SOURCES: usize = 10;

#[derive(Parser, Debug)]
#[command(name = "mvs", version, about = "Dense multi-view stereo reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic project with ground truth.
    Synth(SynthArgs),
    /// Estimate a depth and confidence map per view.
    Depth(DepthArgs),
    /// Filter depth maps and fuse them into a point cloud.
    Fuse(FuseArgs),
    /// Score a reconstruction against a ground-truth cloud.
    Eval(EvalArgs),
    /// Run the built-in checks.
    Check,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "plane")]
    scene: SceneArg,
    #[arg(long, default_value_t = 7)]
    views: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "64x48", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Gaussian depth noise; when noise is set, perturbed ground-truth depth
    /// maps are also written to depths/ for filter experiments.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
}

#[derive(Args, Debug)]
struct DepthArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Views per estimate: the reference plus N-1 sources from pair.txt.
    #[arg(long, default_value_t = 7)]
    views: usize,
    /// Hypothesis count; defaults to the camera file's count, else 32.
    #[arg(long)]
    num_depths: Option<usize>,
    #[arg(long, value_enum, default_value = "uniform")]
    depth_mode: DepthModeArg,
    #[arg(long, value_enum, default_value = "photometric")]
    features: FeaturesArg,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "passthrough")]
    regularizer: RegularizerArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "dynamic")]
    filter: FilterArg,
    #[arg(long, default_value_t = 200.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.8)]
    tau: f64,
    #[arg(long, default_value_t = 0.4)]
    phi: f64,
    #[arg(long, default_value_t = 1.0)]
    tau1: f64,
    #[arg(long, default_value_t = 0.01)]
    tau2: f64,
    #[arg(long, default_value_t = 3)]
    min_views: usize,
    #[arg(long, value_enum, default_value = "binary")]
    format: PlyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    threshold: f64,
    /// Truncation distance; defaults to 20 × threshold.
    #[arg(long)]
    max_dist: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SceneArg {
    Plane,
    Sphere,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DepthModeArg {
    Uniform,
    Inverse,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FeaturesArg {
    Drenet,
    Photometric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegularizerArg {
    Hulstm,
    Passthrough,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterArg {
    Dynamic,
    Fixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlyArg {
    Ascii,
    Binary,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("image size must be positive".into());
    }
    Ok((w, h))
}

fn synth(args: &SynthArgs) -> Result<()> {
    if args.views < 2 {
        bail!("synth needs at least 2 views");
    }
    let kind = match args.scene {
        SceneArg::Plane => SceneKind::Plane,
        SceneArg::Sphere => SceneKind::Sphere,
    };
    let (w, h) = args.size;
    let data = Dataset::preset(kind, args.views, w, h, args.seed)?;
    let layout = ProjectLayout::new(&args.out);
    let (lo, hi) = data.padded_range(SYNTH_RANGE_MARGIN);
    let interval = (hi - lo) / (SYNTH_DEPTH_COUNT - 1) as f64;
    let noise = Perturbation {
        sigma: args.noise_sigma,
        outlier_fraction: args.outlier_frac,
        outlier_range: Some((lo, hi)),
    };
    let perturbed = args.noise_sigma > 0.0 || args.outlier_frac > 0.0;
    for (i, (view, cam)) in data.views.iter().zip(&data.cameras).enumerate() {
        write_pnm(&layout.image(i), &view.image)?;
        write_cam(
            &layout.cam(i),
            &CamFile {
                camera: cam.clone(),
                depth_min: lo,
                depth_interval: interval,
                depth_count: Some((SYNTH_DEPTH_COUNT, hi)),
            },
        )?;
        write_depth(&layout.gt_depth(i), &view.depth)?;
        if perturbed {
            let noisy = perturb_depths(&view.depth, &noise, args.seed.wrapping_add(i as u64))?;
            write_depth(&layout.depth(i), &noisy)?;
            write_confidence(&layout.confidence(i), &ConfidenceMap::filled(w, h, 1.0))?;
        }
    }
    write_pairs(&layout.pairs(), &data.ring_pairs(SYNTH_MAX_SOURCES.min(args.views - 1)))?;
    write_ply(&sample_surface_cloud(&data.scene, &data.cameras, 1), &layout.gt_cloud(), PlyFormat::BinaryLittleEndian)?;
    log::info!("wrote {} views to {}", args.views, args.out.display());
    Ok(())
}

fn copy_into(from: &Path, to: &Path) -> Result<()> {
    if from == to {
        return Ok(());
    }
    if let Some(dir) = to.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::copy(from, to).with_context(|| format!("copying {} to {}", from.display(), to.display()))?;
    Ok(())
}

fn depth(args: &DepthArgs) -> Result<()> {
    if args.views < 2 {
        bail!("--views must be at least 2");
    }
    let input = ProjectLayout::new(&args.input);
    let output = ProjectLayout::new(&args.out);
    let n = input.view_count();
    if n < 2 {
        bail!("{} holds {n} camera files; need at least 2", args.input.display());
    }
    let pairs = read_pairs(&input.pairs())?;
    if pairs.len() != n {
        bail!("pair.txt lists {} views but {n} cameras exist", pairs.len());
    }
    let cams = (0..n).map(|i| read_cam(&input.cam(i))).collect::<mvs_core::Result<Vec<_>>>()?;
    let images = (0..n).map(|i| read_pnm(&input.image(i))).collect::<mvs_core::Result<Vec<_>>>()?;
    let weights = args.weights.as_deref().map(read_weights).transpose()?;
    let extractor = match args.features {
        FeaturesArg::Photometric => FeatureExtractor::Photometric,
        FeaturesArg::Drenet => match weights.as_ref().and_then(|w| w.features.clone()) {
            Some(w) => FeatureExtractor::Drenet(Box::new(w)),
            None => bail!("--features drenet needs a --weights file with feature weights"),
        },
    };
    let regularizer = match args.regularizer {
        RegularizerArg::Passthrough => RegularizerChoice::Passthrough,
        RegularizerArg::Hulstm => match weights.as_ref().and_then(|w| w.regularizer.clone()) {
            Some(w) => RegularizerChoice::HuLstm(Box::new(w)),
            None => bail!("--regularizer hulstm needs a --weights file with regularizer weights"),
        },
    };
    let mode = match args.depth_mode {
        DepthModeArg::Uniform => DepthSampling::Uniform,
        DepthModeArg::Inverse => DepthSampling::Inverse,
    };
    let features: Vec<FeatureMap> = images
        .par_iter()
        .map(|img| extractor.extract(img))
        .collect::<mvs_core::Result<_>>()?;
    let cameras: Vec<_> = cams.iter().map(|c| c.camera.clone()).collect();
    let results: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cam = &cams[i];
            let count = args
                .num_depths
                .or(cam.depth_count.map(|(d, _)| d))
                .unwrap_or(SYNTH_DEPTH_COUNT);
            let hyp = HypothesisSpace::new(cam.depth_min, cam.depth_max(count), count, mode)?;
            let sources: Vec<usize> = pairs[i].iter().copied().take(args.views - 1).collect();
            let mut reg = regularizer.instantiate();
            estimate_view_depth(&features, &cameras, i, &sources, hyp, reg.as_mut())
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        let (d, c) = r.with_context(|| format!("estimating view {i}"))?;
        write_depth(&output.depth(i), &d)?;
        write_confidence(&output.confidence(i), &c)?;
        copy_into(&input.cam(i), &output.cam(i))?;
        copy_into(&input.image(i), &output.image(i))?;
        log::info!("view {i}: {} valid pixels", d.valid_count());
    }
    copy_into(&input.pairs(), &output.pairs())?;
    Ok(())
}

fn fuse(args: &FuseArgs) -> Result<()> {
    let layout = ProjectLayout::new(&args.input);
    let n = layout.view_count();
    if n == 0 {
        bail!("no camera files under {}", args.input.display());
    }
    let pairs = read_pairs(&layout.pairs())?;
    if pairs.len() != n {
        bail!("pair.txt lists {} views but {n} cameras exist", pairs.len());
    }
    let views = (0..n)
        .map(|i| -> Result<ViewEstimate> {
            let cam = read_cam(&layout.cam(i))?;
            let depth = read_depth(&layout.depth(i))?;
            let conf = read_confidence(&layout.confidence(i))?;
            let image = layout.image(i);
            let color = if image.is_file() { Some(read_pnm(&image)?) } else { None };
            Ok(ViewEstimate::new(cam.camera, depth, conf, color)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let params = FusionParams {
        lambda: args.lambda,
        tau: args.tau,
        phi: args.phi,
        tau1: args.tau1,
        tau2: args.tau2,
        min_views: args.min_views,
    };
    let kind = match args.filter {
        FilterArg::Dynamic => FilterKind::Dynamic,
        FilterArg::Fixed => FilterKind::Fixed,
    };
    let cloud = fuse_views(&views, &pairs, kind, &params)?;
    let format = match args.format {
        PlyArg::Ascii => PlyFormat::Ascii,
        PlyArg::Binary => PlyFormat::BinaryLittleEndian,
    };
    write_ply(&cloud, &args.out, format)?;
    println!("points={}", cloud.len());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let recon = read_ply(&args.recon)?;
    let gt = read_ply(&args.gt)?;
    let report = EvalReport::compute(&recon, &gt, args.threshold, args.max_dist)?;
    println!("{report}");
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn check() -> Result<bool> {
    let outcomes = mvs_core::selfcheck::run_all();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MVS_THREADS") {
        let threads: usize = v.parse().with_context(|| format!("MVS_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Depth(a) => depth(a)?,
        Command::Fuse(a) => fuse(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Check => return check(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Parse errors exit with status 2, help and version with 0.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
