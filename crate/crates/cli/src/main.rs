use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use wordfence_core::eval::{end_to_end_score, DetectionReport, DEFAULT_IOU};
use wordfence_core::extract::{extract_boxes, DEFAULT_MIN_AREA};
use wordfence_core::fusion::{fuse_votes, infer_multiscale, ScaleSet, DEFAULT_SCALES};
use wordfence_core::io;
use wordfence_core::labelgen::{
    rasterize_labels, rasterize_text_only, read_annotations, LabelMap, DEFAULT_BORDER_WIDTH,
};
use wordfence_core::overlay::render_overlay;
use wordfence_core::pipeline::{
    discover_inputs, read_detections, run_pipeline, write_detections, ImageResult, PipelineConfig,
    PipelineInput,
};
use wordfence_core::synth::{write_scene_set, SynthConfig};
use wordfence_core::toynet::{load_checkpoint, save_checkpoint, train_with_progress, write_loss_log, TrainConfig};
use wordfence_core::{match_detections, GridF, GridU8};

/// Word detection with border-fenced semantic segmentation.
#[derive(Parser)]
#[command(name = "wordfence", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic scenes with word annotations.
    Synth(SynthArgs),
    /// Rasterize word annotations into a class label map.
    Labelgen(LabelgenArgs),
    /// Train the network and write a checkpoint directory.
    Train(TrainArgs),
    /// Write per-scale probability maps for one image.
    Infer(InferArgs),
    /// Fuse per-scale probability maps into a label map by voting.
    Fuse(FuseArgs),
    /// Extract word boxes from a label map.
    Extract(ExtractArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Run segmentation, extraction and scoring over a set of images.
    Pipeline(PipelineArgs),
    /// Draw boxes and an optional label tint over an image.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    words_min: usize,
    #[arg(long, default_value_t = 4)]
    words_max: usize,
    #[arg(long, default_value_t = 3)]
    gap_min: usize,
    /// Keep every word within this gap of an earlier one.
    #[arg(long)]
    gap_max: Option<usize>,
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    /// Stroke density inside glyph cells, in (0, 1].
    #[arg(long, default_value_t = SynthConfig::default().texture)]
    texture: f64,
}

#[derive(Args)]
struct LabelgenArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Image whose size the label map takes.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BORDER_WIDTH)]
    border_width: usize,
    /// Text/background labels without border rings.
    #[arg(long)]
    two_class: bool,
    /// Also write the ignore mask (1 = ignored) as a P5 image.
    #[arg(long)]
    ignore_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Scene directory (synth manifest, or *.pgm with same-stem *.json).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().weight_init_scale)]
    init_scale: f64,
    #[arg(long, default_value_t = DEFAULT_BORDER_WIDTH)]
    border_width: usize,
    #[arg(long)]
    two_class: bool,
    /// Per-epoch loss CSV; defaults to loss.csv inside the checkpoint.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Output directory for `<stem>.scale<i>.ften` maps.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SCALES)]
    scales: Vec<f64>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long = "map", required = true, num_args = 1..)]
    maps: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Target size; defaults to the largest map.
    #[arg(long, requires = "width")]
    height: Option<usize>,
    #[arg(long, requires = "height")]
    width: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    #[arg(long, default_value_t = 0)]
    expand: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Detection JSON file, or a directory of `<stem>.boxes.json` / `<stem>.json`.
    #[arg(long)]
    detections: PathBuf,
    /// Annotation JSON file, or a directory of them (or a synth manifest directory).
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU)]
    iou: f64,
    /// Require matching transcriptions and ignore short or non-alphanumeric words.
    #[arg(long)]
    end_to_end: bool,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-image CSV breakdown.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input directory (synth manifest, or *.pgm with optional same-stem *.json).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SCALES)]
    scales: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    #[arg(long, default_value_t = 0)]
    expand: usize,
    #[arg(long, default_value_t = DEFAULT_IOU)]
    iou: f64,
    #[arg(long)]
    no_overlays: bool,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    boxes: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure that maps to a specific exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match e.chain().find_map(|c| c.downcast_ref::<wordfence_core::Error>()) {
        Some(core) if !core.is_data_error() => 3,
        _ => 2,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Labelgen(a) => labelgen(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Fuse(a) => fuse(a),
        Command::Extract(a) => extract(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Overlay(a) => overlay(a),
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        image_h: a.height,
        image_w: a.width,
        words_min: a.words_min,
        words_max: a.words_max,
        gap_min: a.gap_min,
        gap_max: a.gap_max,
        noise_sigma: a.noise,
        texture: a.texture,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let manifest = write_scene_set(&a.out, &config, a.count)?;
    log::info!("wrote {} scenes to {}", manifest.scenes.len(), a.out.display());
    Ok(())
}

fn label_map(
    words: &[wordfence_core::WordAnnotation],
    h: usize,
    w: usize,
    border_width: usize,
    two_class: bool,
) -> wordfence_core::Result<LabelMap> {
    if two_class {
        rasterize_text_only(words, h, w)
    } else {
        rasterize_labels(words, h, w, border_width)
    }
}

fn labelgen(a: LabelgenArgs) -> anyhow::Result<()> {
    let image = io::read_pgm(&a.image)?;
    let words = read_annotations(&a.annotations)?;
    let labels = label_map(&words, image.height(), image.width(), a.border_width, a.two_class)?;
    io::write_pgm(&a.out, labels.grid())?;
    if let Some(path) = a.ignore_out {
        let mask = labels.ignore_mask().iter().map(|&m| u8::from(m)).collect();
        io::write_pgm(&path, &GridU8::new(labels.height(), labels.width(), 2, mask)?)?;
    }
    Ok(())
}

fn load_scenes(dir: &Path, border_width: usize, two_class: bool) -> anyhow::Result<Vec<(GridF, LabelMap)>> {
    let inputs = discover_inputs(dir)?;
    if inputs.is_empty() {
        bail!(Usage(format!("no images found in {}", dir.display())));
    }
    inputs
        .iter()
        .map(|input| {
            let ann = input
                .annotations
                .as_ref()
                .with_context(|| format!("{} has no annotation file", input.image.display()))?;
            let image = io::read_gray_image(&input.image)?;
            let words = read_annotations(ann)?;
            let labels = label_map(&words, image.height(), image.width(), border_width, two_class)?;
            Ok((image, labels))
        })
        .collect()
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch: a.batch,
        seed: a.seed,
        weight_init_scale: a.init_scale,
    };
    let data = load_scenes(&a.data, a.border_width, a.two_class)?;
    log::info!("training on {} images", data.len());
    let outcome = train_with_progress(&data, &config, |epoch, loss| {
        log::info!("epoch {epoch}: mean loss {loss:.6}");
    })?;
    save_checkpoint(&a.out, &outcome.params, &config)?;
    let log_path = a.loss_log.unwrap_or_else(|| a.out.join("loss.csv"));
    write_loss_log(&log_path, &outcome.epoch_losses)?;
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn infer(a: InferArgs) -> anyhow::Result<()> {
    let (params, _) = load_checkpoint(&a.checkpoint)?;
    let image = io::read_gray_image(&a.image)?;
    let set = ScaleSet {
        scales: a.scales,
        target_h: image.height(),
        target_w: image.width(),
    };
    let maps = infer_multiscale(&params, &image, &set)?;
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let stem = file_stem(&a.image);
    for (i, map) in maps.iter().enumerate() {
        let path = a.out.join(format!("{stem}.scale{i}.ften"));
        io::write_grid(&path, map)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> anyhow::Result<()> {
    let maps = a
        .maps
        .iter()
        .map(|p| io::read_grid(p))
        .collect::<wordfence_core::Result<Vec<_>>>()?;
    let (h, w) = match (a.height, a.width) {
        (Some(h), Some(w)) => (h, w),
        _ => maps
            .iter()
            .map(|m| (m.height(), m.width()))
            .max_by_key(|&(h, w)| h * w)
            .expect("clap requires at least one map"),
    };
    io::write_pgm(&a.out, &fuse_votes(&maps, h, w)?)?;
    Ok(())
}

fn extract(a: ExtractArgs) -> anyhow::Result<()> {
    let labels = io::read_label_pgm(&a.labels, wordfence_core::labelgen::NUM_CLASSES)?;
    let boxes = extract_boxes(&labels, a.min_area, a.expand);
    write_detections(&a.out, &boxes)?;
    log::info!("{} boxes", boxes.len());
    Ok(())
}

/// Ground-truth files paired with their detection files.
fn eval_pairs(a: &EvalArgs) -> anyhow::Result<Vec<(String, PathBuf, PathBuf)>> {
    if !a.ground_truth.is_dir() {
        if a.detections.is_dir() {
            bail!(Usage("--detections is a directory but --ground-truth is a file".into()));
        }
        return Ok(vec![(file_stem(&a.ground_truth), a.detections.clone(), a.ground_truth.clone())]);
    }
    if !a.detections.is_dir() {
        bail!(Usage("--ground-truth is a directory but --detections is a file".into()));
    }
    let mut pairs = Vec::new();
    for input in discover_inputs(&a.ground_truth)? {
        let Some(gt) = input.annotations else { continue };
        let stem = file_stem(&input.image);
        let det = [format!("{stem}.boxes.json"), format!("{stem}.json")]
            .into_iter()
            .map(|name| a.detections.join(name))
            .find(|p| p.exists())
            .with_context(|| format!("no detections for {stem} in {}", a.detections.display()))?;
        pairs.push((stem, det, gt));
    }
    Ok(pairs)
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let mut images = Vec::new();
    for (name, det_path, gt_path) in eval_pairs(&a)? {
        let dets = read_detections(&det_path)?;
        let gts = read_annotations(&gt_path)?;
        let report = if a.end_to_end {
            let with_text = dets
                .iter()
                .map(|d| (d.bbox, d.text.clone().unwrap_or_default()))
                .collect::<Vec<_>>();
            end_to_end_score(&with_text, &gts, a.iou)
        } else {
            let boxes = dets.iter().map(|d| d.bbox).collect::<Vec<_>>();
            match_detections(&boxes, &gts, a.iou)
        };
        images.push(ImageResult {
            image: name,
            boxes: dets.len(),
            report: Some(report),
        });
    }
    let total = DetectionReport::aggregate(images.iter().filter_map(|r| r.report.as_ref()));
    match &a.out {
        Some(path) => io::write_json(path, &total)?,
        None => println!("{}", serde_json::to_string_pretty(&total)?),
    }
    if let Some(path) = &a.csv {
        std::fs::write(path, wordfence_core::pipeline::per_image_csv(&images))
            .with_context(|| path.display().to_string())?;
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> anyhow::Result<()> {
    let inputs: Vec<PipelineInput> = discover_inputs(&a.input)?;
    let cfg = PipelineConfig {
        scales: a.scales,
        min_area: a.min_area,
        expand: a.expand,
        iou_thresh: a.iou,
        overlays: !a.no_overlays,
        ..PipelineConfig::new(a.checkpoint, inputs, a.out)
    };
    let outcome = run_pipeline(&cfg)?;
    let r = &outcome.report;
    log::info!(
        "{} images: tp {} fp {} fn {}, precision {:.4} recall {:.4} f {:.4}",
        outcome.images.len(),
        r.tp,
        r.fp,
        r.fn_,
        r.precision,
        r.recall,
        r.fscore
    );
    if !outcome.failures.is_empty() {
        bail!("{} of {} images failed", outcome.failures.len(), cfg.inputs.len());
    }
    Ok(())
}

fn overlay(a: OverlayArgs) -> anyhow::Result<()> {
    let image = io::read_gray_image(&a.image)?;
    let boxes = match &a.boxes {
        Some(p) => read_detections(p)?.into_iter().map(|d| d.bbox).collect(),
        None => Vec::new(),
    };
    let labels = match &a.labels {
        Some(p) => Some(io::read_label_pgm(p, wordfence_core::labelgen::NUM_CLASSES)?),
        None => None,
    };
    render_overlay(&image, &boxes, labels.as_ref())?.write(&a.out)?;
    Ok(())
}
