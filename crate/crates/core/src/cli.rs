//! Command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::chipgen::{generate_chips, ChipParams};
use crate::geometry::{
    default_valid_ranges, project_box, scaled_dims, Projection, PyramidConfig, ScaleSpec, Space,
    ValidRange,
};
use crate::io::{
    read_annotations, read_fpm, read_json, sig6, write_fpm, write_json, ChipRecord, ChipsFile,
    DetectionRecord, DetectionsFile, Grid, ReportFile,
};
use crate::labeler::{assign_labels, LabelParams};
use crate::metrics::{
    average_precision_images, coco_thresholds, focuschip_curve, focuspixel_curve,
    speedup_bound_dataset, CurvePoint, ImageEval,
};
use crate::pipeline::{
    run_cascade, CascadeParams, OracleDetector, OracleNoise, PixelReport, Scene,
};
use crate::stacker::{focus_stack, ScaleOutput, StackParams};

#[derive(Debug, Parser)]
#[command(
    name = "focus-cascade",
    version,
    about = "Focus-pixel labels, focus chips, focus stacking and pixel accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label map of one annotated image as an FPM1 grid of {1, 0, -1}.
    Labels(LabelsArgs),
    /// Chips from an FPM1 probability map, as JSON.
    Chips(ChipsArgs),
    /// Focus stacking of chip-local detections into final detections.
    Stack(StackArgs),
    /// Oracle cascade over annotated images: detections and pixel report.
    Pipeline(PipelineArgs),
    /// Oracle speedup bound per minimum chip size, as CSV.
    Bound(BoundArgs),
    /// Focus-pixel recall per threshold, or chip recall per chip size, as CSV.
    Recall(RecallArgs),
    /// Average precision per IoU threshold, as CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LabelFlags {
    /// Smallest focus size, sqrt of area in resized pixels.
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,
    /// Largest focus size.
    #[arg(long, default_value_t = 64.0)]
    pub b: f64,
    /// Smallest negative size; sizes between b and c are ignored.
    #[arg(long, default_value_t = 90.0)]
    pub c: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PyramidFlags {
    /// Scales as `min_side,max_side` pairs separated by `;`, coarse to fine.
    #[arg(long, default_value = "480,512;800,1280;1400,2000")]
    pub scales: String,
    #[arg(long, default_value_t = 16)]
    pub stride: u32,
    /// Valid detection sizes per scale as `lo,hi` pairs (`inf` for no upper
    /// bound). Defaults to the built-in ranges for three scales and to no
    /// filtering otherwise.
    #[arg(long)]
    pub ranges: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Image to label; the first image when absent.
    #[arg(long)]
    pub image_id: Option<u64>,
    /// Resize factor applied to the image before labelling.
    #[arg(long, default_value_t = 1.0)]
    pub zoom: f64,
    #[arg(long, default_value_t = 16)]
    pub stride: u32,
    #[command(flatten)]
    pub labels: LabelFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChipsArgs {
    #[arg(long)]
    pub probmap: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 3)]
    pub d: u32,
    #[arg(long, default_value_t = 512)]
    pub k: u32,
    #[arg(long, default_value_t = 16)]
    pub stride: u32,
    /// Resized image width; map width times stride when absent.
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    /// Scale the map belongs to.
    #[arg(long, default_value_t = 1)]
    pub scale_index: u32,
    #[arg(long, default_value_t = 0)]
    pub image_id: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// Chip-local detections; the `chip:<id>` tag names their chip.
    #[arg(long)]
    pub detections: PathBuf,
    /// Processed regions, in pixels of the scale that processed them.
    #[arg(long)]
    pub chips: PathBuf,
    /// Original image width.
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[command(flatten)]
    pub pyramid: PyramidFlags,
    #[arg(long, default_value_t = 0.55)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.001)]
    pub score_floor: f64,
    /// Distance from an interior chip border, in chip pixels, that prunes.
    #[arg(long, default_value_t = 1.0)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[command(flatten)]
    pub pyramid: PyramidFlags,
    #[command(flatten)]
    pub labels: LabelFlags,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 3)]
    pub d: u32,
    #[arg(long, default_value_t = 512)]
    pub k: u32,
    #[arg(long, default_value_t = 0.55)]
    pub sigma: f64,
    /// Seed of the oracle's noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub miss_rate: f64,
    /// False positives per million processed pixels.
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    pub map_noise: f64,
    /// Directory receiving detections.json and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[command(flatten)]
    pub pyramid: PyramidFlags,
    #[command(flatten)]
    pub labels: LabelFlags,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 3)]
    pub d: u32,
    /// Comma-separated minimum chip sizes.
    #[arg(long, default_value = "64,128,256,512")]
    pub k: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecallArgs {
    /// Predicted map; pairs with --labels for focus-pixel recall.
    #[arg(long, requires = "labels_map", conflicts_with = "annotations")]
    pub probmap: Option<PathBuf>,
    #[arg(long = "labels", id = "labels_map")]
    pub labels_map: Option<PathBuf>,
    /// Annotated images for chip recall from perfect focus maps.
    #[arg(long, required_unless_present = "probmap")]
    pub annotations: Option<PathBuf>,
    #[command(flatten)]
    pub pyramid: PyramidFlags,
    #[command(flatten)]
    pub labels: LabelFlags,
    /// Thresholds (focus-pixel recall) or the single chip threshold.
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub d: u32,
    /// Chip sizes swept for chip recall.
    #[arg(long, default_value = "16,32,64,128,256,512")]
    pub k: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Final detections in original pixels.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// IoU thresholds; 0.50 to 0.95 in steps of 0.05 when absent.
    #[arg(long)]
    pub iou: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| anyhow!("{flag}: cannot parse {s:?} in {text:?}"))
        })
        .collect()
}

fn parse_scales(text: &str) -> anyhow::Result<Vec<ScaleSpec>> {
    text.split(';')
        .enumerate()
        .map(|(i, pair)| {
            let v: Vec<f64> = parse_list(pair, "--scales")?;
            let [min_side, max_side] = v[..] else {
                bail!("--scales: expected min_side,max_side, got {pair:?}");
            };
            ScaleSpec::new(i as u32 + 1, min_side, max_side).context("--scales")
        })
        .collect()
}

fn parse_ranges(text: &str) -> anyhow::Result<Vec<ValidRange>> {
    text.split(';')
        .map(|pair| {
            let v: Vec<String> = parse_list(pair, "--ranges")?;
            let [lo, hi] = &v[..] else {
                bail!("--ranges: expected lo,hi, got {pair:?}");
            };
            let lo: f64 = lo
                .parse()
                .map_err(|_| anyhow!("--ranges: bad bound {lo:?}"))?;
            let hi = match hi.as_str() {
                "inf" => None,
                s => Some(
                    s.parse()
                        .map_err(|_| anyhow!("--ranges: bad bound {s:?}"))?,
                ),
            };
            ValidRange::new(lo, hi).context("--ranges")
        })
        .collect()
}

impl PyramidFlags {
    fn config(&self) -> anyhow::Result<PyramidConfig> {
        let scales = parse_scales(&self.scales)?;
        let ranges = match &self.ranges {
            Some(text) => parse_ranges(text)?,
            None if scales.len() == 3 => default_valid_ranges(),
            None => vec![ValidRange::unbounded(); scales.len()],
        };
        PyramidConfig::new(scales, self.stride, ranges).context("--scales/--ranges")
    }
}

impl LabelFlags {
    fn params(&self, stride: u32) -> anyhow::Result<LabelParams> {
        LabelParams::new(stride, self.a, self.b, self.c).context("--a/--b/--c")
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    emit(out, &crate::io::to_json(value))
}

fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("param,area_ratio,recall\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{}",
            sig6(p.param),
            sig6(p.area_ratio),
            sig6(p.recall)
        );
    }
    s
}

fn labels_cmd(args: &LabelsArgs) -> anyhow::Result<()> {
    let scenes = read_annotations(&args.annotations)?;
    let scene = match args.image_id {
        Some(id) => scenes
            .iter()
            .find(|s| s.image_id == id)
            .ok_or_else(|| anyhow!("{}: no image with id {id}", args.annotations.display()))?,
        None => scenes
            .first()
            .ok_or_else(|| anyhow!("{}: no images", args.annotations.display()))?,
    };
    if !(args.zoom > 0.0 && args.zoom.is_finite()) {
        bail!("--zoom must be positive, got {}", args.zoom);
    }
    let params = args.labels.params(args.stride)?;
    let (w, h) = scaled_dims(scene.width, scene.height, args.zoom);
    let proj = Projection::scale(args.zoom, args.stride);
    let boxes = scene
        .objects
        .iter()
        .map(|o| project_box(&o.bbox, Space::Scaled(0), &proj))
        .collect::<crate::Result<Vec<_>>>()?;
    let map = assign_labels(&boxes, w, h, &params)?;
    write_fpm(&args.out, &Grid::from(&map))?;
    Ok(())
}

fn chips_cmd(args: &ChipsArgs) -> anyhow::Result<()> {
    let name = args.probmap.display().to_string();
    let map = read_fpm(&args.probmap)?.to_prob_map(&name)?;
    let params = ChipParams::new(args.t, args.d, args.k).context("--t/--d/--k")?;
    let width = args.width.unwrap_or(map.width() as u32 * args.stride);
    let height = args.height.unwrap_or(map.height() as u32 * args.stride);
    let chips = generate_chips(&map, &params, width, height, args.stride, args.scale_index)
        .with_context(|| format!("chips from {name}"))?;
    let file = ChipsFile {
        chips: chips
            .iter()
            .map(|c| ChipRecord::new(args.image_id, c))
            .collect(),
    };
    emit_json(args.out.as_deref(), &file)
}

fn stack_cmd(args: &StackArgs) -> anyhow::Result<()> {
    let config = args.pyramid.config()?;
    let params = StackParams {
        sigma: args.sigma,
        score_floor: args.score_floor,
        boundary_tolerance: args.tolerance,
    };
    params
        .validate()
        .context("--sigma/--score-floor/--tolerance")?;
    let chips_name = args.chips.display().to_string();
    let dets_name = args.detections.display().to_string();
    let chips_file: ChipsFile = read_json(&args.chips)?;
    let dets_file: DetectionsFile = read_json(&args.detections)?;

    let image_ids: std::collections::BTreeSet<u64> = chips_file
        .chips
        .iter()
        .map(|c| c.image_id)
        .chain(dets_file.detections.iter().map(|d| d.image_id))
        .collect();
    if image_ids.len() > 1 {
        bail!("{chips_name}, {dets_name}: records span several images {image_ids:?}");
    }
    let image_id = image_ids.into_iter().next().unwrap_or(0);

    let geoms = config.geometry(args.width, args.height)?;
    let mut stages: Vec<ScaleOutput> = geoms
        .iter()
        .map(|g| ScaleOutput {
            scale_index: g.index,
            zoom: g.zoom,
            image_w: g.width,
            image_h: g.height,
            chips: Vec::new(),
        })
        .collect();
    let mut slots = BTreeMap::new();
    for rec in &chips_file.chips {
        let chip = rec
            .to_chip()
            .with_context(|| format!("{chips_name}: chip {}", rec.id))?;
        let Space::Scaled(scale) = chip.rect.space() else {
            bail!(
                "{chips_name}: chip {} is in {}, not a scaled space",
                rec.id,
                chip.rect.space()
            );
        };
        let pos = config
            .position(scale)
            .ok_or_else(|| anyhow!("{chips_name}: chip {} uses unknown scale {scale}", rec.id))?;
        if slots
            .insert(chip.id, (pos, stages[pos].chips.len()))
            .is_some()
        {
            bail!("{chips_name}: duplicate chip id {}", chip.id);
        }
        stages[pos].chips.push((chip, Vec::new()));
    }
    for (i, rec) in dets_file.detections.iter().enumerate() {
        let det = rec
            .to_detection()
            .with_context(|| format!("{dets_name}: detection {i}"))?;
        let Space::ChipLocal(id) = det.bbox.space() else {
            bail!(
                "{dets_name}: detection {i} is in {}, not chip-local",
                det.bbox.space()
            );
        };
        let &(pos, slot) = slots
            .get(&id)
            .ok_or_else(|| anyhow!("{dets_name}: detection {i} names unknown chip {id}"))?;
        stages[pos].chips[slot].1.push(det);
    }
    let stacked = focus_stack(&stages, &config, &params)?;
    let file = DetectionsFile {
        detections: stacked
            .iter()
            .map(|d| DetectionRecord::new(image_id, d))
            .collect(),
    };
    emit_json(args.out.as_deref(), &file)
}

fn load_scenes(path: &Path) -> anyhow::Result<Vec<Scene>> {
    Ok(read_annotations(path)?)
}

fn pipeline_cmd(args: &PipelineArgs) -> anyhow::Result<()> {
    let config = args.pyramid.config()?;
    let labels = args.labels.params(config.stride())?;
    let noise = OracleNoise {
        miss_rate: args.miss_rate,
        false_positive_rate: args.fp_rate,
        jitter_px: args.jitter,
        map_noise_sd: args.map_noise,
        seed: args.seed,
    };
    noise.validate().context("oracle noise flags")?;
    let detector = OracleDetector::new(noise, labels);
    let params = CascadeParams {
        stack: StackParams {
            sigma: args.sigma,
            ..StackParams::default()
        },
        ..CascadeParams::with_chips(ChipParams::new(args.t, args.d, args.k).context("--t/--d/--k")?)
    };
    params.stack.validate().context("--sigma")?;

    let scenes = load_scenes(&args.annotations)?;
    let mut detections = Vec::new();
    let mut report = PixelReport::from_scales(Vec::new());
    for scene in &scenes {
        let out = run_cascade(scene, &detector, &config, &params)
            .with_context(|| format!("{}: image {}", args.annotations.display(), scene.image_id))?;
        detections.extend(
            out.detections
                .iter()
                .map(|d| DetectionRecord::new(scene.image_id, d)),
        );
        report.absorb(&out.report);
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(
        &args.out.join("detections.json"),
        &DetectionsFile { detections },
    )?;
    write_json(
        &args.out.join("report.json"),
        &ReportFile::new(scenes.len() as u64, report),
    )?;
    Ok(())
}

fn bound_cmd(args: &BoundArgs) -> anyhow::Result<()> {
    let config = args.pyramid.config()?;
    let labels = args.labels.params(config.stride())?;
    let ks: Vec<u32> = parse_list(&args.k, "--k")?;
    let chips = ChipParams::new(args.t, args.d, 1).context("--t/--d")?;
    let scenes = load_scenes(&args.annotations)?;
    let curve = speedup_bound_dataset(&scenes, &config, &labels, &chips, &ks)?;
    let mut s = String::from("k,speedup\n");
    for (k, speedup) in curve {
        let _ = writeln!(s, "{k},{}", sig6(speedup));
    }
    emit(args.out.as_deref(), &s)
}

fn recall_cmd(args: &RecallArgs) -> anyhow::Result<()> {
    if let (Some(pred), Some(gt)) = (&args.probmap, &args.labels_map) {
        let pred_map = read_fpm(pred)?.to_prob_map(&pred.display().to_string())?;
        let gt_map = read_fpm(gt)?.to_label_map(&gt.display().to_string())?;
        let ts: Vec<f64> = match &args.t {
            Some(text) => parse_list(text, "--t")?,
            None => (1..20).map(|i| i as f64 / 20.0).collect(),
        };
        let curve = focuspixel_curve(&pred_map, &gt_map, &ts)
            .with_context(|| format!("{} vs {}", pred.display(), gt.display()))?;
        return emit(args.out.as_deref(), &curve_csv(&curve));
    }
    let path = args
        .annotations
        .as_ref()
        .ok_or_else(|| anyhow!("recall needs --probmap with --labels, or --annotations"))?;
    let config = args.pyramid.config()?;
    let labels = args.labels.params(config.stride())?;
    let t = match &args.t {
        Some(text) => match parse_list::<f64>(text, "--t")?[..] {
            [t] => t,
            _ => bail!("--t: chip recall takes a single threshold, got {text:?}"),
        },
        None => 0.5,
    };
    let ks: Vec<u32> = parse_list(&args.k, "--k")?;
    let chips = ChipParams::new(t, args.d, 1).context("--t/--d")?;
    let scenes = load_scenes(path)?;
    let curve = focuschip_curve(&scenes, &config, &labels, &chips, &ks)?;
    emit(args.out.as_deref(), &curve_csv(&curve))
}

fn eval_cmd(args: &EvalArgs) -> anyhow::Result<()> {
    let thresholds = match &args.iou {
        Some(text) => parse_list(text, "--iou")?,
        None => coco_thresholds(),
    };
    let scenes = load_scenes(&args.annotations)?;
    let dets_name = args.detections.display().to_string();
    let dets_file: DetectionsFile = read_json(&args.detections)?;
    let mut images: BTreeMap<u64, ImageEval> = scenes
        .iter()
        .map(|s| {
            let gts = s.objects.iter().map(|o| (o.bbox, o.category)).collect();
            (s.image_id, (Vec::new(), gts))
        })
        .collect();
    for (i, rec) in dets_file.detections.iter().enumerate() {
        let det = rec
            .to_detection()
            .with_context(|| format!("{dets_name}: detection {i}"))?;
        if det.bbox.space() != Space::Original {
            bail!(
                "{dets_name}: detection {i} is in {}, not original",
                det.bbox.space()
            );
        }
        images
            .get_mut(&rec.image_id)
            .ok_or_else(|| {
                anyhow!(
                    "{dets_name}: detection {i} names unknown image {}",
                    rec.image_id
                )
            })?
            .0
            .push(det);
    }
    let images: Vec<ImageEval> = images.into_values().collect();
    let ap = average_precision_images(&images, &thresholds)?;
    let mut s = String::from("iou,ap\n");
    for (iou, v) in &ap.per_threshold {
        let _ = writeln!(s, "{},{}", sig6(*iou), sig6(*v));
    }
    let _ = writeln!(s, "mean,{}", sig6(ap.mean));
    emit(args.out.as_deref(), &s)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Labels(a) => labels_cmd(a),
        Command::Chips(a) => chips_cmd(a),
        Command::Stack(a) => stack_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
        Command::Bound(a) => bound_cmd(a),
        Command::Recall(a) => recall_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

/// Parses the process arguments and runs; usage errors exit with status 2,
/// failures with status 1.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
