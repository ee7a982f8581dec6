//! `lrpd` command-line front end. Stages exchange files under one output
//! directory:
//!
//! ```text
//! out/proposals/<id>.jsonl      propose
//! out/predictions/<id>.txt      propose (KITTI labels with scores)
//! out/propose_summary.json      propose
//! out/augmented/<id>.jsonl      augment
//! out/voxels/<id>.bin, .json    voxelize
//! out/eval_report.json, .csv    evaluate
//! out/stats.json, .csv          stats
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, derive_seed, AugmentConfig, AugmentMode, AugmentedProposal};
use crate::error::{Error, Result};
use crate::eval::{
    dataset_stats, evaluate_objects, frame_objects, range_binned_map, Difficulty, EvalConfig,
    EvalFrame, EvalObject, FrameObjects, MatchCriterion,
};
use crate::geometry::{bev_iou, Box3D, Point3};
use crate::kitti_io::{
    generate_synthetic_frame, parse_label_file, parse_masks, random_scene, read_velodyne,
    write_label_file, write_masks, write_velodyne, KittiLayout, LabelRecord,
};
use crate::loss::{automated_focal_loss, heading_loss, smooth_l1};
use crate::oracle::{central_difference, monte_carlo_bev_iou, threshold_enumeration};
use crate::proposal::{propose_frame, survivors_per_instance, MeanBoxConfig, Proposal, DEFAULT_NMS_IOU};
use crate::voxel::{projected_roi, voxelize, VoxelConfig, VoxelSidecar};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { frames: 20 }
    }
}

/// Settings for a whole run. Loaded from TOML; command-line flags override.
/// Relative paths in a config file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset split directory with velodyne/, calib/, label_2/, masks/.
    pub root: Option<PathBuf>,
    /// File with one frame id per line; all calibrated frames otherwise.
    pub split: Option<PathBuf>,
    pub out: PathBuf,
    /// KITTI-format prediction directory for `evaluate`; defaults to
    /// `<out>/predictions`.
    pub predictions: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub mode: AugmentMode,
    pub mean_box: MeanBoxConfig,
    pub nms_iou: f64,
    pub augment: AugmentConfig,
    pub voxel: VoxelConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            root: None,
            split: None,
            out: PathBuf::from("out"),
            predictions: None,
            seed: 0,
            jobs: 0,
            mode: AugmentMode::Combined,
            mean_box: MeanBoxConfig::default(),
            nms_iou: DEFAULT_NMS_IOU,
            augment: AugmentConfig::default(),
            voxel: VoxelConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.root.as_mut().map(rebase);
        cfg.split.as_mut().map(rebase);
        cfg.predictions.as_mut().map(rebase);
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.mean_box.validate().map_err(cfg)?;
        self.augment.validate().map_err(cfg)?;
        self.voxel.validate().map_err(cfg)?;
        self.eval.validate().map_err(cfg)?;
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!("nms_iou {} not in (0, 1]", self.nms_iou)));
        }
        Ok(())
    }

    fn layout(&self) -> Result<KittiLayout> {
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset root (use --root or `root` in the config)".into()))?;
        Ok(KittiLayout::new(root))
    }

    fn frame_ids(&self) -> Result<Vec<String>> {
        let layout = self.layout()?;
        let split = self.split.clone().or_else(|| {
            let p = layout.root.join("split.txt");
            p.exists().then_some(p)
        });
        layout.frame_ids(split.as_deref())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lrpd", version, about = "Long-range pedestrian detection toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset split directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Split file listing frame ids.
    #[arg(long, global = true)]
    split: Option<PathBuf>,
    /// Augmentation mode: random, grounding or combined.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Prediction directory for `evaluate`.
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus into --root.
    Synth {
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Instance-mask proposals with per-instance NMS.
    Propose,
    /// Displaced and grounded copies with labels and regression targets.
    Augment,
    /// 64x64x9 height/density crops around every proposal.
    Voxelize,
    /// Range-binned AP and best-F1 report.
    Evaluate,
    /// Points and pixels per object, by range.
    Stats,
    /// Runs the built-in oracle checks.
    Selfcheck,
}

fn resolve(args: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            PipelineConfig::from_toml(&text, base)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(r) = &args.root {
        cfg.root = Some(r.clone());
    }
    if let Some(s) = &args.split {
        cfg.split = Some(s.clone());
    }
    if let Some(m) = &args.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(p) = &args.predictions {
        cfg.predictions = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = resolve(&cli.global).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| dispatch(&cli.command, &cfg))
    });
    match result {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(cmd: &Command, cfg: &PipelineConfig) -> Result<i32> {
    match cmd {
        Command::Synth { frames } => cmd_synth(cfg, frames.unwrap_or(cfg.synth.frames)),
        Command::Propose => cmd_propose(cfg),
        Command::Augment => cmd_augment(cfg),
        Command::Voxelize => cmd_voxelize(cfg),
        Command::Evaluate => cmd_evaluate(cfg),
        Command::Stats => cmd_stats(cfg),
        Command::Selfcheck => Ok(if selfcheck(cfg.seed, &mut std::io::stdout()) {
            EXIT_OK
        } else {
            EXIT_DATA
        }),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Path {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| Error::Path {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Path {
        path: path.display().to_string(),
        source,
    })
}

fn to_json_pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    Ok(s)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Serialize)]
struct FrameFailure {
    frame: String,
    error: String,
}

/// Runs `f` over frames in parallel, keeping input order. Returns the
/// successes and the per-frame errors.
fn per_frame<T: Send>(ids: &[String], f: impl Fn(&str) -> Result<T> + Sync) -> (Vec<(String, T)>, Vec<FrameFailure>) {
    let results: Vec<(String, Result<T>)> = ids.par_iter().map(|id| (id.clone(), f(id))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => {
                log::error!("{e}");
                failed.push(FrameFailure {
                    frame: id,
                    error: e.to_string(),
                })
            }
        }
    }
    log::info!("{} frame(s) processed, {} failed", ok.len(), failed.len());
    (ok, failed)
}

fn exit_for(failed: &[FrameFailure]) -> i32 {
    if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_DATA
    }
}

fn cmd_synth(cfg: &PipelineConfig, frames: usize) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids: Vec<String> = (0..frames).map(|i| format!("{i:06}")).collect();
    let (_, failed) = per_frame(&ids, |id| {
        let k = id.parse::<u64>().unwrap_or(0);
        let spec = random_scene(id, derive_seed(cfg.seed, "scene", k as usize));
        let frame = generate_synthetic_frame(&spec, derive_seed(cfg.seed, id, 0));
        layout.write_frame(&frame)
    });
    write(&layout.root.join("split.txt"), ids.iter().map(|i| format!("{i}\n")).collect::<String>())?;
    Ok(exit_for(&failed))
}

fn proposals_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out.join("proposals")
}

/// KITTI prediction line for a proposal; `None` if its projection misses
/// the image.
fn prediction_record(p: &Proposal, calib: &crate::geometry::Calibration) -> Option<LabelRecord> {
    let roi = projected_roi(&p.bbox, calib, 1.0).ok()?;
    let (w, h) = (calib.image_width as f64, calib.image_height as f64);
    let bbox = [roi.left.max(0.0), roi.top.max(0.0), roi.right.min(w), roi.bottom.min(h)];
    // label text keeps two decimals
    let ok = (bbox[2] * 100.0).round() > (bbox[0] * 100.0).round() && (bbox[3] * 100.0).round() > (bbox[1] * 100.0).round();
    ok.then(|| LabelRecord::from_box("Pedestrian", &p.bbox, bbox, Some(p.bbox.score)))
}

#[derive(Debug, Serialize)]
struct ProposeSummary {
    frames: usize,
    proposals: usize,
    instances: usize,
    /// survivors per instance -> number of instances
    survivor_histogram: BTreeMap<usize, usize>,
    fraction_1_to_5: Option<f64>,
    failed: Vec<FrameFailure>,
}

fn cmd_propose(cfg: &PipelineConfig) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids = cfg.frame_ids()?;
    let (ok, failed) = per_frame(&ids, |id| {
        let frame = layout.load_frame(id, true, false)?;
        let props = propose_frame(&frame, &cfg.mean_box, cfg.nms_iou);
        write(&proposals_dir(cfg).join(format!("{id}.jsonl")), jsonl(&props)?)?;
        let preds: Vec<LabelRecord> = props.iter().filter_map(|p| prediction_record(p, &frame.calib)).collect();
        write(&cfg.out.join("predictions").join(format!("{id}.txt")), write_label_file(&preds))?;
        Ok((props.len(), survivors_per_instance(&props)))
    });
    let mut hist = BTreeMap::new();
    let (mut n_props, mut n_inst, mut in_range) = (0, 0, 0);
    for (_, (n, per_inst)) in &ok {
        n_props += n;
        for &c in per_inst.values() {
            *hist.entry(c).or_insert(0) += 1;
            n_inst += 1;
            in_range += (1..=5).contains(&c) as usize;
        }
    }
    let summary = ProposeSummary {
        frames: ok.len(),
        proposals: n_props,
        instances: n_inst,
        survivor_histogram: hist,
        fraction_1_to_5: (n_inst > 0).then(|| in_range as f64 / n_inst as f64),
        failed,
    };
    write(&cfg.out.join("propose_summary.json"), to_json_pretty(&summary)?)?;
    Ok(exit_for(&summary.failed))
}

#[derive(Debug, Serialize, Deserialize)]
struct AugmentRecord {
    proposal_index: usize,
    #[serde(flatten)]
    item: AugmentedProposal,
}

fn gt_boxes(labels: &[LabelRecord], class: &str, frame: &str) -> Result<Vec<Box3D>> {
    labels
        .iter()
        .filter(|l| l.kind.eq_ignore_ascii_case(class))
        .map(|l| l.to_box().map_err(|e| e.in_frame(frame)))
        .collect()
}

fn cmd_augment(cfg: &PipelineConfig) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids = cfg.frame_ids()?;
    let (_, failed) = per_frame(&ids, |id| {
        let frame = layout.load_frame(id, false, true)?;
        let props: Vec<Proposal> = read_jsonl(&proposals_dir(cfg).join(format!("{id}.jsonl")))
            .map_err(|e| e.in_frame(id))?;
        let gts = gt_boxes(frame.labels.as_deref().unwrap_or_default(), &cfg.eval.class, id)?;
        let points = frame.calib.cloud_to_rect(&frame.cloud);
        let mut records = Vec::new();
        for (k, p) in props.iter().enumerate() {
            let seed = derive_seed(cfg.seed, id, k);
            for item in augment(cfg.mode, p, &points, &gts, &cfg.augment, seed) {
                records.push(AugmentRecord { proposal_index: k, item });
            }
        }
        write(&cfg.out.join("augmented").join(format!("{id}.jsonl")), jsonl(&records)?)
    });
    Ok(exit_for(&failed))
}

#[derive(Debug, Serialize)]
struct VoxelEntry {
    proposal_index: usize,
    origin: [f64; 3],
    points: u64,
    /// Image ROI (left, top, right, bottom), enlarged and clamped.
    roi: Option<[f64; 4]>,
}

#[derive(Debug, Serialize)]
struct VoxelFile {
    frame_id: String,
    count: usize,
    /// Layout of one crop; the file holds `count` crops back to back.
    grid: VoxelSidecar,
    entries: Vec<VoxelEntry>,
}

fn cmd_voxelize(cfg: &PipelineConfig) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids = cfg.frame_ids()?;
    let sidecar = voxelize(&[], &Point3::default(), &cfg.voxel).sidecar();
    let (_, failed) = per_frame(&ids, |id| {
        let frame = layout.load_frame(id, false, false)?;
        let props: Vec<Proposal> = read_jsonl(&proposals_dir(cfg).join(format!("{id}.jsonl")))
            .map_err(|e| e.in_frame(id))?;
        let points = frame.calib.cloud_to_rect(&frame.cloud);
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        for (k, p) in props.iter().enumerate() {
            let grid = voxelize(&points, &p.bbox.center(), &cfg.voxel);
            bytes.extend_from_slice(&grid.to_tensor_bytes());
            let roi = crate::voxel::image_roi(&p.bbox, &frame.calib)
                .ok()
                .map(|r| [r.left, r.top, r.right, r.bottom]);
            entries.push(VoxelEntry {
                proposal_index: k,
                origin: grid.origin,
                points: grid.total_count(),
                roi,
            });
        }
        let dir = cfg.out.join("voxels");
        write(&dir.join(format!("{id}.bin")), &bytes)?;
        let meta = VoxelFile {
            frame_id: id.to_owned(),
            count: entries.len(),
            grid: VoxelSidecar {
                origin: [0.0; 3],
                ..sidecar.clone()
            },
            entries,
        };
        write(&dir.join(format!("{id}.json")), to_json_pretty(&meta)?)
    });
    Ok(exit_for(&failed))
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids = cfg.frame_ids()?;
    let pred_dir = cfg.predictions.clone().unwrap_or_else(|| cfg.out.join("predictions"));
    let (ok, failed) = per_frame(&ids, |id| {
        let pred_path = pred_dir.join(format!("{id}.txt"));
        if !pred_path.exists() || !layout.label_path(id).exists() {
            return Ok(None);
        }
        let ground_truth = layout.load_labels(id)?;
        let detections = parse_label_file(&read(&pred_path)?).map_err(|e| e.in_frame(id))?;
        Ok(Some(EvalFrame {
            frame_id: id.to_owned(),
            ground_truth,
            detections,
        }))
    });
    if !failed.is_empty() {
        return Ok(EXIT_DATA);
    }
    let mut frames = Vec::new();
    let mut skipped = Vec::new();
    for (id, f) in ok {
        match f {
            Some(f) => frames.push(f),
            None => skipped.push(id),
        }
    }
    if !skipped.is_empty() {
        log::warn!("{} frame(s) without matching prediction or label file skipped", skipped.len());
    }
    let mut report = range_binned_map(&frames, &cfg.eval)?;
    report.skipped_frames = skipped;
    write(&cfg.out.join("eval_report.json"), to_json_pretty(&report)?)?;
    write(&cfg.out.join("eval_report.csv"), report.to_csv())?;
    Ok(EXIT_OK)
}

fn cmd_stats(cfg: &PipelineConfig) -> Result<i32> {
    let layout = cfg.layout()?;
    let ids = cfg.frame_ids()?;
    let (ok, failed) = per_frame(&ids, |id| layout.load_frame(id, false, true));
    let frames: Vec<_> = ok.into_iter().map(|(_, f)| f).collect();
    let stats = dataset_stats(&frames, &cfg.eval.bins, &cfg.eval.class)?;
    write(&cfg.out.join("stats.json"), to_json_pretty(&stats)?)?;
    write(&cfg.out.join("stats.csv"), stats.to_csv())?;
    Ok(exit_for(&failed))
}

fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> Box3D {
    Box3D::new(
        Point3::new(rng.gen_range(-spread..spread), 0.0, rng.gen_range(-spread..spread)),
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.3..3.0),
        1.0,
        rng.gen_range(-3.2..3.2),
    )
    .expect("positive dims")
}

/// Quick versions of the oracle checks. Writes one line per check and
/// returns whether all passed.
pub fn selfcheck(seed: u64, out: &mut impl std::io::Write) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        all &= ok;
        let _ = writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let a = random_box(&mut rng, 1.0);
        let b = random_box(&mut rng, 1.0);
        worst = worst.max((bev_iou(&a, &b) - monte_carlo_bev_iou(&a, &b, 300, seed ^ k)).abs());
    }
    report("bev_iou vs sampled area", worst < 5e-3, format!("max deviation {worst:.2e}"));

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p: f64 = rng.gen_range(0.01..0.99);
        let ph: f64 = rng.gen_range(0.01..1.0);
        let g = automated_focal_loss(p, ph).1;
        let n = central_difference(|x| automated_focal_loss(x, ph).0, p, 1e-5);
        worst = worst.max((g - n).abs() / g.abs().max(1e-12));
        let r: f64 = rng.gen_range(-3.0..3.0);
        if (r.abs() - 1.0).abs() > 1e-3 {
            let g = smooth_l1(r).1;
            let n = central_difference(|x| smooth_l1(x).0, r, 1e-5);
            worst = worst.max((g - n).abs() / g.abs().max(1e-12));
        }
        let (s, c, t) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0));
        let g = heading_loss(s, c, t).1[0];
        let n = central_difference(|x| heading_loss(x, c, t).0, s, 1e-5);
        if ((s - t.sin()).abs() - 1.0).abs() > 1e-3 {
            worst = worst.max((g - n).abs() / g.abs().max(1e-12));
        }
    }
    report("loss gradients vs central differences", worst < 1e-4, format!("max relative error {worst:.2e}"));

    let criterion = MatchCriterion::default();
    let mut mismatches = 0;
    let cases = 100;
    for _ in 0..cases {
        let frames: Vec<FrameObjects> = (0..2)
            .map(|_| {
                let gts: Vec<EvalObject> = (0..rng.gen_range(0..=3))
                    .map(|_| EvalObject {
                        bbox: random_box(&mut rng, 2.0),
                        ignored: rng.gen_bool(0.2),
                    })
                    .collect();
                let dets = (0..rng.gen_range(0..=5))
                    .map(|_| {
                        let s = rng.gen_range(1..=4) as f64 / 4.0;
                        EvalObject::valid(random_box(&mut rng, 2.0).with_score(s))
                    })
                    .collect();
                FrameObjects::new(dets, gts)
            })
            .collect();
        let fast = evaluate_objects(&frames, &criterion, &criterion);
        let slow = threshold_enumeration(&frames, &criterion);
        let same = fast.ap == slow.ap40
            && fast.ap_11pt == slow.ap11
            && match slow.best_f1 {
                Some(s) => {
                    let b = &fast.best_f1;
                    (b.precision, b.recall, b.f1, b.tp, b.fp) == (s.precision, s.recall, s.f1, s.tp, s.fp)
                }
                None => fast.best_f1.empty,
            };
        mismatches += !same as usize;
    }
    report("AP and best-F1 vs threshold enumeration", mismatches == 0, format!("{mismatches}/{cases} mismatches"));

    let frame = generate_synthetic_frame(&random_scene("000000", seed), seed);
    let velo_ok = read_velodyne(&write_velodyne(&frame.cloud)).is_ok_and(|c| c == frame.cloud);
    let labels = frame.labels.clone().unwrap_or_default();
    let label_ok = parse_label_file(&write_label_file(&labels)).is_ok_and(|l| l == labels);
    let masks = frame.masks.clone().expect("synthetic masks");
    let mask_ok = parse_masks(&write_masks(&masks)).is_ok_and(|m| m == masks);
    report(
        "format round trips",
        velo_ok && label_ok && mask_ok,
        format!("velodyne {velo_ok}, labels {label_ok}, masks {mask_ok}"),
    );

    let ef = EvalFrame {
        frame_id: frame.frame_id.clone(),
        ground_truth: labels.clone(),
        detections: labels,
    };
    let cfg = EvalConfig::default();
    let self_ap = frame_objects(&ef, &cfg, &Difficulty::hard())
        .map(|o| evaluate_objects(&[o], &cfg.ap_criterion, &cfg.f1_criterion).ap);
    let ok = matches!(self_ap, Ok(Some(ap)) if ap == 1.0) || matches!(self_ap, Ok(None));
    report("ground truth as predictions", ok, format!("{self_ap:?}"));
    all
}
