use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use vidpose::eval::{fill_trajectory, sampson_eval, trajectory_report, AnnotatedPair, EvalConfig, EvalError, VideoPoses};
use vidpose::filtering::{average_precision, cascade, pr_curve as sweep, score_signals, Component, FilterError, FilterSignals, LabeledVideo, PrPoint};
use vidpose::geometry::{CameraIntrinsics, Point2, Trajectory};
use vidpose::io::*;
use vidpose::masking::{propagate_keyframes, segment_sequence, semantic_class_filter, union_masks, DynamicMask, FlowField, LabelMap};
use vidpose::sfm::{run_pipeline, SfmError, SfmStatus};
use vidpose::synth::{gen_scene, make_filter_fixture, project_tracks, FixtureKind, TrajectoryKind};
use vidpose::tracking::{extract_correspondences, tracklets_from_correspondences, ExtractOptions, Tracklet};

use crate::files::{at, numbered, numbered_name, per_video, read_bytes, read_text, write, CliError};

pub struct Context {
    pub config: PipelineConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn filter_error(e: FilterError) -> CliError {
    CliError::Input(e.to_string())
}

fn write_pr(ctx: &Context, scores: &[f64], labels: &[bool]) -> Result<f64, CliError> {
    let curve: Vec<PrPoint> = sweep(scores, labels).map_err(filter_error)?;
    let mut text = String::from("threshold,recall,precision\n");
    for p in &curve {
        text.push_str(&format!("{:?},{:?},{:?}\n", p.threshold, p.recall, p.precision));
    }
    write(&ctx.path("pr_curve.csv"), text)?;
    let ap = average_precision(&curve);
    println!("average precision {ap}");
    Ok(ap)
}

fn labels_for(path: &Path, ids: &[String]) -> Result<Vec<bool>, CliError> {
    let labels: BTreeMap<String, bool> = read_labels(&read_text(path)?).map_err(at(path))?.into_iter().map(|LabeledVideo { id, suitable }| (id, suitable)).collect();
    ids.iter().map(|id| labels.get(id).copied().ok_or_else(|| CliError::Input(format!("{}: no label for video {id}", path.display())))).collect()
}

pub fn filter(ctx: &Context, signals: &Path, labels: Option<&Path>) -> Result<(), CliError> {
    let files = per_video(signals, "json")?;
    if files.is_empty() {
        return Err(CliError::Input(format!("{}: no signal files", signals.display())));
    }
    let parsed: Vec<FilterSignals> = files.values().map(|p| read_signals(&read_text(p)?).map_err(at(p))).collect::<Result<_, _>>()?;
    let (t, stages) = (&ctx.config.filter, &ctx.config.stages);
    let rows: Vec<(String, Vec<f64>)> = parsed
        .par_iter()
        .map(|s| {
            let full = score_signals(t, s)?;
            let outcome = cascade(t, s, stages)?;
            let mut row: Vec<f64> = Component::ALL.iter().map(|&c| full.get(c).unwrap_or(f64::NAN)).collect();
            row.push(full.aggregate());
            row.push(if outcome.included { 1.0 } else { 0.0 });
            row.push(outcome.excluded_at.map_or(-1.0, |i| i as f64));
            Ok((s.id.clone(), row))
        })
        .collect::<Result<_, FilterError>>()
        .map_err(filter_error)?;
    let mut columns: Vec<String> = Component::ALL.iter().map(|c| c.name().to_string()).collect();
    columns.extend(["score", "included", "excluded_at_stage"].map(String::from));
    let included = rows.iter().filter(|(_, r)| r[8] == 1.0).count();
    let table = ReportTable { key: "video".into(), columns, rows };
    write(&ctx.path("decisions.csv"), write_report(&table))?;
    println!("{included} of {} videos included", table.rows.len());
    if let Some(labels) = labels {
        let ids: Vec<String> = table.rows.iter().map(|(id, _)| id.clone()).collect();
        let truth = labels_for(labels, &ids)?;
        let scores: Vec<f64> = table.rows.iter().map(|(_, r)| r[7]).collect();
        write_pr(ctx, &scores, &truth)?;
    }
    Ok(())
}

pub fn pr_curve(ctx: &Context, scores: &Path, labels: &Path) -> Result<(), CliError> {
    let table = read_report(&read_text(scores)?).map_err(at(scores))?;
    let col = table.columns.iter().position(|c| c == "score").ok_or_else(|| CliError::Input(format!("{}: no score column", scores.display())))?;
    let ids: Vec<String> = table.rows.iter().map(|(id, _)| id.clone()).collect();
    let truth = labels_for(labels, &ids)?;
    let values: Vec<f64> = table.rows.iter().map(|(_, r)| r[col]).collect();
    write_pr(ctx, &values, &truth).map(|_| ())
}

fn read_masks(dir: &Path) -> Result<BTreeMap<u32, DynamicMask>, CliError> {
    numbered(dir, "mask_", ".pgm")?
        .into_iter()
        .map(|(f, p)| {
            let mut m = read_mask_pgm(&read_bytes(&p)?, None).map_err(at(&p))?;
            m.frame_index = f;
            Ok((f, m))
        })
        .collect()
}

fn same_size(dims: &mut Option<(u32, u32)>, w: u32, h: u32, p: &Path) -> Result<(), CliError> {
    match *dims {
        Some(d) if d != (w, h) => Err(at(p)(FormatError::DimensionMismatch { expected: d, got: (w, h) })),
        _ => {
            *dims = Some((w, h));
            Ok(())
        }
    }
}

pub fn mask(ctx: &Context, flows: Option<&Path>, labelmaps: Option<&Path>, num_frames: Option<u32>) -> Result<(), CliError> {
    if flows.is_none() && labelmaps.is_none() {
        return Err(CliError::Input("need --flows and/or --labelmaps".into()));
    }
    let mut dims: Option<(u32, u32)> = None;
    let mut pairs: BTreeMap<u32, (FlowField, FlowField)> = BTreeMap::new();
    if let Some(dir) = flows {
        let bwd = numbered(dir, "bwd_", ".dpfl")?;
        for (f, p) in numbered(dir, "fwd_", ".dpfl")? {
            let q = bwd.get(&f).ok_or_else(|| CliError::Input(format!("{}: no backward flow for frame {f}", dir.display())))?;
            let fwd = read_flow(&read_bytes(&p)?, f).map_err(at(&p))?;
            let back = read_flow(&read_bytes(q)?, f + 1).map_err(at(q))?;
            same_size(&mut dims, fwd.width, fwd.height, &p)?;
            same_size(&mut dims, back.width, back.height, q)?;
            pairs.insert(f, (fwd, back));
        }
    }
    let mut labels: BTreeMap<u32, LabelMap> = BTreeMap::new();
    if let Some(dir) = labelmaps {
        for (f, p) in numbered(dir, "labels_", ".pgm")? {
            let l = read_labelmap_pgm(&read_bytes(&p)?, dims).map_err(at(&p))?;
            same_size(&mut dims, l.width, l.height, &p)?;
            labels.insert(f, l);
        }
    }
    let (width, height) = dims.ok_or_else(|| CliError::Input("no flow or label map files found".into()))?;
    let inferred = pairs.keys().next_back().map_or(0, |f| f + 2).max(labels.keys().next_back().map_or(0, |f| f + 1));
    let n = num_frames.unwrap_or(inferred);
    let m = &ctx.config.masking;
    let stride = m.keyframe_stride;
    let keyframe_pairs: Vec<(FlowField, FlowField)> = pairs.iter().filter(|(f, _)| *f % stride == 0 && **f < n).map(|(_, p)| p.clone()).collect();
    let motion: BTreeMap<u32, DynamicMask> = segment_sequence(&keyframe_pairs, &m.motion, ctx.seed)
        .map_err(|e| CliError::Pipeline(e.to_string()))?
        .into_iter()
        .map(|mk| (mk.frame_index, mk))
        .collect();
    let masks = propagate_keyframes(n, width, height, stride, m.propagate_frames, |key| {
        let mut parts = Vec::new();
        match motion.get(&key) {
            Some(mk) => parts.push(mk.clone()),
            None if flows.is_some() => warn!("keyframe {key} has no flow pair; motion mask left empty"),
            None => {}
        }
        if let Some(l) = labels.get(&key) {
            parts.push(semantic_class_filter(l, key));
        }
        if parts.is_empty() {
            return DynamicMask::empty(key, width, height);
        }
        union_masks(&parts).expect("sizes were checked on read")
    });
    for mk in &masks {
        write(&ctx.path(&numbered_name("mask_", mk.frame_index, ".pgm")), write_mask_pgm(mk))?;
    }
    println!("wrote {} masks", masks.len());
    Ok(())
}

fn load_tracklets(path: &Path) -> Result<Vec<Tracklet>, CliError> {
    read_tracklets(&read_text(path)?).map_err(at(path))
}

pub fn correspond(ctx: &Context, tracklets: &Path, masks: Option<&Path>, num_frames: Option<u32>) -> Result<(), CliError> {
    let t = load_tracklets(tracklets)?;
    let masks = masks.map(read_masks).transpose()?.unwrap_or_default();
    let options = ExtractOptions { dedup: ctx.config.sfm.dedup_correspondences, num_frames };
    let set = extract_correspondences(&t, &masks, &options);
    write(&ctx.path("correspondences.csv"), write_correspondences(&set))?;
    println!("{} correspondences over {} frame pairs", set.total(), set.pairs.len());
    Ok(())
}

pub fn sfm(
    ctx: &Context,
    tracklets: Option<&Path>,
    masks: Option<&Path>,
    correspondences: Option<&Path>,
    intrinsics: &Path,
    num_frames: Option<u32>,
) -> Result<(), CliError> {
    let k = read_intrinsics(&read_text(intrinsics)?).map_err(at(intrinsics))?;
    let (t, masks) = match (tracklets, correspondences) {
        (Some(p), _) => (load_tracklets(p)?, masks.map(read_masks).transpose()?.unwrap_or_default()),
        (None, Some(p)) => {
            let set = read_correspondences(&read_text(p)?).map_err(at(p))?;
            (tracklets_from_correspondences(&set), BTreeMap::new())
        }
        (None, None) => return Err(CliError::Input("need --tracklets or --correspondences".into())),
    };
    let mut config = ctx.config.sfm_config();
    if num_frames.is_some() {
        config.num_frames = num_frames;
    }
    let model = run_pipeline(&t, &masks, &k, &config, ctx.seed).map_err(|e| match e {
        SfmError::Track(_) | SfmError::Geometry(_) => CliError::Input(e.to_string()),
        e => CliError::Pipeline(e.to_string()),
    })?;
    write(&ctx.path("trajectory.txt"), write_scene_tum(&model))?;
    let report = json!({
        "status": model.status,
        "attempts": model.attempts,
        "registered_fraction": model.registered_fraction(),
        "mean_reprojection_error_px": model.mean_reprojection_error,
        "landmarks": model.landmarks.len(),
        "focal_px": model.intrinsics.fx,
        "flags": model.flags,
    });
    write(&ctx.path("scene.json"), serde_json::to_string_pretty(&report).expect("json values serialize") + "\n")?;
    match &model.status {
        SfmStatus::Registered => {
            println!("registered {:.1}% of frames, reprojection {:.3} px", 100.0 * model.registered_fraction(), model.mean_reprojection_error);
            Ok(())
        }
        SfmStatus::Failed { reason } => Err(CliError::Pipeline(format!("registration failed: {reason}"))),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Geometry(_) => CliError::Pipeline(e.to_string()),
        e => CliError::Input(e.to_string()),
    }
}

fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    read_tum(&read_text(path)?).map_err(at(path))
}

pub fn eval_traj(ctx: &Context, gt: &Path, pred: &Path) -> Result<(), CliError> {
    let gts = per_video(gt, "txt")?;
    let mut preds = per_video(pred, "txt")?;
    if gt.is_file() && pred.is_file() {
        // single files pair up regardless of their names
        preds = gts.keys().map(|k| (k.clone(), pred.to_path_buf())).collect();
    }
    if gts.is_empty() {
        return Err(CliError::Input(format!("{}: no trajectories", gt.display())));
    }
    let eval = EvalConfig { random_fill_seed: ctx.config.eval.random_fill_seed ^ ctx.seed, ..ctx.config.eval.clone() };
    let mut rows = Vec::new();
    for (video, path) in &gts {
        let g = load_trajectory(path)?;
        let p = preds.get(video).map(|p| load_trajectory(p)).transpose()?;
        if p.is_none() {
            warn!("{video}: no prediction; scoring a random trajectory");
        }
        let r = trajectory_report(&g, p.as_ref(), &eval).map_err(eval_error).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{video}: {m}")),
            CliError::Pipeline(m) => CliError::Pipeline(format!("{video}: {m}")),
        })?;
        rows.push((video.clone(), r));
    }
    let table = trajectory_report_table(&rows);
    write(&ctx.path("trajectory_report.csv"), write_report(&table))?;
    let agg = table.aggregate();
    println!("ate {:.3e} rpe_trans {:.3e} rpe_rot {:.3e} deg over {} videos", agg[0], agg[1], agg[2], rows.len());
    Ok(())
}

pub fn eval_sampson(ctx: &Context, pairs: &Path, pred: &Path, intrinsics: &Path) -> Result<(), CliError> {
    let annotated: Vec<AnnotatedPair> = read_pairs(&read_text(pairs)?).map_err(at(pairs))?;
    let videos: BTreeSet<String> = annotated.iter().map(|p| p.video.clone()).collect();
    let mut preds = per_video(pred, "txt")?;
    // a lone prediction file scores the lone annotated video whatever its name
    if pred.is_file() && videos.len() == 1 {
        let file = preds.into_values().next().expect("one file");
        preds = BTreeMap::from([(videos.first().expect("one video").clone(), file)]);
    }
    for extra in preds.keys().filter(|v| !videos.contains(*v)) {
        warn!("{extra}: prediction has no annotated pairs; skipped");
    }
    let shared = if intrinsics.is_file() { Some(read_intrinsics(&read_text(intrinsics)?).map_err(at(intrinsics))?) } else { None };
    let per_k = if shared.is_none() { per_video(intrinsics, "json")? } else { BTreeMap::new() };
    let mut poses = BTreeMap::new();
    for video in videos {
        let k: CameraIntrinsics = match (&shared, per_k.get(&video)) {
            (Some(k), _) => *k,
            (None, Some(p)) => read_intrinsics(&read_text(p)?).map_err(at(p))?,
            (None, None) => return Err(CliError::Input(format!("{}: no intrinsics for video {video}", intrinsics.display()))),
        };
        let traj = match preds.get(&video) {
            Some(p) => load_trajectory(p)?,
            None => {
                warn!("{video}: no prediction; using identity poses");
                Trajectory::new(Vec::new(), ctx.config.fps).expect("positive fps")
            }
        };
        let mine: Vec<&AnnotatedPair> = annotated.iter().filter(|p| p.video == video).collect();
        for p in &mine {
            p.validate(traj.fps, &k).map_err(|e| CliError::Input(format!("{}: {video}: {e}", pairs.display())))?;
        }
        let last = mine.iter().map(|p| p.frame_a.max(p.frame_b)).chain(traj.frames.last().map(|(f, _)| *f)).max();
        let filled = fill_trajectory(&traj, last.map_or(0, |f| f + 1));
        poses.insert(video, VideoPoses { trajectory: filled, intrinsics: k });
    }
    let report = sampson_eval(&poses, &annotated, &ctx.config.eval.thresholds_px).map_err(eval_error)?;
    write(&ctx.path("sampson_report.csv"), write_report(&sampson_report_table(&report)))?;
    let acc: Vec<String> = report.thresholds.iter().zip(&report.accuracy).map(|(t, a)| format!("<{t}px {a}")).collect();
    println!("mean {:.3e} px, {}", report.mean, acc.join(", "));
    Ok(())
}

/// Up to `max` annotated pairs from static points seen in both frames,
/// frames at most 2.5 s apart, in 720p pixels.
fn synth_pairs(scene: &vidpose::synth::SynthScene, video: &str, max: usize) -> Vec<AnnotatedPair> {
    let n = scene.num_frames();
    let gap = ((2.5 * scene.fps()).floor() as u32).clamp(1, n.saturating_sub(1).max(1));
    let scale = scene.intrinsics.scale_to_720p();
    let statics = scene.static_points.len();
    let mut out = Vec::new();
    let mut i = 0usize;
    for a in 0..n.saturating_sub(1) {
        let b = (a + 1 + (a * 7) % gap).min(n - 1);
        for _ in 0..statics {
            i = (i + 37) % statics.max(1);
            if let (Some(pa), Some(pb)) = (scene.observe(i, a), scene.observe(i, b)) {
                out.push(AnnotatedPair {
                    video: video.into(),
                    frame_a: a,
                    frame_b: b,
                    point_a: Point2::new(pa.x * scale, pa.y * scale),
                    point_b: Point2::new(pb.x * scale, pb.y * scale),
                });
                break;
            }
        }
        if out.len() >= max {
            break;
        }
    }
    out
}

pub fn synth(ctx: &Context, kind: &str, num_frames: Option<u32>, noise_px: Option<f64>, flows: bool) -> Result<(), CliError> {
    let kind = TrajectoryKind::parse(kind).ok_or_else(|| CliError::Input(format!("unknown trajectory kind {kind:?}")))?;
    let mut scene_cfg = ctx.config.synth.scene.clone();
    scene_cfg.trajectory_kind = kind;
    scene_cfg.fps = ctx.config.fps;
    if let Some(n) = num_frames {
        scene_cfg.num_frames = n;
    }
    let mut track_cfg = ctx.config.synth.tracks.clone();
    if let Some(noise) = noise_px {
        track_cfg.noise_px = noise;
    }
    track_cfg.with_flows |= flows;
    let scene = gen_scene(ctx.seed, &scene_cfg);
    let tracks = project_tracks(&scene, &track_cfg, ctx.seed).map_err(|e| CliError::Input(e.to_string()))?;
    let video = format!("{}_{}", kind.name(), ctx.seed);
    write(&ctx.path("intrinsics.json"), write_intrinsics(&scene.intrinsics))?;
    write(&ctx.path("gt_trajectory.txt"), write_tum(&scene.gt_trajectory))?;
    write(&ctx.path("tracklets.jsonl"), write_tracklets(&tracks.tracklets))?;
    for m in &tracks.masks {
        write(&ctx.path(&format!("masks/{}", numbered_name("mask_", m.frame_index, ".pgm"))), write_mask_pgm(m))?;
    }
    for (fwd, bwd) in &tracks.flows {
        write(&ctx.path(&format!("flows/{}", numbered_name("fwd_", fwd.frame, ".dpfl"))), write_flow(fwd))?;
        write(&ctx.path(&format!("flows/{}", numbered_name("bwd_", fwd.frame, ".dpfl"))), write_flow(bwd))?;
    }
    write(&ctx.path("pairs.jsonl"), write_pairs(&synth_pairs(&scene, &video, 200)))?;
    let mut labels = Vec::new();
    for fixture in FixtureKind::ALL {
        let (mut signals, suitable) = make_filter_fixture(fixture, ctx.seed);
        signals.id = fixture.name().to_string();
        write(&ctx.path(&format!("signals/{}.json", fixture.name())), write_signals(&signals))?;
        labels.push(LabeledVideo { id: signals.id, suitable });
    }
    write(&ctx.path("labels.jsonl"), write_labels(&labels))?;
    info!("scene {video}: {} tracklets, {} frames", tracks.tracklets.len(), scene.num_frames());
    println!("wrote {video} to {}", ctx.out.display());
    Ok(())
}
