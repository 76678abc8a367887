//! The seven pipeline stages. Each one reads its predecessor's cached
//! artifacts and writes its own; re-running a stage with the same inputs and
//! seed is byte-identical.

use crate::data::synth::{synth_generate, SynthConfig};
use crate::data::{
    load_dataset, read_detections_csv, read_manifest, read_track_csv, write_detections_csv,
    write_frame_pgm, write_labels_csv, write_manifest, write_track_csv, DatasetManifest,
    VideoEntry, VideoRole,
};
use crate::error::{Error, Result};
use crate::eval::{
    line_plot, pr_auc, pr_curve, roc_auc, roc_curve, sweep_csv_line, tolerance_sweep, PlotSeries,
    ScoreLevel, ScoredSet, WindowScoreSet, SWEEP_CSV_HEADER,
};
use crate::flow::{farneback_flow, make_flow_image, read_flow_record, write_flow_record, FlowParams};
use crate::pipeline::{
    read_subvideo, resize_bilinear_f32, score_subvideo, split_subvideos, frame_scores,
    preprocess_frame, window_scores, write_subvideo, SubVideo, SubVideoSpan, PATCH, WINDOW_LEN,
};
use crate::roi::{run_tracker, RoiMask, TrackerConfig};
use crate::train::{
    train, ChannelSet, GanModels, LossConfig, LossRow, TrainConfig, TrainSample, Variant,
    WindowSet,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Optional per-weight overrides of the variant's default loss constants.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda: Option<f64>,
    pub lambda_s: Option<f64>,
    pub lambda_d: Option<f64>,
    pub lambda_t: Option<f64>,
    pub lambda_f: Option<f64>,
    pub lambda_t_s: Option<f64>,
    pub lambda_t_d: Option<f64>,
}

impl LossWeights {
    pub fn into_config(self, variant: Variant) -> LossConfig {
        let defaults = LossConfig::defaults(variant);
        LossConfig {
            variant,
            lambda: self.lambda.or(defaults.lambda),
            lambda_s: self.lambda_s.or(defaults.lambda_s),
            lambda_d: self.lambda_d.or(defaults.lambda_d),
            lambda_t: self.lambda_t.or(defaults.lambda_t),
            lambda_f: self.lambda_f.or(defaults.lambda_f),
            lambda_t_s: self.lambda_t_s.or(defaults.lambda_t_s),
            lambda_t_d: self.lambda_t_d.or(defaults.lambda_t_d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variant: Variant,
    #[serde(flatten)]
    pub config: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            variant: Variant::FusionDiffRoi3dcae,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    /// Break sub-videos after this many consecutive unlocalized frames.
    pub gap: usize,
}

impl Default for WindowsSection {
    fn default() -> Self {
        WindowsSection { gap: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Window-label tolerances to sweep.
    pub alphas: Vec<usize>,
    /// Emit SVG curve plots beside the CSV tables.
    pub svg: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            alphas: (1..=WINDOW_LEN).collect(),
            svg: true,
        }
    }
}

/// One JSON document with a section per pipeline stage.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub track: TrackerConfig,
    pub flow: FlowParams,
    pub windows: WindowsSection,
    pub train: TrainSection,
    pub loss: LossWeights,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn loss_config(&self, variant: Variant) -> LossConfig {
        self.loss.clone().into_config(variant)
    }
}

/// Artifact layout under the output and cache directories.
#[derive(Clone, Debug)]
pub struct StagePaths {
    pub out: PathBuf,
    pub cache: PathBuf,
}

impl StagePaths {
    pub fn new(out: impl Into<PathBuf>, cache: Option<PathBuf>) -> StagePaths {
        let out: PathBuf = out.into();
        let cache = cache.unwrap_or_else(|| out.join("cache"));
        StagePaths { out, cache }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join("dataset")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join("manifest.json")
    }
    pub fn labels_csv(&self) -> PathBuf {
        self.dataset_dir().join("labels.csv")
    }
    pub fn detections_csv(&self) -> PathBuf {
        self.dataset_dir().join("detections.csv")
    }
    pub fn track_csv(&self) -> PathBuf {
        self.cache.join("track.csv")
    }
    pub fn flow_dir(&self) -> PathBuf {
        self.cache.join("flow")
    }
    pub fn flow_file(&self, video_id: &str) -> PathBuf {
        self.flow_dir().join(format!("{video_id}.flow"))
    }
    pub fn subv_dir(&self) -> PathBuf {
        self.cache.join("subv")
    }
    pub fn checkpoints_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }
    pub fn checkpoint(&self, variant: Variant) -> PathBuf {
        self.checkpoints_dir().join(format!("{variant}.tfad"))
    }
    pub fn loss_log(&self, variant: Variant) -> PathBuf {
        self.out.join(format!("loss_log_{variant}.csv"))
    }
    pub fn scores_dir(&self) -> PathBuf {
        self.out.join("scores")
    }
    pub fn frame_scores_csv(&self, variant: Variant) -> PathBuf {
        self.scores_dir().join(format!("{variant}_frame.csv"))
    }
    pub fn window_scores_csv(&self, variant: Variant) -> PathBuf {
        self.scores_dir().join(format!("{variant}_window.csv"))
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, stage: &str, required: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingStage {
            stage: stage.into(),
            required: required.into(),
            path: path.to_path_buf(),
        })
    }
}

/// Generates the synthetic dataset: frames, manifest, labels, detections.
pub fn stage_synth(cfg: &PipelineConfig, paths: &StagePaths) -> Result<()> {
    let videos = synth_generate(&cfg.synth)?;
    mkdir(&paths.dataset_dir())?;
    let mut entries = Vec::new();
    let mut label_rows = Vec::new();
    let mut det_rows = Vec::new();
    for v in &videos {
        let dir = paths.dataset_dir().join("frames").join(&v.id);
        mkdir(&dir)?;
        for (t, frame) in v.frames.iter().enumerate() {
            write_frame_pgm(&dir.join(format!("f{t:05}.pgm")), frame)?;
        }
        if v.role == VideoRole::Fall {
            for (t, &l) in v.labels.iter().enumerate() {
                label_rows.push((v.id.clone(), t, l));
            }
        }
        for (t, dets) in v.detections.iter().enumerate() {
            for d in dets {
                det_rows.push((v.id.clone(), t, d.bbox, d.confidence));
            }
        }
        entries.push(VideoEntry {
            id: v.id.clone(),
            frames_dir: PathBuf::from("frames").join(&v.id),
            role: v.role,
        });
    }
    write_labels_csv(&paths.labels_csv(), &label_rows)?;
    write_detections_csv(&paths.detections_csv(), &det_rows)?;
    write_manifest(
        &paths.manifest(),
        &DatasetManifest {
            videos: entries,
            labels: Some(PathBuf::from("labels.csv")),
        },
    )
}

/// Runs the tracker over every video and writes the per-frame box CSV.
pub fn stage_track(cfg: &PipelineConfig, paths: &StagePaths) -> Result<()> {
    require(&paths.manifest(), "track", "synth")?;
    require(&paths.detections_csv(), "track", "synth")?;
    let dataset = load_dataset(&paths.manifest())?;
    let detections = read_detections_csv(&paths.detections_csv())?;
    mkdir(&paths.cache)?;
    let mut rows = Vec::new();
    for video in &dataset {
        let per_frame = detections.get(&video.id);
        let dets: Vec<Vec<crate::roi::Detection>> = (0..video.frames.len())
            .map(|t| {
                per_frame
                    .and_then(|m| m.get(&t))
                    .cloned()
                    .unwrap_or_default()
            })
            .collect();
        let tracked = run_tracker(&video.frames, &dets, &cfg.track);
        for (t, entry) in tracked.iter().enumerate() {
            rows.push((video.id.clone(), t, *entry));
        }
    }
    write_track_csv(&paths.track_csv(), &rows)
}

fn spans_for_video(
    tracks: &BTreeMap<usize, Option<(crate::roi::BBox, crate::roi::BoxSource)>>,
    frame_count: usize,
    gap: usize,
) -> Vec<SubVideoSpan> {
    let boxes: Vec<Option<crate::roi::BBox>> = (0..frame_count)
        .map(|t| tracks.get(&t).copied().flatten().map(|(b, _)| b))
        .collect();
    split_subvideos(&boxes, gap, WINDOW_LEN)
}

/// Computes dense flow for consecutive retained frames of every sub-video and
/// writes per-video flow record files.
pub fn stage_flow(cfg: &PipelineConfig, paths: &StagePaths) -> Result<()> {
    require(&paths.manifest(), "flow", "synth")?;
    require(&paths.track_csv(), "flow", "track")?;
    let dataset = load_dataset(&paths.manifest())?;
    let tracks = read_track_csv(&paths.track_csv())?;
    mkdir(&paths.flow_dir())?;
    for video in &dataset {
        let Some(per_frame) = tracks.get(&video.id) else {
            continue;
        };
        let spans = spans_for_video(per_frame, video.frames.len(), cfg.windows.gap);
        let path = paths.flow_file(&video.id);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for span in &spans {
            for pair in span.frames.windows(2) {
                let (ia, ba) = pair[0];
                let (ib, bb) = pair[1];
                let field =
                    farneback_flow(&video.frames[ia], &video.frames[ib], &cfg.flow)?;
                let union = RoiMask::from_box(field.width, field.height, &ba)
                    .union(&RoiMask::from_box(field.width, field.height, &bb));
                let img = make_flow_image(&field, &union)?;
                write_flow_record(&mut w, &img, &path)?;
            }
        }
        use std::io::Write;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Builds preprocessed sub-video tensors: normalized masked thermal frames,
/// ROI masks, resized flow magnitude, labels.
pub fn stage_windows(cfg: &PipelineConfig, paths: &StagePaths) -> Result<()> {
    require(&paths.manifest(), "windows", "synth")?;
    require(&paths.track_csv(), "windows", "track")?;
    require(&paths.flow_dir(), "windows", "flow")?;
    let dataset = load_dataset(&paths.manifest())?;
    let tracks = read_track_csv(&paths.track_csv())?;
    mkdir(&paths.subv_dir())?;
    for video in &dataset {
        let Some(per_frame) = tracks.get(&video.id) else {
            continue;
        };
        let spans = spans_for_video(per_frame, video.frames.len(), cfg.windows.gap);
        if spans.is_empty() {
            continue;
        }
        let flow_path = paths.flow_file(&video.id);
        require(&flow_path, "windows", "flow")?;
        let file = std::fs::File::open(&flow_path).map_err(|e| Error::io(&flow_path, e))?;
        let mut flow_reader = std::io::BufReader::new(file);
        for span in &spans {
            let mut sv = SubVideo {
                video_id: video.id.clone(),
                frame_indices: span.frames.iter().map(|&(i, _)| i as u32).collect(),
                thermal: Vec::with_capacity(span.frames.len()),
                masks: Vec::with_capacity(span.frames.len()),
                flow_mag: Vec::with_capacity(span.frames.len() - 1),
                labels: span
                    .frames
                    .iter()
                    .map(|&(i, _)| video.labels[i] as u8)
                    .collect(),
            };
            for &(idx, bbox) in &span.frames {
                let (plane, mask) = preprocess_frame(&video.frames[idx], &bbox);
                sv.thermal.push(plane);
                sv.masks.push(mask);
            }
            for _ in 0..span.frames.len() - 1 {
                let record = read_flow_record(&mut flow_reader, &flow_path)?.ok_or_else(|| {
                    Error::Format {
                        path: flow_path.clone(),
                        reason: "flow cache ended early; stale relative to track output".into(),
                    }
                })?;
                sv.flow_mag.push(resize_bilinear_f32(
                    &record.magnitude,
                    record.width as usize,
                    record.height as usize,
                    PATCH,
                    PATCH,
                ));
            }
            let start = span.frames[0].0;
            write_subvideo(
                &paths.subv_dir().join(format!("{}__{start:06}.subv", video.id)),
                &sv,
            )?;
        }
    }
    Ok(())
}

/// Sorted sub-video cache files.
fn subv_files(paths: &StagePaths) -> Result<Vec<PathBuf>> {
    let dir = paths.subv_dir();
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("subv"))
        .collect();
    files.sort();
    Ok(files)
}

fn video_roles(paths: &StagePaths) -> Result<BTreeMap<String, VideoRole>> {
    let manifest = read_manifest(&paths.manifest())?;
    Ok(manifest
        .videos
        .into_iter()
        .map(|v| (v.id, v.role))
        .collect())
}

/// Loads cached sub-videos filtered by role.
pub fn load_subvideos(paths: &StagePaths, role: VideoRole) -> Result<Vec<SubVideo>> {
    require(&paths.subv_dir(), "train/score", "windows")?;
    let roles = video_roles(paths)?;
    let mut out = Vec::new();
    for file in subv_files(paths)? {
        let sv = read_subvideo(&file)?;
        if roles.get(&sv.video_id) == Some(&role) {
            out.push(sv);
        }
    }
    Ok(out)
}

/// Lazy sliding-window view over a list of sub-videos.
pub struct SubVideoWindows {
    subs: Vec<SubVideo>,
    offsets: Vec<usize>,
    total: usize,
}

impl SubVideoWindows {
    pub fn new(subs: Vec<SubVideo>) -> SubVideoWindows {
        let mut offsets = Vec::with_capacity(subs.len());
        let mut total = 0;
        for sv in &subs {
            offsets.push(total);
            total += sv.window_count();
        }
        SubVideoWindows {
            subs,
            offsets,
            total,
        }
    }
}

impl WindowSet for SubVideoWindows {
    fn len(&self) -> usize {
        self.total
    }
    fn get(&self, i: usize) -> TrainSample {
        let k = match self.offsets.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        self.subs[k].window_at(i - self.offsets[k])
    }
}

/// Trains the variant on the ADL sub-videos; writes the loss log and the
/// final checkpoint.
pub fn stage_train(cfg: &PipelineConfig, paths: &StagePaths, variant: Variant) -> Result<GanModels> {
    let subs = load_subvideos(paths, VideoRole::Adl)?;
    if subs.is_empty() {
        return Err(Error::Data("no ADL sub-videos to train on".into()));
    }
    let windows = SubVideoWindows::new(subs);
    let lc = cfg.loss_config(variant);
    let mut models = GanModels::build(variant, cfg.train.config.seed)?;
    mkdir(&paths.checkpoints_dir())?;
    let log = train(
        &mut models,
        &windows,
        &cfg.train.config,
        &lc,
        Some(&paths.checkpoints_dir()),
    )?;
    write_loss_log(&paths.loss_log(variant), &log)?;
    models.save(&paths.checkpoint(variant))?;
    Ok(models)
}

pub fn write_loss_log(path: &Path, log: &[LossRow]) -> Result<()> {
    let mut text = String::from(LossRow::CSV_HEADER);
    text.push('\n');
    for row in log {
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Frame- and window-level score rows for one model over the fall (test)
/// sub-videos. Exposed separately from [`stage_score`] so callers can score
/// un-checkpointed models (e.g. an untrained control).
pub fn score_with_models(
    models: &GanModels,
    subs: &[SubVideo],
    batch_size: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let variant = models.variant;
    let masked = variant.uses_roi_loss();
    let (thermal_tag, flow_tag, diff_tag) = match variant.channels() {
        ChannelSet::Thermal => (
            if masked { "ROI-score" } else { "plain" },
            "",
            "Diff-score",
        ),
        ChannelSet::Flow => ("", if masked { "ROI-score" } else { "plain" }, ""),
        ChannelSet::Fusion => ("Thermal ROI-score", "Flow ROI-score", "Thermal Diff-score"),
    };
    let mut frame_rows = vec!["video_id,frame_idx,variant,c_mu,c_sigma,ground_truth".to_string()];
    let mut window_rows =
        vec!["video_id,window_start,variant,w_mu,w_sigma,ground_truth".to_string()];
    for sv in subs {
        if sv.window_count() == 0 {
            continue;
        }
        let errors = score_subvideo(models, sv, masked, batch_size)?;
        let fall_count = |start: usize, len: usize| -> usize {
            sv.labels[start..start + len].iter().filter(|&&l| l != 0).count()
        };
        if let Some(thermal) = &errors.thermal {
            let scores = frame_scores(thermal, WINDOW_LEN);
            for (j, s) in scores.iter().enumerate() {
                frame_rows.push(format!(
                    "{},{},{thermal_tag},{},{},{}",
                    sv.video_id, sv.frame_indices[j], s.c_mu, s.c_sigma, sv.labels[j]
                ));
            }
            for (i, errs) in thermal.iter().enumerate() {
                let s = window_scores(errs);
                window_rows.push(format!(
                    "{},{},{thermal_tag},{},{},{}",
                    sv.video_id,
                    sv.frame_indices[i],
                    s.w_mu,
                    s.w_sigma,
                    fall_count(i, WINDOW_LEN)
                ));
            }
        }
        if let Some(diff) = &errors.diff {
            for (i, s) in diff.iter().enumerate() {
                window_rows.push(format!(
                    "{},{},{diff_tag},{},{},{}",
                    sv.video_id,
                    sv.frame_indices[i],
                    s.w_mu,
                    s.w_sigma,
                    fall_count(i, WINDOW_LEN)
                ));
            }
        }
        if let Some(flow) = &errors.flow {
            // Flow residual j spans frames (j, j+1): frame-level flow scores
            // sit on the pair's first frame with an OR of both labels.
            let scores = frame_scores(flow, WINDOW_LEN - 1);
            for (j, s) in scores.iter().enumerate() {
                let label = sv.labels[j].max(sv.labels[j + 1]);
                frame_rows.push(format!(
                    "{},{},{flow_tag},{},{},{}",
                    sv.video_id, sv.frame_indices[j], s.c_mu, s.c_sigma, label
                ));
            }
            for (i, errs) in flow.iter().enumerate() {
                let s = window_scores(errs);
                window_rows.push(format!(
                    "{},{},{flow_tag},{},{},{}",
                    sv.video_id,
                    sv.frame_indices[i],
                    s.w_mu,
                    s.w_sigma,
                    fall_count(i, WINDOW_LEN)
                ));
            }
        }
    }
    Ok((frame_rows, window_rows))
}

/// Scores the test (fall) sub-videos with the trained checkpoint.
pub fn stage_score(cfg: &PipelineConfig, paths: &StagePaths, variant: Variant) -> Result<()> {
    require(&paths.checkpoint(variant), "score", "train")?;
    let subs = load_subvideos(paths, VideoRole::Fall)?;
    if subs.is_empty() {
        return Err(Error::Data("no fall sub-videos to score".into()));
    }
    let models = GanModels::load(variant, &paths.checkpoint(variant))?;
    let (frame_rows, window_rows) =
        score_with_models(&models, &subs, cfg.train.config.batch_size)?;
    mkdir(&paths.scores_dir())?;
    std::fs::write(
        paths.frame_scores_csv(variant),
        frame_rows.join("\n") + "\n",
    )
    .map_err(|e| Error::io(&paths.frame_scores_csv(variant), e))?;
    std::fs::write(
        paths.window_scores_csv(variant),
        window_rows.join("\n") + "\n",
    )
    .map_err(|e| Error::io(&paths.window_scores_csv(variant), e))
}

struct FrameScoreRow {
    variant: String,
    c_mu: f64,
    c_sigma: f64,
    label: bool,
}

struct WindowScoreRow {
    variant: String,
    w_mu: f64,
    w_sigma: f64,
    fall_frames: usize,
}

fn parse_frame_scores(path: &Path) -> Result<Vec<FrameScoreRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("frame score line {}", lineno + 1),
        };
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(FrameScoreRow {
            variant: f[2].to_string(),
            c_mu: f[3].parse().map_err(|_| bad())?,
            c_sigma: f[4].parse().map_err(|_| bad())?,
            label: f[5].trim() == "1",
        });
    }
    Ok(out)
}

fn parse_window_scores(path: &Path) -> Result<Vec<WindowScoreRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("window score line {}", lineno + 1),
        };
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(WindowScoreRow {
            variant: f[2].to_string(),
            w_mu: f[3].parse().map_err(|_| bad())?,
            w_sigma: f[4].parse().map_err(|_| bad())?,
            fall_frames: f[5].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Emits the results table, the tolerance sweep, and optional SVG curves for
/// every variant with score files present.
pub fn stage_eval(cfg: &PipelineConfig, paths: &StagePaths) -> Result<()> {
    require(&paths.scores_dir(), "eval", "score")?;
    mkdir(&paths.eval_dir())?;
    let mut results = vec![
        "method,level,variant,roc_c_mu,roc_c_sigma,pr_c_mu,pr_c_sigma".to_string(),
    ];
    let mut sweep_rows = Vec::new();
    let fmt = |v: std::result::Result<f64, &Error>| match v {
        Ok(x) => format!("{x}"),
        Err(_) => "NA".to_string(),
    };
    for variant in Variant::ALL {
        let frame_path = paths.frame_scores_csv(variant);
        if !frame_path.exists() {
            continue;
        }
        let frame_rows = parse_frame_scores(&frame_path)?;
        let mut tags: Vec<String> = frame_rows.iter().map(|r| r.variant.clone()).collect();
        tags.sort();
        tags.dedup();
        for tag in &tags {
            let rows: Vec<&FrameScoreRow> =
                frame_rows.iter().filter(|r| &r.variant == tag).collect();
            let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
            let mk = |scores: Vec<f64>| ScoredSet {
                scores,
                labels: labels.clone(),
                variant: tag.clone(),
                level: ScoreLevel::Frame,
                alpha: None,
            };
            let mu_set = mk(rows.iter().map(|r| r.c_mu).collect());
            let sig_set = mk(rows.iter().map(|r| r.c_sigma).collect());
            results.push(format!(
                "{variant},frame,{tag},{},{},{},{}",
                fmt(roc_auc(&mu_set).as_ref().map(|&v| v)),
                fmt(roc_auc(&sig_set).as_ref().map(|&v| v)),
                fmt(pr_auc(&mu_set).as_ref().map(|&v| v)),
                fmt(pr_auc(&sig_set).as_ref().map(|&v| v)),
            ));
            if cfg.eval.svg {
                if let (Ok(rc), Ok(pc)) = (roc_curve(&sig_set), pr_curve(&sig_set)) {
                    line_plot(
                        &paths.eval_dir().join(format!("roc_{variant}_{}.svg", slug(tag))),
                        &format!("{variant} {tag} frame-level ROC (C_sigma)"),
                        "false positive rate",
                        "true positive rate",
                        &[PlotSeries {
                            label: "C_sigma".into(),
                            points: rc,
                        }],
                    )?;
                    line_plot(
                        &paths.eval_dir().join(format!("pr_{variant}_{}.svg", slug(tag))),
                        &format!("{variant} {tag} frame-level PR (C_sigma)"),
                        "recall",
                        "precision",
                        &[PlotSeries {
                            label: "C_sigma".into(),
                            points: pc,
                        }],
                    )?;
                }
            }
        }
        let window_path = paths.window_scores_csv(variant);
        if window_path.exists() {
            let window_rows = parse_window_scores(&window_path)?;
            let mut tags: Vec<String> = window_rows.iter().map(|r| r.variant.clone()).collect();
            tags.sort();
            tags.dedup();
            for tag in &tags {
                let rows: Vec<&WindowScoreRow> =
                    window_rows.iter().filter(|r| &r.variant == tag).collect();
                let cells: Vec<WindowScoreSet> = cfg
                    .eval
                    .alphas
                    .iter()
                    .map(|&alpha| WindowScoreSet {
                        variant: format!("{variant}/{tag}"),
                        alpha,
                        w_mu: rows.iter().map(|r| r.w_mu).collect(),
                        w_sigma: rows.iter().map(|r| r.w_sigma).collect(),
                        labels: rows.iter().map(|r| r.fall_frames >= alpha).collect(),
                    })
                    .collect();
                sweep_rows.extend(tolerance_sweep(&cells));
            }
        }
    }
    std::fs::write(
        paths.eval_dir().join("results.csv"),
        results.join("\n") + "\n",
    )
    .map_err(|e| Error::io(&paths.eval_dir().join("results.csv"), e))?;
    let mut sweep_text = String::from(SWEEP_CSV_HEADER);
    sweep_text.push('\n');
    for row in &sweep_rows {
        sweep_text.push_str(&sweep_csv_line(row));
        sweep_text.push('\n');
    }
    std::fs::write(paths.eval_dir().join("tolerance_sweep.csv"), sweep_text)
        .map_err(|e| Error::io(&paths.eval_dir().join("tolerance_sweep.csv"), e))?;
    if cfg.eval.svg && !sweep_rows.is_empty() {
        for stat in ["w_mu", "w_sigma"] {
            let mut by_variant: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for row in sweep_rows.iter().filter(|r| r.stat == stat) {
                if let Some(auc) = row.roc_auc {
                    by_variant
                        .entry(row.variant.clone())
                        .or_default()
                        .push((row.alpha as f64, auc));
                }
            }
            if by_variant.is_empty() {
                continue;
            }
            let series: Vec<PlotSeries> = by_variant
                .into_iter()
                .map(|(label, points)| PlotSeries { label, points })
                .collect();
            line_plot(
                &paths.eval_dir().join(format!("tolerance_roc_{stat}.svg")),
                &format!("window-level ROC AUC vs tolerance ({stat})"),
                "tolerance alpha",
                "ROC AUC",
                &series,
            )?;
        }
    }
    Ok(())
}

fn slug(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}
