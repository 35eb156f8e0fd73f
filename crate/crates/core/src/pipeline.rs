//! On-disk stages of the batch pipeline.
//!
//! | stage       | reads                                   | writes |
//! |-------------|-----------------------------------------|--------|
//! | `synth`     | config                                  | raw trajectory file |
//! | `ingest`    | raw file, column map                    | `tracks.csv` |
//! | `featurize` | `tracks.csv`                            | `features.csv` |
//! | `window`    | `features.csv`                          | `split.csv`, `windows.bin` |
//! | `train`     | `windows.bin`, `split.csv`              | `checkpoints/<model>.ckpt`, per-pass checkpoints, `<model>-history.csv` |
//! | `evaluate`  | checkpoint, `windows.bin` header, `features.csv`, `split.csv` | `reports/<model>-rmse.csv`, `-percentiles.csv`, `-per-vehicle.csv` |
//! | `predict`   | same as `evaluate`                      | `reports/<model>-predictions.csv` |
//! | `bag`       | candidate checkpoints and the above     | `reports/<bag>-rmse.csv`, `-percentiles.csv`, `-per-vehicle.csv`, `-members.csv` |
//! | `report`    | `reports/*-rmse.csv`                    | `reports/summary.csv` |
//!
//! Rerunning a stage with unchanged inputs rewrites byte-identical files.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    compute_targets_from, make_vehicle_groups, make_windows, read_archive_header, read_window_archive, scale_features,
    split_train_test, write_window_archive, ArchiveHeader, DatasetError, DatasetSplit, Window, WINDOW_LENGTH,
    WINDOW_STRIDE,
};
use crate::evaluation::{
    bag_predict, evaluate_tracks, predict_full_track, write_per_vehicle_csv, write_percentile_csv, write_rmse_csv,
    EvalError, EvalReport, EvalTrack, Ensemble,
};
use crate::ingest::{
    build_tracks, parse_trajectory_file, read_track_dump, segment_tracks, write_track_dump, ColumnMap, IngestError,
    VehicleId, MIN_SEGMENT_FRAMES,
};
use crate::neighborhood::{extract_track_features, read_feature_dump, write_feature_dump, NeighborhoodError, TrackFeatures};
use crate::neural::{init_params, load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, ModelParams};
use crate::smoothing::{smooth_track, SmoothingError};
use crate::synthetic::{generate, write_source_file};
use crate::training::{audit_split, train, CheckpointPlan, TrainError};

/// Horizons shown in the summary table.
pub const SUMMARY_HORIZONS: [u32; 7] = [1, 2, 3, 4, 6, 8, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Featurize,
    Window,
    Train,
    Evaluate,
    Predict,
    Bag,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Featurize => "featurize",
            Stage::Window => "window",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Predict => "predict",
            Stage::Bag => "bag",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: missing {what} {path} (run `{producer}` first)")]
    MissingArtifact { stage: &'static str, what: &'static str, path: PathBuf, producer: &'static str },
    #[error("{stage}: the window archive has {archive} features but model {model} expects {expected}")]
    WidthMismatch { stage: &'static str, model: String, archive: usize, expected: usize },
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {path}: {source}")]
    Io { stage: &'static str, path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}: {1}")]
    Ingest(&'static str, IngestError),
    #[error("featurize: {0}")]
    Smoothing(#[from] SmoothingError),
    #[error("{0}: {1}")]
    Neighborhood(&'static str, NeighborhoodError),
    #[error("{0}: {1}")]
    Dataset(&'static str, DatasetError),
    #[error("{stage}: {path}: {source}")]
    Checkpoint { stage: &'static str, path: PathBuf, source: CheckpointError },
    #[error("train: {0}")]
    Train(#[from] TrainError),
    #[error("{0}: {1}")]
    Eval(&'static str, EvalError),
}

impl PipelineError {
    /// 1 for configuration problems, 3 for numerical failures, 2 for everything
    /// else (missing or inconsistent data).
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Train(TrainError::Divergent { .. } | TrainError::Shape(_)) => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn open(stage: Stage, path: &Path, what: &'static str, producer: Stage) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(PipelineError::MissingArtifact {
            stage: stage.name(),
            what,
            path: path.to_path_buf(),
            producer: producer.name(),
        }),
        Err(source) => Err(PipelineError::Io { stage: stage.name(), path: path.to_path_buf(), source }),
    }
}

/// Writes a file through `write`, creating parent directories.
fn write_file<F>(stage: Stage, path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io = |source| PipelineError::Io { stage: stage.name(), path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write(&mut out).map_err(io)?;
    out.flush().map_err(io)
}

fn column_map(config: &RunConfig, stage: Stage) -> Result<ColumnMap> {
    match &config.paths.column_map {
        Some(p) => ColumnMap::load(&config.resolve(p)).map_err(|e| PipelineError::Ingest(stage.name(), e)),
        None => Ok(ColumnMap::default()),
    }
}

/// Writes a synthetic trajectory file to `paths.raw`. Returns the number of records.
pub fn synth(config: &RunConfig) -> Result<usize> {
    let map = column_map(config, Stage::Synth)?;
    let records = generate(&config.synth);
    let path = config.resolve(&config.paths.raw);
    write_file(Stage::Synth, &path, |out| write_source_file(out, &records, &map))?;
    Ok(records.len())
}

/// Parses the raw file into SI units and writes the normalized track dump.
pub fn ingest(config: &RunConfig) -> Result<usize> {
    let map = column_map(config, Stage::Ingest)?;
    let raw = open(Stage::Ingest, &config.resolve(&config.paths.raw), "trajectory file", Stage::Synth)?;
    let records = parse_trajectory_file(raw, &map).map_err(|e| PipelineError::Ingest("ingest", e))?;
    let tracks = build_tracks(records).map_err(|e| PipelineError::Ingest("ingest", e))?;
    let path = config.resolve(&config.paths.tracks);
    let count = tracks.values().map(|t| t.len()).sum();
    write_file(Stage::Ingest, &path, |out| write_track_dump(out, tracks.values().flat_map(|t| &t.records)))?;
    Ok(count)
}

/// Splits tracks at gaps, drops short segments, smooths, finds neighbors and writes
/// the per-frame features. Returns the number of segments.
pub fn featurize(config: &RunConfig) -> Result<usize> {
    let reader = open(Stage::Featurize, &config.resolve(&config.paths.tracks), "track dump", Stage::Ingest)?;
    let records = read_track_dump(reader).map_err(|e| PipelineError::Ingest("featurize", e))?;
    let tracks = build_tracks(records).map_err(|e| PipelineError::Ingest("featurize", e))?;
    let segments = segment_tracks(tracks.values(), MIN_SEGMENT_FRAMES);
    let smoothed = segments.iter().map(|s| smooth_track(s, &config.filter)).collect::<std::result::Result<Vec<_>, _>>()?;
    let features = extract_track_features(&smoothed).map_err(|e| PipelineError::Neighborhood("featurize", e))?;
    let path = config.resolve(&config.paths.features);
    write_file(Stage::Featurize, &path, |out| write_feature_dump(out, &features))?;
    Ok(features.len())
}

fn load_features(config: &RunConfig, stage: Stage) -> Result<Vec<TrackFeatures>> {
    let reader = open(stage, &config.resolve(&config.paths.features), "feature dump", Stage::Featurize)?;
    read_feature_dump(reader).map_err(|e| PipelineError::Neighborhood(stage.name(), e))
}

fn load_split(config: &RunConfig, stage: Stage) -> Result<DatasetSplit> {
    let reader = open(stage, &config.resolve(&config.paths.split), "split file", Stage::Window)?;
    DatasetSplit::read_csv(reader, config.split.seed).map_err(|e| PipelineError::Dataset(stage.name(), e))
}

/// Cuts training windows for `layout` from the given tracks.
pub fn build_windows(tracks: &[TrackFeatures], train_ids: &BTreeSet<VehicleId>, header: &ArchiveHeader) -> Vec<Window> {
    let mut windows = Vec::new();
    for track in tracks.iter().filter(|t| train_ids.contains(&t.vehicle_id)) {
        let rows: Vec<Vec<f64>> = track.frames.iter().map(|f| scale_features(f, &header.scaling, &header.layout)).collect();
        let x: Vec<f64> = track.frames.iter().map(|f| f.target.x).collect();
        let vy: Vec<f64> = track.frames.iter().map(|f| f.target.vy).collect();
        let targets = compute_targets_from(&x, &vy, &header.horizons, &header.scaling);
        windows.extend(make_windows(track.vehicle_id, &track.frame_ids, &rows, &targets, header.window_length, WINDOW_STRIDE));
    }
    windows
}

/// Splits vehicles into train / validation / test and writes the training windows
/// for the configured variant's feature layout. Returns the number of windows.
pub fn window(config: &RunConfig) -> Result<usize> {
    let tracks = load_features(config, Stage::Window)?;
    let ids: Vec<VehicleId> = tracks.iter().map(|t| t.vehicle_id).collect::<BTreeSet<_>>().into_iter().collect();
    let mut split = split_train_test(&ids, config.split.train_ratio, config.split.seed)
        .map_err(|e| PipelineError::Dataset("window", e))?;
    split.hold_out_validation(config.split.validation_fraction, config.split.seed);
    write_file(Stage::Window, &config.resolve(&config.paths.split), |out| split.write_csv(out))?;
    let layout = config.variant()?.layout();
    let header = ArchiveHeader {
        n_features: layout.width(),
        layout,
        horizons: config.horizons.clone(),
        scaling: config.scaling,
        seed: config.split.seed,
        window_length: WINDOW_LENGTH,
    };
    let train_ids: BTreeSet<VehicleId> = split.train_vehicle_ids.iter().copied().collect();
    let windows = build_windows(&tracks, &train_ids, &header);
    let mut bytes = Vec::new();
    write_window_archive(&mut bytes, &header, &windows).map_err(|e| PipelineError::Dataset("window", e))?;
    write_file(Stage::Window, &config.resolve(&config.paths.windows), |out| out.write_all(&bytes))?;
    Ok(windows.len())
}

fn checkpoint_path(config: &RunConfig, name: &str) -> PathBuf {
    config.resolve(&config.paths.checkpoints).join(format!("{name}.ckpt"))
}

fn report_path(config: &RunConfig, name: &str, suffix: &str) -> PathBuf {
    config.resolve(&config.paths.reports).join(format!("{name}-{suffix}.csv"))
}

fn archive_header(config: &RunConfig, stage: Stage) -> Result<ArchiveHeader> {
    let mut reader = open(stage, &config.resolve(&config.paths.windows), "window archive", Stage::Window)?;
    Ok(read_archive_header(&mut reader).map_err(|e| PipelineError::Dataset(stage.name(), e))?.0)
}

fn check_width(stage: Stage, model: &str, params: &ModelParams, header: &ArchiveHeader) -> Result<()> {
    if params.config.input_size != header.n_features {
        return Err(PipelineError::WidthMismatch {
            stage: stage.name(),
            model: model.to_string(),
            archive: header.n_features,
            expected: params.config.input_size,
        });
    }
    if params.config.output_size != header.horizons.output_size() {
        return Err(PipelineError::Data {
            stage: stage.name(),
            message: format!(
                "model {model} predicts {} outputs but the archive has {} horizons",
                params.config.output_size,
                header.horizons.horizons_s.len()
            ),
        });
    }
    Ok(())
}

/// Trains the configured model on the window archive. Returns the final checkpoint path.
pub fn train_stage(config: &RunConfig) -> Result<PathBuf> {
    let reader = open(Stage::Train, &config.resolve(&config.paths.windows), "window archive", Stage::Window)?;
    let split = load_split(config, Stage::Train)?;
    let (header, windows) = read_window_archive(reader).map_err(|e| PipelineError::Dataset("train", e))?;
    let name = config.model_name();
    let mut params = init_params(&config.model_config()?, config.model.seed).map_err(|e| PipelineError::Data {
        stage: "train",
        message: e.to_string(),
    })?;
    check_width(Stage::Train, &name, &params, &header)?;
    let groups = make_vehicle_groups(&split.train_vehicle_ids, &windows, config.train.group_size, config.train.seed);
    let held_out: Vec<VehicleId> =
        split.test_vehicle_ids.iter().chain(&split.validation_vehicle_ids).copied().collect();
    audit_split(&windows, &groups, &held_out)?;
    let dir = config.resolve(&config.paths.checkpoints);
    let plan = CheckpointPlan { directory: Some(dir.clone()), name: name.clone() };
    let history = train(&mut params, &windows, &groups, &config.train, &plan)?;
    let path = checkpoint_path(config, &name);
    let meta = CheckpointMeta { seed: config.model.seed, step: history.step_losses.len() as u64 };
    save_checkpoint(&path, &params, meta).map_err(|source| PipelineError::Io { stage: "train", path: path.clone(), source })?;
    write_file(Stage::Train, &dir.join(format!("{name}-history.csv")), |out| history.write_csv(out))?;
    Ok(path)
}

fn load_model(config: &RunConfig, stage: Stage, name: &str) -> Result<ModelParams> {
    let path = checkpoint_path(config, name);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact { stage: stage.name(), what: "checkpoint", path, producer: "train" });
    }
    load_checkpoint(&path).map(|(p, _)| p).map_err(|source| PipelineError::Checkpoint { stage: stage.name(), path, source })
}

fn eval_tracks(tracks: &[TrackFeatures], ids: &[VehicleId], header: &ArchiveHeader) -> Vec<EvalTrack> {
    let wanted: BTreeSet<VehicleId> = ids.iter().copied().collect();
    tracks
        .iter()
        .filter(|t| wanted.contains(&t.vehicle_id))
        .map(|t| EvalTrack::from_features(t, &header.layout, &header.scaling, &header.horizons))
        .collect()
}

fn write_reports(config: &RunConfig, stage: Stage, name: &str, report: &EvalReport) -> Result<()> {
    write_file(stage, &report_path(config, name, "rmse"), |out| write_rmse_csv(out, name, report))?;
    write_file(stage, &report_path(config, name, "percentiles"), |out| write_percentile_csv(out, report))?;
    write_file(stage, &report_path(config, name, "per-vehicle"), |out| write_per_vehicle_csv(out, report))
}

/// Evaluates checkpoint `model` (default: the configured model) on the test split.
pub fn evaluate(config: &RunConfig, model: Option<&str>) -> Result<EvalReport> {
    let name = model.map_or_else(|| config.model_name(), str::to_string);
    let params = load_model(config, Stage::Evaluate, &name)?;
    let header = archive_header(config, Stage::Evaluate)?;
    check_width(Stage::Evaluate, &name, &params, &header)?;
    let split = load_split(config, Stage::Evaluate)?;
    let tracks = eval_tracks(&load_features(config, Stage::Evaluate)?, &split.test_vehicle_ids, &header);
    let report = evaluate_tracks(&tracks, &header.horizons, |f| predict_full_track(&params, f, &header.scaling))
        .map_err(|e| PipelineError::Eval("evaluate", e))?;
    write_reports(config, Stage::Evaluate, &name, &report)?;
    Ok(report)
}

/// Per-frame predictions for the chosen vehicles (any split). Returns the output path.
pub fn predict(config: &RunConfig, model: Option<&str>, vehicles: &[VehicleId]) -> Result<PathBuf> {
    let name = model.map_or_else(|| config.model_name(), str::to_string);
    let params = load_model(config, Stage::Predict, &name)?;
    let header = archive_header(config, Stage::Predict)?;
    check_width(Stage::Predict, &name, &params, &header)?;
    let chosen: Vec<VehicleId> = if vehicles.is_empty() { config.predict.vehicles.clone() } else { vehicles.to_vec() };
    if chosen.is_empty() {
        return Err(PipelineError::Data { stage: "predict", message: "no vehicles chosen".into() });
    }
    let features = load_features(config, Stage::Predict)?;
    let tracks = eval_tracks(&features, &chosen, &header);
    let found: BTreeSet<VehicleId> = tracks.iter().map(|t| t.vehicle_id).collect();
    if let Some(v) = chosen.iter().find(|v| !found.contains(v)) {
        return Err(PipelineError::Data { stage: "predict", message: format!("vehicle {v} is not in the feature dump") });
    }
    let mut rows = Vec::new();
    for track in &tracks {
        let out = predict_full_track(&params, &track.features, &header.scaling).map_err(|e| PipelineError::Eval("predict", e))?;
        rows.push((track, out));
    }
    let path = report_path(config, &name, "predictions");
    write_file(Stage::Predict, &path, |out| {
        writeln!(out, "vehicle_id,frame_id,horizon,pred_x_m,true_x_m,pred_vy_mps,true_vy_mps")?;
        for (track, pred) in &rows {
            let frames = features
                .iter()
                .find(|f| f.vehicle_id == track.vehicle_id && f.frame_ids.first() == Some(&track.start_frame))
                .map(|f| f.frame_ids.clone())
                .unwrap_or_default();
            for (t, frame) in frames.iter().enumerate() {
                for (h, k) in header.horizons.horizons_s.iter().enumerate() {
                    let p = pred.row(t);
                    let (tx, tv) = match &track.truth[t] {
                        Some(v) => (v[2 * h].to_string(), v[2 * h + 1].to_string()),
                        None => (String::new(), String::new()),
                    };
                    writeln!(out, "{},{frame},{k},{},{tx},{},{tv}", track.vehicle_id, p[2 * h], p[2 * h + 1])?;
                }
            }
        }
        Ok(())
    })?;
    Ok(path)
}

/// Model stems in the checkpoint directory, excluding per-pass and diagnostic files.
fn discover_candidates(config: &RunConfig) -> Result<Vec<String>> {
    let dir = config.resolve(&config.paths.checkpoints);
    let entries = std::fs::read_dir(&dir).map_err(|_| PipelineError::MissingArtifact {
        stage: "bag",
        what: "checkpoint directory",
        path: dir.clone(),
        producer: "train",
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter_map(|n| n.strip_suffix(".ckpt").map(str::to_string))
        .filter(|n| !n.contains("-pass") && !n.ends_with("-diverged"))
        .collect();
    names.sort();
    Ok(names)
}

/// Outcome of the bagging stage.
#[derive(Debug, Clone)]
pub struct BagOutcome {
    /// (model, validation lateral RMSE at the longest horizon), best first.
    pub ranking: Vec<(String, f64)>,
    pub members: Vec<String>,
    pub report: EvalReport,
}

/// Ranks candidates by lateral RMSE at the longest horizon on the validation
/// vehicles, averages the best `bag.members`, and evaluates the ensemble on the test split.
pub fn bag(config: &RunConfig) -> Result<BagOutcome> {
    let candidates = if config.bag.candidates.is_empty() { discover_candidates(config)? } else { config.bag.candidates.clone() };
    if candidates.is_empty() {
        return Err(PipelineError::MissingArtifact {
            stage: "bag",
            what: "trained models in",
            path: config.resolve(&config.paths.checkpoints),
            producer: "train",
        });
    }
    let header = archive_header(config, Stage::Bag)?;
    let split = load_split(config, Stage::Bag)?;
    let features = load_features(config, Stage::Bag)?;
    if split.validation_vehicle_ids.is_empty() {
        return Err(PipelineError::Data { stage: "bag", message: "the split has no validation vehicles".into() });
    }
    let validation = eval_tracks(&features, &split.validation_vehicle_ids, &header);
    let mut ranking = Vec::new();
    let mut models = Vec::new();
    for name in &candidates {
        let params = load_model(config, Stage::Bag, name)?;
        check_width(Stage::Bag, name, &params, &header)?;
        let report = evaluate_tracks(&validation, &header.horizons, |f| predict_full_track(&params, f, &header.scaling))
            .map_err(|e| PipelineError::Eval("bag", e))?;
        let score = *report.mean.lateral_rmse.last().expect("nonempty horizons");
        ranking.push((name.clone(), score));
        models.push(params);
    }
    let mut order: Vec<usize> = (0..ranking.len()).collect();
    order.sort_by(|&a, &b| ranking[a].1.total_cmp(&ranking[b].1).then(ranking[a].0.cmp(&ranking[b].0)));
    let chosen: Vec<usize> = order.iter().copied().take(config.bag.members.max(1)).collect();
    let members: Vec<String> = chosen.iter().map(|&i| ranking[i].0.clone()).collect();
    let ensemble = Ensemble::new(chosen.iter().map(|&i| models[i].clone()).collect()).map_err(|e| PipelineError::Eval("bag", e))?;
    let test = eval_tracks(&features, &split.test_vehicle_ids, &header);
    let report = evaluate_tracks(&test, &header.horizons, |f| bag_predict(&ensemble, f, &header.scaling))
        .map_err(|e| PipelineError::Eval("bag", e))?;
    let name = config.bag.name.clone();
    write_reports(config, Stage::Bag, &name, &report)?;
    let ranking: Vec<(String, f64)> = order.iter().map(|&i| ranking[i].clone()).collect();
    write_file(Stage::Bag, &report_path(config, &name, "members"), |out| {
        writeln!(out, "model,validation_lateral_rmse_m,selected")?;
        for (model, score) in &ranking {
            writeln!(out, "{model},{score},{}", members.contains(model))?;
        }
        Ok(())
    })?;
    Ok(BagOutcome { ranking, members, report })
}

/// Collects every `*-rmse.csv` report into `summary.csv`, one row per model and
/// channel with the values at the summary horizons. Returns the summary path.
pub fn report(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.resolve(&config.paths.reports);
    let missing = || PipelineError::MissingArtifact { stage: "report", what: "RMSE reports in", path: dir.clone(), producer: "evaluate" };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|_| missing())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("-rmse.csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(missing());
    }
    let mut lines = vec![format!(
        "model,channel,{}",
        SUMMARY_HORIZONS.iter().map(|k| format!("{k}s")).collect::<Vec<_>>().join(",")
    )];
    for file in &files {
        let reader = open(Stage::Report, file, "RMSE report", Stage::Evaluate)?;
        let mut model = String::new();
        let mut lateral = vec![String::new(); SUMMARY_HORIZONS.len()];
        let mut speed = lateral.clone();
        for (i, line) in reader.lines().enumerate().skip(1) {
            let line = line.map_err(|source| PipelineError::Io { stage: "report", path: file.clone(), source })?;
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || PipelineError::Data { stage: "report", message: format!("{}: line {}: malformed row", file.display(), i + 1) };
            if fields.len() != 4 {
                return Err(bad());
            }
            model = fields[0].to_string();
            let k: u32 = fields[1].parse().map_err(|_| bad())?;
            if let Some(col) = SUMMARY_HORIZONS.iter().position(|&h| h == k) {
                lateral[col] = fields[2].to_string();
                speed[col] = fields[3].to_string();
            }
        }
        lines.push(format!("{model},lateral_rmse_m,{}", lateral.join(",")));
        lines.push(format!("{model},long_speed_rmse_mps,{}", speed.join(",")));
    }
    let path = dir.join("summary.csv");
    write_file(Stage::Report, &path, |out| {
        for l in &lines {
            writeln!(out, "{l}")?;
        }
        Ok(())
    })?;
    Ok(path)
}

/// Runs every stage from `synth` to `report` for the configured model.
pub fn run_all(config: &RunConfig) -> Result<EvalReport> {
    synth(config)?;
    ingest(config)?;
    featurize(config)?;
    window(config)?;
    train_stage(config)?;
    let report = evaluate(config, None)?;
    self::report(config)?;
    Ok(report)
}
