//! Train a small model in memory on synthetic traffic, then report RMSE per horizon
//! on held-out vehicles.

use highway_lstm::dataset::{
    compute_targets_from, make_vehicle_groups, make_windows, scale_features, split_train_test, HorizonSpec,
    ScalingSpec, WINDOW_LENGTH, WINDOW_STRIDE,
};
use highway_lstm::evaluation::{evaluate_tracks, predict_full_track, EvalTrack};
use highway_lstm::ingest::{build_tracks, segment_tracks, VehicleId, MIN_SEGMENT_FRAMES};
use highway_lstm::neighborhood::extract_track_features;
use highway_lstm::neural::{init_params, Variant};
use highway_lstm::smoothing::{smooth_track, FilterSpec, SmoothedTrack};
use highway_lstm::synthetic::{generate, SynthSpec};
use highway_lstm::training::{train, CheckpointPlan, TrainSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (scaling, horizons) = (ScalingSpec::default(), HorizonSpec::default());
    let tracks = build_tracks(generate(&SynthSpec { vehicles: 60, lane_changers: 12, ..SynthSpec::default() }))?;
    let smoothed: Vec<SmoothedTrack> = segment_tracks(tracks.values(), MIN_SEGMENT_FRAMES)
        .iter()
        .map(|s| smooth_track(s, &FilterSpec::default()))
        .collect::<Result<_, _>>()?;
    let features = extract_track_features(&smoothed)?;
    let ids: Vec<VehicleId> = features.iter().map(|t| t.vehicle_id).collect();
    let split = split_train_test(&ids, 0.8, 1)?;

    let config = Variant::Reference.config(horizons.output_size()).scaled(16);
    let layout = config.layout();
    let mut windows = Vec::new();
    for t in features.iter().filter(|t| split.train_vehicle_ids.contains(&t.vehicle_id)) {
        let rows: Vec<Vec<f64>> = t.frames.iter().map(|f| scale_features(f, &scaling, &layout)).collect();
        let x: Vec<f64> = t.frames.iter().map(|f| f.target.x).collect();
        let vy: Vec<f64> = t.frames.iter().map(|f| f.target.vy).collect();
        let targets = compute_targets_from(&x, &vy, &horizons, &scaling);
        windows.extend(make_windows(t.vehicle_id, &t.frame_ids, &rows, &targets, WINDOW_LENGTH, WINDOW_STRIDE));
    }
    let groups = make_vehicle_groups(&split.train_vehicle_ids, &windows, 500, 1);
    println!("{} training windows, {} parameters", windows.len(), init_params(&config, 1)?.parameter_count());

    let mut params = init_params(&config, 1)?;
    for (passes, learning_rate) in [(20, 1e-2), (5, 1e-3)] {
        let schedule = TrainSchedule { full_passes: passes, learning_rate, ..TrainSchedule::default() };
        let history = train(&mut params, &windows, &groups, &schedule, &CheckpointPlan::default())?;
        let last = history.group_epochs.last().map_or(f64::NAN, |e| e.mean_loss);
        println!("{passes} passes at lr {learning_rate}: final epoch loss {last:.2e}");
    }

    let test: Vec<EvalTrack> = features
        .iter()
        .filter(|t| split.test_vehicle_ids.contains(&t.vehicle_id))
        .map(|t| EvalTrack::from_features(t, &layout, &scaling, &horizons))
        .collect();
    let report = evaluate_tracks(&test, &horizons, |f| predict_full_track(&params, f, &scaling))?;
    println!("horizon  lateral RMSE  speed RMSE   ({} test vehicles)", test.len());
    for (i, k) in report.mean.horizons_s.iter().enumerate() {
        println!("{k:>5} s  {:>9.3} m  {:>7.3} m/s", report.mean.lateral_rmse[i], report.mean.long_speed_rmse[i]);
    }
    Ok(())
}
