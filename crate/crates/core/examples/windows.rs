//! Scale features, build 1–10 s targets, cut 100-step windows and split vehicles.

use highway_lstm::dataset::{
    compute_targets_from, make_vehicle_groups, make_windows, scale_features, split_train_test, HorizonSpec,
    ScalingSpec, WINDOW_LENGTH, WINDOW_STRIDE,
};
use highway_lstm::ingest::{build_tracks, segment_tracks, VehicleId, MIN_SEGMENT_FRAMES};
use highway_lstm::neighborhood::{extract_track_features, FeatureLayout};
use highway_lstm::smoothing::{smooth_track, FilterSpec, SmoothedTrack};
use highway_lstm::synthetic::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tracks = build_tracks(generate(&SynthSpec::default()))?;
    let smoothed: Vec<SmoothedTrack> = segment_tracks(tracks.values(), MIN_SEGMENT_FRAMES)
        .iter()
        .map(|s| smooth_track(s, &FilterSpec::default()))
        .collect::<Result<_, _>>()?;
    let features = extract_track_features(&smoothed)?;

    let ids: Vec<VehicleId> = features.iter().map(|t| t.vehicle_id).collect();
    let mut split = split_train_test(&ids, 0.8, 7)?;
    split.hold_out_validation(0.1, 7);
    println!(
        "split: {} train, {} validation, {} test vehicles",
        split.train_vehicle_ids.len(),
        split.validation_vehicle_ids.len(),
        split.test_vehicle_ids.len()
    );

    let (layout, scaling, horizons) = (FeatureLayout::default(), ScalingSpec::default(), HorizonSpec::default());
    let mut windows = Vec::new();
    for t in features.iter().filter(|t| split.train_vehicle_ids.contains(&t.vehicle_id)) {
        let rows: Vec<Vec<f64>> = t.frames.iter().map(|f| scale_features(f, &scaling, &layout)).collect();
        let x: Vec<f64> = t.frames.iter().map(|f| f.target.x).collect();
        let vy: Vec<f64> = t.frames.iter().map(|f| f.target.vy).collect();
        let targets = compute_targets_from(&x, &vy, &horizons, &scaling);
        windows.extend(make_windows(t.vehicle_id, &t.frame_ids, &rows, &targets, WINDOW_LENGTH, WINDOW_STRIDE));
    }
    let w = &windows[0];
    println!(
        "{} windows; first: vehicle {} from frame {}, inputs {:?}, targets {:?}",
        windows.len(),
        w.vehicle_id,
        w.start_frame,
        w.inputs.shape(),
        w.targets.shape()
    );
    println!("scaled target row 0: {:?}", &w.targets.row(0)[..4]);
    let groups = make_vehicle_groups(&split.train_vehicle_ids, &windows, 5, 7);
    for (i, g) in groups.iter().enumerate() {
        println!("group {i}: vehicles {:?}, {} windows", g.vehicle_ids, g.window_indices.len());
    }
    Ok(())
}
