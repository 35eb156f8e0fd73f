//! Resolve the nine surrounding vehicles of one target and build its feature vector.

use highway_lstm::ingest::{build_tracks, segment_tracks, MIN_SEGMENT_FRAMES};
use highway_lstm::neighborhood::{
    build_scene_index, extract_features, find_neighbors, FeatureLayout, NeighborRole, StateLookup,
};
use highway_lstm::smoothing::{smooth_track, FilterSpec, SmoothedTrack};
use highway_lstm::synthetic::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { vehicles: 60, lanes: 3, max_entry_frame: 20, ..SynthSpec::default() };
    let tracks = build_tracks(generate(&spec))?;
    let smoothed: Vec<SmoothedTrack> = segment_tracks(tracks.values(), MIN_SEGMENT_FRAMES)
        .iter()
        .map(|s| smooth_track(s, &FilterSpec::default()))
        .collect::<Result<_, _>>()?;
    let index = build_scene_index(&smoothed)?;
    let states = StateLookup::new(&smoothed);

    // the target with the most neighbors at its 100th frame
    let (target, at, set) = smoothed
        .iter()
        .filter(|t| t.len() > 100)
        .map(|t| (t, 100, find_neighbors(t.vehicle_id, t.frame_ids[100], &index)))
        .filter_map(|(t, i, s)| s.ok().map(|s| (t, i, s)))
        .max_by_key(|(_, _, s)| s.ids.iter().flatten().count())
        .ok_or("no vehicle long enough")?;
    println!("vehicle {} at frame {} (lane {})", target.vehicle_id, target.frame_ids[at], target.lane_ids[at]);
    for role in NeighborRole::ALL {
        match set.get(role) {
            Some(id) => println!("  {:>2}: vehicle {id}", role.name()),
            None => println!("  {:>2}: none", role.name()),
        }
    }
    let frame = extract_features(target, at, &set, &states);
    let layout = FeatureLayout::default();
    for (name, value) in layout.column_names().iter().zip(frame.to_vector(&layout)).take(14) {
        println!("  {name:>8} = {value:>9.3}");
    }
    println!("  … {} features in total", layout.width());
    Ok(())
}
