//! Parse an NGSIM-layout file (feet, US-101 columns) into per-vehicle tracks in meters.

use highway_lstm::ingest::{build_tracks, parse_trajectory_file, segment_tracks, ColumnMap, MIN_SEGMENT_FRAMES};
use highway_lstm::synthetic::{generate, write_source_file, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = ColumnMap::default();
    let mut file = Vec::new();
    write_source_file(&mut file, &generate(&SynthSpec { vehicles: 6, ..SynthSpec::default() }), &map)?;
    println!("first source row: {}", String::from_utf8_lossy(&file).lines().next().unwrap_or(""));

    let records = parse_trajectory_file(file.as_slice(), &map)?;
    let tracks = build_tracks(records)?;
    for (id, track) in &tracks {
        let first = &track.records[0];
        println!(
            "vehicle {id}: {} frames from {}, lane {}, x = {:.3} m, y = {:.3} m, class {:?}",
            track.len(),
            track.first_frame(),
            first.lane_id,
            first.local_x,
            first.local_y,
            first.vehicle_class
        );
    }
    let segments = segment_tracks(tracks.values(), MIN_SEGMENT_FRAMES);
    println!("{} segments of at least {MIN_SEGMENT_FRAMES} frames", segments.len());
    Ok(())
}
