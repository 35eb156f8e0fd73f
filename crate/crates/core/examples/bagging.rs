//! Train several seeds, pick the best on validation and average their outputs.

use highway_lstm::config::RunConfig;
use highway_lstm::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut config = RunConfig::default();
    config.paths.data_root = dir.path().to_path_buf();
    config.synth.vehicles = 40;
    config.model.hidden = Some(8);
    config.train.full_passes = 4;
    config.train.learning_rate = 1e-2;
    config.bag.members = 3;

    pipeline::synth(&config)?;
    pipeline::ingest(&config)?;
    pipeline::featurize(&config)?;
    pipeline::window(&config)?;
    for seed in 1..=5 {
        config.model.seed = seed;
        pipeline::train_stage(&config)?;
        let report = pipeline::evaluate(&config, None)?;
        println!("{}: lateral RMSE at 10 s {:.3} m", config.model_name(), report.mean.lateral_rmse[9]);
    }
    let outcome = pipeline::bag(&config)?;
    for (name, score) in &outcome.ranking {
        let mark = if outcome.members.contains(name) { "*" } else { " " };
        println!("{mark} {name}: validation lateral RMSE at 10 s {score:.3} m");
    }
    println!("bagged: lateral RMSE at 10 s {:.3} m on the test vehicles", outcome.report.mean.lateral_rmse[9]);
    println!("{}", std::fs::read_to_string(pipeline::report(&config)?)?);
    Ok(())
}
