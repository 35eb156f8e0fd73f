//! Every stage on disk, driven by a TOML run configuration, as the CLI does it.

use std::path::Path;

use highway_lstm::config::RunConfig;
use highway_lstm::pipeline;

const CONFIG: &str = r#"
[synth]
vehicles = 20

[model]
variant = "reference"
hidden = 8
seed = 1

[train]
full_passes = 2
epochs_per_group = 2

[predict]
vehicles = [3]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut config = RunConfig::from_toml_str(CONFIG)?;
    config.paths.data_root = dir.path().to_path_buf();
    pipeline::run_all(&config)?;
    let predictions = pipeline::predict(&config, None, &[])?;
    println!("{}", std::fs::read_to_string(predictions)?.lines().take(4).collect::<Vec<_>>().join("\n"));
    let mut files: Vec<String> = Vec::new();
    for sub in ["", "checkpoints", "reports"] {
        for entry in std::fs::read_dir(dir.path().join(sub))? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                files.push(Path::new(sub).join(entry.file_name()).display().to_string());
            }
        }
    }
    files.sort();
    println!("artifacts:\n  {}", files.join("\n  "));
    Ok(())
}
