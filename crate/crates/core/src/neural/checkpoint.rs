//! Checkpoint files.
//!
//! A checkpoint is a UTF-8 text header followed by a binary body:
//!
//! ```text
//! HIGHWAY-LSTM CHECKPOINT
//! version = 1
//! input_size = 49
//! lstm_layers = 256
//! dense_layers = 256:tanh,128:tanh
//! bypass_mode = to_output
//! bypass_width = 4
//! output_size = 20
//! use_type = false
//! use_ff = true
//! seed = 7
//! step = 15000
//! block = lstm0.forget.w 256 305
//! block = lstm0.forget.b 256 1
//! ...
//! block = output.b 20 1
//! end
//! ```
//!
//! Blocks are listed in storage order (per LSTM layer the forget, input, candidate
//! and output gate weight then bias; each dense layer's weight then bias; the
//! output layer last). The body is every block's values as little-endian `f64`,
//! row-major, concatenated in that order, with nothing after the last block.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::dense::Activation;
use super::model::{BypassMode, DenseSpec, ModelConfig, ModelParams};
use crate::dataset::{header_value, parse_header, parse_list, read_f64s, read_text_header};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &str = "HIGHWAY-LSTM CHECKPOINT";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint block shapes disagree with its header: {0}")]
    ShapeMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bookkeeping stored next to the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
}

fn header_text(params: &ModelParams, meta: CheckpointMeta) -> String {
    let c = &params.config;
    let join = |v: Vec<String>| v.join(",");
    let mut text = format!(
        "{CHECKPOINT_MAGIC}\nversion = {CHECKPOINT_VERSION}\ninput_size = {}\nlstm_layers = {}\ndense_layers = {}\nbypass_mode = {}\nbypass_width = {}\noutput_size = {}\nuse_type = {}\nuse_ff = {}\nseed = {}\nstep = {}\n",
        c.input_size,
        join(c.lstm_layers.iter().map(usize::to_string).collect()),
        join(c.dense_layers.iter().map(|d| format!("{}:{}", d.size, d.activation.name())).collect()),
        c.bypass_mode.name(),
        c.bypass_width,
        c.output_size,
        c.use_type,
        c.use_ff,
        meta.seed,
        meta.step,
    );
    for (name, t) in params.blocks() {
        text.push_str(&format!("block = {name} {} {}\n", t.rows(), t.cols()));
    }
    text.push_str("end\n");
    text
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams, meta: CheckpointMeta) -> std::io::Result<()> {
    out.write_all(header_text(params, meta).as_bytes())?;
    for (_, t) in params.blocks() {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn corrupt(msg: String) -> CheckpointError {
    CheckpointError::Corrupt(msg)
}

fn parse_config(pairs: &[(String, String)]) -> Result<ModelConfig, CheckpointError> {
    let dense = header_value(pairs, "dense_layers").map_err(corrupt)?;
    let dense_layers = parse_list::<String>(dense)
        .map_err(corrupt)?
        .into_iter()
        .map(|item| {
            let (size, act) = item.split_once(':').ok_or_else(|| corrupt(format!("bad dense layer {item:?}")))?;
            Ok(DenseSpec {
                size: size.parse().map_err(|_| corrupt(format!("bad dense size {size:?}")))?,
                activation: Activation::parse(act).ok_or_else(|| corrupt(format!("unknown activation {act:?}")))?,
            })
        })
        .collect::<Result<Vec<_>, CheckpointError>>()?;
    let bypass = header_value(pairs, "bypass_mode").map_err(corrupt)?;
    let config = ModelConfig {
        input_size: parse_header(pairs, "input_size").map_err(corrupt)?,
        lstm_layers: parse_list(header_value(pairs, "lstm_layers").map_err(corrupt)?).map_err(corrupt)?,
        dense_layers,
        bypass_mode: BypassMode::parse(bypass).ok_or_else(|| corrupt(format!("unknown bypass mode {bypass:?}")))?,
        bypass_width: parse_header(pairs, "bypass_width").map_err(corrupt)?,
        output_size: parse_header(pairs, "output_size").map_err(corrupt)?,
        use_type: parse_header(pairs, "use_type").map_err(corrupt)?,
        use_ff: parse_header(pairs, "use_ff").map_err(corrupt)?,
    };
    config.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(config)
}

pub fn read_checkpoint<R: BufRead>(mut reader: R) -> Result<(ModelParams, CheckpointMeta), CheckpointError> {
    let pairs = read_text_header(&mut reader, CHECKPOINT_MAGIC).map_err(|e| {
        if e == "header not terminated" {
            CheckpointError::Truncated
        } else {
            corrupt(e)
        }
    })?;
    let version: u32 = parse_header(&pairs, "version").map_err(corrupt)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let config = parse_config(&pairs)?;
    let meta = CheckpointMeta {
        seed: parse_header(&pairs, "seed").map_err(corrupt)?,
        step: parse_header(&pairs, "step").map_err(corrupt)?,
    };
    let listed: Vec<&str> = pairs.iter().filter(|(k, _)| k == "block").map(|(_, v)| v.as_str()).collect();
    let mut params = ModelParams::zeros(&config).map_err(|e| corrupt(e.to_string()))?;
    let expected: Vec<String> =
        params.blocks().into_iter().map(|(name, t)| format!("{name} {} {}", t.rows(), t.cols())).collect();
    if listed.len() != expected.len() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "{} blocks listed, the configuration needs {}",
            listed.len(),
            expected.len()
        )));
    }
    for (got, want) in listed.iter().zip(&expected) {
        if got.split_whitespace().ne(want.split_whitespace()) {
            return Err(CheckpointError::ShapeMismatch(format!("block {got:?}, expected {want:?}")));
        }
    }
    for block in params.blocks_mut() {
        let values = read_f64s(&mut reader, block.len()).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                CheckpointError::Truncated
            } else {
                CheckpointError::Io(e)
            }
        })?;
        block.data_mut().copy_from_slice(&values);
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after the last block".into()));
    }
    Ok((params, meta))
}

/// Writes to a sibling temporary file and renames it over `path`, so readers never
/// observe a partially written checkpoint.
pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: CheckpointMeta) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let file = File::create(&tmp)?;
        let mut out = BufWriter::new(file);
        write_checkpoint(&mut out, params, meta)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta), CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
