//! Flag/config-file knobs and their merge.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimsMethod {
    Box,
    Info,
    Pointwise,
    Density,
    Cover,
    Variation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Prop {
    #[value(name = "41i")]
    #[serde(rename = "41i")]
    P41i,
    #[value(name = "41ii")]
    #[serde(rename = "41ii")]
    P41ii,
    #[value(name = "41iii")]
    #[serde(rename = "41iii")]
    P41iii,
    #[value(name = "sbound")]
    #[serde(rename = "sbound")]
    SBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstMode {
    /// a floored to (m+1)^d
    Desk,
    /// exact recipe values
    Recipe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapMode {
    Graph,
    ZeroLine,
    Orbit,
}

/// Every knob, settable by flag or config file. Flags win.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    /// Map steepness κ
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Base dimension D
    #[arg(long = "D")]
    #[serde(rename = "D")]
    pub dim: Option<usize>,
    /// Rotation: `golden` or comma-separated decimals
    #[arg(long)]
    pub rho: Option<String>,
    /// Diophantine constant c
    #[arg(long)]
    pub c: Option<f64>,
    /// Diophantine exponent d
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout if absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Orbit horizon for scans and classification
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Per-axis pitch of the condition-(13) grid
    #[arg(long)]
    pub pitch: Option<f64>,
    /// Iteration depth
    #[arg(long)]
    pub n: Option<u64>,
    /// Grid size M
    #[arg(long)]
    pub grid: Option<u64>,
    /// Depths to emit: all, final or a comma list
    #[arg(long)]
    pub depths: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<DimsMethod>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub anchors: Option<u64>,
    /// Scale ladder coarse:fine:ratio
    #[arg(long)]
    pub ladder: Option<String>,
    /// Fit window start:end (ladder indices, inclusive)
    #[arg(long)]
    pub window: Option<String>,
    /// Proxy depth: an integer or `auto`
    #[arg(long)]
    pub depth: Option<String>,
    /// Base point, comma-separated coordinates
    #[arg(long)]
    pub theta: Option<String>,
    /// Fiber coordinate of a single anchor
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub q: Option<u64>,
    #[arg(long)]
    pub t: Option<u64>,
    #[arg(long)]
    pub pairs: Option<u64>,
    #[arg(long, value_enum)]
    pub prop: Option<Prop>,
    #[arg(long, value_enum)]
    pub constants: Option<ConstMode>,
    #[arg(long, value_enum)]
    pub mode: Option<LyapMode>,
    /// Exponent s of the cover-cost sum
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long = "j-max")]
    #[serde(rename = "j_max")]
    pub j_max: Option<u64>,
    /// TOML file with default knob values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

const COMMON: &[&str] = &["kappa", "D", "rho", "c", "d", "seed", "out", "format"];

/// Keys a command reads besides the common ones.
pub fn command_keys(command: &str) -> &'static [&'static str] {
    match command {
        "check" => &["horizon", "pitch", "constants"],
        "graph" => &["n", "grid", "depths"],
        "dims" => &[
            "method", "samples", "anchors", "ladder", "window", "depth", "theta", "x", "constants", "s", "j_max",
            "n", "grid",
        ],
        "lyapunov" => &["mode", "n", "grid", "theta"],
        "partition" => &["samples", "horizon", "theta", "constants"],
        "pinched" => &["theta", "samples", "q", "t", "constants"],
        "verify" => &["prop", "n", "q", "pairs", "constants"],
        _ => &[],
    }
}

fn flag_name(key: &str) -> String {
    match key {
        "j_max" => "--j-max".into(),
        k => format!("--{k}"),
    }
}

/// Reads a TOML config file.
pub fn load_config(path: &Path) -> Result<Knobs, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let (line, col) = e
            .span()
            .map(|s| line_col(&text, s.start))
            .unwrap_or((0, 0));
        let key = text
            .lines()
            .nth(line.saturating_sub(1))
            .and_then(|l| l.split_once('='))
            .map(|(k, _)| k.trim().trim_matches('"'))
            .filter(|k| !k.is_empty());
        let prefix = key.map_or(String::new(), |k| format!("key `{k}`: "));
        CliError::Config(format!(
            "{}:{line}:{col}: {prefix}{}",
            path.display(),
            e.message().replace('\n', " ")
        ))
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Config file values overlaid with flag values; rejects flags the command
/// does not use.
pub fn merge(command: &str, flags: &Knobs) -> Result<Knobs, CliError> {
    let flag_map = to_map(flags);
    let allowed = command_keys(command);
    for key in flag_map.keys() {
        if !COMMON.contains(&key.as_str()) && !allowed.contains(&key.as_str()) {
            return Err(CliError::Config(format!("{} is not used by `{command}`", flag_name(key))));
        }
    }
    let file = match &flags.config {
        Some(p) => load_config(p)?,
        None => Knobs::default(),
    };
    let mut merged = to_map(&file);
    merged.extend(flag_map);
    let value = Value::Object(merged.into_iter().collect());
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("config: {e}")))
}

fn to_map(k: &Knobs) -> BTreeMap<String, Value> {
    match serde_json::to_value(k).expect("knobs serialize") {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = write_config("");
        let k = load_config(f.path()).unwrap();
        assert!(k.kappa.is_none() && k.dim.is_none());
    }

    #[test]
    fn flags_override_file() {
        let f = write_config("kappa = 3.0\nD = 1\n");
        let flags = Knobs { kappa: Some(4.0), config: Some(f.path().into()), ..Knobs::default() };
        let m = merge("check", &flags).unwrap();
        assert_eq!(m.kappa, Some(4.0));
        assert_eq!(m.dim, Some(1));
    }

    #[test]
    fn malformed_numeric_names_key() {
        let f = write_config("D = 1\nkappa = \"three\"\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(err.contains("kappa"), "{err}");
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let f = write_config("kapa = 3.0\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(err.contains("kapa"), "{err}");
    }

    #[test]
    fn irrelevant_flag_rejected() {
        let flags = Knobs { method: Some(DimsMethod::Box), ..Knobs::default() };
        let err = merge("check", &flags).unwrap_err().to_string();
        assert!(err.contains("--method"), "{err}");
    }
}
