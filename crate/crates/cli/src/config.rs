//! Declarative run configuration loaded from a TOML file.
//!
//! ```toml
//! m = 5
//! pa = "0.02:0.98:0.02"
//! qr = 0.5
//! channel = "both"
//! out = "team.csv"
//! ```
//!
//! Every key is optional and every command-line flag overrides its key.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use zigzag_aloha::experiments::Axis;
use zigzag_aloha::{Error, Result};

/// A number, or a `start:stop:step` string.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AxisValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl AxisValue {
    pub fn to_axis(&self) -> Result<Axis> {
        match self {
            AxisValue::Int(x) => Ok(Axis::Scalar(*x as f64)),
            AxisValue::Float(x) => Ok(Axis::Scalar(*x)),
            AxisValue::Text(s) => s.parse(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub m: Option<AxisValue>,
    pub pa: Option<AxisValue>,
    pub qr: Option<AxisValue>,
    pub qr_tagged: Option<AxisValue>,
    pub channel: Option<String>,
    pub normalization: Option<String>,
    pub baseline_q: Option<String>,
    pub seed: Option<u64>,
    pub frames: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numbers_and_ranges() {
        let cfg: FileConfig =
            toml::from_str("m = 10\npa = \"0.1:0.5:0.1\"\nqr = 0.25\nseed = 7\n").unwrap();
        assert_eq!(cfg.m.unwrap().to_axis().unwrap(), Axis::Scalar(10.0));
        assert!(cfg.pa.unwrap().to_axis().unwrap().is_swept());
        assert_eq!(cfg.qr.unwrap().to_axis().unwrap(), Axis::Scalar(0.25));
        assert_eq!(cfg.seed, Some(7));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("arrival = 0.3\n").is_err());
    }
}
