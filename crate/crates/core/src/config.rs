//! Flat `key = value` configuration for the service and CLI.
//!
//! ```text
//! # comments start with '#'
//! patch_dir = "data/patches"
//! ncc_threshold = 0.97
//! field_dead_zone = true
//! ```
//!
//! `ACF_CONFIG` names the file to read when no path is given explicitly.

use std::path::{Path, PathBuf};

use crate::attraction::FieldConfig;
use crate::error::{Error, Result};
use crate::patch::MatchConfig;
use crate::vocab::DEFAULT_MIN_CLICK_COUNT;

pub const CONFIG_ENV: &str = "ACF_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub bind: String,
    pub patch_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub default_k: usize,
    pub min_click_count: u64,
    pub matching: MatchConfig,
    pub field: FieldConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:7878".into(),
            patch_dir: None,
            checkpoint: None,
            vocab: None,
            static_dir: None,
            default_k: 5,
            min_click_count: DEFAULT_MIN_CLICK_COUNT,
            matching: MatchConfig::default(),
            field: FieldConfig::default(),
        }
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            let key = key.trim();
            let v = unquote(value);
            match key {
                "bind" => s.bind = v.to_string(),
                "patch_dir" => s.patch_dir = Some(v.into()),
                "checkpoint" => s.checkpoint = Some(v.into()),
                "vocab" => s.vocab = Some(v.into()),
                "static_dir" => s.static_dir = Some(v.into()),
                "default_k" => s.default_k = num(key, v)?,
                "min_click_count" => s.min_click_count = num(key, v)?,
                "ncc_threshold" => s.matching.threshold = num(key, v)?,
                "margin_px" => s.matching.margin_px = num(key, v)?,
                "size_tol_px" => s.matching.prefilter.size_px = num(key, v)?,
                "color_tol" => s.matching.prefilter.color = num(key, v)?,
                "field_gain" => s.field.gain = num(key, v)?,
                "field_softening_px" => s.field.softening_px = num(key, v)?,
                "field_max_pull_px" => s.field.max_pull_px = num(key, v)?,
                "field_dead_zone" => s.field.dead_zone = num(key, v)?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", idx + 1))),
            }
        }
        s.field.validate()?;
        if !(-1.0..=1.0).contains(&s.matching.threshold) {
            return Err(Error::Config("ncc_threshold must lie in [-1, 1]".into()));
        }
        if s.default_k < 1 {
            return Err(Error::Config("default_k must be at least 1".into()));
        }
        Ok(s)
    }

    /// Reads `path`, else the file named by `ACF_CONFIG`, else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let chosen = path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match chosen {
            Some(p) => Self::parse(&std::fs::read_to_string(&p)?),
            None => Ok(Self::default()),
        }
    }
}
