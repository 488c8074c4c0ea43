use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Defaults read from `--config`. Every key is optional; flags and
/// environment variables take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub learn: LearnSection,
    #[serde(default)]
    pub replay: ReplaySection,
    #[serde(default)]
    pub render: RenderSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSection {
    pub gap_minutes: Option<f64>,
    pub speed_threshold: Option<f64>,
    pub radii: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub utc_offset: Option<String>,
    pub smoothing_window: Option<usize>,
    pub knee_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub models_dir: Option<PathBuf>,
    pub tick: Option<i64>,
    pub lookahead: Option<i64>,
    pub buffer: Option<f64>,
    pub detour_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    pub segment_minutes: Option<u32>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
