//! Scenario config files and the bundled fixtures.

use std::path::Path;

use smartson_core::ScenarioConfig;
use thiserror::Error;

/// Bundled fixtures by name.
pub const FIXTURES: [(&str, &str); 2] = [
    ("table3", include_str!("../fixtures/table3.json")),
    ("table4", include_str!("../fixtures/table4.json")),
];

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("no bundled fixture named {0:?}")]
    UnknownFixture(String),
}

pub fn parse_config(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigFileError> {
    serde_json::from_str(text).map_err(|source| ConfigFileError::Json {
        path: origin.to_string(),
        source,
    })
}

/// A bundled fixture, by bare name (`table4`) or file name (`table4.json`).
pub fn fixture(name: &str) -> Result<ScenarioConfig, ConfigFileError> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let (_, text) = FIXTURES
        .iter()
        .find(|(n, _)| *n == stem)
        .ok_or_else(|| ConfigFileError::UnknownFixture(name.to_string()))?;
    parse_config(text, name)
}

/// Reads a config file. A path that does not exist but names a bundled
/// fixture loads that fixture.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigFileError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_config(&text, &path.display().to_string()),
        Err(source) if source.kind() == std::io::ErrorKind::NotFound => {
            let name = path.to_string_lossy();
            fixture(&name).map_err(|_| ConfigFileError::Io {
                path: path.display().to_string(),
                source,
            })
        }
        Err(source) => Err(ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        }),
    }
}
