//! Config file loading: the simulator pipeline config and the breakdown
//! inputs document. Both are TOML; parse errors keep the parser's
//! line/column context.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::breakdown::MeasuredComponent;
use crate::sim::{PipelineConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse and validate a pipeline config document.
pub fn parse_pipeline_config(s: &str) -> Result<PipelineConfig, ConfigError> {
    let config: PipelineConfig = toml::from_str(s)?;
    config.validate()?;
    Ok(config)
}

pub fn load_pipeline_config(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_pipeline_config(&text)
}

pub fn pipeline_config_to_toml(config: &PipelineConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

/// One chain's inputs for residual attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInputs {
    /// Mean total latency of the chain, milliseconds.
    pub total_ms: f64,
    /// Name given to the unmeasured residual component.
    pub residual: String,
    /// Directly measured (or externally estimated) component means.
    pub measured: Vec<MeasuredComponent>,
    /// Free-text caveat carried into report footnotes.
    #[serde(default)]
    pub note: Option<String>,
}

/// Breakdown inputs document: totals plus measured component means per chain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BreakdownInputs {
    pub m2m: Option<ChainInputs>,
    pub g2g: Option<ChainInputs>,
}

pub fn parse_breakdown_inputs(s: &str) -> Result<BreakdownInputs, ConfigError> {
    Ok(toml::from_str(s)?)
}

pub fn load_breakdown_inputs(path: impl AsRef<Path>) -> Result<BreakdownInputs, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_breakdown_inputs(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;

    #[test]
    fn pipeline_config_round_trips_through_toml() {
        for config in [
            sim::emulate_field(sim::FieldPreset::FourG),
            sim::emulate_field(sim::FieldPreset::FiveGNsa),
            sim::baseline_config(),
        ] {
            let text = pipeline_config_to_toml(&config);
            let parsed = parse_pipeline_config(&text).unwrap();
            assert_eq!(parsed, config);
        }
    }

    #[test]
    fn parse_error_carries_line_context() {
        let err = parse_pipeline_config("sessions = \"many\"").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "no line anchor in: {msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let mut config = sim::baseline_config();
        config.profile.inter_session_gap_s = 0.5;
        let text = pipeline_config_to_toml(&config);
        let err = parse_pipeline_config(&text).unwrap_err();
        assert!(err.to_string().contains("inter_session_gap_s"));
    }

    #[test]
    fn breakdown_inputs_parse() {
        let doc = r#"
[m2m]
total_ms = 306.0
residual = "actuation"
measured = [
  { name = "input_device", mean_ms = 5.0 },
  { name = "pre_processing", mean_ms = 10.0 },
  { name = "network", mean_ms = 10.30 },
  { name = "post_processing", mean_ms = 10.0 },
]

[g2g]
total_ms = 193.0
residual = "camera"
note = "monitor mean derived from the 60 Hz refresh model"
measured = [
  { name = "stream_pre", mean_ms = 39.0 },
  { name = "network", mean_ms = 15.0 },
  { name = "stream_post", mean_ms = 10.5 },
  { name = "monitor", mean_ms = 8.33, provenance = "estimated" },
]
"#;
        let inputs = parse_breakdown_inputs(doc).unwrap();
        let m2m = inputs.m2m.unwrap();
        assert_eq!(m2m.measured.len(), 4);
        assert_eq!(m2m.residual, "actuation");
        let g2g = inputs.g2g.unwrap();
        assert_eq!(
            g2g.measured[3].provenance,
            crate::breakdown::Provenance::Estimated
        );
        assert!(g2g.note.unwrap().contains("60 Hz"));
    }
}
