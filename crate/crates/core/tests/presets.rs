//! The shipped preset files must stay in lockstep with the built-in configs.

use std::path::PathBuf;

use telelat_core::config::load_pipeline_config;
use telelat_core::sim::{baseline_config, emulate_field, FieldPreset};

fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

#[test]
fn shipped_4g_preset_matches_builtin() {
    let from_file = load_pipeline_config(preset_path("4g.cfg")).unwrap();
    assert_eq!(from_file, emulate_field(FieldPreset::FourG));
}

#[test]
fn shipped_5g_preset_matches_builtin() {
    let from_file = load_pipeline_config(preset_path("5g-nsa.cfg")).unwrap();
    assert_eq!(from_file, emulate_field(FieldPreset::FiveGNsa));
}

#[test]
fn shipped_baseline_preset_matches_builtin() {
    let from_file = load_pipeline_config(preset_path("baseline.cfg")).unwrap();
    assert_eq!(from_file, baseline_config());
}
