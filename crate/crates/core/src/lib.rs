//! Latency measurement toolkit for vehicle teleoperation.
//!
//! The toolkit quantifies the three latencies of a teleoperation loop:
//!
//! - **Motion-to-Motion (M2M)**: delay from the onset of the operator's
//!   steering input to the onset of the corresponding vehicle steering motion.
//! - **Glass-to-Glass (G2G)**: delay from a light event in the vehicle
//!   camera's field of view to its appearance on the operator's display.
//! - **End-to-End (E2E)**: M2M + G2G, the full perception-plus-actuation loop.
//!
//! Measurements come either from ingested event logs produced by a physical
//! rig (two gyroscope nodes, an LED and a phototransistor, one clock per
//! node) or from the deterministic pipeline simulator in [`sim`], which
//! additionally emits ground truth so that measured latencies can be
//! decomposed into physical latency plus measurement-system error.

pub mod breakdown;
pub mod clocks;
pub mod config;
pub mod events;
pub mod latency;
pub mod motion;
pub mod sim;

pub use breakdown::{BreakdownTable, Chain, Component, Provenance};
pub use clocks::{Alignment, ClockModel, ClockReader, OffsetStats};
pub use events::{
    ClockDomain, EventLog, GroundTruth, InvalidReason, LogFormat, SessionRecord, Timestamp,
};
pub use latency::{ErrorDecomposition, LatencyStats, LatencyTriple, SessionStats};
pub use motion::{Detector, DetectorConfig, FusionMode, GyroSample, MotionEvent};
pub use sim::{DelayModel, FieldPreset, PipelineConfig, ProfileSpec, SimOutput};
