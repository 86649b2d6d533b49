//! Deterministic discrete-event simulator of the teleoperation measurement
//! loop.
//!
//! Each session generates a steering-motion profile, runs the onset detector
//! on per-node gyro streams, propagates the command through the configured
//! component-delay chain to produce the vehicle motion, drives the LED /
//! phototransistor pair through the video chain, and reads every anchor event
//! through the node clocks. True event times and every injected error draw
//! are logged so measured latencies can be reconciled against ground truth
//! exactly.
//!
//! All randomness derives from one master seed through documented per-purpose
//! lanes (see [`lane_seed`]): changing what one lane is used for leaves every
//! other lane's draws untouched, and sessions are independent, so distinct
//! sessions may be simulated in parallel with bit-identical results.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocks::{ClockModel, ClockReader};
use crate::events::{
    ClockDomain, EventLog, GroundTruth, InvalidReason, SessionRecord, Timestamp,
};
use crate::motion::{Detector, DetectorConfig, GyroSample, MotionError};

const NS_PER_MS: f64 = 1e6;
/// Zero-signal lead-in before each session's motion onset; seeds the filter.
const PREROLL_NS: i64 = 50_000_000;
/// Spacing between session slots on top of the configured gap.
const SLOT_EXTRA_NS: i64 = 10_000_000_000;

/// A component delay distribution, milliseconds. Realized delays are
/// always >= 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DelayModel {
    Constant {
        ms: f64,
    },
    Uniform {
        lo_ms: f64,
        hi_ms: f64,
    },
    /// Gaussian truncated at zero (negative draws clamp to 0).
    Normal {
        mean_ms: f64,
        std_ms: f64,
    },
    /// Log-normal parameterized by its median: `mu = ln(median_ms)`.
    LogNormal {
        median_ms: f64,
        sigma: f64,
    },
    /// Wait until the next tick of a periodic sampling process. With a
    /// random phase this realizes Uniform[0, period); with a fixed phase the
    /// delay depends on the arrival time within the cycle.
    Periodic {
        period_ms: f64,
        #[serde(default)]
        phase: Phase,
    },
    /// Sum of independent sub-models (e.g. periodic sampling plus a constant
    /// transfer offset).
    Sum {
        parts: Vec<DelayModel>,
    },
}

/// Phase of a periodic sampling process.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Phase {
    #[default]
    Random,
    /// Fixed grid offset, milliseconds.
    FixedMs(f64),
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Phase::Random => serializer.serialize_str("random"),
            Phase::FixedMs(ms) => serializer.serialize_f64(*ms),
        }
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Keyword(String),
            OffsetMs(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Keyword(s) if s == "random" => Ok(Phase::Random),
            Repr::Keyword(s) => Err(serde::de::Error::custom(format!(
                "unknown phase {s:?} (expected \"random\" or a fixed offset in ms)"
            ))),
            Repr::OffsetMs(ms) => Ok(Phase::FixedMs(ms)),
        }
    }
}

impl DelayModel {
    pub fn validate(&self, context: &str) -> Result<(), SimError> {
        let invalid = |msg: String| SimError::InvalidConfig(format!("{context}: {msg}"));
        match self {
            DelayModel::Constant { ms } => {
                if *ms < 0.0 || !ms.is_finite() {
                    return Err(invalid(format!("constant delay must be >= 0, got {ms}")));
                }
            }
            DelayModel::Uniform { lo_ms, hi_ms } => {
                if *lo_ms < 0.0 || hi_ms < lo_ms || !hi_ms.is_finite() {
                    return Err(invalid(format!(
                        "uniform bounds must satisfy 0 <= lo <= hi, got [{lo_ms}, {hi_ms}]"
                    )));
                }
            }
            DelayModel::Normal { mean_ms, std_ms } => {
                if !mean_ms.is_finite() || *std_ms < 0.0 || !std_ms.is_finite() {
                    return Err(invalid(format!(
                        "normal delay needs finite mean and std >= 0, got ({mean_ms}, {std_ms})"
                    )));
                }
            }
            DelayModel::LogNormal { median_ms, sigma } => {
                if *median_ms <= 0.0 || *sigma < 0.0 || !sigma.is_finite() {
                    return Err(invalid(format!(
                        "lognormal needs median > 0 and sigma >= 0, got ({median_ms}, {sigma})"
                    )));
                }
            }
            DelayModel::Periodic { period_ms, .. } => {
                if *period_ms <= 0.0 || !period_ms.is_finite() {
                    return Err(invalid(format!("period must be > 0, got {period_ms}")));
                }
            }
            DelayModel::Sum { parts } => {
                if parts.is_empty() {
                    return Err(invalid("sum model needs at least one part".into()));
                }
                for part in parts {
                    part.validate(context)?;
                }
            }
        }
        Ok(())
    }

    /// Realize one delay in nanoseconds for an event arriving at
    /// `arrival_ns` (reference time; only periodic fixed-phase models
    /// depend on it).
    pub fn realize(&self, rng: &mut ChaCha8Rng, arrival_ns: i64) -> i64 {
        match self {
            DelayModel::Constant { ms } => ms_to_ns(*ms),
            DelayModel::Uniform { lo_ms, hi_ms } => {
                if hi_ms <= lo_ms {
                    ms_to_ns(*lo_ms)
                } else {
                    ms_to_ns(rng.gen_range(*lo_ms..*hi_ms))
                }
            }
            DelayModel::Normal { mean_ms, std_ms } => {
                if *std_ms == 0.0 {
                    ms_to_ns(mean_ms.max(0.0))
                } else {
                    let normal = Normal::new(*mean_ms, *std_ms).expect("validated");
                    ms_to_ns(normal.sample(rng).max(0.0))
                }
            }
            DelayModel::LogNormal { median_ms, sigma } => {
                let dist = LogNormal::new(median_ms.ln(), *sigma).expect("validated");
                ms_to_ns(dist.sample(rng))
            }
            DelayModel::Periodic { period_ms, phase } => {
                let period_ns = ms_to_ns(*period_ms).max(1);
                match phase {
                    Phase::Random => rng.gen_range(0..period_ns),
                    Phase::FixedMs(offset_ms) => {
                        (ms_to_ns(*offset_ms) - arrival_ns).rem_euclid(period_ns)
                    }
                }
            }
            DelayModel::Sum { parts } => {
                let mut arrival = arrival_ns;
                let mut total = 0i64;
                for part in parts {
                    let d = part.realize(rng, arrival);
                    total += d;
                    arrival += d;
                }
                total
            }
        }
    }
}

fn ms_to_ns(ms: f64) -> i64 {
    (ms * NS_PER_MS).round() as i64
}

/// A scalar that is either fixed or drawn per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarSpec {
    Fixed(f64),
    /// Log-normal by median, optionally clamped.
    LogNormal {
        median: f64,
        sigma: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl ScalarSpec {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScalarSpec::Fixed(v) => *v,
            ScalarSpec::LogNormal {
                median,
                sigma,
                min,
                max,
            } => {
                let dist = LogNormal::new(median.ln(), *sigma).expect("validated");
                let mut v = dist.sample(rng);
                if let Some(lo) = min {
                    v = v.max(*lo);
                }
                if let Some(hi) = max {
                    v = v.min(*hi);
                }
                v
            }
            ScalarSpec::Uniform { lo, hi } => {
                if hi <= lo {
                    *lo
                } else {
                    rng.gen_range(*lo..*hi)
                }
            }
        }
    }

    fn validate(&self, context: &str) -> Result<(), SimError> {
        let ok = match self {
            ScalarSpec::Fixed(v) => v.is_finite() && *v > 0.0,
            ScalarSpec::LogNormal { median, sigma, .. } => {
                *median > 0.0 && *sigma >= 0.0 && sigma.is_finite()
            }
            ScalarSpec::Uniform { lo, hi } => *lo > 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!(
                "{context}: invalid scalar spec {self:?}"
            )))
        }
    }
}

/// Steering-motion profile driven per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileKind {
    /// Instantaneous jump to a fixed angular velocity, rad/s.
    Step { amplitude: f64 },
    /// Linear ramp of angular velocity, rad/s per second.
    Ramp { slope: ScalarSpec },
    /// Replay of a recorded gyro trace (`t_ns,wx,wy,wz` CSV), shifted to
    /// each session's start.
    Recorded { trace: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(flatten)]
    pub kind: ProfileKind,
    /// Idle time between sessions, seconds. Must cover the detector
    /// completion window so maneuvers never overlap.
    #[serde(default = "default_gap_s")]
    pub inter_session_gap_s: f64,
}

fn default_gap_s() -> f64 {
    3.0
}

/// Acquisition-side parameters shared by both nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    /// Gyro sampling period, microseconds.
    #[serde(default = "default_sample_period_us")]
    pub sample_period_us: f64,
    /// Sampling-grid phase of each node, per session.
    #[serde(default)]
    pub phase: Phase,
    /// Per-sample, per-axis Gaussian gyro noise, rad/s.
    #[serde(default)]
    pub noise_std: f64,
    /// How long past the motion onset the detector may search, seconds.
    #[serde(default = "default_detection_horizon_s")]
    pub detection_horizon_s: f64,
    /// Lag between vehicle-side detection and the LED drive command.
    #[serde(default = "default_led_drive")]
    pub led_drive: DelayModel,
    /// Physical lag from the LED drive command to illumination.
    #[serde(default = "default_zero_delay")]
    pub e_led: DelayModel,
    /// Physical lag from the phototransistor light event to its interrupt.
    #[serde(default = "default_zero_delay")]
    pub e_pt: DelayModel,
}

fn default_sample_period_us() -> f64 {
    250.0
}

fn default_detection_horizon_s() -> f64 {
    2.0
}

fn default_led_drive() -> DelayModel {
    DelayModel::Constant { ms: 0.1 }
}

fn default_zero_delay() -> DelayModel {
    DelayModel::Constant { ms: 0.0 }
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            sample_period_us: default_sample_period_us(),
            phase: Phase::Random,
            noise_std: 0.0,
            detection_horizon_s: default_detection_horizon_s(),
            led_drive: default_led_drive(),
            e_led: default_zero_delay(),
            e_pt: default_zero_delay(),
        }
    }
}

/// Offset and jitter of one node's clock (domain and seed lane are assigned
/// by the simulator).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockSpec {
    #[serde(default)]
    pub offset_ns: i64,
    #[serde(default)]
    pub drift_ppb: i64,
    #[serde(default)]
    pub jitter_std_ns: f64,
}

impl ClockSpec {
    fn model(&self, domain: ClockDomain) -> ClockModel {
        ClockModel {
            domain,
            offset_ns: self.offset_ns,
            drift_ppb: self.drift_ppb,
            jitter_std_ns: self.jitter_std_ns,
            seed: 0, // reseeded per session lane
        }
    }
}

/// Named command-path component delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandChain {
    pub input_device: DelayModel,
    pub pre_processing: DelayModel,
    pub network_cmd: DelayModel,
    pub post_processing: DelayModel,
    pub actuation: DelayModel,
}

impl CommandChain {
    pub fn components(&self) -> [(&'static str, &DelayModel); 5] {
        [
            ("input_device", &self.input_device),
            ("pre_processing", &self.pre_processing),
            ("network_cmd", &self.network_cmd),
            ("post_processing", &self.post_processing),
            ("actuation", &self.actuation),
        ]
    }
}

/// Named video-path component delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoChain {
    pub camera: DelayModel,
    pub stream_pre: DelayModel,
    pub network_video: DelayModel,
    pub stream_post: DelayModel,
    pub monitor: DelayModel,
}

impl VideoChain {
    pub fn components(&self) -> [(&'static str, &DelayModel); 5] {
        [
            ("camera", &self.camera),
            ("stream_pre", &self.stream_pre),
            ("network_video", &self.network_video),
            ("stream_post", &self.stream_post),
            ("monitor", &self.monitor),
        ]
    }
}

/// Full simulation configuration. See `presets/` for annotated examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sessions: u32,
    /// Master seed; every random lane derives from it.
    #[serde(default)]
    pub seed: u64,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub rig: RigConfig,
    #[serde(default)]
    pub station_clock: ClockSpec,
    #[serde(default)]
    pub vehicle_clock: ClockSpec,
    pub detector_station: DetectorConfig,
    pub detector_vehicle: DetectorConfig,
    pub m2m_chain: CommandChain,
    pub g2g_chain: VideoChain,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.sessions < 1 {
            return Err(SimError::InvalidConfig("sessions must be >= 1".into()));
        }
        self.detector_station
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("detector_station: {e}")))?;
        self.detector_vehicle
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("detector_vehicle: {e}")))?;
        if self.rig.sample_period_us <= 0.0 {
            return Err(SimError::InvalidConfig(
                "rig.sample_period_us must be > 0".into(),
            ));
        }
        if self.rig.noise_std < 0.0 {
            return Err(SimError::InvalidConfig("rig.noise_std must be >= 0".into()));
        }
        if self.rig.detection_horizon_s <= 0.0 {
            return Err(SimError::InvalidConfig(
                "rig.detection_horizon_s must be > 0".into(),
            ));
        }
        self.rig.led_drive.validate("rig.led_drive")?;
        self.rig.e_led.validate("rig.e_led")?;
        self.rig.e_pt.validate("rig.e_pt")?;
        for (name, model) in self.m2m_chain.components() {
            model.validate(&format!("m2m_chain.{name}"))?;
        }
        for (name, model) in self.g2g_chain.components() {
            model.validate(&format!("g2g_chain.{name}"))?;
        }
        self.station_clock
            .model(ClockDomain::Station)
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("station_clock: {e}")))?;
        self.vehicle_clock
            .model(ClockDomain::Vehicle)
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("vehicle_clock: {e}")))?;

        let window = self
            .detector_station
            .completion_window_s
            .max(self.detector_vehicle.completion_window_s);
        if self.profile.inter_session_gap_s < window {
            return Err(SimError::InvalidConfig(format!(
                "profile.inter_session_gap_s ({}) must cover the completion window ({})",
                self.profile.inter_session_gap_s, window
            )));
        }
        match &self.profile.kind {
            ProfileKind::Step { amplitude } => {
                let needed = self
                    .detector_station
                    .threshold
                    .max(self.detector_vehicle.threshold);
                if *amplitude <= needed {
                    return Err(SimError::InvalidConfig(format!(
                        "profile.amplitude ({amplitude}) must exceed both detector thresholds ({needed})"
                    )));
                }
            }
            ProfileKind::Ramp { slope } => slope.validate("profile.slope")?,
            ProfileKind::Recorded { trace } => {
                if trace.is_empty() {
                    return Err(SimError::InvalidConfig("profile.trace is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// Every error draw injected into one simulated session, nanoseconds.
///
/// The measured triple minus the physical triple equals sums of these
/// entries exactly; see [`SessionLedger::e_m2m_ns`] and friends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLedger {
    pub session_id: u64,
    /// Command-path component realizations (sums to `m2m_phy`).
    pub m2m_components: Vec<(String, i64)>,
    /// Video-path component realizations (sums to the LED->PT physical lag).
    pub g2g_components: Vec<(String, i64)>,
    pub detection_lag_station_ns: Option<i64>,
    pub clock_err_gy_station_ns: Option<i64>,
    pub detection_lag_vehicle_ns: Option<i64>,
    pub clock_err_gy_vehicle_ns: Option<i64>,
    pub led_drive_lag_ns: Option<i64>,
    pub clock_err_led_on_ns: Option<i64>,
    pub e_led_draw_ns: Option<i64>,
    pub e_pt_draw_ns: Option<i64>,
    pub clock_err_pt_trigger_ns: Option<i64>,
}

impl SessionLedger {
    fn empty(session_id: u64) -> Self {
        SessionLedger {
            session_id,
            m2m_components: Vec::new(),
            g2g_components: Vec::new(),
            detection_lag_station_ns: None,
            clock_err_gy_station_ns: None,
            detection_lag_vehicle_ns: None,
            clock_err_gy_vehicle_ns: None,
            led_drive_lag_ns: None,
            clock_err_led_on_ns: None,
            e_led_draw_ns: None,
            e_pt_draw_ns: None,
            clock_err_pt_trigger_ns: None,
        }
    }

    /// Sum of draws that make up the motion-chain measurement error:
    /// `(lag_v + clock_v) - (lag_s + clock_s)`.
    pub fn e_m2m_ns(&self) -> Option<i64> {
        Some(
            self.detection_lag_vehicle_ns? + self.clock_err_gy_vehicle_ns?
                - self.detection_lag_station_ns?
                - self.clock_err_gy_station_ns?,
        )
    }

    /// Sum of draws that make up the video-chain measurement error:
    /// `e_pt + clock_pt + e_led - clock_led`.
    pub fn e_g2g_ns(&self) -> Option<i64> {
        Some(
            self.e_pt_draw_ns? + self.clock_err_pt_trigger_ns? + self.e_led_draw_ns?
                - self.clock_err_led_on_ns?,
        )
    }

    pub fn e_e2e_ns(&self) -> Option<i64> {
        Some(self.e_m2m_ns()? + self.e_g2g_ns()?)
    }
}

/// Everything one simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: EventLog,
    pub ledgers: Vec<SessionLedger>,
    /// Same-physical-event clock reading pairs (baseline runs only).
    pub offset_pairs: Vec<(Timestamp, Timestamp)>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Clock(#[from] crate::clocks::ClockError),
    #[error("failed to read recorded trace {path}: {source}")]
    Trace {
        path: String,
        source: std::io::Error,
    },
}

/// Built-in field-emulation presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldPreset {
    FourG,
    FiveGNsa,
}

/// FNV-1a 64-bit hash, used for lane naming.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one random lane: `splitmix64(splitmix64(fnv1a64(lane) ^ master) ^ session)`.
///
/// Every independent random purpose (each chain component, each clock, the
/// motion profile, the rig draws) gets its own lane, so reconfiguring one
/// subsystem never perturbs another's draws.
pub fn lane_seed(master: u64, lane: &str, session: u64) -> u64 {
    splitmix64(splitmix64(fnv1a64(lane.as_bytes()) ^ master) ^ session)
}

fn lane_rng(master: u64, lane: &str, session: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(lane_seed(master, lane, session))
}

struct SessionSim<'a> {
    config: &'a PipelineConfig,
    session_id: u64,
    onset_ns: i64,
    trace: Option<&'a [GyroSample]>,
}

struct SessionResult {
    record: SessionRecord,
    truth: Option<GroundTruth>,
    ledger: SessionLedger,
    offset_pair: Option<(Timestamp, Timestamp)>,
}

impl<'a> SessionSim<'a> {
    fn seed(&self, lane: &str) -> ChaCha8Rng {
        lane_rng(self.config.seed, lane, self.session_id)
    }

    fn sample_period_ns(&self) -> i64 {
        (self.config.rig.sample_period_us * 1_000.0).round() as i64
    }

    /// Ramp slope of this session's motion, drawn once per session.
    fn motion_slope(&self) -> f64 {
        match &self.config.profile.kind {
            ProfileKind::Ramp { slope } => {
                let mut rng = self.seed("profile.slope");
                slope.draw(&mut rng)
            }
            _ => 0.0,
        }
    }

    /// Generate a node's gyro stream for this session and return the
    /// detected onset (true time), if any.
    fn detect_onset(
        &self,
        detector_config: &DetectorConfig,
        motion_onset_ns: i64,
        slope: f64,
        phase_lane: &str,
        noise_lane: &str,
    ) -> Result<Option<i64>, SimError> {
        let period = self.sample_period_ns();
        let mut phase_rng = self.seed(phase_lane);
        let phase = match self.config.rig.phase {
            Phase::Random => phase_rng.gen_range(0..period),
            Phase::FixedMs(ms) => ms_to_ns(ms).rem_euclid(period),
        };
        let mut noise_rng = self.seed(noise_lane);
        let noise = if self.config.rig.noise_std > 0.0 {
            Some(Normal::new(0.0, self.config.rig.noise_std).expect("validated"))
        } else {
            None
        };

        let mut detector = Detector::new(*detector_config)?;
        let horizon_ns = (self.config.rig.detection_horizon_s * 1e9).round() as i64;

        match &self.config.profile.kind {
            ProfileKind::Recorded { .. } => {
                let trace = self.trace.expect("trace loaded before simulation");
                for sample in trace {
                    let t = motion_onset_ns + sample.t.t_ns;
                    let (mut wx, mut wy, mut wz) = (sample.wx, sample.wy, sample.wz);
                    if let Some(n) = &noise {
                        wx += n.sample(&mut noise_rng);
                        wy += n.sample(&mut noise_rng);
                        wz += n.sample(&mut noise_rng);
                    }
                    detector.push(&GyroSample::new(Timestamp::reference(t), wx, wy, wz))?;
                    if let Some(onset) = detector.active_onset() {
                        return Ok(Some(onset.t_ns));
                    }
                }
                Ok(None)
            }
            kind => {
                let start = motion_onset_ns - PREROLL_NS + phase;
                let mut t = start;
                while t <= motion_onset_ns + horizon_ns {
                    let rel_s = (t - motion_onset_ns) as f64 / 1e9;
                    let mut wz = match kind {
                        ProfileKind::Step { amplitude } => {
                            if rel_s >= 0.0 {
                                *amplitude
                            } else {
                                0.0
                            }
                        }
                        ProfileKind::Ramp { .. } => {
                            if rel_s >= 0.0 {
                                slope * rel_s
                            } else {
                                0.0
                            }
                        }
                        ProfileKind::Recorded { .. } => unreachable!(),
                    };
                    let (mut wx, mut wy) = (0.0, 0.0);
                    if let Some(n) = &noise {
                        wx += n.sample(&mut noise_rng);
                        wy += n.sample(&mut noise_rng);
                        wz += n.sample(&mut noise_rng);
                    }
                    detector.push(&GyroSample::new(Timestamp::reference(t), wx, wy, wz))?;
                    if let Some(onset) = detector.active_onset() {
                        return Ok(Some(onset.t_ns));
                    }
                    t += period;
                }
                Ok(None)
            }
        }
    }

    fn chain_delay(
        &self,
        components: &[(&'static str, &DelayModel)],
        lane_prefix: &str,
        start_ns: i64,
    ) -> (i64, Vec<(String, i64)>) {
        let mut arrival = start_ns;
        let mut total = 0i64;
        let mut realized = Vec::with_capacity(components.len());
        for (name, model) in components {
            let mut rng = self.seed(&format!("{lane_prefix}.{name}"));
            let d = model.realize(&mut rng, arrival);
            realized.push((name.to_string(), d));
            total += d;
            arrival += d;
        }
        (total, realized)
    }

    fn clock_reader(&self, spec: &ClockSpec, domain: ClockDomain, lane: &str) -> ClockReader {
        let mut model = spec.model(domain);
        model.seed = lane_seed(self.config.seed, lane, self.session_id);
        ClockReader::new(model).expect("validated")
    }

    fn draw_ns(&self, model: &DelayModel, lane: &str, arrival_ns: i64) -> i64 {
        let mut rng = self.seed(lane);
        model.realize(&mut rng, arrival_ns)
    }

    /// Run one session end to end.
    fn run(&self, baseline: bool) -> Result<SessionResult, SimError> {
        let config = self.config;
        let mut ledger = SessionLedger::empty(self.session_id);
        let mut station_clock =
            self.clock_reader(&config.station_clock, ClockDomain::Station, "clock.station");
        let mut vehicle_clock =
            self.clock_reader(&config.vehicle_clock, ClockDomain::Vehicle, "clock.vehicle");

        let m_station_ns = self.onset_ns;
        let slope = self.motion_slope();

        // Station-side detection of the profile onset.
        let d_station = self.detect_onset(
            &config.detector_station,
            m_station_ns,
            slope,
            "rig.phase.station",
            "rig.noise.station",
        )?;

        // Vehicle motion: in baseline mode both gyros observe the very same
        // motion (no command path); otherwise the command chain delays it.
        let (m_vehicle_ns, d_vehicle) = if baseline {
            let d = self.detect_onset(
                &config.detector_vehicle,
                m_station_ns,
                slope,
                "rig.phase.station",
                "rig.noise.station",
            )?;
            (m_station_ns, d)
        } else {
            let (cmd_delay, components) =
                self.chain_delay(&config.m2m_chain.components(), "m2m", m_station_ns);
            ledger.m2m_components = components;
            let m_vehicle_ns = m_station_ns + cmd_delay;
            let d = self.detect_onset(
                &config.detector_vehicle,
                m_vehicle_ns,
                slope,
                "rig.phase.vehicle",
                "rig.noise.vehicle",
            )?;
            (m_vehicle_ns, d)
        };

        let gy_station = match d_station {
            Some(d) => {
                ledger.detection_lag_station_ns = Some(d - m_station_ns);
                let read = station_clock.read(Timestamp::reference(d))?;
                ledger.clock_err_gy_station_ns = Some(read.t_ns - d);
                Some(read)
            }
            None => None,
        };

        // The LED fires only if the vehicle node detected the motion.
        let mut gy_vehicle = None;
        let mut led_on = None;
        let mut pt_trigger = None;
        let mut truth = None;

        if let Some(d_v) = d_vehicle {
            ledger.detection_lag_vehicle_ns = Some(d_v - m_vehicle_ns);
            let read = vehicle_clock.read(Timestamp::reference(d_v))?;
            ledger.clock_err_gy_vehicle_ns = Some(read.t_ns - d_v);
            gy_vehicle = Some(read);

            let led_lag = self.draw_ns(&config.rig.led_drive, "rig.led_drive", d_v);
            ledger.led_drive_lag_ns = Some(led_lag);
            let led_cmd_ns = d_v + led_lag;
            let led_read = vehicle_clock.read(Timestamp::reference(led_cmd_ns))?;
            ledger.clock_err_led_on_ns = Some(led_read.t_ns - led_cmd_ns);
            led_on = Some(led_read);

            let e_led = self.draw_ns(&config.rig.e_led, "rig.e_led", led_cmd_ns);
            ledger.e_led_draw_ns = Some(e_led);
            let led_phy_ns = led_cmd_ns + e_led;

            // Baseline mode bypasses the camera/network video path: the
            // phototransistor faces the LED directly.
            let pt_phy_ns = if baseline {
                led_phy_ns
            } else {
                let (video_delay, components) =
                    self.chain_delay(&config.g2g_chain.components(), "g2g", led_phy_ns);
                ledger.g2g_components = components;
                led_phy_ns + video_delay
            };

            let e_pt = self.draw_ns(&config.rig.e_pt, "rig.e_pt", pt_phy_ns);
            ledger.e_pt_draw_ns = Some(e_pt);
            let pt_int_ns = pt_phy_ns + e_pt;
            let pt_read = station_clock.read(Timestamp::reference(pt_int_ns))?;
            ledger.clock_err_pt_trigger_ns = Some(pt_read.t_ns - pt_int_ns);
            pt_trigger = Some(pt_read);

            truth = Some(GroundTruth {
                session_id: self.session_id,
                m_station: Timestamp::reference(m_station_ns),
                m_vehicle: Timestamp::reference(m_vehicle_ns),
                led_phy: Timestamp::reference(led_phy_ns),
                pt_phy: Timestamp::reference(pt_phy_ns),
            });
        }

        let mut record = SessionRecord {
            session_id: self.session_id,
            gy_station,
            gy_vehicle,
            led_on,
            pt_trigger,
            pt_trigger_count: if pt_trigger.is_some() { 1 } else { 0 },
            valid: false,
            reason: None,
        };
        record.revalidate(false);
        if !record.valid && (d_station.is_none() || d_vehicle.is_none()) {
            record.reason = Some(InvalidReason::NoDetection);
        }
        // A session is only usable when ground truth exists for it.
        let truth = truth.filter(|_| record.valid);

        // Baseline runs record one same-physical-event reading pair per
        // session for the synchronization offset study.
        let offset_pair = if baseline {
            let t_star = Timestamp::reference(m_station_ns);
            Some((station_clock.read(t_star)?, vehicle_clock.read(t_star)?))
        } else {
            None
        };

        Ok(SessionResult {
            record,
            truth,
            ledger,
            offset_pair,
        })
    }
}

fn run_sessions(config: &PipelineConfig, baseline: bool) -> Result<SimOutput, SimError> {
    config.validate()?;

    let trace = match &config.profile.kind {
        ProfileKind::Recorded { trace } => Some(crate::motion::read_gyro_trace_file(trace)
            .map_err(|e| SimError::Trace {
                path: trace.clone(),
                source: e,
            })?),
        _ => None,
    };

    let gap_ns = (config.profile.inter_session_gap_s * 1e9).round() as i64;
    let slot_ns = gap_ns + SLOT_EXTRA_NS;

    let results: Result<Vec<SessionResult>, SimError> = (0..config.sessions as u64)
        .into_par_iter()
        .map(|k| {
            let sim = SessionSim {
                config,
                session_id: k + 1,
                onset_ns: PREROLL_NS + k as i64 * slot_ns,
                trace: trace.as_deref(),
            };
            sim.run(baseline)
        })
        .collect();
    let results = results?;

    let mut log = EventLog::new(true);
    let mut ledgers = Vec::with_capacity(results.len());
    let mut offset_pairs = Vec::new();
    for result in results {
        if let Some(truth) = result.truth {
            log.insert_truth(truth);
        }
        log.records.push(result.record);
        ledgers.push(result.ledger);
        offset_pairs.extend(result.offset_pair);
    }
    Ok(SimOutput {
        log,
        ledgers,
        offset_pairs,
    })
}

/// Simulate the full measurement pipeline.
pub fn simulate(config: &PipelineConfig) -> Result<SimOutput, SimError> {
    run_sessions(config, false)
}

/// Simulate the baseline rig: both gyros observe the station motion and the
/// phototransistor faces the LED directly, so physical latencies are zero
/// and the measured triples are the measurement-system error distributions.
pub fn run_baseline(config: &PipelineConfig) -> Result<SimOutput, SimError> {
    run_sessions(config, true)
}

/// Shipped field-emulation preset mirroring the corresponding config file in
/// `presets/`.
pub fn emulate_field(preset: FieldPreset) -> PipelineConfig {
    match preset {
        FieldPreset::FiveGNsa => field_config(FieldTargets {
            actuation_median_ms: 275.4,
            actuation_sigma: 0.135,
            network_cmd_median_ms: 10.30,
            network_cmd_sigma: 0.18,
            camera_offset_ms: 100.4,
            network_video_median_ms: 15.0,
            network_video_sigma: 0.62,
        }),
        FieldPreset::FourG => field_config(FieldTargets {
            actuation_median_ms: 279.6,
            actuation_sigma: 0.165,
            network_cmd_median_ms: 12.2,
            network_cmd_sigma: 0.22,
            camera_offset_ms: 112.4,
            network_video_median_ms: 15.5,
            network_video_sigma: 0.55,
        }),
    }
}

struct FieldTargets {
    actuation_median_ms: f64,
    actuation_sigma: f64,
    network_cmd_median_ms: f64,
    network_cmd_sigma: f64,
    camera_offset_ms: f64,
    network_video_median_ms: f64,
    network_video_sigma: f64,
}

fn field_detector() -> DetectorConfig {
    DetectorConfig {
        alpha: 0.1,
        threshold: 0.05,
        completion_window_s: 2.5,
        fusion: crate::motion::FusionMode::L2Norm,
    }
}

fn table_clocks() -> (ClockSpec, ClockSpec) {
    (
        ClockSpec {
            offset_ns: 0,
            drift_ppb: 0,
            jitter_std_ns: 1_550.0,
        },
        ClockSpec {
            offset_ns: 3_060,
            drift_ppb: 0,
            jitter_std_ns: 1_550.0,
        },
    )
}

fn field_config(targets: FieldTargets) -> PipelineConfig {
    let (station_clock, vehicle_clock) = table_clocks();
    PipelineConfig {
        sessions: 1_000,
        seed: 0,
        profile: ProfileSpec {
            kind: ProfileKind::Step { amplitude: 1.0 },
            inter_session_gap_s: 3.0,
        },
        rig: RigConfig {
            e_led: DelayModel::Normal {
                mean_ms: 0.235,
                std_ms: 0.003,
            },
            e_pt: DelayModel::Normal {
                mean_ms: 0.235,
                std_ms: 0.004,
            },
            ..RigConfig::default()
        },
        station_clock,
        vehicle_clock,
        detector_station: field_detector(),
        detector_vehicle: field_detector(),
        m2m_chain: CommandChain {
            input_device: DelayModel::Constant { ms: 5.0 },
            pre_processing: DelayModel::Constant { ms: 10.0 },
            network_cmd: DelayModel::LogNormal {
                median_ms: targets.network_cmd_median_ms,
                sigma: targets.network_cmd_sigma,
            },
            post_processing: DelayModel::Constant { ms: 10.0 },
            actuation: DelayModel::LogNormal {
                median_ms: targets.actuation_median_ms,
                sigma: targets.actuation_sigma,
            },
        },
        g2g_chain: VideoChain {
            camera: DelayModel::Sum {
                parts: vec![
                    DelayModel::Periodic {
                        period_ms: 30.0,
                        phase: Phase::Random,
                    },
                    DelayModel::Constant {
                        ms: targets.camera_offset_ms,
                    },
                ],
            },
            stream_pre: DelayModel::Normal {
                mean_ms: 39.0,
                std_ms: 2.0,
            },
            network_video: DelayModel::LogNormal {
                median_ms: targets.network_video_median_ms,
                sigma: targets.network_video_sigma,
            },
            stream_post: DelayModel::Constant { ms: 10.5 },
            monitor: DelayModel::Periodic {
                period_ms: 16.67,
                phase: Phase::Random,
            },
        },
    }
}

/// Shipped baseline preset: both detectors on the station wheel, thresholds
/// deliberately miscalibrated against a per-session random ramp so the two
/// nodes time the same motion differently, with clock offset/jitter sized
/// for a microsecond-scale synchronization study.
pub fn baseline_config() -> PipelineConfig {
    let (station_clock, vehicle_clock) = table_clocks();
    let detector = |threshold: f64| DetectorConfig {
        alpha: 1.0,
        threshold,
        completion_window_s: 2.5,
        fusion: crate::motion::FusionMode::L2Norm,
    };
    PipelineConfig {
        sessions: 1_000,
        seed: 0,
        profile: ProfileSpec {
            kind: ProfileKind::Ramp {
                slope: ScalarSpec::LogNormal {
                    median: 2.0,
                    sigma: 0.552,
                    min: Some(0.2),
                    max: Some(50.0),
                },
            },
            inter_session_gap_s: 3.0,
        },
        rig: RigConfig {
            e_led: DelayModel::Normal {
                mean_ms: 0.235,
                std_ms: 0.003,
            },
            e_pt: DelayModel::Normal {
                mean_ms: 0.235,
                std_ms: 0.004,
            },
            ..RigConfig::default()
        },
        station_clock,
        vehicle_clock,
        detector_station: detector(0.05),
        detector_vehicle: detector(0.05597),
        m2m_chain: CommandChain {
            input_device: DelayModel::Constant { ms: 0.0 },
            pre_processing: DelayModel::Constant { ms: 0.0 },
            network_cmd: DelayModel::Constant { ms: 0.0 },
            post_processing: DelayModel::Constant { ms: 0.0 },
            actuation: DelayModel::Constant { ms: 0.0 },
        },
        g2g_chain: VideoChain {
            camera: DelayModel::Constant { ms: 0.0 },
            stream_pre: DelayModel::Constant { ms: 0.0 },
            network_video: DelayModel::Constant { ms: 0.0 },
            stream_post: DelayModel::Constant { ms: 0.0 },
            monitor: DelayModel::Constant { ms: 0.0 },
        },
    }
}
