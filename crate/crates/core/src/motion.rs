//! Motion onset/completion detection from tri-axial angular-velocity streams.
//!
//! The detector mirrors the rig's software loop: per-sample axis fusion, a
//! first-order exponential low-pass filter, and threshold crossing with a
//! sustained sub-threshold window for completion. It is a sequential state
//! machine; identical input and config always produce identical events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Timestamp;

/// One tri-axial angular-velocity sample, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroSample {
    pub t: Timestamp,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl GyroSample {
    pub fn new(t: Timestamp, wx: f64, wy: f64, wz: f64) -> Self {
        GyroSample { t, wx, wy, wz }
    }
}

/// How the three axes are reduced to a scalar velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Magnitude of the full angular-velocity vector.
    L2Norm,
    /// Absolute projection onto a fixed axis (normalized at config check).
    AxisProjection([f64; 3]),
}

/// Detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Low-pass filter coefficient, in (0, 1]. 1 disables filtering.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Onset threshold, rad/s. Crossing is strict (`filtered > threshold`).
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Motion is complete once the filtered velocity stays at or below the
    /// threshold for this long, seconds.
    #[serde(default = "default_completion_window_s")]
    pub completion_window_s: f64,
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    0.05
}

fn default_completion_window_s() -> f64 {
    2.5
}

fn default_fusion() -> FusionMode {
    FusionMode::L2Norm
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            alpha: default_alpha(),
            threshold: default_threshold(),
            completion_window_s: default_completion_window_s(),
            fusion: default_fusion(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return Err(MotionError::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(MotionError::InvalidConfig(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if self.completion_window_s.is_nan() || self.completion_window_s <= 0.0 {
            return Err(MotionError::InvalidConfig(format!(
                "completion_window must be > 0, got {}",
                self.completion_window_s
            )));
        }
        if let FusionMode::AxisProjection(axis) = self.fusion {
            let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            if norm < 1e-12 {
                return Err(MotionError::InvalidConfig(
                    "projection axis must have non-zero length".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn completion_window_ns(&self) -> i64 {
        (self.completion_window_s * 1e9).round() as i64
    }
}

/// One detected motion: onset, completion (none while still ongoing at stream
/// end) and the peak filtered velocity seen in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEvent {
    pub onset: Timestamp,
    pub completion: Option<Timestamp>,
    pub peak_velocity: f64,
}

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("gyro stream is empty")]
    EmptyStream,
    #[error("gyro stream timestamps must be strictly increasing (sample {index})")]
    NonMonotonic { index: usize },
    #[error("no motion detected")]
    NoDetection,
}

/// Reduce one sample to a scalar velocity estimate, rad/s (always >= 0).
pub fn fuse(sample: &GyroSample, config: &DetectorConfig) -> Result<f64, MotionError> {
    match config.fusion {
        FusionMode::L2Norm => {
            Ok((sample.wx * sample.wx + sample.wy * sample.wy + sample.wz * sample.wz).sqrt())
        }
        FusionMode::AxisProjection(axis) => {
            let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            if norm < 1e-12 {
                return Err(MotionError::InvalidConfig(
                    "projection axis must have non-zero length".into(),
                ));
            }
            Ok((sample.wx * axis[0] + sample.wy * axis[1] + sample.wz * axis[2]).abs() / norm)
        }
    }
}

/// First-order exponential low-pass: `y[0] = x[0]`,
/// `y[n] = alpha * x[n] + (1 - alpha) * y[n-1]`.
pub fn lowpass(stream: &[f64], alpha: f64) -> Result<Vec<f64>, MotionError> {
    if alpha.is_nan() || alpha <= 0.0 || alpha > 1.0 {
        return Err(MotionError::InvalidConfig(format!(
            "alpha must be in (0, 1], got {alpha}"
        )));
    }
    let mut out = Vec::with_capacity(stream.len());
    let mut state = None;
    for &x in stream {
        let y = match state {
            None => x,
            Some(prev) => alpha * x + (1.0 - alpha) * prev,
        };
        state = Some(y);
        out.push(y);
    }
    Ok(out)
}

/// Incremental onset/completion detector.
///
/// Filter state persists for the lifetime of the instance (it is not reset
/// between events), matching a continuously running acquisition loop. Feed
/// samples in time order with [`Detector::push`]; call [`Detector::finish`]
/// to flush a motion still ongoing at stream end.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    window_ns: i64,
    filter_state: Option<f64>,
    last_t_ns: Option<i64>,
    active: Option<ActiveMotion>,
    samples_seen: usize,
}

#[derive(Debug, Clone, Copy)]
struct ActiveMotion {
    onset: Timestamp,
    peak: f64,
    // First sample of the current sub-threshold stretch, if any.
    below_since: Option<Timestamp>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, MotionError> {
        config.validate()?;
        Ok(Detector {
            window_ns: config.completion_window_ns(),
            config,
            filter_state: None,
            last_t_ns: None,
            active: None,
            samples_seen: 0,
        })
    }

    /// Onset of the motion currently in progress, if any.
    pub fn active_onset(&self) -> Option<Timestamp> {
        self.active.map(|a| a.onset)
    }

    /// Process one sample; returns a completed [`MotionEvent`] when this
    /// sample confirms a completion window.
    pub fn push(&mut self, sample: &GyroSample) -> Result<Option<MotionEvent>, MotionError> {
        let index = self.samples_seen;
        if let Some(last) = self.last_t_ns {
            if sample.t.t_ns <= last {
                return Err(MotionError::NonMonotonic { index });
            }
        }
        self.last_t_ns = Some(sample.t.t_ns);
        self.samples_seen += 1;

        let fused = fuse(sample, &self.config)?;
        let filtered = match self.filter_state {
            None => fused,
            Some(prev) => self.config.alpha * fused + (1.0 - self.config.alpha) * prev,
        };
        self.filter_state = Some(filtered);

        let mut finished = None;

        // A window that ended strictly before this sample is confirmed
        // regardless of the current value: every sample inside it stayed
        // at or below the threshold.
        if let Some(active) = self.active {
            if let Some(below_since) = active.below_since {
                if sample.t.t_ns > below_since.t_ns + self.window_ns {
                    finished = Some(MotionEvent {
                        onset: active.onset,
                        completion: Some(below_since),
                        peak_velocity: active.peak,
                    });
                    self.active = None;
                }
            }
        }

        match self.active {
            None => {
                if filtered > self.config.threshold {
                    self.active = Some(ActiveMotion {
                        onset: sample.t,
                        peak: filtered,
                        below_since: None,
                    });
                }
            }
            Some(ref mut active) => {
                if filtered > active.peak {
                    active.peak = filtered;
                }
                if filtered > self.config.threshold {
                    active.below_since = None;
                } else {
                    let below_since = *active.below_since.get_or_insert(sample.t);
                    // Sample landing exactly on the window edge closes it.
                    if sample.t.t_ns >= below_since.t_ns + self.window_ns {
                        finished = Some(MotionEvent {
                            onset: active.onset,
                            completion: Some(below_since),
                            peak_velocity: active.peak,
                        });
                        self.active = None;
                    }
                }
            }
        }

        Ok(finished)
    }

    /// Flush the in-progress motion, if any, as an event without completion.
    pub fn finish(&mut self) -> Option<MotionEvent> {
        self.active.take().map(|active| MotionEvent {
            onset: active.onset,
            completion: None,
            peak_velocity: active.peak,
        })
    }
}

/// Detect all motion events in a stream. See [`Detector`] for semantics.
pub fn detect(
    stream: &[GyroSample],
    config: &DetectorConfig,
) -> Result<Vec<MotionEvent>, MotionError> {
    let mut detector = Detector::new(*config)?;
    let mut events = Vec::new();
    for sample in stream {
        if let Some(event) = detector.push(sample)? {
            events.push(event);
        }
    }
    events.extend(detector.finish());
    Ok(events)
}

/// Parse a gyro trace (`t_ns,wx,wy,wz` CSV; `#` lines and an optional header
/// row are skipped). Timestamps land in the reference domain.
pub fn read_gyro_trace<R: std::io::BufRead>(reader: R) -> std::io::Result<Vec<GyroSample>> {
    use crate::events::ClockDomain;
    let bad = |line_no: usize, msg: String| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("line {line_no}: {msg}"),
        )
    };
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == "t_ns,wx,wy,wz" {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let t_ns: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| bad(line_no, format!("bad t_ns: {e}")))?;
        let mut w = [0.0f64; 3];
        for (i, field) in fields[1..].iter().enumerate() {
            w[i] = field
                .trim()
                .parse()
                .map_err(|e| bad(line_no, format!("bad angular velocity: {e}")))?;
        }
        samples.push(GyroSample::new(
            Timestamp::new(t_ns, ClockDomain::Reference),
            w[0],
            w[1],
            w[2],
        ));
    }
    Ok(samples)
}

pub fn read_gyro_trace_file(path: impl AsRef<std::path::Path>) -> std::io::Result<Vec<GyroSample>> {
    let file = std::fs::File::open(path)?;
    read_gyro_trace(std::io::BufReader::new(file))
}

/// Lag of the first detected onset behind the true motion onset, nanoseconds.
pub fn detection_lag(
    stream: &[GyroSample],
    config: &DetectorConfig,
    true_onset: Timestamp,
) -> Result<i64, MotionError> {
    let events = detect(stream, config)?;
    let first = events.first().ok_or(MotionError::NoDetection)?;
    Ok(first.onset.t_ns - true_onset.t_ns)
}

pub mod oracle {
    //! Brute-force reference detector used by the test suites.
    //!
    //! Replays the filter recurrence over the whole stream, then finds
    //! events with an explicit nested scan of every completion-window
    //! candidate. Kept deliberately independent of [`super::Detector`]'s
    //! incremental state machine so the two can be checked against each
    //! other.

    use super::{fuse, lowpass, DetectorConfig, GyroSample, MotionEvent};

    pub fn detect_oracle(stream: &[GyroSample], config: &DetectorConfig) -> Vec<MotionEvent> {
        let fused: Vec<f64> = stream.iter().map(|s| fuse(s, config).unwrap()).collect();
        let filtered = lowpass(&fused, config.alpha).unwrap();
        let window = config.completion_window_ns();
        let last_t = match stream.last() {
            Some(s) => s.t.t_ns,
            None => return Vec::new(),
        };

        let mut events = Vec::new();
        let mut i = 0;
        while i < stream.len() {
            if filtered[i] > config.threshold {
                let onset = stream[i].t;
                let mut completion = None;
                let mut j = i + 1;
                while j < stream.len() {
                    if filtered[j] <= config.threshold {
                        // Candidate: every sample in [t_j, t_j + window]
                        // must stay at or below threshold, and the stream
                        // must extend past the window to confirm it.
                        let start = stream[j].t.t_ns;
                        let mut clean = true;
                        let mut k = j;
                        while k < stream.len() && stream[k].t.t_ns <= start + window {
                            if filtered[k] > config.threshold {
                                clean = false;
                                break;
                            }
                            k += 1;
                        }
                        if clean && last_t >= start + window {
                            completion = Some(stream[j].t);
                            // The next event can start no earlier than the
                            // first sample past the confirmed window.
                            i = k;
                            break;
                        }
                        if !clean {
                            j = k;
                            continue;
                        }
                    }
                    j += 1;
                }
                let end = completion.map(|c| c.t_ns).unwrap_or(last_t);
                let peak = stream
                    .iter()
                    .zip(&filtered)
                    .filter(|(s, _)| s.t.t_ns >= onset.t_ns && s.t.t_ns <= end)
                    .map(|(_, &y)| y)
                    .fold(f64::NEG_INFINITY, f64::max);
                events.push(MotionEvent {
                    onset,
                    completion,
                    peak_velocity: peak,
                });
                if completion.is_none() {
                    break;
                }
            } else {
                i += 1;
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::detect_oracle;
    use super::*;
    use crate::events::{ClockDomain, Timestamp};
    use approx::assert_relative_eq;

    fn sample(t_ns: i64, w: f64) -> GyroSample {
        GyroSample::new(Timestamp::new(t_ns, ClockDomain::Reference), 0.0, 0.0, w)
    }

    #[test]
    fn fuse_l2_norm() {
        let config = DetectorConfig::default();
        let s = GyroSample::new(Timestamp::reference(0), 3.0, 4.0, 0.0);
        assert_relative_eq!(fuse(&s, &config).unwrap(), 5.0);
        let zero = GyroSample::new(Timestamp::reference(0), 0.0, 0.0, 0.0);
        assert_eq!(fuse(&zero, &config).unwrap(), 0.0);
    }

    #[test]
    fn fuse_axis_projection_picks_component() {
        let config = DetectorConfig {
            fusion: FusionMode::AxisProjection([0.0, 0.0, 1.0]),
            ..DetectorConfig::default()
        };
        let s = GyroSample::new(Timestamp::reference(0), 1.0, 2.0, 2.0);
        assert_relative_eq!(fuse(&s, &config).unwrap(), 2.0);
    }

    #[test]
    fn fuse_rejects_zero_axis() {
        let config = DetectorConfig {
            fusion: FusionMode::AxisProjection([0.0, 0.0, 0.0]),
            ..DetectorConfig::default()
        };
        assert!(config.validate().is_err());
        let s = GyroSample::new(Timestamp::reference(0), 1.0, 2.0, 2.0);
        assert!(fuse(&s, &config).is_err());
    }

    #[test]
    fn lowpass_identity_at_alpha_one() {
        let x = vec![0.3, -1.2, 4.5, 0.0];
        assert_eq!(lowpass(&x, 1.0).unwrap(), x);
    }

    #[test]
    fn lowpass_unit_dc_gain() {
        let x = vec![2.5; 40];
        let y = lowpass(&x, 0.2).unwrap();
        for v in y {
            assert_relative_eq!(v, 2.5);
        }
    }

    #[test]
    fn lowpass_step_response_hand_computed() {
        let x = vec![0.0, 1.0, 1.0, 1.0];
        let y = lowpass(&x, 0.5).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 0.75, 0.875]);
    }

    #[test]
    fn lowpass_rejects_bad_alpha() {
        assert!(lowpass(&[1.0], 0.0).is_err());
        assert!(lowpass(&[1.0], 1.5).is_err());
    }

    #[test]
    fn all_zero_stream_detects_nothing() {
        let stream: Vec<GyroSample> = (0..1000).map(|i| sample(i * 250_000, 0.0)).collect();
        let events = detect(&stream, &DetectorConfig::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn unfiltered_step_onset_at_first_sample_past_step() {
        // Step to 2x threshold at t = 100 ms, alpha = 1, 250 us sampling.
        let config = DetectorConfig {
            alpha: 1.0,
            ..DetectorConfig::default()
        };
        let step_ns = 100_000_000;
        let stream: Vec<GyroSample> = (0..1200)
            .map(|i| {
                let t = i * 250_000;
                sample(t, if t >= step_ns { 2.0 * config.threshold } else { 0.0 })
            })
            .collect();
        let events = detect(&stream, &config).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].onset.t_ns, step_ns);
    }

    #[test]
    fn filtered_step_onset_matches_recurrence_replay() {
        // alpha = 0.1, threshold = 0.05, step to 0.1 rad/s: the filtered
        // value reaches 0.1 * (1 - 0.9^(n+1)) n samples after the step and
        // first exceeds 0.05 at n = 6.
        let config = DetectorConfig {
            alpha: 0.1,
            threshold: 0.05,
            ..DetectorConfig::default()
        };
        let step_ns = 10_000_000;
        let period = 250_000;
        let stream: Vec<GyroSample> = (0..2000)
            .map(|i| {
                let t = i * period;
                sample(t, if t >= step_ns { 0.1 } else { 0.0 })
            })
            .collect();

        let oracle = detect_oracle(&stream, &config);
        let events = detect(&stream, &config).unwrap();
        assert_eq!(events, oracle);
        assert_eq!(events[0].onset.t_ns, step_ns + 6 * period);

        let lag = detection_lag(&stream, &config, Timestamp::reference(step_ns)).unwrap();
        assert_eq!(lag, 6 * period); // 1.5 ms
    }

    #[test]
    fn short_dip_does_not_split_a_maneuver() {
        // Velocity dips below threshold for 1.0 s mid-maneuver, well under
        // the 2.5 s completion window.
        let config = DetectorConfig {
            alpha: 1.0,
            ..DetectorConfig::default()
        };
        let period = 1_000_000; // 1 ms
        let hi = 0.2;
        let stream: Vec<GyroSample> = (0..8000)
            .map(|i| {
                let t = i * period;
                let w = if t < 1_000_000_000 {
                    0.0
                } else if t < 2_000_000_000 {
                    hi
                } else if t < 3_000_000_000 {
                    0.0 // 1 s dip
                } else if t < 4_000_000_000 {
                    hi
                } else {
                    0.0
                };
                sample(t, w)
            })
            .collect();
        let events = detect(&stream, &config).unwrap();
        let oracle = detect_oracle(&stream, &config);
        assert_eq!(events, oracle);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].onset.t_ns, 1_000_000_000);
        assert_eq!(events[0].completion.unwrap().t_ns, 4_000_000_000);
    }

    #[test]
    fn motion_without_confirmed_window_stays_open() {
        let config = DetectorConfig {
            alpha: 1.0,
            ..DetectorConfig::default()
        };
        // Motion ends 1 s before stream end: window never confirmed.
        let period = 1_000_000;
        let stream: Vec<GyroSample> = (0..2000)
            .map(|i| {
                let t = i * period;
                sample(t, if t < 1_000_000_000 { 0.2 } else { 0.0 })
            })
            .collect();
        let events = detect(&stream, &config).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].completion, None);
        assert_eq!(detect_oracle(&stream, &config), events);
    }

    #[test]
    fn identical_inputs_give_identical_lags() {
        let config = DetectorConfig::default();
        let stream: Vec<GyroSample> = (0..4000)
            .map(|i| {
                let t = i * 250_000;
                sample(t, if t >= 50_000_000 { 1.0 } else { 0.0 })
            })
            .collect();
        let a = detection_lag(&stream, &config, Timestamp::reference(50_000_000)).unwrap();
        let b = detection_lag(&stream, &config, Timestamp::reference(50_000_000)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_detection_is_an_error() {
        let stream = vec![sample(0, 0.0), sample(250_000, 0.0)];
        let err = detection_lag(&stream, &DetectorConfig::default(), Timestamp::reference(0));
        assert!(matches!(err, Err(MotionError::NoDetection)));
    }

    #[test]
    fn non_monotonic_stream_is_rejected() {
        let stream = vec![sample(10, 0.0), sample(10, 0.0)];
        assert!(matches!(
            detect(&stream, &DetectorConfig::default()),
            Err(MotionError::NonMonotonic { index: 1 })
        ));
    }

    #[test]
    fn gyro_trace_parses_header_and_comments() {
        let text = "# recorded steering maneuver\nt_ns,wx,wy,wz\n0,0.0,0.0,0.0\n250000,0.1,-0.2,0.3\n";
        let samples = read_gyro_trace(std::io::Cursor::new(text)).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].t.t_ns, 250_000);
        assert_eq!(samples[1].wy, -0.2);

        let err = read_gyro_trace(std::io::Cursor::new("0,1.0,2.0\n")).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
