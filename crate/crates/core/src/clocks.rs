//! Imperfect-clock modeling, cross-domain alignment and synchronization
//! offset estimation.
//!
//! Each measurement node has its own clock. In simulation a [`ClockModel`]
//! maps true (reference) time to that node's readings through a fixed offset,
//! a linear drift and per-read Gaussian jitter. Alignment inverts the
//! deterministic part; jitter is irreducible. Real logs carry no models, so
//! cross-domain arithmetic has to be explicitly performed under an
//! assume-synchronized policy that takes disciplined clock readings at face
//! value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{ClockDomain, Timestamp};

const NS_PER_S: i128 = 1_000_000_000;

/// Clock behavior of one measurement node relative to reference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// Domain this clock produces readings in.
    pub domain: ClockDomain,
    /// Fixed offset at epoch, nanoseconds (node minus reference).
    pub offset_ns: i64,
    /// Linear drift, parts per billion of elapsed reference time.
    pub drift_ppb: i64,
    /// Standard deviation of per-read Gaussian jitter, nanoseconds.
    pub jitter_std_ns: f64,
    /// Seed for the jitter stream.
    pub seed: u64,
}

impl ClockModel {
    /// An ideal clock for `domain`: zero offset, drift and jitter.
    pub fn ideal(domain: ClockDomain) -> Self {
        ClockModel {
            domain,
            offset_ns: 0,
            drift_ppb: 0,
            jitter_std_ns: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        if self.jitter_std_ns < 0.0 {
            return Err(ClockError::InvalidModel(format!(
                "jitter_std_ns must be >= 0, got {}",
                self.jitter_std_ns
            )));
        }
        if self.drift_ppb.abs() >= 1_000_000_000 {
            return Err(ClockError::InvalidModel(format!(
                "drift_ppb must satisfy |drift| < 1e9, got {}",
                self.drift_ppb
            )));
        }
        Ok(())
    }

    /// Drift accumulated after `t_ns` of reference time, rounded half to even.
    pub fn drift_term_ns(&self, t_ns: i64) -> i64 {
        div_round_half_even(self.drift_ppb as i128 * t_ns as i128, NS_PER_S) as i64
    }

    /// Deterministic part of a reading: true time plus offset plus drift.
    fn nominal_reading_ns(&self, true_ns: i64) -> i64 {
        true_ns + self.offset_ns + self.drift_term_ns(true_ns)
    }

    /// Invert offset and drift of a reading back to reference time.
    ///
    /// Exact inverse of the jitter-free reading for non-negative drift; a
    /// slow clock (negative drift) maps two adjacent reference nanoseconds to
    /// one reading now and then, in which case the preimage is recovered to
    /// within 1 ns.
    pub fn align_to_reference(&self, t: Timestamp) -> Result<Timestamp, ClockError> {
        self.validate()?;
        if t.domain != self.domain {
            return Err(ClockError::DomainModelMismatch {
                timestamp: t.domain,
                model: self.domain,
            });
        }
        let elapsed = (t.t_ns - self.offset_ns) as i128;
        let drift = div_round_half_even(
            self.drift_ppb as i128 * elapsed,
            NS_PER_S + self.drift_ppb as i128,
        );
        Ok(Timestamp::new(
            (elapsed - drift) as i64,
            ClockDomain::Reference,
        ))
    }
}

/// Integer division rounding half to even, exact in i128.
fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    let twice = 2 * r;
    if twice > den || (twice == den && q % 2 != 0) {
        q + 1
    } else {
        q
    }
}

/// A clock instance that can be read: owns the jitter draw stream.
///
/// Reads are deterministic given the model seed and draw order. One reader
/// per simulation worker; the type is cheap to construct.
#[derive(Debug, Clone)]
pub struct ClockReader {
    model: ClockModel,
    rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
}

impl ClockReader {
    pub fn new(model: ClockModel) -> Result<Self, ClockError> {
        model.validate()?;
        let jitter = if model.jitter_std_ns > 0.0 {
            Some(Normal::new(0.0, model.jitter_std_ns).expect("validated std"))
        } else {
            None
        };
        Ok(ClockReader {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            jitter,
        })
    }

    /// Reseed the jitter stream (used to give each simulated session its own
    /// deterministic lane).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn model(&self) -> &ClockModel {
        &self.model
    }

    /// Read this clock at a true (reference-domain) instant.
    pub fn read(&mut self, true_time: Timestamp) -> Result<Timestamp, ClockError> {
        if true_time.domain != ClockDomain::Reference {
            return Err(ClockError::NotReferenceTime(true_time.domain));
        }
        let jitter_ns = match &self.jitter {
            Some(normal) => normal.sample(&mut self.rng).round() as i64,
            None => 0,
        };
        Ok(Timestamp::new(
            self.model.nominal_reading_ns(true_time.t_ns) + jitter_ns,
            self.model.domain,
        ))
    }
}

/// Policy for interpreting timestamps from different clock domains on a
/// common timescale.
#[derive(Debug, Clone, PartialEq)]
pub enum Alignment {
    /// Take readings at face value (relabel only). This is the only option
    /// for real logs, where the clocks are externally disciplined and the
    /// residual offset is part of the measurement error.
    AssumeSynchronized,
    /// Invert each domain's known model (simulation only).
    Models {
        station: ClockModel,
        vehicle: ClockModel,
    },
}

impl Alignment {
    /// Map a timestamp onto the reference timescale under this policy.
    pub fn to_reference(&self, t: Timestamp) -> Result<Timestamp, ClockError> {
        match self {
            Alignment::AssumeSynchronized => Ok(Timestamp::new(t.t_ns, ClockDomain::Reference)),
            Alignment::Models { station, vehicle } => match t.domain {
                ClockDomain::Reference => Ok(t),
                ClockDomain::Station => station.align_to_reference(t),
                ClockDomain::Vehicle => vehicle.align_to_reference(t),
            },
        }
    }
}

/// Synchronization offset statistics over paired same-event observations,
/// microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub min_us: f64,
    pub max_us: f64,
    pub mean_us: f64,
    pub std_us: f64,
    pub n: usize,
}

/// Estimate the residual synchronization offset from pairs of timestamps
/// taken on each node for the same physical event.
///
/// The per-pair offset is `|t_station - t_vehicle|` with both readings
/// interpreted on a common nominal timescale. Reported in microseconds; the
/// standard deviation is the sample standard deviation (zero for one pair).
pub fn estimate_offset(pairs: &[(Timestamp, Timestamp)]) -> Result<OffsetStats, ClockError> {
    if pairs.is_empty() {
        return Err(ClockError::EmptyInput);
    }
    let offsets_us: Vec<f64> = pairs
        .iter()
        .map(|(s, v)| (s.t_ns - v.t_ns).abs() as f64 / 1_000.0)
        .collect();
    let n = offsets_us.len();
    let mean = offsets_us.iter().sum::<f64>() / n as f64;
    let min = offsets_us.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = offsets_us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let std = if n > 1 {
        let var = offsets_us.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Ok(OffsetStats {
        min_us: min,
        max_us: max,
        mean_us: mean,
        std_us: std,
        n,
    })
}

#[derive(Debug, Error)]
pub enum ClockError {
    #[error("invalid clock model: {0}")]
    InvalidModel(String),
    #[error("clock reads take reference-domain time, got {0}")]
    NotReferenceTime(ClockDomain),
    #[error("timestamp domain {timestamp} does not match model domain {model}")]
    DomainModelMismatch {
        timestamp: ClockDomain,
        model: ClockDomain,
    },
    #[error("no paired events to estimate an offset from")]
    EmptyInput,
}
