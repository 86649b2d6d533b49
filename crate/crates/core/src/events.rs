//! Domain types for timestamps, anchor events and measurement sessions, plus
//! event-log ingestion and validation.
//!
//! One measurement session (one steering maneuver) produces four anchor
//! events: the motion onset detected at the remote station (`GY_STATION`),
//! the motion onset detected on the vehicle (`GY_VEHICLE`), the LED drive
//! command issued after the vehicle-side detection (`LED_ON`) and the
//! phototransistor interrupt on the operator display (`PT_TRIGGER`).
//! Simulated logs additionally carry the true physical event times
//! (`M_STATION`, `M_VEHICLE`, `LED_PHY`, `PT_PHY`) in the reference domain.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which clock produced a timestamp.
///
/// `Reference` is true time; it exists only in simulation output and is never
/// present in logs captured on a physical rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockDomain {
    Station,
    Vehicle,
    Reference,
}

impl ClockDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockDomain::Station => "Station",
            ClockDomain::Vehicle => "Vehicle",
            ClockDomain::Reference => "Reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "station" => Some(ClockDomain::Station),
            "vehicle" => Some(ClockDomain::Vehicle),
            "reference" => Some(ClockDomain::Reference),
            _ => None,
        }
    }
}

impl fmt::Display for ClockDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Integer-nanosecond event time tagged with the clock that produced it.
///
/// Arithmetic across domains is deliberately not implemented; subtract
/// timestamps with [`Timestamp::duration_since`] (same domain only) or align
/// them first via [`crate::clocks::Alignment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub t_ns: i64,
    pub domain: ClockDomain,
}

impl Timestamp {
    pub fn new(t_ns: i64, domain: ClockDomain) -> Self {
        Timestamp { t_ns, domain }
    }

    pub fn station(t_ns: i64) -> Self {
        Timestamp::new(t_ns, ClockDomain::Station)
    }

    pub fn vehicle(t_ns: i64) -> Self {
        Timestamp::new(t_ns, ClockDomain::Vehicle)
    }

    pub fn reference(t_ns: i64) -> Self {
        Timestamp::new(t_ns, ClockDomain::Reference)
    }

    /// Signed duration `self - earlier` in nanoseconds. Both timestamps must
    /// share a clock domain.
    pub fn duration_since(self, earlier: Timestamp) -> Result<i64, DomainMismatch> {
        if self.domain != earlier.domain {
            return Err(DomainMismatch {
                lhs: self.domain,
                rhs: earlier.domain,
            });
        }
        Ok(self.t_ns - earlier.t_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot mix timestamps from clock domains {lhs} and {rhs} without alignment")]
pub struct DomainMismatch {
    pub lhs: ClockDomain,
    pub rhs: ClockDomain,
}

/// Event kinds that appear in event logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    GyStation,
    GyVehicle,
    LedOn,
    PtTrigger,
    MStation,
    MVehicle,
    LedPhy,
    PtPhy,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::GyStation => "GY_STATION",
            EventKind::GyVehicle => "GY_VEHICLE",
            EventKind::LedOn => "LED_ON",
            EventKind::PtTrigger => "PT_TRIGGER",
            EventKind::MStation => "M_STATION",
            EventKind::MVehicle => "M_VEHICLE",
            EventKind::LedPhy => "LED_PHY",
            EventKind::PtPhy => "PT_PHY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GY_STATION" => Some(EventKind::GyStation),
            "GY_VEHICLE" => Some(EventKind::GyVehicle),
            "LED_ON" => Some(EventKind::LedOn),
            "PT_TRIGGER" => Some(EventKind::PtTrigger),
            "M_STATION" => Some(EventKind::MStation),
            "M_VEHICLE" => Some(EventKind::MVehicle),
            "LED_PHY" => Some(EventKind::LedPhy),
            "PT_PHY" => Some(EventKind::PtPhy),
            _ => None,
        }
    }

    /// Ground-truth kinds are only allowed in logs flagged `#simulated=true`.
    pub fn is_ground_truth(self) -> bool {
        matches!(
            self,
            EventKind::MStation | EventKind::MVehicle | EventKind::LedPhy | EventKind::PtPhy
        )
    }

    /// Clock domain a valid record carries this event in.
    pub fn expected_domain(self) -> ClockDomain {
        match self {
            EventKind::GyStation | EventKind::PtTrigger => ClockDomain::Station,
            EventKind::GyVehicle | EventKind::LedOn => ClockDomain::Vehicle,
            _ => ClockDomain::Reference,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a session was flagged invalid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    /// One or more of the four anchor events is missing.
    MissingEvent,
    /// The phototransistor fired more than once during a single LED
    /// activation; the session cannot be paired reliably.
    MultipleDetections,
    /// The detector never fired (simulation: threshold above the motion
    /// amplitude).
    NoDetection,
    /// An anchor event carries a clock domain it cannot have been produced in.
    DomainMismatch,
    /// LED drive command timestamped before the vehicle-side motion onset.
    LedBeforeOnset,
    /// Phototransistor trigger timestamped before the LED drive command.
    PtBeforeLed,
    /// The session's anchor interval overlaps a neighboring session's.
    SessionOverlap,
}

impl InvalidReason {
    pub fn code(self) -> &'static str {
        match self {
            InvalidReason::MissingEvent => "missing_event",
            InvalidReason::MultipleDetections => "multiple_detections",
            InvalidReason::NoDetection => "no_detection",
            InvalidReason::DomainMismatch => "domain_mismatch",
            InvalidReason::LedBeforeOnset => "led_before_onset",
            InvalidReason::PtBeforeLed => "pt_before_led",
            InvalidReason::SessionOverlap => "session_overlap",
        }
    }
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One measurement cycle's anchor events plus validity flags.
///
/// Invalid sessions are retained (flagged, with a reason) rather than dropped
/// so that analysis can report exclusion counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: u64,
    pub gy_station: Option<Timestamp>,
    pub gy_vehicle: Option<Timestamp>,
    pub led_on: Option<Timestamp>,
    pub pt_trigger: Option<Timestamp>,
    /// Number of phototransistor interrupts observed for this session's LED
    /// activation. A valid session has exactly one.
    pub pt_trigger_count: u32,
    pub valid: bool,
    pub reason: Option<InvalidReason>,
}

impl SessionRecord {
    /// Build a record from a complete set of anchors and validate it.
    pub fn complete(
        session_id: u64,
        gy_station: Timestamp,
        gy_vehicle: Timestamp,
        led_on: Timestamp,
        pt_trigger: Timestamp,
    ) -> Self {
        let mut record = SessionRecord {
            session_id,
            gy_station: Some(gy_station),
            gy_vehicle: Some(gy_vehicle),
            led_on: Some(led_on),
            pt_trigger: Some(pt_trigger),
            pt_trigger_count: 1,
            valid: false,
            reason: None,
        };
        record.revalidate(false);
        record
    }

    /// All four anchors, if present.
    pub fn anchors(&self) -> Option<Anchors> {
        Some(Anchors {
            gy_station: self.gy_station?,
            gy_vehicle: self.gy_vehicle?,
            led_on: self.led_on?,
            pt_trigger: self.pt_trigger?,
        })
    }

    /// Re-run invariant checks and update `valid`/`reason` in place.
    /// `aligned` marks whether cross-domain ordering may be evaluated.
    pub fn revalidate(&mut self, aligned: bool) {
        let report = validate_session(self, aligned);
        self.valid = report.valid;
        self.reason = report.violations.first().copied();
    }
}

/// The four anchor timestamps of a complete session.
#[derive(Debug, Clone, Copy)]
pub struct Anchors {
    pub gy_station: Timestamp,
    pub gy_vehicle: Timestamp,
    pub led_on: Timestamp,
    pub pt_trigger: Timestamp,
}

/// Outcome of [`validate_session`]: pass/fail plus every violated invariant,
/// in check order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: Vec<InvalidReason>,
}

/// Check a record against the session invariants.
///
/// The cross-domain ordering `led_on <= pt_trigger` is evaluated only when
/// `aligned` is set or when the two timestamps already share a domain; the
/// vehicle-side ordering `gy_vehicle <= led_on` needs no alignment.
pub fn validate_session(record: &SessionRecord, aligned: bool) -> ValidityReport {
    let mut violations = Vec::new();

    let anchors = match record.anchors() {
        Some(a) => a,
        None => {
            violations.push(InvalidReason::MissingEvent);
            if record.pt_trigger.is_some() && record.pt_trigger_count != 1 {
                violations.push(InvalidReason::MultipleDetections);
            }
            return ValidityReport {
                valid: false,
                violations,
            };
        }
    };

    if record.pt_trigger_count != 1 {
        violations.push(InvalidReason::MultipleDetections);
    }

    let domains_ok = anchors.gy_station.domain == ClockDomain::Station
        && anchors.pt_trigger.domain == ClockDomain::Station
        && anchors.gy_vehicle.domain == ClockDomain::Vehicle
        && anchors.led_on.domain == ClockDomain::Vehicle;
    if !domains_ok {
        violations.push(InvalidReason::DomainMismatch);
    }

    if anchors.gy_vehicle.domain == anchors.led_on.domain
        && anchors.led_on.t_ns < anchors.gy_vehicle.t_ns
    {
        violations.push(InvalidReason::LedBeforeOnset);
    }

    if (aligned || anchors.led_on.domain == anchors.pt_trigger.domain)
        && anchors.pt_trigger.t_ns < anchors.led_on.t_ns
    {
        violations.push(InvalidReason::PtBeforeLed);
    }

    ValidityReport {
        valid: violations.is_empty(),
        violations,
    }
}

/// Vehicle-side lag between detected motion onset and the LED drive command:
/// `led_on - gy_vehicle`, nanoseconds. Valid sessions only.
pub fn derive_led_delay(record: &SessionRecord) -> Result<i64, EventError> {
    if !record.valid {
        return Err(EventError::InvalidSession {
            session_id: record.session_id,
            reason: record.reason,
        });
    }
    let anchors = record.anchors().ok_or(EventError::InvalidSession {
        session_id: record.session_id,
        reason: record.reason,
    })?;
    Ok(anchors.led_on.duration_since(anchors.gy_vehicle)?)
}

/// True physical event times of one simulated session, reference domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub session_id: u64,
    pub m_station: Timestamp,
    pub m_vehicle: Timestamp,
    pub led_phy: Timestamp,
    pub pt_phy: Timestamp,
}

impl GroundTruth {
    /// Realized per-event measurement errors for a session, nanoseconds.
    ///
    /// Each term compares a measured anchor against its true event time in a
    /// common nominal timescale (the measured clock reading is taken at face
    /// value, as cross-domain latency computation does), so it includes
    /// detection lag, clock offset/drift and read jitter:
    ///
    /// - `e_gys = gy_station - m_station`
    /// - `e_gyv = gy_vehicle - m_vehicle`
    /// - `e_led = led_phy - led_on` (the drive command precedes illumination)
    /// - `e_pt  = pt_trigger - pt_phy`
    pub fn error_terms(&self, record: &SessionRecord) -> Result<ErrorTerms, EventError> {
        let anchors = record.anchors().ok_or(EventError::InvalidSession {
            session_id: record.session_id,
            reason: record.reason,
        })?;
        Ok(ErrorTerms {
            e_gys_ns: anchors.gy_station.t_ns - self.m_station.t_ns,
            e_gyv_ns: anchors.gy_vehicle.t_ns - self.m_vehicle.t_ns,
            e_led_ns: self.led_phy.t_ns - anchors.led_on.t_ns,
            e_pt_ns: anchors.pt_trigger.t_ns - self.pt_phy.t_ns,
        })
    }
}

/// Per-event measurement errors realized in one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub e_gys_ns: i64,
    pub e_gyv_ns: i64,
    pub e_led_ns: i64,
    pub e_pt_ns: i64,
}

/// On-disk event log representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    /// `session_id,event_kind,clock_domain,t_ns` lines; `#key=value` headers.
    Csv,
    /// One JSON object per line with the same field names.
    JsonLines,
}

/// A full ingested (or simulated) event log: one record per session, plus
/// ground truth for sessions that have it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    pub simulated: bool,
    pub records: Vec<SessionRecord>,
    truths: BTreeMap<u64, GroundTruth>,
}

impl EventLog {
    pub fn new(simulated: bool) -> Self {
        EventLog {
            simulated,
            records: Vec::new(),
            truths: BTreeMap::new(),
        }
    }

    pub fn insert_truth(&mut self, truth: GroundTruth) {
        self.truths.insert(truth.session_id, truth);
    }

    pub fn truth(&self, session_id: u64) -> Option<&GroundTruth> {
        self.truths.get(&session_id)
    }

    pub fn truths(&self) -> impl Iterator<Item = &GroundTruth> {
        self.truths.values()
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.truths.is_empty()
    }

    pub fn valid_records(&self) -> impl Iterator<Item = &SessionRecord> {
        self.records.iter().filter(|r| r.valid)
    }

    pub fn excluded_count(&self) -> usize {
        self.records.iter().filter(|r| !r.valid).count()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate {kind} event for session {session_id}")]
    DuplicateEvent {
        line: usize,
        session_id: u64,
        kind: EventKind,
    },
    #[error("line {line}: ground-truth event {kind} requires a '#simulated=true' header")]
    GroundTruthNotAllowed { line: usize, kind: EventKind },
    #[error("session {session_id}: ground truth incomplete (need all of M_STATION, M_VEHICLE, LED_PHY, PT_PHY)")]
    IncompleteGroundTruth { session_id: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("session {session_id} is not valid (reason: {reason:?})")]
    InvalidSession {
        session_id: u64,
        reason: Option<InvalidReason>,
    },
    #[error(transparent)]
    DomainMismatch(#[from] DomainMismatch),
}

#[derive(Debug, Clone, Copy)]
struct RawEvent {
    session_id: u64,
    kind: EventKind,
    timestamp: Timestamp,
}

#[derive(Default)]
struct SessionEvents {
    gy_station: Option<Timestamp>,
    gy_vehicle: Option<Timestamp>,
    led_on: Option<Timestamp>,
    pt_trigger: Option<Timestamp>,
    pt_trigger_count: u32,
    m_station: Option<Timestamp>,
    m_vehicle: Option<Timestamp>,
    led_phy: Option<Timestamp>,
    pt_phy: Option<Timestamp>,
}

impl SessionEvents {
    fn slot(&mut self, kind: EventKind) -> &mut Option<Timestamp> {
        match kind {
            EventKind::GyStation => &mut self.gy_station,
            EventKind::GyVehicle => &mut self.gy_vehicle,
            EventKind::LedOn => &mut self.led_on,
            EventKind::PtTrigger => &mut self.pt_trigger,
            EventKind::MStation => &mut self.m_station,
            EventKind::MVehicle => &mut self.m_vehicle,
            EventKind::LedPhy => &mut self.led_phy,
            EventKind::PtPhy => &mut self.pt_phy,
        }
    }
}

/// Parse a newline-delimited event log into one [`SessionRecord`] per
/// session id.
///
/// Sessions with missing anchors, repeated phototransistor triggers, domain
/// violations or overlapping anchor intervals are returned flagged invalid
/// with a reason code; malformed lines and duplicated non-trigger events are
/// hard errors.
pub fn ingest_log<R: BufRead>(reader: R, format: LogFormat) -> Result<EventLog, IngestError> {
    let mut simulated = false;
    let mut sessions: BTreeMap<u64, SessionEvents> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = directive.split_once('=') {
                if key.trim() == "simulated" {
                    simulated = value.trim() == "true";
                }
            }
            continue;
        }
        if format == LogFormat::Csv && trimmed == "session_id,event_kind,clock_domain,t_ns" {
            continue;
        }

        let event = match format {
            LogFormat::Csv => parse_csv_event(trimmed, line_no)?,
            LogFormat::JsonLines => parse_json_event(trimmed, line_no)?,
        };

        if event.kind.is_ground_truth() && !simulated {
            return Err(IngestError::GroundTruthNotAllowed {
                line: line_no,
                kind: event.kind,
            });
        }

        let entry = sessions.entry(event.session_id).or_default();
        if event.kind == EventKind::PtTrigger {
            entry.pt_trigger_count += 1;
            if entry.pt_trigger.is_none() {
                entry.pt_trigger = Some(event.timestamp);
            }
        } else {
            let slot = entry.slot(event.kind);
            if slot.is_some() {
                return Err(IngestError::DuplicateEvent {
                    line: line_no,
                    session_id: event.session_id,
                    kind: event.kind,
                });
            }
            *slot = Some(event.timestamp);
        }
    }

    let mut log = EventLog::new(simulated);
    for (&session_id, events) in &sessions {
        let mut record = SessionRecord {
            session_id,
            gy_station: events.gy_station,
            gy_vehicle: events.gy_vehicle,
            led_on: events.led_on,
            pt_trigger: events.pt_trigger,
            pt_trigger_count: events.pt_trigger_count,
            valid: false,
            reason: None,
        };
        record.revalidate(false);
        log.records.push(record);

        let truth_slots = [
            events.m_station,
            events.m_vehicle,
            events.led_phy,
            events.pt_phy,
        ];
        let present = truth_slots.iter().filter(|t| t.is_some()).count();
        if present == 4 {
            log.insert_truth(GroundTruth {
                session_id,
                m_station: events.m_station.unwrap(),
                m_vehicle: events.m_vehicle.unwrap(),
                led_phy: events.led_phy.unwrap(),
                pt_phy: events.pt_phy.unwrap(),
            });
        } else if present > 0 {
            return Err(IngestError::IncompleteGroundTruth { session_id });
        }
    }

    flag_overlaps(&mut log.records);
    Ok(log)
}

/// Mark sessions whose `[gy_station, pt_trigger]` intervals overlap.
///
/// Session pairing assumes non-overlapping maneuvers; overlapping intervals
/// mean the trigger-to-LED pairing is ambiguous, so both parties are flagged.
fn flag_overlaps(records: &mut [SessionRecord]) {
    let mut intervals: Vec<(usize, i64, i64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            if !r.valid {
                return None;
            }
            let a = r.anchors()?;
            Some((i, a.gy_station.t_ns, a.pt_trigger.t_ns))
        })
        .collect();
    intervals.sort_by_key(|&(_, start, _)| start);

    // Sweep with the furthest-reaching open interval so nested sessions are
    // caught, not just adjacent ones.
    let mut flagged = Vec::new();
    let mut open: Option<(usize, i64)> = None;
    for &(i, start, end) in &intervals {
        if let Some((open_idx, open_end)) = open {
            if start < open_end {
                flagged.push(open_idx);
                flagged.push(i);
            }
            if end > open_end {
                open = Some((i, end));
            }
        } else {
            open = Some((i, end));
        }
    }
    for i in flagged {
        records[i].valid = false;
        records[i].reason = Some(InvalidReason::SessionOverlap);
    }
}

fn parse_csv_event(line: &str, line_no: usize) -> Result<RawEvent, IngestError> {
    let parse_err = |msg: &str| IngestError::Parse {
        line: line_no,
        msg: msg.to_string(),
    };
    let mut fields = line.split(',');
    let session_id = fields
        .next()
        .ok_or_else(|| parse_err("missing session_id"))?
        .trim()
        .parse::<u64>()
        .map_err(|e| parse_err(&format!("bad session_id: {e}")))?;
    let kind_str = fields.next().ok_or_else(|| parse_err("missing event_kind"))?;
    let kind = EventKind::parse(kind_str)
        .ok_or_else(|| parse_err(&format!("unknown event_kind {kind_str:?}")))?;
    let domain_str = fields
        .next()
        .ok_or_else(|| parse_err("missing clock_domain"))?;
    let domain = ClockDomain::parse(domain_str)
        .ok_or_else(|| parse_err(&format!("unknown clock_domain {domain_str:?}")))?;
    let t_ns = fields
        .next()
        .ok_or_else(|| parse_err("missing t_ns"))?
        .trim()
        .parse::<i64>()
        .map_err(|e| parse_err(&format!("bad t_ns: {e}")))?;
    if fields.next().is_some() {
        return Err(parse_err("too many fields (expected 4)"));
    }
    Ok(RawEvent {
        session_id,
        kind,
        timestamp: Timestamp::new(t_ns, domain),
    })
}

#[derive(Deserialize)]
struct JsonEvent {
    session_id: u64,
    event_kind: EventKind,
    clock_domain: ClockDomain,
    t_ns: i64,
}

fn parse_json_event(line: &str, line_no: usize) -> Result<RawEvent, IngestError> {
    let event: JsonEvent = serde_json::from_str(line).map_err(|e| IngestError::Parse {
        line: line_no,
        msg: e.to_string(),
    })?;
    Ok(RawEvent {
        session_id: event.session_id,
        kind: event.event_kind,
        timestamp: Timestamp::new(event.t_ns, event.clock_domain),
    })
}

/// Serialize an event log in canonical order (ascending session id; anchors
/// before ground truth). Reparsing the output yields an equal record set.
pub fn write_log<W: Write>(log: &EventLog, format: LogFormat, mut w: W) -> io::Result<()> {
    if log.simulated {
        writeln!(w, "#simulated=true")?;
    }
    if format == LogFormat::Csv {
        writeln!(w, "session_id,event_kind,clock_domain,t_ns")?;
    }
    for record in &log.records {
        let mut events: Vec<(EventKind, Timestamp, u32)> = Vec::new();
        if let Some(t) = record.gy_station {
            events.push((EventKind::GyStation, t, 1));
        }
        if let Some(t) = record.gy_vehicle {
            events.push((EventKind::GyVehicle, t, 1));
        }
        if let Some(t) = record.led_on {
            events.push((EventKind::LedOn, t, 1));
        }
        if let Some(t) = record.pt_trigger {
            events.push((EventKind::PtTrigger, t, record.pt_trigger_count));
        }
        if let Some(truth) = log.truth(record.session_id) {
            events.push((EventKind::MStation, truth.m_station, 1));
            events.push((EventKind::MVehicle, truth.m_vehicle, 1));
            events.push((EventKind::LedPhy, truth.led_phy, 1));
            events.push((EventKind::PtPhy, truth.pt_phy, 1));
        }
        for (kind, timestamp, repeats) in events {
            for _ in 0..repeats {
                write_event(&mut w, format, record.session_id, kind, timestamp)?;
            }
        }
    }
    Ok(())
}

fn write_event<W: Write>(
    w: &mut W,
    format: LogFormat,
    session_id: u64,
    kind: EventKind,
    t: Timestamp,
) -> io::Result<()> {
    match format {
        LogFormat::Csv => writeln!(w, "{},{},{},{}", session_id, kind, t.domain, t.t_ns),
        LogFormat::JsonLines => writeln!(
            w,
            r#"{{"session_id":{},"event_kind":"{}","clock_domain":"{}","t_ns":{}}}"#,
            session_id, kind, t.domain, t.t_ns
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ts(t_ns: i64, domain: ClockDomain) -> Timestamp {
        Timestamp::new(t_ns, domain)
    }

    fn well_formed(session_id: u64, base: i64) -> String {
        format!(
            "{sid},GY_STATION,Station,{a}\n{sid},GY_VEHICLE,Vehicle,{b}\n{sid},LED_ON,Vehicle,{c}\n{sid},PT_TRIGGER,Station,{d}\n",
            sid = session_id,
            a = base,
            b = base + 318_000_000,
            c = base + 318_500_000,
            d = base + 520_500_000,
        )
    }

    #[test]
    fn ingests_minimal_complete_session() {
        let log = ingest_log(Cursor::new(well_formed(7, 0)), LogFormat::Csv).unwrap();
        assert_eq!(log.records.len(), 1);
        let record = &log.records[0];
        assert_eq!(record.session_id, 7);
        assert!(record.valid);
        assert_eq!(record.pt_trigger_count, 1);
        assert_eq!(record.reason, None);
    }

    #[test]
    fn double_trigger_flags_multiple_detections() {
        let mut input = well_formed(3, 0);
        input.push_str("3,PT_TRIGGER,Station,520600000\n");
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        let record = &log.records[0];
        assert!(!record.valid);
        assert_eq!(record.reason, Some(InvalidReason::MultipleDetections));
        assert_eq!(record.pt_trigger_count, 2);
    }

    #[test]
    fn missing_led_on_flags_missing_event() {
        let input = "1,GY_STATION,Station,0\n1,GY_VEHICLE,Vehicle,10\n1,PT_TRIGGER,Station,30\n";
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        let record = &log.records[0];
        assert!(!record.valid);
        assert_eq!(record.reason, Some(InvalidReason::MissingEvent));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "1,GY_STATION,Station,0\nnot-a-session,GY_VEHICLE,Vehicle,10\n";
        let err = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap_err();
        match err {
            IngestError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_non_trigger_event_is_error() {
        let input = "1,GY_STATION,Station,0\n1,GY_STATION,Station,5\n";
        let err = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateEvent { line: 2, .. }));
    }

    #[test]
    fn ground_truth_requires_simulated_header() {
        let input = "1,M_STATION,Reference,0\n";
        let err = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap_err();
        assert!(matches!(err, IngestError::GroundTruthNotAllowed { .. }));

        let input = format!("#simulated=true\n{}", gt_block(1, 0));
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        assert!(log.simulated);
        assert!(log.truth(1).is_some());
    }

    fn gt_block(sid: u64, base: i64) -> String {
        format!(
            "{sid},M_STATION,Reference,{a}\n{sid},M_VEHICLE,Reference,{b}\n{sid},LED_PHY,Reference,{c}\n{sid},PT_PHY,Reference,{d}\n",
            sid = sid,
            a = base,
            b = base + 300_000_000,
            c = base + 301_000_000,
            d = base + 500_000_000,
        )
    }

    #[test]
    fn incomplete_ground_truth_is_error() {
        let input = "#simulated=true\n1,M_STATION,Reference,0\n";
        let err = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap_err();
        assert!(matches!(
            err,
            IngestError::IncompleteGroundTruth { session_id: 1 }
        ));
    }

    #[test]
    fn jsonl_round_trip_matches_csv() {
        let input = well_formed(7, 1_000);
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        let mut buf = Vec::new();
        write_log(&log, LogFormat::JsonLines, &mut buf).unwrap();
        let reparsed = ingest_log(Cursor::new(buf), LogFormat::JsonLines).unwrap();
        assert_eq!(log, reparsed);
    }

    #[test]
    fn overlapping_sessions_are_flagged() {
        let mut input = well_formed(1, 0);
        input.push_str(&well_formed(2, 100_000_000)); // starts inside session 1
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        assert!(log.records.iter().all(|r| !r.valid));
        assert!(log
            .records
            .iter()
            .all(|r| r.reason == Some(InvalidReason::SessionOverlap)));
    }

    #[test]
    fn non_overlapping_sessions_stay_valid() {
        let mut input = well_formed(1, 0);
        input.push_str(&well_formed(2, 3_000_000_000));
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        assert!(log.records.iter().all(|r| r.valid));
    }

    #[test]
    fn long_session_flags_every_nested_session() {
        // Session 1 spans [0, 100 s] and swallows sessions 2 and 3, which do
        // not overlap each other.
        let mut input = format!(
            "1,GY_STATION,Station,0\n1,GY_VEHICLE,Vehicle,1000\n1,LED_ON,Vehicle,2000\n1,PT_TRIGGER,Station,{}\n",
            100_000_000_000i64
        );
        input.push_str(&well_formed(2, 10_000_000_000));
        input.push_str(&well_formed(3, 20_000_000_000));
        let log = ingest_log(Cursor::new(input), LogFormat::Csv).unwrap();
        for record in &log.records {
            assert!(!record.valid, "session {} escaped", record.session_id);
            assert_eq!(record.reason, Some(InvalidReason::SessionOverlap));
        }
    }

    #[test]
    fn validate_reports_ordering_violations() {
        let mut record = SessionRecord::complete(
            1,
            ts(0, ClockDomain::Station),
            ts(100, ClockDomain::Vehicle),
            ts(50, ClockDomain::Vehicle), // LED before onset
            ts(500, ClockDomain::Station),
        );
        let report = validate_session(&record, false);
        assert!(!report.valid);
        assert_eq!(report.violations, vec![InvalidReason::LedBeforeOnset]);

        record.led_on = Some(ts(600, ClockDomain::Vehicle));
        let unaligned = validate_session(&record, false);
        assert!(unaligned.valid, "cross-domain ordering needs alignment");
        let aligned = validate_session(&record, true);
        assert_eq!(aligned.violations, vec![InvalidReason::PtBeforeLed]);
    }

    #[test]
    fn led_delay_is_direct_subtraction() {
        let record = SessionRecord::complete(
            1,
            ts(0, ClockDomain::Station),
            ts(1_000_000_000, ClockDomain::Vehicle),
            ts(1_000_500_000, ClockDomain::Vehicle),
            ts(2_000_000_000, ClockDomain::Station),
        );
        assert_eq!(derive_led_delay(&record).unwrap(), 500_000);

        let zero = SessionRecord::complete(
            2,
            ts(0, ClockDomain::Station),
            ts(1_000_000_000, ClockDomain::Vehicle),
            ts(1_000_000_000, ClockDomain::Vehicle),
            ts(2_000_000_000, ClockDomain::Station),
        );
        assert_eq!(derive_led_delay(&zero).unwrap(), 0);
    }

    #[test]
    fn led_delay_rejects_invalid_record() {
        let mut record = SessionRecord::complete(
            1,
            ts(0, ClockDomain::Station),
            ts(10, ClockDomain::Vehicle),
            ts(20, ClockDomain::Vehicle),
            ts(30, ClockDomain::Station),
        );
        record.pt_trigger_count = 2;
        record.revalidate(false);
        assert!(derive_led_delay(&record).is_err());
    }

    #[test]
    fn cross_domain_subtraction_is_rejected() {
        let a = ts(10, ClockDomain::Station);
        let b = ts(5, ClockDomain::Vehicle);
        assert!(a.duration_since(b).is_err());
        assert_eq!(a.duration_since(ts(4, ClockDomain::Station)).unwrap(), 6);
    }
}
