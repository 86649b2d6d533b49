//! Component-wise latency attribution: close a measured total against
//! directly measured component means and derive the unmeasured residual.
//!
//! Component means are held as integer nanoseconds internally (inputs are
//! rounded to 1 ns = 1e-6 ms) so the closure invariant - components sum
//! exactly to the total - is independent of summation order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which latency chain a breakdown describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    M2M,
    G2G,
}

impl Chain {
    pub fn as_str(self) -> &'static str {
        match self {
            Chain::M2M => "m2m",
            Chain::G2G => "g2g",
        }
    }
}

/// How a component's mean was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Directly measured (timestamping, packet capture, ...).
    Measured,
    /// Derived from a model (e.g. refresh-rate expectation) rather than
    /// measured on the pipeline itself.
    Estimated,
    /// Closed as total minus the sum of the other components.
    Residual,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Estimated => "estimated",
            Provenance::Residual => "residual",
        }
    }
}

/// One component row of a breakdown table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    mean_ns: i64,
    pub provenance: Provenance,
}

impl Component {
    pub fn mean_ms(&self) -> f64 {
        self.mean_ns as f64 / 1e6
    }

    pub fn mean_ns(&self) -> i64 {
        self.mean_ns
    }
}

/// Mean-latency attribution for one chain. Exactly one component is the
/// residual, and component means sum exactly to the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub chain: Chain,
    total_ns: i64,
    pub components: Vec<Component>,
}

impl BreakdownTable {
    pub fn total_ms(&self) -> f64 {
        self.total_ns as f64 / 1e6
    }

    pub fn total_ns(&self) -> i64 {
        self.total_ns
    }

    pub fn residual(&self) -> &Component {
        self.components
            .iter()
            .find(|c| c.provenance == Provenance::Residual)
            .expect("constructed with exactly one residual")
    }

    /// Components sum exactly to the total (integer nanoseconds).
    pub fn closes(&self) -> bool {
        self.components.iter().map(|c| c.mean_ns).sum::<i64>() == self.total_ns
    }
}

#[derive(Debug, Error)]
pub enum BreakdownError {
    #[error("measured components exceed the total by {deficit_ms:.3} ms")]
    NegativeResidual { deficit_ms: f64 },
    #[error("total latency must be > 0, got {0} ms")]
    NonPositiveTotal(f64),
    #[error("throughput must be > 0, got {0} kb/s")]
    NonPositiveThroughput(f64),
    #[error("payload must be >= 0, got {0} kb")]
    NegativePayload(f64),
    #[error("refresh rate must be > 0, got {0} Hz")]
    NonPositiveRate(f64),
    #[error("latency shares need a positive sum")]
    ZeroSum,
    #[error("latency shares need non-negative inputs")]
    NegativeShareInput,
    #[error("measured component {name:?} is labeled residual; the residual is closed, not supplied")]
    ResidualInMeasured { name: String },
}

fn ms_to_ns(ms: f64) -> i64 {
    (ms * 1e6).round() as i64
}

/// A measured (or externally estimated) component mean, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredComponent {
    pub name: String,
    pub mean_ms: f64,
    #[serde(default = "default_measured")]
    pub provenance: Provenance,
}

fn default_measured() -> Provenance {
    Provenance::Measured
}

impl MeasuredComponent {
    pub fn new(name: impl Into<String>, mean_ms: f64) -> Self {
        MeasuredComponent {
            name: name.into(),
            mean_ms,
            provenance: Provenance::Measured,
        }
    }
}

/// Attribute the unmeasured remainder of a chain total to a named residual
/// component: `residual = total - sum(measured)`.
///
/// Errors when the measured components exceed the total, carrying the
/// deficit - that signals a mis-measurement, not a zero-cost component.
pub fn attribute_residual(
    chain: Chain,
    total_ms: f64,
    measured: &[MeasuredComponent],
    residual_name: &str,
) -> Result<BreakdownTable, BreakdownError> {
    if total_ms.is_nan() || total_ms <= 0.0 {
        return Err(BreakdownError::NonPositiveTotal(total_ms));
    }
    if let Some(clash) = measured.iter().find(|c| c.provenance == Provenance::Residual) {
        return Err(BreakdownError::ResidualInMeasured {
            name: clash.name.clone(),
        });
    }
    let total_ns = ms_to_ns(total_ms);
    let measured_sum_ns: i64 = measured.iter().map(|c| ms_to_ns(c.mean_ms)).sum();
    let residual_ns = total_ns - measured_sum_ns;
    if residual_ns < 0 {
        return Err(BreakdownError::NegativeResidual {
            deficit_ms: -residual_ns as f64 / 1e6,
        });
    }

    let mut components: Vec<Component> = measured
        .iter()
        .map(|c| Component {
            name: c.name.clone(),
            mean_ns: ms_to_ns(c.mean_ms),
            provenance: c.provenance,
        })
        .collect();
    components.push(Component {
        name: residual_name.to_string(),
        mean_ns: residual_ns,
        provenance: Provenance::Residual,
    });

    let table = BreakdownTable {
        chain,
        total_ns,
        components,
    };
    debug_assert!(table.closes());
    Ok(table)
}

/// Serialization delay of a payload over a link, milliseconds:
/// `payload_kb / throughput_kbps * 1000`. Pure serialization model; no
/// propagation or queueing term.
pub fn network_latency_from_throughput(
    payload_kb: f64,
    throughput_kbps: f64,
) -> Result<f64, BreakdownError> {
    if throughput_kbps.is_nan() || throughput_kbps <= 0.0 {
        return Err(BreakdownError::NonPositiveThroughput(throughput_kbps));
    }
    if payload_kb < 0.0 {
        return Err(BreakdownError::NegativePayload(payload_kb));
    }
    Ok(payload_kb / throughput_kbps * 1000.0)
}

/// Expected wait until the next refresh of a periodic display, milliseconds:
/// half the refresh period, assuming uniformly distributed arrival.
pub fn refresh_expectation(rate_hz: f64) -> Result<f64, BreakdownError> {
    if rate_hz.is_nan() || rate_hz <= 0.0 {
        return Err(BreakdownError::NonPositiveRate(rate_hz));
    }
    Ok(1000.0 / rate_hz / 2.0)
}

/// Fractions of the end-to-end latency contributed by each chain.
pub fn e2e_share(m2m_mean: f64, g2g_mean: f64) -> Result<(f64, f64), BreakdownError> {
    if m2m_mean < 0.0 || g2g_mean < 0.0 {
        return Err(BreakdownError::NegativeShareInput);
    }
    let sum = m2m_mean + g2g_mean;
    if sum.is_nan() || sum <= 0.0 {
        return Err(BreakdownError::ZeroSum);
    }
    Ok((m2m_mean / sum, g2g_mean / sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn field_m2m_components() -> Vec<MeasuredComponent> {
        vec![
            MeasuredComponent::new("input_device", 5.0),
            MeasuredComponent::new("pre_processing", 10.0),
            MeasuredComponent::new("network", 10.30),
            MeasuredComponent::new("post_processing", 10.0),
        ]
    }

    #[test]
    fn actuation_residual_closes_m2m_total() {
        let table =
            attribute_residual(Chain::M2M, 306.0, &field_m2m_components(), "actuation").unwrap();
        let residual = table.residual();
        assert_eq!(residual.name, "actuation");
        assert_relative_eq!(residual.mean_ms(), 270.70, epsilon = 1e-9);
        assert!(table.closes());
    }

    #[test]
    fn camera_residual_closes_g2g_total() {
        let measured = vec![
            MeasuredComponent::new("stream_pre", 39.0),
            MeasuredComponent::new("network", 15.0),
            MeasuredComponent::new("stream_post", 10.5),
            MeasuredComponent {
                name: "monitor".into(),
                mean_ms: 8.33,
                provenance: Provenance::Estimated,
            },
        ];
        let table = attribute_residual(Chain::G2G, 193.0, &measured, "camera").unwrap();
        assert_relative_eq!(table.residual().mean_ms(), 120.17, epsilon = 1e-9);
        assert!(table.closes());
    }

    #[test]
    fn exact_closure_with_zero_residual() {
        let measured = vec![MeasuredComponent::new("a", 100.0)];
        let table = attribute_residual(Chain::M2M, 100.0, &measured, "rest").unwrap();
        assert_eq!(table.residual().mean_ns(), 0);
        assert!(table.closes());
    }

    #[test]
    fn negative_residual_carries_deficit() {
        let measured = vec![MeasuredComponent::new("a", 120.0)];
        let err = attribute_residual(Chain::M2M, 100.0, &measured, "rest").unwrap_err();
        match err {
            BreakdownError::NegativeResidual { deficit_ms } => {
                assert_relative_eq!(deficit_ms, 20.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn measured_component_cannot_claim_residual() {
        let measured = vec![MeasuredComponent {
            name: "a".into(),
            mean_ms: 10.0,
            provenance: Provenance::Residual,
        }];
        assert!(matches!(
            attribute_residual(Chain::M2M, 100.0, &measured, "rest"),
            Err(BreakdownError::ResidualInMeasured { .. })
        ));
    }

    #[test]
    fn residual_invariant_to_measured_order() {
        let mut measured = field_m2m_components();
        let forward = attribute_residual(Chain::M2M, 306.0, &measured, "actuation").unwrap();
        measured.reverse();
        let reversed = attribute_residual(Chain::M2M, 306.0, &measured, "actuation").unwrap();
        assert_eq!(
            forward.residual().mean_ns(),
            reversed.residual().mean_ns()
        );
        assert!(reversed.closes());
    }

    #[test]
    fn serialization_delay_from_throughput() {
        assert_relative_eq!(
            network_latency_from_throughput(20.8, 1376.0).unwrap(),
            15.116,
            epsilon = 0.001
        );
        assert_eq!(network_latency_from_throughput(0.0, 1376.0).unwrap(), 0.0);
        // Upper end of the observed image-size range.
        assert_relative_eq!(
            network_latency_from_throughput(50.0, 1376.0).unwrap(),
            36.337,
            epsilon = 0.001
        );
        assert!(network_latency_from_throughput(20.0, 0.0).is_err());
    }

    #[test]
    fn throughput_model_is_linear_and_inverse() {
        let base = network_latency_from_throughput(10.0, 1000.0).unwrap();
        let doubled_payload = network_latency_from_throughput(20.0, 1000.0).unwrap();
        let doubled_rate = network_latency_from_throughput(10.0, 2000.0).unwrap();
        assert_relative_eq!(doubled_payload, base * 2.0);
        assert_relative_eq!(doubled_rate, base / 2.0);
    }

    #[test]
    fn refresh_expectation_values() {
        assert_relative_eq!(refresh_expectation(60.0).unwrap(), 8.3333, epsilon = 1e-3);
        assert_relative_eq!(refresh_expectation(1000.0).unwrap(), 0.5);
        // Same uniform model applied to a 30 ms frame period.
        assert_relative_eq!(refresh_expectation(1000.0 / 30.0).unwrap(), 15.0);
        assert!(refresh_expectation(0.0).is_err());
    }

    #[test]
    fn e2e_share_fractions() {
        let (m2m, g2g) = e2e_share(306.0, 193.0).unwrap();
        assert_relative_eq!(m2m, 0.613, epsilon = 0.001);
        assert_relative_eq!(g2g, 0.387, epsilon = 0.001);
        assert_relative_eq!(m2m + g2g, 1.0);

        let (half_a, half_b) = e2e_share(5.0, 5.0).unwrap();
        assert_eq!((half_a, half_b), (0.5, 0.5));

        let (m2m_4g, g2g_4g) = e2e_share(318.0, 202.0).unwrap();
        assert_relative_eq!(m2m_4g, 0.612, epsilon = 0.001);
        assert_relative_eq!(g2g_4g, 0.388, epsilon = 0.001);

        assert!(e2e_share(0.0, 0.0).is_err());
    }
}
