//! Latency profiling: per-session access latency, density estimates, orbit
//! classification and ASN-level anomaly flags.

mod classify;
mod kde;
mod percentile;

pub use classify::{
    classify_orbit, flag_asn_anomalies, profile_asns, AsnAnomaly, AsnProfile, ClassifierConfig, OrbitClass,
    OrbitVerdict,
};
pub use kde::{kde, modes, silverman_bandwidth, KdeProfile, DEFAULT_GRID_POINTS};
pub use percentile::{median, percentile, percentile_sorted};

use crate::ingest::SpeedTestSession;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("quantile {0} outside [0, 1]")]
    BadQuantile(f64),
    #[error("non-finite sample value")]
    NonFinite,
    #[error("degenerate input: fewer than two distinct samples")]
    Degenerate,
    #[error("insufficient data: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{0}")]
    BadParameter(String),
}

/// Quantile of the session's RTT samples taken as its access latency.
pub const ACCESS_LATENCY_QUANTILE: f64 = 0.05;

/// 5th percentile of the session's smoothed RTT samples.
///
/// Panics if the session has no snapshots; parsed sessions always do.
pub fn access_latency(session: &SpeedTestSession) -> f64 {
    percentile(&session.rtt_samples(), ACCESS_LATENCY_QUANTILE).expect("validated session has finite RTT samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Direction, TcpSnapshot};

    fn session(rtts: &[f64]) -> SpeedTestSession {
        SpeedTestSession {
            session_id: "t".into(),
            timestamp: "2022-01-01T00:00:00Z".parse().unwrap(),
            client_ip: "192.0.2.1".parse().unwrap(),
            client_asn: 14593,
            direction: Direction::Download,
            snapshots: rtts
                .iter()
                .enumerate()
                .map(|(i, &r)| TcpSnapshot {
                    t_offset_ms: i as f64,
                    rtt_ms: r,
                    rtt_var_ms: 1.0,
                    bytes_sent: 10,
                    bytes_retrans: 0,
                    delivery_rate_bps: None,
                })
                .collect(),
        }
    }

    #[test]
    fn access_latency_five_samples() {
        // sorted [56,57,58,59,60], rank 4 * 0.05 = 0.2 -> 56 + 0.2
        let v = access_latency(&session(&[60.0, 58.0, 57.0, 56.0, 59.0]));
        assert!((v - 56.2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn access_latency_singleton() {
        assert_eq!(access_latency(&session(&[100.0])), 100.0);
    }

    #[test]
    fn access_latency_geo_snapshots() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(673);
        let d = Normal::new(673.0, 20.0).unwrap();
        let rtts: Vec<f64> = (0..100).map(|_| d.sample(&mut rng)).collect();
        let v = access_latency(&session(&rtts));
        // Oracle: 5th order statistic region of N(673, 20) is ~640.
        let mut sorted = rtts.clone();
        sorted.sort_by(f64::total_cmp);
        let oracle = sorted[4] + (sorted[5] - sorted[4]) * (99.0 * 0.05 - 4.0);
        assert!((v - oracle).abs() < 1e-9);
        assert!((600.0..=680.0).contains(&v), "{v}");
    }
}
