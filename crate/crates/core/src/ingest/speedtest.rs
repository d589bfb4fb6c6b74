use std::io::BufRead;
use std::net::IpAddr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Asn, NdjsonReader, Strictness, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Download,
}

/// One poll of the kernel's per-socket transport statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcpSnapshot {
    pub t_offset_ms: f64,
    /// Smoothed round-trip time.
    pub rtt_ms: f64,
    /// Round-trip-time variation; the session's jitter samples.
    pub rtt_var_ms: f64,
    pub bytes_sent: u64,
    pub bytes_retrans: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery_rate_bps: Option<f64>,
}

/// A single-connection download test and its transport snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTestSession {
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    pub client_ip: IpAddr,
    pub client_asn: Asn,
    pub direction: Direction,
    pub snapshots: Vec<TcpSnapshot>,
}

impl SpeedTestSession {
    pub fn rtt_samples(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.rtt_ms).collect()
    }

    pub fn jitter_samples(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.rtt_var_ms).collect()
    }

    /// Last snapshot; sessions that passed validation always have one.
    pub fn final_snapshot(&self) -> Option<&TcpSnapshot> {
        self.snapshots.last()
    }
}

impl Validate for SpeedTestSession {
    fn validate(&self) -> Result<(), String> {
        if self.session_id.is_empty() {
            return Err("empty session_id".into());
        }
        if self.client_asn == 0 {
            return Err("client_asn must be positive".into());
        }
        if self.snapshots.is_empty() {
            return Err("empty snapshot list".into());
        }
        let mut prev: Option<&TcpSnapshot> = None;
        for (i, s) in self.snapshots.iter().enumerate() {
            if !s.t_offset_ms.is_finite() || s.t_offset_ms < 0.0 {
                return Err(format!("snapshot {i}: bad t_offset_ms"));
            }
            if !(s.rtt_ms.is_finite() && s.rtt_ms > 0.0) {
                return Err(format!("snapshot {i}: rtt_ms must be finite and positive"));
            }
            if !(s.rtt_var_ms.is_finite() && s.rtt_var_ms >= 0.0) {
                return Err(format!("snapshot {i}: rtt_var_ms must be finite and non-negative"));
            }
            if s.bytes_retrans > s.bytes_sent {
                return Err(format!("snapshot {i}: counter violation (bytes_retrans > bytes_sent)"));
            }
            if let Some(rate) = s.delivery_rate_bps {
                if !(rate.is_finite() && rate >= 0.0) {
                    return Err(format!("snapshot {i}: bad delivery_rate_bps"));
                }
            }
            if let Some(p) = prev {
                if s.t_offset_ms <= p.t_offset_ms {
                    return Err(format!("snapshot {i}: offsets not strictly increasing"));
                }
                if s.bytes_sent < p.bytes_sent || s.bytes_retrans < p.bytes_retrans {
                    return Err(format!(
                        "snapshot {i}: counter violation (cumulative counter decreased)"
                    ));
                }
            }
            prev = Some(s);
        }
        Ok(())
    }
}

/// Streams sessions from newline-delimited JSON.
pub fn parse_speedtest_stream<R: BufRead>(source: R, strictness: Strictness) -> NdjsonReader<R, SpeedTestSession> {
    NdjsonReader::new(source, strictness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{partition, RecordError};

    const VALID: &str = r#"{"session_id":"s1","timestamp":"2022-06-01T12:00:00Z","client_ip":"100.1.2.3","client_asn":14593,"direction":"download","snapshots":[{"t_offset_ms":100,"rtt_ms":60,"rtt_var_ms":10,"bytes_sent":1000,"bytes_retrans":0},{"t_offset_ms":200,"rtt_ms":58,"rtt_var_ms":12,"bytes_sent":5000,"bytes_retrans":10,"delivery_rate_bps":1e6},{"t_offset_ms":300,"rtt_ms":57,"rtt_var_ms":9,"bytes_sent":9000,"bytes_retrans":10}]}"#;

    #[test]
    fn one_valid_line() {
        let (ok, errs) = partition(parse_speedtest_stream(VALID.as_bytes(), Strictness::Lenient));
        assert_eq!(ok.len(), 1);
        assert!(errs.is_empty());
        assert_eq!(ok[0].snapshots.len(), 3);
        assert_eq!(ok[0].client_asn, 14593);
    }

    #[test]
    fn retrans_above_sent_is_counter_violation() {
        let line = VALID.replace(
            r#""bytes_sent":1000,"bytes_retrans":0"#,
            r#""bytes_sent":1000,"bytes_retrans":2000"#,
        );
        let (ok, errs) = partition(parse_speedtest_stream(line.as_bytes(), Strictness::Lenient));
        assert!(ok.is_empty());
        assert_eq!(errs.len(), 1);
        assert!(errs[0].reason.contains("counter violation"), "{}", errs[0]);
    }

    #[test]
    fn decreasing_counter_rejected() {
        let line = VALID.replace(r#""bytes_sent":9000"#, r#""bytes_sent":4000"#);
        let errs: Vec<RecordError> = parse_speedtest_stream(line.as_bytes(), Strictness::Lenient)
            .filter_map(Result::err)
            .collect();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].reason.contains("counter violation"));
    }

    #[test]
    fn empty_snapshots_rejected() {
        let line = r#"{"session_id":"s","timestamp":"2022-06-01T12:00:00Z","client_ip":"1.2.3.4","client_asn":1,"direction":"download","snapshots":[]}"#;
        let errs: Vec<_> = parse_speedtest_stream(line.as_bytes(), Strictness::Lenient)
            .filter_map(Result::err)
            .collect();
        assert_eq!(errs[0].reason, "empty snapshot list");
    }

    #[test]
    fn non_monotone_offsets_rejected() {
        let line = VALID.replace(r#""t_offset_ms":300"#, r#""t_offset_ms":150"#);
        let errs: Vec<_> = parse_speedtest_stream(line.as_bytes(), Strictness::Lenient)
            .filter_map(Result::err)
            .collect();
        assert!(errs[0].reason.contains("strictly increasing"));
    }

    #[test]
    fn strict_mode_stops_at_first_error() {
        let input = format!("{VALID}\nnot json\n{VALID}\n");
        let items: Vec<_> = parse_speedtest_stream(input.as_bytes(), Strictness::Strict).collect();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].as_ref().unwrap_err().line_no, 2);

        let items: Vec<_> = parse_speedtest_stream(input.as_bytes(), Strictness::Lenient).collect();
        assert_eq!(items.len(), 3);
    }

    #[test]
    fn upload_direction_rejected() {
        let line = VALID.replace("download", "upload");
        let errs: Vec<_> = parse_speedtest_stream(line.as_bytes(), Strictness::Lenient)
            .filter_map(Result::err)
            .collect();
        assert_eq!(errs.len(), 1);
    }
}
