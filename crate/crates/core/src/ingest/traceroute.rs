use std::fmt;
use std::io::BufRead;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{NdjsonReader, Strictness, Validate};

/// Source address of a hop reply; `*` marks a probe that timed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplyAddr {
    Ip(IpAddr),
    Unresponsive,
}

impl ReplyAddr {
    pub fn ip(&self) -> Option<IpAddr> {
        match self {
            ReplyAddr::Ip(ip) => Some(*ip),
            ReplyAddr::Unresponsive => None,
        }
    }
}

impl fmt::Display for ReplyAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplyAddr::Ip(ip) => ip.fmt(f),
            ReplyAddr::Unresponsive => f.write_str("*"),
        }
    }
}

impl FromStr for ReplyAddr {
    type Err = std::net::AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(ReplyAddr::Unresponsive)
        } else {
            s.parse().map(ReplyAddr::Ip)
        }
    }
}

impl Serialize for ReplyAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReplyAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub ip: ReplyAddr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub hop_no: u32,
    pub replies: Vec<Reply>,
}

impl Hop {
    /// RTTs of replies that came from `ip`.
    pub fn rtts_from(&self, ip: IpAddr) -> impl Iterator<Item = f64> + '_ {
        self.replies
            .iter()
            .filter(move |r| r.ip == ReplyAddr::Ip(ip))
            .filter_map(|r| r.rtt_ms)
    }

    pub fn answered_by(&self, ip: IpAddr) -> bool {
        self.replies.iter().any(|r| r.ip == ReplyAddr::Ip(ip))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracerouteMeasurement {
    pub probe_id: u64,
    pub timestamp: DateTime<Utc>,
    pub src_addr: IpAddr,
    pub dst_name: String,
    pub dst_addr: IpAddr,
    pub hops: Vec<Hop>,
}

impl Validate for TracerouteMeasurement {
    fn validate(&self) -> Result<(), String> {
        let mut prev = 0u32;
        for hop in &self.hops {
            if hop.hop_no < 1 {
                return Err("hop_no must be >= 1".into());
            }
            if hop.hop_no <= prev {
                return Err(format!("hop {} out of order (after {prev})", hop.hop_no));
            }
            prev = hop.hop_no;
            for reply in &hop.replies {
                match (reply.ip, reply.rtt_ms) {
                    (_, Some(rtt)) if !(rtt.is_finite() && rtt >= 0.0) => {
                        return Err(format!("hop {}: rtt_ms must be finite and non-negative", hop.hop_no));
                    }
                    (ReplyAddr::Ip(_), None) => {
                        return Err(format!("hop {}: responsive reply without rtt_ms", hop.hop_no));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Streams traceroute measurements from newline-delimited JSON.
pub fn parse_traceroute_stream<R: BufRead>(
    source: R,
    strictness: Strictness,
) -> NdjsonReader<R, TracerouteMeasurement> {
    NdjsonReader::new(source, strictness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::partition;

    fn record(hops: &str) -> String {
        format!(
            r#"{{"probe_id":7,"timestamp":"2022-07-01T00:00:00Z","src_addr":"203.0.113.9","dst_name":"k.root","dst_addr":"193.0.14.129","hops":[{hops}]}}"#
        )
    }

    #[test]
    fn twelve_hops_parse() {
        let hops: Vec<String> = (1..=12)
            .map(|n| format!(r#"{{"hop_no":{n},"replies":[{{"ip":"10.0.0.{n}","rtt_ms":{n}.5}},{{"ip":"*"}}]}}"#))
            .collect();
        let line = record(&hops.join(","));
        let (ok, errs) = partition(parse_traceroute_stream(line.as_bytes(), Strictness::Lenient));
        assert!(errs.is_empty(), "{errs:?}");
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].hops.len(), 12);
        assert_eq!(ok[0].hops[0].replies[1].ip, ReplyAddr::Unresponsive);
    }

    #[test]
    fn hops_out_of_order_rejected() {
        let line = record(r#"{"hop_no":2,"replies":[]},{"hop_no":1,"replies":[]}"#);
        let (ok, errs) = partition(parse_traceroute_stream(line.as_bytes(), Strictness::Lenient));
        assert!(ok.is_empty());
        assert!(errs[0].reason.contains("out of order"));
    }

    #[test]
    fn negative_rtt_rejected() {
        let line = record(r#"{"hop_no":1,"replies":[{"ip":"10.0.0.1","rtt_ms":-1}]}"#);
        let (_, errs) = partition(parse_traceroute_stream(line.as_bytes(), Strictness::Lenient));
        assert_eq!(errs.len(), 1);
    }

    #[test]
    fn reply_addr_round_trip() {
        for s in ["*", "100.64.0.1", "2001:db8::1"] {
            let a: ReplyAddr = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
    }
}
