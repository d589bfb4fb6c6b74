//! Traceroute analytics for Starlink probes: CGN gateway detection, PoP RTT,
//! PoP hostname parsing, per-probe PoP timelines and change events.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filter::csv_field;
use crate::ingest::{PopLocationTable, ReverseDnsMap, TracerouteMeasurement};
use crate::metrics::{summarize, DistributionSummary};
use crate::profiling::median;

/// Carrier-grade NAT gateway every Starlink dish routes through.
pub const CGN_GATEWAY: IpAddr = IpAddr::V4(Ipv4Addr::new(100, 64, 0, 1));
pub const UNKNOWN_POP: &str = "unknown";
pub const DEFAULT_SHIFT_THRESHOLD: f64 = 0.25;
pub const DEFAULT_SHIFT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("gateway {0} not on path: not a Starlink path")]
    NotStarlinkPath(IpAddr),
    #[error("hostname {0:?} is not a Starlink PoP name")]
    BadHostname(String),
}

pub fn verify_satellite_path(m: &TracerouteMeasurement, gateway: IpAddr) -> bool {
    m.hops.iter().any(|h| h.answered_by(gateway))
}

/// Median RTT of the replies from the first hop the gateway answered.
pub fn pop_rtt(m: &TracerouteMeasurement, gateway: IpAddr) -> Result<f64, PathError> {
    m.hops
        .iter()
        .find(|h| h.answered_by(gateway))
        .and_then(|h| median(&h.rtts_from(gateway).collect::<Vec<_>>()).ok())
        .ok_or(PathError::NotStarlinkPath(gateway))
}

/// Extracts `<token>` from `customer.<token>.pop.starlinkisp.net`,
/// ignoring case. The token is returned lower-cased.
pub fn parse_pop_hostname(hostname: &str) -> Result<String, PathError> {
    let lower = hostname.trim_end_matches('.').to_ascii_lowercase();
    let bad = || PathError::BadHostname(hostname.to_string());
    let token = lower
        .strip_prefix("customer.")
        .and_then(|rest| rest.strip_suffix(".pop.starlinkisp.net"))
        .ok_or_else(bad)?;
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
        return Err(bad());
    }
    Ok(token.to_string())
}

/// Hop number at which the destination answered, if it did on the last hop.
pub fn hops_to_target(m: &TracerouteMeasurement) -> Option<u32> {
    m.hops.last().filter(|h| h.answered_by(m.dst_addr)).map(|h| h.hop_no)
}

/// A maximal run of one probe's measurements mapped to the same PoP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopAssignment {
    pub probe_id: u64,
    #[serde(rename = "pop")]
    pub pop_code: String,
    pub start: DateTime<Utc>,
    /// Start of the next assignment, or the last measurement for the final one.
    pub end: DateTime<Utc>,
    /// Median gateway RTT over the run; `None` if no measurement crossed the gateway.
    pub median_rtt_ms: Option<f64>,
    pub n_measurements: usize,
    /// Gateway RTTs in time order.
    #[serde(skip)]
    pub rtt_series: Vec<(DateTime<Utc>, f64)>,
}

fn pop_code_of(m: &TracerouteMeasurement, rdns: &ReverseDnsMap) -> String {
    rdns.hostname(m.src_addr)
        .and_then(|h| parse_pop_hostname(h).ok())
        .unwrap_or_else(|| UNKNOWN_POP.to_string())
}

/// Timeline of one probe's measurements. Input need not be sorted; the PoP
/// of a measurement comes from the reverse DNS name of its source address.
pub fn build_pop_timeline(
    measurements: &[&TracerouteMeasurement],
    rdns: &ReverseDnsMap,
    gateway: IpAddr,
) -> Vec<PopAssignment> {
    let mut ms: Vec<&TracerouteMeasurement> = measurements.to_vec();
    ms.sort_by_key(|m| m.timestamp);
    let mut out: Vec<PopAssignment> = Vec::new();
    for m in ms {
        let code = pop_code_of(m, rdns);
        let rtt = pop_rtt(m, gateway).ok();
        match out.last_mut() {
            Some(a) if a.pop_code == code && a.probe_id == m.probe_id => {
                a.end = m.timestamp;
                a.n_measurements += 1;
                a.rtt_series.extend(rtt.map(|r| (m.timestamp, r)));
            }
            _ => {
                if let Some(prev) = out.last_mut() {
                    prev.end = m.timestamp;
                }
                out.push(PopAssignment {
                    probe_id: m.probe_id,
                    pop_code: code,
                    start: m.timestamp,
                    end: m.timestamp,
                    median_rtt_ms: None,
                    n_measurements: 1,
                    rtt_series: rtt.map(|r| (m.timestamp, r)).into_iter().collect(),
                });
            }
        }
    }
    for a in &mut out {
        let rtts: Vec<f64> = a.rtt_series.iter().map(|p| p.1).collect();
        a.median_rtt_ms = median(&rtts).ok();
    }
    out
}

/// Timelines for every probe, keyed by probe id.
pub fn build_pop_timelines(
    measurements: &[TracerouteMeasurement],
    rdns: &ReverseDnsMap,
    gateway: IpAddr,
) -> BTreeMap<u64, Vec<PopAssignment>> {
    let mut by_probe: BTreeMap<u64, Vec<&TracerouteMeasurement>> = BTreeMap::new();
    for m in measurements {
        by_probe.entry(m.probe_id).or_default().push(m);
    }
    by_probe
        .into_par_iter()
        .map(|(probe, ms)| (probe, build_pop_timeline(&ms, rdns, gateway)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    PopChange,
    LatencyShift,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSide {
    pub pop: Option<String>,
    pub median_rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeEvent {
    pub probe_id: u64,
    pub at: DateTime<Utc>,
    pub kind: ChangeKind,
    pub before: EventSide,
    pub after: EventSide,
    /// `after - before` median RTT when both are known.
    pub delta_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Minimum relative change of the rolling median.
    pub threshold: f64,
    /// Measurements on each side of the comparison point.
    pub window: usize,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_SHIFT_THRESHOLD,
            window: DEFAULT_SHIFT_WINDOW,
        }
    }
}

/// One `pop_change` per assignment boundary, plus `latency_shift` events
/// where the median of the next `window` RTTs differs from the median of
/// the previous `window` by at least `threshold` (relative) within one
/// assignment. A shift is placed where the relative change peaks within a
/// window of the first crossing; the scan resumes one window after it.
pub fn detect_changes(timeline: &[PopAssignment], cfg: ShiftConfig) -> Vec<ChangeEvent> {
    let mut events = Vec::new();
    for (i, a) in timeline.iter().enumerate() {
        if i > 0 {
            let b = &timeline[i - 1];
            events.push(ChangeEvent {
                probe_id: a.probe_id,
                at: a.start,
                kind: ChangeKind::PopChange,
                before: EventSide {
                    pop: Some(b.pop_code.clone()),
                    median_rtt_ms: b.median_rtt_ms,
                },
                after: EventSide {
                    pop: Some(a.pop_code.clone()),
                    median_rtt_ms: a.median_rtt_ms,
                },
                delta_ms: b.median_rtt_ms.zip(a.median_rtt_ms).map(|(x, y)| y - x),
            });
        }
        events.extend(latency_shifts(a, cfg));
    }
    events
}

fn latency_shifts(a: &PopAssignment, cfg: ShiftConfig) -> Vec<ChangeEvent> {
    let w = cfg.window.max(1);
    let s = &a.rtt_series;
    let med =
        |r: &[(DateTime<Utc>, f64)]| median(&r.iter().map(|p| p.1).collect::<Vec<_>>()).expect("non-empty window");
    let rel = |i: usize| {
        let before = med(&s[i - w..i]);
        let after = med(&s[i..i + w]);
        let r = if before > 0.0 { (after - before) / before } else { 0.0 };
        (r, before, after)
    };
    let mut out = Vec::new();
    let mut i = w;
    while i + w <= s.len() {
        if rel(i).0.abs() < cfg.threshold {
            i += 1;
            continue;
        }
        // Localize to the strongest point within the next window.
        let last = (i + w).min(s.len() - w + 1);
        // Median change plateaus around a step; the mean change breaks ties.
        let mean_gap = |j: usize| {
            let m = |r: &[(DateTime<Utc>, f64)]| r.iter().map(|p| p.1).sum::<f64>() / r.len() as f64;
            (m(&s[j..j + w]) - m(&s[j - w..j])).abs()
        };
        let peak = (i..last)
            .max_by(|&x, &y| {
                rel(x)
                    .0
                    .abs()
                    .total_cmp(&rel(y).0.abs())
                    .then(mean_gap(x).total_cmp(&mean_gap(y)))
                    .then(y.cmp(&x))
            })
            .unwrap_or(i);
        let (_, before, after) = rel(peak);
        let side = |m| EventSide {
            pop: Some(a.pop_code.clone()),
            median_rtt_ms: Some(m),
        };
        out.push(ChangeEvent {
            probe_id: a.probe_id,
            at: s[peak].0,
            kind: ChangeKind::LatencyShift,
            before: side(before),
            after: side(after),
            delta_ms: Some(after - before),
        });
        i = peak + w;
    }
    out
}

pub fn timeline_ndjson(timelines: &BTreeMap<u64, Vec<PopAssignment>>) -> String {
    to_ndjson(timelines.values().flatten())
}

pub fn events_ndjson(events: &[ChangeEvent]) -> String {
    to_ndjson(events)
}

fn to_ndjson<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Gateway RTT summaries grouped by the country of the PoP each
/// measurement was served from. PoPs missing from the table are grouped
/// under their code.
pub fn pop_rtt_by_country(
    measurements: &[TracerouteMeasurement],
    rdns: &ReverseDnsMap,
    pops: &PopLocationTable,
    gateway: IpAddr,
) -> BTreeMap<String, DistributionSummary> {
    let mut by_country: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in measurements {
        let Ok(rtt) = pop_rtt(m, gateway) else { continue };
        let code = pop_code_of(m, rdns);
        let key = pops
            .get(&code)
            .map(|p| p.country_code.as_str().to_string())
            .unwrap_or(code);
        by_country.entry(key).or_default().push(rtt);
    }
    by_country
        .into_iter()
        .filter_map(|(k, v)| summarize(&v).ok().map(|s| (k, s)))
        .collect()
}

/// `probe_id,pop,city,country_code,lat,lon` rows, one per distinct probe and
/// PoP pair. Location columns are empty for PoPs absent from the table.
pub fn probe_pops_csv(timelines: &BTreeMap<u64, Vec<PopAssignment>>, pops: &PopLocationTable) -> String {
    let mut out = String::from("probe_id,pop,city,country_code,lat,lon\n");
    for (probe, tl) in timelines {
        let mut seen: Vec<&str> = tl.iter().map(|a| a.pop_code.as_str()).collect();
        seen.sort();
        seen.dedup();
        for code in seen {
            match pops.get(code) {
                Some(p) => out.push_str(&format!(
                    "{probe},{code},{},{},{},{}\n",
                    csv_field(&p.city),
                    p.country_code.as_str(),
                    p.lat,
                    p.lon
                )),
                None => out.push_str(&format!("{probe},{code},,,,\n")),
            }
        }
    }
    out
}

/// Destination-reaching hop counts grouped by destination label.
pub fn hops_by_target(measurements: &[TracerouteMeasurement]) -> BTreeMap<String, Vec<u32>> {
    let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for m in measurements {
        if let Some(h) = hops_to_target(m) {
            out.entry(m.dst_name.clone()).or_default().push(h);
        }
    }
    out.values_mut().for_each(|v| v.sort());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Hop, Reply, ReplyAddr};

    fn reply(ip: &str, rtt: f64) -> Reply {
        Reply {
            ip: ReplyAddr::Ip(ip.parse().unwrap()),
            rtt_ms: Some(rtt),
        }
    }

    fn star() -> Reply {
        Reply {
            ip: ReplyAddr::Unresponsive,
            rtt_ms: None,
        }
    }

    fn meas(probe: u64, ts: &str, src: &str, gw: &[f64]) -> TracerouteMeasurement {
        let mut hops = vec![Hop {
            hop_no: 1,
            replies: vec![reply("192.168.1.1", 0.5)],
        }];
        if !gw.is_empty() {
            hops.push(Hop {
                hop_no: 2,
                replies: gw.iter().map(|&r| reply("100.64.0.1", r)).collect(),
            });
        }
        hops.push(Hop {
            hop_no: 3,
            replies: vec![reply("199.7.83.42", gw.first().copied().unwrap_or(40.0) + 5.0)],
        });
        TracerouteMeasurement {
            probe_id: probe,
            timestamp: ts.parse().unwrap(),
            src_addr: src.parse().unwrap(),
            dst_name: "l-root".into(),
            dst_addr: "199.7.83.42".parse().unwrap(),
            hops,
        }
    }

    #[test]
    fn gateway_detection() {
        assert!(verify_satellite_path(
            &meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[30.0]),
            CGN_GATEWAY
        ));
        assert!(!verify_satellite_path(
            &meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[]),
            CGN_GATEWAY
        ));
        let mut m = meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[]);
        m.hops.iter_mut().for_each(|h| h.replies = vec![star(), star()]);
        assert!(!verify_satellite_path(&m, CGN_GATEWAY));
    }

    #[test]
    fn gateway_rtt_median() {
        let m = meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[33.1, 33.4, 32.9]);
        assert_eq!(pop_rtt(&m, CGN_GATEWAY), Ok(33.1));
        let m = meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[80.0]);
        assert_eq!(pop_rtt(&m, CGN_GATEWAY), Ok(80.0));
        let m = meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[]);
        assert_eq!(pop_rtt(&m, CGN_GATEWAY), Err(PathError::NotStarlinkPath(CGN_GATEWAY)));
    }

    #[test]
    fn hostnames() {
        assert_eq!(
            parse_pop_hostname("customer.tkyojpn1.pop.starlinkisp.net").unwrap(),
            "tkyojpn1"
        );
        assert_eq!(
            parse_pop_hostname("CUSTOMER.Tkyojpn1.POP.starlinkisp.NET").unwrap(),
            "tkyojpn1"
        );
        assert!(parse_pop_hostname("example.com").is_err());
        assert!(parse_pop_hostname("customer..pop.starlinkisp.net").is_err());
        assert!(parse_pop_hostname("customer.a.b.pop.starlinkisp.net").is_err());
        assert!(parse_pop_hostname("xcustomer.tkyojpn1.pop.starlinkisp.net").is_err());
    }

    #[test]
    fn hop_counts() {
        let mut m = meas(1, "2022-01-01T00:00:00Z", "1.1.1.1", &[30.0]);
        m.hops[2].hop_no = 5;
        assert_eq!(hops_to_target(&m), Some(5));
        m.hops[2].hop_no = 20;
        assert_eq!(hops_to_target(&m), Some(20));
        m.hops[2].replies = vec![star()];
        assert_eq!(hops_to_target(&m), None);
    }

    fn nz_rdns() -> ReverseDnsMap {
        let mut r = ReverseDnsMap::default();
        r.insert("10.0.0.1".parse().unwrap(), "customer.sydyaus1.pop.starlinkisp.net");
        r.insert("10.0.0.2".parse().unwrap(), "customer.aklnnzl1.pop.starlinkisp.net");
        r
    }

    #[test]
    fn nz_pop_change() {
        let mut ms = Vec::new();
        for d in 1..=30 {
            let (src, rtt) = if d < 12 { ("10.0.0.1", 53.0) } else { ("10.0.0.2", 33.0) };
            ms.push(meas(7, &format!("2022-07-{d:02}T00:00:00Z"), src, &[rtt]));
        }
        ms.reverse();
        let refs: Vec<&TracerouteMeasurement> = ms.iter().collect();
        let tl = build_pop_timeline(&refs, &nz_rdns(), CGN_GATEWAY);
        assert_eq!(tl.len(), 2);
        assert_eq!(tl[0].pop_code, "sydyaus1");
        assert_eq!(tl[0].end, tl[1].start);
        assert_eq!(tl[1].start, "2022-07-12T00:00:00Z".parse::<DateTime<Utc>>().unwrap());
        assert_eq!(tl[0].n_measurements + tl[1].n_measurements, 30);
        let ev = detect_changes(&tl, ShiftConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, ChangeKind::PopChange);
        assert_eq!(ev[0].delta_ms, Some(-20.0));
    }

    #[test]
    fn unknown_pop_kept() {
        let ms = [meas(1, "2022-01-01T00:00:00Z", "9.9.9.9", &[40.0])];
        let refs: Vec<_> = ms.iter().collect();
        let tl = build_pop_timeline(&refs, &nz_rdns(), CGN_GATEWAY);
        assert_eq!(tl.len(), 1);
        assert_eq!(tl[0].pop_code, UNKNOWN_POP);
    }

    #[test]
    fn flat_series_has_no_events() {
        let ms: Vec<_> = (0..200)
            .map(|i| {
                let mut m = meas(1, "2022-01-01T00:00:00Z", "10.0.0.1", &[40.0 + (i % 3) as f64]);
                m.timestamp += chrono::Duration::hours(12 * i);
                m
            })
            .collect();
        let refs: Vec<_> = ms.iter().collect();
        let tl = build_pop_timeline(&refs, &nz_rdns(), CGN_GATEWAY);
        assert!(detect_changes(&tl, ShiftConfig::default()).is_empty());
    }

    #[test]
    fn sustained_shift_detected_once() {
        let ms: Vec<_> = (0..300)
            .map(|i| {
                let mut m = meas(
                    1,
                    "2022-01-01T00:00:00Z",
                    "10.0.0.1",
                    &[if i < 150 { 40.0 } else { 80.0 }],
                );
                m.timestamp += chrono::Duration::hours(i);
                m
            })
            .collect();
        let refs: Vec<_> = ms.iter().collect();
        let tl = build_pop_timeline(&refs, &nz_rdns(), CGN_GATEWAY);
        let ev = detect_changes(&tl, ShiftConfig::default());
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert_eq!(ev[0].kind, ChangeKind::LatencyShift);
        assert_eq!(ev[0].at, ms[150].timestamp);
        assert_eq!(ev[0].delta_ms, Some(40.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn timeline_tiles_span(codes in prop::collection::vec(0u8..3, 1..80)) {
                let mut rdns = ReverseDnsMap::default();
                for c in 0..3u8 {
                    rdns.insert(format!("10.1.0.{c}").parse().unwrap(), format!("customer.pop{c}.pop.starlinkisp.net"));
                }
                let ms: Vec<_> = codes
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let mut m = meas(3, "2022-01-01T00:00:00Z", &format!("10.1.0.{c}"), &[30.0 + *c as f64]);
                        m.timestamp += chrono::Duration::hours(i as i64);
                        m
                    })
                    .collect();
                let refs: Vec<_> = ms.iter().rev().collect();
                let tl = build_pop_timeline(&refs, &rdns, CGN_GATEWAY);
                prop_assert_eq!(tl.iter().map(|a| a.n_measurements).sum::<usize>(), ms.len());
                prop_assert_eq!(tl[0].start, ms[0].timestamp);
                prop_assert_eq!(tl.last().unwrap().end, ms.last().unwrap().timestamp);
                for w in tl.windows(2) {
                    prop_assert_eq!(w[0].end, w[1].start);
                    prop_assert!(w[0].pop_code != w[1].pop_code);
                }
                let changes = detect_changes(&tl, ShiftConfig::default())
                    .into_iter()
                    .filter(|e| e.kind == ChangeKind::PopChange)
                    .count();
                prop_assert_eq!(changes, tl.len() - 1);
            }
        }
    }
}
