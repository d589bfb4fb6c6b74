//! Per-session performance metrics and group summaries for plotting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{BandTable, Orbit, SnoCatalog, SnoEntry};
use crate::filter::{csv_field, ClassifiedCorpus};
use crate::ingest::SpeedTestSession;
use crate::profiling::{access_latency, percentile, percentile_sorted, StatsError};

const JITTER_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub latency_p5_ms: f64,
    pub jitter_p95_ms: f64,
    pub jitter_variability: f64,
    /// `None` when the session sent no bytes.
    pub retrans_fraction: Option<f64>,
    pub day: NaiveDate,
}

pub fn session_metrics(session: &SpeedTestSession) -> SessionMetrics {
    let latency_p5_ms = access_latency(session);
    let jitter_p95_ms =
        percentile(&session.jitter_samples(), JITTER_QUANTILE).expect("validated session has finite jitter samples");
    let last = session.final_snapshot().expect("validated session has snapshots");
    let retrans_fraction = (last.bytes_sent > 0).then(|| last.bytes_retrans as f64 / last.bytes_sent as f64);
    SessionMetrics {
        session_id: session.session_id.clone(),
        latency_p5_ms,
        jitter_p95_ms,
        jitter_variability: jitter_p95_ms / latency_p5_ms,
        retrans_fraction,
        day: session.timestamp.date_naive(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricField {
    LatencyP5Ms,
    JitterP95Ms,
    JitterVariability,
    RetransFraction,
}

impl MetricField {
    pub const ALL: [MetricField; 4] = [
        MetricField::LatencyP5Ms,
        MetricField::JitterP95Ms,
        MetricField::JitterVariability,
        MetricField::RetransFraction,
    ];

    pub fn get(&self, m: &SessionMetrics) -> Option<f64> {
        match self {
            MetricField::LatencyP5Ms => Some(m.latency_p5_ms),
            MetricField::JitterP95Ms => Some(m.jitter_p95_ms),
            MetricField::JitterVariability => Some(m.jitter_variability),
            MetricField::RetransFraction => m.retrans_fraction,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricField::LatencyP5Ms => "latency_p5_ms",
            MetricField::JitterP95Ms => "jitter_p95_ms",
            MetricField::JitterVariability => "jitter_variability",
            MetricField::RetransFraction => "retrans_fraction",
        }
    }
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyPoint {
    pub day: NaiveDate,
    pub median: f64,
    pub n: usize,
}

/// Median of `field` per UTC day, ascending by day. Sessions where the
/// field is undefined are skipped; days without values are omitted.
pub fn daily_median_series(metrics: &[SessionMetrics], field: MetricField) -> Vec<DailyPoint> {
    let mut by_day: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for m in metrics {
        if let Some(v) = field.get(m) {
            by_day.entry(m.day).or_default().push(v);
        }
    }
    by_day
        .into_iter()
        .map(|(day, mut v)| {
            v.sort_by(f64::total_cmp);
            DailyPoint {
                day,
                median: percentile_sorted(&v, 0.5),
                n: v.len(),
            }
        })
        .collect()
}

/// 95th percentile of absolute day-over-day changes of the daily medians,
/// relative to the median of the daily medians. `None` with fewer than two
/// days or a zero series median.
pub fn daily_variation(series: &[DailyPoint]) -> Option<f64> {
    if series.len() < 2 {
        return None;
    }
    let deltas: Vec<f64> = series.windows(2).map(|w| (w[1].median - w[0].median).abs()).collect();
    let medians: Vec<f64> = series.iter().map(|p| p.median).collect();
    let center = percentile(&medians, 0.5).ok()?;
    if center == 0.0 {
        return None;
    }
    Some(percentile(&deltas, 0.95).ok()? / center.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub n: usize,
    /// `(value, fraction of samples <= value)` at every distinct value.
    pub cdf_points: Vec<(f64, f64)>,
}

pub fn summarize(values: &[f64]) -> Result<DistributionSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut cdf_points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        if i + 1 == n || s[i + 1] != v {
            cdf_points.push((v, (i + 1) as f64 / n as f64));
        }
    }
    Ok(DistributionSummary {
        p5: percentile_sorted(&s, 0.05),
        p25: percentile_sorted(&s, 0.25),
        p50: percentile_sorted(&s, 0.5),
        p75: percentile_sorted(&s, 0.75),
        p95: percentile_sorted(&s, 0.95),
        n,
        cdf_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Orbit,
    Sno,
    PepClass,
}

impl FromStr for Grouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "orbit" => Ok(Grouping::Orbit),
            "sno" => Ok(Grouping::Sno),
            "pep_class" => Ok(Grouping::PepClass),
            _ => Err(format!("unknown grouping {s:?}")),
        }
    }
}

/// Orbit a session of `entry` is attributed to. Single-orbit operators map
/// directly; multi-orbit ones use the declared band holding the latency.
pub fn session_orbit(entry: &SnoEntry, latency_ms: f64, bands: &BandTable) -> Option<Orbit> {
    match entry.orbits.len() {
        0 => None,
        1 => entry.orbits.first().copied(),
        _ => {
            let by_band = bands.orbit_of(latency_ms);
            by_band
                .filter(|o| entry.orbits.contains(o))
                .or_else(|| entry.orbits.last().copied())
        }
    }
}

fn group_label(entry: &SnoEntry, m: &SessionMetrics, grouping: Grouping, bands: &BandTable) -> Option<String> {
    match grouping {
        Grouping::Sno => Some(entry.name.clone()),
        Grouping::Orbit => session_orbit(entry, m.latency_p5_ms, bands).map(|o| o.as_str().to_string()),
        Grouping::PepClass => session_orbit(entry, m.latency_p5_ms, bands).map(|o| match o {
            Orbit::Geo if entry.pep => "GEO (PEP)".to_string(),
            Orbit::Geo => "GEO (others)".to_string(),
            o => o.as_str().to_string(),
        }),
    }
}

/// Metrics of every accepted session, bucketed by group label. Buckets are
/// ordered by session id.
pub fn group_metrics(
    corpus: &ClassifiedCorpus,
    catalog: &SnoCatalog,
    grouping: Grouping,
    bands: &BandTable,
) -> BTreeMap<String, Vec<SessionMetrics>> {
    let labelled: Vec<(String, SessionMetrics)> = corpus
        .accepted_sessions()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(sno, s)| {
            let entry = catalog.entry(sno)?;
            let m = session_metrics(s);
            group_label(entry, &m, grouping, bands).map(|g| (g, m))
        })
        .collect();
    let mut out: BTreeMap<String, Vec<SessionMetrics>> = BTreeMap::new();
    for (g, m) in labelled {
        out.entry(g).or_default().push(m);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    }
    out
}

/// Summary of `field` per group; groups where the field is never defined
/// are dropped.
pub fn summarize_groups(
    grouped: &BTreeMap<String, Vec<SessionMetrics>>,
    field: MetricField,
) -> BTreeMap<String, DistributionSummary> {
    grouped
        .iter()
        .filter_map(|(g, ms)| {
            let vals: Vec<f64> = ms.iter().filter_map(|m| field.get(m)).collect();
            summarize(&vals).ok().map(|s| (g.clone(), s))
        })
        .collect()
}

pub fn compare_groups(
    corpus: &ClassifiedCorpus,
    catalog: &SnoCatalog,
    grouping: Grouping,
    field: MetricField,
) -> BTreeMap<String, DistributionSummary> {
    summarize_groups(&group_metrics(corpus, catalog, grouping, &BandTable::default()), field)
}

fn num(v: f64) -> String {
    // Shortest round-trip representation keeps outputs stable and exact.
    format!("{v}")
}

pub fn boxstats_csv(summaries: &BTreeMap<String, DistributionSummary>) -> String {
    let mut out = String::from("group,p5,p25,p50,p75,p95,n\n");
    for (g, s) in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(g),
            num(s.p5),
            num(s.p25),
            num(s.p50),
            num(s.p75),
            num(s.p95),
            s.n
        ));
    }
    out
}

pub fn cdf_csv(summaries: &BTreeMap<String, DistributionSummary>) -> String {
    let mut out = String::from("group,value,fraction\n");
    for (g, s) in summaries {
        let g = csv_field(g);
        for (v, f) in &s.cdf_points {
            out.push_str(&format!("{g},{},{}\n", num(*v), num(*f)));
        }
    }
    out
}

pub fn daily_csv(series: &BTreeMap<String, Vec<DailyPoint>>) -> String {
    let mut out = String::from("group,date,median\n");
    for (g, pts) in series {
        let g = csv_field(g);
        for p in pts {
            out.push_str(&format!("{g},{},{}\n", p.day, num(p.median)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Direction, TcpSnapshot};
    use chrono::{DateTime, Utc};
    use proptest::prelude::*;

    fn session_at(ts: &str, rtts: &[f64], vars: &[f64], sent: u64, retrans: u64) -> SpeedTestSession {
        let n = rtts.len();
        SpeedTestSession {
            session_id: ts.into(),
            timestamp: ts.parse::<DateTime<Utc>>().unwrap(),
            client_ip: "192.0.2.1".parse().unwrap(),
            client_asn: 14593,
            direction: Direction::Download,
            snapshots: (0..n)
                .map(|i| TcpSnapshot {
                    t_offset_ms: i as f64 * 100.0,
                    rtt_ms: rtts[i],
                    rtt_var_ms: vars[i],
                    bytes_sent: sent * (i as u64 + 1) / n as u64,
                    bytes_retrans: retrans * (i as u64 + 1) / n as u64,
                    delivery_rate_bps: None,
                })
                .collect(),
        }
    }

    #[test]
    fn leo_variability_half() {
        // rtt p5 = 56 and rttvar p95 = 28 by construction.
        let rtts = [56.0, 56.0, 60.0, 62.0, 64.0, 66.0, 70.0, 71.0, 75.0, 80.0];
        let vars = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 28.0, 28.0];
        let m = session_metrics(&session_at("2022-01-01T00:00:00Z", &rtts, &vars, 10_000, 0));
        assert_eq!(m.latency_p5_ms, 56.0);
        assert_eq!(m.jitter_p95_ms, 28.0);
        assert_eq!(m.jitter_variability, 0.5);
        assert_eq!(m.retrans_fraction, Some(0.0));
    }

    #[test]
    fn retrans_fraction_geo_others() {
        let m = session_metrics(&session_at("2022-01-01T00:00:00Z", &[600.0; 4], &[5.0; 4], 10_000, 874));
        assert!((m.retrans_fraction.unwrap() - 0.0874).abs() < 1e-15);
    }

    #[test]
    fn zero_bytes_is_undefined() {
        let m = session_metrics(&session_at("2022-01-01T00:00:00Z", &[600.0; 2], &[5.0; 2], 0, 0));
        assert_eq!(m.retrans_fraction, None);
        assert_eq!(MetricField::RetransFraction.get(&m), None);
    }

    #[test]
    fn daily_buckets() {
        let ms: Vec<SessionMetrics> = [
            ("2022-03-01T01:00:00Z", 10.0),
            ("2022-03-01T05:00:00Z", 30.0),
            ("2022-03-01T09:00:00Z", 20.0),
        ]
        .iter()
        .map(|(t, l)| session_metrics(&session_at(t, &[*l], &[1.0], 1, 0)))
        .collect();
        let s = daily_median_series(&ms, MetricField::LatencyP5Ms);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].median, 20.0);
        assert_eq!(s[0].n, 3);

        let ms: Vec<SessionMetrics> = ["2022-03-01T23:59:00Z", "2022-03-02T00:01:00Z"]
            .iter()
            .map(|t| session_metrics(&session_at(t, &[50.0], &[1.0], 1, 0)))
            .collect();
        assert_eq!(daily_median_series(&ms, MetricField::LatencyP5Ms).len(), 2);
    }

    #[test]
    fn variation_of_alternating_series() {
        let day0 = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let series: Vec<DailyPoint> = (0..365)
            .map(|i| DailyPoint {
                day: day0 + chrono::Days::new(i),
                median: if i % 2 == 0 { 100.0 } else { 103.1 },
                n: 1,
            })
            .collect();
        let v = daily_variation(&series).unwrap();
        // median of the medians is 100.0 (183 lows vs 182 highs)
        assert!((v - 0.031).abs() < 1e-12, "{v}");
        assert_eq!(daily_variation(&series[..1]), None);
    }

    #[test]
    fn summarize_basics() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.p50, 3.0);
        assert_eq!(s.n, 5);
        assert_eq!(s.cdf_points.last().unwrap().1, 1.0);
        assert_eq!(summarize(&[]), Err(StatsError::Empty));
        let s = summarize(&[2.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.cdf_points, vec![(1.0, 1.0 / 3.0), (2.0, 1.0)]);
    }

    #[test]
    fn ses_sessions_split_by_band() {
        let cat = SnoCatalog::bundled();
        let ses = cat.entry("SES").unwrap();
        let b = BandTable::default();
        assert_eq!(session_orbit(ses, 280.0, &b), Some(Orbit::Meo));
        assert_eq!(session_orbit(ses, 700.0, &b), Some(Orbit::Geo));
        let viasat = cat.entry("Viasat").unwrap();
        assert_eq!(session_orbit(viasat, 30.0, &b), Some(Orbit::Geo));
    }

    #[test]
    fn csv_shapes() {
        let mut m = BTreeMap::new();
        m.insert("LEO".to_string(), summarize(&[1.0, 2.0]).unwrap());
        assert_eq!(
            boxstats_csv(&m),
            "group,p5,p25,p50,p75,p95,n\nLEO,1.05,1.25,1.5,1.75,1.95,2\n"
        );
        assert_eq!(cdf_csv(&m), "group,value,fraction\nLEO,1,0.5\nLEO,2,1\n");
    }

    fn oracle_quantile(v: &[f64], q: f64) -> f64 {
        let mut s = v.to_vec();
        // bubble sort, deliberately unrelated to the library path
        for i in 0..s.len() {
            for j in 0..s.len() - 1 - i {
                if s[j] > s[j + 1] {
                    s.swap(j, j + 1);
                }
            }
        }
        let r = q * (s.len() - 1) as f64;
        let (a, b) = (r.floor() as usize, r.ceil() as usize);
        s[a] * (1.0 - (r - a as f64)) + s[b] * (r - a as f64)
    }

    proptest! {
        #[test]
        fn summarize_matches_oracle(v in prop::collection::vec(0f64..1000.0, 1..=100)) {
            let s = summarize(&v).unwrap();
            for (got, q) in [(s.p5, 0.05), (s.p25, 0.25), (s.p50, 0.5), (s.p75, 0.75), (s.p95, 0.95)] {
                let want = oracle_quantile(&v, q);
                prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
            }
            prop_assert!(s.p5 <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.p95);
            prop_assert!(s.cdf_points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(s.cdf_points.last().unwrap().1, 1.0);
        }

        #[test]
        fn variability_scale_invariant(
            rows in prop::collection::vec((1f64..800.0, 0f64..100.0), 1..40),
            c in 0.01f64..100.0,
        ) {
            let rtts: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let vars: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let a = session_metrics(&session_at("2022-01-01T00:00:00Z", &rtts, &vars, 100, 1));
            let rtts_c: Vec<f64> = rtts.iter().map(|x| x * c).collect();
            let vars_c: Vec<f64> = vars.iter().map(|x| x * c).collect();
            let b = session_metrics(&session_at("2022-01-01T00:00:00Z", &rtts_c, &vars_c, 100, 1));
            prop_assert!((a.jitter_variability - b.jitter_variability).abs() <= 1e-9 * a.jitter_variability.max(1e-12));
        }

        #[test]
        fn daily_counts_preserved(hours in prop::collection::vec(0i64..24 * 30, 0..200)) {
            let base: DateTime<Utc> = "2022-01-01T00:00:00Z".parse().unwrap();
            let ms: Vec<SessionMetrics> = hours
                .iter()
                .map(|h| {
                    let ts = (base + chrono::Duration::hours(*h)).to_rfc3339();
                    session_metrics(&session_at(&ts, &[50.0 + *h as f64], &[1.0], 1, 0))
                })
                .collect();
            let total: usize = daily_median_series(&ms, MetricField::LatencyP5Ms).iter().map(|p| p.n).sum();
            prop_assert_eq!(total, ms.len());
        }
    }
}
