//! Seeded generator of labelled synthetic corpora: speed tests with
//! ground-truth dispositions, Starlink traceroute series and BGP snapshots.

mod routes;
mod sessions;
mod traces;

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::bgp::GroundTruthPop;
use crate::catalog::{band_of, Orbit, OrbitBand, BUNDLED_CATALOG_JSON};
use crate::ingest::{AsPathRecord, Asn, CountryCode, SpeedTestSession, TracerouteMeasurement};
use crate::output::{Manifest, OutputDir};

pub use sessions::gen_daily_series;
pub use traces::gen_traceroute_series;

pub const DEFAULT_SPEC_JSON: &str = include_str!("../../data/default_spec.json");
pub const BUNDLED_POP_TABLE_CSV: &str = include_str!("../../data/pop_table.csv");

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("median {median_ms} ms lies outside the {orbit} band")]
    MedianOutsideBand { orbit: Orbit, median_ms: f64 },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("spec json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitWeight {
    pub orbit: Orbit,
    pub weight: f64,
    pub median_ms: f64,
    pub spread_ms: f64,
}

/// Address layout of an operator's IPv4 sessions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrefixPlan {
    /// /24s holding only in-band satellite sessions.
    #[serde(default)]
    pub clean_prefixes: usize,
    #[serde(default)]
    pub sessions_per_clean_prefix: usize,
    /// /24s over which all other sessions, backups included, are spread.
    pub scatter_prefixes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnoProfile {
    pub sno: String,
    /// Sessions cycle through these ASNs.
    pub asns: Vec<Asn>,
    pub orbit_mix: Vec<OrbitWeight>,
    #[serde(default)]
    pub pep: bool,
    /// Median retransmitted-byte fraction; defaults by `pep`.
    #[serde(default)]
    pub retrans_median: Option<f64>,
    /// Median of 95th-percentile jitter over access latency.
    pub jitter_ratio: f64,
    pub n_sessions: usize,
    pub prefix_plan: PrefixPlan,
    #[serde(default)]
    pub backup_link_fraction: f64,
    /// Satellite sessions from IPv6 clients, part of `n_sessions`.
    #[serde(default)]
    pub ipv6_sessions: usize,
}

pub const PEP_RETRANS_MEDIAN: f64 = 0.01;
pub const NON_PEP_RETRANS_MEDIAN: f64 = 0.0874;

impl SnoProfile {
    pub fn retrans_median(&self) -> f64 {
        self.retrans_median.unwrap_or(if self.pep {
            PEP_RETRANS_MEDIAN
        } else {
            NON_PEP_RETRANS_MEDIAN
        })
    }

    fn is_leo_only(&self) -> bool {
        self.orbit_mix.iter().all(|w| w.orbit == Orbit::Leo)
    }

    pub fn n_backup(&self) -> usize {
        (self.n_sessions as f64 * self.backup_link_fraction).round() as usize
    }
}

/// Terrestrial sessions from ASNs the pipeline must reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    /// Operator the ASN belongs to, if catalogued (excluded ASNs).
    #[serde(default)]
    pub sno: Option<String>,
    pub asns: Vec<Asn>,
    pub n_sessions: usize,
    pub median_ms: f64,
    pub spread_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopSegment {
    pub from: DateTime<Utc>,
    pub pop: String,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracerouteTarget {
    pub name: String,
    pub addr: IpAddr,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceroutePlan {
    pub probe_id: u64,
    pub label: String,
    pub start: DateTime<Utc>,
    pub interval_hours: f64,
    pub count: usize,
    pub schedule: Vec<PopSegment>,
    #[serde(default = "default_trace_jitter")]
    pub jitter_ms: f64,
}

fn default_trace_jitter() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerPlan {
    pub asn: Asn,
    /// Omitted from the registry when absent.
    #[serde(default)]
    pub country: Option<CountryCode>,
    /// Extra neighbours given to this peer elsewhere in the snapshot.
    #[serde(default)]
    pub extra_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeeringPlan {
    pub sno: String,
    pub focus_asn: Asn,
    pub peers: Vec<PeerPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPlan {
    pub label: String,
    pub observed_at: DateTime<Utc>,
    pub peerings: Vec<PeeringPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryCities {
    pub country_code: CountryCode,
    pub cities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPlan {
    pub sno: String,
    pub countries: Vec<CountryCities>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BgpPlan {
    pub snapshots: Vec<SnapshotPlan>,
    pub ground_truth: Vec<TruthPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub days: u32,
    #[serde(default = "default_snapshots")]
    pub snapshots_per_session: usize,
    /// Relaxed-filter floor the corpus is labelled against.
    #[serde(default = "default_floor")]
    pub relaxed_floor_ms: f64,
    #[serde(default = "default_backup_median")]
    pub backup_median_ms: f64,
    pub sno_profiles: Vec<SnoProfile>,
    #[serde(default)]
    pub noise: Vec<NoiseSource>,
    #[serde(default)]
    pub traceroute_targets: Vec<TracerouteTarget>,
    #[serde(default)]
    pub traceroute_plans: Vec<TraceroutePlan>,
    #[serde(default)]
    pub bgp_plan: BgpPlan,
}

fn default_snapshots() -> usize {
    10
}

fn default_floor() -> f64 {
    crate::filter::DEFAULT_GLOBAL_FLOOR_MS
}

fn default_backup_median() -> f64 {
    30.0
}

/// Latencies of terrestrial paths are drawn inside this range.
pub(crate) const TERRESTRIAL_RANGE_MS: (f64, f64) = (3.0, 150.0);

impl GeneratorSpec {
    pub fn default_spec() -> Self {
        serde_json::from_str(DEFAULT_SPEC_JSON).expect("bundled generator spec parses")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Copy with every session count multiplied by `factor`, keeping clean
    /// prefixes intact where the operator still has enough sessions.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        let scale = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        for p in &mut s.sno_profiles {
            p.n_sessions = scale(p.n_sessions);
            p.ipv6_sessions = (p.ipv6_sessions as f64 * factor).round() as usize;
            p.prefix_plan.scatter_prefixes = scale(p.prefix_plan.scatter_prefixes);
            let sat = p.n_sessions - p.n_backup() - p.ipv6_sessions;
            let per = p.prefix_plan.sessions_per_clean_prefix.max(1);
            p.prefix_plan.clean_prefixes = p.prefix_plan.clean_prefixes.min(sat / per);
        }
        for n in &mut s.noise {
            n.n_sessions = scale(n.n_sessions);
        }
        s
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.days == 0 {
            return Err(invalid("days must be >= 1"));
        }
        // Up to 20 snapshots the two extreme samples pin both percentiles.
        if !(2..=20).contains(&self.snapshots_per_session) {
            return Err(invalid("snapshots_per_session must lie in 2..=20"));
        }
        if self.sno_profiles.len() > 160 || self.noise.len() > 40 {
            return Err(invalid("at most 160 operator profiles and 40 noise sources"));
        }
        let mut names = BTreeSet::new();
        for p in &self.sno_profiles {
            if !names.insert(p.sno.as_str()) {
                return Err(invalid(format!("duplicate profile {}", p.sno)));
            }
            self.validate_profile(p)?;
        }
        for n in &self.noise {
            if n.asns.is_empty() || n.median_ms <= 0.0 || n.spread_ms < 0.0 {
                return Err(invalid(
                    "noise sources need ASNs, a positive median and non-negative spread",
                ));
            }
        }
        for t in &self.traceroute_targets {
            if t.hops < 3 {
                return Err(invalid(format!("target {} must be at least 3 hops away", t.name)));
            }
        }
        if !self.traceroute_plans.is_empty() && self.traceroute_targets.is_empty() {
            return Err(invalid("traceroute plans need at least one target"));
        }
        if self.traceroute_plans.len() > 255 {
            return Err(invalid("at most 255 traceroute plans"));
        }
        for t in &self.traceroute_plans {
            if t.schedule.is_empty() || t.schedule[0].from > t.start {
                return Err(invalid(format!("probe {}: schedule must cover the start", t.probe_id)));
            }
            if t.schedule.windows(2).any(|w| w[0].from >= w[1].from) {
                return Err(invalid(format!("probe {}: schedule out of order", t.probe_id)));
            }
            if t.schedule.len() > 254 || t.interval_hours.is_nan() || t.interval_hours <= 0.0 || t.jitter_ms < 0.0 {
                return Err(invalid(format!(
                    "probe {}: bad interval, jitter or schedule length",
                    t.probe_id
                )));
            }
            if t.schedule.iter().any(|s| s.rtt_ms.is_nan() || s.rtt_ms <= 0.0) {
                return Err(invalid(format!("probe {}: PoP RTTs must be positive", t.probe_id)));
            }
        }
        let mut countries: BTreeMap<Asn, Option<CountryCode>> = BTreeMap::new();
        for snap in &self.bgp_plan.snapshots {
            for peering in &snap.peerings {
                for peer in &peering.peers {
                    if *countries.entry(peer.asn).or_insert(peer.country) != peer.country {
                        return Err(invalid(format!("AS{} given two registry countries", peer.asn)));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_profile(&self, p: &SnoProfile) -> Result<(), SynthError> {
        let name = &p.sno;
        if p.asns.is_empty() || p.orbit_mix.is_empty() {
            return Err(invalid(format!("{name}: needs ASNs and an orbit mix")));
        }
        let total: f64 = p.orbit_mix.iter().map(|w| w.weight).sum();
        if (total - 1.0).abs() > 1e-9 || p.orbit_mix.iter().any(|w| w.weight < 0.0) {
            return Err(invalid(format!(
                "{name}: orbit weights must be non-negative and sum to 1"
            )));
        }
        for w in &p.orbit_mix {
            if !band_of(w.orbit).contains(w.median_ms) {
                return Err(SynthError::MedianOutsideBand {
                    orbit: w.orbit,
                    median_ms: w.median_ms,
                });
            }
            if w.spread_ms < 0.0 {
                return Err(invalid(format!("{name}: negative spread")));
            }
        }
        if !(0.0..1.0).contains(&p.backup_link_fraction) {
            return Err(invalid(format!("{name}: backup_link_fraction must lie in [0, 1)")));
        }
        if p.is_leo_only() && p.n_backup() > 0 {
            // LEO operators are accepted by ASN alone, so backups cannot be told apart.
            return Err(invalid(format!(
                "{name}: LEO operators cannot carry backup-link sessions"
            )));
        }
        let sat = p.n_sessions - p.n_backup();
        let plan = &p.prefix_plan;
        let clean = plan.clean_prefixes * plan.sessions_per_clean_prefix;
        if plan.clean_prefixes > 0 && !(1..=254).contains(&plan.sessions_per_clean_prefix) {
            return Err(invalid(format!(
                "{name}: sessions_per_clean_prefix must lie in 1..=254"
            )));
        }
        if clean + p.ipv6_sessions > sat {
            return Err(invalid(format!(
                "{name}: clean prefixes and IPv6 exceed satellite sessions"
            )));
        }
        if sat + p.n_backup() > clean + p.ipv6_sessions && plan.scatter_prefixes == 0 {
            return Err(invalid(format!("{name}: scatter_prefixes must be >= 1")));
        }
        if plan.clean_prefixes + plan.scatter_prefixes > 60_000 {
            return Err(invalid(format!("{name}: too many prefixes")));
        }
        if !p.is_leo_only() && plan.clean_prefixes == 0 {
            for w in &p.orbit_mix {
                if w.orbit != Orbit::Leo && band_of(w.orbit).max_ms <= self.relaxed_floor_ms {
                    return Err(invalid(format!(
                        "{name}: {} sessions cannot clear the {} ms floor without clean prefixes",
                        w.orbit, self.relaxed_floor_ms
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Log-normal draw with the given median, redrawn until it lands in
/// `[lo, hi)` after rounding to microseconds. Sigma is `spread / median`.
pub(crate) fn sample_in_range(rng: &mut ChaCha8Rng, median: f64, spread: f64, lo: f64, hi: f64) -> f64 {
    let sigma = (spread / median).max(1e-9);
    let d = LogNormal::new(median.ln(), sigma).expect("finite log-normal parameters");
    for _ in 0..10_000 {
        let v = round3(d.sample(rng));
        if v >= lo && v < hi {
            return v;
        }
    }
    // Only reachable when the range sits far out in a tail.
    round3(median.clamp(lo, hi.min(f64::MAX) - 0.001))
}

/// `n` log-normal latencies with the given median, confined to the orbit's
/// band.
pub fn gen_latency_samples(
    orbit: Orbit,
    median_ms: f64,
    spread_ms: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SynthError> {
    let band: OrbitBand = band_of(orbit);
    if !band.contains(median_ms) {
        return Err(SynthError::MedianOutsideBand { orbit, median_ms });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| sample_in_range(&mut rng, median_ms, spread_ms, band.min_ms, band.max_ms))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Satellite,
    BackupLink,
    Terrestrial,
}

/// Intended disposition of one generated session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub session_id: String,
    pub sno: Option<String>,
    pub expected: Expectation,
    pub cause: Cause,
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    /// Ordered by timestamp, then session id.
    pub sessions: Vec<SpeedTestSession>,
    /// Ordered by session id.
    pub labels: Vec<Label>,
    pub traceroutes: Vec<TracerouteMeasurement>,
    pub rdns_rows: Vec<(IpAddr, String)>,
    pub as_path_snapshots: Vec<(String, Vec<AsPathRecord>)>,
    pub registry_rows: Vec<(Asn, CountryCode)>,
    pub ground_truth: Vec<GroundTruthPop>,
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gen_corpus(spec: &GeneratorSpec) -> Result<SyntheticCorpus, SynthError> {
    spec.validate()?;
    let (sessions, labels) = sessions::gen_sessions(spec);
    let (traceroutes, rdns_rows) = traces::gen_all_traceroutes(spec);
    let (as_path_snapshots, registry_rows, ground_truth) = routes::gen_bgp(spec);
    Ok(SyntheticCorpus {
        sessions,
        labels,
        traceroutes,
        rdns_rows,
        as_path_snapshots,
        registry_rows,
        ground_truth,
    })
}

pub const SPEEDTESTS_FILE: &str = "speedtests.ndjson";
pub const TRACEROUTES_FILE: &str = "traceroutes.ndjson";
pub const LABELS_FILE: &str = "labels.ndjson";
pub const RDNS_FILE: &str = "rdns.csv";
pub const REGISTRY_FILE: &str = "asn_registry.csv";
pub const POP_TABLE_FILE: &str = "pop_table.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth_pops.csv";
pub const CATALOG_FILE: &str = "catalog.json";
pub const AS_PATHS_DIR: &str = "as_paths";

fn ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    out
}

impl SyntheticCorpus {
    pub fn speedtests_ndjson(&self) -> String {
        ndjson(&self.sessions)
    }

    pub fn traceroutes_ndjson(&self) -> String {
        ndjson(&self.traceroutes)
    }

    pub fn rdns(&self) -> crate::ingest::ReverseDnsMap {
        let mut m = crate::ingest::ReverseDnsMap::default();
        for (ip, h) in &self.rdns_rows {
            m.insert(*ip, h.clone());
        }
        m
    }

    pub fn registry(&self) -> crate::ingest::AsnRegistry {
        self.registry_rows.iter().copied().collect()
    }

    pub fn snapshot(&self, label: &str) -> Option<&[AsPathRecord]> {
        self.as_path_snapshots
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_slice())
    }

    /// Writes every corpus file plus `manifest.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Manifest, SynthError> {
        let mut out = OutputDir::new(dir)?;
        out.write(SPEEDTESTS_FILE, self.speedtests_ndjson())?;
        out.write(TRACEROUTES_FILE, self.traceroutes_ndjson())?;
        out.write(LABELS_FILE, ndjson(&self.labels))?;
        let mut rdns = String::from("ip,hostname\n");
        for (ip, h) in &self.rdns_rows {
            rdns.push_str(&format!("{ip},{h}\n"));
        }
        out.write(RDNS_FILE, rdns)?;
        let mut reg = String::from("asn,country_code\n");
        for (asn, cc) in &self.registry_rows {
            reg.push_str(&format!("{asn},{cc}\n"));
        }
        out.write(REGISTRY_FILE, reg)?;
        let mut gt = String::from("sno,city,country_code\n");
        for p in &self.ground_truth {
            gt.push_str(&format!(
                "{},{},{}\n",
                crate::filter::csv_field(&p.sno),
                p.city,
                p.country_code
            ));
        }
        out.write(GROUND_TRUTH_FILE, gt)?;
        out.write(POP_TABLE_FILE, BUNDLED_POP_TABLE_CSV)?;
        out.write(CATALOG_FILE, BUNDLED_CATALOG_JSON)?;
        for (label, paths) in &self.as_path_snapshots {
            let mut text = String::new();
            for p in paths {
                text.push_str(&p.to_line());
                text.push('\n');
            }
            out.write(&format!("{AS_PATHS_DIR}/{label}.txt"), text)?;
        }
        Ok(out.finish()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiling::median;

    #[test]
    fn leo_samples_hit_median() {
        let v = gen_latency_samples(Orbit::Leo, 56.0, 5.0, 10_000, 7).unwrap();
        let m = median(&v).unwrap();
        assert!((54.9..=57.1).contains(&m), "{m}");
        assert!(v.iter().all(|&x| band_of(Orbit::Leo).contains(x)));
    }

    #[test]
    fn empty_and_out_of_band() {
        assert!(gen_latency_samples(Orbit::Leo, 56.0, 5.0, 0, 1).unwrap().is_empty());
        assert!(matches!(
            gen_latency_samples(Orbit::Geo, 300.0, 20.0, 10, 1),
            Err(SynthError::MedianOutsideBand { .. })
        ));
    }

    #[test]
    fn medians_within_two_percent() {
        for (orbit, med, spread) in [
            (Orbit::Leo, 154.0, 15.0),
            (Orbit::Meo, 280.0, 25.0),
            (Orbit::Geo, 673.5, 40.0),
        ] {
            let v = gen_latency_samples(orbit, med, spread, 2000, 11).unwrap();
            let m = median(&v).unwrap();
            assert!((m - med).abs() / med < 0.02, "{orbit}: {m}");
        }
    }

    #[test]
    fn default_spec_is_valid() {
        let spec = GeneratorSpec::default_spec();
        spec.validate().unwrap();
        assert_eq!(spec.sno_profiles.len(), 18);
        spec.scaled(0.05).validate().unwrap();
    }

    #[test]
    fn rejects_bad_weights() {
        let mut spec = GeneratorSpec::default_spec();
        spec.sno_profiles[0].orbit_mix[0].weight = 0.5;
        assert!(spec.validate().is_err());
    }
}
