//! Prefix grouping, strict band filtering, relaxed per-operator thresholds
//! and the end-to-end classification pipeline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::net::{IpAddr, Ipv4Addr};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AsnRole, BandTable, Orbit, OrbitBand, SnoCatalog, SnoEntry};
use crate::ingest::{Asn, SpeedTestSession};
use crate::profiling::access_latency;

/// Fallback relaxed threshold for operators without strict-accepted prefixes.
pub const DEFAULT_GLOBAL_FLOOR_MS: f64 = 527.0;
pub const DEFAULT_MIN_TESTS: usize = 10;

/// An IPv4 /24 network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix24(u32);

impl Prefix24 {
    pub fn of(ip: Ipv4Addr) -> Self {
        Prefix24(u32::from(ip) & 0xffff_ff00)
    }

    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.0)
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        Prefix24::of(ip) == *self
    }
}

impl fmt::Display for Prefix24 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/24", self.network())
    }
}

/// Sessions of one operator sharing a /24.
#[derive(Debug, Clone)]
pub struct PrefixGroup<'a> {
    pub prefix: Prefix24,
    pub sno: String,
    pub sessions: Vec<&'a SpeedTestSession>,
    /// Access latency of each session, same order as `sessions`.
    pub latencies: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Grouping<'a> {
    /// Sorted by `(sno, prefix)`.
    pub groups: Vec<PrefixGroup<'a>>,
    /// IPv6 sessions left out of prefix grouping.
    pub excluded_ipv6: usize,
}

/// Groups `(operator, session)` pairs by operator and /24. IPv6 sessions are
/// counted and dropped.
pub fn group_prefix24<'a, I>(sessions: I) -> Grouping<'a>
where
    I: IntoIterator<Item = (&'a str, &'a SpeedTestSession)>,
{
    let mut map: BTreeMap<(&str, Prefix24), PrefixGroup<'a>> = BTreeMap::new();
    let mut excluded_ipv6 = 0;
    for (sno, session) in sessions {
        let IpAddr::V4(v4) = session.client_ip else {
            excluded_ipv6 += 1;
            continue;
        };
        let prefix = Prefix24::of(v4);
        let g = map.entry((sno, prefix)).or_insert_with(|| PrefixGroup {
            prefix,
            sno: sno.to_string(),
            sessions: Vec::new(),
            latencies: Vec::new(),
        });
        g.sessions.push(session);
        g.latencies.push(access_latency(session));
    }
    Grouping {
        groups: map.into_values().collect(),
        excluded_ipv6,
    }
}

/// True iff the group has at least `min_tests` sessions and every latency
/// lies in one of `bands`.
pub fn strict_filter(group: &PrefixGroup<'_>, bands: &[OrbitBand], min_tests: usize) -> bool {
    latencies_pass_strict(&group.latencies, bands, min_tests)
}

fn latencies_pass_strict(latencies: &[f64], bands: &[OrbitBand], min_tests: usize) -> bool {
    latencies.len() >= min_tests && latencies.iter().all(|&l| bands.iter().any(|b| b.contains(l)))
}

/// Minimum strict-accepted latency, or `global_floor` when there is none.
pub fn relaxed_threshold(strict_accepted_latencies: &[f64], global_floor: f64) -> f64 {
    strict_accepted_latencies
        .iter()
        .copied()
        .reduce(f64::min)
        .unwrap_or(global_floor)
}

/// Per-session acceptance for MEO/GEO operators: latency at or above the
/// operator's threshold. Always false for operators declaring neither.
pub fn relaxed_filter(session: &SpeedTestSession, entry: &SnoEntry, threshold: f64) -> bool {
    declares_high_orbit(entry) && access_latency(session) >= threshold
}

fn declares_high_orbit(entry: &SnoEntry) -> bool {
    entry.orbits.contains(&Orbit::Meo) || entry.orbits.contains(&Orbit::Geo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AcceptedAsnStage,
    AcceptedStrict,
    AcceptedRelaxed,
    Rejected,
}

impl Stage {
    pub fn is_accepted(&self) -> bool {
        *self != Stage::Rejected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownAsn,
    ExcludedAsn,
    NoDeclaredOrbit,
    BelowThreshold,
}

/// Final fate of one input session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disposition {
    pub session_id: String,
    pub sno: Option<String>,
    pub stage: Stage,
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub bands: BandTable,
    pub min_tests: usize,
    pub global_floor_ms: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            bands: BandTable::default(),
            min_tests: DEFAULT_MIN_TESTS,
            global_floor_ms: DEFAULT_GLOBAL_FLOOR_MS,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_tests == 0 {
            return Err("min_tests must be >= 1".into());
        }
        if !(self.global_floor_ms.is_finite() && self.global_floor_ms >= 0.0) {
            return Err(format!(
                "global_floor_ms must be finite and >= 0, got {}",
                self.global_floor_ms
            ));
        }
        Ok(())
    }
}

/// Per-operator outcome.
#[derive(Debug, Clone, Default)]
pub struct SnoOutcome {
    pub orbit_label: String,
    /// Accepted sessions, ordered by session id.
    pub accepted: Vec<SpeedTestSession>,
    pub rejected: usize,
    /// Relaxed threshold; `None` for operators accepted at the ASN stage.
    pub threshold_ms: Option<f64>,
    pub strict_prefixes: Vec<Prefix24>,
}

#[derive(Debug, Clone, Default)]
pub struct ClassifiedCorpus {
    /// Keyed and ordered by operator name.
    pub per_sno: BTreeMap<String, SnoOutcome>,
    /// One per input session, ordered by session id.
    pub dispositions: Vec<Disposition>,
    pub excluded_ipv6: usize,
}

impl ClassifiedCorpus {
    pub fn accepted_count(&self) -> usize {
        self.per_sno.values().map(|o| o.accepted.len()).sum()
    }

    pub fn accepted_sessions(&self) -> impl Iterator<Item = (&str, &SpeedTestSession)> {
        self.per_sno
            .iter()
            .flat_map(|(name, o)| o.accepted.iter().map(move |s| (name.as_str(), s)))
    }

    /// `sno,orbit,accepted,rejected,threshold_ms` rows with header.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("sno,orbit,accepted,rejected,threshold_ms\n");
        for (name, o) in &self.per_sno {
            let threshold = o.threshold_ms.map(|t| format!("{t:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(name),
                o.orbit_label,
                o.accepted.len(),
                o.rejected,
                threshold
            ));
        }
        out
    }

    /// Rebuilds a corpus from dispositions written by an earlier run.
    /// Thresholds and strict prefixes are not recoverable and stay empty.
    pub fn from_dispositions(
        sessions: &[SpeedTestSession],
        dispositions: Vec<Disposition>,
        catalog: &SnoCatalog,
    ) -> Result<Self, String> {
        let by_id: HashMap<&str, &SpeedTestSession> = sessions.iter().map(|s| (s.session_id.as_str(), s)).collect();
        let mut per_sno: BTreeMap<String, SnoOutcome> = BTreeMap::new();
        for d in &dispositions {
            let Some(name) = &d.sno else { continue };
            let entry = catalog
                .entry(name)
                .ok_or_else(|| format!("disposition {} names unknown operator {name:?}", d.session_id))?;
            let outcome = per_sno.entry(name.clone()).or_insert_with(|| SnoOutcome {
                orbit_label: entry.orbit_label(),
                ..SnoOutcome::default()
            });
            if d.stage.is_accepted() {
                let s = by_id
                    .get(d.session_id.as_str())
                    .ok_or_else(|| format!("disposition for unknown session {}", d.session_id))?;
                outcome.accepted.push((*s).clone());
            } else {
                outcome.rejected += 1;
            }
        }
        for o in per_sno.values_mut() {
            o.accepted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        }
        let mut dispositions = dispositions;
        dispositions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(Self {
            per_sno,
            dispositions,
            excluded_ipv6: 0,
        })
    }

    pub fn dispositions_ndjson(&self) -> String {
        let mut out = String::new();
        for d in &self.dispositions {
            out.push_str(&serde_json::to_string(d).expect("disposition serializes"));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs ASN mapping, strict prefix filtering and relaxed filtering over a
/// corpus.
///
/// Sessions of unknown or excluded ASNs are rejected. Operators declaring
/// LEO are accepted at the ASN stage. MEO/GEO operators go through strict
/// /24 filtering against the union of their declared bands, then every
/// remaining session (IPv6 included) is held to the operator's relaxed
/// threshold. The result does not depend on input order.
pub fn run_pipeline(sessions: &[SpeedTestSession], catalog: &SnoCatalog, cfg: &FilterConfig) -> ClassifiedCorpus {
    enum Route<'a> {
        Done(Disposition),
        Filter(&'a SnoEntry),
    }

    let routes: Vec<Route<'_>> = sessions
        .par_iter()
        .map(|s| {
            let reject = |sno: Option<&SnoEntry>, reason| {
                Route::Done(Disposition {
                    session_id: s.session_id.clone(),
                    sno: sno.map(|e| e.name.clone()),
                    stage: Stage::Rejected,
                    reason: Some(reason),
                })
            };
            match catalog.lookup(s.client_asn) {
                None => reject(None, RejectReason::UnknownAsn),
                Some((e, AsnRole::Excluded)) => reject(Some(e), RejectReason::ExcludedAsn),
                Some((e, AsnRole::Subscriber)) if e.orbits.is_empty() => reject(Some(e), RejectReason::NoDeclaredOrbit),
                Some((e, AsnRole::Subscriber)) if e.is_leo() => Route::Done(Disposition {
                    session_id: s.session_id.clone(),
                    sno: Some(e.name.clone()),
                    stage: Stage::AcceptedAsnStage,
                    reason: None,
                }),
                Some((e, AsnRole::Subscriber)) => Route::Filter(e),
            }
        })
        .collect();

    let mut stage_of: Vec<Option<Stage>> = vec![None; sessions.len()];
    let mut dispositions: Vec<Disposition> = Vec::with_capacity(sessions.len());
    let mut candidates: Vec<(usize, &SnoEntry)> = Vec::new();
    for (i, r) in routes.into_iter().enumerate() {
        match r {
            Route::Done(d) => {
                stage_of[i] = Some(d.stage);
                dispositions.push(d);
            }
            Route::Filter(e) => candidates.push((i, e)),
        }
    }

    // Strict stage, keyed by the session's index in the input.
    let entry_of: HashMap<&str, &SnoEntry> = candidates.iter().map(|(_, e)| (e.name.as_str(), *e)).collect();
    // Groups hold references; recover input indices by address.
    let index_of: HashMap<usize, usize> = candidates
        .iter()
        .map(|&(i, _)| (&sessions[i] as *const SpeedTestSession as usize, i))
        .collect();
    let grouping = group_prefix24(candidates.iter().map(|&(i, e)| (e.name.as_str(), &sessions[i])));
    let strict: Vec<(&str, Prefix24, Vec<usize>, Vec<f64>)> = grouping
        .groups
        .par_iter()
        .filter(|g| {
            let bands: Vec<OrbitBand> = entry_of[g.sno.as_str()]
                .orbits
                .iter()
                .map(|&o| cfg.bands.band(o))
                .collect();
            strict_filter(g, &bands, cfg.min_tests)
        })
        .map(|g| {
            let idx = g
                .sessions
                .iter()
                .map(|s| index_of[&(*s as *const SpeedTestSession as usize)])
                .collect();
            (g.sno.as_str(), g.prefix, idx, g.latencies.clone())
        })
        .collect();

    let mut strict_latencies: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut strict_prefixes: BTreeMap<&str, Vec<Prefix24>> = BTreeMap::new();
    for (sno, prefix, idx, lats) in &strict {
        strict_latencies.entry(sno).or_default().extend(lats);
        strict_prefixes.entry(sno).or_default().push(*prefix);
        for &i in idx {
            stage_of[i] = Some(Stage::AcceptedStrict);
        }
    }

    let thresholds: BTreeMap<&str, f64> = entry_of
        .keys()
        .map(|&name| {
            let lats = strict_latencies.get(name).map(Vec::as_slice).unwrap_or(&[]);
            (name, relaxed_threshold(lats, cfg.global_floor_ms))
        })
        .collect();

    // Relaxed stage for everything not strict-accepted.
    let relaxed: Vec<Disposition> = candidates
        .par_iter()
        .map(|&(i, e)| {
            let s = &sessions[i];
            let (stage, reason) = match stage_of[i] {
                Some(stage) => (stage, None),
                None if relaxed_filter(s, e, thresholds[e.name.as_str()]) => (Stage::AcceptedRelaxed, None),
                None => (Stage::Rejected, Some(RejectReason::BelowThreshold)),
            };
            Disposition {
                session_id: s.session_id.clone(),
                sno: Some(e.name.clone()),
                stage,
                reason,
            }
        })
        .collect();
    for (&(i, _), d) in candidates.iter().zip(&relaxed) {
        stage_of[i] = Some(d.stage);
    }
    dispositions.extend(relaxed);

    let mut per_sno: BTreeMap<String, SnoOutcome> = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        let Some((e, _)) = catalog.lookup(s.client_asn) else {
            continue;
        };
        let o = per_sno.entry(e.name.clone()).or_insert_with(|| SnoOutcome {
            orbit_label: e.orbit_label(),
            threshold_ms: thresholds.get(e.name.as_str()).copied(),
            strict_prefixes: strict_prefixes.get(e.name.as_str()).cloned().unwrap_or_default(),
            ..Default::default()
        });
        if stage_of[i].is_some_and(|st| st.is_accepted()) {
            o.accepted.push(s.clone());
        } else {
            o.rejected += 1;
        }
    }
    for o in per_sno.values_mut() {
        o.accepted.par_sort_by(session_order);
        o.strict_prefixes.sort();
    }

    dispositions.par_sort_by(|a, b| {
        a.session_id
            .cmp(&b.session_id)
            .then_with(|| a.sno.cmp(&b.sno))
            .then_with(|| a.stage.cmp(&b.stage))
    });

    ClassifiedCorpus {
        per_sno,
        dispositions,
        excluded_ipv6: grouping.excluded_ipv6,
    }
}

fn session_order(a: &SpeedTestSession, b: &SpeedTestSession) -> std::cmp::Ordering {
    a.session_id
        .cmp(&b.session_id)
        .then_with(|| a.timestamp.cmp(&b.timestamp))
        .then_with(|| a.client_ip.cmp(&b.client_ip))
}

/// Access latencies of every catalogued ASN (subscriber or excluded),
/// sorted ascending per ASN.
pub fn per_asn_latencies(sessions: &[SpeedTestSession], catalog: &SnoCatalog) -> BTreeMap<Asn, Vec<f64>> {
    let mut map: BTreeMap<Asn, Vec<f64>> = BTreeMap::new();
    for s in sessions {
        if catalog.lookup(s.client_asn).is_some() {
            map.entry(s.client_asn).or_default().push(access_latency(s));
        }
    }
    map.values_mut().for_each(|v| v.sort_by(f64::total_cmp));
    map
}

/// Distinct operator names that have at least one accepted session.
pub fn represented_snos(corpus: &ClassifiedCorpus) -> BTreeSet<&str> {
    corpus
        .per_sno
        .iter()
        .filter(|(_, o)| !o.accepted.is_empty())
        .map(|(n, _)| n.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::band_of;
    use crate::ingest::{Direction, TcpSnapshot};

    fn session(id: &str, ip: &str, asn: Asn, latency: f64) -> SpeedTestSession {
        SpeedTestSession {
            session_id: id.into(),
            timestamp: "2022-06-01T00:00:00Z".parse().unwrap(),
            client_ip: ip.parse().unwrap(),
            client_asn: asn,
            direction: Direction::Download,
            snapshots: vec![TcpSnapshot {
                t_offset_ms: 0.0,
                rtt_ms: latency,
                rtt_var_ms: 1.0,
                bytes_sent: 100,
                bytes_retrans: 0,
                delivery_rate_bps: None,
            }],
        }
    }

    fn group_of(lats: &[f64]) -> Vec<SpeedTestSession> {
        lats.iter()
            .enumerate()
            .map(|(i, &l)| session(&format!("s{i}"), &format!("100.1.2.{}", i % 250 + 1), 13955, l))
            .collect()
    }

    fn single_group(sessions: &[SpeedTestSession]) -> PrefixGroup<'_> {
        let mut g = group_prefix24(sessions.iter().map(|s| ("Viasat", s)));
        assert_eq!(g.groups.len(), 1);
        g.groups.remove(0)
    }

    #[test]
    fn same_and_different_24() {
        let a = session("a", "100.1.2.3", 1, 600.0);
        let b = session("b", "100.1.2.250", 1, 600.0);
        let c = session("c", "100.1.3.3", 1, 600.0);
        let g = group_prefix24([("X", &a), ("X", &b)]);
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].prefix.to_string(), "100.1.2.0/24");
        let g = group_prefix24([("X", &a), ("X", &c)]);
        assert_eq!(g.groups.len(), 2);
    }

    #[test]
    fn ipv6_excluded_and_counted() {
        let mut v: Vec<SpeedTestSession> = (0..5)
            .map(|i| session(&format!("v6-{i}"), &format!("2001:db8::{i}"), 1, 600.0))
            .collect();
        v.push(session("v4", "100.1.2.3", 1, 600.0));
        let g = group_prefix24(v.iter().map(|s| ("X", s)));
        assert_eq!(g.excluded_ipv6, 5);
        assert_eq!(g.groups.len(), 1);
    }

    #[test]
    fn strict_filter_cases() {
        let geo = [band_of(Orbit::Geo)];
        let v = group_of(&[600.0, 610.0, 620.0, 630.0, 640.0, 650.0, 660.0, 670.0, 680.0, 700.0]);
        assert!(strict_filter(&single_group(&v), &geo, 10));

        let v = group_of(&[600.0; 9]);
        assert!(!strict_filter(&single_group(&v), &geo, 10));

        let mut lats = vec![650.0; 99];
        lats.push(70.6);
        let v = group_of(&lats);
        assert!(!strict_filter(&single_group(&v), &geo, 10));
    }

    #[test]
    fn thresholds() {
        assert_eq!(relaxed_threshold(&[548.9, 600.0, 700.0], 527.0), 548.9);
        assert_eq!(relaxed_threshold(&[], DEFAULT_GLOBAL_FLOOR_MS), 527.0);
        assert_eq!(relaxed_threshold(&[600.0, 550.0, 700.0], 527.0), 550.0);
    }

    #[test]
    fn relaxed_cases() {
        let cat = SnoCatalog::bundled();
        let viasat = cat.entry("Viasat").unwrap();
        assert!(relaxed_filter(&session("a", "1.1.1.1", 13955, 600.0), viasat, 548.9));
        assert!(!relaxed_filter(&session("b", "1.1.1.1", 13955, 500.0), viasat, 548.9));
        assert!(!relaxed_filter(&session("c", "1.1.1.1", 13955, 30.0), viasat, 548.9));
        let starlink = cat.entry("Starlink").unwrap();
        assert!(!relaxed_filter(&session("d", "1.1.1.1", 14593, 600.0), starlink, 0.0));
    }

    #[test]
    fn excluded_only_corpus() {
        let cat = SnoCatalog::bundled();
        let v: Vec<_> = (0..20)
            .map(|i| session(&format!("e{i:02}"), "100.9.9.9", 27277, 15.0))
            .collect();
        let out = run_pipeline(&v, &cat, &FilterConfig::default());
        assert_eq!(out.accepted_count(), 0);
        assert_eq!(out.dispositions.len(), 20);
        assert!(out
            .dispositions
            .iter()
            .all(|d| d.stage == Stage::Rejected && d.reason == Some(RejectReason::ExcludedAsn)));
    }

    #[test]
    fn pipeline_stages() {
        let cat = SnoCatalog::bundled();
        let mut v = Vec::new();
        // Clean Viasat /24: 10 tests, min 560.
        for i in 0..10 {
            v.push(session(
                &format!("clean-{i}"),
                &format!("45.232.114.{}", i + 1),
                13955,
                560.0 + i as f64,
            ));
        }
        // Mixed Viasat /24 with a backup-link session.
        v.push(session("mixed-sat", "45.232.115.1", 13955, 620.0));
        v.push(session("mixed-low", "45.232.115.2", 13955, 555.0));
        v.push(session("mixed-terr", "45.232.115.3", 13955, 30.0));
        // Kacific: no strict prefix, falls back to the global floor.
        v.push(session("kacific-hi", "1.2.3.4", 135409, 600.0));
        v.push(session("kacific-lo", "1.2.3.5", 135409, 520.0));
        v.push(session("v6", "2001:db8::1", 13955, 700.0));
        v.push(session("starlink", "98.97.0.1", 14593, 40.0));
        v.push(session("unknown", "8.8.8.8", 15169, 10.0));
        let out = run_pipeline(&v, &cat, &FilterConfig::default());
        let stage = |id: &str| out.dispositions.iter().find(|d| d.session_id == id).unwrap().stage;
        assert_eq!(stage("clean-0"), Stage::AcceptedStrict);
        assert_eq!(stage("mixed-sat"), Stage::AcceptedRelaxed);
        assert_eq!(stage("mixed-low"), Stage::Rejected);
        assert_eq!(stage("mixed-terr"), Stage::Rejected);
        assert_eq!(stage("kacific-hi"), Stage::AcceptedRelaxed);
        assert_eq!(stage("kacific-lo"), Stage::Rejected);
        assert_eq!(stage("v6"), Stage::AcceptedRelaxed);
        assert_eq!(stage("starlink"), Stage::AcceptedAsnStage);
        assert_eq!(stage("unknown"), Stage::Rejected);
        assert_eq!(out.per_sno["Viasat"].threshold_ms, Some(560.0));
        assert_eq!(out.per_sno["Kacific"].threshold_ms, Some(527.0));
        assert_eq!(out.per_sno["Viasat"].strict_prefixes.len(), 1);
        assert_eq!(out.excluded_ipv6, 1);
        assert_eq!(out.dispositions.len(), v.len());
        let ids: Vec<_> = out.dispositions.iter().map(|d| d.session_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(
            out.summary_csv().contains("Viasat,GEO,12,2,560.000\n"),
            "{}",
            out.summary_csv()
        );
    }

    #[test]
    fn ses_uses_union_of_bands() {
        let cat = SnoCatalog::bundled();
        let v: Vec<_> = (0..10)
            .map(|i| {
                session(
                    &format!("s{i}"),
                    &format!("5.6.7.{}", i + 1),
                    12684,
                    if i < 5 { 280.0 } else { 700.0 },
                )
            })
            .collect();
        let out = run_pipeline(&v, &cat, &FilterConfig::default());
        assert!(out.dispositions.iter().all(|d| d.stage == Stage::AcceptedStrict));
        assert_eq!(out.per_sno["SES"].threshold_ms, Some(280.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Small corpus over a handful of prefixes and operators, mixing
        /// clean, dirty and terrestrial latencies.
        fn corpus() -> impl Strategy<Value = Vec<SpeedTestSession>> {
            let asns = prop::sample::select(vec![13955u32, 7155, 12684, 135409, 14593, 27277, 15169]);
            let lat = prop_oneof![10.0f64..60.0, 250.0f64..320.0, 520.0f64..800.0];
            prop::collection::vec((asns, 0u8..4, 1u8..30, lat, any::<bool>()), 0..80).prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (asn, net, host, l, v6))| {
                        let ip = if v6 && i % 5 == 0 {
                            format!("2001:db8::{i:x}")
                        } else {
                            format!("10.0.{net}.{host}")
                        };
                        session(&format!("p{i:04}"), &ip, asn, (l * 1000.0).round() / 1000.0)
                    })
                    .collect()
            })
        }

        fn stages(out: &ClassifiedCorpus) -> Vec<(String, Stage)> {
            out.dispositions
                .iter()
                .map(|d| (d.session_id.clone(), d.stage))
                .collect()
        }

        proptest! {
            #[test]
            fn partition_and_order_invariance(v in corpus(), seed in any::<u64>()) {
                let cat = SnoCatalog::bundled();
                let cfg = FilterConfig { min_tests: 3, ..Default::default() };
                let out = run_pipeline(&v, &cat, &cfg);
                prop_assert_eq!(out.dispositions.len(), v.len());
                let accepted = out.dispositions.iter().filter(|d| d.stage.is_accepted()).count();
                prop_assert_eq!(accepted, out.accepted_count());
                let rejected: usize = out.per_sno.values().map(|o| o.rejected).sum();
                let unknown = out.dispositions.iter().filter(|d| d.sno.is_none()).count();
                prop_assert_eq!(accepted + rejected + unknown, v.len());

                let mut shuffled = v.clone();
                let n = shuffled.len();
                if n > 1 {
                    let mut x = seed;
                    for i in (1..n).rev() {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        shuffled.swap(i, (x >> 33) as usize % (i + 1));
                    }
                }
                prop_assert_eq!(stages(&out), stages(&run_pipeline(&shuffled, &cat, &cfg)));
            }

            #[test]
            fn strict_is_subset_of_relaxed(v in corpus()) {
                let cat = SnoCatalog::bundled();
                let cfg = FilterConfig { min_tests: 3, ..Default::default() };
                let out = run_pipeline(&v, &cat, &cfg);
                for s in &v {
                    let d = out.dispositions.iter().find(|d| d.session_id == s.session_id).unwrap();
                    if d.stage == Stage::AcceptedStrict {
                        let e = cat.entry(d.sno.as_deref().unwrap()).unwrap();
                        let t = out.per_sno[&e.name].threshold_ms.unwrap();
                        prop_assert!(relaxed_filter(s, e, t));
                    }
                }
            }

            #[test]
            fn raising_floor_never_accepts_more(v in corpus(), a in 0.0f64..900.0, b in 0.0f64..900.0) {
                let cat = SnoCatalog::bundled();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let at = |floor| {
                    let cfg = FilterConfig { min_tests: 3, global_floor_ms: floor, ..Default::default() };
                    run_pipeline(&v, &cat, &cfg)
                        .dispositions
                        .into_iter()
                        .filter(|d| d.stage.is_accepted())
                        .map(|d| d.session_id)
                        .collect::<BTreeSet<_>>()
                };
                prop_assert!(at(hi).is_subset(&at(lo)));
            }
        }

        /// Every assignment of in-band / out-of-band to groups of up to 12
        /// sessions, checked against a direct reading of the rule.
        #[test]
        fn strict_filter_exhaustive_small_groups() {
            let geo = [band_of(Orbit::Geo)];
            for n in 0..=12usize {
                for mask in 0u32..(1 << n) {
                    let lats: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 650.0 } else { 120.0 }).collect();
                    let expected = n >= 10 && mask == (1 << n) - 1;
                    let v = group_of(&lats);
                    let got = if n == 0 {
                        latencies_pass_strict(&[], &geo, 10)
                    } else {
                        strict_filter(&single_group(&v), &geo, 10)
                    };
                    assert_eq!(got, expected, "n={n} mask={mask:b}");
                }
            }
        }
    }
}
