//! Peering graphs around an operator's ASNs, registry-country footprint,
//! coverage against known PoP locations and snapshot diffs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::SnoEntry;
use crate::ingest::{AsPathRecord, Asn, AsnRegistry, CountryCode, TableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BgpError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("snapshots are for different operators: {0} vs {1}")]
    FocusMismatch(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Peer {
    pub asn: Asn,
    /// Distinct neighbours of this AS across the whole snapshot.
    pub degree: usize,
    pub country_code: CountryCode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeeringGraph {
    pub sno: String,
    pub focus_asns: BTreeSet<Asn>,
    pub peers: BTreeMap<Asn, Peer>,
    /// `(focus_asn, peer_asn)` pairs.
    pub edges: BTreeSet<(Asn, Asn)>,
    /// Latest observation time among the input paths.
    pub snapshot_at: Option<DateTime<Utc>>,
}

type Adjacency = HashMap<Asn, HashSet<Asn>>;

fn adjacency(paths: &[AsPathRecord]) -> Adjacency {
    paths
        .par_iter()
        .fold(Adjacency::new, |mut adj, rec| {
            let mut hops = rec.as_path.clone();
            hops.dedup();
            for w in hops.windows(2) {
                if w[0] != w[1] {
                    adj.entry(w[0]).or_default().insert(w[1]);
                    adj.entry(w[1]).or_default().insert(w[0]);
                }
            }
            adj
        })
        .reduce(Adjacency::new, |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().extend(v);
            }
            a
        })
}

/// Peering graph of one operator. Focus ASNs are the operator's subscriber
/// and excluded ASNs; any AS adjacent to one of them on any path, other than
/// another focus ASN, is a peer.
pub fn build_graph(paths: &[AsPathRecord], sno: &SnoEntry, registry: &AsnRegistry) -> PeeringGraph {
    let focus_asns: BTreeSet<Asn> = sno.all_asns().collect();
    let adj = adjacency(paths);
    let mut peers = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for &f in &focus_asns {
        let Some(neigh) = adj.get(&f) else { continue };
        for &p in neigh {
            if focus_asns.contains(&p) {
                continue;
            }
            edges.insert((f, p));
            peers.entry(p).or_insert_with(|| Peer {
                asn: p,
                degree: adj[&p].len(),
                country_code: registry.country(p),
            });
        }
    }
    PeeringGraph {
        sno: sno.name.clone(),
        focus_asns,
        peers,
        edges,
        snapshot_at: paths.iter().map(|p| p.observed_at).max(),
    }
}

/// Registry countries of all peers, unknown excluded.
pub fn infer_countries(graph: &PeeringGraph) -> BTreeSet<CountryCode> {
    graph
        .peers
        .values()
        .map(|p| p.country_code)
        .filter(|c| !c.is_unknown())
        .collect()
}

/// A known PoP location of an operator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthPop {
    pub sno: String,
    pub city: String,
    pub country_code: CountryCode,
}

/// Reads `sno,city,country_code` rows (with header).
pub fn read_ground_truth<R: Read>(src: R) -> Result<Vec<GroundTruthPop>, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<GroundTruthPop>().enumerate() {
        out.push(rec.map_err(|e| TableError::Malformed {
            table: "ground-truth",
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub country_fraction: f64,
    pub city_fraction: f64,
    pub countries_found: usize,
    pub countries_total: usize,
}

/// Share of ground-truth countries inferred, and share of ground-truth
/// cities located in an inferred country. Cities are distinct
/// `(city, country)` pairs.
pub fn coverage_score(inferred: &BTreeSet<CountryCode>, truth: &[GroundTruthPop]) -> Result<Coverage, BgpError> {
    if truth.is_empty() {
        return Err(BgpError::EmptyGroundTruth);
    }
    let countries: BTreeSet<CountryCode> = truth.iter().map(|p| p.country_code).collect();
    let cities: BTreeSet<(&str, CountryCode)> = truth.iter().map(|p| (p.city.as_str(), p.country_code)).collect();
    let found = countries.intersection(inferred).count();
    let covered = cities.iter().filter(|(_, c)| inferred.contains(c)).count();
    Ok(Coverage {
        country_fraction: found as f64 / countries.len() as f64,
        city_fraction: covered as f64 / cities.len() as f64,
        countries_found: found,
        countries_total: countries.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SnapshotDiff {
    pub sno: String,
    pub added_peers: BTreeSet<Asn>,
    pub removed_peers: BTreeSet<Asn>,
    pub added_countries: BTreeSet<CountryCode>,
    pub removed_countries: BTreeSet<CountryCode>,
}

impl SnapshotDiff {
    pub fn is_empty(&self) -> bool {
        self.added_peers.is_empty()
            && self.removed_peers.is_empty()
            && self.added_countries.is_empty()
            && self.removed_countries.is_empty()
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("diff serializes") + "\n"
    }
}

pub fn snapshot_diff(older: &PeeringGraph, newer: &PeeringGraph) -> Result<SnapshotDiff, BgpError> {
    if older.sno != newer.sno {
        return Err(BgpError::FocusMismatch(older.sno.clone(), newer.sno.clone()));
    }
    let p1: BTreeSet<Asn> = older.peers.keys().copied().collect();
    let p2: BTreeSet<Asn> = newer.peers.keys().copied().collect();
    let c1 = infer_countries(older);
    let c2 = infer_countries(newer);
    Ok(SnapshotDiff {
        sno: newer.sno.clone(),
        added_peers: p2.difference(&p1).copied().collect(),
        removed_peers: p1.difference(&p2).copied().collect(),
        added_countries: c2.difference(&c1).copied().collect(),
        removed_countries: c1.difference(&c2).copied().collect(),
    })
}

/// Graphviz rendering with `asn`, `country` and `degree` node attributes.
pub fn to_dot(graph: &PeeringGraph) -> String {
    let mut out = format!("graph \"{}\" {{\n", graph.sno.replace('"', "\\\""));
    for f in &graph.focus_asns {
        out.push_str(&format!("  AS{f} [asn={f}, role=focus];\n"));
    }
    for p in graph.peers.values() {
        out.push_str(&format!(
            "  AS{} [asn={}, country=\"{}\", degree={}];\n",
            p.asn,
            p.asn,
            p.country_code.as_str(),
            p.degree
        ));
    }
    for (f, p) in &graph.edges {
        out.push_str(&format!("  AS{f} -- AS{p};\n"));
    }
    out.push_str("}\n");
    out
}
