use std::collections::BTreeMap;

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{rng_for, GeneratorSpec};
use crate::bgp::GroundTruthPop;
use crate::ingest::{AsPathRecord, Asn, CountryCode};

/// The route collector's own AS, first on every collected path.
const COLLECTOR_ASN: Asn = 6447;

/// Private-use ASN standing in for an unnamed neighbour of `peer`.
fn filler_asn(peer: Asn, j: usize) -> Asn {
    4_200_000_000 + (peer % 100_000) * 100 + j as Asn
}

pub(crate) type BgpFixtures = (
    Vec<(String, Vec<AsPathRecord>)>,
    Vec<(Asn, CountryCode)>,
    Vec<GroundTruthPop>,
);

pub(crate) fn gen_bgp(spec: &GeneratorSpec) -> BgpFixtures {
    let plan = &spec.bgp_plan;
    let mut snapshots = Vec::new();
    let mut registry: BTreeMap<Asn, CountryCode> = BTreeMap::new();
    for (s, snap) in plan.snapshots.iter().enumerate() {
        let mut rng = rng_for(spec.seed, 30_000 + s as u64);
        let mut paths: Vec<Vec<Asn>> = Vec::new();
        for peering in &snap.peerings {
            for peer in &peering.peers {
                if let Some(cc) = peer.country {
                    registry.insert(peer.asn, cc);
                }
                let mut path = vec![COLLECTOR_ASN, peer.asn];
                // Operators commonly prepend their own AS.
                path.extend(std::iter::repeat_n(peering.focus_asn, rng.random_range(1..=3)));
                paths.push(path);
                for j in 0..peer.extra_degree.min(99) {
                    paths.push(vec![COLLECTOR_ASN, filler_asn(peer.asn, j), peer.asn]);
                }
            }
        }
        paths.shuffle(&mut rng);
        let records = paths
            .into_iter()
            .enumerate()
            .map(|(i, p)| AsPathRecord::new(snap.observed_at + Duration::seconds(i as i64 % 3600), p))
            .collect();
        snapshots.push((snap.label.clone(), records));
    }
    let truth = plan
        .ground_truth
        .iter()
        .flat_map(|t| {
            t.countries.iter().flat_map(move |c| {
                (1..=c.cities).map(move |k| GroundTruthPop {
                    sno: t.sno.clone(),
                    city: format!("{}-city-{k:02}", c.country_code),
                    country_code: c.country_code,
                })
            })
        })
        .collect();
    (snapshots, registry.into_iter().collect(), truth)
}
