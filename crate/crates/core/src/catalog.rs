//! Operator catalog: which ASNs belong to which satellite operator, which
//! orbits the operator flies, and the access-latency band of each orbit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::Asn;

/// Curated operator list shipped with the crate (41 operators, 67 ASNs).
pub const BUNDLED_CATALOG_JSON: &str = include_str!("../data/catalog.json");

/// ASdb category that marks an AS as a satellite operator.
pub const SATELLITE_CATEGORY: &str = "Satellite Communication";

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("ASN {asn} claimed by both {first:?} and {second:?}")]
    DuplicateAsn { asn: Asn, first: String, second: String },
    #[error("bad orbit token {0:?} (expected LEO, MEO or GEO)")]
    BadOrbitToken(String),
    #[error("operator {0:?} declares no orbit")]
    EmptyOrbits(String),
    #[error("duplicate operator name {0:?}")]
    DuplicateName(String),
    #[error("catalog json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orbit {
    #[serde(rename = "LEO")]
    Leo,
    #[serde(rename = "MEO")]
    Meo,
    #[serde(rename = "GEO")]
    Geo,
}

impl Orbit {
    pub const ALL: [Orbit; 3] = [Orbit::Leo, Orbit::Meo, Orbit::Geo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Orbit::Leo => "LEO",
            Orbit::Meo => "MEO",
            Orbit::Geo => "GEO",
        }
    }
}

impl fmt::Display for Orbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orbit {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LEO" => Ok(Orbit::Leo),
            "MEO" => Ok(Orbit::Meo),
            "GEO" => Ok(Orbit::Geo),
            other => Err(CatalogError::BadOrbitToken(other.to_string())),
        }
    }
}

/// Half-open access-latency interval `[min_ms, max_ms)` for one orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitBand {
    pub orbit: Orbit,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl OrbitBand {
    pub fn contains(&self, ms: f64) -> bool {
        ms >= self.min_ms && ms < self.max_ms
    }
}

/// The three contiguous bands, described by their two boundaries.
///
/// Defaults: LEO `[0, 200)`, MEO `[200, 500)`, GEO `[500, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub meo_floor_ms: f64,
    pub geo_floor_ms: f64,
}

impl Default for BandTable {
    fn default() -> Self {
        Self {
            meo_floor_ms: 200.0,
            geo_floor_ms: 500.0,
        }
    }
}

impl BandTable {
    pub fn new(meo_floor_ms: f64, geo_floor_ms: f64) -> Result<Self, String> {
        if !(meo_floor_ms.is_finite() && geo_floor_ms.is_finite() && 0.0 < meo_floor_ms && meo_floor_ms < geo_floor_ms)
        {
            return Err(format!(
                "band boundaries must satisfy 0 < meo_floor ({meo_floor_ms}) < geo_floor ({geo_floor_ms})"
            ));
        }
        Ok(Self {
            meo_floor_ms,
            geo_floor_ms,
        })
    }

    pub fn band(&self, orbit: Orbit) -> OrbitBand {
        let (min_ms, max_ms) = match orbit {
            Orbit::Leo => (0.0, self.meo_floor_ms),
            Orbit::Meo => (self.meo_floor_ms, self.geo_floor_ms),
            Orbit::Geo => (self.geo_floor_ms, f64::INFINITY),
        };
        OrbitBand { orbit, min_ms, max_ms }
    }

    /// Orbit whose band contains `ms`; `None` for negative or NaN input.
    pub fn orbit_of(&self, ms: f64) -> Option<Orbit> {
        Orbit::ALL.into_iter().find(|&o| self.band(o).contains(ms))
    }

    pub fn bands(&self) -> [OrbitBand; 3] {
        Orbit::ALL.map(|o| self.band(o))
    }
}

/// Band of `orbit` under the default boundaries.
pub fn band_of(orbit: Orbit) -> OrbitBand {
    BandTable::default().band(orbit)
}

/// A satellite network operator.
///
/// `orbits` is empty only for uncurated entries produced by
/// [`build_catalog`]; the JSON loader rejects it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnoEntry {
    pub name: String,
    pub asns: BTreeSet<Asn>,
    pub orbits: BTreeSet<Orbit>,
    /// Performance-enhancing proxies deployed on the satellite segment.
    pub pep: bool,
    /// ASNs of the operator that carry non-satellite traffic.
    pub excluded_asns: BTreeSet<Asn>,
}

impl SnoEntry {
    pub fn new(
        name: impl Into<String>,
        asns: impl IntoIterator<Item = Asn>,
        orbits: impl IntoIterator<Item = Orbit>,
    ) -> Self {
        Self {
            name: name.into(),
            asns: asns.into_iter().collect(),
            orbits: orbits.into_iter().collect(),
            pep: false,
            excluded_asns: BTreeSet::new(),
        }
    }

    pub fn is_leo(&self) -> bool {
        self.orbits.contains(&Orbit::Leo)
    }

    /// Label used in reports, e.g. `GEO` or `MEO+GEO`.
    pub fn orbit_label(&self) -> String {
        if self.orbits.is_empty() {
            return "unknown".into();
        }
        self.orbits.iter().map(Orbit::as_str).collect::<Vec<_>>().join("+")
    }

    pub fn all_asns(&self) -> impl Iterator<Item = Asn> + '_ {
        self.asns.iter().chain(self.excluded_asns.iter()).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AsnRole {
    Subscriber,
    Excluded,
}

/// Immutable ASN -> operator index. Every ASN belongs to at most one entry.
#[derive(Debug, Clone, Default)]
pub struct SnoCatalog {
    entries: Vec<SnoEntry>,
    by_asn: HashMap<Asn, (usize, AsnRole)>,
}

#[derive(Deserialize)]
struct RawEntry {
    name: String,
    asns: Vec<Asn>,
    orbits: Vec<String>,
    #[serde(default)]
    pep: bool,
    #[serde(default)]
    excluded_asns: Vec<Asn>,
}

impl SnoCatalog {
    /// Indexes `entries`, sorted by name. Fails on an ASN owned twice.
    pub fn from_entries(mut entries: Vec<SnoEntry>) -> Result<Self, CatalogError> {
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = entries.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(CatalogError::DuplicateName(w[0].name.clone()));
        }
        let mut by_asn: HashMap<Asn, (usize, AsnRole)> = HashMap::new();
        for (idx, e) in entries.iter().enumerate() {
            let roles = e
                .asns
                .iter()
                .map(|&a| (a, AsnRole::Subscriber))
                .chain(e.excluded_asns.iter().map(|&a| (a, AsnRole::Excluded)));
            for (asn, role) in roles {
                if let Some(&(other, _)) = by_asn.get(&asn) {
                    return Err(CatalogError::DuplicateAsn {
                        asn,
                        first: entries[other].name.clone(),
                        second: e.name.clone(),
                    });
                }
                by_asn.insert(asn, (idx, role));
            }
        }
        Ok(Self { entries, by_asn })
    }

    pub fn from_json_reader<R: Read>(src: R) -> Result<Self, CatalogError> {
        let raw: Vec<RawEntry> = serde_json::from_reader(src)?;
        let mut entries = Vec::with_capacity(raw.len());
        for r in raw {
            let orbits = r
                .orbits
                .iter()
                .map(|t| t.parse())
                .collect::<Result<BTreeSet<Orbit>, _>>()?;
            if orbits.is_empty() {
                return Err(CatalogError::EmptyOrbits(r.name));
            }
            entries.push(SnoEntry {
                name: r.name,
                asns: r.asns.into_iter().collect(),
                orbits,
                pep: r.pep,
                excluded_asns: r.excluded_asns.into_iter().collect(),
            });
        }
        Self::from_entries(entries)
    }

    pub fn bundled() -> Self {
        Self::from_json_reader(BUNDLED_CATALOG_JSON.as_bytes()).expect("bundled catalog is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("catalog serializes")
    }

    pub fn lookup(&self, asn: Asn) -> Option<(&SnoEntry, AsnRole)> {
        self.by_asn.get(&asn).map(|&(i, role)| (&self.entries[i], role))
    }

    pub fn entry(&self, name: &str) -> Option<&SnoEntry> {
        self.entries
            .binary_search_by(|e| e.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Entries sorted by name.
    pub fn entries(&self) -> &[SnoEntry] {
        &self.entries
    }

    /// Number of ASN -> operator mappings, subscriber and excluded.
    pub fn num_mappings(&self) -> usize {
        self.by_asn.len()
    }
}

/// One row of an AS classification database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsdbRow {
    pub asn: Asn,
    pub category: String,
    pub org: String,
}

/// Candidate catalog from ASdb rows plus manual additions, minus manual
/// exclusions.
///
/// Rows whose category is not [`SATELLITE_CATEGORY`] are dropped. Rows and
/// additions sharing a name are merged. ASdb rows carry no orbit, so such
/// entries keep whatever orbits the additions supply (possibly none).
pub fn build_catalog(
    asdb_rows: &[AsdbRow],
    manual_additions: &[SnoEntry],
    manual_exclusions: &BTreeSet<Asn>,
) -> Result<SnoCatalog, CatalogError> {
    let mut merged: BTreeMap<String, SnoEntry> = BTreeMap::new();
    let mut owner: HashMap<Asn, String> = HashMap::new();

    let mut claim = |asn: Asn, name: &str| -> Result<bool, CatalogError> {
        match owner.get(&asn) {
            Some(prev) if prev != name => Err(CatalogError::DuplicateAsn {
                asn,
                first: prev.clone(),
                second: name.to_string(),
            }),
            Some(_) => Ok(false),
            None => {
                owner.insert(asn, name.to_string());
                Ok(true)
            }
        }
    };

    for row in asdb_rows.iter().filter(|r| r.category == SATELLITE_CATEGORY) {
        claim(row.asn, &row.org)?;
        merged
            .entry(row.org.clone())
            .or_insert_with(|| SnoEntry::new(row.org.clone(), [], []))
            .asns
            .insert(row.asn);
    }
    for add in manual_additions {
        for asn in add.all_asns() {
            claim(asn, &add.name)?;
        }
        let e = merged
            .entry(add.name.clone())
            .or_insert_with(|| SnoEntry::new(add.name.clone(), [], []));
        e.asns.extend(add.asns.iter().copied());
        e.excluded_asns.extend(add.excluded_asns.iter().copied());
        e.orbits.extend(add.orbits.iter().copied());
        e.pep |= add.pep;
    }
    let entries = merged
        .into_values()
        .map(|mut e| {
            e.asns.retain(|a| !manual_exclusions.contains(a));
            e.excluded_asns.retain(|a| !manual_exclusions.contains(a));
            e
        })
        .filter(|e| !(e.asns.is_empty() && e.excluded_asns.is_empty()))
        .collect();
    SnoCatalog::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_has_41_operators_and_67_asns() {
        let cat = SnoCatalog::bundled();
        assert_eq!(cat.entries().len(), 41);
        assert_eq!(cat.num_mappings(), 67);
    }

    #[test]
    fn lookup_roles() {
        let cat = SnoCatalog::bundled();
        let (e, role) = cat.lookup(14593).unwrap();
        assert_eq!((e.name.as_str(), role), ("Starlink", AsnRole::Subscriber));
        let (e, role) = cat.lookup(27277).unwrap();
        assert_eq!((e.name.as_str(), role), ("Starlink", AsnRole::Excluded));
        assert!(cat.lookup(99_999_999).is_none());
    }

    #[test]
    fn pep_operators() {
        let cat = SnoCatalog::bundled();
        let pep: Vec<_> = cat
            .entries()
            .iter()
            .filter(|e| e.pep)
            .map(|e| e.name.as_str())
            .collect();
        assert_eq!(pep, ["Avanti", "Eutelsat", "HughesNet", "Viasat"]);
    }

    #[test]
    fn bands() {
        let geo = band_of(Orbit::Geo);
        assert_eq!((geo.min_ms, geo.max_ms), (500.0, f64::INFINITY));
        let meo = band_of(Orbit::Meo);
        assert_eq!((meo.min_ms, meo.max_ms), (200.0, 500.0));
        let leo = band_of(Orbit::Leo);
        assert_eq!((leo.min_ms, leo.max_ms), (0.0, 200.0));
        assert!(!meo.contains(500.0) && geo.contains(500.0));
        assert_eq!(BandTable::default().orbit_of(199.999), Some(Orbit::Leo));
        assert_eq!(BandTable::default().orbit_of(-1.0), None);
    }

    #[test]
    fn band_table_rejects_inverted_bounds() {
        assert!(BandTable::new(500.0, 200.0).is_err());
        assert!(BandTable::new(0.0, 200.0).is_err());
    }

    fn rows(n: usize, start: Asn, category: &str) -> Vec<AsdbRow> {
        (0..n)
            .map(|i| AsdbRow {
                asn: start + i as Asn,
                category: category.into(),
                org: format!("org-{}", i % 40),
            })
            .collect()
    }

    #[test]
    fn asdb_plus_manual_gives_164_mappings() {
        let mut asdb = rows(129, 100_000, SATELLITE_CATEGORY);
        asdb.extend(rows(50, 200_000, "Fiber"));
        let additions: Vec<SnoEntry> = (0..35)
            .map(|i| SnoEntry::new(format!("manual-{}", i % 7), [300_000 + i], []))
            .collect();
        let cat = build_catalog(&asdb, &additions, &BTreeSet::new()).unwrap();
        assert_eq!(cat.num_mappings(), 164);
    }

    #[test]
    fn empty_build() {
        let cat = build_catalog(&[], &[], &BTreeSet::new()).unwrap();
        assert_eq!(cat.num_mappings(), 0);
        assert!(cat.entries().is_empty());
    }

    #[test]
    fn colliding_addition_conflicts() {
        let asdb = vec![AsdbRow {
            asn: 14593,
            category: SATELLITE_CATEGORY.into(),
            org: "SpaceX".into(),
        }];
        let add = vec![SnoEntry::new("Starlink", [14593], [Orbit::Leo])];
        let err = build_catalog(&asdb, &add, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateAsn { asn: 14593, .. }));
    }

    #[test]
    fn exclusions_dropped_and_same_name_merges() {
        let asdb = vec![
            AsdbRow {
                asn: 1,
                category: SATELLITE_CATEGORY.into(),
                org: "A".into(),
            },
            AsdbRow {
                asn: 2,
                category: SATELLITE_CATEGORY.into(),
                org: "A".into(),
            },
        ];
        let add = vec![SnoEntry::new("A", [3], [Orbit::Geo])];
        let cat = build_catalog(&asdb, &add, &BTreeSet::from([2])).unwrap();
        let a = cat.entry("A").unwrap();
        assert_eq!(a.asns, BTreeSet::from([1, 3]));
        assert_eq!(a.orbits, BTreeSet::from([Orbit::Geo]));
    }
}
