use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Asn;
use crate::catalog::{CatalogError, SnoCatalog};

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{table}: duplicate key {key}")]
    DuplicateKey { table: &'static str, key: String },
    #[error("{table} line {line}: bad country code {code:?}")]
    BadCountryCode {
        table: &'static str,
        line: usize,
        code: String,
    },
    #[error("{table} line {line}: {reason}")]
    Malformed {
        table: &'static str,
        line: usize,
        reason: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// ISO 3166 alpha-2 code, stored upper-case. `ZZ` stands for unknown.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub const UNKNOWN: CountryCode = CountryCode(*b"ZZ");

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }

    pub fn is_unknown(&self) -> bool {
        *self == Self::UNKNOWN
    }
}

impl FromStr for CountryCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.trim().as_bytes();
        if b.len() == 2 && b.iter().all(u8::is_ascii_alphabetic) {
            Ok(CountryCode([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()]))
        } else {
            Err(format!("bad country code {s:?}"))
        }
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// ASN to registry country.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsnRegistry {
    countries: HashMap<Asn, CountryCode>,
}

impl AsnRegistry {
    pub fn insert(&mut self, asn: Asn, country: CountryCode) -> Option<CountryCode> {
        self.countries.insert(asn, country)
    }

    /// Registry country, `ZZ` when absent.
    pub fn country(&self, asn: Asn) -> CountryCode {
        self.countries.get(&asn).copied().unwrap_or(CountryCode::UNKNOWN)
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn from_csv<R: Read>(src: R) -> Result<Self, TableError> {
        const TABLE: &str = "registry";
        let mut reg = AsnRegistry::default();
        for (i, row) in csv_rows(src, TABLE, 2)?.into_iter().enumerate() {
            let line = i + 2;
            let asn: Asn = row[0].trim().parse().map_err(|_| TableError::Malformed {
                table: TABLE,
                line,
                reason: format!("bad asn {:?}", row[0]),
            })?;
            let cc: CountryCode = row[1].parse().map_err(|_| TableError::BadCountryCode {
                table: TABLE,
                line,
                code: row[1].clone(),
            })?;
            if reg.insert(asn, cc).is_some() {
                return Err(TableError::DuplicateKey {
                    table: TABLE,
                    key: asn.to_string(),
                });
            }
        }
        Ok(reg)
    }
}

impl FromIterator<(Asn, CountryCode)> for AsnRegistry {
    fn from_iter<I: IntoIterator<Item = (Asn, CountryCode)>>(iter: I) -> Self {
        Self {
            countries: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopLocation {
    pub code: String,
    pub city: String,
    pub country_code: CountryCode,
    pub lat: f64,
    pub lon: f64,
}

/// PoP code to location, keyed by lower-case code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopLocationTable {
    pops: BTreeMap<String, PopLocation>,
}

impl PopLocationTable {
    pub fn get(&self, code: &str) -> Option<&PopLocation> {
        self.pops.get(&code.to_ascii_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &PopLocation> {
        self.pops.values()
    }

    pub fn len(&self) -> usize {
        self.pops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pops.is_empty()
    }

    pub fn from_csv<R: Read>(src: R) -> Result<Self, TableError> {
        const TABLE: &str = "pop-table";
        let mut pops = BTreeMap::new();
        for (i, row) in csv_rows(src, TABLE, 5)?.into_iter().enumerate() {
            let line = i + 2;
            let coord = |s: &str, lim: f64| -> Result<f64, TableError> {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.abs() <= lim)
                    .ok_or_else(|| TableError::Malformed {
                        table: TABLE,
                        line,
                        reason: format!("bad coordinate {s:?}"),
                    })
            };
            let code = row[0].trim().to_ascii_lowercase();
            let loc = PopLocation {
                code: code.clone(),
                city: row[1].trim().to_string(),
                country_code: row[2].parse().map_err(|_| TableError::BadCountryCode {
                    table: TABLE,
                    line,
                    code: row[2].clone(),
                })?,
                lat: coord(&row[3], 90.0)?,
                lon: coord(&row[4], 180.0)?,
            };
            if pops.insert(code.clone(), loc).is_some() {
                return Err(TableError::DuplicateKey {
                    table: TABLE,
                    key: code,
                });
            }
        }
        Ok(Self { pops })
    }
}

/// IP address to PTR hostname.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReverseDnsMap {
    names: HashMap<IpAddr, String>,
}

impl ReverseDnsMap {
    pub fn insert(&mut self, ip: IpAddr, hostname: impl Into<String>) -> Option<String> {
        self.names.insert(ip, hostname.into())
    }

    pub fn hostname(&self, ip: IpAddr) -> Option<&str> {
        self.names.get(&ip).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn from_csv<R: Read>(src: R) -> Result<Self, TableError> {
        const TABLE: &str = "rdns";
        let mut map = ReverseDnsMap::default();
        for (i, row) in csv_rows(src, TABLE, 2)?.into_iter().enumerate() {
            let line = i + 2;
            let ip: IpAddr = row[0].trim().parse().map_err(|_| TableError::Malformed {
                table: TABLE,
                line,
                reason: format!("bad ip {:?}", row[0]),
            })?;
            if map.insert(ip, row[1].trim()).is_some() {
                return Err(TableError::DuplicateKey {
                    table: TABLE,
                    key: ip.to_string(),
                });
            }
        }
        Ok(map)
    }
}

/// Reads a headered CSV, requiring `width` columns per row.
fn csv_rows<R: Read>(src: R, table: &'static str, width: usize) -> Result<Vec<Vec<String>>, TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(src);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TableError::Malformed {
            table,
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(TableError::Malformed {
                table,
                line,
                reason: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

/// The four metadata tables the pipeline consumes.
#[derive(Debug, Clone)]
pub struct Tables {
    pub catalog: SnoCatalog,
    pub registry: AsnRegistry,
    pub pops: PopLocationTable,
    pub rdns: ReverseDnsMap,
}

pub fn parse_tables<C: Read, G: Read, P: Read, D: Read>(
    catalog_src: C,
    registry_src: G,
    pop_table_src: P,
    rdns_src: D,
) -> Result<Tables, TableError> {
    Ok(Tables {
        catalog: SnoCatalog::from_json_reader(catalog_src)?,
        registry: AsnRegistry::from_csv(registry_src)?,
        pops: PopLocationTable::from_csv(pop_table_src)?,
        rdns: ReverseDnsMap::from_csv(rdns_src)?,
    })
}
