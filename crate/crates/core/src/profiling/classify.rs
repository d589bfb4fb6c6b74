use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kde::{kde, modes, KdeProfile, DEFAULT_GRID_POINTS};
use super::percentile::percentile_sorted;
use super::StatsError;
use crate::catalog::{BandTable, Orbit, SnoCatalog};
use crate::ingest::Asn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrbitClass {
    #[serde(rename = "LEO")]
    Leo,
    #[serde(rename = "MEO")]
    Meo,
    #[serde(rename = "GEO")]
    Geo,
    #[serde(rename = "mixed")]
    Mixed,
    #[serde(rename = "terrestrial_suspect")]
    TerrestrialSuspect,
}

impl OrbitClass {
    pub fn single(&self) -> Option<Orbit> {
        match self {
            OrbitClass::Leo => Some(Orbit::Leo),
            OrbitClass::Meo => Some(Orbit::Meo),
            OrbitClass::Geo => Some(Orbit::Geo),
            _ => None,
        }
    }
}

impl From<Orbit> for OrbitClass {
    fn from(o: Orbit) -> Self {
        match o {
            Orbit::Leo => OrbitClass::Leo,
            Orbit::Meo => OrbitClass::Meo,
            Orbit::Geo => OrbitClass::Geo,
        }
    }
}

impl fmt::Display for OrbitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrbitClass::Leo => "LEO",
            OrbitClass::Meo => "MEO",
            OrbitClass::Geo => "GEO",
            OrbitClass::Mixed => "mixed",
            OrbitClass::TerrestrialSuspect => "terrestrial_suspect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitVerdict {
    pub orbit: OrbitClass,
    /// Single-orbit verdicts: fraction of samples inside that band.
    /// `terrestrial_suspect`: fraction below the terrestrial threshold.
    /// `mixed`: largest single-band fraction.
    pub confidence: f64,
    pub median_ms: f64,
    pub modes_ms: Vec<f64>,
}

/// Tunables for [`classify_orbit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub bands: BandTable,
    /// Minimum share of samples in one band for a single-orbit verdict.
    pub dominance: f64,
    /// Median below this is treated as a terrestrial path.
    pub terrestrial_ms: f64,
    pub min_samples: usize,
    /// Relative prominence for reported density modes.
    pub min_prominence: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            bands: BandTable::default(),
            dominance: 0.8,
            terrestrial_ms: 20.0,
            min_samples: 10,
            min_prominence: 0.05,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dominance > 0.5 && self.dominance <= 1.0) {
            return Err(format!("dominance must lie in (0.5, 1], got {}", self.dominance));
        }
        if !(self.terrestrial_ms >= 0.0 && self.terrestrial_ms < self.bands.meo_floor_ms) {
            return Err(format!(
                "terrestrial_ms must lie in [0, {}), got {}",
                self.bands.meo_floor_ms, self.terrestrial_ms
            ));
        }
        if !(0.0..1.0).contains(&self.min_prominence) {
            return Err(format!(
                "min_prominence must lie in [0, 1), got {}",
                self.min_prominence
            ));
        }
        if self.min_samples < 2 {
            return Err("min_samples must be >= 2".into());
        }
        Ok(())
    }
}

/// Orbit verdict for a population of access latencies.
///
/// A median below `terrestrial_ms` yields `terrestrial_suspect`; otherwise a
/// band holding at least `dominance` of the samples wins; otherwise the
/// population is `mixed`.
pub fn classify_orbit(latencies: &[f64], cfg: &ClassifierConfig) -> Result<OrbitVerdict, StatsError> {
    if latencies.len() < cfg.min_samples {
        return Err(StatsError::InsufficientData {
            needed: cfg.min_samples,
            got: latencies.len(),
        });
    }
    let sorted = super::percentile::sorted_finite(latencies)?;
    let n = sorted.len() as f64;
    let median_ms = percentile_sorted(&sorted, 0.5);
    let modes_ms = match kde(&sorted, None, DEFAULT_GRID_POINTS) {
        Ok(p) => modes(&p, cfg.min_prominence),
        Err(_) => vec![median_ms],
    };

    let share = |orbit: Orbit| {
        let band = cfg.bands.band(orbit);
        sorted.iter().filter(|&&v| band.contains(v)).count() as f64 / n
    };
    let (best_orbit, best_share) = Orbit::ALL
        .into_iter()
        .map(|o| (o, share(o)))
        .fold((Orbit::Leo, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });

    let (orbit, confidence) = if median_ms < cfg.terrestrial_ms {
        let below = sorted.iter().filter(|&&v| v < cfg.terrestrial_ms).count() as f64 / n;
        (OrbitClass::TerrestrialSuspect, below)
    } else if best_share >= cfg.dominance {
        (best_orbit.into(), best_share)
    } else {
        (OrbitClass::Mixed, best_share)
    };
    Ok(OrbitVerdict {
        orbit,
        confidence,
        median_ms,
        modes_ms,
    })
}

/// An ASN whose latency profile contradicts its operator's declared orbits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsnAnomaly {
    pub asn: Asn,
    pub sno: String,
    pub declared: BTreeSet<Orbit>,
    pub verdict: OrbitVerdict,
}

fn consistent(declared: &BTreeSet<Orbit>, verdict: &OrbitVerdict, bands: &BandTable) -> bool {
    if declared.len() == 1 {
        return verdict.orbit.single().is_some_and(|o| declared.contains(&o));
    }
    // Hybrid operators should show one density mode per declared orbit.
    if verdict.orbit != OrbitClass::Mixed {
        return false;
    }
    let mode_orbits: Option<BTreeSet<Orbit>> = verdict.modes_ms.iter().map(|&m| bands.orbit_of(m)).collect();
    match mode_orbits {
        Some(set) => set.len() >= 2 && set.is_subset(declared),
        None => false,
    }
}

/// Flags catalogued ASNs whose verdict falls outside the declared orbits.
///
/// ASNs absent from the catalog, with uncurated (orbit-less) operators, or
/// with fewer than `min_samples` latencies are skipped. Output is ordered
/// by ASN.
pub fn flag_asn_anomalies(
    catalog: &SnoCatalog,
    per_asn_latencies: &BTreeMap<Asn, Vec<f64>>,
    cfg: &ClassifierConfig,
) -> Vec<AsnAnomaly> {
    per_asn_latencies
        .par_iter()
        .filter_map(|(&asn, lats)| {
            let (entry, _) = catalog.lookup(asn)?;
            if entry.orbits.is_empty() {
                return None;
            }
            let verdict = classify_orbit(lats, cfg).ok()?;
            (!consistent(&entry.orbits, &verdict, &cfg.bands)).then(|| AsnAnomaly {
                asn,
                sno: entry.name.clone(),
                declared: entry.orbits.clone(),
                verdict,
            })
        })
        .collect()
}

/// Density profile of one ASN's access latencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsnProfile {
    pub asn: Asn,
    pub profile: KdeProfile,
}

/// KDE per ASN, skipping ASNs whose samples are degenerate. Ordered by ASN.
pub fn profile_asns(per_asn_latencies: &BTreeMap<Asn, Vec<f64>>, grid_points: usize) -> Vec<AsnProfile> {
    per_asn_latencies
        .par_iter()
        .filter_map(|(&asn, lats)| {
            kde(lats, None, grid_points)
                .ok()
                .map(|profile| AsnProfile { asn, profile })
        })
        .collect()
}
