use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::bgp::{read_ground_truth, GroundTruthPop};
use crate::catalog::SnoCatalog;
use crate::filter::Disposition;
use crate::ingest::{
    parse_as_paths, parse_ndjson_parallel, partition, AsPathRecord, AsnRegistry, PopLocationTable, RecordError,
    ReverseDnsMap, SpeedTestSession, Strictness, TracerouteMeasurement, Validate,
};
use crate::synth::{self, BUNDLED_POP_TABLE_CSV};

use super::config::InputPaths;
use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Speedtests,
    Traceroutes,
    Dispositions,
    Catalog,
    Registry,
    PopTable,
    Rdns,
    GroundTruth,
    AsPaths,
    Spec,
}

fn kind_by_name(name: &str) -> Option<Kind> {
    Some(match name {
        synth::SPEEDTESTS_FILE => Kind::Speedtests,
        synth::TRACEROUTES_FILE => Kind::Traceroutes,
        "dispositions.ndjson" => Kind::Dispositions,
        synth::CATALOG_FILE => Kind::Catalog,
        synth::REGISTRY_FILE => Kind::Registry,
        synth::POP_TABLE_FILE => Kind::PopTable,
        synth::RDNS_FILE => Kind::Rdns,
        synth::GROUND_TRUTH_FILE => Kind::GroundTruth,
        _ => return None,
    })
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut line = String::new();
    BufReader::new(f)
        .read_line(&mut line)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(line)
}

/// Guesses a file's role from its header or first record.
fn sniff(path: &Path) -> Result<Kind, CliError> {
    if path.extension().is_some_and(|e| e == "txt") {
        return Ok(Kind::AsPaths);
    }
    let line = first_line(path)?;
    let head = line.trim();
    let kind = if head.starts_with('[') {
        Some(Kind::Catalog)
    } else if head.starts_with('{') {
        if head.contains("\"hops\"") {
            Some(Kind::Traceroutes)
        } else if head.contains("\"snapshots\"") {
            Some(Kind::Speedtests)
        } else if head.contains("\"stage\"") {
            Some(Kind::Dispositions)
        } else {
            // Pretty-printed generator specs open with a bare brace.
            Some(Kind::Spec)
        }
    } else {
        match head {
            "asn,country_code" => Some(Kind::Registry),
            "ip,hostname" => Some(Kind::Rdns),
            "sno,city,country_code" => Some(Kind::GroundTruth),
            h if h.starts_with("code,city,country_code") => Some(Kind::PopTable),
            _ => None,
        }
    };
    kind.ok_or_else(|| CliError::Input(format!("cannot tell what kind of input {} is", path.display())))
}

fn assign(paths: &mut InputPaths, kind: Kind, path: PathBuf) -> Result<(), CliError> {
    let slot = match kind {
        Kind::AsPaths => {
            paths.as_paths.push(path);
            return Ok(());
        }
        Kind::Speedtests => &mut paths.speedtests,
        Kind::Traceroutes => &mut paths.traceroutes,
        Kind::Dispositions => &mut paths.dispositions,
        Kind::Catalog => &mut paths.catalog,
        Kind::Registry => &mut paths.registry,
        Kind::PopTable => &mut paths.pop_table,
        Kind::Rdns => &mut paths.rdns,
        Kind::GroundTruth => &mut paths.ground_truth,
        Kind::Spec => &mut paths.spec,
    };
    if let Some(prev) = slot {
        if *prev != path {
            return Err(CliError::Input(format!(
                "{} and {} both look like {kind:?} input",
                prev.display(),
                path.display()
            )));
        }
    }
    *slot = Some(path);
    Ok(())
}

fn txt_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::Input(format!("cannot list {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for ent in rd {
        let p = ent
            .map_err(|e| CliError::Input(format!("cannot list {}: {e}", dir.display())))?
            .path();
        if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Folds `--input` paths into `paths`. Directories contribute the files
/// they hold under their conventional names; `as_paths/` subdirectories
/// contribute every `.txt` snapshot.
pub fn resolve(paths: &mut InputPaths, inputs: &[PathBuf]) -> Result<(), CliError> {
    for p in inputs {
        if !p.exists() {
            return Err(CliError::Input(format!("input not found: {}", p.display())));
        }
        if p.is_dir() {
            for name in [
                synth::SPEEDTESTS_FILE,
                synth::TRACEROUTES_FILE,
                "dispositions.ndjson",
                synth::CATALOG_FILE,
                synth::REGISTRY_FILE,
                synth::POP_TABLE_FILE,
                synth::RDNS_FILE,
                synth::GROUND_TRUTH_FILE,
            ] {
                let f = p.join(name);
                if f.is_file() {
                    assign(paths, kind_by_name(name).expect("known name"), f)?;
                }
            }
            let snaps = p.join(synth::AS_PATHS_DIR);
            let snaps = if snaps.is_dir() {
                txt_files(&snaps)?
            } else {
                txt_files(p)?
            };
            paths.as_paths.extend(snaps);
        } else {
            let by_name = p.file_name().and_then(|n| n.to_str()).and_then(kind_by_name);
            let kind = match by_name {
                Some(k) => k,
                None => sniff(p)?,
            };
            assign(paths, kind, p.clone())?;
        }
    }
    paths.as_paths.sort();
    paths.as_paths.dedup();
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn bad(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Records plus the malformed lines skipped under lenient parsing.
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
}

pub fn load_ndjson<T>(path: &Path, strictness: Strictness) -> Result<Loaded<T>, CliError>
where
    T: DeserializeOwned + Validate + Send,
{
    let text = read(path)?;
    let (records, errors) = partition(parse_ndjson_parallel::<T>(&text, strictness));
    if strictness == Strictness::Strict {
        if let Some(e) = errors.first() {
            return Err(bad(path, e));
        }
    }
    if !errors.is_empty() {
        log::warn!("{}: skipped {} malformed lines", path.display(), errors.len());
    }
    Ok(Loaded { records, errors })
}

pub fn load_speedtests(path: &Path, strictness: Strictness) -> Result<Loaded<SpeedTestSession>, CliError> {
    load_ndjson(path, strictness)
}

pub fn load_traceroutes(path: &Path, strictness: Strictness) -> Result<Loaded<TracerouteMeasurement>, CliError> {
    load_ndjson(path, strictness)
}

pub fn load_dispositions(path: &Path) -> Result<Vec<Disposition>, CliError> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn load_catalog(path: Option<&Path>) -> Result<SnoCatalog, CliError> {
    match path {
        Some(p) => SnoCatalog::from_json_reader(open(p)?).map_err(|e| bad(p, e)),
        None => Ok(SnoCatalog::bundled()),
    }
}

pub fn load_registry(path: Option<&Path>) -> Result<AsnRegistry, CliError> {
    match path {
        Some(p) => AsnRegistry::from_csv(open(p)?).map_err(|e| bad(p, e)),
        None => {
            log::warn!("no ASN registry given; every peer country will be unknown");
            Ok(AsnRegistry::default())
        }
    }
}

pub fn load_pop_table(path: Option<&Path>) -> Result<PopLocationTable, CliError> {
    match path {
        Some(p) => PopLocationTable::from_csv(open(p)?).map_err(|e| bad(p, e)),
        None => Ok(PopLocationTable::from_csv(BUNDLED_POP_TABLE_CSV.as_bytes()).expect("bundled table parses")),
    }
}

pub fn load_rdns(path: Option<&Path>) -> Result<ReverseDnsMap, CliError> {
    match path {
        Some(p) => ReverseDnsMap::from_csv(open(p)?).map_err(|e| bad(p, e)),
        None => {
            log::warn!("no reverse DNS table given; every PoP will be unknown");
            Ok(ReverseDnsMap::default())
        }
    }
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthPop>, CliError> {
    read_ground_truth(open(path)?).map_err(|e| bad(path, e))
}

/// Snapshot label (file stem) and its paths.
pub fn load_as_paths(path: &Path, strictness: Strictness) -> Result<(String, Vec<AsPathRecord>), CliError> {
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| bad(path, "snapshot file needs a UTF-8 name"))?
        .to_string();
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for r in parse_as_paths(BufReader::new(open(path)?)) {
        match r {
            Ok(p) => records.push(p.record),
            Err(e) if strictness == Strictness::Strict => return Err(bad(path, e)),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed lines", path.display());
    }
    Ok((label, records))
}
