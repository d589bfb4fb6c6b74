use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::bgp::{build_graph, coverage_score, infer_countries, snapshot_diff, to_dot, PeeringGraph};
use crate::filter::{csv_field, per_asn_latencies, run_pipeline, ClassifiedCorpus};
use crate::ingest::{RecordError, SpeedTestSession, Strictness};
use crate::metrics::{
    boxstats_csv, cdf_csv, daily_csv, daily_median_series, daily_variation, group_metrics, summarize, summarize_groups,
    Grouping, MetricField,
};
use crate::output::{Manifest, OutputDir};
use crate::profiling::{access_latency, classify_orbit, flag_asn_anomalies};
use crate::starlink::{
    build_pop_timelines, detect_changes, events_ndjson, hops_by_target, pop_rtt_by_country, probe_pops_csv,
    timeline_ndjson,
};
use crate::synth::{gen_corpus, GeneratorSpec};

use super::config::RunConfig;
use super::inputs::{self, Loaded};
use super::CliError;

/// Which report `report` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Metrics,
    Traceroute,
    Bgp,
    All,
}

/// Files rendered in memory before anything touches the output directory,
/// so a failing run leaves no partial output behind.
#[derive(Debug, Default)]
pub struct Artifacts(Vec<(String, Vec<u8>)>);

impl Artifacts {
    fn add(&mut self, rel: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.0.push((rel.into(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(self, dir: &Path) -> Result<Manifest, CliError> {
        let io = |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", dir.display()));
        let mut out = OutputDir::new(dir).map_err(io)?;
        for (rel, bytes) in self.0 {
            out.write(&rel, bytes).map_err(io)?;
        }
        out.finish().map_err(io)
    }
}

fn strictness(cfg: &RunConfig) -> Strictness {
    if cfg.strict_parsing {
        Strictness::Strict
    } else {
        Strictness::Lenient
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::Input("no output directory given (--out)".into()))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Input(format!("no {what} input given")))
}

fn errors_csv(errors: &[RecordError]) -> String {
    let mut out = String::from("line,reason\n");
    for e in errors {
        out.push_str(&format!("{},{}\n", e.line_no, csv_field(&e.reason)));
    }
    out
}

pub fn cmd_synth(cfg: &RunConfig, scale: Option<f64>) -> Result<Manifest, CliError> {
    let out = out_dir(cfg)?;
    let mut spec = match &cfg.inputs.spec {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            GeneratorSpec::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => GeneratorSpec::default_spec(),
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    if let Some(f) = scale {
        if !(f > 0.0 && f.is_finite()) {
            return Err(CliError::Input(format!("scale must be positive, got {f}")));
        }
        spec = spec.scaled(f);
    }
    let corpus = gen_corpus(&spec).map_err(|e| CliError::Input(format!("generator spec: {e}")))?;
    log::info!(
        "generated {} sessions, {} traceroutes, {} AS path snapshots",
        corpus.sessions.len(),
        corpus.traceroutes.len(),
        corpus.as_path_snapshots.len()
    );
    corpus
        .write_to(&out)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", out.display())))
}

/// Classification of every input session plus the reports built on it.
pub fn classify_artifacts(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let path = require(&cfg.inputs.speedtests, "speed test")?;
    let Loaded {
        records: sessions,
        errors,
    } = inputs::load_speedtests(path, strictness(cfg))?;
    let catalog = inputs::load_catalog(cfg.inputs.catalog.as_deref())?;
    let corpus = run_pipeline(&sessions, &catalog, &cfg.filter_config());
    log::info!(
        "{} of {} sessions accepted across {} operators",
        corpus.accepted_count(),
        sessions.len(),
        corpus.per_sno.len()
    );
    let ccfg = cfg.classifier_config();
    let anomalies = flag_asn_anomalies(&catalog, &per_asn_latencies(&sessions, &catalog), &ccfg);

    let mut orbits = String::from("sno,declared,verdict,confidence,median_ms,modes_ms\n");
    for (name, o) in &corpus.per_sno {
        let lats: Vec<f64> = o.accepted.iter().map(access_latency).collect();
        let Ok(v) = classify_orbit(&lats, &ccfg) else { continue };
        let modes: Vec<String> = v.modes_ms.iter().map(|m| format!("{m:.3}")).collect();
        orbits.push_str(&format!(
            "{},{},{},{:.6},{:.3},{}\n",
            csv_field(name),
            o.orbit_label,
            v.orbit,
            v.confidence,
            v.median_ms,
            modes.join(" ")
        ));
    }

    let mut a = Artifacts::default();
    a.add("dispositions.ndjson", corpus.dispositions_ndjson());
    a.add("summary.csv", corpus.summary_csv());
    let mut anomaly_lines = String::new();
    for an in &anomalies {
        anomaly_lines.push_str(&serde_json::to_string(an).expect("anomaly serializes"));
        anomaly_lines.push('\n');
    }
    a.add("anomalies.ndjson", anomaly_lines);
    a.add("orbits.csv", orbits);
    a.add("parse_errors.csv", errors_csv(&errors));
    Ok(a)
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let out = out_dir(cfg)?;
    classify_artifacts(cfg)?.write(&out)
}

const GROUPINGS: [(&str, Grouping); 3] = [
    ("orbit", Grouping::Orbit),
    ("sno", Grouping::Sno),
    ("pep_class", Grouping::PepClass),
];

fn metrics_artifacts(cfg: &RunConfig, a: &mut Artifacts) -> Result<(), CliError> {
    let path = require(&cfg.inputs.speedtests, "speed test")?;
    let sessions: Vec<SpeedTestSession> = inputs::load_speedtests(path, strictness(cfg))?.records;
    let catalog = inputs::load_catalog(cfg.inputs.catalog.as_deref())?;
    let corpus = match &cfg.inputs.dispositions {
        Some(d) => ClassifiedCorpus::from_dispositions(&sessions, inputs::load_dispositions(d)?, &catalog)
            .map_err(|e| CliError::Input(format!("{}: {e}", d.display())))?,
        None => {
            log::info!("no dispositions given; classifying speed tests first");
            run_pipeline(&sessions, &catalog, &cfg.filter_config())
        }
    };
    for (gname, grouping) in GROUPINGS {
        let groups = group_metrics(&corpus, &catalog, grouping, &cfg.bands);
        let mut variation = String::from("group,field,daily_variation\n");
        for field in MetricField::ALL {
            let dir = format!("metrics/{gname}/{}", field.as_str());
            let summaries = summarize_groups(&groups, field);
            a.add(format!("{dir}/boxstats.csv"), boxstats_csv(&summaries));
            a.add(format!("{dir}/cdf.csv"), cdf_csv(&summaries));
            let series: BTreeMap<String, _> = groups
                .iter()
                .map(|(g, ms)| (g.clone(), daily_median_series(ms, field)))
                .collect();
            for (g, s) in &series {
                let v = daily_variation(s).map(|v| format!("{v:.6}")).unwrap_or_default();
                variation.push_str(&format!("{},{},{v}\n", csv_field(g), field.as_str()));
            }
            a.add(format!("{dir}/daily.csv"), daily_csv(&series));
        }
        a.add(format!("metrics/{gname}/daily_variation.csv"), variation);
    }
    Ok(())
}

fn traceroute_artifacts(cfg: &RunConfig, a: &mut Artifacts) -> Result<(), CliError> {
    let path = require(&cfg.inputs.traceroutes, "traceroute")?;
    let Loaded { records: ms, errors } = inputs::load_traceroutes(path, strictness(cfg))?;
    let rdns = inputs::load_rdns(cfg.inputs.rdns.as_deref())?;
    let pops = inputs::load_pop_table(cfg.inputs.pop_table.as_deref())?;
    let timelines = build_pop_timelines(&ms, &rdns, cfg.gateway);
    let events: Vec<_> = timelines
        .values()
        .flat_map(|tl| detect_changes(tl, cfg.shift))
        .collect();
    log::info!("{} probes, {} change events", timelines.len(), events.len());
    a.add("traceroute/timeline.ndjson", timeline_ndjson(&timelines));
    a.add("traceroute/events.ndjson", events_ndjson(&events));
    a.add("traceroute/probe_pops.csv", probe_pops_csv(&timelines, &pops));
    let by_country = pop_rtt_by_country(&ms, &rdns, &pops, cfg.gateway);
    a.add("traceroute/pop_rtt_by_country/boxstats.csv", boxstats_csv(&by_country));
    a.add("traceroute/pop_rtt_by_country/cdf.csv", cdf_csv(&by_country));
    let hops: BTreeMap<String, _> = hops_by_target(&ms)
        .into_iter()
        .filter_map(|(t, h)| {
            let v: Vec<f64> = h.into_iter().map(f64::from).collect();
            summarize(&v).ok().map(|s| (t, s))
        })
        .collect();
    a.add("traceroute/hops_by_target/boxstats.csv", boxstats_csv(&hops));
    a.add("traceroute/parse_errors.csv", errors_csv(&errors));
    Ok(())
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

fn bgp_artifacts(cfg: &RunConfig, a: &mut Artifacts) -> Result<(), CliError> {
    if cfg.inputs.as_paths.is_empty() {
        return Err(CliError::Input("no AS path snapshot input given".into()));
    }
    let catalog = inputs::load_catalog(cfg.inputs.catalog.as_deref())?;
    let registry = inputs::load_registry(cfg.inputs.registry.as_deref())?;
    let truth = cfg
        .inputs
        .ground_truth
        .as_deref()
        .map(inputs::load_ground_truth)
        .transpose()?;
    let mut snapshots = Vec::new();
    for p in &cfg.inputs.as_paths {
        snapshots.push(inputs::load_as_paths(p, strictness(cfg))?);
    }
    let labels: BTreeSet<&str> = snapshots.iter().map(|(l, _)| l.as_str()).collect();
    if labels.len() != snapshots.len() {
        return Err(CliError::Input("AS path snapshots need distinct file names".into()));
    }

    // graphs[s][sno], keeping only operators seen in some snapshot.
    let graphs: Vec<BTreeMap<String, PeeringGraph>> = snapshots
        .iter()
        .map(|(_, paths)| {
            catalog
                .entries()
                .iter()
                .map(|e| (e.name.clone(), build_graph(paths, e, &registry)))
                .collect()
        })
        .collect();
    let seen: BTreeSet<&String> = graphs
        .iter()
        .flat_map(|g| g.iter().filter(|(_, pg)| !pg.peers.is_empty()).map(|(n, _)| n))
        .collect();

    let mut coverage = String::from("snapshot,sno,countries_found,countries_total,country_fraction,city_fraction\n");
    for ((label, _), g) in snapshots.iter().zip(&graphs) {
        let mut peers = String::from("sno,peer_asn,degree,country_code\n");
        let mut countries = String::from("sno,n_peers,countries\n");
        for name in &seen {
            let pg = &g[*name];
            for p in pg.peers.values() {
                peers.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_field(name),
                    p.asn,
                    p.degree,
                    p.country_code
                ));
            }
            let inferred = infer_countries(pg);
            let cc: Vec<&str> = inferred.iter().map(|c| c.as_str()).collect();
            countries.push_str(&format!("{},{},{}\n", csv_field(name), pg.peers.len(), cc.join(" ")));
            if !pg.peers.is_empty() {
                a.add(format!("bgp/{label}/{}.dot", slug(name)), to_dot(pg));
            }
            if let Some(truth) = &truth {
                let rows: Vec<_> = truth.iter().filter(|t| &t.sno == *name).cloned().collect();
                if let Ok(c) = coverage_score(&inferred, &rows) {
                    coverage.push_str(&format!(
                        "{label},{},{},{},{:.6},{:.6}\n",
                        csv_field(name),
                        c.countries_found,
                        c.countries_total,
                        c.country_fraction,
                        c.city_fraction
                    ));
                }
            }
        }
        a.add(format!("bgp/{label}/peers.csv"), peers);
        a.add(format!("bgp/{label}/countries.csv"), countries);
    }
    if truth.is_some() {
        a.add("bgp/coverage.csv", coverage);
    }
    for (i, pair) in graphs.windows(2).enumerate() {
        let (older, newer) = (&snapshots[i].0, &snapshots[i + 1].0);
        let mut diff = String::new();
        for name in &seen {
            let d = snapshot_diff(&pair[0][*name], &pair[1][*name]).map_err(|e| CliError::Internal(e.to_string()))?;
            diff.push_str(&d.to_ndjson_line());
        }
        a.add(format!("bgp/diff_{older}_{newer}.ndjson"), diff);
    }
    Ok(())
}

pub fn report_artifacts(cfg: &RunConfig, which: ReportKind) -> Result<Artifacts, CliError> {
    let mut a = Artifacts::default();
    match which {
        ReportKind::Metrics => metrics_artifacts(cfg, &mut a)?,
        ReportKind::Traceroute => traceroute_artifacts(cfg, &mut a)?,
        ReportKind::Bgp => bgp_artifacts(cfg, &mut a)?,
        ReportKind::All => {
            let i = &cfg.inputs;
            let mut ran = 0;
            if i.speedtests.is_some() {
                metrics_artifacts(cfg, &mut a)?;
                ran += 1;
            }
            if i.traceroutes.is_some() {
                traceroute_artifacts(cfg, &mut a)?;
                ran += 1;
            }
            if !i.as_paths.is_empty() {
                bgp_artifacts(cfg, &mut a)?;
                ran += 1;
            }
            if ran == 0 {
                return Err(CliError::Input(
                    "report all needs speed test, traceroute or AS path input".into(),
                ));
            }
        }
    }
    Ok(a)
}

pub fn cmd_report(cfg: &RunConfig, which: ReportKind) -> Result<Manifest, CliError> {
    let out = out_dir(cfg)?;
    report_artifacts(cfg, which)?.write(&out)
}
