use std::collections::{BTreeSet, HashMap};

use sno_scope::catalog::SnoCatalog;
use sno_scope::filter::{run_pipeline, FilterConfig};
use sno_scope::output::sha256_hex;
use sno_scope::synth::{gen_corpus, Cause, Expectation, GeneratorSpec};

/// Operators in descending order of accepted sessions in the reference measurement study.
const RANK: [&str; 18] = [
    "Starlink",
    "O3b",
    "Viasat",
    "SES",
    "TelAlaska",
    "OneWeb",
    "HughesNet",
    "Marlink",
    "KVH",
    "SSI",
    "Eutelsat",
    "GlobalSat",
    "Avanti",
    "IntelSat",
    "Hellas-Sat",
    "UltiSat",
    "Isotropic",
    "Kacific",
];

#[test]
fn default_corpus_matches_labels_and_rank() {
    let spec = GeneratorSpec::default_spec();
    let corpus = gen_corpus(&spec).unwrap();
    assert!((95_000..=105_000).contains(&corpus.sessions.len()));
    let catalog = SnoCatalog::bundled();
    let out = run_pipeline(&corpus.sessions, &catalog, &FilterConfig::default());

    let labels: HashMap<&str, Expectation> = corpus
        .labels
        .iter()
        .map(|l| (l.session_id.as_str(), l.expected))
        .collect();
    let right = out
        .dispositions
        .iter()
        .filter(|d| d.stage.is_accepted() == (labels[d.session_id.as_str()] == Expectation::Accept))
        .count();
    let accuracy = right as f64 / out.dispositions.len() as f64;
    assert!(accuracy >= 0.99, "accuracy {accuracy}");

    let names: Vec<&str> = out.per_sno.keys().map(String::as_str).collect();
    assert_eq!(
        names.iter().copied().collect::<BTreeSet<_>>(),
        RANK.iter().copied().collect()
    );
    let counts: Vec<usize> = RANK.iter().map(|n| out.per_sno[*n].accepted.len()).collect();
    assert!(counts.windows(2).all(|w| w[0] > w[1]), "{counts:?}");

    let orbits: BTreeSet<&str> = RANK.iter().map(|n| out.per_sno[*n].orbit_label.as_str()).collect();
    for o in ["LEO", "MEO", "GEO"] {
        assert!(orbits.iter().any(|l| l.contains(o)));
    }
}

#[test]
fn backup_sessions_are_a_fifth_and_rejected() {
    let corpus = gen_corpus(&GeneratorSpec::default_spec().scaled(0.2)).unwrap();
    let out = run_pipeline(&corpus.sessions, &SnoCatalog::bundled(), &FilterConfig::default());
    let disp: HashMap<&str, bool> = out
        .dispositions
        .iter()
        .map(|d| (d.session_id.as_str(), d.stage.is_accepted()))
        .collect();
    for sno in ["Viasat", "TelAlaska"] {
        let mine: Vec<_> = corpus.labels.iter().filter(|l| l.sno.as_deref() == Some(sno)).collect();
        let backups: Vec<_> = mine.iter().filter(|l| l.cause == Cause::BackupLink).collect();
        let frac = backups.len() as f64 / mine.len() as f64;
        assert!((frac - 0.2).abs() < 0.01, "{sno}: {frac}");
        assert!(backups
            .iter()
            .all(|l| l.expected == Expectation::Reject && !disp[l.session_id.as_str()]));
    }
}

#[test]
fn generation_is_byte_deterministic() {
    let spec = GeneratorSpec::default_spec().scaled(0.05);
    let a = gen_corpus(&spec).unwrap();
    let b = gen_corpus(&spec).unwrap();
    assert_eq!(
        sha256_hex(a.speedtests_ndjson().as_bytes()),
        sha256_hex(b.speedtests_ndjson().as_bytes())
    );
    assert_eq!(a.traceroutes_ndjson(), b.traceroutes_ndjson());
    assert_eq!(a.as_path_snapshots, b.as_path_snapshots);

    let mut other = spec.clone();
    other.seed += 1;
    assert_ne!(gen_corpus(&other).unwrap().speedtests_ndjson(), a.speedtests_ndjson());
}

#[test]
fn written_corpus_round_trips_through_parsers() {
    use sno_scope::ingest::{parse_speedtest_stream, partition, Strictness};
    let corpus = gen_corpus(&GeneratorSpec::default_spec().scaled(0.02)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus.write_to(dir.path()).unwrap();
    assert!(manifest.files.contains_key("speedtests.ndjson"));
    let f = std::fs::File::open(dir.path().join("speedtests.ndjson")).unwrap();
    let (sessions, errs) = partition(parse_speedtest_stream(std::io::BufReader::new(f), Strictness::Strict));
    assert!(errs.is_empty());
    assert_eq!(sessions, corpus.sessions);
}
