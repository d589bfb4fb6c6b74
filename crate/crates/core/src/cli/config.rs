use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::BandTable;
use crate::filter::{FilterConfig, DEFAULT_GLOBAL_FLOOR_MS, DEFAULT_MIN_TESTS};
use crate::profiling::ClassifierConfig;
use crate::starlink::{ShiftConfig, CGN_GATEWAY};

use super::CliError;

/// Input file locations. Any of them may also be discovered from
/// `--input` paths by name or content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub speedtests: Option<PathBuf>,
    pub traceroutes: Option<PathBuf>,
    /// `dispositions.ndjson` from an earlier classify run.
    pub dispositions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub pop_table: Option<PathBuf>,
    pub rdns: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// One file per snapshot; the file stem is the snapshot label.
    pub as_paths: Vec<PathBuf>,
    /// Generator spec for `synth`.
    pub spec: Option<PathBuf>,
}

impl InputPaths {
    pub(crate) fn all(&self) -> Vec<&Path> {
        let singles = [
            &self.speedtests,
            &self.traceroutes,
            &self.dispositions,
            &self.catalog,
            &self.registry,
            &self.pop_table,
            &self.rdns,
            &self.ground_truth,
            &self.spec,
        ];
        singles
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .chain(self.as_paths.iter().map(PathBuf::as_path))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub dominance: f64,
    pub terrestrial_ms: f64,
    pub min_samples: usize,
    pub min_prominence: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let d = ClassifierConfig::default();
        Self {
            dominance: d.dominance,
            terrestrial_ms: d.terrestrial_ms,
            min_samples: d.min_samples,
            min_prominence: d.min_prominence,
        }
    }
}

/// Everything a run needs besides the subcommand. Loaded from `--config`
/// and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub out: Option<PathBuf>,
    pub bands: BandTable,
    pub min_tests: usize,
    pub global_floor_ms: f64,
    pub classifier: ClassifierSettings,
    pub shift: ShiftConfig,
    pub gateway: IpAddr,
    /// Worker threads; `None` uses one per core.
    pub parallelism: Option<usize>,
    /// Overrides the generator spec's seed.
    pub seed: Option<u64>,
    pub strict_parsing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            out: None,
            bands: BandTable::default(),
            min_tests: DEFAULT_MIN_TESTS,
            global_floor_ms: DEFAULT_GLOBAL_FLOOR_MS,
            classifier: ClassifierSettings::default(),
            shift: ShiftConfig::default(),
            gateway: CGN_GATEWAY,
            parallelism: None,
            seed: None,
            strict_parsing: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            bands: self.bands,
            min_tests: self.min_tests,
            global_floor_ms: self.global_floor_ms,
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        let c = self.classifier;
        ClassifierConfig {
            bands: self.bands,
            dominance: c.dominance,
            terrestrial_ms: c.terrestrial_ms,
            min_samples: c.min_samples,
            min_prominence: c.min_prominence,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        BandTable::new(self.bands.meo_floor_ms, self.bands.geo_floor_ms)?;
        self.filter_config().validate()?;
        self.classifier_config().validate()?;
        if !(self.shift.threshold > 0.0 && self.shift.threshold.is_finite()) {
            return Err(format!(
                "shift threshold must be positive, got {}",
                self.shift.threshold
            ));
        }
        if self.shift.window < 2 {
            return Err("shift window must be >= 2".into());
        }
        if self.parallelism == Some(0) {
            return Err("parallelism must be >= 1".into());
        }
        let inputs = self.inputs.all();
        let mut seen = BTreeSet::new();
        for p in &inputs {
            if !seen.insert(*p) {
                return Err(format!("input {} given twice", p.display()));
            }
        }
        if let Some(out) = &self.out {
            if let Some(p) = inputs.iter().find(|p| *p == out) {
                return Err(format!("output {} is also an input", p.display()));
            }
        }
        Ok(())
    }
}
