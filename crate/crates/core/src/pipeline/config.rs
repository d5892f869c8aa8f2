use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::meta::{Grid, DEFAULT_FOLDS};
use crate::model::{Measure, Similarity, DEFAULT_K};
use crate::predictors::names;
use crate::predictors::{kmeans::DEFAULT_CLUSTERS, post};

pub const ENV_PREFIX: &str = "IQPP_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub collection: PathBuf,
    pub queries: PathBuf,
    #[serde(default)]
    pub similarity: Similarity,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScores {
    pub path: PathBuf,
    /// Restricts the file to one system; by default it applies to all.
    #[serde(default)]
    pub system: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassHeadConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for ClassHeadConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-4,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureRemovalConfig {
    /// Dimensions removed per iteration (m).
    pub m: usize,
    /// Iterations (l).
    pub l: usize,
}

impl Default for FeatureRemovalConfig {
    fn default() -> Self {
        Self {
            m: post::DEFAULT_REMOVED_PER_STEP,
            l: post::DEFAULT_REMOVAL_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    pub folds: usize,
    pub inner_folds: usize,
    pub grid: Grid,
    /// Reuse a published fold assignment instead of drawing one.
    pub folds_file: Option<PathBuf>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            inner_folds: 3,
            grid: Grid::default(),
            folds_file: None,
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_measures() -> Vec<Measure> {
    vec![Measure::AveragePrecision, Measure::PrecisionAt(DEFAULT_K)]
}

fn default_predictors() -> Vec<String> {
    names::BUILTIN.iter().map(|s| s.to_string()).collect()
}

fn default_alpha() -> f64 {
    0.01
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub systems: Vec<SystemConfig>,
    pub qrels: PathBuf,
    #[serde(default)]
    pub detections: Option<PathBuf>,
    #[serde(default)]
    pub external_scores: Vec<ExternalScores>,
    #[serde(default = "default_predictors")]
    pub predictors: Vec<String>,
    #[serde(default = "default_measures")]
    pub measures: Vec<Measure>,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default)]
    pub class_head: ClassHeadConfig,
    #[serde(default)]
    pub feature_removal: FeatureRemovalConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every core. Results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Sets `path` (already split on `__`, lower-cased) inside `root`.
fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for key in parents {
        node = match node {
            Value::Object(map) => map
                .entry(key.clone())
                .or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` is not an array index")))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| Error::Config(format!("index {i} out of range")))?
            }
            _ => return Err(Error::Config(format!("cannot descend into `{key}`"))),
        };
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), value);
        }
        Value::Array(items) => {
            let i: usize = last
                .parse()
                .map_err(|_| Error::Config(format!("`{last}` is not an array index")))?;
            *items
                .get_mut(i)
                .ok_or_else(|| Error::Config(format!("index {i} out of range")))? = value;
        }
        _ => return Err(Error::Config(format!("cannot set `{last}`"))),
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    /// Reads a JSON config, applies `IQPP_*` environment overrides and
    /// resolves relative paths against the config file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base, std::env::vars())
    }

    /// `IQPP_SEED=3` sets `seed`; `__` separates nested keys, as in
    /// `IQPP_KMEANS__CLUSTERS=100` or `IQPP_SYSTEMS__0__K=50`. Values are
    /// parsed as JSON, falling back to a plain string.
    pub fn from_json(
        text: &str,
        base: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..]
                .split("__")
                .map(str::to_ascii_lowercase)
                .collect();
            let v = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            set_path(&mut value, &path, v)?;
        }
        let mut config: Config =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.systems {
            resolve(base, &mut s.collection);
            resolve(base, &mut s.queries);
        }
        resolve(base, &mut self.qrels);
        if let Some(d) = &mut self.detections {
            resolve(base, d);
        }
        for e in &mut self.external_scores {
            resolve(base, &mut e.path);
        }
        if let Some(f) = &mut self.meta.folds_file {
            resolve(base, f);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.systems.is_empty() {
            return bad("at least one system is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.systems {
            if s.name.is_empty() || s.name.contains(['/', '\\', '\t', ',']) {
                return bad(format!("invalid system name `{}`", s.name));
            }
            if !seen.insert(&s.name) {
                return bad(format!("duplicate system `{}`", s.name));
            }
            if s.k == 0 {
                return bad(format!("system `{}`: k must be >= 1", s.name));
            }
        }
        for p in &self.predictors {
            if !names::BUILTIN.contains(&p.as_str()) {
                return bad(format!("unknown predictor `{p}`"));
            }
        }
        for e in &self.external_scores {
            if let Some(s) = &e.system {
                if !self.systems.iter().any(|x| &x.name == s) {
                    return bad(format!("external scores name unknown system `{s}`"));
                }
            }
        }
        if self.measures.is_empty() {
            return bad("at least one measure is required".into());
        }
        if self.kmeans.clusters == 0 {
            return bad("kmeans.clusters must be >= 1".into());
        }
        if self.class_head.batch_size == 0 {
            return bad("class_head.batch_size must be >= 1".into());
        }
        if self.feature_removal.m == 0 {
            return bad("feature_removal.m must be >= 1".into());
        }
        if self.meta.folds < 2 || self.meta.inner_folds < 2 {
            return bad("meta.folds and meta.inner_folds must be >= 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }

    pub fn wants(&self, predictor: &str) -> bool {
        self.predictors.iter().any(|p| p == predictor)
    }

    /// SHA-256 over the canonical JSON of every setting that can change a
    /// result; the output directory and thread count are left out.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
            map.remove("threads");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
