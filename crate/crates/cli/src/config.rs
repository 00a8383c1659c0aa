//! Flat key=value run configuration: parsing, schema validation, canonical
//! text, and the SHA-256 digest that pairs checkpoints with their configs.
//!
//! Format: UTF-8 text, one `key = value` pair per line, `#` starts a
//! comment; list values are space-separated. Unknown keys are rejected and
//! missing required keys are reported all at once. The canonical text is the
//! parsed pairs sorted by key, one `key=value` line each; the digest is the
//! SHA-256 of those bytes, so comments and ordering never affect pairing.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Static key schema. Dynamic keys (`ood.<set>.kind`, `ood.<set>.offset`,
/// `ood.<set>.n`) are validated against the declared `ood.sets`.
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "dataset.kind",
    "dataset.idx.train_images",
    "dataset.idx.train_labels",
    "dataset.idx.test_images",
    "dataset.idx.test_labels",
    "dataset.gm.classes",
    "dataset.gm.dim",
    "dataset.gm.train_per_class",
    "dataset.gm.test_per_class",
    "dataset.gm.separation",
    "dataset.gm.spread",
    "dataset.val_fraction",
    "dataset.holdout_classes",
    "dataset.export_split",
    "model.hidden",
    "sparsity.sparsity",
    "sparsity.method",
    "sparsity.initial_fraction",
    "sparsity.freeze_point",
    "sparsity.update_interval",
    "moon.enabled",
    "moon.t_e",
    "moon.w_f",
    "moon.r",
    "moon.alpha",
    "moon.stop_gradient",
    "train.epochs",
    "train.batch_size",
    "train.lr_max",
    "train.lr_min",
    "train.momentum",
    "ood.sets",
    "ood.detectors",
    "ood.odin.temperature",
    "ood.odin.epsilon",
    "ood.ebo.temperature",
    "ood.knn.k",
    "ood.include_unknown_dim",
    "theory.dim",
    "theory.mean_distance",
    "theory.spread",
    "theory.train_per_class",
    "theory.val_per_class",
    "theory.anchors",
    "theory.radius",
    "theory.eta",
    "theory.samples",
    "theory.seeds",
    "theory.ood_offset",
    "theory.ood_n",
];

const OOD_SET_SUFFIXES: &[&str] = &["kind", "offset", "n"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pairs: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected key = value, got {:?}",
                    lineno + 1,
                    raw
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(CliError::config(format!("line {}: empty key", lineno + 1)));
            }
            if pairs.insert(key.clone(), value).is_some() {
                return Err(CliError::config(format!(
                    "line {}: duplicate key {}",
                    lineno + 1,
                    key
                )));
            }
        }
        let cfg = Self { pairs };
        cfg.reject_unknown_keys()?;
        Ok(cfg)
    }

    fn reject_unknown_keys(&self) -> Result<(), CliError> {
        let set_names = self.list_str("ood.sets").unwrap_or_default();
        let mut unknown = Vec::new();
        for key in self.pairs.keys() {
            if KNOWN_KEYS.contains(&key.as_str()) {
                continue;
            }
            let dynamic_ok = key
                .strip_prefix("ood.")
                .and_then(|rest| rest.split_once('.'))
                .map(|(name, suffix)| {
                    set_names.iter().any(|s| s == name) && OOD_SET_SUFFIXES.contains(&suffix)
                })
                .unwrap_or(false);
            if !dynamic_ok {
                unknown.push(key.clone());
            }
        }
        if !unknown.is_empty() {
            return Err(CliError::config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        Ok(())
    }

    /// Reports every missing required key at once.
    pub fn require(&self, keys: &[&str]) -> Result<(), CliError> {
        let missing: Vec<&str> = keys
            .iter()
            .filter(|k| !self.pairs.contains_key(**k))
            .copied()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!(
                "missing required keys: {}",
                missing.join(", ")
            )))
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.pairs.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.pairs
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| CliError::config(format!("missing key {}", key)))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.pairs.get(key).map(|s| s.as_str()).unwrap_or(default)
    }

    fn parse_with<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T, CliError> {
        value.parse::<T>().map_err(|_| {
            CliError::config(format!(
                "key {}: cannot parse {:?} as {}",
                key,
                value,
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parse_with(key, self.str(key)?)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.pairs.get(key) {
            Some(v) => self.parse_with(key, v),
            None => Ok(default),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parse_with(key, self.str(key)?)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.pairs.get(key) {
            Some(v) => self.parse_with(key, v),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.pairs.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(CliError::config(format!(
                "key {}: expected true or false, got {:?}",
                key, other
            ))),
        }
    }

    pub fn list_str(&self, key: &str) -> Option<Vec<String>> {
        self.pairs
            .get(key)
            .map(|v| v.split_whitespace().map(str::to_string).collect())
    }

    pub fn list_usize(&self, key: &str) -> Result<Vec<usize>, CliError> {
        match self.pairs.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split_whitespace()
                .map(|tok| self.parse_with::<usize>(key, tok))
                .collect(),
        }
    }

    pub fn list_u64(&self, key: &str) -> Result<Vec<u64>, CliError> {
        match self.pairs.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split_whitespace()
                .map(|tok| self.parse_with::<u64>(key, tok))
                .collect(),
        }
    }

    /// Sorted `key=value` lines; the digest input and the config-echo body.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_text().as_bytes());
        hasher.finalize().into()
    }
}
