//! Pipeline configuration, read from a TOML key-value file.
//!
//! Relative paths resolve against the directory holding the config file.
//!
//! ```toml
//! corpus = "posts.jsonl"
//! output = "store"
//! drug = "dict/drug.txt"
//! symptom = "dict/symptom.txt"
//! natural_product = "dict/natural_product.txt"
//! cannabis = "dict/cannabis.txt"
//! stoplist = "dict/stoplist.txt"
//! resolutions = ["day", "week", "month"]
//! support_threshold = 10
//! pca_components = 10
//! alpha = 0.05
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closure::{ClassFilter, SemimetricScoring};
use crate::corpus::Resolution;
use crate::error::{Error, Result};
use crate::lexicon::DictionaryKind;
use crate::netgraph::DEFAULT_SUPPORT;
use crate::query::DEFAULT_ALPHA;
use crate::spectra::DEFAULT_CORRELATION_THRESHOLD;

pub const DEFAULT_TOP_K: usize = 25;
pub const DEFAULT_PCA_COMPONENTS: usize = 10;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    corpus: PathBuf,
    output: PathBuf,
    drug: Option<PathBuf>,
    symptom: Option<PathBuf>,
    natural_product: Option<PathBuf>,
    cannabis: Option<PathBuf>,
    stoplist: Option<PathBuf>,
    resolutions: Option<Vec<Resolution>>,
    support_threshold: Option<u64>,
    pca_components: Option<usize>,
    alpha: Option<f64>,
    correlation_threshold: Option<f64>,
    top_k: Option<usize>,
    pair_filter: Option<String>,
    /// When set, pairs without a direct edge are ranked as if their direct
    /// distance were this value instead of forming a separate tier.
    absent_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub dictionaries: Vec<(DictionaryKind, PathBuf)>,
    pub stoplist: Option<PathBuf>,
    pub resolutions: Vec<Resolution>,
    pub support_threshold: u64,
    pub pca_components: usize,
    pub alpha: f64,
    pub correlation_threshold: f64,
    pub top_k: usize,
    pub pair_filter: ClassFilter,
    pub scoring: SemimetricScoring,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let dictionaries: Vec<(DictionaryKind, PathBuf)> = [
            (DictionaryKind::Drug, raw.drug),
            (DictionaryKind::Symptom, raw.symptom),
            (DictionaryKind::NaturalProduct, raw.natural_product),
            (DictionaryKind::Cannabis, raw.cannabis),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.map(|p| (k, resolve(p))))
        .collect();

        let mut resolutions = raw.resolutions.unwrap_or_else(|| Resolution::ALL.to_vec());
        resolutions.sort();
        resolutions.dedup();

        let config = PipelineConfig {
            corpus: resolve(raw.corpus),
            output: resolve(raw.output),
            dictionaries,
            stoplist: raw.stoplist.map(resolve),
            resolutions,
            support_threshold: raw.support_threshold.unwrap_or(DEFAULT_SUPPORT),
            pca_components: raw.pca_components.unwrap_or(DEFAULT_PCA_COMPONENTS),
            alpha: raw.alpha.unwrap_or(DEFAULT_ALPHA),
            correlation_threshold: raw.correlation_threshold.unwrap_or(DEFAULT_CORRELATION_THRESHOLD),
            top_k: raw.top_k.unwrap_or(DEFAULT_TOP_K),
            pair_filter: match raw.pair_filter {
                Some(f) => f.parse()?,
                None => ClassFilter::any(),
            },
            scoring: match raw.absent_distance {
                Some(d) => SemimetricScoring::AbsentAs(d),
                None => SemimetricScoring::Tiered,
            },
        };
        config.check_values()?;
        Ok(config)
    }

    fn check_values(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.resolutions.is_empty() {
            return bad("resolutions must not be empty".into());
        }
        if self.dictionaries.is_empty() {
            return bad("at least one dictionary (drug, symptom, natural_product, cannabis) is required".into());
        }
        if self.pca_components == 0 {
            return bad("pca_components must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return bad(format!(
                "correlation_threshold {} outside (0, 1]",
                self.correlation_threshold
            ));
        }
        if self.top_k == 0 {
            return bad("top_k must be positive".into());
        }
        if let SemimetricScoring::AbsentAs(d) = self.scoring {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("absent_distance {d} must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Checks that every input file exists.
    pub fn check_inputs(&self) -> Result<()> {
        let inputs = std::iter::once(("corpus", &self.corpus))
            .chain(self.dictionaries.iter().map(|(k, p)| (kind_key(*k), p)))
            .chain(self.stoplist.iter().map(|p| ("stoplist", p)));
        for (key, path) in inputs {
            if !path.is_file() {
                return Err(Error::Config(format!("{key} file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// Renders the config as TOML with paths relative to `base` where possible.
    pub fn to_toml(&self, base: &Path) -> String {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .map(Path::to_path_buf)
                .unwrap_or_else(|_| p.to_path_buf())
        };
        let dict = |kind| self.dictionaries.iter().find(|(k, _)| *k == kind).map(|(_, p)| rel(p));
        let raw = RawConfig {
            corpus: rel(&self.corpus),
            output: rel(&self.output),
            drug: dict(DictionaryKind::Drug),
            symptom: dict(DictionaryKind::Symptom),
            natural_product: dict(DictionaryKind::NaturalProduct),
            cannabis: dict(DictionaryKind::Cannabis),
            stoplist: self.stoplist.as_deref().map(rel),
            resolutions: Some(self.resolutions.clone()),
            support_threshold: Some(self.support_threshold),
            pca_components: Some(self.pca_components),
            alpha: Some(self.alpha),
            correlation_threshold: Some(self.correlation_threshold),
            top_k: Some(self.top_k),
            pair_filter: Some(self.pair_filter.to_string()),
            absent_distance: match self.scoring {
                SemimetricScoring::AbsentAs(d) => Some(d),
                SemimetricScoring::Tiered => None,
            },
        };
        toml::to_string(&raw).expect("config serializes")
    }
}

pub(crate) fn kind_key(kind: DictionaryKind) -> &'static str {
    match kind {
        DictionaryKind::Drug => "drug",
        DictionaryKind::Symptom => "symptom",
        DictionaryKind::NaturalProduct => "natural_product",
        DictionaryKind::Cannabis => "cannabis",
    }
}
