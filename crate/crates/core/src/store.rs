//! On-disk artifact store with hash-verified reads.
//!
//! Every pipeline stage has a key (`tag`, `build/week`, ...) and a hash
//! computed from its parameters, its input file contents and the hash of the
//! stage it reads from. `manifest.json` records, for each stored file, the
//! stage hash that produced it and the file's SHA-256. A read fails unless the
//! file is intact and its stage hash matches the current one.
//!
//! A store opened from a config computes current hashes from the config. A
//! store opened read-only recomputes them from the parameters recorded in the
//! manifest, so a serving process needs no config file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{kind_key, PipelineConfig};
use crate::corpus::Resolution;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Tag,
    Build(Resolution),
    Closure(Resolution),
    RankDirect(Resolution),
    RankSemimetric(Resolution),
    Pca(Resolution),
}

impl Stage {
    /// CLI subcommand that produces this stage's artifacts.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Tag => "tag",
            Stage::Build(_) => "build",
            Stage::Closure(_) => "closure",
            Stage::RankDirect(_) => "rank-direct",
            Stage::RankSemimetric(_) => "rank-semimetric",
            Stage::Pca(_) => "pca",
        }
    }

    pub fn resolution(self) -> Option<Resolution> {
        match self {
            Stage::Ingest | Stage::Tag => None,
            Stage::Build(r) | Stage::Closure(r) | Stage::RankDirect(r) | Stage::RankSemimetric(r) | Stage::Pca(r) => {
                Some(r)
            }
        }
    }

    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Tag => Some(Stage::Ingest),
            Stage::Build(_) => Some(Stage::Tag),
            Stage::Closure(r) | Stage::RankDirect(r) | Stage::Pca(r) => Some(Stage::Build(r)),
            Stage::RankSemimetric(r) => Some(Stage::Closure(r)),
        }
    }

    fn parse(key: &str) -> Option<Stage> {
        let (name, res) = match key.split_once('/') {
            Some((n, r)) => (n, Some(r.parse::<Resolution>().ok()?)),
            None => (key, None),
        };
        Some(match (name, res) {
            ("ingest", None) => Stage::Ingest,
            ("tag", None) => Stage::Tag,
            ("build", Some(r)) => Stage::Build(r),
            ("closure", Some(r)) => Stage::Closure(r),
            ("rank-direct", Some(r)) => Stage::RankDirect(r),
            ("rank-semimetric", Some(r)) => Stage::RankSemimetric(r),
            ("pca", Some(r)) => Stage::Pca(r),
            _ => return None,
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.resolution() {
            Some(r) => write!(f, "{}/{r}", self.command()),
            None => f.write_str(self.command()),
        }
    }
}

/// Paths of the files each stage writes, relative to the store root.
pub mod paths {
    use crate::corpus::Resolution;

    pub const CORPUS: &str = "corpus.jsonl";
    pub const LOAD_REPORT: &str = "load_report.json";
    pub const TAGS: &str = "tags.jsonl";
    pub const FREQUENCIES: &str = "frequencies.tsv";
    pub const TAG_REPORT: &str = "tag_report.json";

    pub fn cooccurrence(r: Resolution) -> String {
        format!("{r}/cooccurrence.tsv")
    }
    pub fn proximity(r: Resolution) -> String {
        format!("{r}/proximity.tsv")
    }
    pub fn graphml(r: Resolution) -> String {
        format!("{r}/network.graphml")
    }
    pub fn closure(r: Resolution) -> String {
        format!("{r}/closure.tsv")
    }
    pub fn closed_proximity(r: Resolution) -> String {
        format!("{r}/closed_proximity.tsv")
    }
    pub fn pairs_direct(r: Resolution) -> String {
        format!("{r}/pairs_direct.tsv")
    }
    pub fn pairs_semimetric(r: Resolution) -> String {
        format!("{r}/pairs_semimetric.tsv")
    }
    pub fn pca(r: Resolution) -> String {
        format!("{r}/pca.json")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params: Value,
    pub upstream: Option<String>,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub stage: String,
    pub config_hash: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn stage_hash(stage: &str, params: &Value, upstream_hash: Option<&str>) -> String {
    let canonical = json!({ "stage": stage, "params": params, "upstream": upstream_hash });
    sha256_hex(canonical.to_string().as_bytes())
}

fn stage_params(config: &PipelineConfig, stage: Stage) -> Result<Value> {
    Ok(match stage {
        Stage::Ingest => json!({ "corpus_sha256": file_sha256(&config.corpus)? }),
        Stage::Tag => {
            let mut dicts = serde_json::Map::new();
            for (kind, path) in &config.dictionaries {
                dicts.insert(kind_key(*kind).to_string(), Value::String(file_sha256(path)?));
            }
            let stoplist = match &config.stoplist {
                Some(p) => Value::String(file_sha256(p)?),
                None => Value::Null,
            };
            json!({ "dictionaries": dicts, "stoplist_sha256": stoplist })
        }
        Stage::Build(r) => json!({ "resolution": r, "support_threshold": config.support_threshold }),
        Stage::Closure(r) => json!({ "resolution": r }),
        Stage::RankDirect(r) => json!({
            "resolution": r,
            "top_k": config.top_k,
            "filter": config.pair_filter.to_string(),
        }),
        Stage::RankSemimetric(r) => json!({
            "resolution": r,
            "top_k": config.top_k,
            "filter": config.pair_filter.to_string(),
            "scoring": config.scoring,
        }),
        Stage::Pca(r) => json!({ "resolution": r, "n_components": config.pca_components }),
    })
}

/// Stage records for every stage a config defines.
fn config_stages(config: &PipelineConfig) -> Result<BTreeMap<Stage, StageRecord>> {
    let mut stages = vec![Stage::Ingest, Stage::Tag];
    for &r in &config.resolutions {
        stages.extend([
            Stage::Build(r),
            Stage::Closure(r),
            Stage::RankDirect(r),
            Stage::RankSemimetric(r),
            Stage::Pca(r),
        ]);
    }
    let mut out: BTreeMap<Stage, StageRecord> = BTreeMap::new();
    // upstream stages come first in `stages`
    for stage in stages {
        let params = stage_params(config, stage)?;
        let upstream = stage.upstream();
        let up_hash = upstream.map(|u| out[&u].hash.clone());
        let hash = stage_hash(&stage.to_string(), &params, up_hash.as_deref());
        out.insert(
            stage,
            StageRecord {
                params,
                upstream: upstream.map(|u| u.to_string()),
                hash,
            },
        );
    }
    Ok(out)
}

#[derive(Debug)]
enum Mode {
    Writable(BTreeMap<Stage, StageRecord>),
    ReadOnly,
}

#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    manifest: Manifest,
    mode: Mode,
}

impl ArtifactStore {
    /// Opens (creating if needed) the store at `config.output` for pipeline
    /// runs. Input files must exist.
    pub fn for_config(config: &PipelineConfig) -> Result<Self> {
        config.check_inputs()?;
        let stages = config_stages(config)?;
        fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
        let manifest = read_manifest(&config.output)?.unwrap_or_default();
        Ok(ArtifactStore {
            root: config.output.clone(),
            manifest,
            mode: Mode::Writable(stages),
        })
    }

    /// Opens an existing store for reading; current stage hashes come from the
    /// manifest itself.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = read_manifest(&root)?.ok_or_else(|| Error::MissingArtifact {
            stage: "ingest",
            artifact: root.join(MANIFEST).display().to_string(),
        })?;
        Ok(ArtifactStore {
            root,
            manifest,
            mode: Mode::ReadOnly,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Resolutions with a verified build.
    pub fn built_resolutions(&self) -> Vec<Resolution> {
        Resolution::ALL
            .into_iter()
            .filter(|&r| self.verify(Stage::Build(r), &paths::cooccurrence(r)).is_ok())
            .collect()
    }

    /// Parameters the stage runs (or ran) with.
    pub fn stage_params(&self, stage: Stage) -> Option<&Value> {
        match &self.mode {
            Mode::Writable(stages) => stages.get(&stage).map(|s| &s.params),
            Mode::ReadOnly => self.manifest.stages.get(&stage.to_string()).map(|s| &s.params),
        }
    }

    fn current_hash(&self, stage: Stage) -> Result<String> {
        match &self.mode {
            Mode::Writable(stages) => stages
                .get(&stage)
                .map(|s| s.hash.clone())
                .ok_or_else(|| Error::Config(format!("stage {stage} is not part of this configuration"))),
            Mode::ReadOnly => self.recorded_hash(&stage.to_string(), 0),
        }
    }

    /// Recomputes a recorded stage hash from its params and upstream chain.
    fn recorded_hash(&self, key: &str, depth: usize) -> Result<String> {
        let missing = || Error::MissingArtifact {
            stage: Stage::parse(key).map_or("ingest", Stage::command),
            artifact: format!("{key} stage record"),
        };
        let record = self.manifest.stages.get(key).ok_or_else(missing)?;
        let up_hash = match &record.upstream {
            Some(up) if depth < 16 => Some(self.recorded_hash(up, depth + 1)?),
            Some(_) => return Err(Error::artifact(MANIFEST, "stage chain too deep")),
            None => None,
        };
        let expected = stage_hash(key, &record.params, up_hash.as_deref());
        if expected != record.hash {
            return Err(Error::StaleArtifact {
                artifact: key.to_string(),
                reason: format!(
                    "its inputs changed since it ran; rerun `{}`",
                    Stage::parse(key).map_or("ingest", Stage::command)
                ),
            });
        }
        Ok(expected)
    }

    fn verify(&self, stage: Stage, rel: &str) -> Result<Vec<u8>> {
        let missing = || Error::MissingArtifact {
            stage: stage.command(),
            artifact: rel.to_string(),
        };
        let record = self.manifest.artifacts.get(rel).ok_or_else(missing)?;
        let path = self.root.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(Error::io(path, e)),
        };
        if sha256_hex(&bytes) != record.sha256 {
            return Err(Error::StaleArtifact {
                artifact: rel.to_string(),
                reason: format!("contents changed after it was written; rerun `{}`", stage.command()),
            });
        }
        if record.stage != stage.to_string() || record.config_hash != self.current_hash(stage)? {
            return Err(Error::StaleArtifact {
                artifact: rel.to_string(),
                reason: format!("produced under a different configuration; rerun `{}`", stage.command()),
            });
        }
        Ok(bytes)
    }

    /// Reads and verifies an artifact.
    pub fn read(&self, stage: Stage, rel: &str) -> Result<Vec<u8>> {
        self.verify(stage, rel)
    }

    pub fn read_string(&self, stage: Stage, rel: &str) -> Result<String> {
        String::from_utf8(self.read(stage, rel)?).map_err(|_| Error::artifact(rel, "not valid UTF-8"))
    }

    /// Writes an artifact and records it in the manifest.
    pub fn write(&mut self, stage: Stage, rel: &str, bytes: &[u8]) -> Result<()> {
        let record = match &self.mode {
            Mode::Writable(stages) => stages
                .get(&stage)
                .cloned()
                .ok_or_else(|| Error::Config(format!("stage {stage} is not part of this configuration")))?,
            Mode::ReadOnly => return Err(Error::Config("store was opened read-only".into())),
        };
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_atomic(&path, bytes)?;
        self.manifest.artifacts.insert(
            rel.to_string(),
            ArtifactRecord {
                stage: stage.to_string(),
                config_hash: record.hash.clone(),
                sha256: sha256_hex(bytes),
            },
        );
        // keep upstream records so read-only opens can verify the chain
        let mut cursor = Some(stage);
        while let Some(s) = cursor {
            if let Mode::Writable(stages) = &self.mode {
                self.manifest.stages.insert(s.to_string(), stages[&s].clone());
            }
            cursor = s.upstream();
        }
        self.save_manifest()
    }

    fn save_manifest(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST), text.as_bytes())
    }
}

fn read_manifest(root: &Path) -> Result<Option<Manifest>> {
    let path = root.join(MANIFEST);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| Error::artifact(MANIFEST, e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
