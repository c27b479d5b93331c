#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use drugnet::corpus::write_corpus;
use drugnet::{generate_synthetic_corpus, pipeline, PipelineConfig, PlantSpec, SyntheticCorpus, TermClass};
use serde_json::Value;

pub fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.json"));
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn assert_schema(name: &str, instance: &Value) {
    let schema = schema(name);
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:#?}");
}

pub fn small_spec(seed: u64) -> PlantSpec {
    PlantSpec::standard(80, 8_000, 40, 2, 1, 0.8, seed).unwrap()
}

/// Writes corpus, dictionaries and `drugnet.toml` for `spec` into `dir`.
pub fn write_inputs(dir: &Path, spec: &PlantSpec) -> (PathBuf, SyntheticCorpus) {
    let corpus = generate_synthetic_corpus(spec).unwrap();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus.timelines).unwrap();
    fs::write(dir.join("corpus.jsonl"), buf).unwrap();
    for (class, file) in [
        (TermClass::Drug, "drug.txt"),
        (TermClass::Symptom, "symptom.txt"),
        (TermClass::NaturalProduct, "natural_product.txt"),
    ] {
        let lines: String = spec
            .vocab
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(t, _)| format!("{t}\n"))
            .collect();
        fs::write(dir.join(file), lines).unwrap();
    }
    let config = dir.join("drugnet.toml");
    fs::write(
        &config,
        "corpus = \"corpus.jsonl\"\noutput = \"store\"\ndrug = \"drug.txt\"\nsymptom = \"symptom.txt\"\n\
         natural_product = \"natural_product.txt\"\nresolutions = [\"day\", \"week\", \"month\"]\npca_components = 5\n",
    )
    .unwrap();
    (config, corpus)
}

/// A fully built store for `small_spec(seed)`.
pub fn built_store(dir: &Path, seed: u64) -> (PipelineConfig, SyntheticCorpus) {
    let (config_path, corpus) = write_inputs(dir, &small_spec(seed));
    let config = PipelineConfig::load(config_path).unwrap();
    pipeline::run_all(&config).unwrap();
    (config, corpus)
}
