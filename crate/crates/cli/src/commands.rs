use std::fs;
use std::io::{self, Write};
use std::path::Path;

use drugnet::export::{write_direct_pairs, write_edge_list, write_graphml, write_semimetric_pairs};
use drugnet::pipeline;
use drugnet::query::DEFAULT_ALPHA;
use drugnet::{
    generate_synthetic_corpus, run_query, ArtifactStore, PipelineConfig, PlantSpec, ProximityGraph, QuerySpec,
    Resolution, SemimetricScoring, TermClass,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    Cli, Command, ExportArgs, ExportFormat, GraphChoice, PcaArgs, QueryArgs, RankArgs, SemimetricArgs, ServeArgs,
    SynthArgs,
};
use crate::error::CliError;
use crate::server;

type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_path();
    match cli.command {
        Command::Ingest => stage(config, pipeline::ingest),
        Command::Tag => stage(config, pipeline::tag),
        Command::Build => stage(config, pipeline::build),
        Command::Closure => stage(config, pipeline::closure),
        Command::RankDirect(args) => rank_direct(config, args),
        Command::RankSemimetric(args) => rank_semimetric(config, args),
        Command::Pca(args) => pca(config, args),
        Command::Query(args) => query(config, args),
        Command::Export(args) => export(config, args),
        Command::Serve(args) => serve(config, args),
        Command::Synth(args) => synth(args),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    if !path.is_file() {
        return Err(CliError::new(
            "config",
            format!("config file {} not found (pass --config)", path.display()),
        ));
    }
    Ok(PipelineConfig::load(path)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn stage<T: Serialize>(
    config: &Path,
    f: impl FnOnce(&PipelineConfig, &mut ArtifactStore) -> drugnet::Result<T>,
) -> Result<()> {
    let config = load_config(config)?;
    let mut store = ArtifactStore::for_config(&config)?;
    print_json(&f(&config, &mut store)?)
}

/// The requested resolution if available, else week, else the first.
pub fn pick_resolution(requested: Option<Resolution>, available: &[Resolution]) -> Result<Resolution> {
    match requested {
        Some(r) if available.contains(&r) => Ok(r),
        Some(r) => Err(CliError::new(
            "unknown_resolution",
            format!("resolution {r} is not available (have: {})", list(available)),
        )),
        None if available.contains(&Resolution::Week) => Ok(Resolution::Week),
        None => available.first().copied().ok_or_else(|| CliError {
            kind: "missing_artifact",
            stage: Some("build"),
            message: "no resolution has been built (run `build` first)".into(),
        }),
    }
}

fn list(rs: &[Resolution]) -> String {
    let names: Vec<&str> = rs.iter().map(|r| r.as_str()).collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join(", ")
    }
}

/// Applies rank overrides and narrows the config to one resolution.
fn rank_config(config: &Path, args: &RankArgs) -> Result<(PipelineConfig, Resolution)> {
    let mut config = load_config(config)?;
    let res = pick_resolution(args.resolution, &config.resolutions)?;
    config.resolutions = vec![res];
    if let Some(k) = args.k {
        if k == 0 {
            return Err(CliError::usage("-k must be positive"));
        }
        config.top_k = k;
    }
    if let Some(f) = &args.filter {
        config.pair_filter = f.clone();
    }
    Ok((config, res))
}

fn rank_direct(config: &Path, args: RankArgs) -> Result<()> {
    let (config, res) = rank_config(config, &args)?;
    let mut store = ArtifactStore::for_config(&config)?;
    let pairs = pipeline::rank_direct(&config, &mut store)?
        .remove(&res)
        .unwrap_or_default();
    if args.json {
        print_json(&pairs)
    } else {
        Ok(write_direct_pairs(&pairs, io::stdout().lock())?)
    }
}

fn rank_semimetric(config: &Path, args: SemimetricArgs) -> Result<()> {
    let (mut config, res) = rank_config(config, &args.rank)?;
    if let Some(d) = args.absent_distance {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::usage(format!(
                "--absent-distance {d} must be positive and finite"
            )));
        }
        config.scoring = SemimetricScoring::AbsentAs(d);
    }
    let mut store = ArtifactStore::for_config(&config)?;
    let pairs = pipeline::rank_semimetric(&config, &mut store)?
        .remove(&res)
        .unwrap_or_default();
    if args.rank.json {
        print_json(&pairs)
    } else {
        Ok(write_semimetric_pairs(&pairs, io::stdout().lock())?)
    }
}

fn component_index(component: usize) -> Result<usize> {
    component
        .checked_sub(1)
        .ok_or_else(|| CliError::usage("components are numbered from 1"))
}

fn pca(config: &Path, args: PcaArgs) -> Result<()> {
    let mut config = load_config(config)?;
    let res = pick_resolution(args.resolution, &config.resolutions)?;
    config.resolutions = vec![res];
    let mut store = ArtifactStore::for_config(&config)?;
    let report = pipeline::pca(&config, &mut store)?
        .remove(&res)
        .expect("pca ran for the resolution");
    match args.component {
        Some(c) => {
            let tau = args.tau.unwrap_or(config.correlation_threshold);
            let (positive, negative) = report.component_terms(component_index(c)?, tau)?;
            print_json(&json!({
                "resolution": res,
                "component": c,
                "tau": tau,
                "explained_variance_ratio": report.explained_variance_ratio[c - 1],
                "positive": positive,
                "negative": negative,
            }))
        }
        None => print_json(&report),
    }
}

struct Reader {
    store: ArtifactStore,
    resolutions: Vec<Resolution>,
    alpha: f64,
}

/// A store opened for reading. Through a config, reads are verified against
/// the current inputs; a bare store directory only checks itself.
fn reading_store(config: &Path, store: Option<&Path>) -> Result<Reader> {
    match store {
        Some(dir) => {
            let store = ArtifactStore::open(dir)?;
            Ok(Reader {
                resolutions: store.built_resolutions(),
                store,
                alpha: DEFAULT_ALPHA,
            })
        }
        None => {
            let config = load_config(config)?;
            Ok(Reader {
                store: ArtifactStore::for_config(&config)?,
                resolutions: config.resolutions,
                alpha: config.alpha,
            })
        }
    }
}

fn load_graph(store: &ArtifactStore, res: Resolution, graph: GraphChoice) -> Result<ProximityGraph> {
    Ok(match graph {
        GraphChoice::Direct => pipeline::load_proximity(store, res)?,
        GraphChoice::Closed => pipeline::load_closed_proximity(store, res)?,
    })
}

fn query(config: &Path, args: QueryArgs) -> Result<()> {
    let reader = reading_store(config, args.store.as_deref())?;
    let res = pick_resolution(args.resolution, &reader.resolutions)?;
    let graph = load_graph(&reader.store, res, args.graph)?;
    let spec = QuerySpec::new(args.terms, args.phi, args.alpha.unwrap_or(reader.alpha)).on(args.graph.into());
    print_json(&run_query(&graph, &spec)?)
}

fn export(config: &Path, args: ExportArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.min_weight) {
        return Err(CliError::usage(format!(
            "--min-weight {} outside [0, 1]",
            args.min_weight
        )));
    }
    let Reader { store, resolutions, .. } = reading_store(config, args.store.as_deref())?;
    let res = pick_resolution(args.resolution, &resolutions)?;
    let graph = load_graph(&store, res, args.graph)?;

    let selected: Option<Vec<String>> = match (&args.terms, args.component) {
        (Some(terms), _) => Some(terms.clone()),
        (None, Some(c)) => {
            let report = pipeline::load_pca(&store, res)?;
            let tau = args.tau.unwrap_or(drugnet::spectra::DEFAULT_CORRELATION_THRESHOLD);
            let (pos, neg) = report.component_terms(component_index(c)?, tau)?;
            Some(pos.into_iter().chain(neg).map(|t| t.term).collect())
        }
        (None, None) if args.min_weight > 0.0 => Some(graph.terms().iter().map(|t| t.name.clone()).collect()),
        (None, None) => None,
    };
    let graph = match selected {
        Some(names) => graph.subgraph(&names, args.min_weight)?,
        None => graph,
    };

    let mut buf = Vec::new();
    match args.format {
        ExportFormat::Tsv => write_edge_list(&graph, &mut buf)?,
        ExportFormat::Graphml => write_graphml(&graph, &mut buf)?,
    }
    match &args.out {
        Some(path) => fs::write(path, buf).map_err(|e| CliError::new("io", format!("{}: {e}", path.display()))),
        None => Ok(io::stdout().lock().write_all(&buf)?),
    }
}

fn serve(config: &Path, args: ServeArgs) -> Result<()> {
    let root = match args.store {
        Some(dir) => dir,
        None => load_config(config)?.output,
    };
    let state = server::AppState::load(&ArtifactStore::open(root)?)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(state, args.bind))?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = PlantSpec::standard(
        args.users,
        args.posts,
        args.vocab,
        args.pairs,
        args.chains,
        args.co_rate,
        args.seed,
    )?;
    let corpus = generate_synthetic_corpus(&spec)?;
    let out = &args.out;
    fs::create_dir_all(out)?;

    let mut buf = Vec::new();
    drugnet::corpus::write_corpus(&mut buf, &corpus.timelines)?;
    fs::write(out.join("corpus.jsonl"), buf)?;
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
        fs::write(out.join(file), lines)?;
    }
    let config = "corpus = \"corpus.jsonl\"\n\
                  output = \"store\"\n\
                  drug = \"drug.txt\"\n\
                  symptom = \"symptom.txt\"\n\
                  natural_product = \"natural_product.txt\"\n\
                  resolutions = [\"day\", \"week\", \"month\"]\n";
    fs::write(out.join("drugnet.toml"), config)?;
    let truth = json!({
        "seed": spec.seed,
        "users": spec.n_users,
        "posts": spec.n_posts,
        "planted_pairs": spec.planted_pairs,
        "planted_chains": spec.planted_chains,
        "mentions": corpus.mentions,
    });
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    print_json(&json!({
        "out": out,
        "users": corpus.timelines.len(),
        "posts": corpus.timelines.iter().map(|t| t.len()).sum::<usize>(),
        "config": out.join("drugnet.toml"),
    }))
}
