//! Command-line front end: argument model, config layering and the
//! subcommand implementations behind the `tkge` binary.

pub mod config;
pub mod query;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tkge::dataset::{
    compute_binning, parse_facts_into, read_graph_cache, write_graph_cache, Fact, TemporalGraph, Vocab,
};
use tkge::eval::{evaluate, generate_synthetic, write_embeddings_csv, write_metrics_csv, EvalOptions, SyntheticSpec, Task};
use tkge::model::{load_checkpoint, save_checkpoint, Query};
use tkge::sampler::SamplerConfig;
use tkge::trainer::{fit, TrainConfig};
use tkge::ModelState;

pub use config::RunConfig;
use query::{Missing, PredictQuery, When};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "tkge", version, about = "Temporal knowledge-graph embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides for [`RunConfig`]. Unset flags fall through to the config file,
/// then to the defaults.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// key=value file applied before the flags
    #[arg(long, global = true, env = "TKGE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "TKGE_GAMMA", allow_negative_numbers = true)]
    pub gamma: Option<String>,
    #[arg(long, global = true, env = "TKGE_ALPHA", allow_negative_numbers = true)]
    pub alpha: Option<String>,
    #[arg(long, global = true, env = "TKGE_BETA", allow_negative_numbers = true)]
    pub beta: Option<String>,
    #[arg(long, global = true, env = "TKGE_XI", allow_negative_numbers = true)]
    pub xi: Option<String>,
    #[arg(long, global = true, env = "TKGE_PSI", allow_negative_numbers = true)]
    pub psi: Option<String>,
    #[arg(long, global = true, env = "TKGE_KAPPA", allow_negative_numbers = true)]
    pub kappa: Option<String>,
    #[arg(long, global = true, env = "TKGE_EPSILON", allow_negative_numbers = true)]
    pub epsilon: Option<String>,
    #[arg(long, global = true, env = "TKGE_M", allow_negative_numbers = true)]
    pub m: Option<String>,
    #[arg(long, global = true, env = "TKGE_D", allow_negative_numbers = true)]
    pub d: Option<String>,
    /// l2 or l1
    #[arg(long, global = true, env = "TKGE_NORM")]
    pub norm: Option<String>,
    /// rtge, rtge-s, rtge-n, hyte or transe
    #[arg(long, global = true, env = "TKGE_MODE")]
    pub mode: Option<String>,
    #[arg(long, global = true, env = "TKGE_SEED", allow_negative_numbers = true)]
    pub seed: Option<String>,
    #[arg(long, global = true, env = "TKGE_FILTERED", num_args = 0..=1, default_missing_value = "true")]
    pub filtered: Option<String>,
    #[arg(long, global = true, env = "TKGE_MIN_TRIPLES", allow_negative_numbers = true)]
    pub min_triples: Option<String>,
    /// bin or global
    #[arg(long, global = true, env = "TKGE_NEG_FILTER")]
    pub neg_filter: Option<String>,
    #[arg(long, global = true, env = "TKGE_BATCH_SIZE", allow_negative_numbers = true)]
    pub batch_size: Option<String>,
    #[arg(long, global = true, env = "TKGE_RESAMPLE", num_args = 0..=1, default_missing_value = "true")]
    pub resample: Option<String>,
    #[arg(long, global = true, env = "TKGE_THREADS", allow_negative_numbers = true)]
    pub threads: Option<String>,
    #[arg(long, global = true, env = "TKGE_DATA_DIR")]
    pub data_dir: Option<String>,
    #[arg(long, global = true, env = "TKGE_TRAIN")]
    pub train: Option<String>,
    #[arg(long, global = true, env = "TKGE_VALID")]
    pub valid: Option<String>,
    #[arg(long, global = true, env = "TKGE_TEST")]
    pub test: Option<String>,
    #[arg(long, global = true, env = "TKGE_CACHE")]
    pub cache: Option<String>,
    #[arg(long, global = true, env = "TKGE_CHECKPOINT")]
    pub checkpoint: Option<String>,
    #[arg(long, global = true, env = "TKGE_OUT_DIR")]
    pub out_dir: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 24] {
        [
            ("gamma", &self.gamma),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("xi", &self.xi),
            ("psi", &self.psi),
            ("kappa", &self.kappa),
            ("epsilon", &self.epsilon),
            ("m", &self.m),
            ("d", &self.d),
            ("norm", &self.norm),
            ("mode", &self.mode),
            ("seed", &self.seed),
            ("filtered", &self.filtered),
            ("min_triples", &self.min_triples),
            ("neg_filter", &self.neg_filter),
            ("batch_size", &self.batch_size),
            ("resample", &self.resample),
            ("threads", &self.threads),
            ("data_dir", &self.data_dir),
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
            ("cache", &self.cache),
            ("checkpoint", &self.checkpoint),
        ]
    }

    /// Defaults, then the config file, then flags and `TKGE_*` variables.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(v) = &self.out_dir {
            cfg.set("out_dir", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bin the training years and write the materialized graph cache.
    Preprocess,
    /// Fit a model and write its checkpoint and objective log.
    Train {
        /// Per-iteration objective CSV (default: OUT_DIR/train_log.csv)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Rank the test facts and report mean rank and Hits@1..10.
    Eval {
        #[arg(long, value_delimiter = ',', default_value = "head,tail,relation,time")]
        tasks: Vec<String>,
        /// Metrics CSV (default: OUT_DIR/metrics.csv)
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Complete one `?` slot, e.g. `"? livesIn Beijing @bin3"`.
    Predict {
        query: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Write a synthetic rotating-community corpus into OUT_DIR.
    GenSynthetic {
        #[arg(long, default_value_t = 50)]
        entities: usize,
        #[arg(long, default_value_t = 5)]
        relations: usize,
        #[arg(long, default_value_t = 8)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        rotation_step: usize,
    },
    /// Dump every embedding row as `kind,id,v1..vd`.
    ExportEmbeddings {
        /// Output CSV (default: stdout)
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// True when the failure is only a closed stdout (e.g. piped into `head`).
pub fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        let io = e.downcast_ref::<io::Error>().or_else(|| match e.downcast_ref::<tkge::Error>() {
            Some(tkge::Error::Io(io)) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

/// Process exit status for an error: 2 for usage and input problems, 1 for
/// everything that went wrong at run time.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<CliError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<tkge::Error>() {
        Some(
            tkge::Error::Parse { .. }
            | tkge::Error::InvertedInterval { .. }
            | tkge::Error::EmptyTimeDomain
            | tkge::Error::DatasetNotFound(_)
            | tkge::Error::UnknownLabel { .. }
            | tkge::Error::IdOutOfRange { .. }
            | tkge::Error::BinOutOfRange { .. }
            | tkge::Error::InvalidHyperParam(_)
            | tkge::Error::SamplerUnavailable,
        ) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.run.resolve()?;
    match cli.command {
        Command::Preprocess => preprocess(&cfg),
        Command::Train { log } => train(&cfg, log),
        Command::Eval { tasks, metrics } => eval(&cfg, &tasks, metrics),
        Command::Predict { query, top_k } => predict(&cfg, &query, top_k),
        Command::GenSynthetic { entities, relations, bins, rotation_step } => {
            gen_synthetic(&cfg, entities, relations, bins, rotation_step)
        }
        Command::ExportEmbeddings { output } => export_embeddings(&cfg, output),
    }
}

/// A training graph with the vocabularies its ids refer to.
struct Corpus {
    entities: Vocab,
    relations: Vocab,
    graph: TemporalGraph,
    /// Valid and test facts parsed alongside the training split.
    extra: Vec<Fact>,
    test: Option<Vec<Fact>>,
}

fn read_split(path: &Path, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Fact>> {
    if !path.is_file() {
        return Err(tkge::Error::DatasetNotFound(path.to_path_buf()).into());
    }
    let reader = BufReader::new(File::open(path)?);
    parse_facts_into(reader, entities, relations).with_context(|| format!("parsing {}", path.display()))
}

/// Parses train, valid and test into one id space and bins the training years.
fn load_raw(cfg: &RunConfig) -> Result<Corpus> {
    let train_path =
        cfg.train_path().ok_or_else(|| CliError::Usage("no training data: pass --train or --data-dir".into()))?;
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let train = read_split(&train_path, &mut entities, &mut relations)?;
    let mut extra = match cfg.valid_path() {
        Some(p) => read_split(&p, &mut entities, &mut relations)?,
        None => Vec::new(),
    };
    let test = match cfg.test_path() {
        Some(p) => Some(read_split(&p, &mut entities, &mut relations)?),
        None => None,
    };
    extra.extend(test.iter().flatten().copied());
    let binning = compute_binning(&train, cfg.min_triples)?;
    let graph = TemporalGraph::materialize(&train, binning, entities.len(), relations.len())?;
    Ok(Corpus { entities, relations, graph, extra, test })
}

/// Uses the graph cache when `--cache` is given, the raw splits otherwise.
fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let Some(cache) = &cfg.cache else {
        return load_raw(cfg);
    };
    if !cache.is_file() {
        return Err(tkge::Error::DatasetNotFound(cache.clone()).into());
    }
    let (graph, mut entities, mut relations) = read_graph_cache(BufReader::new(File::open(cache)?))
        .with_context(|| format!("reading graph cache {}", cache.display()))?;
    let (ne, nr) = (entities.len(), relations.len());
    let test = match cfg.test_path() {
        Some(p) => Some(read_split(&p, &mut entities, &mut relations)?),
        None => None,
    };
    if entities.len() != ne || relations.len() != nr {
        return Err(CliError::Usage("test file mentions labels absent from the graph cache".into()).into());
    }
    let extra = test.clone().unwrap_or_default();
    Ok(Corpus { entities, relations, graph, extra, test })
}

/// The training graph plus every other known fact, for filtered ranking.
fn known_facts(corpus: &Corpus) -> Result<TemporalGraph> {
    let graph = &corpus.graph;
    let mut bins = graph.bins().to_vec();
    for fact in &corpus.extra {
        for t in graph.binning().span(fact.start, fact.end) {
            bins[t].push(fact.triple());
        }
    }
    Ok(TemporalGraph::from_bins(bins, graph.binning().clone(), graph.num_entities(), graph.num_relations())?)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<ModelState> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint not found: {}", path.display())).into());
    }
    load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))
}

fn preprocess(cfg: &RunConfig) -> Result<()> {
    let corpus = load_raw(cfg)?;
    let graph = &corpus.graph;
    let mut out = io::stdout().lock();
    writeln!(out, "T={}", graph.num_bins())?;
    writeln!(out, "bin,start_year,triples,mentions")?;
    let binning = graph.binning();
    for t in 0..graph.num_bins() {
        writeln!(out, "{t},{},{},{}", binning.boundaries()[t], graph.bin(t).len(), binning.mention_counts()[t])?;
    }
    let path = cfg.cache_path();
    create_parent(&path)?;
    let mut file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_graph_cache(&mut file, graph, &corpus.entities, &corpus.relations)?;
    file.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn train(cfg: &RunConfig, log: Option<PathBuf>) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let config = TrainConfig {
        hp: cfg.hp.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        sampler: SamplerConfig { filter: cfg.neg_filter, ..Default::default() },
        batch_size: cfg.batch_size,
        resample_each_iteration: cfg.resample,
    };
    let trained = fit(&corpus.graph, &config)?;

    let ckpt = cfg.checkpoint_path();
    create_parent(&ckpt)?;
    save_checkpoint(&trained.state, &ckpt).with_context(|| format!("writing {}", ckpt.display()))?;

    let log = log.unwrap_or_else(|| cfg.out_dir.join("train_log.csv"));
    create_parent(&log)?;
    let mut out = BufWriter::new(File::create(&log).with_context(|| format!("creating {}", log.display()))?);
    writeln!(out, "iter,J,task,smooth,penalty")?;
    for (i, o) in trained.report.history.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{}", o.total, o.task, o.smooth, o.penalty)?;
    }
    out.flush()?;

    let report = &trained.report;
    println!(
        "mode={} iterations={} converged={} J0={} J={} constraints={} relaxations={}",
        cfg.mode,
        report.iterations,
        report.converged,
        report.initial().unwrap_or(f64::NAN),
        report.last().unwrap_or(f64::NAN),
        report.num_constraints,
        report.relaxations,
    );
    eprintln!("wrote {} and {}", ckpt.display(), log.display());
    Ok(())
}

fn eval(cfg: &RunConfig, tasks: &[String], metrics: Option<PathBuf>) -> Result<()> {
    let tasks: Vec<Task> = tasks
        .iter()
        .map(|t| t.trim().parse::<Task>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    let state = load_model(cfg)?;
    let corpus = load_corpus(cfg)?;
    let test = corpus
        .test
        .as_deref()
        .ok_or_else(|| CliError::Usage("no test data: pass --test or --data-dir".into()))?;
    let graph = known_facts(&corpus)?;
    let options = EvalOptions { filtered: cfg.filtered, norm: cfg.hp.norm, threads: cfg.threads };
    let reports = evaluate(&state, &graph, test, &tasks, &options)?;

    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &reports)?;
    io::stdout().lock().write_all(&csv)?;
    let path = metrics.unwrap_or_else(|| cfg.out_dir.join("metrics.csv"));
    create_parent(&path)?;
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn lookup(vocab: &Vocab, kind: &'static str, label: &Option<String>) -> Result<usize> {
    let label = label.as_deref().expect("known slot");
    Ok(vocab.get(label).ok_or_else(|| tkge::Error::UnknownLabel { kind, label: label.to_string() })?)
}

fn predict(cfg: &RunConfig, text: &str, top_k: usize) -> Result<()> {
    let query: PredictQuery = text.parse()?;
    let state = load_model(cfg)?;
    let corpus = load_corpus(cfg)?;
    let graph = &corpus.graph;
    if state.num_entities() != corpus.entities.len() || state.num_relations() != corpus.relations.len() {
        return Err(tkge::Error::ShapeMismatch(format!(
            "checkpoint has {} entities / {} relations, data has {} / {}",
            state.num_entities(),
            state.num_relations(),
            corpus.entities.len(),
            corpus.relations.len()
        ))
        .into());
    }
    let bins = graph.num_bins();
    if state.num_bins() != 1 && state.num_bins() != bins {
        return Err(tkge::Error::ShapeMismatch(format!(
            "checkpoint has {} hyperplanes, data has {bins} bins",
            state.num_bins()
        ))
        .into());
    }
    let bin = match query.when {
        When::Latest | When::Unknown => bins - 1,
        When::Bin(b) if b < bins => b,
        When::Bin(b) => return Err(tkge::Error::BinOutOfRange { bin: b, bins }.into()),
        When::Year(y) => graph.binning().bin_of_year(y),
    };
    let model_bin = if state.num_bins() == 1 { 0 } else { bin };
    let id = |kind, label: &Option<String>| {
        let vocab = if kind == "relation" { &corpus.relations } else { &corpus.entities };
        lookup(vocab, kind, label)
    };

    let (q, size) = match query.missing {
        Missing::Head => (
            Query::Head { relation: id("relation", &query.relation)?, tail: id("entity", &query.tail)?, bin: model_bin },
            state.num_entities(),
        ),
        Missing::Tail => (
            Query::Tail { head: id("entity", &query.head)?, relation: id("relation", &query.relation)?, bin: model_bin },
            state.num_entities(),
        ),
        Missing::Relation => (
            Query::Relation { head: id("entity", &query.head)?, tail: id("entity", &query.tail)?, bin: model_bin },
            state.num_relations(),
        ),
        Missing::Time => (
            Query::Time {
                head: id("entity", &query.head)?,
                relation: id("relation", &query.relation)?,
                tail: id("entity", &query.tail)?,
            },
            state.num_bins(),
        ),
    };
    let candidates: Vec<usize> = (0..size).collect();
    let losses = state.score_candidates(q, &candidates, cfg.hp.norm)?;
    let mut order = candidates;
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));

    let mut out = io::stdout().lock();
    for (rank, &c) in order.iter().take(top_k).enumerate() {
        let label = match query.missing {
            Missing::Head | Missing::Tail => corpus.entities.label(c).unwrap_or("?").to_string(),
            Missing::Relation => corpus.relations.label(c).unwrap_or("?").to_string(),
            Missing::Time if state.num_bins() == 1 => "bin0".to_string(),
            Missing::Time => format!("bin{c} ({})", graph.binning().boundaries()[c]),
        };
        writeln!(out, "{}\t{label}\t{:.6}", rank + 1, losses[c])?;
    }
    Ok(())
}

fn gen_synthetic(cfg: &RunConfig, entities: usize, relations: usize, bins: usize, rotation_step: usize) -> Result<()> {
    if entities < 10 || bins < 2 || relations < 1 {
        return Err(CliError::Usage("gen-synthetic needs entities >= 10, relations >= 1, bins >= 2".into()).into());
    }
    let spec = SyntheticSpec { rotation_step, ..SyntheticSpec::new(entities, relations, bins, cfg.seed) };
    let data = generate_synthetic(&spec)?;
    data.write_to(&cfg.out_dir).with_context(|| format!("writing into {}", cfg.out_dir.display()))?;
    println!(
        "train={} valid={} test={} entities={} relations={} bins={bins}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        data.entities.len(),
        data.relations.len()
    );
    Ok(())
}

fn export_embeddings(cfg: &RunConfig, output: Option<PathBuf>) -> Result<()> {
    let state = load_model(cfg)?;
    match output {
        Some(path) => {
            create_parent(&path)?;
            let mut file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            write_embeddings_csv(&mut file, &state)?;
            file.flush()?;
        }
        None => write_embeddings_csv(io::stdout().lock(), &state)?,
    }
    Ok(())
}
