//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use densedex_core::mips::VectorMatrix;
use densedex_core::store_format::MAGIC;
use densedex_core::{
    consistency_factor, fuse_runs, mrr_at_k, recall_at_k, train, FusionConfig, Metric, MetricReport, Role,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::encode::{encode_records, load_params, save_params};
use crate::error::{Error, Result};
use crate::formats::{
    read_pairs, read_qrels, read_run, read_tsv_collection, read_vector_tsv, write_run, write_text, RunFormat,
    TextRecord,
};
use crate::pipeline::{build_examples, cmd_pipeline_end_to_end, write_loss_csv, PipelineConfig};
use crate::search::{batch_search, LatencySummary};
use crate::store::{build_store, EmbeddingStore};
use crate::synth::{cmd_synth, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "densedex", version, about = "Dense retrieval over inner-product embeddings")]
pub struct Cli {
    /// Worker threads for encoding and search [default: available cores]
    #[arg(long, global = true, env = "DENSEDEX_THREADS")]
    pub threads: Option<usize>,
    /// Progress messages on stderr (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted relevance
    Synth(SynthArgs),
    /// Embed a text TSV into a store
    Encode(EncodeArgs),
    /// Build a store from a vector TSV
    Index(IndexArgs),
    /// Exact top-k search of queries against a store
    Search(SearchArgs),
    /// MRR@k / Recall@k of a run
    Eval(EvalArgs),
    /// Alternating merge of two runs
    Fuse(FuseArgs),
    /// Overlap of a run's top-n with a reference run's top-1000
    Consistency(ConsistencyArgs),
    /// Train the toy encoder with in-batch negatives
    TrainToy(TrainArgs),
    /// synth, train-toy, encode, index, search and eval in one go
    Pipeline(PipelineArgs),
    /// Search latency over random vectors
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Query,
    Doc,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Query => Role::Query,
            RoleArg::Doc => Role::Document,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RunFormatArg {
    Msmarco,
    Trec,
}

impl From<RunFormatArg> for RunFormat {
    fn from(f: RunFormatArg) -> Self {
        match f {
            RunFormatArg::Msmarco => RunFormat::MsMarco,
            RunFormatArg::Trec => RunFormat::Trec,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunOut {
    #[arg(long, value_enum, default_value = "msmarco")]
    pub format: RunFormatArg,
    /// Run tag for TREC output
    #[arg(long, default_value = "densedex")]
    pub tag: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub num_queries: usize,
    #[arg(long, default_value_t = 500)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1 << 16)]
    pub vocab: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// `id<TAB>text` lines
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Token cap [default: 20 for queries, 256 for docs]
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// `id<TAB>v1 v2 …` lines
    #[arg(long)]
    pub input: PathBuf,
    /// Vector width [default: taken from the first line]
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// A store, a vector TSV, or with --params a text TSV
    #[arg(long)]
    pub queries: PathBuf,
    /// Encode text queries with these parameters
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Row shards scanned in parallel [default: thread count]
    #[arg(long)]
    pub shards: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOut,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated `mrr@k` / `recall@k`
    #[arg(long, value_delimiter = ',', default_value = "mrr@10,recall@1000", value_parser = parse_metric)]
    pub metrics: Vec<(Metric, usize)>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub depth_in: usize,
    #[arg(long, default_value_t = 1000)]
    pub depth_out: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOut,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,50,100,500,1000")]
    pub n: Vec<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `qid<TAB>docid[<TAB>negative docid]` lines
    #[arg(long)]
    pub pairs: PathBuf,
    /// Marks same-query documents in a batch as positives
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub collection: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV [default: stdout]
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1 << 16)]
    pub vocab: usize,
    #[arg(long, default_value_t = 26)]
    pub batch: usize,
    #[arg(long, default_value_t = 2)]
    pub accumulation: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    /// [default: steps * 10000 / 350000]
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score each pair's negative as an extra document column
    #[arg(long)]
    pub use_triple_negative: bool,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            vocab_size: self.vocab,
            dim: self.dim,
            batch_size: self.batch,
            accumulation_steps: self.accumulation,
            steps: self.steps,
            learning_rate: self.lr,
            warmup_steps: self.warmup,
            seed: self.seed,
            use_pair_negatives: self.use_triple_negative,
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 50)]
    pub num_queries: usize,
    #[arg(long, default_value_t = 500)]
    pub num_docs: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Evaluate the random initialization instead of a trained encoder
    #[arg(long)]
    pub skip_train: bool,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    /// Keep artifacts here [default: a temporary directory]
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    /// [default: thread count]
    #[arg(long)]
    pub shards: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_metric(s: &str) -> std::result::Result<(Metric, usize), String> {
    let (name, k) = s.split_once('@').ok_or_else(|| format!("expected NAME@K, got {s:?}"))?;
    let metric = match name.to_ascii_lowercase().as_str() {
        "mrr" => Metric::Mrr,
        "recall" | "r" => Metric::Recall,
        _ => return Err(format!("unknown metric {name:?} (mrr or recall)")),
    };
    let k: usize = k.parse().map_err(|_| format!("cutoff {k:?} is not a number"))?;
    if k == 0 {
        return Err("cutoff must be at least 1".into());
    }
    Ok((metric, k))
}

struct Log(u8);

impl Log {
    fn info(&self, msg: impl FnOnce() -> String) {
        if self.0 > 0 {
            eprintln!("densedex: {}", msg());
        }
    }
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("densedex: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists, e.g. when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let log = Log(cli.verbose);
    match cli.command {
        Command::Synth(a) => synth(a, &log),
        Command::Encode(a) => encode(a, &log),
        Command::Index(a) => index(a, &log),
        Command::Search(a) => search(a, &log),
        Command::Eval(a) => eval(a),
        Command::Fuse(a) => fuse(a),
        Command::Consistency(a) => consistency(a),
        Command::TrainToy(a) => train_toy(a, &log),
        Command::Pipeline(a) => pipeline(a, &log),
        Command::Bench(a) => bench(a),
    }
}

fn read_texts(path: &Path) -> Result<Vec<TextRecord>> {
    read_tsv_collection(path)?.collect()
}

fn synth(a: SynthArgs, log: &Log) -> Result<()> {
    let config =
        SynthConfig { num_queries: a.num_queries, num_docs: a.num_docs, dim: a.dim, seed: a.seed, vocab_size: a.vocab };
    let corpus = cmd_synth(&config, &a.out_dir)?;
    log.info(|| format!("wrote {} docs, {} queries to {}", corpus.collection.len(), corpus.queries.len(), a.out_dir.display()));
    Ok(())
}

fn encode(a: EncodeArgs, log: &Log) -> Result<()> {
    let params = load_params(&a.params)?;
    let role = Role::from(a.role);
    let records = read_texts(&a.input)?;
    let vectors = encode_records(&params, &records, role, a.max_len.unwrap_or(role.default_max_len()))?;
    let summary = build_store(vectors.into_iter().map(Ok), params.dim(), &a.out)?;
    log.info(|| format!("encoded {} records into {} ({} bytes)", summary.count, a.out.display(), summary.bytes));
    Ok(())
}

fn index(a: IndexArgs, log: &Log) -> Result<()> {
    let mut records = read_vector_tsv(&a.input)?.peekable();
    let dim = match (a.dim, records.peek()) {
        (Some(d), _) => d,
        (None, Some(Ok((_, v)))) => v.len(),
        (None, Some(Err(_))) => return Err(records.next().and_then(|r| r.err()).expect("peeked an error")),
        (None, None) => return Err(Error::Usage(format!("{} is empty; pass --dim", a.input.display()))),
    };
    let summary = build_store(records, dim, &a.out)?;
    log.info(|| format!("indexed {} vectors into {}", summary.count, a.out.display()));
    Ok(())
}

fn load_query_vectors(path: &Path, params: Option<&Path>) -> Result<Vec<(String, Vec<f32>)>> {
    if let Some(params) = params {
        let params = load_params(params)?;
        return encode_records(&params, &read_texts(path)?, Role::Query, Role::Query.default_max_len());
    }
    let mut magic = [0u8; 4];
    let is_store = {
        use std::io::Read;
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        f.read(&mut magic).map_err(|e| Error::io(path, e))? == 4 && magic == MAGIC
    };
    if is_store {
        Ok(EmbeddingStore::open(path)?.to_rows())
    } else {
        read_vector_tsv(path)?.collect()
    }
}

fn search(a: SearchArgs, log: &Log) -> Result<()> {
    let store = EmbeddingStore::open(&a.store)?;
    let queries = load_query_vectors(&a.queries, a.params.as_deref())?;
    let shards = a.shards.unwrap_or_else(rayon::current_num_threads);
    log.info(|| format!("searching {} queries over {} vectors", queries.len(), store.len()));
    let (run, latency) = batch_search(&queries, &store.matrix(), a.k, shards)?;
    write_run(&run, &a.out, a.run.format.into(), &a.run.tag)?;
    eprintln!("{}", serde_json::to_string(&latency).expect("latency serializes"));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let run = read_run(&a.run)?;
    let qrels = read_qrels(&a.qrels)?;
    let reports = a
        .metrics
        .iter()
        .map(|&(metric, k)| match metric {
            Metric::Mrr => mrr_at_k(&run, &qrels, k),
            Metric::Recall => recall_at_k(&run, &qrels, k),
        })
        .collect::<std::result::Result<Vec<MetricReport>, _>>()?;
    let mut out = std::io::stdout().lock();
    let res = if a.json {
        let metrics: serde_json::Map<String, serde_json::Value> =
            reports.iter().map(|r| (r.to_string(), json!(r.value))).collect();
        let queries = reports.first().map_or(0, |r| r.queries);
        writeln!(out, "{}", json!({ "queries": queries, "metrics": metrics }))
    } else {
        reports.iter().try_for_each(|r| writeln!(out, "{}\t{:.3}", r, r.value))
    };
    res.map_err(|e| Error::io("<stdout>", e))
}

fn fuse(a: FuseArgs) -> Result<()> {
    let config = FusionConfig::new(a.depth_in, a.depth_out)?;
    let fused = fuse_runs(&read_run(&a.a)?, &read_run(&a.b)?, &config)?;
    write_run(&fused, &a.out, a.run.format.into(), &a.run.tag)
}

fn consistency(a: ConsistencyArgs) -> Result<()> {
    let run = read_run(&a.run)?;
    let reference = read_run(&a.reference)?;
    let values = a
        .n
        .iter()
        .map(|&n| consistency_factor(&run, &reference, n).map(|c| (n, c)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut out = std::io::stdout().lock();
    let res = if a.json {
        let rows: Vec<_> = values.iter().map(|(n, c)| json!({ "n": n, "consistency": c })).collect();
        writeln!(out, "{}", serde_json::Value::Array(rows))
    } else {
        values.iter().try_for_each(|(n, c)| writeln!(out, "{n}\t{c:.3}"))
    };
    res.map_err(|e| Error::io("<stdout>", e))
}

fn train_toy(a: TrainArgs, log: &Log) -> Result<()> {
    let config = a.train.config();
    let pairs = read_pairs(&a.pairs)?;
    let qrels = a.qrels.as_deref().map(read_qrels).transpose()?;
    let queries = read_texts(&a.queries)?;
    let collection = read_texts(&a.collection)?;
    let examples = build_examples(&pairs, &queries, &collection, config.vocab_size, config.use_pair_negatives)?;
    log.info(|| format!("training on {} pairs for {} steps", examples.len(), config.steps));
    let outcome = train(&examples, qrels.as_ref(), &config)?;
    save_params(&outcome.params, &a.out)?;
    match &a.loss_out {
        Some(path) => write_text(path, |out| write_loss_csv(&outcome.losses, out)),
        None => write_loss_csv(&outcome.losses, &mut std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn pipeline(a: PipelineArgs, log: &Log) -> Result<()> {
    let train = a.train.config();
    let config = PipelineConfig {
        synth: SynthConfig {
            num_queries: a.num_queries,
            num_docs: a.num_docs,
            dim: train.dim,
            seed: train.seed,
            vocab_size: train.vocab_size,
        },
        train,
        skip_train: a.skip_train,
        k: a.k,
        shards: a.shards,
    };
    let scratch;
    let work_dir = match &a.work_dir {
        Some(dir) => dir.as_path(),
        None => {
            scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            scratch.path()
        }
    };
    log.info(|| format!("pipeline artifacts in {}", work_dir.display()));
    let report = cmd_pipeline_end_to_end(&config, work_dir)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.num_docs == 0 || a.dim == 0 {
        return Err(Error::Usage("bench needs at least one document and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let started = Instant::now();
    let values: Vec<f32> = (0..a.num_docs * a.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ids: Vec<String> = (0..a.num_docs).map(|i| format!("d{i}")).collect();
    let queries: Vec<(String, Vec<f32>)> = (0..a.queries)
        .map(|i| (format!("q{i}"), (0..a.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let setup_ms = started.elapsed().as_secs_f64() * 1e3;
    let matrix = VectorMatrix::new(&values, a.dim, &ids)?;
    let shards = a.shards.unwrap_or_else(rayon::current_num_threads);
    let (_, latency): (_, LatencySummary) = batch_search(&queries, &matrix, a.k, shards)?;
    let report = json!({
        "documents": a.num_docs,
        "dim": a.dim,
        "threads": rayon::current_num_threads(),
        "setup_ms": setup_ms,
        "latency": latency,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
