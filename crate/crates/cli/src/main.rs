use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dimsel::cooccurrence::{build_signal, count_cooccurrences, CoocConfig, SignalKind, SparseCooccurrence, Weighting};
use dimsel::corpus::{build_vocabulary, distort_corpus, split_corpus, tokenize_corpus, DistortionSpec, SplitMode, Vocabulary};
use dimsel::criteria::{sweep_and_select, Criterion, Grid};
use dimsel::evaluation::{evaluate_similarity, nearest_neighbors, oracle_grid_search, SimilarityBenchmark, WordVectors};
use dimsel::postprocess::{postprocess, AbttComponents, PostprocConfig, PostprocMethod};
use dimsel::spectral::{oracle_matrix, truncated_svd, OracleParams, SvdOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Select word-embedding dimensions from corpus statistics.
#[derive(Parser, Debug)]
#[command(name = "dimsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count tokens and write a frequency-ranked vocabulary.
    Vocab(VocabArgs),
    /// Split a corpus into two disjoint halves.
    Split(SplitArgs),
    /// Append duplicated copies of one long sentence.
    Distort(DistortArgs),
    /// Count windowed co-occurrences.
    Cooc(CoocArgs),
    /// Sweep a grid of dimensions and select one.
    Select(SelectArgs),
    /// Write the oracle embedding at one dimension.
    Embed(EmbedArgs),
    /// Score word vectors on a similarity benchmark.
    EvalSim(EvalSimArgs),
    /// Print the nearest neighbors of a word.
    Neighbors(NeighborsArgs),
    /// Score oracle embeddings over a grid of dimensions.
    GridSearch(GridSearchArgs),
}

#[derive(Args, Debug, Serialize)]
struct VocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "interleave")]
    mode: SplitMode,
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DistortArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 20)]
    min_len: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CoocArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value = "flat")]
    weighting: Weighting,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SignalArgs {
    #[arg(long, default_value = "ppmi")]
    signal: SignalKind,
    #[arg(long, default_value_t = 1)]
    shift_ns: u32,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 50)]
    k_min: usize,
    #[arg(long, default_value_t = 1000)]
    k_max: usize,
    #[arg(long, default_value_t = 2)]
    k_step: usize,
}

impl GridArgs {
    fn grid(&self) -> Grid {
        Grid::new(self.k_min, self.k_max, self.k_step)
    }
}

#[derive(Args, Debug, Serialize)]
struct PostprocArgs {
    #[arg(long, default_value = "cn")]
    postproc: PostprocMethod,
    #[arg(long, default_value = "auto")]
    abtt_components: AbttComponents,
    #[arg(long, default_value_t = 2.0)]
    cn_aperture: f64,
}

impl PostprocArgs {
    fn config(&self) -> PostprocConfig {
        PostprocConfig {
            method: self.postproc,
            abtt_components: self.abtt_components,
            cn_aperture: self.cn_aperture,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[arg(long)]
    cooc_a: PathBuf,
    #[arg(long)]
    cooc_b: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[arg(long, default_value = "mpd")]
    criterion: Criterion,
    #[command(flatten)]
    #[serde(flatten)]
    postproc: PostprocArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    /// Retained rank; defaults to k-max plus the SVD oversampling.
    #[arg(long)]
    rank: Option<usize>,
    /// Corpus label recorded in the report.
    #[arg(long)]
    corpus_name: Option<String>,
    #[arg(long)]
    report: PathBuf,
    /// Criterion curve as TSV; defaults to the report path with a .tsv extension.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EmbedArgs {
    #[arg(long)]
    cooc: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "identity")]
    postproc: PostprocMethod,
    #[arg(long, default_value = "auto")]
    abtt_components: AbttComponents,
    #[arg(long, default_value_t = 2.0)]
    cn_aperture: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalSimArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct NeighborsArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug, Serialize)]
struct GridSearchArgs {
    #[arg(long)]
    cooc: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    signal: SignalArgs,
    #[arg(long)]
    benchmark: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    command: &'a str,
    parameters: &'a P,
    inputs: Vec<&'a Path>,
    outputs: Vec<&'a Path>,
    seed: Option<u64>,
    version: &'static str,
    wall_time_ms: f64,
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

struct Run {
    started: Instant,
}

impl Run {
    fn start() -> Self {
        Run { started: Instant::now() }
    }

    fn finish<P: Serialize>(
        self,
        command: &str,
        parameters: &P,
        inputs: &[&Path],
        outputs: &[&Path],
        seed: Option<u64>,
    ) -> Result<()> {
        let manifest = RunManifest {
            command,
            parameters,
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        let path = manifest_path(outputs[0]);
        write_json(&path, &manifest)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<dimsel::corpus::TokenizedCorpus> {
    let raw = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    tokenize_corpus(&raw).with_context(|| format!("in {}", path.display()))
}

fn read_cooc(path: &Path) -> Result<SparseCooccurrence> {
    SparseCooccurrence::read_binary(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read_tsv(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_benchmark(path: &Path) -> Result<SimilarityBenchmark> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    SimilarityBenchmark::read_tsv(name, open(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_vectors(path: &Path) -> Result<WordVectors> {
    WordVectors::read_text(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn check_vocab(cooc: &SparseCooccurrence, vocab: &Vocabulary) -> Result<()> {
    if cooc.n() != vocab.size() {
        bail!(
            "co-occurrence matrix has order {} but the vocabulary has {} tokens",
            cooc.n(),
            vocab.size()
        );
    }
    Ok(())
}

fn vocab(args: &VocabArgs) -> Result<()> {
    let run = Run::start();
    let corpus = read_corpus(&args.corpus)?;
    let vocab = build_vocabulary(&corpus, args.max_vocab, args.min_count)?;
    let mut out = create(&args.out)?;
    vocab.write_tsv(&mut out)?;
    out.flush()?;
    run.finish("vocab", args, &[&args.corpus], &[&args.out], None)
}

fn split(args: &SplitArgs) -> Result<()> {
    let run = Run::start();
    let corpus = read_corpus(&args.corpus)?;
    let parts = split_corpus(&corpus, args.mode)?;
    parts.part_a.write_text(create(&args.out_a)?)?;
    parts.part_b.write_text(create(&args.out_b)?)?;
    run.finish("split", args, &[&args.corpus], &[&args.out_a, &args.out_b], None)
}

fn distort(args: &DistortArgs) -> Result<()> {
    let run = Run::start();
    let corpus = read_corpus(&args.corpus)?;
    let spec = DistortionSpec {
        rate: args.rate,
        min_sentence_len: args.min_len,
        seed: args.seed,
    };
    distort_corpus(&corpus, &spec)?.write_text(create(&args.out)?)?;
    run.finish("distort", args, &[&args.corpus], &[&args.out], Some(args.seed))
}

fn cooc(args: &CoocArgs) -> Result<()> {
    let run = Run::start();
    let corpus = read_corpus(&args.corpus)?;
    let vocab = read_vocab(&args.vocab)?;
    let config = CoocConfig {
        window: args.window,
        weighting: args.weighting,
    };
    let counts = count_cooccurrences(&corpus, &vocab, &config)?;
    let mut out = create(&args.out)?;
    counts.write_binary(&mut out)?;
    out.flush()?;
    run.finish("cooc", args, &[&args.corpus, &args.vocab], &[&args.out], None)
}

fn select(args: &SelectArgs) -> Result<()> {
    let run = Run::start();
    let a = read_cooc(&args.cooc_a)?;
    let b = read_cooc(&args.cooc_b)?;
    if a.n() != b.n() {
        bail!("co-occurrence matrices have different orders: {} vs {}", a.n(), b.n());
    }
    let s = &args.signal;
    let rank = args
        .rank
        .unwrap_or(args.grid.k_max + SvdOptions::default().oversample)
        .min(a.n());
    let decomp_a = truncated_svd(&build_signal(&a, s.signal, s.shift_ns)?, rank, s.seed)?;
    let decomp_b = truncated_svd(&build_signal(&b, s.signal, s.shift_ns)?, rank, s.seed)?;
    let name = args
        .corpus_name
        .clone()
        .unwrap_or_else(|| format!("{} | {}", args.cooc_a.display(), args.cooc_b.display()));
    let report = sweep_and_select(
        &decomp_a,
        &decomp_b,
        &args.grid.grid(),
        s.alpha,
        args.criterion,
        &args.postproc.config(),
        s.seed,
    )?
    .with_provenance(name, s.signal, s.shift_ns);

    write_json(&args.report, &report)?;
    let curve = args.curve.clone().unwrap_or_else(|| args.report.with_extension("tsv"));
    report.criterion_trace().write_tsv(create(&curve)?)?;
    println!("selected k = {} ({})", report.selected_k, report.criterion);
    run.finish("select", args, &[&args.cooc_a, &args.cooc_b], &[&args.report, &curve], Some(s.seed))
}

fn embed(args: &EmbedArgs) -> Result<()> {
    let run = Run::start();
    let cooc = read_cooc(&args.cooc)?;
    let vocab = read_vocab(&args.vocab)?;
    check_vocab(&cooc, &vocab)?;
    let s = &args.signal;
    // An n×n signal has at most n singular components; the rest are zero.
    let rank = args.k.min(cooc.n());
    let decomp = truncated_svd(&build_signal(&cooc, s.signal, s.shift_ns)?, rank, s.seed)?;
    let x = oracle_matrix(&decomp, &OracleParams::new(s.alpha, rank))?;
    let config = PostprocConfig {
        method: args.postproc,
        abtt_components: args.abtt_components,
        cn_aperture: args.cn_aperture,
    };
    let y = postprocess(&x, &config)?.resize_horizontally(args.k, 0.0);
    let vectors = WordVectors::from_vocabulary(&vocab, y)?;
    vectors.write_text(create(&args.out)?)?;
    run.finish("embed", args, &[&args.cooc, &args.vocab], &[&args.out], Some(s.seed))
}

fn eval_sim(args: &EvalSimArgs) -> Result<()> {
    let run = Run::start();
    let vectors = read_vectors(&args.vectors)?;
    let benchmark = read_benchmark(&args.benchmark)?;
    let result = evaluate_similarity(vectors.vectors(), &vectors, &benchmark)?;
    write_json(&args.out, &result)?;
    println!(
        "{}: rho = {:.4} ({} pairs, {} skipped)",
        result.benchmark, result.spearman_rho, result.pairs_used, result.pairs_skipped_oov
    );
    run.finish("eval-sim", args, &[&args.vectors, &args.benchmark], &[&args.out], None)
}

fn neighbors(args: &NeighborsArgs) -> Result<()> {
    let vectors = read_vectors(&args.vectors)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (token, cosine) in nearest_neighbors(vectors.vectors(), &vectors, &args.query, args.top)? {
        writeln!(out, "{token}\t{cosine:.6}")?;
    }
    Ok(())
}

fn grid_search(args: &GridSearchArgs) -> Result<()> {
    let run = Run::start();
    let cooc = read_cooc(&args.cooc)?;
    let vocab = read_vocab(&args.vocab)?;
    check_vocab(&cooc, &vocab)?;
    let benchmark = read_benchmark(&args.benchmark)?;
    let s = &args.signal;
    let rank = args.grid.k_max.min(cooc.n());
    let decomp = truncated_svd(&build_signal(&cooc, s.signal, s.shift_ns)?, rank, s.seed)?;
    let result = oracle_grid_search(&decomp, &vocab, &benchmark, &args.grid.grid(), s.alpha)?;
    write_json(&args.out, &result)?;
    println!("oracle grid search: k+ = {} (rho = {:.4})", result.k_plus, result.max_rho());
    run.finish(
        "grid-search",
        args,
        &[&args.cooc, &args.vocab, &args.benchmark],
        &[&args.out],
        Some(s.seed),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprintln!("dimsel: {}", rendered.lines().next().unwrap_or("usage error").trim_start_matches("error: "));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match &cli.command {
        Command::Vocab(a) => vocab(a),
        Command::Split(a) => split(a),
        Command::Distort(a) => distort(a),
        Command::Cooc(a) => cooc(a),
        Command::Select(a) => select(a),
        Command::Embed(a) => embed(a),
        Command::EvalSim(a) => eval_sim(a),
        Command::Neighbors(a) => neighbors(a),
        Command::GridSearch(a) => grid_search(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dimsel: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
