//! Command-line surface: `extract`, `evaluate`, `noise-study` and
//! `topwords`.
//!
//! Outputs are staged and renamed into place only after every file of a
//! command has been written, so a failed run leaves no partial results.
//! With a fixed seed, `assignment.csv`, `result.json` and the report files
//! are byte-identical across runs; `manifest.json` also records wall time.

mod manifest;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use manifest::{file_digest, InputDigest, RunManifest};
pub use output::StagedOutputs;

use crate::gmm::GmmOptions;
use crate::io::{
    read_assignment, read_assignment_with_k, read_corpus, read_embeddings, write_assignment, Corpus,
};
use crate::metrics::{
    ami, ari, build_cooccurrence_for, coherence, composition_matrix, delta_tfidf, greedy_match,
    noise_study, term_frequencies, top_words, Measure, NoiseStudyOptions, Partition, CV_WINDOW,
    DEFAULT_EPS, UCI_WINDOW,
};
use crate::pipeline::{extract_topics, GmmDiagnostics, IterationRecord, PipelineConfig};
use crate::reduction::Ridge;
use crate::TopicAssignment;

#[derive(Debug, Parser)]
#[command(
    name = "topiclear",
    version,
    about = "Topic extraction from document embeddings"
)]
pub struct Cli {
    /// Worker threads; results are bit-reproducible for a fixed count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> log::LevelFilter {
        match self.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster documents into K topics from their embeddings.
    Extract(ExtractArgs),
    /// Score an assignment against gold labels and by word coherence.
    Evaluate(EvaluateArgs),
    /// Measure how each score degrades as gold labels are randomized.
    NoiseStudy(NoiseStudyArgs),
    /// Show the most frequent words of each topic.
    Topwords(TopwordsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// JSONL corpus, one document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Raw embeddings, one row per corpus line.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Number of topics.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Intermediate PCA dimension.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_D)]
    pub d: usize,
    /// Cap on projection/re-clustering rounds.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_MAX_ADR_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = GmmOptions::default().max_iter)]
    pub gmm_max_iter: usize,
    #[arg(long, default_value_t = GmmOptions::default().tol)]
    pub gmm_tol: f64,
    #[arg(long, default_value_t = GmmOptions::default().reg_covar)]
    pub reg_covar: f64,
    /// Mixture restarts; the best final log-likelihood wins.
    #[arg(long, default_value_t = GmmOptions::default().n_init)]
    pub n_init: usize,
    /// Discriminant ridge, as a multiple of trace(S_W)/D.
    #[arg(long, default_value_t = 1e-6)]
    pub lda_ridge: f64,
    /// Treat --lda-ridge as an absolute value.
    #[arg(long)]
    pub lda_ridge_absolute: bool,
    #[arg(long, env = "TOPICLEAR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for assignment.csv, result.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

impl ExtractArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            d: self.d,
            max_adr_iter: self.max_iter,
            seed: self.seed,
            gmm: GmmOptions {
                max_iter: self.gmm_max_iter,
                tol: self.gmm_tol,
                reg_covar: self.reg_covar,
                n_init: self.n_init,
            },
            lda_reg: if self.lda_ridge_absolute {
                Ridge::Absolute(self.lda_ridge)
            } else {
                Ridge::RelativeToTrace(self.lda_ridge)
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Assignment CSV produced by `extract`.
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Corpus for co-occurrence counts; defaults to --corpus.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Topic count when the assignment has no probability columns.
    #[arg(long)]
    pub k: Option<usize>,
    /// Measures to compute.
    #[arg(long, value_delimiter = ',', default_values = ["ari", "ami", "c_uci", "c_npmi", "c_v"])]
    pub metrics: Vec<MetricName>,
    /// Words per topic used for coherence.
    #[arg(long, default_value_t = 10)]
    pub coherence_words: usize,
    /// Words per topic listed in the report.
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    /// Output directory for report.json, composition.csv and top_words.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Ari,
    Ami,
    #[value(name = "c_uci")]
    CUci,
    #[value(name = "c_npmi")]
    CNpmi,
    #[value(name = "c_v")]
    CV,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseStudyArgs {
    /// Labeled JSONL corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Noise levels to evaluate.
    #[arg(long, value_delimiter = ',', default_values = ["0", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8"])]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    pub replicates: usize,
    /// Words per topic used for coherence.
    #[arg(long, default_value_t = 10)]
    pub coherence_words: usize,
    #[arg(long, env = "TOPICLEAR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for noise_study.csv, summary.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TopwordsArgs {
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Topic count when the assignment has no probability columns.
    #[arg(long)]
    pub k: Option<usize>,
    /// Words listed per topic.
    #[arg(short = 'n', long, default_value_t = 20)]
    pub top_n: usize,
    /// List words characteristic of this topic; they are starred in the table.
    #[arg(long, value_name = "TOPIC")]
    pub delta_tfidf: Option<usize>,
    /// Pair topics with those of another assignment of the same corpus.
    #[arg(long = "match", value_name = "OTHER_ASSIGNMENT")]
    pub match_with: Option<PathBuf>,
    /// Also write top_words.csv (and matches.csv) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Executes a parsed command line, optionally inside a dedicated pool.
pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker threads")?;
    pool.install(|| match &cli.command {
        Command::Extract(a) => cmd_extract(a, threads),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::NoiseStudy(a) => cmd_noise_study(a, threads),
        Command::Topwords(a) => cmd_topwords(a, &mut std::io::stdout().lock()),
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn partition_of(a: &TopicAssignment) -> Result<Partition> {
    Ok(Partition::new(a.h().to_vec(), a.k())?)
}

fn gold_partition(corpus: &Corpus) -> Option<Result<Partition>> {
    let labels = corpus.gold_labels()?;
    let k = corpus.n_labels().unwrap_or(0);
    Some(Partition::new(labels, k).map_err(Into::into))
}

fn load_assignment(path: &Path, k: Option<usize>, corpus: &Corpus) -> Result<TopicAssignment> {
    let a = match k {
        Some(k) => read_assignment_with_k(path, k),
        None => read_assignment(path),
    }
    .with_context(|| format!("reading assignment {}", path.display()))?;
    if a.len() != corpus.len() {
        bail!(
            "assignment has {} rows but the corpus has {} documents",
            a.len(),
            corpus.len()
        );
    }
    Ok(a)
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

#[derive(Debug, Serialize)]
struct GoldScores {
    ari: f64,
    ami: f64,
}

#[derive(Debug, Serialize)]
struct ExtractReport<'a> {
    n_docs: usize,
    k: usize,
    d: usize,
    seed: u64,
    iterations: usize,
    converged: bool,
    topic_sizes: Vec<usize>,
    final_trace_ratio: f64,
    lda_regularization: f64,
    seed_gmm: &'a GmmDiagnostics,
    history: &'a [IterationRecord],
    gold: Option<GoldScores>,
}

pub fn cmd_extract(args: &ExtractArgs, threads: Option<usize>) -> Result<()> {
    let started = Instant::now();
    let cfg = args.config();
    cfg.validate()?;
    let corpus = load_corpus(&args.corpus)?;
    let x = read_embeddings(&args.embeddings)
        .with_context(|| format!("reading embeddings {}", args.embeddings.display()))?;
    if x.n_docs() != corpus.len() {
        bail!(
            "row count mismatch: corpus has {} documents but embeddings have {} rows",
            corpus.len(),
            x.n_docs()
        );
    }
    let result = extract_topics(&x, &cfg).context("topic extraction failed")?;

    let mut sizes = vec![0usize; cfg.k];
    for &t in result.assignment.h() {
        sizes[t] += 1;
    }
    let gold = match gold_partition(&corpus) {
        Some(g) => {
            let g = g?;
            let h = partition_of(&result.assignment)?;
            let scores = GoldScores {
                ari: ari(&g, &h)?,
                ami: ami(&g, &h)?,
            };
            log::info!(
                "against gold labels: ARI {:.4}, AMI {:.4}",
                scores.ari,
                scores.ami
            );
            Some(scores)
        }
        None => None,
    };
    let report = ExtractReport {
        n_docs: corpus.len(),
        k: cfg.k,
        d: cfg.d,
        seed: cfg.seed,
        iterations: result.iterations,
        converged: result.converged,
        topic_sizes: sizes,
        final_trace_ratio: result.lda.trace_ratio,
        lda_regularization: result.lda.regularization,
        seed_gmm: &result.seed_gmm,
        history: &result.history,
        gold,
    };

    let mut out = StagedOutputs::new(&args.out)?;
    let assignment_path = out.path("assignment.csv");
    write_assignment(&result.assignment, &assignment_path)?;
    out.write("result.json", &to_json(&report)?)?;
    let mut manifest = RunManifest::new("extract", cfg.seed, threads, serde_json::to_value(cfg)?);
    manifest.add_input(&args.corpus)?;
    manifest.add_input(&args.embeddings)?;
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    out.write("manifest.json", &to_json(&manifest)?)?;
    out.commit()?;
    eprintln!(
        "{} documents into {} topics; {} after {} iteration(s)",
        corpus.len(),
        cfg.k,
        if result.converged {
            "converged"
        } else {
            "not converged"
        },
        result.iterations
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Composition {
    labels: Vec<String>,
    /// Row per topic: fraction of its documents with each gold label.
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Default, Serialize)]
struct EvaluationReport {
    n_docs: usize,
    k: usize,
    topic_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ami: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_uci: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_npmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    composition: Option<Composition>,
    top_words: Vec<Vec<(String, f64)>>,
}

fn label_names(corpus: &Corpus, n: usize) -> Vec<String> {
    match corpus.label_names() {
        Some(names) => names.to_vec(),
        None => (0..n).map(|l| format!("label_{l}")).collect(),
    }
}

fn top_words_csv(words: &[Vec<(String, f64)>], starred: &[String]) -> String {
    let mut s = String::from("topic,rank,word,count,characteristic\n");
    for (t, list) in words.iter().enumerate() {
        for (r, (w, c)) in list.iter().enumerate() {
            let _ = writeln!(
                s,
                "{t},{},{},{c},{}",
                r + 1,
                csv_field(w),
                starred.contains(w)
            );
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let assignment = load_assignment(&args.assignment, args.k, &corpus)?;
    let topics = partition_of(&assignment)?;
    let wants = |m: MetricName| args.metrics.contains(&m);

    let mut report = EvaluationReport {
        n_docs: corpus.len(),
        k: topics.k(),
        ..EvaluationReport::default()
    };
    report.topic_sizes = vec![0; topics.k()];
    for &t in topics.labels() {
        report.topic_sizes[t] += 1;
    }

    let gold = gold_partition(&corpus).transpose()?;
    if wants(MetricName::Ari) || wants(MetricName::Ami) {
        let g = gold
            .as_ref()
            .context("ARI/AMI requested but the corpus has no gold labels")?;
        if wants(MetricName::Ari) {
            report.ari = Some(ari(g, &topics)?);
        }
        if wants(MetricName::Ami) {
            report.ami = Some(ami(g, &topics)?);
        }
    }
    let mut composition_csv = None;
    if let Some(g) = &gold {
        let m = composition_matrix(&topics, g)?;
        let labels = label_names(&corpus, g.k());
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut s = String::from("topic,size");
        for l in &labels {
            s.push(',');
            s.push_str(&csv_field(l));
        }
        s.push('\n');
        for (t, r) in rows.iter().enumerate() {
            let _ = write!(s, "{t},{}", report.topic_sizes[t]);
            for v in r {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        composition_csv = Some(s);
        report.composition = Some(Composition { labels, rows });
    }

    let coherence_measures: Vec<Measure> = [
        (MetricName::CUci, Measure::Uci),
        (MetricName::CNpmi, Measure::Npmi),
        (MetricName::CV, Measure::Cv),
    ]
    .into_iter()
    .filter(|(n, _)| wants(*n))
    .map(|(_, m)| m)
    .collect();
    if !coherence_measures.is_empty() {
        let reference = match &args.reference {
            Some(p) => load_corpus(p)?,
            None => corpus.clone(),
        };
        let lists = top_words(&corpus, &topics, args.coherence_words)?.word_lists();
        let mut vocab: Vec<&str> = lists.iter().flatten().map(String::as_str).collect();
        vocab.sort_unstable();
        vocab.dedup();
        for m in coherence_measures {
            let window = if m == Measure::Cv {
                CV_WINDOW
            } else {
                UCI_WINDOW
            };
            let stats = build_cooccurrence_for(&reference, window, &vocab)?;
            let value = coherence(&lists, &stats, m, DEFAULT_EPS)
                .with_context(|| format!("scoring {m:?} coherence"))?;
            match m {
                Measure::Uci => report.c_uci = Some(value),
                Measure::Npmi => report.c_npmi = Some(value),
                Measure::Cv => report.c_v = Some(value),
            }
        }
    }
    report.top_words = top_words(&corpus, &topics, args.top_n)?.topics;

    let mut out = StagedOutputs::new(&args.out)?;
    out.write("report.json", &to_json(&report)?)?;
    out.write("top_words.csv", &top_words_csv(&report.top_words, &[]))?;
    if let Some(s) = composition_csv {
        out.write("composition.csv", &s)?;
    }
    out.commit()?;
    Ok(())
}

pub fn cmd_noise_study(args: &NoiseStudyArgs, threads: Option<usize>) -> Result<()> {
    let started = Instant::now();
    let corpus = load_corpus(&args.corpus)?;
    let gold = gold_partition(&corpus).context("noise study needs a corpus with gold labels")??;
    let opts = NoiseStudyOptions {
        p_grid: args.p_grid.clone(),
        replicates: args.replicates,
        seed: args.seed,
        top_n: args.coherence_words,
        eps: DEFAULT_EPS,
    };
    let study = noise_study(&corpus, &gold, &opts)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &study.rows {
        w.serialize(row)?;
    }
    let table = String::from_utf8(w.into_inner()?)?;

    let mut out = StagedOutputs::new(&args.out)?;
    out.write("noise_study.csv", &table)?;
    out.write("summary.json", &to_json(&study.summary)?)?;
    let mut manifest = RunManifest::new(
        "noise-study",
        args.seed,
        threads,
        serde_json::to_value(&opts)?,
    );
    manifest.add_input(&args.corpus)?;
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    out.write("manifest.json", &to_json(&manifest)?)?;
    out.commit()?;
    let s = &study.summary.spearman;
    eprintln!(
        "spearman rho vs noise: ari {:.3}, ami {:.3}, c_uci {:.3}, c_npmi {:.3}, c_v {:.3}",
        s.ari, s.ami, s.c_uci, s.c_npmi, s.c_v
    );
    Ok(())
}

pub fn cmd_topwords(args: &TopwordsArgs, stdout: &mut dyn std::io::Write) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let assignment = load_assignment(&args.assignment, args.k, &corpus)?;
    let topics = partition_of(&assignment)?;
    let words = top_words(&corpus, &topics, args.top_n)?;

    let characteristic = match args.delta_tfidf {
        Some(t) => delta_tfidf(&corpus, &topics, t, args.top_n)?,
        None => Vec::new(),
    };
    let starred: Vec<String> = characteristic.iter().map(|(w, _)| w.clone()).collect();

    let mut text = String::new();
    let mut sizes = vec![0usize; topics.k()];
    for &t in topics.labels() {
        sizes[t] += 1;
    }
    for (t, list) in words.topics.iter().enumerate() {
        let shown: Vec<String> = list
            .iter()
            .map(|(w, _)| {
                if starred.contains(w) {
                    format!("{w}*")
                } else {
                    w.clone()
                }
            })
            .collect();
        let _ = writeln!(text, "topic {t} ({} docs): {}", sizes[t], shown.join(" "));
    }
    if let Some(t) = args.delta_tfidf {
        let _ = writeln!(text, "\ncharacteristic words of topic {t}:");
        for (w, s) in &characteristic {
            let _ = writeln!(text, "  {w}\t{s:.3}");
        }
    }

    let mut matches_csv = None;
    if let Some(other_path) = &args.match_with {
        let other = load_assignment(other_path, None, &corpus)?;
        let a = term_frequencies(&corpus, &topics)?;
        let b = term_frequencies(&corpus, &partition_of(&other)?)?;
        let pairs = greedy_match(&a, &b)?;
        let _ = writeln!(text, "\ntopic\tmatch\tsim");
        let mut csv = String::from("topic,match,similarity\n");
        for p in &pairs {
            let _ = writeln!(text, "{}\t{}\t{:.3}", p.a, p.b, p.similarity);
            let _ = writeln!(csv, "{},{},{:.3}", p.a, p.b, p.similarity);
        }
        matches_csv = Some(csv);
    }
    stdout.write_all(text.as_bytes())?;

    if let Some(dir) = &args.out {
        let mut out = StagedOutputs::new(dir)?;
        out.write("top_words.csv", &top_words_csv(&words.topics, &starred))?;
        if let Some(s) = matches_csv {
            out.write("matches.csv", &s)?;
        }
        out.commit()?;
    }
    Ok(())
}
