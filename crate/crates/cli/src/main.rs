mod settings;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cntm::corpus::{
    default_exclusion_words, default_stopwords, find_linqs_files, load_generic, load_linqs,
    merge_authors, read_word_list, CorpusError, Dataset, IngestOptions, PhraseSet,
    VocabularyFilterSpec,
};
use cntm::eval::{evaluate, mean_and_stderr, FoldIn, Metrics};
use cntm::model::{ModelError, ModelState};
use cntm::report::{export_dot, render_report};
use cntm::sampler::{step, SweepStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use settings::{Format, Settings};

const CORPUS_FILE: &str = "corpus.json";
const MODEL_CORPUS_FILE: &str = "model_corpus.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const STATS_FILE: &str = "stats.log";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, settings or missing inputs; exit code 2.
    Usage(String),
    /// Failure while doing the work; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Config(_) | CorpusError::MissingLabels(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "cntm", version, about = "Citation-network topic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a LINQS or JSON Lines corpus into a bundle under --out.
    Ingest,
    /// Train one model per chain from the bundle.
    Train,
    /// Perplexity and clustering metrics, averaged over chains.
    Eval,
    /// Top words per topic and each author's dominant topic.
    Report,
    /// Author-topic graph in DOT.
    ExportDot,
}

#[derive(Args)]
struct Flags {
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input corpus (ingest) or corpus bundle (train).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["linqs", "generic"])]
    format: Option<String>,
    /// full, no-network, atm or hdp-lda.
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    topic_cap: Option<usize>,
    /// Exactly --topic-cap topics under a uniform root.
    #[arg(long, global = true)]
    fixed_k: bool,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    network_start: Option<usize>,
    /// Merge authors with fewer training publications into dummies.
    #[arg(long, global = true)]
    eta: Option<usize>,
    /// Name merged dummy authors by class label.
    #[arg(long, global = true)]
    use_labels: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Continue training from existing checkpoints.
    #[arg(long, global = true)]
    resume: bool,
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    /// Stopword list, one per line.
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// Multi-word phrases kept as one token, one per line.
    #[arg(long, global = true)]
    phrases: Option<PathBuf>,
    /// Words marking an author entry as an institution, one per line.
    #[arg(long, global = true)]
    exclusion_words: Option<PathBuf>,
    /// Drop words in more than this fraction of documents.
    #[arg(long, global = true)]
    common_threshold: Option<f64>,
    /// Drop words with fewer total occurrences.
    #[arg(long, global = true)]
    rare_count: Option<usize>,
    #[arg(long, global = true)]
    top_words: Option<usize>,
    /// Minimum author-topic weight drawn as an edge.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Chain used by report and export-dot.
    #[arg(long, global = true)]
    chain: Option<usize>,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("data", path(&self.data));
        put("format", self.format.clone());
        put("variant", self.variant.clone());
        put("topic_cap", self.topic_cap.map(|x| x.to_string()));
        put("fixed_k", self.fixed_k.then(|| "true".into()));
        put("iterations", self.iterations.map(|x| x.to_string()));
        put("network_start", self.network_start.map(|x| x.to_string()));
        put("eta", self.eta.map(|x| x.to_string()));
        put("use_labels", self.use_labels.then(|| "true".into()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("chains", self.chains.map(|x| x.to_string()));
        put("out", path(&self.out));
        put("resume", self.resume.then(|| "true".into()));
        put("test_fraction", self.test_fraction.map(|x| x.to_string()));
        put("stopwords", path(&self.stopwords));
        put("phrases", path(&self.phrases));
        put("exclusion_words", path(&self.exclusion_words));
        put("common_threshold", self.common_threshold.map(|x| x.to_string()));
        put("rare_count", self.rare_count.map(|x| x.to_string()));
        put("top_words", self.top_words.map(|x| x.to_string()));
        put("threshold", self.threshold.map(|x| x.to_string()));
        put("chain", self.chain.map(|x| x.to_string()));
        v
    }

    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            require(path)?;
            s.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            s.apply(k, &v)?;
        }
        s.validate()?;
        Ok(s)
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file or directory: {}", path.display())))
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_error(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_error(path))
}

fn chain_dir(out: &Path, chain: usize) -> PathBuf {
    out.join(format!("chain-{chain}"))
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    require(path)?;
    Ok(Dataset::load(path)?)
}

fn cmd_ingest(s: &Settings) -> Result<(), CliError> {
    let data = s
        .data
        .as_deref()
        .ok_or_else(|| CliError::Usage("ingest needs --data".into()))?;
    require(data)?;
    let format = s.format.unwrap_or(if data.is_dir() { Format::Linqs } else { Format::Generic });
    let dataset = match format {
        Format::Linqs => {
            let (content, cites) = if data.is_dir() {
                find_linqs_files(data)?
            } else {
                let cites = data.with_extension("cites");
                require(&cites)?;
                (data.to_path_buf(), cites)
            };
            load_linqs(&content, &cites, s.test_fraction, s.model.seed)?
        }
        Format::Generic => {
            let word_list = |p: &Option<PathBuf>| -> Result<Option<_>, CliError> {
                match p {
                    Some(p) => {
                        require(p)?;
                        Ok(Some(read_word_list(p)?))
                    }
                    None => Ok(None),
                }
            };
            let phrases = match &s.phrases {
                Some(p) => {
                    require(p)?;
                    PhraseSet::from_file(p)?
                }
                None => PhraseSet::default(),
            };
            let opts = IngestOptions {
                filter: VocabularyFilterSpec {
                    stopwords: word_list(&s.stopwords)?.unwrap_or_else(default_stopwords),
                    common_threshold: s.common_threshold,
                    rare_count: s.rare_count,
                },
                exclusion_words: word_list(&s.exclusion_words)?
                    .unwrap_or_else(default_exclusion_words),
                phrases,
                test_fraction: s.test_fraction,
                seed: s.model.seed,
            };
            load_generic(data, &opts)?
        }
    };
    create_dir(&s.out)?;
    dataset.save(&s.out.join(CORPUS_FILE))?;
    let report = dataset.report.to_text();
    write_file(&s.out.join("ingest_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

/// Replace stats lines from `from` onwards; earlier lines are kept.
fn open_stats(path: &Path, from: usize) -> Result<fs::File, CliError> {
    let kept = if from > 0 && path.exists() {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        text.lines()
            .filter(|l| SweepStats::parse_line(l).is_some_and(|st| st.iteration < from))
            .fold(String::new(), |mut acc, l| {
                acc.push_str(l);
                acc.push('\n');
                acc
            })
    } else {
        String::new()
    };
    write_file(path, &kept)?;
    fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_error(path))
}

fn run_chain(s: &Settings, data: &Dataset, chain: usize) -> Result<(), CliError> {
    let dir = chain_dir(&s.out, chain);
    create_dir(&dir)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let mut state = if s.resume && ckpt.exists() {
        let mut state = ModelState::load_checkpoint(&ckpt)?;
        state.check_corpus(&data.corpus)?;
        state.set_iterations(s.model.iterations);
        log::info!("chain {chain}: resuming at iteration {}", state.iteration());
        state
    } else {
        let config = cntm::model::ModelConfig {
            seed: s.model.seed + chain as u64,
            ..s.model.clone()
        };
        ModelState::init_random(data, &config)?
    };
    let stats_path = dir.join(STATS_FILE);
    let mut stats = std::io::BufWriter::new(open_stats(&stats_path, state.iteration())?);
    let total = state.config().iterations;
    while state.iteration() < total {
        let st = step(&mut state)?;
        writeln!(stats, "{}", st.to_line()).map_err(io_error(&stats_path))?;
        let done = state.iteration();
        if done % 100 == 0 || done == total {
            log::info!(
                "chain {chain}: iteration {done}/{total}, log joint {:.2}, {} topics",
                st.log_joint,
                st.k_active
            );
        }
        if s.checkpoint_every > 0 && done % s.checkpoint_every == 0 && done < total {
            stats.flush().map_err(io_error(&stats_path))?;
            state.save_checkpoint(&ckpt)?;
        }
    }
    stats.flush().map_err(io_error(&stats_path))?;
    state.save_checkpoint(&ckpt)?;
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<(), CliError> {
    let path = match &s.data {
        Some(p) if p.is_dir() => p.join(CORPUS_FILE),
        Some(p) => p.clone(),
        None => s.out.join(CORPUS_FILE),
    };
    let mut data = load_dataset(&path)?;
    merge_authors(&mut data.corpus, s.eta, s.use_labels)?;
    create_dir(&s.out)?;
    data.save(&s.out.join(MODEL_CORPUS_FILE))?;
    write_file(&s.out.join("run.conf"), &s.to_config_text())?;
    let data = &data;
    let results: Vec<Result<(), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..s.chains)
            .map(|c| scope.spawn(move || run_chain(s, data, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Runtime("training thread panicked".into())))
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    println!(
        "trained {} chain(s) of {} for {} iterations under {}",
        s.chains,
        s.model.variant,
        s.model.iterations,
        s.out.display()
    );
    Ok(())
}

/// Every `chain-{i}` with a checkpoint, counting up from zero.
fn find_chains(out: &Path) -> Result<Vec<usize>, CliError> {
    let chains: Vec<usize> = (0..)
        .take_while(|&c| chain_dir(out, c).join(CHECKPOINT_FILE).exists())
        .collect();
    if chains.is_empty() {
        return Err(CliError::Usage(format!(
            "no such file or directory: {}",
            chain_dir(out, 0).join(CHECKPOINT_FILE).display()
        )));
    }
    Ok(chains)
}

fn load_chain(s: &Settings, data: &Dataset, chain: usize) -> Result<ModelState, CliError> {
    let path = chain_dir(&s.out, chain).join(CHECKPOINT_FILE);
    require(&path)?;
    let state = ModelState::load_checkpoint(&path)?;
    state.check_corpus(&data.corpus)?;
    Ok(state)
}

fn summarize(per_chain: &[Metrics]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for m in per_chain {
        for (name, _) in m.values() {
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    let mut s = String::new();
    writeln!(s, "chains = {}", per_chain.len()).unwrap();
    for name in names {
        let values: Vec<f64> = per_chain
            .iter()
            .filter_map(|m| m.values().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v))
            .collect();
        let (mean, se) = mean_and_stderr(&values);
        writeln!(s, "{name} = {mean:.4} ± {se:.4}").unwrap();
    }
    let mut notes: Vec<&String> = per_chain.iter().flat_map(|m| &m.notes).collect();
    notes.dedup();
    for note in notes {
        writeln!(s, "# {note}").unwrap();
    }
    s
}

fn cmd_eval(s: &Settings) -> Result<(), CliError> {
    let data = load_dataset(&s.out.join(MODEL_CORPUS_FILE))?;
    let schedule = FoldIn {
        sweeps: s.fold_in_sweeps,
        burn_in: s.fold_in_burn_in,
    };
    let mut per_chain = Vec::new();
    for c in find_chains(&s.out)? {
        let state = load_chain(s, &data, c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(state.config().seed);
        let m = evaluate(&state, &data.corpus, schedule, &mut rng)?;
        write_file(&chain_dir(&s.out, c).join("metrics.txt"), &m.to_text())?;
        per_chain.push(m);
    }
    let text = summarize(&per_chain);
    write_file(&s.out.join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_report(s: &Settings) -> Result<(), CliError> {
    let data = load_dataset(&s.out.join(MODEL_CORPUS_FILE))?;
    let state = load_chain(s, &data, s.chain)?;
    let text = render_report(&state, &data.corpus, s.top_words);
    write_file(&s.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_export_dot(s: &Settings) -> Result<(), CliError> {
    let data = load_dataset(&s.out.join(MODEL_CORPUS_FILE))?;
    let state = load_chain(s, &data, s.chain)?;
    let dot = export_dot(&state, &data.corpus, s.threshold, s.top_words.min(3));
    let path = s.out.join("author_topics.dot");
    write_file(&path, &dot)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = cli.flags.settings()?;
    match cli.command {
        Command::Ingest => cmd_ingest(&settings),
        Command::Train => cmd_train(&settings),
        Command::Eval => cmd_eval(&settings),
        Command::Report => cmd_report(&settings),
        Command::ExportDot => cmd_export_dot(&settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
