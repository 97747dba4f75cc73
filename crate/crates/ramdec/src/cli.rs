//! `ramdec` subcommands. Diagnostics go to standard error; data goes to
//! files, or standard output for `score` and `gen-toy`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ramdec_core::am::{loglikes, AcousticModel, LocalBackend, PosteriorMatrix, DEFAULT_LOG_EPSILON};
use ramdec_core::dataset::{compute_priors, PriorVector, DEFAULT_PRIOR_FLOOR};
use ramdec_core::decoder::{best_path, decode, prune_lattice, write_lattice_text, DecodeConfig};
use ramdec_core::graph::{validate_graph, DecodingGraph, SymbolTable};
use ramdec_core::mlp::{init_model, train_sgd, Activation, TrainConfig};
use ramdec_core::splice::{splice, SplicingConfig};
use ramdec_core::toy::ToySpec;
use ramdec_core::wer::score_corpus;
use ramdec_core::{AlignmentVector, FeatureMatrix, Matrix};

use crate::remote::{RemoteBackend, RemoteConfig, DEFAULT_CHUNK_SIZE, DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT_MS};
use crate::{ark, egs, formats, model_io, toy_io, Error, Result};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    /// Bad data, a mismatch, a failed decode or an unreachable server.
    Failure = 1,
    Usage = 2,
}

#[derive(Debug, Parser)]
#[command(name = "ramdec", version, about = "Hybrid DNN-HMM training and WFST decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Splice features, attach alignment labels and write sharded examples.
    MakeEgs(MakeEgsArgs),
    /// Estimate pdf priors from alignments.
    Priors(PriorsArgs),
    /// Train an MLP acoustic model on an examples directory.
    Train(TrainArgs),
    /// Decode features into word hypotheses.
    Decode(DecodeArgs),
    /// Word error rate of hypotheses against references.
    Score(ScoreArgs),
    /// Write a seeded toy task (graph, words, features, alignments, references).
    GenToy(GenToyArgs),
}

#[derive(Debug, Args)]
struct SpliceArgs {
    /// Left context frames.
    #[arg(long, default_value_t = 0)]
    left: usize,
    /// Right context frames.
    #[arg(long, default_value_t = 0)]
    right: usize,
}

impl SpliceArgs {
    fn config(&self) -> SplicingConfig {
        SplicingConfig::new(self.left, self.right)
    }
}

#[derive(Debug, Args)]
struct MakeEgsArgs {
    #[arg(long)]
    feats: PathBuf,
    #[arg(long)]
    ali: PathBuf,
    #[command(flatten)]
    splice: SpliceArgs,
    #[arg(long)]
    num_pdfs: usize,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PriorsArgs {
    #[arg(long)]
    ali: PathBuf,
    #[arg(long)]
    num_pdfs: usize,
    #[arg(long, default_value_t = DEFAULT_PRIOR_FLOOR)]
    floor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    egs: PathBuf,
    /// Output size of every layer; the last is the number of pdfs.
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<usize>,
    /// Activation of the hidden layers.
    #[arg(long, default_value = "relu", value_parser = parse_hidden_activation)]
    hidden_activation: Activation,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f32,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_hidden_activation(s: &str) -> std::result::Result<Activation, String> {
    match Activation::from_name(s) {
        Some(Activation::Softmax) | None => Err(format!("expected relu, sigmoid or tanh, got {s:?}")),
        Some(a) => Ok(a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AmKind {
    Local,
    Remote,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    words: PathBuf,
    #[arg(long)]
    feats: PathBuf,
    #[command(flatten)]
    splice: SpliceArgs,
    #[arg(long)]
    priors: PathBuf,
    #[arg(long, value_enum)]
    am: AmKind,
    /// Model file, for `--am local`.
    #[arg(long, required_if_eq("am", "local"))]
    model: Option<PathBuf>,
    /// Server base URL, for `--am remote`.
    #[arg(long, env = "RAMDEC_URL", required_if_eq("am", "remote"))]
    url: Option<String>,
    #[arg(long, default_value = "am")]
    model_name: String,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE as u64, value_parser = clap::value_parser!(u64).range(1..))]
    chunk_size: u64,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: u32,
    #[arg(long, default_value_t = DecodeConfig::default().beam)]
    beam: f32,
    #[arg(long, default_value_t = DecodeConfig::default().max_active)]
    max_active: usize,
    #[arg(long, default_value_t = DecodeConfig::default().lattice_beam)]
    lattice_beam: f32,
    #[arg(long, default_value_t = DecodeConfig::default().acoustic_scale)]
    acoustic_scale: f32,
    /// Also write each utterance's pruned lattice here.
    #[arg(long)]
    lattice_out: Option<PathBuf>,
    /// Utterances decoded in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (including the program name), runs the subcommand and maps
/// the outcome to an exit status.
pub fn dispatch<I, T>(argv: I) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage } else { Exit::Success };
        }
    };
    let outcome = match cli.command {
        Command::MakeEgs(a) => make_egs(a),
        Command::Priors(a) => priors(a),
        Command::Train(a) => train(a),
        Command::Decode(a) => run_decode(a),
        Command::Score(a) => score(a),
        Command::GenToy(a) => gen_toy(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ramdec: error: {e}");
            Exit::Failure
        }
    }
}

fn make_egs(a: MakeEgsArgs) -> Result<Exit> {
    let s = egs::make_egs(&a.feats, &a.ali, a.splice.config(), a.num_pdfs, a.shards, &a.out)?;
    log::info!(
        "wrote {} utterances ({} frames, input dim {}) to {} shards; skipped {}",
        s.utterances,
        s.plan.frames.iter().sum::<usize>(),
        s.input_dim,
        a.shards,
        s.skipped
    );
    Ok(Exit::Success)
}

fn priors(a: PriorsArgs) -> Result<Exit> {
    let alis = ark::open::<AlignmentVector>(&a.ali)?.collect::<Result<Vec<_>>>()?;
    let priors = compute_priors(&alis, a.num_pdfs, a.floor)?;
    formats::write_priors(&a.out, &priors)?;
    Ok(Exit::Success)
}

fn train(a: TrainArgs) -> Result<Exit> {
    let shards = egs::read_egs(&a.egs)?;
    let input_dim = shards
        .iter()
        .find(|s| !s.is_empty())
        .map(|s| s.input_dim())
        .ok_or(ramdec_core::Error::NoFrames)?;
    let cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, learning_rate: a.lr, seed: a.seed };
    cfg.validate()?;
    let model = init_model(input_dim, &a.layers, a.hidden_activation, a.seed)?;
    let (model, reports) = train_sgd(model, &shards, &cfg)?;
    for r in &reports {
        log::info!("epoch {} loss {:.6} frame accuracy {:.4}", r.epoch + 1, r.loss, r.frame_accuracy);
    }
    model_io::save_model(&model, &a.out)?;
    Ok(Exit::Success)
}

/// Either acoustic backend behind one interface.
pub enum Backend {
    Local(LocalBackend),
    Remote(RemoteBackend),
}

impl AcousticModel for Backend {
    type Error = Error;

    fn propagate(&self, spliced: &Matrix) -> Result<PosteriorMatrix> {
        match self {
            Backend::Local(b) => Ok(b.propagate(spliced)?),
            Backend::Remote(b) => b.propagate(spliced),
        }
    }
}

/// Everything needed to decode one utterance; shared read-only across jobs.
pub struct Decoder {
    pub graph: DecodingGraph,
    pub words: SymbolTable,
    pub priors: PriorVector,
    pub splice: SplicingConfig,
    pub config: DecodeConfig,
    pub backend: Backend,
}

/// One decoded utterance: its hypothesis line and lattice text.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub hyp_line: String,
    pub lattice: String,
    pub partial: bool,
}

impl Decoder {
    pub fn decode_utterance(&self, feats: &FeatureMatrix) -> Result<Decoded> {
        let spliced = splice(&feats.data, self.splice);
        let post = self.backend.propagate(&spliced)?;
        let ll = loglikes(&post, &self.priors, DEFAULT_LOG_EPSILON)?;
        let lattice = prune_lattice(&decode(&self.graph, &ll, &self.config)?, self.config.lattice_beam);
        let best = best_path(&lattice)?;
        let words = best
            .words
            .iter()
            .map(|&id| {
                self.words
                    .word(id)
                    .ok_or_else(|| Error::Other(format!("{}: word id {id} not in symbol table", feats.key)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Decoded {
            hyp_line: formats::transcript_line(feats.key.as_str(), &words),
            lattice: write_lattice_text(&lattice),
            partial: best.partial,
        })
    }
}

fn run_decode(a: DecodeArgs) -> Result<Exit> {
    let config = DecodeConfig {
        beam: a.beam,
        max_active: a.max_active,
        lattice_beam: a.lattice_beam,
        acoustic_scale: a.acoustic_scale,
    };
    config.validate()?;
    let graph = formats::read_graph(&a.graph)?;
    let words = formats::read_symbol_table(&a.words)?;
    let priors = formats::read_priors(&a.priors)?;
    let num_pdfs = priors.num_pdfs();
    if let Err(problems) = validate_graph(&graph, num_pdfs) {
        return Err(ramdec_core::Error::Graph(problems).into());
    }
    let backend = match a.am {
        AmKind::Local => {
            let path = a.model.as_deref().expect("clap enforces --model for --am local");
            let model = model_io::load_model(path)?;
            if model.num_pdfs() != num_pdfs {
                return Err(Error::Other(format!(
                    "model has {} outputs but the priors have {num_pdfs} pdfs",
                    model.num_pdfs()
                )));
            }
            Backend::Local(LocalBackend::new(model))
        }
        AmKind::Remote => {
            let url = a.url.clone().expect("clap enforces --url for --am remote");
            let cfg = RemoteConfig {
                chunk_size: a.chunk_size as usize,
                timeout_ms: a.timeout_ms,
                max_retries: a.max_retries,
                ..RemoteConfig::new(url, a.model_name.clone())
            };
            Backend::Remote(RemoteBackend::new(cfg, num_pdfs)?)
        }
    };
    let decoder = Decoder { graph, words, priors, splice: a.splice.config(), config, backend };
    let utterances = ark::open::<FeatureMatrix>(&a.feats)?.collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs as usize)
        .build()
        .map_err(|e| Error::Other(format!("thread pool: {e}")))?;
    let results: Vec<Result<Decoded>> =
        pool.install(|| utterances.par_iter().map(|u| decoder.decode_utterance(u)).collect());

    let mut hyp = String::new();
    let mut lattices = String::new();
    let mut failed = 0;
    for (u, r) in utterances.iter().zip(results) {
        match r {
            Ok(d) => {
                if d.partial {
                    log::warn!("{}: no final state reached; emitting partial hypothesis", u.key);
                }
                hyp.push_str(&d.hyp_line);
                lattices.push_str(&format!("{}\n{}\n", u.key, d.lattice));
            }
            Err(e) => {
                eprintln!("ramdec: {}: {e}", u.key);
                failed += 1;
            }
        }
    }
    fs::write(&a.out, hyp).map_err(Error::io(&a.out))?;
    if let Some(path) = &a.lattice_out {
        fs::write(path, lattices).map_err(Error::io(path))?;
    }
    log::info!("decoded {} of {} utterances", utterances.len() - failed, utterances.len());
    Ok(if failed == 0 { Exit::Success } else { Exit::Failure })
}

fn score(a: ScoreArgs) -> Result<Exit> {
    let refs = formats::read_transcripts(&a.reference)?;
    let hyps = formats::read_transcripts(&a.hyp)?;
    let report = score_corpus(&refs, &hyps)?;
    let mut out = std::io::stdout().lock();
    out.write_all(report.to_text().as_bytes())?;
    out.flush()?;
    Ok(Exit::Success)
}

fn gen_toy(a: GenToyArgs) -> Result<Exit> {
    let spec = ToySpec { seed: a.seed, ..ToySpec::default() };
    toy_io::generate_toy(&spec, &a.out)?;
    println!("{}", Path::new(&a.out).join(toy_io::MANIFEST_FILE).display());
    Ok(Exit::Success)
}
