use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use specdenoise::autoencoder::train;
use specdenoise::metrics::{classify, mann_whitney_auc, pick_threshold, roc_auc, score_recording};
use specdenoise::pipeline::experiment::{report, run_experiment_full, write_outputs, write_roc, write_summary, read_results};
use specdenoise::pipeline::synth::{synth_nonstationary_with, synth_stationary_with};
use specdenoise::pipeline::{read_tensor, write_tensor, DatasetLayout, WavEncoding, DATA_ROOT_ENV};
use specdenoise::{
    build_tensor, AdamConfig, AudioClip, AutoencoderParams, ExperimentConfig, Label, MelConfig, ScoredRecording,
    Setup, SolverConfig, SynthOptions, TrainConfig,
};

#[derive(Parser)]
#[command(name = "specdenoise", version, about = "Decomposition denoising and autoencoder anomaly detection")]
struct Cli {
    /// Log progress to stderr (repeat for more detail). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-Mel tensor from every .wav file in a directory (sorted by name).
    Features(FeaturesArgs),
    /// Denoise a tensor file by a low-rank non-negative decomposition of |X|.
    Denoise(DenoiseArgs),
    /// Train an autoencoder on a tensor file.
    Train(TrainArgs),
    /// Score every recording of a tensor file with a trained model.
    Score(ScoreArgs),
    /// Full baseline / NMF / nnCP comparison on one machine directory.
    Run(RunArgs),
    /// Write a synthetic benchmark dataset as WAV files.
    Synth(SynthArgs),
    /// Summarize an existing results.csv.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct MelArgs {
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 1024)]
    frame_len: usize,
    #[arg(long, default_value_t = 512)]
    hop: usize,
    #[arg(long, default_value_t = 64)]
    n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    f_min: f64,
    /// Defaults to Nyquist.
    #[arg(long)]
    f_max: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    log_floor: f64,
    #[arg(long)]
    no_center_pad: bool,
}

impl MelArgs {
    fn config(&self) -> MelConfig {
        MelConfig {
            sample_rate: self.sample_rate,
            frame_len: self.frame_len,
            hop: self.hop,
            n_mels: self.n_mels,
            f_min: self.f_min,
            f_max: self.f_max,
            log_floor: self.log_floor,
            center_pad: !self.no_center_pad,
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_REL_TOL)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0)]
    solver_seed: u64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_EPSILON)]
    epsilon_floor: f64,
}

impl SolverArgs {
    fn config(&self, rank: usize) -> SolverConfig {
        SolverConfig {
            rank,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            seed: self.solver_seed,
            epsilon_floor: self.epsilon_floor,
        }
    }
}

#[derive(Args, Clone)]
struct TrainerArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64,8,64,64")]
    hidden: Vec<usize>,
    /// Frames stacked into one autoencoder input.
    #[arg(long, default_value_t = 5)]
    mel_width: usize,
}

impl TrainerArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle_seed: seed,
            init_seed: seed,
            hidden_dims: self.hidden.clone(),
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
        }
    }
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    mel: MelArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Nmf,
    Nncp,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    rank: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training-score quantile stored as the decision threshold.
    #[arg(long, default_value_t = 0.99)]
    quantile: f64,
    #[command(flatten)]
    trainer: TrainerArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// CSV with columns recording,score,decision.
    #[arg(long)]
    output: PathBuf,
    /// One label (normal/abnormal) per line in tensor slice order; enables AUC.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Overrides the threshold stored in the model.
    #[arg(long)]
    threshold: Option<f64>,
    /// ROC CSV to write when labels are given.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LayoutArgs {
    /// Dataset root; falls back to the SPECDENOISE_DATA_ROOT environment variable.
    #[arg(long, env = DATA_ROOT_ENV)]
    root: PathBuf,
    #[arg(long)]
    machine: String,
    #[arg(long, default_value = "id_00")]
    machine_id: String,
    #[arg(long, default_value = "0dB")]
    snr: String,
}

impl LayoutArgs {
    fn layout(&self) -> DatasetLayout {
        DatasetLayout::new(&self.root, &self.machine, &self.machine_id, &self.snr)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    /// Output directory for results.csv, summary.{csv,json}, scores.csv and roc/.
    #[arg(long)]
    output: PathBuf,
    /// JSON experiment config; explicit flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,nmf,nncp")]
    setups: Vec<Setup>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[command(flatten)]
    mel: MelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    trainer: TrainerArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Stationary,
    Nonstationary,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[arg(long, value_enum)]
    kind: SynthKind,
    /// Normal recordings, training plus held-out.
    #[arg(long, default_value_t = 60)]
    normal: usize,
    #[arg(long, default_value_t = 20)]
    abnormal: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    #[arg(long)]
    float32: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    /// Directory for summary.csv and summary.json.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectorModel {
    mel_width: usize,
    threshold: f64,
    params: AutoencoderParams,
    epoch_losses: Vec<f64>,
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    Ok(files)
}

fn features(args: FeaturesArgs) -> Result<()> {
    let files = wav_files(&args.input_dir)?;
    let clips = files
        .iter()
        .map(|p| specdenoise::pipeline::load_wav(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<AudioClip>>>()?;
    let x = build_tensor(&clips, &args.mel.config())?;
    write_tensor(&args.output, &x)?;
    let (f, t, n) = x.dims();
    println!("wrote {f}x{t}x{n} tensor to {}", args.output.display());
    Ok(())
}

fn denoise(args: DenoiseArgs) -> Result<()> {
    let x = read_tensor(&args.input)?;
    let setup = match args.method {
        Method::Nmf => Setup::Nmf,
        Method::Nncp => Setup::Nncp,
    };
    let y = specdenoise::pipeline::experiment::prepare_tensor(&x, setup, &args.solver.config(args.rank))?;
    write_tensor(&args.output, &y)?;
    println!("wrote {setup} rank {} reconstruction to {}", args.rank, args.output.display());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let x = read_tensor(&args.input)?;
    let mel_width = args.trainer.mel_width;
    let outcome = train(&x, &args.trainer.config(args.seed), mel_width)?;
    let scores = (0..x.dim_n())
        .map(|n| score_recording(&outcome.params, &x.slice_matrix(n), mel_width))
        .collect::<specdenoise::Result<Vec<f64>>>()?;
    let model = DetectorModel {
        mel_width,
        threshold: pick_threshold(&scores, args.quantile)?,
        params: outcome.params,
        epoch_losses: outcome.epoch_losses,
    };
    fs::write(&args.output, serde_json::to_string(&model)?)?;
    println!(
        "final epoch loss {:.6e}, threshold {:.6e}",
        model.epoch_losses.last().copied().unwrap_or(f64::NAN),
        model.threshold
    );
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<Label>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.parse::<Label>().map_err(Into::into))
        .collect()
}

fn score(args: ScoreArgs) -> Result<()> {
    let model: DetectorModel = serde_json::from_str(&fs::read_to_string(&args.model)?)
        .with_context(|| format!("parsing model {}", args.model.display()))?;
    let x = read_tensor(&args.input)?;
    let phi = args.threshold.unwrap_or(model.threshold);
    let scores = (0..x.dim_n())
        .map(|n| score_recording(&model.params, &x.slice_matrix(n), model.mel_width))
        .collect::<specdenoise::Result<Vec<f64>>>()?;

    let mut w = csv::Writer::from_path(&args.output)?;
    w.write_record(["recording", "score", "decision"])?;
    for (n, s) in scores.iter().enumerate() {
        w.write_record([n.to_string(), s.to_string(), classify(*s, phi).to_string()])?;
    }
    w.flush()?;

    if let Some(path) = &args.labels {
        let labels = read_labels(path)?;
        if labels.len() != scores.len() {
            bail!("{} labels for {} recordings", labels.len(), scores.len());
        }
        let scored: Vec<ScoredRecording> = labels
            .into_iter()
            .zip(&scores)
            .enumerate()
            .map(|(n, (label, &score))| ScoredRecording {
                recording_id: n.to_string(),
                label,
                score,
            })
            .collect();
        let roc = roc_auc(&scored)?;
        info!("rank-sum AUC {:.6}", mann_whitney_auc(&scored)?);
        if let Some(roc_path) = &args.roc {
            write_roc(roc_path, &roc)?;
        }
        println!("auc {:.6}", roc.auc);
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing config {}", path.display()))?,
        None => ExperimentConfig {
            setups: args.setups.clone(),
            rank_grid: args.ranks.clone(),
            seeds: args.seeds,
            base_seed: args.base_seed,
            mel: args.mel.config(),
            solver: args.solver.config(1),
            train: args.trainer.config(0),
            mel_width: args.trainer.mel_width,
        },
    };
    let output = run_experiment_full(&cfg, &args.layout.layout())?;
    write_outputs(&args.output, &output)?;
    fs::write(args.output.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    for row in report(&output.rows()) {
        let k = row.rank.map_or_else(|| "-".to_string(), |k| k.to_string());
        println!("{}\t{}\t{}\t{}\tK={k}\tAUC={:.4}", row.machine, row.machine_id, row.snr, row.setup, row.mean_auc);
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let opts = SynthOptions {
        sample_rate: args.sample_rate,
        duration_secs: args.duration,
    };
    let set = match args.kind {
        SynthKind::Stationary => synth_stationary_with(args.normal, args.abnormal, args.seed, &opts)?,
        SynthKind::Nonstationary => synth_nonstationary_with(args.normal, args.abnormal, args.seed, &opts)?,
    };
    let encoding = if args.float32 {
        WavEncoding::Float32
    } else {
        WavEncoding::Pcm16
    };
    let layout = args.layout.layout();
    layout.write_synth(&set, encoding)?;
    println!("wrote {} recordings under {}", set.len(), layout.machine_dir().display());
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let rows = read_results(&args.results)?;
    let summary = report(&rows);
    write_summary(&args.output, &summary)?;
    println!("{} summary rows", summary.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Features(a) => features(a),
        Command::Denoise(a) => denoise(a),
        Command::Train(a) => train_cmd(a),
        Command::Score(a) => score(a),
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
