//! Three-way comparison of raw, NMF-denoised and CP-denoised inputs to the
//! autoencoder detector.
//!
//! For every `(setup, K, seed)` cell the training recordings are (optionally)
//! denoised, an autoencoder is trained on them, the validation recordings are
//! denoised by a decomposition fitted on the validation tensor alone, and the
//! validation AUC is recorded. Decompositions depend only on `(setup, K)` and
//! are shared by all seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train, AutoencoderParams, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{abs_transform, build_tensor, AudioClip, MelConfig};
use crate::metrics::{pick_threshold, roc_auc, score_recording, RocResult, ScoredRecording};
use crate::nmf::{nmf_denoise, nmf_fit, SolverConfig};
use crate::nncp::{nncp_denoise, nncp_fit};
use crate::pipeline::dataset::{DatasetLayout, LoadedDataset, Recording, RunIdent};
use crate::tensor::{matricize, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    Baseline,
    Nmf,
    Nncp,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::Baseline, Setup::Nmf, Setup::Nncp];
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::Baseline => "baseline",
            Setup::Nmf => "nmf",
            Setup::Nncp => "nncp",
        })
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Setup::Baseline),
            "nmf" => Ok(Setup::Nmf),
            "nncp" | "cp" => Ok(Setup::Nncp),
            other => Err(Error::InvalidArgument(format!("unknown setup {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setups: Vec<Setup>,
    pub rank_grid: Vec<usize>,
    /// Number of autoencoder initializations per cell.
    pub seeds: usize,
    /// Seed `s` uses `base_seed + s` for weights and shuffling.
    pub base_seed: u64,
    pub mel: MelConfig,
    /// Rank is overwritten from `rank_grid` for each cell.
    pub solver: SolverConfig,
    pub train: TrainConfig,
    /// Frames concatenated per autoencoder input.
    pub mel_width: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setups: Setup::ALL.to_vec(),
            rank_grid: vec![5, 10, 20],
            seeds: 5,
            base_seed: 0,
            mel: MelConfig::default(),
            solver: SolverConfig::default(),
            train: TrainConfig::default(),
            mel_width: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.setups.is_empty() {
            return Err(Error::InvalidArgument("no setups selected".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("seeds must be at least 1".into()));
        }
        let needs_rank = self.setups.iter().any(|s| *s != Setup::Baseline);
        if needs_rank && (self.rank_grid.is_empty() || self.rank_grid.contains(&0)) {
            return Err(Error::InvalidArgument(
                "rank grid must be non-empty and positive".into(),
            ));
        }
        if self.mel_width == 0 {
            return Err(Error::InvalidArgument("mel_width must be at least 1".into()));
        }
        self.mel.validate()?;
        self.train.validate()
    }

    fn train_config(&self, seed: usize) -> TrainConfig {
        TrainConfig {
            init_seed: self.base_seed.wrapping_add(seed as u64),
            shuffle_seed: self.base_seed.wrapping_add(seed as u64).wrapping_add(1 << 32),
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub machine: String,
    pub machine_id: String,
    pub snr: String,
    pub setup: Setup,
    #[serde(rename = "k")]
    pub rank: Option<usize>,
    pub seed: usize,
    pub auc: f64,
}

impl ResultRow {
    fn sort_key(&self) -> (RunIdent, Setup, Option<usize>, usize) {
        (
            RunIdent {
                machine: self.machine.clone(),
                machine_id: self.machine_id.clone(),
                snr: self.snr.clone(),
            },
            self.setup,
            self.rank,
            self.seed,
        )
    }
}

/// Everything produced by one cell besides its result row.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub row: ResultRow,
    pub roc: RocResult,
    pub scores: Vec<ScoredRecording>,
    /// 0.99 quantile of the training-recording scores.
    pub threshold: f64,
}

impl RunArtifacts {
    /// File stem naming this cell, e.g. `fan_id_00_0dB_nncp_k10_seed3`.
    pub fn stem(&self) -> String {
        let r = &self.row;
        let k = r.rank.map_or_else(|| "none".to_string(), |k| k.to_string());
        format!(
            "{}_{}_{}_{}_k{}_seed{}",
            r.machine, r.machine_id, r.snr, r.setup, k, r.seed
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub runs: Vec<RunArtifacts>,
}

impl ExperimentOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }
}

/// Raw log-Mel tensor, or the decomposition-denoised absolute values.
pub fn prepare_tensor(raw: &Tensor3, setup: Setup, solver: &SolverConfig) -> Result<Tensor3> {
    let denoised = match setup {
        Setup::Baseline => return Ok(raw.clone()),
        Setup::Nmf => {
            let x = abs_transform(raw);
            let model = nmf_fit(&matricize(&x), solver)?;
            info!(
                "nmf K={} finished after {} iterations, objective {:.4e}",
                solver.rank,
                model.iterations(),
                model.objective()
            );
            nmf_denoise(&model, x.dim_t(), x.dim_n())?
        }
        Setup::Nncp => {
            let model = nncp_fit(&abs_transform(raw), solver)?;
            info!(
                "nncp K={} finished after {} sweeps, objective {:.4e}",
                solver.rank,
                model.sweeps(),
                model.objective()
            );
            nncp_denoise(&model)
        }
    };
    if denoised.min_value() < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{setup} produced a negative denoised entry"
        )));
    }
    Ok(denoised)
}

fn clips(recs: &[Recording]) -> Vec<AudioClip> {
    recs.iter().map(|r| r.clip.clone()).collect()
}

/// Runs every configured cell on an already loaded dataset.
pub fn run_on_dataset(
    cfg: &ExperimentConfig,
    ident: &RunIdent,
    data: &LoadedDataset,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Dataset("training or validation split is empty".into()));
    }
    let raw_train = build_tensor(&clips(&data.train), &cfg.mel)?;
    let raw_valid = build_tensor(&clips(&data.valid), &cfg.mel)?;
    if raw_train.dim_t() != raw_valid.dim_t() {
        return Err(Error::HeterogeneousFrames(format!(
            "train recordings have {} frames, validation {}",
            raw_train.dim_t(),
            raw_valid.dim_t()
        )));
    }

    let mut setups = cfg.setups.clone();
    setups.sort();
    setups.dedup();
    let mut ranks = cfg.rank_grid.clone();
    ranks.sort_unstable();
    ranks.dedup();

    let mut output = ExperimentOutput::default();
    for setup in setups {
        let grid: Vec<Option<usize>> = match setup {
            Setup::Baseline => vec![None],
            _ => ranks.iter().copied().map(Some).collect(),
        };
        for rank in grid {
            let solver = SolverConfig {
                rank: rank.unwrap_or(1),
                ..cfg.solver.clone()
            };
            let x_train = prepare_tensor(&raw_train, setup, &solver)?;
            let x_valid = prepare_tensor(&raw_valid, setup, &solver)?;
            for seed in 0..cfg.seeds {
                let run = run_cell(cfg, ident, data, setup, rank, seed, &x_train, &x_valid)?;
                info!("{} auc {:.4}", run.stem(), run.row.auc);
                output.runs.push(run);
            }
        }
    }
    output.runs.sort_by(|a, b| a.row.sort_key().cmp(&b.row.sort_key()));
    Ok(output)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    ident: &RunIdent,
    data: &LoadedDataset,
    setup: Setup,
    rank: Option<usize>,
    seed: usize,
    x_train: &Tensor3,
    x_valid: &Tensor3,
) -> Result<RunArtifacts> {
    let trained = train(x_train, &cfg.train_config(seed), cfg.mel_width)?;
    let params: &AutoencoderParams = &trained.params;

    let scores = data
        .valid
        .iter()
        .enumerate()
        .map(|(n, rec)| {
            Ok(ScoredRecording {
                recording_id: rec.id.clone(),
                label: rec.label,
                score: score_recording(params, &x_valid.slice_matrix(n), cfg.mel_width)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let train_scores = (0..x_train.dim_n())
        .map(|n| score_recording(params, &x_train.slice_matrix(n), cfg.mel_width))
        .collect::<Result<Vec<_>>>()?;
    let threshold = pick_threshold(&train_scores, 0.99)?;
    let roc = roc_auc(&scores)?;
    Ok(RunArtifacts {
        row: ResultRow {
            machine: ident.machine.clone(),
            machine_id: ident.machine_id.clone(),
            snr: ident.snr.clone(),
            setup,
            rank,
            seed,
            auc: roc.auc,
        },
        roc,
        scores,
        threshold,
    })
}

/// Loads the dataset described by `layout` and runs every cell.
pub fn run_experiment(cfg: &ExperimentConfig, layout: &DatasetLayout) -> Result<Vec<ResultRow>> {
    Ok(run_experiment_full(cfg, layout)?.rows())
}

pub fn run_experiment_full(cfg: &ExperimentConfig, layout: &DatasetLayout) -> Result<ExperimentOutput> {
    let data = layout.load()?;
    info!(
        "{}: {} training and {} validation recordings",
        layout.machine_dir().display(),
        data.train.len(),
        data.valid.len()
    );
    run_on_dataset(cfg, &layout.ident(), &data)
}

/// Mean AUC per `(machine, snr, setup)` with the best rank kept for the
/// decomposition setups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub machine: String,
    pub machine_id: String,
    pub snr: String,
    pub setup: Setup,
    #[serde(rename = "k")]
    pub rank: Option<usize>,
    pub mean_auc: f64,
    pub runs: usize,
}

/// Averages over seeds, then keeps the rank with the highest mean (ties go to
/// the smaller rank).
pub fn report(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(RunIdent, Setup), BTreeMap<Option<usize>, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let (ident, setup, rank, _) = r.sort_key();
        groups
            .entry((ident, setup))
            .or_default()
            .entry(rank)
            .or_default()
            .push(r.auc);
    }
    groups
        .into_iter()
        .map(|((ident, setup), by_rank)| {
            let mut best: Option<(Option<usize>, f64, usize)> = None;
            for (rank, aucs) in by_rank {
                let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
                if best.is_none_or(|(_, m, _)| mean > m) {
                    best = Some((rank, mean, aucs.len()));
                }
            }
            let (rank, mean_auc, runs) = best.expect("groups are never empty");
            SummaryRow {
                machine: ident.machine,
                machine_id: ident.machine_id,
                snr: ident.snr,
                setup,
                rank,
                mean_auc,
                runs,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULTS_HEADER: [&str; 7] = ["machine", "machine_id", "snr", "setup", "k", "seed", "auc"];
pub const SUMMARY_HEADER: [&str; 7] = ["machine", "machine_id", "snr", "setup", "k", "mean_auc", "runs"];

/// Writes `results.csv`, `summary.csv`, `summary.json`, `scores.csv` and one
/// `roc/<stem>.csv` per cell under `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir.join("roc"))?;
    let rows = output.rows();
    write_csv(&dir.join("results.csv"), &rows, &RESULTS_HEADER)?;
    write_summary(dir, &report(&rows))?;

    let mut scores = csv::Writer::from_path(dir.join("scores.csv"))?;
    scores.write_record(["run", "recording_id", "label", "score", "threshold"])?;
    for run in &output.runs {
        let stem = run.stem();
        for s in &run.scores {
            scores.write_record([
                stem.as_str(),
                &s.recording_id,
                &s.label.to_string(),
                &s.score.to_string(),
                &run.threshold.to_string(),
            ])?;
        }
        write_roc(&dir.join("roc").join(format!("{stem}.csv")), &run.roc)?;
    }
    scores.flush()?;
    Ok(())
}

pub fn write_summary(dir: &Path, summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("summary.csv"), summary, &SUMMARY_HEADER)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

/// `fpr,tpr,threshold` rows.
pub fn write_roc(path: &Path, roc: &RocResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in &roc.points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
