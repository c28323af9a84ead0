//! Recording-level anomaly scores, thresholding and ROC/AUC.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderParams;
use crate::error::{Error, Result};
use crate::features::stacked_windows;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(Label::Normal),
            "abnormal" | "anomaly" | "1" => Ok(Label::Abnormal),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecording {
    pub recording_id: String,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Recordings scoring `>= threshold` are flagged abnormal. The first point
    /// uses `+inf` (nothing flagged).
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Mean reconstruction loss over every stacked window of one `F x T`
/// recording.
pub fn score_recording(params: &AutoencoderParams, slice: &Matrix, mel_width: usize) -> Result<f64> {
    let windows = stacked_windows(slice.values(), slice.rows(), slice.cols(), mel_width)?;
    let losses = params.loss_batch(&windows)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Abnormal iff `score >= phi`.
pub fn classify(score: f64, phi: f64) -> Label {
    if score >= phi {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

/// Empirical quantile with linear interpolation between order statistics:
/// position `h = (n - 1) q`, value `x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
pub fn pick_threshold(train_scores: &[f64], quantile: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::Empty("no training scores".into()));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )));
    }
    let mut sorted = train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * quantile;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn class_counts(scored: &[ScoredRecording]) -> Result<(usize, usize)> {
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "recording {} has a non-finite score",
            bad.recording_id
        )));
    }
    let pos = scored.iter().filter(|s| s.label == Label::Abnormal).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC needs at least one normal and one abnormal recording".into(),
        ));
    }
    Ok((pos, neg))
}

/// ROC curve swept over the distinct scores (descending) and its trapezoidal
/// area.
pub fn roc_auc(scored: &[ScoredRecording]) -> Result<RocResult> {
    let (pos, neg) = class_counts(scored)?;
    let mut order: Vec<&ScoredRecording> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = order[i].score;
        while i < order.len() && order[i].score == threshold {
            match order[i].label {
                Label::Abnormal => tp += 1,
                Label::Normal => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(RocResult { points, auc })
}

/// AUC as the Mann-Whitney U statistic from mid-ranks (ties count one half).
pub fn mann_whitney_auc(scored: &[ScoredRecording]) -> Result<f64> {
    let (pos, neg) = class_counts(scored)?;
    let mut order: Vec<&ScoredRecording> = scored.iter().collect();
    order.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|s| s.label == Label::Abnormal).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}
