//! Desk-scale synthetic machine recordings.
//!
//! * Stationary machine: four fixed tones with per-recording random phase,
//!   white noise at 0 dB SNR, and in 30% of recordings a loud band-limited
//!   burst at a random time and band. Abnormal recordings move one tone up by
//!   15% and add a weak broadband floor.
//! * Non-stationary machine: a decaying impulse repeated with a fixed period
//!   and a per-recording random onset over a noise floor. Abnormal recordings
//!   space the same impulse with irregular gaps drawn from
//!   [`ABNORMAL_GAP_RANGE`] times the normal period.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::AudioClip;
use crate::metrics::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub sample_rate: u32,
    pub duration_secs: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration_secs: 2.0,
        }
    }
}

/// `(frequency Hz, relative amplitude)` of the stationary machine tones.
pub const STATIONARY_TONES: [(f64, f64); 4] = [(310.0, 1.0), (820.0, 0.7), (1650.0, 0.5), (3300.0, 0.35)];
/// Index into [`STATIONARY_TONES`] of the tone moved in abnormal recordings.
pub const SHIFTED_TONE: usize = 1;
pub const SHIFT_RATIO: f64 = 1.15;
pub const TONE_AMPLITUDE: f64 = 0.05;
pub const ARTEFACT_FRACTION: f64 = 0.3;
/// Burst rms relative to the background noise standard deviation.
pub const ARTEFACT_RMS: f64 = 8.0;
pub const ARTEFACT_SECS: f64 = 0.6;
pub const ARTEFACT_BANDWIDTH: f64 = 1500.0;

pub const IMPULSES_PER_CLIP_PER_SEC: f64 = 2.5;
pub const IMPULSE_LEN_SECS: f64 = 0.06;
/// Abnormal inter-onset gaps are drawn from this range, in units of the normal
/// period.
pub const ABNORMAL_GAP_RANGE: std::ops::Range<f64> = 0.4..1.2;

/// What was injected into one clip; lets tests check the construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClipMeta {
    /// `(start s, duration s, center Hz)` of the burst, if any.
    pub artefact: Option<(f64, f64, f64)>,
    /// Impulse onset times in seconds (non-stationary only).
    pub impulse_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthSet {
    pub clips: Vec<AudioClip>,
    pub labels: Vec<Label>,
    pub meta: Vec<ClipMeta>,
}

impl SynthSet {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

fn check_counts(n_normal: usize, n_abnormal: usize, opts: &SynthOptions) -> Result<usize> {
    if n_normal == 0 || n_abnormal == 0 {
        return Err(Error::InvalidArgument(
            "need at least one normal and one abnormal clip".into(),
        ));
    }
    let len = (opts.duration_secs * opts.sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("clip duration is zero".into()));
    }
    Ok(len)
}

fn labels(n_normal: usize, n_abnormal: usize) -> Vec<Label> {
    std::iter::repeat_n(Label::Normal, n_normal)
        .chain(std::iter::repeat_n(Label::Abnormal, n_abnormal))
        .collect()
}

/// Marks `round(fraction * count)` of `count` clips, chosen at random.
fn pick_subset(rng: &mut ChaCha8Rng, count: usize, fraction: f64) -> Vec<bool> {
    let k = (fraction * count as f64).round() as usize;
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(rng);
    let mut marks = vec![false; count];
    for &i in &idx[..k] {
        marks[i] = true;
    }
    marks
}

fn add_tone(buf: &mut [f64], sr: f64, freq: f64, amp: f64, phase: f64) {
    let w = 2.0 * PI * freq / sr;
    for (i, v) in buf.iter_mut().enumerate() {
        *v += amp * (w * i as f64 + phase).sin();
    }
}

fn add_noise(buf: &mut [f64], rng: &mut ChaCha8Rng, sigma: f64) {
    for v in buf.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Hann-enveloped cluster of random tones inside `[center - bw/2, center + bw/2]`.
fn add_burst(buf: &mut [f64], rng: &mut ChaCha8Rng, sr: f64, start: usize, len: usize, center: f64, rms: f64) {
    const PARTIALS: usize = 24;
    let amp = rms * (2.0 / PARTIALS as f64).sqrt();
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| {
            let f = center + ARTEFACT_BANDWIDTH * (rng.random::<f64>() - 0.5);
            (2.0 * PI * f / sr, 2.0 * PI * rng.random::<f64>())
        })
        .collect();
    let end = (start + len).min(buf.len());
    for i in start..end {
        let env = 0.5 - 0.5 * (2.0 * PI * (i - start) as f64 / len as f64).cos();
        let s: f64 = partials.iter().map(|(w, p)| (w * i as f64 + p).sin()).sum();
        // the Hann envelope has mean power 3/8; rescale so the burst rms is `rms`
        buf[i] += amp * s * env / (3.0f64 / 8.0).sqrt();
    }
}

pub fn synth_stationary(n_normal: usize, n_abnormal: usize, seed: u64) -> Result<SynthSet> {
    synth_stationary_with(n_normal, n_abnormal, seed, &SynthOptions::default())
}

pub fn synth_stationary_with(
    n_normal: usize,
    n_abnormal: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<SynthSet> {
    let len = check_counts(n_normal, n_abnormal, opts)?;
    let sr = opts.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = labels(n_normal, n_abnormal);
    let mut artefacts = pick_subset(&mut rng, n_normal, ARTEFACT_FRACTION);
    artefacts.extend(pick_subset(&mut rng, n_abnormal, ARTEFACT_FRACTION));

    let signal_power: f64 = STATIONARY_TONES
        .iter()
        .map(|(_, a)| (a * TONE_AMPLITUDE).powi(2) / 2.0)
        .sum();
    let noise_sigma = signal_power.sqrt();

    let mut clips = Vec::with_capacity(labels.len());
    let mut meta = Vec::with_capacity(labels.len());
    for (label, has_artefact) in labels.iter().zip(&artefacts) {
        let mut buf = vec![0.0; len];
        for (i, &(freq, rel)) in STATIONARY_TONES.iter().enumerate() {
            let freq = if *label == Label::Abnormal && i == SHIFTED_TONE {
                freq * SHIFT_RATIO
            } else {
                freq
            };
            let phase = 2.0 * PI * rng.random::<f64>();
            add_tone(&mut buf, sr, freq, rel * TONE_AMPLITUDE, phase);
        }
        add_noise(&mut buf, &mut rng, noise_sigma);
        if *label == Label::Abnormal {
            add_noise(&mut buf, &mut rng, noise_sigma * 0.3);
        }
        let mut m = ClipMeta::default();
        if *has_artefact {
            let dur = ARTEFACT_SECS.min(opts.duration_secs / 2.0);
            let start = rng.random::<f64>() * (opts.duration_secs - dur);
            let center = rng.random_range(1000.0..5500.0);
            add_burst(
                &mut buf,
                &mut rng,
                sr,
                (start * sr) as usize,
                (dur * sr) as usize,
                center,
                ARTEFACT_RMS * noise_sigma,
            );
            m.artefact = Some((start, dur, center));
        }
        clips.push(AudioClip::new(buf, opts.sample_rate)?);
        meta.push(m);
    }
    Ok(SynthSet { clips, labels, meta })
}

pub fn synth_nonstationary(n_normal: usize, n_abnormal: usize, seed: u64) -> Result<SynthSet> {
    synth_nonstationary_with(n_normal, n_abnormal, seed, &SynthOptions::default())
}

fn add_impulse(buf: &mut [f64], sr: f64, onset: f64, amp: f64) {
    const MODES: [(f64, f64); 2] = [(1800.0, 1.0), (4200.0, 0.6)];
    const DECAY_SECS: f64 = 0.01;
    let start = (onset * sr).round() as usize;
    let n = (IMPULSE_LEN_SECS * sr) as usize;
    for j in 0..n {
        let Some(v) = buf.get_mut(start + j) else { break };
        let t = j as f64 / sr;
        let env = (-t / DECAY_SECS).exp();
        let s: f64 = MODES.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum();
        *v += amp * env * s;
    }
}

pub fn synth_nonstationary_with(
    n_normal: usize,
    n_abnormal: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<SynthSet> {
    let len = check_counts(n_normal, n_abnormal, opts)?;
    let sr = opts.sample_rate as f64;
    let dur = opts.duration_secs;
    let count = ((IMPULSES_PER_CLIP_PER_SEC * dur).round() as usize).max(1);
    let period = dur / count as f64;
    let amp = 0.3;
    let noise_sigma = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = labels(n_normal, n_abnormal);

    let mut clips = Vec::with_capacity(labels.len());
    let mut meta = Vec::with_capacity(labels.len());
    for label in &labels {
        let times: Vec<f64> = match label {
            Label::Normal => {
                let onset = rng.random::<f64>() * period;
                (0..count).map(|i| onset + i as f64 * period).collect()
            }
            Label::Abnormal => {
                let mut t = Vec::with_capacity(2 * count);
                let mut next = rng.random::<f64>() * period;
                while next < dur - IMPULSE_LEN_SECS {
                    t.push(next);
                    next += rng.random_range(ABNORMAL_GAP_RANGE) * period;
                }
                t
            }
        };
        let mut buf = vec![0.0; len];
        add_noise(&mut buf, &mut rng, noise_sigma);
        for &t in &times {
            add_impulse(&mut buf, sr, t, amp);
        }
        clips.push(AudioClip::new(buf, opts.sample_rate)?);
        meta.push(ClipMeta {
            artefact: None,
            impulse_times: times,
        });
    }
    Ok(SynthSet { clips, labels, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{log_mel, mel_scale, MelConfig};

    #[test]
    fn stationary_is_deterministic() {
        let a = synth_stationary(3, 2, 42).unwrap();
        let b = synth_stationary(3, 2, 42).unwrap();
        for (x, y) in a.clips.iter().zip(&b.clips) {
            assert_eq!(x.samples(), y.samples());
        }
        let c = synth_stationary(3, 2, 43).unwrap();
        assert_ne!(a.clips[0].samples(), c.clips[0].samples());
    }

    #[test]
    fn nonstationary_is_deterministic() {
        let a = synth_nonstationary(2, 2, 5).unwrap();
        let b = synth_nonstationary(2, 2, 5).unwrap();
        for (x, y) in a.clips.iter().zip(&b.clips) {
            assert_eq!(x.samples(), y.samples());
        }
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(synth_stationary(0, 2, 1).is_err());
        assert!(synth_nonstationary(2, 0, 1).is_err());
    }

    #[test]
    fn artefacts_hit_thirty_percent() {
        let s = synth_stationary(20, 10, 7).unwrap();
        let normal = s.meta[..20].iter().filter(|m| m.artefact.is_some()).count();
        let abnormal = s.meta[20..].iter().filter(|m| m.artefact.is_some()).count();
        assert_eq!((normal, abnormal), (6, 3));
        assert_eq!(s.labels.iter().filter(|l| **l == Label::Abnormal).count(), 10);
    }

    #[test]
    fn shifted_band_differs_by_six_db() {
        let cfg = MelConfig::default();
        let s = synth_stationary(6, 6, 3).unwrap();
        let shifted = STATIONARY_TONES[SHIFTED_TONE].0 * SHIFT_RATIO;
        // Mel band whose center is closest to the shifted tone
        let edges = crate::features::mel_band_edges(&cfg);
        let band = (0..cfg.n_mels)
            .min_by(|&p, &q| {
                let d = |j: usize| (mel_scale(edges[j + 1]) - mel_scale(shifted)).abs();
                d(p).total_cmp(&d(q))
            })
            .unwrap();
        let mean_band = |label: Label| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for (clip, l) in s.clips.iter().zip(&s.labels) {
                if *l == label {
                    let m = log_mel(clip, &cfg).unwrap();
                    acc += (0..m.cols()).map(|t| m.get(band, t)).sum::<f64>() / m.cols() as f64;
                    n += 1.0;
                }
            }
            acc / n
        };
        let diff = mean_band(Label::Abnormal) - mean_band(Label::Normal);
        assert!(diff >= 6.0, "band difference {diff} dB");
    }

    #[test]
    fn all_clips_share_frame_count() {
        let cfg = MelConfig::default();
        for s in [synth_stationary(3, 3, 1).unwrap(), synth_nonstationary(3, 3, 1).unwrap()] {
            let t: Vec<usize> = s.clips.iter().map(|c| log_mel(c, &cfg).unwrap().cols()).collect();
            assert!(t.iter().all(|&v| v == t[0]));
        }
    }

    #[test]
    fn normal_impulse_trains_have_distinct_onsets_and_fixed_count() {
        let s = synth_nonstationary(8, 4, 9).unwrap();
        let normals = &s.meta[..8];
        let count = normals[0].impulse_times.len();
        assert!(count > 1);
        for m in normals {
            assert_eq!(m.impulse_times.len(), count);
            let gaps: Vec<f64> = m.impulse_times.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(gaps.iter().all(|g| (g - gaps[0]).abs() < 1e-12));
        }
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(normals[i].impulse_times[0], normals[j].impulse_times[0]);
            }
        }
    }

    #[test]
    fn abnormal_impulse_trains_are_irregular() {
        let s = synth_nonstationary(2, 6, 4).unwrap();
        let period = 2.0 / (IMPULSES_PER_CLIP_PER_SEC * 2.0).round();
        for m in &s.meta[2..] {
            let gaps: Vec<f64> = m.impulse_times.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(gaps.len() > 1);
            let (lo, hi) = (ABNORMAL_GAP_RANGE.start - 1e-9, ABNORMAL_GAP_RANGE.end + 1e-9);
            assert!(gaps.iter().all(|g| (lo..hi).contains(&(g / period))));
            assert!(gaps.iter().any(|g| (g - gaps[0]).abs() > 1e-6));
        }
    }
}
