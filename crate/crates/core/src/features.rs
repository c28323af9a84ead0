//! Log-Mel front end: audio clips to the `F x T x N` spectrogram tensor, plus
//! the absolute-value and frame-stacking transforms applied before
//! decomposition and autoencoding.

use std::ops::Deref;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

/// One channel of audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Empty("audio clip has no samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub log_floor: f64,
    pub center_pad: bool,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 1024,
            hop: 512,
            n_mels: 64,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-10,
            center_pad: true,
        }
    }
}

impl MelConfig {
    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        if self.frame_len < 2 || self.hop == 0 || self.hop > self.frame_len {
            return bad(format!(
                "need 0 < hop <= frame_len, got hop {} frame_len {}",
                self.hop, self.frame_len
            ));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max() && self.f_max() <= nyquist) {
            return bad(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {} and {}",
                self.f_min,
                self.f_max()
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Frame count for a clip of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        let padded = if self.center_pad {
            len + 2 * (self.frame_len / 2)
        } else {
            len
        };
        if padded < self.frame_len {
            0
        } else {
            1 + (padded - self.frame_len) / self.hop
        }
    }

    /// Number of one-sided FFT bins.
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }
}

/// A single spectrogram frame, or several stacked ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameVector(pub Vec<f64>);

impl Deref for FrameVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// HTK Mel scale.
pub fn mel_scale(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Edge and center frequencies (Hz) of the `n_mels` triangles: `n_mels + 2`
/// points equally spaced on the Mel scale between `f_min` and `f_max`.
pub fn mel_band_edges(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (mel_scale(cfg.f_min), mel_scale(cfg.f_max()));
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Center frequency of Mel band `j`.
pub fn mel_center_hz(cfg: &MelConfig, j: usize) -> f64 {
    mel_band_edges(cfg)[j + 1]
}

/// Triangular, unit-peak filterbank as an `n_mels x n_bins` matrix.
pub fn mel_filterbank(cfg: &MelConfig) -> Matrix {
    let edges = mel_band_edges(cfg);
    let bin_hz = cfg.sample_rate as f64 / cfg.frame_len as f64;
    Matrix::from_fn(cfg.n_mels, cfg.n_bins(), |m, k| {
        let f = k as f64 * bin_hz;
        let (l, c, u) = (edges[m], edges[m + 1], edges[m + 2]);
        let rising = (f - l) / (c - l);
        let falling = (u - f) / (u - c);
        rising.min(falling).max(0.0)
    })
}

/// Periodic Hann window.
fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// `x[-i] = x[i]` and `x[len-1+i] = x[len-1-i]`.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let len = x.len() as isize;
    (-(pad as isize)..len + pad as isize)
        .map(|i| {
            let j = if i < 0 {
                -i
            } else if i >= len {
                2 * (len - 1) - i
            } else {
                i
            };
            x[j as usize]
        })
        .collect()
}

/// Reusable log-Mel transform (window, filterbank and FFT plan built once).
pub struct LogMel {
    cfg: MelConfig,
    window: Vec<f64>,
    power_norm: f64,
    filterbank: Matrix,
    fft: Arc<dyn Fft<f64>>,
}

impl LogMel {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hann(cfg.frame_len);
        let wsum: f64 = window.iter().sum();
        let fft = FftPlanner::new().plan_fft_forward(cfg.frame_len);
        Ok(Self {
            cfg: cfg.clone(),
            power_norm: 1.0 / (wsum * wsum),
            window,
            filterbank: mel_filterbank(cfg),
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// `F x T` log-Mel matrix in dB.
    ///
    /// The power spectrum is divided by the squared window sum, so a full-scale
    /// sinusoid peaks near -6 dB and realistic recordings stay non-positive.
    pub fn compute(&self, clip: &AudioClip) -> Result<Matrix> {
        let cfg = &self.cfg;
        if clip.sample_rate() != cfg.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "clip sampled at {} Hz, config expects {} Hz",
                clip.sample_rate(),
                cfg.sample_rate
            )));
        }
        let len = clip.samples().len();
        if len < cfg.frame_len {
            return Err(Error::ClipTooShort {
                len,
                frame_len: cfg.frame_len,
            });
        }
        let signal = if cfg.center_pad {
            reflect_pad(clip.samples(), cfg.frame_len / 2)
        } else {
            clip.samples().to_vec()
        };
        let n_frames = cfg.num_frames(len);
        let n_bins = cfg.n_bins();
        let mut out = Matrix::zeros(cfg.n_mels, n_frames);
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.frame_len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let floor_db = |v: f64| 10.0 * (v + cfg.log_floor).log10();

        for t in 0..n_frames {
            let frame = &signal[t * cfg.hop..t * cfg.hop + cfg.frame_len];
            for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr() * self.power_norm;
            }
            for (m, dst) in out.col_mut(t).iter_mut().enumerate() {
                let energy: f64 = (0..n_bins)
                    .map(|k| self.filterbank.get(m, k) * power[k])
                    .sum();
                *dst = floor_db(energy);
            }
        }
        Ok(out)
    }
}

/// `F x T` log-Mel spectrogram of one clip.
pub fn log_mel(clip: &AudioClip, cfg: &MelConfig) -> Result<Matrix> {
    LogMel::new(cfg)?.compute(clip)
}

/// Stacks per-clip log-Mel matrices along the recording mode.
pub fn build_tensor(clips: &[AudioClip], cfg: &MelConfig) -> Result<Tensor3> {
    if clips.is_empty() {
        return Err(Error::Empty("no clips to build a tensor from".into()));
    }
    let frames: Vec<usize> = clips.iter().map(|c| cfg.num_frames(c.samples().len())).collect();
    if frames.iter().any(|&t| t != frames[0]) {
        return Err(Error::HeterogeneousFrames(format!(
            "frame counts per clip: {frames:?}"
        )));
    }
    let extractor = LogMel::new(cfg)?;
    let slices = clips
        .iter()
        .map(|c| extractor.compute(c))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices)
}

/// Elementwise `|x|`.
pub fn abs_transform(x: &Tensor3) -> Tensor3 {
    x.map(f64::abs)
}

/// Sliding windows of `width` consecutive frames (stride 1) from one
/// recording; window `i` is columns `i..i+width` concatenated.
pub fn stack_frames(slice: &Matrix, width: usize) -> Result<Vec<FrameVector>> {
    let stacked = stacked_windows(slice.values(), slice.rows(), slice.cols(), width)?;
    Ok((0..stacked.cols())
        .map(|i| FrameVector(stacked.col(i).to_vec()))
        .collect())
}

/// Same windows as [`stack_frames`], as the columns of a `width*F x (T-width+1)`
/// matrix. In column-major storage window `i` is the contiguous run
/// `values[i*F .. (i+width)*F]`.
pub(crate) fn stacked_windows(values: &[f64], f: usize, t: usize, width: usize) -> Result<Matrix> {
    if width == 0 {
        return Err(Error::InvalidArgument("stack width must be at least 1".into()));
    }
    if t < width {
        return Err(Error::InvalidArgument(format!(
            "recording has {t} frames, fewer than the stack width {width}"
        )));
    }
    let count = t - width + 1;
    let dim = width * f;
    let mut data = Vec::with_capacity(dim * count);
    for i in 0..count {
        data.extend_from_slice(&values[i * f..i * f + dim]);
    }
    Matrix::new(dim, count, data)
}
