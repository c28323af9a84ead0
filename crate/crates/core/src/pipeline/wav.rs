//! RIFF/WAVE input and output. Only the first channel of multi-channel files
//! is kept.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::features::AudioClip;

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::WavDecode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes channel 0 as reals in `[-1, 1]` (16-bit PCM scaled by `1/32768`).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| decode_err(path, e))?;
    decode(reader, path)
}

fn decode(reader: WavReader<BufReader<File>>, path: &Path) -> Result<AudioClip> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(decode_err(path, "zero channels"));
    }
    let declared = reader.len() as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(decode_err(
                path,
                format!("unsupported encoding {format:?} with {bits} bits per sample"),
            ))
        }
    }
    .map_err(|e| decode_err(path, e))?;
    if declared % channels != 0 || samples.len() != declared.div_ceil(channels) {
        return Err(decode_err(path, "truncated sample data"));
    }
    AudioClip::new(samples, spec.sample_rate).map_err(|e| decode_err(path, e))
}

/// Writes a mono file.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    write_wav_channels(path, &[clip.samples()], clip.sample_rate(), encoding)
}

/// Writes equally long channels interleaved.
pub fn write_wav_channels(
    path: impl AsRef<Path>,
    channels: &[&[f64]],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let len = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument(
            "need at least one channel, all of equal length".into(),
        ));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let io = |e: hound::Error| decode_err(path, e);
    let mut writer = WavWriter::create(path, spec).map_err(io)?;
    for i in 0..len {
        for ch in channels {
            match encoding {
                WavEncoding::Pcm16 => {
                    let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(io)?;
                }
                WavEncoding::Float32 => writer.write_sample(ch[i] as f32).map_err(io)?,
            }
        }
    }
    writer.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_pcm16_scales_to_half() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        let clip = AudioClip::new(vec![0.5; 160_000], 16_000).unwrap();
        write_wav(&path, &clip, WavEncoding::Pcm16).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.samples().len(), 160_000);
        assert!(back.samples().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn multichannel_keeps_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eight.wav");
        let chans: Vec<Vec<f64>> = (0..8)
            .map(|c| (0..100).map(|i| (c as f64 * 0.1) - (i as f64) * 1e-3).collect())
            .collect();
        let refs: Vec<&[f64]> = chans.iter().map(Vec::as_slice).collect();
        write_wav_channels(&path, &refs, 16_000, WavEncoding::Float32).unwrap();
        let back = load_wav(&path).unwrap();
        let expected: Vec<f64> = chans[0].iter().map(|&v| f64::from(v as f32)).collect();
        assert_eq!(back.samples(), expected.as_slice());
    }

    #[test]
    fn non_wav_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notes.wav");
        std::fs::write(&path, b"this is not a riff file at all").unwrap();
        assert!(matches!(load_wav(&path), Err(Error::WavDecode { .. })));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.wav");
        let clip = AudioClip::new(vec![0.25; 1000], 8_000).unwrap();
        write_wav(&path, &clip, WavEncoding::Pcm16).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 301]).unwrap();
        assert!(matches!(load_wav(&path), Err(Error::WavDecode { .. })));
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eight_bit.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(3i8).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::WavDecode { .. })));
    }
}
