//! WAV decoding and the canonical in-memory sample representation.
//!
//! Everything downstream works on mono `f64` samples in `[-1, 1]` at
//! [`CANONICAL_RATE`]. PCM16 samples are scaled by `1/32768`; float32 samples
//! are taken as-is and clamped.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate all prosodic analysis constants are stated at.
pub const CANONICAL_RATE: u32 = 16_000;

const PCM16_SCALE: f64 = 1.0 / 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl AudioBuffer {
    /// Builds a buffer from raw samples, clamping to `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_path: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio buffer must not be empty".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(AudioBuffer {
            samples,
            sample_rate,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// How multi-channel files are reduced to mono.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPolicy {
    #[default]
    Average,
    /// Zero-based channel index.
    Select(u16),
}

/// Decodes a PCM16 or float32 WAV file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    load_wav_with(path, ChannelPolicy::Average)
}

pub fn load_wav_with(path: impl AsRef<Path>, policy: ChannelPolicy) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(err) => Error::AudioRead {
            path: path.to_path_buf(),
            cause: err.to_string(),
        },
        other => Error::UnsupportedAudio {
            path: path.to_path_buf(),
            cause: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedAudio {
            path: path.to_path_buf(),
            cause: format!("{channels} channels (only mono and stereo are supported)"),
        });
    }
    if let ChannelPolicy::Select(c) = policy {
        if c as usize >= channels {
            return Err(Error::UnsupportedAudio {
                path: path.to_path_buf(),
                cause: format!("channel {c} requested but file has {channels}"),
            });
        }
    }
    if spec.sample_rate == 0 {
        return Err(Error::UnsupportedAudio {
            path: path.to_path_buf(),
            cause: "sample rate is zero".into(),
        });
    }

    let read_err = |e: hound::Error| Error::AudioRead {
        path: path.to_path_buf(),
        cause: e.to_string(),
    };
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 * PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio {
                path: path.to_path_buf(),
                cause: format!("{fmt:?} {bits}-bit (expected PCM16 or float32)"),
            })
        }
    };
    if interleaved.len() < channels {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(Error::UnsupportedAudio {
            path: path.to_path_buf(),
            cause: "non-finite float samples".into(),
        });
    }

    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| match policy {
            ChannelPolicy::Average => frame.iter().sum::<f64>() / channels as f64,
            ChannelPolicy::Select(c) => frame[c as usize],
        })
        .collect();
    AudioBuffer::new(samples, spec.sample_rate, path.to_string_lossy())
}

/// Loads a file and resamples it to [`CANONICAL_RATE`].
pub fn load_canonical(path: impl AsRef<Path>, policy: ChannelPolicy) -> Result<AudioBuffer> {
    let buf = load_wav_with(path, policy)?;
    resample(&buf, CANONICAL_RATE)
}

/// Linear-interpolation resampling to `target_rate`.
///
/// Output length is `round(n * target / source)`; output sample `j` is read
/// at source position `j * source / target`, holding the last sample past
/// the end.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == buf.sample_rate {
        return Ok(buf.clone());
    }
    let n = buf.samples.len();
    let ratio = buf.sample_rate as f64 / target_rate as f64;
    let out_len = ((n as f64 * target_rate as f64 / buf.sample_rate as f64).round() as usize).max(1);
    let last = n - 1;
    let samples = (0..out_len)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return buf.samples[last];
            }
            let frac = pos - i as f64;
            let (a, b) = (buf.samples[i], buf.samples[i + 1]);
            if frac == 0.0 {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: target_rate,
        source_path: buf.source_path.clone(),
    })
}

/// Sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Writes mono samples. PCM16 quantizes with `round(x * 32768)` clipped to
/// the i16 range.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32, encoding: WavEncoding) -> Result<()> {
    write_wav_channels(path, &[samples], sample_rate, encoding)
}

/// Writes one or more equal-length channels, interleaved.
pub fn write_wav_channels(
    path: impl AsRef<Path>,
    channels: &[&[f64]],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    if channels.is_empty() || channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::InvalidArgument("channels must be non-empty and equal length".into()));
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
    let write_err = |e: hound::Error| Error::AudioRead {
        path: path.to_path_buf(),
        cause: e.to_string(),
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_err)?;
    for i in 0..channels[0].len() {
        for ch in channels {
            let x = ch[i];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                    writer.write_sample(q).map_err(write_err)?;
                }
                WavEncoding::Float32 => writer.write_sample(x as f32).map_err(write_err)?,
            }
        }
    }
    writer.finalize().map_err(write_err)
}
