//! In-memory sample buffers and WAV I/O.

use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// On-disk sample encoding. Rendering writes back the format it read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Int16,
    Int24,
    Float32,
}

impl SampleFormat {
    fn bits(self) -> u16 {
        match self {
            SampleFormat::Int16 => 16,
            SampleFormat::Int24 => 24,
            SampleFormat::Float32 => 32,
        }
    }

    fn int_scale(self) -> f32 {
        match self {
            SampleFormat::Int16 => 32_768.0,
            SampleFormat::Int24 => 8_388_608.0,
            SampleFormat::Float32 => 1.0,
        }
    }
}

/// Interleaved audio normalised to [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub channels: u16,
    pub sample_rate: u32,
    pub format: SampleFormat,
}

impl AudioBuffer {
    pub fn new(
        samples: Vec<f32>,
        channels: u16,
        sample_rate: u32,
        format: SampleFormat,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidAudio("zero channels".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("zero sample rate".into()));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(Error::InvalidAudio(format!(
                "{} samples do not divide into {} channels",
                samples.len(),
                channels
            )));
        }
        Ok(Self {
            samples,
            channels,
            sample_rate,
            format,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(samples, 1, sample_rate, SampleFormat::Float32)
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    /// Channel-averaged signal.
    pub fn to_mono(&self) -> Vec<f32> {
        let ch = self.channels as usize;
        if ch == 1 {
            return self.samples.clone();
        }
        self.samples
            .chunks_exact(ch)
            .map(|frame| frame.iter().sum::<f32>() / ch as f32)
            .collect()
    }

    pub fn read_wav(path: &Path) -> Result<Self> {
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut reader = WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        let format = match (spec.sample_format, spec.bits_per_sample) {
            (HoundFormat::Int, 16) => SampleFormat::Int16,
            (HoundFormat::Int, 24) => SampleFormat::Int24,
            (HoundFormat::Float, 32) => SampleFormat::Float32,
            (fmt, bits) => {
                return Err(Error::InvalidAudio(format!(
                    "unsupported wav encoding {fmt:?} {bits}-bit in {}",
                    path.display()
                )))
            }
        };
        let samples = match format {
            SampleFormat::Float32 => reader
                .samples::<f32>()
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(wav_err)?,
            _ => {
                let scale = format.int_scale();
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 / scale))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(wav_err)?
            }
        };
        Self::new(samples, spec.channels, spec.sample_rate, format)
    }

    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let spec = WavSpec {
            channels: self.channels,
            sample_rate: self.sample_rate,
            bits_per_sample: self.format.bits(),
            sample_format: match self.format {
                SampleFormat::Float32 => HoundFormat::Float,
                _ => HoundFormat::Int,
            },
        };
        let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
        match self.format {
            SampleFormat::Float32 => {
                for &s in &self.samples {
                    writer.write_sample(s).map_err(wav_err)?;
                }
            }
            SampleFormat::Int16 => {
                for &s in &self.samples {
                    writer
                        .write_sample(quantize(s, self.format) as i16)
                        .map_err(wav_err)?;
                }
            }
            SampleFormat::Int24 => {
                for &s in &self.samples {
                    writer
                        .write_sample(quantize(s, self.format))
                        .map_err(wav_err)?;
                }
            }
        }
        writer.finalize().map_err(wav_err)
    }
}

fn quantize(sample: f32, format: SampleFormat) -> i32 {
    let scale = format.int_scale();
    (sample * scale).round().clamp(-scale, scale - 1.0) as i32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_formats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for format in [
            SampleFormat::Int16,
            SampleFormat::Int24,
            SampleFormat::Float32,
        ] {
            let scale = format.int_scale();
            let samples: Vec<f32> = (0..200)
                .map(|i| ((i * 7919) % 401) as f32 / 400.0 - 0.5)
                .map(|s| {
                    if format == SampleFormat::Float32 {
                        s
                    } else {
                        (s * scale).round() / scale
                    }
                })
                .collect();
            let buf = AudioBuffer::new(samples, 2, 8000, format).unwrap();
            let path = dir.path().join(format!("{format:?}.wav"));
            buf.write_wav(&path).unwrap();
            let back = AudioBuffer::read_wav(&path).unwrap();
            assert_eq!(back, buf);
        }
    }

    #[test]
    fn stereo_downmix_averages_channels() {
        let buf =
            AudioBuffer::new(vec![1.0, 0.0, 0.5, 0.5], 2, 8000, SampleFormat::Float32).unwrap();
        assert_eq!(buf.to_mono(), vec![0.5, 0.5]);
        assert_eq!(buf.frames(), 2);
    }

    #[test]
    fn missing_wav_is_reported() {
        let err = AudioBuffer::read_wav(Path::new("/nonexistent/a.wav")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn full_scale_clamps() {
        assert_eq!(quantize(1.0, SampleFormat::Int16), 32_767);
        assert_eq!(quantize(-1.0, SampleFormat::Int16), -32_768);
    }
}
