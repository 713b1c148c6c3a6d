//! Waveform file ingestion and emission. Canonical on-disk format is 16 kHz
//! mono 16-bit PCM; loads resample to the expected rate when needed.

use std::path::Path;

use thiserror::Error;

use sotto_core::audio::AudioClip;
use sotto_core::dsp;

#[derive(Debug, Error)]
pub enum AudioIoError {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("{path}: {channels} channels, only mono is supported")]
    MultiChannelUnsupported { path: String, channels: u16 },
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error("write {path}: {reason}")]
    WriteFailed { path: String, reason: String },
}

fn unreadable(path: &Path, reason: impl ToString) -> AudioIoError {
    AudioIoError::UnreadableFile {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Load a mono PCM wav file, normalize samples to [-1, 1], and resample to
/// `expect_rate` when the file rate differs. The clip id is the file stem.
pub fn load_clip(path: &Path, expect_rate: u32) -> Result<AudioClip, AudioIoError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| unreadable(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioIoError::MultiChannelUnsupported {
            path: path.display().to_string(),
            channels: spec.channels,
        });
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            let read: Result<Vec<i32>, _> = reader.samples::<i32>().collect();
            read.map_err(|e| unreadable(path, e))?
                .into_iter()
                .map(|v| (v as f64 * scale).clamp(-1.0, 1.0))
                .collect()
        }
        hound::SampleFormat::Float => {
            let read: Result<Vec<f32>, _> = reader.samples::<f32>().collect();
            read.map_err(|e| unreadable(path, e))?
                .into_iter()
                .map(|v| (v as f64).clamp(-1.0, 1.0))
                .collect()
        }
    };
    if samples.is_empty() {
        return Err(unreadable(path, "no samples"));
    }
    let samples = if spec.sample_rate == expect_rate {
        samples
    } else {
        dsp::resample(&samples, spec.sample_rate, expect_rate)?
            .into_iter()
            .map(|v| v.clamp(-1.0, 1.0))
            .collect()
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    Ok(AudioClip::new(id, samples, expect_rate))
}

/// Write a clip as 16-bit PCM. Quantization is round-to-nearest on a 32768
/// grid, so loading the written file reproduces the quantized samples
/// exactly.
pub fn save_clip(clip: &AudioClip, path: &Path) -> Result<(), AudioIoError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let fail = |reason: String| AudioIoError::WriteFailed {
        path: path.display().to_string(),
        reason,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| fail(e.to_string()))?;
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| fail(e.to_string()))?;
    }
    writer.finalize().map_err(|e| fail(e.to_string()))?;
    Ok(())
}
