//! Audio domain types shared across the workspace.

use serde::{Deserialize, Serialize};

use crate::CANONICAL_RATE;

/// A mono waveform with sample rate and optional reference transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub id: String,
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    /// Sample rate in Hz; > 0.
    pub sample_rate: u32,
    /// Ground-truth transcript, when known.
    pub transcript: Option<String>,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip {
            id: id.into(),
            samples,
            sample_rate,
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, transcript: impl Into<String>) -> Self {
        self.transcript = Some(transcript.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }

    pub fn is_canonical_rate(&self) -> bool {
        self.sample_rate == CANONICAL_RATE
    }

    /// True when every sample is finite and within [-1, 1] (small headroom for
    /// float round-off).
    pub fn is_valid(&self) -> bool {
        self.sample_rate > 0 && self.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0 + 1e-9)
    }
}

/// One dataset row: where the audio lives, what it says, how long it is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub transcript: String,
    pub duration_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A dataset manifest; the on-disk format lives in the cli crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}
