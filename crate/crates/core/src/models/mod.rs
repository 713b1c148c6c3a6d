//! The four learned components: encoder E, decoder D, surrogate ASR f, and
//! TTS g, plus the toy corpus and training entry point.

mod ae;
mod asr;
mod corpus;
mod ctc;
mod frontend;
mod io;
mod train;
mod tts;

pub use ae::{Decoder, DecoderCache, Encoder};
pub use asr::{Asr, AsrCache};
pub use corpus::{generate_corpus, CorpusSplits};
pub use ctc::{ctc_loss_grad, greedy_decode};
pub use frontend::{FrontendCache, MelFrontend};
pub use io::{load_bundle, save_bundle};
pub use train::{train_toy_models, train_toy_models_with, ToyTrainBudget, TrainGates};
pub use tts::ToyTts;

use ndarray::Array2;
use thiserror::Error;

use crate::metrics;

/// Audio samples per latent frame.
pub const FRAME_HOP: usize = 256;
/// Latent channels produced by the encoder.
pub const LATENT_CHANNELS: usize = 32;
/// Lowercase letters, space, and the CTC blank.
pub const ALPHABET_SIZE: usize = 28;
/// Index of the CTC blank symbol.
pub const BLANK: usize = 27;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("symbol {symbol:?} at position {position} is outside the alphabet")]
    AlphabetError { symbol: char, position: usize },
    #[error("empty text where at least one symbol is required")]
    EmptyText,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("{component} failed to converge: {metric} = {value:.4}, needed {wanted}")]
    ConvergenceFailure {
        component: String,
        metric: String,
        value: f64,
        wanted: String,
    },
    #[error("model file rejected: {0}")]
    SchemaMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Map a character to its class index: 'a'..='z' -> 0..=25, ' ' -> 26.
pub fn char_to_id(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        ' ' => Some(26),
        _ => None,
    }
}

pub fn id_to_char(id: usize) -> char {
    match id {
        0..=25 => (b'a' + id as u8) as char,
        26 => ' ',
        _ => '\u{fffd}',
    }
}

/// Convert text to class indices, rejecting out-of-alphabet symbols.
pub fn text_to_ids(text: &str) -> Result<Vec<usize>, ModelError> {
    if text.is_empty() {
        return Err(ModelError::EmptyText);
    }
    text.chars()
        .enumerate()
        .map(|(position, symbol)| {
            char_to_id(symbol).ok_or(ModelError::AlphabetError { symbol, position })
        })
        .collect()
}

/// A latent-space representation: (channels, frames) with `frame_hop` audio
/// samples per frame.
#[derive(Clone, Debug)]
pub struct LatentCode {
    pub values: Array2<f64>,
    pub frame_hop: usize,
}

impl LatentCode {
    pub fn new(values: Array2<f64>) -> Self {
        LatentCode {
            values,
            frame_hop: FRAME_HOP,
        }
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// An ASR output with the degenerate-output flag applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcription {
    pub text: String,
    pub is_failure: bool,
}

impl Transcription {
    pub fn new(text: String) -> Self {
        let is_failure = metrics::is_failure(&text);
        Transcription { text, is_failure }
    }
}

/// Anything that maps latent codes to waveforms; the toy decoder and the
/// analytic stubs used by the robustness bound all satisfy this.
pub trait LatentDecoder {
    fn decode_latent(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError>;
}

/// Encode/decode pair contract used by autoencoder screening.
pub trait AudioCodec {
    fn encode_audio(&self, samples: &[f64]) -> Result<LatentCode, ModelError>;
    fn decode_audio(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError>;

    fn codec_id(&self) -> String {
        "codec".into()
    }

    fn codec_param_count(&self) -> usize {
        0
    }

    /// Whether the codec reconstructs speakers it was never trained on.
    fn codec_zero_shot(&self) -> bool {
        true
    }
}

/// Metadata persisted alongside the model weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleMeta {
    pub encoder_id: String,
    pub decoder_id: String,
    pub asr_id: String,
    pub tts_id: String,
    pub latent_channels: usize,
    pub frame_hop: usize,
    pub seed: u64,
    /// Validation metrics frozen at train time.
    pub ae_val_rel_l2: f64,
    pub asr_train_exact: f64,
    pub tts_round_trip: f64,
}

/// The trained toy stack.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub asr: Asr,
    pub tts: ToyTts,
}

impl ModelBundle {
    pub fn encode(&self, samples: &[f64]) -> Result<LatentCode, ModelError> {
        self.encoder.encode(samples)
    }

    pub fn decode(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        self.decoder.decode(z)
    }

    pub fn transcribe(&self, samples: &[f64]) -> Transcription {
        self.asr.transcribe(samples)
    }

    pub fn asr_loss(&self, samples: &[f64], text: &str) -> Result<f64, ModelError> {
        self.asr.loss(samples, text)
    }
}

impl AudioCodec for ModelBundle {
    fn encode_audio(&self, samples: &[f64]) -> Result<LatentCode, ModelError> {
        self.encode(samples)
    }

    fn decode_audio(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        self.decode(z)
    }

    fn codec_id(&self) -> String {
        format!("{}+{}", self.meta.encoder_id, self.meta.decoder_id)
    }

    fn codec_param_count(&self) -> usize {
        self.encoder.conv.param_count() + self.decoder.conv.param_count()
    }
}

impl LatentDecoder for ModelBundle {
    fn decode_latent(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        self.decode(z)
    }
}
