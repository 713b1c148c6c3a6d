//! Surrogate ASR: log-mel front end plus a small convolutional CTC head.

use ndarray::Array2;

use crate::nn::{Activation, Conv1d, ConvLayer, ConvStack, StackGrads};
use crate::seed;

use super::ctc::{ctc_loss_grad, greedy_decode};
use super::frontend::MelFrontend;
use super::{text_to_ids, ModelError, Transcription, ALPHABET_SIZE};

#[derive(Clone, Debug)]
pub struct Asr {
    pub frontend: MelFrontend,
    pub head: ConvStack,
}

pub struct AsrCache {
    front: super::frontend::FrontendCache,
    head: crate::nn::StackCache,
    pub logits: Array2<f64>,
}

impl Asr {
    pub fn init(master_seed: u64) -> Self {
        let mut rng = seed::rng(master_seed, "asr-init");
        let frontend = MelFrontend::for_asr();
        let head = ConvStack::new(vec![
            ConvLayer::new(Conv1d::new(frontend.n_mels, 48, 5, 1, &mut rng), Activation::Elu),
            ConvLayer::new(Conv1d::new(48, 48, 5, 2, &mut rng), Activation::Elu),
            ConvLayer::new(Conv1d::new(48, 48, 3, 1, &mut rng), Activation::Elu),
            ConvLayer::new(Conv1d::new(48, ALPHABET_SIZE, 1, 1, &mut rng), Activation::Identity),
        ]);
        Asr { frontend, head }
    }

    /// (classes, frames) CTC logits; errors when the clip is shorter than one
    /// front-end frame.
    pub fn logits(&self, samples: &[f64]) -> Result<Array2<f64>, ModelError> {
        Ok(self.forward_cached(samples)?.logits)
    }

    pub fn forward_cached(&self, samples: &[f64]) -> Result<AsrCache, ModelError> {
        let (feat, front) = self.frontend.forward(samples)?;
        let (logits, head) = self.head.forward(&feat);
        Ok(AsrCache {
            front,
            head,
            logits,
        })
    }

    /// Greedy transcription. Degenerate audio (too short to frame) yields an
    /// empty failure transcription rather than an error.
    pub fn transcribe(&self, samples: &[f64]) -> Transcription {
        match self.logits(samples) {
            Ok(logits) => Transcription::new(greedy_decode(&logits)),
            Err(_) => Transcription::new(String::new()),
        }
    }

    /// CTC negative log-likelihood of `text` given the clip.
    pub fn loss(&self, samples: &[f64], text: &str) -> Result<f64, ModelError> {
        let ids = text_to_ids(text)?;
        let cache = self.forward_cached(samples)?;
        Ok(ctc_loss_grad(&cache.logits, &ids).0)
    }

    /// Loss plus its gradient with respect to the audio samples.
    pub fn loss_grad_audio(
        &self,
        samples: &[f64],
        ids: &[usize],
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let cache = self.forward_cached(samples)?;
        let (loss, glogits) = ctc_loss_grad(&cache.logits, ids);
        if !loss.is_finite() {
            return Ok((loss, vec![0.0; samples.len()]));
        }
        let gfeat = self.head.backward(&cache.head, &glogits, None);
        Ok((loss, self.frontend.backward(&cache.front, &gfeat)))
    }

    /// Loss plus head parameter gradients (for training); pass label ids
    /// directly — an empty slice trains the all-blank path.
    pub fn loss_grad_params(
        &self,
        samples: &[f64],
        ids: &[usize],
        grads: &mut StackGrads,
    ) -> Result<f64, ModelError> {
        let cache = self.forward_cached(samples)?;
        let (loss, glogits) = ctc_loss_grad(&cache.logits, ids);
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.head.backward(&cache.head, &glogits, Some(grads));
        Ok(loss)
    }
}
