//! Training for the toy stack, with hard quality gates: autoencoder
//! reconstruction, ASR exact-match, and TTS round-trip accuracy.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{Adam, Conv1d};
use crate::seed;

use super::corpus::CorpusSplits;
use super::{
    text_to_ids, Asr, BundleMeta, Decoder, Encoder, LatentCode, ModelBundle, ModelError, ToyTts,
    FRAME_HOP, LATENT_CHANNELS,
};

#[derive(Clone, Copy, Debug)]
pub struct TrainGates {
    pub ae_rel_l2: f64,
    pub asr_exact: f64,
    pub tts_round_trip: f64,
}

impl Default for TrainGates {
    fn default() -> Self {
        TrainGates {
            ae_rel_l2: 0.3,
            asr_exact: 0.95,
            tts_round_trip: 0.90,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ToyTrainBudget {
    pub ae_epochs: usize,
    pub asr_max_epochs: usize,
    pub denoise_epochs: usize,
    pub denoise_std: f64,
    pub enforce_gates: bool,
}

impl Default for ToyTrainBudget {
    fn default() -> Self {
        ToyTrainBudget {
            ae_epochs: 8,
            asr_max_epochs: 30,
            denoise_epochs: 6,
            denoise_std: 1.0,
            enforce_gates: true,
        }
    }
}

/// Adam state for a single convolution, used where the parameters do not
/// live in a `ConvStack`.
struct AdamConv {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

impl AdamConv {
    fn new(conv: &Conv1d) -> Self {
        AdamConv {
            m_w: Array2::zeros(conv.w.dim()),
            v_w: Array2::zeros(conv.w.dim()),
            m_b: Array1::zeros(conv.b.len()),
            v_b: Array1::zeros(conv.b.len()),
        }
    }

    fn step(&mut self, conv: &mut Conv1d, gw: &Array2<f64>, gb: &Array1<f64>, lr: f64, t: u64) {
        let b1 = 0.9f64;
        let b2 = 0.999f64;
        let eps = 1e-8;
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        self.m_w.zip_mut_with(gw, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        self.v_w.zip_mut_with(gw, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        self.m_b.zip_mut_with(gb, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        self.v_b.zip_mut_with(gb, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        ndarray::Zip::from(&mut conv.w)
            .and(&self.m_w)
            .and(&self.v_w)
            .for_each(|w, &m, &v| *w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps));
        ndarray::Zip::from(&mut conv.b)
            .and(&self.m_b)
            .and(&self.v_b)
            .for_each(|b, &m, &v| *b -= lr * (m / bc1) / ((v / bc2).sqrt() + eps));
    }
}

/// The filterbank initialization already sits close to an optimum, so the
/// autoencoder only needs gentle polish; large steps wreck it.
const AE_LR: f64 = 1e-4;

/// The decoder-only denoising pass can afford bigger steps: the encoder is
/// frozen, so there is no co-adaptation to destabilize.
const DENOISE_LR: f64 = 3e-4;

fn pad_to_frames(samples: &[f64]) -> Vec<f64> {
    let frames = samples.len().div_ceil(FRAME_HOP).max(1);
    let mut out = samples.to_vec();
    out.resize(frames * FRAME_HOP, 0.0);
    out
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(1e-300)).sqrt()
}

struct AeTrainer {
    encoder: Encoder,
    decoder: Decoder,
}

impl AeTrainer {
    fn loss_and_grads(
        &self,
        target: &[f64],
        gw_e: &mut Array2<f64>,
        gb_e: &mut Array1<f64>,
        gw_d: &mut Array2<f64>,
        gb_d: &mut Array1<f64>,
    ) -> f64 {
        let n = target.len();
        let x = Array2::from_shape_vec((1, n), target.to_vec()).expect("row");
        let z = self.encoder.conv.forward(&x);
        let code = LatentCode::new(z);
        let (audio, dcache) = self.decoder.decode_cached(&code).expect("geometry");

        let mut gaudio = vec![0.0; n];
        let mut loss = 0.0;
        for i in 0..n {
            let d = audio[i] - target[i];
            loss += d * d;
            gaudio[i] = 2.0 * d / n as f64;
        }
        loss /= n as f64;

        let gz = self.decoder.backward(&dcache, &gaudio, Some((gw_d, gb_d)));
        self.encoder.conv.backward(&x, &gz, Some((gw_e, gb_e)));
        loss
    }
}

fn train_autoencoder(
    train: &[Vec<f64>],
    master_seed: u64,
    epochs: usize,
    lr: f64,
) -> (Encoder, Decoder) {
    let mut trainer = AeTrainer {
        encoder: Encoder::init(master_seed),
        decoder: Decoder::init(master_seed),
    };
    let mut opt_e = AdamConv::new(&trainer.encoder.conv);
    let mut opt_d = AdamConv::new(&trainer.decoder.conv);
    let batch = 10usize;
    let mut t = 0u64;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng_indexed(master_seed, "ae-shuffle", epoch as u64));
        for chunk in order.chunks(batch) {
            let mut gw_e = Array2::zeros(trainer.encoder.conv.w.dim());
            let mut gb_e = Array1::zeros(trainer.encoder.conv.b.len());
            let mut gw_d = Array2::zeros(trainer.decoder.conv.w.dim());
            let mut gb_d = Array1::zeros(trainer.decoder.conv.b.len());
            for &i in chunk {
                trainer.loss_and_grads(&train[i], &mut gw_e, &mut gb_e, &mut gw_d, &mut gb_d);
            }
            let scale = 1.0 / chunk.len() as f64;
            gw_e *= scale;
            gb_e *= scale;
            gw_d *= scale;
            gb_d *= scale;
            t += 1;
            opt_e.step(&mut trainer.encoder.conv, &gw_e, &gb_e, lr, t);
            opt_d.step(&mut trainer.decoder.conv, &gw_d, &gb_d, lr, t);
        }
    }
    (trainer.encoder, trainer.decoder)
}

/// Rescale latent channels to zero mean / unit variance over the corpus by
/// folding the affine map into the encoder and its inverse into the decoder.
fn fold_latent_calibration(
    encoder: &mut Encoder,
    decoder: &mut Decoder,
    train: &[Vec<f64>],
) {
    let mut count = 0usize;
    let mut sum = Array1::<f64>::zeros(LATENT_CHANNELS);
    let mut sumsq = Array1::<f64>::zeros(LATENT_CHANNELS);
    for clip in train {
        let z = encoder.encode(clip).expect("non-empty clip");
        count += z.frames();
        for c in 0..LATENT_CHANNELS {
            for t in 0..z.frames() {
                let v = z.values[[c, t]];
                sum[c] += v;
                sumsq[c] += v * v;
            }
        }
    }
    let mean = sum / count as f64;
    let mut std = Array1::zeros(LATENT_CHANNELS);
    for c in 0..LATENT_CHANNELS {
        std[c] = (sumsq[c] / count as f64 - mean[c] * mean[c]).max(0.0).sqrt();
    }
    let floor = 1e-2 * std.iter().cloned().fold(0.0f64, f64::max).max(1e-6);
    std.mapv_inplace(|s| s.max(floor));

    for c in 0..LATENT_CHANNELS {
        let inv = 1.0 / std[c];
        encoder.conv.w.row_mut(c).mapv_inplace(|w| w * inv);
        encoder.conv.b[c] = (encoder.conv.b[c] - mean[c]) * inv;
    }
    let taps = decoder.conv.k;
    for o in 0..decoder.conv.out_ch {
        let mut bias_shift = 0.0;
        for c in 0..LATENT_CHANNELS {
            for j in 0..taps {
                bias_shift += decoder.conv.w[[o, c * taps + j]] * mean[c];
            }
        }
        decoder.conv.b[o] += bias_shift;
        for c in 0..LATENT_CHANNELS {
            for j in 0..taps {
                decoder.conv.w[[o, c * taps + j]] *= std[c];
            }
        }
    }
}

/// Downstream use adds Gaussian noise to latent codes, so the decoder must
/// stay stable under it. With the encoder frozen, fine-tune the decoder to
/// reconstruct the clean clip from a noised code; each clip draws its noise
/// scale from [0, noise_std] so clean reconstruction stays anchored.
fn denoise_decoder(
    encoder: &Encoder,
    decoder: &mut Decoder,
    train: &[Vec<f64>],
    master_seed: u64,
    epochs: usize,
    noise_std: f64,
) {
    if epochs == 0 || noise_std <= 0.0 {
        return;
    }
    let unit = Normal::new(0.0, 1.0).expect("valid std");
    let mut opt_d = AdamConv::new(&decoder.conv);
    let batch = 10usize;
    let mut t = 0u64;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng_indexed(master_seed, "ae-denoise-shuffle", epoch as u64));
        let mut rng = seed::rng_indexed(master_seed, "ae-denoise-noise", epoch as u64);
        for chunk in order.chunks(batch) {
            let mut gw_d = Array2::zeros(decoder.conv.w.dim());
            let mut gb_d = Array1::zeros(decoder.conv.b.len());
            for &i in chunk {
                let target = &train[i];
                let n = target.len();
                let x = Array2::from_shape_vec((1, n), target.clone()).expect("row");
                let mut z = encoder.conv.forward(&x);
                let scale_i = noise_std * rng.gen::<f64>();
                z.mapv_inplace(|v| v + scale_i * unit.sample(&mut rng));
                let code = LatentCode::new(z);
                let (audio, dcache) = decoder.decode_cached(&code).expect("geometry");
                let mut gaudio = vec![0.0; n];
                for j in 0..n {
                    gaudio[j] = 2.0 * (audio[j] - target[j]) / n as f64;
                }
                decoder.backward(&dcache, &gaudio, Some((&mut gw_d, &mut gb_d)));
            }
            let scale = 1.0 / chunk.len() as f64;
            gw_d *= scale;
            gb_d *= scale;
            t += 1;
            opt_d.step(&mut decoder.conv, &gw_d, &gb_d, DENOISE_LR, t);
        }
    }
}

fn ae_validation(encoder: &Encoder, decoder: &Decoder, test: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for clip in test {
        let z = encoder.encode(clip).expect("non-empty clip");
        let audio = decoder.decode(&z).expect("geometry");
        total += rel_l2(&audio, &pad_to_frames(clip));
    }
    total / test.len() as f64
}

struct AsrItem {
    samples: Vec<f64>,
    ids: Vec<usize>,
}

fn train_asr(
    items: &[AsrItem],
    eval_clips: &[(Vec<f64>, String)],
    master_seed: u64,
    max_epochs: usize,
) -> (Asr, f64) {
    let mut asr = Asr::init(master_seed);
    let mut opt = Adam::new(&asr.head, 2e-3);
    let batch = 8usize;
    let mut exact = 0.0;
    for epoch in 0..max_epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut seed::rng_indexed(master_seed, "asr-shuffle", epoch as u64));
        for chunk in order.chunks(batch) {
            let mut grads = asr.head.zero_grads();
            let mut used = 0usize;
            for &i in chunk {
                let loss = asr
                    .loss_grad_params(&items[i].samples, &items[i].ids, &mut grads)
                    .expect("framable clip");
                if loss.is_finite() {
                    used += 1;
                }
            }
            if used == 0 {
                continue;
            }
            let scale = 1.0 / used as f64;
            for (gw, gb) in grads.iter_mut() {
                *gw *= scale;
                *gb *= scale;
            }
            opt.step(&mut asr.head, &grads);
        }
        exact = exact_match(&asr, eval_clips);
        if exact >= 0.97 && epoch >= 2 {
            break;
        }
    }
    (asr, exact)
}

fn exact_match(asr: &Asr, clips: &[(Vec<f64>, String)]) -> f64 {
    let hits = clips
        .iter()
        .filter(|(samples, text)| asr.transcribe(samples).text == *text)
        .count();
    hits as f64 / clips.len() as f64
}

fn tts_round_trip(asr: &Asr, phrases: &[String], master_seed: u64, trials: usize) -> f64 {
    let tts = ToyTts::new();
    let mut hits = 0usize;
    for i in 0..trials {
        let text = &phrases[i % phrases.len()];
        let style = seed::derive(master_seed, &format!("tts-rt:{i}"));
        let clip = tts.sample(text, style).expect("in-alphabet phrase");
        if asr.transcribe(&clip.samples).text == *text {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

pub fn train_toy_models(corpus: &CorpusSplits, master_seed: u64) -> Result<ModelBundle, ModelError> {
    train_toy_models_with(corpus, master_seed, &ToyTrainBudget::default())
}

pub fn train_toy_models_with(
    corpus: &CorpusSplits,
    master_seed: u64,
    budget: &ToyTrainBudget,
) -> Result<ModelBundle, ModelError> {
    let transcripts: Vec<&str> = corpus
        .train
        .iter()
        .filter_map(|c| c.transcript.as_deref())
        .collect();
    if transcripts.len() != corpus.train.len() || !super::tts::covers_alphabet(&transcripts) {
        return Err(ModelError::InvalidCorpus(
            "train split must carry transcripts covering the alphabet".into(),
        ));
    }
    let gates = TrainGates::default();

    let train_padded: Vec<Vec<f64>> = corpus.train.iter().map(|c| pad_to_frames(&c.samples)).collect();
    let test_padded: Vec<Vec<f64>> = corpus.test.iter().map(|c| pad_to_frames(&c.samples)).collect();

    let (mut encoder, mut decoder) =
        train_autoencoder(&train_padded, master_seed, budget.ae_epochs, AE_LR);
    fold_latent_calibration(&mut encoder, &mut decoder, &train_padded);
    denoise_decoder(
        &encoder,
        &mut decoder,
        &train_padded,
        master_seed,
        budget.denoise_epochs,
        budget.denoise_std,
    );
    let ae_val = ae_validation(&encoder, &decoder, &test_padded);
    if budget.enforce_gates && ae_val > gates.ae_rel_l2 {
        return Err(ModelError::ConvergenceFailure {
            component: "autoencoder".into(),
            metric: "validation relative L2".into(),
            value: ae_val,
            wanted: format!("<= {}", gates.ae_rel_l2),
        });
    }

    // ASR sees clean clips, their autoencoder reconstructions (so decoded
    // audio transcribes the same), and a little silence mapped to the empty
    // string.
    let mut items: Vec<AsrItem> = Vec::new();
    let mut eval_clips: Vec<(Vec<f64>, String)> = Vec::new();
    for clip in &corpus.train {
        let text = clip.transcript.clone().expect("checked above");
        let ids = text_to_ids(&text)?;
        items.push(AsrItem {
            samples: clip.samples.clone(),
            ids: ids.clone(),
        });
        let z = encoder.encode(&clip.samples)?;
        items.push(AsrItem {
            samples: decoder.decode(&z)?,
            ids,
        });
        eval_clips.push((clip.samples.clone(), text));
    }
    let mut silence_rng = seed::rng(master_seed, "asr-silence");
    for i in 0..10 {
        let len = 8000 + 1600 * i;
        let samples: Vec<f64> = (0..len)
            .map(|_| 0.004 * (silence_rng.gen::<f64>() - 0.5))
            .collect();
        items.push(AsrItem {
            samples,
            ids: Vec::new(),
        });
    }

    let (asr, asr_exact) = train_asr(&items, &eval_clips, master_seed, budget.asr_max_epochs);
    if budget.enforce_gates && asr_exact < gates.asr_exact {
        return Err(ModelError::ConvergenceFailure {
            component: "asr".into(),
            metric: "train exact-match".into(),
            value: asr_exact,
            wanted: format!(">= {}", gates.asr_exact),
        });
    }

    let phrases: Vec<String> = corpus
        .train
        .iter()
        .take(50)
        .filter_map(|c| c.transcript.clone())
        .collect();
    let tts_rt = tts_round_trip(&asr, &phrases, master_seed, 50);
    if budget.enforce_gates && tts_rt < gates.tts_round_trip {
        return Err(ModelError::ConvergenceFailure {
            component: "tts".into(),
            metric: "round-trip accuracy".into(),
            value: tts_rt,
            wanted: format!(">= {}", gates.tts_round_trip),
        });
    }

    Ok(ModelBundle {
        meta: BundleMeta {
            encoder_id: format!("toy-fb-encoder-v1-s{master_seed}"),
            decoder_id: format!("toy-fb-decoder-v1-s{master_seed}"),
            asr_id: format!("toy-ctc-asr-v1-s{master_seed}"),
            tts_id: "toy-formant-tts-v1".into(),
            latent_channels: LATENT_CHANNELS,
            frame_hop: FRAME_HOP,
            seed: master_seed,
            ae_val_rel_l2: ae_val,
            asr_train_exact: asr_exact,
            tts_round_trip: tts_rt,
        },
        encoder,
        decoder,
        asr,
        tts: ToyTts::new(),
    })
}
