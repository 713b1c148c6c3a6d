//! Deterministic parametric synthesizer. Each letter is a pair of tones drawn
//! from fixed formant grids plus a low pitch hum; the style seed jitters
//! pitch, phases, per-character duration, and level, giving the one-to-many
//! behavior target search needs while keeping synthesis reproducible.

use rand::Rng;

use crate::audio::AudioClip;
use crate::seed;
use crate::CANONICAL_RATE;

use super::{char_to_id, text_to_ids, ModelError};

// All formants sit on multiples of 62.5 Hz (the latent frame rate), so a
// steady tone demodulates to a constant per-frame phasor.
const F1_GRID: [f64; 5] = [437.5, 562.5, 687.5, 812.5, 937.5];
const F2_GRID: [f64; 6] = [1312.5, 1625.0, 1937.5, 2250.0, 2562.5, 2875.0];
const F0_BASE: f64 = 110.0;
const CHAR_SECS: f64 = 0.115;
const GAP_SECS: f64 = 0.024;
const SPACE_SECS: f64 = 0.130;
const EDGE_SECS: f64 = 0.040;
const RAMP_SECS: f64 = 0.020;

/// Formant pair for a letter index (0..=25).
pub fn formants(letter: usize) -> (f64, f64) {
    (F1_GRID[letter % 5], F2_GRID[letter / 5])
}

#[derive(Clone, Debug, Default)]
pub struct ToyTts;

impl ToyTts {
    pub fn new() -> Self {
        ToyTts
    }

    /// Expected duration in seconds for `text`, before per-seed jitter.
    pub fn nominal_secs(text: &str) -> f64 {
        let mut secs = 2.0 * EDGE_SECS;
        for (i, c) in text.chars().enumerate() {
            secs += if c == ' ' { SPACE_SECS } else { CHAR_SECS };
            if i + 1 < text.chars().count() {
                secs += GAP_SECS + 0.004;
            }
        }
        secs
    }

    pub fn sample(&self, text: &str, style_seed: u64) -> Result<AudioClip, ModelError> {
        let ids = text_to_ids(text)?;
        let rate = CANONICAL_RATE as f64;
        let mut rng = seed::rng(style_seed, &format!("tts:{text}"));

        let f0 = F0_BASE * (1.0 + 0.30 * (rng.gen::<f64>() - 0.5));
        let level = 0.32 * (1.0 + 0.20 * (rng.gen::<f64>() - 0.5));
        // One phase per band per utterance; tones stay coherent across the
        // whole clip and characters only gate their bands on and off.
        let f1_phase: Vec<f64> = (0..F1_GRID.len())
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        let f2_phase: Vec<f64> = (0..F2_GRID.len())
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        let hum_phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let edge = (EDGE_SECS * rate) as usize;

        let mut samples = vec![0.0f64; edge];
        for (pos, &id) in ids.iter().enumerate() {
            if id == 26 {
                let dur = (SPACE_SECS * rate) as usize;
                samples.extend(std::iter::repeat(0.0).take(dur));
            } else {
                let dur_secs = CHAR_SECS * (1.0 + 0.36 * (rng.gen::<f64>() - 0.5));
                let dur = (dur_secs * rate) as usize;
                let (f1, f2) = formants(id);
                let p1 = f1_phase[id % 5];
                let p2 = f2_phase[id / 5];
                let amp = level * (1.0 + 0.16 * (rng.gen::<f64>() - 0.5));
                let ramp = ((RAMP_SECS * rate) as usize).min(dur / 2);
                let start = samples.len();
                for n in 0..dur {
                    let t = (start + n) as f64 / rate;
                    let env = edge_ramp(n, dur, ramp);
                    let tone = 0.55 * (std::f64::consts::TAU * f1 * t + p1).sin()
                        + 0.45 * (std::f64::consts::TAU * f2 * t + p2).sin();
                    let hum = 0.06 * (std::f64::consts::TAU * f0 * t + hum_phase).sin();
                    samples.push(env * (amp * tone + hum));
                }
            }
            if pos + 1 < ids.len() {
                let gap = ((GAP_SECS + 0.008 * rng.gen::<f64>()) * rate) as usize;
                samples.extend(std::iter::repeat(0.0).take(gap));
            }
        }
        samples.extend(std::iter::repeat(0.0).take(edge));

        let id = format!("tts-{style_seed:016x}-{}", slug(text));
        Ok(AudioClip::new(id, samples, CANONICAL_RATE).with_transcript(text))
    }
}

fn edge_ramp(n: usize, dur: usize, ramp: usize) -> f64 {
    if ramp == 0 {
        return 1.0;
    }
    let up = if n < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * n as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    let tail = dur - 1 - n;
    let down = if tail < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * tail as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    up.min(down)
}

fn slug(text: &str) -> String {
    text.chars()
        .take(24)
        .map(|c| if c == ' ' { '-' } else { c })
        .collect()
}

/// True when every letter in the alphabet can be synthesized; used by corpus
/// generation sanity checks.
pub fn covers_alphabet(texts: &[&str]) -> bool {
    let mut seen = [false; 26];
    for t in texts {
        for c in t.chars() {
            if let Some(id) = char_to_id(c) {
                if id < 26 {
                    seen[id] = true;
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_text_and_seed_is_identical() {
        let tts = ToyTts::new();
        let a = tts.sample("open the door", 7).unwrap();
        let b = tts.sample("open the door", 7).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn distinct_seeds_differ() {
        let tts = ToyTts::new();
        let a = tts.sample("open the door", 1).unwrap();
        let b = tts.sample("open the door", 2).unwrap();
        let n = a.samples.len().min(b.samples.len());
        let dist: f64 = (0..n)
            .map(|i| (a.samples[i] - b.samples[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.0);
    }

    #[test]
    fn rejects_out_of_alphabet() {
        let tts = ToyTts::new();
        assert!(matches!(
            tts.sample("Open", 0),
            Err(ModelError::AlphabetError { symbol: 'O', .. })
        ));
    }

    #[test]
    fn duration_tracks_text_length() {
        let tts = ToyTts::new();
        let short = tts.sample("hi we go", 3).unwrap();
        let long = tts.sample("the quick brown fox jumps over the lazy dog", 3).unwrap();
        assert!(short.duration_secs() < long.duration_secs());
        assert!(short.duration_secs() > 0.5);
        assert!(long.duration_secs() < 8.0);
    }

    #[test]
    fn peak_leaves_headroom() {
        let tts = ToyTts::new();
        for seed in 0..10 {
            let clip = tts.sample("jazz quiz vow mix debt kelp", seed).unwrap();
            assert!(clip.peak() < 0.6, "peak {}", clip.peak());
        }
    }

    #[test]
    fn formant_grid_is_injective_per_letter() {
        let mut seen = std::collections::HashSet::new();
        for letter in 0..26 {
            let (f1, f2) = formants(letter);
            assert!(seen.insert(((f1 * 10.0) as i64, (f2 * 10.0) as i64)));
            assert!(f1 < f2);
            assert!(f2 <= 2875.0);
            // Multiples of the latent frame rate.
            assert_eq!(f1 % 62.5, 0.0);
            assert_eq!(f2 % 62.5, 0.0);
        }
    }
}
