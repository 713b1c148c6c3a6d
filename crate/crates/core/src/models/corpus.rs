//! Self-contained toy corpus: fixed word bank, seeded phrase sampling,
//! synthesized by the toy TTS. 500 train / 200 test utterances of roughly one
//! to five seconds, biased short.

use std::collections::HashSet;

use rand::Rng;

use crate::audio::AudioClip;
use crate::seed;

use super::tts::ToyTts;

const WORDS: &[&str] = &[
    "the", "a", "and", "to", "of", "in", "it", "is", "was", "for", "on", "are", "as", "with",
    "his", "they", "at", "be", "this", "have", "from", "or", "one", "had", "by", "word", "but",
    "not", "what", "all", "were", "we", "when", "your", "can", "said", "there", "use", "an",
    "each", "which", "she", "do", "how", "their", "if", "will", "up", "other", "about", "out",
    "many", "then", "them", "these", "so", "some", "her", "would", "make", "like", "him", "into",
    "time", "has", "look", "two", "more", "write", "go", "see", "number", "no", "way", "could",
    "people", "my", "than", "first", "water", "been", "call", "who", "oil", "its", "now", "find",
    "long", "down", "day", "did", "get", "come", "made", "may", "part", "over", "new", "sound",
    "take", "only", "little", "work", "know", "place", "year", "live", "me", "back", "give",
    "most", "very", "after", "thing", "our", "just", "name", "good", "sentence", "man", "think",
    "say", "great", "where", "help", "through", "much", "before", "line", "right", "too", "mean",
    "old", "any", "same", "tell", "boy", "follow", "came", "want", "show", "also", "around",
    "form", "three", "small", "set", "put", "end", "does", "another", "well", "large", "must",
    "big", "even", "such", "because", "turn", "here", "why", "ask", "went", "men", "read",
    "need", "land", "different", "home", "us", "move", "try", "kind", "hand", "picture",
    "again", "change", "off", "play", "spell", "air", "away", "animal", "house", "point",
    "page", "letter", "mother", "answer", "found", "study", "still", "learn", "should",
    "world", "high", "every", "near", "add", "food", "between", "own", "below", "country",
    "plant", "last", "school", "father", "keep", "tree", "never", "start", "city", "earth",
    "eye", "light", "thought", "head", "under", "story", "saw", "left", "few", "while",
    "along", "might", "close", "something", "seem", "next", "hard", "open", "example",
    "begin", "life", "always", "those", "both", "paper", "together", "got", "group", "often",
    "run", "quick", "jazz", "quiz", "vex", "zebra", "jump", "fox", "lazy", "mix", "very",
    "exact", "size", "prize", "joke", "wave", "quiet", "zero", "extra", "jog", "box",
];

/// A handful of fixed openers that jointly cover the alphabet, so coverage
/// does not depend on sampling luck.
const COVERAGE_PHRASES: &[&str] = &[
    "quick brown fox jumps",
    "the lazy dog waves back",
    "jazz quiz on voice size",
    "extra zero keeps it calm",
    "might we jog past the box",
];

#[derive(Clone, Debug)]
pub struct CorpusSplits {
    pub train: Vec<AudioClip>,
    pub test: Vec<AudioClip>,
}

/// Seeded phrase list: unique, 8 to 29 characters, biased toward short.
pub fn generate_phrases(master_seed: u64, count: usize) -> Vec<String> {
    let mut rng = seed::rng(master_seed, "corpus-phrases");
    let mut seen: HashSet<String> = HashSet::new();
    let mut phrases = Vec::with_capacity(count);
    for p in COVERAGE_PHRASES {
        if phrases.len() < count && seen.insert(p.to_string()) {
            phrases.push(p.to_string());
        }
    }
    while phrases.len() < count {
        let u: f64 = rng.gen();
        let target = 8 + (u * u * 20.0) as usize;
        let mut phrase = String::from(WORDS[rng.gen_range(0..WORDS.len())]);
        loop {
            if phrase.len() >= target {
                break;
            }
            let w = WORDS[rng.gen_range(0..WORDS.len())];
            if phrase.len() + 1 + w.len() > 28 {
                break;
            }
            phrase.push(' ');
            phrase.push_str(w);
        }
        if phrase.len() >= 8 && seen.insert(phrase.clone()) {
            phrases.push(phrase);
        }
    }
    phrases
}

/// Synthesize the full corpus. Deterministic in `master_seed`.
pub fn generate_corpus(master_seed: u64) -> CorpusSplits {
    let tts = ToyTts::new();
    let phrases = generate_phrases(master_seed, 700);
    let clip = |phrase: &str, name: String, index: usize| {
        let style = seed::derive(master_seed, &format!("corpus-style:{index}"));
        let mut c = tts.sample(phrase, style).expect("in-alphabet phrase");
        c.id = name;
        c
    };
    let train = phrases[..500]
        .iter()
        .enumerate()
        .map(|(i, p)| clip(p, format!("train-{i:03}"), i))
        .collect();
    let test = phrases[500..700]
        .iter()
        .enumerate()
        .map(|(i, p)| clip(p, format!("test-{i:03}"), 500 + i))
        .collect();
    CorpusSplits { train, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tts::covers_alphabet;

    #[test]
    fn phrase_list_is_unique_and_sized() {
        let phrases = generate_phrases(42, 700);
        assert_eq!(phrases.len(), 700);
        let set: HashSet<_> = phrases.iter().collect();
        assert_eq!(set.len(), 700);
        for p in &phrases {
            assert!(p.len() >= 8 && p.len() <= 28, "{p:?} has {} chars", p.len());
        }
    }

    #[test]
    fn phrase_generation_is_deterministic() {
        assert_eq!(generate_phrases(7, 50), generate_phrases(7, 50));
        assert_ne!(generate_phrases(7, 50), generate_phrases(8, 50));
    }

    #[test]
    fn train_split_covers_alphabet() {
        let phrases = generate_phrases(42, 700);
        let refs: Vec<&str> = phrases[..500].iter().map(|s| s.as_str()).collect();
        assert!(covers_alphabet(&refs));
    }

    #[test]
    fn corpus_durations_run_one_to_five_seconds_biased_short() {
        let corpus = generate_corpus(42);
        assert_eq!(corpus.train.len(), 500);
        assert_eq!(corpus.test.len(), 200);
        let durations: Vec<f64> = corpus
            .train
            .iter()
            .chain(&corpus.test)
            .map(|c| c.duration_secs())
            .collect();
        for &d in &durations {
            assert!((1.0..=5.0).contains(&d), "duration {d}");
        }
        let mean = durations.iter().sum::<f64>() / durations.len() as f64;
        assert!(mean < 3.0, "mean duration {mean} not biased short");
    }

    #[test]
    fn clips_carry_transcripts_and_ids() {
        let corpus = generate_corpus(1);
        assert_eq!(corpus.train[0].id, "train-000");
        assert_eq!(corpus.test[0].id, "test-000");
        for c in corpus.train.iter().take(5) {
            assert!(c.transcript.is_some());
            assert!(c.is_canonical_rate());
        }
    }
}
