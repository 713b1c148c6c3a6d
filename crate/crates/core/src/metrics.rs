//! Protection metrics: edit distance, CER/WER, PSR with the inclusive 50%
//! success rule, transcription anomaly filtering, and rank-sum AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("all records are excluded")]
    AllExcluded,
    #[error("need at least one record")]
    NoRecords,
    #[error("scores and labels must contain both classes and equal lengths")]
    SingleClass,
}

/// Text normalization applied before scoring. The underlying systems never
/// state theirs, so this is centralized and configurable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextNormalizer {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
}

impl Default for TextNormalizer {
    fn default() -> Self {
        TextNormalizer {
            lowercase: true,
            strip_punctuation: true,
            collapse_whitespace: true,
        }
    }
}

impl TextNormalizer {
    pub fn normalize(&self, text: &str) -> String {
        let mut s: String = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        if self.strip_punctuation {
            s.retain(|c| c.is_alphanumeric() || c.is_whitespace());
        }
        if self.collapse_whitespace {
            s = s.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        s
    }
}

/// Scoring configuration: normalization plus whether CER counts spaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub normalizer: TextNormalizer,
    /// Whether spaces count as characters for CER (after whitespace
    /// collapsing). Unstated upstream; included by default.
    pub cer_include_spaces: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            normalizer: TextNormalizer::default(),
            cer_include_spaces: true,
        }
    }
}

/// Levenshtein distance with unit-cost insert/delete/substitute.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0usize; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let cost = usize::from(lc != sc);
            cur[j + 1] = (prev[j] + cost)
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

fn cer_chars(text: &str, include_spaces: bool) -> Vec<char> {
    text.chars().filter(|c| include_spaces || !c.is_whitespace()).collect()
}

/// Character error rate in percent: 100 * edit_distance / reference length.
/// May exceed 100.
pub fn cer(reference: &str, hypothesis: &str, cfg: &MetricConfig) -> Result<f64, MetricError> {
    let r = cfg.normalizer.normalize(reference);
    let h = cfg.normalizer.normalize(hypothesis);
    let rc = cer_chars(&r, cfg.cer_include_spaces);
    let hc = cer_chars(&h, cfg.cer_include_spaces);
    if rc.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(100.0 * edit_distance(&rc, &hc) as f64 / rc.len() as f64)
}

/// Word error rate in percent at whitespace-token granularity. May exceed 100.
pub fn wer(reference: &str, hypothesis: &str, cfg: &MetricConfig) -> Result<f64, MetricError> {
    let r = cfg.normalizer.normalize(reference);
    let h = cfg.normalizer.normalize(hypothesis);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    if rw.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(100.0 * edit_distance(&rw, &hw) as f64 / rw.len() as f64)
}

/// CER threshold (percent) at or above which a clip counts as protected.
pub const SUCCESS_CER_THRESHOLD: f64 = 50.0;

/// One scored clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub clip_id: String,
    pub reference: String,
    pub hypothesis: String,
    pub cer: f64,
    pub wer: f64,
    /// cer >= 50 (inclusive); undefined content when excluded.
    pub success: bool,
    /// Hypothesis flagged as an anomalous transcription.
    pub excluded: bool,
}

impl EvalRecord {
    /// Score a hypothesis against its reference, applying the anomaly filter.
    pub fn score(
        clip_id: impl Into<String>,
        reference: &str,
        hypothesis: &str,
        cfg: &MetricConfig,
    ) -> Result<EvalRecord, MetricError> {
        let c = cer(reference, hypothesis, cfg)?;
        let w = wer(reference, hypothesis, cfg)?;
        let excluded = is_failure(hypothesis);
        Ok(EvalRecord {
            clip_id: clip_id.into(),
            reference: reference.to_string(),
            hypothesis: hypothesis.to_string(),
            cer: c,
            wer: w,
            success: c >= SUCCESS_CER_THRESHOLD,
            excluded,
        })
    }
}

/// Protection success rate in percent over non-excluded records.
pub fn psr(records: &[EvalRecord]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::NoRecords);
    }
    let kept: Vec<&EvalRecord> = records.iter().filter(|r| !r.excluded).collect();
    if kept.is_empty() {
        return Err(MetricError::AllExcluded);
    }
    let successes = kept.iter().filter(|r| r.success).count();
    Ok(100.0 * successes as f64 / kept.len() as f64)
}

/// Mean CER over non-excluded records.
pub fn mean_cer(records: &[EvalRecord]) -> Result<f64, MetricError> {
    let kept: Vec<f64> = records.iter().filter(|r| !r.excluded).map(|r| r.cer).collect();
    if kept.is_empty() {
        return Err(MetricError::AllExcluded);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Mean WER over non-excluded records.
pub fn mean_wer(records: &[EvalRecord]) -> Result<f64, MetricError> {
    let kept: Vec<f64> = records.iter().filter(|r| !r.excluded).map(|r| r.wer).collect();
    if kept.is_empty() {
        return Err(MetricError::AllExcluded);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Thresholds for the degenerate-repetition rule. The upstream description
/// gives no numbers; these defaults are fixed here and overridable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Longest token n-gram considered "short".
    pub max_ngram: usize,
    /// Minimum consecutive repetitions.
    pub min_repeats: usize,
    /// Minimum fraction of the output the repetition must cover.
    pub min_coverage: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_ngram: 3,
            min_repeats: 5,
            min_coverage: 0.8,
        }
    }
}

/// True when a transcription is an anomalous failure: empty, the literal
/// sentinel "NA", or a degenerate short-n-gram repetition.
pub fn is_failure(text: &str) -> bool {
    is_failure_with(text, &FilterConfig::default())
}

pub fn is_failure_with(text: &str, cfg: &FilterConfig) -> bool {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "NA" {
        return true;
    }
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    let total = tokens.len();
    for n in 1..=cfg.max_ngram.min(total) {
        for start in 0..total.saturating_sub(n) {
            let gram = &tokens[start..start + n];
            let mut repeats = 1;
            let mut pos = start + n;
            while pos + n <= total && &tokens[pos..pos + n] == gram {
                repeats += 1;
                pos += n;
            }
            if repeats >= cfg.min_repeats
                && (repeats * n) as f64 >= cfg.min_coverage * total as f64
            {
                return true;
            }
        }
    }
    false
}

/// Flag each hypothesis per the failure rules; parallel to the input.
pub fn filter_failures(hypotheses: &[String]) -> Vec<bool> {
    hypotheses.iter().map(|h| is_failure(h)).collect()
}

/// Area under the ROC curve via the rank-sum formulation with midranks for
/// ties. `labels[i]` marks the positive class.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::SingleClass);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Midranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Brute-force references used by tests and the acceptance suite.
pub mod oracle {
    /// Full-matrix Levenshtein DP.
    pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j - 1] + cost)
                    .min(d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    /// Pairwise-comparison AUC: P(score_pos > score_neg) + 0.5 P(tie).
    pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| !l)
            .map(|(&s, _)| s)
            .collect();
        let mut total = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    total += 1.0;
                } else if p == n {
                    total += 0.5;
                }
            }
        }
        total / (pos.len() * neg.len()) as f64
    }
}
