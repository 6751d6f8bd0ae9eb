//! Word n-gram language model with interpolated modified Kneser-Ney
//! smoothing, stored in backoff form, and perplexity-based filtering.

mod filter;
mod io;
mod train;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{
    perplexity_filter, Cutoff, GroupCutoffs, PerplexityDrop, PerplexityDropReason, PerplexityFilterConfig,
    PerplexityManifest, MIN_PERCENTILE_RECORDS,
};
pub use train::{train_lm, train_lm_texts, Discounts};

use crate::quality::text::words;
use crate::record::Record;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub(crate) const UNK_ID: u32 = 0;
pub(crate) const BOS_ID: u32 = 1;
pub(crate) const EOS_ID: u32 = 2;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("no tokens to score")]
    EmptySequence,
    #[error("percentile mode needs at least {min} records, group `{group}` has {n}")]
    TooFewRecords { group: String, n: usize, min: usize },
    #[error("invalid percentile {0} (expected 0 <= p < 50)")]
    InvalidPercentile(f64),
    #[error("model file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    ModifiedKneserNey,
    /// Relative frequencies with a constant 0.4 backoff. Scores do not sum to one.
    StupidBackoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub vocab_cap: usize,
    /// Per-order raw-count pruning threshold: index 0 is bigrams. An n-gram
    /// whose count is at most the threshold is removed. Unigrams are never pruned.
    pub prune: Vec<u64>,
    pub smoothing: Smoothing,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            order: 5,
            vocab_cap: 500_000,
            prune: Vec::new(),
            smoothing: Smoothing::ModifiedKneserNey,
        }
    }
}

impl LmConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub prob: f64,
    pub backoff: f64,
}

/// Backoff-form model: `tables[k]` holds the (k+1)-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    pub(crate) order: usize,
    pub(crate) smoothing: Smoothing,
    pub(crate) vocab: Vec<String>,
    pub(crate) index: HashMap<String, u32>,
    pub(crate) tables: Vec<HashMap<Vec<u32>, Entry>>,
}

/// Sentences of a text for LM purposes: its non-empty lines, split into
/// lowercased words by the quality-signal word splitter.
pub fn lm_sentences(text: &str) -> impl Iterator<Item = Vec<String>> + '_ {
    text.lines()
        .map(|line| words(line).map(str::to_lowercase).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Vocabulary including `<unk>`, `<s>` and `</s>`.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Words that can be predicted: everything except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().filter(|w| *w != BOS).map(String::as_str)
    }

    pub fn num_ngrams(&self, n: usize) -> usize {
        self.tables.get(n.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    pub(crate) fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub(crate) fn prob_ids(&self, context: &[u32], w: u32) -> f64 {
        let keep = context.len().min(self.order - 1);
        let ctx = &context[context.len() - keep..];
        let mut backoff = 1.0;
        let mut key = Vec::with_capacity(self.order);
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            key.clear();
            key.extend_from_slice(h);
            key.push(w);
            if let Some(e) = self.tables[key.len() - 1].get(&key) {
                return backoff * e.prob;
            }
            if !h.is_empty() {
                if let Some(e) = self.tables[h.len() - 1].get(h) {
                    backoff *= e.backoff;
                }
            }
        }
        unreachable!("every predictable word has a unigram entry")
    }

    /// `P(word | context)`; unknown words are scored as `<unk>`.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let ctx: Vec<u32> = context.iter().map(|w| self.id(w)).collect();
        self.prob_ids(&ctx, self.id(word))
    }

    /// Natural-log probability of each sentence token and its end marker.
    fn score_sentence(&self, sentence: &[String], total: &mut f64, count: &mut usize) {
        let mut ctx = vec![BOS_ID];
        for w in sentence.iter().map(|w| self.id(w)).chain(std::iter::once(EOS_ID)) {
            *total += self.prob_ids(&ctx, w).ln();
            *count += 1;
            ctx.push(w);
        }
    }

    /// `exp` of the mean negative log-likelihood per token, end markers included.
    pub fn perplexity_text(&self, text: &str) -> Result<f64, LmError> {
        let (mut total, mut count) = (0.0, 0usize);
        for s in lm_sentences(text) {
            self.score_sentence(&s, &mut total, &mut count);
        }
        if count == 0 {
            return Err(LmError::EmptySequence);
        }
        Ok((-total / count as f64).exp())
    }

    pub fn perplexity(&self, record: &Record) -> Result<f64, LmError> {
        self.perplexity_text(&record.text)
    }

    /// Contexts that have at least one stored continuation.
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = vec![Vec::new()];
        for table in &self.tables[1..] {
            let mut ctxs: Vec<Vec<u32>> = table.keys().map(|k| k[..k.len() - 1].to_vec()).collect();
            ctxs.sort_unstable();
            ctxs.dedup();
            out.extend(ctxs);
        }
        out
    }

    /// Sum of `P(w | context)` over every predictable word.
    pub fn context_mass(&self, context: &[u32]) -> f64 {
        (0..self.vocab.len() as u32)
            .filter(|&w| w != BOS_ID)
            .map(|w| self.prob_ids(context, w))
            .sum()
    }

    pub fn words_of(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.vocab[i as usize].as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NgramLm {
        train_lm_texts(["a b a b a b"], &LmConfig::with_order(2)).unwrap()
    }

    #[test]
    fn toy_unigrams_match_hand_computation() {
        // continuation counts a:2 b:1 </s>:1 over 4; fallback discounts 0.5/1/1.5;
        // leftover mass 0.5 spread over {a, b, </s>, <unk>}
        let lm = toy();
        let p = |w: &str| lm.prob(&[], w);
        assert!((p("a") - 0.375).abs() < 1e-12);
        assert!((p("b") - 0.25).abs() < 1e-12);
        assert!((p(EOS) - 0.25).abs() < 1e-12);
        assert!((p("zzz") - 0.125).abs() < 1e-12);
    }

    #[test]
    fn toy_bigrams_match_hand_computation() {
        let lm = toy();
        let p = |h: &str, w: &str| lm.prob(&[h], w);
        assert!((p("a", "b") - 0.625).abs() < 1e-12);
        assert!((p("a", "a") - 0.1875).abs() < 1e-12);
        assert!((p("a", EOS) - 0.125).abs() < 1e-12);
        assert!((p("a", UNK) - 0.0625).abs() < 1e-12);
        assert!((p("b", "a") - (1.0 / 3.0 + 0.1875)).abs() < 1e-12);
        assert!((p("b", EOS) - (0.5 / 3.0 + 0.125)).abs() < 1e-12);
        assert!((p("b", "b") - 0.125).abs() < 1e-12);
        assert!((p(BOS, "a") - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn every_context_normalizes() {
        let corpus = [
            "the cat sat on the mat",
            "the dog sat on the log\nthe cat ate the fish",
            "a dog and a cat",
            "on the mat the cat sat",
        ];
        for order in 1..=4 {
            let lm = train_lm_texts(corpus, &LmConfig::with_order(order)).unwrap();
            for ctx in lm.contexts() {
                let mass = lm.context_mass(&ctx);
                assert!((mass - 1.0).abs() < 1e-9, "order {order} ctx {:?}: {mass}", lm.words_of(&ctx));
            }
            assert!((lm.context_mass(&[UNK_ID, UNK_ID, UNK_ID]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_unigrams() {
        let lm = train_lm_texts(["x y z w", "w z y x"], &LmConfig::with_order(1)).unwrap();
        let p: Vec<f64> = ["x", "y", "z", "w"].iter().map(|w| lm.prob(&[], w)).collect();
        assert!(p.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn single_word_corpus_is_nearly_certain() {
        let lm = train_lm_texts(["hello hello hello hello hello hello hello hello"], &LmConfig::with_order(3)).unwrap();
        let ppl = lm.perplexity_text("hello hello hello hello").unwrap();
        assert!(ppl < 2.0, "{ppl}");
    }

    #[test]
    fn oov_perplexity_is_finite() {
        let lm = toy();
        let ppl = lm.perplexity_text("qqq rrr sss").unwrap();
        assert!(ppl.is_finite() && ppl > 1.0);
        assert!(matches!(lm.perplexity_text(" \n "), Err(LmError::EmptySequence)));
    }

    #[test]
    fn retraining_is_identical() {
        let corpus = ["one two three two one", "three two one"];
        let a = train_lm_texts(corpus, &LmConfig::with_order(3)).unwrap();
        let b = train_lm_texts(corpus, &LmConfig::with_order(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sentences_are_lines() {
        let s: Vec<_> = lm_sentences("Hello, World.\n\nمرحبا بكم").collect();
        assert_eq!(s, vec![vec!["hello", "world"], vec!["مرحبا", "بكم"]]);
    }
}
