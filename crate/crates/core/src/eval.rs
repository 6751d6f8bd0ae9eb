//! Intrinsic tokenizer metrics: fertility and morphological alignment.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::tokenizer::{Segmenter, Tokenizer, MARKER};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus has no whitespace tokens")]
    EmptyCorpus,
    #[error("alignment needs non-empty token and morpheme lists")]
    EmptySequence,
    #[error("tokens {tokens:?} and morphemes {morphemes:?} do not cover the same number of characters")]
    LengthMismatch { tokens: Vec<String>, morphemes: Vec<String> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Anything that splits a whitespace-free word into token strings.
pub trait WordTokenizer: Sync {
    fn word_tokens(&self, word: &str) -> Vec<String>;
}

impl WordTokenizer for Tokenizer {
    fn word_tokens(&self, word: &str) -> Vec<String> {
        self.encode_word(word)
            .into_iter()
            .map(|id| self.token(id).unwrap_or_default().to_string())
            .collect()
    }
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl WordTokenizer for WhitespaceTokenizer {
    fn word_tokens(&self, word: &str) -> Vec<String> {
        vec![word.to_string()]
    }
}

/// One token per character.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl WordTokenizer for CharTokenizer {
    fn word_tokens(&self, word: &str) -> Vec<String> {
        word.chars().map(String::from).collect()
    }
}

fn word_counts<S: AsRef<str> + Sync>(corpus: &[S]) -> HashMap<&str, u64> {
    corpus
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<&str, u64>, t| {
            for w in t.as_ref().split_whitespace() {
                *acc.entry(w).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        })
}

/// Subword tokens per whitespace word.
pub fn fertility<T: WordTokenizer, S: AsRef<str> + Sync>(tok: &T, corpus: &[S]) -> Result<f64, EvalError> {
    let counts = word_counts(corpus);
    let words: u64 = counts.values().sum();
    if words == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    let tokens: u64 = counts
        .par_iter()
        .map(|(w, c)| tok.word_tokens(w).len() as u64 * c)
        .sum();
    Ok(tokens as f64 / words as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub score: f64,
    /// Matched (token index, morpheme index) pairs, increasing on both sides.
    pub pairs: Vec<(usize, usize)>,
}

fn strip(s: &str) -> &str {
    s.strip_prefix(MARKER).unwrap_or(s)
}

fn offsets(items: &[&str]) -> Vec<usize> {
    let mut at = 0;
    items
        .iter()
        .map(|s| {
            let o = at;
            at += s.chars().count();
            o
        })
        .collect()
}

/// Order-preserving alignment of tokens against morphemes.
///
/// A token matches a morpheme when both are the same string starting at the
/// same character offset of the word; markers are stripped first. Gaps cost
/// nothing, each match scores 1, and the score is the best match count over
/// the longer list's length.
pub fn align_word<A: AsRef<str>, B: AsRef<str>>(tokens: &[A], morphemes: &[B]) -> Result<Alignment, EvalError> {
    if tokens.is_empty() || morphemes.is_empty() {
        return Err(EvalError::EmptySequence);
    }
    let t: Vec<&str> = tokens.iter().map(|s| strip(s.as_ref())).collect();
    let m: Vec<&str> = morphemes.iter().map(|s| strip(s.as_ref())).collect();
    let len = |xs: &[&str]| xs.iter().map(|s| s.chars().count()).sum::<usize>();
    if len(&t) != len(&m) {
        return Err(EvalError::LengthMismatch {
            tokens: t.iter().map(|s| s.to_string()).collect(),
            morphemes: m.iter().map(|s| s.to_string()).collect(),
        });
    }
    let (to, mo) = (offsets(&t), offsets(&m));
    let hit = |i: usize, j: usize| t[i] == m[j] && to[i] == mo[j];

    let (n, k) = (t.len(), m.len());
    let mut dp = vec![vec![0u32; k + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=k {
            let diag = dp[i - 1][j - 1] + hit(i - 1, j - 1) as u32;
            dp[i][j] = diag.max(dp[i - 1][j]).max(dp[i][j - 1]);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, k);
    while i > 0 && j > 0 {
        if hit(i - 1, j - 1) && dp[i][j] == dp[i - 1][j - 1] + 1 {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if dp[i][j] == dp[i - 1][j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    Ok(Alignment {
        score: dp[n][k] as f64 / n.max(k) as f64,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalConfig {
    /// Weight each distinct word by its corpus frequency.
    pub weighted: bool,
    /// Number of lowest-scoring words kept in the report.
    pub worst_n: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weighted: true,
            worst_n: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordScore {
    pub word: String,
    pub count: u64,
    pub score: f64,
    pub tokens: Vec<String>,
    pub morphemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub fertility: f64,
    pub morph_alignment: f64,
    pub token_count: u64,
    pub word_count: u64,
    /// Words contributing to the alignment mean (occurrences when weighted,
    /// distinct words otherwise).
    pub evaluated_word_count: u64,
    pub skipped_word_count: u64,
    pub weighted: bool,
    /// Ten equal-width score bins over [0, 1], the last one closed; same
    /// weighting as the mean.
    pub histogram: [u64; 10],
    pub worst: Vec<WordScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// CSV of the worst-aligned words: word, count, score, tokens, morphemes.
    pub fn write_worst_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["word", "count", "score", "tokens", "morphemes"])?;
        for s in &self.worst {
            w.write_record([
                s.word.clone(),
                s.count.to_string(),
                format!("{:.6}", s.score),
                s.tokens.join(" "),
                s.morphemes.join(" "),
            ])?;
        }
        w.flush().map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Fertility and mean alignment of `tok` against `segmenter` over `corpus`.
/// Words whose tokens cannot be aligned (for example because of an unknown
/// token) are skipped and counted.
pub fn morph_alignment_score<T: WordTokenizer, S: AsRef<str> + Sync>(
    tok: &T,
    corpus: &[S],
    segmenter: &Segmenter,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let counts = word_counts(corpus);
    let mut words: Vec<(&str, u64)> = counts.into_iter().collect();
    words.sort_unstable();
    let word_count: u64 = words.iter().map(|(_, c)| c).sum();
    if word_count == 0 {
        return Err(EvalError::EmptyCorpus);
    }

    let scored: Vec<(u64, Option<WordScore>)> = words
        .par_iter()
        .map(|&(w, count)| {
            let tokens = tok.word_tokens(w);
            let n = tokens.len() as u64 * count;
            let morphemes = segmenter.segment(w).morphemes;
            let ws = align_word(&tokens, &morphemes).ok().map(|a| WordScore {
                word: w.to_string(),
                count,
                score: a.score,
                tokens: tokens.iter().map(|t| strip(t).to_string()).collect(),
                morphemes,
            });
            (n, ws)
        })
        .collect();

    let token_count = scored.iter().map(|(n, _)| n).sum();
    let mut sum = 0.0;
    let mut evaluated = 0u64;
    let mut skipped = 0u64;
    let mut histogram = [0u64; 10];
    let mut ok: Vec<WordScore> = Vec::new();
    for ((_, count), (_, ws)) in words.iter().zip(scored) {
        let weight = if cfg.weighted { *count } else { 1 };
        match ws {
            Some(ws) => {
                sum += ws.score * weight as f64;
                evaluated += weight;
                histogram[((ws.score * 10.0) as usize).min(9)] += weight;
                ok.push(ws);
            }
            None => skipped += weight,
        }
    }
    ok.sort_by(|a, b| a.score.total_cmp(&b.score).then(b.count.cmp(&a.count)).then(a.word.cmp(&b.word)));
    ok.truncate(cfg.worst_n);

    Ok(EvalReport {
        fertility: token_count as f64 / word_count as f64,
        morph_alignment: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
        token_count,
        word_count,
        evaluated_word_count: evaluated,
        skipped_word_count: skipped,
        weighted: cfg.weighted,
        histogram,
        worst: ok,
    })
}
