//! Character-level BPE and MorphBPE.
//!
//! The first symbol of every word carries the marker `▁` so decoding can
//! restore word boundaries. In morph mode each word is segmented into
//! morphemes before training and encoding, and merges are learned and applied
//! inside morphemes only.

mod audit;
mod combine;
mod io;
mod segment;
mod train;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{audit_boundaries, BoundaryAudit};
pub use combine::{combine_vocabs, CombineReport, VOCAB_MULTIPLE};
pub use segment::{
    load_segmentation_table, parse_segmentation_table, MorphSegmentation, RuleSegmenter, Segmenter, SegmenterStage,
};
pub use train::{train_bpe, train_morphbpe, train_tokenizer, TrainConfig, TrainReport};

/// Word-initial marker prefixed to the first symbol of each word.
pub const MARKER: char = '\u{2581}';
pub const UNK_TOKEN: &str = "<unk>";
pub const DEFAULT_SPECIALS: [&str; 4] = ["<unk>", "<s>", "</s>", "<pad>"];

pub fn reserved_token(i: usize) -> String {
    format!("<|reserved_{i}|>")
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("vocab size {requested} is below the {minimum} ids needed for specials, alphabet and reserved block")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("vocab size {0} is not a multiple of 1024 (pass allow_any_size to override)")]
    NotMultiple(usize),
    #[error("token id {0} out of range")]
    IdOutOfRange(u32),
    #[error("morphemes {morphemes:?} do not segment {word:?}")]
    BadSegmentation { word: String, morphemes: Vec<String> },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Vanilla,
    Morph,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Morph => "morph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergeRule {
    pub left: u32,
    pub right: u32,
    pub output: u32,
    /// Pair frequency when the merge was selected during training.
    pub freq: u64,
}

/// Id layout: specials, alphabet (sorted by code point), one token per merge
/// in rank order, reserved block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    pub(crate) mode: Mode,
    pub(crate) tokens: Vec<String>,
    pub(crate) index: HashMap<String, u32>,
    pub(crate) num_specials: usize,
    pub(crate) alphabet_len: usize,
    pub(crate) merges: Vec<MergeRule>,
    pub(crate) ranks: HashMap<(u32, u32), u32>,
    pub(crate) num_reserved: usize,
    pub(crate) segmenter: Segmenter,
}

/// The symbol sequences a word is split into before merges: one per
/// morpheme in morph mode, the whole word otherwise.
pub(crate) fn initial_symbols(unit: &str, word_initial: bool) -> Vec<String> {
    let mut out = Vec::with_capacity(unit.len());
    for (i, c) in unit.chars().enumerate() {
        if i == 0 && word_initial {
            out.push(format!("{MARKER}{c}"));
        } else {
            out.push(c.to_string());
        }
    }
    out
}

impl Tokenizer {
    /// Assembles a tokenizer from its parts and builds the lookup maps.
    pub(crate) fn assemble(
        mode: Mode,
        tokens: Vec<String>,
        num_specials: usize,
        alphabet_len: usize,
        merges: Vec<MergeRule>,
        num_reserved: usize,
        segmenter: Segmenter,
    ) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let ranks = merges.iter().enumerate().map(|(r, m)| ((m.left, m.right), r as u32)).collect();
        Self {
            mode,
            tokens,
            index,
            num_specials,
            alphabet_len,
            merges,
            ranks,
            num_reserved,
            segmenter,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn specials(&self) -> &[String] {
        &self.tokens[..self.num_specials]
    }

    pub fn alphabet(&self) -> &[String] {
        &self.tokens[self.num_specials..self.num_specials + self.alphabet_len]
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    /// Merges as token strings, in rank order.
    pub fn merge_pairs(&self) -> Vec<(&str, &str)> {
        self.merges
            .iter()
            .map(|m| (self.tokens[m.left as usize].as_str(), self.tokens[m.right as usize].as_str()))
            .collect()
    }

    pub fn num_reserved(&self) -> usize {
        self.num_reserved
    }

    pub fn reserved_range(&self) -> std::ops::Range<usize> {
        self.tokens.len() - self.num_reserved..self.tokens.len()
    }

    pub fn segmenter(&self) -> &Segmenter {
        &self.segmenter
    }

    pub fn unk_id(&self) -> u32 {
        self.id(UNK_TOKEN).unwrap_or(0)
    }

    /// Units a word is encoded as: its morphemes in morph mode, else itself.
    pub fn units(&self, word: &str) -> Vec<String> {
        match self.mode {
            Mode::Morph => self.segmenter.segment(word).morphemes,
            Mode::Vanilla => vec![word.to_string()],
        }
    }

    /// Applies merges to one unit, lowest rank first, all non-overlapping
    /// occurrences of a pair at a time.
    fn encode_unit(&self, unit: &str, word_initial: bool, out: &mut Vec<u32>) {
        let unk = self.unk_id();
        let mut syms: Vec<u32> = initial_symbols(unit, word_initial)
            .iter()
            .map(|s| self.id(s).unwrap_or(unk))
            .collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let m = self.merges[rank as usize];
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == m.left && syms[i + 1] == m.right {
                    merged.push(m.output);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            syms = merged;
        }
        out.extend(syms);
    }

    /// Tokens for one whitespace-free word.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for (k, unit) in self.units(word).iter().enumerate() {
            self.encode_unit(unit, k == 0, &mut out);
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            for (k, unit) in self.units(word).iter().enumerate() {
                self.encode_unit(unit, k == 0, &mut out);
            }
        }
        out
    }

    pub fn encode_to_strings(&self, text: &str) -> Vec<&str> {
        self.encode(text).into_iter().map(|i| self.tokens[i as usize].as_str()).collect()
    }

    /// Concatenates tokens, starting a new space-separated word at each marker.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(TokenizerError::IdOutOfRange(id))?;
            match tok.strip_prefix(MARKER) {
                Some(rest) => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(rest);
                }
                None => out.push_str(tok),
            }
        }
        Ok(out)
    }

    /// Structural checks: dense bijective ids, merge outputs equal to the
    /// concatenation of their inputs and defined after them, no special
    /// token produced by a merge, one merge per merged token.
    pub fn check_invariants(&self) -> Result<(), TokenizerError> {
        let fail = |m: String| Err(TokenizerError::Invariant(m));
        if self.index.len() != self.tokens.len() {
            return fail("duplicate token strings".into());
        }
        let first_merge = self.num_specials + self.alphabet_len;
        if first_merge + self.merges.len() + self.num_reserved != self.tokens.len() {
            return fail("id layout does not add up".into());
        }
        for (r, m) in self.merges.iter().enumerate() {
            let out = m.output as usize;
            if out != first_merge + r {
                return fail(format!("merge {r} output id {out} out of place"));
            }
            if m.left as usize >= out || m.right as usize >= out {
                return fail(format!("merge {r} uses a token defined after it"));
            }
            if (m.left as usize) < self.num_specials || (m.right as usize) < self.num_specials {
                return fail(format!("merge {r} consumes a special token"));
            }
            let concat = format!("{}{}", self.tokens[m.left as usize], self.tokens[m.right as usize]);
            if concat != self.tokens[out] {
                return fail(format!("merge {r} output is not left ++ right"));
            }
        }
        if self.ranks.len() != self.merges.len() {
            return fail("duplicate merge pair".into());
        }
        Ok(())
    }

    /// Prefix of the merge list as a standalone tokenizer (reserved ids dropped).
    pub fn truncate_merges(&self, k: usize) -> Tokenizer {
        let k = k.min(self.merges.len());
        let keep = self.num_specials + self.alphabet_len + k;
        Tokenizer::assemble(
            self.mode,
            self.tokens[..keep].to_vec(),
            self.num_specials,
            self.alphabet_len,
            self.merges[..k].to_vec(),
            0,
            self.segmenter.clone(),
        )
    }
}
