use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenizerError;

/// A word split into morphemes whose concatenation is the word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MorphSegmentation {
    pub word: String,
    pub morphemes: Vec<String>,
}

impl MorphSegmentation {
    pub fn new(word: &str, morphemes: Vec<String>) -> Result<Self, TokenizerError> {
        if morphemes.is_empty() || morphemes.iter().any(String::is_empty) || morphemes.concat() != word {
            return Err(TokenizerError::BadSegmentation {
                word: word.to_string(),
                morphemes,
            });
        }
        Ok(Self {
            word: word.to_string(),
            morphemes,
        })
    }

    pub fn single(word: &str) -> Self {
        Self {
            word: word.to_string(),
            morphemes: vec![word.to_string()],
        }
    }

    /// Character offsets of the internal morpheme boundaries.
    pub fn boundary_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.morphemes.len() - 1);
        let mut at = 0;
        for m in &self.morphemes[..self.morphemes.len() - 1] {
            at += m.chars().count();
            out.push(at);
        }
        out
    }
}

const CONJUNCTIONS: &[&str] = &["و", "ف"];
const PREPOSITIONS: &[&str] = &["ب", "ك", "ل"];
const ARTICLES: &[&str] = &["ال"];
const SUFFIXES: &[&str] = &["ها", "هم", "كم", "نا", "ات", "ون", "ين", "ة"];

/// Affix-stripping Arabic segmenter: at most one prefix from each of the
/// conjunction, preposition and article classes (in that order), then at most
/// one suffix, longest first. A strip only happens if the remaining stem keeps
/// at least `min_stem` characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSegmenter {
    pub prefix_classes: Vec<Vec<String>>,
    pub suffixes: Vec<String>,
    pub min_stem: usize,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self {
            prefix_classes: vec![owned(CONJUNCTIONS), owned(PREPOSITIONS), owned(ARTICLES)],
            suffixes: owned(SUFFIXES),
            min_stem: 2,
        }
    }
}

impl RuleSegmenter {
    pub fn segment(&self, word: &str) -> MorphSegmentation {
        let len = |s: &str| s.chars().count();
        let mut morphemes = Vec::new();
        let mut rest = word;
        for class in &self.prefix_classes {
            if let Some(p) = class.iter().find(|p| rest.starts_with(p.as_str()) && len(rest) - len(p) >= self.min_stem) {
                morphemes.push(p.clone());
                rest = &rest[p.len()..];
            }
        }
        let mut suffixes: Vec<&String> = self.suffixes.iter().collect();
        suffixes.sort_by_key(|s| std::cmp::Reverse(len(s)));
        let suffix = suffixes
            .into_iter()
            .find(|s| rest.ends_with(s.as_str()) && len(rest) - len(s) >= self.min_stem);
        match suffix {
            Some(s) => {
                morphemes.push(rest[..rest.len() - s.len()].to_string());
                morphemes.push(s.clone());
            }
            None => morphemes.push(rest.to_string()),
        }
        MorphSegmentation {
            word: word.to_string(),
            morphemes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmenterStage {
    Lookup(BTreeMap<String, Vec<String>>),
    Rules(RuleSegmenter),
}

/// A chain of segmentation stages tried in order. Words no stage handles are
/// kept as a single morpheme.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmenter {
    pub stages: Vec<SegmenterStage>,
}

impl Segmenter {
    pub fn single_morpheme() -> Self {
        Self { stages: Vec::new() }
    }

    pub fn rule_based() -> Self {
        Self {
            stages: vec![SegmenterStage::Rules(RuleSegmenter::default())],
        }
    }

    /// Lookup table first, then the default rules.
    pub fn lookup_table(table: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            stages: vec![SegmenterStage::Lookup(table), SegmenterStage::Rules(RuleSegmenter::default())],
        }
    }

    /// Lookup table only; unknown words stay whole.
    pub fn lookup_only(table: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            stages: vec![SegmenterStage::Lookup(table)],
        }
    }

    pub fn is_single_morpheme(&self) -> bool {
        self.stages.is_empty()
    }

    /// Short description stored in tokenizer files, e.g. `lookup_table,rule_based`.
    pub fn describe(&self) -> String {
        if self.stages.is_empty() {
            return "single_morpheme".to_string();
        }
        self.stages
            .iter()
            .map(|s| match s {
                SegmenterStage::Lookup(_) => "lookup_table",
                SegmenterStage::Rules(_) => "rule_based",
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn lookup(&self) -> Option<&BTreeMap<String, Vec<String>>> {
        self.stages.iter().find_map(|s| match s {
            SegmenterStage::Lookup(t) => Some(t),
            SegmenterStage::Rules(_) => None,
        })
    }

    pub fn segment(&self, word: &str) -> MorphSegmentation {
        for stage in &self.stages {
            match stage {
                SegmenterStage::Lookup(table) => {
                    if let Some(m) = table.get(word) {
                        return MorphSegmentation {
                            word: word.to_string(),
                            morphemes: m.clone(),
                        };
                    }
                }
                SegmenterStage::Rules(rules) => return rules.segment(word),
            }
        }
        MorphSegmentation::single(word)
    }
}

/// Parses `word<TAB>m1 m2 ...` lines; `#` starts a comment line.
pub fn parse_segmentation_table(text: &str) -> Result<BTreeMap<String, Vec<String>>, TokenizerError> {
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let bad = |message: &str| TokenizerError::Format {
            line: i + 1,
            message: message.to_string(),
        };
        let (word, morphs) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>morphemes"))?;
        let morphemes: Vec<String> = morphs.split_whitespace().map(str::to_string).collect();
        let seg = MorphSegmentation::new(word, morphemes).map_err(|_| bad("morphemes do not concatenate to the word"))?;
        table.insert(seg.word, seg.morphemes);
    }
    Ok(table)
}

pub fn load_segmentation_table(path: &Path) -> Result<BTreeMap<String, Vec<String>>, TokenizerError> {
    let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_segmentation_table(&text)
}
