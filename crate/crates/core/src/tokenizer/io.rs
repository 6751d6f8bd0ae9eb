//! Plain-text tokenizer file.
//!
//! ```text
//! corpusforge-tokenizer 1
//! mode morph
//! specials 4
//! alphabet 120
//! reserved 0
//! segmenter lookup_table,rule_based
//! rules {"prefix_classes":[...],"suffixes":[...],"min_stem":2}
//! [lookup]
//! word m1 m2
//! [vocab]
//! 0 <unk>
//! [merges]
//! 0 17 40 1234
//! ```
//!
//! Fields are tab-separated. Merge lines are `rank, left id, right id,
//! frequency`. Tokens and lookup entries escape `\`, tab, newline,
//! carriage return and space.

use std::collections::BTreeMap;
use std::path::Path;

use super::{MergeRule, Mode, RuleSegmenter, Segmenter, SegmenterStage, Tokenizer, TokenizerError};

const HEADER: &str = "corpusforge-tokenizer 1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match it.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            's' => ' ',
            _ => return None,
        });
    }
    Some(out)
}

impl Tokenizer {
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\n");
        s.push_str(&format!("mode\t{}\n", self.mode.as_str()));
        s.push_str(&format!("specials\t{}\n", self.num_specials));
        s.push_str(&format!("alphabet\t{}\n", self.alphabet_len));
        s.push_str(&format!("reserved\t{}\n", self.num_reserved));
        s.push_str(&format!("segmenter\t{}\n", self.segmenter.describe()));
        for stage in &self.segmenter.stages {
            if let SegmenterStage::Rules(r) = stage {
                s.push_str(&format!("rules\t{}\n", serde_json::to_string(r).expect("rules serialize")));
            }
        }
        if let Some(table) = self.segmenter.lookup() {
            s.push_str("[lookup]\n");
            for (w, ms) in table {
                let ms: Vec<String> = ms.iter().map(|m| escape(m)).collect();
                s.push_str(&format!("{}\t{}\n", escape(w), ms.join(" ")));
            }
        }
        s.push_str("[vocab]\n");
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(&format!("{i}\t{}\n", escape(t)));
        }
        s.push_str("[merges]\n");
        for (r, m) in self.merges.iter().enumerate() {
            s.push_str(&format!("{r}\t{}\t{}\t{}\n", m.left, m.right, m.freq));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Tokenizer, TokenizerError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let bad = |line: usize, message: &str| TokenizerError::Format {
            line,
            message: message.to_string(),
        };
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(bad(1, "missing tokenizer header")),
        }

        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut rules: Vec<RuleSegmenter> = Vec::new();
        let mut lookup: Option<BTreeMap<String, Vec<String>>> = None;
        let mut tokens: Vec<String> = Vec::new();
        let mut merges: Vec<MergeRule> = Vec::new();
        let mut section = "";
        let mut last_line = 1;

        for (n, line) in lines {
            last_line = n;
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name {
                    "lookup" => {
                        lookup = Some(BTreeMap::new());
                        "lookup"
                    }
                    "vocab" => "vocab",
                    "merges" => "merges",
                    _ => return Err(bad(n, "unknown section")),
                };
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match section {
                "" => {
                    let [key, value] = cols[..] else {
                        return Err(bad(n, "expected key<TAB>value"));
                    };
                    if key == "rules" {
                        rules.push(serde_json::from_str(value).map_err(|e| bad(n, &e.to_string()))?);
                    } else {
                        fields.insert(key.to_string(), value.to_string());
                    }
                }
                "lookup" => {
                    let [word, morphs] = cols[..] else {
                        return Err(bad(n, "expected word<TAB>morphemes"));
                    };
                    let word = unescape(word).ok_or_else(|| bad(n, "bad escape"))?;
                    let morphs = morphs
                        .split(' ')
                        .map(unescape)
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad(n, "bad escape"))?;
                    if morphs.concat() != word || morphs.iter().any(String::is_empty) {
                        return Err(bad(n, "morphemes do not concatenate to the word"));
                    }
                    lookup.as_mut().unwrap().insert(word, morphs);
                }
                "vocab" => {
                    let [id, tok] = cols[..] else {
                        return Err(bad(n, "expected id<TAB>token"));
                    };
                    if id.parse::<usize>().ok() != Some(tokens.len()) {
                        return Err(bad(n, "vocab ids must be dense and in order"));
                    }
                    tokens.push(unescape(tok).ok_or_else(|| bad(n, "bad escape"))?);
                }
                _ => {
                    let nums: Vec<u64> = cols
                        .iter()
                        .map(|c| c.parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(n, "merge fields must be integers"))?;
                    let [rank, left, right, freq] = nums[..] else {
                        return Err(bad(n, "expected rank<TAB>left<TAB>right<TAB>freq"));
                    };
                    if rank as usize != merges.len() {
                        return Err(bad(n, "merge ranks must be dense and in order"));
                    }
                    merges.push(MergeRule {
                        left: left as u32,
                        right: right as u32,
                        output: 0,
                        freq,
                    });
                }
            }
        }

        let num = |key: &str| -> Result<usize, TokenizerError> {
            fields
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(last_line, &format!("missing or invalid {key}")))
        };
        let mode = match fields.get("mode").map(String::as_str) {
            Some("vanilla") => Mode::Vanilla,
            Some("morph") => Mode::Morph,
            _ => return Err(bad(last_line, "missing or invalid mode")),
        };
        let num_specials = num("specials")?;
        let alphabet_len = num("alphabet")?;
        let num_reserved = num("reserved")?;
        let first_merge = num_specials + alphabet_len;
        for (r, m) in merges.iter_mut().enumerate() {
            m.output = (first_merge + r) as u32;
            if m.left as usize >= tokens.len() || m.right as usize >= tokens.len() {
                return Err(TokenizerError::IdOutOfRange(m.left.max(m.right)));
            }
        }

        let mut stages = Vec::new();
        let description = fields.get("segmenter").map(String::as_str).unwrap_or("single_morpheme");
        let mut rules = rules.into_iter();
        for part in description.split(',') {
            match part {
                "single_morpheme" => {}
                "lookup_table" => stages.push(SegmenterStage::Lookup(lookup.take().unwrap_or_default())),
                "rule_based" => stages.push(SegmenterStage::Rules(rules.next().unwrap_or_default())),
                _ => return Err(bad(last_line, "unknown segmenter stage")),
            }
        }

        let tok = Tokenizer::assemble(
            mode,
            tokens,
            num_specials,
            alphabet_len,
            merges,
            num_reserved,
            Segmenter { stages },
        );
        tok.check_invariants()?;
        Ok(tok)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_text()).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Tokenizer, TokenizerError> {
        let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Tokenizer::from_text(&text)
    }
}
