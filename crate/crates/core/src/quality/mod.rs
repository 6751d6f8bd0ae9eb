//! Arabic-adapted syntactic quality signals, calibration histograms and
//! threshold policies.
//!
//! The toolkit computes a fixed set of 20 signals modelled on the RedPajama-V2
//! document signals. The exact signal list behind the original Arabic
//! pipeline is unpublished, so this set is a declared stand-in: every signal
//! family named there (sentence/word counts, symbol and punctuation ratios,
//! repetition, Arabic content) is covered, with Arabic punctuation, Arabic-Indic
//! digits and diacritics handled throughout.

mod histogram;
mod policy;
mod stopwords;
pub mod text;

pub use histogram::{
    bin_index, build_histogram, HistogramBuilder, HistogramCalibration, MinMaxScaling, NUM_BINS,
};
pub use policy::{apply_policy, Decision, FilterPolicy, Rule, POLICY_VERSION};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

use crate::record::is_arabic_letter;
use text::{is_bullet, is_letter, is_punctuation, is_sentence_end, is_symbol, word_len, words};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("unknown quality signal `{0}`")]
    UnknownSignal(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy file: {0}")]
    PolicyFormat(#[from] toml::de::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}

/// Declared value range of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalRange {
    /// In `[0, 1]`.
    Fraction,
    /// Non-negative integer.
    Count,
    /// Non-negative real, unbounded above.
    Ratio,
}

macro_rules! signals {
    ($($variant:ident => $name:literal, $range:ident;)*) => {
        /// The 20 quality signals, in report order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Signal { $($variant),* }

        impl Signal {
            pub const ALL: [Signal; 20] = [$(Signal::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Signal::$variant => $name),* }
            }

            pub fn range(self) -> SignalRange {
                match self { $(Signal::$variant => SignalRange::$range),* }
            }
        }

        impl FromStr for Signal {
            type Err = QualityError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Signal::$variant),)*
                    other => Err(QualityError::UnknownSignal(other.to_string())),
                }
            }
        }
    };
}

signals! {
    NumSentences => "num_sentences", Count;
    NumWords => "num_words", Count;
    MeanWordLength => "mean_word_length", Ratio;
    FracUniqueWords => "frac_unique_words", Fraction;
    SymbolToWordRatio => "symbol_to_word_ratio", Ratio;
    PunctuationToWordRatio => "punctuation_to_word_ratio", Ratio;
    FracLinesEndingEllipsis => "frac_lines_ending_ellipsis", Fraction;
    FracLinesStartingBullet => "frac_lines_starting_bullet", Fraction;
    FracCharsInDuplicateLines => "frac_chars_in_duplicate_lines", Fraction;
    FracCharsInTop2gram => "frac_chars_in_top_2gram", Fraction;
    FracCharsInTop3gram => "frac_chars_in_top_3gram", Fraction;
    FracCharsInTop4gram => "frac_chars_in_top_4gram", Fraction;
    FracCharsInDup5grams => "frac_chars_in_dup_5grams", Fraction;
    FracCharsInDup10grams => "frac_chars_in_dup_10grams", Fraction;
    FracNumericChars => "frac_numeric_chars", Fraction;
    FracWordsWithAlpha => "frac_words_with_alpha", Fraction;
    StopwordCount => "stopword_count", Count;
    DocCharLength => "doc_char_length", Count;
    LongestLineFraction => "longest_line_fraction", Fraction;
    ArabicFraction => "arabic_fraction", Fraction;
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All 20 signal scores for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySignalReport {
    values: [f64; 20],
}

impl QualitySignalReport {
    pub fn get(&self, signal: Signal) -> f64 {
        self.values[signal as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Signal, f64)> + '_ {
        Signal::ALL.iter().map(|&s| (s, self.get(s)))
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(s, v)| (s.name().to_string(), v)).collect()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        stopwords::ARABIC
            .iter()
            .chain(stopwords::ENGLISH)
            .copied()
            .collect()
    })
}

/// Computes every signal for `text` (expected cleaned and NFC-normalized).
///
/// Degenerate inputs are defined rather than rejected: counts are 0, ratios
/// with a zero denominator are 0, and `frac_unique_words` of a text without
/// words is 1.
pub fn compute_signals(text: &str) -> QualitySignalReport {
    let word_list: Vec<&str> = words(text).collect();
    let lower: Vec<String> = word_list.iter().map(|w| w.to_lowercase()).collect();
    let lens: Vec<usize> = word_list.iter().map(|w| word_len(w)).collect();
    let num_words = word_list.len();
    let total_word_chars: usize = lens.iter().sum();

    let mut v = [0.0; 20];
    let mut set = |s: Signal, x: f64| v[s as usize] = x;

    set(Signal::NumSentences, num_sentences(text) as f64);
    set(Signal::NumWords, num_words as f64);
    set(Signal::MeanWordLength, ratio(total_word_chars, num_words));

    let unique: HashSet<&str> = lower.iter().map(String::as_str).collect();
    set(
        Signal::FracUniqueWords,
        if num_words == 0 { 1.0 } else { ratio(unique.len(), num_words) },
    );

    let symbols = text.chars().filter(|&c| is_symbol(c)).count();
    let punct = text.chars().filter(|&c| is_punctuation(c)).count();
    set(Signal::SymbolToWordRatio, ratio(symbols, num_words));
    set(Signal::PunctuationToWordRatio, ratio(punct, num_words));

    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let ellipsis = lines
        .iter()
        .filter(|l| l.ends_with("...") || l.ends_with('…'))
        .count();
    let bullets = lines
        .iter()
        .filter(|l| l.chars().next().is_some_and(is_bullet))
        .count();
    set(Signal::FracLinesEndingEllipsis, ratio(ellipsis, lines.len()));
    set(Signal::FracLinesStartingBullet, ratio(bullets, lines.len()));
    set(Signal::FracCharsInDuplicateLines, duplicate_line_fraction(&lines));

    for (signal, n) in [
        (Signal::FracCharsInTop2gram, 2),
        (Signal::FracCharsInTop3gram, 3),
        (Signal::FracCharsInTop4gram, 4),
    ] {
        set(signal, top_ngram_fraction(&lower, &lens, total_word_chars, n));
    }
    for (signal, n) in [
        (Signal::FracCharsInDup5grams, 5),
        (Signal::FracCharsInDup10grams, 10),
    ] {
        set(signal, dup_ngram_fraction(&lower, &lens, total_word_chars, n));
    }

    let non_space = text.chars().filter(|c| !c.is_whitespace()).count();
    let numeric = text.chars().filter(|c| c.is_numeric()).count();
    set(Signal::FracNumericChars, ratio(numeric, non_space));

    let with_alpha = word_list
        .iter()
        .filter(|w| w.chars().any(is_letter))
        .count();
    set(Signal::FracWordsWithAlpha, ratio(with_alpha, num_words));

    let stops = stopword_set();
    let stop_count = lower.iter().filter(|w| stops.contains(w.as_str())).count();
    set(Signal::StopwordCount, stop_count as f64);

    let doc_chars = text.chars().count();
    set(Signal::DocCharLength, doc_chars as f64);
    let longest = text.split('\n').map(|l| l.chars().count()).max().unwrap_or(0);
    set(Signal::LongestLineFraction, ratio(longest, doc_chars));
    set(Signal::ArabicFraction, arabic_fraction(text));

    QualitySignalReport { values: v }
}

fn num_sentences(text: &str) -> usize {
    text.split(is_sentence_end)
        .filter(|seg| seg.chars().any(char::is_alphanumeric))
        .count()
}

/// Characters in repeated occurrences of a line (every occurrence after the
/// first) over characters in all non-empty lines.
fn duplicate_line_fraction(lines: &[&str]) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0;
    let mut dup = 0;
    for line in lines {
        let n = line.chars().count();
        total += n;
        if !seen.insert(*line) {
            dup += n;
        }
    }
    ratio(dup, total)
}

/// Characters of words covered by the most frequent repeated word n-gram.
/// Ties prefer the longer n-gram (in characters), then the earliest.
fn top_ngram_fraction(words: &[String], lens: &[usize], total: usize, n: usize) -> f64 {
    if words.len() < n || total == 0 {
        return 0.0;
    }
    let mut stats: HashMap<&[String], (usize, usize)> = HashMap::new();
    for (pos, gram) in words.windows(n).enumerate() {
        stats.entry(gram).or_insert((0, pos)).0 += 1;
    }
    let best = stats
        .iter()
        .filter(|(_, &(count, _))| count >= 2)
        .max_by(|(_, &(ca, fa)), (_, &(cb, fb))| {
            let la: usize = lens[fa..fa + n].iter().sum();
            let lb: usize = lens[fb..fb + n].iter().sum();
            ca.cmp(&cb).then(la.cmp(&lb)).then(fb.cmp(&fa))
        });
    let Some((gram, _)) = best else {
        return 0.0;
    };
    let mut covered = vec![false; words.len()];
    for (pos, window) in words.windows(n).enumerate() {
        if window == *gram {
            covered[pos..pos + n].iter_mut().for_each(|c| *c = true);
        }
    }
    ratio(covered_chars(&covered, lens), total)
}

/// Characters of words covered by any word n-gram occurring at least twice.
fn dup_ngram_fraction(words: &[String], lens: &[usize], total: usize, n: usize) -> f64 {
    if words.len() < n || total == 0 {
        return 0.0;
    }
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for gram in words.windows(n) {
        *counts.entry(gram).or_default() += 1;
    }
    let mut covered = vec![false; words.len()];
    for (pos, gram) in words.windows(n).enumerate() {
        if counts[gram] >= 2 {
            covered[pos..pos + n].iter_mut().for_each(|c| *c = true);
        }
    }
    ratio(covered_chars(&covered, lens), total)
}

fn covered_chars(covered: &[bool], lens: &[usize]) -> usize {
    covered
        .iter()
        .zip(lens)
        .filter(|(c, _)| **c)
        .map(|(_, l)| l)
        .sum()
}

/// Fraction of letters that are Arabic; 0 when the text has no letters.
pub fn arabic_fraction(text: &str) -> f64 {
    let (arabic, letters) = text
        .chars()
        .filter(|&c| is_letter(c))
        .fold((0, 0), |(a, l), c| (a + usize::from(is_arabic_letter(c)), l + 1));
    ratio(arabic, letters)
}

/// C4's original paragraph rule: three paragraphs of 200+ characters.
pub const C4_PARAGRAPHS: (usize, usize) = (200, 3);
/// Relaxed default for Arabic: one paragraph of 200+ characters suffices.
pub const ARABIC_PARAGRAPHS: (usize, usize) = (200, 1);

/// True iff at least `min_paragraphs` blank-line-delimited paragraphs have
/// `min_chars` or more characters (after trimming).
pub fn min_long_paragraphs(text: &str, min_chars: usize, min_paragraphs: usize) -> bool {
    let mut long = 0;
    let mut current = 0usize;
    let mut in_paragraph = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if in_paragraph && current >= min_chars {
                long += 1;
            }
            current = 0;
            in_paragraph = false;
        } else {
            // lines of one paragraph are joined by a single newline character
            current += trimmed.chars().count() + usize::from(in_paragraph);
            in_paragraph = true;
        }
    }
    if in_paragraph && current >= min_chars {
        long += 1;
    }
    min_paragraphs > 0 && long >= min_paragraphs
}
