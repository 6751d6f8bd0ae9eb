//! Character classes and the Arabic-aware word splitter shared by the quality
//! signals and the n-gram language model.

use crate::record::is_arabic_diacritic;

/// Punctuation: ASCII punctuation other than `#`, plus Arabic and typographic marks.
pub fn is_punctuation(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '#')
        || matches!(
            c,
            '،' | '؛' | '؟' | '«' | '»' | '۔' | '٪' | '٫' | '٬' | '؍' | '‹' | '›' | '“' | '”' | '‘'
                | '’' | '„' | '–' | '—' | '¡' | '¿'
        )
}

/// Symbols counted by `symbol_to_word_ratio`: hash, the ellipsis character and
/// decorative marks common in Arabic web text.
pub fn is_symbol(c: char) -> bool {
    matches!(
        c,
        '#' | '…' | '۞' | '۩' | '۝' | '﴾' | '﴿' | '؎' | '؏' | '★' | '☆' | '✿' | '❀' | '❖'
    )
}

pub fn is_bullet(c: char) -> bool {
    matches!(
        c,
        '•' | '‣' | '◦' | '▪' | '▫' | '●' | '○' | '■' | '□' | '-' | '*' | '·' | '⁃' | '➢' | '►'
            | '▶' | '✓' | '✔' | '→'
    )
}

/// Sentence terminators, including the Arabic question mark and full stop.
pub fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '؟' | '۔')
}

pub fn is_word_separator(c: char) -> bool {
    c.is_whitespace() || is_punctuation(c) || is_symbol(c)
}

/// A letter for counting purposes: alphabetic and not an Arabic diacritic.
pub fn is_letter(c: char) -> bool {
    c.is_alphabetic() && !is_arabic_diacritic(c)
}

/// Splits on whitespace, punctuation and symbols. Arabic-Indic digits and
/// diacritics stay inside words.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(is_word_separator).filter(|w| !w.is_empty())
}

/// Character length of a word with diacritics excluded.
pub fn word_len(word: &str) -> usize {
    word.chars().filter(|&c| !is_arabic_diacritic(c)).count()
}
