use serde::{Deserialize, Serialize};

const TATWEEL: char = '\u{0640}';

/// Harakat U+064B..=U+0652 plus the superscript alef U+0670.
pub fn is_arabic_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

/// Letters written in Arabic script but specific to Farsi/Urdu orthography
/// (پ چ ژ گ). They are kept by normalization and do not count as Arabic.
pub fn is_farsi_specific(c: char) -> bool {
    matches!(c, '\u{067E}' | '\u{0686}' | '\u{0698}' | '\u{06AF}')
}

/// Alphabetic code point in one of the Arabic blocks, excluding diacritics
/// and Farsi-specific letters.
pub fn is_arabic_letter(c: char) -> bool {
    let in_block = matches!(c,
        '\u{0600}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08FF}'
        | '\u{FB50}'..='\u{FDFF}'
        | '\u{FE70}'..='\u{FEFF}');
    in_block && c.is_alphabetic() && !is_arabic_diacritic(c) && !is_farsi_specific(c)
}

/// Toggles for [`normalize_arabic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationOptions {
    pub strip_diacritics: bool,
    pub strip_tatweel: bool,
    /// Maps Farsi kaf/yeh (ک ی) to their Arabic forms (ك ي).
    pub map_farsi_variants: bool,
    /// Arabic-Indic and extended Arabic-Indic digits to ASCII. Off by default
    /// because the digit script is itself a quality signal.
    pub normalize_digits: bool,
    /// Collapses runs of horizontal whitespace to one space; newlines are kept.
    pub collapse_whitespace: bool,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        Self {
            strip_diacritics: true,
            strip_tatweel: true,
            map_farsi_variants: true,
            normalize_digits: false,
            collapse_whitespace: true,
        }
    }
}

impl NormalizationOptions {
    pub fn none() -> Self {
        Self {
            strip_diacritics: false,
            strip_tatweel: false,
            map_farsi_variants: false,
            normalize_digits: false,
            collapse_whitespace: false,
        }
    }
}

pub fn normalize_arabic(text: &str, opts: &NormalizationOptions) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_blank_run = false;
    for c in text.chars() {
        if opts.strip_diacritics && is_arabic_diacritic(c) {
            continue;
        }
        if opts.strip_tatweel && c == TATWEEL {
            continue;
        }
        if opts.collapse_whitespace && c != '\n' && c.is_whitespace() {
            if !in_blank_run {
                out.push(' ');
                in_blank_run = true;
            }
            continue;
        }
        in_blank_run = false;
        let c = match c {
            '\u{06A9}' if opts.map_farsi_variants => '\u{0643}',
            '\u{06CC}' if opts.map_farsi_variants => '\u{064A}',
            '\u{0660}'..='\u{0669}' if opts.normalize_digits => {
                char::from(b'0' + (c as u32 - 0x0660) as u8)
            }
            '\u{06F0}'..='\u{06F9}' if opts.normalize_digits => {
                char::from(b'0' + (c as u32 - 0x06F0) as u8)
            }
            other => other,
        };
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(s: &str) -> String {
        normalize_arabic(s, &NormalizationOptions::default())
    }

    #[test]
    fn strips_diacritics() {
        assert_eq!(norm("كِتَاب"), "كتاب");
        assert_eq!(norm("وَبِكِتَابِهِمْ"), "وبكتابهم");
    }

    #[test]
    fn strips_tatweel() {
        assert_eq!(norm("كــتاب"), "كتاب");
    }

    #[test]
    fn farsi_variants() {
        assert_eq!(norm("کتابی"), "كتابي");
        // پ چ ژ گ are kept verbatim
        assert_eq!(norm("پچژگ"), "پچژگ");
        assert!(is_farsi_specific('گ') && !is_arabic_letter('گ'));
    }

    #[test]
    fn digits_only_when_requested() {
        assert_eq!(norm("٢٠٢٤ ۱۲"), "٢٠٢٤ ۱۲");
        let opts = NormalizationOptions {
            normalize_digits: true,
            ..Default::default()
        };
        assert_eq!(normalize_arabic("٢٠٢٤ ۱۲", &opts), "2024 12");
    }

    #[test]
    fn whitespace_collapse_keeps_newlines() {
        assert_eq!(norm("a \t b\n\nc"), "a b\n\nc");
    }

    #[test]
    fn idempotent_on_random_arabic_strings() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pool: Vec<char> = ('\u{0600}'..='\u{06FF}')
            .chain(['\u{0640}', ' ', '\t', '\n', 'a', '\u{a0}'])
            .collect();
        for _ in 0..1000 {
            let len = rng.gen_range(0..60);
            let s: String = (0..len).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
            let once = norm(&s);
            assert_eq!(norm(&once), once, "input {s:?}");
        }
    }

    proptest! {
        #[test]
        fn all_flags_off_is_identity(s in any::<String>()) {
            prop_assert_eq!(normalize_arabic(&s, &NormalizationOptions::none()), s);
        }

        #[test]
        fn never_grows(s in "[\u{0600}-\u{06ff} \t\na-z]{0,50}", digits in any::<bool>()) {
            let opts = NormalizationOptions { normalize_digits: digits, ..Default::default() };
            let out = normalize_arabic(&s, &opts);
            prop_assert!(out.chars().count() <= s.chars().count());
            prop_assert_eq!(normalize_arabic(&out, &opts), out);
        }
    }
}
