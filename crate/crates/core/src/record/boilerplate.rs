use std::collections::{BTreeSet, HashMap, HashSet};

use super::Record;

/// Default fraction of a source's records a line must appear in to be boilerplate.
pub const DEFAULT_MIN_REPEAT: f64 = 0.5;

/// Finds lines repeated verbatim (after trimming) across records of one source.
///
/// A line is flagged when the number of distinct records containing it is at
/// least `min_repeat * records.len()`. Groups of fewer than two records yield
/// an empty set.
pub fn detect_source_boilerplate(records: &[Record], min_repeat: f64) -> BTreeSet<String> {
    if records.len() < 2 {
        return BTreeSet::new();
    }
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    for record in records {
        let lines: HashSet<&str> = record
            .text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        for line in lines {
            *doc_freq.entry(line).or_default() += 1;
        }
    }
    let total = records.len() as f64;
    doc_freq
        .into_iter()
        .filter(|&(_, n)| n as f64 / total >= min_repeat)
        .map(|(line, _)| line.to_string())
        .collect()
}

/// Removes flagged lines from `text`, collapsing any blank-line runs left behind.
pub fn strip_boilerplate(text: &str, lines: &BTreeSet<String>) -> String {
    if lines.is_empty() {
        return text.to_string();
    }
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| !lines.contains(l.trim()))
        .collect();
    let mut out = String::with_capacity(text.len());
    let mut blank_pending = false;
    for line in kept {
        if line.trim().is_empty() {
            blank_pending = !out.is_empty();
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank_pending { "\n\n" } else { "\n" });
        }
        blank_pending = false;
        out.push_str(line);
    }
    out
}
