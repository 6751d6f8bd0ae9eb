use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde::Serialize;

use super::{reserved_token, MergeRule, Mode, Tokenizer, TokenizerError};

/// Vocabulary sizes must be a multiple of this unless explicitly overridden.
pub const VOCAB_MULTIPLE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CombineReport {
    pub merges_from_a: usize,
    pub merges_from_b: usize,
    pub duplicate_merges: usize,
    pub pruned_merges: usize,
    /// Reserved ids added to fill the target when the union is smaller.
    pub extra_reserved: usize,
}

struct Pending {
    left: String,
    right: String,
    output: String,
    freq: u64,
}

/// Merges two tokenizers into one of exactly `target` ids.
///
/// Specials keep `a`'s order followed by new ones from `b`. The alphabet is
/// the sorted union. Merges of `a` come first in rank order, then the merges
/// of `b` whose output is not already present. If the union is too large,
/// leaf merges (outputs no other merge consumes) are removed lowest frequency
/// first, later rank first on ties, so every remaining merge still has its
/// inputs. If it is too small, the reserved block grows.
pub fn combine_vocabs(
    a: &Tokenizer,
    b: &Tokenizer,
    target: usize,
    reserved: usize,
    allow_any_size: bool,
) -> Result<(Tokenizer, CombineReport), TokenizerError> {
    if !allow_any_size && !target.is_multiple_of(VOCAB_MULTIPLE) {
        return Err(TokenizerError::NotMultiple(target));
    }
    let mut specials: Vec<String> = a.specials().to_vec();
    for s in b.specials() {
        if !specials.contains(s) {
            specials.push(s.clone());
        }
    }
    let special_set: HashSet<&str> = specials.iter().map(String::as_str).collect();
    let alphabet: Vec<String> = a
        .alphabet()
        .iter()
        .chain(b.alphabet())
        .filter(|t| !special_set.contains(t.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let base = specials.len() + alphabet.len();
    let minimum = base + reserved;
    if target < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: target,
            minimum,
        });
    }
    let budget = target - minimum;

    let mut present: HashSet<String> = specials.iter().chain(&alphabet).cloned().collect();
    let mut pending: Vec<Pending> = Vec::new();
    let mut from = [0usize; 2];
    let mut duplicates = 0;
    for (src, tok) in [a, b].into_iter().enumerate() {
        for m in tok.merges() {
            let output = tok.tokens[m.output as usize].clone();
            if !present.insert(output.clone()) {
                duplicates += 1;
                continue;
            }
            from[src] += 1;
            pending.push(Pending {
                left: tok.tokens[m.left as usize].clone(),
                right: tok.tokens[m.right as usize].clone(),
                output,
                freq: m.freq,
            });
        }
    }

    let producer: HashMap<&str, usize> = pending.iter().enumerate().map(|(i, p)| (p.output.as_str(), i)).collect();
    let inputs: Vec<[Option<usize>; 2]> = pending
        .iter()
        .map(|p| [producer.get(p.left.as_str()).copied(), producer.get(p.right.as_str()).copied()])
        .collect();
    let mut uses = vec![0usize; pending.len()];
    for ins in &inputs {
        for j in ins.iter().flatten() {
            uses[*j] += 1;
        }
    }

    let mut removed = vec![false; pending.len()];
    let excess = pending.len().saturating_sub(budget);
    let mut heap: BinaryHeap<Reverse<(u64, Reverse<usize>)>> = (0..pending.len())
        .filter(|&i| uses[i] == 0)
        .map(|i| Reverse((pending[i].freq, Reverse(i))))
        .collect();
    let mut pruned = 0;
    while pruned < excess {
        let Reverse((_, Reverse(i))) = heap.pop().expect("a merge DAG always has a leaf");
        removed[i] = true;
        pruned += 1;
        for j in inputs[i].iter().flatten() {
            uses[*j] -= 1;
            if uses[*j] == 0 {
                heap.push(Reverse((pending[*j].freq, Reverse(*j))));
            }
        }
    }

    let kept: Vec<&Pending> = pending.iter().zip(&removed).filter(|(_, r)| !**r).map(|(p, _)| p).collect();
    let extra_reserved = budget - kept.len();
    let mut tokens: Vec<String> = specials.iter().chain(&alphabet).cloned().collect();
    let mut index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    let mut merges = Vec::with_capacity(kept.len());
    for p in kept {
        let output = tokens.len() as u32;
        merges.push(MergeRule {
            left: index[&p.left],
            right: index[&p.right],
            output,
            freq: p.freq,
        });
        index.insert(p.output.clone(), output);
        tokens.push(p.output.clone());
    }
    let total_reserved = reserved + extra_reserved;
    tokens.extend((0..total_reserved).map(reserved_token));

    let (mode, segmenter) = if a.mode == Mode::Morph {
        (Mode::Morph, a.segmenter.clone())
    } else if b.mode == Mode::Morph {
        (Mode::Morph, b.segmenter.clone())
    } else {
        (Mode::Vanilla, a.segmenter.clone())
    };
    let tok = Tokenizer::assemble(mode, tokens, specials.len(), alphabet.len(), merges, total_reserved, segmenter);
    tok.check_invariants()?;
    let report = CombineReport {
        merges_from_a: from[0],
        merges_from_b: from[1],
        duplicate_merges: duplicates,
        pruned_merges: pruned,
        extra_reserved,
    };
    Ok((tok, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{train_bpe, TrainConfig};

    fn tok(text: &str, size: usize) -> Tokenizer {
        train_bpe([text], &TrainConfig::new(size)).unwrap().0
    }

    #[test]
    fn combining_with_itself_is_identity() {
        let t = tok("low lower lowest newer wider new", 50);
        let (c, report) = combine_vocabs(&t, &t, t.vocab_size(), 0, true).unwrap();
        assert_eq!(c, t);
        assert_eq!(report.duplicate_merges, t.merges().len());
    }

    #[test]
    fn exact_size_with_pruning_and_padding() {
        let a = tok("low lower lowest newer wider new", 60);
        let b = tok("كتب الكتاب كاتب مكتوب يكتبون", 70);
        let base = 4 + 9 + 2 * 10 + 2 * 9;
        assert!(matches!(combine_vocabs(&a, &b, base + 1, 2, true), Err(TokenizerError::VocabTooSmall { .. })));
        for target in [base + 2, base + 7, 90, 200] {
            let (c, _) = combine_vocabs(&a, &b, target, 2, true).unwrap();
            assert_eq!(c.vocab_size(), target);
            c.check_invariants().unwrap();
            assert!(c.num_reserved() >= 2);
        }
    }

    #[test]
    fn pruning_removes_leaves_lowest_frequency_first() {
        let a = tok("aaaa aaaa bc", 40);
        let (c, report) = combine_vocabs(&a, &a, a.vocab_size() - 1, 0, true).unwrap();
        assert_eq!(report.pruned_merges, 1);
        let kept: HashSet<&str> = c.tokens().iter().map(String::as_str).collect();
        let dropped: Vec<&MergeRule> = a.merges().iter().filter(|m| !kept.contains(a.tokens[m.output as usize].as_str())).collect();
        assert_eq!(dropped.len(), 1);
        let min_leaf = a
            .merges()
            .iter()
            .filter(|m| a.merges().iter().all(|n| n.left != m.output && n.right != m.output))
            .map(|m| m.freq)
            .min()
            .unwrap();
        assert_eq!(dropped[0].freq, min_leaf);
    }

    #[test]
    fn size_checks() {
        let a = tok("abc", 30);
        assert!(matches!(combine_vocabs(&a, &a, 1000, 0, false), Err(TokenizerError::NotMultiple(1000))));
        assert!(matches!(combine_vocabs(&a, &a, 5, 0, true), Err(TokenizerError::VocabTooSmall { .. })));
        assert_eq!(combine_vocabs(&a, &a, 1024, 8, false).unwrap().0.vocab_size(), 1024);
    }
}
