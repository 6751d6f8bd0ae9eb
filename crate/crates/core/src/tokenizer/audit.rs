use serde::Serialize;

use super::{initial_symbols, MorphSegmentation, Mode, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BoundaryAudit {
    pub merges_checked: usize,
    /// Ranks of merges with at least one counted occurrence spanning a boundary.
    pub violating_merges: Vec<usize>,
    /// Counted occurrences that spanned a boundary, weighted by word count.
    pub crossing_occurrences: u64,
    /// Ranks whose recorded frequency differs from the replayed count.
    pub frequency_mismatches: Vec<usize>,
}

impl BoundaryAudit {
    pub fn is_clean(&self) -> bool {
        self.violating_merges.is_empty() && self.frequency_mismatches.is_empty()
    }
}

struct Sym {
    id: u32,
    start: usize,
    end: usize,
}

/// Replays the merge list over whole words against gold segmentations.
///
/// Every word starts as its characters with spans. At each merge all adjacent
/// windows equal to the pair are classified as inside a morpheme or spanning a
/// gold boundary. A morph tokenizer counts and merges inside windows only, a
/// vanilla one counts and merges all of them. A merge violates the boundary
/// rule if a counted window spans a boundary, or if its recorded training
/// frequency exceeds the inside count (so the trainer must have counted some
/// spanning occurrence). Recorded frequencies are compared with the replayed
/// counts, which agree when `corpus` holds the training word counts.
pub fn audit_boundaries(tok: &Tokenizer, corpus: &[(MorphSegmentation, u64)]) -> BoundaryAudit {
    let unk = tok.unk_id();
    let mut words: Vec<(Vec<Sym>, Vec<usize>, u64)> = corpus
        .iter()
        .map(|(seg, count)| {
            let syms = initial_symbols(&seg.word, true)
                .iter()
                .enumerate()
                .map(|(i, s)| Sym {
                    id: tok.id(s).unwrap_or(unk),
                    start: i,
                    end: i + 1,
                })
                .collect();
            (syms, seg.boundary_offsets(), *count)
        })
        .collect();

    let morph = tok.mode() == Mode::Morph;
    let mut audit = BoundaryAudit {
        merges_checked: tok.merges().len(),
        ..Default::default()
    };
    for (rank, m) in tok.merges().iter().enumerate() {
        let mut inside = 0u64;
        let mut crossing = 0u64;
        for (syms, bounds, count) in &words {
            for w in syms.windows(2) {
                if w[0].id == m.left && w[1].id == m.right {
                    if spans(bounds, w[0].start, w[1].end) {
                        crossing += count;
                    } else {
                        inside += count;
                    }
                }
            }
        }
        let counted = if morph { inside } else { inside + crossing };
        let counted_crossing = if morph { 0 } else { crossing };
        if counted_crossing > 0 || (morph && m.freq > inside) {
            audit.violating_merges.push(rank);
            audit.crossing_occurrences += counted_crossing.max(m.freq.saturating_sub(inside));
        }
        if counted != m.freq {
            audit.frequency_mismatches.push(rank);
        }

        for (syms, bounds, _) in &mut words {
            let mut merged = Vec::with_capacity(syms.len());
            let mut it = std::mem::take(syms).into_iter().peekable();
            while let Some(s) = it.next() {
                if let Some(next) = it.peek() {
                    if s.id == m.left && next.id == m.right && !(morph && spans(bounds, s.start, next.end)) {
                        let end = next.end;
                        it.next();
                        merged.push(Sym {
                            id: m.output,
                            start: s.start,
                            end,
                        });
                        continue;
                    }
                }
                merged.push(s);
            }
            *syms = merged;
        }
    }
    audit
}

fn spans(bounds: &[usize], start: usize, end: usize) -> bool {
    bounds.iter().any(|&b| start < b && b < end)
}
