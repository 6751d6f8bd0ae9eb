use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{lm_sentences, Entry, LmConfig, LmError, NgramLm, Smoothing, BOS, BOS_ID, EOS, EOS_ID, UNK, UNK_ID};
use crate::record::Record;

type Counts = Vec<HashMap<Vec<u32>, u64>>;

const STUPID_BACKOFF: f64 = 0.4;

/// Modified Kneser-Ney discounts for counts 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// True when the closed-form estimate was invalid and the fixed
    /// 0.5 / 1.0 / 1.5 set was used instead.
    pub fallback: bool,
}

impl Discounts {
    const FALLBACK: Discounts = Discounts {
        d1: 0.5,
        d2: 1.0,
        d3: 1.5,
        fallback: true,
    };

    /// Estimates from counts-of-counts `n[k-1]` = number of n-grams seen k times.
    pub fn estimate(n: [u64; 4]) -> Self {
        let [n1, n2, n3, n4] = n.map(|x| x as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = Discounts {
            d1: 1.0 - 2.0 * y * n2 / n1,
            d2: 2.0 - 3.0 * y * n3 / n2,
            d3: 3.0 - 4.0 * y * n4 / n3,
            fallback: false,
        };
        let ok = [(d.d1, 1.0), (d.d2, 2.0), (d.d3, 3.0)]
            .iter()
            .all(|&(v, k)| v.is_finite() && v > 0.0 && v < k);
        if ok {
            d
        } else {
            Self::FALLBACK
        }
    }

    pub fn get(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }
}

pub fn train_lm<'a, I>(records: I, config: &LmConfig) -> Result<NgramLm, LmError>
where
    I: IntoIterator<Item = &'a Record>,
{
    train_lm_texts(records.into_iter().map(|r| r.text.as_str()), config)
}

pub fn train_lm_texts<I, S>(texts: I, config: &LmConfig) -> Result<NgramLm, LmError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if config.order < 1 {
        return Err(LmError::InvalidOrder);
    }
    let sentences: Vec<Vec<String>> = texts
        .into_iter()
        .flat_map(|t| lm_sentences(t.as_ref()).collect::<Vec<_>>())
        .collect();
    if sentences.is_empty() {
        return Err(LmError::EmptyCorpus);
    }

    let (vocab, index) = build_vocab(&sentences, config.vocab_cap);
    let order = config.order;
    let raw: Counts = sentences
        .par_iter()
        .fold(
            || vec![HashMap::new(); order],
            |mut acc: Counts, s| {
                let mut seq = Vec::with_capacity(s.len() + 2);
                seq.push(BOS_ID);
                seq.extend(s.iter().map(|w| index.get(w.as_str()).copied().unwrap_or(UNK_ID)));
                seq.push(EOS_ID);
                for n in 1..=order {
                    for g in seq.windows(n) {
                        if n == 1 && g[0] == BOS_ID {
                            continue;
                        }
                        *acc[n - 1].entry(g.to_vec()).or_insert(0) += 1;
                    }
                }
                acc
            },
        )
        .reduce(|| vec![HashMap::new(); order], merge_counts);

    let mut lm = match config.smoothing {
        Smoothing::ModifiedKneserNey => estimate_kn(&raw, vocab, index, order),
        Smoothing::StupidBackoff => estimate_stupid(&raw, vocab, index, order),
    };
    if config.prune.iter().any(|&t| t > 0) {
        prune(&mut lm, &raw, &config.prune);
    }
    Ok(lm)
}

fn merge_counts(mut a: Counts, b: Counts) -> Counts {
    for (ta, tb) in a.iter_mut().zip(b) {
        for (k, v) in tb {
            *ta.entry(k).or_insert(0) += v;
        }
    }
    a
}

/// `<unk> <s> </s>` then the `cap` most frequent words in lexicographic order.
fn build_vocab(sentences: &[Vec<String>], cap: usize) -> (Vec<String>, HashMap<String, u32>) {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for w in sentences.iter().flatten() {
        *freq.entry(w.as_str()).or_insert(0) += 1;
    }
    let mut by_freq: Vec<(&str, u64)> = freq.into_iter().collect();
    by_freq.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    by_freq.truncate(cap);
    let mut kept: Vec<&str> = by_freq.into_iter().map(|(w, _)| w).collect();
    kept.sort_unstable();
    let vocab: Vec<String> = [UNK, BOS, EOS]
        .into_iter()
        .chain(kept)
        .map(str::to_string)
        .collect();
    let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
    (vocab, index)
}

/// Raw counts at the top order and for n-grams opening a sentence; number of
/// distinct left extensions otherwise.
fn adjusted_counts(raw: &Counts) -> Counts {
    let order = raw.len();
    let mut adj: Counts = vec![HashMap::new(); order];
    adj[order - 1] = raw[order - 1].clone();
    for n in (1..order).rev() {
        let mut cont: HashMap<&[u32], u64> = HashMap::new();
        for g in raw[n].keys() {
            *cont.entry(&g[1..]).or_insert(0) += 1;
        }
        for (g, &c) in &raw[n - 1] {
            let a = if g[0] == BOS_ID {
                c
            } else {
                cont.get(g.as_slice()).copied().unwrap_or(0)
            };
            adj[n - 1].insert(g.clone(), a);
        }
    }
    adj
}

fn counts_of_counts(table: &HashMap<Vec<u32>, u64>) -> [u64; 4] {
    let mut n = [0u64; 4];
    for &c in table.values() {
        if (1..=4).contains(&c) {
            n[c as usize - 1] += 1;
        }
    }
    n
}

#[derive(Default, Clone, Copy)]
struct ContextStats {
    total: u64,
    n: [u64; 3],
}

fn estimate_kn(raw: &Counts, vocab: Vec<String>, index: HashMap<String, u32>, order: usize) -> NgramLm {
    let adj = adjusted_counts(raw);
    let discounts: Vec<Discounts> = adj.iter().map(|t| Discounts::estimate(counts_of_counts(t))).collect();

    let mut lm = NgramLm {
        order: 1,
        smoothing: Smoothing::ModifiedKneserNey,
        vocab,
        index,
        tables: Vec::with_capacity(order),
    };

    // unigrams interpolate with the uniform distribution over predictable words
    let d = discounts[0];
    let total: u64 = adj[0].values().sum();
    let mut n = [0u64; 3];
    for &a in adj[0].values().filter(|&&a| a > 0) {
        n[(a.min(3) - 1) as usize] += 1;
    }
    let leftover = (d.d1 * n[0] as f64 + d.d2 * n[1] as f64 + d.d3 * n[2] as f64) / total as f64;
    let predictable = (lm.vocab.len() - 1) as f64;
    let mut unigrams = HashMap::with_capacity(lm.vocab.len());
    for w in 0..lm.vocab.len() as u32 {
        let prob = if w == BOS_ID {
            0.0
        } else {
            let a = adj[0].get(&vec![w]).copied().unwrap_or(0);
            (a as f64 - d.get(a)) / total as f64 + leftover / predictable
        };
        unigrams.insert(vec![w], Entry { prob, backoff: 1.0 });
    }
    lm.tables.push(unigrams);

    for n in 2..=order {
        let d = discounts[n - 1];
        let mut stats: HashMap<&[u32], ContextStats> = HashMap::new();
        for (g, &a) in &adj[n - 1] {
            let s = stats.entry(&g[..n - 1]).or_default();
            s.total += a;
            if a >= 1 {
                s.n[(a.min(3) - 1) as usize] += 1;
            }
        }
        let gamma = |s: &ContextStats| {
            (d.d1 * s.n[0] as f64 + d.d2 * s.n[1] as f64 + d.d3 * s.n[2] as f64) / s.total as f64
        };
        let mut table = HashMap::with_capacity(adj[n - 1].len());
        for (g, &a) in &adj[n - 1] {
            let s = &stats[&g[..n - 1]];
            let w = g[n - 1];
            let lower = lm.prob_ids(&g[1..n - 1], w);
            let prob = (a as f64 - d.get(a)) / s.total as f64 + gamma(s) * lower;
            table.insert(g.clone(), Entry { prob, backoff: 1.0 });
        }
        for (h, s) in &stats {
            if let Some(e) = lm.tables[n - 2].get_mut(*h) {
                e.backoff = gamma(s);
            }
        }
        lm.tables.push(table);
        lm.order = n;
    }
    lm
}

fn estimate_stupid(raw: &Counts, vocab: Vec<String>, index: HashMap<String, u32>, order: usize) -> NgramLm {
    let total: u64 = raw[0].values().sum();
    let mut unigrams = HashMap::with_capacity(vocab.len());
    for w in 0..vocab.len() as u32 {
        let c = raw[0].get(&vec![w]).copied().unwrap_or(0);
        let prob = match (w, c) {
            (BOS_ID, _) => 0.0,
            (_, 0) => 0.5 / total as f64,
            _ => c as f64 / total as f64,
        };
        unigrams.insert(vec![w], Entry { prob, backoff: STUPID_BACKOFF });
    }
    let mut tables = vec![unigrams];
    for n in 2..=order {
        let mut ctx_total: HashMap<&[u32], u64> = HashMap::new();
        for (g, &c) in &raw[n - 1] {
            *ctx_total.entry(&g[..n - 1]).or_insert(0) += c;
        }
        let backoff = if n == order { 1.0 } else { STUPID_BACKOFF };
        let table = raw[n - 1]
            .iter()
            .map(|(g, &c)| {
                let prob = c as f64 / ctx_total[&g[..n - 1]] as f64;
                (g.clone(), Entry { prob, backoff })
            })
            .collect();
        tables.push(table);
    }
    if order > 1 {
        for e in tables[order - 1].values_mut() {
            e.backoff = 1.0;
        }
    }
    NgramLm {
        order,
        smoothing: Smoothing::StupidBackoff,
        vocab,
        index,
        tables,
    }
}

/// Removes n-grams (order >= 2) whose raw count is at most the threshold for
/// their order. Kneser-Ney backoffs are then recomputed so every context
/// still sums to one.
fn prune(lm: &mut NgramLm, raw: &Counts, thresholds: &[u64]) {
    for n in 2..=lm.order {
        let Some(&t) = thresholds.get(n - 2) else { break };
        if t == 0 {
            continue;
        }
        lm.tables[n - 1].retain(|g, _| raw[n - 1].get(g).is_some_and(|&c| c > t));
    }
    if lm.smoothing != Smoothing::ModifiedKneserNey {
        return;
    }
    for n in 2..=lm.order {
        let mut by_ctx: HashMap<Vec<u32>, Vec<(u32, f64)>> = HashMap::new();
        for (g, e) in &lm.tables[n - 1] {
            by_ctx.entry(g[..n - 1].to_vec()).or_default().push((g[n - 1], e.prob));
        }
        for e in lm.tables[n - 2].values_mut() {
            e.backoff = 1.0;
        }
        let mut updates = Vec::with_capacity(by_ctx.len());
        for (h, mut ws) in by_ctx {
            ws.sort_unstable_by_key(|&(w, _)| w);
            let mut seen = 0.0;
            let mut lower = 0.0;
            for &(w, p) in &ws {
                seen += p;
                lower += lm.prob_ids(&h[1..], w);
            }
            let b = if lower < 1.0 { ((1.0 - seen) / (1.0 - lower)).max(0.0) } else { 1.0 };
            updates.push((h, b));
        }
        for (h, b) in updates {
            if let Some(e) = lm.tables[n - 2].get_mut(&h) {
                e.backoff = b;
            }
        }
    }
}
