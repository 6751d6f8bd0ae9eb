use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::rc::Rc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{initial_symbols, reserved_token, MergeRule, Mode, Segmenter, Tokenizer, TokenizerError, DEFAULT_SPECIALS, MARKER};

/// Arabic diacritics kept in every vocabulary even when training text has none.
fn diacritics() -> impl Iterator<Item = char> {
    ('\u{064B}'..='\u{0652}').chain(std::iter::once('\u{0670}'))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total ids: specials, alphabet, merges and reserved block.
    pub vocab_size: usize,
    pub specials: Vec<String>,
    pub reserved: usize,
    pub include_diacritics: bool,
    /// Exclude a pair outright if any occurrence crosses a morpheme boundary,
    /// instead of only leaving crossing occurrences uncounted.
    pub strict_boundaries: bool,
    pub min_frequency: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32_768,
            specials: DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect(),
            reserved: 0,
            include_diacritics: true,
            strict_boundaries: false,
            min_frequency: 1,
        }
    }
}

impl TrainConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub requested_vocab: usize,
    pub vocab_size: usize,
    pub alphabet: usize,
    pub merges: usize,
    pub warnings: Vec<String>,
}

pub fn train_bpe<I, S>(corpus: I, config: &TrainConfig) -> Result<(Tokenizer, TrainReport), TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Sync,
{
    train_tokenizer(corpus, Mode::Vanilla, &Segmenter::single_morpheme(), config)
}

pub fn train_morphbpe<I, S>(
    corpus: I,
    segmenter: &Segmenter,
    config: &TrainConfig,
) -> Result<(Tokenizer, TrainReport), TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Sync,
{
    train_tokenizer(corpus, Mode::Morph, segmenter, config)
}

pub fn train_tokenizer<I, S>(
    corpus: I,
    mode: Mode,
    segmenter: &Segmenter,
    config: &TrainConfig,
) -> Result<(Tokenizer, TrainReport), TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Sync,
{
    let texts: Vec<S> = corpus.into_iter().collect();
    let word_counts: HashMap<String, u64> = texts
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<String, u64>, t| {
            for w in t.as_ref().split_whitespace() {
                *acc.entry(w.to_string()).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut words: Vec<(String, u64)> = word_counts.into_iter().collect();
    words.sort_unstable();

    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    for (w, _) in &words {
        for c in w.chars() {
            alphabet.insert(c.to_string());
            alphabet.insert(format!("{MARKER}{c}"));
        }
    }
    if config.include_diacritics {
        alphabet.extend(diacritics().map(String::from));
    }
    let specials = &config.specials;
    for s in specials {
        alphabet.remove(s);
    }
    let minimum = specials.len() + alphabet.len() + config.reserved;
    if config.vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: config.vocab_size,
            minimum,
        });
    }
    let target_merges = config.vocab_size - minimum;

    let mut trainer = Trainer::new(specials.iter().cloned().chain(alphabet.iter().cloned()).collect());

    let mut unit_ids: HashMap<(String, bool), usize> = HashMap::new();
    let mut word_units: Vec<(Vec<usize>, u64)> = Vec::with_capacity(words.len());
    for (w, count) in &words {
        let morphemes = match mode {
            Mode::Morph => segmenter.segment(w).morphemes,
            Mode::Vanilla => vec![w.clone()],
        };
        let mut ids = Vec::with_capacity(morphemes.len());
        for (k, m) in morphemes.into_iter().enumerate() {
            let key = (m, k == 0);
            let u = match unit_ids.get(&key) {
                Some(&u) => u,
                None => {
                    let syms = initial_symbols(&key.0, key.1).iter().map(|s| trainer.index[s.as_str()]).collect();
                    let u = trainer.add_unit(syms);
                    unit_ids.insert(key, u);
                    u
                }
            };
            trainer.unit_count[u] += count;
            ids.push(u);
        }
        word_units.push((ids, *count));
    }
    if config.strict_boundaries && mode == Mode::Morph {
        trainer.enable_crossing(word_units);
    }
    trainer.init_pairs();

    let mut merges = Vec::with_capacity(target_merges);
    while merges.len() < target_merges {
        match trainer.next_merge(config.min_frequency) {
            Some(m) => merges.push(m),
            None => break,
        }
    }

    let mut warnings = Vec::new();
    if merges.len() < target_merges {
        let msg = format!(
            "no eligible pair left after {} merges; vocabulary has {} ids instead of {}",
            merges.len(),
            config.vocab_size - (target_merges - merges.len()),
            config.vocab_size
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut tokens: Vec<String> = trainer.tokens.iter().map(|t| t.to_string()).collect();
    tokens.extend((0..config.reserved).map(reserved_token));
    let seg = match mode {
        Mode::Morph => segmenter.clone(),
        Mode::Vanilla => Segmenter::single_morpheme(),
    };
    let tok = Tokenizer::assemble(mode, tokens, specials.len(), alphabet.len(), merges, config.reserved, seg);
    let report = TrainReport {
        requested_vocab: config.vocab_size,
        vocab_size: tok.vocab_size(),
        alphabet: alphabet.len(),
        merges: tok.merges().len(),
        warnings,
    };
    Ok((tok, report))
}

/// Heap entry: highest count first, then smallest (left, right) strings.
struct Candidate {
    count: u64,
    left: Rc<str>,
    right: Rc<str>,
    pair: (u32, u32),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

struct Crossing {
    words: Vec<(Vec<usize>, u64)>,
    unit_words: Vec<Vec<usize>>,
    counts: HashMap<(u32, u32), u64>,
}

/// Incremental pair counting over distinct units.
struct Trainer {
    tokens: Vec<Rc<str>>,
    index: HashMap<Rc<str>, u32>,
    units: Vec<Vec<u32>>,
    unit_count: Vec<u64>,
    pair_count: HashMap<(u32, u32), i64>,
    locations: HashMap<(u32, u32), Vec<usize>>,
    heap: BinaryHeap<Candidate>,
    crossing: Option<Crossing>,
}

impl Trainer {
    fn new(initial: Vec<String>) -> Self {
        let tokens: Vec<Rc<str>> = initial.into_iter().map(Rc::from).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self {
            tokens,
            index,
            units: Vec::new(),
            unit_count: Vec::new(),
            pair_count: HashMap::new(),
            locations: HashMap::new(),
            heap: BinaryHeap::new(),
            crossing: None,
        }
    }

    fn add_unit(&mut self, syms: Vec<u32>) -> usize {
        self.units.push(syms);
        self.unit_count.push(0);
        self.units.len() - 1
    }

    fn enable_crossing(&mut self, words: Vec<(Vec<usize>, u64)>) {
        let mut unit_words = vec![Vec::new(); self.units.len()];
        for (w, (us, _)) in words.iter().enumerate() {
            for &u in us {
                if unit_words[u].last() != Some(&w) {
                    unit_words[u].push(w);
                }
            }
        }
        let mut crossing = Crossing {
            words,
            unit_words,
            counts: HashMap::new(),
        };
        for w in 0..crossing.words.len() {
            Self::crossing_delta(&self.units, &mut crossing, w, true);
        }
        self.crossing = Some(crossing);
    }

    /// Adds or removes the boundary-spanning pairs of word `w`.
    fn crossing_delta(units: &[Vec<u32>], crossing: &mut Crossing, w: usize, add: bool) -> Vec<(u32, u32)> {
        let (us, count) = &crossing.words[w];
        let mut cleared = Vec::new();
        for pair in us.windows(2) {
            let p = (*units[pair[0]].last().unwrap(), units[pair[1]][0]);
            let e = crossing.counts.entry(p).or_insert(0);
            if add {
                *e += count;
            } else {
                *e -= count;
                if *e == 0 {
                    cleared.push(p);
                }
            }
        }
        cleared
    }

    fn push(&mut self, pair: (u32, u32), count: u64) {
        self.heap.push(Candidate {
            count,
            left: self.tokens[pair.0 as usize].clone(),
            right: self.tokens[pair.1 as usize].clone(),
            pair,
        });
    }

    fn init_pairs(&mut self) {
        for (u, syms) in self.units.iter().enumerate() {
            let c = self.unit_count[u] as i64;
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                *self.pair_count.entry(p).or_insert(0) += c;
                let loc = self.locations.entry(p).or_default();
                if loc.last() != Some(&u) {
                    loc.push(u);
                }
            }
        }
        let mut all: Vec<((u32, u32), i64)> = self.pair_count.iter().map(|(p, c)| (*p, *c)).collect();
        all.sort_unstable();
        for (p, c) in all {
            self.push(p, c as u64);
        }
    }

    fn next_merge(&mut self, min_frequency: u64) -> Option<MergeRule> {
        loop {
            let cand = self.heap.pop()?;
            let current = self.pair_count.get(&cand.pair).copied().unwrap_or(0);
            if current <= 0 || current as u64 != cand.count {
                continue;
            }
            if cand.count < min_frequency.max(1) {
                return None;
            }
            let concat: String = format!("{}{}", cand.left, cand.right);
            if self.index.contains_key(concat.as_str()) {
                continue;
            }
            if let Some(c) = &self.crossing {
                if c.counts.get(&cand.pair).copied().unwrap_or(0) > 0 {
                    continue;
                }
            }
            let output = self.tokens.len() as u32;
            let rc: Rc<str> = Rc::from(concat);
            self.tokens.push(rc.clone());
            self.index.insert(rc, output);
            self.apply(cand.pair, output);
            return Some(MergeRule {
                left: cand.pair.0,
                right: cand.pair.1,
                output,
                freq: cand.count,
            });
        }
    }

    fn apply(&mut self, pair: (u32, u32), output: u32) {
        let mut list = self.locations.remove(&pair).unwrap_or_default();
        list.sort_unstable();
        list.dedup();

        let mut affected_words = Vec::new();
        if let Some(c) = &mut self.crossing {
            for &u in &list {
                affected_words.extend(c.unit_words[u].iter().copied());
            }
            affected_words.sort_unstable();
            affected_words.dedup();
            for &w in &affected_words {
                Self::crossing_delta(&self.units, c, w, false);
            }
        }

        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        for &u in &list {
            let syms = &self.units[u];
            if !syms.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            let c = self.unit_count[u] as i64;
            for w in syms.windows(2) {
                *delta.entry((w[0], w[1])).or_insert(0) -= c;
            }
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    merged.push(output);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            for w in merged.windows(2) {
                let p = (w[0], w[1]);
                *delta.entry(p).or_insert(0) += c;
                let loc = self.locations.entry(p).or_default();
                if loc.last() != Some(&u) {
                    loc.push(u);
                }
            }
            self.units[u] = merged;
        }

        let mut changed: Vec<((u32, u32), i64)> = delta.into_iter().filter(|(_, d)| *d != 0).collect();
        changed.sort_unstable();
        for (p, d) in changed {
            let e = self.pair_count.entry(p).or_insert(0);
            *e += d;
            let now = *e;
            if now > 0 {
                self.push(p, now as u64);
            } else {
                self.pair_count.remove(&p);
            }
        }

        if let Some(mut c) = self.crossing.take() {
            let mut cleared = Vec::new();
            for &w in &affected_words {
                Self::crossing_delta(&self.units, &mut c, w, true);
            }
            c.counts.retain(|p, n| {
                if *n == 0 {
                    cleared.push(*p);
                    false
                } else {
                    true
                }
            });
            self.crossing = Some(c);
            // pairs that stopped spanning a boundary become eligible again
            cleared.sort_unstable();
            for p in cleared {
                if let Some(&n) = self.pair_count.get(&p) {
                    if n > 0 {
                        self.push(p, n as u64);
                    }
                }
            }
        }
    }
}
