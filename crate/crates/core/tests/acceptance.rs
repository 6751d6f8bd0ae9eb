//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (outside the test harness capture) and then asserts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use corpusforge::dedup::{exact_dedup, fuzzy_dedup, MinHashParams, MinHasher, DEFAULT_BUCKET_COUNT};
use corpusforge::eval::{align_word, morph_alignment_score, EvalConfig};
use corpusforge::ngram::{perplexity_filter, train_lm_texts, Cutoff, LmConfig, PerplexityDropReason, PerplexityFilterConfig};
use corpusforge::pipeline::{run_pipeline, PipelineConfig, RunManifest};
use corpusforge::quality::{apply_policy, compute_signals, FilterPolicy, Rule, Signal};
use corpusforge::tokenizer::{
    audit_boundaries, combine_vocabs, reserved_token, train_bpe, train_morphbpe, MorphSegmentation, Segmenter,
    Tokenizer, TrainConfig, MARKER,
};
use corpusforge::Record;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn verdict(n: u32, what: &str, ok: bool, detail: String) {
    let line = format!("criterion {n:>2}: {} {what} [{detail}]", if ok { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ARABIC: &[char] = &[
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف', 'ق', 'ك', 'ل',
    'م', 'ن', 'ه', 'و', 'ي',
];
const LATIN: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's', 't', 'u', 'v', 'w',
    'x', 'y', 'z',
];

fn random_word(r: &mut ChaCha8Rng, letters: &[char], min: usize, max: usize) -> String {
    let n = r.gen_range(min..=max);
    (0..n).map(|_| *letters.choose(r).unwrap()).collect()
}

fn lexicon(r: &mut ChaCha8Rng, n: usize, letters: &[char]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = random_word(r, letters, 3, 9);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

// ---------------------------------------------------------------- MinHash

#[test]
fn criterion_01_lsh_parameters() {
    let p = MinHashParams::default();
    let t = p.threshold();
    let oracle = (1.0f64 / 12.0).powf(1.0 / 11.0);
    let sig = MinHasher::new(p).sign_text("one two three four five six seven eight nine").unwrap();
    let ok = p.gram_size == 8
        && p.bands == 12
        && p.rows == 11
        && p.num_hashes() == 132
        && sig.values.len() == 132
        && (t - 0.798).abs() <= 0.001
        && (t - oracle).abs() < 1e-12;
    verdict(1, "gram=8 b=12 r=11 gives 132 hashes and threshold 0.798", ok, format!("threshold {t:.6}"));
}

/// Random sets of `union` elements with `|A ∩ B| = s * union`.
fn planted_pair(r: &mut ChaCha8Rng, s: f64, union: usize) -> (Vec<u64>, Vec<u64>) {
    let inter = (s * union as f64).round() as usize;
    let rest = union - inter;
    let pool: Vec<u64> = (0..union).map(|_| r.gen()).collect();
    let common = &pool[..inter];
    let a_only = &pool[inter..inter + rest / 2];
    let b_only = &pool[inter + rest / 2..];
    let a = common.iter().chain(a_only).copied().collect();
    let b = common.iter().chain(b_only).copied().collect();
    (a, b)
}

fn exact_jaccard<T: std::hash::Hash + Eq>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

#[test]
fn criterion_02_lsh_s_curve() {
    let mut r = rng(2);
    let mut ok = true;
    let mut detail = Vec::new();
    for (level, s) in [0.5, 0.8, 0.9].into_iter().enumerate() {
        let hasher = MinHasher::new(MinHashParams::with_seed(100 + level as u64));
        let mut hits = 0;
        for _ in 0..2000 {
            let (a, b) = planted_pair(&mut r, s, 200);
            let exact = exact_jaccard(&a.iter().collect(), &b.iter().collect());
            assert!((exact - s).abs() < 1e-12);
            let ka = hasher.signature(&a).unwrap().band_keys();
            let kb = hasher.signature(&b).unwrap().band_keys();
            hits += ka.iter().zip(&kb).any(|(x, y)| x == y) as usize;
        }
        let rate = hits as f64 / 2000.0;
        let predicted = 1.0 - (1.0 - s.powi(11)).powi(12);
        ok &= (rate - predicted).abs() <= 0.03;
        detail.push(format!("s={s}: {rate:.4} vs {predicted:.4}"));
    }
    verdict(2, "band collision rates follow 1-(1-s^11)^12 within 0.03", ok, detail.join(", "));
}

#[test]
fn criterion_03_minhash_estimator() {
    let mut r = rng(3);
    let mut total = 0.0;
    for i in 0..1000 {
        let hasher = MinHasher::new(MinHashParams::with_seed(i));
        let (a, b) = planted_pair(&mut r, 0.5, 200);
        let est = hasher.signature(&a).unwrap().estimate_jaccard(&hasher.signature(&b).unwrap()).unwrap();
        total += (est - 0.5).abs();
    }
    let mae = total / 1000.0;
    verdict(3, "mean |estimate - exact| <= 0.05 at s=0.5", mae <= 0.05, format!("mean abs error {mae:.4}"));
}

// ---------------------------------------------------------------- tokenizers

/// Straightforward BPE: recount every pair from scratch after each merge.
fn reference_bpe(lines: &[String], specials: &[String], vocab_size: usize) -> Vec<(String, String, u64)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for l in lines {
        for w in l.split_whitespace() {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut vocab: HashSet<String> = specials.iter().cloned().collect();
    let mut words: Vec<(Vec<String>, u64)> = Vec::new();
    for (w, c) in counts {
        let syms: Vec<String> = w
            .chars()
            .enumerate()
            .map(|(i, ch)| if i == 0 { format!("{MARKER}{ch}") } else { ch.to_string() })
            .collect();
        for ch in w.chars() {
            vocab.insert(ch.to_string());
            vocab.insert(format!("{MARKER}{ch}"));
        }
        words.push((syms, c));
    }
    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for win in syms.windows(2) {
                *pairs.entry((win[0].clone(), win[1].clone())).or_insert(0) += c;
            }
        }
        // BTreeMap iterates in (left, right) order, so the first maximum wins ties
        let mut best: Option<(&(String, String), u64)> = None;
        for (p, &c) in &pairs {
            if vocab.contains(&format!("{}{}", p.0, p.1)) {
                continue;
            }
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((p, c));
            }
        }
        let Some(((l, rt), c)) = best.map(|(p, c)| (p.clone(), c)) else { break };
        let joined = format!("{l}{rt}");
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == rt {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }
        vocab.insert(joined);
        merges.push((l, rt, c));
    }
    merges
}

fn merge_list(t: &Tokenizer) -> Vec<(String, String, u64)> {
    t.merge_pairs()
        .into_iter()
        .zip(t.merges())
        .map(|((l, r), m)| (l.to_string(), r.to_string(), m.freq))
        .collect()
}

#[test]
fn criterion_04_single_morpheme_equals_bpe() {
    let mut r = rng(4);
    let letter_pool: Vec<char> = "abcdeفقكل".chars().collect();
    let mut checked = 0;
    let mut ok = true;
    let mut total_merges = 0;
    for _ in 0..24 {
        let k = r.gen_range(2..=letter_pool.len());
        let letters: Vec<char> = letter_pool.choose_multiple(&mut r, k).copied().collect();
        let lines: Vec<String> = (0..r.gen_range(2..8))
            .map(|_| {
                (0..r.gen_range(3..25))
                    .map(|_| random_word(&mut r, &letters, 1, 7))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let alphabet: BTreeSet<char> = lines.iter().flat_map(|l| l.chars()).filter(|c| *c != ' ').collect();
        let mut cfg = TrainConfig::new(4 + 2 * alphabet.len() + r.gen_range(0..80));
        cfg.include_diacritics = false;

        let (vanilla, _) = train_bpe(&lines, &cfg).unwrap();
        let (morph, _) = train_morphbpe(&lines, &Segmenter::single_morpheme(), &cfg).unwrap();
        let reference = reference_bpe(&lines, &cfg.specials, cfg.vocab_size);

        let mut same = merge_list(&vanilla) == merge_list(&morph)
            && vanilla.tokens() == morph.tokens()
            && merge_list(&vanilla) == reference;
        let mut probes = lines.clone();
        probes.extend((0..20).map(|_| random_word(&mut r, &letter_pool, 1, 10)));
        for p in &probes {
            same &= vanilla.encode(p) == morph.encode(p);
        }
        ok &= same;
        total_merges += reference.len();
        checked += 1;
    }
    verdict(
        4,
        "single-morpheme MorphBPE equals vanilla BPE and a reference BPE",
        ok && checked >= 20,
        format!("{checked} corpora, {total_merges} merges compared"),
    );
}

const PREFIXES: &[&[&str]] = &[&[], &["ال"], &["و"], &["ب"], &["و", "ال"], &["ب", "ال"]];
const SUFFIXES: &[&[&str]] = &[&[], &["ها"], &["هم"], &["ات"], &["ون"], &["ة"]];

/// A corpus of prefix + stem + suffix words and the gold segmentation of each word.
fn gold_corpus(r: &mut ChaCha8Rng, stems: usize, words: usize) -> (Vec<String>, BTreeMap<String, Vec<String>>) {
    let stems: Vec<String> = (0..stems).map(|_| random_word(r, ARABIC, 3, 4)).collect();
    let mut table: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut tokens = Vec::with_capacity(words);
    for _ in 0..words {
        let x: f64 = r.gen();
        let stem = &stems[((x * x) * stems.len() as f64) as usize];
        let mut morphs: Vec<String> = PREFIXES.choose(r).unwrap().iter().map(|s| s.to_string()).collect();
        morphs.push(stem.clone());
        morphs.extend(SUFFIXES.choose(r).unwrap().iter().map(|s| s.to_string()));
        let word = morphs.concat();
        table.entry(word.clone()).or_insert(morphs);
        tokens.push(word);
    }
    let lines = tokens.chunks(20).map(|c| c.join(" ")).collect();
    (lines, table)
}

fn gold_counts(lines: &[String], table: &BTreeMap<String, Vec<String>>) -> Vec<(MorphSegmentation, u64)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for w in lines.iter().flat_map(|l| l.split_whitespace()) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(w, c)| (MorphSegmentation::new(w, table[w].clone()).unwrap(), c))
        .collect()
}

#[test]
fn criterion_05_boundary_audit() {
    let mut r = rng(5);
    let mut morph_violations = 0;
    let mut mismatches = 0;
    let mut vanilla_violations = 0;
    let mut merges = 0;
    for _ in 0..10 {
        let (lines, table) = gold_corpus(&mut r, 40, 600);
        let cfg = TrainConfig::new(400);
        let gold = gold_counts(&lines, &table);
        let (morph, _) = train_morphbpe(&lines, &Segmenter::lookup_only(table.clone()), &cfg).unwrap();
        let a = audit_boundaries(&morph, &gold);
        morph_violations += a.violating_merges.len();
        mismatches += a.frequency_mismatches.len();
        merges += a.merges_checked;

        let (vanilla, _) = train_bpe(&lines, &cfg).unwrap();
        vanilla_violations += audit_boundaries(&vanilla, &gold).violating_merges.len();
    }
    verdict(
        5,
        "zero boundary-crossing merges on gold lookup-table corpora",
        morph_violations == 0 && mismatches == 0 && vanilla_violations > 0,
        format!(
            "{merges} merges audited, {morph_violations} violating, {mismatches} count mismatches; \
             vanilla control has {vanilla_violations} violating"
        ),
    );
}

fn split_at(word: &[char], cuts: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    let mut at = 0;
    for &c in cuts.iter().chain(std::iter::once(&word.len())) {
        out.push(word[at..c].iter().collect());
        at = c;
    }
    out
}

fn random_split(r: &mut ChaCha8Rng, word: &[char]) -> Vec<String> {
    let cuts: Vec<usize> = (1..word.len()).filter(|_| r.gen_bool(0.5)).collect();
    split_at(word, &cuts)
}

/// Largest number of order-preserving (token, morpheme) pairs with the same
/// text over the same character span, by enumerating index subsets.
fn brute_force_matches(t: &[String], m: &[String]) -> usize {
    let spans = |xs: &[String]| {
        let mut at = 0;
        xs.iter()
            .map(|x| {
                let s = x.strip_prefix(MARKER).unwrap_or(x);
                let n = s.chars().count();
                at += n;
                (at - n, s.to_string())
            })
            .collect::<Vec<_>>()
    };
    let (ts, ms) = (spans(t), spans(m));
    let mut best = 0;
    for tm in 0u32..(1 << t.len()) {
        let ti: Vec<usize> = (0..t.len()).filter(|i| tm >> i & 1 == 1).collect();
        if ti.len() <= best {
            continue;
        }
        for mm in 0u32..(1 << m.len()) {
            if mm.count_ones() as usize != ti.len() {
                continue;
            }
            let mi = (0..m.len()).filter(|j| mm >> j & 1 == 1);
            if ti.iter().zip(mi).all(|(&i, j)| ts[i] == ms[j]) {
                best = ti.len();
            }
        }
    }
    best
}

#[test]
fn criterion_06_alignment() {
    let mut r = rng(6);
    let letters = ['a', 'b', 'ب', 'ت'];
    let mut agree = 0;
    let cases = 10_000;
    for _ in 0..cases {
        let len = r.gen_range(1..=6);
        let w1: Vec<char> = (0..len).map(|_| *letters.choose(&mut r).unwrap()).collect();
        let w2: Vec<char> = if r.gen_bool(0.8) {
            w1.clone()
        } else {
            (0..len).map(|_| *letters.choose(&mut r).unwrap()).collect()
        };
        let mut t = random_split(&mut r, &w1);
        if r.gen_bool(0.5) {
            t[0].insert(0, MARKER);
        }
        let m = random_split(&mut r, &w2);
        let a = align_word(&t, &m).unwrap();
        let expected = brute_force_matches(&t, &m);
        let pairs_ok = a.pairs.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 < p[1].1);
        if a.pairs.len() == expected
            && pairs_ok
            && (a.score - expected as f64 / t.len().max(m.len()) as f64).abs() < 1e-12
        {
            agree += 1;
        }
    }

    let (lines, table) = gold_corpus(&mut r, 60, 3000);
    let gold = Segmenter::lookup_only(table);
    let cfg = TrainConfig::new(250);
    let (morph, mr) = train_morphbpe(&lines, &gold, &cfg).unwrap();
    let (vanilla, vr) = train_bpe(&lines, &cfg).unwrap();
    let eval = EvalConfig::default();
    let ms = morph_alignment_score(&morph, &lines, &gold, &eval).unwrap().morph_alignment;
    let vs = morph_alignment_score(&vanilla, &lines, &gold, &eval).unwrap().morph_alignment;
    let equal_vocab = mr.vocab_size == vr.vocab_size && mr.vocab_size == cfg.vocab_size;

    verdict(
        6,
        "align_word equals brute force; MorphBPE alignment >= vanilla at equal vocab",
        agree == cases && equal_vocab && ms >= vs,
        format!("{agree}/{cases} cases agree; vocab {} vs {}; alignment {ms:.4} vs {vs:.4}", mr.vocab_size, vr.vocab_size),
    );
}

// ---------------------------------------------------------------- dedup

fn doc(r: &mut ChaCha8Rng, lex: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| lex.choose(r).unwrap().clone()).collect()
}

fn word_grams(text: &str, n: usize) -> HashSet<Vec<&str>> {
    let w: Vec<&str> = text.split_whitespace().collect();
    w.windows(n.min(w.len())).map(|g| g.to_vec()).collect()
}

fn ids(records: &[Record]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

#[test]
fn criterion_07_dedup() {
    let mut r = rng(7);
    let lex = lexicon(&mut r, 5000, LATIN);

    // exact: 10k records, 3k planted duplicates, some with whitespace noise
    let n = 10_000;
    let mut dup_slots: Vec<usize> = (1..n).collect();
    dup_slots.shuffle(&mut r);
    let dup_slots: HashSet<usize> = dup_slots[..3000].iter().copied().collect();
    let mut emitted: Vec<String> = Vec::new();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let text = if dup_slots.contains(&i) {
            let t = emitted.choose(&mut r).unwrap().clone();
            if r.gen_bool(0.3) {
                format!("  {}\n", t.replace(' ', "  "))
            } else {
                t
            }
        } else {
            let len = r.gen_range(5..15);
            doc(&mut r, &lex, len).join(" ")
        };
        emitted.push(text.clone());
        records.push(Record::new(format!("r{i:05}"), text));
    }
    let mut seen = HashSet::new();
    let oracle: Vec<String> = records
        .iter()
        .filter(|rec| seen.insert(rec.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .map(|rec| rec.id.clone())
        .collect();
    let (kept, manifest) = exact_dedup(records.clone(), DEFAULT_BUCKET_COUNT).unwrap();
    let (again, again_manifest) = exact_dedup(kept.clone(), DEFAULT_BUCKET_COUNT).unwrap();
    let (one_bucket, _) = exact_dedup(records, 1).unwrap();
    let exact_ok = oracle.len() == 7000
        && ids(&kept) == oracle
        && ids(&again) == oracle
        && again_manifest.dropped() == 0
        && ids(&one_bucket) == oracle
        && manifest.dropped_exact == 3000
        && manifest.is_consistent();

    // fuzzy: 10 planted groups of one base and four single-word edits
    let mut fuzzy_records = Vec::new();
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut min_group_j: f64 = 1.0;
    for g in 0..10 {
        let base = doc(&mut r, &lex, 300);
        let base_text = base.join(" ");
        let base_grams = word_grams(&base_text, 8);
        let mut members = vec![format!("g{g}-0")];
        fuzzy_records.push(Record::new(&members[0], base_text.clone()));
        for v in 1..5 {
            let mut w = base.clone();
            let at = r.gen_range(0..w.len());
            w[at] = lex.choose(&mut r).unwrap().clone();
            let text = w.join(" ");
            min_group_j = min_group_j.min(exact_jaccard(&base_grams, &word_grams(&text, 8)));
            members.push(format!("g{g}-{v}"));
            fuzzy_records.push(Record::new(members.last().unwrap(), text));
        }
        groups.push(members);
    }
    for i in 0..100 {
        fuzzy_records.push(Record::new(format!("bg{i:03}"), doc(&mut r, &lex, 300).join(" ")));
    }
    fuzzy_records.shuffle(&mut r);
    let out = fuzzy_dedup(fuzzy_records, MinHashParams::with_seed(7), true).unwrap();
    let survivors: HashSet<String> = ids(&out.records).into_iter().collect();
    let collapsed = groups
        .iter()
        .filter(|m| m.iter().filter(|id| survivors.contains(*id)).count() == 1)
        .count();
    let background_kept = (0..100).all(|i| survivors.contains(&format!("bg{i:03}")));

    // negatives: documents sharing blocks of text, pairwise J <= 0.3
    let blocks: Vec<Vec<String>> = (0..5).map(|_| doc(&mut r, &lex, 100)).collect();
    let negatives: Vec<Record> = (0..200)
        .map(|i| {
            let mut words = blocks[i % 5].clone();
            words.extend(doc(&mut r, &lex, 150));
            Record::new(format!("n{i:03}"), words.join(" "))
        })
        .collect();
    let grams: Vec<HashSet<Vec<&str>>> = negatives.iter().map(|rec| word_grams(&rec.text, 8)).collect();
    let mut max_j: f64 = 0.0;
    for i in 0..grams.len() {
        for j in i + 1..grams.len() {
            max_j = max_j.max(exact_jaccard(&grams[i], &grams[j]));
        }
    }
    let neg = fuzzy_dedup(negatives.clone(), MinHashParams::with_seed(8), true).unwrap();

    verdict(
        7,
        "exact dedup matches a hash-set oracle; fuzzy collapses planted groups and spares distinct docs",
        exact_ok && collapsed >= 9 && min_group_j >= 0.9 && background_kept && max_j <= 0.3 && neg.records.len() == 200,
        format!(
            "exact kept {}/{n}; {collapsed}/10 groups collapsed (min J {min_group_j:.3}); \
             {} dropped at max pairwise J {max_j:.3}",
            kept.len(),
            200 - neg.records.len()
        ),
    );
}

// ---------------------------------------------------------------- quality

#[test]
fn criterion_08_signal_golden() {
    let path = format!("{}/tests/data/signals_golden.jsonl", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    let policy = FilterPolicy::new(vec![Rule::signal(Signal::FracUniqueWords, Some(0.2), None)]).unwrap();
    let (mut docs, mut exact, mut total) = (0, 0, 0);
    let (mut ads, mut dropped) = (BTreeSet::new(), BTreeSet::new());
    for line in text.lines() {
        let d: serde_json::Value = serde_json::from_str(line).unwrap();
        let id = d["id"].as_str().unwrap();
        let body = d["text"].as_str().unwrap();
        let report = compute_signals(body);
        for (name, v) in d["signals"].as_object().unwrap() {
            let sig: Signal = name.parse().unwrap();
            total += 1;
            exact += (report.get(sig).to_bits() == v.as_f64().unwrap().to_bits()) as usize;
        }
        if d["is_ad"].as_bool().unwrap() {
            ads.insert(id.to_string());
        }
        if !apply_policy(&Record::new(id, body), &policy).is_keep() {
            dropped.insert(id.to_string());
        }
        docs += 1;
    }
    verdict(
        8,
        "50-doc golden reproduces all 20 signals bit-exactly; unique-word policy drops exactly the ads",
        docs == 50 && total == 1000 && exact == total && !ads.is_empty() && ads == dropped,
        format!("{exact}/{total} values exact; dropped {dropped:?}"),
    );
}

// ---------------------------------------------------------------- n-gram LM

/// A word Markov chain: each word mostly continues to one of three successors.
struct Chain {
    words: Vec<String>,
    next: Vec<[usize; 3]>,
}

impl Chain {
    fn new(r: &mut ChaCha8Rng, size: usize) -> Self {
        let words = lexicon(r, size, LATIN);
        let next = (0..size)
            .map(|_| [r.gen_range(0..size), r.gen_range(0..size), r.gen_range(0..size)])
            .collect();
        Self { words, next }
    }

    fn sentence(&self, r: &mut ChaCha8Rng, noise: f64) -> String {
        let mut at = r.gen_range(0..self.words.len());
        let mut out = vec![self.words[at].clone()];
        for _ in 0..r.gen_range(6..15) {
            at = if r.gen_bool(noise) {
                r.gen_range(0..self.words.len())
            } else {
                self.next[at][r.gen_range(0..3)]
            };
            out.push(self.words[at].clone());
        }
        out.join(" ")
    }
}

#[test]
fn criterion_09_ngram_lm() {
    let mut r = rng(9);

    // normalization of every sampled context
    let chain = Chain::new(&mut r, 150);
    let train: Vec<String> = (0..300).map(|_| chain.sentence(&mut r, 0.1)).collect();
    let mut worst: f64 = 0.0;
    let mut contexts_checked = 0;
    for order in [2, 3, 4] {
        let lm = train_lm_texts(&train, &LmConfig::with_order(order)).unwrap();
        let predictable: Vec<&str> = lm.predictable().collect();
        let mut contexts = lm.contexts();
        contexts.shuffle(&mut r);
        for ctx in contexts.iter().take(300) {
            let words = lm.words_of(ctx);
            let sum: f64 = predictable.iter().map(|w| lm.prob(&words, w)).sum();
            worst = worst.max((sum - 1.0).abs());
            contexts_checked += 1;
        }
    }

    // training text against a word shuffle of itself
    let mut wins = 0;
    for t in 0..20 {
        let mut tr = rng(900 + t);
        let chain = Chain::new(&mut tr, 200);
        let lines: Vec<String> = (0..200).map(|_| chain.sentence(&mut tr, 0.1)).collect();
        let lm = train_lm_texts(&lines, &LmConfig::with_order(3)).unwrap();
        let mut all: Vec<&str> = lines.iter().flat_map(|l| l.split_whitespace()).collect();
        all.shuffle(&mut tr);
        let mut shuffled = Vec::new();
        let mut rest = &all[..];
        for l in &lines {
            let n = l.split_whitespace().count();
            shuffled.push(rest[..n].join(" "));
            rest = &rest[n..];
        }
        let own = lm.perplexity_text(&lines.join("\n")).unwrap();
        let shuf = lm.perplexity_text(&shuffled.join("\n")).unwrap();
        wins += (own <= shuf) as usize;
    }

    // top 5% by perplexity with a tie group straddling the cutoff
    let lm = train_lm_texts(&train, &LmConfig::with_order(3)).unwrap();
    let mut recs: Vec<Record> = (0..195)
        .map(|i| {
            let noise = r.gen_range(0.0..1.0);
            let text = (0..r.gen_range(1..4)).map(|_| chain.sentence(&mut r, noise)).collect::<Vec<_>>().join("\n");
            Record::new(format!("p{i:03}"), text)
        })
        .collect();
    let mut by_ppl: Vec<(f64, String)> = recs.iter().map(|x| (lm.perplexity(x).unwrap(), x.text.clone())).collect();
    by_ppl.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tied_text = by_ppl[6].1.clone();
    for k in 0..5 {
        recs.push(Record::new(format!("p{:03}", 195 + k), tied_text.clone()));
    }
    recs.shuffle(&mut r);
    let n = recs.len();
    let k = (n * 5).div_ceil(100);
    let mut ranked: Vec<(f64, String)> = recs.iter().map(|x| (lm.perplexity(x).unwrap(), x.id.clone())).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let oracle: BTreeSet<String> = ranked[n - k..].iter().map(|(_, id)| id.clone()).collect();
    let tied_ppl = lm.perplexity_text(&tied_text).unwrap();
    let straddles = ranked[n - k..].iter().any(|x| x.0 == tied_ppl) && ranked[..n - k].iter().any(|x| x.0 == tied_ppl);

    let cfg = PerplexityFilterConfig {
        cutoff: Cutoff::Percentile { high_pct: 5.0, low_pct: 0.0 },
        group_by: None,
    };
    let drop_set = |records: Vec<Record>| -> BTreeSet<String> {
        let (_, m) = perplexity_filter(records, &lm, &cfg).unwrap();
        m.drops.into_iter().filter(|d| d.reason == PerplexityDropReason::High).map(|d| d.id).collect()
    };
    let first = drop_set(recs.clone());
    recs.reverse();
    let second = drop_set(recs);

    verdict(
        9,
        "contexts sum to 1; train ppl <= shuffled ppl; 5% filter drops the exact top tail",
        worst <= 1e-6 && wins >= 19 && straddles && first == oracle && second == oracle && oracle.len() == k,
        format!(
            "max |sum-1| {worst:.2e} over {contexts_checked} contexts; {wins}/20 trials; \
             dropped {}/{n} with ties split at the cutoff",
            first.len()
        ),
    );
}

// ---------------------------------------------------------------- vocab merge

fn big_corpus(r: &mut ChaCha8Rng, letters: &[char], words: usize) -> Vec<String> {
    let lex = {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(words);
        while out.len() < words {
            let w = random_word(r, letters, 4, 12);
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    };
    let mut tokens = Vec::new();
    for w in &lex {
        for _ in 0..r.gen_range(1..=3) {
            tokens.push(w.clone());
        }
    }
    tokens.shuffle(r);
    tokens.chunks(200).map(|c| c.join(" ")).collect()
}

#[test]
fn criterion_10_combine_vocabs() {
    let mut r = rng(10);
    let latin = big_corpus(&mut r, LATIN, 50_000);
    let arabic = big_corpus(&mut r, ARABIC, 60_000);
    let (a, ar) = train_bpe(&latin, &TrainConfig::new(32_768)).unwrap();
    let (b, br) = train_bpe(&arabic, &TrainConfig::new(45_056)).unwrap();
    let reserved = 256;
    let (c, report) = combine_vocabs(&a, &b, 76_800, reserved, false).unwrap();

    // closure: every merge joins two earlier tokens into the token with its id
    let tokens = c.tokens();
    let first_merge = c.specials().len() + c.alphabet().len();
    let mut closure = c.merges().len() == c.reserved_range().start - first_merge;
    for (k, m) in c.merges().iter().enumerate() {
        let out = m.output as usize;
        closure &= out == first_merge + k
            && m.left < m.output
            && m.right < m.output
            && tokens[out] == format!("{}{}", tokens[m.left as usize], tokens[m.right as usize]);
    }
    let unique: HashSet<&String> = tokens.iter().collect();
    closure &= unique.len() == tokens.len();
    let reserved_ok = c.num_reserved() >= reserved
        && c.reserved_range().end == tokens.len()
        && c.reserved_range().enumerate().all(|(i, id)| tokens[id] == reserved_token(i));
    let alphabets = a.alphabet().iter().chain(b.alphabet()).all(|s| c.id(s).is_some());
    let sample = format!("{} {}", &latin[0][..60.min(latin[0].len())], arabic[0].split(' ').take(8).collect::<Vec<_>>().join(" "));
    let sample = sample.split_whitespace().collect::<Vec<_>>().join(" ");
    let round_trip = c.decode(&c.encode(&sample)).unwrap() == sample;

    verdict(
        10,
        "combined vocab has exactly 76,800 ids with merge closure intact",
        a.vocab_size() == 32_768
            && b.vocab_size() == 45_056
            && ar.warnings.is_empty()
            && br.warnings.is_empty()
            && c.vocab_size() == 76_800
            && c.check_invariants().is_ok()
            && closure
            && reserved_ok
            && alphabets
            && round_trip,
        format!(
            "{} ids, {} merges from A, {} from B, {} pruned, {} reserved",
            c.vocab_size(),
            report.merges_from_a,
            report.merges_from_b,
            report.pruned_merges,
            c.num_reserved()
        ),
    );
}

// ---------------------------------------------------------------- pipeline

const PIPELINE: &str = r#"
version = 1
seed = 11
inputs = ["in/*.jsonl"]
output_dir = "out"
dataset = "toy"

[[stages]]
stage = "clean"

[[stages]]
stage = "signals"

[[stages]]
stage = "calibrate"

[[stages]]
stage = "filter"
rules = [{ kind = "signal", signal = "frac_unique_words", min = 0.2 }]

[[stages]]
stage = "dedup_exact"

[[stages]]
stage = "dedup_url"

[[stages]]
stage = "dedup_fuzzy"
verify = true

[[stages]]
stage = "lm_train"
order = 3
write_arpa = true

[[stages]]
stage = "lm_filter"
cutoff = { mode = "percentile", high_pct = 5.0, low_pct = 0.0 }

[[stages]]
stage = "tok_train"
mode = "morph"
vocab_size = 300
segmenter = "rule_based"

[[stages]]
stage = "tok_eval"
"#;

fn write_pipeline_corpus(dir: &Path) {
    let mut r = rng(11);
    let stems: Vec<String> = (0..80).map(|_| random_word(&mut r, ARABIC, 3, 5)).collect();
    let word = |r: &mut ChaCha8Rng| {
        let p = ["", "ال", "و", "ب", "وال"].choose(r).unwrap();
        let s = ["", "ها", "ات", "ون"].choose(r).unwrap();
        format!("{p}{}{s}", stems.choose(r).unwrap())
    };
    let mut texts: Vec<String> = Vec::new();
    for i in 0..300 {
        let t = match i % 10 {
            3 if !texts.is_empty() => texts.choose(&mut r).unwrap().replace(' ', "  "),
            7 if !texts.is_empty() => {
                let mut w: Vec<String> = texts.choose(&mut r).unwrap().split(' ').map(String::from).collect();
                let at = r.gen_range(0..w.len());
                w[at] = word(&mut r);
                w.join(" ")
            }
            9 => "عرض خاص ".repeat(20),
            _ => {
                let n = r.gen_range(30..120);
                (0..n).map(|_| word(&mut r)).collect::<Vec<_>>().join(" ")
            }
        };
        texts.push(t);
    }
    std::fs::create_dir_all(dir.join("in")).unwrap();
    for (shard, range) in [("a", 0..150), ("b", 150..300)] {
        let mut out = String::new();
        for i in range {
            let text = if i % 13 == 0 { format!("<p>{}</p>", texts[i]) } else { texts[i].clone() };
            let rec = serde_json::json!({
                "id": format!("d{i:03}"),
                "text": text,
                "metadata": { "url": format!("https://example.org/page/{}", i % 280) },
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        std::fs::write(dir.join(format!("in/{shard}.jsonl")), out).unwrap();
    }
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "manifest.json" {
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), hex::encode(digest));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn manifest_without_timings(m: &RunManifest) -> serde_json::Value {
    let mut v = serde_json::to_value(m).unwrap();
    for s in v["stages"].as_array_mut().unwrap() {
        s.as_object_mut().unwrap().remove("seconds");
    }
    v
}

#[test]
fn criterion_11_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_corpus(dir.path());
    std::fs::write(dir.path().join("pipeline.toml"), PIPELINE).unwrap();
    let cfg = PipelineConfig::load(&dir.path().join("pipeline.toml")).unwrap();
    let out = dir.path().join("out");

    let first = run_pipeline(&cfg).unwrap();
    let files_first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let second = pool.install(|| run_pipeline(&cfg)).unwrap();
    let files_second = snapshot(&out);
    let third = run_pipeline(&cfg).unwrap();

    let drops: usize = first.stages.iter().map(|s| s.drops.values().sum::<usize>()).sum();
    let ok = files_first == files_second
        && manifest_without_timings(&first) == manifest_without_timings(&second)
        && first.telescopes()
        && second.telescopes()
        && third.stages.iter().all(|s| s.cached)
        && snapshot(&out) == files_first
        && first.stages.len() == 11
        && drops > 0;
    verdict(
        11,
        "two runs give byte-identical outputs and telescoping manifests",
        ok,
        format!(
            "{} files compared; {} -> {} records over {} stages",
            files_first.len(),
            first.input_records,
            first.stages.last().unwrap().output_records,
            first.stages.len()
        ),
    );
}
