use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{filter_policy, PipelineConfig, StageConfig};
use super::PipelineError;
use crate::dedup::{exact_dedup, fuzzy_dedup_signed, sign_records, url_dedup, write_signature_cache, DedupManifest};
use crate::eval::{morph_alignment_score, EvalConfig};
use crate::ngram::{perplexity_filter, train_lm, NgramLm};
use crate::quality::{apply_policy, build_histogram, compute_signals, Decision, Signal};
use crate::record::{
    clean_text, detect_source_boilerplate, normalize_arabic, open_shard, strip_boilerplate, to_nfc, write_shard,
    ParseMode, Record,
};
use crate::tokenizer::{train_tokenizer, Tokenizer};

const PART: &str = "part-00000.jsonl";
const SUMMARY: &str = "stage.json";
const SUCCESS: &str = "_SUCCESS";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub name: String,
    pub hash: String,
    /// Directory name under the output directory.
    pub dir: String,
    pub input_records: usize,
    pub output_records: usize,
    pub drops: BTreeMap<String, usize>,
    /// Files in the stage directory, relative to it.
    pub files: Vec<FileChecksum>,
    pub details: Value,
    /// Reused from an earlier run; not stored in `stage.json`.
    #[serde(default)]
    pub cached: bool,
    #[serde(default)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub inputs: Vec<FileChecksum>,
    pub input_records: usize,
    pub stages: Vec<StageSummary>,
    /// Final shard (absolute path).
    pub output: Option<FileChecksum>,
}

impl RunManifest {
    /// Each stage consumes exactly what the previous one produced.
    pub fn telescopes(&self) -> bool {
        let mut expected = self.input_records;
        for s in &self.stages {
            if s.input_records != expected || s.input_records != s.output_records + s.drops.values().sum::<usize>() {
                return false;
            }
            expected = s.output_records;
        }
        true
    }
}

/// Seed for a stage, derived from the run seed and a stage key.
pub fn stage_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

fn checksum(path: &Path, label: String) -> Result<FileChecksum, PipelineError> {
    let (sha256, bytes) = sha256_file(path).map_err(|e| io_err(path, e))?;
    Ok(FileChecksum {
        path: label,
        sha256,
        bytes,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Invariant(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| PipelineError::Invariant(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Expands input patterns into a sorted, duplicate-free file list.
fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| PipelineError::Config(format!("input pattern {pat}: {e}")))?;
        let before = files.len();
        for m in matches {
            files.push(m.map_err(|e| PipelineError::Data(e.to_string()))?);
        }
        if files.len() == before {
            return Err(PipelineError::Data(format!("input pattern {pat} matched no files")));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn read_records(paths: &[PathBuf], mode: ParseMode, dataset: Option<&str>) -> Result<Vec<Record>, PipelineError> {
    let mut out = Vec::new();
    for p in paths {
        for r in open_shard(p, mode)? {
            let mut r = r?;
            if let Some(d) = dataset {
                r.metadata.entry("dataset".into()).or_insert_with(|| d.to_string());
            }
            out.push(r);
        }
    }
    Ok(out)
}

/// Outputs of a stage before it is summarized.
struct StageResult {
    records: Vec<Record>,
    drops: BTreeMap<String, usize>,
    details: Value,
}

impl StageResult {
    fn pass(records: Vec<Record>, details: Value) -> Self {
        Self {
            records,
            drops: BTreeMap::new(),
            details,
        }
    }
}

fn dedup_result(
    dir: &Path,
    records: Vec<Record>,
    manifest: DedupManifest,
    reason: &str,
) -> Result<StageResult, PipelineError> {
    if !manifest.is_consistent() || manifest.kept != records.len() {
        return Err(PipelineError::Invariant(format!("{reason} dedup counts do not add up")));
    }
    write_jsonl(&dir.join("drops.jsonl"), &manifest.drops)?;
    let mut drops = BTreeMap::new();
    drops.insert(reason.to_string(), manifest.dropped());
    Ok(StageResult {
        records,
        drops,
        details: json!({ "bypassed": manifest.bypassed.len() }),
    })
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    dir: &'a Path,
    last_model: Option<PathBuf>,
    last_tokenizer: Option<PathBuf>,
}

fn execute(stage: &StageConfig, records: Vec<Record>, ctx: &Context) -> Result<StageResult, PipelineError> {
    let dir = ctx.dir;
    let seed = ctx.cfg.seed;
    match stage {
        StageConfig::Clean(p) => {
            let mut records: Vec<Record> = records
                .into_par_iter()
                .map(|mut r| {
                    let text = to_nfc(&r.text);
                    let text = if p.strip_html { clean_text(&text) } else { text };
                    r.text = normalize_arabic(&text, &p.arabic);
                    r
                })
                .collect();
            let mut flagged = 0;
            if let Some(key) = &p.boilerplate_key {
                let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                for (i, r) in records.iter().enumerate() {
                    if let Some(v) = r.metadata.get(key) {
                        groups.entry(v.clone()).or_default().push(i);
                    }
                }
                for idx in groups.values() {
                    let group: Vec<Record> = idx.iter().map(|&i| records[i].clone()).collect();
                    let lines = detect_source_boilerplate(&group, p.min_repeat);
                    flagged += lines.len();
                    for &i in idx {
                        records[i].text = strip_boilerplate(&records[i].text, &lines);
                    }
                }
            }
            Ok(StageResult::pass(records, json!({ "boilerplate_lines": flagged })))
        }
        StageConfig::Signals(_) => {
            let records = records
                .into_par_iter()
                .map(|mut r| {
                    r.quality_signals = compute_signals(&r.text).to_map();
                    r
                })
                .collect();
            Ok(StageResult::pass(records, json!({})))
        }
        StageConfig::Calibrate(p) => {
            let signals: Vec<String> = if p.signals.is_empty() {
                Signal::ALL.iter().map(|s| s.name().to_string()).collect()
            } else {
                p.signals.clone()
            };
            let hist_dir = dir.join("histograms");
            std::fs::create_dir_all(&hist_dir).map_err(|e| io_err(&hist_dir, e))?;
            let mut totals = BTreeMap::new();
            for s in &signals {
                let h = build_histogram(&records, s, p.capacity, stage_seed(seed, &format!("calibrate/{s}")))?;
                h.write_csv(&hist_dir.join(format!("{s}.csv")))?;
                h.write_samples_jsonl(&hist_dir.join(format!("{s}.samples.jsonl")))?;
                totals.insert(s.clone(), h.counts.to_vec());
            }
            Ok(StageResult::pass(records, json!({ "histograms": totals })))
        }
        StageConfig::Filter(p) => {
            let policy = filter_policy(p)?;
            let decisions: Vec<Decision> = records.par_iter().map(|r| apply_policy(r, &policy)).collect();
            let mut kept = Vec::with_capacity(records.len());
            let mut drops: BTreeMap<String, usize> = BTreeMap::new();
            let mut dropped = Vec::new();
            for (r, d) in records.into_iter().zip(decisions) {
                match d {
                    Decision::Keep => kept.push(r),
                    Decision::Drop { reason, .. } => {
                        *drops.entry(reason.clone()).or_insert(0) += 1;
                        dropped.push(json!({ "id": r.id, "reason": reason }));
                    }
                }
            }
            write_jsonl(&dir.join("drops.jsonl"), &dropped)?;
            Ok(StageResult {
                records: kept,
                drops,
                details: json!({ "rules": policy.rules.len() }),
            })
        }
        StageConfig::DedupExact(p) => {
            let (kept, manifest) = exact_dedup(records, p.buckets)?;
            dedup_result(dir, kept, manifest, "exact")
        }
        StageConfig::DedupUrl(_) => {
            let (kept, manifest) = url_dedup(records);
            dedup_result(dir, kept, manifest, "url")
        }
        StageConfig::DedupFuzzy(p) => {
            let params = ctx.cfg.minhash_params(p, stage_seed(seed, "dedup_fuzzy"));
            params.validate()?;
            let sigs = sign_records(&records, params);
            write_signature_cache(
                &dir.join("signatures.bin"),
                params,
                records.iter().zip(&sigs).filter_map(|(r, s)| s.as_ref().map(|s| (r.id.as_str(), s))),
            )?;
            let out = fuzzy_dedup_signed(records, &sigs, p.verify.then_some(p.verify_threshold))?;
            out.clusters.write_csv(&dir.join("clusters.csv"))?;
            let clusters = out.clusters.clusters.len();
            let mut res = dedup_result(dir, out.records, out.manifest, "fuzzy")?;
            res.details["clusters"] = json!(clusters);
            res.details["minhash_seed"] = json!(params.seed);
            Ok(res)
        }
        StageConfig::LmTrain(p) => {
            let lm = train_lm(&records, &p.lm_config())?;
            lm.save(&dir.join("lm.bin"))?;
            if p.write_arpa {
                lm.write_arpa(&dir.join("lm.arpa"))?;
            }
            let ngrams: Vec<usize> = (1..=lm.order()).map(|n| lm.num_ngrams(n)).collect();
            Ok(StageResult::pass(records, json!({ "vocab": lm.vocab().len(), "ngrams": ngrams })))
        }
        StageConfig::LmFilter(p) => {
            let path = p.model.clone().or_else(|| ctx.last_model.clone()).ok_or_else(|| {
                PipelineError::Config("lm_filter has no model".into())
            })?;
            let lm = NgramLm::load(&path)?;
            let (kept, manifest) = perplexity_filter(records, &lm, &p.filter_config())?;
            if manifest.input != manifest.kept + manifest.drops.len() {
                return Err(PipelineError::Invariant("perplexity filter counts do not add up".into()));
            }
            write_jsonl(&dir.join("drops.jsonl"), &manifest.drops)?;
            let mut drops = BTreeMap::new();
            drops.insert("perplexity_high".to_string(), manifest.dropped_high);
            drops.insert("perplexity_low".to_string(), manifest.dropped_low);
            drops.insert("no_tokens".to_string(), manifest.dropped_no_tokens);
            drops.retain(|_, n| *n > 0);
            Ok(StageResult {
                records: kept,
                drops,
                details: json!({ "groups": manifest.groups }),
            })
        }
        StageConfig::TokTrain(p) => {
            let seg = p.segmenter()?;
            let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
            let (tok, report) = train_tokenizer(texts, p.mode, &seg, &p.train_config())?;
            tok.check_invariants()?;
            tok.save(&dir.join("tokenizer.txt"))?;
            write_json(&dir.join("train_report.json"), &report)?;
            Ok(StageResult::pass(
                records,
                json!({ "vocab_size": report.vocab_size, "merges": report.merges, "warnings": report.warnings }),
            ))
        }
        StageConfig::TokEval(p) => {
            let path = p.tokenizer.clone().or_else(|| ctx.last_tokenizer.clone()).ok_or_else(|| {
                PipelineError::Config("tok_eval has no tokenizer".into())
            })?;
            let tok = Tokenizer::load(&path)?;
            let seg = p.segmenter()?;
            let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
            let report = morph_alignment_score(
                &tok,
                &texts,
                &seg,
                &EvalConfig {
                    weighted: p.weighted,
                    worst_n: p.worst_n,
                },
            )?;
            report.write_json(&dir.join("eval.json"))?;
            report.write_worst_csv(&dir.join("worst.csv"))?;
            Ok(StageResult::pass(
                records,
                json!({ "fertility": report.fertility, "morph_alignment": report.morph_alignment }),
            ))
        }
    }
}

/// Hash of the files a stage reads besides its input shard.
fn referenced_files(stage: &StageConfig) -> Vec<&Path> {
    match stage {
        StageConfig::Filter(p) => p.policy.iter().map(PathBuf::as_path).collect(),
        StageConfig::LmFilter(p) => p.model.iter().map(PathBuf::as_path).collect(),
        StageConfig::TokTrain(p) => p.table.iter().map(PathBuf::as_path).collect(),
        StageConfig::TokEval(p) => p.tokenizer.iter().chain(&p.table).map(PathBuf::as_path).collect(),
        _ => Vec::new(),
    }
}

fn stage_hash(upstream: &str, index: usize, stage: &StageConfig) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    h.update(upstream.as_bytes());
    h.update(index.to_le_bytes());
    h.update(serde_json::to_vec(stage).map_err(|e| PipelineError::Invariant(e.to_string()))?);
    for f in referenced_files(stage) {
        let (sum, _) = sha256_file(f).map_err(|e| io_err(f, e))?;
        h.update(sum.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn list_files(dir: &Path) -> Result<Vec<FileChecksum>, PipelineError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| io_err(&d, e))? {
            let p = entry.map_err(|e| io_err(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            if rel != SUMMARY && rel != SUCCESS {
                out.push(checksum(&p, rel)?);
            }
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

fn load_cached(dir: &Path) -> Option<StageSummary> {
    if !dir.join(SUCCESS).is_file() || !dir.join(PART).is_file() {
        return None;
    }
    let text = std::fs::read_to_string(dir.join(SUMMARY)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Runs every stage in order, reusing completed stage directories until the
/// first stage that has to be recomputed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let inputs = expand_inputs(&cfg.input_patterns())?;
    let config_json = serde_json::to_vec(cfg).map_err(|e| PipelineError::Invariant(e.to_string()))?;
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hex::encode(Sha256::digest(&config_json)),
        seed: cfg.seed,
        status: RunStatus::Failed,
        error: None,
        inputs: Vec::new(),
        input_records: 0,
        stages: Vec::new(),
        output: None,
    };
    for p in &inputs {
        manifest.inputs.push(checksum(p, p.to_string_lossy().into_owned())?);
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;

    let result = run_stages(cfg, &inputs, &mut manifest);
    match &result {
        Ok(()) => manifest.status = RunStatus::Succeeded,
        Err(e) => manifest.error = Some(e.to_string()),
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| PipelineError::Invariant(e.to_string()))?;
    write_atomic(&cfg.output_dir.join(MANIFEST), (text + "\n").as_bytes())?;
    result.map(|_| manifest)
}

fn run_stages(cfg: &PipelineConfig, inputs: &[PathBuf], manifest: &mut RunManifest) -> Result<(), PipelineError> {
    let mut upstream = {
        let mut h = Sha256::new();
        h.update(manifest.tool_version.as_bytes());
        h.update(cfg.seed.to_le_bytes());
        h.update(format!("{:?}|{:?}", cfg.dataset, cfg.parse_mode).as_bytes());
        for c in &manifest.inputs {
            h.update(c.sha256.as_bytes());
        }
        hex::encode(h.finalize())
    };
    let mut recompute = false;
    let mut prev_part: Option<PathBuf> = None;
    let mut last_model = None;
    let mut last_tokenizer = None;

    for (index, stage) in cfg.stages.iter().enumerate() {
        let name = stage.name();
        let hash = stage_hash(&upstream, index, stage)?;
        let dir_name = format!("stage-{index:02}-{name}-{}", &hash[..8]);
        let dir = cfg.output_dir.join(&dir_name);
        let started = Instant::now();

        let cached = if recompute { None } else { load_cached(&dir).filter(|s| s.hash == hash) };
        let mut summary = match cached {
            Some(mut s) => {
                info!("stage {index} {name}: reusing {dir_name}");
                s.cached = true;
                s
            }
            None => {
                recompute = true;
                info!("stage {index} {name}: running into {dir_name}");
                if dir.exists() {
                    std::fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                }
                std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                let records = match &prev_part {
                    Some(p) => read_records(std::slice::from_ref(p), ParseMode::Strict, None)?,
                    None => read_records(inputs, cfg.parse_mode, cfg.dataset.as_deref())?,
                };
                let input_records = records.len();
                let ctx = Context {
                    cfg,
                    dir: &dir,
                    last_model: last_model.clone(),
                    last_tokenizer: last_tokenizer.clone(),
                };
                let res = execute(stage, records, &ctx)?;
                write_shard(&dir.join(PART), &res.records)?;
                let summary = StageSummary {
                    index,
                    name: name.to_string(),
                    hash: hash.clone(),
                    dir: dir_name.clone(),
                    input_records,
                    output_records: res.records.len(),
                    drops: res.drops,
                    files: list_files(&dir)?,
                    details: res.details,
                    cached: false,
                    seconds: 0.0,
                };
                write_json(&dir.join(SUMMARY), &summary)?;
                std::fs::write(dir.join(SUCCESS), b"").map_err(|e| io_err(&dir, e))?;
                summary
            }
        };
        summary.seconds = started.elapsed().as_secs_f64();

        if index == 0 {
            manifest.input_records = summary.input_records;
        }
        let expected = manifest.stages.last().map_or(manifest.input_records, |s| s.output_records);
        if summary.input_records != expected {
            return Err(PipelineError::Invariant(format!(
                "stage {index} read {} records but the previous stage wrote {expected}",
                summary.input_records
            )));
        }
        if summary.input_records != summary.output_records + summary.drops.values().sum::<usize>() {
            return Err(PipelineError::Invariant(format!("stage {index} drop counts do not add up")));
        }

        match stage {
            StageConfig::LmTrain(_) => last_model = Some(dir.join("lm.bin")),
            StageConfig::TokTrain(_) => last_tokenizer = Some(dir.join("tokenizer.txt")),
            _ => {}
        }
        prev_part = Some(dir.join(PART));
        upstream = hash;
        manifest.stages.push(summary);
    }

    let part = prev_part.expect("at least one stage");
    manifest.output = Some(checksum(&part, part.to_string_lossy().into_owned())?);
    Ok(())
}
