use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dedup::{MinHashParams, DEFAULT_BUCKET_COUNT, DEFAULT_VERIFY_THRESHOLD};
use crate::ngram::{Cutoff, LmConfig, PerplexityFilterConfig, Smoothing};
use crate::quality::{FilterPolicy, Rule, Signal};
use crate::record::{NormalizationOptions, ParseMode, DEFAULT_MIN_REPEAT};
use crate::tokenizer::{load_segmentation_table, Mode, Segmenter, TrainConfig, DEFAULT_SPECIALS};

pub const CONFIG_VERSION: u32 = 1;

/// Top-level pipeline file.
///
/// ```toml
/// version = 1
/// seed = 7
/// inputs = ["raw/*.jsonl"]
/// output_dir = "out"
/// dataset = "web-ar"
///
/// [[stages]]
/// stage = "clean"
///
/// [[stages]]
/// stage = "dedup_exact"
/// ```
///
/// Relative paths are resolved against `base_dir`, which [`PipelineConfig::load`]
/// sets to the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    /// Stored as `metadata.dataset` on input records that lack one.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub parse_mode: ParseMode,
    pub stages: Vec<StageConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageConfig {
    Clean(CleanParams),
    Signals(EmptyParams),
    Calibrate(CalibrateParams),
    Filter(FilterParams),
    DedupExact(DedupExactParams),
    DedupUrl(EmptyParams),
    DedupFuzzy(DedupFuzzyParams),
    LmTrain(LmTrainParams),
    LmFilter(LmFilterParams),
    TokTrain(TokTrainParams),
    TokEval(TokEvalParams),
}

impl StageConfig {
    pub const NAMES: [&'static str; 11] = [
        "clean",
        "signals",
        "calibrate",
        "filter",
        "dedup_exact",
        "dedup_url",
        "dedup_fuzzy",
        "lm_train",
        "lm_filter",
        "tok_train",
        "tok_eval",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StageConfig::Clean(_) => "clean",
            StageConfig::Signals(_) => "signals",
            StageConfig::Calibrate(_) => "calibrate",
            StageConfig::Filter(_) => "filter",
            StageConfig::DedupExact(_) => "dedup_exact",
            StageConfig::DedupUrl(_) => "dedup_url",
            StageConfig::DedupFuzzy(_) => "dedup_fuzzy",
            StageConfig::LmTrain(_) => "lm_train",
            StageConfig::LmFilter(_) => "lm_filter",
            StageConfig::TokTrain(_) => "tok_train",
            StageConfig::TokEval(_) => "tok_eval",
        }
    }

    /// Parses a bare parameter block (without the `stage` key) for `name`.
    pub fn from_params(name: &str, params: &str) -> Result<Self, PipelineError> {
        if !Self::NAMES.contains(&name) {
            return Err(PipelineError::Config(format!("unknown stage `{name}`")));
        }
        let mut table: toml::Table =
            toml::from_str(params).map_err(|e| PipelineError::Config(format!("stage parameters: {e}")))?;
        table.insert("stage".into(), toml::Value::String(name.into()));
        table
            .try_into()
            .map_err(|e| PipelineError::Config(format!("stage parameters: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanParams {
    pub strip_html: bool,
    pub arabic: NormalizationOptions,
    /// Strip lines repeated across records sharing this metadata key.
    pub boilerplate_key: Option<String>,
    pub min_repeat: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self {
            strip_html: true,
            arabic: NormalizationOptions::default(),
            boilerplate_key: Some("source".into()),
            min_repeat: DEFAULT_MIN_REPEAT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateParams {
    /// Signals to histogram; empty means all 20.
    pub signals: Vec<String>,
    pub capacity: usize,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self {
            signals: Vec::new(),
            capacity: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Policy file.
    pub policy: Option<PathBuf>,
    /// Inline rules, used when no policy file is given.
    pub rules: Option<Vec<Rule>>,
    /// Built-in policy name: `arabic_default`.
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupExactParams {
    pub buckets: usize,
}

impl Default for DedupExactParams {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKET_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupFuzzyParams {
    pub gram_size: usize,
    pub bands: usize,
    pub rows: usize,
    pub verify: bool,
    pub verify_threshold: f64,
}

impl Default for DedupFuzzyParams {
    fn default() -> Self {
        let p = MinHashParams::default();
        Self {
            gram_size: p.gram_size,
            bands: p.bands,
            rows: p.rows,
            verify: true,
            verify_threshold: DEFAULT_VERIFY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmTrainParams {
    pub order: usize,
    pub vocab_cap: usize,
    pub prune: Vec<u64>,
    pub smoothing: Smoothing,
    pub write_arpa: bool,
}

impl Default for LmTrainParams {
    fn default() -> Self {
        let c = LmConfig::default();
        Self {
            order: c.order,
            vocab_cap: c.vocab_cap,
            prune: c.prune,
            smoothing: c.smoothing,
            write_arpa: false,
        }
    }
}

impl LmTrainParams {
    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            order: self.order,
            vocab_cap: self.vocab_cap,
            prune: self.prune.clone(),
            smoothing: self.smoothing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmFilterParams {
    /// Model file; defaults to the model of the closest preceding `lm_train` stage.
    pub model: Option<PathBuf>,
    pub cutoff: Cutoff,
    pub group_by: Option<String>,
}

impl Default for LmFilterParams {
    fn default() -> Self {
        let c = PerplexityFilterConfig::default();
        Self {
            model: None,
            cutoff: c.cutoff,
            group_by: c.group_by,
        }
    }
}

impl LmFilterParams {
    pub fn filter_config(&self) -> PerplexityFilterConfig {
        PerplexityFilterConfig {
            cutoff: self.cutoff.clone(),
            group_by: self.group_by.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    #[default]
    SingleMorpheme,
    RuleBased,
    /// Lookup table (`table`) with rule-based fallback.
    LookupTable,
    /// Lookup table only; unknown words stay whole.
    LookupOnly,
}

fn build_segmenter(kind: SegmenterKind, table: Option<&Path>) -> Result<Segmenter, PipelineError> {
    let load = || -> Result<BTreeMap<String, Vec<String>>, PipelineError> {
        let path = table.ok_or_else(|| PipelineError::Config("lookup segmenters need a `table` file".into()))?;
        load_segmentation_table(path).map_err(|e| PipelineError::Config(e.to_string()))
    };
    Ok(match kind {
        SegmenterKind::SingleMorpheme => Segmenter::single_morpheme(),
        SegmenterKind::RuleBased => Segmenter::rule_based(),
        SegmenterKind::LookupTable => Segmenter::lookup_table(load()?),
        SegmenterKind::LookupOnly => Segmenter::lookup_only(load()?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokTrainParams {
    pub mode: Mode,
    pub vocab_size: usize,
    pub specials: Vec<String>,
    pub reserved: usize,
    pub include_diacritics: bool,
    pub strict_boundaries: bool,
    pub min_frequency: u64,
    pub segmenter: SegmenterKind,
    pub table: Option<PathBuf>,
}

impl Default for TokTrainParams {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            mode: Mode::Vanilla,
            vocab_size: c.vocab_size,
            specials: DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect(),
            reserved: c.reserved,
            include_diacritics: c.include_diacritics,
            strict_boundaries: c.strict_boundaries,
            min_frequency: c.min_frequency,
            segmenter: SegmenterKind::SingleMorpheme,
            table: None,
        }
    }
}

impl TokTrainParams {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            vocab_size: self.vocab_size,
            specials: self.specials.clone(),
            reserved: self.reserved,
            include_diacritics: self.include_diacritics,
            strict_boundaries: self.strict_boundaries,
            min_frequency: self.min_frequency,
        }
    }

    pub fn segmenter(&self) -> Result<Segmenter, PipelineError> {
        build_segmenter(self.segmenter, self.table.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokEvalParams {
    /// Tokenizer file; defaults to the closest preceding `tok_train` stage.
    pub tokenizer: Option<PathBuf>,
    pub segmenter: SegmenterKind,
    pub table: Option<PathBuf>,
    pub weighted: bool,
    pub worst_n: usize,
}

impl Default for TokEvalParams {
    fn default() -> Self {
        Self {
            tokenizer: None,
            segmenter: SegmenterKind::RuleBased,
            table: None,
            weighted: true,
            worst_n: 50,
        }
    }
}

impl TokEvalParams {
    pub fn segmenter(&self) -> Result<Segmenter, PipelineError> {
        build_segmenter(self.segmenter, self.table.as_deref())
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.resolve_paths();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    fn resolve(&self, p: &mut PathBuf) {
        if p.is_relative() {
            *p = self.base_dir.join(&*p);
        }
    }

    /// Makes every file path in the config absolute with respect to `base_dir`.
    pub fn resolve_paths(&mut self) {
        let mut out = std::mem::take(&mut self.output_dir);
        self.resolve(&mut out);
        self.output_dir = out;
        let mut stages = std::mem::take(&mut self.stages);
        for stage in &mut stages {
            let paths: Vec<&mut PathBuf> = match stage {
                StageConfig::Filter(p) => p.policy.iter_mut().collect(),
                StageConfig::LmFilter(p) => p.model.iter_mut().collect(),
                StageConfig::TokTrain(p) => p.table.iter_mut().collect(),
                StageConfig::TokEval(p) => p.tokenizer.iter_mut().chain(p.table.iter_mut()).collect(),
                _ => Vec::new(),
            };
            for p in paths {
                self.resolve(p);
            }
        }
        self.stages = stages;
    }

    /// Input glob patterns made absolute against `base_dir`.
    pub fn input_patterns(&self) -> Vec<String> {
        self.inputs
            .iter()
            .map(|p| {
                if Path::new(p).is_relative() {
                    self.base_dir.join(p).to_string_lossy().into_owned()
                } else {
                    p.clone()
                }
            })
            .collect()
    }

    /// Schema checks that need no input data. Referenced files are opened.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.inputs.is_empty() {
            return bad("no inputs".into());
        }
        if self.stages.is_empty() {
            return bad("no stages".into());
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let ctx = |e: PipelineError| match e {
                PipelineError::Config(m) => PipelineError::Config(format!("stage {i} ({}): {m}", stage.name())),
                other => other,
            };
            self.validate_stage(i, stage).map_err(ctx)?;
        }
        Ok(())
    }

    fn validate_stage(&self, i: usize, stage: &StageConfig) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let before = &self.stages[..i];
        match stage {
            StageConfig::Clean(p) => {
                if !(0.0..=1.0).contains(&p.min_repeat) {
                    return bad("min_repeat must be in [0, 1]");
                }
            }
            StageConfig::Calibrate(p) => {
                for s in &p.signals {
                    s.parse::<Signal>()?;
                }
            }
            StageConfig::Filter(p) => {
                filter_policy(p)?;
            }
            StageConfig::DedupExact(p) => {
                if p.buckets == 0 {
                    return bad("buckets must be positive");
                }
            }
            StageConfig::DedupFuzzy(p) => {
                self.minhash_params(p, 0).validate()?;
                if !(0.0..=1.0).contains(&p.verify_threshold) {
                    return bad("verify_threshold must be in [0, 1]");
                }
            }
            StageConfig::LmTrain(p) => {
                if p.order == 0 {
                    return bad("order must be at least 1");
                }
            }
            StageConfig::LmFilter(p) => {
                if let Cutoff::Percentile { high_pct, low_pct } = p.cutoff {
                    if !(0.0..50.0).contains(&high_pct) || !(0.0..50.0).contains(&low_pct) {
                        return bad("percentiles must be in [0, 50)");
                    }
                }
                let trained = before.iter().any(|s| matches!(s, StageConfig::LmTrain(_)));
                match &p.model {
                    Some(m) if !m.is_file() => return bad(&format!("model file {} not found", m.display())),
                    None if !trained => return bad("no `model` given and no earlier lm_train stage"),
                    _ => {}
                }
            }
            StageConfig::TokTrain(p) => {
                p.segmenter()?;
                if p.mode == Mode::Vanilla && p.segmenter != SegmenterKind::SingleMorpheme {
                    return bad("vanilla mode ignores the segmenter; use mode = \"morph\"");
                }
            }
            StageConfig::TokEval(p) => {
                p.segmenter()?;
                let trained = before.iter().any(|s| matches!(s, StageConfig::TokTrain(_)));
                match &p.tokenizer {
                    Some(t) if !t.is_file() => return bad(&format!("tokenizer file {} not found", t.display())),
                    None if !trained => return bad("no `tokenizer` given and no earlier tok_train stage"),
                    _ => {}
                }
            }
            StageConfig::Signals(_) | StageConfig::DedupUrl(_) => {}
        }
        Ok(())
    }

    pub(crate) fn minhash_params(&self, p: &DedupFuzzyParams, seed: u64) -> MinHashParams {
        MinHashParams {
            gram_size: p.gram_size,
            bands: p.bands,
            rows: p.rows,
            seed,
        }
    }
}

pub(crate) fn filter_policy(p: &FilterParams) -> Result<FilterPolicy, PipelineError> {
    let given = p.policy.is_some() as u8 + p.rules.is_some() as u8 + p.preset.is_some() as u8;
    if given != 1 {
        return Err(PipelineError::Config(
            "filter needs exactly one of `policy`, `rules` or `preset`".into(),
        ));
    }
    if let Some(path) = &p.policy {
        return FilterPolicy::load(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())));
    }
    if let Some(rules) = &p.rules {
        return Ok(FilterPolicy::new(rules.clone())?);
    }
    match p.preset.as_deref() {
        Some("arabic_default") => Ok(FilterPolicy::arabic_default()),
        Some(other) => Err(PipelineError::Config(format!("unknown policy preset `{other}`"))),
        None => unreachable!(),
    }
}
