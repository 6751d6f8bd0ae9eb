use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_signals, min_long_paragraphs, QualityError, QualitySignalReport, Signal};
use super::{ARABIC_PARAGRAPHS, C4_PARAGRAPHS};
use crate::record::Record;

pub const POLICY_VERSION: u32 = 1;

/// One keep/drop rule. A record violating any rule is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    Signal {
        signal: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    /// Bounds on an externally supplied score (`external_scores` on the record).
    /// A record without that score violates the rule.
    External {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    LongParagraphs {
        min_chars: usize,
        min_paragraphs: usize,
    },
}

impl Rule {
    pub fn signal(signal: Signal, min: Option<f64>, max: Option<f64>) -> Self {
        Rule::Signal {
            signal: signal.name().to_string(),
            min,
            max,
        }
    }

    pub fn c4_paragraphs() -> Self {
        Rule::LongParagraphs {
            min_chars: C4_PARAGRAPHS.0,
            min_paragraphs: C4_PARAGRAPHS.1,
        }
    }

    pub fn arabic_paragraphs() -> Self {
        Rule::LongParagraphs {
            min_chars: ARABIC_PARAGRAPHS.0,
            min_paragraphs: ARABIC_PARAGRAPHS.1,
        }
    }

    /// Label used as the drop reason.
    pub fn reason(&self) -> String {
        match self {
            Rule::Signal { signal, .. } => signal.clone(),
            Rule::External { name, .. } => format!("external:{name}"),
            Rule::LongParagraphs { .. } => "long_paragraphs".to_string(),
        }
    }
}

fn within(x: f64, min: Option<f64>, max: Option<f64>) -> bool {
    min.is_none_or(|m| x >= m) && max.is_none_or(|m| x <= m)
}

/// Ordered rule list, loaded from a versioned TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPolicy {
    pub version: u32,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self::empty()
    }
}

impl FilterPolicy {
    pub fn empty() -> Self {
        Self {
            version: POLICY_VERSION,
            rules: Vec::new(),
        }
    }

    pub fn new(rules: Vec<Rule>) -> Result<Self, QualityError> {
        let policy = Self {
            version: POLICY_VERSION,
            rules,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Shipped policy for Arabic corpora: unique-word fraction of at least
    /// 0.2 (repetitive advertising), mostly Arabic letters, and the relaxed
    /// one-long-paragraph rule.
    pub fn arabic_default() -> Self {
        Self::new(vec![
            Rule::signal(Signal::FracUniqueWords, Some(0.2), None),
            Rule::signal(Signal::ArabicFraction, Some(0.5), None),
            Rule::arabic_paragraphs(),
        ])
        .expect("built-in policy is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, QualityError> {
        let policy: FilterPolicy = toml::from_str(s)?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self, QualityError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        if self.version != POLICY_VERSION {
            return Err(QualityError::InvalidPolicy(format!(
                "unsupported policy version {} (expected {POLICY_VERSION})",
                self.version
            )));
        }
        for (i, rule) in self.rules.iter().enumerate() {
            let (min, max) = match rule {
                Rule::Signal { signal, min, max } => {
                    signal.parse::<Signal>()?;
                    (*min, *max)
                }
                Rule::External { name, min, max } => {
                    if name.is_empty() {
                        return Err(QualityError::InvalidPolicy(format!(
                            "rule {i}: empty external score name"
                        )));
                    }
                    (*min, *max)
                }
                Rule::LongParagraphs { .. } => (None, None),
            };
            if min.is_some_and(f64::is_nan) || max.is_some_and(f64::is_nan) {
                return Err(QualityError::InvalidPolicy(format!("rule {i}: NaN bound")));
            }
            if let (Some(lo), Some(hi)) = (min, max) {
                if lo > hi {
                    return Err(QualityError::InvalidPolicy(format!(
                        "rule {i} ({}): min {lo} > max {hi}",
                        rule.reason()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Keep,
    Drop { rule: usize, reason: String },
}

impl Decision {
    pub fn is_keep(&self) -> bool {
        matches!(self, Decision::Keep)
    }
}

/// Evaluates the rules in order and reports the first violation. Signals the
/// record does not carry are computed from its text.
pub fn apply_policy(record: &Record, policy: &FilterPolicy) -> Decision {
    let mut computed: Option<QualitySignalReport> = None;
    for (i, rule) in policy.rules.iter().enumerate() {
        let ok = match rule {
            Rule::Signal { signal, min, max } => {
                let value = match record.quality_signals.get(signal) {
                    Some(v) => *v,
                    None => {
                        let sig: Signal = signal.parse().expect("policy validated at load");
                        computed
                            .get_or_insert_with(|| compute_signals(&record.text))
                            .get(sig)
                    }
                };
                within(value, *min, *max)
            }
            Rule::External { name, min, max } => record
                .external_scores
                .get(name)
                .is_some_and(|&v| within(v, *min, *max)),
            Rule::LongParagraphs {
                min_chars,
                min_paragraphs,
            } => min_long_paragraphs(&record.text, *min_chars, *min_paragraphs),
        };
        if !ok {
            return Decision::Drop {
                rule: i,
                reason: rule.reason(),
            };
        }
    }
    Decision::Keep
}
