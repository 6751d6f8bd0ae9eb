use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use super::PipelineError;
use crate::record::{open_shard, ParseMode};

/// Running summary of one stored signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSketch {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Ten equal-width bins between `min` and `max` are not known in one
    /// pass, so values are binned over [0, 1] and clamped.
    pub histogram: [u64; 10],
    #[serde(skip)]
    sum: f64,
}

impl SignalSketch {
    fn new() -> Self {
        Self {
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            mean: 0.0,
            histogram: [0; 10],
            sum: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.sum += x;
        self.histogram[((x.clamp(0.0, 1.0) * 10.0) as usize).min(9)] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSummary {
    pub shards: usize,
    pub records: u64,
    /// Whitespace-separated tokens.
    pub words: u64,
    pub chars: u64,
    /// Signals stored on the records, keyed by name.
    pub signals: BTreeMap<String, SignalSketch>,
}

/// One streaming pass over `shards` in the given order.
pub fn stats(shards: &[PathBuf], mode: ParseMode) -> Result<StatsSummary, PipelineError> {
    let mut s = StatsSummary {
        shards: shards.len(),
        records: 0,
        words: 0,
        chars: 0,
        signals: BTreeMap::new(),
    };
    for path in shards {
        for r in open_shard(path, mode)? {
            let r = r?;
            s.records += 1;
            s.words += r.text.split_whitespace().count() as u64;
            s.chars += r.text.chars().count() as u64;
            for (k, v) in &r.quality_signals {
                s.signals.entry(k.clone()).or_insert_with(SignalSketch::new).push(*v);
            }
        }
    }
    for sk in s.signals.values_mut() {
        sk.mean = sk.sum / sk.count as f64;
    }
    Ok(s)
}
