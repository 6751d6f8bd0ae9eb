//! Ten-bin calibration histograms with per-bin reservoir samples, used to pick
//! signal thresholds by inspecting random records from each score range.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_signals, QualityError, Signal, SignalRange};
use crate::record::Record;

pub const NUM_BINS: usize = 10;

/// Maps a score in `[0, 1]` to one of ten bins of width 0.1. Scores of 1.0
/// (and anything above) land in the last bin, negatives in the first.
pub fn bin_index(score: f64) -> usize {
    if score.is_nan() || score <= 0.0 {
        return 0;
    }
    ((score * NUM_BINS as f64) as usize).min(NUM_BINS - 1)
}

/// Per-corpus min-max scaling applied to signals whose range is not `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaling {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaling {
    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramCalibration {
    pub signal: String,
    pub scaling: Option<MinMaxScaling>,
    pub capacity: usize,
    pub counts: [u64; NUM_BINS],
    /// Per-bin uniform sample of `(record id, raw score)`.
    pub samples: Vec<Vec<(String, f64)>>,
}

impl HistogramCalibration {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(i: usize) -> (f64, f64) {
        (i as f64 / NUM_BINS as f64, (i + 1) as f64 / NUM_BINS as f64)
    }

    /// `bin_low,bin_high,count` rows, one per bin.
    pub fn write_csv(&self, path: &Path) -> Result<(), QualityError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_low", "bin_high", "count"])?;
        for (i, count) in self.counts.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(i);
            w.write_record([format!("{lo:.1}"), format!("{hi:.1}"), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One JSON object per sampled record: `{"bin":..,"id":..,"score":..}`.
    pub fn write_samples_jsonl(&self, path: &Path) -> Result<(), QualityError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (bin, sample) in self.samples.iter().enumerate() {
            for (id, score) in sample {
                let line = serde_json::json!({ "bin": bin, "id": id, "score": score });
                writeln!(out, "{line}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Reservoir {
    seen: u64,
    items: Vec<(String, f64)>,
}

/// Streaming histogram construction. Partial builders from different shards
/// combine with [`HistogramBuilder::merge`].
#[derive(Debug, Clone)]
pub struct HistogramBuilder {
    signal: String,
    scaling: Option<MinMaxScaling>,
    capacity: usize,
    bins: Vec<Reservoir>,
    rng: ChaCha8Rng,
}

impl HistogramBuilder {
    pub fn new(
        signal: impl Into<String>,
        capacity: usize,
        scaling: Option<MinMaxScaling>,
        seed: u64,
    ) -> Self {
        Self {
            signal: signal.into(),
            scaling,
            capacity,
            bins: vec![
                Reservoir {
                    seen: 0,
                    items: Vec::new()
                };
                NUM_BINS
            ],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, id: &str, score: f64) {
        let scaled = self.scaling.map_or(score, |s| s.apply(score));
        let bin = &mut self.bins[bin_index(scaled)];
        bin.seen += 1;
        if bin.items.len() < self.capacity {
            bin.items.push((id.to_string(), score));
        } else if self.capacity > 0 {
            let j = self.rng.gen_range(0..bin.seen);
            if (j as usize) < self.capacity {
                bin.items[j as usize] = (id.to_string(), score);
            }
        }
    }

    /// Combines two partial histograms over disjoint record sets. Counts add;
    /// each merged reservoir is drawn without replacement from the two inputs,
    /// choosing a side with probability proportional to the part of its
    /// population not yet represented.
    pub fn merge(mut self, other: HistogramBuilder) -> HistogramBuilder {
        assert_eq!(self.signal, other.signal, "merging histograms of different signals");
        for (mine, theirs) in self.bins.iter_mut().zip(other.bins) {
            let total = mine.seen + theirs.seen;
            let take = (self.capacity as u64).min(total) as usize;
            let mut a = std::mem::take(&mut mine.items);
            let mut b = theirs.items;
            let (mut rem_a, mut rem_b) = (mine.seen, theirs.seen);
            let mut merged = Vec::with_capacity(take);
            while merged.len() < take {
                let pick_a = self.rng.gen_range(0..rem_a + rem_b) < rem_a;
                let (pool, rem) = if pick_a { (&mut a, &mut rem_a) } else { (&mut b, &mut rem_b) };
                let idx = self.rng.gen_range(0..pool.len());
                merged.push(pool.swap_remove(idx));
                *rem -= 1;
            }
            mine.seen = total;
            mine.items = merged;
        }
        self
    }

    pub fn finish(self) -> HistogramCalibration {
        let mut counts = [0u64; NUM_BINS];
        for (c, b) in counts.iter_mut().zip(&self.bins) {
            *c = b.seen;
        }
        HistogramCalibration {
            signal: self.signal,
            scaling: self.scaling,
            capacity: self.capacity,
            counts,
            samples: self.bins.into_iter().map(|b| b.items).collect(),
        }
    }
}

fn score_of(record: &Record, signal: Signal) -> f64 {
    record
        .quality_signals
        .get(signal.name())
        .copied()
        .unwrap_or_else(|| compute_signals(&record.text).get(signal))
}

/// Builds the calibration histogram of `signal` over `records`.
///
/// Fraction-valued signals are binned directly in one pass. Signals with
/// unbounded range are min-max scaled over the corpus first, which takes one
/// extra pass to find the extremes.
pub fn build_histogram(
    records: &[Record],
    signal: &str,
    capacity: usize,
    seed: u64,
) -> Result<HistogramCalibration, QualityError> {
    let sig: Signal = signal.parse()?;
    let scores: Vec<f64> = records.iter().map(|r| score_of(r, sig)).collect();
    let scaling = match sig.range() {
        SignalRange::Fraction => None,
        SignalRange::Count | SignalRange::Ratio => {
            let (min, max) = scores
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            (min.is_finite()).then_some(MinMaxScaling { min, max })
        }
    };
    let mut builder = HistogramBuilder::new(sig.name(), capacity, scaling, seed);
    for (record, score) in records.iter().zip(scores) {
        builder.push(&record.id, score);
    }
    Ok(builder.finish())
}
