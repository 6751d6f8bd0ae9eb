use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LmError, NgramLm};
use crate::record::Record;

/// Smallest group for which percentile cutoffs are computed.
pub const MIN_PERCENTILE_RECORDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Cutoff {
    /// Drop the highest `high_pct` and lowest `low_pct` percent of each group.
    Percentile { high_pct: f64, low_pct: f64 },
    Absolute {
        #[serde(default)]
        max_perplexity: Option<f64>,
        #[serde(default)]
        min_perplexity: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerplexityFilterConfig {
    pub cutoff: Cutoff,
    /// Metadata key whose value partitions records into independently
    /// thresholded groups, e.g. `dataset`.
    pub group_by: Option<String>,
}

impl Default for PerplexityFilterConfig {
    fn default() -> Self {
        Self {
            cutoff: Cutoff::Percentile {
                high_pct: 5.0,
                low_pct: 0.0,
            },
            group_by: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCutoffs {
    pub group: String,
    pub scored: usize,
    /// Records scoring at or above this were dropped as high perplexity.
    pub high_cutoff: Option<f64>,
    /// Records scoring at or below this were dropped as low perplexity.
    pub low_cutoff: Option<f64>,
    pub dropped_high: usize,
    pub dropped_low: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerplexityDropReason {
    High,
    Low,
    NoTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerplexityDrop {
    pub id: String,
    pub perplexity: Option<f64>,
    pub reason: PerplexityDropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PerplexityManifest {
    pub input: usize,
    pub kept: usize,
    pub dropped_high: usize,
    pub dropped_low: usize,
    pub dropped_no_tokens: usize,
    pub groups: Vec<GroupCutoffs>,
    pub drops: Vec<PerplexityDrop>,
}

fn tail_count(n: usize, pct: f64) -> usize {
    ((n as f64 * pct / 100.0) - 1e-9).ceil().max(0.0) as usize
}

/// Two passes: score every record, then drop per-group tails. Ranking is by
/// (perplexity, id), so the drop set does not depend on input order.
/// Records without any word are dropped.
pub fn perplexity_filter(
    records: Vec<Record>,
    lm: &NgramLm,
    config: &PerplexityFilterConfig,
) -> Result<(Vec<Record>, PerplexityManifest), LmError> {
    if let Cutoff::Percentile { high_pct, low_pct } = config.cutoff {
        for p in [high_pct, low_pct] {
            if !(0.0..50.0).contains(&p) {
                return Err(LmError::InvalidPercentile(p));
            }
        }
    }
    let scores: Vec<Option<f64>> = records.par_iter().map(|r| lm.perplexity(r).ok()).collect();

    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if scores[i].is_some() {
            let g = match &config.group_by {
                Some(key) => r.metadata.get(key).cloned().unwrap_or_default(),
                None => String::new(),
            };
            groups.entry(g).or_default().push(i);
        }
    }

    let mut verdict: Vec<Option<PerplexityDropReason>> = scores
        .iter()
        .map(|s| s.is_none().then_some(PerplexityDropReason::NoTokens))
        .collect();
    let mut manifest = PerplexityManifest {
        input: records.len(),
        ..Default::default()
    };
    for (group, mut members) in groups {
        let score = |i: usize| scores[i].unwrap();
        members.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then_with(|| records[a].id.cmp(&records[b].id)));
        let n = members.len();
        let (high, low): (Vec<usize>, Vec<usize>) = match config.cutoff {
            Cutoff::Percentile { high_pct, low_pct } => {
                if n < MIN_PERCENTILE_RECORDS {
                    return Err(LmError::TooFewRecords {
                        group,
                        n,
                        min: MIN_PERCENTILE_RECORDS,
                    });
                }
                let k_high = tail_count(n, high_pct);
                let k_low = tail_count(n, low_pct).min(n - k_high);
                (members[n - k_high..].to_vec(), members[..k_low].to_vec())
            }
            Cutoff::Absolute {
                max_perplexity,
                min_perplexity,
            } => {
                let high: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| max_perplexity.is_some_and(|m| score(i) > m))
                    .collect();
                let low = members
                    .iter()
                    .copied()
                    .filter(|&i| !high.contains(&i) && min_perplexity.is_some_and(|m| score(i) < m))
                    .collect();
                (high, low)
            }
        };
        for &i in &high {
            verdict[i] = Some(PerplexityDropReason::High);
        }
        for &i in &low {
            verdict[i] = Some(PerplexityDropReason::Low);
        }
        manifest.groups.push(GroupCutoffs {
            group,
            scored: n,
            high_cutoff: high.iter().map(|&i| score(i)).reduce(f64::min),
            low_cutoff: low.iter().map(|&i| score(i)).reduce(f64::max),
            dropped_high: high.len(),
            dropped_low: low.len(),
        });
    }

    let mut kept = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        match verdict[i] {
            None => kept.push(r),
            Some(reason) => {
                match reason {
                    PerplexityDropReason::High => manifest.dropped_high += 1,
                    PerplexityDropReason::Low => manifest.dropped_low += 1,
                    PerplexityDropReason::NoTokens => manifest.dropped_no_tokens += 1,
                }
                manifest.drops.push(PerplexityDrop {
                    id: r.id,
                    perplexity: scores[i],
                    reason,
                });
            }
        }
    }
    manifest.kept = kept.len();
    Ok((kept, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{train_lm_texts, LmConfig};
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    const DOMAIN: [&str; 12] = [
        "the", "cat", "sat", "on", "mat", "dog", "ran", "to", "park", "and", "a", "home",
    ];

    fn domain_sentence(rng: &mut ChaCha8Rng) -> String {
        let templates = [
            "the cat sat on the mat",
            "the dog ran to the park",
            "a cat and a dog ran home",
            "the dog sat on a mat",
        ];
        templates[rng.gen_range(0..templates.len())].to_string()
    }

    fn noise_sentence(rng: &mut ChaCha8Rng) -> String {
        (0..6).map(|_| format!("z{}", rng.gen_range(0..5000))).collect::<Vec<_>>().join(" ")
    }

    fn lm() -> NgramLm {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train: Vec<String> = (0..200).map(|_| domain_sentence(&mut rng)).collect();
        train_lm_texts(&train, &LmConfig::with_order(3)).unwrap()
    }

    #[test]
    fn drops_exact_top_tail() {
        let lm = lm();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let records: Vec<Record> = (0..100)
            .map(|i| {
                let text = (0..3)
                    .map(|_| DOMAIN[rng.gen_range(0..DOMAIN.len())])
                    .collect::<Vec<_>>()
                    .join(" ");
                Record::new(format!("r{i:03}"), text)
            })
            .collect();
        let (kept, m) = perplexity_filter(records.clone(), &lm, &PerplexityFilterConfig::default()).unwrap();
        assert_eq!(m.dropped_high, 5);
        assert_eq!(kept.len(), 95);

        // oracle: sort (ppl, id), take the last five
        let mut ranked: Vec<(f64, String)> = records.iter().map(|r| (lm.perplexity(r).unwrap(), r.id.clone())).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: BTreeSet<String> = ranked[95..].iter().map(|x| x.1.clone()).collect();
        let got: BTreeSet<String> = m.drops.iter().map(|d| d.id.clone()).collect();
        assert_eq!(got, want);

        let mut shuffled = records;
        shuffled.shuffle(&mut rng);
        let (_, m2) = perplexity_filter(shuffled, &lm, &PerplexityFilterConfig::default()).unwrap();
        let got2: BTreeSet<String> = m2.drops.iter().map(|d| d.id.clone()).collect();
        assert_eq!(got2, want);
    }

    #[test]
    fn noise_lands_in_the_tail() {
        let lm = lm();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut records = Vec::new();
        for i in 0..380 {
            records.push(Record::new(format!("d{i}"), domain_sentence(&mut rng)));
        }
        for i in 0..20 {
            records.push(Record::new(format!("n{i}"), noise_sentence(&mut rng)));
        }
        records.shuffle(&mut rng);
        let (_, m) = perplexity_filter(records, &lm, &PerplexityFilterConfig::default()).unwrap();
        let noise = m.drops.iter().filter(|d| d.id.starts_with('n')).count();
        assert!(noise >= 18, "{noise}");
    }

    #[test]
    fn low_side_and_monotonicity() {
        let lm = lm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<Record> = (0..60)
            .map(|i| Record::new(format!("r{i}"), if i % 2 == 0 { domain_sentence(&mut rng) } else { noise_sentence(&mut rng) }))
            .collect();
        let cfg = |h: f64, l: f64| PerplexityFilterConfig {
            cutoff: Cutoff::Percentile { high_pct: h, low_pct: l },
            group_by: None,
        };
        let (_, none) = perplexity_filter(records.clone(), &lm, &cfg(5.0, 0.0)).unwrap();
        assert_eq!(none.dropped_low, 0);
        let (_, low) = perplexity_filter(records.clone(), &lm, &cfg(0.0, 10.0)).unwrap();
        assert_eq!(low.dropped_low, 6);

        let mut prev: BTreeSet<String> = BTreeSet::new();
        for h in [0.0, 5.0, 10.0, 25.0, 49.0] {
            let (_, m) = perplexity_filter(records.clone(), &lm, &cfg(h, 0.0)).unwrap();
            let cur: BTreeSet<String> = m.drops.iter().map(|d| d.id.clone()).collect();
            assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }

    #[test]
    fn small_groups_need_absolute_cutoffs() {
        let lm = lm();
        let records: Vec<Record> = (0..10).map(|i| Record::new(format!("r{i}"), "the cat sat")).collect();
        assert!(matches!(
            perplexity_filter(records.clone(), &lm, &PerplexityFilterConfig::default()),
            Err(LmError::TooFewRecords { n: 10, .. })
        ));
        let abs = PerplexityFilterConfig {
            cutoff: Cutoff::Absolute {
                max_perplexity: Some(1e9),
                min_perplexity: None,
            },
            group_by: None,
        };
        let (kept, _) = perplexity_filter(records, &lm, &abs).unwrap();
        assert_eq!(kept.len(), 10);
    }

    #[test]
    fn per_dataset_groups() {
        let lm = lm();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(Record::new(format!("a{i}"), domain_sentence(&mut rng)).with_meta("dataset", "web"));
            records.push(Record::new(format!("b{i}"), noise_sentence(&mut rng)).with_meta("dataset", "books"));
        }
        records.push(Record::new("empty", "...").with_meta("dataset", "web"));
        let cfg = PerplexityFilterConfig {
            group_by: Some("dataset".into()),
            ..Default::default()
        };
        let (_, m) = perplexity_filter(records, &lm, &cfg).unwrap();
        assert_eq!(m.groups.len(), 2);
        assert!(m.groups.iter().all(|g| g.dropped_high == 2));
        assert_eq!(m.dropped_no_tokens, 1);
        assert_eq!(m.input, m.kept + m.drops.len());
    }
}
