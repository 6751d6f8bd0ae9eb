use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use super::minhash::{lsh_band_keys, MinHashParams, MinHashSignature, MinHasher};
use super::{DedupError, DedupManifest, DropReason, UnionFind};
use crate::record::Record;

/// Candidate pairs must estimate at least this Jaccard to be merged.
pub const DEFAULT_VERIFY_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    /// Earliest member in input order.
    pub representative: String,
    /// All members in input order, representative first.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDrop {
    pub dropped_id: String,
    pub survivor_id: String,
    pub estimated_jaccard: f64,
}

/// Clusters with more than one member, ordered by representative position.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DuplicateClusters {
    pub clusters: Vec<Cluster>,
    pub drops: Vec<ClusterDrop>,
}

impl DuplicateClusters {
    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.members.iter().any(|m| m == id))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DedupError> {
        let mut w = csv::Writer::from_path(path)?;
        for d in &self.drops {
            w.serialize(d)?;
        }
        w.flush().map_err(|e| DedupError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct FuzzyOutput {
    pub records: Vec<Record>,
    pub clusters: DuplicateClusters,
    pub manifest: DedupManifest,
}

/// Signs every record in parallel; `None` for records without words.
pub fn sign_records(records: &[Record], params: MinHashParams) -> Vec<Option<MinHashSignature>> {
    let hasher = MinHasher::new(params);
    records.par_iter().map(|r| hasher.sign_text(&r.text)).collect()
}

/// MinHash-LSH dedup: band collisions give candidate pairs, optionally
/// verified by signature agreement, and union-find closes them into clusters.
pub fn fuzzy_dedup(records: Vec<Record>, params: MinHashParams, verify: bool) -> Result<FuzzyOutput, DedupError> {
    params.validate()?;
    let sigs = sign_records(&records, params);
    fuzzy_dedup_signed(records, &sigs, verify.then_some(DEFAULT_VERIFY_THRESHOLD))
}

/// Same as [`fuzzy_dedup`] with precomputed signatures (one per record).
/// `verify_threshold = None` unions every band collision.
pub fn fuzzy_dedup_signed(
    records: Vec<Record>,
    sigs: &[Option<MinHashSignature>],
    verify_threshold: Option<f64>,
) -> Result<FuzzyOutput, DedupError> {
    assert_eq!(records.len(), sigs.len(), "one signature slot per record");
    let n = records.len();
    let mut params = None;
    for s in sigs.iter().flatten() {
        match params {
            None => params = Some(s.params),
            Some(p) if p != s.params => return Err(DedupError::ParamMismatch),
            _ => {}
        }
    }

    let keys: Vec<Option<Vec<u64>>> = sigs.par_iter().map(|s| s.as_ref().map(lsh_band_keys)).collect();
    let bands = params.map_or(0, |p| p.bands);
    let mut uf = UnionFind::new(n);
    for band in 0..bands {
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            if let Some(k) = k {
                buckets.entry(k[band]).or_default().push(i);
            }
        }
        for members in buckets.values().filter(|m| m.len() > 1) {
            for (x, &j) in members.iter().enumerate() {
                for &i in &members[..x] {
                    if uf.connected(i, j) {
                        continue;
                    }
                    let confirmed = match verify_threshold {
                        None => true,
                        Some(t) => {
                            let (a, b) = (sigs[i].as_ref().unwrap(), sigs[j].as_ref().unwrap());
                            a.estimate_jaccard(b)? >= t
                        }
                    };
                    if confirmed {
                        uf.union(i, j);
                    }
                }
            }
        }
    }

    let mut manifest = DedupManifest {
        input: n,
        ..Default::default()
    };
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut drops = Vec::new();
    for i in 0..n {
        if sigs[i].is_none() {
            debug!("record {} has no shingles; bypassing fuzzy dedup", records[i].id);
            manifest.bypassed.push(records[i].id.clone());
            continue;
        }
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
        if root != i {
            let est = sigs[i].as_ref().unwrap().estimate_jaccard(sigs[root].as_ref().unwrap())?;
            manifest.record_drop(records[i].id.clone(), records[root].id.clone(), DropReason::Fuzzy);
            drops.push(ClusterDrop {
                dropped_id: records[i].id.clone(),
                survivor_id: records[root].id.clone(),
                estimated_jaccard: est,
            });
        }
    }
    let clusters = groups
        .into_iter()
        .filter(|(_, m)| m.len() > 1)
        .map(|(root, m)| Cluster {
            representative: records[root].id.clone(),
            members: m.iter().map(|&i| records[i].id.clone()).collect(),
        })
        .collect();

    let kept: Vec<Record> = records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| sigs[*i].is_none() || uf.find(*i) == *i)
        .map(|(_, r)| r)
        .collect();
    manifest.kept = kept.len();
    Ok(FuzzyOutput {
        records: kept,
        clusters: DuplicateClusters { clusters, drops },
        manifest,
    })
}
