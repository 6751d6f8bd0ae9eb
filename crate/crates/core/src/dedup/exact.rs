use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64;

use super::{DedupError, DedupManifest, DropReason};
use crate::record::{open_shard, ParseMode, Record};

pub const DEFAULT_BUCKET_COUNT: usize = 16;

/// Dedup key: text with whitespace runs collapsed and ends trimmed.
pub fn exact_key(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn bucket_of(key: &str, bucket_count: usize) -> usize {
    (xxh3_64(key.as_bytes()) % bucket_count as u64) as usize
}

struct BucketResult {
    survivors: Vec<usize>,
    /// (dropped position, survivor position)
    drops: Vec<(usize, usize)>,
}

/// Sorts one bucket by (key, position) and keeps the first of each run.
fn resolve_bucket(mut entries: Vec<(String, usize)>) -> BucketResult {
    entries.sort_unstable();
    let mut survivors = Vec::new();
    let mut drops = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let first = entries[i].1;
        survivors.push(first);
        let mut j = i + 1;
        while j < entries.len() && entries[j].0 == entries[i].0 {
            drops.push((entries[j].1, first));
            j += 1;
        }
        i = j;
    }
    survivors.sort_unstable();
    BucketResult { survivors, drops }
}

/// Merges per-bucket ascending position lists into one ascending sequence.
fn kway_merge<I: Iterator<Item = usize>>(mut sources: Vec<I>) -> impl Iterator<Item = usize> {
    let mut heap = BinaryHeap::new();
    for (s, src) in sources.iter_mut().enumerate() {
        if let Some(p) = src.next() {
            heap.push(Reverse((p, s)));
        }
    }
    std::iter::from_fn(move || {
        let Reverse((p, s)) = heap.pop()?;
        if let Some(next) = sources[s].next() {
            heap.push(Reverse((next, s)));
        }
        Some(p)
    })
}

/// In-memory exact dedup. Records are bucketed by key hash, each bucket is
/// resolved independently, and survivors are restored to input order by a
/// k-way merge on position.
pub fn exact_dedup(records: Vec<Record>, bucket_count: usize) -> Result<(Vec<Record>, DedupManifest), DedupError> {
    if bucket_count == 0 {
        return Err(DedupError::ZeroBuckets);
    }
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(records.len());
    for (pos, r) in records.iter().enumerate() {
        if let Some(first) = seen.insert(&r.id, pos) {
            return Err(DedupError::DuplicateId {
                id: r.id.clone(),
                first: format!("record {first}"),
                second: format!("record {pos}"),
            });
        }
    }
    drop(seen);

    let mut buckets: Vec<Vec<(String, usize)>> = vec![Vec::new(); bucket_count];
    for (pos, r) in records.iter().enumerate() {
        let key = exact_key(&r.text);
        buckets[bucket_of(&key, bucket_count)].push((key, pos));
    }
    let resolved: Vec<BucketResult> = buckets.into_par_iter().map(resolve_bucket).collect();

    let mut manifest = DedupManifest {
        input: records.len(),
        ..Default::default()
    };
    let mut drops: Vec<(usize, usize)> = resolved.iter().flat_map(|b| b.drops.iter().copied()).collect();
    drops.sort_unstable();
    for (pos, rep) in drops {
        manifest.record_drop(records[pos].id.clone(), records[rep].id.clone(), DropReason::Exact);
    }

    let order: Vec<usize> = kway_merge(resolved.iter().map(|b| b.survivors.iter().copied()).collect()).collect();
    let mut slots: Vec<Option<Record>> = records.into_iter().map(Some).collect();
    let kept: Vec<Record> = order.into_iter().map(|p| slots[p].take().expect("each position once")).collect();
    manifest.kept = kept.len();
    Ok((kept, manifest))
}

/// Disk-backed exact dedup over JSONL shards. Only one bucket is held in
/// memory at a time; spill files are written under `work_dir`.
pub fn exact_dedup_shards(
    inputs: &[PathBuf],
    mode: ParseMode,
    output: &Path,
    bucket_count: usize,
    work_dir: &Path,
) -> Result<DedupManifest, DedupError> {
    if bucket_count == 0 {
        return Err(DedupError::ZeroBuckets);
    }
    std::fs::create_dir_all(work_dir).map_err(|e| DedupError::io(work_dir, e))?;
    let bucket_path = |b: usize| work_dir.join(format!("bucket-{b:05}.jsonl"));
    let keep_path = |b: usize| work_dir.join(format!("keep-{b:05}.txt"));

    // pass 1: spill (position, id, key) to bucket files
    let mut writers = (0..bucket_count)
        .map(|b| {
            let p = bucket_path(b);
            File::create(&p).map(BufWriter::new).map_err(|e| DedupError::io(p, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: HashMap<String, String> = HashMap::new();
    let mut input = 0usize;
    for shard in inputs {
        for (k, r) in open_shard(shard, mode)?.enumerate() {
            let r = r?;
            let here = format!("{}#{}", shard.display(), k + 1);
            match ids.entry(r.id.clone()) {
                Entry::Occupied(e) => {
                    return Err(DedupError::DuplicateId {
                        id: r.id,
                        first: e.get().clone(),
                        second: here,
                    })
                }
                Entry::Vacant(e) => {
                    e.insert(here);
                }
            }
            let key = exact_key(&r.text);
            let b = bucket_of(&key, bucket_count);
            let line = serde_json::to_string(&(input, &r.id, &key)).expect("tuple serializes");
            writeln!(writers[b], "{line}").map_err(|e| DedupError::io(bucket_path(b), e))?;
            input += 1;
        }
    }
    for (b, mut w) in writers.into_iter().enumerate() {
        w.flush().map_err(|e| DedupError::io(bucket_path(b), e))?;
    }
    drop(ids);

    // pass 2: resolve each bucket, write its ascending survivor positions
    let mut manifest = DedupManifest {
        input,
        ..Default::default()
    };
    let mut drops: Vec<(usize, String, String)> = Vec::new();
    for b in 0..bucket_count {
        let p = bucket_path(b);
        let reader = BufReader::new(File::open(&p).map_err(|e| DedupError::io(&p, e))?);
        let mut entries = Vec::new();
        let mut id_of = HashMap::new();
        for line in reader.lines() {
            let line = line.map_err(|e| DedupError::io(&p, e))?;
            let (pos, id, key): (usize, String, String) = serde_json::from_str(&line).map_err(|e| DedupError::Corrupt {
                path: p.clone(),
                message: e.to_string(),
            })?;
            id_of.insert(pos, id);
            entries.push((key, pos));
        }
        let res = resolve_bucket(entries);
        for (pos, rep) in res.drops {
            drops.push((pos, id_of[&pos].clone(), id_of[&rep].clone()));
        }
        let kp = keep_path(b);
        let mut w = BufWriter::new(File::create(&kp).map_err(|e| DedupError::io(&kp, e))?);
        for pos in res.survivors {
            writeln!(w, "{pos}").map_err(|e| DedupError::io(&kp, e))?;
        }
        w.flush().map_err(|e| DedupError::io(&kp, e))?;
        std::fs::remove_file(&p).map_err(|e| DedupError::io(&p, e))?;
    }
    drops.sort_unstable();
    for (_, id, rep) in drops {
        manifest.record_drop(id, rep, DropReason::Exact);
    }

    // pass 3: merge survivor lists and stream the inputs once more
    let sources = (0..bucket_count)
        .map(|b| {
            let kp = keep_path(b);
            File::open(&kp)
                .map(|f| {
                    BufReader::new(f)
                        .lines()
                        .map(|l| l.expect("spill file readable").trim().parse::<usize>().expect("spill file holds positions"))
                })
                .map_err(|e| DedupError::io(kp, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut keep = kway_merge(sources).peekable();
    let mut out = BufWriter::new(File::create(output).map_err(|e| DedupError::io(output, e))?);
    let mut pos = 0usize;
    for shard in inputs {
        for r in open_shard(shard, mode)? {
            let r = r?;
            if keep.peek() == Some(&pos) {
                keep.next();
                out.write_all(r.to_json_line().as_bytes())
                    .and_then(|_| out.write_all(b"\n"))
                    .map_err(|e| DedupError::io(output, e))?;
                manifest.kept += 1;
            }
            pos += 1;
        }
    }
    out.flush().map_err(|e| DedupError::io(output, e))?;
    for b in 0..bucket_count {
        let _ = std::fs::remove_file(keep_path(b));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{read_shard, write_shard};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn recs(texts: &[&str]) -> Vec<Record> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Record::new(((b'A' + i as u8) as char).to_string(), *t))
            .collect()
    }

    fn oracle(records: &[Record]) -> Vec<String> {
        let mut seen = HashSet::new();
        records
            .iter()
            .filter(|r| seen.insert(exact_key(&r.text)))
            .map(|r| r.id.clone())
            .collect()
    }

    #[test]
    fn keeps_first_occurrence() {
        let (kept, m) = exact_dedup(recs(&["x", "x", "y"]), 4).unwrap();
        let ids: Vec<_> = kept.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["A", "C"]);
        assert_eq!(m.drops[0].id, "B");
        assert_eq!(m.drops[0].representative, "A");
        assert!(m.is_consistent());
    }

    #[test]
    fn whitespace_variants_collide() {
        let (kept, _) = exact_dedup(recs(&["a  b\n", " a b", "a b c"]), 2).unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn duplicate_ids_name_both_positions() {
        let mut rs = recs(&["x", "y", "z"]);
        rs[2].id = "A".into();
        match exact_dedup(rs, 4) {
            Err(DedupError::DuplicateId { id, first, second }) => {
                assert_eq!(id, "A");
                assert_eq!(first, "record 0");
                assert_eq!(second, "record 2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shard_version_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = Vec::new();
        for i in 0..300 {
            records.push(Record::new(format!("r{i}"), format!("text {}", (i * 7) % 90)));
        }
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        write_shard(&a, &records[..120]).unwrap();
        write_shard(&b, &records[120..]).unwrap();
        let out = dir.path().join("out.jsonl");
        let m = exact_dedup_shards(&[a, b], ParseMode::Strict, &out, 7, &dir.path().join("work")).unwrap();
        let (mem, mm) = exact_dedup(records, 3).unwrap();
        assert_eq!(read_shard(&out, ParseMode::Strict).unwrap(), mem);
        assert_eq!(m, mm);
        assert_eq!(m.kept, 90);
    }

    proptest! {
        #[test]
        fn matches_hash_set_oracle(
            picks in prop::collection::vec(0usize..15, 0..80),
            buckets in 1usize..20,
        ) {
            let records: Vec<Record> = picks
                .iter()
                .enumerate()
                .map(|(i, p)| Record::new(format!("id{i}"), format!("doc {p}")))
                .collect();
            let want = oracle(&records);
            let (kept, m) = exact_dedup(records, buckets).unwrap();
            let got: Vec<String> = kept.iter().map(|r| r.id.clone()).collect();
            prop_assert_eq!(&got, &want);
            prop_assert!(m.is_consistent());
            let (again, m2) = exact_dedup(kept.clone(), buckets).unwrap();
            prop_assert_eq!(again, kept);
            prop_assert_eq!(m2.dropped(), 0);
        }
    }
}
