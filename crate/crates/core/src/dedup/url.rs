use std::collections::HashMap;

use url::Url;

use super::{DedupManifest, DropReason};
use crate::record::Record;

/// Lowercases scheme and host, drops the fragment and any trailing slash.
/// Unparseable URLs fall back to trimmed lowercase text.
pub fn normalize_url(raw: &str) -> String {
    let raw = raw.trim();
    match Url::parse(raw) {
        Ok(mut u) => {
            u.set_fragment(None);
            let trimmed = u.path().trim_end_matches('/').to_string();
            if trimmed.len() < u.path().len() && !trimmed.is_empty() {
                u.set_path(&trimmed);
            }
            let s = u.to_string();
            match s.strip_suffix('/') {
                Some(stripped) if u.query().is_none() => stripped.to_string(),
                _ => s,
            }
        }
        Err(_) => {
            let no_frag = raw.split('#').next().unwrap_or("");
            no_frag.trim_end_matches('/').to_lowercase()
        }
    }
}

/// Keeps the first record per normalized `url`. Records without a url are kept.
pub fn url_dedup(records: Vec<Record>) -> (Vec<Record>, DedupManifest) {
    let mut manifest = DedupManifest {
        input: records.len(),
        ..Default::default()
    };
    let mut first: HashMap<String, String> = HashMap::new();
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let Some(raw) = r.url() else {
            kept.push(r);
            continue;
        };
        let key = normalize_url(raw);
        match first.get(&key) {
            Some(rep) => manifest.record_drop(r.id.clone(), rep.clone(), DropReason::Url),
            None => {
                first.insert(key, r.id.clone());
                kept.push(r);
            }
        }
    }
    manifest.kept = kept.len();
    (kept, manifest)
}
