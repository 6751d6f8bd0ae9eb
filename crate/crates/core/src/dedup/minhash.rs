use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::DedupError;

/// Mersenne prime 2^61 - 1, modulus of the universal hash family.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinHashParams {
    pub gram_size: usize,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            gram_size: 8,
            bands: 12,
            rows: 11,
            seed: 0,
        }
    }
}

impl MinHashParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn num_hashes(&self) -> usize {
        self.bands * self.rows
    }

    /// Similarity at which the banding S-curve is steepest: `(1/b)^(1/r)`.
    pub fn threshold(&self) -> f64 {
        (1.0 / self.bands as f64).powf(1.0 / self.rows as f64)
    }

    /// Probability that a pair with Jaccard `s` shares at least one band.
    pub fn collision_probability(&self, s: f64) -> f64 {
        1.0 - (1.0 - s.powi(self.rows as i32)).powi(self.bands as i32)
    }

    pub fn validate(&self) -> Result<(), DedupError> {
        if self.gram_size == 0 || self.bands == 0 || self.rows == 0 {
            return Err(DedupError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Word `gram_size`-shingles of `text`, hashed and returned as a sorted set.
/// Texts shorter than one window give a single shingle over all their words.
pub fn shingle(text: &str, gram_size: usize) -> Vec<u64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Vec::new();
    }
    let gram = gram_size.max(1).min(words.len());
    let mut out: Vec<u64> = words
        .windows(gram)
        .map(|w| xxh3_64(w.join(" ").as_bytes()))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub params: MinHashParams,
}

impl MinHashSignature {
    /// Fraction of positions where the two signatures agree.
    pub fn estimate_jaccard(&self, other: &Self) -> Result<f64, DedupError> {
        estimate_jaccard(self, other)
    }

    pub fn band_keys(&self) -> Vec<u64> {
        lsh_band_keys(self)
    }
}

/// Seeded family `h_i(x) = (a_i x + b_i) mod (2^61 - 1)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    params: MinHashParams,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(params: MinHashParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let coeffs = (0..params.num_hashes())
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        Self { params, coeffs }
    }

    pub fn params(&self) -> &MinHashParams {
        &self.params
    }

    pub fn signature(&self, shingles: &[u64]) -> Result<MinHashSignature, DedupError> {
        if shingles.is_empty() {
            return Err(DedupError::EmptyShingles);
        }
        let mut values = vec![u64::MAX; self.coeffs.len()];
        for &s in shingles {
            let x = (s % MERSENNE_61) as u128;
            for (v, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let h = ((a as u128 * x + b as u128) % MERSENNE_61 as u128) as u64;
                if h < *v {
                    *v = h;
                }
            }
        }
        Ok(MinHashSignature {
            values,
            params: self.params,
        })
    }

    /// Shingles and signs `text`; `None` when the text has no words.
    pub fn sign_text(&self, text: &str) -> Option<MinHashSignature> {
        self.signature(&shingle(text, self.params.gram_size)).ok()
    }
}

pub fn minhash_signature(shingles: &[u64], params: MinHashParams) -> Result<MinHashSignature, DedupError> {
    MinHasher::new(params).signature(shingles)
}

pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.params != b.params || a.values.len() != b.values.len() {
        return Err(DedupError::ParamMismatch);
    }
    let same = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.values.len() as f64)
}

/// One key per band, hashing the band index with its `rows` values.
pub fn lsh_band_keys(sig: &MinHashSignature) -> Vec<u64> {
    let rows = sig.params.rows;
    sig.values
        .chunks(rows)
        .enumerate()
        .map(|(band, vals)| {
            let mut buf = Vec::with_capacity(4 + 8 * rows);
            buf.extend_from_slice(&(band as u32).to_le_bytes());
            for v in vals {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            xxh3_64(&buf)
        })
        .collect()
}
