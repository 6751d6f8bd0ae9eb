//! Binary model file and ARPA export.
//!
//! Binary layout, little-endian: `CFLM`, version u32, order u32, smoothing u8,
//! vocab size u32, then each word as (u32 length, bytes); then for every order
//! an entry count u64 followed by sorted entries of (ids u32 * order,
//! prob f64, backoff f64).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Entry, LmError, NgramLm, Smoothing, BOS_ID};

const MAGIC: &[u8; 4] = b"CFLM";
const VERSION: u32 = 1;

fn sorted(table: &HashMap<Vec<u32>, Entry>) -> Vec<(&Vec<u32>, &Entry)> {
    let mut v: Vec<_> = table.iter().collect();
    v.sort_unstable_by(|a, b| a.0.cmp(b.0));
    v
}

impl NgramLm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.push(match self.smoothing {
            Smoothing::ModifiedKneserNey => 0,
            Smoothing::StupidBackoff => 1,
        });
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for w in &self.vocab {
            out.extend_from_slice(&(w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
        }
        for table in &self.tables {
            out.extend_from_slice(&(table.len() as u64).to_le_bytes());
            for (ids, e) in sorted(table) {
                for id in ids {
                    out.extend_from_slice(&id.to_le_bytes());
                }
                out.extend_from_slice(&e.prob.to_le_bytes());
                out.extend_from_slice(&e.backoff.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| LmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let file = File::open(path).map_err(|source| LmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = BufReader::new(file);
        let fail = |message: &str| LmError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut take = |n: usize| -> Result<Vec<u8>, LmError> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|_| fail("truncated"))?;
            Ok(buf)
        };
        let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap());
        if take(4)? != MAGIC {
            return Err(fail("bad magic"));
        }
        if u32_of(take(4)?) != VERSION {
            return Err(fail("unsupported version"));
        }
        let order = u32_of(take(4)?) as usize;
        if order == 0 {
            return Err(fail("order 0"));
        }
        let smoothing = match take(1)?[0] {
            0 => Smoothing::ModifiedKneserNey,
            1 => Smoothing::StupidBackoff,
            _ => return Err(fail("unknown smoothing id")),
        };
        let n_vocab = u32_of(take(4)?) as usize;
        let mut vocab = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            let len = u32_of(take(4)?) as usize;
            vocab.push(String::from_utf8(take(len)?).map_err(|_| fail("vocabulary is not UTF-8"))?);
        }
        let mut tables = Vec::with_capacity(order);
        for n in 1..=order {
            let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let mut table = HashMap::with_capacity(count);
            for _ in 0..count {
                let ids: Vec<u32> = (0..n).map(|_| take(4).map(u32_of)).collect::<Result<_, _>>()?;
                if ids.iter().any(|&i| i as usize >= n_vocab) {
                    return Err(fail("id out of range"));
                }
                let prob = f64::from_le_bytes(take(8)?.try_into().unwrap());
                let backoff = f64::from_le_bytes(take(8)?.try_into().unwrap());
                table.insert(ids, Entry { prob, backoff });
            }
            tables.push(table);
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(NgramLm {
            order,
            smoothing,
            vocab,
            index,
            tables,
        })
    }

    /// ARPA text with log10 probabilities and backoffs.
    pub fn to_arpa(&self) -> String {
        let mut s = String::from("\n\\data\\\n");
        for (n, table) in self.tables.iter().enumerate() {
            s.push_str(&format!("ngram {}={}\n", n + 1, table.len()));
        }
        for (n, table) in self.tables.iter().enumerate() {
            s.push_str(&format!("\n\\{}-grams:\n", n + 1));
            let highest = n + 1 == self.order;
            for (ids, e) in sorted(table) {
                let lp = if n == 0 && ids[0] == BOS_ID { -99.0 } else { e.prob.log10() };
                let words = self.words_of(ids).join(" ");
                if highest {
                    s.push_str(&format!("{lp:.7}\t{words}\n"));
                } else {
                    s.push_str(&format!("{lp:.7}\t{words}\t{:.7}\n", e.backoff.log10()));
                }
            }
        }
        s.push_str("\n\\end\\\n");
        s
    }

    pub fn write_arpa(&self, path: &Path) -> Result<(), LmError> {
        let io = |source| LmError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_arpa().as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }
}
