//! Binary signature cache: a little-endian header
//! `CFMH, version u32, gram_size u32, bands u32, rows u32, seed u64`
//! followed by `(id_len u32, id bytes, values u64 * bands*rows)` entries.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::minhash::{MinHashParams, MinHashSignature};
use super::DedupError;

const MAGIC: &[u8; 4] = b"CFMH";
const VERSION: u32 = 1;

pub fn write_signature_cache<'a, I>(path: &Path, params: MinHashParams, entries: I) -> Result<(), DedupError>
where
    I: IntoIterator<Item = (&'a str, &'a MinHashSignature)>,
{
    let io = |e| DedupError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = Vec::with_capacity(28);
    header.extend_from_slice(MAGIC);
    for v in [VERSION, params.gram_size as u32, params.bands as u32, params.rows as u32] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&params.seed.to_le_bytes());
    w.write_all(&header).map_err(io)?;
    for (id, sig) in entries {
        if sig.params != params {
            return Err(DedupError::ParamMismatch);
        }
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(id.as_bytes()).map_err(io)?;
        for v in &sig.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_signature_cache(path: &Path) -> Result<(MinHashParams, Vec<(String, MinHashSignature)>), DedupError> {
    let corrupt = |message: &str| DedupError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut r = BufReader::new(File::open(path).map_err(|e| DedupError::io(path, e))?);
    let mut header = [0u8; 28];
    r.read_exact(&mut header).map_err(|_| corrupt("short header"))?;
    if &header[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let params = MinHashParams {
        gram_size: u32_at(8) as usize,
        bands: u32_at(12) as usize,
        rows: u32_at(16) as usize,
        seed: u64::from_le_bytes(header[20..28].try_into().unwrap()),
    };
    params.validate()?;

    let mut entries = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(DedupError::io(path, e)),
        }
        let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(|_| corrupt("truncated id"))?;
        let id = String::from_utf8(id).map_err(|_| corrupt("id is not UTF-8"))?;
        let mut values = Vec::with_capacity(params.num_hashes());
        let mut buf = [0u8; 8];
        for _ in 0..params.num_hashes() {
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated signature"))?;
            values.push(u64::from_le_bytes(buf));
        }
        entries.push((id, MinHashSignature { values, params }));
    }
    Ok((params, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::MinHasher;

    #[test]
    fn round_trip() {
        let params = MinHashParams::with_seed(77);
        let h = MinHasher::new(params);
        let sigs: Vec<(String, MinHashSignature)> = ["alpha beta gamma", "one two three four five six seven eight nine ten"]
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("id-{i}"), h.sign_text(t).unwrap()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sigs.bin");
        write_signature_cache(&p, params, sigs.iter().map(|(i, s)| (i.as_str(), s))).unwrap();
        let bytes = std::fs::metadata(&p).unwrap().len();
        assert_eq!(bytes, 28 + 2 * (4 + 4 + 132 * 8));
        let (back_params, back) = read_signature_cache(&p).unwrap();
        assert_eq!(back_params, params);
        assert_eq!(back, sigs);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"XXXX0000000000000000000000000").unwrap();
        assert!(matches!(read_signature_cache(&p), Err(DedupError::Corrupt { .. })));

        let params = MinHashParams::default();
        let sig = MinHasher::new(params).sign_text("a b c").unwrap();
        write_signature_cache(&p, params, [("x", &sig)]).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_signature_cache(&p), Err(DedupError::Corrupt { .. })));
    }
}
