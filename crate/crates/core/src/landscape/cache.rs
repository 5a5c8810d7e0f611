//! Binary cache for noise tensors, one file per `(p, seed)`.
//!
//! Layout, little-endian: `b"STLD"`, version `u32`, `N u32`, `p u32`,
//! seed `u64`, entry count `u64`, then `N^p` `f64` entries in row-major order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{sample_tensor, Disorder, MixtureSpec};

pub const CACHE_MAGIC: [u8; 4] = *b"STLD";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorFileHeader {
    pub version: u32,
    pub n: u32,
    pub p: u32,
    pub seed: u64,
    pub count: u64,
}

pub fn cache_file_name(n: usize, p: u32, seed: u64) -> String {
    format!("w_n{n}_p{p}_s{seed:016x}.stld")
}

pub fn write_tensor_file(path: &Path, n: usize, p: u32, seed: u64, entries: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&p.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&(entries.len() as u64).to_le_bytes())?;
    for e in entries {
        out.write_all(&e.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensor_file(path: &Path) -> Result<(TensorFileHeader, Vec<f64>)> {
    let bad = |reason: &str| Error::CacheFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut input = BufReader::new(File::open(path)?);
    let mut head = [0u8; 32];
    input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if head[0..4] != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(head[i..i + 8].try_into().unwrap());
    let header = TensorFileHeader {
        version: u32_at(4),
        n: u32_at(8),
        p: u32_at(12),
        seed: u64_at(16),
        count: u64_at(24),
    };
    if header.version != CACHE_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let expect = (header.n as u64).checked_pow(header.p);
    if expect != Some(header.count) {
        return Err(bad("entry count does not equal N^p"));
    }
    let mut bytes = Vec::with_capacity(header.count as usize * 8);
    input.read_to_end(&mut bytes)?;
    if bytes.len() as u64 != header.count * 8 {
        return Err(bad("payload length does not match entry count"));
    }
    let entries = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, entries))
}

impl Disorder {
    /// Write every tensor into `dir`, one file per order.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for p in self.orders() {
            let path = dir.join(cache_file_name(self.n(), p, self.seed()));
            write_tensor_file(&path, self.n(), p, self.seed(), self.tensor(p).unwrap())?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Load the tensors for `(spec, seed)` from `dir`, sampling and writing
    /// any that are missing.
    pub fn load_or_sample(spec: &MixtureSpec, seed: u64, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut tensors = std::collections::BTreeMap::new();
        for &p in spec.mixture().keys() {
            let path = dir.join(cache_file_name(spec.n(), p, seed));
            let w = if path.exists() {
                let (h, w) = read_tensor_file(&path)?;
                if h.n as usize != spec.n() || h.p != p || h.seed != seed {
                    return Err(Error::CacheFormat {
                        path,
                        reason: "header does not match the requested tensor".into(),
                    });
                }
                w
            } else {
                let w = sample_tensor(spec.n(), p, seed);
                write_tensor_file(&path, spec.n(), p, seed, &w)?;
                w
            };
            tensors.insert(p, w);
        }
        Disorder::from_tensors(spec, seed, tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Beta;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MixtureSpec::new(5, [(2, 1.0), (3, 0.5)], 3.0, 1.0, Beta::Infinite).unwrap();
        let d = Disorder::sample(&spec, 17).unwrap();
        d.save(dir.path()).unwrap();
        let back = Disorder::load_or_sample(&spec, 17, dir.path()).unwrap();
        for p in [2, 3] {
            let a: Vec<u64> = d.tensor(p).unwrap().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.tensor(p).unwrap().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stld");
        write_tensor_file(&path, 2, 2, 0xdead_beef, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"STLD");
        assert_eq!(bytes.len(), 32 + 32);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 0xdead_beef);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 2.0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stld");
        write_tensor_file(&path, 2, 2, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(50);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tensor_file(&path), Err(Error::CacheFormat { .. })));
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_tensor_file(&path), Err(Error::CacheFormat { .. })));
    }
}
