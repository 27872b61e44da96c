//! Binary persistence for [`LambdaTable`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "RXLT" | version u16 | mode u8 | spec tag u8 | s u32
//! | param_a u64 | param_b u64 | records u64 | argmax_len u64
//! | records × (log_max f64, argmax_count u32, argmax_offset u64)
//! | argmax_len × rank u32
//! | sha256 of everything above (32 bytes)
//! ```
//!
//! For `iid` the parameters are the numerator and denominator of `p`; for
//! `urn` they are `m` and zero.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use fs2::FileExt;
use num_rational::Ratio;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{RandomizationSpec, SampleSize};
use crate::likelihood::{Engine, Mode};
use crate::table::LambdaTable;

pub const MAGIC: &[u8; 4] = b"RXLT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 + 8 + 8 + 8 + 8;
const RECORD_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

/// What a load-or-build call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Built,
    Rebuilt,
    Disabled,
}

/// Identity of a cached table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub s: SampleSize,
    pub spec: RandomizationSpec,
    pub mode: Mode,
}

fn spec_fields(spec: &RandomizationSpec) -> (u8, u64, u64) {
    match *spec {
        RandomizationSpec::Iid { p } => (0, *p.numer(), *p.denom()),
        RandomizationSpec::Urn { m } => (1, m as u64, 0),
    }
}

fn mode_byte(mode: Mode) -> u8 {
    match mode {
        Mode::Log => 0,
        Mode::Exact => 1,
    }
}

/// Serializes a table; equal tables give equal bytes.
pub fn to_bytes(table: &LambdaTable) -> Vec<u8> {
    let (tag, a, b) = spec_fields(table.spec());
    let ranks = table.all_argmax_ranks();
    let offsets = table.offsets();
    let mut out = Vec::with_capacity(HEADER_LEN + table.len() * RECORD_LEN + ranks.len() * 4 + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(mode_byte(table.mode()));
    out.push(tag);
    out.extend_from_slice(&table.sample_size().get().to_le_bytes());
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ranks.len() as u64).to_le_bytes());
    for (i, v) in table.log_max().iter().enumerate() {
        out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(&((offsets[i + 1] - offsets[i]) as u32).to_le_bytes());
        out.extend_from_slice(&offsets[i].to_le_bytes());
    }
    for r in ranks {
        out.extend_from_slice(&r.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let a = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        a
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCache(msg.into())
}

fn parse_header(buf: &[u8]) -> Result<(CacheKey, u64, u64)> {
    if buf.len() < HEADER_LEN {
        return Err(corrupt("file shorter than the header"));
    }
    if &buf[..4] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u16();
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let mode = match r.u8() {
        0 => Mode::Log,
        1 => Mode::Exact,
        other => return Err(corrupt(format!("unknown mode byte {other}"))),
    };
    let tag = r.u8();
    let s = SampleSize::new(r.u32()).map_err(|e| corrupt(e.to_string()))?;
    let (a, b) = (r.u64(), r.u64());
    let spec = match tag {
        0 if b > a && a > 0 && *Ratio::new(a, b).denom() == b => RandomizationSpec::Iid { p: Ratio::new(a, b) },
        1 if b == 0 && a < s.get() as u64 && a > 0 => RandomizationSpec::Urn { m: a as u32 },
        _ => return Err(corrupt("invalid randomization parameters")),
    };
    let records = r.u64();
    let argmax_len = r.u64();
    Ok((CacheKey { s, spec, mode }, records, argmax_len))
}

/// Parses and verifies a serialized table.
pub fn from_bytes(buf: &[u8]) -> Result<LambdaTable> {
    let (key, records, argmax_len) = parse_header(buf)?;
    if records != key.s.lattice_len() as u64 {
        return Err(corrupt(format!("{records} records, expected {}", key.s.lattice_len())));
    }
    let body = records
        .checked_mul(RECORD_LEN as u64)
        .and_then(|x| x.checked_add(argmax_len.checked_mul(4)?))
        .ok_or_else(|| corrupt("length overflow"))?;
    let expected = HEADER_LEN as u64 + body + DIGEST_LEN as u64;
    if buf.len() as u64 != expected {
        return Err(corrupt(format!("file is {} bytes, expected {expected}", buf.len())));
    }
    let (content, digest) = buf.split_at(buf.len() - DIGEST_LEN);
    if Sha256::digest(content).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf, pos: HEADER_LEN };
    let n = records as usize;
    let mut log_max = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n + 1);
    let mut next = 0u64;
    for _ in 0..n {
        log_max.push(r.f64());
        let count = r.u32() as u64;
        let off = r.u64();
        if off != next {
            return Err(corrupt("argmax offsets are not contiguous"));
        }
        offsets.push(off);
        next = off + count;
    }
    if next != argmax_len {
        return Err(corrupt("argmax section length disagrees with records"));
    }
    offsets.push(next);
    let lattice = key.s.lattice_len() as u32;
    let mut ranks = Vec::with_capacity(argmax_len as usize);
    for _ in 0..argmax_len {
        let x = r.u32();
        if x >= lattice {
            return Err(corrupt("argmax rank out of range"));
        }
        ranks.push(x);
    }
    Ok(LambdaTable::from_parts(key.s, key.spec, key.mode, log_max, offsets, ranks))
}

pub fn write_table(path: &Path, table: &LambdaTable) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&to_bytes(table))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<LambdaTable> {
    from_bytes(&fs::read(path)?)
}

/// Reads only the identity of a cache file.
pub fn read_key(path: &Path) -> Result<CacheKey> {
    let buf = fs::read(path)?;
    Ok(parse_header(&buf)?.0)
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    path.with_file_name(name)
}

/// Loads the table at `path` if it matches, else builds and stores it.
///
/// A file for a different `(s, spec, mode)` is an error unless `rebuild`
/// is set. Builds hold an exclusive advisory lock beside the file.
pub fn load_or_build(
    path: Option<&Path>,
    engine: &Engine,
    mode: Mode,
    threads: Option<usize>,
    rebuild: bool,
) -> Result<(LambdaTable, CacheStatus)> {
    let Some(path) = path else {
        return Ok((LambdaTable::build(engine, mode, threads)?, CacheStatus::Disabled));
    };
    let want = CacheKey { s: engine.sample_size(), spec: *engine.spec(), mode };
    let lock = OpenOptions::new().create(true).truncate(false).write(true).open(lock_path(path))?;
    lock.lock_exclusive()?;
    let result = (|| {
        let mut existed = false;
        if path.exists() {
            existed = true;
            let key = read_key(path)?;
            if key == want && !rebuild {
                return Ok((read_table(path)?, CacheStatus::Hit));
            }
            if key != want && !rebuild {
                return Err(Error::CacheMismatch(format!(
                    "{} holds s={} {} {:?}, requested s={} {} {:?}; pass --rebuild to replace it",
                    path.display(),
                    key.s,
                    key.spec,
                    key.mode,
                    want.s,
                    want.spec,
                    want.mode
                )));
            }
        }
        let table = LambdaTable::build(engine, mode, threads)?;
        write_table(path, &table)?;
        Ok((table, if existed { CacheStatus::Rebuilt } else { CacheStatus::Built }))
    })();
    lock.unlock()?;
    result
}
