//! On-disk cache of inner eigensystems and S-matrix tables.
//!
//! Each entry stores a descriptor of its parameters next to the payload and a
//! SHA-256 trailer, so stale or damaged files are detected and recomputed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::cli::config::hex;
use crate::error::{Error, Result};
use crate::floquet_rmatrix::InnerEigensystem;
use crate::observables::{EigenStore, EnergyLattice, STable, SolverSetup};
use crate::potential::PotentialSpec;

const EIGEN_MAGIC: &[u8; 8] = b"FSEIG\x01\0\0";
const TABLE_MAGIC: &[u8; 8] = b"FSSTB\x01\0\0";
const EIGEN_EXT: &str = "eig";
const TABLE_EXT: &str = "stab";

/// Parameter descriptor and the file name derived from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheKey {
    pub descriptor: String,
    pub digest: String,
}

impl CacheKey {
    fn new(descriptor: String) -> Self {
        let digest = hex(&Sha256::digest(descriptor.as_bytes()));
        Self { descriptor, digest }
    }
}

fn potential_descriptor(p: &PotentialSpec) -> String {
    // φ is a gauge and never part of the key
    format!(
        "v0={:016x} sigma_v={:016x} omega={:016x} drive={:?}",
        p.v0.to_bits(),
        p.sigma_v.to_bits(),
        p.omega.to_bits(),
        p.drive
    )
}

fn setup_descriptor(s: &SolverSetup) -> String {
    format!("order={} n_splines={} a0={:016x} channels={}", s.order, s.n_splines, s.a0, s.n_channels())
}

pub fn eigen_key(potential: &PotentialSpec, setup: &SolverSetup, l: u32) -> CacheKey {
    CacheKey::new(format!("eig/1 {} {} l={l}", potential_descriptor(potential), setup_descriptor(setup)))
}

pub fn table_key(potential: &PotentialSpec, setup: &SolverSetup, lattice: &EnergyLattice, indices: &[i64]) -> CacheKey {
    let mut h = Sha256::new();
    for i in indices {
        h.update(i.to_le_bytes());
    }
    CacheKey::new(format!(
        "stab/1 {} {} l_max={} e0={:016x} per_quantum={} indices={}",
        potential_descriptor(potential),
        setup_descriptor(setup),
        setup.l_max,
        lattice.e0.to_bits(),
        lattice.per_quantum,
        hex(&h.finalize())
    ))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn c64(&mut self, z: Complex64) {
        self.f64(z.re);
        self.f64(z.im);
    }
    fn text(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let sum = Sha256::digest(&self.0);
        self.0.extend_from_slice(&sum);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies the checksum trailer and magic.
    fn open(data: &'a [u8], magic: &[u8; 8]) -> std::result::Result<Self, String> {
        if data.len() < 40 {
            return Err("truncated".into());
        }
        let (body, sum) = data.split_at(data.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err("checksum mismatch".into());
        }
        if &body[..8] != magic {
            return Err("wrong file type".into());
        }
        Ok(Self { buf: body, pos: 8 })
    }
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated payload")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn c64(&mut self) -> std::result::Result<Complex64, String> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
    fn text(&mut self) -> std::result::Result<String, String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "bad descriptor".into())
    }
    fn done(&self) -> std::result::Result<(), String> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err("trailing bytes".into())
        }
    }
}

pub fn encode_eigensystem(key: &CacheKey, e: &InnerEigensystem) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(EIGEN_MAGIC);
    w.text(&key.descriptor);
    w.u64(e.l as u64);
    w.u64(e.n_max as i64 as u64);
    w.f64(e.omega);
    w.f64(e.a0);
    w.u64(e.eigenvalues.len() as u64);
    w.u64(e.surface.nrows() as u64);
    for &v in &e.eigenvalues {
        w.f64(v);
    }
    for r in 0..e.surface.nrows() {
        for c in 0..e.surface.ncols() {
            w.c64(e.surface[(r, c)]);
        }
    }
    w.finish()
}

pub fn decode_eigensystem(key: &CacheKey, data: &[u8]) -> std::result::Result<InnerEigensystem, String> {
    let mut r = Reader::open(data, EIGEN_MAGIC)?;
    if r.text()? != key.descriptor {
        return Err("stale entry (parameters differ)".into());
    }
    let l = r.u64()? as u32;
    let n_max = r.u64()? as i64 as i32;
    let omega = r.f64()?;
    let a0 = r.f64()?;
    let n = r.u64()? as usize;
    let nch = r.u64()? as usize;
    if nch.checked_mul(n).is_none_or(|t| t > data.len()) {
        return Err("implausible dimensions".into());
    }
    let eigenvalues = (0..n).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut surface = Mat::zeros(nch, n);
    for i in 0..nch {
        for k in 0..n {
            surface[(i, k)] = r.c64()?;
        }
    }
    r.done()?;
    Ok(InnerEigensystem { l, n_max, omega, a0, eigenvalues, surface, vectors: None })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Eigensystem,
    STable,
}

#[derive(Clone, Debug)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub kind: EntryKind,
    pub bytes: u64,
    /// `None` when the file is unreadable or damaged.
    pub descriptor: Option<String>,
}

/// Directory of cache files, safe to share between worker threads.
#[derive(Clone, Debug)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", key.digest))
    }

    /// Write-then-rename so readers never see a partial file.
    fn write(&self, path: &Path, data: &[u8]) -> Result<()> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn read(&self, path: &Path) -> Option<Vec<u8>> {
        match fs::read(path) {
            Ok(d) => Some(d),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => {
                log::warn!("{}", Error::Cache { path: path.into(), reason: e.to_string() });
                None
            }
        }
    }

    pub fn store_eigensystem(&self, key: &CacheKey, eig: &InnerEigensystem) -> Result<()> {
        self.write(&self.path(key, EIGEN_EXT), &encode_eigensystem(key, eig))
    }

    /// Loads an entry; damaged or stale files are reported and ignored.
    pub fn load_eigensystem(&self, key: &CacheKey) -> Option<InnerEigensystem> {
        let path = self.path(key, EIGEN_EXT);
        let data = self.read(&path)?;
        match decode_eigensystem(key, &data) {
            Ok(e) => Some(e),
            Err(reason) => {
                log::warn!("{}; recomputing", Error::Cache { path, reason });
                None
            }
        }
    }

    pub fn cache_smatrix(&self, key: &CacheKey, table: &STable) -> Result<()> {
        let mut w = Writer::default();
        w.bytes(TABLE_MAGIC);
        w.text(&key.descriptor);
        w.u64(table.n_max as i64 as u64);
        w.u64(table.l_max as u64);
        w.u64(table.nudged as u64);
        w.u64(table.columns.len() as u64);
        for (&(l, i), col) in &table.columns {
            w.u64(l as u64);
            w.u64(i as u64);
            w.u64(col.len() as u64);
            for &z in col {
                w.c64(z);
            }
        }
        self.write(&self.path(key, TABLE_EXT), &w.finish())
    }

    pub fn load_smatrix(&self, key: &CacheKey) -> Option<STable> {
        let path = self.path(key, TABLE_EXT);
        let data = self.read(&path)?;
        let decoded = (|| {
            let mut r = Reader::open(&data, TABLE_MAGIC)?;
            if r.text()? != key.descriptor {
                return Err("stale entry (parameters differ)".to_string());
            }
            let n_max = r.u64()? as i64 as i32;
            let l_max = r.u64()? as u32;
            let nudged = r.u64()? as usize;
            let count = r.u64()? as usize;
            let mut columns = BTreeMap::new();
            for _ in 0..count {
                let l = r.u64()? as u32;
                let i = r.u64()? as i64;
                let len = r.u64()? as usize;
                if len > data.len() {
                    return Err("implausible column length".into());
                }
                let col = (0..len).map(|_| r.c64()).collect::<std::result::Result<Vec<_>, _>>()?;
                columns.insert((l, i), col);
            }
            r.done()?;
            Ok(STable { n_max, l_max, columns, nudged })
        })();
        match decoded {
            Ok(t) => Some(t),
            Err(reason) => {
                log::warn!("{}; recomputing", Error::Cache { path, reason });
                None
            }
        }
    }

    pub fn entries(&self) -> Result<Vec<CacheEntry>> {
        let mut out = Vec::new();
        for item in fs::read_dir(&self.dir)? {
            let path = item?.path();
            let (kind, magic) = match path.extension().and_then(|e| e.to_str()) {
                Some(EIGEN_EXT) => (EntryKind::Eigensystem, EIGEN_MAGIC),
                Some(TABLE_EXT) => (EntryKind::STable, TABLE_MAGIC),
                _ => continue,
            };
            let data = fs::read(&path)?;
            let descriptor = Reader::open(&data, magic).ok().and_then(|mut r| r.text().ok());
            out.push(CacheEntry { bytes: data.len() as u64, path, kind, descriptor });
        }
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }

    /// Removes every cache file; returns the number removed.
    pub fn clear(&self) -> Result<usize> {
        let mut n = 0;
        for item in fs::read_dir(&self.dir)? {
            let path = item?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext == EIGEN_EXT || ext == TABLE_EXT || ext.starts_with("tmp") {
                fs::remove_file(&path)?;
                n += 1;
            }
        }
        Ok(n)
    }
}

impl EigenStore for DiskCache {
    fn load(&self, potential: &PotentialSpec, setup: &SolverSetup, l: u32) -> Option<InnerEigensystem> {
        self.load_eigensystem(&eigen_key(potential, setup, l))
    }

    fn store(&self, potential: &PotentialSpec, setup: &SolverSetup, l: u32, eig: &InnerEigensystem) {
        if let Err(e) = self.store_eigensystem(&eigen_key(potential, setup, l), eig) {
            log::warn!("could not write cache entry for l = {l}: {e}");
        }
    }
}
