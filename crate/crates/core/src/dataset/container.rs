//! PEC embedding container.
//!
//! Little-endian throughout. A 20-byte header
//!
//! ```text
//! magic "PRBE" | version u16 | flags u16 | embed_dim u32 | record_count u64
//! ```
//!
//! is followed by the records back to back:
//!
//! ```text
//! mol_id u64 | n_atoms u32 | [atomic_numbers u8 × N] | embeddings f32 × N·d
//!   | [charges f32 × N] | e_pred f64 | [e_ref f64]
//! ```
//!
//! Bracketed fields are present iff the corresponding flag bit is set.
//! Files ending in `.jsonl` are read and written as one JSON record per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dataset::record::MoleculeRecord;
use crate::error::{ProbeError, Result};

pub const MAGIC: [u8; 4] = *b"PRBE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

pub const FLAG_CHARGES: u16 = 1 << 0;
pub const FLAG_REF_ENERGY: u16 = 1 << 1;
pub const FLAG_ATOMIC_NUMBERS: u16 = 1 << 2;
const KNOWN_FLAGS: u16 = FLAG_CHARGES | FLAG_REF_ENERGY | FLAG_ATOMIC_NUMBERS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub version: u16,
    pub flags: u16,
    pub embed_dim: u32,
    pub record_count: u64,
}

impl ContainerHeader {
    pub fn has_charges(&self) -> bool {
        self.flags & FLAG_CHARGES != 0
    }

    pub fn has_ref_energy(&self) -> bool {
        self.flags & FLAG_REF_ENERGY != 0
    }

    pub fn has_atomic_numbers(&self) -> bool {
        self.flags & FLAG_ATOMIC_NUMBERS != 0
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.flags.to_le_bytes());
        b[8..12].copy_from_slice(&self.embed_dim.to_le_bytes());
        b[12..20].copy_from_slice(&self.record_count.to_le_bytes());
        b
    }
}

/// Flags and width shared by every record, or an error naming the first
/// record that disagrees with the first one.
pub fn layout_of(records: &[MoleculeRecord]) -> Result<(u16, usize)> {
    let Some(first) = records.first() else {
        return Ok((0, 0));
    };
    let flags_of = |r: &MoleculeRecord| {
        let mut f = 0;
        if r.charges.is_some() {
            f |= FLAG_CHARGES;
        }
        if r.e_ref.is_some() {
            f |= FLAG_REF_ENERGY;
        }
        if r.atomic_numbers.is_some() {
            f |= FLAG_ATOMIC_NUMBERS;
        }
        f
    };
    let (flags, dim) = (flags_of(first), first.embed_dim());
    for r in records {
        r.validate()?;
        if flags_of(r) != flags || r.embed_dim() != dim {
            return Err(ProbeError::Data(format!(
                "record {} differs from the first record in optional fields or embedding width",
                r.mol_id
            )));
        }
    }
    Ok((flags, dim))
}

pub fn encode_container(records: &[MoleculeRecord]) -> Result<Vec<u8>> {
    let (flags, dim) = layout_of(records)?;
    let header = ContainerHeader {
        version: VERSION,
        flags,
        embed_dim: u32::try_from(dim).map_err(|_| ProbeError::Data("embedding width overflows u32".into()))?,
        record_count: records.len() as u64,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * (28 + dim * 16 * 4));
    out.extend_from_slice(&header.to_bytes());
    for r in records {
        out.extend_from_slice(&r.mol_id.to_le_bytes());
        let n = u32::try_from(r.n_atoms)
            .map_err(|_| ProbeError::InvalidRecord(format!("molecule {} too large", r.mol_id)))?;
        out.extend_from_slice(&n.to_le_bytes());
        if let Some(z) = &r.atomic_numbers {
            out.extend_from_slice(z);
        }
        for v in &r.embeddings {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(c) = &r.charges {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&r.e_pred.to_le_bytes());
        if let Some(e) = r.e_ref {
            out.extend_from_slice(&e.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ProbeError::format(
                self.pos as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_header(buf: &[u8]) -> Result<ContainerHeader> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(ProbeError::format(0, format!("bad magic {magic:?}, expected \"PRBE\"")));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(ProbeError::format(4, format!("unsupported version {version}")));
    }
    let flags = c.u16("flags")?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(ProbeError::format(6, format!("unknown flag bits {flags:#06x}")));
    }
    let embed_dim = c.u32("embed_dim")?;
    let record_count = c.u64("record_count")?;
    Ok(ContainerHeader {
        version,
        flags,
        embed_dim,
        record_count,
    })
}

pub fn decode_container(buf: &[u8]) -> Result<(ContainerHeader, Vec<MoleculeRecord>)> {
    let header = decode_header(buf)?;
    let d = header.embed_dim as usize;
    let mut c = Cursor {
        buf,
        pos: HEADER_LEN,
    };
    if header.record_count > 0 && d == 0 {
        return Err(ProbeError::format(8, "zero embedding width with non-empty record list"));
    }
    let mut records = Vec::with_capacity(header.record_count.min(1 << 20) as usize);
    for idx in 0..header.record_count {
        let start = c.pos as u64;
        let mol_id = c.u64("mol_id")?;
        let n = c.u32("n_atoms")? as usize;
        if n == 0 {
            return Err(ProbeError::format(start + 8, format!("record {idx} has zero atoms")));
        }
        let atomic_numbers = if header.has_atomic_numbers() {
            Some(c.take(n, "atomic_numbers")?.to_vec())
        } else {
            None
        };
        let embeddings = c.f32s(n * d, "embeddings")?;
        let charges = if header.has_charges() {
            Some(c.f32s(n, "charges")?)
        } else {
            None
        };
        let e_pred = c.f64("e_pred")?;
        let e_ref = if header.has_ref_energy() {
            Some(c.f64("e_ref")?)
        } else {
            None
        };
        let rec = MoleculeRecord {
            mol_id,
            n_atoms: n,
            atomic_numbers,
            embeddings,
            charges,
            e_pred,
            e_ref,
        };
        rec.validate()
            .map_err(|e| ProbeError::format(start, format!("record {idx}: {e}")))?;
        records.push(rec);
    }
    if c.pos != buf.len() {
        return Err(ProbeError::format(
            c.pos as u64,
            format!("{} trailing bytes after last record", buf.len() - c.pos),
        ));
    }
    Ok((header, records))
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

pub fn write_container(records: &[MoleculeRecord], path: &Path) -> Result<()> {
    if is_jsonl(path) {
        layout_of(records)?;
        let mut f = fs::File::create(path).map_err(|e| ProbeError::io(path, e))?;
        for r in records {
            let line = serde_json::to_string(r).map_err(|e| ProbeError::Data(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| ProbeError::io(path, e))?;
        }
        return Ok(());
    }
    let bytes = encode_container(records)?;
    fs::write(path, bytes).map_err(|e| ProbeError::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Vec<MoleculeRecord>> {
    Ok(read_container_with_header(path)?.1)
}

/// Read either format; JSONL headers are synthesized from the records.
pub fn read_container_with_header(path: &Path) -> Result<(ContainerHeader, Vec<MoleculeRecord>)> {
    if is_jsonl(path) {
        let f = fs::File::open(path).map_err(|e| ProbeError::io(path, e))?;
        let mut records = Vec::new();
        let mut offset = 0u64;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| ProbeError::io(path, e))?;
            let len = line.len() as u64 + 1;
            if !line.trim().is_empty() {
                let rec: MoleculeRecord = serde_json::from_str(&line)
                    .map_err(|e| ProbeError::format(offset, format!("bad JSON record: {e}")))?;
                records.push(rec);
            }
            offset += len;
        }
        let (flags, dim) = layout_of(&records)?;
        let header = ContainerHeader {
            version: VERSION,
            flags,
            embed_dim: dim as u32,
            record_count: records.len() as u64,
        };
        return Ok((header, records));
    }
    let buf = fs::read(path).map_err(|e| ProbeError::io(path, e))?;
    decode_container(&buf)
}
