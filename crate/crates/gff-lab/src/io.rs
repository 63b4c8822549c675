//! Binary field records, field streams with an index file, and JSON sidecars.
//!
//! A record is a 40-byte little-endian header followed by the values:
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..4   | magic `GFFS`                            |
//! | 4..8   | format version (`u32`, currently 1)     |
//! | 8..12  | dimension `d` (`u32`)                   |
//! | 12..16 | `n` (`u32`)                             |
//! | 16..20 | sites per axis (`u32`)                  |
//! | 20..24 | components per site `N` (`u32`)         |
//! | 24..32 | `m²` (`f64`)                            |
//! | 32..40 | coupling `g` (`f64`)                    |
//!
//! The body holds `side^d · N` doubles, site-major with the last lattice axis
//! varying fastest and the `N` components of a site adjacent.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gff_core::gaussian::{FieldParams, FieldState};
use gff_core::lattice::{LatticeDomain, Shape};
use serde::{Deserialize, Serialize};

use crate::error::{CoreContext, LabError, Result};

pub const MAGIC: [u8; 4] = *b"GFFS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

/// Enough to rebuild a domain: boxes, shaped regions and odd-sided boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainDesc {
    pub d: usize,
    pub n: usize,
    pub side: usize,
    pub shape: Option<Shape>,
}

impl DomainDesc {
    pub fn of(dom: &LatticeDomain) -> Result<Self> {
        if dom.shape().is_none() && dom.region_len() != dom.len() {
            return Err(LabError::Format {
                path: PathBuf::new(),
                msg: "custom region masks cannot be serialized".into(),
            });
        }
        Ok(DomainDesc {
            d: dom.d(),
            n: dom.n(),
            side: dom.side(),
            shape: dom.shape(),
        })
    }

    pub fn build(&self) -> Result<LatticeDomain> {
        let dom = match self.shape {
            Some(s) => LatticeDomain::build(self.d, self.n, s),
            None if self.side == 2 * (self.n / 2) + 1 => LatticeDomain::full_box(self.d, self.n),
            None => LatticeDomain::with_side(self.d, self.side),
        }
        .ctx("rebuilding the domain")?;
        if dom.side() != self.side {
            return Err(LabError::Format {
                path: PathBuf::new(),
                msg: "domain description is inconsistent".into(),
            });
        }
        Ok(dom)
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> LabError {
    LabError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn encode_state(state: &FieldState) -> Vec<u8> {
    let dom = &state.domain;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * state.values.len());
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        dom.d() as u32,
        dom.n() as u32,
        dom.side() as u32,
        state.params.spin as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.params.m2.to_le_bytes());
    out.extend_from_slice(&state.params.g.to_le_bytes());
    for v in &state.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header fields of one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordHeader {
    pub d: usize,
    pub n: usize,
    pub side: usize,
    pub params: FieldParams,
}

impl RecordHeader {
    pub fn body_len(&self) -> usize {
        self.side.pow(self.d as u32) * self.params.spin
    }
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<Option<RecordHeader>> {
    let mut h = [0u8; HEADER_LEN];
    // Distinguish a clean end of stream from a truncated header.
    let mut got = 0;
    while got < HEADER_LEN {
        let k = r.read(&mut h[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    if got == 0 {
        return Ok(None);
    }
    if got < HEADER_LEN {
        return Err(format_err(path, "truncated header"));
    }
    if h[0..4] != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let u = |k: usize| u32::from_le_bytes(h[k..k + 4].try_into().unwrap());
    let f = |k: usize| f64::from_le_bytes(h[k..k + 8].try_into().unwrap());
    if u(4) != VERSION {
        return Err(format_err(path, format!("unsupported version {}", u(4))));
    }
    let params = FieldParams::new(u(20) as usize, f(24), f(32)).ctx("record header")?;
    Ok(Some(RecordHeader {
        d: u(8) as usize,
        n: u(12) as usize,
        side: u(16) as usize,
        params,
    }))
}

/// Read one record; the domain is taken from `domain` when given and must
/// match the header.
pub fn read_state(
    r: &mut impl Read,
    path: &Path,
    domain: Option<&Arc<LatticeDomain>>,
) -> Result<Option<FieldState>> {
    let Some(h) = read_header(r, path)? else {
        return Ok(None);
    };
    let dom = match domain {
        Some(d) => {
            if d.d() != h.d || d.side() != h.side {
                return Err(format_err(
                    path,
                    "record does not match the stream's domain",
                ));
            }
            d.clone()
        }
        None => Arc::new(
            DomainDesc {
                d: h.d,
                n: h.n,
                side: h.side,
                shape: None,
            }
            .build()?,
        ),
    };
    let mut body = vec![0u8; 8 * h.body_len()];
    r.read_exact(&mut body)
        .map_err(|_| format_err(path, "truncated body"))?;
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Some(FieldState {
        params: h.params,
        domain: dom,
        values,
    }))
}

pub fn save_state(path: &Path, state: &FieldState) -> Result<()> {
    std::fs::write(path, encode_state(state))?;
    write_sidecar(path, &Sidecar::new(state, 1, serde_json::Value::Null)?)
}

pub fn load_state(path: &Path) -> Result<FieldState> {
    let (_, mut states) = read_stream(path)?;
    if states.len() != 1 {
        return Err(format_err(
            path,
            format!("expected one record, found {}", states.len()),
        ));
    }
    Ok(states.pop().unwrap())
}

/// JSON description stored next to a record or stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub byte_order: String,
    pub domain: DomainDesc,
    pub params: FieldParams,
    pub frames: usize,
    /// Free-form run description (parameters, chain summary).
    pub run: serde_json::Value,
}

impl Sidecar {
    pub fn new(state: &FieldState, frames: usize, run: serde_json::Value) -> Result<Self> {
        Ok(Sidecar {
            format: "gff-field".into(),
            version: VERSION,
            byte_order: "little-endian".into(),
            domain: DomainDesc::of(&state.domain)?,
            params: state.params,
            frames,
            run,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".idx");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Appends records to a stream file and one `frame sweep offset` line per
/// record to the index file. The sidecar is written by [`finish`](Self::finish).
pub struct StreamWriter {
    path: PathBuf,
    data: BufWriter<File>,
    index: BufWriter<File>,
    offset: u64,
    frames: usize,
    first: Option<Sidecar>,
}

impl StreamWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let data = BufWriter::new(File::create(path)?);
        let mut index = BufWriter::new(File::create(index_path(path))?);
        writeln!(index, "# frame sweep byte_offset")?;
        Ok(StreamWriter {
            path: path.to_path_buf(),
            data,
            index,
            offset: 0,
            frames: 0,
            first: None,
        })
    }

    pub fn push(&mut self, sweep: u64, state: &FieldState) -> Result<()> {
        if self.first.is_none() {
            self.first = Some(Sidecar::new(state, 0, serde_json::Value::Null)?);
        }
        let bytes = encode_state(state);
        self.data.write_all(&bytes)?;
        writeln!(self.index, "{} {} {}", self.frames, sweep, self.offset)?;
        self.offset += bytes.len() as u64;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn finish(mut self, run: serde_json::Value) -> Result<PathBuf> {
        self.data.flush()?;
        self.index.flush()?;
        let mut side = self
            .first
            .take()
            .ok_or_else(|| format_err(&self.path, "stream has no frames"))?;
        side.frames = self.frames;
        side.run = run;
        write_sidecar(&self.path, &side)?;
        Ok(self.path)
    }
}

pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let p = sidecar_path(path);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(p)?)?))
}

/// All records of a stream. The domain comes from the sidecar when present,
/// otherwise from the first header (whole box, region lost).
pub fn read_stream(path: &Path) -> Result<(Option<Sidecar>, Vec<FieldState>)> {
    let side = read_sidecar(path)?;
    let dom = match &side {
        Some(s) => Some(Arc::new(s.domain.build()?)),
        None => None,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut out: Vec<FieldState> = Vec::new();
    loop {
        let hint = dom.as_ref().or_else(|| out.first().map(|s| &s.domain));
        match read_state(&mut r, path, hint)? {
            Some(s) => out.push(s),
            None => break,
        }
    }
    if let Some(s) = &side {
        if s.frames != out.len() {
            return Err(format_err(
                path,
                format!(
                    "sidecar lists {} frames, file holds {}",
                    s.frames,
                    out.len()
                ),
            ));
        }
    }
    Ok((side, out))
}

/// `(frame, sweep, offset)` triples from an index file.
pub fn read_index(path: &Path) -> Result<Vec<(usize, u64, u64)>> {
    let p = index_path(path);
    let r = BufReader::new(File::open(&p)?);
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let v: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(&p, format!("bad index line {}", k + 1)))?;
        if v.len() != 3 {
            return Err(format_err(&p, format!("bad index line {}", k + 1)));
        }
        out.push((v[0] as usize, v[1], v[2]));
    }
    Ok(out)
}
