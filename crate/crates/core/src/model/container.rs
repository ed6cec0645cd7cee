//! File formats: TOML network specs and the "BBNx" binary tensor container.
//!
//! Container layout: 4-byte magic, u32 version, u32 tensor count, then per
//! tensor a u32 rank, `rank` u32 dims, and the raw payload (little-endian
//! f32 row-major for "BBNP"/"BBNI", int8 in {-1,+1} for "BBNE").

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{BinaryEnsemble, NetworkSpec, ProbabilityMap};

pub const CONTAINER_VERSION: u32 = 1;

pub const MAGIC_PROB: &[u8; 4] = b"BBNP";
pub const MAGIC_ENSEMBLE: &[u8; 4] = b"BBNE";
pub const MAGIC_INPUT: &[u8; 4] = b"BBNI";

pub fn load_network_spec(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path)?;
    let spec: NetworkSpec =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_network_spec(spec: &NetworkSpec, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(spec).map_err(|e| Error::Parse(e.to_string()))?;
    atomic_write(path, text.as_bytes())
}

/// Write bytes via a temp file in the same directory, then rename.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], count: u32) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
}

fn write_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path, magic: &[u8; 4]) -> Result<(Self, u32)> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader { buf, pos: 0 };
        let m = r.take(4)?;
        if m != magic {
            return Err(Error::Container(format!(
                "{}: bad magic {:?}, expected {:?}",
                path.display(),
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Container(format!("unsupported container version {version}")));
        }
        let count = r.u32()?;
        Ok((r, count))
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Container("truncated container".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Container(format!("implausible tensor rank {rank}")));
        }
        (0..rank).map(|_| Ok(self.u32()? as usize)).collect()
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Container("trailing bytes in container".into()));
        }
        Ok(())
    }
}

fn encode_f32(magic: &[u8; 4], tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, magic, tensors.len() as u32);
    for t in tensors {
        write_dims(&mut out, &t.dims);
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_f32(path: &Path, magic: &[u8; 4]) -> Result<Vec<Tensor>> {
    let (mut r, count) = Reader::open(path, magic)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let dims = r.dims()?;
        let len: usize = dims.iter().product();
        let raw = r.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { dims, data });
    }
    r.done()?;
    Ok(tensors)
}

pub fn save_probability_map(map: &ProbabilityMap, path: &Path) -> Result<()> {
    atomic_write(path, &encode_f32(MAGIC_PROB, &map.layers))
}

pub fn load_probability_map(path: &Path, spec: &NetworkSpec) -> Result<ProbabilityMap> {
    let map = ProbabilityMap { layers: decode_f32(path, MAGIC_PROB)? };
    map.validate(spec)?;
    Ok(map)
}

/// Evaluation inputs: one f32 tensor per input, each shaped like the spec input.
pub fn save_inputs(inputs: &[Tensor], path: &Path) -> Result<()> {
    atomic_write(path, &encode_f32(MAGIC_INPUT, inputs))
}

pub fn load_inputs(path: &Path, spec: &NetworkSpec) -> Result<Vec<Tensor>> {
    let tensors = decode_f32(path, MAGIC_INPUT)?;
    let want = vec![spec.input.channels, spec.input.height, spec.input.width];
    for (i, t) in tensors.iter().enumerate() {
        if t.dims != want {
            return Err(Error::Shape(format!(
                "input {i}: dims {:?} do not match spec input {:?}",
                t.dims, want
            )));
        }
    }
    Ok(tensors)
}

/// Debug dump of one sampled ensemble.
pub fn save_ensemble(ens: &BinaryEnsemble, spec: &NetworkSpec, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    write_header(&mut out, MAGIC_ENSEMBLE, ens.layers.len() as u32);
    for (layer, ls) in ens.layers.iter().zip(&spec.layers) {
        write_dims(&mut out, &ls.weight_dims());
        out.extend(layer.iter().map(|&w| w as u8));
    }
    atomic_write(path, &out)
}

pub fn load_ensemble(path: &Path, spec: &NetworkSpec, index: usize) -> Result<BinaryEnsemble> {
    let (mut r, count) = Reader::open(path, MAGIC_ENSEMBLE)?;
    if count as usize != spec.layers.len() {
        return Err(Error::Shape(format!(
            "ensemble has {count} layers, spec has {}",
            spec.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for ls in &spec.layers {
        let dims = r.dims()?;
        if dims != ls.weight_dims() {
            return Err(Error::Shape("ensemble dims do not match spec".into()));
        }
        let len: usize = dims.iter().product();
        let raw = r.take(len)?;
        let data: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
        if let Some(w) = data.iter().find(|w| **w != 1 && **w != -1) {
            return Err(Error::Range(format!("ensemble entry {w} not in {{-1,+1}}")));
        }
        layers.push(data);
    }
    r.done()?;
    Ok(BinaryEnsemble { index, layers })
}
