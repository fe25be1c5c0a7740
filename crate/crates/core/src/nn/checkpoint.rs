//! Binary checkpoints: magic `SCCK`, format version, parameter count, then per
//! parameter its name, rank, dims and little-endian f64 values. A text
//! manifest alongside lists names, shapes and the sha256 of the binary.

use std::path::Path;

use super::{Parameters, Tensor};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

const MAGIC: &[u8; 4] = b"SCCK";
const VERSION: u32 = 1;

pub fn encode_checkpoint<P: Parameters>(params: &P) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::with_capacity(16 + params.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::format("checkpoint", "parameter name is not utf-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r
            .take(len.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "shape overflow"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Ok(out)
}

/// Copies decoded tensors into `params`, checking names and shapes.
pub fn restore<P: Parameters>(params: &mut P, entries: Vec<(String, Tensor)>) -> Result<()> {
    let mut dst = params.tensors_mut();
    if dst.len() != entries.len() {
        return Err(Error::dim(dst.len(), entries.len(), "checkpoint parameter count"));
    }
    for ((name, t), (src_name, src)) in dst.iter_mut().zip(entries) {
        if *name != src_name {
            return Err(Error::format("checkpoint", format!("expected {name}, found {src_name}")));
        }
        if t.shape() != src.shape() {
            return Err(Error::dim(t.len(), src.len(), format!("checkpoint tensor {name}")));
        }
        **t = src;
    }
    Ok(())
}

pub fn manifest<P: Parameters>(params: &P, binary: &[u8]) -> String {
    let mut s = format!("simcom-checkpoint v{VERSION}\nsha256 {}\n", sha256_hex(binary));
    for (name, t) in params.tensors() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("{name} {}\n", dims.join("x")));
    }
    s
}

/// Writes `path` and `path.manifest`.
pub fn save_checkpoint<P: Parameters>(params: &P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params);
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest(params, &bytes)).map_err(|e| Error::io(&mpath, e))
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    s.into()
}

/// Loads into `params`, verifying the manifest checksum when one exists.
pub fn load_checkpoint<P: Parameters>(params: &mut P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    if let Ok(text) = std::fs::read_to_string(&mpath) {
        let want = text
            .lines()
            .find_map(|l| l.strip_prefix("sha256 "))
            .ok_or_else(|| Error::format("checkpoint manifest", "missing checksum"))?;
        if want != sha256_hex(&bytes) {
            return Err(Error::format("checkpoint", "checksum mismatch"));
        }
    }
    restore(params, decode_checkpoint(&bytes)?)
}
