//! Binary model container.
//!
//! ```text
//! magic    "FRMLT1"
//! version  u16
//! config   u32 length + UTF-8 digit string
//! count    u32
//! tensor*  u32 name length + UTF-8 name, u32 rank, u32 dims[rank],
//!          f32 values[product(dims)]
//! ```
//!
//! All integers and floats are little-endian. Besides the learnable
//! parameters the table holds one `meta.residual` tensor (`[1]`, 0 or 1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::model::{Network, StageConfig};
use super::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 6] = b"FRMLT1";
pub const MODEL_VERSION: u16 = 1;

const RESIDUAL_TENSOR: &str = "meta.residual";
const MAX_NAME: usize = 1 << 16;
const MAX_RANK: usize = 8;

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len())?;
    w.write_all(s.as_bytes())
}

fn put_tensor(w: &mut impl Write, name: &str, t: &Tensor<f32>) -> std::io::Result<()> {
    put_str(w, name)?;
    put_u32(w, t.dims().len())?;
    for &d in t.dims() {
        put_u32(w, d)?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model(net: &Network, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    put_str(w, net.config().digits())?;
    put_u32(w, net.params().len() + 1)?;
    for p in net.params() {
        put_tensor(w, &p.name, &p.value)?;
    }
    let flag = if net.config().residual { 1.0 } else { 0.0 };
    put_tensor(
        w,
        RESIDUAL_TENSOR,
        &Tensor::new(vec![1], vec![flag]).expect("dims"),
    )
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(net, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::CorruptModel(format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        if len > MAX_NAME {
            return Err(Error::CorruptModel(format!(
                "{what} length {len} too large"
            )));
        }
        String::from_utf8(self.bytes(len, what)?)
            .map_err(|_| Error::CorruptModel(format!("{what} is not UTF-8")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let name = self.string("tensor name")?;
        let rank = self.u32("tensor rank")?;
        if rank > MAX_RANK {
            return Err(Error::CorruptModel(format!("{name}: rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32("tensor dims")?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= 1 << 30)
            .ok_or_else(|| Error::CorruptModel(format!("{name}: dims {dims:?} too large")))?;
        let raw = self.bytes(count * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((name, Tensor::new(dims, data)?))
    }
}

pub fn read_model(r: impl Read) -> Result<Network> {
    let mut r = Reader { inner: r };
    if r.bytes(6, "magic")? != MODEL_MAGIC {
        return Err(Error::CorruptModel("bad magic bytes".into()));
    }
    let v = r.bytes(2, "version")?;
    let version = u16::from_le_bytes([v[0], v[1]]);
    if version != MODEL_VERSION {
        return Err(Error::CorruptModel(format!(
            "unsupported version {version}"
        )));
    }
    let digits = r.string("config string")?;
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        tensors.push(r.tensor()?);
    }
    let mut trailing = [0u8; 1];
    if r.inner
        .read(&mut trailing)
        .map_err(|e| Error::CorruptModel(e.to_string()))?
        != 0
    {
        return Err(Error::CorruptModel(
            "trailing bytes after tensor table".into(),
        ));
    }

    let residual = match tensors.iter().position(|(n, _)| n == RESIDUAL_TENSOR) {
        Some(i) => tensors.remove(i).1.data().first().copied().unwrap_or(0.0) != 0.0,
        None => false,
    };
    let base = tensors
        .first()
        .filter(|(n, t)| n == "enc0.conv1.weight" && t.dims().len() == 4)
        .map(|(_, t)| t.dims()[0])
        .ok_or_else(|| Error::CorruptModel("first tensor must be enc0.conv1.weight".into()))?;
    let config = StageConfig::new(&digits, base)
        .map_err(|e| Error::CorruptModel(e.to_string()))?
        .with_residual(residual);

    let mut stored = tensors.into_iter();
    let mut mismatch = None;
    let net = Network::from_fn(&config, |name, dims| match stored.next() {
        Some((n, t)) if n == name && t.dims() == dims => t.into_data(),
        other => {
            mismatch.get_or_insert_with(|| {
                format!(
                    "expected {name} {dims:?}, found {:?}",
                    other.map(|(n, t)| (n, t.dims().to_vec()))
                )
            });
            vec![0.0; dims.iter().product()]
        }
    })
    .map_err(|e| Error::CorruptModel(e.to_string()))?;
    if let Some(m) = mismatch {
        return Err(Error::CorruptModel(m));
    }
    if let Some((n, _)) = stored.next() {
        return Err(Error::CorruptModel(format!("unexpected tensor {n}")));
    }
    Ok(net)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
