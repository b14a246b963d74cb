//! "TNSR" tensor files.
//!
//! Layout, all little-endian:
//! ```text
//! magic  b"TNSR"
//! version u16      (currently 1)
//! dtype   u8       (1 = f32, 2 = i64)
//! rank    u8
//! dims    rank × u32
//! payload product(dims) · sizeof(dtype) bytes
//! ```

use super::ImageBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;
const DTYPE_I64: u8 = 2;

fn write_header(out: &mut Vec<u8>, dtype: u8, dims: &[usize]) -> Result<()> {
    if dims.len() > u8::MAX as usize {
        return Err(Error::InvalidArgument(format!("rank {} exceeds format limit", dims.len())));
    }
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype);
    out.push(dims.len() as u8);
    for &d in dims {
        let d32 = u32::try_from(d).map_err(|_| Error::TensorFileDimOverflow)?;
        out.extend_from_slice(&d32.to_le_bytes());
    }
    Ok(())
}

struct Header {
    dtype: u8,
    dims: Vec<usize>,
    numel: usize,
    offset: usize,
}

fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 4 {
        return Err(Error::TensorFileTruncated);
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::TensorFileBadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::TensorFileTruncated);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::TensorFileBadVersion(version));
    }
    let dtype = bytes[6];
    if dtype != DTYPE_F32 && dtype != DTYPE_I64 {
        return Err(Error::TensorFileBadDtype(dtype));
    }
    let rank = bytes[7] as usize;
    let dims_end = 8 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(Error::TensorFileTruncated);
    }
    let mut dims = Vec::with_capacity(rank);
    let mut numel: u64 = 1;
    for i in 0..rank {
        let d = u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as u64;
        numel = numel.checked_mul(d).ok_or(Error::TensorFileDimOverflow)?;
        dims.push(d as usize);
    }
    let elem = if dtype == DTYPE_F32 { 4u64 } else { 8u64 };
    let payload = numel.checked_mul(elem).ok_or(Error::TensorFileDimOverflow)?;
    if payload > (usize::MAX as u64) || numel > (usize::MAX as u64) {
        return Err(Error::TensorFileDimOverflow);
    }
    Ok(Header { dtype, dims, numel: numel as usize, offset: dims_end })
}

/// Serialize an f32 tensor; byte-exact round trip with [`read_tensor`].
pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 4 * tensor.numel());
    write_header(&mut out, DTYPE_F32, tensor.shape())?;
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    let h = read_header(&bytes)?;
    if h.dtype != DTYPE_F32 {
        return Err(Error::TensorFileBadDtype(h.dtype));
    }
    let expected = h.offset + 4 * h.numel;
    if bytes.len() < expected {
        return Err(Error::TensorFileTruncated);
    }
    if bytes.len() > expected {
        return Err(Error::TensorFileTrailing(bytes.len() - expected));
    }
    let data: Vec<f32> = bytes[h.offset..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(h.dims, data)
}

/// Serialize integer labels as a rank-1 i64 tensor.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 8 * labels.len());
    write_header(&mut out, DTYPE_I64, &[labels.len()])?;
    for &l in labels {
        out.extend_from_slice(&(l as i64).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    let h = read_header(&bytes)?;
    if h.dtype != DTYPE_I64 {
        return Err(Error::TensorFileBadDtype(h.dtype));
    }
    let expected = h.offset + 8 * h.numel;
    if bytes.len() < expected {
        return Err(Error::TensorFileTruncated);
    }
    if bytes.len() > expected {
        return Err(Error::TensorFileTrailing(bytes.len() - expected));
    }
    bytes[h.offset..]
        .chunks_exact(8)
        .map(|c| {
            let v = i64::from_le_bytes(c.try_into().unwrap());
            usize::try_from(v).map_err(|_| Error::InvalidArgument(format!("negative label {v}")))
        })
        .collect()
}

/// Write a batch as `<stem>.images.tnsr` (+ `<stem>.labels.tnsr` when labeled).
pub fn write_image_batch(dir: &Path, stem: &str, batch: &ImageBatch) -> Result<()> {
    write_tensor(&dir.join(format!("{stem}.images.tnsr")), batch.images())?;
    if let Some(labels) = batch.labels() {
        write_labels(&dir.join(format!("{stem}.labels.tnsr")), labels)?;
    }
    Ok(())
}

/// Read a batch written by [`write_image_batch`]; labels are optional.
pub fn read_image_batch(dir: &Path, stem: &str) -> Result<ImageBatch> {
    let images = read_tensor(&dir.join(format!("{stem}.images.tnsr")))?;
    let label_path = dir.join(format!("{stem}.labels.tnsr"));
    let labels = if label_path.exists() { Some(read_labels(&label_path)?) } else { None };
    ImageBatch::new(images, labels)
}
