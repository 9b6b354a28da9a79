//! Binary checkpoint: `USTC`, version u32, count u32, then per tensor a u16
//! name length, UTF-8 name, u8 rank, u32 dims and the little-endian payload.
//! Version 1 carries f32 payloads, version 2 f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"USTC";

fn version_for(bytes: usize) -> u32 {
    if bytes == 4 {
        1
    } else {
        2
    }
}

pub fn encode<S: Scalar>(entries: &[(String, Tensor<S>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version_for(S::BYTES).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(TensorError::Format(format!("name too long: {name}")));
        }
        if t.rank() > u8::MAX as usize {
            return Err(TensorError::Format(format!(
                "{name}: rank {} too large",
                t.rank()
            )));
        }
        out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        out.extend_from_slice(nb);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| TensorError::Format(format!("{name}: dim {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| TensorError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes into `S`. A payload of the other width is converted on load.
pub fn decode<S: Scalar>(buf: &[u8]) -> Result<Vec<(String, Tensor<S>)>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(TensorError::Format("bad magic, expected USTC".into()));
    }
    let version = r.u32()?;
    let width = match version {
        1 => 4,
        2 => 8,
        v => return Err(TensorError::Format(format!("unsupported version {v}"))),
    };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let nlen = {
            let b = r.take(2)?;
            u16::from_le_bytes([b[0], b[1]]) as usize
        };
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| TensorError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = numel(&shape);
        let payload = r.take(
            n.checked_mul(width)
                .ok_or_else(|| TensorError::Format(format!("{name}: size overflow")))?,
        )?;
        let data: Vec<S> = if width == S::BYTES {
            payload.chunks_exact(width).map(S::read_le).collect()
        } else if width == 4 {
            payload
                .chunks_exact(4)
                .map(|c| S::of(f32::read_le(c) as f64))
                .collect()
        } else {
            payload
                .chunks_exact(8)
                .map(|c| S::of(f64::read_le(c)))
                .collect()
        };
        out.push((name, Tensor::from_vec(data, &shape)?));
    }
    if r.pos != buf.len() {
        return Err(TensorError::Format(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok(out)
}

pub fn save<S: Scalar>(path: &Path, entries: &[(String, Tensor<S>)]) -> Result<()> {
    let bytes = encode(entries)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load<S: Scalar>(path: &Path) -> Result<Vec<(String, Tensor<S>)>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor<f32>)> {
        vec![
            (
                "stage1.attn.w_q".into(),
                Tensor::from_vec(vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5e-12], &[2, 2]).unwrap(),
            ),
            ("bn.tracked".into(), Tensor::scalar(7.0)),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let entries = sample();
        let back: Vec<(String, Tensor<f32>)> = decode(&encode(&entries).unwrap()).unwrap();
        assert_eq!(back.len(), entries.len());
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            let b0: Vec<u32> = t0.data().iter().map(|v| v.to_bits()).collect();
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b0, b1);
        }
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode(&sample()).unwrap();
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode::<f32>(&bytes), Err(TensorError::Format(_))));
    }

    #[test]
    fn f32_payload_loads_as_f64() {
        let back: Vec<(String, Tensor<f64>)> = decode(&encode(&sample()).unwrap()).unwrap();
        assert_eq!(back[0].1.data()[0], 1.0);
        assert_eq!(back[1].1.item(), 7.0);
    }
}
