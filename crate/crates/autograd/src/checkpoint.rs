//! "EVCK" checkpoint container.
//!
//! Layout (little-endian): magic `EVCK`, u32 version, u32 parameter count,
//! then per parameter: u16 name length, UTF-8 name, u8 rank, u32 dims,
//! f32 row-major data.

use std::path::Path;

use crate::{Array, AutogradError, Parameter, Result, Scalar};

const MAGIC: &[u8; 4] = b"EVCK";
const VERSION: u32 = 1;

/// One deserialized checkpoint entry.
pub type CheckpointEntry = (String, Vec<usize>, Vec<f32>);

pub fn write_checkpoint<T: Scalar>(params: &[Parameter<T>]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name();
        let value = p.value();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(value.rank() as u8);
        for &d in value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in value.data() {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    buf
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(AutogradError::Format(format!(
            "bad checkpoint magic {magic:?}"
        )));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(AutogradError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| AutogradError::Format(format!("parameter name not UTF-8: {e}")))?;
        let rank = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f32::from_le_bytes(cur.take(4)?.try_into().unwrap()));
        }
        entries.push((name, shape, data));
    }
    if cur.pos != bytes.len() {
        return Err(AutogradError::Format(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cur.pos
        )));
    }
    Ok(entries)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, params: &[Parameter<T>]) -> Result<()> {
    std::fs::write(path, write_checkpoint(params))?;
    Ok(())
}

/// Assigns checkpoint values onto `params`, matched by name. Every
/// parameter must be present with a matching shape, and every entry
/// must be consumed.
pub fn load_checkpoint<T: Scalar>(bytes: &[u8], params: &[Parameter<T>]) -> Result<()> {
    let mut entries: std::collections::HashMap<String, (Vec<usize>, Vec<f32>)> =
        read_checkpoint(bytes)?
            .into_iter()
            .map(|(name, shape, data)| (name, (shape, data)))
            .collect();
    for p in params {
        let name = p.name();
        let (shape, data) = entries.remove(&name).ok_or_else(|| {
            AutogradError::Format(format!("checkpoint missing parameter {name:?}"))
        })?;
        if shape != p.shape() {
            return Err(AutogradError::Format(format!(
                "checkpoint parameter {name:?} has shape {shape:?}, model expects {:?}",
                p.shape()
            )));
        }
        let values: Vec<T> = data.iter().map(|&v| T::from_f64(v as f64)).collect();
        p.set_value(Array::from_vec(shape, values)?)?;
    }
    if let Some(extra) = entries.keys().next() {
        return Err(AutogradError::Format(format!(
            "checkpoint contains unknown parameter {extra:?}"
        )));
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AutogradError::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bytes_and_values() {
        let p1 = Parameter::new("a.w", Array::<f32>::from_vec(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let p2 = Parameter::new("b", Array::<f32>::from_vec(vec![3], vec![0.1, 0.2, 0.3]).unwrap());
        let bytes = write_checkpoint(&[p1.clone(), p2.clone()]);

        let q1 = Parameter::new("a.w", Array::<f32>::zeros(&[2, 2]));
        let q2 = Parameter::new("b", Array::<f32>::zeros(&[3]));
        load_checkpoint(&bytes, &[q1.clone(), q2.clone()]).unwrap();
        assert_eq!(q1.value().data(), p1.value().data());

        let bytes2 = write_checkpoint(&[q1, q2]);
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn missing_parameter_is_error() {
        let p = Parameter::new("w", Array::<f32>::zeros(&[1]));
        let bytes = write_checkpoint(&[p]);
        let q = Parameter::new("other", Array::<f32>::zeros(&[1]));
        assert!(load_checkpoint(&bytes, &[q]).is_err());
    }
}
