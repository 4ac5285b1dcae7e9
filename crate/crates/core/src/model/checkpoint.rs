//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "HTAGCKPT" | u32 version | u64 len | config JSON
//! u64 count | count × (u32 len | name | u32 rank | rank × u64 dim | f64 data…)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::network::HierModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HTAGCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint(model: &HierModel, mut w: impl Write) -> Result<()> {
    let config = serde_json::to_vec(model.config())?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u64).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&(model.params().len() as u64).to_le_bytes())?;
    for p in model.params().iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_bytes(r: &mut impl Read, len: u64) -> Result<Vec<u8>> {
    if len > 1 << 32 {
        return Err(Error::Checkpoint(format!("implausible length {len}")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<HierModel> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = read_u64(&mut r)?;
    let config: ModelConfig = serde_json::from_slice(&read_bytes(&mut r, len)?)
        .map_err(|e| Error::Checkpoint(format!("bad config: {e}")))?;
    let mut model = HierModel::new(config, 0)?;
    let count = read_u64(&mut r)? as usize;
    if count != model.params().len() {
        return Err(Error::Checkpoint(format!(
            "{count} parameters stored, {} expected",
            model.params().len()
        )));
    }
    let index: HashMap<String, usize> = model
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect();
    let mut seen = vec![false; count];
    for _ in 0..count {
        let len = read_u32(&mut r)?;
        let name = String::from_utf8(read_bytes(&mut r, len as u64)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?;
        let &i = index
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Checkpoint(format!("parameter {name} stored twice")));
        }
        let rank = read_u32(&mut r)?;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let p = model.params_mut().by_index_mut(i);
        if shape != p.tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {shape:?}, expected {:?}",
                p.tensor.shape()
            )));
        }
        for v in p.tensor.data_mut() {
            *v = f64::from_le_bytes(read_array(&mut r)?);
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &HierModel, path: &Path) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<HierModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
