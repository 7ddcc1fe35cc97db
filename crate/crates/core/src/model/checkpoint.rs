//! Binary checkpoints: magic, version, the config as JSON, then every named
//! tensor (parameters and BN running statistics) as little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use super::net::Net;
use super::{ModelConfig, ModelError};

const MAGIC: &[u8; 4] = b"HCNN";
const VERSION: u32 = 1;

fn io(e: std::io::Error) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

pub fn write_to(net: &Net, mut w: impl Write) -> Result<(), ModelError> {
    let cfg = serde_json::to_vec(&net.cfg).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&cfg).map_err(io)?;
    let all: Vec<(String, &Vec<f64>)> = net.tensors().into_iter().chain(net.buffers()).collect();
    w.write_all(&(all.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, t) in all {
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(t.len() as u64).to_le_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(t.len() * 8);
        t.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ModelError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io)?;
    Ok(b)
}

pub fn read_from(mut r: impl Read) -> Result<Net, ModelError> {
    if &read_exact::<4>(&mut r)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut cfg = vec![0u8; n];
    r.read_exact(&mut cfg).map_err(io)?;
    let cfg: ModelConfig = serde_json::from_slice(&cfg).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
    let mut net = Net::new(&cfg)?;
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut loaded = std::collections::BTreeMap::new();
    for _ in 0..count {
        let nl = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; nl];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf).map_err(io)?;
        let v: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        loaded.insert(name, v);
    }
    for (name, t) in net.tensors_mut() {
        fill(&name, t, &mut loaded)?;
    }
    for (name, t) in net.buffers_mut() {
        fill(&name, t, &mut loaded)?;
    }
    if let Some(extra) = loaded.keys().next() {
        return Err(ModelError::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(net)
}

fn fill(name: &str, t: &mut Vec<f64>, loaded: &mut std::collections::BTreeMap<String, Vec<f64>>) -> Result<(), ModelError> {
    let v = loaded.remove(name).ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
    if v.len() != t.len() {
        return Err(ModelError::Checkpoint(format!("{name}: {} values, expected {}", v.len(), t.len())));
    }
    *t = v;
    Ok(())
}

pub fn save(net: &Net, path: &Path) -> Result<(), ModelError> {
    let f = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(f);
    write_to(net, &mut w)?;
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<Net, ModelError> {
    let f = std::fs::File::open(path).map_err(io)?;
    read_from(std::io::BufReader::new(f))
}
