//! On-disk artifacts: JSON-lines logs, the rasterized dataset and digests.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::gateway::segment::SegmentFlags;
use crate::gateway::GaitSegment;
use crate::model::DatasetItem;
use crate::sim::profile::ImpairmentLevel;
use crate::Millis;

const DATASET_MAGIC: &[u8] = b"HCDS1\n";

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    std::fs::write(path, crate::agent::to_jsonl(items))?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Segment metadata without the pressure frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub patient: String,
    pub start_ts: Millis,
    pub label: Option<ImpairmentLevel>,
    pub flags: SegmentFlags,
    pub rows: usize,
}

impl SegmentMeta {
    pub fn of(s: &GaitSegment) -> Self {
        Self {
            patient: s.patient_ref.clone(),
            start_ts: s.start_ts,
            label: s.label,
            flags: s.flags,
            rows: s.rows(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    height: usize,
    width: usize,
    items: Vec<(ImpairmentLevel, String)>,
}

/// Header line of JSON, then each item's left and right map as
/// little-endian f64. Exact, so training from disk matches in memory.
pub fn write_dataset(path: &Path, items: &[DatasetItem], height: usize, width: usize) -> Result<(), RunError> {
    let header = DatasetHeader {
        height,
        width,
        items: items.iter().map(|i| (i.label, i.tag.clone())).collect(),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(serde_json::to_string(&header).expect("header").as_bytes())?;
    w.write_all(b"\n")?;
    for it in items {
        if it.left.len() != height * width || it.right.len() != height * width {
            return Err(RunError::Config(format!("item {} is not {height}x{width}", it.tag)));
        }
        for v in it.left.iter().chain(&it.right) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetItem>, usize, usize), RunError> {
    let bad = |m: &str| RunError::Config(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(bad("not a dataset file"));
    }
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: DatasetHeader = serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
    let n = h.height * h.width;
    let read_map = |r: &mut BufReader<std::fs::File>| -> Result<Vec<f64>, RunError> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let mut items = Vec::with_capacity(h.items.len());
    for (label, tag) in h.items {
        let left = read_map(&mut r)?;
        let right = read_map(&mut r)?;
        items.push(DatasetItem { left, right, label, tag });
    }
    Ok((items, h.height, h.width))
}

pub fn sha256_file(path: &Path) -> Result<String, RunError> {
    let mut h = Sha256::new();
    let mut f = std::fs::File::open(path)?;
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Digest of every file under `dir` keyed by relative path, skipping the
/// files that carry wall-clock latencies.
pub fn digest_tree(dir: &Path) -> Result<BTreeMap<String, String>, RunError> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), RunError> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if !is_timing_file(&p) {
                let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_file(&p)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

/// Files whose content includes wall-clock measurements.
pub fn is_timing_file(p: &Path) -> bool {
    p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("timing"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let items: Vec<DatasetItem> = (0..3)
            .map(|k| DatasetItem {
                left: (0..6).map(|i| (i * k) as f64 / 7.0).collect(),
                right: (0..6).map(|i| 1.0 / (1.0 + (i + k) as f64)).collect(),
                label: ImpairmentLevel::from_index(k as usize).unwrap(),
                tag: format!("P{k}"),
            })
            .collect();
        write_dataset(&p, &items, 2, 3).unwrap();
        let (back, h, w) = read_dataset(&p).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(back, items);
        assert!(write_dataset(&p, &items, 3, 3).is_err());
    }

    #[test]
    fn digests_skip_timing_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.json"), "1").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/b.csv"), "2").unwrap();
        std::fs::write(dir.path().join("timing.json"), "3").unwrap();
        let d = digest_tree(dir.path()).unwrap();
        assert_eq!(d.keys().collect::<Vec<_>>(), vec!["a.json", "sub/b.csv"]);
    }
}
