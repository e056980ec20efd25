//! Dataset directories: `meta.jsonl` (one record per cloud) next to
//! `points.bin` (magic `CCPD`, version, then per cloud `n * 3` little-endian
//! `f32` coordinates followed by `n` part-id bytes when present).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConditionVector, FamilyKind, LabeledCloud, PointCloud};
use crate::error::{Error, Result};

const POINTS_MAGIC: &[u8; 4] = b"CCPD";
const POINTS_VERSION: u32 = 1;
const HEADER_LEN: u64 = 8;

pub const META_FILE: &str = "meta.jsonl";
pub const POINTS_FILE: &str = "points.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: usize,
    pub family: FamilyKind,
    pub label: ConditionVector,
    pub part_counts: Option<Vec<u32>>,
    /// Byte offset of this cloud's blob in `points.bin`.
    pub offset: u64,
    pub n_points: usize,
}

pub fn write_dataset(dir: &Path, clouds: &[LabeledCloud]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    blob.extend_from_slice(POINTS_MAGIC);
    blob.extend_from_slice(&POINTS_VERSION.to_le_bytes());
    let mut meta = String::new();
    for (id, c) in clouds.iter().enumerate() {
        let record = DatasetRecord {
            id,
            family: c.family,
            label: c.label.clone(),
            part_counts: c.part_counts(),
            offset: blob.len() as u64,
            n_points: c.cloud.len(),
        };
        for p in c.cloud.points() {
            for x in p {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(ids) = &c.part_ids {
            blob.extend_from_slice(ids);
        }
        meta.push_str(&serde_json::to_string(&record)?);
        meta.push('\n');
    }
    let points_path = dir.join(POINTS_FILE);
    std::fs::write(&points_path, &blob).map_err(|e| Error::io(&points_path, e))?;
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Vec<LabeledCloud>> {
    let meta_path = dir.join(META_FILE);
    let points_path = dir.join(POINTS_FILE);
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let blob = std::fs::read(&points_path).map_err(|e| Error::io(&points_path, e))?;

    if blob.is_empty() && meta.trim().is_empty() {
        return Ok(Vec::new());
    }
    if blob.len() < HEADER_LEN as usize || &blob[..4] != POINTS_MAGIC {
        return Err(Error::malformed(&points_path, "bad magic"));
    }
    let version = u32::from_le_bytes([blob[4], blob[5], blob[6], blob[7]]);
    if version != POINTS_VERSION {
        return Err(Error::malformed(&points_path, format!("unsupported version {version}")));
    }

    let mut out = Vec::new();
    for (lineno, line) in meta.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| {
            Error::malformed(&meta_path, format!("line {}: {e}", lineno + 1))
        })?;
        let n = rec.n_points;
        let start = rec.offset as usize;
        let coords_end = start + n * 12;
        let ids_end = coords_end + if rec.part_counts.is_some() { n } else { 0 };
        if start < HEADER_LEN as usize || ids_end > blob.len() {
            return Err(Error::malformed(
                &points_path,
                format!("truncated record for cloud {}", rec.id),
            ));
        }
        let flat: Vec<f32> = blob[start..coords_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let cloud = PointCloud::from_flat(&flat)
            .map_err(|e| Error::malformed(&points_path, format!("cloud {}: {e}", rec.id)))?;
        let part_ids = rec
            .part_counts
            .as_ref()
            .map(|_| blob[coords_end..ids_end].to_vec());
        if let Some(ids) = &part_ids {
            if ids.iter().any(|&i| i as usize >= rec.family.num_parts()) {
                return Err(Error::malformed(
                    &points_path,
                    format!("cloud {} has out-of-range part id", rec.id),
                ));
            }
        }
        out.push(LabeledCloud {
            family: rec.family,
            cloud,
            label: rec.label,
            part_ids,
        });
    }
    Ok(out)
}

/// ASCII PLY with `x y z` and, when given, a `uchar part` property.
pub fn write_ply(path: &Path, cloud: &PointCloud, part_ids: Option<&[u8]>) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if part_ids.is_some() {
        s.push_str("property uchar part\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p[0], p[1], p[2]);
        if let Some(ids) = part_ids {
            let _ = write!(s, " {}", ids[i]);
        }
        s.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}
