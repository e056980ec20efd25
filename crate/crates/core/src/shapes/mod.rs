//! Point clouds, their continuous labels, and synthetic shape families.

mod family;
mod io;

pub use family::{
    generate_dataset, Face, FamilyKind, LabelDistribution, LabelKind, ShapeFamily, Surface,
};
pub use io::{read_dataset, write_dataset, write_ply, DatasetRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous conditioning label `y`, nominally in `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionVector(pub Vec<f32>);

impl ConditionVector {
    pub fn new(values: Vec<f32>) -> Self {
        ConditionVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn in_unit_cube(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

impl From<Vec<f32>> for ConditionVector {
    fn from(v: Vec<f32>) -> Self {
        ConditionVector(v)
    }
}

impl std::ops::Index<usize> for ConditionVector {
    type Output = f32;

    fn index(&self, i: usize) -> &f32 {
        &self.0[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "point cloud needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(PointCloud { points })
    }

    /// Builds a cloud from `[x0, y0, z0, x1, ...]`.
    pub fn from_flat(flat: &[f32]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::InvalidArgument(format!(
                "flat coordinate buffer of length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.points.iter().flatten().copied().collect()
    }

    /// Per-axis minimum and maximum.
    pub fn bounds(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// A cloud with its label and optional per-point part membership.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    pub family: FamilyKind,
    pub cloud: PointCloud,
    pub label: ConditionVector,
    pub part_ids: Option<Vec<u8>>,
}

impl LabeledCloud {
    pub fn part_counts(&self) -> Option<Vec<u32>> {
        self.part_ids.as_ref().map(|ids| {
            let mut counts = vec![0u32; self.family.num_parts()];
            for &id in ids {
                counts[id as usize] += 1;
            }
            counts
        })
    }
}

/// Object extents: component-wise `max(x) - min(x)`.
pub fn dimension_label(cloud: &PointCloud) -> ConditionVector {
    let (lo, hi) = cloud.bounds();
    ConditionVector((0..3).map(|a| hi[a] - lo[a]).collect())
}

/// Index of the part that part ratios are taken relative to.
pub const BASE_PART: u8 = 0;

/// Part shares `(n_1 / n, n_2 / n)` of the two non-base parts.
///
/// The base-part share is the remainder, so `(base, part 1, part 2)` is a
/// point on the simplex. A cloud whose base part is empty has no meaningful
/// ratio and is rejected.
pub fn part_ratio_label(cloud: &LabeledCloud) -> Result<ConditionVector> {
    let ids = cloud
        .part_ids
        .as_ref()
        .ok_or_else(|| Error::DegenerateLabel("cloud has no part ids".into()))?;
    part_ratio_from_ids(ids)
}

pub fn part_ratio_from_ids(ids: &[u8]) -> Result<ConditionVector> {
    let mut counts = [0usize; 3];
    for &id in ids {
        let slot = counts
            .get_mut(id as usize)
            .ok_or_else(|| Error::DegenerateLabel(format!("part id {id} out of range")))?;
        *slot += 1;
    }
    if counts[BASE_PART as usize] == 0 {
        return Err(Error::DegenerateLabel("base part has no points".into()));
    }
    let n = ids.len() as f32;
    Ok(ConditionVector(vec![counts[1] as f32 / n, counts[2] as f32 / n]))
}

/// Full simplex `(base, part 1, part 2)` behind [`part_ratio_label`].
pub fn part_simplex(label: &ConditionVector) -> [f32; 3] {
    [1.0 - label[0] - label[1], label[0], label[1]]
}
