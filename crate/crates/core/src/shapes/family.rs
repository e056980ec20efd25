use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{dimension_label, part_ratio_from_ids, LabeledCloud, PointCloud};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Box,
    Table,
    Lamp,
}

impl FamilyKind {
    pub fn num_parts(self) -> usize {
        match self {
            FamilyKind::Box => 1,
            FamilyKind::Table => 2,
            FamilyKind::Lamp => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Box => "box",
            FamilyKind::Table => "table",
            FamilyKind::Lamp => "lamp",
        }
    }

    pub fn index(self) -> usize {
        match self {
            FamilyKind::Box => 0,
            FamilyKind::Table => 1,
            FamilyKind::Lamp => 2,
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(FamilyKind::Box),
            "table" => Ok(FamilyKind::Table),
            "lamp" => Ok(FamilyKind::Lamp),
            other => Err(Error::InvalidArgument(format!("unknown shape family {other:?}"))),
        }
    }
}

/// How a family's three size parameters are drawn within their ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabelDistribution {
    Uniform,
    /// Independent normals per axis, truncated to the range by rejection.
    Gaussian { mean: [f32; 3], std: [f32; 3] },
    /// `lo + (hi - lo) * Beta(1, concentration)` per axis: dense near the
    /// lower end of each range with a thin tail toward large sizes.
    LongTail { concentration: f32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Per-axis extents, d = 3.
    Dimensions,
    /// Shares of the two non-base parts, d = 2.
    PartRatio,
}

impl LabelKind {
    pub fn dim(self) -> usize {
        match self {
            LabelKind::Dimensions => 3,
            LabelKind::PartRatio => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFamily {
    pub kind: FamilyKind,
    /// `(lo, hi)` per size parameter (x, y, z extent of the object).
    pub ranges: [(f32, f32); 3],
    pub distribution: LabelDistribution,
    /// Tables narrower than this get one central leg instead of four.
    pub leg_threshold: f32,
    pub n_points: usize,
    pub label_kind: LabelKind,
}

impl ShapeFamily {
    pub fn boxes() -> Self {
        ShapeFamily {
            kind: FamilyKind::Box,
            ranges: [(0.15, 1.0); 3],
            distribution: LabelDistribution::Gaussian {
                mean: [0.55, 0.5, 0.6],
                std: [0.15, 0.15, 0.15],
            },
            leg_threshold: 0.5,
            n_points: 256,
            label_kind: LabelKind::Dimensions,
        }
    }

    /// Boxes whose extents are concentrated at small sizes with a sparse tail.
    pub fn long_tailed_boxes() -> Self {
        ShapeFamily {
            distribution: LabelDistribution::LongTail { concentration: 4.0 },
            ..Self::boxes()
        }
    }

    pub fn tables() -> Self {
        ShapeFamily {
            kind: FamilyKind::Table,
            ranges: [(0.2, 1.0), (0.3, 0.9), (0.3, 0.8)],
            distribution: LabelDistribution::Uniform,
            leg_threshold: 0.5,
            n_points: 256,
            label_kind: LabelKind::Dimensions,
        }
    }

    pub fn lamps() -> Self {
        ShapeFamily {
            kind: FamilyKind::Lamp,
            ranges: [(0.2, 0.6), (0.2, 0.6), (0.4, 1.0)],
            distribution: LabelDistribution::Uniform,
            leg_threshold: 0.5,
            n_points: 256,
            label_kind: LabelKind::Dimensions,
        }
    }

    pub fn for_kind(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Box => Self::boxes(),
            FamilyKind::Table => Self::tables(),
            FamilyKind::Lamp => Self::lamps(),
        }
    }

    pub fn label_dim(&self) -> usize {
        self.label_kind.dim()
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "range {axis} = ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
                )));
            }
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument("n_points must be at least 2".into()));
        }
        if self.label_kind == LabelKind::PartRatio && self.kind.num_parts() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} has no parts to take ratios of",
                self.kind.name()
            )));
        }
        match &self.distribution {
            LabelDistribution::Gaussian { std, .. } if std.iter().any(|s| *s <= 0.0) => {
                Err(Error::InvalidArgument("gaussian std must be positive".into()))
            }
            LabelDistribution::LongTail { concentration } if *concentration <= 0.0 => {
                Err(Error::InvalidArgument("concentration must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn leg_count(&self, width: f32) -> usize {
        if width < self.leg_threshold {
            1
        } else {
            4
        }
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> [f32; 3] {
        let mut out = [0.0; 3];
        for (axis, slot) in out.iter_mut().enumerate() {
            let (lo, hi) = self.ranges[axis];
            *slot = match &self.distribution {
                LabelDistribution::Uniform => lo + (hi - lo) * rng.random::<f32>(),
                LabelDistribution::Gaussian { mean, std } => {
                    let normal = Normal::new(mean[axis], std[axis]).expect("validated std");
                    let mut v = normal.sample(rng);
                    let mut tries = 0;
                    while !(lo..=hi).contains(&v) {
                        v = normal.sample(rng);
                        tries += 1;
                        if tries > 1000 {
                            v = v.clamp(lo, hi);
                        }
                    }
                    v
                }
                LabelDistribution::LongTail { concentration } => {
                    let beta = Beta::new(1.0, *concentration).expect("validated concentration");
                    lo + (hi - lo) * beta.sample(rng)
                }
            };
        }
        out
    }

    /// Surface made of the family's primitives for the given size parameters.
    /// The object's bounding box is centered at (0.5, 0.5, 0.5).
    pub fn surface(&self, size: [f32; 3]) -> Surface {
        let [w, d, h] = size;
        let (cx, cy) = (0.5, 0.5);
        let z0 = 0.5 - h / 2.0;
        let z1 = 0.5 + h / 2.0;
        let mut s = Surface::default();
        match self.kind {
            FamilyKind::Box => {
                s.add_box([cx - w / 2.0, cy - d / 2.0, z0], [w, d, h], 0);
            }
            FamilyKind::Table => {
                let top = (0.08 * h).min(0.05);
                s.add_box([cx - w / 2.0, cy - d / 2.0, z1 - top], [w, d, top], 0);
                let leg_h = h - top;
                if self.leg_count(w) == 1 {
                    let side = 0.25 * w.min(d);
                    s.add_box([cx - side / 2.0, cy - side / 2.0, z0], [side, side, leg_h], 1);
                } else {
                    let side = (0.12 * w.min(d)).min(0.06);
                    for (fx, fy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                        let x = cx - w / 2.0 + fx * (w - side);
                        let y = cy - d / 2.0 + fy * (d - side);
                        s.add_box([x, y, z0], [side, side, leg_h], 1);
                    }
                }
            }
            FamilyKind::Lamp => {
                let base = (0.06 * h).min(0.04);
                let shade_h = 0.3 * h;
                let (sw, sd) = (0.7 * w, 0.7 * d);
                let pole = 0.1 * w.min(d);
                s.add_box([cx - w / 2.0, cy - d / 2.0, z0], [w, d, base], 2);
                s.add_box(
                    [cx - pole / 2.0, cy - pole / 2.0, z0 + base],
                    [pole, pole, h - base - shade_h],
                    0,
                );
                s.add_box([cx - sw / 2.0, cy - sd / 2.0, z1 - shade_h], [sw, sd, shade_h], 1);
            }
        }
        s
    }

    /// Draws size parameters, samples the surface and labels the result.
    pub fn sample_shape<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledCloud> {
        let size = self.sample_params(rng);
        self.sample_with_size(size, rng)
    }

    pub fn sample_with_size<R: Rng + ?Sized>(
        &self,
        size: [f32; 3],
        rng: &mut R,
    ) -> Result<LabeledCloud> {
        let surface = self.surface(size);
        let (points, faces) = surface.sample(self.n_points, rng);
        let part_ids: Vec<u8> = faces.iter().map(|&f| surface.faces[f].part).collect();
        let cloud = PointCloud::new(points)?;
        let label = match self.label_kind {
            LabelKind::Dimensions => dimension_label(&cloud),
            LabelKind::PartRatio => part_ratio_from_ids(&part_ids)?,
        };
        Ok(LabeledCloud {
            family: self.kind,
            cloud,
            label,
            part_ids: Some(part_ids),
        })
    }
}

/// Generates `count` shapes; shape `i` uses its own stream of the root seed,
/// so any shape can be regenerated independently of the others.
pub fn generate_dataset(family: &ShapeFamily, count: usize, seed: u64) -> Result<Vec<LabeledCloud>> {
    family.validate()?;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            family.sample_shape(&mut rng)
        })
        .collect()
}

/// Planar parallelogram `origin + s*u + t*v`, `s, t` in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub origin: [f32; 3],
    pub u: [f32; 3],
    pub v: [f32; 3],
    pub part: u8,
}

impl Face {
    pub fn area(&self) -> f32 {
        let [a, b, c] = self.u;
        let [d, e, f] = self.v;
        let cross = [b * f - c * e, c * d - a * f, a * e - b * d];
        cross.iter().map(|x| x * x).sum::<f32>().sqrt()
    }

    fn at(&self, s: f32, t: f32) -> [f32; 3] {
        std::array::from_fn(|a| self.origin[a] + s * self.u[a] + t * self.v[a])
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Surface {
    pub faces: Vec<Face>,
}

impl Surface {
    /// Adds the six faces of an axis-aligned box.
    pub fn add_box(&mut self, min: [f32; 3], size: [f32; 3], part: u8) {
        let [sx, sy, sz] = size;
        let ex = [sx, 0.0, 0.0];
        let ey = [0.0, sy, 0.0];
        let ez = [0.0, 0.0, sz];
        let shifted = |off: [f32; 3]| std::array::from_fn(|a| min[a] + off[a]);
        for (origin, u, v) in [
            (min, ey, ez),
            (shifted(ex), ey, ez),
            (min, ex, ez),
            (shifted(ey), ex, ez),
            (min, ex, ey),
            (shifted(ez), ex, ey),
        ] {
            self.faces.push(Face { origin, u, v, part });
        }
    }

    pub fn total_area(&self) -> f32 {
        self.faces.iter().map(Face::area).sum()
    }

    /// Area-weighted uniform samples; also returns each point's face index.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<[f32; 3]>, Vec<usize>) {
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut acc = 0.0f64;
        for f in &self.faces {
            acc += f.area() as f64;
            cumulative.push(acc);
        }
        let mut points = Vec::with_capacity(n);
        let mut which = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.random::<f64>() * acc;
            let idx = cumulative
                .partition_point(|&c| c <= r)
                .min(self.faces.len() - 1);
            let (s, t) = (rng.random::<f32>(), rng.random::<f32>());
            points.push(self.faces[idx].at(s, t));
            which.push(idx);
        }
        (points, which)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_surface_area() {
        let mut s = Surface::default();
        s.add_box([0.0; 3], [1.0, 2.0, 3.0], 0);
        assert!((s.total_area() - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-5);
    }

    #[test]
    fn narrow_table_has_one_leg() {
        let fam = ShapeFamily::tables();
        assert_eq!(fam.leg_count(0.3), 1);
        assert_eq!(fam.leg_count(0.7), 4);
        let legs = |w| {
            fam.surface([w, 0.5, 0.5])
                .faces
                .iter()
                .filter(|f| f.part == 1)
                .count()
                / 6
        };
        assert_eq!(legs(0.3), 1);
        assert_eq!(legs(0.8), 4);
    }

    #[test]
    fn sampled_labels_stay_in_unit_cube() {
        for fam in [
            ShapeFamily::boxes(),
            ShapeFamily::long_tailed_boxes(),
            ShapeFamily::tables(),
            ShapeFamily::lamps(),
        ] {
            for c in generate_dataset(&fam, 20, 9).unwrap() {
                assert!(c.label.in_unit_cube(), "{:?}", c.label);
                assert_eq!(c.cloud.len(), fam.n_points);
                let ids = c.part_ids.as_ref().unwrap();
                assert!(ids.iter().all(|&i| (i as usize) < fam.kind.num_parts()));
            }
        }
    }

    #[test]
    fn part_ratio_family() {
        let fam = ShapeFamily {
            label_kind: LabelKind::PartRatio,
            ..ShapeFamily::lamps()
        };
        let c = generate_dataset(&fam, 1, 1).unwrap().remove(0);
        assert_eq!(c.label.dim(), 2);
        assert!(c.label[0] > 0.0 && c.label[1] > 0.0);
        let boxes = ShapeFamily {
            label_kind: LabelKind::PartRatio,
            ..ShapeFamily::boxes()
        };
        assert!(boxes.validate().is_err());
    }

    #[test]
    fn dataset_is_reproducible_per_index() {
        let fam = ShapeFamily::boxes();
        let a = generate_dataset(&fam, 5, 42).unwrap();
        let b = generate_dataset(&fam, 3, 42).unwrap();
        assert_eq!(a[..3], b[..]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut fam = ShapeFamily::boxes();
        fam.ranges[1] = (0.0, 0.5);
        assert!(fam.validate().is_err());
        fam.ranges[1] = (0.6, 0.5);
        assert!(fam.validate().is_err());
    }
}
