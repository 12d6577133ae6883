//! Point-cloud sampling, grouping, distance and augmentation kernels.
//!
//! Everything here is brute force, `O(N²)` at worst; clouds are a few hundred
//! points. Ties always resolve to the lowest index so results are reproducible
//! bit for bit.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{ShapeKind, SubMode};
use crate::tensor::Scalar;

pub type Point = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cannot sample {requested} points from a cloud of {available}")]
    TooManySamples { requested: usize, available: usize },
    #[error("k = {k} exceeds the {available} reference rows")]
    KTooLarge { k: usize, available: usize },
    #[error("start index {start} out of range for {len} points")]
    BadStart { start: usize, len: usize },
    #[error("point set is empty")]
    EmptySet,
    #[error("invalid cloud: {0}")]
    InvalidCloud(String),
}

/// Provenance of a cloud: generating shape kind and corruption sub-mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CloudMeta {
    pub kind: Option<ShapeKind>,
    pub submode: SubMode,
}

impl Default for CloudMeta {
    fn default() -> Self {
        Self {
            kind: None,
            submode: SubMode::Clean,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub label: Option<usize>,
    pub meta: CloudMeta,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidCloud("non-finite coordinate".into()));
        }
        Ok(Self {
            points,
            label: None,
            meta: CloudMeta::default(),
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.points)
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(norm).fold(0.0, f64::max)
    }

    /// Centres on the centroid and scales into the unit ball. Returns the
    /// `(centroid, scale)` that was applied, `p' = (p - c) / s`.
    pub fn normalize(&mut self) -> (Point, f64) {
        let c = self.centroid();
        for p in &mut self.points {
            *p = sub(p, &c);
        }
        let s = self.max_norm();
        if s > 0.0 {
            for p in &mut self.points {
                *p = [p[0] / s, p[1] / s, p[2] / s];
            }
        }
        (c, if s > 0.0 { s } else { 1.0 })
    }

    /// Rounds every coordinate through `f32`, the on-disk precision.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.points {
            *p = p.map(|v| v as f32 as f64);
        }
    }
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        c[0] += p[0];
        c[1] += p[1];
        c[2] += p[2];
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Greedy farthest point sampling from `start`.
///
/// Each step picks the unselected point with the largest distance to its
/// nearest selected point; ties go to the lowest index.
pub fn farthest_point_sample(points: &[Point], m: usize, start: usize) -> Result<Vec<usize>, GeometryError> {
    let n = points.len();
    if m > n {
        return Err(GeometryError::TooManySamples {
            requested: m,
            available: n,
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(GeometryError::BadStart { start, len: n });
    }
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut last = start;
    selected.push(start);
    taken[start] = true;
    while selected.len() < m {
        let mut best: Option<usize> = None;
        for i in 0..n {
            let d = sq_dist(&points[i], &points[last]);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if nearest[i] <= nearest[b] => {}
                _ => best = Some(i),
            }
        }
        let pick = best.expect("m <= n leaves a candidate");
        taken[pick] = true;
        selected.push(pick);
        last = pick;
    }
    Ok(selected)
}

/// `k` nearest reference rows for each query row, ascending by distance with
/// ties by lowest index. Rows are `dim`-wide slices of flat buffers. Returns a
/// flat `Q×k` index matrix.
pub fn knn<T: Scalar>(queries: &[T], reference: &[T], dim: usize, k: usize) -> Result<Vec<usize>, GeometryError> {
    let r = reference.len() / dim.max(1);
    if k > r {
        return Err(GeometryError::KTooLarge { k, available: r });
    }
    let q = queries.len() / dim.max(1);
    let mut out = Vec::with_capacity(q * k);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(r);
    for qi in 0..q {
        let query = &queries[qi * dim..(qi + 1) * dim];
        scored.clear();
        for ri in 0..r {
            let row = &reference[ri * dim..(ri + 1) * dim];
            let d: f64 = query
                .iter()
                .zip(row)
                .map(|(&a, &b)| {
                    let t = a.f64() - b.f64();
                    t * t
                })
                .sum();
            scored.push((d, ri));
        }
        if k < r {
            scored.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(scored.iter().take(k).map(|&(_, i)| i));
    }
    Ok(out)
}

fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| p.iter().copied()).collect()
}

/// `m` patch centres with `k` centre-relative neighbours each.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub m: usize,
    pub k: usize,
    pub centers: Vec<Point>,
    /// `m×k` points, row-major by patch; each row is `point - center`.
    pub groups: Vec<Point>,
    /// `m×k` indices into the source cloud.
    pub source_indices: Vec<usize>,
}

impl PatchSet {
    pub fn group(&self, i: usize) -> &[Point] {
        &self.groups[i * self.k..(i + 1) * self.k]
    }

    pub fn centers_flat<T: Scalar>(&self) -> Vec<T> {
        self.centers.iter().flat_map(|p| p.iter().map(|&v| T::of(v))).collect()
    }

    pub fn groups_flat<T: Scalar>(&self) -> Vec<T> {
        self.groups.iter().flat_map(|p| p.iter().map(|&v| T::of(v))).collect()
    }
}

/// FPS centres (start 0) plus kNN groups translated so each centre is the origin.
pub fn group_patches(cloud: &PointCloud, m: usize, k: usize) -> Result<PatchSet, GeometryError> {
    let center_idx = farthest_point_sample(&cloud.points, m, 0)?;
    let centers: Vec<Point> = center_idx.iter().map(|&i| cloud.points[i]).collect();
    let neighbors = knn(&flatten(&centers), &flatten(&cloud.points), 3, k)?;
    let groups = neighbors
        .iter()
        .enumerate()
        .map(|(j, &src)| sub(&cloud.points[src], &centers[j / k]))
        .collect();
    Ok(PatchSet {
        m,
        k,
        centers,
        groups,
        source_indices: neighbors,
    })
}

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &[Point], b: &[Point]) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    let one_way = |x: &[Point], y: &[Point]| {
        x.iter()
            .map(|p| y.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

/// Which random transforms [`augment`] applies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentSpec {
    /// Isotropic scale factor range.
    pub scale: Option<(f64, f64)>,
    /// Per-axis uniform translation bound.
    pub translate: Option<f64>,
    /// Uniform rotation about the z axis. Stands in for the rotation
    /// augmentation used on real scans, whose exact form is unpublished.
    pub rotate_z: bool,
    pub rotate_so3: bool,
    /// Gaussian jitter `(sigma, clip)`.
    pub jitter: Option<(f64, f64)>,
}

impl AugmentSpec {
    pub const SCALE_DEFAULT: (f64, f64) = (0.8, 1.25);
    pub const TRANSLATE_DEFAULT: f64 = 0.1;
    pub const JITTER_DEFAULT: (f64, f64) = (0.01, 0.05);

    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_none() && self.translate.is_none() && !self.rotate_z && !self.rotate_so3 && self.jitter.is_none()
    }

    /// Parses a comma list of `scale`, `translate`, `rotate_z`, `rotate_so3`,
    /// `jitter` (or `none`), each with its default magnitude.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut spec = Self::none();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "none" => {}
                "scale" => spec.scale = Some(Self::SCALE_DEFAULT),
                "translate" => spec.translate = Some(Self::TRANSLATE_DEFAULT),
                "rotate_z" => spec.rotate_z = true,
                "rotate_so3" => spec.rotate_so3 = true,
                "jitter" => spec.jitter = Some(Self::JITTER_DEFAULT),
                other => return Err(format!("unknown augmentation `{other}`")),
            }
        }
        Ok(spec)
    }

    pub fn render(&self) -> String {
        let mut items = Vec::new();
        if self.scale.is_some() {
            items.push("scale");
        }
        if self.translate.is_some() {
            items.push("translate");
        }
        if self.rotate_z {
            items.push("rotate_z");
        }
        if self.rotate_so3 {
            items.push("rotate_so3");
        }
        if self.jitter.is_some() {
            items.push("jitter");
        }
        if items.is_empty() {
            "none".into()
        } else {
            items.join(",")
        }
    }
}

/// Parameters drawn by one [`augment`] call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentRecord {
    pub rotation: Option<[[f64; 3]; 3]>,
    pub angle_z: Option<f64>,
    pub scale: Option<f64>,
    pub translation: Option<Point>,
}

pub fn augment(cloud: &PointCloud, spec: &AugmentSpec, rng: &mut impl Rng) -> PointCloud {
    augment_recorded(cloud, spec, rng).0
}

/// [`augment`], also returning the drawn transform parameters.
pub fn augment_recorded(cloud: &PointCloud, spec: &AugmentSpec, rng: &mut impl Rng) -> (PointCloud, AugmentRecord) {
    let mut out = cloud.clone();
    let mut rec = AugmentRecord::default();
    if spec.is_empty() {
        return (out, rec);
    }
    if spec.rotate_so3 {
        let r = random_rotation(rng);
        for p in &mut out.points {
            *p = mat_vec(&r, p);
        }
        rec.rotation = Some(r);
    }
    if spec.rotate_z {
        let theta = rng.random_range(0.0..2.0 * PI);
        let (s, c) = theta.sin_cos();
        for p in &mut out.points {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        }
        rec.angle_z = Some(theta);
    }
    if let Some((lo, hi)) = spec.scale {
        let f = rng.random_range(lo..=hi);
        for p in &mut out.points {
            *p = p.map(|v| v * f);
        }
        rec.scale = Some(f);
    }
    if let Some(bound) = spec.translate {
        let t = [
            rng.random_range(-bound..=bound),
            rng.random_range(-bound..=bound),
            rng.random_range(-bound..=bound),
        ];
        for p in &mut out.points {
            *p = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
        }
        rec.translation = Some(t);
    }
    if let Some((sigma, clip)) = spec.jitter {
        let normal = Normal::new(0.0, sigma).expect("sigma > 0");
        for p in &mut out.points {
            for v in p.iter_mut() {
                *v += normal.sample(rng).clamp(-clip, clip);
            }
        }
    }
    (out, rec)
}

fn mat_vec(r: &[[f64; 3]; 3], p: &Point) -> Point {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
    ]
}

/// Uniformly distributed rotation from a random unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut q = [0.0f64; 4];
    loop {
        for v in &mut q {
            *v = normal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}
