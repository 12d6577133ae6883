use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::SubMode;
use crate::geometry::{Point, PointCloud};

/// Crop removes this fraction of points (half-space cut).
pub(crate) const CROP_FRACTION: (f64, f64) = (0.2, 0.4);
/// Jitter standard deviation range.
pub(crate) const JITTER_SIGMA: (f64, f64) = (0.02, 0.05);
/// Fraction of points replaced by clutter.
pub(crate) const OUTLIER_FRACTION: (f64, f64) = (0.1, 0.2);

/// What a corruption drew, for checking it after the fact.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorruptionRecord {
    /// Per input point, whether the crop removed it.
    pub removed: Option<Vec<bool>>,
    /// Jitter standard deviation.
    pub sigma: Option<f64>,
    /// Input indices replaced by clutter points.
    pub replaced: Option<Vec<usize>>,
    /// Normalisation applied afterwards, `p' = (p - centroid) / scale`.
    pub centroid: Point,
    pub scale: f64,
}

pub fn corrupt(cloud: &PointCloud, submode: SubMode, rng: &mut impl Rng) -> PointCloud {
    corrupt_with_record(cloud, submode, rng).0
}

/// Applies `submode` and renormalises into the unit ball. Point count, label
/// and shape kind are preserved; the sub-mode tag is recorded in `meta`.
pub fn corrupt_with_record(cloud: &PointCloud, submode: SubMode, rng: &mut impl Rng) -> (PointCloud, CorruptionRecord) {
    let mut rec = CorruptionRecord {
        scale: 1.0,
        ..Default::default()
    };
    let mut out = cloud.clone();
    out.meta.submode = submode;
    let m = cloud.len();
    match submode {
        SubMode::Clean => return (out, rec),
        SubMode::CropMissing => {
            let frac = rng.random_range(CROP_FRACTION.0..=CROP_FRACTION.1);
            let remove = ((frac * m as f64).round() as usize).clamp(1, m - 1);
            let dir = random_direction(rng);
            let mut order: Vec<(f64, usize)> = cloud
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| (p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2], i))
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut removed = vec![false; m];
            for &(_, i) in &order[..remove] {
                removed[i] = true;
            }
            let kept: Vec<Point> = (0..m).filter(|&i| !removed[i]).map(|i| cloud.points[i]).collect();
            let extra: Vec<Point> = (0..remove).map(|_| kept[rng.random_range(0..kept.len())]).collect();
            out.points = kept.into_iter().chain(extra).collect();
            rec.removed = Some(removed);
        }
        SubMode::JitterNoise => {
            let sigma = rng.random_range(JITTER_SIGMA.0..=JITTER_SIGMA.1);
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            for p in &mut out.points {
                for v in p.iter_mut() {
                    *v += normal.sample(rng);
                }
            }
            rec.sigma = Some(sigma);
        }
        SubMode::OutlierClutter => {
            let frac = rng.random_range(OUTLIER_FRACTION.0..=OUTLIER_FRACTION.1);
            let count = ((frac * m as f64).round() as usize).clamp(1, m);
            let mut idx: Vec<usize> = rand::seq::index::sample(rng, m, count).into_vec();
            idx.sort_unstable();
            for &i in &idx {
                out.points[i] = in_unit_ball(rng);
            }
            rec.replaced = Some(idx);
        }
    }
    let (c, s) = out.normalize();
    rec.centroid = c;
    rec.scale = s;
    (out, rec)
}

fn random_direction(rng: &mut impl Rng) -> Point {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Point = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

fn in_unit_ball(rng: &mut impl Rng) -> Point {
    loop {
        let p: Point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_shape, ShapeKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base(seed: u64) -> PointCloud {
        let mut c = generate_shape(ShapeKind::Cube, 256, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        c.label = Some(1);
        c
    }

    #[test]
    fn clean_is_identity() {
        let c = base(1);
        let out = corrupt(&c, SubMode::Clean, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(out, c);
    }

    #[test]
    fn crop_removes_at_least_a_fifth() {
        for seed in 0..20 {
            let c = base(seed);
            let (out, rec) = corrupt_with_record(&c, SubMode::CropMissing, &mut ChaCha8Rng::seed_from_u64(seed + 100));
            assert_eq!(out.len(), c.len());
            assert_eq!(out.label, Some(1));
            assert_eq!(out.meta.submode, SubMode::CropMissing);
            let removed = rec.removed.unwrap();
            // map output points back through the recorded normalisation
            let support: Vec<Point> = out
                .points
                .iter()
                .map(|p| [p[0] * rec.scale + rec.centroid[0], p[1] * rec.scale + rec.centroid[1], p[2] * rec.scale + rec.centroid[2]])
                .collect();
            let absent = c
                .points
                .iter()
                .filter(|p| !support.iter().any(|q| (0..3).all(|i| (p[i] - q[i]).abs() < 1e-9)))
                .count();
            assert_eq!(absent, removed.iter().filter(|&&r| r).count());
            assert!(absent as f64 >= 0.2 * c.len() as f64 - 0.5, "seed {seed}: {absent}");
        }
    }

    #[test]
    fn jitter_displacement_matches_sigma() {
        for seed in 0..10 {
            let c = base(seed);
            let (out, rec) = corrupt_with_record(&c, SubMode::JitterNoise, &mut ChaCha8Rng::seed_from_u64(seed + 7));
            let sigma = rec.sigma.unwrap();
            assert!((JITTER_SIGMA.0..=JITTER_SIGMA.1).contains(&sigma));
            let mean: f64 = out
                .points
                .iter()
                .zip(&c.points)
                .map(|(p, q)| {
                    let r = [p[0] * rec.scale + rec.centroid[0] - q[0], p[1] * rec.scale + rec.centroid[1] - q[1], p[2] * rec.scale + rec.centroid[2] - q[2]];
                    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
                })
                .sum::<f64>()
                / c.len() as f64;
            // mean norm of an isotropic 3-D Gaussian is 2σ√(2/π)
            let expected = 2.0 * sigma * (2.0 / std::f64::consts::PI).sqrt();
            assert!(mean >= 0.5 * expected && mean <= 2.0 * expected, "{mean} vs {expected}");
        }
    }

    #[test]
    fn outliers_replace_recorded_fraction() {
        let c = base(3);
        let (out, rec) = corrupt_with_record(&c, SubMode::OutlierClutter, &mut ChaCha8Rng::seed_from_u64(4));
        let replaced = rec.replaced.unwrap();
        let frac = replaced.len() as f64 / c.len() as f64;
        assert!((0.09..=0.21).contains(&frac));
        assert!((out.max_norm() - 1.0).abs() < 1e-9);
        assert!(out.centroid().iter().all(|v| v.abs() < 1e-9));
    }
}
