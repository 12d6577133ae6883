use std::f64::consts::PI;

use rand::Rng;

use super::{DataError, ShapeKind};
use crate::geometry::{Point, PointCloud};

/// Samples `m` points on the surface of a randomly proportioned `kind`,
/// rotated by a random angle about z and normalised into the unit ball.
pub fn generate_shape(kind: ShapeKind, m: usize, rng: &mut impl Rng) -> Result<PointCloud, DataError> {
    if m < 16 {
        return Err(DataError::TooFewPoints(m));
    }
    let mut points = match kind {
        ShapeKind::Sphere => sphere(m, rng),
        ShapeKind::Cube => {
            let half = [rng.random_range(0.6..1.0), rng.random_range(0.6..1.0), rng.random_range(0.6..1.0)];
            (0..m).map(|_| box_surface(half, rng)).collect()
        }
        ShapeKind::Cylinder => {
            let r = rng.random_range(0.35..0.6);
            let h = rng.random_range(1.2..2.0);
            (0..m).map(|_| cylinder_surface(r, h, rng)).collect()
        }
        ShapeKind::Cone => {
            let r = rng.random_range(0.5..0.9);
            let h = rng.random_range(1.0..1.8);
            (0..m).map(|_| cone_surface(r, h, rng)).collect()
        }
        ShapeKind::Torus => {
            let big = rng.random_range(0.6..0.8);
            let small = rng.random_range(0.15..0.3);
            (0..m).map(|_| torus_surface(big, small, rng)).collect()
        }
        ShapeKind::Plane => {
            let w = rng.random_range(0.6..1.0);
            let l = rng.random_range(0.6..1.0);
            (0..m)
                .map(|_| [rng.random_range(-w..w), rng.random_range(-l..l), 0.0])
                .collect()
        }
        ShapeKind::Capsule => {
            let r = rng.random_range(0.3..0.45);
            let h = rng.random_range(0.8..1.4);
            (0..m).map(|_| capsule_surface(r, h, rng)).collect()
        }
        ShapeKind::Cross => {
            let len = rng.random_range(0.9..1.1);
            let t = rng.random_range(0.12..0.2);
            (0..m)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        box_surface([len, t, t], rng)
                    } else {
                        box_surface([t, len, t], rng)
                    }
                })
                .collect()
        }
    };
    if kind != ShapeKind::Sphere {
        let (s, c) = rng.random_range(0.0..2.0 * PI).sin_cos();
        for p in &mut points {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        }
    }
    let mut cloud = PointCloud::new(points).expect("finite surface samples");
    cloud.meta.kind = Some(kind);
    cloud.normalize();
    Ok(cloud)
}

fn unit_vector(rng: &mut impl Rng) -> Point {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Antipodal pairs (plus one great-circle triangle when `m` is odd), so the
/// centroid is exactly the origin and normalisation keeps every norm equal.
fn sphere(m: usize, rng: &mut impl Rng) -> Vec<Point> {
    let mut pts = Vec::with_capacity(m);
    let pairs = if m % 2 == 1 { (m - 3) / 2 } else { m / 2 };
    for _ in 0..pairs {
        let u = unit_vector(rng);
        pts.push(u);
        pts.push(u.map(|v| -v));
    }
    if m % 2 == 1 {
        let a = unit_vector(rng);
        let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let b = normalize(cross(a, helper));
        let c = cross(a, b);
        for i in 0..3 {
            let (s, co) = (2.0 * PI * i as f64 / 3.0).sin_cos();
            pts.push([co * a[0] + s * c[0], co * a[1] + s * c[1], co * a[2] + s * c[2]]);
        }
    }
    pts
}

fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: Point) -> Point {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    a.map(|v| v / n)
}

/// Area-weighted sample on the surface of an axis-aligned box.
fn box_surface(half: [f64; 3], rng: &mut impl Rng) -> Point {
    let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 2;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a {
            axis = i;
            break;
        }
        pick -= a;
    }
    let mut p = [0.0; 3];
    for (i, v) in p.iter_mut().enumerate() {
        *v = if i == axis {
            if rng.random_bool(0.5) {
                half[i]
            } else {
                -half[i]
            }
        } else {
            rng.random_range(-half[i]..half[i])
        };
    }
    p
}

fn disk(r: f64, z: f64, rng: &mut impl Rng) -> Point {
    let rho = r * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    [rho * phi.cos(), rho * phi.sin(), z]
}

fn cylinder_surface(r: f64, h: f64, rng: &mut impl Rng) -> Point {
    let side = 2.0 * PI * r * h;
    let cap = PI * r * r;
    let pick = rng.random_range(0.0..side + 2.0 * cap);
    if pick < side {
        let phi = rng.random_range(0.0..2.0 * PI);
        [r * phi.cos(), r * phi.sin(), rng.random_range(-h / 2.0..h / 2.0)]
    } else if pick < side + cap {
        disk(r, h / 2.0, rng)
    } else {
        disk(r, -h / 2.0, rng)
    }
}

fn cone_surface(r: f64, h: f64, rng: &mut impl Rng) -> Point {
    let slant = (r * r + h * h).sqrt();
    let side = PI * r * slant;
    let base = PI * r * r;
    if rng.random_range(0.0..side + base) < side {
        // radius grows linearly from the apex; area density ∝ t
        let t = rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        [t * r * phi.cos(), t * r * phi.sin(), h / 2.0 - t * h]
    } else {
        disk(r, -h / 2.0, rng)
    }
}

/// Rejection sampling on the tube angle gives uniform area density.
fn torus_surface(big: f64, small: f64, rng: &mut impl Rng) -> Point {
    loop {
        let theta = rng.random_range(0.0..2.0 * PI);
        let w = (big + small * theta.cos()) / (big + small);
        if rng.random::<f64>() <= w {
            let phi = rng.random_range(0.0..2.0 * PI);
            let ring = big + small * theta.cos();
            return [ring * phi.cos(), ring * phi.sin(), small * theta.sin()];
        }
    }
}

fn capsule_surface(r: f64, h: f64, rng: &mut impl Rng) -> Point {
    let side = 2.0 * PI * r * h;
    let caps = 4.0 * PI * r * r;
    if rng.random_range(0.0..side + caps) < side {
        let phi = rng.random_range(0.0..2.0 * PI);
        [r * phi.cos(), r * phi.sin(), rng.random_range(-h / 2.0..h / 2.0)]
    } else {
        let u = unit_vector(rng);
        let shift = if u[2] >= 0.0 { h / 2.0 } else { -h / 2.0 };
        [r * u[0], r * u[1], r * u[2] + shift]
    }
}
