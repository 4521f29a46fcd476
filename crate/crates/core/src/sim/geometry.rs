//! Primitive shapes and ray casting against them.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Box rotated about z by the owning object's yaw.
    Box { half_extents: [f64; 3] },
    /// Upright cylinder.
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents } => half_extents[2],
            Shape::Cylinder { half_height, .. } => half_height,
        }
    }

    /// Radius of a circle enclosing the footprint on the table.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents } => half_extents[0].hypot(half_extents[1]),
            Shape::Cylinder { radius, .. } => radius,
        }
    }

    /// Whether a point's xy lies over this shape's footprint.
    pub fn covers_xy(&self, center: &Vector3<f64>, yaw: f64, p: &Vector3<f64>) -> bool {
        let dx = p.x - center.x;
        let dy = p.y - center.y;
        match *self {
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => dx.hypot(dy) <= radius,
            Shape::Box { half_extents } => {
                let (s, c) = yaw.sin_cos();
                let lx = c * dx + s * dy;
                let ly = -s * dx + c * dy;
                lx.abs() <= half_extents[0] && ly.abs() <= half_extents[1]
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        let dims: Vec<f64> = match *self {
            Shape::Sphere { radius } => vec![radius],
            Shape::Box { half_extents } => half_extents.to_vec(),
            Shape::Cylinder { radius, half_height } => vec![radius, half_height],
        };
        dims.iter().all(|d| d.is_finite() && *d > 0.0)
    }

    /// Distance along a unit ray to the first hit with t > 1e-9, if any.
    pub fn intersect(
        &self,
        center: &Vector3<f64>,
        yaw: f64,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
    ) -> Option<f64> {
        let o = origin - center;
        match *self {
            Shape::Sphere { radius } => ray_sphere(&o, dir, radius),
            Shape::Box { half_extents } => {
                let (s, c) = yaw.sin_cos();
                let rot = |v: &Vector3<f64>| Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
                ray_box(&rot(&o), &rot(dir), &half_extents)
            }
            Shape::Cylinder { radius, half_height } => ray_cylinder(&o, dir, radius, half_height),
        }
    }
}

const EPS: f64 = 1e-9;

fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, r: f64) -> Option<f64> {
    let b = o.dot(d);
    let c = o.norm_squared() - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [-b - sq, -b + sq].into_iter().find(|&t| t > EPS)
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, h: &[f64; 3]) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > h[i] {
                return None;
            }
            continue;
        }
        let t1 = (-h[i] - o[i]) / d[i];
        let t2 = (h[i] - o[i]) / d[i];
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    if t_near > t_far || t_far <= EPS {
        return None;
    }
    Some(if t_near > EPS { t_near } else { t_far })
}

fn ray_cylinder(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, hh: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if (o.z + t * d.z).abs() <= hh {
                    consider(t);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for cap in [-hh, hh] {
            let t = (cap - o.z) / d.z;
            let x = o.x + t * d.x;
            let y = o.y + t * d.y;
            if x * x + y * y <= r * r {
                consider(t);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn down() -> Vector3<f64> {
        -Vector3::z()
    }

    #[test]
    fn sphere_hit_from_above() {
        let s = Shape::Sphere { radius: 0.1 };
        let t = s
            .intersect(&Vector3::zeros(), 0.0, &Vector3::new(0.0, 0.0, 1.0), &down())
            .unwrap();
        assert!((t - 0.9).abs() < 1e-12);
    }

    #[test]
    fn box_respects_yaw() {
        let s = Shape::Box { half_extents: [0.2, 0.01, 0.05] };
        let origin = Vector3::new(0.0, 0.15, 1.0);
        assert!(s.intersect(&Vector3::zeros(), 0.0, &origin, &down()).is_none());
        let t = s
            .intersect(&Vector3::zeros(), std::f64::consts::FRAC_PI_2, &origin, &down())
            .unwrap();
        assert!((t - 0.95).abs() < 1e-12);
    }

    #[test]
    fn cylinder_side_and_cap() {
        let s = Shape::Cylinder { radius: 0.05, half_height: 0.1 };
        let t = s
            .intersect(&Vector3::zeros(), 0.0, &Vector3::new(-1.0, 0.0, 0.0), &Vector3::x())
            .unwrap();
        assert!((t - 0.95).abs() < 1e-12);
        let t = s
            .intersect(&Vector3::zeros(), 0.0, &Vector3::new(0.0, 0.0, 1.0), &down())
            .unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        assert!(s
            .intersect(&Vector3::zeros(), 0.0, &Vector3::new(0.06, 0.0, 1.0), &down())
            .is_none());
    }

    #[test]
    fn ray_starting_inside_hits_far_side() {
        let s = Shape::Sphere { radius: 1.0 };
        let t = s
            .intersect(&Vector3::zeros(), 0.0, &Vector3::zeros(), &Vector3::x())
            .unwrap();
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn footprints() {
        let b = Shape::Box { half_extents: [0.1, 0.02, 0.01] };
        let c = Vector3::zeros();
        assert!(b.covers_xy(&c, 0.0, &Vector3::new(0.09, 0.0, 5.0)));
        assert!(!b.covers_xy(&c, std::f64::consts::FRAC_PI_2, &Vector3::new(0.09, 0.0, 5.0)));
    }
}
