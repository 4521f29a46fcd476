//! Ray-cast rendering of the scene: radiometric frames for the thermal
//! sensor and flat-shaded RGB for the color cameras.

use image::RgbImage;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CameraModel, ObjectClass, Scene, Shape};
use crate::thermal::{Rgb, ThermalFrame, MAX_PLAUSIBLE_C, MIN_PLAUSIBLE_C};

pub const BACKGROUND_RGB: Rgb = [128, 128, 128];
const CONVEYOR_RGB: Rgb = [60, 60, 60];

pub fn class_color(class: ObjectClass) -> Rgb {
    match class {
        ObjectClass::Cup => [200, 220, 235],
        ObjectClass::CokeCan => [190, 20, 30],
        ObjectClass::Apple => [210, 40, 40],
        ObjectClass::FruitOther => [240, 150, 30],
        ObjectClass::Plate => [245, 245, 240],
        ObjectClass::Battery => [40, 40, 45],
        ObjectClass::Straightener => [90, 60, 120],
        ObjectClass::Wire => [20, 20, 20],
        ObjectClass::PowerStrip => [230, 230, 230],
        ObjectClass::IceMaker => [170, 180, 190],
        ObjectClass::IceCup => [180, 230, 255],
        ObjectClass::Scoop => [120, 120, 200],
        ObjectClass::TeaBag => [150, 100, 60],
        ObjectClass::Lemon => [250, 230, 50],
        ObjectClass::Button => [30, 160, 60],
    }
}

/// Darkens a color with distance from the camera.
pub fn shade(color: Rgb, distance: f64) -> Rgb {
    let f = (1.15 - 0.25 * distance).clamp(0.55, 1.0);
    color.map(|c| (c as f64 * f).round() as u8)
}

struct Primitive {
    shape: Shape,
    center: Vector3<f64>,
    yaw: f64,
    bound: f64,
    temperature: f64,
    color: Rgb,
}

fn primitives(scene: &Scene) -> Vec<Primitive> {
    let mut out = Vec::new();
    if let Some(c) = &scene.conveyor {
        let half = [c.half_width, (c.y_end - c.y_start) / 2.0, c.surface_z / 2.0];
        out.push(Primitive {
            shape: Shape::Box { half_extents: half },
            center: Vector3::new(c.center_x, (c.y_start + c.y_end) / 2.0, half[2]),
            yaw: 0.0,
            bound: Vector3::from(half).norm(),
            temperature: scene.ambient,
            color: CONVEYOR_RGB,
        });
    }
    for o in &scene.objects {
        let bound = match o.shape {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents } => Vector3::from(half_extents).norm(),
            Shape::Cylinder { radius, half_height } => radius.hypot(half_height),
        };
        out.push(Primitive {
            shape: o.shape,
            center: o.position,
            yaw: o.yaw,
            bound,
            temperature: o.temperature,
            color: class_color(o.class),
        });
        // Loose contents (a tea bag in the scoop) show as a small ball on top.
        if o.class == ObjectClass::Scoop {
            if let Some(&c) = o.contents.first() {
                let r = 0.012;
                out.push(Primitive {
                    shape: Shape::Sphere { radius: r },
                    center: o.position + Vector3::new(0.0, 0.0, o.shape.half_height() + r),
                    yaw: 0.0,
                    bound: r,
                    temperature: o.temperature,
                    color: class_color(c),
                });
            }
        }
    }
    out
}

fn nearest<'a>(
    prims: &'a [Primitive],
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<(f64, &'a Primitive)> {
    let mut best: Option<(f64, &Primitive)> = None;
    for p in prims {
        // Cheap bounding-sphere rejection before the exact test.
        let oc = p.center - origin;
        let along = oc.dot(dir);
        if oc.norm_squared() - along * along > p.bound * p.bound {
            continue;
        }
        if let Some(t) = p.shape.intersect(&p.center, p.yaw, origin, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, p));
            }
        }
    }
    best
}

fn noise_seed(scene: &Scene, camera: &CameraModel) -> u64 {
    let t = camera.pose.translation.vector;
    let mut h = scene.seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [scene.tick, t.x.to_bits(), t.y.to_bits(), t.z.to_bits()] {
        h = (h ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Surface temperature seen by each pixel, ambient where nothing is hit.
///
/// Noise is drawn from a generator keyed by the scene seed, the tick and the
/// camera position, so rendering never mutates the scene.
pub fn render_thermal(scene: &Scene, camera: &CameraModel) -> ThermalFrame {
    let (w, h) = camera.thermal_resolution;
    let prims = primitives(scene);
    let mut temps = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (o, d) = camera.ray(u, v, (w, h));
            temps.push(nearest(&prims, &o, &d).map_or(scene.ambient, |(_, p)| p.temperature));
        }
    }
    if scene.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(scene, camera));
        let normal = Normal::new(0.0, scene.noise_sigma).expect("sigma is positive");
        for t in &mut temps {
            *t = (*t + normal.sample(&mut rng)).clamp(MIN_PLAUSIBLE_C, MAX_PLAUSIBLE_C);
        }
    }
    ThermalFrame::new(w, h, temps, scene.clock).expect("rendered temperatures are finite")
}

pub fn render_rgb(scene: &Scene, camera: &CameraModel) -> RgbImage {
    let (w, h) = camera.rgb_resolution;
    let prims = primitives(scene);
    let mut img = RgbImage::new(w as u32, h as u32);
    for v in 0..h {
        for u in 0..w {
            let (o, d) = camera.ray(u, v, (w, h));
            let px = match nearest(&prims, &o, &d) {
                Some((t, p)) => shade(p.color, t),
                None => BACKGROUND_RGB,
            };
            img.put_pixel(u as u32, v as u32, image::Rgb(px));
        }
    }
    img
}
