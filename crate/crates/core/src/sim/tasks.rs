//! Randomized scene layouts for the five benchmark tasks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    container, Conveyor, InteractionKind, ObjectClass, Scene, SceneObject, Shape, SimError,
    BATTERY_HOT_C, HEATER_SETPOINT_C,
};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TaskInfo {
    pub id: u8,
    pub name: &'static str,
    /// Canonical user instruction handed to the planner.
    pub instruction: &'static str,
    pub description: &'static str,
}

pub const TASKS: [TaskInfo; 5] = [
    TaskInfo {
        id: 1,
        name: "warm water and apple",
        instruction: "bring me the warm water and an apple",
        description: "Hand over the one warm cup among several and move the apple onto the empty plate.",
    },
    TaskInfo {
        id: 2,
        name: "cold coke",
        instruction: "give me a cold coke",
        description: "Serve a cold can if one exists, otherwise serve a can together with a cup of ice.",
    },
    TaskInfo {
        id: 3,
        name: "matching cup",
        instruction: "put what is in the scoop into the matching cup",
        description: "Tea goes into the hot water, lemon goes into the coke.",
    },
    TaskInfo {
        id: 4,
        name: "overheated battery",
        instruction: "remove the overheated battery from the conveyor belt",
        description: "Lift the one battery running hot off a moving conveyor.",
    },
    TaskInfo {
        id: 5,
        name: "power strip",
        instruction: "tidy up around the power strip",
        description: "Switch off any hot appliance, then plug the loose wire into the power strip.",
    },
];

/// Tray position of the ice maker, in its own frame.
pub(crate) const ICE_TRAY_OFFSET: Vector3<f64> = Vector3::new(-0.12, 0.0, 0.0);

const X_RANGE: (f64, f64) = (0.22, 0.45);
const Y_RANGE: (f64, f64) = (-0.22, 0.22);
const GAP: f64 = 0.025;
/// Offset of the "right side" of a reference object.
pub const RIGHT_SIDE_OFFSET: [f64; 3] = [0.12, 0.0, 0.0];

fn cup_shape() -> Shape {
    Shape::Cylinder {
        radius: 0.035,
        half_height: 0.045,
    }
}

fn plate_shape() -> Shape {
    Shape::Cylinder {
        radius: 0.07,
        half_height: 0.005,
    }
}

struct Placer {
    rng: ChaCha8Rng,
    taken: Vec<(f64, f64, f64)>,
}

impl Placer {
    /// Free xy for a footprint of `radius` inside the given ranges.
    fn spot(&mut self, x: (f64, f64), y: (f64, f64), radius: f64) -> Option<(f64, f64)> {
        for _ in 0..400 {
            let px = self.rng.random_range(x.0..=x.1);
            let py = self.rng.random_range(y.0..=y.1);
            if self
                .taken
                .iter()
                .all(|&(qx, qy, r)| (px - qx).hypot(py - qy) >= r + radius + GAP)
            {
                self.taken.push((px, py, radius));
                return Some((px, py));
            }
        }
        None
    }

    fn reserve(&mut self, x: f64, y: f64, radius: f64) {
        self.taken.push((x, y, radius));
    }

    fn yaw(&mut self) -> f64 {
        self.rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2)
    }

    fn temp(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..=hi)
    }
}

fn on_table(x: f64, y: f64, shape: &Shape) -> Vector3<f64> {
    Vector3::new(x, y, shape.half_height())
}

/// Builds the randomized scene for a task. Identical (task, seed) pairs give identical scenes.
pub fn scene_from_task(task_id: u8, seed: u64) -> Result<Scene, SimError> {
    if !(1..=5).contains(&task_id) {
        return Err(SimError::UnknownTask(task_id));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((task_id as u64) << 56));
    loop {
        let mut placer = Placer {
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
            taken: Vec::new(),
        };
        let mut scene = Scene::empty(seed);
        scene.task_id = Some(task_id);
        let built = match task_id {
            1 => task1(&mut scene, &mut placer),
            2 => task2(&mut scene, &mut placer, seed % 2 == 0),
            3 => task3(&mut scene, &mut placer),
            4 => task4(&mut scene, &mut placer),
            _ => task5(&mut scene, &mut placer),
        };
        if built.is_some() {
            return Ok(scene);
        }
    }
}

/// Empty plate with room on its right for a delivered item.
fn empty_plate(scene: &mut Scene, p: &mut Placer) -> Option<()> {
    let shape = plate_shape();
    let (x, y) = p.spot((0.22, 0.31), Y_RANGE, 0.07)?;
    p.reserve(x + RIGHT_SIDE_OFFSET[0], y, 0.05);
    let plate = SceneObject::new("plate_empty", ObjectClass::Plate, shape, on_table(x, y, &shape), scene.ambient)
        .with_label("empty plate")
        .with_appearance("empty plate");
    scene.objects.push(plate);
    Some(())
}

fn cup(id: &str, label: &str, appearance: &str, xy: (f64, f64), temp: f64) -> SceneObject {
    let shape = cup_shape();
    container(
        SceneObject::new(id, ObjectClass::Cup, shape, on_table(xy.0, xy.1, &shape), temp)
            .with_label(label)
            .with_appearance(appearance),
    )
}

fn task1(scene: &mut Scene, p: &mut Placer) -> Option<()> {
    let amb = scene.ambient;
    empty_plate(scene, p)?;
    let warm = p.rng.random_range(0..3);
    for i in 0..3 {
        let xy = p.spot(X_RANGE, Y_RANGE, 0.035)?;
        let (label, temp) = if i == warm {
            ("warm water", p.temp(28.0, 32.0))
        } else {
            ("water", amb)
        };
        scene.objects.push(cup(&format!("cup_{}", i + 1), label, "water", xy, temp));
    }

    let plate = plate_shape();
    let fruit_plate = |id: &str, xy: (f64, f64)| {
        SceneObject::new(id, ObjectClass::Plate, plate, on_table(xy.0, xy.1, &plate), amb)
            .with_label("fruit plate")
            .with_appearance("fruit plate")
    };
    let apple_shape = Shape::Sphere { radius: 0.035 };
    let orange_shape = Shape::Sphere { radius: 0.03 };
    let top = 2.0 * plate.half_height();
    let shared = p.rng.random_bool(0.5);
    let (apple_xy, orange_xy) = if shared {
        let xy = p.spot(X_RANGE, Y_RANGE, 0.07)?;
        scene.objects.push(fruit_plate("plate_fruit", xy));
        let a = p.yaw();
        let (s, c) = a.sin_cos();
        ((xy.0 + 0.035 * c, xy.1 + 0.035 * s), (xy.0 - 0.035 * c, xy.1 - 0.035 * s))
    } else {
        let a = p.spot(X_RANGE, Y_RANGE, 0.07)?;
        let b = p.spot(X_RANGE, Y_RANGE, 0.07)?;
        scene.objects.push(fruit_plate("plate_fruit_1", a));
        scene.objects.push(fruit_plate("plate_fruit_2", b));
        (a, b)
    };
    scene.objects.push(
        SceneObject::new(
            "apple",
            ObjectClass::Apple,
            apple_shape,
            Vector3::new(apple_xy.0, apple_xy.1, top + 0.035),
            amb,
        )
        .with_label("apple"),
    );
    scene.objects.push(
        SceneObject::new(
            "orange",
            ObjectClass::FruitOther,
            orange_shape,
            Vector3::new(orange_xy.0, orange_xy.1, top + 0.03),
            amb,
        )
        .with_label("orange")
        .with_appearance("orange"),
    );
    Some(())
}

fn task2(scene: &mut Scene, p: &mut Placer, cold_branch: bool) -> Option<()> {
    let amb = scene.ambient;
    if !cold_branch {
        // The ice maker sits at the far edge facing the robot, tray in front.
        let body = Shape::Box {
            half_extents: [0.06, 0.06, 0.08],
        };
        let y = p.rng.random_range(-0.12..=0.12);
        let x = 0.47;
        p.reserve(x, y, 0.085);
        p.reserve(x + ICE_TRAY_OFFSET.x, y, 0.04);
        scene.objects.push(
            SceneObject::new("ice_maker", ObjectClass::IceMaker, body, on_table(x, y, &body), amb)
                .with_label("ice maker"),
        );
        let button = Shape::Box {
            half_extents: [0.015, 0.015, 0.005],
        };
        let mut b = SceneObject::new(
            "ice_maker_button",
            ObjectClass::Button,
            button,
            Vector3::new(x, y, 0.165),
            amb,
        )
        .with_label("button")
        .with_interaction(InteractionKind::PressButton, Vector3::new(0.0, 0.0, 0.005));
        b.parent = Some("ice_maker".into());
        scene.objects.push(b);
    }
    empty_plate(scene, p)?;
    let cold = p.rng.random_range(0..3);
    let shape = Shape::Cylinder {
        radius: 0.033,
        half_height: 0.06,
    };
    for i in 0..3 {
        let (x, y) = p.spot(X_RANGE, Y_RANGE, 0.033)?;
        let temp = if cold_branch && i == cold { p.temp(15.0, 18.0) } else { amb };
        scene.objects.push(
            SceneObject::new(format!("coke_{}", i + 1), ObjectClass::CokeCan, shape, on_table(x, y, &shape), temp)
                .with_label("coke")
                .with_appearance("coke"),
        );
    }
    Some(())
}

fn task3(scene: &mut Scene, p: &mut Placer) -> Option<()> {
    let amb = scene.ambient;
    let mut specs = [
        ("hot water", "water", p.temp(28.0, 32.0)),
        ("cold water", "water", p.temp(15.0, 18.0)),
        ("coke", "coke", amb),
    ];
    // Shuffle which cup id gets which drink.
    for i in (1..specs.len()).rev() {
        let j = p.rng.random_range(0..=i);
        specs.swap(i, j);
    }
    for (i, (label, appearance, temp)) in specs.into_iter().enumerate() {
        let xy = p.spot(X_RANGE, Y_RANGE, 0.035)?;
        scene.objects.push(cup(&format!("cup_{}", i + 1), label, appearance, xy, temp));
    }
    let shape = Shape::Box {
        half_extents: [0.05, 0.02, 0.01],
    };
    let (x, y) = p.spot(X_RANGE, Y_RANGE, shape.footprint_radius())?;
    let yaw = p.yaw();
    let mut scoop = SceneObject::new("scoop", ObjectClass::Scoop, shape, on_table(x, y, &shape), amb)
        .with_label("scoop")
        .with_yaw(yaw);
    scoop.contents = vec![if p.rng.random_bool(0.5) {
        ObjectClass::TeaBag
    } else {
        ObjectClass::Lemon
    }];
    scene.objects.push(scoop);
    Some(())
}

fn task4(scene: &mut Scene, p: &mut Placer) -> Option<()> {
    let amb = scene.ambient;
    let belt = Conveyor {
        center_x: 0.33,
        half_width: 0.05,
        y_start: -0.25,
        y_end: 0.25,
        surface_z: 0.04,
        speed: 0.02,
    };
    let shape = Shape::Box {
        half_extents: [0.025, 0.012, 0.012],
    };
    let hot = p.rng.random_range(0..3);
    let mut y = p.rng.random_range(-0.20..=-0.16);
    for i in 0..3 {
        let x = belt.center_x + p.rng.random_range(-0.01..=0.01);
        let temp = if i == hot { BATTERY_HOT_C } else { amb };
        scene.objects.push(
            SceneObject::new(
                format!("battery_{}", i + 1),
                ObjectClass::Battery,
                shape,
                Vector3::new(x, y, belt.surface_z + 0.012),
                temp,
            )
            .with_label("battery")
            .with_yaw(p.rng.random_range(-0.2..=0.2)),
        );
        y += p.rng.random_range(0.07..=0.09);
    }
    scene.conveyor = Some(belt);
    Some(())
}

fn task5(scene: &mut Scene, p: &mut Placer) -> Option<()> {
    let amb = scene.ambient;
    let body = Shape::Box {
        half_extents: [0.1, 0.02, 0.015],
    };
    for (i, hot) in [true, false].into_iter().enumerate() {
        let (x, y) = p.spot(X_RANGE, Y_RANGE, body.footprint_radius())?;
        let yaw = p.yaw();
        let mut s = SceneObject::new(
            format!("straightener_{}", i + 1),
            ObjectClass::Straightener,
            body,
            on_table(x, y, &body),
            if hot { HEATER_SETPOINT_C } else { amb },
        )
        .with_label("hair straightener")
        .with_yaw(yaw)
        .with_interaction(InteractionKind::TogglePower, Vector3::new(-0.065, 0.0, 0.015));
        s.powered = Some(hot);
        s.setpoint = Some(HEATER_SETPOINT_C);
        scene.objects.push(s);
    }
    let strip = Shape::Box {
        half_extents: [0.08, 0.025, 0.012],
    };
    let (x, y) = p.spot(X_RANGE, Y_RANGE, strip.footprint_radius())?;
    let yaw = p.yaw();
    scene.objects.push(
        SceneObject::new("power_strip", ObjectClass::PowerStrip, strip, on_table(x, y, &strip), amb)
            .with_label("power strip")
            .with_yaw(yaw),
    );
    let wire = Shape::Box {
        half_extents: [0.06, 0.005, 0.005],
    };
    let (x, y) = p.spot(X_RANGE, Y_RANGE, wire.footprint_radius())?;
    let yaw = p.yaw();
    scene.objects.push(
        SceneObject::new("wire", ObjectClass::Wire, wire, on_table(x, y, &wire), amb)
            .with_label("unplugged wire")
            .with_yaw(yaw),
    );
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_task() {
        assert_eq!(scene_from_task(6, 0).unwrap_err(), SimError::UnknownTask(6));
        assert_eq!(scene_from_task(0, 0).unwrap_err(), SimError::UnknownTask(0));
    }

    #[test]
    fn deterministic_in_seed() {
        for task in 1..=5 {
            let a = scene_from_task(task, 42).unwrap().to_json();
            let b = scene_from_task(task, 42).unwrap().to_json();
            assert_eq!(a, b);
            assert_ne!(a, scene_from_task(task, 43).unwrap().to_json());
        }
    }

    #[test]
    fn task1_has_one_warm_cup() {
        for seed in 0..50 {
            let s = scene_from_task(1, seed).unwrap();
            let warm: Vec<_> = s.objects.iter().filter(|o| o.class == ObjectClass::Cup && o.temperature > 25.0).collect();
            assert_eq!(warm.len(), 1);
            assert!((28.0..=32.0).contains(&warm[0].temperature));
            assert_eq!(warm[0].label, "warm water");
        }
    }

    #[test]
    fn task4_single_anomaly() {
        for seed in 0..50 {
            let s = scene_from_task(4, seed).unwrap();
            let hot = s.objects.iter().filter(|o| o.temperature > s.ambient + 10.0).count();
            assert_eq!(hot, 1);
        }
    }

    #[test]
    fn task5_hot_straightener() {
        let s = scene_from_task(5, 9).unwrap();
        let hot: Vec<_> = s.objects.iter().filter(|o| o.powered == Some(true)).collect();
        assert_eq!(hot.len(), 1);
        assert_eq!(hot[0].temperature, HEATER_SETPOINT_C);
        assert!(s.object("wire").is_some());
    }
}
