use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{quantize, Box7, Point, PointLabel, Scene, MAX_CLASSES};
use crate::error::{domain_err, Error, Result};

/// One foreground class of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Nominal `(l, w, h)` in meters.
    pub size: [f64; 3],
    /// Relative uniform jitter applied to each dimension.
    #[serde(default)]
    pub size_jitter: f64,
    pub count: usize,
    /// Samples on the five visible faces (bottom excluded).
    pub shell_points: usize,
    #[serde(default)]
    pub interior_points: usize,
}

/// An object placed at a fixed pose instead of at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedObject {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Points and objects live in `[-half_extent, half_extent)²`.
    pub half_extent: f64,
    /// Object footprints stay this far inside the area edge.
    pub edge_margin: f64,
    /// No sampled point is closer to the sensor than this.
    pub min_range: f64,
    pub ground_z: f64,
    pub ground_noise: f64,
    pub ground_points: usize,
    pub clutter_points: usize,
    pub clutter_height: f64,
    /// Extra clearance between circumscribed BEV circles of two objects.
    pub min_gap: f64,
    pub max_retries: usize,
    pub classes: Vec<ClassSpec>,
    pub fixed_objects: Vec<FixedObject>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            half_extent: 25.6,
            edge_margin: 0.8,
            min_range: 2.5,
            ground_z: -1.8,
            ground_noise: 0.02,
            ground_points: 6000,
            clutter_points: 300,
            clutter_height: 2.5,
            min_gap: 1.2,
            max_retries: 1000,
            classes: vec![
                ClassSpec {
                    name: "car".into(),
                    size: [4.2, 1.8, 1.6],
                    size_jitter: 0.1,
                    count: 6,
                    shell_points: 160,
                    interior_points: 40,
                },
                ClassSpec {
                    name: "pedestrian".into(),
                    size: [0.7, 0.7, 1.8],
                    size_jitter: 0.1,
                    count: 6,
                    shell_points: 50,
                    interior_points: 10,
                },
                ClassSpec {
                    name: "cone".into(),
                    size: [0.4, 0.4, 0.8],
                    size_jitter: 0.1,
                    count: 6,
                    shell_points: 25,
                    interior_points: 5,
                },
            ],
            fixed_objects: Vec::new(),
        }
    }
}

impl SceneConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Every configuration problem found, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes.len() > MAX_CLASSES {
            out.push(format!(
                "scene.classes: {} classes exceeds {MAX_CLASSES}",
                self.classes.len()
            ));
        }
        let positive = [
            ("half_extent", self.half_extent),
            ("min_range", self.min_range),
            ("clutter_height", self.clutter_height),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("scene.{name}: must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("edge_margin", self.edge_margin),
            ("ground_noise", self.ground_noise),
            ("min_gap", self.min_gap),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(format!("scene.{name}: must be non-negative, got {v}"));
            }
        }
        if !self.ground_z.is_finite() {
            out.push("scene.ground_z: must be finite".into());
        }
        if self.max_retries == 0 {
            out.push("scene.max_retries: must be at least 1".into());
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.size.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                out.push(format!(
                    "scene.classes[{i}].size: dimensions must be positive"
                ));
            }
            if !(0.0..1.0).contains(&c.size_jitter) {
                out.push(format!(
                    "scene.classes[{i}].size_jitter: must lie in [0, 1)"
                ));
            }
            if c.count > 0 && c.shell_points + c.interior_points == 0 {
                out.push(format!(
                    "scene.classes[{i}]: objects need at least one point"
                ));
            }
        }
        for (i, f) in self.fixed_objects.iter().enumerate() {
            if f.class_id == 0 || f.class_id as usize > self.classes.len() {
                out.push(format!(
                    "scene.fixed_objects[{i}].class_id: {} not in 1..={}",
                    f.class_id,
                    self.classes.len()
                ));
            }
        }
        out
    }
}

fn local_to_world(b: &Box7, lx: f64, ly: f64, lz: f64) -> (f64, f64, f64) {
    let (s, c) = b.yaw.sin_cos();
    (b.cx + lx * c - ly * s, b.cy + lx * s + ly * c, b.cz + lz)
}

/// Uniform sample on the five visible faces, area weighted.
fn shell_sample(b: &Box7, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let (hl, hw, hh) = (b.l / 2.0, b.w / 2.0, b.h / 2.0);
    let top = b.l * b.w;
    let ends = b.w * b.h;
    let sides = b.l * b.h;
    let total = top + 2.0 * ends + 2.0 * sides;
    let mut pick = rng.random_range(0.0..total);
    let u = |rng: &mut ChaCha8Rng, half: f64| rng.random_range(-half..=half);
    if pick < top {
        return (u(rng, hl), u(rng, hw), hh);
    }
    pick -= top;
    if pick < 2.0 * ends {
        let lx = if pick < ends { hl } else { -hl };
        return (lx, u(rng, hw), u(rng, hh));
    }
    pick -= 2.0 * ends;
    let ly = if pick < sides { hw } else { -hw };
    (u(rng, hl), ly, u(rng, hh))
}

fn snap(x: f64, y: f64, z: f64, intensity: f64) -> Point {
    Point::new(quantize(x), quantize(y), quantize(z), quantize(intensity))
}

/// Deterministic synthetic scene: non-overlapping boxes sampled as shells
/// plus interior points, over a noisy ground plane with free clutter.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = config.half_extent;
    let mut boxes: Vec<Box7> = Vec::new();

    let sized = |class_id: u32, rng: &mut ChaCha8Rng| -> [f64; 3] {
        let spec = &config.classes[class_id as usize - 1];
        let j = spec.size_jitter;
        spec.size.map(|s| {
            let f = if j > 0.0 {
                rng.random_range(1.0 - j..1.0 + j)
            } else {
                1.0
            };
            quantize(s * f).max(super::COORD_QUANTUM)
        })
    };
    let make_box = |class_id: u32, cx: f64, cy: f64, yaw: f64, size: [f64; 3]| Box7 {
        cx: quantize(cx),
        cy: quantize(cy),
        cz: quantize(config.ground_z + size[2] / 2.0),
        l: size[0],
        w: size[1],
        h: size[2],
        yaw: quantize(yaw),
        class_id,
        score: 1.0,
    };
    let clear = |b: &Box7, boxes: &[Box7]| {
        boxes
            .iter()
            .all(|o| b.bev_distance(o) >= b.bev_radius() + o.bev_radius() + config.min_gap)
    };

    for f in &config.fixed_objects {
        let size = sized(f.class_id, &mut rng);
        let b = make_box(f.class_id, f.cx, f.cy, f.yaw, size);
        if !clear(&b, &boxes) {
            return Err(Error::Infeasible(format!(
                "fixed object at ({}, {}) overlaps another object",
                f.cx, f.cy
            )));
        }
        boxes.push(b);
    }
    for (ci, spec) in config.classes.iter().enumerate() {
        let class_id = ci as u32 + 1;
        for n in 0..spec.count {
            let size = sized(class_id, &mut rng);
            let radius = 0.5 * size[0].hypot(size[1]);
            let limit = half - config.edge_margin - radius;
            if limit <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "class {} objects do not fit in the area",
                    spec.name
                )));
            }
            let mut placed = false;
            for _ in 0..config.max_retries {
                let cx = rng.random_range(-limit..limit);
                let cy = rng.random_range(-limit..limit);
                let yaw = rng.random_range(-PI..PI);
                let b = make_box(class_id, cx, cy, yaw, size);
                if b.cx.hypot(b.cy) >= config.min_range + radius && clear(&b, &boxes) {
                    boxes.push(b);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Infeasible(format!(
                    "could not place {} #{} after {} attempts",
                    spec.name, n, config.max_retries
                )));
            }
        }
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let far_enough = |p: &Point| p.range() >= config.min_range;

    for (i, b) in boxes.iter().enumerate() {
        let spec = &config.classes[b.class_id as usize - 1];
        let label = PointLabel {
            class_id: b.class_id,
            instance_id: i as u32 + 1,
        };
        let total = spec.shell_points + spec.interior_points;
        let mut attempts = 0;
        let mut made = 0;
        while made < total {
            attempts += 1;
            if attempts > total * config.max_retries {
                return Err(Error::Infeasible(format!(
                    "object {} has no samples beyond min_range",
                    i + 1
                )));
            }
            let (lx, ly, lz) = if made < spec.shell_points {
                shell_sample(b, &mut rng)
            } else {
                (
                    rng.random_range(-b.l / 2.0..=b.l / 2.0),
                    rng.random_range(-b.w / 2.0..=b.w / 2.0),
                    rng.random_range(-b.h / 2.0..=b.h / 2.0),
                )
            };
            let (x, y, z) = local_to_world(b, lx, ly, lz);
            let p = snap(x, y, z, rng.random_range(0.4..1.0));
            if far_enough(&p) {
                points.push(p);
                labels.push(label);
                made += 1;
            }
        }
    }

    let ground = Normal::new(0.0, config.ground_noise).map_err(|e| Error::Domain {
        op: "generate_scene",
        detail: e.to_string(),
    })?;
    let background = |n: usize,
                      rng: &mut ChaCha8Rng,
                      points: &mut Vec<Point>,
                      labels: &mut Vec<PointLabel>,
                      sample: &dyn Fn(&mut ChaCha8Rng) -> Option<Point>|
     -> Result<()> {
        for _ in 0..n {
            let p = (0..config.max_retries)
                .find_map(|_| sample(rng).filter(|p| far_enough(p)))
                .ok_or_else(|| Error::Infeasible("background sampling exhausted retries".into()))?;
            points.push(p);
            labels.push(PointLabel::BACKGROUND);
        }
        Ok(())
    };
    background(
        config.ground_points,
        &mut rng,
        &mut points,
        &mut labels,
        &|rng| {
            Some(snap(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                config.ground_z + ground.sample(rng),
                rng.random_range(0.0..0.3),
            ))
        },
    )?;
    background(
        config.clutter_points,
        &mut rng,
        &mut points,
        &mut labels,
        &|rng| {
            let p = snap(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                config.ground_z + rng.random_range(0.0..config.clutter_height),
                rng.random_range(0.1..0.6),
            );
            boxes.iter().all(|b| !b.contains(&p, 0.2)).then_some(p)
        },
    )?;

    if points.is_empty() {
        return domain_err("generate_scene", "configuration produces no points");
    }
    Ok(Scene {
        points,
        labels,
        boxes,
        num_classes: config.num_classes(),
        seed,
    })
}
