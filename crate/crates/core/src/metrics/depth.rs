//! Maximal intersection depth between hand, objects and the table.
//!
//! Surface samples locate the deepest region of every (hand link, obstacle)
//! and (object, object) pair; a compass search restricted to the primitive
//! surface then polishes the best sample. Sampling alone converges only
//! linearly in the sample spacing near edges and corners, while the polished
//! maximum is resolution independent once the right basin is sampled.

use nalgebra::Vector3;

use crate::geometry::{Primitive, Scene};
use crate::kinematics::{HandModel, HandPose, HandSurface, RigidTransform};

/// Samples shallower than this (negative depth, i.e. outside) are not
/// polished.
const POLISH_MARGIN: f64 = 0.005;
const INITIAL_STEP: f64 = 1e-3;
const MAX_STEP: f64 = 4e-3;
const MIN_STEP: f64 = 1e-9;
const MAX_ITERATIONS: usize = 500;

/// A primitive surface placed in the world by `frame` after uniform `scale`.
struct PlacedSurface<'a> {
    primitive: &'a Primitive,
    frame: RigidTransform,
    scale: f64,
}

impl PlacedSurface<'_> {
    fn local(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.frame.inverse_transform_point(x) / self.scale
    }

    /// Closest surface point and outward normal.
    fn project(&self, x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let y = self.local(x);
        let s = self.primitive.evaluate(&y, false);
        let on = y - s.distance * s.gradient;
        (
            self.frame.transform_point(&(self.scale * on)),
            self.frame.transform_vector(&s.gradient),
        )
    }

    /// Maximizes `objective` over the surface starting from `start`.
    fn polish(&self, start: &Vector3<f64>, objective: impl Fn(&Vector3<f64>) -> f64) -> f64 {
        let (mut x, mut normal) = self.project(start);
        let mut best = objective(&x);
        let mut step = INITIAL_STEP;
        for _ in 0..MAX_ITERATIONS {
            if step < MIN_STEP {
                break;
            }
            let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let t1 = normal.cross(&helper).normalize();
            let t2 = normal.cross(&t1);
            let mut improved = false;
            for k in 0..8 {
                let a = std::f64::consts::FRAC_PI_4 * k as f64;
                let (cand, n) = self.project(&(x + step * (a.cos() * t1 + a.sin() * t2)));
                let v = objective(&cand);
                if v > best {
                    best = v;
                    x = cand;
                    normal = n;
                    improved = true;
                }
            }
            step = if improved { (1.5 * step).min(MAX_STEP) } else { 0.5 * step };
        }
        best
    }
}

/// Deepest sample of one pair: depth and world point.
#[derive(Clone, Copy)]
struct Candidate {
    depth: f64,
    point: Vector3<f64>,
}

fn keep_deepest(slot: &mut Option<Candidate>, depth: f64, point: &Vector3<f64>) {
    if depth > -POLISH_MARGIN && slot.is_none_or(|c| depth > c.depth) {
        *slot = Some(Candidate { depth, point: *point });
    }
}

/// The collision primitive of `link` whose surface carries `local_point`.
fn owning_primitive(model: &HandModel, link: usize, local_point: &Vector3<f64>) -> usize {
    let collision = &model.links[link].collision;
    (0..collision.len())
        .min_by(|&a, &b| {
            let d = |i: usize| {
                let c = &collision[i];
                c.shape.sdf(&c.pose.inverse_transform_point(local_point)).abs()
            };
            d(a).total_cmp(&d(b))
        })
        .expect("sampled links have collision primitives")
}

/// Largest depth of the hand in objects or the table, and of objects in
/// each other; object-table depth is exact. Meters, never negative.
pub fn max_depth(
    model: &HandModel,
    pose: &HandPose,
    hand: &HandSurface,
    scene: &Scene,
    object_points: &[Vec<Vector3<f64>>],
) -> f64 {
    let n_obj = scene.objects.len();
    let mut depth: f64 = 0.0;

    // hand versus table (target 0) and objects (targets 1..), keyed by link
    let targets = n_obj + 1;
    let mut best: Vec<Option<(Candidate, Vector3<f64>)>> = vec![None; model.links.len() * targets];
    for s in &hand.samples {
        let x = pose.links[s.link].transform_point(&s.local_point);
        let mut consider = |target: usize, d: f64| {
            depth = depth.max(d);
            let slot = &mut best[s.link * targets + target];
            if d > -POLISH_MARGIN && slot.is_none_or(|(c, _)| d > c.depth) {
                *slot = Some((Candidate { depth: d, point: x }, s.local_point));
            }
        };
        consider(0, -x.z);
        for (j, obj) in scene.objects.iter().enumerate() {
            let reach = obj.bounding_radius() + POLISH_MARGIN;
            if (x - obj.center()).norm_squared() < reach * reach {
                consider(j + 1, -obj.sdf(&x));
            }
        }
    }
    for (slot, entry) in best.iter().enumerate() {
        let Some((cand, local)) = entry else { continue };
        let (link, target) = (slot / targets, slot % targets);
        let c = &model.links[link].collision[owning_primitive(model, link, local)];
        let surface = PlacedSurface {
            primitive: &c.shape,
            frame: pose.links[link] * c.pose,
            scale: 1.0,
        };
        let polished = if target == 0 {
            surface.polish(&cand.point, |x| -x.z)
        } else {
            let obj = &scene.objects[target - 1];
            surface.polish(&cand.point, |x| -obj.sdf(x))
        };
        depth = depth.max(polished);
    }

    // objects versus table (exact) and each other
    for (j, obj) in scene.objects.iter().enumerate() {
        depth = depth.max(-obj.min_z());
        let surface = PlacedSurface {
            primitive: &obj.primitive,
            frame: obj.pose,
            scale: obj.scale,
        };
        for (k, other) in scene.objects.iter().enumerate() {
            if k == j {
                continue;
            }
            let mut cand = None;
            for x in &object_points[j] {
                let d = -other.sdf(x);
                depth = depth.max(d);
                keep_deepest(&mut cand, d, x);
            }
            if let Some(c) = cand {
                depth = depth.max(surface.polish(&c.point, |x| -other.sdf(x)));
            }
        }
    }
    depth.max(0.0)
}
