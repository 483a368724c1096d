//! Scene and grasp builders shared by the integration tests.
#![allow(dead_code)]

use multigrasp::geometry::{ObjectShape, Primitive, Scene};
use multigrasp::kinematics::{rotation_onto, HandConfiguration, HandModel, HandPose, RigidTransform};
use multigrasp::metrics::GraspEvaluator;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn sphere(radius: f64, center: Vector3<f64>) -> ObjectShape {
    ObjectShape::new(Primitive::Sphere { radius }, 1.0, RigidTransform::from_translation(center)).unwrap()
}

/// Spheres resting on the table at the given `(x, y)` positions.
pub fn spheres_on_table(radius: f64, xy: &[(f64, f64)]) -> Scene {
    Scene::new(xy.iter().map(|&(x, y)| sphere(radius, Vector3::new(x, y, radius))).collect()).unwrap()
}

/// Hand with joints `q`, palm center at `center`, palm normal along `dir`
/// and a roll of `roll` radians about it.
pub fn palm_at(model: &HandModel, q: Vec<f64>, center: Vector3<f64>, dir: Vector3<f64>, roll: f64) -> HandConfiguration {
    let at_origin = HandPose::compute(model, &HandConfiguration::new(RigidTransform::identity(), q.clone())).unwrap();
    let palm = at_origin.links[model.palm.link];
    let normal = palm.transform_vector(&model.palm.normal);
    let local_center = palm.transform_point(&model.palm.center);
    let dir = dir.normalize();
    let orientation = UnitQuaternion::from_scaled_axis(dir * roll) * rotation_onto(&normal, &dir);
    HandConfiguration::new(RigidTransform::new(center - orientation * local_center, orientation), q)
}

/// Random upper-hemisphere unit vector with elevation at least `min_z`.
pub fn upper_direction(rng: &mut ChaCha8Rng, min_z: f64) -> Vector3<f64> {
    let z = rng.random_range(min_z..=1.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// A hand approaching the first object of `scene` from a random direction,
/// pushed in until the measured penetration depth is `depth` (meters).
pub fn penetrating_grasp(
    model: &HandModel,
    scene: &Scene,
    evaluator: &GraspEvaluator,
    depth: f64,
    rng: &mut ChaCha8Rng,
) -> HandConfiguration {
    let obj = &scene.objects[0];
    let u = upper_direction(rng, 0.5);
    let roll = rng.random_range(0.0..std::f64::consts::TAU);
    let q: Vec<f64> = model
        .joint_limits()
        .iter()
        .map(|&[a, b]| {
            let n: f64 = rng.sample(StandardNormal);
            (0.5 * (a + b) + 0.15 * n).clamp(a, b)
        })
        .collect();
    let r = obj.bounding_radius();
    let at = |s: f64| palm_at(model, q.clone(), obj.center() + (r + s) * u, -u, roll);
    // depth decreases with the standoff s; bisect for the target
    let (mut lo, mut hi) = (-r, 0.15);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if evaluator.penetration_depth(&at(mid)).unwrap() > depth {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
