use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::primitive::Primitive;
use super::shape::{ObjectDescriptor, ObjectShape};
use crate::error::{Error, Result};
use crate::kinematics::RigidTransform;

/// Objects may touch the tabletop but not sink below it beyond this.
pub const TABLE_TOLERANCE: f64 = 1e-6;

/// Tabletop scene: objects resting on the half-space `z >= 0`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub objects: Vec<ObjectShape>,
}

impl Scene {
    pub fn new(objects: Vec<ObjectShape>) -> Result<Self> {
        for (j, obj) in objects.iter().enumerate() {
            let z = obj.min_z();
            if z < -TABLE_TOLERANCE {
                return Err(Error::Input(format!(
                    "object {j} penetrates the table by {:.3e} m",
                    -z
                )));
            }
        }
        Ok(Self { objects })
    }

    /// Builds a scene without the table check, for synthetic off-table tests
    /// and transformed copies.
    pub fn new_unchecked(objects: Vec<ObjectShape>) -> Self {
        Self { objects }
    }

    pub fn from_descriptors(descs: &[ObjectDescriptor], cloud_seed: u64) -> Result<Self> {
        let objects = descs
            .iter()
            .enumerate()
            .map(|(j, d)| ObjectShape::from_descriptor(d, cloud_seed.wrapping_add(j as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(objects)
    }

    pub fn descriptors(&self) -> Vec<ObjectDescriptor> {
        self.objects.iter().map(ObjectShape::descriptor).collect()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.objects.is_empty() {
            return Vector3::zeros();
        }
        self.objects.iter().map(|o| o.center()).sum::<Vector3<f64>>() / self.objects.len() as f64
    }

    /// Applies a rigid transform to every object pose (clouds stay in the
    /// object frame). The result skips the table check.
    pub fn transformed(&self, t: &RigidTransform) -> Scene {
        Scene::new_unchecked(self.objects.iter().map(|o| o.with_pose(*t * o.pose)).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let descs: Vec<ObjectDescriptor> = serde_json::from_str(&text)?;
        Self::from_descriptors(&descs, 0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.descriptors())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Signed distance to the tabletop half-space.
pub fn table_sdf(point: &Vector3<f64>) -> f64 {
    point.z
}

/// Object template used for placement: shape without a pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTemplate {
    pub name: String,
    pub kind: String,
    pub dims: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ObjectTemplate {
    pub fn new(name: &str, primitive: Primitive, scale: f64) -> Self {
        let (kind, dims) = primitive.kind_dims();
        Self {
            name: name.to_string(),
            kind: kind.to_string(),
            dims,
            scale,
        }
    }

    pub fn primitive(&self) -> Result<Primitive> {
        Primitive::from_kind_dims(&self.kind, &self.dims).map_err(Error::Input)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementParams {
    /// Tabletop rectangle `[x_min, x_max, y_min, y_max]` for object centers.
    pub region: [f64; 4],
    pub min_spacing: f64,
    pub max_spacing: f64,
    pub attempts: usize,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self {
            region: [-0.05, 0.05, -0.05, 0.05],
            min_spacing: 0.0,
            max_spacing: 0.12,
            attempts: 1000,
        }
    }
}

/// Resting orientations of a primitive (before a random yaw), with the
/// local axis that points down.
fn rest_orientations(p: &Primitive) -> Vec<UnitQuaternion<f64>> {
    let x = Vector3::x_axis();
    let y = Vector3::y_axis();
    match p {
        Primitive::Sphere { .. } => vec![UnitQuaternion::identity()],
        Primitive::Box { .. } => vec![
            UnitQuaternion::identity(),
            UnitQuaternion::from_axis_angle(&x, PI),
            UnitQuaternion::from_axis_angle(&x, PI / 2.0),
            UnitQuaternion::from_axis_angle(&x, -PI / 2.0),
            UnitQuaternion::from_axis_angle(&y, PI / 2.0),
            UnitQuaternion::from_axis_angle(&y, -PI / 2.0),
        ],
        Primitive::Cylinder { .. } | Primitive::Capsule { .. } => vec![
            UnitQuaternion::identity(),
            UnitQuaternion::from_axis_angle(&x, PI),
            UnitQuaternion::from_axis_angle(&x, PI / 2.0),
        ],
    }
}

fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let q = nalgebra::Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    UnitQuaternion::new_normalize(q)
}

/// Pose resting on the table at `(x, y)`: lowest surface point at z = 0.
pub fn resting_pose(
    primitive: &Primitive,
    scale: f64,
    orientation: UnitQuaternion<f64>,
    x: f64,
    y: f64,
) -> RigidTransform {
    let down_local = orientation.inverse_transform_vector(&Vector3::new(0.0, 0.0, -1.0));
    let z = scale * primitive.support(&down_local);
    RigidTransform::new(Vector3::new(x, y, z), orientation)
}

fn overlaps(a: &ObjectShape, b: &ObjectShape) -> bool {
    let reach = a.bounding_radius() + b.bounding_radius();
    if (a.center() - b.center()).norm() > reach {
        return false;
    }
    a.world_cloud().any(|(p, _)| b.sdf(&p) <= 0.0) || b.world_cloud().any(|(p, _)| a.sdf(&p) <= 0.0)
}

/// Rejection-samples stable, non-overlapping placements of the templates.
pub fn place_objects(
    templates: &[ObjectTemplate],
    params: &PlacementParams,
    seed: u64,
) -> Result<Scene> {
    let [x0, x1, y0, y1] = params.region;
    if templates.is_empty() {
        return Err(Error::Input("no objects to place".into()));
    }
    if !(x0 <= x1 && y0 <= y1) || params.min_spacing < 0.0 || params.max_spacing < params.min_spacing
    {
        return Err(Error::Input(format!("bad placement parameters {params:?}")));
    }
    let primitives = templates
        .iter()
        .map(ObjectTemplate::primitive)
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.attempts.max(1) {
        let mut objects: Vec<ObjectShape> = Vec::with_capacity(templates.len());
        let mut ok = true;
        for (j, (tpl, prim)) in templates.iter().zip(&primitives).enumerate() {
            let rests = rest_orientations(prim);
            let base = match prim {
                Primitive::Sphere { .. } => random_rotation(&mut rng),
                _ => rests[rng.random_range(0..rests.len())],
            };
            let yaw = UnitQuaternion::from_axis_angle(
                &Vector3::z_axis(),
                rng.random_range(-PI..PI),
            );
            let x = if x1 > x0 { rng.random_range(x0..=x1) } else { x0 };
            let y = if y1 > y0 { rng.random_range(y0..=y1) } else { y0 };
            let pose = resting_pose(prim, tpl.scale, yaw * base, x, y);
            let mut shape = ObjectShape::with_cloud(
                *prim,
                tpl.scale,
                pose,
                super::shape::DEFAULT_CLOUD_POINTS,
                // same cloud seeds as a scene reloaded from its descriptors
                j as u64,
            )?;
            shape.name = Some(tpl.name.clone());
            let spaced = objects.iter().all(|o| {
                let d = (o.center() - shape.center()).norm();
                d >= params.min_spacing && d <= params.max_spacing
            });
            if !spaced || objects.iter().any(|o| overlaps(o, &shape)) {
                ok = false;
                break;
            }
            objects.push(shape);
        }
        if ok {
            return Scene::new(objects);
        }
    }
    Err(Error::PlacementInfeasible {
        attempts: params.attempts.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(name: &str, r: f64) -> ObjectTemplate {
        ObjectTemplate::new(name, Primitive::Sphere { radius: r }, 1.0)
    }

    #[test]
    fn single_sphere_rests_at_its_radius() {
        let scene = place_objects(&[sphere("a", 0.03)], &PlacementParams::default(), 1).unwrap();
        let c = scene.objects[0].center();
        assert!((c.z - 0.03).abs() < 1e-12);
        assert!(c.x.abs() <= 0.05 && c.y.abs() <= 0.05);
    }

    #[test]
    fn two_spheres_respect_spacing_and_do_not_overlap() {
        let params = PlacementParams {
            min_spacing: 0.06,
            ..Default::default()
        };
        for seed in 0..10 {
            let scene = place_objects(&[sphere("a", 0.025), sphere("b", 0.025)], &params, seed)
                .unwrap();
            let (a, b) = (&scene.objects[0], &scene.objects[1]);
            assert!((a.center() - b.center()).norm() >= 0.06);
            for o in [a, b] {
                assert!(o.min_z().abs() < 1e-6);
            }
            assert!(a.world_cloud().all(|(p, _)| b.sdf(&p) > 0.0));
            assert!(b.world_cloud().all(|(p, _)| a.sdf(&p) > 0.0));
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let tpls = [
            ObjectTemplate::new(
                "box",
                Primitive::Box {
                    half_extents: Vector3::new(0.02, 0.03, 0.015),
                },
                1.0,
            ),
            ObjectTemplate::new(
                "can",
                Primitive::Cylinder {
                    radius: 0.02,
                    half_length: 0.03,
                },
                0.8,
            ),
        ];
        let params = PlacementParams {
            region: [-0.1, 0.1, -0.1, 0.1],
            ..Default::default()
        };
        let a = place_objects(&tpls, &params, 42).unwrap();
        let b = place_objects(&tpls, &params, 42).unwrap();
        assert_eq!(a.descriptors(), b.descriptors());
        for o in &a.objects {
            assert!(o.min_z().abs() < 1e-6, "{:?}", o.min_z());
        }
    }

    #[test]
    fn every_rest_pose_touches_the_table() {
        let prims = [
            Primitive::Box {
                half_extents: Vector3::new(0.02, 0.03, 0.015),
            },
            Primitive::Cylinder {
                radius: 0.02,
                half_length: 0.03,
            },
            Primitive::Capsule {
                radius: 0.015,
                half_length: 0.02,
            },
        ];
        for prim in prims {
            for rest in rest_orientations(&prim) {
                let pose = resting_pose(&prim, 1.2, rest, 0.0, 0.0);
                let shape = ObjectShape::new(prim, 1.2, pose).unwrap();
                assert!(shape.min_z().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn infeasible_spacing_is_reported() {
        let params = PlacementParams {
            region: [0.0, 0.0, 0.0, 0.0],
            min_spacing: 0.1,
            max_spacing: 0.2,
            attempts: 20,
        };
        let err = place_objects(&[sphere("a", 0.02), sphere("b", 0.02)], &params, 0).unwrap_err();
        assert!(matches!(err, Error::PlacementInfeasible { attempts: 20 }));
    }

    #[test]
    fn table_penetration_is_rejected() {
        let sunk = ObjectShape::new(
            Primitive::Sphere { radius: 0.03 },
            1.0,
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.02)),
        )
        .unwrap();
        assert!(Scene::new(vec![sunk]).is_err());
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = place_objects(&[sphere("a", 0.03)], &PlacementParams::default(), 3).unwrap();
        let text = serde_json::to_string(&scene.descriptors()).unwrap();
        let descs: Vec<ObjectDescriptor> = serde_json::from_str(&text).unwrap();
        assert_eq!(descs, scene.descriptors());
    }
}
