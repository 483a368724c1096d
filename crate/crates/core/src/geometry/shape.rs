use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::primitive::{Primitive, SdfSample};
use crate::error::{Error, Result};
use crate::kinematics::RigidTransform;

/// Default number of surface points per object cloud.
pub const DEFAULT_CLOUD_POINTS: usize = 512;

/// Serialized object: primitive, uniform scale and world pose. The surface
/// cloud is regenerated from the shape and a seed on load.
///
/// JSON: `{"name": .., "kind": "box", "dims": [..], "scale": 1.0, "pose": {..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DescriptorRepr", into = "DescriptorRepr")]
pub struct ObjectDescriptor {
    pub name: Option<String>,
    pub primitive: Primitive,
    pub scale: f64,
    pub pose: RigidTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kind: String,
    dims: Vec<f64>,
    #[serde(default = "unit_scale")]
    scale: f64,
    pose: RigidTransform,
}

impl TryFrom<DescriptorRepr> for ObjectDescriptor {
    type Error = String;

    fn try_from(r: DescriptorRepr) -> std::result::Result<Self, String> {
        let primitive = Primitive::from_kind_dims(&r.kind, &r.dims)?;
        if !(r.scale.is_finite() && r.scale > 0.0) {
            return Err(format!("scale must be positive, got {}", r.scale));
        }
        Ok(ObjectDescriptor {
            name: r.name,
            primitive,
            scale: r.scale,
            pose: r.pose,
        })
    }
}

impl From<ObjectDescriptor> for DescriptorRepr {
    fn from(d: ObjectDescriptor) -> Self {
        let (kind, dims) = d.primitive.kind_dims();
        DescriptorRepr {
            name: d.name,
            kind: kind.to_string(),
            dims,
            scale: d.scale,
            pose: d.pose,
        }
    }
}

fn unit_scale() -> f64 {
    1.0
}

/// A posed, uniformly scaled primitive with a surface point cloud stored in
/// the object frame (scale applied).
#[derive(Clone, Debug)]
pub struct ObjectShape {
    pub name: Option<String>,
    pub primitive: Primitive,
    pub scale: f64,
    pub pose: RigidTransform,
    pub cloud_points: Vec<Vector3<f64>>,
    pub cloud_normals: Vec<Vector3<f64>>,
}

impl ObjectShape {
    pub fn new(primitive: Primitive, scale: f64, pose: RigidTransform) -> Result<Self> {
        Self::with_cloud(primitive, scale, pose, DEFAULT_CLOUD_POINTS, 0)
    }

    pub fn with_cloud(
        primitive: Primitive,
        scale: f64,
        pose: RigidTransform,
        points: usize,
        seed: u64,
    ) -> Result<Self> {
        if !primitive.is_valid() {
            return Err(Error::Input(format!("invalid primitive {primitive:?}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Input(format!("object scale must be positive, got {scale}")));
        }
        if !pose.is_finite() {
            return Err(Error::Input("non-finite object pose".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cloud_points, cloud_normals) = primitive
            .sample_surface(points, &mut rng)
            .into_iter()
            .map(|(p, n)| (p * scale, n))
            .unzip();
        Ok(Self {
            name: None,
            primitive,
            scale,
            pose,
            cloud_points,
            cloud_normals,
        })
    }

    pub fn from_descriptor(desc: &ObjectDescriptor, cloud_seed: u64) -> Result<Self> {
        let mut shape = Self::with_cloud(
            desc.primitive,
            desc.scale,
            desc.pose,
            DEFAULT_CLOUD_POINTS,
            cloud_seed,
        )?;
        shape.name = desc.name.clone();
        Ok(shape)
    }

    pub fn descriptor(&self) -> ObjectDescriptor {
        ObjectDescriptor {
            name: self.name.clone(),
            primitive: self.primitive,
            scale: self.scale,
            pose: self.pose,
        }
    }

    /// Same shape and cloud at a new pose.
    pub fn with_pose(&self, pose: RigidTransform) -> Self {
        Self {
            pose,
            ..self.clone()
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.position
    }

    pub fn bounding_radius(&self) -> f64 {
        self.scale * self.primitive.bounding_radius()
    }

    fn to_local(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.pose.inverse_transform_point(point) / self.scale
    }

    pub fn sdf(&self, point: &Vector3<f64>) -> f64 {
        self.scale * self.primitive.sdf(&self.to_local(point))
    }

    /// World-frame signed distance with outward gradient; Hessian on request.
    pub fn evaluate(&self, point: &Vector3<f64>, with_hessian: bool) -> SdfSample {
        let local = self.primitive.evaluate(&self.to_local(point), with_hessian);
        let rot = self.pose.rotation_matrix();
        let hessian = if with_hessian {
            rot.matrix() * local.hessian * rot.matrix().transpose() / self.scale
        } else {
            Matrix3::zeros()
        };
        SdfSample {
            distance: self.scale * local.distance,
            gradient: rot * local.gradient,
            hessian,
            degenerate: local.degenerate,
        }
    }

    /// Lowest world z of the shape surface.
    pub fn min_z(&self) -> f64 {
        let down_local = self.pose.inverse_transform_vector(&Vector3::new(0.0, 0.0, -1.0));
        self.pose.position.z - self.scale * self.primitive.support(&down_local)
    }

    pub fn world_cloud(&self) -> impl Iterator<Item = (Vector3<f64>, Vector3<f64>)> + '_ {
        self.cloud_points
            .iter()
            .zip(&self.cloud_normals)
            .map(|(p, n)| (self.pose.transform_point(p), self.pose.transform_vector(n)))
    }
}

/// Per-point signed distances and outward surface normals.
pub fn distance_to_object(
    points: &[Vector3<f64>],
    shape: &ObjectShape,
) -> (Vec<f64>, Vec<Vector3<f64>>) {
    points
        .iter()
        .map(|p| {
            let s = shape.evaluate(p, false);
            (s.distance, s.gradient)
        })
        .unzip()
}

/// Outside-only variant: `max(0, sdf)` per point.
pub fn clamped_distance_to_object(points: &[Vector3<f64>], shape: &ObjectShape) -> Vec<f64> {
    points.iter().map(|p| shape.sdf(p).max(0.0)).collect()
}
