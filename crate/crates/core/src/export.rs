//! Offline-visualization export: closed triangle meshes of the hand's
//! collision primitives and the objects (OBJ), and oriented point clouds
//! (`x y z nx ny nz` per line).

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{Primitive, Scene};
use crate::kinematics::{HandConfiguration, HandModel, HandPose, HandSurface, RigidTransform};

/// Angular subdivisions of round primitives.
pub const MESH_SEGMENTS: usize = 24;
/// Latitude bands per hemisphere of spheres and capsules.
pub const MESH_RINGS: usize = 8;

/// Indexed triangle mesh with outward (counter-clockwise) faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Maps every vertex through `pose` after scaling by `scale`.
    pub fn transformed(&self, pose: &RigidTransform, scale: f64) -> Mesh {
        Mesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| pose.transform_point(&(v * scale))).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Every undirected edge is shared by exactly two faces, traversed in
    /// opposite directions.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return false;
            }
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Signed volume; positive for outward-oriented closed meshes.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}

/// Surface of revolution about z from a profile of `(radius, z)` pairs from
/// top to bottom; zero radii at the ends become single pole vertices.
fn revolve(profile: &[(f64, f64)], segments: usize) -> Mesh {
    let mut mesh = Mesh::default();
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(profile.len());
    for &(r, z) in profile {
        if r == 0.0 {
            mesh.vertices.push(Vector3::new(0.0, 0.0, z));
            rings.push(vec![mesh.vertices.len() - 1]);
        } else {
            let start = mesh.vertices.len();
            for s in 0..segments {
                let phi = TAU * s as f64 / segments as f64;
                mesh.vertices.push(Vector3::new(r * phi.cos(), r * phi.sin(), z));
            }
            rings.push((start..start + segments).collect());
        }
    }
    for pair in rings.windows(2) {
        let (upper, lower) = (&pair[0], &pair[1]);
        for s in 0..segments {
            let t = (s + 1) % segments;
            match (upper.len(), lower.len()) {
                (1, _) => mesh.faces.push([upper[0], lower[s], lower[t]]),
                (_, 1) => mesh.faces.push([upper[s], lower[0], upper[t]]),
                _ => {
                    mesh.faces.push([upper[s], lower[s], lower[t]]);
                    mesh.faces.push([upper[s], lower[t], upper[t]]);
                }
            }
        }
    }
    mesh
}

/// Closed mesh of a primitive in its own frame; vertices lie on the
/// primitive's surface.
pub fn primitive_mesh(primitive: &Primitive) -> Mesh {
    let cap = |radius: f64, z0: f64, upper: bool| -> Vec<(f64, f64)> {
        (0..=MESH_RINGS)
            .map(|k| {
                let theta = 0.5 * PI * k as f64 / MESH_RINGS as f64;
                if upper {
                    let r = if k == 0 { 0.0 } else { radius * theta.sin() };
                    (r, z0 + radius * theta.cos())
                } else {
                    let r = if k == MESH_RINGS { 0.0 } else { radius * theta.cos() };
                    (r, z0 - radius * theta.sin())
                }
            })
            .collect()
    };
    match *primitive {
        Primitive::Sphere { radius } => {
            let mut profile = cap(radius, 0.0, true);
            profile.extend(cap(radius, 0.0, false).into_iter().skip(1));
            revolve(&profile, MESH_SEGMENTS)
        }
        Primitive::Capsule { radius, half_length } => {
            let mut profile = cap(radius, half_length, true);
            profile.extend(cap(radius, -half_length, false));
            revolve(&profile, MESH_SEGMENTS)
        }
        Primitive::Cylinder { radius, half_length } => revolve(
            &[
                (0.0, half_length),
                (radius, half_length),
                (radius, -half_length),
                (0.0, -half_length),
            ],
            MESH_SEGMENTS,
        ),
        Primitive::Box { half_extents: h } => {
            let vertices = (0..8)
                .map(|i| {
                    Vector3::new(
                        if i & 1 == 0 { -h.x } else { h.x },
                        if i & 2 == 0 { -h.y } else { h.y },
                        if i & 4 == 0 { -h.z } else { h.z },
                    )
                })
                .collect();
            let faces = vec![
                [0, 2, 3], [0, 3, 1], // -z
                [4, 5, 7], [4, 7, 6], // +z
                [0, 1, 5], [0, 5, 4], // -y
                [2, 6, 7], [2, 7, 3], // +y
                [0, 4, 6], [0, 6, 2], // -x
                [1, 3, 7], [1, 7, 5], // +x
            ];
            Mesh {
                name: String::new(),
                vertices,
                faces,
            }
        }
    }
}

/// World-frame meshes of every hand collision primitive, in link order.
pub fn hand_meshes(model: &HandModel, cfg: &HandConfiguration) -> Result<Vec<Mesh>> {
    let pose = HandPose::compute(model, cfg)?;
    let mut out = Vec::new();
    for (link, world) in model.links.iter().zip(&pose.links) {
        for (k, c) in link.collision.iter().enumerate() {
            let mut mesh = primitive_mesh(&c.shape).transformed(&(world * &c.pose), 1.0);
            mesh.name = format!("hand_{}_{k}", link.name);
            out.push(mesh);
        }
    }
    Ok(out)
}

/// World-frame meshes of the scene objects.
pub fn object_meshes(scene: &Scene) -> Vec<Mesh> {
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let mut mesh = primitive_mesh(&o.primitive).transformed(&o.pose, o.scale);
            mesh.name = match &o.name {
                Some(n) => format!("object_{j}_{n}"),
                None => format!("object_{j}"),
            };
            mesh
        })
        .collect()
}

/// Wavefront OBJ with one named object per mesh. Coordinates are written
/// in shortest round-trip form, so reading them back is exact.
pub fn to_obj(meshes: &[Mesh]) -> String {
    let mut out = String::new();
    let mut offset = 1;
    for m in meshes {
        let _ = writeln!(out, "o {}", m.name);
        for v in &m.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &m.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + offset, f[1] + offset, f[2] + offset);
        }
        offset += m.vertices.len();
    }
    out
}

/// Oriented point cloud of the hand surface samples and the object clouds.
pub fn to_xyz(model: &HandModel, cfg: &HandConfiguration, scene: &Scene, surface_seed: u64) -> Result<String> {
    let pose = HandPose::compute(model, cfg)?;
    let hand = HandSurface::sample(model, surface_seed).posed(&pose);
    let mut out = String::new();
    let mut line = |p: &Vector3<f64>, n: &Vector3<f64>| {
        let _ = writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
    };
    for (p, n) in hand.points.iter().zip(&hand.normals) {
        line(p, n);
    }
    for obj in &scene.objects {
        for (p, n) in obj.world_cloud() {
            line(&p, &n);
        }
    }
    Ok(out)
}
