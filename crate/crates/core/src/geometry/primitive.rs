//! Analytic primitive shapes in their canonical local frame.
//!
//! Conventions: boxes are centered with half extents; cylinders and capsules
//! are aligned with local z, centered at the origin, with `half_length` the
//! half height of the cylinder (or of the capsule's core segment).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Signed distance, outward gradient and (optionally) Hessian at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample {
    pub distance: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
    /// Set when the gradient direction was undefined (point on a medial
    /// point such as a sphere center) and a fixed direction was substituted.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveRepr", into = "PrimitiveRepr")]
pub enum Primitive {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
    Cylinder { radius: f64, half_length: f64 },
    Capsule { radius: f64, half_length: f64 },
}

/// JSON form: `{"kind": "capsule", "dims": [radius, half_length]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveRepr {
    kind: String,
    dims: Vec<f64>,
}

impl TryFrom<PrimitiveRepr> for Primitive {
    type Error = String;

    fn try_from(r: PrimitiveRepr) -> Result<Self, String> {
        Primitive::from_kind_dims(&r.kind, &r.dims)
    }
}

impl Primitive {
    pub fn from_kind_dims(kind: &str, dims: &[f64]) -> Result<Self, String> {
        let r = PrimitiveRepr {
            kind: kind.to_string(),
            dims: dims.to_vec(),
        };
        let need = |n: usize| -> Result<(), String> {
            if r.dims.len() != n {
                return Err(format!("{} expects {} dims, got {}", r.kind, n, r.dims.len()));
            }
            if r.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(format!("{} dims must be positive and finite", r.kind));
            }
            Ok(())
        };
        match r.kind.as_str() {
            "sphere" => {
                need(1)?;
                Ok(Primitive::Sphere { radius: r.dims[0] })
            }
            "box" => {
                need(3)?;
                Ok(Primitive::Box {
                    half_extents: Vector3::new(r.dims[0], r.dims[1], r.dims[2]),
                })
            }
            "cylinder" => {
                need(2)?;
                Ok(Primitive::Cylinder {
                    radius: r.dims[0],
                    half_length: r.dims[1],
                })
            }
            "capsule" => {
                need(2)?;
                Ok(Primitive::Capsule {
                    radius: r.dims[0],
                    half_length: r.dims[1],
                })
            }
            other => Err(format!("unknown primitive kind {other:?}")),
        }
    }
}

impl From<Primitive> for PrimitiveRepr {
    fn from(p: Primitive) -> Self {
        let (kind, dims) = p.kind_dims();
        PrimitiveRepr {
            kind: kind.to_string(),
            dims,
        }
    }
}

impl Primitive {
    pub fn kind_dims(&self) -> (&'static str, Vec<f64>) {
        match *self {
            Primitive::Sphere { radius } => ("sphere", vec![radius]),
            Primitive::Box { half_extents: h } => ("box", vec![h.x, h.y, h.z]),
            Primitive::Cylinder {
                radius,
                half_length,
            } => ("cylinder", vec![radius, half_length]),
            Primitive::Capsule {
                radius,
                half_length,
            } => ("capsule", vec![radius, half_length]),
        }
    }
}

const FALLBACK_DIR: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);
const TINY: f64 = 1e-300;

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Hessian of `|v|` restricted to the subspace spanned by `proj`.
fn distance_hessian(proj: &Matrix3<f64>, u: &Vector3<f64>, len: f64) -> Matrix3<f64> {
    (proj - u * u.transpose()) / len
}

impl Primitive {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Primitive::Sphere { .. } => "sphere",
            Primitive::Box { .. } => "box",
            Primitive::Cylinder { .. } => "cylinder",
            Primitive::Capsule { .. } => "capsule",
        }
    }

    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Primitive::Sphere { radius } => pos(radius),
            Primitive::Box { half_extents } => half_extents.iter().all(|v| pos(*v)),
            Primitive::Cylinder {
                radius,
                half_length,
            }
            | Primitive::Capsule {
                radius,
                half_length,
            } => pos(radius) && pos(half_length),
        }
    }

    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let outside = q.sup(&Vector3::zeros()).norm();
                outside + q.max().min(0.0)
            }
            Primitive::Cylinder {
                radius,
                half_length,
            } => {
                let w1 = p.xy().norm() - radius;
                let w2 = p.z.abs() - half_length;
                let o1 = w1.max(0.0);
                let o2 = w2.max(0.0);
                (o1 * o1 + o2 * o2).sqrt() + w1.max(w2).min(0.0)
            }
            Primitive::Capsule {
                radius,
                half_length,
            } => {
                let c = Vector3::new(0.0, 0.0, p.z.clamp(-half_length, half_length));
                (p - c).norm() - radius
            }
        }
    }

    /// Distance and outward gradient. The Hessian is filled only when
    /// `with_hessian` is set (zeros otherwise).
    pub fn evaluate(&self, p: &Vector3<f64>, with_hessian: bool) -> SdfSample {
        let mut out = SdfSample {
            distance: 0.0,
            gradient: FALLBACK_DIR,
            hessian: Matrix3::zeros(),
            degenerate: false,
        };
        match *self {
            Primitive::Sphere { radius } => {
                let len = p.norm();
                out.distance = len - radius;
                if len > TINY {
                    out.gradient = p / len;
                    if with_hessian {
                        out.hessian = distance_hessian(&Matrix3::identity(), &out.gradient, len);
                    }
                } else {
                    out.degenerate = true;
                }
            }
            Primitive::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let s = Vector3::new(sign(p.x), sign(p.y), sign(p.z));
                if q.iter().any(|v| *v > 0.0) {
                    let o = q.sup(&Vector3::zeros());
                    let len = o.norm();
                    out.distance = len;
                    out.gradient = s.component_mul(&o) / len;
                    if with_hessian {
                        let proj = Matrix3::from_diagonal(&o.map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
                        out.hessian = distance_hessian(&proj, &out.gradient, len);
                    }
                } else {
                    let k = q.imax();
                    out.distance = q[k];
                    let mut g = Vector3::zeros();
                    g[k] = s[k];
                    out.gradient = g;
                }
            }
            Primitive::Cylinder {
                radius,
                half_length,
            } => {
                let rho = p.xy().norm();
                let (e_r, radial_ok) = if rho > TINY {
                    (Vector3::new(p.x / rho, p.y / rho, 0.0), true)
                } else {
                    (Vector3::new(1.0, 0.0, 0.0), false)
                };
                let e_z = Vector3::new(0.0, 0.0, sign(p.z));
                let w1 = rho - radius;
                let w2 = p.z.abs() - half_length;
                // tangential curvature term e_theta e_theta^T / rho
                let tangential = |scale: f64| -> Matrix3<f64> {
                    let pz = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
                    (pz - e_r * e_r.transpose()) * scale
                };
                if w1 > 0.0 && w2 > 0.0 {
                    let len = (w1 * w1 + w2 * w2).sqrt();
                    out.distance = len;
                    out.gradient = (e_r * w1 + e_z * w2) / len;
                    if with_hessian {
                        let planar = e_r * e_r.transpose() + e_z * e_z.transpose();
                        out.hessian = tangential(w1 / (len * rho))
                            + distance_hessian(&planar, &out.gradient, len);
                    }
                } else if w1 > 0.0 {
                    out.distance = w1;
                    out.gradient = e_r;
                    if with_hessian {
                        out.hessian = tangential(1.0 / rho);
                    }
                } else if w2 > 0.0 || w2 > w1 {
                    out.distance = w2;
                    out.gradient = e_z;
                } else {
                    out.distance = w1;
                    out.gradient = e_r;
                    out.degenerate = !radial_ok;
                    if with_hessian && radial_ok {
                        out.hessian = tangential(1.0 / rho);
                    }
                }
            }
            Primitive::Capsule {
                radius,
                half_length,
            } => {
                let cz = p.z.clamp(-half_length, half_length);
                let v = Vector3::new(p.x, p.y, p.z - cz);
                let len = v.norm();
                out.distance = len - radius;
                if len > TINY {
                    out.gradient = v / len;
                    if with_hessian {
                        let proj = if p.z.abs() < half_length {
                            Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0))
                        } else {
                            Matrix3::identity()
                        };
                        out.hessian = distance_hessian(&proj, &out.gradient, len);
                    }
                } else {
                    out.gradient = Vector3::new(1.0, 0.0, 0.0);
                    out.degenerate = true;
                }
            }
        }
        out
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => 4.0 * PI * radius * radius,
            Primitive::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Primitive::Cylinder {
                radius,
                half_length,
            } => 2.0 * PI * radius * (2.0 * half_length) + 2.0 * PI * radius * radius,
            Primitive::Capsule {
                radius,
                half_length,
            } => 2.0 * PI * radius * (2.0 * half_length) + 4.0 * PI * radius * radius,
        }
    }

    /// Radius of the smallest origin-centered ball containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { half_extents } => half_extents.norm(),
            Primitive::Cylinder {
                radius,
                half_length,
            } => (radius * radius + half_length * half_length).sqrt(),
            Primitive::Capsule {
                radius,
                half_length,
            } => radius + half_length,
        }
    }

    /// Support function: `max_{x in shape} x . dir` for a unit direction.
    pub fn support(&self, dir: &Vector3<f64>) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius * dir.norm(),
            Primitive::Box { half_extents: h } => {
                h.x * dir.x.abs() + h.y * dir.y.abs() + h.z * dir.z.abs()
            }
            Primitive::Cylinder {
                radius,
                half_length,
            } => radius * dir.xy().norm() + half_length * dir.z.abs(),
            Primitive::Capsule {
                radius,
                half_length,
            } => radius * dir.norm() + half_length * dir.z.abs(),
        }
    }

    /// Draws `n` surface points with outward normals, area weighted and
    /// stratified along the cumulative-area coordinate.
    pub fn sample_surface<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        (0..n)
            .map(|k| {
                let u = (k as f64 + rng.random::<f64>()) / n as f64;
                let v = rng.random::<f64>();
                self.surface_point(u.min(1.0 - 1e-16), v)
            })
            .collect()
    }

    /// Maps `(u, v)` in the unit square to a surface point. `u` is the
    /// normalized cumulative area coordinate.
    pub fn surface_point(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let phi = 2.0 * PI * v;
        let around = |r: f64, z: f64| {
            let n = Vector3::new(phi.cos(), phi.sin(), 0.0);
            (Vector3::new(r * n.x, r * n.y, z), n)
        };
        match *self {
            Primitive::Sphere { radius } => {
                let z = 2.0 * u - 1.0;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let n = Vector3::new(s * phi.cos(), s * phi.sin(), z);
                (n * radius, n)
            }
            Primitive::Box { half_extents: h } => {
                let areas = [h.y * h.z, h.y * h.z, h.x * h.z, h.x * h.z, h.x * h.y, h.x * h.y];
                let total: f64 = areas.iter().sum();
                let mut acc = 0.0;
                for (face, a) in areas.iter().enumerate() {
                    let share = a / total;
                    if u < acc + share || face == 5 {
                        let t = ((u - acc) / share).clamp(0.0, 1.0);
                        let axis = face / 2;
                        let side = if face % 2 == 0 { 1.0 } else { -1.0 };
                        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut p = Vector3::zeros();
                        p[axis] = side * h[axis];
                        p[a1] = (2.0 * t - 1.0) * h[a1];
                        p[a2] = (2.0 * v - 1.0) * h[a2];
                        let mut n = Vector3::zeros();
                        n[axis] = side;
                        return (p, n);
                    }
                    acc += share;
                }
                unreachable!()
            }
            Primitive::Cylinder {
                radius,
                half_length,
            } => {
                let side = 2.0 * half_length;
                let cap = radius / 2.0;
                let total = side + 2.0 * cap;
                let a = u * total;
                if a < side {
                    around(radius, -half_length + a)
                } else {
                    let b = a - side;
                    let (t, sz) = if b < cap { (b / cap, 1.0) } else { ((b - cap) / cap, -1.0) };
                    let r = radius * t.clamp(0.0, 1.0).sqrt();
                    let (mut p, _) = around(r, 0.0);
                    p.z = sz * half_length;
                    (p, Vector3::new(0.0, 0.0, sz))
                }
            }
            Primitive::Capsule {
                radius,
                half_length,
            } => {
                let side = 2.0 * half_length;
                let cap = radius;
                let total = side + 2.0 * cap;
                let a = u * total;
                if a < side {
                    around(radius, -half_length + a)
                } else {
                    let b = a - side;
                    let (t, sz) = if b < cap { (b / cap, 1.0) } else { ((b - cap) / cap, -1.0) };
                    // hemisphere: height above the equator is uniform in area
                    let h = t.clamp(0.0, 1.0);
                    let s = (1.0 - h * h).max(0.0).sqrt();
                    let n = Vector3::new(s * phi.cos(), s * phi.sin(), sz * h);
                    (n * radius + Vector3::new(0.0, 0.0, sz * half_length), n)
                }
            }
        }
    }
}
