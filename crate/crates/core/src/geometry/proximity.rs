//! Signed separation between pairs of posed primitives.
//!
//! Spheres and capsules are handled as swept spheres around a point or
//! segment core. A swept sphere against any other primitive reduces to a
//! one-dimensional minimization of the other shape's signed distance along
//! the core, which is convex because every primitive is convex.

use nalgebra::Vector3;

use super::primitive::Primitive;
use crate::kinematics::RigidTransform;

/// Closest-approach witness for a pair of shapes `a` and `b`.
///
/// `distance` is signed (negative when the shapes overlap). A first-order
/// change of the distance under rigid motions of the two shapes is
/// `direction . (v_a(point_a) - v_b(point_b))`, where `v_s(x)` is the
/// velocity of the material point of shape `s` located at `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proximity {
    pub distance: f64,
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Segment core `(start, end, radius)` of a swept-sphere primitive.
fn segment_core(p: &Primitive, pose: &RigidTransform) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
    match *p {
        Primitive::Sphere { radius } => Some((pose.position, pose.position, radius)),
        Primitive::Capsule { radius, half_length } => Some((
            pose.transform_point(&Vector3::new(0.0, 0.0, -half_length)),
            pose.transform_point(&Vector3::new(0.0, 0.0, half_length)),
            radius,
        )),
        _ => None,
    }
}

/// Whether [`primitive_distance`] handles this pair.
pub fn pair_supported(a: &Primitive, b: &Primitive) -> bool {
    let core = |p: &Primitive| matches!(p, Primitive::Sphere { .. } | Primitive::Capsule { .. });
    core(a) || core(b)
}

/// Closest points between two segments, as parameters in `[0, 1]`.
pub fn closest_segment_parameters(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> (f64, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    const EPS: f64 = 1e-18;
    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > EPS * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let axis = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let c = v.cross(&axis);
    if c.norm() > 0.0 {
        c.normalize()
    } else {
        Vector3::x()
    }
}

fn segment_segment(
    (p0, p1, ra): (Vector3<f64>, Vector3<f64>, f64),
    (q0, q1, rb): (Vector3<f64>, Vector3<f64>, f64),
) -> Proximity {
    let (s, t) = closest_segment_parameters(&p0, &p1, &q0, &q1);
    let a = p0 + s * (p1 - p0);
    let b = q0 + t * (q1 - q0);
    let diff = a - b;
    let len = diff.norm();
    let direction = if len > 1e-12 {
        diff / len
    } else {
        // crossing cores: any direction normal to both segments
        let n = (p1 - p0).cross(&(q1 - q0));
        if n.norm() > 1e-12 {
            n.normalize()
        } else {
            any_perpendicular(&(p1 - p0 + q1 - q0))
        }
    };
    Proximity {
        distance: len - ra - rb,
        point_a: a,
        point_b: b,
        direction,
    }
}

/// Minimizes a convex function on `[0, 1]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    [0.0, mid, 1.0]
        .into_iter()
        .map(|t| (t, f(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
        .unwrap_or(mid)
}

/// Swept sphere `a` against arbitrary convex primitive `b`.
fn segment_convex(
    (p0, p1, ra): (Vector3<f64>, Vector3<f64>, f64),
    b: &Primitive,
    tb: &RigidTransform,
) -> Proximity {
    let local = |t: f64| tb.inverse_transform_point(&(p0 + t * (p1 - p0)));
    let t = golden_min(|t| b.sdf(&local(t)));
    let x = p0 + t * (p1 - p0);
    let s = b.evaluate(&tb.inverse_transform_point(&x), false);
    Proximity {
        distance: s.distance - ra,
        point_a: x,
        point_b: x,
        direction: tb.transform_vector(&s.gradient),
    }
}

/// Signed separation of posed primitives, or `None` for pairs where
/// neither shape is a sphere or capsule.
pub fn primitive_distance(
    a: &Primitive,
    ta: &RigidTransform,
    b: &Primitive,
    tb: &RigidTransform,
) -> Option<Proximity> {
    match (segment_core(a, ta), segment_core(b, tb)) {
        (Some(ca), Some(cb)) => Some(segment_segment(ca, cb)),
        (Some(ca), None) => Some(segment_convex(ca, b, tb)),
        (None, Some(cb)) => {
            let p = segment_convex(cb, a, ta);
            Some(Proximity {
                distance: p.distance,
                point_a: p.point_b,
                point_b: p.point_a,
                direction: -p.direction,
            })
        }
        (None, None) => None,
    }
}
