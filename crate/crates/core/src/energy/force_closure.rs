use nalgebra::Vector3;

use crate::geometry::ObjectShape;

/// Force-closure error of one object and its derivative per contact point.
#[derive(Clone, Debug)]
pub struct ForceClosureEval {
    pub value: f64,
    /// `dE/dx_i` for each contact point, in contact order.
    pub gradients: Vec<Vector3<f64>>,
    /// A contact sat on a point where the surface normal is undefined and a
    /// fixed fallback direction was used.
    pub degenerate: bool,
}

/// `E_FC = |G n|^2 + contact_weight * sum_i d(x_i)^2`.
///
/// `n_i` is the inward object normal at the surface point nearest to
/// `x_i`, and `G n` stacks the net force `sum n_i` with the net torque
/// `sum (x_i - c) x n_i` about the object center `c`.
pub fn force_closure_error(
    points: &[Vector3<f64>],
    shape: &ObjectShape,
    contact_weight: f64,
) -> ForceClosureEval {
    evaluate(points, shape, contact_weight, false)
}

pub fn force_closure_with_gradient(
    points: &[Vector3<f64>],
    shape: &ObjectShape,
    contact_weight: f64,
) -> ForceClosureEval {
    evaluate(points, shape, contact_weight, true)
}

fn evaluate(
    points: &[Vector3<f64>],
    shape: &ObjectShape,
    contact_weight: f64,
    with_gradient: bool,
) -> ForceClosureEval {
    let center = shape.center();
    let samples: Vec<_> = points.iter().map(|x| shape.evaluate(x, with_gradient)).collect();
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    let mut distance_sq = 0.0;
    let mut degenerate = false;
    for (x, s) in points.iter().zip(&samples) {
        let n = -s.gradient;
        force += n;
        torque += (x - center).cross(&n);
        distance_sq += s.distance * s.distance;
        degenerate |= s.degenerate;
    }
    let value = force.norm_squared() + torque.norm_squared() + contact_weight * distance_sq;
    let gradients = if with_gradient {
        points
            .iter()
            .zip(&samples)
            .map(|(x, s)| {
                let n = -s.gradient;
                let r = x - center;
                // n_i depends on x_i through the SDF Hessian: dn/dx = -H
                -2.0 * (s.hessian * force)
                    + 2.0 * (n.cross(&torque) - s.hessian * torque.cross(&r))
                    + 2.0 * contact_weight * s.distance * s.gradient
            })
            .collect()
    } else {
        Vec::new()
    };
    ForceClosureEval {
        value,
        gradients,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;
    use crate::kinematics::RigidTransform;
    use nalgebra::{DMatrix, DVector, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(r: f64) -> ObjectShape {
        ObjectShape::new(
            Primitive::Sphere { radius: r },
            1.0,
            RigidTransform::from_translation(Vector3::new(0.1, 0.2, 0.3)),
        )
        .unwrap()
    }

    #[test]
    fn antipodal_sphere_contacts_are_balanced() {
        let s = sphere(0.05);
        let c = s.center();
        let pts = [c + Vector3::new(0.05, 0.0, 0.0), c - Vector3::new(0.05, 0.0, 0.0)];
        let e = force_closure_with_gradient(&pts, &s, 100.0);
        assert!(e.value < 1e-28);
        assert!(e.gradients.iter().all(|g| g.norm() < 1e-12));
    }

    #[test]
    fn single_contact_is_unit_force_plus_torque() {
        let shape = ObjectShape::new(
            Primitive::Box {
                half_extents: Vector3::new(0.05, 0.03, 0.02),
            },
            1.0,
            RigidTransform::identity(),
        )
        .unwrap();
        let x = Vector3::new(0.05, 0.01, -0.015);
        let n = Vector3::new(-1.0, 0.0, 0.0);
        let e = force_closure_error(&[x], &shape, 100.0);
        assert!((e.value - (1.0 + x.cross(&n).norm_squared())).abs() < 1e-15);
    }

    /// Fourth-order central-difference gradient of the object SDF.
    fn stencil_gradient(shape: &ObjectShape, x: &Vector3<f64>, h: f64) -> Option<Vector3<f64>> {
        let g = Vector3::from_fn(|k, _| {
            let mut e = Vector3::zeros();
            e[k] = h;
            (8.0 * (shape.sdf(&(x + e)) - shape.sdf(&(x - e))) - (shape.sdf(&(x + 2.0 * e)) - shape.sdf(&(x - 2.0 * e))))
                / (12.0 * h)
        });
        (g.norm() > 0.5).then_some(g)
    }

    /// Oracle: build the 6 x 3n grasp map and the stacked normal vector.
    fn grasp_map_oracle(points: &[Vector3<f64>], shape: &ObjectShape, w: f64) -> Option<f64> {
        let n = points.len();
        let mut g = DMatrix::zeros(6, 3 * n);
        let mut normals = DVector::zeros(3 * n);
        let mut dist = 0.0;
        for (i, x) in points.iter().enumerate() {
            let r = x - shape.center();
            let skew = r.cross_matrix();
            g.view_mut((0, 3 * i), (3, 3)).fill_with_identity();
            g.view_mut((3, 3 * i), (3, 3)).copy_from(&skew);
            let grad = stencil_gradient(shape, x, 1e-5)?;
            if (grad - stencil_gradient(shape, x, 2e-5)?).norm() > 1e-9 {
                // too close to a seam of the distance field for the stencil
                return None;
            }
            let grad = grad.normalize();
            normals.rows_mut(3 * i, 3).copy_from(&(-grad));
            dist += shape.sdf(x).powi(2);
        }
        Some((g * normals).norm_squared() + w * dist)
    }

    #[test]
    fn matches_explicit_grasp_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prims = [
            Primitive::Sphere { radius: 0.04 },
            Primitive::Box {
                half_extents: Vector3::new(0.03, 0.05, 0.02),
            },
            Primitive::Cylinder {
                radius: 0.03,
                half_length: 0.05,
            },
            Primitive::Capsule {
                radius: 0.02,
                half_length: 0.04,
            },
        ];
        for prim in prims {
            let shape = ObjectShape::new(
                prim,
                1.1,
                RigidTransform::new(
                    Vector3::new(0.1, -0.1, 0.2),
                    UnitQuaternion::from_scaled_axis(Vector3::new(0.4, 0.9, -0.3)),
                ),
            )
            .unwrap();
            let mut checked = 0;
            while checked < 20 {
                let pts: Vec<_> = (0..4)
                    .map(|_| shape.center() + Vector3::from_fn(|_, _| rng.random_range(-0.09..0.09)))
                    .collect();
                let Some(oracle) = grasp_map_oracle(&pts, &shape, 100.0) else {
                    continue;
                };
                let e = force_closure_error(&pts, &shape, 100.0);
                assert!((e.value - oracle).abs() < 1e-10, "{prim:?}: {} vs {oracle}", e.value);
                checked += 1;
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = ObjectShape::new(
            Primitive::Capsule {
                radius: 0.02,
                half_length: 0.04,
            },
            1.0,
            RigidTransform::new(
                Vector3::new(0.0, 0.0, 0.1),
                UnitQuaternion::from_scaled_axis(Vector3::new(0.2, 0.3, 0.1)),
            ),
        )
        .unwrap();
        let pts: Vec<_> = (0..3)
            .map(|_| shape.center() + Vector3::from_fn(|_, _| rng.random_range(-0.06..0.06)))
            .collect();
        let e = force_closure_with_gradient(&pts, &shape, 100.0);
        let h = 1e-7;
        for i in 0..pts.len() {
            for k in 0..3 {
                let mut p = pts.clone();
                p[i][k] += h;
                let up = force_closure_error(&p, &shape, 100.0).value;
                p[i][k] -= 2.0 * h;
                let down = force_closure_error(&p, &shape, 100.0).value;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - e.gradients[i][k]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn center_contact_is_flagged() {
        let s = sphere(0.05);
        let e = force_closure_error(&[s.center()], &s, 1.0);
        assert!(e.degenerate);
        assert!(e.value.is_finite());
    }
}
