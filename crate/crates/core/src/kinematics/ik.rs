use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};

use super::fk::{keypoints_at, point_jacobian_into, HandConfiguration, HandPose};
use super::model::HandModel;
use super::transform::RigidTransform;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct IkParams {
    pub max_iterations: usize,
    pub min_step: f64,
    pub initial_damping: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            min_step: 1e-8,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IkSolution {
    pub cfg: HandConfiguration,
    /// Root-mean-square keypoint distance, meters.
    pub residual: f64,
    pub iterations: usize,
}

fn rms(model: &HandModel, cfg: &HandConfiguration, targets: &[Vector3<f64>]) -> f64 {
    let pose = HandPose::compute_unchecked(model, cfg);
    let kp = keypoints_at(model, &pose);
    let sq: f64 = kp.iter().zip(targets).map(|(a, b)| (a - b).norm_squared()).sum();
    (sq / targets.len() as f64).sqrt()
}

/// Keypoints rigidly attached to the base (no revolute joint on their chain).
fn rigid_keypoints(model: &HandModel) -> Vec<usize> {
    (0..model.keypoints.len())
        .filter(|&k| {
            let mut cur = Some(model.keypoints[k].link);
            while let Some(l) = cur {
                if model.links[l].joint_index.is_some() {
                    return false;
                }
                cur = model.links[l].parent;
            }
            true
        })
        .collect()
}

/// Best rigid transform mapping `from` onto `to` (Kabsch).
fn kabsch(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Option<RigidTransform> {
    let n = from.len() as f64;
    let ca = from.iter().sum::<Vector3<f64>>() / n;
    let cb = to.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in from.iter().zip(to) {
        h += (a - ca) * (b - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    let rot = UnitQuaternion::from_matrix(&r);
    Some(RigidTransform::new(cb - rot * ca, rot))
}

/// Recovers a configuration whose keypoints match `targets`.
///
/// Damped least squares over `[p, omega, q]` with joints clamped after
/// every step. Unreachable targets yield the best clamped configuration
/// found and a positive residual.
pub fn solve_ik(
    model: &HandModel,
    targets: &[Vector3<f64>],
    initial: &HandConfiguration,
) -> Result<IkSolution> {
    solve_ik_with(model, targets, initial, &IkParams::default())
}

pub fn solve_ik_with(
    model: &HandModel,
    targets: &[Vector3<f64>],
    initial: &HandConfiguration,
    params: &IkParams,
) -> Result<IkSolution> {
    initial.check(model)?;
    if targets.len() != model.keypoints.len() {
        return Err(Error::Input(format!(
            "expected {} keypoint targets, got {}",
            model.keypoints.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.iter().all(|v| v.is_finite())) {
        return Err(Error::Input("non-finite keypoint target".into()));
    }
    let k = targets.len();
    let n = model.tangent_dim();
    let mut cfg = initial.clone().clamped(model);
    let mut cost = rms(model, &cfg, targets);

    let rigid = rigid_keypoints(model);
    if rigid.len() >= 3 {
        let pose = HandPose::compute_unchecked(model, &cfg);
        let kp = keypoints_at(model, &pose);
        let from: Vec<_> = rigid.iter().map(|&i| kp[i]).collect();
        let to: Vec<_> = rigid.iter().map(|&i| targets[i]).collect();
        if let Some(t) = kabsch(&from, &to) {
            let candidate = cfg.transformed(&t);
            let c = rms(model, &candidate, targets);
            if c < cost {
                cfg = candidate;
                cost = c;
            }
        }
    }

    let mut damping = params.initial_damping;
    let mut jac = DMatrix::zeros(3 * k, n);
    let mut iterations = 0;
    while iterations < params.max_iterations && cost > 0.0 {
        iterations += 1;
        let pose = HandPose::compute_unchecked(model, &cfg);
        let kp = keypoints_at(model, &pose);
        let mut resid = DVector::zeros(3 * k);
        jac.fill(0.0);
        for (i, spec) in model.keypoints.iter().enumerate() {
            point_jacobian_into(model, &pose, spec.link, &kp[i], &mut jac, 3 * i);
            resid.fixed_rows_mut::<3>(3 * i).copy_from(&(kp[i] - targets[i]));
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &resid;
        let mut improved = None;
        while damping < 1e12 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += damping * (jtj[(d, d)] + 1e-9);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                damping *= 4.0;
                continue;
            };
            let candidate = cfg.retract(step.as_slice()).clamped(model);
            let c = rms(model, &candidate, targets);
            if c < cost {
                improved = Some((candidate, c, step.norm()));
                damping = (damping / 3.0).max(1e-12);
                break;
            }
            if step.norm() < params.min_step {
                break;
            }
            damping *= 4.0;
        }
        match improved {
            Some((candidate, c, step_norm)) => {
                cfg = candidate;
                cost = c;
                if step_norm < params.min_step {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(IkSolution {
        cfg,
        residual: cost,
        iterations,
    })
}
