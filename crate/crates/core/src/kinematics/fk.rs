use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::model::HandModel;
use super::transform::RigidTransform;
use crate::error::{Error, Result};

/// Hand pose `H = (p, R, q)`: floating base plus joint angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandConfiguration {
    pub base: RigidTransform,
    pub q: Vec<f64>,
}

impl HandConfiguration {
    pub fn new(base: RigidTransform, q: Vec<f64>) -> Self {
        Self { base, q }
    }

    pub fn check(&self, model: &HandModel) -> Result<()> {
        if self.q.len() != model.dof() {
            return Err(Error::Config(format!(
                "configuration has {} joint angles, model {} expects {}",
                self.q.len(),
                model.name,
                model.dof()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Input("non-finite hand configuration".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.q.iter().all(|v| v.is_finite())
    }

    pub fn is_clamped(&self, model: &HandModel) -> bool {
        self.q
            .iter()
            .zip(model.joint_limits())
            .all(|(q, [lo, hi])| lo <= *q && *q <= hi)
    }

    pub fn clamp(&mut self, model: &HandModel) {
        for (q, [lo, hi]) in self.q.iter_mut().zip(model.joint_limits()) {
            *q = q.clamp(lo, hi);
        }
    }

    pub fn clamped(mut self, model: &HandModel) -> Self {
        self.clamp(model);
        self
    }

    /// Moves along a tangent vector `[dp, omega, dq]`; the rotation update is
    /// the world-frame retraction `exp([omega]x) * R`.
    pub fn retract(&self, delta: &[f64]) -> Self {
        let dp = Vector3::new(delta[0], delta[1], delta[2]);
        let omega = Vector3::new(delta[3], delta[4], delta[5]);
        Self {
            base: self.base.retract(&dp, &omega),
            q: self.q.iter().zip(&delta[6..]).map(|(q, d)| q + d).collect(),
        }
    }

    /// Applies a world transform to the base.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            base: *t * self.base,
            q: self.q.clone(),
        }
    }
}

/// World poses of every link plus joint axes for sensitivity propagation.
#[derive(Clone, Debug)]
pub struct HandPose {
    pub links: Vec<RigidTransform>,
    pub base_position: Vector3<f64>,
}

impl HandPose {
    pub fn compute(model: &HandModel, cfg: &HandConfiguration) -> Result<Self> {
        cfg.check(model)?;
        Ok(Self::compute_unchecked(model, cfg))
    }

    pub(crate) fn compute_unchecked(model: &HandModel, cfg: &HandConfiguration) -> Self {
        let mut links: Vec<RigidTransform> = Vec::with_capacity(model.links.len());
        for (i, link) in model.links.iter().enumerate() {
            let parent = match link.parent {
                Some(p) => links[p],
                None => cfg.base,
            };
            let local = link.origin * RigidTransform::from_rotation(model.joint_rotation(i, &cfg.q));
            links.push(parent * local);
        }
        Self {
            links,
            base_position: cfg.base.position,
        }
    }

    /// World axis of a revolute link's joint (axis through the link origin).
    pub fn joint_axis(&self, model: &HandModel, link: usize) -> Vector3<f64> {
        match &model.links[link].joint {
            super::model::JointKind::Revolute { axis, .. } => self.links[link].orientation * axis.into_inner(),
            super::model::JointKind::Fixed => Vector3::zeros(),
        }
    }
}

/// One world pose per link.
pub fn forward_kinematics(model: &HandModel, cfg: &HandConfiguration) -> Result<Vec<RigidTransform>> {
    Ok(HandPose::compute(model, cfg)?.links)
}

/// World positions of the model's keypoints.
pub fn keypoints(model: &HandModel, cfg: &HandConfiguration) -> Result<Vec<Vector3<f64>>> {
    let pose = HandPose::compute(model, cfg)?;
    Ok(keypoints_at(model, &pose))
}

pub(crate) fn keypoints_at(model: &HandModel, pose: &HandPose) -> Vec<Vector3<f64>> {
    model
        .keypoints
        .iter()
        .map(|k| pose.links[k.link].transform_point(&k.offset))
        .collect()
}

/// Accumulates `dE/dx` contributions of material points on links and maps
/// them to the tangent gradient `[dE/dp, dE/domega, dE/dq]`.
///
/// A joint's column of the point Jacobian is `a_j x (x - o_j)`, so its
/// gradient entry is `a_j . (sum x x g - o_j x sum g)` over its subtree;
/// the sums are carried per link and folded into parents.
#[derive(Clone, Debug)]
pub struct GradientAccumulator {
    force: Vec<Vector3<f64>>,
    moment: Vec<Vector3<f64>>,
}

impl GradientAccumulator {
    pub fn new(model: &HandModel) -> Self {
        Self {
            force: vec![Vector3::zeros(); model.links.len()],
            moment: vec![Vector3::zeros(); model.links.len()],
        }
    }

    #[inline]
    pub fn add(&mut self, link: usize, point: &Vector3<f64>, grad: &Vector3<f64>) {
        self.force[link] += grad;
        self.moment[link] += point.cross(grad);
    }

    pub fn finish(mut self, model: &HandModel, pose: &HandPose) -> DVector<f64> {
        for i in (1..model.links.len()).rev() {
            if let Some(p) = model.links[i].parent {
                let (f, m) = (self.force[i], self.moment[i]);
                self.force[p] += f;
                self.moment[p] += m;
            }
        }
        let mut g = DVector::zeros(model.tangent_dim());
        let (f, m) = (self.force[0], self.moment[0]);
        g.fixed_rows_mut::<3>(0).copy_from(&f);
        g.fixed_rows_mut::<3>(3).copy_from(&(m - pose.base_position.cross(&f)));
        for (j, &l) in model.joint_links.iter().enumerate() {
            let axis = pose.joint_axis(model, l);
            let origin = pose.links[l].position;
            g[6 + j] = axis.dot(&(self.moment[l] - origin.cross(&self.force[l])));
        }
        g
    }
}

/// Jacobian of a material point on `link` with respect to `[p, omega, q]`.
pub fn point_jacobian(
    model: &HandModel,
    pose: &HandPose,
    link: usize,
    point: &Vector3<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(3, model.tangent_dim());
    point_jacobian_into(model, pose, link, point, &mut jac, 0);
    jac
}

pub(crate) fn point_jacobian_into(
    model: &HandModel,
    pose: &HandPose,
    link: usize,
    point: &Vector3<f64>,
    jac: &mut DMatrix<f64>,
    row: usize,
) {
    let rel = point - pose.base_position;
    for k in 0..3 {
        jac[(row + k, k)] = 1.0;
    }
    // omega x rel
    let cols = [
        Vector3::x().cross(&rel),
        Vector3::y().cross(&rel),
        Vector3::z().cross(&rel),
    ];
    for (c, v) in cols.iter().enumerate() {
        for k in 0..3 {
            jac[(row + k, 3 + c)] = v[k];
        }
    }
    let mut cur = Some(link);
    while let Some(l) = cur {
        if let Some(j) = model.links[l].joint_index {
            let col = pose.joint_axis(model, l).cross(&(point - pose.links[l].position));
            for k in 0..3 {
                jac[(row + k, 6 + j)] = col[k];
            }
        }
        cur = model.links[l].parent;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cfg(model: &HandModel, rng: &mut ChaCha8Rng) -> HandConfiguration {
        let base = RigidTransform::new(
            Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))),
        );
        let q = model
            .joint_limits()
            .iter()
            .map(|[lo, hi]| rng.random_range(*lo..=*hi))
            .collect();
        HandConfiguration::new(base, q)
    }

    /// Chain of `n` revolute links with random origins and axes.
    fn random_chain(n: usize, rng: &mut ChaCha8Rng) -> HandModel {
        let mut links = vec![r#"{"name":"l0","parent":null,"joint":{"kind":"fixed"},
            "origin":{"position":[0.1,0.0,0.2],"quaternion":[0.9,0.1,0.3,0.2]}}"#
            .to_string()];
        for i in 1..n {
            let axis = Vector3::<f64>::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let q = UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let c = q.quaternion();
            let p = Vector3::<f64>::from_fn(|_, _| rng.random_range(-0.1..0.1));
            links.push(format!(
                r#"{{"name":"l{i}","parent":"l{}","joint":{{"kind":"revolute","axis":[{},{},{}],"limits":[-3,3]}},
                   "origin":{{"position":[{},{},{}],"quaternion":[{},{},{},{}]}}}}"#,
                i - 1, axis.x, axis.y, axis.z, p.x, p.y, p.z, c.w, c.i, c.j, c.k
            ));
        }
        HandModel::from_json(&format!(
            r#"{{"name":"chain","palm":{{"link":"l0","normal":[0,1,0],"center":[0,0,0]}},
                "links":[{}],"keypoints":[{{"link":"l{}","offset":[0.01,0.02,0.03]}}]}}"#,
            links.join(","),
            n - 1
        ))
        .unwrap()
    }

    #[test]
    fn zero_joints_compose_fixed_origins() {
        let m = HandModel::reference();
        let cfg = HandConfiguration::new(RigidTransform::identity(), vec![0.0; m.dof()]);
        let poses = forward_kinematics(&m, &cfg).unwrap();
        for (i, link) in m.links.iter().enumerate() {
            let mut expected = link.origin;
            let mut cur = link.parent;
            while let Some(p) = cur {
                expected = m.links[p].origin * expected;
                cur = m.links[p].parent;
            }
            assert!((poses[i].to_homogeneous() - expected.to_homogeneous()).amax() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = HandModel::from_json(
            r#"{"name":"t","palm":{"link":"a","normal":[0,1,0],"center":[0,0,0]},
                "links":[{"name":"a","parent":null,"joint":{"kind":"fixed"}},
                         {"name":"b","parent":"a","joint":{"kind":"revolute","axis":[0,0,1],"limits":[-4,4]}}],
                "keypoints":[{"link":"b","offset":[1,0,0]}]}"#,
        )
        .unwrap();
        let cfg = HandConfiguration::new(RigidTransform::identity(), vec![std::f64::consts::FRAC_PI_2]);
        let kp = keypoints(&m, &cfg).unwrap();
        assert!((kp[0] - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chain_matches_homogeneous_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let m = random_chain(10, &mut rng);
            let cfg = random_cfg(&m, &mut rng);
            let poses = forward_kinematics(&m, &cfg).unwrap();
            let mut acc: Matrix4<f64> = cfg.base.to_homogeneous();
            for (i, link) in m.links.iter().enumerate() {
                acc *= link.origin.to_homogeneous();
                if let Some(j) = link.joint_index {
                    if let super::super::model::JointKind::Revolute { axis, .. } = &link.joint {
                        acc *= nalgebra::Rotation3::from_axis_angle(axis, cfg.q[j]).to_homogeneous();
                    }
                }
                assert!((poses[i].to_homogeneous() - acc).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn keypoints_match_per_point_oracle() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = random_cfg(&m, &mut rng);
        let poses = forward_kinematics(&m, &cfg).unwrap();
        let kp = keypoints(&m, &cfg).unwrap();
        assert_eq!(kp.len(), 31);
        for (k, spec) in m.keypoints.iter().enumerate() {
            let h = poses[spec.link].to_homogeneous() * spec.offset.push(1.0);
            assert!((kp[k] - h.xyz()).norm() < 1e-12);
        }
    }

    #[test]
    fn global_transform_is_equivariant() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let cfg = random_cfg(&m, &mut rng);
            let omega = RigidTransform::new(
                Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0))),
            );
            let a = forward_kinematics(&m, &cfg).unwrap();
            let b = forward_kinematics(&m, &cfg.transformed(&omega)).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                assert!(((omega * *pa).to_homogeneous() - pb.to_homogeneous()).amax() < 1e-9);
            }
            let ka = keypoints(&m, &cfg).unwrap();
            let kb = keypoints(&m, &cfg.transformed(&omega)).unwrap();
            for (x, y) in ka.iter().zip(&kb) {
                assert!((omega.transform_point(x) - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_configuration_error() {
        let m = HandModel::reference();
        let cfg = HandConfiguration::new(RigidTransform::identity(), vec![0.0; 3]);
        assert!(matches!(forward_kinematics(&m, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = random_cfg(&m, &mut rng);
        let pose = HandPose::compute(&m, &cfg).unwrap();
        let spec = &m.keypoints[30];
        let x = pose.links[spec.link].transform_point(&spec.offset);
        let jac = point_jacobian(&m, &pose, spec.link, &x);
        let h = 1e-7;
        for c in 0..m.tangent_dim() {
            let mut d = vec![0.0; m.tangent_dim()];
            d[c] = h;
            let xp = keypoints(&m, &cfg.retract(&d)).unwrap()[30];
            d[c] = -h;
            let xm = keypoints(&m, &cfg.retract(&d)).unwrap()[30];
            let fd = (xp - xm) / (2.0 * h);
            assert!((fd - jac.column(c)).norm() < 1e-7, "column {c}");
        }
    }

    #[test]
    fn accumulator_equals_jacobian_transpose() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = random_cfg(&m, &mut rng);
        let pose = HandPose::compute(&m, &cfg).unwrap();
        let mut acc = GradientAccumulator::new(&m);
        let mut expected = DVector::zeros(m.tangent_dim());
        for spec in &m.keypoints {
            let x = pose.links[spec.link].transform_point(&spec.offset);
            let g = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            acc.add(spec.link, &x, &g);
            expected += point_jacobian(&m, &pose, spec.link, &x).transpose() * g;
        }
        let got = acc.finish(&m, &pose);
        assert!((got - expected).amax() < 1e-12);
    }
}
