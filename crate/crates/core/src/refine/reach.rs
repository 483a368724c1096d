use log::warn;
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::capped_step;
use crate::energy::GraspEnergy;
use crate::error::{Error, Result};
use crate::geometry::{table_sdf, Scene};
use crate::kinematics::{rotation_onto, GradientAccumulator, HandConfiguration, HandModel, HandPose, RigidTransform};

/// Height of the flat-hand start's palm center above the table, meters.
pub const FLAT_START_HEIGHT: f64 = 0.30;

/// Reach-planning settings, read from the `[reach]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachParams {
    /// Number of waypoints including both endpoints.
    pub waypoints: usize,
    /// Weight `mu` of the squared second differences.
    pub smoothness: f64,
    pub iterations: usize,
    /// Initial gradient step, halved until the objective decreases.
    pub step: f64,
    pub max_halvings: usize,
    /// Largest change of any waypoint tangent component per iteration.
    pub max_displacement: f64,
    /// Duration of the trajectory, seconds.
    pub duration: f64,
    /// Residual penetration above this depth sets the warning flag, meters.
    pub report_threshold: f64,
    /// Hand samples closer than this to an object are penalized, meters.
    /// The margin keeps objects from slipping between the surface samples.
    pub clearance: f64,
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            waypoints: 32,
            smoothness: 10.0,
            iterations: 300,
            step: 1e-3,
            max_halvings: 40,
            max_displacement: 2e-3,
            duration: 2.0,
            report_threshold: 0.001,
            clearance: 0.001,
        }
    }
}

impl ReachParams {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints < 3 {
            return Err(Error::Config(format!("reach.waypoints must be >= 3, got {}", self.waypoints)));
        }
        let positive = [
            ("step", self.step),
            ("max_displacement", self.max_displacement),
            ("duration", self.duration),
            ("report_threshold", self.report_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("reach.{name} must be positive, got {v}")));
            }
        }
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return Err(Error::Config(format!(
                "reach.clearance must be finite and >= 0, got {}",
                self.clearance
            )));
        }
        if !(self.smoothness.is_finite() && self.smoothness >= 0.0) {
            return Err(Error::Config(format!(
                "reach.smoothness must be finite and >= 0, got {}",
                self.smoothness
            )));
        }
        Ok(())
    }
}

/// Timed waypoints from a start configuration to a pre-grasp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<HandConfiguration>,
    /// Uniform timestamps, seconds, starting at 0.
    pub timestamps: Vec<f64>,
    /// Deepest hand-sample penetration over all waypoints, meters.
    pub max_penetration: f64,
    /// Residual penetration exceeds the report threshold.
    pub warning: bool,
}

/// Start pose for reaching: joints at mid-range, palm facing down with its
/// center 30 cm above the table center (the scene centroid's footprint).
pub fn flat_hand_start(model: &HandModel, scene: &Scene) -> HandConfiguration {
    let q = model.mid_joints();
    let at_origin = HandPose::compute_unchecked(model, &HandConfiguration::new(RigidTransform::identity(), q.clone()));
    let palm = at_origin.links[model.palm.link];
    let normal = palm.transform_vector(&model.palm.normal);
    let center = palm.transform_point(&model.palm.center);
    let orientation = rotation_onto(&normal, &Vector3::new(0.0, 0.0, -1.0));
    let c = scene.centroid();
    let target = Vector3::new(c.x, c.y, FLAT_START_HEIGHT);
    HandConfiguration::new(RigidTransform::new(target - orientation * center, orientation), q)
}

/// Linear interpolation of position and joints, geodesic interpolation of
/// the orientation.
pub fn interpolate(start: &HandConfiguration, goal: &HandConfiguration, s: f64) -> HandConfiguration {
    let p = start.base.position + s * (goal.base.position - start.base.position);
    let relative = start.base.orientation.inverse() * goal.base.orientation;
    let orientation = start.base.orientation * nalgebra::UnitQuaternion::from_scaled_axis(s * relative.scaled_axis());
    let q = start.q.iter().zip(&goal.q).map(|(a, b)| a + s * (b - a)).collect();
    HandConfiguration::new(RigidTransform::new(p, orientation), q)
}

/// Deepest penetration of any hand sample into an object or the table.
fn sample_depth(energy: &GraspEnergy, cfg: &HandConfiguration) -> f64 {
    let pose = HandPose::compute_unchecked(energy.model, cfg);
    let mut depth: f64 = 0.0;
    for s in &energy.surface.samples {
        let x = pose.links[s.link].transform_point(&s.local_point);
        depth = depth.max(-table_sdf(&x));
        for obj in &energy.scene.objects {
            if (x - obj.center()).norm_squared() < obj.bounding_radius().powi(2) {
                depth = depth.max(-obj.sdf(&x));
            }
        }
    }
    depth
}

/// Weighted squared shortfall of every hand sample against the object
/// clearance, plus squared table penetration, and optionally its gradient.
fn collision_cost(
    energy: &GraspEnergy,
    cfg: &HandConfiguration,
    clearance: f64,
    with_gradient: bool,
) -> (f64, Option<DVector<f64>>) {
    let model = energy.model;
    let pose = HandPose::compute_unchecked(model, cfg);
    let w_p = energy.weights.penetration;
    let mut acc = with_gradient.then(|| GradientAccumulator::new(model));
    let mut value = 0.0;
    for s in &energy.surface.samples {
        let x = pose.links[s.link].transform_point(&s.local_point);
        let mut g = Vector3::zeros();
        for obj in &energy.scene.objects {
            let reach = obj.bounding_radius() + clearance;
            if (x - obj.center()).norm_squared() >= reach * reach {
                continue;
            }
            let sd = obj.evaluate(&x, false);
            let shortfall = clearance - sd.distance;
            if shortfall > 0.0 {
                value += w_p * shortfall * shortfall;
                g -= 2.0 * w_p * shortfall * sd.gradient;
            }
        }
        if x.z < 0.0 {
            value += w_p * x.z * x.z;
            g.z += 2.0 * w_p * x.z;
        }
        if let Some(acc) = acc.as_mut() {
            if g != Vector3::zeros() {
                acc.add(s.link, &x, &g);
            }
        }
    }
    (value, acc.map(|a| a.finish(model, &pose)))
}

struct Path<'e, 'a> {
    energy: &'e GraspEnergy<'a>,
    base: Vec<HandConfiguration>,
    dim: usize,
    smoothness: f64,
    clearance: f64,
}

impl Path<'_, '_> {
    fn waypoint(&self, offsets: &DVector<f64>, t: usize) -> HandConfiguration {
        let k = t - 1;
        self.base[t]
            .retract(offsets.rows(k * self.dim, self.dim).as_slice())
            .clamped(self.energy.model)
    }

    fn interior(&self) -> usize {
        self.base.len() - 2
    }

    /// Second differences of the offsets at every interior waypoint (the
    /// endpoint offsets are zero).
    fn second_differences(&self, offsets: &DVector<f64>) -> Vec<DVector<f64>> {
        let n = self.interior();
        let at = |k: isize| -> DVector<f64> {
            if k < 0 || k as usize >= n {
                DVector::zeros(self.dim)
            } else {
                offsets.rows(k as usize * self.dim, self.dim).into_owned()
            }
        };
        (0..n as isize).map(|k| at(k + 1) - 2.0 * at(k) + at(k - 1)).collect()
    }

    fn value(&self, offsets: &DVector<f64>) -> f64 {
        let pen: f64 = (1..=self.interior())
            .map(|t| collision_cost(self.energy, &self.waypoint(offsets, t), self.clearance, false).0)
            .sum();
        let smooth: f64 = self.second_differences(offsets).iter().map(|d| d.norm_squared()).sum();
        pen + self.smoothness * smooth
    }

    fn value_and_gradient(&self, offsets: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.interior();
        let mut grad = DVector::zeros(n * self.dim);
        let mut value = 0.0;
        for k in 0..n {
            let (v, g) = collision_cost(self.energy, &self.waypoint(offsets, k + 1), self.clearance, true);
            value += v;
            grad.rows_mut(k * self.dim, self.dim).copy_from(&g.expect("gradient requested"));
        }
        let diffs = self.second_differences(offsets);
        value += self.smoothness * diffs.iter().map(|d| d.norm_squared()).sum::<f64>();
        for k in 0..n {
            let mut g = -2.0 * &diffs[k];
            if k > 0 {
                g += &diffs[k - 1];
            }
            if k + 1 < n {
                g += &diffs[k + 1];
            }
            let mut rows = grad.rows_mut(k * self.dim, self.dim);
            rows += 2.0 * self.smoothness * g;
        }
        (value, grad)
    }
}

/// Plans a reach from `start` to `goal`: the interpolated path's interior
/// waypoints are optimized against object-clearance shortfall and table
/// penetration plus `mu` times the squared second differences; both
/// endpoints are returned unchanged.
pub fn plan_reach(
    energy: &GraspEnergy,
    start: &HandConfiguration,
    goal: &HandConfiguration,
    params: &ReachParams,
) -> Result<Trajectory> {
    params.validate()?;
    start.check(energy.model)?;
    goal.check(energy.model)?;
    let n = params.waypoints;
    let timestamps = (0..n).map(|k| params.duration * k as f64 / (n - 1) as f64).collect();

    let waypoints = if start == goal {
        vec![start.clone(); n]
    } else {
        let mut base: Vec<HandConfiguration> = (0..n)
            .map(|k| interpolate(start, goal, k as f64 / (n - 1) as f64))
            .collect();
        base[0] = start.clone();
        base[n - 1] = goal.clone();
        let path = Path {
            energy,
            dim: energy.model.tangent_dim(),
            smoothness: params.smoothness,
            clearance: params.clearance,
            base,
        };
        let mut offsets = DVector::zeros(path.interior() * path.dim);
        for _ in 0..params.iterations {
            let (value, grad) = path.value_and_gradient(&offsets);
            if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                warn!("reach planning stopped on a non-finite objective");
                break;
            }
            if grad.iter().all(|&v| v == 0.0) {
                break;
            }
            let mut step = capped_step(params.step, params.max_displacement, &grad);
            let mut improved = false;
            for _ in 0..=params.max_halvings {
                let candidate = &offsets - step * &grad;
                let v = path.value(&candidate);
                if v.is_finite() && v < value {
                    offsets = candidate;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let mut waypoints = vec![start.clone()];
        waypoints.extend((1..=path.interior()).map(|t| path.waypoint(&offsets, t)));
        waypoints.push(goal.clone());
        waypoints
    };

    let max_penetration = waypoints
        .iter()
        .map(|w| sample_depth(energy, w))
        .fold(0.0, f64::max);
    let warning = max_penetration > params.report_threshold;
    if warning {
        warn!(
            "reach trajectory keeps {:.2} mm of penetration",
            1000.0 * max_penetration
        );
    }
    Ok(Trajectory {
        waypoints,
        timestamps,
        max_penetration,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyWeights;
    use crate::geometry::{ObjectShape, Primitive};

    #[test]
    fn collision_cost_gradient_matches_central_differences() {
        let model = HandModel::reference();
        let scene = Scene::new(vec![ObjectShape::new(
            Primitive::Sphere { radius: 0.03 },
            1.0,
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.03)),
        )
        .unwrap()])
        .unwrap();
        let energy = GraspEnergy::new(&model, &scene, EnergyWeights::default(), 0).unwrap();
        let down = Vector3::new(0.0, 0.0, -1.0);
        let mut cfg = flat_hand_start(&model, &scene);
        // lower the palm until it nearly touches the sphere top
        cfg.base.position.z -= FLAT_START_HEIGHT - 0.065;
        assert!(palm_normal(&model, &cfg).dot(&down) > 0.99);
        let (value, grad) = collision_cost(&energy, &cfg, 0.002, true);
        let grad = grad.unwrap();
        assert!(value > 0.0);
        let h = 1e-7;
        let mut compared = 0;
        for k in 0..grad.len() {
            if grad[k].abs() < 1e-6 {
                continue;
            }
            let mut delta = vec![0.0; grad.len()];
            delta[k] = h;
            let up = collision_cost(&energy, &cfg.retract(&delta), 0.002, false).0;
            delta[k] = -h;
            let down = collision_cost(&energy, &cfg.retract(&delta), 0.002, false).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-4 * grad[k].abs() + 1e-6, "component {k}: {fd} vs {}", grad[k]);
            compared += 1;
        }
        assert!(compared >= 6);
    }

    fn palm_normal(model: &HandModel, cfg: &HandConfiguration) -> Vector3<f64> {
        let pose = HandPose::compute(model, cfg).unwrap();
        pose.links[model.palm.link].transform_vector(&model.palm.normal)
    }
}
