//! Grasp-quality measurement: Ferrari-Canny Q1, maximal penetration depth,
//! contact ratio, joint-angle diversity and a static feasibility predicate.

mod depth;
mod hull;
mod q1;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObjectShape, Scene};
use crate::kinematics::{HandConfiguration, HandModel, HandPose, HandSurface};

pub use depth::max_depth;
pub use hull::{convex_hull, HullError, HullFacet};
pub use q1::{contact_wrenches, q1_from_wrenches, q1_metric, Contact, FrictionModel};

#[cfg(test)]
pub(crate) use q1::oracle::q1_enumerated;

/// Acceptance thresholds applied to synthesized grasps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    /// Largest admissible force-closure error of any object.
    pub max_force_closure: f64,
    /// Largest admissible penetration depth, meters.
    pub max_penetration: f64,
    /// Smallest admissible contact ratio.
    pub min_contact_ratio: f64,
    /// A hand point within this distance of a surface is in contact, meters.
    pub contact_distance: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            max_force_closure: 0.05,
            max_penetration: 0.002,
            min_contact_ratio: 1.0,
            contact_distance: 0.003,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("max_force_closure", self.max_force_closure),
            ("max_penetration", self.max_penetration),
            ("contact_distance", self.contact_distance),
        ];
        for (name, v) in finite {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("filter.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.min_contact_ratio) {
            return Err(Error::Config(format!(
                "filter.min_contact_ratio must lie in [0, 1], got {}",
                self.min_contact_ratio
            )));
        }
        Ok(())
    }
}

/// Friction settings; the torque scale defaults to each object's bounding
/// radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionConfig {
    pub mu: f64,
    pub cone_edges: usize,
    pub torque_scale: Option<f64>,
}

impl Default for FrictionConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            cone_edges: 8,
            torque_scale: None,
        }
    }
}

impl FrictionConfig {
    pub fn model_for(&self, shape: &ObjectShape) -> FrictionModel {
        FrictionModel {
            mu: self.mu,
            cone_edges: self.cone_edges,
            torque_scale: self.torque_scale.unwrap_or_else(|| shape.bounding_radius()),
        }
    }
}

/// Sampling resolution of the metrics, read from the `[metrics]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub friction: FrictionConfig,
    /// Multiplier on each link's surface sample count for penetration depth.
    pub hand_density: usize,
    /// Surface samples per object for object-object penetration.
    pub object_samples: usize,
    /// Contacts per object kept for Q1 (farthest-point subset).
    pub max_q1_contacts: usize,
    pub sample_seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            friction: FrictionConfig::default(),
            hand_density: 64,
            object_samples: 8192,
            max_q1_contacts: 16,
            sample_seed: 0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        for shape_scale in [0.05, 1.0] {
            let probe = FrictionModel {
                mu: self.friction.mu,
                cone_edges: self.friction.cone_edges,
                torque_scale: self.friction.torque_scale.unwrap_or(shape_scale),
            };
            probe.validate()?;
        }
        if self.hand_density == 0 || self.object_samples == 0 || self.max_q1_contacts == 0 {
            return Err(Error::Config(
                "metrics.hand_density, object_samples and max_q1_contacts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub q1_per_object: Vec<f64>,
    pub q1_min: f64,
    pub penetration_mm: f64,
    pub contact_ratio: f64,
    pub feasible: bool,
}

/// Quality measurement for one scene, with dense samples drawn once.
#[derive(Clone, Debug)]
pub struct GraspEvaluator<'a> {
    pub model: &'a HandModel,
    pub scene: &'a Scene,
    /// Hand samples used for contacts (the energy's surface).
    pub surface: HandSurface,
    /// Dense hand samples used for penetration depth.
    pub dense_surface: HandSurface,
    /// Dense world-frame surface samples per object.
    pub object_points: Vec<Vec<Vector3<f64>>>,
    pub config: MetricsConfig,
    pub thresholds: FilterThresholds,
    pub contacts_per_object: usize,
}

impl<'a> GraspEvaluator<'a> {
    pub fn new(
        model: &'a HandModel,
        scene: &'a Scene,
        config: &MetricsConfig,
        thresholds: &FilterThresholds,
        contacts_per_object: usize,
        surface_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        thresholds.validate()?;
        Ok(Self {
            model,
            scene,
            surface: HandSurface::sample(model, surface_seed),
            dense_surface: HandSurface::sample_scaled(model, config.sample_seed, config.hand_density),
            object_points: object_surface_points(scene, config.object_samples, config.sample_seed),
            config: config.clone(),
            thresholds: thresholds.clone(),
            contacts_per_object,
        })
    }

    /// Maximal intersection depth between hand, objects and table, meters.
    pub fn penetration_depth(&self, cfg: &HandConfiguration) -> Result<f64> {
        let pose = HandPose::compute(self.model, cfg)?;
        Ok(max_depth(
            self.model,
            &pose,
            &self.dense_surface,
            self.scene,
            &self.object_points,
        ))
    }

    /// Objects in contact with the hand, per object.
    pub fn contacts(&self, cfg: &HandConfiguration) -> Result<Vec<Vec<Contact>>> {
        let pose = HandPose::compute(self.model, cfg)?;
        let points = self.surface.world_points(&pose);
        Ok(self
            .scene
            .objects
            .iter()
            .map(|obj| object_contacts(&points, obj, self.thresholds.contact_distance))
            .collect())
    }

    pub fn contact_ratio(&self, cfg: &HandConfiguration) -> Result<f64> {
        let contacts = self.contacts(cfg)?;
        Ok(ratio(&contacts, self.contacts_per_object))
    }

    pub fn q1_per_object(&self, contacts: &[Vec<Contact>]) -> Vec<f64> {
        self.scene
            .objects
            .iter()
            .zip(contacts)
            .map(|(obj, c)| {
                let chosen = farthest_point_subset(c, self.config.max_q1_contacts);
                q1_metric(&chosen, &self.config.friction.model_for(obj), &obj.center())
            })
            .collect()
    }

    pub fn report(&self, cfg: &HandConfiguration) -> Result<QualityReport> {
        let contacts = self.contacts(cfg)?;
        let q1_per_object = self.q1_per_object(&contacts);
        let q1_min = if q1_per_object.is_empty() {
            0.0
        } else {
            q1_per_object.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let depth = self.penetration_depth(cfg)?;
        let contact_ratio = ratio(&contacts, self.contacts_per_object);
        let feasible = q1_min > 0.0 && depth <= self.thresholds.max_penetration && contact_ratio == 1.0;
        Ok(QualityReport {
            q1_per_object,
            q1_min,
            penetration_mm: 1000.0 * depth,
            contact_ratio,
            feasible,
        })
    }
}

fn ratio(contacts: &[Vec<Contact>], per_object: usize) -> f64 {
    if contacts.is_empty() {
        return 0.0;
    }
    let touched = contacts.iter().filter(|c| c.len() >= per_object).count();
    touched as f64 / contacts.len() as f64
}

/// Dense world-frame surface samples of every object.
pub fn object_surface_points(scene: &Scene, per_object: usize, seed: u64) -> Vec<Vec<Vector3<f64>>> {
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(j, obj)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            obj.primitive
                .sample_surface(per_object, &mut rng)
                .into_iter()
                .map(|(p, _)| obj.pose.transform_point(&(obj.scale * p)))
                .collect()
        })
        .collect()
}

/// Hand points within `tolerance` of the object surface, projected onto it
/// with the inward normal.
pub fn object_contacts(points: &[Vector3<f64>], obj: &ObjectShape, tolerance: f64) -> Vec<Contact> {
    let reach = obj.bounding_radius() + tolerance;
    points
        .iter()
        .filter(|x| (*x - obj.center()).norm_squared() <= reach * reach)
        .filter_map(|x| {
            let s = obj.evaluate(x, false);
            (s.distance.abs() <= tolerance).then(|| Contact {
                point: x - s.distance * s.gradient,
                normal: -s.gradient,
            })
        })
        .collect()
}

/// Deterministic farthest-point subset of at most `k` contacts.
fn farthest_point_subset(contacts: &[Contact], k: usize) -> Vec<Contact> {
    if contacts.len() <= k {
        return contacts.to_vec();
    }
    let mut chosen = vec![0usize];
    let mut dist: Vec<f64> = contacts
        .iter()
        .map(|c| (c.point - contacts[0].point).norm_squared())
        .collect();
    while chosen.len() < k {
        let next = (0..contacts.len())
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("non-empty");
        chosen.push(next);
        for (i, c) in contacts.iter().enumerate() {
            dist[i] = dist[i].min((c.point - contacts[next].point).norm_squared());
        }
    }
    chosen.iter().map(|&i| contacts[i]).collect()
}

/// Maximal penetration depth in millimeters with default sampling.
pub fn penetration_depth(model: &HandModel, cfg: &HandConfiguration, scene: &Scene) -> Result<f64> {
    let evaluator = GraspEvaluator::new(
        model,
        scene,
        &MetricsConfig::default(),
        &FilterThresholds::default(),
        1,
        0,
    )?;
    Ok(1000.0 * evaluator.penetration_depth(cfg)?)
}

/// Fraction of objects touched by at least `per_object` of the hand
/// samples drawn for `surface_seed`.
pub fn contact_ratio(
    model: &HandModel,
    cfg: &HandConfiguration,
    scene: &Scene,
    contact_distance: f64,
    per_object: usize,
    surface_seed: u64,
) -> Result<f64> {
    if !(contact_distance > 0.0) {
        return Err(Error::Input(format!("contact distance must be > 0, got {contact_distance}")));
    }
    let pose = HandPose::compute(model, cfg)?;
    let points = HandSurface::sample(model, surface_seed).world_points(&pose);
    let contacts: Vec<_> = scene
        .objects
        .iter()
        .map(|obj| object_contacts(&points, obj, contact_distance))
        .collect();
    Ok(ratio(&contacts, per_object))
}

/// Mean over joints of the population variance of joint angles, deg^2.
pub fn diversity(grasps: &[HandConfiguration]) -> Result<f64> {
    if grasps.len() < 2 {
        return Err(Error::Input(format!(
            "diversity needs at least 2 grasps, got {}",
            grasps.len()
        )));
    }
    let dof = grasps[0].q.len();
    if grasps.iter().any(|g| g.q.len() != dof) {
        return Err(Error::Input("grasps come from different hand models".into()));
    }
    if dof == 0 {
        return Ok(0.0);
    }
    let n = grasps.len() as f64;
    let mut total = 0.0;
    for j in 0..dof {
        let deg: Vec<f64> = grasps.iter().map(|g| g.q[j].to_degrees()).collect();
        let mean = deg.iter().sum::<f64>() / n;
        total += deg.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    }
    Ok(total / dof as f64)
}

/// Full quality report with the feasibility predicate
/// `q1_min > 0 && penetration <= max && contact ratio == 1`.
pub fn static_feasibility(
    model: &HandModel,
    cfg: &HandConfiguration,
    scene: &Scene,
    config: &MetricsConfig,
    thresholds: &FilterThresholds,
    contacts_per_object: usize,
    surface_seed: u64,
) -> Result<QualityReport> {
    GraspEvaluator::new(model, scene, config, thresholds, contacts_per_object, surface_seed)?.report(cfg)
}

#[cfg(test)]
mod tests;
