//! Multi-object grasp energy and its gradient in the tangent space
//! `[p, omega, q]` of a hand configuration.
//!
//! `E = sum_j E_FC,j + w_p E_p + w_sp E_sp + w_q E_q` where `E_FC,j` is the
//! force-closure error of object `j` at its assigned hand contact points,
//! `E_p` penalizes hand samples inside objects or the table, `E_sp` penalizes
//! near-collisions between non-adjacent links and `E_q` joint-limit
//! violations. All penalties are squared hinges.

mod contacts;
mod force_closure;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{primitive_distance, Scene};
use crate::kinematics::{GradientAccumulator, HandConfiguration, HandModel, HandPose, HandSurface};

pub use contacts::ContactAssignment;
pub use force_closure::{force_closure_error, force_closure_with_gradient, ForceClosureEval};

/// Term weights and force-closure settings, read from the `[energy]`
/// config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyWeights {
    pub penetration: f64,
    pub self_penetration: f64,
    pub joint_limit: f64,
    /// Pull of contact points onto the object surface inside `E_FC`, m^-2.
    pub contact_distance: f64,
    /// Hand contact points assigned to each object.
    pub contacts_per_object: usize,
    /// Clearance below which non-adjacent links are penalized, meters.
    pub self_clearance: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            penetration: 3000.0,
            self_penetration: 10.0,
            joint_limit: 100.0,
            contact_distance: 100.0,
            contacts_per_object: 3,
            self_clearance: 0.002,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("penetration", self.penetration),
            ("self_penetration", self.self_penetration),
            ("joint_limit", self.joint_limit),
            ("contact_distance", self.contact_distance),
            ("self_clearance", self.self_clearance),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("energy.{name} must be finite and >= 0, got {w}")));
            }
        }
        if self.contacts_per_object == 0 {
            return Err(Error::Config("energy.contacts_per_object must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-term energies. Penalty terms are unweighted; `total` applies the
/// weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBreakdown {
    pub force_closure: Vec<f64>,
    pub penetration: f64,
    pub self_penetration: f64,
    pub joint_limit: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn assemble(
        force_closure: Vec<f64>,
        penetration: f64,
        self_penetration: f64,
        joint_limit: f64,
        w: &EnergyWeights,
    ) -> Self {
        let total = force_closure.iter().sum::<f64>()
            + w.penetration * penetration
            + w.self_penetration * self_penetration
            + w.joint_limit * joint_limit;
        Self {
            force_closure,
            penetration,
            self_penetration,
            joint_limit,
            total,
        }
    }
}

/// Unweighted gradient of each term; `total` is the weighted sum.
#[derive(Clone, Debug)]
pub struct TermGradients {
    pub force_closure: DVector<f64>,
    pub penetration: DVector<f64>,
    pub self_penetration: DVector<f64>,
    pub joint_limit: DVector<f64>,
    pub total: DVector<f64>,
}

/// Penetration penalty of one world point against all objects and the
/// table, with its spatial gradient.
pub fn point_penetration(point: &Vector3<f64>, scene: &Scene) -> (f64, Vector3<f64>) {
    let mut e = 0.0;
    let mut g = Vector3::zeros();
    for obj in &scene.objects {
        if (point - obj.center()).norm_squared() >= obj.bounding_radius().powi(2) {
            continue;
        }
        let s = obj.evaluate(point, false);
        if s.distance < 0.0 {
            e += s.distance * s.distance;
            g += 2.0 * s.distance * s.gradient;
        }
    }
    if point.z < 0.0 {
        e += point.z * point.z;
        g.z += 2.0 * point.z;
    }
    (e, g)
}

/// `E_p` over a set of world points, in m^2.
pub fn penetration_energy(points: &[Vector3<f64>], scene: &Scene) -> f64 {
    points.iter().map(|p| point_penetration(p, scene).0).sum()
}

fn self_collision(
    model: &HandModel,
    pose: &HandPose,
    clearance: f64,
    mut acc: Option<&mut GradientAccumulator>,
) -> f64 {
    let mut energy = 0.0;
    for &(a, b) in &model.collision_pairs {
        for ca in &model.links[a].collision {
            let ta = pose.links[a] * ca.pose;
            for cb in &model.links[b].collision {
                let tb = pose.links[b] * cb.pose;
                let gap = (ta.position - tb.position).norm()
                    - ca.shape.bounding_radius()
                    - cb.shape.bounding_radius();
                if gap >= clearance {
                    continue;
                }
                let p = primitive_distance(&ca.shape, &ta, &cb.shape, &tb)
                    .expect("model validation admits only supported collision pairs");
                let violation = clearance - p.distance;
                if violation <= 0.0 {
                    continue;
                }
                energy += violation * violation;
                if let Some(acc) = acc.as_deref_mut() {
                    let g = -2.0 * violation * p.direction;
                    acc.add(a, &p.point_a, &g);
                    acc.add(b, &p.point_b, &(-g));
                }
            }
        }
    }
    energy
}

/// `E_sp`: squared shortfall of every non-adjacent primitive pair below the
/// clearance.
pub fn self_penetration_energy(
    model: &HandModel,
    cfg: &HandConfiguration,
    clearance: f64,
) -> Result<f64> {
    let pose = HandPose::compute(model, cfg)?;
    Ok(self_collision(model, &pose, clearance, None))
}

/// `E_q`: squared violation of the joint limits, rad^2.
pub fn joint_limit_energy(model: &HandModel, cfg: &HandConfiguration) -> Result<f64> {
    cfg.check(model)?;
    Ok(joint_limits(model, &cfg.q, None))
}

fn joint_limits(model: &HandModel, q: &[f64], mut grad: Option<&mut DVector<f64>>) -> f64 {
    let mut e = 0.0;
    for (j, ([lo, hi], &v)) in model.joint_limits().iter().zip(q).enumerate() {
        let excess = if v > *hi {
            v - hi
        } else if v < *lo {
            v - lo
        } else {
            continue;
        };
        e += excess * excess;
        if let Some(g) = grad.as_deref_mut() {
            g[6 + j] += 2.0 * excess;
        }
    }
    e
}

fn ensure_finite(term: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(term, format!("evaluated to {value}")))
    }
}

fn ensure_finite_gradient(term: &str, g: &DVector<f64>) -> Result<()> {
    match g.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::numerical(term, format!("gradient component {i} is {}", g[i]))),
    }
}

/// Grasp energy for one hand model and scene, with the hand surface sampled
/// once for a fixed seed.
#[derive(Clone, Debug)]
pub struct GraspEnergy<'a> {
    pub model: &'a HandModel,
    pub scene: &'a Scene,
    pub surface: HandSurface,
    /// Surface samples eligible as contact points.
    pub candidates: Vec<usize>,
    pub weights: EnergyWeights,
}

impl<'a> GraspEnergy<'a> {
    pub fn new(model: &'a HandModel, scene: &'a Scene, weights: EnergyWeights, surface_seed: u64) -> Result<Self> {
        weights.validate()?;
        let surface = HandSurface::sample(model, surface_seed);
        let candidates = surface.contact_candidates(model);
        Ok(Self {
            model,
            scene,
            surface,
            candidates,
            weights,
        })
    }

    fn check(&self, cfg: &HandConfiguration, contacts: &ContactAssignment) -> Result<()> {
        cfg.check(self.model)?;
        contacts.validate(self.scene.len(), self.surface.len())
    }

    fn contact_points(&self, pose: &HandPose, indices: &[usize]) -> Vec<Vector3<f64>> {
        indices
            .iter()
            .map(|&i| {
                let s = &self.surface.samples[i];
                pose.links[s.link].transform_point(&s.local_point)
            })
            .collect()
    }

    /// Force-closure error of every object at the current contacts.
    pub fn force_closure(&self, cfg: &HandConfiguration, contacts: &ContactAssignment) -> Result<Vec<f64>> {
        self.check(cfg, contacts)?;
        let pose = HandPose::compute_unchecked(self.model, cfg);
        Ok(self.fc_terms(&pose, contacts, None))
    }

    fn fc_terms(
        &self,
        pose: &HandPose,
        contacts: &ContactAssignment,
        mut acc: Option<&mut GradientAccumulator>,
    ) -> Vec<f64> {
        let w = self.weights.contact_distance;
        self.scene
            .objects
            .iter()
            .zip(&contacts.indices)
            .map(|(obj, idx)| {
                let pts = self.contact_points(pose, idx);
                match acc.as_deref_mut() {
                    None => force_closure_error(&pts, obj, w).value,
                    Some(acc) => {
                        let e = force_closure_with_gradient(&pts, obj, w);
                        for ((&i, x), g) in idx.iter().zip(&pts).zip(&e.gradients) {
                            acc.add(self.surface.samples[i].link, x, g);
                        }
                        e.value
                    }
                }
            })
            .collect()
    }

    fn penetration_term(&self, pose: &HandPose, mut acc: Option<&mut GradientAccumulator>) -> f64 {
        let mut e = 0.0;
        for s in &self.surface.samples {
            let x = pose.links[s.link].transform_point(&s.local_point);
            let (v, g) = point_penetration(&x, self.scene);
            if v > 0.0 {
                e += v;
                if let Some(acc) = acc.as_deref_mut() {
                    acc.add(s.link, &x, &g);
                }
            }
        }
        e
    }

    pub fn evaluate(&self, cfg: &HandConfiguration, contacts: &ContactAssignment) -> Result<EnergyBreakdown> {
        self.check(cfg, contacts)?;
        let pose = HandPose::compute_unchecked(self.model, cfg);
        let fc = self.fc_terms(&pose, contacts, None);
        let pen = self.penetration_term(&pose, None);
        let sp = self_collision(self.model, &pose, self.weights.self_clearance, None);
        let lim = joint_limits(self.model, &cfg.q, None);
        for (j, v) in fc.iter().enumerate() {
            ensure_finite(&format!("force_closure[{j}]"), *v)?;
        }
        ensure_finite("penetration", pen)?;
        ensure_finite("self_penetration", sp)?;
        ensure_finite("joint_limit", lim)?;
        Ok(EnergyBreakdown::assemble(fc, pen, sp, lim, &self.weights))
    }

    /// Energy and per-term gradients with respect to `[p, omega, q]`.
    pub fn term_gradients(
        &self,
        cfg: &HandConfiguration,
        contacts: &ContactAssignment,
    ) -> Result<(EnergyBreakdown, TermGradients)> {
        self.check(cfg, contacts)?;
        let model = self.model;
        let pose = HandPose::compute_unchecked(model, cfg);

        let mut acc = GradientAccumulator::new(model);
        let fc = self.fc_terms(&pose, contacts, Some(&mut acc));
        let g_fc = acc.finish(model, &pose);

        let mut acc = GradientAccumulator::new(model);
        let pen = self.penetration_term(&pose, Some(&mut acc));
        let g_pen = acc.finish(model, &pose);

        let mut acc = GradientAccumulator::new(model);
        let sp = self_collision(model, &pose, self.weights.self_clearance, Some(&mut acc));
        let g_sp = acc.finish(model, &pose);

        let mut g_lim = DVector::zeros(model.tangent_dim());
        let lim = joint_limits(model, &cfg.q, Some(&mut g_lim));

        for (j, v) in fc.iter().enumerate() {
            ensure_finite(&format!("force_closure[{j}]"), *v)?;
        }
        ensure_finite("penetration", pen)?;
        ensure_finite("self_penetration", sp)?;
        ensure_finite("joint_limit", lim)?;
        ensure_finite_gradient("force_closure", &g_fc)?;
        ensure_finite_gradient("penetration", &g_pen)?;
        ensure_finite_gradient("self_penetration", &g_sp)?;
        ensure_finite_gradient("joint_limit", &g_lim)?;

        let w = &self.weights;
        let total = &g_fc + w.penetration * &g_pen + w.self_penetration * &g_sp + w.joint_limit * &g_lim;
        Ok((
            EnergyBreakdown::assemble(fc, pen, sp, lim, w),
            TermGradients {
                force_closure: g_fc,
                penetration: g_pen,
                self_penetration: g_sp,
                joint_limit: g_lim,
                total,
            },
        ))
    }

    pub fn gradient(
        &self,
        cfg: &HandConfiguration,
        contacts: &ContactAssignment,
    ) -> Result<(EnergyBreakdown, DVector<f64>)> {
        self.term_gradients(cfg, contacts).map(|(e, g)| (e, g.total))
    }
}

/// One-shot energy evaluation, sampling the hand surface for `seed`.
pub fn total_energy(
    model: &HandModel,
    cfg: &HandConfiguration,
    scene: &Scene,
    contacts: &ContactAssignment,
    weights: &EnergyWeights,
    seed: u64,
) -> Result<EnergyBreakdown> {
    GraspEnergy::new(model, scene, weights.clone(), seed)?.evaluate(cfg, contacts)
}

/// One-shot energy and gradient, sampling the hand surface for `seed`.
pub fn energy_gradient(
    model: &HandModel,
    cfg: &HandConfiguration,
    scene: &Scene,
    contacts: &ContactAssignment,
    weights: &EnergyWeights,
    seed: u64,
) -> Result<(EnergyBreakdown, DVector<f64>)> {
    GraspEnergy::new(model, scene, weights.clone(), seed)?.gradient(cfg, contacts)
}
