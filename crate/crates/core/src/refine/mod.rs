//! Post-synthesis refinement and reach-trajectory planning.
//!
//! Refinement runs gradient descent on
//! `E_g = w_p E_p + s * lambda_c / (N_o |S|) * sum_j sum_{x: 0 < d(x, O_j) <= tau(t)} d(x, O_j)`
//! where `E_p` is the grasp energy's penetration term, `S` the hand surface
//! samples and `tau` shrinks linearly over the iterations. With the default
//! sign `s = +1` hand points inside the band are pulled onto the surfaces;
//! points in contact or penetrating are left to `E_p`.

mod reach;

use log::debug;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::energy::{point_penetration, ContactAssignment, EnergyBreakdown, GraspEnergy};
use crate::error::{Error, Result};
use crate::kinematics::{GradientAccumulator, HandConfiguration, HandPose};

pub use reach::{flat_hand_start, interpolate, plan_reach, ReachParams, Trajectory, FLAT_START_HEIGHT};

/// Sign of the attraction term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractionSign {
    /// Adds the in-band distances: minimizing pulls points onto surfaces.
    #[default]
    Pull,
    /// Subtracts them: minimizing pushes in-band points outward.
    Push,
}

impl AttractionSign {
    fn factor(self) -> f64 {
        match self {
            AttractionSign::Pull => 1.0,
            AttractionSign::Push => -1.0,
        }
    }
}

/// Refinement settings, read from the `[refine]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Attraction weight `lambda_c`.
    pub attraction_weight: f64,
    pub attraction_sign: AttractionSign,
    /// Attraction band at the first iteration, meters.
    pub tau_start: f64,
    /// Attraction band at the last iteration, meters.
    pub tau_end: f64,
    pub iterations: usize,
    /// Initial gradient step, halved until the objective decreases.
    pub step: f64,
    /// Number of halvings after which an iteration gives up.
    pub max_halvings: usize,
    /// Largest change of any tangent component per iteration (meters or
    /// radians); keeps steep penetration gradients from throwing the hand
    /// off the grasp.
    pub max_displacement: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            attraction_weight: 1.0,
            attraction_sign: AttractionSign::Pull,
            tau_start: 0.002,
            tau_end: 0.001,
            iterations: 300,
            step: 1e-3,
            max_halvings: 40,
            max_displacement: 2e-4,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.attraction_weight.is_finite() && self.attraction_weight >= 0.0) {
            return Err(Error::Config(format!(
                "refine.attraction_weight must be finite and >= 0, got {}",
                self.attraction_weight
            )));
        }
        if !(self.tau_end > 0.0 && self.tau_start >= self.tau_end && self.tau_start.is_finite()) {
            return Err(Error::Config(format!(
                "refine band needs tau_start >= tau_end > 0, got {} and {}",
                self.tau_start, self.tau_end
            )));
        }
        for (name, v) in [("step", self.step), ("max_displacement", self.max_displacement)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("refine.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Attraction band at iteration `t`: `tau_start` at 0, `tau_end` at the
    /// last iteration, linear in between.
    pub fn tau(&self, t: usize) -> f64 {
        if self.iterations <= 1 {
            return self.tau_start;
        }
        let s = t.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        (1.0 - s) * self.tau_start + s * self.tau_end
    }
}

/// One refinement iteration as seen by an observer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineStep {
    pub iteration: usize,
    pub tau: f64,
    /// Objective before the step.
    pub objective: f64,
    /// Accepted step length along the negative gradient; 0 when none was.
    pub step: f64,
}

/// Result of [`refine`].
#[derive(Clone, Debug)]
pub struct Refinement {
    pub cfg: HandConfiguration,
    pub before: EnergyBreakdown,
    pub after: EnergyBreakdown,
    pub trace: Vec<RefineStep>,
    /// Set when a non-finite objective or gradient stopped the descent; `cfg`
    /// is then the last finite iterate.
    pub aborted: bool,
}

/// Refinement objective and, optionally, its tangent gradient.
fn objective(
    energy: &GraspEnergy,
    cfg: &HandConfiguration,
    tau: f64,
    attraction: f64,
    with_gradient: bool,
) -> (f64, Option<DVector<f64>>) {
    let model = energy.model;
    let pose = HandPose::compute_unchecked(model, cfg);
    let w_p = energy.weights.penetration;
    let mut acc = with_gradient.then(|| GradientAccumulator::new(model));
    let mut value = 0.0;
    for s in &energy.surface.samples {
        let x = pose.links[s.link].transform_point(&s.local_point);
        let (pen, g) = point_penetration(&x, energy.scene);
        if pen > 0.0 {
            value += w_p * pen;
            if let Some(acc) = acc.as_mut() {
                acc.add(s.link, &x, &(w_p * g));
            }
        }
        if attraction == 0.0 {
            continue;
        }
        for obj in &energy.scene.objects {
            let reach = obj.bounding_radius() + tau;
            if (x - obj.center()).norm_squared() > reach * reach {
                continue;
            }
            let sd = obj.evaluate(&x, false);
            if sd.distance > 0.0 && sd.distance <= tau {
                value += attraction * sd.distance;
                if let Some(acc) = acc.as_mut() {
                    acc.add(s.link, &x, &(attraction * sd.gradient));
                }
            }
        }
    }
    (value, acc.map(|a| a.finish(model, &pose)))
}

/// `step`, shortened so that no component of `step * grad` exceeds `cap`.
fn capped_step(step: f64, cap: f64, grad: &DVector<f64>) -> f64 {
    let largest = grad.amax();
    if step * largest > cap {
        cap / largest
    } else {
        step
    }
}

/// Refines `cfg` by gradient descent with step halving; `observe` sees every
/// iteration and the iterate it produced.
pub fn refine_with(
    energy: &GraspEnergy,
    cfg: &HandConfiguration,
    contacts: &ContactAssignment,
    params: &RefineParams,
    mut observe: impl FnMut(&RefineStep, &HandConfiguration),
) -> Result<Refinement> {
    params.validate()?;
    let before = energy.evaluate(cfg, contacts)?;
    let model = energy.model;
    let samples = energy.surface.len().max(1) as f64;
    let objects = energy.scene.len();
    let attraction = if objects == 0 {
        0.0
    } else {
        params.attraction_sign.factor() * params.attraction_weight / (objects as f64 * samples)
    };

    let mut current = cfg.clone();
    let mut trace = Vec::with_capacity(params.iterations);
    let mut aborted = false;
    for t in 0..params.iterations {
        let tau = params.tau(t);
        let (value, grad) = objective(energy, &current, tau, attraction, true);
        let grad = grad.expect("gradient requested");
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            debug!("refinement aborted at iteration {t}: non-finite objective or gradient");
            aborted = true;
            break;
        }
        let mut accepted = 0.0;
        if grad.iter().any(|&v| v != 0.0) {
            let mut step = capped_step(params.step, params.max_displacement, &grad);
            for _ in 0..=params.max_halvings {
                let delta: Vec<f64> = grad.iter().map(|g| -step * g).collect();
                let candidate = current.retract(&delta).clamped(model);
                let (v, _) = objective(energy, &candidate, tau, attraction, false);
                if v.is_finite() && v < value {
                    current = candidate;
                    accepted = step;
                    break;
                }
                step *= 0.5;
            }
        }
        let record = RefineStep {
            iteration: t,
            tau,
            objective: value,
            step: accepted,
        };
        observe(&record, &current);
        trace.push(record);
    }
    let after = energy.evaluate(&current, contacts)?;
    Ok(Refinement {
        cfg: current,
        before,
        after,
        trace,
        aborted,
    })
}

/// Refines a grasp: removes penetration and pulls near-contact hand points
/// onto the object surfaces.
pub fn refine(
    energy: &GraspEnergy,
    cfg: &HandConfiguration,
    contacts: &ContactAssignment,
    params: &RefineParams,
) -> Result<Refinement> {
    refine_with(energy, cfg, contacts, params, |_, _| {})
}
