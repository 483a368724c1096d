//! Annealed Metropolis-adjusted Langevin sampling of hand poses from the
//! Gibbs density `exp(-E / T)`, alternated with stochastic resampling of the
//! discrete contact assignment, over many independent chains.

mod langevin;

use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{ContactAssignment, EnergyBreakdown, EnergyWeights, GraspEnergy};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::kinematics::{rotation_onto, HandConfiguration, HandModel, HandPose, RigidTransform};
use crate::metrics::{FilterThresholds, GraspEvaluator, MetricsConfig, QualityReport};

pub use langevin::{langevin_step, LangevinOutcome, LangevinProposal};

/// Sampler settings, read from the `[sampler]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MalaParams {
    /// Langevin step of the base position, m^2 per unit energy.
    pub step_position: f64,
    /// Langevin step of the base rotation tangent.
    pub step_rotation: f64,
    /// Langevin step of the joint angles.
    pub step_joints: f64,
    pub initial_temperature: f64,
    /// Geometric decay factor of the temperature per iteration.
    pub temperature_decay: f64,
    pub temperature_floor: f64,
    pub iterations: usize,
    /// Contacts are resampled after every this many iterations.
    pub resample_period: usize,
    /// Probability that an individual contact index is redrawn.
    pub resample_probability: f64,
    pub chains: usize,
    pub seed: u64,
    /// Initial palm distance from the scene centroid, meters.
    pub initial_distance: [f64; 2],
    /// Standard deviation of the initial joint noise around mid-range, rad.
    pub initial_joint_noise: f64,
}

impl Default for MalaParams {
    fn default() -> Self {
        Self {
            step_position: 3e-6,
            step_rotation: 3e-4,
            step_joints: 3e-3,
            initial_temperature: 1e-2,
            temperature_decay: 0.998,
            temperature_floor: 1e-5,
            iterations: 2000,
            resample_period: 1,
            resample_probability: 0.3,
            chains: 64,
            seed: 0,
            initial_distance: [0.15, 0.25],
            initial_joint_noise: 0.1,
        }
    }
}

impl MalaParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("step_position", self.step_position),
            ("step_rotation", self.step_rotation),
            ("step_joints", self.step_joints),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("sampler.{name} must be > 0, got {v}")));
            }
        }
        if !(self.temperature_floor.is_finite() && self.temperature_floor > 0.0) {
            return Err(Error::Config(format!(
                "sampler.temperature_floor must be > 0, got {}",
                self.temperature_floor
            )));
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature >= self.temperature_floor) {
            return Err(Error::Config(format!(
                "sampler.initial_temperature must be finite and >= temperature_floor, got {}",
                self.initial_temperature
            )));
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay <= 1.0) {
            return Err(Error::Config(format!(
                "sampler.temperature_decay must lie in (0, 1], got {}",
                self.temperature_decay
            )));
        }
        if self.iterations == 0 || self.chains == 0 || self.resample_period == 0 {
            return Err(Error::Config(
                "sampler.iterations, chains and resample_period must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.resample_probability) {
            return Err(Error::Config(format!(
                "sampler.resample_probability must lie in [0, 1], got {}",
                self.resample_probability
            )));
        }
        let [lo, hi] = self.initial_distance;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!(
                "sampler.initial_distance must be an ordered pair of non-negative distances, got [{lo}, {hi}]"
            )));
        }
        if !(self.initial_joint_noise.is_finite() && self.initial_joint_noise >= 0.0) {
            return Err(Error::Config(format!(
                "sampler.initial_joint_noise must be >= 0, got {}",
                self.initial_joint_noise
            )));
        }
        Ok(())
    }

    /// `T(t) = max(T_floor, T_0 gamma^t)`.
    pub fn temperature(&self, iteration: usize) -> f64 {
        let decayed = self.initial_temperature * self.temperature_decay.powf(iteration as f64);
        decayed.max(self.temperature_floor)
    }

    /// Per-component Langevin step over the tangent `[p, omega, q]`.
    pub fn step_sizes(&self, dof: usize) -> DVector<f64> {
        DVector::from_fn(6 + dof, |i, _| match i {
            0..3 => self.step_position,
            3..6 => self.step_rotation,
            _ => self.step_joints,
        })
    }
}

/// State of one chain. `energy` and `gradient` are current for
/// `(cfg, contacts)`.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub cfg: HandConfiguration,
    pub contacts: ContactAssignment,
    pub energy: EnergyBreakdown,
    pub gradient: DVector<f64>,
    pub stream: u64,
}

impl ChainState {
    pub fn new(
        energy: &GraspEnergy,
        cfg: HandConfiguration,
        contacts: ContactAssignment,
        stream: u64,
    ) -> Result<Self> {
        let (e, g) = energy.gradient(&cfg, &contacts)?;
        Ok(Self {
            cfg,
            contacts,
            energy: e,
            gradient: g,
            stream,
        })
    }
}

/// Result of one transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// The proposal could not be evaluated (non-finite energy or gradient).
    NonFinite,
}

/// One MALA transition with the given standard-normal `noise` and uniform
/// variate `uniform` in `[0, 1)`. On rejection the state is unchanged.
pub fn mala_step(
    state: &mut ChainState,
    energy: &GraspEnergy,
    params: &MalaParams,
    temperature: f64,
    noise: &DVector<f64>,
    uniform: f64,
) -> StepOutcome {
    let eps = params.step_sizes(state.cfg.q.len());
    let proposal = LangevinProposal {
        energy: state.energy.total,
        gradient: &state.gradient,
        steps: &eps,
        temperature,
    };
    let result = langevin_step(&proposal, noise, uniform, |delta| {
        let cfg = state.cfg.retract(delta.as_slice());
        if !cfg.is_finite() {
            return None;
        }
        let (e, g) = energy.gradient(&cfg, &state.contacts).ok()?;
        Some((e.total, g, (cfg, e)))
    });
    match result {
        LangevinOutcome::Accepted { gradient, payload, .. } => {
            let (cfg, e) = payload;
            state.cfg = cfg;
            state.energy = e;
            state.gradient = gradient;
            StepOutcome::Accepted
        }
        LangevinOutcome::Rejected => StepOutcome::Rejected,
        LangevinOutcome::NonFinite => StepOutcome::NonFinite,
    }
}

/// Draws standard-normal noise for the chain's tangent space.
pub fn draw_noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Redraws each contact index with probability `resample_probability`
/// (uniformly among samples not already used for the same object) and
/// accepts the new assignment with the Metropolis rule at `temperature`.
/// Returns whether the assignment changed.
pub fn resample_contacts<R: Rng + ?Sized>(
    state: &mut ChainState,
    energy: &GraspEnergy,
    params: &MalaParams,
    temperature: f64,
    rng: &mut R,
) -> Result<bool> {
    let candidates = &energy.candidates;
    let n = candidates.len();
    let mut proposal = state.contacts.clone();
    let mut changed = false;
    for idx in &mut proposal.indices {
        for k in 0..idx.len() {
            if !rng.random_bool(params.resample_probability) {
                continue;
            }
            if idx.len() >= n {
                break;
            }
            let pick = loop {
                let c = candidates[rng.random_range(0..n)];
                if !idx.contains(&c) {
                    break c;
                }
            };
            idx[k] = pick;
            changed = true;
        }
    }
    if !changed {
        return Ok(false);
    }
    let uniform: f64 = rng.random();
    let fc = match energy.force_closure(&state.cfg, &proposal) {
        Ok(fc) if fc.iter().all(|v| v.is_finite()) => fc,
        _ => return Ok(false),
    };
    // only the force-closure terms depend on the assignment
    let delta = fc.iter().sum::<f64>() - state.energy.force_closure.iter().sum::<f64>();
    if !metropolis(delta, temperature, uniform) {
        return Ok(false);
    }
    let (e, g) = energy.gradient(&state.cfg, &proposal)?;
    state.contacts = proposal;
    state.energy = e;
    state.gradient = g;
    Ok(true)
}

/// Metropolis rule: energy decreases are always accepted, increases with
/// probability `exp(-delta / T)`.
pub fn metropolis(delta: f64, temperature: f64, uniform: f64) -> bool {
    delta <= 0.0 || uniform < (-delta / temperature).exp()
}

/// Randomized start: palm 15-25 cm from the scene centroid on the upper
/// side, facing it with a random roll, joints near mid-range.
pub fn initial_configuration<R: Rng + ?Sized>(
    model: &HandModel,
    scene: &Scene,
    params: &MalaParams,
    rng: &mut R,
) -> HandConfiguration {
    let target = scene.centroid();
    // uniform direction on the cap z >= MIN_ELEVATION
    let z = rng.random_range(MIN_ELEVATION..=1.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    let dir = Vector3::new(s * phi.cos(), s * phi.sin(), z);
    let [lo, hi] = params.initial_distance;
    let distance = if hi > lo { rng.random_range(lo..=hi) } else { lo };

    let q: Vec<f64> = model
        .joint_limits()
        .iter()
        .map(|&[a, b]| {
            let noise: f64 = rng.sample(StandardNormal);
            (0.5 * (a + b) + params.initial_joint_noise * noise).clamp(a, b)
        })
        .collect();

    // palm frame relative to the base at these joints
    let at_origin = HandPose::compute_unchecked(model, &HandConfiguration::new(RigidTransform::identity(), q.clone()));
    let palm = at_origin.links[model.palm.link];
    let normal = palm.transform_vector(&model.palm.normal);
    let center = palm.transform_point(&model.palm.center);

    let face = rotation_onto(&normal, &(-dir));
    let roll = UnitQuaternion::from_scaled_axis(dir * rng.random_range(0.0..std::f64::consts::TAU));
    let orientation = roll * face;
    let position = target + distance * dir - orientation * center;
    HandConfiguration::new(RigidTransform::new(position, orientation), q)
}

/// Lowest elevation (z component) of the initial approach direction.
const MIN_ELEVATION: f64 = 0.3;

/// Best state of one chain with its bookkeeping.
#[derive(Clone, Debug)]
pub struct ChainResult {
    pub chain: u64,
    pub cfg: HandConfiguration,
    pub contacts: ContactAssignment,
    pub energy: EnergyBreakdown,
    /// Iteration at which the best state was reached (0 = initial state).
    pub best_iteration: usize,
    pub stats: ChainStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub accepted: usize,
    pub rejected: usize,
    pub non_finite: usize,
    pub resamples_accepted: usize,
}

/// Runs one chain; depends only on `(params.seed, chain)`.
pub fn run_chain(
    energy: &GraspEnergy,
    params: &MalaParams,
    chain: u64,
) -> Result<ChainResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(chain);
    let cfg = initial_configuration(energy.model, energy.scene, params, &mut rng);
    let contacts = ContactAssignment::random(
        energy.scene.len(),
        energy.weights.contacts_per_object,
        &energy.candidates,
        &mut rng,
    )?;
    let mut state = ChainState::new(energy, cfg, contacts, chain)?;
    let mut best = (state.cfg.clone(), state.contacts.clone(), state.energy.clone(), 0);
    let mut stats = ChainStats::default();
    let dim = energy.model.tangent_dim();
    for t in 0..params.iterations {
        let temperature = params.temperature(t);
        let noise = draw_noise(dim, &mut rng);
        let uniform: f64 = rng.random();
        match mala_step(&mut state, energy, params, temperature, &noise, uniform) {
            StepOutcome::Accepted => stats.accepted += 1,
            StepOutcome::Rejected => stats.rejected += 1,
            StepOutcome::NonFinite => stats.non_finite += 1,
        }
        if (t + 1) % params.resample_period == 0
            && resample_contacts(&mut state, energy, params, temperature, &mut rng)?
        {
            stats.resamples_accepted += 1;
        }
        if state.energy.total < best.2.total {
            best = (state.cfg.clone(), state.contacts.clone(), state.energy.clone(), t + 1);
        }
    }
    Ok(ChainResult {
        chain,
        cfg: best.0,
        contacts: best.1,
        energy: best.2,
        best_iteration: best.3,
        stats,
    })
}

/// A chain's best state that passed the filter, with its quality report.
#[derive(Clone, Debug)]
pub struct Survivor {
    pub result: ChainResult,
    pub quality: QualityReport,
}

/// Output of [`synthesize`].
#[derive(Clone, Debug)]
pub struct Synthesis {
    /// Filtered grasps sorted by (total energy, chain id).
    pub survivors: Vec<Survivor>,
    /// Per-chain statistics, in chain order.
    pub stats: Vec<ChainStats>,
    pub chains: usize,
}

/// Everything [`synthesize`] needs besides scene and model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub energy: EnergyWeights,
    pub sampler: MalaParams,
    pub filter: FilterThresholds,
    pub metrics: MetricsConfig,
}

/// Whether a chain result passes every filter threshold.
pub fn passes_filter(
    evaluator: &GraspEvaluator,
    result: &ChainResult,
) -> Result<Option<QualityReport>> {
    let th = &evaluator.thresholds;
    // cheap energy gate before the dense measurements
    if result.energy.force_closure.iter().any(|&e| e > th.max_force_closure) {
        return Ok(None);
    }
    let ratio = evaluator.contact_ratio(&result.cfg)?;
    if ratio < th.min_contact_ratio {
        return Ok(None);
    }
    let depth = evaluator.penetration_depth(&result.cfg)?;
    if depth > th.max_penetration {
        return Ok(None);
    }
    Ok(Some(evaluator.report(&result.cfg)?))
}

/// Runs `params.chains` independent annealed chains and returns the
/// per-chain best states that pass `thresholds`.
pub fn synthesize(model: &HandModel, scene: &Scene, config: &SynthesisConfig) -> Result<Synthesis> {
    config.sampler.validate()?;
    config.filter.validate()?;
    if scene.is_empty() {
        return Err(Error::Input("synthesis needs at least one object".into()));
    }
    let params = &config.sampler;
    let energy = GraspEnergy::new(model, scene, config.energy.clone(), params.seed)?;
    let evaluator = GraspEvaluator::new(
        model,
        scene,
        &config.metrics,
        &config.filter,
        config.energy.contacts_per_object,
        params.seed,
    )?;
    let outcomes: Vec<Result<(ChainStats, Option<Survivor>)>> = (0..params.chains as u64)
        .into_par_iter()
        .map(|chain| {
            let result = run_chain(&energy, params, chain)?;
            let stats = result.stats;
            let survivor = passes_filter(&evaluator, &result)?.map(|quality| Survivor { result, quality });
            Ok((stats, survivor))
        })
        .collect();
    let mut stats = Vec::with_capacity(outcomes.len());
    let mut survivors = Vec::new();
    for outcome in outcomes {
        let (s, survivor) = outcome?;
        stats.push(s);
        survivors.extend(survivor);
    }
    survivors.sort_by(|a, b| {
        a.result
            .energy
            .total
            .total_cmp(&b.result.energy.total)
            .then(a.result.chain.cmp(&b.result.chain))
    });
    Ok(Synthesis {
        survivors,
        stats,
        chains: params.chains,
    })
}
