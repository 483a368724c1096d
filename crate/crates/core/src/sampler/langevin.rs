//! Model-independent Metropolis-adjusted Langevin transition.

use nalgebra::DVector;

/// Current point of a Langevin chain: energy, gradient, per-component step
/// sizes and temperature.
#[derive(Clone, Copy, Debug)]
pub struct LangevinProposal<'a> {
    pub energy: f64,
    pub gradient: &'a DVector<f64>,
    pub steps: &'a DVector<f64>,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LangevinOutcome<P> {
    Accepted {
        energy: f64,
        gradient: DVector<f64>,
        payload: P,
    },
    Rejected,
    NonFinite,
}

/// Proposes `delta = -eps g + sqrt(2 eps T) xi` and accepts with the
/// Metropolis-Hastings ratio of the asymmetric Langevin proposal.
///
/// `evaluate(delta)` returns the energy and gradient at the displaced point
/// (plus any payload) or `None` when it cannot be evaluated. The reverse
/// move is assumed to be `-delta`, which holds for additive updates and for
/// the world-frame rotation retraction.
pub fn langevin_step<P>(
    current: &LangevinProposal,
    noise: &DVector<f64>,
    uniform: f64,
    evaluate: impl FnOnce(&DVector<f64>) -> Option<(f64, DVector<f64>, P)>,
) -> LangevinOutcome<P> {
    let eps = current.steps;
    let t = current.temperature;
    let g = current.gradient;
    let delta = DVector::from_fn(g.len(), |i, _| -eps[i] * g[i] + (2.0 * eps[i] * t).sqrt() * noise[i]);
    let Some((energy, gradient, payload)) = evaluate(&delta) else {
        return LangevinOutcome::NonFinite;
    };
    if !energy.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
        return LangevinOutcome::NonFinite;
    }
    // log q(x | x') - log q(x' | x)
    let mut log_q = 0.0;
    for i in 0..g.len() {
        let forward = delta[i] + eps[i] * g[i];
        let backward = -delta[i] + eps[i] * gradient[i];
        log_q += (forward * forward - backward * backward) / (4.0 * eps[i] * t);
    }
    let log_alpha = -(energy - current.energy) / t + log_q;
    if log_alpha >= 0.0 || uniform < log_alpha.exp() {
        LangevinOutcome::Accepted {
            energy,
            gradient,
            payload,
        }
    } else {
        LangevinOutcome::Rejected
    }
}
