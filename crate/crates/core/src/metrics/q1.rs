//! Ferrari-Canny Q1: radius of the largest origin-centered ball inside the
//! convex hull of the contact wrenches.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::hull::convex_hull;
use crate::error::{Error, Result};

/// A point on an object surface with the inward unit surface normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

/// Pyramidal friction cone and torque normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionModel {
    pub mu: f64,
    pub cone_edges: usize,
    /// Length that divides torques so that force and torque share units, m.
    pub torque_scale: f64,
}

impl FrictionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Config(format!("friction mu must be > 0, got {}", self.mu)));
        }
        if self.cone_edges < 3 {
            return Err(Error::Config(format!(
                "friction cone needs >= 3 edges, got {}",
                self.cone_edges
            )));
        }
        if !(self.torque_scale.is_finite() && self.torque_scale > 0.0) {
            return Err(Error::Config(format!(
                "torque scale must be > 0, got {}",
                self.torque_scale
            )));
        }
        Ok(())
    }
}

/// Hull points closer than this to a facet count as on it.
const HULL_TOLERANCE: f64 = 1e-10;

fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}

/// Six-dimensional wrenches `(f, (r x f) / torque_scale)` of every friction
/// cone edge. Each edge force has unit normal component:
/// `f = n + mu (cos a t1 + sin a t2)`.
pub fn contact_wrenches(contacts: &[Contact], friction: &FrictionModel, center: &Vector3<f64>) -> Vec<DVector<f64>> {
    let m = friction.cone_edges;
    let mut out = Vec::with_capacity(contacts.len() * m);
    for c in contacts {
        let n = c.normal.normalize();
        let (t1, t2) = tangent_basis(&n);
        let r = c.point - center;
        for k in 0..m {
            let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let f = n + friction.mu * (a.cos() * t1 + a.sin() * t2);
            let tau = r.cross(&f) / friction.torque_scale;
            out.push(DVector::from_row_slice(&[f.x, f.y, f.z, tau.x, tau.y, tau.z]));
        }
    }
    out
}

/// Distance from the origin to the wrench-hull boundary when the origin is
/// strictly inside, else 0. Degenerate (flat) wrench sets give 0.
pub fn q1_metric(contacts: &[Contact], friction: &FrictionModel, center: &Vector3<f64>) -> f64 {
    let wrenches = contact_wrenches(contacts, friction, center);
    q1_from_wrenches(&wrenches)
}

pub fn q1_from_wrenches(wrenches: &[DVector<f64>]) -> f64 {
    match convex_hull(wrenches, HULL_TOLERANCE) {
        Ok(facets) => {
            let min = facets.iter().map(|f| f.offset).fold(f64::INFINITY, f64::min);
            if min > HULL_TOLERANCE {
                min
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}
