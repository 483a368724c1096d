use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hand surface sample indices in contact with each object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactAssignment {
    pub indices: Vec<Vec<usize>>,
}

impl ContactAssignment {
    pub fn new(indices: Vec<Vec<usize>>) -> Self {
        Self { indices }
    }

    /// Distinct samples drawn from `candidates`, `per_object` for each of
    /// `objects`.
    pub fn random<R: Rng + ?Sized>(
        objects: usize,
        per_object: usize,
        candidates: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let needed = objects * per_object;
        if needed > candidates.len() {
            return Err(Error::Config(format!(
                "{needed} contact points requested but the hand surface has {} candidates",
                candidates.len()
            )));
        }
        let picked: Vec<usize> = index::sample(rng, candidates.len(), needed)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        Ok(Self {
            indices: picked.chunks(per_object.max(1)).map(<[usize]>::to_vec).take(objects).collect(),
        })
    }

    pub fn num_objects(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, sample: usize) -> bool {
        self.indices.iter().any(|c| c.contains(&sample))
    }

    /// Checks coverage of every object and that indices address the surface.
    pub fn validate(&self, objects: usize, surface_len: usize) -> Result<()> {
        if self.indices.len() != objects {
            return Err(Error::Input(format!(
                "contact assignment covers {} objects, scene has {objects}",
                self.indices.len()
            )));
        }
        for (j, c) in self.indices.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Input(format!("object {j} has no contact points")));
            }
            if let Some(&i) = c.iter().find(|&&i| i >= surface_len) {
                return Err(Error::Input(format!(
                    "contact index {i} for object {j} out of range ({surface_len} samples)"
                )));
            }
        }
        Ok(())
    }
}
