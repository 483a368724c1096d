use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fk::{HandConfiguration, HandPose};
use super::model::HandModel;
use crate::error::Result;

/// A material point on a link surface, in link coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub link: usize,
    pub local_point: Vector3<f64>,
    pub local_normal: Vector3<f64>,
}

/// Fixed set of surface samples for a model, drawn once per seed and carried
/// through configuration changes.
#[derive(Clone, Debug, PartialEq)]
pub struct HandSurface {
    pub samples: Vec<SurfaceSample>,
}

/// Surface samples posed in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HandSurfacePoints {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub links: Vec<usize>,
    pub local_points: Vec<Vector3<f64>>,
}

impl HandSurface {
    /// Draws `link.samples` points on each link, split across its collision
    /// primitives by area.
    pub fn sample(model: &HandModel, seed: u64) -> Self {
        Self::sample_scaled(model, seed, 1)
    }

    /// As [`HandSurface::sample`] with every per-link count multiplied by
    /// `density`.
    pub fn sample_scaled(model: &HandModel, seed: u64, density: usize) -> Self {
        let mut samples = Vec::new();
        for (li, link) in model.links.iter().enumerate() {
            let count = link.samples * density;
            if count == 0 || link.collision.is_empty() {
                continue;
            }
            // per-link stream keeps a link's samples independent of the others
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(li as u64);
            let areas: Vec<f64> = link.collision.iter().map(|c| c.shape.surface_area()).collect();
            for (c, n) in link.collision.iter().zip(apportion(count, &areas)) {
                for (p, nrm) in c.shape.sample_surface(n, &mut rng) {
                    samples.push(SurfaceSample {
                        link: li,
                        local_point: c.pose.transform_point(&p),
                        local_normal: c.pose.transform_vector(&nrm),
                    });
                }
            }
        }
        Self { samples }
    }

    /// Indices of samples eligible as contacts: every sample of a link
    /// without a declared grasping side, otherwise those whose normal points
    /// strictly to that side.
    pub fn contact_candidates(&self, model: &HandModel) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| {
                let s = &self.samples[i];
                model.links[s.link]
                    .contact_side
                    .is_none_or(|side| s.local_normal.dot(&side) > 1e-9)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn posed(&self, pose: &HandPose) -> HandSurfacePoints {
        let mut out = HandSurfacePoints {
            points: Vec::with_capacity(self.len()),
            normals: Vec::with_capacity(self.len()),
            links: Vec::with_capacity(self.len()),
            local_points: Vec::with_capacity(self.len()),
        };
        for s in &self.samples {
            let t = &pose.links[s.link];
            out.points.push(t.transform_point(&s.local_point));
            out.normals.push(t.transform_vector(&s.local_normal));
            out.links.push(s.link);
            out.local_points.push(s.local_point);
        }
        out
    }

    /// World positions only.
    pub fn world_points(&self, pose: &HandPose) -> Vec<Vector3<f64>> {
        self.samples
            .iter()
            .map(|s| pose.links[s.link].transform_point(&s.local_point))
            .collect()
    }
}

/// Largest-remainder split of `total` proportional to `weights`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Samples the model surface for `seed` and poses it at `cfg`.
pub fn sample_hand_surface(
    model: &HandModel,
    cfg: &HandConfiguration,
    seed: u64,
) -> Result<HandSurfacePoints> {
    let pose = HandPose::compute(model, cfg)?;
    Ok(HandSurface::sample(model, seed).posed(&pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::RigidTransform;
    use nalgebra::UnitQuaternion;
    use rand::Rng;

    fn cfg_from(rng: &mut ChaCha8Rng, model: &HandModel) -> HandConfiguration {
        HandConfiguration::new(
            RigidTransform::new(
                Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)),
                UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))),
            ),
            model
                .joint_limits()
                .iter()
                .map(|[lo, hi]| rng.random_range(*lo..=*hi))
                .collect(),
        )
    }

    #[test]
    fn samples_lie_on_link_primitives() {
        let m = HandModel::reference();
        let surf = HandSurface::sample(&m, 7);
        let expected: usize = m.links.iter().map(|l| l.samples).sum();
        assert_eq!(surf.len(), expected);
        for s in &surf.samples {
            let link = &m.links[s.link];
            let d = link
                .collision
                .iter()
                .map(|c| c.shape.sdf(&c.pose.inverse_transform_point(&s.local_point)).abs())
                .fold(f64::MAX, f64::min);
            assert!(d < 1e-9);
            assert!((s.local_normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_is_bit_identical_and_material() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = cfg_from(&mut rng, &m);
        let a = sample_hand_surface(&m, &cfg, 3).unwrap();
        let b = sample_hand_surface(&m, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let other = cfg_from(&mut rng, &m);
        let c = sample_hand_surface(&m, &other, 3).unwrap();
        assert_eq!(a.local_points, c.local_points);
        assert_eq!(a.links, c.links);
    }

    #[test]
    fn rotating_the_base_rotates_the_points() {
        let m = HandModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = cfg_from(&mut rng, &m);
        let omega = RigidTransform::new(
            Vector3::new(0.2, -0.1, 0.4),
            UnitQuaternion::from_scaled_axis(Vector3::new(0.5, -1.2, 2.0)),
        );
        let a = sample_hand_surface(&m, &cfg, 9).unwrap();
        let b = sample_hand_surface(&m, &cfg.transformed(&omega), 9).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert!((omega.transform_point(x) - y).norm() < 1e-9);
        }
        for (x, y) in a.normals.iter().zip(&b.normals) {
            assert!((omega.transform_vector(x) - y).norm() < 1e-9);
        }
    }

    #[test]
    fn apportion_preserves_total() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]).iter().sum::<usize>(), 10);
        assert_eq!(apportion(7, &[3.0, 1.0]), vec![5, 2]);
    }

    #[test]
    fn contact_candidates_face_the_declared_side() {
        let m = HandModel::reference();
        let surface = HandSurface::sample(&m, 3);
        let candidates = surface.contact_candidates(&m);
        assert!(!candidates.is_empty() && candidates.len() < surface.len());
        for (i, s) in surface.samples.iter().enumerate() {
            let side = m.links[s.link].contact_side.expect("reference links declare a side");
            assert_eq!(candidates.contains(&i), s.local_normal.dot(&side) > 1e-9);
        }

        let mut open = m.clone();
        for link in &mut open.links {
            link.contact_side = None;
        }
        let all = surface.contact_candidates(&open);
        assert_eq!(all, (0..surface.len()).collect::<Vec<_>>());
    }
}
