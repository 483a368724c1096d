use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::kinematics::{HandConfiguration, HandModel, HandPose, RigidTransform};

/// A palm direction whose tabletop projection is shorter than this is
/// treated as vertical.
pub const VERTICAL_TOLERANCE: f64 = 1e-6;

/// Hand and scene rotated about the world z-axis into canonical form.
#[derive(Clone, Debug)]
pub struct Aligned {
    pub cfg: HandConfiguration,
    pub scene: Scene,
    /// Applied yaw, radians; [`rotate_about_z`] by its negative undoes it.
    pub angle: f64,
}

/// World direction of the palm's outward normal.
pub fn palm_direction(model: &HandModel, cfg: &HandConfiguration) -> Result<Vector3<f64>> {
    let pose = HandPose::compute(model, cfg)?;
    Ok(pose.links[model.palm.link].transform_vector(&model.palm.normal))
}

/// Rotates the hand base and every object pose about the world z-axis.
pub fn rotate_about_z(cfg: &HandConfiguration, scene: &Scene, angle: f64) -> (HandConfiguration, Scene) {
    let rot = RigidTransform::rotation_z(angle);
    (cfg.transformed(&rot), scene.transformed(&rot))
}

/// Yaws hand and scene so that the palm direction's tabletop projection
/// points along +x.
pub fn align_palm(model: &HandModel, cfg: &HandConfiguration, scene: &Scene) -> Result<Aligned> {
    let n = palm_direction(model, cfg)?;
    if n.x.hypot(n.y) <= VERTICAL_TOLERANCE * n.norm() {
        return Err(Error::AlignmentUndefined);
    }
    let angle = -n.y.atan2(n.x);
    if angle == 0.0 {
        return Ok(Aligned {
            cfg: cfg.clone(),
            scene: scene.clone(),
            angle,
        });
    }
    let (cfg, scene) = rotate_about_z(cfg, scene, angle);
    Ok(Aligned { cfg, scene, angle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ObjectShape, Primitive};
    use crate::kinematics::rotation_onto;
    use nalgebra::UnitQuaternion;

    fn palm_facing(model: &HandModel, dir: Vector3<f64>) -> HandConfiguration {
        let q = model.mid_joints();
        let at_origin = HandPose::compute(model, &HandConfiguration::new(RigidTransform::identity(), q.clone())).unwrap();
        let normal = at_origin.links[model.palm.link].transform_vector(&model.palm.normal);
        let orientation = rotation_onto(&normal, &dir.normalize());
        HandConfiguration::new(RigidTransform::new(Vector3::new(0.1, -0.05, 0.2), orientation), q)
    }

    fn scene() -> Scene {
        Scene::new(vec![ObjectShape::new(
            Primitive::Box {
                half_extents: Vector3::new(0.02, 0.03, 0.04),
            },
            1.0,
            RigidTransform::new(
                Vector3::new(0.03, 0.01, 0.04),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.4),
            ),
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn aligned_palm_points_along_x() {
        let model = HandModel::reference();
        let cfg = palm_facing(&model, Vector3::new(-0.3, 0.8, -0.5));
        let aligned = align_palm(&model, &cfg, &scene()).unwrap();
        let n = palm_direction(&model, &aligned.cfg).unwrap();
        assert!(n.y.abs() < 1e-12 && n.x > 0.0, "{n:?}");
        assert!((n.z - palm_direction(&model, &cfg).unwrap().z).abs() < 1e-12);
    }

    #[test]
    fn palm_already_along_x_is_left_unchanged() {
        let model = HandModel::reference();
        let cfg = palm_facing(&model, Vector3::new(1.0, 0.0, -1.0));
        let n = palm_direction(&model, &cfg).unwrap();
        let s = scene();
        let aligned = align_palm(&model, &cfg, &s).unwrap();
        if n.y == 0.0 {
            assert_eq!(aligned.angle, 0.0);
            assert_eq!(aligned.cfg, cfg);
        } else {
            assert!(aligned.angle.abs() < 1e-12);
            assert!((aligned.cfg.base.position - cfg.base.position).norm() < 1e-12);
        }
        assert_eq!(aligned.scene.len(), s.len());
    }

    #[test]
    fn vertical_palm_is_rejected() {
        let model = HandModel::reference();
        let cfg = palm_facing(&model, Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            align_palm(&model, &cfg, &scene()),
            Err(Error::AlignmentUndefined)
        ));
    }
}
