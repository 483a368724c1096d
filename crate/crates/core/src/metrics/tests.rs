use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{resting_pose, Primitive};
use crate::kinematics::RigidTransform;

fn open_hand(model: &HandModel, base: RigidTransform) -> HandConfiguration {
    let q = model
        .joint_limits()
        .iter()
        .map(|&[lo, hi]| 0.0f64.clamp(lo, hi))
        .collect();
    HandConfiguration::new(base, q)
}

fn sphere_at(r: f64, c: Vector3<f64>) -> ObjectShape {
    ObjectShape::new(Primitive::Sphere { radius: r }, 1.0, RigidTransform::from_translation(c)).unwrap()
}

fn boxed(h: Vector3<f64>, c: Vector3<f64>) -> ObjectShape {
    ObjectShape::new(Primitive::Box { half_extents: h }, 1.0, RigidTransform::from_translation(c)).unwrap()
}

#[test]
fn separated_scene_has_no_penetration() {
    let model = HandModel::reference();
    let scene = Scene::new(vec![
        sphere_at(0.03, Vector3::new(0.0, 0.0, 0.03)),
        sphere_at(0.03, Vector3::new(0.1, 0.0, 0.03)),
    ])
    .unwrap();
    let cfg = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3)));
    assert_eq!(penetration_depth(&model, &cfg, &scene).unwrap(), 0.0);
}

#[test]
fn sphere_sunk_into_table_reports_exact_depth() {
    let model = HandModel::reference();
    let scene = Scene::new_unchecked(vec![sphere_at(0.03, Vector3::new(0.0, 0.0, 0.027))]);
    let cfg = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3)));
    let d = penetration_depth(&model, &cfg, &scene).unwrap();
    assert!((d - 3.0).abs() < 1e-9, "{d}");
}

fn random_interpenetration(rng: &mut ChaCha8Rng, model: &HandModel) -> (Scene, HandConfiguration) {
    let a = ObjectShape::new(
        Primitive::Box {
            half_extents: Vector3::new(0.03, 0.02, 0.025),
        },
        1.0,
        resting_pose(
            &Primitive::Box {
                half_extents: Vector3::new(0.03, 0.02, 0.025),
            },
            1.0,
            UnitQuaternion::from_euler_angles(0.0, 0.0, rng.random_range(0.0..3.0)),
            0.0,
            0.0,
        ),
    )
    .unwrap();
    // second object pushed a few millimeters into the first
    let b = sphere_at(0.025, Vector3::new(0.0, 0.0, 0.025) + Vector3::new(rng.random_range(0.03..0.04), 0.0, 0.0));
    let scene = Scene::new(vec![a, b]).unwrap();
    let base = RigidTransform::new(
        Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.0..0.08)),
        UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0))),
    );
    let q = model
        .joint_limits()
        .iter()
        .map(|[lo, hi]| rng.random_range(*lo..=*hi))
        .collect();
    (scene, HandConfiguration::new(base, q))
}

#[test]
fn penetration_matches_tenfold_dense_oracle() {
    let model = HandModel::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let config = MetricsConfig::default();
    let dense = MetricsConfig {
        hand_density: 10 * config.hand_density,
        object_samples: 10 * config.object_samples,
        sample_seed: 99,
        ..config.clone()
    };
    let thresholds = FilterThresholds::default();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (scene, cfg) = random_interpenetration(&mut rng, &model);
        let d = GraspEvaluator::new(&model, &scene, &config, &thresholds, 3, 0)
            .unwrap()
            .penetration_depth(&cfg)
            .unwrap();
        let oracle = GraspEvaluator::new(&model, &scene, &dense, &thresholds, 3, 0)
            .unwrap()
            .penetration_depth(&cfg)
            .unwrap();
        assert!(d > 0.0);
        worst = worst.max((d - oracle).abs());
    }
    assert!(worst < 1e-4, "worst deviation {worst} m");
}

#[test]
fn object_overlap_is_symmetric() {
    let model = HandModel::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let far = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0)));
    for _ in 0..5 {
        let (scene, _) = random_interpenetration(&mut rng, &model);
        let swapped = Scene::new(vec![scene.objects[1].clone(), scene.objects[0].clone()]).unwrap();
        let a = penetration_depth(&model, &far, &scene).unwrap();
        let b = penetration_depth(&model, &far, &swapped).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn diversity_examples() {
    let model = HandModel::reference();
    let a = open_hand(&model, RigidTransform::identity());
    assert_eq!(diversity(&[a.clone(), a.clone()]).unwrap(), 0.0);
    let mut b = a.clone();
    for q in &mut b.q {
        *q += 2f64.to_radians();
    }
    assert!((diversity(&[a.clone(), b]).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(diversity(&[a]), Err(Error::Input(_))));
}

/// Open hand with boxes resting against the front and/or back of the palm.
fn palm_contact_scene(front: bool, back: bool) -> Scene {
    let lift = Vector3::new(0.0, 0.0, 0.3);
    let half = Vector3::new(0.03, 0.02, 0.03);
    let far = boxed(half, Vector3::new(1.0, 1.0, 0.03));
    let front_box = boxed(half, lift + Vector3::new(0.0, 0.012 + 0.001 + 0.02, 0.048));
    let back_box = boxed(half, lift + Vector3::new(0.0, -0.012 - 0.001 - 0.02, 0.048));
    let objects = match (front, back) {
        (true, true) => vec![front_box, back_box],
        (true, false) => vec![front_box, far],
        _ => vec![far],
    };
    Scene::new_unchecked(objects)
}

#[test]
fn contact_ratio_examples() {
    let model = HandModel::reference();
    let cfg = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3)));
    let ratio = |scene: &Scene| contact_ratio(&model, &cfg, scene, 0.003, 3, 0).unwrap();
    assert_eq!(ratio(&palm_contact_scene(true, true)), 1.0);
    assert_eq!(ratio(&palm_contact_scene(true, false)), 0.5);
    assert_eq!(ratio(&palm_contact_scene(false, false)), 0.0);
    assert!(contact_ratio(&model, &cfg, &palm_contact_scene(true, true), 0.0, 3, 0).is_err());
}

/// Rigid "hand" of six small spheres around each of two objects, touching
/// them along the coordinate axes.
fn caging_hand(centers: &[Vector3<f64>], object_radius: f64) -> HandModel {
    let tip = 0.004;
    let mut prims = Vec::new();
    for c in centers {
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut d = Vector3::zeros();
                d[k] = s;
                let p = c + (object_radius + tip) * d;
                prims.push(format!(
                    r#"{{"kind": "sphere", "dims": [{tip}], "pose": {{"position": [{}, {}, {}]}}}}"#,
                    p.x, p.y, p.z
                ));
            }
        }
    }
    let json = format!(
        r#"{{
        "name": "cage",
        "palm": {{"link": "root", "normal": [0, 1, 0], "center": [0, 0, 0]}},
        "links": [{{"name": "root", "parent": null, "joint": {{"kind": "fixed"}},
                    "collision": [{}], "samples": {}}}],
        "keypoints": []
      }}"#,
        prims.join(","),
        40 * prims.len()
    );
    HandModel::from_json(&json).unwrap()
}

#[test]
fn caging_dual_sphere_grasp_is_feasible() {
    let r = 0.025;
    let centers = [Vector3::new(0.0, 0.0, 0.5), Vector3::new(0.06, 0.0, 0.5)];
    let model = caging_hand(&centers, r);
    let scene = Scene::new(centers.iter().map(|c| sphere_at(r, *c)).collect()).unwrap();
    let cfg = HandConfiguration::new(RigidTransform::identity(), vec![]);
    let config = MetricsConfig {
        max_q1_contacts: 6,
        friction: FrictionConfig {
            cone_edges: 4,
            ..FrictionConfig::default()
        },
        ..MetricsConfig::default()
    };
    let evaluator = GraspEvaluator::new(&model, &scene, &config, &FilterThresholds::default(), 3, 0).unwrap();
    let report = evaluator.report(&cfg).unwrap();
    assert!(report.feasible, "{report:?}");
    assert_eq!(report.contact_ratio, 1.0);
    assert_eq!(report.q1_min, report.q1_per_object.iter().copied().fold(f64::INFINITY, f64::min));

    let contacts = evaluator.contacts(&cfg).unwrap();
    for (j, obj) in scene.objects.iter().enumerate() {
        let chosen = farthest_point_subset(&contacts[j], 6);
        let w = contact_wrenches(&chosen, &config.friction.model_for(obj), &obj.center());
        let oracle = q1_enumerated(&w);
        assert!(oracle > 0.0);
        assert!((report.q1_per_object[j] - oracle).abs() < 1e-6);
    }
}

#[test]
fn infeasible_cases() {
    let model = HandModel::reference();
    let flat = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3)));
    let scene = Scene::new(vec![sphere_at(0.03, Vector3::new(0.0, 0.0, 0.03))]).unwrap();
    let report = static_feasibility(
        &model,
        &flat,
        &scene,
        &MetricsConfig::default(),
        &FilterThresholds::default(),
        3,
        0,
    )
    .unwrap();
    assert!(!report.feasible);
    assert_eq!(report.contact_ratio, 0.0);

    // the caging grasp with one object shifted 5 mm into a fingertip
    let r = 0.025;
    let centers = [Vector3::new(0.0, 0.0, 0.5)];
    let cage = caging_hand(&centers, r);
    let shifted = Scene::new(vec![sphere_at(r, centers[0] + Vector3::new(0.005, 0.0, 0.0))]).unwrap();
    let cfg = HandConfiguration::new(RigidTransform::identity(), vec![]);
    let report = static_feasibility(
        &cage,
        &cfg,
        &shifted,
        &MetricsConfig::default(),
        &FilterThresholds::default(),
        3,
        0,
    )
    .unwrap();
    assert!(report.penetration_mm > 4.0);
    assert!(!report.feasible);
}

#[test]
fn hull_q1_matches_oracle_on_random_contact_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let shapes = [
        Primitive::Sphere { radius: 0.04 },
        Primitive::Box {
            half_extents: Vector3::new(0.03, 0.04, 0.05),
        },
        Primitive::Capsule {
            radius: 0.02,
            half_length: 0.03,
        },
    ];
    let mut positive = 0;
    for trial in 0..50 {
        let shape = ObjectShape::new(shapes[trial % 3], 1.0, RigidTransform::identity()).unwrap();
        let n = rng.random_range(3..=4);
        let contacts: Vec<_> = (0..n)
            .map(|_| {
                let (p, nrm) = shape.primitive.surface_point(rng.random(), rng.random());
                Contact { point: p, normal: -nrm }
            })
            .collect();
        let friction = FrictionModel {
            mu: rng.random_range(0.3..1.0),
            cone_edges: if n == 3 { 6 } else { 4 },
            torque_scale: shape.bounding_radius(),
        };
        let q = q1_metric(&contacts, &friction, &shape.center());
        let oracle = q1_enumerated(&contact_wrenches(&contacts, &friction, &shape.center()));
        assert!((q - oracle).abs() < 1e-6, "trial {trial}: {q} vs {oracle}");
        positive += (q > 0.0) as usize;
    }
    assert!(positive >= 5, "only {positive} force-closure sets");
}

#[test]
fn box_corner_in_sphere_matches_analytic_depth() {
    // both objects float above the table, the hand is far away
    let model = HandModel::reference();
    let far = open_hand(&model, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0)));
    let h = 0.02;
    let diag = Vector3::new(1.0, 1.0, 1.0).normalize();
    let spin = UnitQuaternion::rotation_between(&diag, &Vector3::x()).unwrap();
    let cube_center = Vector3::new(0.0, 0.0, 0.2);
    let corner = cube_center + h * 3f64.sqrt() * Vector3::x();
    let r = 0.03;
    let depth = 0.0023;
    let cube = ObjectShape::new(
        Primitive::Box {
            half_extents: Vector3::repeat(h),
        },
        1.0,
        RigidTransform::new(cube_center, spin),
    )
    .unwrap();
    let ball = sphere_at(r, corner + (r - depth) * Vector3::x());
    let scene = Scene::new_unchecked(vec![cube, ball]);
    let d = penetration_depth(&model, &far, &scene).unwrap();
    assert!((d - 1000.0 * depth).abs() < 1e-3, "{d} mm");
}
