mod common;

use multigrasp::export::{hand_meshes, object_meshes, to_obj, to_xyz};
use multigrasp::kinematics::{HandModel, HandPose};
use nalgebra::Vector3;

/// Vertex lists of each `o` block of an OBJ file.
fn parse_obj(text: &str) -> Vec<(String, Vec<Vector3<f64>>)> {
    let mut out: Vec<(String, Vec<Vector3<f64>>)> = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("o ") {
            out.push((name.to_string(), Vec::new()));
        } else if let Some(v) = line.strip_prefix("v ") {
            let c: Vec<f64> = v.split(' ').map(|s| s.parse().unwrap()).collect();
            out.last_mut().unwrap().1.push(Vector3::new(c[0], c[1], c[2]));
        }
    }
    out
}

#[test]
fn exported_hand_vertices_lie_on_the_forward_kinematics_primitives() {
    let model = HandModel::reference();
    let mut rng = common::rng(3);
    let dir = common::upper_direction(&mut rng, 0.3);
    let cfg = common::palm_at(&model, model.mid_joints(), Vector3::new(0.02, -0.01, 0.12), -dir, 0.7);
    let pose = HandPose::compute(&model, &cfg).unwrap();
    let meshes = hand_meshes(&model, &cfg).unwrap();
    let parsed = parse_obj(&to_obj(&meshes));
    assert_eq!(parsed.len(), meshes.len());

    let mut k = 0;
    for (link, world) in model.links.iter().zip(&pose.links) {
        for (c, primitive) in link.collision.iter().enumerate() {
            let (name, vertices) = &parsed[k];
            assert_eq!(name, &format!("hand_{}_{c}", link.name));
            assert!(meshes[k].is_watertight());
            assert_eq!(vertices, &meshes[k].vertices, "OBJ coordinates round-trip exactly");
            let frame = world * &primitive.pose;
            for v in vertices {
                let local = frame.inverse_transform_point(v);
                assert!(primitive.shape.sdf(&local).abs() < 1e-9, "{name}: {}", primitive.shape.sdf(&local));
            }
            k += 1;
        }
    }
    assert_eq!(k, meshes.len());
}

#[test]
fn exported_object_vertices_lie_on_the_object_surfaces() {
    let scene = common::spheres_on_table(0.03, &[(-0.04, 0.0), (0.05, 0.02)]);
    let meshes = object_meshes(&scene);
    for (mesh, obj) in meshes.iter().zip(&scene.objects) {
        assert!(mesh.is_watertight());
        for v in &mesh.vertices {
            assert!(obj.sdf(v).abs() < 1e-9);
        }
    }
}

#[test]
fn point_cloud_lines_have_unit_normals() {
    let model = HandModel::reference();
    let scene = common::spheres_on_table(0.03, &[(0.0, 0.0)]);
    let cfg = common::palm_at(&model, model.mid_joints(), Vector3::new(0.0, 0.0, 0.12), -Vector3::z(), 0.0);
    let text = to_xyz(&model, &cfg, &scene, 0).unwrap();
    let mut lines = 0;
    for line in text.lines() {
        let v: Vec<f64> = line.split(' ').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.len(), 6);
        assert!((Vector3::new(v[3], v[4], v[5]).norm() - 1.0).abs() < 1e-9);
        lines += 1;
    }
    assert!(lines > 100);
}
