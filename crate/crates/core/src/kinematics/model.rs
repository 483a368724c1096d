//! Articulated hand description and its JSON schema.
//!
//! The schema is a kinematic tree in the spirit of robot description files:
//!
//! ```json
//! {
//!   "name": "reference-hand",
//!   "palm": {"link": "palm", "normal": [0, 1, 0], "center": [0, 0.012, 0.048]},
//!   "links": [
//!     {"name": "palm", "parent": null, "joint": {"kind": "fixed"},
//!      "origin": {"position": [0, 0, 0]},
//!      "collision": [{"kind": "box", "dims": [0.042, 0.012, 0.048],
//!                     "pose": {"position": [0, 0, 0.048]}}],
//!      "samples": 240, "contact_side": [0, 1, 0]},
//!     {"name": "index_knuckle", "parent": "palm",
//!      "joint": {"kind": "revolute", "axis": [0, 1, 0], "limits": [-0.3, 0.3]},
//!      "origin": {"position": [0.033, 0, 0.104]}}
//!   ],
//!   "keypoints": [{"name": "wrist", "link": "palm", "offset": [0, 0, 0]}]
//! }
//! ```
//!
//! A link's world pose is `parent * origin * rotation(axis, q)`. The root
//! link must have a fixed joint; its pose is `base * origin`. `samples` is
//! the number of surface points drawn on the link's collision primitives;
//! the optional unit `contact_side` limits contact candidates to samples
//! whose normal points to that side (all samples when absent).
//! `palm.normal` is the outward palm axis in the palm link frame and
//! `palm.center` a point on the palm surface; both drive initial hand
//! placement and palm alignment.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::transform::RigidTransform;
use crate::error::{Error, Result};
use crate::geometry::{pair_supported, Primitive};

const REFERENCE_HAND_JSON: &str = include_str!("../../assets/reference_hand.json");

#[derive(Clone, Debug, PartialEq)]
pub enum JointKind {
    Fixed,
    Revolute {
        axis: Unit<Vector3<f64>>,
        limits: [f64; 2],
    },
}

/// Collision shape in its link frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionPrimitive {
    pub shape: Primitive,
    pub pose: RigidTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: JointKind,
    pub origin: RigidTransform,
    pub collision: Vec<CollisionPrimitive>,
    pub samples: usize,
    /// Link-frame direction of the grasping side. When set, only surface
    /// samples whose normal points to this side may be assigned as contacts.
    pub contact_side: Option<Unit<Vector3<f64>>>,
    /// Index into the joint vector for revolute links.
    pub joint_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSpec {
    pub name: Option<String>,
    pub link: usize,
    pub offset: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PalmSpec {
    pub link: usize,
    pub normal: Unit<Vector3<f64>>,
    pub center: Vector3<f64>,
}

/// Validated kinematic tree; links are stored parents-first.
#[derive(Clone, Debug)]
pub struct HandModel {
    pub name: String,
    pub links: Vec<Link>,
    pub keypoints: Vec<KeypointSpec>,
    pub palm: PalmSpec,
    /// Link index of each revolute joint, in joint-vector order.
    pub joint_links: Vec<usize>,
    /// Link pairs checked for self-collision.
    pub collision_pairs: Vec<(usize, usize)>,
}

// ---- serialized form ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    name: String,
    palm: PalmRepr,
    links: Vec<LinkRepr>,
    keypoints: Vec<KeypointRepr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    collision_exclude: Vec<[String; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PalmRepr {
    link: String,
    normal: [f64; 3],
    center: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRepr {
    name: String,
    parent: Option<String>,
    joint: JointRepr,
    #[serde(default)]
    origin: RigidTransform,
    #[serde(default)]
    collision: Vec<CollisionRepr>,
    #[serde(default)]
    samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contact_side: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollisionRepr {
    kind: String,
    dims: Vec<f64>,
    #[serde(default)]
    pose: RigidTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum JointRepr {
    Fixed,
    Revolute { axis: [f64; 3], limits: [f64; 2] },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    link: String,
    offset: [f64; 3],
}

fn unit_axis(v: [f64; 3], what: &str) -> Result<Unit<Vector3<f64>>> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(Error::Model(format!("{what} must be a unit vector, norm {n}")));
    }
    Ok(Unit::new_normalize(v))
}

impl HandModel {
    /// The bundled 19-joint reference hand with 31 keypoints.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_HAND_JSON).expect("bundled hand model is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        Self::from_repr(repr)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_repr()).expect("model serializes")
    }

    fn from_repr(repr: ModelRepr) -> Result<Self> {
        let by_name: HashMap<&str, usize> = repr
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        if by_name.len() != repr.links.len() {
            return Err(Error::Model("duplicate link names".into()));
        }
        let roots: Vec<usize> = (0..repr.links.len())
            .filter(|&i| repr.links[i].parent.is_none())
            .collect();
        if roots.len() != 1 {
            return Err(Error::Model(format!(
                "expected exactly one root link, found {}",
                roots.len()
            )));
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); repr.links.len()];
        for (i, l) in repr.links.iter().enumerate() {
            if let Some(p) = &l.parent {
                let &pi = by_name
                    .get(p.as_str())
                    .ok_or_else(|| Error::Model(format!("link {} has unknown parent {p}", l.name)))?;
                children[pi].push(i);
            }
        }
        // parents-first order; links unreachable from the root are in a cycle
        let mut order = vec![roots[0]];
        let mut k = 0;
        while k < order.len() {
            order.extend(children[order[k]].iter().copied());
            k += 1;
        }
        if order.len() != repr.links.len() {
            return Err(Error::Model("link graph contains a cycle".into()));
        }
        let new_index: HashMap<usize, usize> =
            order.iter().enumerate().map(|(n, &o)| (o, n)).collect();

        let mut links = Vec::with_capacity(order.len());
        let mut joint_links = Vec::new();
        for (n, &o) in order.iter().enumerate() {
            let l = &repr.links[o];
            let joint = match l.joint {
                JointRepr::Fixed => JointKind::Fixed,
                JointRepr::Revolute { axis, limits } => {
                    if !(limits[0] <= limits[1]) {
                        return Err(Error::Model(format!("link {}: lo > hi", l.name)));
                    }
                    JointKind::Revolute {
                        axis: unit_axis(axis, &format!("axis of {}", l.name))?,
                        limits,
                    }
                }
            };
            let parent = l.parent.as_ref().map(|p| new_index[&by_name[p.as_str()]]);
            if parent.is_none() && joint != JointKind::Fixed {
                return Err(Error::Model("root link must have a fixed joint".into()));
            }
            let joint_index = match joint {
                JointKind::Revolute { .. } => {
                    joint_links.push(n);
                    Some(joint_links.len() - 1)
                }
                JointKind::Fixed => None,
            };
            let collision = l
                .collision
                .iter()
                .map(|c| {
                    Ok(CollisionPrimitive {
                        shape: Primitive::from_kind_dims(&c.kind, &c.dims)
                            .map_err(|e| Error::Model(format!("link {}: {e}", l.name)))?,
                        pose: c.pose,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if l.samples > 0 && collision.is_empty() {
                return Err(Error::Model(format!(
                    "link {} requests surface samples but has no collision geometry",
                    l.name
                )));
            }
            links.push(Link {
                name: l.name.clone(),
                parent,
                joint,
                origin: l.origin,
                collision,
                samples: l.samples,
                contact_side: l
                    .contact_side
                    .map(|v| unit_axis(v, &format!("contact side of link {}", l.name)))
                    .transpose()?,
                joint_index,
            });
        }
        let link_index = |name: &str| -> Result<usize> {
            by_name
                .get(name)
                .map(|i| new_index[i])
                .ok_or_else(|| Error::Model(format!("unknown link {name}")))
        };
        let keypoints = repr
            .keypoints
            .iter()
            .map(|k| {
                Ok(KeypointSpec {
                    name: k.name.clone(),
                    link: link_index(&k.link)?,
                    offset: Vector3::from(k.offset),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let palm = PalmSpec {
            link: link_index(&repr.palm.link)?,
            normal: unit_axis(repr.palm.normal, "palm normal")?,
            center: Vector3::from(repr.palm.center),
        };
        let mut excluded = HashSet::new();
        for [a, b] in &repr.collision_exclude {
            let (a, b) = (link_index(a)?, link_index(b)?);
            excluded.insert((a.min(b), a.max(b)));
        }
        let mut model = HandModel {
            name: repr.name,
            links,
            keypoints,
            palm,
            joint_links,
            collision_pairs: Vec::new(),
        };
        model.collision_pairs = model.non_adjacent_pairs(&excluded);
        for &(a, b) in &model.collision_pairs {
            for ca in &model.links[a].collision {
                for cb in &model.links[b].collision {
                    if !pair_supported(&ca.shape, &cb.shape) {
                        return Err(Error::Model(format!(
                            "links {} and {} may collide but neither shape is a sphere or capsule; \
                             exclude the pair with collision_exclude",
                            model.links[a].name, model.links[b].name
                        )));
                    }
                }
            }
        }
        Ok(model)
    }

    fn to_repr(&self) -> ModelRepr {
        let name = |i: usize| self.links[i].name.clone();
        let auto = self.non_adjacent_pairs(&HashSet::new());
        let collision_exclude = auto
            .into_iter()
            .filter(|p| !self.collision_pairs.contains(p))
            .map(|(a, b)| [name(a), name(b)])
            .collect();
        ModelRepr {
            name: self.name.clone(),
            palm: PalmRepr {
                link: name(self.palm.link),
                normal: self.palm.normal.into_inner().into(),
                center: self.palm.center.into(),
            },
            links: self
                .links
                .iter()
                .map(|l| LinkRepr {
                    name: l.name.clone(),
                    parent: l.parent.map(name),
                    joint: match &l.joint {
                        JointKind::Fixed => JointRepr::Fixed,
                        JointKind::Revolute { axis, limits } => JointRepr::Revolute {
                            axis: axis.into_inner().into(),
                            limits: *limits,
                        },
                    },
                    origin: l.origin,
                    collision: l
                        .collision
                        .iter()
                        .map(|c| {
                            let (kind, dims) = c.shape.kind_dims();
                            CollisionRepr {
                                kind: kind.into(),
                                dims,
                                pose: c.pose,
                            }
                        })
                        .collect(),
                    samples: l.samples,
                    contact_side: l.contact_side.map(|v| v.into_inner().into()),
                })
                .collect(),
            keypoints: self
                .keypoints
                .iter()
                .map(|k| KeypointRepr {
                    name: k.name.clone(),
                    link: name(k.link),
                    offset: k.offset.into(),
                })
                .collect(),
            collision_exclude,
        }
    }

    /// Nearest ancestor that carries collision geometry.
    pub fn geometric_parent(&self, link: usize) -> Option<usize> {
        let mut cur = self.links[link].parent;
        while let Some(p) = cur {
            if !self.links[p].collision.is_empty() {
                return Some(p);
            }
            cur = self.links[p].parent;
        }
        None
    }

    fn non_adjacent_pairs(&self, excluded: &HashSet<(usize, usize)>) -> Vec<(usize, usize)> {
        let geo: Vec<usize> = (0..self.links.len())
            .filter(|&i| !self.links[i].collision.is_empty())
            .collect();
        let mut pairs = Vec::new();
        for (ia, &a) in geo.iter().enumerate() {
            for &b in &geo[ia + 1..] {
                let adjacent =
                    self.geometric_parent(a) == Some(b) || self.geometric_parent(b) == Some(a);
                if !adjacent && !excluded.contains(&(a, b)) {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    /// Number of revolute joints.
    pub fn dof(&self) -> usize {
        self.joint_links.len()
    }

    /// Length of the tangent-space parameter vector `[p, omega, q]`.
    pub fn tangent_dim(&self) -> usize {
        6 + self.dof()
    }

    pub fn joint_limits(&self) -> Vec<[f64; 2]> {
        self.joint_links
            .iter()
            .map(|&l| match self.links[l].joint {
                JointKind::Revolute { limits, .. } => limits,
                JointKind::Fixed => unreachable!(),
            })
            .collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Mid-range joint vector.
    pub fn mid_joints(&self) -> Vec<f64> {
        self.joint_limits().iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    /// Local rotation contributed by a link's own joint.
    pub(crate) fn joint_rotation(&self, link: usize, q: &[f64]) -> UnitQuaternion<f64> {
        match (&self.links[link].joint, self.links[link].joint_index) {
            (JointKind::Revolute { axis, .. }, Some(j)) => UnitQuaternion::from_axis_angle(axis, q[j]),
            _ => UnitQuaternion::identity(),
        }
    }
}
