//! Signed-distance queries for primitive objects, the tabletop scene and
//! stable object placement.

mod primitive;
mod proximity;
mod scene;
mod shape;

pub use primitive::{Primitive, SdfSample};
pub use proximity::{closest_segment_parameters, pair_supported, primitive_distance, Proximity};
pub use scene::{
    place_objects, resting_pose, table_sdf, ObjectTemplate, PlacementParams, Scene,
    TABLE_TOLERANCE,
};
pub use shape::{
    clamped_distance_to_object, distance_to_object, ObjectDescriptor, ObjectShape,
    DEFAULT_CLOUD_POINTS,
};
