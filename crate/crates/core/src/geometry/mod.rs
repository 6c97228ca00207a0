//! Paths, intersection layout and footprint boxes.

mod intersection;
mod obb;
mod path;

pub use intersection::{
    build_four_way_intersection, build_intersection, IntersectionParams, IntersectionSpec,
    APPROACHES, MOVEMENTS,
};
pub use obb::{footprint_obb, obb_overlap, obb_separation, swept_obb, Obb, VehicleFootprint};
pub use path::{
    offset_point, project_to_path, PathSample, PathSpec, Primitive, Projection, HINT_WINDOW,
};
