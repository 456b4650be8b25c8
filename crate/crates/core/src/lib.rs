//! Approximate convex decomposition of closed triangle meshes driven by
//! vertex-pair visibility.
//!
//! The pipeline normalizes and optionally SDF-remeshes the input, then
//! greedily cuts the most concave part with the plane that severs the
//! largest total length of visibility edges, until every part is close
//! enough to its convex hull.

pub mod error;
pub mod mesh;
pub mod plane_search;
pub mod preprocess;
pub mod shapes;
pub mod spatial;
pub mod cutter;
pub mod decomposer;
pub mod concavity;
pub mod hull;
pub mod io;
pub mod cli;
pub mod visibility;

pub use error::{Error, Result};
pub use mesh::{Aabb, Point, Transform, TriMesh, Vec3};
