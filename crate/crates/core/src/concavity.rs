//! Collision-aware concavity: sampled Hausdorff distance to the convex hull
//! and the volume deficit expressed as a sphere radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hull::{convex_hull_padded, ConvexHull};
use crate::mesh::{Point, TriMesh, Vec3};
use crate::spatial::SpatialIndex;

pub const DEFAULT_SAMPLES: usize = 2048;
/// Points within this distance outside a hull count as covered by it.
pub const HULL_CONTAINMENT_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Min,
    Max,
}

impl Combine {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Combine::Min => a.min(b),
            Combine::Max => a.max(b),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConcavityScore {
    pub hausdorff: f64,
    pub volume_radius: f64,
    pub combined: f64,
}

impl ConcavityScore {
    pub fn new(hausdorff: f64, volume_radius: f64, combine: Combine) -> Self {
        ConcavityScore {
            hausdorff,
            volume_radius,
            combined: combine.apply(hausdorff, volume_radius),
        }
    }
}

/// Area-weighted random surface points followed by every vertex. The
/// random part depends only on the mesh and `seed`.
pub fn surface_samples(mesh: &TriMesh, samples: usize, seed: u64) -> Vec<Point> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(samples + mesh.vertices.len());
    if total > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let r = rng.random::<f64>() * total;
            let t = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let (s, u): (f64, f64) = (rng.random::<f64>().sqrt(), rng.random());
            out.push(a + (b - a) * (s * (1.0 - u)) + (c - a) * (s * u));
        }
    }
    out.extend_from_slice(&mesh.vertices);
    out
}

fn max_distance(points: &[Point], target: &SpatialIndex) -> f64 {
    points
        .par_iter()
        .map(|p| target.distance(p))
        .reduce(|| 0.0, f64::max)
}

/// Two-sided Hausdorff distance estimated from surface samples of both meshes.
pub fn sampled_hausdorff(a: &TriMesh, b: &TriMesh, samples: usize, seed: u64) -> Result<f64> {
    let (ia, ib) = (SpatialIndex::build(a)?, SpatialIndex::build(b)?);
    let sa = surface_samples(a, samples, seed);
    let sb = surface_samples(b, samples, seed);
    Ok(max_distance(&sa, &ib).max(max_distance(&sb, &ia)))
}

/// Radius of the sphere whose volume equals `hull_volume - mesh_volume`.
pub fn deficit_radius(hull_volume: f64, mesh_volume: f64) -> f64 {
    let deficit = (hull_volume - mesh_volume).max(0.0);
    (3.0 * deficit / (4.0 * std::f64::consts::PI)).cbrt()
}

pub fn volume_radius(mesh: &TriMesh, hull: &ConvexHull) -> f64 {
    deficit_radius(hull.volume, mesh.signed_volume())
}

pub fn collision_concavity(mesh: &TriMesh, samples: usize, seed: u64) -> Result<ConcavityScore> {
    collision_concavity_with(mesh, samples, seed, Combine::Min)
}

pub fn collision_concavity_with(mesh: &TriMesh, samples: usize, seed: u64, combine: Combine) -> Result<ConcavityScore> {
    let hull = convex_hull_padded(&mesh.vertices)?;
    concavity_against(mesh, &hull, samples, seed, combine)
}

/// Concavity of `mesh` measured against an already computed hull.
pub fn concavity_against(
    mesh: &TriMesh,
    hull: &ConvexHull,
    samples: usize,
    seed: u64,
    combine: Combine,
) -> Result<ConcavityScore> {
    let h = sampled_hausdorff(mesh, &hull.mesh, samples, seed)?;
    Ok(ConcavityScore::new(h, volume_radius(mesh, hull), combine))
}

/// Concavity of a whole decomposition: the input against the union of the
/// part hulls, which are assumed to have disjoint interiors.
pub fn evaluate_decomposition(
    input: &TriMesh,
    hulls: &[ConvexHull],
    samples: usize,
    seed: u64,
    combine: Combine,
) -> Result<ConcavityScore> {
    let input_index = SpatialIndex::build(input)?;
    let planes: Vec<Vec<(Vec3, f64)>> = hulls.iter().map(ConvexHull::planes).collect();
    let indexes = hulls
        .iter()
        .map(|h| SpatialIndex::build(&h.mesh))
        .collect::<Result<Vec<_>>>()?;
    let inside = |p: &Point, skip: Option<usize>| {
        planes.iter().enumerate().any(|(k, ps)| {
            Some(k) != skip
                && ps
                    .iter()
                    .all(|(n, d)| n.dot(&p.coords) - d <= HULL_CONTAINMENT_TOLERANCE)
        })
    };

    // union surface to input; pieces buried in another hull are not surface
    let mut union_side: f64 = 0.0;
    for (k, hull) in hulls.iter().enumerate() {
        let pts = surface_samples(&hull.mesh, samples, seed);
        let d = pts
            .par_iter()
            .filter(|p| !inside(p, Some(k)))
            .map(|p| input_index.distance(p))
            .reduce(|| 0.0, f64::max);
        union_side = union_side.max(d);
    }
    let input_side = surface_samples(input, samples, seed)
        .par_iter()
        .filter(|p| !inside(p, None))
        .map(|p| indexes.iter().map(|ix| ix.distance(p)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max);
    let hausdorff = if hulls.is_empty() {
        f64::INFINITY
    } else {
        union_side.max(input_side)
    };
    // missing volume is an error too, so the mismatch is taken both ways
    let hull_volume: f64 = hulls.iter().map(|h| h.volume).sum();
    let radius = deficit_radius((hull_volume - input.signed_volume()).abs(), 0.0);
    Ok(ConcavityScore::new(hausdorff, radius, combine))
}
