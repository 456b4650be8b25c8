//! Visibility edges: vertex pairs whose connecting segment leaves an
//! ε-offset cage around the mesh without touching the mesh itself. Their
//! total length is the visibility concavity of a part.

use rayon::prelude::*;

use crate::error::{Error, Result};
use nalgebra::{Matrix3, SymmetricEigen};

use crate::mesh::{Aabb, Point, Transform, TriMesh, Vec3};
use crate::preprocess::{self, SdfGrid, GRID_PADDING, MAX_RESOLUTION, MIN_RESOLUTION};
use crate::spatial::{segment_intersects_brute_force, SpatialIndex};

/// Default cage offset in normalized units.
pub const DEFAULT_EPSILON: f64 = 0.03;
/// Parametric clipping at both segment ends for the mesh test.
pub const ENDPOINT_CLIP: f64 = 1e-4;
/// Cage grid cells per unit of offset; cell size is `epsilon / 2`.
pub const CAGE_CELLS_PER_EPSILON: f64 = 2.0;

/// Outward offset surface of a mesh.
#[derive(Clone, Debug)]
pub struct CageMesh {
    pub mesh: TriMesh,
    pub epsilon: f64,
    /// Signed distance samples the cage was extracted from, in the
    /// principal frame.
    pub sdf: SdfGrid,
    /// Maps mesh coordinates into the frame of `sdf`.
    pub to_frame: Transform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityEdge {
    pub i: u32,
    pub j: u32,
    pub length: f64,
}

/// Visibility edges sorted by `(i, j)` with their cached total length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VisibilitySet {
    edges: Vec<VisibilityEdge>,
    total_length: f64,
}

impl VisibilitySet {
    pub fn from_edges(mut edges: Vec<VisibilityEdge>) -> Self {
        edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        edges.dedup_by(|a, b| a.i == b.i && a.j == b.j);
        let total_length = edges.iter().map(|e| e.length).sum();
        VisibilitySet {
            edges,
            total_length,
        }
    }

    pub fn edges(&self) -> &[VisibilityEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.i, e.j))
    }
}

/// Grid resolution that gives a cage cell of `epsilon / 2` on `mesh`.
pub fn cage_resolution(mesh: &TriMesh, epsilon: f64) -> usize {
    let frame = principal_frame(&mesh.vertices);
    let local = Aabb::from_points(&mesh.vertices.iter().map(|p| frame.apply(p)).collect::<Vec<_>>());
    let cells = (local.longest_side() * CAGE_CELLS_PER_EPSILON / epsilon).ceil();
    (cells as usize).clamp(MIN_RESOLUTION, MAX_RESOLUTION)
}

/// Rigid map onto the principal axes of the vertex cloud, centered on its
/// centroid. Axes are ordered by decreasing variance and each is signed by
/// the third moment along it, so rotating the mesh rotates the frame with it.
pub fn principal_frame(points: &[Point]) -> Transform {
    if points.is_empty() {
        return Transform::identity();
    }
    let n = points.len() as f64;
    let c = points.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n;
    let cov = points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p.coords - c;
        a + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = [Vec3::zeros(); 2];
    for (k, axis) in axes.iter_mut().enumerate() {
        let e: Vec3 = eig.eigenvectors.column(order[k]).into_owned();
        let skew: f64 = points.iter().map(|p| (p.coords - c).dot(&e).powi(3)).sum();
        *axis = if skew < 0.0 { -e } else { e };
    }
    let third = axes[0].cross(&axes[1]);
    let rotation = Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), third.transpose()]);
    Transform {
        rotation,
        translation: -(rotation * c),
        scale: 1.0,
    }
}

/// Offset surface at distance `epsilon`, extracted from an SDF sampled in
/// the mesh's [`principal_frame`] with `resolution` cells along the longest
/// side. The grid is padded so the offset fits inside it.
pub fn build_cage(mesh: &TriMesh, epsilon: f64, resolution: usize) -> Result<CageMesh> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(Error::ResolutionOutOfRange(resolution));
    }
    let to_frame = principal_frame(&mesh.vertices);
    let local = to_frame.apply_mesh(mesh);
    let h = local.aabb().longest_side() / resolution as f64;
    let offset_cells = (epsilon / h).ceil();
    if offset_cells > MAX_RESOLUTION as f64 / 2.0 {
        return Err(Error::CagePadding { epsilon });
    }
    let padding = GRID_PADDING + offset_cells as usize;
    let sdf = preprocess::sdf_with(&local, resolution, padding, 0.0, Some(epsilon + 3.0 * h))?;
    let cage = match preprocess::extract_isosurface(&sdf, epsilon) {
        Err(Error::OpenLevelSet) => return Err(Error::CagePadding { epsilon }),
        other => other?,
    };
    Ok(CageMesh {
        mesh: to_frame.inverse().apply_mesh(&cage),
        epsilon,
        sdf,
        to_frame,
    })
}

/// All-pairs visibility classification: `(i, j)` is an edge iff the segment
/// meets the cage and misses the mesh on `[δ, 1 − δ]`.
pub fn compute_visibility_edges(mesh: &TriMesh, cage: &CageMesh) -> Result<VisibilitySet> {
    let mesh_index = SpatialIndex::build(mesh)?;
    let cage_index = SpatialIndex::build(&cage.mesh)?;
    let n = mesh.vertices.len();
    let verts = &mesh.vertices;
    let local: Vec<Point> = verts.iter().map(|p| cage.to_frame.apply(p)).collect();
    // a sampled point this far below zero is inside the mesh
    let interior = -(cage.sdf.cell_size * 3f64.sqrt() + 1e-12);

    let rows: Vec<Vec<VisibilityEdge>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = verts[i];
            let la = local[i];
            let mut row = Vec::new();
            for j in (i + 1)..n {
                let b = verts[j];
                let d: Vec3 = b - a;
                let length = d.norm();
                if length == 0.0 {
                    continue;
                }
                // a point strictly inside the mesh means the segment either
                // crosses the surface or stays inside the cage
                let ld = local[j] - la;
                let buried = [0.5, 0.25, 0.75].iter().any(|&t| {
                    cage.sdf
                        .sample(&(la + ld * t))
                        .is_some_and(|v| v < interior)
                });
                if buried {
                    continue;
                }
                if mesh_index.segment_intersects(&a, &b, ENDPOINT_CLIP, 1.0 - ENDPOINT_CLIP) {
                    continue;
                }
                if !cage_index.segment_intersects(&a, &b, 0.0, 1.0) {
                    continue;
                }
                row.push(VisibilityEdge {
                    i: i as u32,
                    j: j as u32,
                    length,
                });
            }
            row
        })
        .collect();
    Ok(VisibilitySet::from_edges(rows.into_iter().flatten().collect()))
}

/// Reference classification testing every pair against every triangle.
pub fn compute_visibility_edges_brute_force(mesh: &TriMesh, cage: &TriMesh) -> VisibilitySet {
    let n = mesh.vertices.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (mesh.vertices[i], mesh.vertices[j]);
            let length = (b - a).norm();
            if length == 0.0 {
                continue;
            }
            if segment_intersects_brute_force(cage, &a, &b, 0.0, 1.0)
                && !segment_intersects_brute_force(mesh, &a, &b, ENDPOINT_CLIP, 1.0 - ENDPOINT_CLIP)
            {
                edges.push(VisibilityEdge {
                    i: i as u32,
                    j: j as u32,
                    length,
                });
            }
        }
    }
    VisibilitySet::from_edges(edges)
}

/// Total length of all visibility edges of one part.
pub fn visibility_concavity(edges: &VisibilitySet) -> f64 {
    edges.total_length()
}

/// Sum of per-part visibility concavities.
pub fn decomposition_visibility_concavity<'a>(parts: impl IntoIterator<Item = &'a VisibilitySet>) -> f64 {
    parts.into_iter().map(visibility_concavity).sum()
}

/// Cage at the default cell size followed by edge classification.
pub fn visibility_edges(mesh: &TriMesh, epsilon: f64) -> Result<VisibilitySet> {
    let cage = build_cage(mesh, epsilon, cage_resolution(mesh, epsilon))?;
    compute_visibility_edges(mesh, &cage)
}
