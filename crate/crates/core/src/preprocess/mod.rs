//! SDF remeshing: sample a signed distance field on a regular grid and
//! extract a level set with marching cubes.

mod tables;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};
use crate::spatial::SpatialIndex;
use tables::TRI_TABLE;

pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 512;
/// Cells of padding around the mesh bounding box.
pub const GRID_PADDING: usize = 3;
/// Minimum distance between a marching-cubes vertex and a grid node.
pub const NODE_CLEARANCE: f64 = 2e-6;
/// Remesh grid nodes sit this fraction of a cell off the bounding-box center.
pub const GRID_PHASE: f64 = 0.381966011250105;

/// Signed distances sampled at the nodes of a regular grid (negative inside).
#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    /// Cells along the longest side of the mesh bounding box.
    pub resolution: usize,
    /// Node counts per axis.
    pub dims: [usize; 3],
    pub origin: Point,
    pub cell_size: f64,
    pub values: Vec<f64>,
}

impl SdfGrid {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn node_position(&self, x: usize, y: usize, z: usize) -> Point {
        self.origin + nalgebra::Vector3::new(x as f64, y as f64, z as f64) * self.cell_size
    }

    /// Trilinear interpolation; `None` outside the grid.
    pub fn sample(&self, p: &Point) -> Option<f64> {
        let g = (p - self.origin) / self.cell_size;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            if !(g[k] >= 0.0) || g[k] > (self.dims[k] - 1) as f64 {
                return None;
            }
            let b = (g[k].floor() as usize).min(self.dims[k] - 2);
            base[k] = b;
            frac[k] = g[k] - b as f64;
        }
        let [x, y, z] = base;
        let [fx, fy, fz] = frac;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(self.value(x, y, z), self.value(x + 1, y, z), fx);
        let c10 = lerp(self.value(x, y + 1, z), self.value(x + 1, y + 1, z), fx);
        let c01 = lerp(self.value(x, y, z + 1), self.value(x + 1, y, z + 1), fx);
        let c11 = lerp(self.value(x, y + 1, z + 1), self.value(x + 1, y + 1, z + 1), fx);
        Some(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_resolution(resolution: usize) -> Result<()> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(Error::ResolutionOutOfRange(resolution));
    }
    Ok(())
}

/// Samples the signed distance to `mesh` on a grid with `resolution` cells
/// along the longest bounding-box side, padded by [`GRID_PADDING`] cells.
///
/// Inside/outside is a majority vote of crossing parity along the three
/// axis-parallel grid lines through each node.
pub fn build_sdf(mesh: &TriMesh, resolution: usize) -> Result<SdfGrid> {
    check_resolution(resolution)?;
    sdf_with(mesh, resolution, GRID_PADDING, GRID_PHASE, None)
}

/// Grid sampling with explicit padding. Nodes are shifted by `phase` cells
/// from a lattice centered on the bounding box. When `band` is set,
/// distances are clamped to it; iso-surfaces at levels within
/// `band - cell` are unaffected.
pub(crate) fn sdf_with(
    mesh: &TriMesh,
    resolution: usize,
    padding: usize,
    phase: f64,
    band: Option<f64>,
) -> Result<SdfGrid> {
    let index = SpatialIndex::build(mesh)?;
    let aabb = mesh.aabb();
    let longest = aabb.longest_side();
    if !(longest > 0.0) {
        return Err(Error::DegenerateInput("mesh has zero extent".into()));
    }
    let h = longest / resolution as f64;
    let ext = aabb.extent();
    let center = aabb.center();
    let mut dims = [0usize; 3];
    let mut origin = Point::origin();
    for k in 0..3 {
        let cells = ((ext[k] / h) - 1e-9).ceil().max(1.0) as usize;
        dims[k] = cells + 1 + 2 * padding;
        origin[k] = center[k] - h * ((dims[k] - 1) as f64 / 2.0 + phase);
    }
    let [nx, ny, nz] = dims;
    let total = nx * ny * nz;

    let inside = parity_votes(&index, dims, &origin, h);

    let limit = band.unwrap_or(f64::INFINITY);
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|n| {
            let (x, y, z) = (n % nx, (n / nx) % ny, n / (nx * ny));
            let p = origin + nalgebra::Vector3::new(x as f64, y as f64, z as f64) * h;
            let d = index.closest_point(&p, limit).map_or(limit, |c| c.distance);
            if inside[n] {
                -d
            } else {
                d
            }
        })
        .collect();

    Ok(SdfGrid {
        resolution,
        dims,
        origin,
        cell_size: h,
        values,
    })
}

/// Majority vote of crossing parity along the grid lines of all three axes.
fn parity_votes(index: &SpatialIndex, dims: [usize; 3], origin: &Point, h: f64) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut votes = vec![0u8; nx * ny * nz];
    let stride = [1, nx, nx * ny];
    for axis in 0..3 {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        let lines: Vec<(usize, usize)> = (0..dims[j])
            .flat_map(|b| (0..dims[i]).map(move |a| (a, b)))
            .collect();
        let per_line: Vec<Vec<f64>> = lines
            .par_iter()
            .map(|&(a, b)| {
                let mut start = *origin;
                start[i] += a as f64 * h;
                start[j] += b as f64 * h;
                let mut ts = Vec::new();
                index.axis_crossings(&start, axis, &mut ts);
                ts.sort_by(f64::total_cmp);
                ts
            })
            .collect();
        for (&(a, b), ts) in lines.iter().zip(&per_line) {
            let base = a * stride[i] + b * stride[j];
            let mut passed = 0;
            for s in 0..dims[axis] {
                let t = s as f64 * h;
                while passed < ts.len() && ts[passed] < t {
                    passed += 1;
                }
                if passed % 2 == 1 {
                    votes[base + s * stride[axis]] += 1;
                }
            }
        }
    }
    votes.into_iter().map(|v| v >= 2).collect()
}

// Corner offsets and edge endpoints in the table's convention.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (3, 2),
    (0, 3),
    (4, 5),
    (5, 6),
    (7, 6),
    (4, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Marching-cubes triangulation of `{x : sdf(x) = iso}` with outward
/// (towards larger values) orientation.
pub fn extract_isosurface(grid: &SdfGrid, iso: f64) -> Result<TriMesh> {
    if !(grid.min_value() < iso) || !(grid.max_value() >= iso) {
        return Err(Error::EmptySurface);
    }
    let [nx, ny, nz] = grid.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let boundary = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                if boundary && grid.value(x, y, z) < iso {
                    return Err(Error::OpenLevelSet);
                }
            }
        }
    }

    let total = nx * ny * nz;
    let mut edge_vertex = vec![u32::MAX; 3 * total];
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let h = grid.cell_size;

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut case = 0usize;
                let mut vals = [0.0; 8];
                for (c, off) in CORNERS.iter().enumerate() {
                    vals[c] = grid.value(x + off[0], y + off[1], z + off[2]);
                    if vals[c] < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                let row = &TRI_TABLE[case];
                let mut k = 0;
                while k < 16 && row[k] >= 0 {
                    let e = row[k] as usize;
                    if ids[e] == u32::MAX {
                        let (c0, c1) = EDGES[e];
                        let (o0, o1) = (CORNERS[c0], CORNERS[c1]);
                        let n0 = grid.index(x + o0[0], y + o0[1], z + o0[2]);
                        let axis = (0..3).find(|&a| o0[a] != o1[a]).unwrap();
                        let (v0, v1) = (vals[c0], vals[c1]);
                        // keep vertices off the grid nodes so the table's
                        // topology survives and no triangle degenerates
                        let margin = (NODE_CLEARANCE / h).min(0.01);
                        let t = ((iso - v0) / (v1 - v0)).clamp(margin, 1.0 - margin);
                        let slot = 3 * n0 + axis;
                        if edge_vertex[slot] == u32::MAX {
                            let p0 = grid.node_position(x + o0[0], y + o0[1], z + o0[2]);
                            let p1 = grid.node_position(x + o1[0], y + o1[1], z + o1[2]);
                            vertices.push(p0 + (p1 - p0) * t);
                            edge_vertex[slot] = (vertices.len() - 1) as u32;
                        }
                        ids[e] = edge_vertex[slot];
                    }
                    k += 1;
                }
                let mut k = 0;
                while k < 16 && row[k] >= 0 {
                    let (a, b, c) = (ids[row[k] as usize], ids[row[k + 1] as usize], ids[row[k + 2] as usize]);
                    // table winding faces the low-value side
                    triangles.push([a, c, b]);
                    k += 3;
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

/// SDF remeshing at iso level 0: closes small holes and evens out vertex
/// density.
pub fn remesh(mesh: &TriMesh, resolution: usize) -> Result<TriMesh> {
    check_resolution(resolution)?;
    let h = mesh.aabb().longest_side() / resolution as f64;
    let grid = sdf_with(mesh, resolution, GRID_PADDING, GRID_PHASE, Some(3.0 * h))?;
    extract_isosurface(&grid, 0.0)
}
