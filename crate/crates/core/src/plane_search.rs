//! Candidate cutting planes and the plane value Q_p.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh, Vec3};
use crate::visibility::VisibilitySet;

pub const DEFAULT_K: usize = 1024;
pub const DEFAULT_MAX_FLAT_PLANES: usize = 8;
/// Endpoints closer than this to a plane are on it.
pub const SIDE_TOLERANCE: f64 = 1e-9;
pub const FLAT_ANGLE_DEGREES: f64 = 2.0;
pub const FLAT_OFFSET_TOLERANCE: f64 = 1e-3;
/// Cluster members this close to the seed plane define the fitted plane.
pub const FLAT_CORE_TOLERANCE: f64 = crate::cutter::SNAP_DISTANCE;
/// Minimum cluster area as a fraction of the total surface area.
pub const FLAT_MIN_AREA_FRACTION: f64 = 0.02;
pub const FLAT_MULTIPLIER: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    FlatSurface { cluster: usize },
    EdgeBisector { i: u32, j: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuttingPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub provenance: Provenance,
    pub value_multiplier: f64,
}

impl CuttingPlane {
    /// Plane through `point` with the given normal, which is normalized.
    pub fn through(point: &Point, normal: Vec3) -> CuttingPlane {
        let normal = normal.normalize();
        CuttingPlane {
            normal,
            offset: normal.dot(&point.coords),
            provenance: Provenance::EdgeBisector { i: 0, j: 0 },
            value_multiplier: 1.0,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPlane {
    pub plane: CuttingPlane,
    /// Q_p without the multiplier.
    pub value: f64,
    pub score: f64,
}

/// Candidates sorted by descending score, ties by provenance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaneCandidateSet {
    pub candidates: Vec<ScoredPlane>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSearchConfig {
    pub k: usize,
    pub seed: u64,
    pub max_flat_planes: usize,
    pub flat_planes: bool,
}

impl Default for PlaneSearchConfig {
    fn default() -> Self {
        PlaneSearchConfig {
            k: DEFAULT_K,
            seed: 0,
            max_flat_planes: DEFAULT_MAX_FLAT_PLANES,
            flat_planes: true,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Bisector planes of up to `k` edges drawn uniformly without replacement.
/// An edge is drawn when its seeded hash is among the `k` smallest, so the
/// choice for one edge does not depend on which other edges exist.
pub fn sample_edge_planes(edges: &VisibilitySet, vertices: &[Point], k: usize, seed: u64) -> Vec<CuttingPlane> {
    let mut keyed: Vec<(u64, u32, u32)> = edges
        .pairs()
        .map(|(i, j)| {
            let h = splitmix64(seed ^ splitmix64(((i as u64) << 32) | j as u64));
            (h, i, j)
        })
        .collect();
    if k < keyed.len() {
        keyed.select_nth_unstable(k);
        keyed.truncate(k);
    }
    keyed.sort_unstable_by_key(|&(_, i, j)| (i, j));
    keyed
        .into_iter()
        .map(|(_, i, j)| {
            let (a, b) = (vertices[i as usize], vertices[j as usize]);
            let normal = (b - a).normalize();
            CuttingPlane {
                normal,
                offset: normal.dot(&nalgebra::center(&a, &b).coords),
                provenance: Provenance::EdgeBisector { i, j },
                value_multiplier: 1.0,
            }
        })
        .collect()
}

/// Planes of the largest nearly coplanar triangle clusters.
pub fn extract_flat_planes(mesh: &TriMesh, max_planes: usize) -> Vec<CuttingPlane> {
    struct Cluster {
        normal: Vec3,
        offset: f64,
        area: f64,
        members: Vec<usize>,
        first: usize,
    }
    let cos_tol = FLAT_ANGLE_DEGREES.to_radians().cos();
    let normal_cell = 2.0 * (FLAT_ANGLE_DEGREES.to_radians() / 2.0).sin();
    let total: f64 = mesh.surface_area();
    if !(total > 0.0) || max_planes == 0 {
        return Vec::new();
    }

    let mut order: Vec<(usize, f64)> = (0..mesh.triangles.len())
        .map(|t| (t, mesh.triangle_area(t)))
        .filter(|&(_, a)| a > 0.0)
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let key = |n: &Vec3, d: f64| -> [i64; 4] {
        [
            (n.x / normal_cell).floor() as i64,
            (n.y / normal_cell).floor() as i64,
            (n.z / normal_cell).floor() as i64,
            (d / FLAT_OFFSET_TOLERANCE).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 4], Vec<usize>> = HashMap::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    for (t, area) in order {
        let n = mesh.area_normal(t).normalize();
        let [a, b, c] = mesh.corners(t);
        let d = n.dot(&((a.coords + b.coords + c.coords) / 3.0));
        let base = key(&n, d);
        let mut found: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    for dd in -1..=1 {
                        let cell = [base[0] + dx, base[1] + dy, base[2] + dz, base[3] + dd];
                        for &c in grid.get(&cell).into_iter().flatten() {
                            let cl = &clusters[c];
                            if cl.normal.dot(&n) >= cos_tol
                                && (cl.offset - d).abs() <= FLAT_OFFSET_TOLERANCE
                                && found.is_none_or(|f| c < f)
                            {
                                found = Some(c);
                            }
                        }
                    }
                }
            }
        }
        match found {
            Some(c) => {
                let cl = &mut clusters[c];
                cl.area += area;
                cl.members.push(t);
                cl.first = cl.first.min(t);
            }
            None => {
                grid.entry(base).or_default().push(clusters.len());
                clusters.push(Cluster {
                    normal: n,
                    offset: d,
                    area,
                    members: vec![t],
                    first: t,
                });
            }
        }
    }

    let mut kept: Vec<&Cluster> = clusters
        .iter()
        .filter(|c| c.area >= FLAT_MIN_AREA_FRACTION * total)
        .collect();
    kept.sort_by(|a, b| b.area.total_cmp(&a.area).then(a.first.cmp(&b.first)));
    kept.truncate(max_planes);
    kept.iter()
        .enumerate()
        .map(|(rank, c)| {
            // fit on the members that lie in the seed plane
            let seed = |p: &Point| c.normal.dot(&p.coords) - c.offset;
            let core: Vec<usize> = c
                .members
                .iter()
                .copied()
                .filter(|&t| mesh.corners(t).iter().all(|p| seed(p).abs() <= FLAT_CORE_TOLERANCE))
                .collect();
            let core = if core.is_empty() { &c.members } else { &core };
            let (area, weighted) = core.iter().fold((0.0, Vec3::zeros()), |(a, w), &t| {
                (a + mesh.triangle_area(t), w + mesh.area_normal(t) / 2.0)
            });
            let normal = weighted.normalize();
            let offset = core
                .iter()
                .map(|&t| {
                    let [a, b, p] = mesh.corners(t);
                    mesh.triangle_area(t) * normal.dot(&((a.coords + b.coords + p.coords) / 3.0))
                })
                .sum::<f64>()
                / area;
            CuttingPlane {
                normal,
                offset,
                provenance: Provenance::FlatSurface { cluster: rank },
                value_multiplier: FLAT_MULTIPLIER,
            }
        })
        .collect()
}

/// Side of each triangle in a cut: -1 or +1. Triangles lying in the plane
/// go with the side their normal points away from.
pub(crate) fn triangle_side(sides: [i8; 3], area_normal: &Vec3, plane_normal: &Vec3) -> i8 {
    if sides.contains(&-1) {
        -1
    } else if sides.contains(&1) {
        1
    } else if area_normal.dot(plane_normal) >= 0.0 {
        -1
    } else {
        1
    }
}

/// Evaluates Q_p for many planes against one part.
///
/// An endpoint on the plane takes the side that all of its incident
/// triangles go to in the cut; when they go to both, the edge is not cut.
pub struct PlaneScorer<'a> {
    mesh: &'a TriMesh,
    edges: &'a VisibilitySet,
    incident_start: Vec<usize>,
    incident: Vec<u32>,
    normals: Vec<Vec3>,
}

impl<'a> PlaneScorer<'a> {
    pub fn new(mesh: &'a TriMesh, edges: &'a VisibilitySet) -> Self {
        let n = mesh.vertices.len();
        let mut count = vec![0usize; n + 1];
        for t in &mesh.triangles {
            for &v in t {
                count[v as usize + 1] += 1;
            }
        }
        for v in 0..n {
            count[v + 1] += count[v];
        }
        let mut fill = count.clone();
        let mut incident = vec![0u32; count[n]];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            for &v in t {
                incident[fill[v as usize]] = ti as u32;
                fill[v as usize] += 1;
            }
        }
        PlaneScorer {
            mesh,
            edges,
            incident_start: count,
            incident,
            normals: (0..mesh.triangles.len()).map(|t| mesh.area_normal(t)).collect(),
        }
    }

    fn raw_side(&self, plane: &CuttingPlane, v: usize) -> i8 {
        let d = plane.signed_distance(&self.mesh.vertices[v]);
        if d > SIDE_TOLERANCE {
            1
        } else if d < -SIDE_TOLERANCE {
            -1
        } else {
            0
        }
    }

    /// -1 or +1 when the vertex ends up on one side only, 0 otherwise.
    pub fn vertex_side(&self, plane: &CuttingPlane, v: usize) -> i8 {
        let s = self.raw_side(plane, v);
        if s != 0 {
            return s;
        }
        let mut side = 0;
        for &t in &self.incident[self.incident_start[v]..self.incident_start[v + 1]] {
            let tri = self.mesh.triangles[t as usize];
            let sides = tri.map(|u| self.raw_side(plane, u as usize));
            let ts = triangle_side(sides, &self.normals[t as usize], &plane.normal);
            if side == 0 {
                side = ts;
            } else if side != ts {
                return 0;
            }
        }
        side
    }

    /// Q_p: total length of the edges whose endpoints the cut separates.
    pub fn value(&self, plane: &CuttingPlane) -> f64 {
        let mut sum = 0.0;
        for e in self.edges.edges() {
            let a = self.vertex_side(plane, e.i as usize);
            if a == 0 {
                continue;
            }
            let b = self.vertex_side(plane, e.j as usize);
            if a * b < 0 {
                sum += e.length;
            }
        }
        sum
    }
}

pub fn plane_value(plane: &CuttingPlane, edges: &VisibilitySet, mesh: &TriMesh) -> f64 {
    PlaneScorer::new(mesh, edges).value(plane)
}

/// Scores bisector and flat-surface candidates in parallel and returns the
/// best one with the full sorted candidate list.
pub fn select_best_plane(
    mesh: &TriMesh,
    edges: &VisibilitySet,
    config: &PlaneSearchConfig,
) -> Result<(CuttingPlane, PlaneCandidateSet)> {
    let mut planes = sample_edge_planes(edges, &mesh.vertices, config.k.max(1), config.seed);
    if config.flat_planes {
        planes.extend(extract_flat_planes(mesh, config.max_flat_planes));
    }
    let scorer = PlaneScorer::new(mesh, edges);
    let mut candidates: Vec<ScoredPlane> = planes
        .par_iter()
        .map(|p| {
            let value = scorer.value(p);
            ScoredPlane {
                plane: *p,
                value,
                score: value * p.value_multiplier,
            }
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.plane.provenance.cmp(&b.plane.provenance))
    });
    match candidates.first() {
        Some(best) if best.score > 0.0 => {
            let plane = best.plane;
            Ok((plane, PlaneCandidateSet { candidates }))
        }
        _ => Err(Error::NoUsefulPlane),
    }
}
