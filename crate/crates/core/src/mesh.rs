//! Indexed triangle meshes, bounding boxes, similarity transforms and
//! basic mesh measures.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Triangles with an area below this (normalized units) count as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with counter-clockwise (outward) winding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut aabb = Aabb::empty();
        for p in points {
            aabb.grow(p);
        }
        aabb
    }

    pub fn grow(&mut self, p: &Point) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && self.max[k] >= other.max[k])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Point) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        let d = Vec3::repeat(pad);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }
}

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateInput(format!("non-positive scale {scale}")));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(Error::DegenerateInput(format!(
                "rotation matrix not orthonormal (error {err:e})"
            )));
        }
        Ok(Transform {
            rotation,
            translation,
            scale,
        })
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v * self.scale
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    pub fn apply_mesh(&self, mesh: &TriMesh) -> TriMesh {
        TriMesh {
            vertices: mesh.vertices.iter().map(|p| self.apply(p)).collect(),
            triangles: mesh.triangles.clone(),
        }
    }
}

/// Outcome of [`validate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub watertight: bool,
    pub orientable: bool,
    pub boundary_edges: usize,
    pub degenerate_triangles: usize,
}

impl TriMesh {
    /// Builds a mesh, checking index bounds and rejecting triangles that
    /// repeat a vertex.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range ({n} vertices)"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }
        if vertices.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        Ok(TriMesh {
            vertices,
            triangles,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized normal (twice the area vector) of triangle `t`.
    pub fn area_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.area_normal(t).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Sum of signed tetrahedron volumes against the origin.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (
                    &self.vertices[a as usize].coords,
                    &self.vertices[b as usize].coords,
                    &self.vertices[c as usize].coords,
                );
                a.dot(&b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn flip_winding(&mut self) {
        for tri in &mut self.triangles {
            tri.swap(1, 2);
        }
    }

    /// Flips all windings if the enclosed volume is negative.
    pub fn orient_outward(&mut self) {
        if self.signed_volume() < 0.0 {
            self.flip_winding();
        }
    }

    /// Drops triangles with area below [`DEGENERATE_AREA`] and any vertex no
    /// longer referenced.
    pub fn without_degenerate_triangles(&self) -> TriMesh {
        let keep: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| self.triangle_area(t) >= DEGENERATE_AREA)
            .collect();
        self.submesh(&keep)
    }

    /// Extracts the given triangles into a new mesh; vertices are renumbered
    /// in order of first use.
    pub fn submesh(&self, triangles: &[usize]) -> TriMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut out = Vec::with_capacity(triangles.len());
        for &t in triangles {
            let tri = self.triangles[t];
            let mapped = tri.map(|v| {
                *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v as usize]);
                    (vertices.len() - 1) as u32
                })
            });
            out.push(mapped);
        }
        TriMesh {
            vertices,
            triangles: out,
        }
    }

    /// Concatenates two meshes into one (no welding).
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        TriMesh {
            vertices,
            triangles,
        }
    }
}

/// Undirected edge key with the smaller index first.
#[inline]
pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Watertightness, orientability and degeneracy statistics.
pub fn validate(mesh: &TriMesh) -> ValidationReport {
    // undirected edge -> (incident triangles, directed a<b count)
    let mut edges: HashMap<(u32, u32), (u32, i32)> = HashMap::new();
    for &[a, b, c] in &mesh.triangles {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let e = edges.entry(edge_key(u, v)).or_insert((0, 0));
            e.0 += 1;
            e.1 += if u < v { 1 } else { -1 };
        }
    }
    let boundary_edges = edges.values().filter(|(n, _)| *n != 2).count();
    let orientable = edges.values().all(|&(n, dir)| n != 2 || dir == 0);
    let degenerate_triangles = (0..mesh.triangles.len())
        .filter(|&t| mesh.triangle_area(t) < DEGENERATE_AREA)
        .count();
    ValidationReport {
        watertight: boundary_edges == 0 && !mesh.triangles.is_empty(),
        orientable,
        boundary_edges,
        degenerate_triangles,
    }
}

/// Scales and translates the mesh so its bounding box is centered at the
/// origin with longest side 1. Returns the transform mapping the normalized
/// frame back to the input frame.
pub fn normalize(mesh: &TriMesh) -> Result<(TriMesh, Transform)> {
    if mesh.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let aabb = mesh.aabb();
    let longest = aabb.longest_side();
    if !(longest > 0.0) {
        return Err(Error::DegenerateInput("all vertices coincide".into()));
    }
    let center = aabb.center();
    let forward = Transform {
        rotation: Matrix3::identity(),
        translation: -center.coords / longest,
        scale: 1.0 / longest,
    };
    Ok((forward.apply_mesh(mesh), forward.inverse()))
}

/// Disjoint-set forest with path halving.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so component ids are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Splits the mesh into maximal groups of triangles connected through shared
/// undirected edges. Components are ordered by their first triangle.
pub fn connected_components(mesh: &TriMesh) -> Vec<TriMesh> {
    let n = mesh.triangles.len();
    let mut uf = UnionFind::new(n);
    let mut first_owner: HashMap<(u32, u32), usize> = HashMap::new();
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            match first_owner.entry(edge_key(u, v)) {
                std::collections::hash_map::Entry::Occupied(e) => uf.union(*e.get(), t),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(t);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for t in 0..n {
        let root = uf.find(t);
        let idx = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[idx].push(t);
    }
    groups.iter().map(|g| mesh.submesh(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn cube_volume_and_orientation() {
        let mut cube = shapes::unit_cube();
        assert!((cube.signed_volume() - 1.0).abs() < 1e-12);
        cube.flip_winding();
        assert!((cube.signed_volume() + 1.0).abs() < 1e-12);
        cube.orient_outward();
        assert!((cube.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l_prism_volume() {
        assert!((shapes::l_prism().signed_volume() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_cube() {
        let cube = shapes::cube_between(Point::origin(), Point::new(2.0, 2.0, 2.0));
        let (n, inv) = normalize(&cube).unwrap();
        let aabb = n.aabb();
        assert!((aabb.min - Point::new(-0.5, -0.5, -0.5)).norm() < 1e-12);
        assert!((aabb.max - Point::new(0.5, 0.5, 0.5)).norm() < 1e-12);
        assert!((inv.inverse().scale - 0.5).abs() < 1e-15);
        for (p, q) in cube.vertices.iter().zip(&n.vertices) {
            assert!((inv.apply(q) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let (once, _) = normalize(&shapes::l_prism()).unwrap();
        let (_, t) = normalize(&once).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn normalize_l_prism_volume() {
        let (n, _) = normalize(&shapes::l_prism()).unwrap();
        assert!((n.signed_volume() - 3.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_point_cloud() {
        let p = Point::new(1.0, 1.0, 1.0);
        let mesh = TriMesh {
            vertices: vec![p, p, p],
            triangles: vec![[0, 1, 2]],
        };
        assert!(matches!(normalize(&mesh), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn new_rejects_bad_indices() {
        let v = vec![Point::origin(); 3];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn components_of_disjoint_cubes() {
        let a = shapes::unit_cube();
        let b = shapes::cube_between(Point::new(3.0, 0.0, 0.0), Point::new(4.0, 1.0, 1.0));
        let comps = connected_components(&a.merged(&b));
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.triangles.len() == 12));
        assert_eq!(connected_components(&a).len(), 1);
    }

    #[test]
    fn components_cube_plus_isolated_triangle() {
        let cube = shapes::unit_cube();
        let tri = TriMesh {
            vertices: vec![
                Point::new(5.0, 0.0, 0.0),
                Point::new(6.0, 0.0, 0.0),
                Point::new(5.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
        };
        let merged = cube.merged(&tri);
        // brute-force oracle: grow components by repeated edge-sharing scans
        let n = merged.triangles.len();
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    let shares = merged.triangles[i].iter().filter(|v| merged.triangles[j].contains(v)).count() >= 2;
                    if shares && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut distinct = label.clone();
        distinct.sort();
        distinct.dedup();
        let comps = connected_components(&merged);
        assert_eq!(comps.len(), distinct.len());
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn validate_reports() {
        let cube = shapes::unit_cube();
        let r = validate(&cube);
        assert!(r.watertight && r.orientable);
        assert_eq!(r.boundary_edges, 0);

        let mut holed = cube.clone();
        holed.triangles.pop();
        let r = validate(&holed);
        assert!(!r.watertight);
        assert_eq!(r.boundary_edges, 3);

        let mut sliver = cube.clone();
        let base = sliver.vertices.len() as u32;
        sliver.vertices.extend([
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(2.0, 0.0, 0.0),
        ]);
        sliver.triangles.push([base, base + 1, base + 2]);
        // direct area computation of the appended triangle
        let [a, b, c] = sliver.corners(sliver.triangles.len() - 1);
        assert!(0.5 * (b - a).cross(&(c - a)).norm() < DEGENERATE_AREA);
        assert_eq!(validate(&sliver).degenerate_triangles, 1);
    }

    #[test]
    fn transform_rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Transform::new(m, Vec3::zeros(), 1.0).is_err());
        assert!(Transform::new(Matrix3::identity(), Vec3::zeros(), 0.0).is_err());
    }
}
