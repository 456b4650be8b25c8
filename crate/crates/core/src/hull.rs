//! 3D convex hulls by quickhull.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh, Vec3};

/// Offset applied on both sides of a flat point set by [`convex_hull_padded`].
pub const FLAT_PADDING: f64 = 1e-6;
/// Point sets flatter than this (relative to their extent) have no hull.
pub const COPLANAR_TOLERANCE: f64 = 1e-9;
/// Points closer than this (relative to the extent) to a hull face are
/// treated as lying on it.
pub const MERGE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub mesh: TriMesh,
    pub volume: f64,
}

impl ConvexHull {
    /// Outward unit normals and offsets of the hull faces.
    pub fn planes(&self) -> Vec<(Vec3, f64)> {
        self.mesh
            .triangles
            .iter()
            .filter_map(|t| {
                let [a, b, c] = t.map(|i| self.mesh.vertices[i as usize]);
                let n = (b - a).cross(&(c - a));
                let len = n.norm();
                (len > 0.0).then(|| {
                    let n = n / len;
                    (n, n.dot(&a.coords))
                })
            })
            .collect()
    }

    /// True when `p` is on the inner side of every face plane within `tol`.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.planes().iter().all(|(n, d)| n.dot(&p.coords) - d <= tol)
    }
}

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[Point], v: [usize; 3]) -> Face {
        let [a, b, c] = v.map(|i| points[i]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let normal = if len > 0.0 { n / len } else { Vec3::zeros() };
        Face {
            v,
            normal,
            offset: normal.dot(&a.coords),
            outside: Vec::new(),
            alive: true,
        }
    }

    fn distance(&self, p: &Point) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

fn farthest_from<F: Fn(&Point) -> f64>(points: &[Point], f: F) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = f(p);
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

/// Convex hull of `points`. Hull vertices keep their input order.
pub fn convex_hull(points: &[Point]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(Error::DegenerateHull(format!("{} points", points.len())));
    }
    if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(Error::DegenerateHull("non-finite point".into()));
    }
    let max_abs: f64 = (0..3)
        .map(|k| points.iter().map(|p| p[k].abs()).fold(0.0, f64::max))
        .sum();

    // initial simplex
    let mut extremes = Vec::new();
    for k in 0..3 {
        extremes.push(farthest_from(points, |p| -p[k]).0);
        extremes.push(farthest_from(points, |p| p[k]).0);
    }
    let (mut i0, mut i1, mut span) = (0, 0, -1.0);
    for &a in &extremes {
        for &b in &extremes {
            let d = (points[a] - points[b]).norm();
            if d > span {
                (i0, i1, span) = (a, b, d);
            }
        }
    }
    if !(span > 0.0) {
        return Err(Error::DegenerateHull("all points coincide".into()));
    }
    let flat = COPLANAR_TOLERANCE * span;
    // points this close to a face are dropped, which keeps nearly coplanar
    // clusters from producing sliver faces with unreliable normals
    let tol = (3.0 * f64::EPSILON * max_abs).max(MERGE_TOLERANCE * span);
    let axis = (points[i1] - points[i0]) / span;
    let (i2, d2) = farthest_from(points, |p| {
        let r = p - points[i0];
        (r - axis * axis.dot(&r)).norm()
    });
    if d2 <= flat {
        return Err(Error::DegenerateHull("points are collinear".into()));
    }
    let n = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let (i3, _) = farthest_from(points, |p| n.dot(&(p - points[i0])).abs());
    let d3 = n.dot(&(points[i3] - points[i0]));
    if d3.abs() <= flat {
        return Err(Error::DegenerateHull("points are coplanar".into()));
    }

    let mut faces: Vec<Face> = Vec::new();
    let simplex = if d3 > 0.0 {
        [[i0, i2, i1], [i0, i1, i3], [i1, i2, i3], [i2, i0, i3]]
    } else {
        [[i0, i1, i2], [i1, i0, i3], [i2, i1, i3], [i0, i2, i3]]
    };
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for v in simplex {
        let f = faces.len();
        faces.push(Face::new(points, v));
        for e in 0..3 {
            edge_face.insert((v[e], v[(e + 1) % 3]), f);
        }
    }
    let seeds = [i0, i1, i2, i3];
    for (i, p) in points.iter().enumerate() {
        if seeds.contains(&i) {
            continue;
        }
        assign(&mut faces, 0..4, i, p, tol);
    }

    let mut cursor = 0;
    loop {
        while cursor < faces.len() && !(faces[cursor].alive && !faces[cursor].outside.is_empty()) {
            cursor += 1;
        }
        if cursor == faces.len() {
            break;
        }
        let face = &faces[cursor];
        let apex = *face
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                face.distance(&points[a])
                    .total_cmp(&face.distance(&points[b]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        let eye = points[apex];

        // visible region by flood fill from the current face
        let mut visible = vec![cursor];
        let mut seen = std::collections::HashSet::from([cursor]);
        let mut k = 0;
        while k < visible.len() {
            let v = faces[visible[k]].v;
            k += 1;
            for e in 0..3 {
                let g = edge_face[&(v[(e + 1) % 3], v[e])];
                if !seen.contains(&g) && faces[g].distance(&eye) > tol {
                    seen.insert(g);
                    visible.push(g);
                }
            }
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for e in 0..3 {
                let (a, b) = (v[e], v[(e + 1) % 3]);
                if !seen.contains(&edge_face[&(b, a)]) {
                    horizon.push((a, b));
                }
            }
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
            let v = faces[f].v;
            for e in 0..3 {
                edge_face.remove(&(v[e], v[(e + 1) % 3]));
            }
        }
        let first = faces.len();
        for &(a, b) in &horizon {
            let f = faces.len();
            let v = [a, b, apex];
            faces.push(Face::new(points, v));
            for e in 0..3 {
                edge_face.insert((v[e], v[(e + 1) % 3]), f);
            }
        }
        orphans.sort_unstable();
        let end = faces.len();
        for i in orphans {
            if i != apex {
                assign(&mut faces, first..end, i, &points[i], tol);
            }
        }
    }

    let alive: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
    let triangles = canonical_triangles(points, &alive, 4.0 * tol);
    let mut used: Vec<usize> = triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut remap = vec![u32::MAX; points.len()];
    for (k, &i) in used.iter().enumerate() {
        remap[i] = k as u32;
    }
    let mesh = TriMesh {
        vertices: used.iter().map(|&i| points[i]).collect(),
        triangles: triangles.iter().map(|t| t.map(|i| remap[i])).collect(),
    };
    let volume = mesh.signed_volume();
    Ok(ConvexHull { mesh, volume })
}

/// Merges coplanar faces into facets, keeps only facet corners and
/// retriangulates each facet as a fan from its lowest index corner.
/// Triangles come out rotated to lead with their lowest index and sorted.
fn canonical_triangles(points: &[Point], faces: &[&Face], tol: f64) -> Vec<[usize; 3]> {
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for e in 0..3 {
            edge_face.insert((face.v[e], face.v[(e + 1) % 3]), f);
        }
    }
    let mut group = vec![usize::MAX; faces.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..faces.len() {
        if group[seed] != usize::MAX {
            continue;
        }
        let g = groups.len();
        group[seed] = g;
        let mut members = vec![seed];
        let mut k = 0;
        while k < members.len() {
            let v = faces[members[k]].v;
            k += 1;
            for e in 0..3 {
                let Some(&h) = edge_face.get(&(v[(e + 1) % 3], v[e])) else { continue };
                let coplanar = faces[h].normal.dot(&faces[seed].normal) > 0.0
                    && faces[h].v.iter().all(|&i| faces[seed].distance(&points[i]).abs() <= tol);
                if group[h] == usize::MAX && coplanar {
                    group[h] = g;
                    members.push(h);
                }
            }
        }
        groups.push(members);
    }

    // boundary loops of each facet
    let mut loops: Vec<Option<Vec<usize>>> = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut simple = true;
        for &f in members {
            let v = faces[f].v;
            for e in 0..3 {
                let (a, b) = (v[e], v[(e + 1) % 3]);
                if edge_face.get(&(b, a)).is_none_or(|&h| group[h] != g) {
                    simple &= next.insert(a, b).is_none();
                }
            }
        }
        let start = next.keys().copied().min();
        let walk = start.filter(|_| simple).and_then(|start| {
            let mut ring = vec![start];
            let mut at = next[&start];
            while at != start {
                if ring.len() > next.len() {
                    return None;
                }
                ring.push(at);
                at = *next.get(&at)?;
            }
            (ring.len() == next.len()).then_some(ring)
        });
        loops.push(walk);
    }

    let mut corner = vec![false; points.len()];
    for ring in loops.iter().flatten() {
        let n = ring.len();
        for k in 0..n {
            let (a, p, b) = (points[ring[(k + n - 1) % n]], points[ring[k]], points[ring[(k + 1) % n]]);
            let ab = b - a;
            let len = ab.norm();
            let off = if len > 0.0 { ab.cross(&(p - a)).norm() / len } else { (p - a).norm() };
            if off > tol {
                corner[ring[k]] = true;
            }
        }
    }

    let mut triangles = Vec::new();
    for (members, ring) in groups.iter().zip(&loops) {
        let polygon: Option<Vec<usize>> = ring.as_ref().map(|r| r.iter().copied().filter(|&i| corner[i]).collect());
        match polygon {
            Some(poly) if poly.len() >= 3 => {
                let first = (0..poly.len()).min_by_key(|&k| poly[k]).unwrap();
                let poly: Vec<usize> = (0..poly.len()).map(|k| poly[(first + k) % poly.len()]).collect();
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => triangles.extend(members.iter().map(|&f| faces[f].v)),
        }
    }
    for t in &mut triangles {
        let k = (0..3).min_by_key(|&k| t[k]).unwrap();
        t.rotate_left(k);
    }
    triangles.sort_unstable();
    triangles
}

fn assign(faces: &mut [Face], range: std::ops::Range<usize>, i: usize, p: &Point, tol: f64) {
    let mut best: Option<(usize, f64)> = None;
    for f in range {
        let d = faces[f].distance(p);
        if d > tol && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((f, d));
        }
    }
    if let Some((f, _)) = best {
        faces[f].outside.push(i);
    }
}

/// Like [`convex_hull`], but a flat point set is thickened by
/// [`FLAT_PADDING`] along its best-fit normal.
pub fn convex_hull_padded(points: &[Point]) -> Result<ConvexHull> {
    match convex_hull(points) {
        Err(Error::DegenerateHull(_)) if points.len() >= 3 => {
            let n = points.len() as f64;
            let c = points.iter().fold(Vec3::zeros(), |s, p| s + p.coords) / n;
            let cov = points.iter().fold(Matrix3::zeros(), |m, p| {
                let r = p.coords - c;
                m + r * r.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let k = eig.eigenvalues.imin();
            let normal: Vec3 = eig.eigenvectors.column(k).into_owned();
            let padded: Vec<Point> = points
                .iter()
                .flat_map(|p| [p + normal * FLAT_PADDING, p - normal * FLAT_PADDING])
                .collect();
            convex_hull(&padded)
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;
    use crate::shapes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(points: &[Point], hull: &ConvexHull) {
        let r = validate(&hull.mesh);
        assert!(r.watertight && r.orientable, "{r:?}");
        assert!(hull.volume > 0.0);
        for (n, d) in hull.planes() {
            for p in points {
                assert!(n.dot(&p.coords) - d <= 1e-7);
            }
        }
    }

    #[test]
    fn cube_corners() {
        let cube = shapes::unit_cube();
        let hull = convex_hull(&cube.vertices).unwrap();
        assert_eq!(hull.mesh.vertices.len(), 8);
        assert!((hull.volume - 1.0).abs() < 1e-12);
        check(&cube.vertices, &hull);

        let mut pts = cube.vertices.clone();
        pts.push(Point::new(0.5, 0.5, 0.5));
        pts.push(Point::new(0.5, 0.5, 1.0));
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.mesh.vertices.len(), 8);
        assert!((hull.volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_ball_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        while pts.len() < 200 {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() <= 1.0 {
                pts.push(Point::from(p));
            }
        }
        let hull = convex_hull(&pts).unwrap();
        check(&pts, &hull);
        assert!(hull.volume <= 4.0 / 3.0 * std::f64::consts::PI);
    }

    #[test]
    fn sphere_and_grid_points() {
        let sphere = shapes::uv_sphere(Point::origin(), 1.0, 16, 32);
        let hull = convex_hull(&sphere.vertices).unwrap();
        assert_eq!(hull.mesh.vertices.len(), sphere.vertices.len());
        check(&sphere.vertices, &hull);
        // many coplanar and cospherical ties
        let mut grid = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    grid.push(Point::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let hull = convex_hull(&grid).unwrap();
        check(&grid, &hull);
        assert!((hull.volume - 64.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let square = [
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        assert!(matches!(convex_hull(&square), Err(Error::DegenerateHull(_))));
        assert!(matches!(convex_hull(&square[..3]), Err(Error::DegenerateHull(_))));
        let padded = convex_hull_padded(&square).unwrap();
        assert!((padded.volume - 2e-6).abs() < 1e-12);
        let line: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 0.0, 0.0)).collect();
        assert!(convex_hull_padded(&line).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hull_contains_all_points(seed in any::<u64>(), n in 4usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let hull = convex_hull(&pts).unwrap();
            check(&pts, &hull);
            let again = convex_hull(&pts).unwrap();
            prop_assert_eq!(hull.mesh, again.mesh);
        }
    }
}
