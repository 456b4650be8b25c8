//! Bounding-volume hierarchy over the triangles of one mesh, answering
//! segment intersection, closest-point and axis-parallel crossing queries.

use crate::error::{Error, Result};
use crate::mesh::{Aabb, Point, TriMesh, Vec3};

/// Barycentric slack for segment/triangle hits. Grazing contacts within this
/// margin of a triangle boundary count as hits.
pub const GRAZE_TOLERANCE: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    aabb: Aabb,
    /// Leaf: first slot in `order`; inner: index of the left child
    /// (the right child follows the whole left subtree).
    first: u32,
    /// Leaf: triangle count; inner: 0.
    count: u32,
    right: u32,
}

/// Median-split BVH with up to four triangles per leaf.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Point; 3]>,
}

/// Result of a closest-point query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Closest {
    pub distance: f64,
    pub triangle: usize,
    pub point: Point,
}

impl SpatialIndex {
    pub fn build(mesh: &TriMesh) -> Result<Self> {
        if mesh.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let tris: Vec<[Point; 3]> = (0..mesh.triangles.len()).map(|t| mesh.corners(t)).collect();
        let diag = mesh.aabb().extent().norm().max(1e-300);
        let pad = 1e-8 * diag;
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t).padded(pad)).collect();
        let centroids: Vec<Point> = tris
            .iter()
            .map(|t| Point::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        build_recursive(&mut nodes, &mut order, 0, tris.len(), &boxes, &centroids);
        let tris = order.iter().map(|&t| tris[t as usize]).collect();
        Ok(SpatialIndex { nodes, order, tris })
    }

    pub fn root_aabb(&self) -> Aabb {
        self.nodes[0].aabb
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Whether any triangle meets the segment `a + t (b - a)` for
    /// `t` in `[t_min, t_max]`.
    pub fn segment_intersects(&self, a: &Point, b: &Point, t_min: f64, t_max: f64) -> bool {
        let d = b - a;
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let (lo, hi) = (t_min - GRAZE_TOLERANCE, t_max + GRAZE_TOLERANCE);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !segment_box(a, &d, &inv, lo, hi, &node.aabb) {
                continue;
            }
            if node.count > 0 {
                let s = node.first as usize;
                for tri in &self.tris[s..s + node.count as usize] {
                    if segment_hits_triangle(a, &d, t_min, t_max, tri) {
                        return true;
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.right;
                sp += 2;
            }
        }
        false
    }

    /// Nearest surface point to `p`, searching no farther than `max_distance`.
    pub fn closest_point(&self, p: &Point, max_distance: f64) -> Option<Closest> {
        let mut best_d2 = max_distance * max_distance;
        let mut best: Option<(usize, Point)> = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.aabb.distance_squared(p) > best_d2 {
                continue;
            }
            if node.count > 0 {
                let s = node.first as usize;
                for (k, tri) in self.tris[s..s + node.count as usize].iter().enumerate() {
                    let q = closest_point_on_triangle(p, tri);
                    let d2 = (q - p).norm_squared();
                    if d2 <= best_d2 {
                        best_d2 = d2;
                        best = Some((s + k, q));
                    }
                }
            } else {
                let (l, r) = (node.first as usize, node.right as usize);
                let dl = self.nodes[l].aabb.distance_squared(p);
                let dr = self.nodes[r].aabb.distance_squared(p);
                // nearer child on top
                if dl <= dr {
                    stack[sp] = r as u32;
                    stack[sp + 1] = l as u32;
                } else {
                    stack[sp] = l as u32;
                    stack[sp + 1] = r as u32;
                }
                sp += 2;
            }
        }
        best.map(|(slot, point)| Closest {
            distance: best_d2.sqrt(),
            triangle: self.order[slot] as usize,
            point,
        })
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Point) -> f64 {
        self.closest_point(p, f64::INFINITY)
            .map(|c| c.distance)
            .unwrap_or(f64::INFINITY)
    }

    /// Parameters `t` (unsorted) where the full line `origin + t * e_axis`
    /// crosses the surface. Shared edges and vertices are attributed to
    /// exactly one triangle of a consistently oriented sheet, so crossing
    /// parity is exact on closed meshes.
    pub fn axis_crossings(&self, origin: &Point, axis: usize, out: &mut Vec<f64>) {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        let (oi, oj) = (origin[i], origin[j]);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let b = &node.aabb;
            if oi < b.min[i] || oi > b.max[i] || oj < b.min[j] || oj > b.max[j] {
                continue;
            }
            if node.count > 0 {
                let s = node.first as usize;
                for tri in &self.tris[s..s + node.count as usize] {
                    if let Some(t) = axis_crossing(tri, axis, i, j, oi, oj) {
                        out.push(t - origin[axis]);
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.right;
                sp += 2;
            }
        }
    }

    /// Point-in-mesh by majority vote of three axis-parallel parity tests.
    pub fn contains_point(&self, p: &Point) -> bool {
        let mut votes = 0;
        let mut buf = Vec::new();
        for axis in 0..3 {
            buf.clear();
            self.axis_crossings(p, axis, &mut buf);
            if buf.iter().filter(|&&t| t > 0.0).count() % 2 == 1 {
                votes += 1;
            }
        }
        votes >= 2
    }

    /// Consistency check of the hierarchy invariants.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![false; self.tris.len()];
        for node in &self.nodes {
            if node.count > 0 {
                for slot in node.first as usize..(node.first + node.count) as usize {
                    let t = self.order[slot] as usize;
                    if seen[t] {
                        return false;
                    }
                    seen[t] = true;
                    if !node.aabb.contains(&Aabb::from_points(&self.tris[slot])) {
                        return false;
                    }
                }
            } else {
                let l = &self.nodes[node.first as usize];
                let r = &self.nodes[node.right as usize];
                if !node.aabb.contains(&l.aabb) || !node.aabb.contains(&r.aabb) {
                    return false;
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Point],
) -> u32 {
    let slice = &mut order[start..end];
    let aabb = slice
        .iter()
        .fold(Aabb::empty(), |acc, &t| acc.merge(&boxes[t as usize]));
    let id = nodes.len();
    nodes.push(Node {
        aabb,
        first: start as u32,
        count: (end - start) as u32,
        right: 0,
    });
    if end - start <= LEAF_SIZE {
        return id as u32;
    }
    let cbox = Aabb::from_points(slice.iter().map(|&t| &centroids[t as usize]));
    let ext = cbox.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build_recursive(nodes, order, start, start + mid, boxes, centroids);
    let right = build_recursive(nodes, order, start + mid, end, boxes, centroids);
    nodes[id].first = left;
    nodes[id].right = right;
    nodes[id].count = 0;
    id as u32
}

#[inline]
fn segment_box(a: &Point, d: &Vec3, inv: &Vec3, mut lo: f64, mut hi: f64, b: &Aabb) -> bool {
    for k in 0..3 {
        if d[k] == 0.0 {
            if a[k] < b.min[k] || a[k] > b.max[k] {
                return false;
            }
            continue;
        }
        let mut t0 = (b.min[k] - a[k]) * inv[k];
        let mut t1 = (b.max[k] - a[k]) * inv[k];
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        lo = lo.max(t0);
        hi = hi.min(t1);
        if lo > hi {
            return false;
        }
    }
    true
}

/// Conservative segment/triangle test: barycentric slack of
/// [`GRAZE_TOLERANCE`] and a matching slack on the parameter range. Segments
/// lying in the triangle's plane count when they overlap it.
pub fn segment_hits_triangle(a: &Point, d: &Vec3, t_min: f64, t_max: f64, tri: &[Point; 3]) -> bool {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = d.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm() * d.norm();
    if det.abs() <= 1e-12 * scale {
        return coplanar_segment_hits(a, d, t_min, t_max, tri);
    }
    let inv = 1.0 / det;
    let s = a - tri[0];
    let u = s.dot(&pvec) * inv;
    if !(-GRAZE_TOLERANCE..=1.0 + GRAZE_TOLERANCE).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -GRAZE_TOLERANCE || u + v > 1.0 + GRAZE_TOLERANCE {
        return false;
    }
    let t = e2.dot(&q) * inv;
    t >= t_min - GRAZE_TOLERANCE && t <= t_max + GRAZE_TOLERANCE
}

fn coplanar_segment_hits(a: &Point, d: &Vec3, t_min: f64, t_max: f64, tri: &[Point; 3]) -> bool {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let nn = n.norm();
    if nn == 0.0 {
        return false;
    }
    let n = n / nn;
    let p = a + d * t_min;
    let q = a + d * t_max;
    let span = (tri[1] - tri[0]).norm().max(d.norm());
    let tol = GRAZE_TOLERANCE * span;
    if n.dot(&(p - tri[0])).abs() > tol || n.dot(&(q - tri[0])).abs() > tol {
        return false;
    }
    // drop the dominant axis of the normal
    let k = n.iamax();
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let to2 = |x: &Point| [x[i], x[j]];
    let t2 = [to2(&tri[0]), to2(&tri[1]), to2(&tri[2])];
    let (p2, q2) = (to2(&p), to2(&q));
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let sign = orient(t2[0], t2[1], t2[2]).signum();
    let inside = |x: [f64; 2]| (0..3).all(|m| sign * orient(t2[m], t2[(m + 1) % 3], x) >= -tol * span);
    if inside(p2) || inside(q2) {
        return true;
    }
    (0..3).any(|m| segments_cross_2d(p2, q2, t2[m], t2[(m + 1) % 3], tol * span))
}

fn segments_cross_2d(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2], tol: f64) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 <= tol) && (d3 * d4 <= tol) && {
        // reject collinear disjoint spans via bounding boxes
        let overlap = |p: f64, q: f64, r: f64, s: f64| p.min(q) <= r.max(s) + tol && r.min(s) <= p.max(q) + tol;
        overlap(a[0], b[0], c[0], d[0]) && overlap(a[1], b[1], c[1], d[1])
    }
}

#[inline]
fn top_left(dx: f64, dy: f64) -> bool {
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Crossing of the line through `(oi, oj)` parallel to `axis` with `tri`.
/// Edge functions are evaluated on origin-relative coordinates so a shared
/// edge yields exactly negated values in its two triangles.
fn axis_crossing(tri: &[Point; 3], axis: usize, i: usize, j: usize, oi: f64, oj: f64) -> Option<f64> {
    let p = [
        [tri[0][i] - oi, tri[0][j] - oj],
        [tri[1][i] - oi, tri[1][j] - oj],
        [tri[2][i] - oi, tri[2][j] - oj],
    ];
    // w[m] weighs vertex m and belongs to the edge opposite to it
    let w = [
        p[1][0] * p[2][1] - p[1][1] * p[2][0],
        p[2][0] * p[0][1] - p[2][1] * p[0][0],
        p[0][0] * p[1][1] - p[0][1] * p[1][0],
    ];
    let det = w[0] + w[1] + w[2];
    if det == 0.0 {
        return None;
    }
    let s = det.signum();
    for m in 0..3 {
        let ws = w[m] * s;
        if ws < 0.0 {
            return None;
        }
        if ws == 0.0 {
            let (from, to) = (p[(m + 1) % 3], p[(m + 2) % 3]);
            if !top_left((to[0] - from[0]) * s, (to[1] - from[1]) * s) {
                return None;
            }
        }
    }
    Some((w[0] * tri[0][axis] + w[1] * tri[1][axis] + w[2] * tri[2][axis]) / det)
}

/// Closest point on a triangle (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point, tri: &[Point; 3]) -> Point {
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Brute-force segment test over every triangle of `mesh`.
pub fn segment_intersects_brute_force(mesh: &TriMesh, a: &Point, b: &Point, t_min: f64, t_max: f64) -> bool {
    let d = b - a;
    (0..mesh.triangles.len()).any(|t| segment_hits_triangle(a, &d, t_min, t_max, &mesh.corners(t)))
}
