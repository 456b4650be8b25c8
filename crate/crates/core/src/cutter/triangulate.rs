//! Ear-clipping triangulation of planar polygons with holes.
//!
//! Every input vertex is kept in the output, including collinear ones, so a
//! cap built from a cut loop shares all of its boundary vertices with the
//! side mesh it closes.

use crate::error::{Error, Result};

pub type P2 = [f64; 2];

#[inline]
fn cross(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Twice the signed area of a closed ring (positive when counter-clockwise).
pub fn signed_area2(points: &[P2]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

/// Even-odd point in polygon test.
pub fn point_in_ring(p: P2, ring: &[P2]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Triangulates a counter-clockwise outer ring with clockwise holes.
///
/// Indices in the output address the concatenation `outer ++ holes[0] ++ ...`.
pub fn triangulate_polygon(outer: &[P2], holes: &[Vec<P2>]) -> Result<Vec<[usize; 3]>> {
    if outer.len() < 3 {
        return Err(Error::DegenerateCut("polygon ring with fewer than 3 vertices".into()));
    }
    let mut points: Vec<P2> = outer.to_vec();
    let mut ring: Vec<usize> = (0..outer.len()).collect();
    let mut hole_rings = Vec::with_capacity(holes.len());
    for h in holes {
        if h.len() < 3 {
            return Err(Error::DegenerateCut("hole ring with fewer than 3 vertices".into()));
        }
        let start = points.len();
        points.extend_from_slice(h);
        hole_rings.push((start..start + h.len()).collect::<Vec<_>>());
    }

    let (lo, hi) = points.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    );
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let eps = 1e-13 * scale * scale;

    // rightmost-first, each hole bridged to the ring by a ray towards +x
    hole_rings.sort_by(|a, b| {
        let ma = a.iter().map(|&i| points[i][0]).fold(f64::NEG_INFINITY, f64::max);
        let mb = b.iter().map(|&i| points[i][0]).fold(f64::NEG_INFINITY, f64::max);
        mb.total_cmp(&ma).then(a[0].cmp(&b[0]))
    });
    for hole in &hole_rings {
        ring = bridge_hole(&points, ring, hole)?;
    }

    clip_ears(&points, &ring, eps)
}

fn bridge_hole(points: &[P2], ring: Vec<usize>, hole: &[usize]) -> Result<Vec<usize>> {
    // rightmost hole vertex, ties by lower y
    let (hpos, &m) = hole
        .iter()
        .enumerate()
        .max_by(|(_, &a), (_, &b)| {
            points[a][0]
                .total_cmp(&points[b][0])
                .then(points[b][1].total_cmp(&points[a][1]))
        })
        .unwrap();
    let mp = points[m];
    let n = ring.len();

    // nearest ring edge hit by the ray from m towards +x
    let mut best: Option<(f64, usize)> = None;
    for i in 0..n {
        let a = points[ring[i]];
        let b = points[ring[(i + 1) % n]];
        if (a[1] <= mp[1] && mp[1] <= b[1]) || (b[1] <= mp[1] && mp[1] <= a[1]) {
            let x = if a[1] == b[1] {
                a[0].min(b[0]).max(mp[0])
            } else {
                a[0] + (mp[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
            };
            if x >= mp[0] && best.is_none_or(|(bx, _)| x < bx) {
                best = Some((x, i));
            }
        }
    }
    let (hx, edge) = best.ok_or_else(|| Error::DegenerateCut("hole not enclosed by ring".into()))?;
    let a_pos = edge;
    let b_pos = (edge + 1) % n;
    let a = points[ring[a_pos]];
    let b = points[ring[b_pos]];
    let mut bridge_pos = if a[0] >= b[0] { a_pos } else { b_pos };
    let candidate = points[ring[bridge_pos]];

    if candidate[0] != hx || candidate[1] != mp[1] {
        // a ring vertex inside triangle (m, hit, candidate) may block the
        // bridge; take the one with the smallest angle to the ray
        let hit = [hx, mp[1]];
        let (t0, t1, t2) = if mp[1] < candidate[1] {
            (mp, hit, candidate)
        } else {
            (mp, candidate, hit)
        };
        let mut best_tan = f64::INFINITY;
        let mut best_dist = f64::INFINITY;
        for (pos, &v) in ring.iter().enumerate() {
            let p = points[v];
            if pos == bridge_pos || p[0] < mp[0] {
                continue;
            }
            let inside = cross(t0, t1, p) >= 0.0 && cross(t1, t2, p) >= 0.0 && cross(t2, t0, p) >= 0.0;
            if !inside {
                continue;
            }
            let dy = (mp[1] - p[1]).abs();
            let dx = p[0] - mp[0];
            if dx <= 0.0 {
                continue;
            }
            let tan = dy / dx;
            let prev = points[ring[(pos + n - 1) % n]];
            let next = points[ring[(pos + 1) % n]];
            if !locally_inside(prev, p, next, mp) {
                continue;
            }
            let dist = dx * dx + dy * dy;
            if tan < best_tan || (tan == best_tan && dist < best_dist) {
                best_tan = tan;
                best_dist = dist;
                bridge_pos = pos;
            }
        }
    }

    let mut out = Vec::with_capacity(ring.len() + hole.len() + 2);
    out.extend_from_slice(&ring[..=bridge_pos]);
    let hn = hole.len();
    for k in 0..=hn {
        out.push(hole[(hpos + k) % hn]);
    }
    out.push(ring[bridge_pos]);
    out.extend_from_slice(&ring[bridge_pos + 1..]);
    Ok(out)
}

/// Whether the direction `p -> q` points into the polygon interior at the
/// ring vertex `p` (with neighbors `prev`, `next`).
fn locally_inside(prev: P2, p: P2, next: P2, q: P2) -> bool {
    if cross(prev, p, next) < 0.0 {
        cross(p, q, next) >= 0.0 || cross(p, prev, q) >= 0.0
    } else {
        cross(p, q, prev) < 0.0 && cross(p, next, q) < 0.0
    }
}

fn clip_ears(points: &[P2], ring: &[usize], eps: f64) -> Result<Vec<[usize; 3]>> {
    let n = ring.len();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = vec![true; n];
    let pt = |i: usize| points[ring[i]];

    let corner = |prev: &[usize], next: &[usize], i: usize| cross(pt(prev[i]), pt(i), pt(next[i]));

    // vertices that can block an ear: reflex or flat ones
    let mut blocking: Vec<bool> = (0..n).map(|i| corner(&prev, &next, i) <= eps).collect();

    let is_ear = |prev: &[usize], next: &[usize], alive: &[bool], blocking: &[bool], i: usize, allow_flat: bool| {
        let (ia, ic) = (prev[i], next[i]);
        let (a, b, c) = (pt(ia), pt(i), pt(ic));
        let area = cross(a, b, c);
        if allow_flat {
            if area < -eps {
                return false;
            }
        } else if area <= eps {
            return false;
        }
        let mut j = next[ic];
        while j != ia {
            if alive[j] && blocking[j] {
                let p = pt(j);
                let coincident = p == a || p == b || p == c;
                if !coincident
                    && cross(a, b, p) >= -eps
                    && cross(b, c, p) >= -eps
                    && cross(c, a, p) >= -eps
                {
                    return false;
                }
            }
            j = next[j];
        }
        true
    };

    let mut out = Vec::with_capacity(n.saturating_sub(2));
    let mut remaining = n;
    let mut cur = 0;
    let mut misses = 0;
    let mut allow_flat = false;
    while remaining > 3 {
        if is_ear(&prev, &next, &alive, &blocking, cur, allow_flat) {
            let (a, c) = (prev[cur], next[cur]);
            out.push([ring[a], ring[cur], ring[c]]);
            alive[cur] = false;
            next[a] = c;
            prev[c] = a;
            remaining -= 1;
            blocking[a] = corner(&prev, &next, a) <= eps;
            blocking[c] = corner(&prev, &next, c) <= eps;
            cur = c;
            misses = 0;
            allow_flat = false;
        } else {
            cur = next[cur];
            misses += 1;
            if misses > remaining {
                if allow_flat {
                    return Err(Error::DegenerateCut("ear clipping found no ear".into()));
                }
                allow_flat = true;
                misses = 0;
            }
        }
    }
    let (a, c) = (prev[cur], next[cur]);
    out.push([ring[a], ring[cur], ring[c]]);
    Ok(out)
}
