//! Plane cuts of closed meshes with capped cross-sections.

pub mod triangulate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{connected_components, validate, Point, TriMesh, Vec3};
use crate::plane_search::{triangle_side, CuttingPlane};
use triangulate::{point_in_ring, signed_area2, triangulate_polygon, P2};

/// Vertices closer than this to the cutting plane are moved onto it.
pub const SNAP_DISTANCE: f64 = 1e-7;
/// Allowed relative volume change of a cut.
pub const VOLUME_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Negative,
    Positive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexOrigin {
    Original(u32),
    OnPlane,
}

#[derive(Clone, Debug)]
pub struct CutResult {
    pub negative: TriMesh,
    pub positive: TriMesh,
    /// Cross-section loops, counter-clockwise seen from the positive side
    /// for outer boundaries and clockwise for holes.
    pub caps: Vec<Vec<Point>>,
    pub negative_origin: Vec<VertexOrigin>,
    pub positive_origin: Vec<VertexOrigin>,
}

fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let k = n.iamin();
    let mut axis = Vec3::zeros();
    axis[k] = 1.0;
    let u = n.cross(&axis).normalize();
    (u, n.cross(&u))
}

/// Splits `mesh` by `plane` into the parts below and above it, closing both
/// with triangulated caps.
pub fn cut_by_plane(mesh: &TriMesh, plane: &CuttingPlane) -> Result<CutResult> {
    let n = plane.normal;
    let mut vertices = mesh.vertices.clone();
    let mut dist = Vec::with_capacity(vertices.len());
    let mut class = Vec::with_capacity(vertices.len());
    for v in vertices.iter_mut() {
        let d = plane.signed_distance(v);
        if d.abs() <= SNAP_DISTANCE {
            *v -= n * d;
            dist.push(0.0);
            class.push(0i8);
        } else {
            dist.push(d);
            class.push(if d > 0.0 { 1 } else { -1 });
        }
    }
    let original = vertices.len();
    let mut crossing: HashMap<(u32, u32), u32> = HashMap::new();
    let mut split_point = |a: u32, b: u32, vertices: &mut Vec<Point>| -> u32 {
        let key = (a.min(b), a.max(b));
        *crossing.entry(key).or_insert_with(|| {
            let (p, q) = (key.0 as usize, key.1 as usize);
            let t = dist[p] / (dist[p] - dist[q]);
            let x = vertices[p] + (vertices[q] - vertices[p]) * t;
            vertices.push(x - n * plane.signed_distance(&x));
            (vertices.len() - 1) as u32
        })
    };

    let mut neg: Vec<[u32; 3]> = Vec::new();
    let mut pos: Vec<[u32; 3]> = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let s = tri.map(|v| class[v as usize]);
        if !(s.contains(&-1) && s.contains(&1)) {
            match triangle_side(s, &mesh.area_normal(t), &n) {
                -1 => neg.push(*tri),
                _ => pos.push(*tri),
            }
            continue;
        }
        // rotate so the odd one out (or the on-plane vertex) comes first
        let r = (0..3)
            .find(|&k| s[k] == 0)
            .or_else(|| (0..3).find(|&k| s[k] != s[(k + 1) % 3] && s[k] != s[(k + 2) % 3]))
            .unwrap();
        let [a, b, c] = [tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]];
        let sa = s[r];
        if sa == 0 {
            let m = split_point(b, c, &mut vertices);
            let (first, second) = ([a, b, m], [a, m, c]);
            if s[(r + 1) % 3] < 0 {
                neg.push(first);
                pos.push(second);
            } else {
                pos.push(first);
                neg.push(second);
            }
        } else {
            let mab = split_point(a, b, &mut vertices);
            let mca = split_point(c, a, &mut vertices);
            let (lone, pair) = if sa < 0 { (&mut neg, &mut pos) } else { (&mut pos, &mut neg) };
            lone.push([a, mab, mca]);
            pair.push([mab, b, c]);
            pair.push([mab, c, mca]);
        }
    }
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::EmptySide);
    }

    let loops = cap_loops(&neg, &vertices, &n)?;
    let (u, v) = plane_basis(&n);
    let to2 = |p: &Point| -> P2 { [u.dot(&p.coords), v.dot(&p.coords)] };
    let rings: Vec<Vec<P2>> = loops.iter().map(|l| l.iter().map(|&i| to2(&vertices[i as usize])).collect()).collect();
    let areas: Vec<f64> = rings.iter().map(|r| signed_area2(r)).collect();
    let outers: Vec<usize> = (0..rings.len()).filter(|&i| areas[i] > 0.0).collect();
    let mut holes_of: Vec<Vec<usize>> = vec![Vec::new(); rings.len()];
    for h in (0..rings.len()).filter(|&i| areas[i] <= 0.0) {
        let mut best: Option<(usize, usize)> = None;
        for &o in &outers {
            let hits = rings[h].iter().filter(|&&p| point_in_ring(p, &rings[o])).count();
            let better = match best {
                None => hits > 0,
                Some((b, bh)) => hits > bh || (hits == bh && areas[o] < areas[b]),
            };
            if better {
                best = Some((o, hits));
            }
        }
        match best {
            Some((o, _)) => holes_of[o].push(h),
            None => return Err(Error::DegenerateCut("cap hole outside every boundary".into())),
        }
    }
    let mut cap: Vec<[u32; 3]> = Vec::new();
    for &o in &outers {
        let holes: Vec<Vec<P2>> = holes_of[o].iter().map(|&h| rings[h].clone()).collect();
        let mut ids: Vec<u32> = loops[o].clone();
        for &h in &holes_of[o] {
            ids.extend_from_slice(&loops[h]);
        }
        for t in triangulate_polygon(&rings[o], &holes)? {
            cap.push(t.map(|k| ids[k]));
        }
    }
    neg.extend(cap.iter().copied());
    pos.extend(cap.iter().map(|&[a, b, c]| [a, c, b]));

    let (negative, negative_origin) = compact(&vertices, &neg, original);
    let (positive, positive_origin) = compact(&vertices, &pos, original);
    for side in [&negative, &positive] {
        let r = validate(side);
        if !r.watertight || !r.orientable {
            return Err(Error::DegenerateCut(format!("cut side is not closed: {r:?}")));
        }
    }
    let snapped = TriMesh {
        vertices: vertices[..original].to_vec(),
        triangles: mesh.triangles.clone(),
    };
    let before = snapped.signed_volume();
    let after = negative.signed_volume() + positive.signed_volume();
    if !((after - before).abs() <= VOLUME_TOLERANCE * before.abs()) {
        return Err(Error::DegenerateCut(format!("cut changed volume from {before} to {after}")));
    }
    if !(negative.signed_volume() > 0.0 && positive.signed_volume() > 0.0) {
        return Err(Error::DegenerateCut("cut side without volume".into()));
    }
    Ok(CutResult {
        negative,
        positive,
        caps: loops
            .iter()
            .map(|l| l.iter().map(|&i| vertices[i as usize]).collect())
            .collect(),
        negative_origin,
        positive_origin,
    })
}

/// Renumbers the vertices used by `triangles` in order of first use.
fn compact(vertices: &[Point], triangles: &[[u32; 3]], original: usize) -> (TriMesh, Vec<VertexOrigin>) {
    let mut remap = vec![u32::MAX; vertices.len()];
    let mut out = Vec::new();
    let mut origin = Vec::new();
    let tris = triangles
        .iter()
        .map(|t| {
            t.map(|v| {
                let slot = &mut remap[v as usize];
                if *slot == u32::MAX {
                    *slot = out.len() as u32;
                    out.push(vertices[v as usize]);
                    origin.push(if (v as usize) < original {
                        VertexOrigin::Original(v)
                    } else {
                        VertexOrigin::OnPlane
                    });
                }
                *slot
            })
        })
        .collect();
    (
        TriMesh {
            vertices: out,
            triangles: tris,
        },
        origin,
    )
}

/// Closed loops of the negative side's open boundary, reversed so that they
/// run counter-clockwise around the missing cap when seen from the positive
/// side. At pinch vertices the loop takes the leftmost turn.
fn cap_loops(neg: &[[u32; 3]], vertices: &[Point], n: &Vec3) -> Result<Vec<Vec<u32>>> {
    let mut directed: HashMap<(u32, u32), i32> = HashMap::new();
    for t in neg {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *directed.entry((a, b)).or_default() += 1;
            *directed.entry((b, a)).or_default() -= 1;
        }
    }
    // cap edges are the reversed unmatched half-edges
    let mut out: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (&(a, b), &count) in &directed {
        for _ in 0..count.max(0) {
            edges.push((b, a));
        }
    }
    edges.sort_unstable();
    for &(a, b) in &edges {
        out.entry(a).or_default().push(b);
    }
    let (u, v) = plane_basis(n);
    let dir2 = |a: u32, b: u32| {
        let d = vertices[b as usize] - vertices[a as usize];
        [u.dot(&d), v.dot(&d)]
    };

    let mut loops = Vec::new();
    for &(start, second) in &edges {
        let Some(list) = out.get_mut(&start) else { continue };
        let Some(pos) = list.iter().position(|&x| x == second) else { continue };
        list.swap_remove(pos);
        let mut ring = vec![start];
        let (mut prev, mut cur) = (start, second);
        while cur != start {
            ring.push(cur);
            if ring.len() > edges.len() {
                return Err(Error::DegenerateCut("cap loop does not close".into()));
            }
            let list = out
                .get_mut(&cur)
                .filter(|l| !l.is_empty())
                .ok_or_else(|| Error::DegenerateCut("open cap boundary".into()))?;
            let k = if list.len() == 1 {
                0
            } else {
                let din = dir2(prev, cur);
                let turn = |b: u32| {
                    let d = dir2(cur, b);
                    let cross = din[0] * d[1] - din[1] * d[0];
                    let dot = din[0] * d[0] + din[1] * d[1];
                    cross.atan2(dot)
                };
                (0..list.len())
                    .max_by(|&x, &y| turn(list[x]).total_cmp(&turn(list[y])).then(list[y].cmp(&list[x])))
                    .unwrap()
            };
            let next = list.swap_remove(k);
            (prev, cur) = (cur, next);
        }
        if ring.len() < 3 {
            return Err(Error::DegenerateCut("cap loop with fewer than 3 vertices".into()));
        }
        loops.push(ring);
    }
    Ok(loops)
}

/// Cuts and then separates each side into connected components, negative
/// side first.
pub fn split_and_separate_sides(mesh: &TriMesh, plane: &CuttingPlane) -> Result<Vec<(Side, TriMesh)>> {
    let cut = cut_by_plane(mesh, plane)?;
    let mut parts = Vec::new();
    for (side, m) in [(Side::Negative, &cut.negative), (Side::Positive, &cut.positive)] {
        for c in connected_components(m) {
            if !validate(&c).watertight {
                return Err(Error::DegenerateCut("component is not closed".into()));
            }
            parts.push((side, c));
        }
    }
    Ok(parts)
}

pub fn split_and_separate(mesh: &TriMesh, plane: &CuttingPlane) -> Result<Vec<TriMesh>> {
    Ok(split_and_separate_sides(mesh, plane)?.into_iter().map(|(_, m)| m).collect())
}
