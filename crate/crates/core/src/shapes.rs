//! Closed primitive meshes used as fixtures and for quick experiments.

use std::f64::consts::{PI, TAU};

use crate::cutter::triangulate::triangulate_polygon;
use crate::mesh::{Point, TriMesh};

/// Axis-aligned box between two corners, 8 vertices and 12 triangles.
pub fn cube_between(lo: Point, hi: Point) -> TriMesh {
    let v = |x: bool, y: bool, z: bool| {
        Point::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let vertices = vec![
        v(false, false, false),
        v(true, false, false),
        v(true, true, false),
        v(false, true, false),
        v(false, false, true),
        v(true, false, true),
        v(true, true, true),
        v(false, true, true),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh {
        vertices,
        triangles,
    }
}

/// The cube `[0, 1]^3`.
pub fn unit_cube() -> TriMesh {
    cube_between(Point::origin(), Point::new(1.0, 1.0, 1.0))
}

pub fn tetrahedron() -> TriMesh {
    TriMesh {
        vertices: vec![
            Point::new(1.0, 1.0, 1.0),
            Point::new(1.0, -1.0, -1.0),
            Point::new(-1.0, 1.0, -1.0),
            Point::new(-1.0, -1.0, 1.0),
        ],
        triangles: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    }
}

pub fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::new(x, y, z))
    .collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh {
        vertices,
        triangles,
    }
}

/// Latitude/longitude sphere.
pub fn uv_sphere(center: Point, radius: f64, stacks: usize, slices: usize) -> TriMesh {
    let mut vertices = vec![center + nalgebra::Vector3::new(0.0, 0.0, radius)];
    for i in 1..stacks {
        let phi = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let theta = TAU * j as f64 / slices as f64;
            vertices.push(
                center
                    + radius
                        * nalgebra::Vector3::new(phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()),
            );
        }
    }
    vertices.push(center - nalgebra::Vector3::new(0.0, 0.0, radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for j in 0..slices {
        triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = TAU * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let v = TAU * j as f64 / minor_segments as f64;
            let r = major + minor * v.cos();
            vertices.push(Point::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % major_segments) * minor_segments + j % minor_segments) as u32;
    let mut triangles = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// Extrudes a simple counter-clockwise polygon in the xy plane from `z = 0`
/// to `z = depth`.
pub fn extrude(polygon: &[[f64; 2]], depth: f64) -> TriMesh {
    let n = polygon.len();
    let mut vertices: Vec<Point> = polygon.iter().map(|p| Point::new(p[0], p[1], 0.0)).collect();
    vertices.extend(polygon.iter().map(|p| Point::new(p[0], p[1], depth)));
    let cap = triangulate_polygon(polygon, &[]).expect("extruded polygon must be simple");
    let mut triangles = Vec::with_capacity(4 * n);
    for t in &cap {
        triangles.push([t[0] as u32, t[2] as u32, t[1] as u32]);
        triangles.push([(t[0] + n) as u32, (t[1] + n) as u32, (t[2] + n) as u32]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        let (bi, bj, ti, tj) = (i as u32, j as u32, (i + n) as u32, (j + n) as u32);
        triangles.push([bi, bj, tj]);
        triangles.push([bi, tj, ti]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// L-shaped polygon `(0,0),(2,0),(2,1),(1,1),(1,2),(0,2)` extruded to depth 1.
pub fn l_prism() -> TriMesh {
    extrude(
        &[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]],
        1.0,
    )
}

/// U-shaped prism: a 3x1 base with two 1x2 prongs, depth 1.
pub fn u_prism() -> TriMesh {
    extrude(
        &[
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 3.0],
            [2.0, 3.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 3.0],
            [0.0, 3.0],
        ],
        1.0,
    )
}

/// T-shaped prism: a 3x1 bar on top of a 1x2 stem, depth 1.
pub fn t_prism() -> TriMesh {
    extrude(
        &[
            [1.0, 0.0],
            [2.0, 0.0],
            [2.0, 2.0],
            [3.0, 2.0],
            [3.0, 3.0],
            [0.0, 3.0],
            [0.0, 2.0],
            [1.0, 2.0],
        ],
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;

    #[test]
    fn fixtures_are_closed_and_outward() {
        for (name, mesh) in [
            ("cube", unit_cube()),
            ("tetrahedron", tetrahedron()),
            ("icosahedron", icosahedron()),
            ("sphere", uv_sphere(Point::origin(), 1.0, 12, 24)),
            ("torus", torus(1.0, 0.3, 24, 12)),
            ("l", l_prism()),
            ("u", u_prism()),
            ("t", t_prism()),
        ] {
            let r = validate(&mesh);
            assert!(r.watertight && r.orientable, "{name}: {r:?}");
            assert_eq!(r.degenerate_triangles, 0, "{name}");
            assert!(mesh.signed_volume() > 0.0, "{name}");
        }
        assert!((u_prism().signed_volume() - 7.0).abs() < 1e-12);
        assert!((t_prism().signed_volume() - 5.0).abs() < 1e-12);
    }
}
