//! Acceptance criteria 1-11. Each test prints one PASS/FAIL line.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use acd_core::concavity::evaluate_decomposition;
use acd_core::cutter::{cut_by_plane, VertexOrigin};
use acd_core::decomposer::{decompose, prepare, rotation_test, DecompConfig, Decomposition};
use acd_core::io::{load_mesh, save_obj};
use acd_core::mesh::{normalize, validate};
use acd_core::plane_search::{plane_value, CuttingPlane};
use acd_core::preprocess::remesh;
use acd_core::visibility::{
    build_cage, cage_resolution, compute_visibility_edges, compute_visibility_edges_brute_force, VisibilitySet,
    DEFAULT_EPSILON,
};
use acd_core::{shapes, Point, TriMesh, Vec3};
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NULL_CONCAVITY: f64 = 1e-3;
const NULL_SECONDS: f64 = 10.0;
const ORACLE_SECONDS: f64 = 60.0;
const LENGTH_TOLERANCE: f64 = 1e-9;
const PLANE_COUNT: usize = 100;
const L_PART_CONCAVITY: f64 = 0.01;
const L_HULL_VOLUME: f64 = 0.02;
const L_SECONDS: f64 = 30.0;
const MIN_CUTS: usize = 200;
const VOLUME_TOLERANCE: f64 = 1e-6;
const HALF_SPACE_TOLERANCE: f64 = 1e-7;
const ROTATIONS: usize = 8;
const ROTATION_RELATIVE: f64 = 0.05;
const ROTATION_FLOOR: f64 = 1e-6;
const DESCENT_FRACTION: f64 = 0.95;
const DATASET_ENV: &str = "ACD_DATASET_DIR";
const DATASET_MIN_MESHES: usize = 10;
const DATASET_CONCAVITY: f64 = 0.10;
const DATASET_PARTS: f64 = 60.0;
const DATASET_SECONDS: f64 = 600.0;

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n:>2} {status} {name}: {detail}");
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn raw() -> DecompConfig {
    DecompConfig {
        remesh_enabled: false,
        ..Default::default()
    }
}

fn remeshed(resolution: usize) -> DecompConfig {
    DecompConfig {
        remesh_resolution: resolution,
        ..Default::default()
    }
}

fn tilt() -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1)
}

fn rotated(mesh: &TriMesh, q: UnitQuaternion<f64>) -> TriMesh {
    TriMesh {
        vertices: mesh.vertices.iter().map(|p| q * p).collect(),
        triangles: mesh.triangles.clone(),
    }
}

fn unit(mesh: &TriMesh) -> TriMesh {
    normalize(mesh).unwrap().0
}

fn sphere() -> TriMesh {
    shapes::uv_sphere(Point::origin(), 1.0, 12, 24)
}

fn smooth_sphere() -> TriMesh {
    shapes::uv_sphere(Point::origin(), 1.0, 48, 96)
}

struct Run {
    name: &'static str,
    decomposition: Decomposition,
}

struct Suite {
    runs: Vec<Run>,
    null_seconds: f64,
    l_seconds: f64,
}

/// Every decomposition the suite inspects, computed once.
fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut runs = Vec::new();
        let mut run = |name, mesh: TriMesh, config: DecompConfig| {
            let t = Instant::now();
            let decomposition = decompose(&mesh, &config).unwrap_or_else(|e| panic!("{name}: {e}"));
            runs.push(Run { name, decomposition });
            t.elapsed().as_secs_f64()
        };
        let mut null_seconds = 0.0;
        null_seconds += run("cube", shapes::unit_cube(), raw());
        null_seconds += run("tetrahedron", shapes::tetrahedron(), raw());
        null_seconds += run("icosahedron", shapes::icosahedron(), raw());
        null_seconds += run("remeshed sphere", smooth_sphere(), remeshed(24));
        let l_seconds = run("L-prism", shapes::l_prism(), DecompConfig { seed: 42, ..raw() });
        run("U-prism", shapes::u_prism(), raw());
        run("T-prism", shapes::t_prism(), raw());
        run("tilted U-prism", rotated(&shapes::u_prism(), tilt()), raw());
        run("tilted T-prism", rotated(&shapes::t_prism(), tilt()), raw());
        run("torus", shapes::torus(1.0, 0.35, 24, 12), raw());
        run("remeshed T-prism", shapes::t_prism(), remeshed(24));
        Suite {
            runs,
            null_seconds,
            l_seconds,
        }
    })
}

fn find(name: &str) -> &'static Decomposition {
    &suite().runs.iter().find(|r| r.name == name).unwrap().decomposition
}

#[test]
fn criterion_01_convex_null() {
    let s = suite();
    let mut ok = s.null_seconds < NULL_SECONDS;
    let mut detail = Vec::new();
    for name in ["cube", "tetrahedron", "icosahedron", "remeshed sphere"] {
        let d = find(name);
        let c = d.evaluate().unwrap().combined;
        ok &= d.parts.len() == 1 && c <= NULL_CONCAVITY;
        detail.push(format!("{name} parts={} concavity={c:.2e}", d.parts.len()));
    }
    detail.push(format!("{:.1}s", s.null_seconds));
    report(1, "convex null test", ok, &detail.join(", "));
}

fn cage_and_edges(mesh: &TriMesh) -> (VisibilitySet, VisibilitySet) {
    let cage = build_cage(mesh, DEFAULT_EPSILON, cage_resolution(mesh, DEFAULT_EPSILON)).unwrap();
    let fast = compute_visibility_edges(mesh, &cage).unwrap();
    let slow = compute_visibility_edges_brute_force(mesh, &cage.mesh);
    (fast, slow)
}

#[test]
fn criterion_02_visibility_oracle() {
    let t = Instant::now();
    let fixtures = [
        ("L-prism", unit(&shapes::l_prism())),
        ("U-prism", unit(&shapes::u_prism())),
        ("tilted T-prism", unit(&rotated(&shapes::t_prism(), tilt()))),
        ("torus", unit(&shapes::torus(1.0, 0.35, 16, 8))),
        ("remeshed T-prism", remesh(&unit(&shapes::t_prism()), 10).unwrap()),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, mesh) in &fixtures {
        assert!(mesh.vertices.len() <= 500, "{name} has {} vertices", mesh.vertices.len());
        let (fast, slow) = cage_and_edges(mesh);
        let same = fast.len() == slow.len()
            && fast
                .edges()
                .iter()
                .zip(slow.edges())
                .all(|(a, b)| a.i == b.i && a.j == b.j && (a.length - b.length).abs() <= LENGTH_TOLERANCE);
        ok &= same;
        detail.push(format!("{name} n={} edges={}/{}", mesh.vertices.len(), fast.len(), slow.len()));
    }
    let seconds = t.elapsed().as_secs_f64();
    ok &= seconds < ORACLE_SECONDS;
    detail.push(format!("{seconds:.1}s"));
    report(2, "visibility oracle equivalence", ok, &detail.join(", "));
}

/// Σ I_p ‖e‖ where I_p says whether cutting along the plane puts the two
/// endpoints into different halves. An endpoint that both halves keep is
/// on the plane and cuts nothing.
fn cut_value(mesh: &TriMesh, edges: &VisibilitySet, plane: &CuttingPlane) -> f64 {
    let Ok(cut) = cut_by_plane(mesh, plane) else {
        return 0.0;
    };
    let keep = |origin: &[VertexOrigin]| -> HashSet<u32> {
        origin
            .iter()
            .filter_map(|o| match o {
                VertexOrigin::Original(i) => Some(*i),
                VertexOrigin::OnPlane => None,
            })
            .collect()
    };
    let (neg, pos) = (keep(&cut.negative_origin), keep(&cut.positive_origin));
    let side = |i: u32| match (neg.contains(&i), pos.contains(&i)) {
        (true, false) => -1,
        (false, true) => 1,
        _ => 0,
    };
    edges
        .edges()
        .iter()
        .filter(|e| side(e.i) * side(e.j) < 0)
        .map(|e| e.length)
        .sum()
}

/// The same sum over strictly separated endpoints, for planes that touch no
/// vertex.
fn strict_value(mesh: &TriMesh, edges: &VisibilitySet, plane: &CuttingPlane) -> f64 {
    edges
        .edges()
        .iter()
        .filter(|e| {
            plane.signed_distance(&mesh.vertices[e.i as usize]) * plane.signed_distance(&mesh.vertices[e.j as usize])
                < 0.0
        })
        .map(|e| e.length)
        .sum()
}

fn random_normal(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v;
        }
    }
}

#[test]
fn criterion_03_plane_value() {
    let mesh = prepare(&shapes::l_prism(), &raw()).unwrap().0;
    let (edges, _) = cage_and_edges(&mesh);
    assert!(!edges.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let aabb = mesh.aabb();
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for n in 0..PLANE_COUNT {
        let plane = match n % 3 {
            // general position
            0 => {
                let p = Point::from(aabb.min.coords + aabb.extent().component_mul(&Vec3::new(
                    rng.random(),
                    rng.random(),
                    rng.random(),
                )));
                let plane = CuttingPlane::through(&p, random_normal(&mut rng));
                let literal = strict_value(&mesh, &edges, &plane);
                worst = worst.max((plane_value(&plane, &edges, &mesh) - literal).abs());
                plane
            }
            // through a vertex
            1 => {
                let v = mesh.vertices[rng.random_range(0..mesh.vertices.len())];
                CuttingPlane::through(&v, random_normal(&mut rng))
            }
            // along a face or a face extension
            _ => {
                let v = mesh.vertices[rng.random_range(0..mesh.vertices.len())];
                let mut normal = Vec3::zeros();
                normal[rng.random_range(0..3)] = if rng.random() { 1.0 } else { -1.0 };
                CuttingPlane::through(&v, normal)
            }
        };
        let value = plane_value(&plane, &edges, &mesh);
        let oracle = cut_value(&mesh, &edges, &plane);
        worst = worst.max((value - oracle).abs());
        nonzero += (oracle > 0.0) as usize;
    }
    report(
        3,
        "plane value correctness",
        worst == 0.0,
        &format!("{PLANE_COUNT} planes, {nonzero} with nonzero value, max difference {worst:e}"),
    );
}

#[test]
fn criterion_04_l_prism() {
    let s = suite();
    let d = find("L-prism");
    let input = d.mesh.signed_volume();
    let hulls: f64 = d.parts.iter().map(|p| p.hull.volume).sum();
    let max_c = d.parts.iter().map(|p| p.concavity.combined).fold(0.0, f64::max);
    let volume_error = (hulls - input).abs() / input;
    let ok = d.parts.len() == 2 && max_c <= L_PART_CONCAVITY && volume_error <= L_HULL_VOLUME && s.l_seconds < L_SECONDS;
    report(
        4,
        "L-prism ground truth",
        ok,
        &format!(
            "parts={} max C={max_c:.2e} hull volume error={:.3}% {:.1}s",
            d.parts.len(),
            volume_error * 100.0,
            s.l_seconds
        ),
    );
}

#[test]
fn criterion_05_volume_conservation() {
    let fixtures = [
        unit(&shapes::l_prism()),
        unit(&shapes::u_prism()),
        unit(&rotated(&shapes::t_prism(), tilt())),
        unit(&shapes::torus(1.0, 0.35, 24, 12)),
        unit(&sphere()),
        remesh(&unit(&shapes::t_prism()), 16).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cuts, mut failed, mut worst) = (0, 0, 0.0f64);
    let mut attempts = 0;
    while cuts < MIN_CUTS + 10 && attempts < 4 * MIN_CUTS {
        let mesh = &fixtures[attempts % fixtures.len()];
        attempts += 1;
        // a plane between two vertices always meets the mesh
        let a = mesh.vertices[rng.random_range(0..mesh.vertices.len())];
        let b = mesh.vertices[rng.random_range(0..mesh.vertices.len())];
        if (a - b).norm() < 1e-3 {
            continue;
        }
        let p = a + (b - a) * rng.random_range(0.2..0.8);
        let plane = CuttingPlane::through(&p, random_normal(&mut rng));
        match cut_by_plane(mesh, &plane) {
            Ok(cut) => {
                let parent = mesh.signed_volume();
                let children = cut.negative.signed_volume() + cut.positive.signed_volume();
                worst = worst.max((children - parent).abs() / parent);
                cuts += 1;
            }
            Err(_) => failed += 1,
        }
    }
    report(
        5,
        "volume conservation",
        cuts >= MIN_CUTS && worst <= VOLUME_TOLERANCE,
        &format!("{cuts} cuts ({failed} rejected), max relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_06_watertight_parts() {
    let mut parts = 0;
    let mut open = Vec::new();
    for r in &suite().runs {
        for p in &r.decomposition.parts {
            parts += 1;
            let v = validate(&p.mesh);
            if !v.watertight || v.boundary_edges > 0 {
                open.push(format!("{} part {}", r.name, p.id));
            }
        }
    }
    report(
        6,
        "watertightness preservation",
        open.is_empty(),
        &format!("{parts} parts over {} runs, open: {open:?}", suite().runs.len()),
    );
}

#[test]
fn criterion_07_half_space_separation() {
    let mut worst: f64 = 0.0;
    let mut cuts = 0;
    for r in &suite().runs {
        worst = worst.max(r.decomposition.half_space_violation());
        cuts += r.decomposition.cuts.len();
    }
    report(
        7,
        "half-space separation",
        worst <= HALF_SPACE_TOLERANCE,
        &format!("{cuts} cuts, max violation {worst:.2e}"),
    );
}

#[test]
fn criterion_08_rotation_equivariance() {
    let fixtures = [
        ("L-prism", shapes::l_prism()),
        ("tilted U-prism", rotated(&shapes::u_prism(), tilt())),
        ("tilted T-prism", rotated(&shapes::t_prism(), tilt())),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, (name, mesh)) in fixtures.iter().enumerate() {
        let r = rotation_test(mesh, &remeshed(24), ROTATIONS, 80 + k as u64).unwrap();
        let c0 = r.baseline.concavity;
        let parts: BTreeMap<usize, usize> = r.runs.iter().fold(BTreeMap::new(), |mut m, run| {
            *m.entry(run.parts).or_default() += 1;
            m
        });
        let drift = r.runs.iter().map(|run| (run.concavity - c0).abs()).fold(0.0, f64::max);
        let same_parts = r.runs.iter().all(|run| run.parts == r.baseline.parts);
        let close = drift <= ROTATION_RELATIVE * c0.abs() + ROTATION_FLOOR;
        ok &= r.runs.len() == ROTATIONS && same_parts && close;
        detail.push(format!(
            "{name} baseline parts={} C={c0:.4} rotated parts {parts:?} max |dC|={drift:.2e}",
            r.baseline.parts
        ));
    }
    report(8, "rotation equivariance", ok, &detail.join("; "));
}

#[test]
fn criterion_09_concavity_descent() {
    let (mut total, mut down) = (0, 0);
    for r in &suite().runs {
        for c in &r.decomposition.cuts {
            total += 1;
            down += (c.children_visibility_concavity < c.parent_visibility_concavity) as usize;
        }
    }
    let fraction = down as f64 / total.max(1) as f64;
    report(
        9,
        "concavity descent",
        total > 0 && fraction >= DESCENT_FRACTION,
        &format!("{down}/{total} cuts lower C* ({:.1}%)", fraction * 100.0),
    );
}

fn strip_timings(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.obj");
    save_obj(&shapes::t_prism(), &input).unwrap();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let mut outputs = Vec::new();
    for threads in [1, max] {
        let out = dir.path().join(format!("threads_{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_acd"))
            .args(["decompose", input.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .args(["--remesh-resolution", "24", "--seed", "7", "--threads", &threads.to_string()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(out);
    }
    let mut files: Vec<_> = std::fs::read_dir(&outputs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".obj"))
        .collect();
    files.sort();
    let objs_equal = files
        .iter()
        .all(|f| std::fs::read(outputs[0].join(f)).ok() == std::fs::read(outputs[1].join(f)).ok());
    let count_equal = std::fs::read_dir(&outputs[1]).unwrap().count() == files.len() + 1;
    let report_equal = strip_timings(&outputs[0].join("report.json")) == strip_timings(&outputs[1].join("report.json"));
    report(
        10,
        "determinism across thread counts",
        objs_equal && count_equal && report_equal && !files.is_empty(),
        &format!(
            "threads 1 vs {max}: {} OBJs identical={objs_equal}, report identical without timings={report_equal}",
            files.len()
        ),
    );
}

#[test]
fn criterion_11_dataset_sanity() {
    let Some(dir) = std::env::var_os(DATASET_ENV) else {
        let _ = writeln!(
            std::io::stderr().lock(),
            "criterion 11 SKIP dataset sanity check: set {DATASET_ENV} to a directory of OBJ/OFF meshes"
        );
        return;
    };
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("obj") || e.eq_ignore_ascii_case("off"))
        })
        .collect();
    paths.sort();
    let config = DecompConfig::default();
    let (mut concavity, mut parts, mut slowest) = (Vec::new(), Vec::new(), 0.0f64);
    for p in &paths {
        let t = Instant::now();
        let mesh = load_mesh(p).unwrap();
        let d = decompose(&mesh, &config).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let hulls = d.hulls();
        let c = evaluate_decomposition(&d.mesh, &hulls, config.samples, config.seed, config.concavity_combine).unwrap();
        concavity.push(c.combined);
        parts.push(d.parts.len() as f64);
        slowest = slowest.max(t.elapsed().as_secs_f64());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (mc, mp) = (mean(&concavity), mean(&parts));
    report(
        11,
        "dataset sanity check",
        paths.len() >= DATASET_MIN_MESHES && mc <= DATASET_CONCAVITY && mp <= DATASET_PARTS && slowest < DATASET_SECONDS,
        &format!("{} meshes, mean concavity {mc:.4}, mean parts {mp:.1}, slowest {slowest:.0}s", paths.len()),
    );
}
