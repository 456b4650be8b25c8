//! OBJ and OFF reading and writing, and the JSON run report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concavity::ConcavityScore;
use crate::decomposer::{CutRecord, DecompConfig, Decomposition, StageTimings, TerminalReason};
use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};

/// Significant digits of written coordinates.
pub const COORDINATE_DIGITS: usize = 9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// One OBJ holding every hull as a named object.
    Multi,
    /// One OBJ per hull.
    #[default]
    Split,
}

/// File name of the combined OBJ in [`OutputMode::Multi`].
pub const MULTI_FILE: &str = "hulls.obj";
pub const REPORT_FILE: &str = "report.json";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads an OBJ or OFF file, chosen by extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mesh = match ext.as_deref() {
        Some("obj") => {
            let (vertices, objects) = parse_obj(path, &read(path)?)?;
            let triangles = objects.into_iter().flat_map(|(_, t)| t).collect();
            TriMesh::new(vertices, triangles)?
        }
        Some("off") => parse_off(path, &read(path)?)?,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(mesh)
}

/// Loads an OBJ and returns one mesh per `o` record (or one mesh when the
/// file has none).
pub fn load_obj_objects(path: impl AsRef<Path>) -> Result<Vec<(String, TriMesh)>> {
    let path = path.as_ref();
    let (vertices, objects) = parse_obj(path, &read(path)?)?;
    let all = TriMesh::new(vertices, Vec::new())?;
    let mut out = Vec::new();
    for (name, tris) in objects {
        if tris.is_empty() {
            continue;
        }
        let whole = TriMesh {
            vertices: all.vertices.clone(),
            triangles: tris,
        };
        let idx: Vec<usize> = (0..whole.triangles.len()).collect();
        out.push((name, whole.submesh(&idx)));
    }
    if out.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(out)
}

type Objects = Vec<(String, Vec<[u32; 3]>)>;

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Point>, Objects)> {
    let mut vertices = Vec::new();
    let mut objects: Objects = vec![(String::new(), Vec::new())];
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = it.next().ok_or_else(|| parse_error(path, line_no, "vertex needs 3 coordinates"))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_error(path, line_no, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Point::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_error(path, line_no, format!("bad face index {tok:?}")))?;
                    let resolved = match i {
                        0 => return Err(parse_error(path, line_no, "face index 0 (OBJ indices start at 1)")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(parse_error(
                            path,
                            line_no,
                            format!("face index {i} out of range ({} vertices)", vertices.len()),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_error(path, line_no, "face needs at least 3 vertices"));
                }
                let tris = &mut objects.last_mut().unwrap().1;
                fan(&idx, tris);
            }
            Some("o") => {
                let name = it.collect::<Vec<_>>().join(" ");
                objects.push((name, Vec::new()));
            }
            _ => {}
        }
    }
    objects.retain(|(_, t)| !t.is_empty());
    Ok((vertices, objects))
}

/// Fan triangulation around the first corner, skipping collapsed triangles.
fn fan(idx: &[u32], out: &mut Vec<[u32; 3]>) {
    for k in 1..idx.len() - 1 {
        let t = [idx[0], idx[k], idx[k + 1]];
        if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
            out.push(t);
        }
    }
}

fn parse_off(path: &Path, text: &str) -> Result<TriMesh> {
    let mut tokens = text.lines().enumerate().flat_map(|(n, line)| {
        let content = line.split('#').next().unwrap_or("");
        content.split_whitespace().map(move |t| (n + 1, t))
    });
    match tokens.next() {
        Some((_, "OFF")) => {}
        Some((n, t)) => return Err(parse_error(path, n, format!("expected OFF header, found {t:?}"))),
        None => return Err(Error::EmptyMesh),
    }
    let mut number = |what: &str| -> Result<(usize, f64)> {
        let (n, t) = tokens
            .next()
            .ok_or_else(|| parse_error(path, 0, format!("unexpected end of file reading {what}")))?;
        t.parse::<f64>()
            .map(|v| (n, v))
            .map_err(|_| parse_error(path, n, format!("bad {what} {t:?}")))
    };
    let count = |(n, v): (usize, f64)| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(parse_error(path, n, format!("bad count {v}")))
        }
    };
    let nv = count(number("vertex count")?)?;
    let nf = count(number("face count")?)?;
    number("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (x, y, z) = (number("coordinate")?.1, number("coordinate")?.1, number("coordinate")?.1);
        vertices.push(Point::new(x, y, z));
    }
    let mut triangles = Vec::new();
    for _ in 0..nf {
        let (line, k) = number("face size")?;
        let k = count((line, k))?;
        if k < 3 {
            return Err(parse_error(path, line, "face needs at least 3 vertices"));
        }
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            let (n, i) = number("face index")?;
            let i = count((n, i))?;
            if i >= nv {
                return Err(parse_error(path, n, format!("face index {i} out of range ({nv} vertices)")));
            }
            idx.push(i as u32);
        }
        fan(&idx, &mut triangles);
    }
    TriMesh::new(vertices, triangles)
}

/// `x` with [`COORDINATE_DIGITS`] significant digits.
fn format_coordinate(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&exp) {
        return format!("{:.*e}", COORDINATE_DIGITS - 1, x);
    }
    let decimals = (COORDINATE_DIGITS as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_obj_body(out: &mut String, mesh: &TriMesh, base: usize) {
    for v in &mesh.vertices {
        let _ = writeln!(
            out,
            "v {} {} {}",
            format_coordinate(v.x),
            format_coordinate(v.y),
            format_coordinate(v.z)
        );
    }
    for t in &mesh.triangles {
        let _ = writeln!(
            out,
            "f {} {} {}",
            t[0] as usize + base + 1,
            t[1] as usize + base + 1,
            t[2] as usize + base + 1
        );
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    write_obj_body(&mut out, mesh, 0);
    write(path.as_ref(), &out)
}

/// Writes several meshes into one OBJ as objects named by `names`.
pub fn save_obj_objects(meshes: &[(String, TriMesh)], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let mut base = 0;
    for (name, mesh) in meshes {
        let _ = writeln!(out, "o {name}");
        write_obj_body(&mut out, mesh, base);
        base += mesh.vertices.len();
    }
    write(path.as_ref(), &out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub id: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub hull_vertices: usize,
    /// In input units.
    pub hull_volume: f64,
    /// Normalized units, like every concavity in the report.
    pub concavity: ConcavityScore,
    pub visibility_concavity: f64,
    pub visibility_edges: usize,
    pub terminal: Option<TerminalReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxOverlap {
    pub a: usize,
    pub b: usize,
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub parts: usize,
    /// Input against the union of all hulls.
    pub concavity: ConcavityScore,
    pub max_part_concavity: f64,
    pub visibility_concavity: f64,
    pub half_space_violation: f64,
    pub hull_box_overlaps: Vec<BoxOverlap>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub input: String,
    pub config: DecompConfig,
    pub parts: Vec<PartRecord>,
    pub totals: Totals,
    pub cuts: Vec<CutRecord>,
    /// Wall-clock seconds; the only field that differs between identical runs.
    pub timings: Timings,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    #[serde(flatten)]
    pub stages: StageTimings,
    pub evaluation: f64,
}

impl RunReport {
    pub fn new(input: &str, d: &Decomposition) -> Result<RunReport> {
        let t = std::time::Instant::now();
        let concavity = d.evaluate()?;
        let evaluation = t.elapsed().as_secs_f64();
        let scale3 = d.to_input.scale.powi(3);
        let parts: Vec<PartRecord> = d
            .parts
            .iter()
            .map(|p| PartRecord {
                id: p.id,
                vertices: p.mesh.vertices.len(),
                triangles: p.mesh.triangles.len(),
                hull_vertices: p.hull.mesh.vertices.len(),
                hull_volume: p.hull.volume * scale3,
                concavity: p.concavity,
                visibility_concavity: p.visibility_concavity(),
                visibility_edges: p.visibility.len(),
                terminal: p.terminal,
            })
            .collect();
        Ok(RunReport {
            input: input.to_string(),
            config: d.config.clone(),
            totals: Totals {
                parts: parts.len(),
                concavity,
                max_part_concavity: parts.iter().map(|p| p.concavity.combined).fold(0.0, f64::max),
                visibility_concavity: parts.iter().map(|p| p.visibility_concavity).sum(),
                half_space_violation: d.half_space_violation(),
                hull_box_overlaps: d
                    .hull_box_overlaps()
                    .into_iter()
                    .map(|(a, b, volume)| BoxOverlap { a, b, volume })
                    .collect(),
            },
            parts,
            cuts: d.cuts.clone(),
            timings: Timings {
                stages: d.timings.clone(),
                evaluation,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Writes the hulls (in the input frame), optionally the raw parts, and
/// `report.json`. Returns the written paths.
pub fn save_decomposition(
    d: &Decomposition,
    report: &RunReport,
    out_dir: impl AsRef<Path>,
    mode: OutputMode,
    raw_parts: bool,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let hulls = d.hulls_in_input_frame();
    match mode {
        OutputMode::Split => {
            for (k, h) in hulls.iter().enumerate() {
                let p = dir.join(format!("part_{k:03}.obj"));
                save_obj(h, &p)?;
                written.push(p);
            }
        }
        OutputMode::Multi => {
            let named: Vec<(String, TriMesh)> = hulls
                .into_iter()
                .enumerate()
                .map(|(k, h)| (format!("part_{k}"), h))
                .collect();
            let p = dir.join(MULTI_FILE);
            save_obj_objects(&named, &p)?;
            written.push(p);
        }
    }
    if raw_parts {
        for (k, part) in d.parts.iter().enumerate() {
            let p = dir.join(format!("raw_part_{k:03}.obj"));
            save_obj(&d.to_input.apply_mesh(&part.mesh), &p)?;
            written.push(p);
        }
    }
    let p = dir.join(REPORT_FILE);
    write(&p, &report.to_json()?)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::decompose;
    use crate::shapes;

    fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn obj_cube_and_quads() {
        let dir = tempfile::tempdir().unwrap();
        let cube = shapes::unit_cube();
        let p = dir.path().join("cube.obj");
        save_obj(&cube, &p).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.vertices.len(), 8);
        assert_eq!(back.triangles, cube.triangles);

        let quad = write_tmp(dir.path(), "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        assert_eq!(load_mesh(&quad).unwrap().triangles, vec![[0, 1, 2], [0, 2, 3]]);
        let slashes = write_tmp(dir.path(), "s.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n");
        assert_eq!(load_mesh(&slashes).unwrap().triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::new();
        for v in shapes::unit_cube().vertices {
            text += &format!("v {} {} {}\n", v.x, v.y, v.z);
        }
        let bad = write_tmp(dir.path(), "bad.obj", &(text.clone() + "f 1 2 9\n"));
        assert!(matches!(load_mesh(&bad), Err(Error::Parse { line: 9, .. })));
        let zero = write_tmp(dir.path(), "zero.obj", &(text.clone() + "f 0 1 2\n"));
        assert!(matches!(load_mesh(&zero), Err(Error::Parse { .. })));
        let empty = write_tmp(dir.path(), "empty.obj", &text);
        assert!(matches!(load_mesh(&empty), Err(Error::EmptyMesh)));
        let missing = dir.path().join("missing.obj");
        assert!(load_mesh(&missing).unwrap_err().is_io());
        let other = write_tmp(dir.path(), "x.stl", "solid");
        assert!(matches!(load_mesh(&other), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn off_cube() {
        let dir = tempfile::tempdir().unwrap();
        let text = "OFF\n# a cube\n8 6 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                    4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";
        let p = write_tmp(dir.path(), "cube.off", text);
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.triangles.len(), 12);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        let bad = write_tmp(dir.path(), "bad.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n");
        assert!(matches!(load_mesh(&bad), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn coordinates_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = crate::mesh::normalize(&shapes::uv_sphere(Point::new(0.3, -2.0, 7.0), 1.7, 9, 17))
            .unwrap()
            .0;
        let p = dir.path().join("s.obj");
        save_obj(&mesh, &p).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.triangles.len(), mesh.triangles.len());
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert!((a - b).norm() < 1e-8);
        }
        assert_eq!(format_coordinate(0.0), "0");
        assert_eq!(format_coordinate(1.5), "1.5");
        assert_eq!(format_coordinate(-123456.7891234), "-123456.789");
        assert_eq!(format_coordinate(1e-9), "1.00000000e-9");
    }

    #[test]
    fn split_and_multi_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = crate::decomposer::DecompConfig {
            remesh_enabled: false,
            ..Default::default()
        };
        let d = decompose(&shapes::l_prism(), &config).unwrap();
        let report = RunReport::new("l.obj", &d).unwrap();
        assert_eq!(report.totals.parts, report.parts.len());
        let split = dir.path().join("split");
        let files = save_decomposition(&d, &report, &split, OutputMode::Split, false).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["part_000.obj", "part_001.obj", "report.json"]);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(split.join("report.json")).unwrap()).unwrap();
        assert_eq!(json["totals"]["parts"], 2);
        assert!(json["timings"]["total"].is_number());

        let one = decompose(&shapes::unit_cube(), &config).unwrap();
        let multi = dir.path().join("multi");
        let report = RunReport::new("cube.obj", &one).unwrap();
        save_decomposition(&one, &report, &multi, OutputMode::Multi, true).unwrap();
        let text = fs::read_to_string(multi.join(MULTI_FILE)).unwrap();
        assert_eq!(text.matches("\no ").count() + text.starts_with("o ") as usize, 1);
        assert!(text.starts_with("o part_0\n"));
        let objects = load_obj_objects(multi.join(MULTI_FILE)).unwrap();
        assert_eq!(objects.len(), 1);
        assert!((objects[0].1.signed_volume() - 1.0).abs() < 1e-8);
        assert!(multi.join("raw_part_000.obj").exists());
    }
}
