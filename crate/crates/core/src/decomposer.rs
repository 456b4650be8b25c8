//! Greedy decomposition: repeatedly cut the most concave part along the
//! plane that severs the most visibility edge length.

use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concavity::{concavity_against, evaluate_decomposition, Combine, ConcavityScore, DEFAULT_SAMPLES};
use crate::cutter::{split_and_separate_sides, Side};
use crate::error::{Error, Result};
use crate::hull::{convex_hull_padded, ConvexHull};
use crate::mesh::{normalize, validate, Aabb, Transform, TriMesh, Vec3};
use crate::plane_search::{
    select_best_plane, CuttingPlane, PlaneSearchConfig, DEFAULT_K, DEFAULT_MAX_FLAT_PLANES,
};
use crate::preprocess::remesh;
use crate::visibility::{build_cage, cage_resolution, compute_visibility_edges, VisibilitySet, DEFAULT_EPSILON};

/// Next-best planes tried after a failed cut.
pub const MAX_CUT_RETRIES: usize = 8;
/// Slack allowed when checking that descendants stay on their side of a cut.
pub const HALF_SPACE_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PickMetric {
    #[default]
    Collision,
    Visibility,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompConfig {
    pub epsilon: f64,
    pub k: usize,
    pub concavity_threshold: f64,
    pub max_parts: usize,
    pub seed: u64,
    pub remesh_resolution: usize,
    pub remesh_enabled: bool,
    pub samples: usize,
    pub part_pick_metric: PickMetric,
    pub max_flat_planes: usize,
    pub flat_planes: bool,
    pub concavity_combine: Combine,
}

impl Default for DecompConfig {
    fn default() -> Self {
        DecompConfig {
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_K,
            concavity_threshold: 0.05,
            max_parts: 128,
            seed: 0,
            remesh_resolution: 100,
            remesh_enabled: true,
            samples: DEFAULT_SAMPLES,
            part_pick_metric: PickMetric::Collision,
            max_flat_planes: DEFAULT_MAX_FLAT_PLANES,
            flat_planes: true,
            concavity_combine: Combine::Min,
        }
    }
}

impl DecompConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.concavity_threshold >= 0.0) {
            return bad("concavity threshold must be non-negative");
        }
        if self.max_parts < 1 {
            return bad("max parts must be at least 1");
        }
        if self.samples < 1 {
            return bad("samples must be at least 1");
        }
        Ok(())
    }

    fn plane_search(&self) -> PlaneSearchConfig {
        PlaneSearchConfig {
            k: self.k,
            seed: self.seed,
            max_flat_planes: self.max_flat_planes,
            flat_planes: self.flat_planes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    Threshold,
    NoEdges,
    NoUsefulPlane,
    RetriesExhausted,
    PartCap,
}

#[derive(Clone, Debug)]
pub struct Part {
    /// Creation order; the input is part 0.
    pub id: usize,
    pub mesh: TriMesh,
    pub visibility: VisibilitySet,
    pub concavity: ConcavityScore,
    pub hull: ConvexHull,
    pub terminal: Option<TerminalReason>,
    /// Every cut above this part, as (index into the cut log, side).
    pub lineage: Vec<(usize, Side)>,
}

impl Part {
    pub fn visibility_concavity(&self) -> f64 {
        self.visibility.total_length()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutRecord {
    pub part: usize,
    pub plane: CuttingPlane,
    /// Q_p of the executed plane, without multiplier.
    pub value: f64,
    pub score: f64,
    pub candidates: usize,
    /// Planes tried before one cut cleanly (1 when the best one worked).
    pub attempts: usize,
    pub parent_concavity: f64,
    pub parent_visibility_concavity: f64,
    pub children: Vec<usize>,
    pub children_visibility_concavity: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: f64,
    pub visibility: f64,
    pub concavity: f64,
    pub plane_search: f64,
    pub cutting: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Parts ordered by id.
    pub parts: Vec<Part>,
    pub cuts: Vec<CutRecord>,
    pub config: DecompConfig,
    /// The mesh that was decomposed, in normalized coordinates.
    pub mesh: TriMesh,
    /// Maps normalized coordinates back to the input frame.
    pub to_input: Transform,
    pub timings: StageTimings,
}

impl Decomposition {
    pub fn hulls(&self) -> Vec<ConvexHull> {
        self.parts.iter().map(|p| p.hull.clone()).collect()
    }

    /// Hulls mapped back to the input frame.
    pub fn hulls_in_input_frame(&self) -> Vec<TriMesh> {
        self.parts.iter().map(|p| self.to_input.apply_mesh(&p.hull.mesh)).collect()
    }

    pub fn evaluate(&self) -> Result<ConcavityScore> {
        evaluate_decomposition(
            &self.mesh,
            &self.hulls(),
            self.config.samples,
            self.config.seed,
            self.config.concavity_combine,
        )
    }

    /// Largest distance by which a part vertex lies on the wrong side of a
    /// cut above it. Zero when every cut separates its descendants.
    pub fn half_space_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for part in &self.parts {
            for &(cut, side) in &part.lineage {
                let plane = &self.cuts[cut].plane;
                let sign = if side == Side::Negative { 1.0 } else { -1.0 };
                for v in part.mesh.vertices.iter().chain(&part.hull.mesh.vertices) {
                    worst = worst.max(sign * plane.signed_distance(v));
                }
            }
        }
        worst
    }

    /// Pairs of parts whose hull bounding boxes overlap with positive volume.
    pub fn hull_box_overlaps(&self) -> Vec<(usize, usize, f64)> {
        let boxes: Vec<Aabb> = self.parts.iter().map(|p| p.hull.mesh.aabb()).collect();
        let mut out = Vec::new();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let lo = boxes[i].min.sup(&boxes[j].min);
                let hi = boxes[i].max.inf(&boxes[j].max);
                let d = hi - lo;
                if d.iter().all(|&x| x > 0.0) {
                    out.push((self.parts[i].id, self.parts[j].id, d.x * d.y * d.z));
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct Clock {
    visibility: f64,
    concavity: f64,
}

fn build_part(id: usize, mesh: TriMesh, lineage: Vec<(usize, Side)>, config: &DecompConfig) -> Result<(Part, Clock)> {
    let mut clock = Clock::default();
    let t = Instant::now();
    let hull = convex_hull_padded(&mesh.vertices)?;
    let concavity = concavity_against(&mesh, &hull, config.samples, config.seed, config.concavity_combine)?;
    clock.concavity = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let cage = build_cage(&mesh, config.epsilon, cage_resolution(&mesh, config.epsilon))?;
    let visibility = compute_visibility_edges(&mesh, &cage)?;
    clock.visibility = t.elapsed().as_secs_f64();
    let terminal = if visibility.is_empty() {
        Some(TerminalReason::NoEdges)
    } else if concavity.combined <= config.concavity_threshold {
        Some(TerminalReason::Threshold)
    } else {
        None
    };
    Ok((
        Part {
            id,
            mesh,
            visibility,
            concavity,
            hull,
            terminal,
            lineage,
        },
        clock,
    ))
}

/// Normalizes, optionally remeshes, and checks that the result is closed.
pub fn prepare(mesh: &TriMesh, config: &DecompConfig) -> Result<(TriMesh, Transform)> {
    config.validate()?;
    let (normalized, to_input) = normalize(mesh)?;
    let mut prepared = if config.remesh_enabled {
        remesh(&normalized, config.remesh_resolution)?
    } else {
        normalized.without_degenerate_triangles()
    };
    let report = validate(&prepared);
    if !report.watertight || !report.orientable {
        return Err(Error::InvalidMesh(format!(
            "mesh is not closed and consistently oriented ({} boundary edges); enable remeshing",
            report.boundary_edges
        )));
    }
    if prepared.signed_volume() < 0.0 {
        prepared.flip_winding();
    }
    Ok((prepared, to_input))
}

pub fn decompose(mesh: &TriMesh, config: &DecompConfig) -> Result<Decomposition> {
    let t = Instant::now();
    let (prepared, to_input) = prepare(mesh, config)?;
    let preprocess = t.elapsed().as_secs_f64();
    let mut d = decompose_prepared(&prepared, config)?;
    d.to_input = to_input;
    d.timings.preprocess = preprocess;
    d.timings.total += preprocess;
    Ok(d)
}

/// Runs the greedy loop on a mesh that is already normalized and closed.
pub fn decompose_prepared(mesh: &TriMesh, config: &DecompConfig) -> Result<Decomposition> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let (root, clock) = build_part(0, mesh.clone(), Vec::new(), config)?;
    timings.visibility += clock.visibility;
    timings.concavity += clock.concavity;
    let mut parts = vec![root];
    let mut cuts: Vec<CutRecord> = Vec::new();
    let mut next_id = 1;

    loop {
        let pick = |p: &Part| match config.part_pick_metric {
            PickMetric::Collision => p.concavity.combined,
            PickMetric::Visibility => p.visibility_concavity(),
        };
        let Some(idx) = (0..parts.len())
            .filter(|&i| parts[i].terminal.is_none())
            .max_by(|&a, &b| pick(&parts[a]).total_cmp(&pick(&parts[b])).then(parts[b].id.cmp(&parts[a].id)))
        else {
            break;
        };
        if parts.len() >= config.max_parts {
            for p in parts.iter_mut().filter(|p| p.terminal.is_none()) {
                p.terminal = Some(TerminalReason::PartCap);
            }
            break;
        }

        let t = Instant::now();
        let selection = select_best_plane(&parts[idx].mesh, &parts[idx].visibility, &config.plane_search());
        timings.plane_search += t.elapsed().as_secs_f64();
        let candidates = match selection {
            Ok((_, c)) => c.candidates,
            Err(Error::NoUsefulPlane) => {
                parts[idx].terminal = Some(TerminalReason::NoUsefulPlane);
                continue;
            }
            Err(e) => return Err(e),
        };

        let cut_index = cuts.len();
        let mut outcome = None;
        for (attempt, cand) in candidates
            .iter()
            .take_while(|c| c.score > 0.0)
            .take(MAX_CUT_RETRIES + 1)
            .enumerate()
        {
            let t = Instant::now();
            let pieces = split_and_separate_sides(&parts[idx].mesh, &cand.plane);
            timings.cutting += t.elapsed().as_secs_f64();
            let pieces = match pieces {
                Ok(p) => p,
                Err(Error::DegenerateCut(_) | Error::EmptySide) => continue,
                Err(e) => return Err(e),
            };
            let built: Vec<Result<(Part, Clock)>> = pieces
                .into_par_iter()
                .enumerate()
                .map(|(k, (side, m))| {
                    let mut lineage = parts[idx].lineage.clone();
                    lineage.push((cut_index, side));
                    build_part(next_id + k, m, lineage, config)
                })
                .collect();
            if built.iter().any(|b| b.is_err()) {
                continue;
            }
            outcome = Some((attempt + 1, *cand, built.into_iter().map(|b| b.unwrap()).collect::<Vec<_>>()));
            break;
        }
        let Some((attempts, cand, children)) = outcome else {
            parts[idx].terminal = Some(TerminalReason::RetriesExhausted);
            continue;
        };
        if parts.len() - 1 + children.len() > config.max_parts {
            for p in parts.iter_mut().filter(|p| p.terminal.is_none()) {
                p.terminal = Some(TerminalReason::PartCap);
            }
            break;
        }

        let parent = parts.remove(idx);
        let mut ids = Vec::new();
        let mut child_cstar = 0.0;
        for (child, clock) in children {
            timings.visibility += clock.visibility;
            timings.concavity += clock.concavity;
            ids.push(child.id);
            child_cstar += child.visibility_concavity();
            parts.push(child);
        }
        next_id += ids.len();
        cuts.push(CutRecord {
            part: parent.id,
            plane: cand.plane,
            value: cand.value,
            score: cand.score,
            candidates: candidates.len(),
            attempts,
            parent_concavity: parent.concavity.combined,
            parent_visibility_concavity: parent.visibility_concavity(),
            children: ids,
            children_visibility_concavity: child_cstar,
        });
    }

    parts.sort_by_key(|p| p.id);
    timings.total = start.elapsed().as_secs_f64();
    Ok(Decomposition {
        parts,
        cuts,
        config: config.clone(),
        mesh: mesh.clone(),
        to_input: Transform::identity(),
        timings,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationRun {
    /// Unit quaternion as (w, x, y, z).
    pub rotation: [f64; 4],
    pub parts: usize,
    pub concavity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationReport {
    pub baseline: RotationRun,
    pub runs: Vec<RotationRun>,
}

/// Uniformly distributed rotation (Shoemake).
pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(Quaternion::new(
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    ))
}

fn run_rotated(mesh: &TriMesh, q: UnitQuaternion<f64>, config: &DecompConfig) -> Result<RotationRun> {
    let rotation = Transform::new(q.to_rotation_matrix().into_inner(), Vec3::zeros(), 1.0)?;
    let d = decompose_prepared(&rotation.apply_mesh(mesh), config)?;
    Ok(RotationRun {
        rotation: [q.w, q.i, q.j, q.k],
        parts: d.parts.len(),
        concavity: d.evaluate()?.combined,
    })
}

/// Decomposes `n_rotations` randomly rotated copies of the prepared mesh
/// with the same configuration. Rotations act on the prepared vertices, so
/// vertex indexing is shared by all runs.
pub fn rotation_test(mesh: &TriMesh, config: &DecompConfig, n_rotations: usize, rotation_seed: u64) -> Result<RotationReport> {
    let (prepared, _) = prepare(mesh, config)?;
    rotation_test_prepared(&prepared, config, n_rotations, rotation_seed)
}

pub fn rotation_test_prepared(
    prepared: &TriMesh,
    config: &DecompConfig,
    n_rotations: usize,
    rotation_seed: u64,
) -> Result<RotationReport> {
    if n_rotations == 0 {
        return Err(Error::InvalidConfig("at least one rotation is required".into()));
    }
    let baseline = run_rotated(prepared, UnitQuaternion::identity(), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rotation_seed);
    let rotations: Vec<_> = (0..n_rotations).map(|_| random_rotation(&mut rng)).collect();
    let runs = rotations
        .into_iter()
        .map(|q| run_rotated(prepared, q, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(RotationReport { baseline, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn raw() -> DecompConfig {
        DecompConfig {
            remesh_enabled: false,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(DecompConfig::default().validate().is_ok());
        for c in [
            DecompConfig { epsilon: 0.0, ..Default::default() },
            DecompConfig { k: 0, ..Default::default() },
            DecompConfig { concavity_threshold: -1.0, ..Default::default() },
            DecompConfig { max_parts: 0, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn cube_is_one_part() {
        let d = decompose(&shapes::unit_cube(), &raw()).unwrap();
        assert_eq!(d.parts.len(), 1);
        assert_eq!(d.parts[0].terminal, Some(TerminalReason::NoEdges));
        assert!((d.parts[0].hull.volume - 1.0).abs() < 1e-9);
        assert!(d.cuts.is_empty());
    }

    #[test]
    fn l_prism_two_boxes() {
        let config = DecompConfig { seed: 42, ..raw() };
        let d = decompose(&shapes::l_prism(), &config).unwrap();
        assert_eq!(d.parts.len(), 2);
        for p in &d.parts {
            assert!(p.concavity.combined <= 0.01);
            assert!(validate(&p.mesh).watertight);
        }
        let vol: f64 = d.parts.iter().map(|p| p.hull.volume).sum();
        assert!((vol - d.mesh.signed_volume()).abs() / d.mesh.signed_volume() < 0.02);
        assert!(d.evaluate().unwrap().combined <= 0.01);
        assert!(d.half_space_violation() <= HALF_SPACE_TOLERANCE);
        // input-frame hulls have the input's volumes, 2 and 1
        let mut v: Vec<f64> = d.hulls_in_input_frame().iter().map(|m| m.signed_volume()).collect();
        v.sort_by(f64::total_cmp);
        assert!((v[0] - 1.0).abs() < 1e-6 && (v[1] - 2.0).abs() < 1e-6, "{v:?}");
        assert_eq!(d.cuts.len(), 1);
        assert!(d.cuts[0].children_visibility_concavity < d.cuts[0].parent_visibility_concavity);
    }

    #[test]
    fn part_cap() {
        let config = DecompConfig { max_parts: 1, ..raw() };
        let d = decompose(&shapes::l_prism(), &config).unwrap();
        assert_eq!(d.parts.len(), 1);
        assert_eq!(d.parts[0].terminal, Some(TerminalReason::PartCap));
    }

    #[test]
    fn u_prism_decomposes() {
        let d = decompose(&shapes::u_prism(), &raw()).unwrap();
        assert!(d.parts.len() >= 3 && d.parts.len() <= 4, "{}", d.parts.len());
        assert!(d.parts.iter().all(|p| p.terminal.is_some()));
        assert!(d.half_space_violation() <= HALF_SPACE_TOLERANCE);
        assert!(d.evaluate().unwrap().combined <= 0.05);
    }

    #[test]
    fn open_input_needs_remesh() {
        let mut cube = shapes::unit_cube();
        cube.triangles.pop();
        assert!(matches!(decompose(&cube, &raw()), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn identity_rotation_matches_plain_run() {
        let config = raw();
        let (prepared, _) = prepare(&shapes::l_prism(), &config).unwrap();
        let plain = decompose_prepared(&prepared, &config).unwrap();
        let rotated = run_rotated(&prepared, UnitQuaternion::identity(), &config).unwrap();
        assert_eq!(plain.parts.len(), rotated.parts);
        assert_eq!(plain.evaluate().unwrap().combined, rotated.concavity);
    }

    #[test]
    fn random_rotations_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }
}
