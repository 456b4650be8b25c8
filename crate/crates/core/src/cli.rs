//! The `acd` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::concavity::{evaluate_decomposition, Combine, ConcavityScore, DEFAULT_SAMPLES};
use crate::decomposer::{decompose, rotation_test, DecompConfig, PickMetric};
use crate::error::{Error, Result};
use crate::hull::convex_hull;
use crate::io::{load_mesh, load_obj_objects, save_decomposition, OutputMode, RunReport};
use crate::mesh::normalize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "acd", version, about = "Approximate convex decomposition by visibility cuts")]
pub struct Cli {
    /// Log each step to standard error (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0, global = true)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose a mesh and write its convex hulls.
    Decompose(DecomposeArgs),
    /// Score a set of hulls against a mesh.
    Eval(EvalArgs),
    /// Decompose randomly rotated copies of a mesh.
    RotateTest(RotateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = crate::visibility::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Edges sampled per plane search.
    #[arg(long, default_value_t = crate::plane_search::DEFAULT_K)]
    pub k: usize,
    /// Concavity at which a part stops being cut.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 128)]
    pub max_parts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub remesh_resolution: usize,
    #[arg(long)]
    pub no_remesh: bool,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = PickArg::Collision)]
    pub part_pick: PickArg,
    #[arg(long, value_enum, default_value_t = CombineArg::Min)]
    pub concavity_combine: CombineArg,
    #[arg(long, default_value_t = crate::plane_search::DEFAULT_MAX_FLAT_PLANES)]
    pub max_flat_planes: usize,
    #[arg(long)]
    pub no_flat_planes: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PickArg {
    Collision,
    Visibility,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum CombineArg {
    Min,
    Max,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Multi,
    Split,
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Combine {
        match c {
            CombineArg::Min => Combine::Min,
            CombineArg::Max => Combine::Max,
        }
    }
}

impl ConfigArgs {
    pub fn config(&self) -> DecompConfig {
        DecompConfig {
            epsilon: self.epsilon,
            k: self.k,
            concavity_threshold: self.threshold,
            max_parts: self.max_parts,
            seed: self.seed,
            remesh_resolution: self.remesh_resolution,
            remesh_enabled: !self.no_remesh,
            samples: self.samples,
            part_pick_metric: match self.part_pick {
                PickArg::Collision => PickMetric::Collision,
                PickArg::Visibility => PickMetric::Visibility,
            },
            max_flat_planes: self.max_flat_planes,
            flat_planes: !self.no_flat_planes,
            concavity_combine: self.concavity_combine.into(),
        }
    }
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    #[arg(short, long, default_value = "out")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Split)]
    pub output_mode: ModeArg,
    /// Also write the cut pieces themselves.
    #[arg(long)]
    pub raw_parts: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub input: PathBuf,
    /// Directory of hull OBJs, or one OBJ with an object per hull.
    pub hulls: PathBuf,
    /// Where eval.json goes; defaults to the hull directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CombineArg::Min)]
    pub concavity_combine: CombineArg,
}

#[derive(Args, Debug)]
pub struct RotateArgs {
    pub input: PathBuf,
    #[arg(short, long, default_value = "out")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub rotations: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Serialize)]
struct EvalReport {
    input: String,
    hull_files: Vec<String>,
    parts: usize,
    samples: usize,
    seed: u64,
    concavity: ConcavityScore,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_USAGE
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Decompose(a) => run_decompose(a, cli.verbose),
        Command::Eval(a) => run_eval(a, cli.verbose),
        Command::RotateTest(a) => run_rotate_test(a, cli.verbose),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run_decompose(a: &DecomposeArgs, verbose: u8) -> Result<()> {
    let start = Instant::now();
    let config = a.config.config();
    config.validate()?;
    let mesh = load_mesh(&a.input)?;
    if verbose > 0 {
        eprintln!("loaded {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    }
    let d = decompose(&mesh, &config)?;
    if verbose > 0 {
        for (n, c) in d.cuts.iter().enumerate() {
            eprintln!(
                "cut {n}: part {} -> {:?}, C* {:.4} -> {:.4}, attempts {}",
                c.part, c.children, c.parent_visibility_concavity, c.children_visibility_concavity, c.attempts
            );
        }
    }
    let report = RunReport::new(&a.input.display().to_string(), &d)?;
    let mode = match a.output_mode {
        ModeArg::Multi => OutputMode::Multi,
        ModeArg::Split => OutputMode::Split,
    };
    let files = save_decomposition(&d, &report, &a.output, mode, a.raw_parts)?;
    if verbose > 0 {
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    println!(
        "parts={} concavity={:.6} seconds={:.3}",
        report.totals.parts,
        report.totals.concavity.combined,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn hull_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let is_obj = p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("obj"));
        if is_obj && !name.starts_with("raw_part_") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn run_eval(a: &EvalArgs, verbose: u8) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::InvalidConfig("samples must be at least 1".into()));
    }
    let input = load_mesh(&a.input)?;
    let files = hull_files(&a.hulls)?;
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!("no hull OBJs in {}", a.hulls.display())));
    }
    let (normalized, to_input) = normalize(&input)?;
    let to_unit = to_input.inverse();
    let mut hulls = Vec::new();
    for f in &files {
        for (_, mesh) in load_obj_objects(f)? {
            let points: Vec<_> = mesh.vertices.iter().map(|p| to_unit.apply(p)).collect();
            hulls.push(convex_hull(&points)?);
        }
    }
    if verbose > 0 {
        eprintln!("{} hulls from {} files", hulls.len(), files.len());
    }
    let concavity = evaluate_decomposition(&normalized, &hulls, a.samples, a.seed, a.concavity_combine.into())?;
    let report = EvalReport {
        input: a.input.display().to_string(),
        hull_files: files.iter().map(|f| f.display().to_string()).collect(),
        parts: hulls.len(),
        samples: a.samples,
        seed: a.seed,
        concavity,
    };
    let dir = match &a.output {
        Some(d) => d.clone(),
        None if a.hulls.is_dir() => a.hulls.clone(),
        None => a.hulls.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(&dir)?;
    let p = dir.join("eval.json");
    fs::write(&p, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&p, e))?;
    println!("parts={} concavity={:.6}", report.parts, concavity.combined);
    Ok(())
}

pub fn run_rotate_test(a: &RotateArgs, verbose: u8) -> Result<()> {
    let config = a.config.config();
    config.validate()?;
    if a.rotations == 0 {
        return Err(Error::InvalidConfig("--rotations must be at least 1".into()));
    }
    let mesh = load_mesh(&a.input)?;
    let report = rotation_test(&mesh, &config, a.rotations, config.seed)?;
    if verbose > 0 {
        eprintln!(
            "baseline parts={} concavity={:.6}",
            report.baseline.parts, report.baseline.concavity
        );
    }
    for (n, r) in report.runs.iter().enumerate() {
        let [w, x, y, z] = r.rotation;
        println!(
            "rotation={n} q=[{w:.6},{x:.6},{y:.6},{z:.6}] parts={} concavity={:.6}",
            r.parts, r.concavity
        );
    }
    create_dir(&a.output)?;
    let p = a.output.join("rotations.json");
    fs::write(&p, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(())
}
