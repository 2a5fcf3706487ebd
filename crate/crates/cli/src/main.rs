//! `circdyn`: analyses of expanding circle coverings from JSON map specs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use circdyn::classify::{check_m1, parabolic_orbit_rate, Depths};
use circdyn::conjugacy::{build_conjugacy, extension_grid, SamplePlan, TabulatedLift};
use circdyn::model_builder::{build_model, build_neighborhoods, verify_model, PointKind, Prescription};
use circdyn::viz::{boundary_orbit, julia_backward, plot_curve, rasterize, JuliaParams, MapSpec, View};
use circdyn::{CirclePoint, Error, MarkovPartition};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "circdyn", version, about = "Markov partitions, conjugacies and distortion of circle coverings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct MapArgs {
    /// JSON map spec.
    #[arg(long)]
    map: PathBuf,
    /// Partition points in turns, comma separated; fractions like 1/3 allowed.
    #[arg(long, value_parser = parse_points, required = true)]
    points: Vec<Vec<f64>>,
    /// Maximum number of refined arcs.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a partition and report primitivity, expansivity and point types.
    Analyze {
        #[command(flatten)]
        map: MapArgs,
        /// Depth of the expansivity profile.
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the conjugacy between two partitions and its distortion profile.
    Conjugate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, value_parser = parse_points, required = true)]
        source_points: Vec<Vec<f64>>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_parser = parse_points, required = true)]
        target_points: Vec<Vec<f64>>,
        /// Target index paired with each source point; identity by default.
        #[arg(long, value_delimiter = ',')]
        pairing: Option<Vec<usize>>,
        /// Scales t = 2^-j for j in LO..HI.
        #[arg(long, default_value = "6..18", value_parser = parse_range)]
        tgrid: (u32, u32),
        /// Uniform base points per scale.
        #[arg(long, default_value_t = 512)]
        samples: usize,
        /// Also dump the extension on an N×N half-plane grid.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify both sides of every partition point.
    Classify {
        #[command(flatten)]
        map: MapArgs,
        /// Deepest refinement level used by the fits.
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a piecewise-Möbius model with prescribed point types.
    Model {
        #[command(flatten)]
        map: MapArgs,
        /// `K:kind` entries (kind hyperbolic or parabolic) or `periodic:kind`.
        #[arg(long, value_delimiter = ',')]
        prescribe: Vec<String>,
        /// Derivative at hyperbolic points.
        #[arg(long)]
        multiplier: Option<f64>,
        /// Boundary samples for the neighbourhood checks.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a Julia set or forward orbits to a binary PPM.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::JuliaBackward)]
        mode: Mode,
        #[arg(long, default_value_t = 800)]
        size: usize,
        /// Cloud size, or iteration cap for forward orbits.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Window `cx,cy,half_width`; fitted to the cloud by default.
        #[arg(long, value_delimiter = ',')]
        view: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decay rate of an orbit converging to a parabolic fixed point.
    OrbitRate {
        #[arg(long)]
        map: PathBuf,
        /// Fixed point `re,im`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        fixed: Vec<f64>,
        /// Starting point `re,im`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Vec<f64>,
        #[arg(long, default_value = "1000..100000", value_parser = parse_range)]
        range: (u32, u32),
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    JuliaBackward,
    BoundaryOrbit,
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            n / d
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

fn parse_points(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad bound {a:?}"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad bound {b:?}"))?;
    if lo > hi {
        return Err(format!("empty range {s:?}"));
    }
    Ok((lo, hi))
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn validation(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T = ()> = Result<T, Failure>;

fn flatten(points: &[Vec<f64>]) -> Vec<CirclePoint> {
    points.iter().flatten().map(|&t| CirclePoint::new(t)).collect()
}

fn partition(map: &Path, points: &[Vec<f64>], budget: Option<u64>) -> CliResult<MarkovPartition> {
    let f = MapSpec::from_file(map)?.covering()?;
    let p = MarkovPartition::new(f, &flatten(points))?;
    Ok(match budget {
        Some(b) => p.with_budget(b),
        None => p,
    })
}

fn emit<T: Serialize>(report: &T, out: Option<&Path>, name: &str) -> CliResult {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    points: Vec<f64>,
    transition: Vec<Vec<u8>>,
    primitivity: circdyn::markov::PrimitivityReport,
    expansivity: circdyn::markov::ExpansivityProfile,
    m1: circdyn::classify::M1Report,
}

fn analyze(args: &MapArgs, depth: usize, out: Option<&Path>) -> CliResult {
    let p = partition(&args.map, &args.points, args.budget)?;
    let report = AnalyzeReport {
        points: p.points().iter().map(|x| x.turns()).collect(),
        transition: p.transition().to_vec(),
        primitivity: p.is_primitive()?,
        expansivity: p.expansivity_profile(depth)?,
        m1: check_m1(&p, Depths::default())?,
    };
    emit(&report, out, "analyze.json")
}

#[derive(Serialize)]
struct ConjugateReport {
    verdict: String,
    analytic_assumption: bool,
    rows: usize,
}

#[allow(clippy::too_many_arguments)]
fn conjugate(
    source: (&Path, &[Vec<f64>]),
    target: (&Path, &[Vec<f64>]),
    pairing: Option<&[usize]>,
    tgrid: (u32, u32),
    samples: usize,
    grid: Option<usize>,
    budget: Option<u64>,
    out: Option<&Path>,
) -> CliResult {
    let pf = partition(source.0, source.1, budget)?;
    let pg = partition(target.0, target.1, budget)?;
    let identity: Vec<usize> = (0..pf.points().len()).collect();
    let c = build_conjugacy(&pf, &pg, pairing.unwrap_or(&identity))?;
    let plan = SamplePlan { uniform: samples, ..SamplePlan::default() };
    let profile = c.distortion_profile(tgrid.0..=tgrid.1, &plan)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("profile.csv"))?;
        w.write_record(["j", "t", "rho_max", "argmax_angle", "class_running"])?;
        for r in &profile.rows {
            let class = r.class_running.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([r.j.to_string(), r.t.to_string(), r.rho_max.to_string(), r.argmax.to_string(), class])?;
        }
        w.flush()?;
        let curve: Vec<(f64, f64)> = profile.rows.iter().map(|r| (r.j as f64, r.rho_max.ln())).collect();
        plot_curve(&curve, 480, 320).write_ppm(&dir.join("profile.ppm"))?;
        if let Some(n) = grid {
            let lift = TabulatedLift::from_conjugacy(&c, 10, 1e-9)?;
            let mut w = csv::Writer::from_path(dir.join("grid.csv"))?;
            w.write_record(["x", "y", "u", "v"])?;
            for row in extension_grid(&lift, n, n, 0.5)? {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
        }
    }
    let report = ConjugateReport {
        verdict: profile.verdict.to_string(),
        analytic_assumption: profile.analytic_assumption,
        rows: profile.rows.len(),
    };
    emit(&report, out, "conjugate.json")
}

fn classify(args: &MapArgs, depth: usize, out: Option<&Path>) -> CliResult {
    let p = partition(&args.map, &args.points, args.budget)?;
    let depths = Depths { n_max: depth, ..Depths::default() };
    if depths.n_max <= depths.n_min {
        return Err(validation(format!("depth must exceed {}", depths.n_min)));
    }
    emit(&check_m1(&p, depths)?, out, "classify.json")
}

fn parse_prescription(p: &MarkovPartition, entries: &[String], multiplier: Option<f64>) -> CliResult<Prescription> {
    let n = p.points().len();
    let mut kinds = vec![None; n];
    for e in entries {
        let (who, kind) = e.split_once(':').ok_or_else(|| validation(format!("expected K:kind, got {e:?}")))?;
        let kind = match kind.trim() {
            "hyperbolic" | "h" => PointKind::Hyperbolic,
            "parabolic" | "p" => PointKind::Parabolic,
            other => return Err(validation(format!("unknown point type {other:?}"))),
        };
        if who.trim() == "periodic" {
            let all = Prescription::uniform(p, kind);
            for (slot, k) in kinds.iter_mut().zip(all.kinds) {
                if k.is_some() && slot.is_none() {
                    *slot = k;
                }
            }
        } else {
            let k: usize = who.trim().parse().map_err(|_| validation(format!("bad point index {who:?}")))?;
            *kinds.get_mut(k).ok_or_else(|| validation(format!("no partition point {k}")))? = Some(kind);
        }
    }
    let pr = Prescription::new(kinds);
    Ok(match multiplier {
        Some(m) => pr.with_multiplier(m)?,
        None => pr,
    })
}

#[derive(Serialize)]
struct ModelOutput {
    verification: circdyn::model_builder::ModelReport,
    neighborhoods: circdyn::model_builder::NeighborhoodSystem,
}

fn model(args: &MapArgs, entries: &[String], multiplier: Option<f64>, samples: usize, depth: usize, out: Option<&Path>) -> CliResult {
    let pf = partition(&args.map, &args.points, args.budget)?;
    let pr = parse_prescription(&pf, entries, multiplier)?;
    let m = build_model(&pf, &pr)?;
    let verification = verify_model(&m, Depths { n_max: depth, ..Depths::default() })?;
    let neighborhoods = build_neighborhoods(&m, samples)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.json"), format!("{}\n", m.export_spec().to_json()))?;
    }
    let pass = verification.pass;
    emit(&ModelOutput { verification, neighborhoods }, out, "model_report.json")?;
    if pass {
        Ok(())
    } else {
        Err(validation("model verification failed"))
    }
}

fn render(map: &Path, mode: Mode, size: usize, samples: usize, seed: u64, view: Option<&[f64]>, out: &Path) -> CliResult {
    let spec = MapSpec::from_file(map)?;
    let view = match view {
        Some([x, y, h]) if *h > 0.0 => Some(View { center: [*x, *y], half_width: *h }),
        Some(_) => return Err(validation("view must be cx,cy,half_width with half_width > 0")),
        None => None,
    };
    let img = match mode {
        Mode::JuliaBackward => {
            let cloud = julia_backward(&spec.dynamics()?, JuliaParams { points: samples, seed, ..JuliaParams::default() })?;
            rasterize(&cloud, size, size, view.unwrap_or_else(|| View::fit(&cloud)))
        }
        Mode::BoundaryOrbit => {
            let r = spec.rational()?;
            boundary_orbit(&r, size, size, view.unwrap_or(View { center: [0.0, 0.0], half_width: 2.0 }), samples)
        }
    };
    img.write_ppm(out)?;
    Ok(())
}

fn complex(v: &[f64], what: &str) -> CliResult<Complex64> {
    match v {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(validation(format!("{what} must be re or re,im"))),
    }
}

fn orbit_rate(map: &Path, fixed: &[f64], start: &[f64], range: (u32, u32)) -> CliResult {
    let r = MapSpec::from_file(map)?.rational()?;
    let rate = parabolic_orbit_rate(&r, complex(fixed, "--fixed")?, complex(start, "--start")?, (range.0 as usize, range.1 as usize))?;
    emit(&rate, None, "")
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Analyze { map, depth, out } => analyze(&map, depth, out.as_deref()),
        Command::Conjugate {
            source,
            source_points,
            target,
            target_points,
            pairing,
            tgrid,
            samples,
            grid,
            budget,
            out,
        } => conjugate(
            (&source, &source_points),
            (&target, &target_points),
            pairing.as_deref(),
            tgrid,
            samples,
            grid,
            budget,
            out.as_deref(),
        ),
        Command::Classify { map, depth, out } => classify(&map, depth, out.as_deref()),
        Command::Model { map, prescribe, multiplier, samples, depth, out } => {
            model(&map, &prescribe, multiplier, samples, depth, out.as_deref())
        }
        Command::Render { map, mode, size, samples, seed, view, out } => {
            render(&map, mode, size, samples, seed, view.as_deref(), &out)
        }
        Command::OrbitRate { map, fixed, start, range } => orbit_rate(&map, &fixed, &start, range),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
