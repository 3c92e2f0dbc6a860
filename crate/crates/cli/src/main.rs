use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use robin_core::grid::{self, SolveOptions};
use robin_core::kernels;
use robin_core::moduli::{build_evaluator, reduced_modulus, GridOptions};
use robin_core::search::{minimize_slack, SearchProblem};
use robin_core::verifier::{
    verify_composition, verify_extension_monotonicity, verify_kufarev_3d, verify_point_charges,
    verify_point_charges_batch, CompositionMode, DecompositionSpec, ExtensionSpec, KufarevSpec,
    PointChargeSpec, VerificationReport, VerifyOptions,
};
use robin_core::{BallSpec, ChargeConfig, Constants, DomainSpec, Error, Point};

#[derive(Parser)]
#[command(name = "robin", version, about = "Robin functions, reduced moduli and composition checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Serialize)]
struct Common {
    /// JSON output file (result plus run manifest).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV output file.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Solver residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// Grid spacing for domains without their own (accepts `1/32`).
    #[arg(long, global = true, default_value = "1/32", value_parser = parse_real)]
    grid_h: f64,
    #[arg(long, global = true, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Evaluate a closed-form kernel.
    Kernel(KernelArgs),
    /// Robin radius of a domain at a point.
    Radius(RadiusArgs),
    /// Reduced modulus of a charge configuration.
    Modulus(ConfigArgs),
    /// Check one of the composition inequalities.
    Verify(VerifyArgs),
    /// Search a configuration family for small slack.
    Search(SearchArgs),
    /// Solve for the regular part of a potential on the voxel grid.
    GridSolve(GridSolveArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Radius(_) => "radius",
            Command::Modulus(_) => "modulus",
            Command::Verify(_) => "verify",
            Command::Search(_) => "search",
            Command::GridSolve(_) => "grid-solve",
        }
    }

    fn config(&self) -> Option<&Path> {
        match self {
            Command::Kernel(_) => None,
            Command::Radius(a) => Some(&a.config),
            Command::Modulus(a) => Some(&a.config),
            Command::Verify(a) => Some(&a.config),
            Command::Search(a) => Some(&a.config),
            Command::GridSolve(a) => Some(&a.config),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
struct Coords(Vec<f64>);

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KernelType {
    Fundamental,
    BallGreen,
    HarmonicRadius,
    BallNeumann,
    NeumannModulus,
}

#[derive(Args, Serialize)]
struct KernelArgs {
    #[arg(long = "type", value_enum)]
    kind: KernelType,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_parser = parse_coords)]
    center: Option<Coords>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_parser = parse_coords)]
    x: Option<Coords>,
    #[arg(long, value_parser = parse_coords)]
    y: Option<Coords>,
}

#[derive(Args, Serialize)]
struct RadiusArgs {
    /// Domain document.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_coords)]
    point: Coords,
}

#[derive(Args, Serialize)]
struct ConfigArgs {
    /// Document with `domain` and `charges`.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Case {
    PointCharges,
    Extension,
    Kufarev,
    Superadditive,
    Subadditive,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    case: Case,
    #[arg(long)]
    config: PathBuf,
    /// Also integrate the energy corrections.
    #[arg(long)]
    corrections: bool,
}

#[derive(Args, Serialize)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
}

#[derive(Args, Serialize)]
struct GridSolveArgs {
    /// Document with `domain` and `charges`.
    #[arg(long)]
    config: PathBuf,
    /// Binary field output.
    #[arg(long)]
    field: Option<PathBuf>,
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not a finite real"))
    }
}

fn parse_coords(s: &str) -> Result<Coords, String> {
    s.split(',')
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Coords)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Problem {
    domain: DomainSpec,
    charges: ChargeConfig,
}

/// A finished run: its JSON result, optional CSV text, the summary line, and
/// whether an inequality failed.
struct Output {
    result: Value,
    csv: Option<String>,
    summary: String,
    violation: bool,
}

impl Output {
    fn new(result: Value, summary: String) -> Self {
        Output {
            result,
            csv: None,
            summary,
            violation: false,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))
}

fn point(c: &Option<Coords>, name: &str, n: usize) -> anyhow::Result<Point> {
    let c = c.as_ref().ok_or_else(|| anyhow!("--{name} is required"))?;
    if c.0.len() != n {
        bail!("--{name} has {} coordinates, expected {n}", c.0.len());
    }
    Ok(Point::new(c.0.clone())?)
}

fn grid_options(c: &Common) -> anyhow::Result<GridOptions> {
    if !(c.grid_h > 0.0) {
        bail!("--grid-h must be positive");
    }
    Ok(GridOptions {
        h: c.grid_h,
        solve: SolveOptions {
            tol: c.tol,
            max_iter: c.max_iter,
        },
        estimate_error: true,
    })
}

fn kernel(a: &KernelArgs) -> anyhow::Result<Output> {
    let c = Constants::new(a.n)?;
    let ball = || -> anyhow::Result<BallSpec> {
        let r = a.radius.ok_or_else(|| anyhow!("--radius is required"))?;
        Ok(BallSpec::new(point(&a.center, "center", a.n)?, r)?)
    };
    let (name, value) = match a.kind {
        KernelType::Fundamental => (
            "fundamental",
            kernels::fundamental_solution(&point(&a.x, "x", a.n)?, &point(&a.y, "y", a.n)?, &c)?,
        ),
        KernelType::BallGreen => (
            "ball-green",
            kernels::ball_green(&point(&a.x, "x", a.n)?, &point(&a.y, "y", a.n)?, &ball()?, &c)?,
        ),
        KernelType::HarmonicRadius => (
            "harmonic-radius",
            kernels::ball_harmonic_radius(&point(&a.y, "y", a.n)?, &ball()?, &c)?,
        ),
        KernelType::BallNeumann => (
            "ball-neumann",
            kernels::ball_neumann_3d(&point(&a.x, "x", 3)?, &point(&a.y, "y", 3)?)?,
        ),
        KernelType::NeumannModulus => (
            "neumann-modulus",
            kernels::neumann_modulus_two_points_3d(&point(&a.x, "x", 3)?, &point(&a.y, "y", 3)?)?,
        ),
    };
    let mut out = Output::new(json!({"type": name, "value": value}), format!("{value}"));
    out.csv = Some(format!("type,value\n{name},{value:e}\n"));
    Ok(out)
}

fn radius(a: &RadiusArgs, common: &Common) -> anyhow::Result<Output> {
    let domain: DomainSpec = read_json(&a.config)?;
    let p = Point::new(a.point.0.clone())?;
    let g = build_evaluator(&domain, vec![p], &grid_options(common)?)?;
    let regular = g.diagonal(0);
    let r = g.robin_radius(0)?;
    let mut out = Output::new(
        json!({"radius": r, "regular_part": regular, "accuracy": g.accuracy()}),
        format!("robin radius {r} (regular part {regular:e})"),
    );
    out.csv = Some(format!("radius,regular_part\n{r:e},{regular:e}\n"));
    Ok(out)
}

fn modulus(a: &ConfigArgs, common: &Common) -> anyhow::Result<Output> {
    let p: Problem = read_json(&a.config)?;
    p.charges.validate(&p.domain)?;
    let g = build_evaluator(&p.domain, p.charges.points().to_vec(), &grid_options(common)?)?;
    let m = reduced_modulus(g.as_ref(), &p.charges)?;
    let mut csv = String::from("k,l,pair_term\n");
    for (k, row) in m.pair_terms.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            csv.push_str(&format!("{k},{l},{v:e}\n"));
        }
    }
    let mut out = Output::new(
        serde_json::to_value(&m)?,
        format!("reduced modulus {} (error bar {:e})", m.m, m.error_bar),
    );
    out.csv = Some(csv);
    Ok(out)
}

fn reports_output(reports: Vec<VerificationReport>) -> anyhow::Result<Output> {
    let failed = reports.iter().filter(|r| !r.holds).count();
    let mut csv = format!("{}\n", VerificationReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let (result, summary) = if let [r] = reports.as_slice() {
        (
            serde_json::to_value(r)?,
            format!(
                "{}: slack {} (error bar {:e}) {}",
                r.check,
                r.slack,
                r.error_bar,
                if r.holds { "holds" } else { "VIOLATED" }
            ),
        )
    } else {
        (
            json!({"reports": reports, "violations": failed}),
            format!("{} reports, {failed} violations", reports.len()),
        )
    };
    Ok(Output {
        result,
        csv: Some(csv),
        summary,
        violation: failed > 0,
    })
}

/// A config holding either one document or an array of them.
fn one_or_many<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let v: Value = read_json(path)?;
    let wrap = |e| anyhow::Error::new(e).context(format!("malformed config {}", path.display()));
    match v {
        Value::Array(items) => items
            .into_iter()
            .map(|i| serde_json::from_value(i).map_err(wrap))
            .collect(),
        other => Ok(vec![serde_json::from_value(other).map_err(wrap)?]),
    }
}

fn verify(a: &VerifyArgs, common: &Common) -> anyhow::Result<Output> {
    let opts = VerifyOptions {
        grid: grid_options(common)?,
        corrections: a.corrections,
        ..Default::default()
    };
    let reports = match a.case {
        Case::PointCharges => {
            let specs: Vec<PointChargeSpec> = one_or_many(&a.config)?;
            if specs.len() == 1 {
                vec![verify_point_charges(&specs[0])?]
            } else {
                verify_point_charges_batch(&specs)
                    .into_iter()
                    .collect::<Result<_, _>>()?
            }
        }
        Case::Kufarev => {
            let specs: Vec<KufarevSpec> = one_or_many(&a.config)?;
            specs
                .iter()
                .map(verify_kufarev_3d)
                .collect::<Result<_, _>>()?
        }
        Case::Extension => {
            let spec: ExtensionSpec = read_json(&a.config)?;
            vec![verify_extension_monotonicity(&spec, &opts)?]
        }
        Case::Superadditive | Case::Subadditive => {
            let spec: DecompositionSpec = read_json(&a.config)?;
            let mode = match a.case {
                Case::Superadditive => CompositionMode::Superadditive,
                _ => CompositionMode::Subadditive,
            };
            vec![verify_composition(&spec, mode, &opts)?]
        }
    };
    reports_output(reports)
}

fn search(a: &SearchArgs, common: &Common) -> anyhow::Result<Output> {
    let p: SearchProblem = read_json(&a.config)?;
    let r = minimize_slack(&p, common.seed, a.iters)?;
    let mut out = Output::new(
        serde_json::to_value(&r)?,
        format!(
            "best objective {} after {} iterations ({} improving steps)",
            r.best_objective, r.iterations, r.improving_steps
        ),
    );
    out.csv = Some(r.trace_csv());
    out.violation = r.slack.is_some_and(|s| s < -1e-9);
    Ok(out)
}

fn grid_solve(a: &GridSolveArgs, common: &Common) -> anyhow::Result<Output> {
    let p: Problem = read_json(&a.config)?;
    p.charges.validate(&p.domain)?;
    let h = p.domain.preferred_h().unwrap_or(grid_options(common)?.h);
    let vox = p.domain.voxelize(h)?;
    let c = Constants::new(3)?;
    let opts = SolveOptions {
        tol: common.tol,
        max_iter: common.max_iter,
    };
    let (field, report) = grid::solve_regular_part(&vox, &p.charges, &c, &opts)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual,
        }
        .into());
    }
    if let Some(path) = &a.field {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        field.write_binary(std::io::BufWriter::new(f))?;
    }
    let at_points = p
        .charges
        .points()
        .iter()
        .map(|z| field.interpolate(z.coords()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = Vec::new();
    field.write_csv(&mut csv)?;
    let mut out = Output::new(
        json!({
            "h": h,
            "dims": vox.dims,
            "origin": vox.origin,
            "cells": vox.n_cells(),
            "solve": report,
            "regular_part_at_charges": at_points,
        }),
        format!(
            "{} cells, {} iterations, residual {:e}",
            vox.n_cells(),
            report.iterations,
            report.residual
        ),
    );
    out.csv = Some(String::from_utf8(csv)?);
    Ok(out)
}

fn digest(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn run(cli: &Cli) -> anyhow::Result<Output> {
    match &cli.cmd {
        Command::Kernel(a) => kernel(a),
        Command::Radius(a) => radius(a, &cli.common),
        Command::Modulus(a) => modulus(a, &cli.common),
        Command::Verify(a) => verify(a, &cli.common),
        Command::Search(a) => search(a, &cli.common),
        Command::GridSolve(a) => grid_solve(a, &cli.common),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(&cli).and_then(|out| {
        let mut digests = serde_json::Map::new();
        if let Some(p) = cli.cmd.config() {
            digests.insert(p.display().to_string(), json!(digest(p)?));
        }
        let doc = json!({
            "manifest": {
                "subcommand": cli.cmd.name(),
                "parameters": {"common": &cli.common, "command": &cli.cmd},
                "input_digests": digests,
                "version": env!("CARGO_PKG_VERSION"),
                "wall_time_s": start.elapsed().as_secs_f64(),
            },
            "result": out.result,
        });
        if let Some(path) = &cli.common.out {
            fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        if let (Some(path), Some(csv)) = (&cli.common.csv, &out.csv) {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => {
            println!("{}", out.summary);
            if out.violation {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
