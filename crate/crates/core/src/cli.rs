//! Command-line front end: `decompose`, `morse`, `simulate`, `verify`.
//!
//! Exit codes: 0 on success, 1 when an invariant check fails, 2 for bad
//! input or a failed decomposition.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, Direction};
use crate::geometry::{self, MetricSpec};
use crate::jordan::{FlowSpec, FlowSpecFile, JordanFile, TimeMode};
use crate::linalg::{self, Mat, TolerancePolicy};
use crate::morse::{self, MorseAnalysis};
use crate::structure::{self, Subalgebra};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

const DEFAULT_GRID: usize = 24;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ToleranceOverride {
    pub det: Option<f64>,
    pub orth: Option<f64>,
    pub fix: Option<f64>,
    pub grad: Option<f64>,
    pub recon: Option<f64>,
    pub fd_step: Option<f64>,
}

impl ToleranceOverride {
    pub fn apply(&self, base: TolerancePolicy) -> Result<TolerancePolicy> {
        let t = TolerancePolicy {
            det: self.det.unwrap_or(base.det),
            orth: self.orth.unwrap_or(base.orth),
            fix: self.fix.unwrap_or(base.fix),
            grad: self.grad.unwrap_or(base.grad),
            recon: self.recon.unwrap_or(base.recon),
            fd_step: self.fd_step.unwrap_or(base.fd_step),
        };
        t.validate()?;
        Ok(t)
    }
}

/// A flow plus run options. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ScenarioFile {
    pub n: usize,
    pub time: TimeMode,
    pub generator: Vec<Vec<f64>>,
    #[serde(default)]
    pub jordan: Option<JordanFile>,
    #[serde(default)]
    pub grid_resolution: Option<usize>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub tolerances: Option<ToleranceOverride>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Initial point for `simulate`; a grid sweep is run when absent.
    #[serde(default)]
    pub k0: Option<Vec<Vec<f64>>>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn flow_spec(&self) -> FlowSpecFile {
        FlowSpecFile {
            n: self.n,
            time: self.time,
            generator: self.generator.clone(),
            jordan: self.jordan.clone(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kdyn", about = "Translation flows of SL(n, R) acting on SO(n)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Adapted Jordan decomposition, H, mu and c_g.
    Decompose,
    /// Minimal Morse components and recurrent points.
    Morse,
    /// Trajectory from k0, or a basin map over an angle grid.
    Simulate,
    /// Invariant suite for the scenario.
    Verify,
}

/// Resolved run settings.
struct Run {
    scenario: ScenarioFile,
    flow: FlowSpec,
    tolerances: TolerancePolicy,
    out_dir: Option<PathBuf>,
    seed: u64,
    horizon: Option<f64>,
    grid: usize,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BoundViolated { .. } | Error::DisagreementBug { .. } => EXIT_VIOLATION,
        _ => EXIT_INPUT,
    }
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(cli: &Cli) -> Result<Run> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--scenario is required".into()))?;
    let scenario = ScenarioFile::parse(&fs::read_to_string(path)?)?;
    let tolerances = scenario
        .tolerances
        .clone()
        .unwrap_or_default()
        .apply(TolerancePolicy::DEFAULT)?;
    let flow = FlowSpec::from_file_spec(&scenario.flow_spec())?;
    let grid = cli.grid.or(scenario.grid_resolution).unwrap_or(DEFAULT_GRID);
    if grid == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let horizon = cli.horizon.or(scenario.horizon);
    if let Some(h) = horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {h}")));
        }
    }
    Ok(Run {
        out_dir: cli.out.clone().or_else(|| scenario.output_dir.clone()),
        seed: cli.seed.or(scenario.seed).unwrap_or(0),
        scenario,
        flow,
        tolerances,
        horizon,
        grid,
    })
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let run = resolve(cli)?;
    match cli.command {
        Command::Decompose => emit(&run, "decompose.json", &to_json(&decompose_report(&run.flow)?)?, out),
        Command::Morse => emit(&run, "morse.json", &to_json(&morse::morse_report(&run.flow)?)?, out),
        Command::Simulate => simulate(&run, out),
        Command::Verify => verify(&run, out, err),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(run: &Run, name: &str, body: &str, out: &mut dyn Write) -> Result<i32> {
    match &run.out_dir {
        Some(dir) => write_file(dir, name, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// decompose

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AdditiveReport {
    #[serde(rename = "E")]
    e: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    n: Vec<Vec<f64>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DecomposeReport {
    time: TimeMode,
    conjugator: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    chamber: Vec<f64>,
    mu: Option<f64>,
    c_g: Vec<Vec<i8>>,
    diagonalizable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    additive: Option<AdditiveReport>,
}

fn clean(m: &Mat) -> Vec<Vec<f64>> {
    // normalizes -0.0 so output is stable across platforms
    linalg::to_rows(&m.map(|v| if v == 0.0 { 0.0 } else { v }))
}

fn decompose_report(flow: &FlowSpec) -> Result<DecomposeReport> {
    let t = &flow.triple;
    Ok(DecomposeReport {
        time: flow.mode,
        conjugator: clean(&t.conjugator),
        e: clean(&t.e),
        h: clean(&t.h),
        u: clean(&t.u),
        chamber: t.chamber.entries().to_vec(),
        mu: structure::mu(&t.chamber).ok(),
        c_g: flow.component_sign()?.rows(),
        diagonalizable: !flow.has_unipotent_part(),
        additive: flow.additive.as_ref().map(|p| AdditiveReport {
            e: clean(&p.e),
            h: clean(&p.h),
            n: clean(&p.n),
        }),
    })
}

// ---------------------------------------------------------------------------
// simulate

fn rz(n: usize, a: f64) -> Mat {
    let mut m = Mat::identity(n, n);
    m[(0, 0)] = a.cos();
    m[(0, 1)] = -a.sin();
    m[(1, 0)] = a.sin();
    m[(1, 1)] = a.cos();
    m
}

fn ry(a: f64) -> Mat {
    Mat::from_row_slice(3, 3, &[a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos()])
}

/// Angle grid on `SO(2)` or a ZYZ Euler grid on `SO(3)`, in canonical order.
pub fn angle_grid(n: usize, resolution: usize) -> Result<Vec<(Vec<f64>, Mat)>> {
    let tau = std::f64::consts::TAU;
    let step = tau / resolution as f64;
    match n {
        2 => Ok((0..resolution)
            .map(|i| {
                let a = i as f64 * step;
                (vec![a], rz(2, a))
            })
            .collect()),
        3 => {
            let mut out = Vec::with_capacity(resolution.pow(3));
            for i in 0..resolution {
                for j in 0..resolution {
                    for l in 0..resolution {
                        let a = i as f64 * step;
                        let b = (j as f64 + 0.5) * std::f64::consts::PI / resolution as f64;
                        let c = l as f64 * step;
                        out.push((vec![a, b, c], rz(3, a) * ry(b) * rz(3, c)));
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidInput(format!("grid sweeps support n <= 3, got n = {n}"))),
    }
}

fn simulate(run: &Run, out: &mut dyn Write) -> Result<i32> {
    let flow = &run.flow;
    if let Some(rows) = &run.scenario.k0 {
        let k0 = linalg::from_rows(rows)?;
        let horizon = run.horizon.unwrap_or(match flow.mode {
            TimeMode::Discrete => 40.0,
            TimeMode::Continuous => 10.0,
        });
        let traj = flow::trajectory(flow, &k0, horizon, None)?;
        return emit(run, "trajectory.csv", &traj.to_csv(), out);
    }
    let analysis = MorseAnalysis::new(flow)?;
    let horizon = run.horizon.unwrap_or(flow::DEFAULT_MAX_TIME);
    let grid = angle_grid(flow.n(), run.grid)?;
    let labels = analysis.labels();
    let rows: Vec<String> = grid
        .par_iter()
        .enumerate()
        .map(|(i, (angles, k))| {
            let index_of = |l: &morse::MorseLabel| {
                labels
                    .iter()
                    .position(|m| m == l)
                    .map_or_else(|| "NC".to_string(), |p| p.to_string())
            };
            let (f, b) = match morse::classify_basin_with(&analysis, flow, k, horizon) {
                Ok(r) => (index_of(&r.forward), index_of(&r.backward)),
                Err(_) => ("NC".to_string(), "NC".to_string()),
            };
            let angles: Vec<String> = angles.iter().map(|a| format!("{a:.12}")).collect();
            format!("{i},{},{f},{b}\n", angles.join(","))
        })
        .collect();
    let names = if flow.n() == 2 { "alpha" } else { "a,b,c" };
    let mut body = format!("index,{names},forward,backward\n");
    body.extend(rows);
    emit(run, "basin_map.csv", &body, out)
}

// ---------------------------------------------------------------------------
// verify

struct Suite<'a> {
    out: &'a mut dyn Write,
    failures: usize,
}

impl Suite<'_> {
    fn record(&mut self, name: &str, result: Result<String>) -> Result<()> {
        match result {
            Ok(detail) => writeln!(self.out, "PASS {name}: {detail}")?,
            Err(e) => {
                self.failures += 1;
                writeln!(self.out, "FAIL {name}: {e}")?;
            }
        }
        Ok(())
    }
}

fn violation(msg: String) -> Error {
    Error::InvalidInput(msg)
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut z = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            z[(i, j)] = v;
            z[(j, i)] = -v;
        }
    }
    linalg::expm(&z)
}

fn verify(run: &Run, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    let flow = &run.flow;
    let tol = run.tolerances;
    let n = flow.n();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut suite = Suite { out, failures: 0 };

    suite.record("jordan", (|| -> Result<String> {
        let t = &flow.triple;
        let q = &t.conjugator;
        let back = linalg::inverse(q)? * t.product() * q;
        let target = match flow.mode {
            TimeMode::Discrete => flow.generator.clone(),
            TimeMode::Continuous => linalg::expm(&flow.generator),
        };
        let r = linalg::max_abs_diff(&back, &target) / target.norm().max(1.0);
        if r <= 1e-8 {
            Ok(format!("relative residual {r:.2e}"))
        } else {
            Err(violation(format!("relative residual {r:.2e}")))
        }
    })())?;

    suite.record("iwasawa", (|| -> Result<String> {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let d = g.determinant();
            if d.abs() < 1e-3 {
                continue;
            }
            if d < 0.0 {
                g.column_mut(0).neg_mut();
            }
            let g = &g / g.determinant().powf(1.0 / n as f64);
            let f = linalg::iwasawa_project_with(&g, &tol)?;
            worst = worst.max(linalg::max_abs_diff(&f.reconstruct(), &g));
        }
        if worst <= tol.recon {
            Ok(format!("max reconstruction error {worst:.2e}"))
        } else {
            Err(violation(format!("reconstruction error {worst:.2e}")))
        }
    })())?;

    let chamber = flow.chamber().clone();
    if chamber.is_zero() {
        suite.record("chains", (|| -> Result<String> {
            let mut count = 0;
            for _ in 0..4 {
                let k = random_rotation(n, &mut rng);
                let chain = flow::build_chain(flow, &k, 0.1, 10.0)?;
                if !flow::verify_chain(&chain, flow)? {
                    return Err(violation("chain failed verification".into()));
                }
                count += 1;
            }
            Ok(format!("{count} chains verified (H = 0: every point is chain recurrent)"))
        })())?;
        return finish(suite);
    }

    let analysis = MorseAnalysis::new(flow)?;
    let h = flow.triple.h.clone();
    suite.record("fixed-set", (|| -> Result<String> {
        let mut worst: f64 = 0.0;
        for u in structure::enumerate_u(n) {
            let k = u.matrix();
            worst = worst.max(flow::distance(&flow::act(&h, &k)?, &k));
        }
        if worst <= tol.fix {
            Ok(format!("all of U fixed by h (max drift {worst:.2e}); {} Morse components", analysis.labels().len()))
        } else {
            Err(violation(format!("U element moved by {worst:.2e}")))
        }
    })())?;

    suite.record("decay", (|| -> Result<String> {
        let mu = analysis.mu;
        let mut worst: f64 = 0.0;
        for y in structure::subalgebra_basis(n, Subalgebra::NMinusH(&chamber)) {
            for t in [1.0, 2.0, 4.0] {
                let ht = flow.hyperbolic_at(t);
                let image = &ht * &y * linalg::inverse(&ht)?;
                worst = worst.max(image.norm() / y.norm() / (-mu * t).exp());
            }
        }
        if worst <= 1.0 + 1e-12 {
            Ok(format!("max ratio to e^(-mu t): {worst:.6}"))
        } else {
            Err(violation(format!("ratio {worst}")))
        }
    })())?;

    let spec = MetricSpec::standard(n);
    suite.record("gradient", (|| -> Result<String> {
        let mut worst: f64 = 0.0;
        let mut monotone = true;
        for _ in 0..10 {
            let k = random_rotation(n, &mut rng);
            worst = worst.max(geometry::gradient_residual(&chamber, &spec, &k)?);
            monotone &= geometry::monotonicity_check(&chamber, &spec, &k, 5.0)?;
        }
        if worst < 1e-4 && monotone {
            Ok(format!("max residual {worst:.2e}, heights monotone"))
        } else {
            Err(violation(format!("residual {worst:.2e}, monotone {monotone}")))
        }
    })())?;

    suite.record("basins", (|| -> Result<String> {
        let horizon = run.horizon.unwrap_or(flow::DEFAULT_MAX_TIME);
        let points: Vec<Mat> = (0..50).map(|_| random_rotation(n, &mut rng)).collect();
        let results: Vec<Result<morse::BasinLabels>> = points
            .par_iter()
            .map(|k| morse::classify_basin_with(&analysis, flow, k, horizon))
            .collect();
        let mut bad = 0;
        for r in results {
            let r = r?;
            if !r.forward.attractor || !r.backward.repeller {
                bad += 1;
            }
        }
        if bad == 0 {
            Ok("50 random points: forward limits in attractors, backward in repellers".to_string())
        } else {
            Err(violation(format!("{bad} points with unexpected limit labels")))
        }
    })())?;

    suite.record("rates", (|| -> Result<String> {
        let mut summary = Vec::new();
        for label in analysis.labels() {
            let x = label.coset.representative.matrix();
            let split = geometry::tangent_splitting(&x, &chamber)?;
            let report = geometry::rate_estimates(flow, &split, geometry::MAX_RATE_HORIZON)?;
            if let Some(e) = report.first_violation() {
                return Err(e);
            }
            summary.push(format!("{:?}", split.dimensions()));
        }
        Ok(format!("no bound violations; splittings {}", summary.join(" ")))
    })())?;

    suite.record("chains", (|| -> Result<String> {
        let mut count = 0;
        for label in analysis.labels() {
            let l = morse::random_centralizer_element(&chamber, &mut rng);
            let k = l * label.coset.representative.matrix();
            let chain = flow::build_chain(flow, &k, 0.1, 10.0)?;
            if !flow::verify_chain(&chain, flow)? {
                return Err(violation("chain failed verification".into()));
            }
            count += 1;
        }
        Ok(format!("{count} chains verified"))
    })())?;

    suite.record("limits", (|| -> Result<String> {
        let k = random_rotation(n, &mut rng);
        let lim = flow::omega_limit(flow, &k, 1e-6, flow::DEFAULT_MAX_TIME, Direction::Forward)?;
        let label = analysis.label_of(&lim.representative);
        if label.attractor {
            Ok(format!("forward limit reached at t = {}", lim.time))
        } else {
            Err(violation("forward limit outside the attractors".into()))
        }
    })())?;

    finish(suite)
}

fn finish(suite: Suite<'_>) -> Result<i32> {
    if suite.failures == 0 {
        writeln!(suite.out, "all checks passed")?;
        Ok(EXIT_OK)
    } else {
        writeln!(suite.out, "{} check(s) failed", suite.failures)?;
        Ok(EXIT_VIOLATION)
    }
}
