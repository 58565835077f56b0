//! `limo`: plant validation, controller synthesis, cost evaluation, ratio
//! sweeps and the acceptance suite from the command line.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or parse error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use limo::evaluation::{
    centralized_cost_closed_form, centralized_lower_bound, deadbeat_cost_closed_form, simulate_cost,
    CostReport, SimOptions,
};
use limo::plant::{precision_warnings, validate, EnsembleSpec, Plant};
use limo::ratio::{ensemble_ratios, ratio_sweep, RatioReport};
use limo::riccati::{augment, solve_singular_dare, DareSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};
use limo::synthesis::{centralized_from_solution, deadbeat, theta, Controller, Strategy};
use limo::verify::{run_all, VerifyConfig};
use limo::DirectedGraph;

#[derive(Parser)]
#[command(name = "limo", version, about = "Limited model information controller synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a plant against a plant graph and input bound.
    Validate {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps_b: f64,
    },
    /// Print a controller as JSON.
    Synthesize {
        #[command(flatten)]
        input: PlantInput,
        #[command(flatten)]
        out: Output,
    },
    /// Closed-loop cost of one strategy, simulated and in closed form.
    Cost {
        #[command(flatten)]
        input: PlantInput,
        #[command(flatten)]
        out: Output,
    },
    /// Deadbeat ratios on the adversarial family over a grid of r.
    RatioSweep {
        /// Source vertex of the single coupling (1-based).
        #[arg(long, default_value_t = 1)]
        i: usize,
        /// Target vertex of the single coupling (1-based).
        #[arg(long, default_value_t = 2)]
        j: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        eps_b: f64,
        /// Comma-separated r values.
        #[arg(long, default_value = "1,10,100,1000")]
        r_grid: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: Output,
    },
    /// Per-plant ratios of a strategy over a seeded random ensemble.
    Ensemble {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "deadbeat")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1.0)]
        eps_b: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: Output,
    },
    /// Run the acceptance checks. JSON lines on stdout, a readable report on
    /// stderr.
    Verify {
        #[arg(long, default_value_t = VerifyConfig::default().seed)]
        seed: u64,
        /// Multiplier on ensemble sizes; 0 skips ensemble checks.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct PlantInput {
    #[arg(long)]
    plant: PathBuf,
    /// Plant graph; required for the theta strategy.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Design graph; accepted for completeness, every strategy here needs
    /// only each subsystem's own model row.
    #[arg(long)]
    design_graph: Option<PathBuf>,
    #[arg(long, default_value = "deadbeat")]
    strategy: Strategy,
    /// Riccati convergence tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn domain<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Domain(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("LIMO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("LIMO_THREADS must be a positive integer, got '{raw}'"))?;
    if threads == 0 {
        return Err(anyhow!("LIMO_THREADS must be a positive integer, got 0"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Validate { plant, graph, eps_b } => cmd_validate(&plant, &graph, eps_b),
        Command::Synthesize { input, out } => cmd_synthesize(&input, &out),
        Command::Cost { input, out } => cmd_cost(&input, &out),
        Command::RatioSweep { i, j, n, eps_b, r_grid, format, out } => {
            let grid = parse_grid(&r_grid)?;
            if i == 0 || j == 0 {
                return Err(usage(anyhow!("vertices are 1-based")));
            }
            let report = ratio_sweep(i - 1, j - 1, eps_b, &grid, n).map_err(domain)?;
            emit_report(&report, format, &out)
        }
        Command::Ensemble { graph, strategy, eps_b, seed, count, format, out } => {
            let g: DirectedGraph = read_json(&graph)?;
            let spec = EnsembleSpec::new(g, eps_b, seed, count);
            let report = ensemble_ratios(&spec, strategy).map_err(domain)?;
            emit_report(&report, format, &out)
        }
        Command::Verify { seed, scale, inject_fault } => cmd_verify(VerifyConfig { seed, scale, inject_fault }),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(usage)
}

fn write_output(out: &Output, body: &str) -> CmdResult {
    match &out.out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())).map_err(domain),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).map_err(domain)
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_grid(raw: &str) -> Result<Vec<f64>, Failure> {
    let grid = raw
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad r value '{t}'")))
        .collect::<anyhow::Result<Vec<f64>>>()
        .map_err(usage)?;
    if grid.iter().any(|r| !r.is_finite()) {
        return Err(usage(anyhow!("r values must be finite")));
    }
    Ok(grid)
}

fn emit_report(report: &RatioReport, format: Format, out: &Output) -> CmdResult {
    let body = match format {
        Format::Json => to_json(report),
        Format::Csv => report.to_csv(),
    };
    write_output(out, &body)
}

fn cmd_validate(plant: &Path, graph: &Path, eps_b: f64) -> CmdResult {
    let p: Plant = read_json(plant)?;
    let g: DirectedGraph = read_json(graph)?;
    for w in precision_warnings(&p) {
        eprintln!("warning: {w}");
    }
    let violations = validate(&p, &g, eps_b).map_err(domain)?;
    let mut body = String::new();
    for v in &violations {
        body.push_str(&serde_json::to_string(v).expect("serializable"));
        body.push('\n');
    }
    print!("{body}");
    if violations.is_empty() {
        Ok(())
    } else {
        Err(domain(anyhow!("{} violation(s)", violations.len())))
    }
}

struct Loaded {
    plant: Plant,
    graph: Option<DirectedGraph>,
}

fn load(input: &PlantInput) -> Result<Loaded, Failure> {
    let plant: Plant = read_json(&input.plant)?;
    let graph = input.graph.as_deref().map(read_json::<DirectedGraph>).transpose()?;
    if let Some(path) = &input.design_graph {
        let design: DirectedGraph = read_json(path)?;
        if design.n() != plant.n() {
            return Err(usage(anyhow!("design graph has {} vertices, plant has {}", design.n(), plant.n())));
        }
    }
    if input.tol.is_nan() || input.tol <= 0.0 {
        return Err(usage(anyhow!("--tol must be positive")));
    }
    for w in precision_warnings(&plant) {
        eprintln!("warning: {w}");
    }
    Ok(Loaded { plant, graph })
}

fn solve(p: &Plant, tol: f64) -> Result<DareSolution, Failure> {
    solve_singular_dare(&augment(p), tol, DEFAULT_MAX_ITER).map_err(domain)
}

fn build(input: &PlantInput, loaded: &Loaded) -> Result<(Controller, Option<DareSolution>), Failure> {
    let p = &loaded.plant;
    match input.strategy {
        Strategy::Centralized => {
            let sol = solve(p, input.tol)?;
            Ok((centralized_from_solution(p, &sol), Some(sol)))
        }
        Strategy::Deadbeat => Ok((deadbeat(p), None)),
        Strategy::Theta => {
            let g = loaded
                .graph
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--graph is required for the theta strategy")))?;
            Ok((theta(p, g).map_err(domain)?, None))
        }
    }
}

fn cmd_synthesize(input: &PlantInput, out: &Output) -> CmdResult {
    let loaded = load(input)?;
    let (ctrl, _) = build(input, &loaded)?;
    write_output(out, &to_json(&ctrl))
}

#[derive(Serialize)]
struct CostOutput {
    strategy: Strategy,
    simulated: CostReport,
    /// Exact cost where a closed form exists for the strategy.
    closed_form: Option<f64>,
    centralized_lower_bound: f64,
}

fn cmd_cost(input: &PlantInput, out: &Output) -> CmdResult {
    let loaded = load(input)?;
    let p = &loaded.plant;
    let (ctrl, sol) = build(input, &loaded)?;
    let simulated = simulate_cost(p, &ctrl, &SimOptions::default()).map_err(domain)?;
    if simulated.is_lower_estimate() {
        eprintln!("warning: step budget exhausted; total is a lower estimate");
    }
    let closed_form = match (input.strategy, &sol) {
        (Strategy::Centralized, Some(sol)) => Some(centralized_cost_closed_form(p, sol)),
        (Strategy::Deadbeat, _) => Some(deadbeat_cost_closed_form(p)),
        _ => None,
    };
    let report = CostOutput {
        strategy: input.strategy,
        simulated,
        closed_form,
        centralized_lower_bound: centralized_lower_bound(p),
    };
    write_output(out, &to_json(&report))
}

fn cmd_verify(cfg: VerifyConfig) -> CmdResult {
    let results = run_all(&cfg).map_err(domain)?;
    let mut body = String::new();
    for r in &results {
        eprintln!("{}", r.render());
        body.push_str(&serde_json::to_string(r).expect("serializable"));
        body.push('\n');
    }
    print!("{body}");
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(domain(anyhow!("failed checks: {}", failed.join(", "))))
    }
}
