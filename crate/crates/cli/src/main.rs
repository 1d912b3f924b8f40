//! `randmi`: sample bounds, scenario solves and sequential randomized design
//! for uncertain LMI/BMI problems.

mod config;
mod error;
mod manifest;
mod summary;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use randmi::learning::{sample_bound_one_sided, sample_bound_two_sided, BoundReport};
use randmi::problems::{MANIPULATOR_JSON, TESTBED_JSON};
use randmi::sampling::{derive_seed, draw, repeat_seed, Purpose, ScenarioSet};
use randmi::sequential::{audit, run_sequential, SequentialConfig, SequentialOutcome, SequentialStatus};
use randmi::solver::{solve, SolveResult, SolveStatus, SolverOptions};
use randmi::{ProbabilisticLevels, ProblemKind, Strictness, UncertainProblem, ValidationConstant};

use config::Config;
use error::{CliError, Code};
use manifest::{sha256_hex, InputDigest, RunManifest, Versions};

#[derive(Debug, Parser)]
#[command(name = "randmi", version, about = "Randomized algorithms for uncertain LMI/BMI problems")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate two-sided and one-sided sample sizes.
    Bounds(BoundsArgs),
    /// Solve one scenario program.
    Solve(SolveArgs),
    /// Run the sequential design/validation algorithm.
    Sequential(SequentialArgs),
    /// Estimate the violation probability of a returned design on fresh samples.
    Audit(AuditArgs),
    /// Parse a problem file and print a summary.
    ValidateFile(ValidateArgs),
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.2])]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.01])]
    delta: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.0])]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    m_theta: Vec<u64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Vec<u64>,
    /// Take `m_theta` and `n` from a problem instead.
    #[arg(long, conflicts_with_all = ["m_theta", "n"])]
    problem: Option<String>,
    /// Pair epsilon and delta elementwise instead of crossing them.
    #[arg(long)]
    zip: bool,
}

#[derive(Debug, Args, Default)]
struct SolverFlags {
    /// Strict-block margin; default scales with the nominal constant term.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    tol_alt: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    variable_bound: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, mut o: SolverOptions) -> SolverOptions {
        if self.margin.is_some() {
            o.margin = self.margin;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { o.$f = v; })* };
        }
        set!(restarts, tol_alt, max_rounds, gap_tol, newton_tol, variable_bound);
        o
    }
}

#[derive(Debug, Args)]
struct LevelFlags {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

impl LevelFlags {
    fn resolve(&self, cfg: &Config) -> Result<ProbabilisticLevels, CliError> {
        let d = SequentialConfig::default().levels;
        Ok(ProbabilisticLevels::new(
            self.epsilon.or(cfg.levels.epsilon).unwrap_or(d.epsilon),
            self.delta.or(cfg.levels.delta).unwrap_or(d.delta),
            self.rho.or(cfg.levels.rho).unwrap_or(d.rho),
        )?)
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Problem file, or `@testbed` / `@manipulator`.
    problem: String,
    /// Number of design samples, or `auto` for the one-sided bound.
    #[arg(long, default_value = "auto")]
    samples: String,
    /// Solve at the nominal parameters only.
    #[arg(long, conflicts_with = "samples")]
    nominal: bool,
    #[command(flatten)]
    levels: LevelFlags,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct SequentialArgs {
    problem: String,
    #[command(flatten)]
    levels: LevelFlags,
    #[arg(long)]
    k_t: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// A number or `inf`.
    #[arg(long)]
    a: Option<ValidationConstant>,
    /// Independent runs, seeded from the master seed.
    #[arg(long)]
    repeats: Option<u64>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// A `run-XXX.json` written by `sequential`.
    outcome: PathBuf,
    problem: String,
    /// Audit sample size.
    #[arg(long = "m", value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    problem: String,
}

struct Loaded {
    problem: UncertainProblem,
    digest: InputDigest,
}

fn load_problem(spec: &str) -> Result<Loaded, CliError> {
    let text = match spec.strip_prefix('@') {
        Some("testbed") => TESTBED_JSON.to_string(),
        Some("manipulator") => MANIPULATOR_JSON.to_string(),
        Some(other) => return Err(CliError::usage(format!("no bundled problem `@{other}`"))),
        None => std::fs::read_to_string(spec).map_err(|e| CliError::io(Path::new(spec), e))?,
    };
    let problem = UncertainProblem::from_json(&text).map_err(|e| CliError::new(Code::Schema, format!("{spec}: {e}")))?;
    Ok(Loaded { problem, digest: InputDigest { path: spec.to_string(), sha256: sha256_hex(text.as_bytes()) } })
}

struct Context {
    argv: Vec<String>,
    seed: u64,
    out_dir: PathBuf,
    cfg: Config,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn manifest(
        &self,
        subcommand: &str,
        config: impl Serialize,
        seeds: Vec<u64>,
        inputs: Vec<InputDigest>,
        outputs: &[&str],
    ) -> Result<(), CliError> {
        RunManifest {
            subcommand: subcommand.into(),
            argv: self.argv.clone(),
            config: serde_json::to_value(config).expect("config serializes"),
            seeds,
            inputs,
            outputs: outputs.iter().map(|o| self.path(o).display().to_string()).collect(),
            versions: Versions::default(),
        }
        .write(&self.out_dir)
        .map(|_| ())
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::io(&p, e))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("output serializes");
        std::fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }
}

fn io_err(path: PathBuf) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::io(&path, e)
}

#[derive(Serialize)]
struct BoundsConfig<'a> {
    points: &'a [(f64, f64, f64, u64, u64)],
}

fn cmd_bounds(ctx: &Context, a: &BoundsArgs) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let (ms, ns) = match &a.problem {
        Some(spec) => {
            let l = load_problem(spec)?;
            inputs.push(l.digest);
            (vec![l.problem.m_theta() as u64], vec![l.problem.bound_dimension() as u64])
        }
        None => {
            if a.m_theta.is_empty() || a.n.is_empty() {
                return Err(CliError::usage("bounds needs --m-theta and --n, or --problem"));
            }
            (a.m_theta.clone(), a.n.clone())
        }
    };
    let pairs: Vec<(f64, f64)> = if a.zip {
        if a.epsilon.len() != a.delta.len() {
            return Err(CliError::usage("--zip needs as many --epsilon as --delta values"));
        }
        a.epsilon.iter().copied().zip(a.delta.iter().copied()).collect()
    } else {
        a.epsilon.iter().flat_map(|&e| a.delta.iter().map(move |&d| (e, d))).collect()
    };
    let mut points = Vec::new();
    for &(e, d) in &pairs {
        for &r in &a.rho {
            for &m in &ms {
                for &n in &ns {
                    points.push((e, d, r, m, n));
                }
            }
        }
    }
    ctx.manifest("bounds", BoundsConfig { points: &points }, vec![], inputs, &["bounds.csv"])?;

    let mut rows = Vec::new();
    for &(e, d, r, m, n) in &points {
        let levels = ProbabilisticLevels::new(e, d, r)?;
        for s in [Strictness::Strict, Strictness::Nonstrict] {
            let two = sample_bound_two_sided(&levels, m, n, s);
            let one = sample_bound_one_sided(&levels, m, n, s);
            rows.push(format!("{e},{d},{r},{m},{n},{s},{},{},{}", two.d, two.samples, one.samples));
        }
    }
    let header = "epsilon,delta,rho,m_theta,n,strictness,d,N_two_sided,N_one_sided";
    let mut f = ctx.create("bounds.csv")?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in std::iter::once(header.to_string()).chain(rows) {
        writeln!(f, "{line}").map_err(io_err(ctx.path("bounds.csv")))?;
        writeln!(out, "{line}").map_err(io_err("<stdout>".into()))?;
    }
    f.flush().map_err(io_err(ctx.path("bounds.csv")))
}

#[derive(Serialize)]
struct SolveConfig {
    samples: String,
    nominal: bool,
    levels: ProbabilisticLevels,
    solver: SolverOptions,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    problem: &'a str,
    seed: u64,
    samples: usize,
    bound: Option<BoundReport>,
    result: &'a SolveResult,
}

fn cmd_solve(ctx: &Context, a: &SolveArgs) -> Result<(), CliError> {
    let l = load_problem(&a.problem)?;
    let p = &l.problem;
    let levels = a.levels.resolve(&ctx.cfg)?;
    let mut opts = a.solver.apply(ctx.cfg.solver.clone());
    opts.seed = derive_seed(ctx.seed, Purpose::Design, 0);
    let bound = sample_bound_one_sided(&levels, p.m_theta() as u64, p.bound_dimension() as u64, p.strictness());
    let (n, bound) = if a.nominal {
        (0, None)
    } else if a.samples == "auto" {
        (bound.samples as usize, Some(bound))
    } else {
        let n = a.samples.parse::<usize>().map_err(|_| CliError::usage(format!("--samples: expected a count or `auto`, got `{}`", a.samples)))?;
        if n == 0 {
            return Err(CliError::usage("--samples must be positive"));
        }
        (n, None)
    };
    let cfg = SolveConfig { samples: a.samples.clone(), nominal: a.nominal, levels, solver: opts.clone() };
    ctx.manifest("solve", &cfg, vec![ctx.seed], vec![l.digest], &["solve.json", "design.csv"])?;

    let design = if a.nominal {
        ScenarioSet::nominal(&p.params)
    } else {
        draw(&p.params, n, ctx.seed, Purpose::Design)
    };
    design.write_csv(ctx.create("design.csv")?)?;
    let result = solve(p, &design, &opts)?;
    ctx.write_json(
        "solve.json",
        &SolveOutput { problem: &p.name, seed: ctx.seed, samples: design.len(), bound, result: &result },
    )?;
    println!("status {}", result.status);
    if result.status.has_solution() {
        println!("objective {}", result.objective);
    }
    match result.status {
        SolveStatus::Infeasible | SolveStatus::AllRestartsFailed => {
            Err(CliError::new(Code::Infeasible, format!("scenario program {}", result.status)))
        }
        SolveStatus::NumericalFailure => Err(CliError::new(
            Code::Numerical,
            result.message.clone().unwrap_or_else(|| "numerical failure".into()),
        )),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct SequentialBatch {
    repeats: u64,
    run: SequentialConfig,
}

fn cmd_sequential(ctx: &Context, a: &SequentialArgs) -> Result<(), CliError> {
    let l = load_problem(&a.problem)?;
    let p = &l.problem;
    let sec = &ctx.cfg.sequential;
    let a_const = match (&a.a, &sec.a) {
        (Some(v), _) => Some(*v),
        (None, Some(s)) => Some(s.parse::<ValidationConstant>().map_err(CliError::usage)?),
        (None, None) => None,
    };
    let base = SequentialConfig {
        levels: a.levels.resolve(&ctx.cfg)?,
        k_t: a.k_t.or(sec.k_t).unwrap_or(SequentialConfig::default().k_t),
        alpha: a.alpha.or(sec.alpha),
        a: a_const,
        seed: ctx.seed,
        solver: a.solver.apply(ctx.cfg.solver.clone()),
    };
    base.schedule()?;
    let repeats = a.repeats.or(sec.repeats).unwrap_or(1);
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be positive"));
    }
    let seeds: Vec<u64> = (0..repeats).map(|r| repeat_seed(ctx.seed, r)).collect();
    let mut outputs: Vec<String> = Vec::new();
    for r in 0..repeats {
        outputs.push(format!("run-{r:03}.jsonl"));
        outputs.push(format!("run-{r:03}.json"));
    }
    outputs.push("summary.csv".into());
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.manifest("sequential", SequentialBatch { repeats, run: base.clone() }, seeds.clone(), vec![l.digest], &names)?;

    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| run_sequential(p, &SequentialConfig { seed, ..base.clone() }))
        .collect();
    let mut outcomes = Vec::new();
    let mut first_err = None;
    for (r, res) in results.into_iter().enumerate() {
        let log_name = format!("run-{r:03}.jsonl");
        match res {
            Ok(o) => {
                let mut w = ctx.create(&log_name)?;
                o.write_log(&mut w, true).and_then(|_| w.flush()).map_err(io_err(ctx.path(&log_name)))?;
                ctx.write_json(&format!("run-{r:03}.json"), &o)?;
                outcomes.push(o);
            }
            Err(e) => {
                let mut w = ctx.create(&log_name)?;
                for rec in &e.log {
                    writeln!(w, "{}", rec.to_json_line(true)).map_err(io_err(ctx.path(&log_name)))?;
                }
                eprintln!("run {r}: {e}");
                first_err.get_or_insert(CliError::from(e));
            }
        }
    }
    summary::write(ctx.create("summary.csv")?, &outcomes).map_err(io_err(ctx.path("summary.csv")))?;
    for (r, o) in outcomes.iter().enumerate() {
        if repeats == 1 {
            print_outcome(o);
        } else {
            println!("run {r:03}: {} at k = {}", o.status, o.exit_iteration);
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if outcomes.iter().all(|o| o.status == SequentialStatus::Infeasible) {
        return Err(CliError::new(Code::Infeasible, "every run ended infeasible"));
    }
    Ok(())
}

fn print_outcome(o: &SequentialOutcome) {
    println!("status {}", o.status);
    println!("exit iteration {} of {}", o.exit_iteration, o.k_t);
    println!("design samples {}, validation samples {}", o.design_samples, o.validation_samples);
    if let Some(obj) = o.objective {
        println!("objective {obj}");
    }
}

#[derive(Serialize)]
struct AuditConfig<'a> {
    outcome: &'a Path,
    m: u64,
}

fn cmd_audit(ctx: &Context, a: &AuditArgs) -> Result<(), CliError> {
    let l = load_problem(&a.problem)?;
    let text = std::fs::read_to_string(&a.outcome).map_err(|e| CliError::io(&a.outcome, e))?;
    let outcome: SequentialOutcome = serde_json::from_str(&text)
        .map_err(|e| CliError::new(Code::Schema, format!("{}: {e}", a.outcome.display())))?;
    if outcome.problem != l.problem.name {
        return Err(CliError::new(
            Code::Schema,
            format!("outcome is for `{}`, problem is `{}`", outcome.problem, l.problem.name),
        ));
    }
    let inputs = vec![
        InputDigest { path: a.outcome.display().to_string(), sha256: sha256_hex(text.as_bytes()) },
        l.digest,
    ];
    let seed = derive_seed(ctx.seed, Purpose::Audit, 0);
    ctx.manifest("audit", AuditConfig { outcome: &a.outcome, m: a.m }, vec![seed], inputs, &["audit.json"])?;
    let report = audit(&outcome, &l.problem, &l.problem.params, a.m as usize, seed)?;
    ctx.write_json("audit.json", &report)?;
    println!("{} ({})", report.label, report.status);
    if let Some(e) = &report.estimate {
        println!(
            "violation {} of {} = {:.6}, {:.0}% interval [{:.6}, {:.6}], threshold {}",
            e.violations,
            e.samples,
            e.estimate,
            100.0 * e.confidence,
            e.lower,
            e.upper,
            report.threshold
        );
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let l = load_problem(&a.problem)?;
    let p = &l.problem;
    let kind = match p.kind() {
        ProblemKind::Lmi => "lmi",
        ProblemKind::Bmi => "bmi",
    };
    println!("name {}", p.name);
    println!("kind {kind}");
    println!("parameters {}", p.params.len());
    println!("m_theta {} (x {}, y {})", p.m_theta(), p.layout.m_x(), p.layout.m_y());
    println!("n {}", p.bound_dimension());
    println!("strictness {}", p.strictness());
    for b in &p.blocks {
        println!("block {} dim {} {}", b.name, b.dim, b.strictness);
    }
    println!("sha256 {}", l.digest.sha256);
    Ok(())
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(t) = cli.threads.or(cfg.threads) {
        if t == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    if let Command::ValidateFile(a) = &cli.command {
        return cmd_validate(a);
    }
    let out_dir = cli.out_dir.clone().or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("randmi-out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let ctx = Context { argv, seed: cli.seed.or(cfg.seed).unwrap_or(0), out_dir, cfg };
    match &cli.command {
        Command::Bounds(a) => cmd_bounds(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Sequential(a) => cmd_sequential(&ctx, a),
        Command::Audit(a) => cmd_audit(&ctx, a),
        Command::ValidateFile(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(()) => Code::Ok.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.code.into()
        }
    }
}
