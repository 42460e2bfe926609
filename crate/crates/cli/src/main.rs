//! `qubo-gcs` command-line front end.
//!
//! Exit status: 0 on success, 1 when verification fails or a numeric error
//! occurs, 2 for usage and validation errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qubo_gcs::anneal::{self, AnnealConfig, Mode};
use qubo_gcs::bench::{run_experiment, sha256_hex, ExperimentSpec};
use qubo_gcs::oracle::brute_force_min;
use qubo_gcs::qubo::{gen_ea_slab, read_instance, write_instance};
use qubo_gcs::sa::{simulated_annealing, BetaSchedule, SaConfig};
use qubo_gcs::verify::{run_suite, Analytic, Evaluator, Fault, Faulty};
use qubo_gcs::{Boundary, Error, QuboInstance, SpinConfiguration, TOOL_NAME, VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "qubo-gcs",
    version,
    about = "Coherent-state annealing and baselines for QUBO / Ising problems"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QUBO_GCS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an Edwards-Anderson instance with Gaussian couplings.
    Generate(GenerateArgs),
    /// Solve an instance file heuristically.
    Solve(SolveArgs),
    /// Exhaustive ground state (up to 25 spins).
    Exact(ExactArgs),
    /// Check the analytical engine against the dense oracle and finite differences.
    Verify(VerifyArgs),
    /// Run a batch experiment from a spec file.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Cube side L (N = L^3).
    #[arg(long = "l", conflicts_with = "dims")]
    l: Option<usize>,
    /// Slab dimensions, e.g. 2x3x4.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Periodic)]
    boundary: BoundaryArg,
    /// Output path (default: ea-<dims>-<seed>.qubo).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BoundaryArg {
    Open,
    Periodic,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Gcs,
    Product,
    Sa,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScheduleArg {
    Geometric,
    Linear,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Instance file.
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Gcs)]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Schedule points for gcs / product.
    #[arg(long, default_value_t = 1000)]
    nt: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    adam_eps: f64,
    #[arg(long, default_value_t = 0.01)]
    init_scale: f64,
    /// Restrict M to the coupling graph.
    #[arg(long)]
    sparse_m: bool,
    /// Divide couplings by their mean magnitude before annealing.
    #[arg(long)]
    rescale: bool,
    /// Sweeps for sa.
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 0.1)]
    sa_beta_start: f64,
    #[arg(long, default_value_t = 5.0)]
    sa_beta_end: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Geometric)]
    sa_schedule: ScheduleArg,
    /// JSON result file (default: <instance>.<method>.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    instance: PathBuf,
    /// JSON result file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negative control: break the engine on purpose.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment spec file.
    spec: PathBuf,
    /// Output directory (resumed if it already holds records).
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numeric(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key}={value}");
}

fn spin_string(s: &[i8]) -> String {
    s.iter().map(|&v| if v > 0 { '+' } else { '-' }).collect()
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 2,
        msg: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::from(Error::from(e)))
}

fn load(path: &PathBuf) -> Result<QuboInstance, Failure> {
    read_instance(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    })
}

fn generate(a: GenerateArgs) -> CmdResult {
    let dims = match (a.l, &a.dims) {
        (Some(l), None) => [l, l, l],
        (None, Some(d)) => d.parse::<qubo_gcs::bench::Dims>()?.0,
        (None, None) => return Err(Error::Validation("pass --l or --dims".into()).into()),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    if dims.iter().any(|&v| v < 2) {
        return Err(
            Error::Validation(format!("lattice sides must be at least 2, got {dims:?}")).into(),
        );
    }
    let boundary = match a.boundary {
        BoundaryArg::Open => Boundary::Open,
        BoundaryArg::Periodic => Boundary::Periodic,
    };
    let tag = format!("{}x{}x{}", dims[0], dims[1], dims[2]);
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("ea-{tag}-{}.qubo", a.seed)));
    let config = format!("generate dims={tag} seed={} boundary={boundary}", a.seed);
    let digest = sha256_hex(config.as_bytes());
    kv("config.dims", &tag);
    kv("config.seed", a.seed);
    kv("config.boundary", boundary);
    kv("config.out", out.display());
    let inst = gen_ea_slab(dims, a.seed, boundary)?;
    write_instance(
        &inst,
        &out,
        &[
            format!("tool={TOOL_NAME} version={VERSION} config_digest={digest}"),
            format!("edwards-anderson {tag} seed={} boundary={boundary}", a.seed),
        ],
    )?;
    kv("n", inst.n());
    kv("bonds", inst.bonds().len());
    kv("path", out.display());
    Ok(())
}

fn solve(a: SolveArgs) -> CmdResult {
    let inst = load(&a.instance)?;
    let start = Instant::now();
    kv("config.instance", a.instance.display());
    kv("config.method", format!("{:?}", a.method).to_lowercase());
    kv("config.seed", a.seed);
    let (solution, iterations, detail, config_json) = match a.method {
        MethodArg::Sa => {
            let config = SaConfig {
                sweeps: a.sweeps,
                beta_start: a.sa_beta_start,
                beta_end: a.sa_beta_end,
                schedule: match a.sa_schedule {
                    ScheduleArg::Geometric => BetaSchedule::Geometric,
                    ScheduleArg::Linear => BetaSchedule::Linear,
                },
                seed: a.seed,
            };
            config.validate()?;
            kv("config.sweeps", config.sweeps);
            kv("config.beta_start", config.beta_start);
            kv("config.beta_end", config.beta_end);
            kv(
                "config.schedule",
                format!("{:?}", config.schedule).to_lowercase(),
            );
            let sol = simulated_annealing(&inst, &config)?;
            let cfg = serde_json::to_value(&config).expect("serializable config");
            (sol, config.sweeps, serde_json::Value::Null, cfg)
        }
        MethodArg::Gcs | MethodArg::Product => {
            let config = AnnealConfig {
                n_t: a.nt,
                learning_rate: a.lr,
                adam_beta1: a.beta1,
                adam_beta2: a.beta2,
                adam_eps: a.adam_eps,
                init_scale: a.init_scale,
                mode: if a.method == MethodArg::Product {
                    Mode::Product
                } else {
                    Mode::Gcs
                },
                seed: a.seed,
                sparse_m: a.sparse_m,
                rescale: a.rescale,
                ..Default::default()
            };
            config.validate()?;
            kv("config.nt", config.n_t);
            kv("config.lr", config.learning_rate);
            kv("config.beta1", config.adam_beta1);
            kv("config.beta2", config.adam_beta2);
            kv("config.adam_eps", config.adam_eps);
            kv("config.init_scale", config.init_scale);
            kv("config.sparse_m", config.sparse_m);
            kv("config.rescale", config.rescale);
            let res = anneal::solve(&inst, &config)?;
            kv("mode", res.config.mode.tag());
            kv("folded", res.folded);
            kv("coupling_scale", res.coupling_scale);
            kv(
                "final_loss",
                res.loss_trace.last().copied().unwrap_or(f64::NAN),
            );
            let cfg = serde_json::to_value(&res.config).expect("serializable config");
            let detail = serde_json::to_value(&res).expect("serializable result");
            (res.solution, res.updates as usize, detail, cfg)
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let method = format!("{:?}", a.method).to_lowercase();
    let digest = sha256_hex(format!("{method} {config_json}").as_bytes());
    kv("n", inst.n());
    kv("energy", format!("{:.16e}", solution.energy));
    kv("iterations", iterations);
    kv("wall_seconds", format!("{wall:.6}"));
    kv("spins", spin_string(&solution.spins));
    let out = a.out.clone().unwrap_or_else(|| {
        let mut name = a.instance.clone().into_os_string();
        name.push(format!(".{method}.json"));
        PathBuf::from(name)
    });
    let value = serde_json::json!({
        "tool": TOOL_NAME,
        "version": VERSION,
        "config_digest": digest,
        "method": method,
        "instance": a.instance.display().to_string(),
        "energy": solution.energy,
        "spins": solution.spins,
        "iterations": iterations,
        "wall_seconds": wall,
        "config": config_json,
        "anneal": detail,
    });
    write_json(&out, &value)?;
    kv("result", out.display());
    Ok(())
}

fn exact(a: ExactArgs) -> CmdResult {
    kv("config.instance", a.instance.display());
    let inst = load(&a.instance)?;
    let start = Instant::now();
    let (e0, s): (f64, SpinConfiguration) = brute_force_min(&inst)?;
    kv("n", inst.n());
    kv("e0", format!("{e0:.16e}"));
    kv("spins", spin_string(&s.spins));
    kv(
        "wall_seconds",
        format!("{:.6}", start.elapsed().as_secs_f64()),
    );
    if let Some(out) = &a.out {
        let value = serde_json::json!({
            "tool": TOOL_NAME,
            "version": VERSION,
            "config_digest": sha256_hex(format!("exact {}", a.instance.display()).as_bytes()),
            "instance": a.instance.display().to_string(),
            "e0": e0,
            "spins": s.spins,
        });
        write_json(out, &value)?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> CmdResult {
    kv("config.n", a.n);
    kv("config.trials", a.trials);
    kv("config.seed", a.seed);
    let faulty;
    let ev: &dyn Evaluator = match &a.inject_fault {
        Some(name) => {
            faulty = Faulty(name.parse::<Fault>()?);
            kv("config.inject_fault", name);
            &faulty
        }
        None => &Analytic,
    };
    let report = run_suite(ev, a.n, a.trials, a.seed)?;
    for c in &report.checks {
        println!(
            "check=\"{}\" compared={} failures={} max_error={:e} status={}",
            c.name,
            c.compared,
            c.failures,
            c.max_error,
            if c.passed() { "pass" } else { "fail" }
        );
        if let Some(f) = &c.first_failure {
            eprintln!("first failure in {}: {f}", c.name);
        }
    }
    kv("status", if report.passed() { "pass" } else { "fail" });
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            msg: "verification failed".into(),
        })
    }
}

fn bench(a: BenchArgs) -> CmdResult {
    let spec = ExperimentSpec::read(&a.spec)?;
    for line in spec.render().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            kv(&format!("config.{k}"), v);
        }
    }
    kv("config.out", a.out.display());
    kv("config_digest", spec.digest());
    let out = run_experiment(&spec, &a.out)?;
    kv("records", out.records.len());
    kv("computed", out.computed);
    for r in &out.summary.rows {
        println!(
            "summary method={} n={} iterations={} count={} eps_median={:.16e} eps_p25={:.16e} eps_p75={:.16e}",
            r.method, r.n, r.iterations, r.count, r.median, r.p25, r.p75
        );
    }
    for (m, it, f) in &out.fits {
        println!(
            "scaling method={m} iterations={it} exponent={:.6} stderr={:.6} points={}",
            f.exponent, f.stderr, f.points
        );
    }
    for f in &out.files {
        kv("file", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    kv("tool", TOOL_NAME);
    kv("version", VERSION);
    kv("config.threads", rayon::current_num_threads());
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Exact(a) => exact(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
