//! `airgrad` command-line runner.
//!
//! Exit codes: 0 success, 1 configuration or argument error, 2 power-ledger
//! violation (or a failed self-test), 3 IO error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use airgrad::bounds::{
    analog_lower, analog_upper, ask_upper, ask_upper_ideal, classic_rate, crossover_table,
    general_lower, kcs_lower, BoundError, Rate, RateQuery,
};
use airgrad::channel::ChannelSpec;
use airgrad::exec::{init_thread_pool, Execution};
use airgrad::harness::config::{build_code, ExperimentConfig};
use airgrad::harness::output::write_csv;
use airgrad::harness::{
    emit_csv, measure_code_quality, run_sweep, HarnessError, MeasureConfig, SchemeSpec,
};
use airgrad::optimizer::Demodulation;

#[derive(Parser)]
#[command(name = "airgrad", version, about = "Over-the-air SGD simulator")]
struct Cli {
    /// Write CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fill the bound_overlay column.
    #[arg(long, global = true)]
    overlay: bool,
    /// Run every batch on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML config and write the CSV table.
    Run { config: PathBuf },
    /// Tabulate the rate bounds over an SNR grid.
    Bounds(BoundsArgs),
    /// Estimate a code's bias and second moment by Monte Carlo.
    Measure(MeasureArgs),
    /// Quick end-to-end consistency checks.
    Selftest,
}

#[derive(Args)]
struct BoundsArgs {
    /// Channel-use budget N.
    #[arg(long, default_value_t = 16384.0)]
    budget: f64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Linear SNR values, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "snr_db")]
    snr: Vec<f64>,
    /// SNR values in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    diameter: f64,
    #[arg(long, default_value_t = 1.0)]
    grad_bound: f64,
    /// Shape bits for the digital bounds; derived from SNR and N if absent.
    #[arg(long)]
    bits: Option<f64>,
    /// Sampled coordinates k for the sampling lower bound (default 1).
    #[arg(long, default_value_t = 1)]
    coords: usize,
}

#[derive(Args)]
struct MeasureArgs {
    /// Scheme, e.g. `scaled-analog`, `sampled-analog:4`, `digital-ask:6`.
    #[arg(long, default_value = "scaled-analog")]
    scheme: String,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Linear SNR.
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Channel-use budget used to pick automatic bit counts.
    #[arg(long, default_value_t = 16384)]
    budget: u64,
    /// Keep constellation noise below half the point spacing.
    #[arg(long)]
    forced_correct: bool,
}

enum Failure {
    Config(String),
    Power(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Power(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Power(m) | Failure::Io(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } | HarnessError::Csv { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_failure(path: Option<&Path>, e: std::io::Error) -> Failure {
    match path {
        Some(p) => Failure::Io(format!("{}: {e}", p.display())),
        None => Failure::Io(format!("stdout: {e}")),
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(Some(p), e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(None, e)),
    }
}

fn execution(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if cli.overlay {
        cfg.overlay = true;
    }
    init_thread_pool(cfg.threads);
    info!(
        "running {} cells × {} repetitions from {}",
        cfg.cell_count(),
        cfg.repetitions,
        path.display()
    );
    let result = run_sweep(&cfg, execution(cli))?;
    let out = cli.out.clone().or_else(|| cfg.output.clone());
    match &out {
        Some(p) => {
            emit_csv(&result, p)?;
            info!("wrote {} rows to {}", result.cells.len(), p.display());
        }
        None => write_csv(&result, std::io::stdout().lock())
            .map_err(|e| Failure::Io(format!("stdout: {e}")))?,
    }
    let bad = result.power_violations();
    if bad.is_empty() {
        return Ok(());
    }
    for c in &bad {
        warn!(
            "power violation: {} snr={} d={} N={}: average {:?}",
            c.scheme, c.snr, c.dim, c.budget, c.avg_power
        );
    }
    Err(Failure::Power(format!(
        "{} cells exceed the power budget",
        bad.len()
    )))
}

fn fmt_rate(r: Result<Rate, BoundError>) -> String {
    r.map(|r| r.value.to_string()).unwrap_or_default()
}

fn cmd_bounds(cli: &Cli, a: &BoundsArgs) -> Result<(), Failure> {
    let mut snrs = a.snr.clone();
    snrs.extend(a.snr_db.iter().map(|db| 10f64.powf(db / 10.0)));
    if snrs.is_empty() {
        snrs = vec![0.1, 1.0, 10.0, 1e3, 1e6];
    }
    if a.dim == 0 || a.budget.is_nan() || a.budget <= 1.0 {
        return Err(Failure::Config("need dim ≥ 1 and budget > 1".into()));
    }
    let table =
        crossover_table(a.dim, a.budget, &snrs).map_err(|e| Failure::Config(e.to_string()))?;
    let mut text = String::from(
        "snr_linear,d,N,classic,general_lower,analog_upper,analog_lower,ask_upper_ideal,ask_upper,kcs_lower,analog_factor,digital_factor,winner\n",
    );
    for (snr, row) in snrs.iter().zip(&table) {
        let mut q = RateQuery::new(a.budget, a.dim, *snr);
        q.diameter = a.diameter;
        q.grad_bound = a.grad_bound;
        q.bits = a.bits;
        q.coords = Some(a.coords);
        let cols = [
            snr.to_string(),
            a.dim.to_string(),
            a.budget.to_string(),
            classic_rate(&q).map(|v| v.to_string()).unwrap_or_default(),
            fmt_rate(general_lower(&q)),
            fmt_rate(analog_upper(&q)),
            fmt_rate(analog_lower(&q)),
            fmt_rate(ask_upper_ideal(&q)),
            fmt_rate(ask_upper(&q)),
            fmt_rate(kcs_lower(&q)),
            row.analog_factor.to_string(),
            row.digital_factor.to_string(),
            format!("{:?}", row.winner).to_lowercase(),
        ];
        text.push_str(&cols.join(","));
        text.push('\n');
    }
    write_text(cli.out.as_deref(), &text)
}

fn cmd_measure(cli: &Cli, a: &MeasureArgs) -> Result<(), Failure> {
    let scheme: SchemeSpec = a.scheme.parse().map_err(Failure::Config)?;
    let seed = cli.seed.unwrap_or(1);
    if let Some(t) = cli.threads {
        init_thread_pool(t);
    }
    let base = ExperimentConfig::headline();
    let problem = base.problem.build(a.dim, seed).map_err(Failure::Config)?;
    let channel =
        ChannelSpec::from_snr(base.power, a.snr).map_err(|e| Failure::Config(e.to_string()))?;
    let code = build_code(
        scheme,
        a.dim,
        problem.grad_bound(),
        base.power,
        a.snr,
        a.budget,
        &base.digital,
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    let mut mc = MeasureConfig::new(a.trials, seed);
    mc.exec = execution(cli);
    if a.forced_correct {
        mc.demodulation = Demodulation::ForcedCorrect;
    }
    let q = measure_code_quality(code.as_ref(), &problem, &channel, &mc)?;
    let alpha = code.declared_alpha(a.snr);
    let text = format!(
        "scheme,snr_linear,d,trials,bias_norm,max_bias_z,alpha_hat_sq,declared_alpha_sq,avg_power,decode_err_rate\n{},{},{},{},{},{},{},{},{},{}\n",
        code.label(),
        a.snr,
        a.dim,
        q.trials,
        q.bias_norm,
        q.max_z(),
        q.alpha_hat_sq,
        alpha * alpha,
        q.avg_power.unwrap_or(0.0),
        q.decode_err_rate.map(|v| v.to_string()).unwrap_or_default(),
    );
    write_text(cli.out.as_deref(), &text)
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    println!("{name}: {}", if ok { "ok" } else { "FAILED" });
    if !ok {
        *failures += 1;
    }
}

fn cmd_selftest(cli: &Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        init_thread_pool(t);
    }
    let mut failures = 0;
    let mut cfg = ExperimentConfig::headline();
    cfg.repetitions = 4;
    cfg.dimensions = vec![8];
    cfg.budgets = vec![1024];
    cfg.schemes.push(SchemeSpec::NoiselessBaseline);
    let render = |exec| -> Result<Vec<u8>, Failure> {
        let res = run_sweep(&cfg, exec)?;
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).map_err(|e| Failure::Io(e.to_string()))?;
        Ok(buf)
    };
    let a = render(Execution::Parallel)?;
    check(
        "sweep is reproducible",
        a == render(Execution::Parallel)?,
        &mut failures,
    );
    check(
        "sequential matches parallel",
        a == render(Execution::Sequential)?,
        &mut failures,
    );
    let res = run_sweep(&cfg, Execution::Parallel)?;
    check(
        "power budget respected",
        res.power_violations().is_empty(),
        &mut failures,
    );

    let problem = cfg.problem.build(8, 1).map_err(Failure::Config)?;
    let channel = ChannelSpec::from_snr(1.0, 1.0).map_err(|e| Failure::Config(e.to_string()))?;
    for scheme in ["scaled-analog", "digital-ask:6"] {
        let spec: SchemeSpec = scheme.parse().map_err(Failure::Config)?;
        let code = build_code(spec, 8, 1.0, 1.0, 1.0, 1024, &cfg.digital)
            .map_err(|e| Failure::Config(e.to_string()))?;
        let mut mc = MeasureConfig::new(20_000, 3);
        mc.demodulation = Demodulation::ForcedCorrect;
        let q = measure_code_quality(code.as_ref(), &problem, &channel, &mc)?;
        let alpha = code.declared_alpha(1.0);
        check(
            &format!("{scheme} unbiased"),
            q.max_z() < 5.0,
            &mut failures,
        );
        check(
            &format!("{scheme} second moment within declared bound"),
            q.alpha_hat_sq <= alpha * alpha * 1.05,
            &mut failures,
        );
    }
    if failures == 0 {
        Ok(())
    } else {
        Err(Failure::Power(format!(
            "{failures} self-test checks failed"
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Bounds(a) => cmd_bounds(&cli, a),
        Command::Measure(a) => cmd_measure(&cli, a),
        Command::Selftest => cmd_selftest(&cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
