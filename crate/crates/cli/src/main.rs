use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qgossip::config::{Config, ConfigError, Topology};
use qgossip::experiments::{self, ExperimentError, Fig2Config, GraphSource};
use qgossip::sim::{self, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Run,
    Batch,
    Fig1,
    Fig2,
    Covariance,
    Shadow,
}

/// Quantized randomized gossip simulator.
///
/// Settings come from an optional `key = value` config file, then
/// `key=value` overrides, then `--seed`. CSV goes to `--out` (with the
/// effective settings echoed to `<out>.effective.cfg`) or to stdout.
#[derive(Debug, Parser)]
#[command(name = "qgossip", version)]
struct Cli {
    command: Command,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` overrides.
    overrides: Vec<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::UnsupportedShadow { .. } | SimError::Graph(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(s) => s.into(),
            ExperimentError::Invalid(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn command_defaults(cmd: Command, cfg: &mut Config) -> Result<(), ConfigError> {
    let defaults: &[(&str, &str)] = match cmd {
        Command::Fig1 => &[("trials", "1000")],
        Command::Fig2 => &[("topology", "geometric"), ("n", "20"), ("trials", "10"), ("steps", "3000"), ("quantizer", "prob")],
        Command::Covariance => &[("n", "5"), ("steps", "500")],
        Command::Shadow => &[("max_steps", "10000")],
        _ => &[],
    };
    for (k, v) in defaults {
        cfg.set_default(k, v)?;
    }
    Ok(())
}

fn build_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::new(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    command_defaults(cli.command, &mut cfg)?;
    Ok(cfg)
}

fn check_out_dir(out: &Path) -> Result<(), Failure> {
    let dir = match out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("output directory {} does not exist", dir.display())));
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".effective.cfg");
    PathBuf::from(s)
}

fn set_threads(cfg: &Config) -> Result<(), Failure> {
    if let Some(t) = cfg.threads()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Runs the command, writing CSV to `csv_out`. Returns the summary text.
fn execute(cmd: Command, cfg: &Config, csv_out: &mut dyn Write) -> Result<String, Failure> {
    match cmd {
        Command::Run => {
            let g = cfg.graph()?;
            let mut tc = cfg.trial_config()?;
            tc.record_trace = true;
            let r = sim::run_trial(&g, &tc)?;
            experiments::write_trace_csv(&mut *csv_out, r.trace.as_deref().unwrap_or(&[]))?;
            Ok(format!(
                "rule={} quantizer={} converged={} t_con={} t_all={} steps={} alpha={} z={} max_dev={} final_mse={}",
                tc.rule,
                tc.quantizer.kind(),
                r.converged,
                opt(r.t_con),
                opt(r.t_all),
                r.steps_run,
                opt(r.alpha),
                opt(r.z),
                r.max_dev,
                r.final_mse
            ))
        }
        Command::Batch => {
            let g = cfg.graph()?;
            let tc = cfg.trial_config()?;
            let s = sim::run_batch(&g, &tc, cfg.trials()?)?;
            experiments::write_batch_csv(&mut *csv_out, &s)?;
            let stat = |name: &str, st: Option<sim::Stats>| match st {
                Some(st) => format!(" {name}_mean={} {name}_std={} {name}_min={} {name}_max={}", st.mean, st.std, st.min, st.max),
                None => String::new(),
            };
            Ok(format!(
                "trials={} converged={} rate={}{}{}{}",
                s.trials,
                s.converged,
                s.convergence_rate,
                stat("t_con", s.t_con),
                stat("z", s.z),
                stat("max_dev", Some(s.max_dev))
            ))
        }
        Command::Fig1 => {
            let rows = experiments::fig1(&cfg.sizes()?, &cfg.intervals()?, cfg.trials()?, cfg.seed()?, cfg.optional_u64("max_steps")?)?;
            experiments::write_fig1_csv(&mut *csv_out, &rows)?;
            let unconverged: usize = rows.iter().map(|r| r.trials - r.converged).sum();
            Ok(format!("fig1 rows={} unconverged_trials={unconverged}", rows.len()))
        }
        Command::Fig2 => {
            let graph = match cfg.topology()? {
                Topology::Geometric => GraphSource::Geometric { n: cfg.usize("n")?, radius: cfg.f64("radius")? },
                _ => GraphSource::Fixed(cfg.graph()?),
            };
            let f2 = Fig2Config { graph, init: cfg.init()?, trials: cfg.trials()?, steps: cfg.u64("steps")?, seed: cfg.seed()? };
            let rows = experiments::fig2(&f2)?;
            experiments::write_fig2_csv(&mut *csv_out, &rows)?;
            let last = rows.last().expect("step 0 row");
            Ok(format!(
                "fig2 steps={} final standard={} totally={} partially={} compensating={}",
                last.step, last.mse[0], last.mse[1], last.mse[2], last.mse[3]
            ))
        }
        Command::Covariance => {
            let g = cfg.graph()?;
            let rows = experiments::covariance(&g, cfg.u64("steps")?)?;
            experiments::write_covariance_csv(&mut *csv_out, &rows)?;
            let last = rows.last().expect("step 0 row");
            Ok(format!("covariance steps={} frobenius_residual={} trace={}", last.step, last.residual, last.trace))
        }
        Command::Shadow => {
            let g = cfg.graph()?;
            let tc = cfg.trial_config()?;
            let rep = sim::shadow_trial(&g, &tc)?;
            writeln!(csv_out, "map,steps,mismatches,first_mismatch")?;
            writeln!(csv_out, "{},{},{},{}", rep.map, rep.steps, rep.mismatches, rep.first_mismatch.map(|t| t.to_string()).unwrap_or_default())?;
            Ok(format!("shadow map={} steps={} mismatches={} matched={}", rep.map, rep.steps, rep.mismatches, rep.matched()))
        }
    }
}

fn real_main(cli: &Cli) -> Result<(), Failure> {
    let cfg = build_config(cli)?;
    set_threads(&cfg)?;
    match &cli.out {
        Some(out) => {
            check_out_dir(out)?;
            let mut buf = Vec::new();
            let summary = execute(cli.command, &cfg, &mut buf)?;
            let mut f = BufWriter::new(File::create(out)?);
            f.write_all(&buf)?;
            f.flush()?;
            std::fs::write(sidecar_path(out), cfg.render_effective())?;
            println!("{summary}");
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            let summary = execute(cli.command, &cfg, &mut lock)?;
            lock.flush()?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("qgossip: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("qgossip: {m}");
            ExitCode::from(1)
        }
    }
}
