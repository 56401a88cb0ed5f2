//! `qlink`: command-line front end for the link models.


#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qlink_core::analytics::{evaluate, AnalyticContext};
use qlink_core::beam::GridCache;
use qlink_core::config::{parse_quantity, CONFIG_ENV};
use qlink_core::emit::{write_output, Cell, Format, Table, REPORT_COLUMNS};
use qlink_core::sweep::{optimize, sweep, Engine, OptVar, OptimizeOptions, SweepAxis, SweepSpec};
use qlink_core::{montecarlo, Error, LinkConfig, Result};

#[derive(Debug, Parser)]
#[command(name = "qlink", version, about = "UAV-to-ground QKD link evaluation")]
struct Cli {
    /// Configuration file (defaults to $QLINK_CONFIG, then built-in defaults).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write results to PATH instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format: table, csv or json.
    #[arg(long, global = true, default_value = "table")]
    format: String,
    /// Override one configuration entry, e.g. `--set "w_z=8 cm"`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Emit the data set of one figure family (fig2 .. fig6).
    #[arg(long, value_name = "FIG")]
    plot_data: Option<String>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic evaluation at one operating point.
    Eval,
    /// Monte Carlo run.
    Mc(McArgs),
    /// Sweep one parameter, optionally overlaid with a second.
    Sweep(SweepArgs),
    /// Maximise the key rate over one variable under a QBER limit.
    Optimize(OptimizeArgs),
    /// Exact, grid and wide-beam capture probability over a displacement grid.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct McArgs {
    /// Number of slots (defaults to `mc_slots` of the configuration).
    #[arg(long)]
    slots: Option<u64>,
    /// Master seed (defaults to `seed` of the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Use the grid capture model instead of exact capture.
    #[arg(long)]
    grid: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// wz, sigma_theta_e, sigma_aoa, theta_fov or B_lambda.
    #[arg(long)]
    axis: String,
    /// Comma-separated values with units, e.g. `5cm,10cm,20cm`.
    #[arg(long, conflicts_with = "range", required_unless_present = "range")]
    values: Option<String>,
    /// `START:STOP:N`, e.g. `5cm:100cm:20`.
    #[arg(long)]
    range: Option<String>,
    /// Second parameter as `AXIS=V1,V2,...`.
    #[arg(long)]
    overlay: Option<String>,
    /// analytic, monte_carlo or both.
    #[arg(long, default_value = "analytic")]
    engine: String,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// wz or theta_fov.
    #[arg(long)]
    var: String,
    /// Largest acceptable QBER.
    #[arg(long)]
    qber_max: f64,
    /// Search interval `LO:HI` with units.
    #[arg(long)]
    bounds: Option<String>,
    /// Points of the global search grid.
    #[arg(long, default_value_t = 64)]
    grid_points: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Beam radii, e.g. `5cm,10cm`.
    #[arg(long, default_value = "5cm,10cm")]
    wz: String,
    /// Largest displacement (metres, or with a unit).
    #[arg(long, default_value = "0.2")]
    rd_max: String,
    /// Displacement grid points.
    #[arg(long, default_value_t = 50)]
    points: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(if e.is_validation() || matches!(e, Error::Io { .. }) { 2 } else { 3 })
        }
    }
}

enum Failure {
    Usage(String),
    Model(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

fn load_config(cli: &Cli) -> Result<LinkConfig> {
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match &path {
        Some(p) => LinkConfig::load(p)?,
        None => LinkConfig::default(),
    };
    for item in &cli.set {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse {
            line: 0,
            key: item.clone(),
            message: "--set expects KEY=VALUE".into(),
        })?;
        cfg.apply(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log_config(cfg: &LinkConfig) {
    eprintln!("# resolved configuration");
    for line in cfg.dump().lines() {
        eprintln!("#   {line}");
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let format: Format = cli.format.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let cfg = load_config(&cli)?;
    log_config(&cfg);
    let out = cli.out.as_deref();
    let table = match (&cli.plot_data, &cli.command) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--plot-data takes no subcommand".into())),
        (None, None) => return Err(Failure::Usage("a subcommand or --plot-data is required (see --help)".into())),
        (Some(fig), None) => plot::figure(&cfg, fig).map_err(|e| match e {
            plot::PlotError::Unknown(f) => Failure::Usage(format!("unknown figure `{f}` (expected fig2 .. fig6)")),
            plot::PlotError::Model(e) => Failure::Model(e),
        })?,
        (None, Some(cmd)) => run_command(&cfg, cmd)?,
    };
    write_output(&table, format, out)?;
    Ok(())
}

fn run_command(cfg: &LinkConfig, cmd: &Command) -> std::result::Result<Table, Failure> {
    Ok(match cmd {
        Command::Eval => {
            let ctx = AnalyticContext::new(cfg, &GridCache::new())?;
            let e = evaluate(&ctx)?;
            eprintln!("# mu_b = {:e}, c_pt = {:e}, quadrature error {:e}", ctx.mu_b(), ctx.c_pt(), e.p_detect_error);
            if e.linearization_warning {
                eprintln!("warning: c_pt * mu_p(0) > 0.1; the linearised detection probability overstates the Poisson value");
            }
            Table::from_report(&e.report)
        }
        Command::Mc(a) => {
            let ctx = AnalyticContext::new(cfg, &GridCache::new())?;
            let slots = a.slots.unwrap_or(cfg.mc_slots);
            let seed = a.seed.unwrap_or(cfg.seed);
            let mode = if a.grid { qlink_core::CaptureMode::Grid } else { qlink_core::CaptureMode::Exact };
            let model = montecarlo::SlotModel::with_capture(&ctx, mode)?;
            let r = montecarlo::run_model(&model, ctx.r_q(), slots, seed)?;
            eprintln!(
                "# {} slots, seed {}, {} per batch, capture {}, clamp rate {:e}",
                r.n_slots,
                r.seed,
                r.batch_slots,
                r.capture_mode.as_str(),
                r.clamp_rate()
            );
            Table::from_report(&r.report)
        }
        Command::Sweep(a) => {
            let axis: SweepAxis = a.axis.parse()?;
            let values = match (&a.values, &a.range) {
                (Some(v), _) => parse_list(axis.key(), v)?,
                (None, Some(r)) => parse_range(axis.key(), r)?,
                (None, None) => unreachable!("clap requires one of --values/--range"),
            };
            let mut spec = SweepSpec::new(axis, values)?.with_engine(a.engine.parse::<Engine>()?);
            if let Some(o) = &a.overlay {
                let (name, list) = o.split_once('=').ok_or_else(|| {
                    Failure::Usage("--overlay expects AXIS=V1,V2,...".into())
                })?;
                let oaxis: SweepAxis = name.trim().parse()?;
                spec = spec.with_overlay(oaxis, parse_list(oaxis.key(), list)?)?;
            }
            Table::from_sweep(&sweep(cfg, &spec)?)
        }
        Command::Optimize(a) => {
            let var: OptVar = a.var.parse()?;
            let bounds = match &a.bounds {
                Some(b) => {
                    let (lo, hi) = b
                        .split_once(':')
                        .ok_or_else(|| Failure::Usage("--bounds expects LO:HI".into()))?;
                    (parse_quantity(var.axis().key(), lo)?, parse_quantity(var.axis().key(), hi)?)
                }
                None => var.default_bounds(),
            };
            let opts = OptimizeOptions { grid_points: a.grid_points, ..Default::default() };
            let o = optimize(cfg, var, a.qber_max, bounds, opts)?;
            if !o.feasible {
                eprintln!("warning: no point satisfies qber <= {:e}; reporting the minimum-QBER point", a.qber_max);
            }
            let mut cols = vec!["variable", "value", "feasible"];
            cols.extend_from_slice(&REPORT_COLUMNS[2..]);
            let mut t = Table::new(cols);
            let mut row: Vec<Cell> = vec![var.axis().name().into(), o.value.into(), o.feasible.into()];
            let mut rep = Table::report_table();
            rep.push_report(None, None, &o.report);
            row.extend(rep.rows.remove(0).into_iter().skip(2));
            t.push(row);
            t
        }
        Command::Validate(a) => {
            let wz = parse_list("w_z", &a.wz)?;
            let rd_max = parse_quantity("w_z", &a.rd_max)
                .or_else(|e| a.rd_max.trim().parse::<f64>().map_err(|_| e))?;
            if a.points < 2 || !(rd_max > 0.0) {
                return Err(Failure::Usage("--points must be >= 2 and --rd-max > 0".into()));
            }
            plot::capture_comparison(cfg, &wz, rd_max, a.points)?
        }
    })
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',').map(|v| parse_quantity(key, v)).collect()
}

fn parse_range(key: &str, text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Parse { line: 0, key: "--range".into(), message: format!("expected START:STOP:N, got `{text}`") };
    let [start, stop, n] = parts[..] else { return Err(bad()) };
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    Ok(SweepSpec::linspace(parse_quantity(key, start)?, parse_quantity(key, stop)?, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("w_z", "5cm, 10 cm").unwrap(), vec![0.05, 0.1]);
        assert!(parse_list("w_z", "5cm,10").is_err());
        let r = parse_range("theta_fov", "5urad:200urad:40").unwrap();
        assert_eq!(r.len(), 40);
        assert_eq!((r[0], r[39]), (5e-6, 200e-6));
        assert!(parse_range("w_z", "5cm:10cm").is_err());
        assert!(parse_range("w_z", "5cm:10cm:x").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let c = Cli::try_parse_from(["qlink", "sweep", "--axis", "wz", "--values", "5cm", "--format", "csv"]).unwrap();
        assert_eq!(c.format, "csv");
        assert!(Cli::try_parse_from(["qlink", "sweep", "--axis", "wz"]).is_err());
        assert!(Cli::try_parse_from(["qlink", "sweep", "--axis", "wz", "--values", "5cm", "--range", "1:2:3"]).is_err());
    }
}
