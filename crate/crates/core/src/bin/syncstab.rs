use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use syncstab::config::{load_system_spec, PowerSetpoint, SystemSpec};
use syncstab::frequency::curves_csv;
use syncstab::modal::{adjustment_compare, finite_difference_check, sensitivity_csv, AdjustVoltage, PowerParam};
use syncstab::network::{b_matrix_csv, reduce_spec};
use syncstab::oracle::{modes_csv, simulate, timeseries_csv, Disturbance};
use syncstab::pipeline::{analyze, parse_range, sweep, sweep_csv, AnalyzeOptions};
use syncstab::powerflow::VoltagePolicy;
use syncstab::report::{to_json, write_file, RunManifest};
use syncstab::{Error, Result};

/// Small-signal synchronization stability of converter networks.
#[derive(Parser)]
#[command(name = "syncstab", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// System description file (may also be given positionally).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Operating-point case id from the config.
    #[arg(long, global = true)]
    case: Option<u32>,
    /// Take every converter voltage as 1.0 p.u. instead of solving the power flow.
    #[arg(long, global = true)]
    flat_voltage: bool,
    /// Main output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the reduced susceptance matrix as CSV on stderr.
    #[arg(long, global = true)]
    dump_b: bool,
    /// Also report the literal complex-square weights.
    #[arg(long, global = true)]
    eta_complex: bool,
    /// Use the first converter's PLL gains when converters differ.
    #[arg(long, global = true)]
    force_first_pll: bool,
    /// Report the converter-side damping of each converter at the crossing.
    #[arg(long, global = true)]
    per_converter_gamma: bool,
    /// Write a JSON manifest of the run here.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Verdict, critical crossing, modal weights and oracle cross-check.
    Analyze {
        config: Option<PathBuf>,
        /// Also write the damping/spring curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Damping and spring curves over the scan band.
    Curves { config: Option<PathBuf> },
    /// One analysis per value of a converter's P or Q.
    Sweep {
        config: Option<PathBuf>,
        #[arg(long)]
        converter: String,
        #[arg(long, value_enum, default_value = "p")]
        param: Param,
        /// start:stop:step (inclusive)
        #[arg(long)]
        range: String,
    },
    /// Per-converter weights and sensitivities, optionally checked by finite differences.
    Sensitivity {
        config: Option<PathBuf>,
        /// Run a finite-difference check with this step (p.u.).
        #[arg(long)]
        fd_delta: Option<f64>,
    },
    /// Compare the indicator before and after changing converter active powers.
    Adjust {
        config: Option<PathBuf>,
        /// NAME=value[,NAME=value...]; active power only.
        #[arg(long = "set", required = true)]
        set: Vec<String>,
        /// Re-solve voltages after the adjustment instead of freezing them.
        #[arg(long)]
        resolve_voltage: bool,
    },
    /// Time-domain response of the reduced state-space model.
    Simulate {
        config: Option<PathBuf>,
        /// Write the mode table here.
        #[arg(long)]
        modes: Option<PathBuf>,
        /// Pulse amplitude (rad).
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
        /// Pulse start (s).
        #[arg(long, default_value_t = 2.0)]
        start: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    P,
    Q,
}

impl From<Param> for PowerParam {
    fn from(p: Param) -> Self {
        match p {
            Param::P => PowerParam::P,
            Param::Q => PowerParam::Q,
        }
    }
}

struct Ctx {
    global: Global,
    spec: SystemSpec,
    manifest: RunManifest,
}

impl Ctx {
    fn options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            voltage: if self.global.flat_voltage {
                VoltagePolicy::Flat
            } else {
                VoltagePolicy::FromSpec
            },
            force_first_pll: self.global.force_first_pll,
            eta_complex: self.global.eta_complex,
            per_converter_gamma: self.global.per_converter_gamma,
        }
    }

    fn emit(&mut self, path: Option<&Path>, contents: &str) -> Result<()> {
        match path {
            Some(p) => {
                write_file(p, contents)?;
                self.manifest.record(p);
            }
            None => {
                std::io::stdout().write_all(contents.as_bytes())?;
            }
        }
        Ok(())
    }
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
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Analyze { .. } => "analyze",
        Command::Curves { .. } => "curves",
        Command::Sweep { .. } => "sweep",
        Command::Sensitivity { .. } => "sensitivity",
        Command::Adjust { .. } => "adjust",
        Command::Simulate { .. } => "simulate",
    }
}

fn positional(c: &Command) -> Option<&PathBuf> {
    match c {
        Command::Analyze { config, .. }
        | Command::Curves { config }
        | Command::Sweep { config, .. }
        | Command::Sensitivity { config, .. }
        | Command::Adjust { config, .. }
        | Command::Simulate { config, .. } => config.as_ref(),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let started = Instant::now();
    let config_path = match (positional(&cli.command), &cli.global.config) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Argument("config given both positionally and with --config".into()))
        }
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => return Err(Error::Argument("no config file given".into())),
    };
    let mut spec = load_system_spec(&config_path)?;
    if let Some(id) = cli.global.case {
        spec = spec.with_case(id)?;
    }
    if cli.global.flat_voltage {
        spec.options.flat_voltage = true;
    }
    if cli.global.dump_b {
        eprint!("{}", b_matrix_csv(&reduce_spec(&spec)?));
    }
    let mut ctx = Ctx {
        manifest: RunManifest::new(command_name(&cli.command), &config_path, cli.global.case),
        global: cli.global.clone(),
        spec,
    };
    ctx.manifest.options = json!({
        "flat_voltage": ctx.spec.options.flat_voltage,
        "scan_fmin_hz": ctx.spec.options.scan_fmin_hz,
        "scan_fmax_hz": ctx.spec.options.scan_fmax_hz,
        "scan_points": ctx.spec.options.scan_points,
        "root_tol_hz": ctx.spec.options.root_tol_hz,
        "sim_dt_s": ctx.spec.options.sim_dt_s,
        "sim_duration_s": ctx.spec.options.sim_duration_s,
        "eta_complex": ctx.global.eta_complex,
        "force_first_pll": ctx.global.force_first_pll,
        "per_converter_gamma": ctx.global.per_converter_gamma,
    });
    let out = ctx.global.out.clone();
    let code = match cli.command {
        Command::Analyze { curves, .. } => cmd_analyze(&mut ctx, out.as_deref(), curves.as_deref())?,
        Command::Curves { .. } => {
            let a = analyze(&ctx.spec, &ctx.options())?;
            ctx.emit(out.as_deref(), &curves_csv(&a.curves))?;
            0
        }
        Command::Sweep {
            converter,
            param,
            range,
            ..
        } => {
            let i = ctx
                .spec
                .converter_index(&converter)
                .ok_or(Error::UnknownConverter(converter))?;
            let values = parse_range(&range)?;
            let rows = sweep(&ctx.spec, &ctx.options(), i, param.into(), &values);
            ctx.emit(out.as_deref(), &sweep_csv(&rows))?;
            0
        }
        Command::Sensitivity { fd_delta, .. } => {
            let a = analyze(&ctx.spec, &ctx.options())?;
            let s = a
                .sensitivities
                .ok_or_else(|| Error::Argument("no spring crossing in the scan band".into()))?;
            ctx.emit(out.as_deref(), &sensitivity_csv(&s))?;
            if let Some(delta) = fd_delta {
                for i in 0..ctx.spec.n_converters() {
                    let fd = finite_difference_check(&ctx.spec, &ctx.options(), i, PowerParam::P, delta)?;
                    eprintln!(
                        "fd {}: predicted {:.6e} measured {:.6e} rel_err {:.3e}",
                        fd.converter, fd.predicted, fd.measured, fd.rel_err
                    );
                }
            }
            0
        }
        Command::Adjust {
            set,
            resolve_voltage,
            ..
        } => {
            let after = apply_assignments(&ctx.spec, &set)?;
            let voltage = if resolve_voltage {
                AdjustVoltage::Resolve
            } else {
                AdjustVoltage::Freeze
            };
            let r = adjustment_compare(&ctx.spec, &after, &ctx.options(), voltage)?;
            ctx.emit(out.as_deref(), &to_json(&r))?;
            0
        }
        Command::Simulate {
            modes, amplitude, start, ..
        } => {
            let a = analyze(&ctx.spec, &ctx.options())?;
            let ss = a.state_space(&ctx.spec)?;
            let dist = Disturbance {
                amplitude_rad: amplitude,
                start_s: start,
                ..Disturbance::default()
            };
            let ts = simulate(&ss, &dist, ctx.spec.options.sim_dt_s, ctx.spec.options.sim_duration_s)?;
            ctx.emit(out.as_deref(), &timeseries_csv(&ts))?;
            if let Some(p) = modes {
                let m = syncstab::oracle::modes(&ss)?;
                ctx.emit(Some(&p), &modes_csv(&m))?;
            }
            0
        }
    };
    if let Some(path) = ctx.global.manifest.clone() {
        ctx.manifest.wall_time_s = started.elapsed().as_secs_f64();
        write_file(&path, &to_json(&ctx.manifest))?;
    }
    Ok(code)
}

fn cmd_analyze(ctx: &mut Ctx, out: Option<&Path>, curves: Option<&Path>) -> Result<u8> {
    let a = analyze(&ctx.spec, &ctx.options())?;
    let mut doc = a.document();
    let (modes, agreement) = a.oracle(&ctx.spec)?;
    doc["oracle"] = json!({
        "dominant": modes.dominant,
        "agreement": agreement,
    });
    ctx.emit(out, &to_json(&doc))?;
    if let Some(p) = curves {
        ctx.emit(Some(p), &curves_csv(&a.curves))?;
    }
    for w in &a.warnings {
        eprintln!("warning: {w}");
    }
    Ok(a.report.verdict.exit_code() as u8)
}

/// `NAME=value` pairs setting active power; `NAME.q=...` is refused.
fn apply_assignments(spec: &SystemSpec, sets: &[String]) -> Result<SystemSpec> {
    let mut out = spec.clone();
    for item in sets.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("assignment '{item}' is not NAME=value")))?;
        let name = name.trim();
        if let Some(base) = name.strip_suffix(".q").or_else(|| name.strip_suffix(".Q")) {
            return Err(Error::Argument(format!(
                "'{base}': only active power can be adjusted; use `sweep --param q` for reactive power"
            )));
        }
        let name = name.strip_suffix(".p").or_else(|| name.strip_suffix(".P")).unwrap_or(name);
        let p: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("'{value}' is not a number")))?;
        let i = spec
            .converter_index(name)
            .ok_or_else(|| Error::UnknownConverter(name.to_string()))?;
        let q = out.operating_point[i].q_pu;
        out.operating_point[i] = PowerSetpoint { p_pu: p, q_pu: q };
    }
    Ok(out)
}
