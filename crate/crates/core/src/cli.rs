//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::hopf::{default_bracket, scan_plan, scan_to_hopf, Direction, ScanOptions, ScanPlan};
use crate::model::{LineModel, Param};
use crate::normal::full_sensitivity_matrix;
use crate::report::format::{to_json, write_file};
use crate::report::tables::{
    compare_lines, comparison_csv, heatmap_csv, margin_report, table1_csv, table4_csv, MarginReport,
};
use crate::report::{
    equilibrium_record, estimates_csv, exit, normal_record, run_simulation, scan_record, sens_record,
    trajectory_csv, MarginRecord, ReportError, Scenario, Task,
};

pub const THREADS_ENV: &str = "HOPFMARGIN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hopfmargin", version, about = "Hopf bifurcation margins and sensitivities of a grid-forming inverter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Transmission line model.
    #[arg(long, global = true)]
    pub line: Option<LineModel>,
    /// Parameter to scan (nomenclature name, e.g. X, K_VC_F, omega_pc).
    #[arg(long, global = true)]
    pub param: Option<Param>,
    /// Scan direction; defaults to the known destabilizing direction.
    #[arg(long, global = true)]
    pub direction: Option<Direction>,
    /// Scenario file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium, outputs and spectrum.
    Equilibrium,
    /// Locate the Hopf point along one parameter.
    Scan,
    /// Single-parameter stability margin.
    Margin,
    /// Normal vector of the Hopf surface at the scanned point.
    Nvec,
    /// Margin sensitivities, optionally with first-order estimates.
    Sens {
        /// Control parameter; all parameters when omitted.
        #[arg(long)]
        control: Option<Param>,
        /// New control values for margin estimates (comma separated).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Row-normalized sensitivity heatmap.
    Heatmap,
    /// Time-domain simulation and trajectory classification.
    Simulate {
        /// Scenario file (same format as --config).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Hopf values and margins for both line models.
    Table1,
    /// Most influential control per cause for both line models.
    Table4,
    /// Margin deltas between the line models.
    CompareLines {
        /// Static-line margin report (JSON written by table1).
        #[arg(long = "static-report")]
        static_report: Option<PathBuf>,
        /// Dynamic-line margin report.
        #[arg(long = "dynamic-report")]
        dynamic_report: Option<PathBuf>,
    },
}

impl Command {
    fn task(&self) -> Task {
        match self {
            Command::Equilibrium => Task::Equilibrium,
            Command::Scan => Task::Scan,
            Command::Margin => Task::Margin,
            Command::Nvec => Task::NormalVector,
            Command::Sens { .. } => Task::Sensitivity,
            Command::Heatmap => Task::Heatmap,
            Command::Simulate { .. } => Task::Simulate,
            Command::Table1 => Task::TableI,
            Command::Table4 => Task::TableIV,
            Command::CompareLines { .. } => Task::CompareLines,
        }
    }
}

/// Everything a task needs after merging flags over the scenario file.
struct Context {
    scenario: Scenario,
    opts: ScanOptions,
    out: Option<PathBuf>,
}

impl Context {
    fn param(&self, cli: Option<Param>) -> Result<Param, ReportError> {
        cli.or(self.scenario.scan.param)
            .ok_or_else(|| ReportError::Usage("--param is required".into()))
    }

    fn direction(&self, param: Param, cli: Option<Direction>) -> Result<Direction, ReportError> {
        if let Some(d) = cli.or(self.scenario.scan.direction) {
            return Ok(d);
        }
        match scan_plan(param) {
            ScanPlan::Single(d) => Ok(d),
            _ => Err(ReportError::Usage(format!("--direction is required for {param}"))),
        }
    }

    fn emit(&self, name: &str, contents: &str) -> Result<(), ReportError> {
        if let Some(dir) = &self.out {
            write_file(dir, name, contents)?;
        }
        Ok(())
    }
}

fn scan_options(sc: &Scenario, param: Option<Param>) -> ScanOptions {
    let mut o = ScanOptions::default();
    if let Some(r) = sc.scan.rel_step {
        o.rel_step = r;
    }
    if sc.scan.lower.is_some() || sc.scan.upper.is_some() {
        let (lo, hi) = param.map(default_bracket).unwrap_or((0.0, f64::INFINITY));
        o.bracket = Some((sc.scan.lower.unwrap_or(lo), sc.scan.upper.unwrap_or(hi)));
    }
    o
}

fn read_report(path: &Path) -> Result<MarginReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ReportError::MismatchedReports(format!("{}: {e}", path.display())))
}

/// Pool size from the environment; `None` leaves rayon's default.
pub fn threads_from_env() -> Result<Option<usize>, ReportError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ReportError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<String, ReportError> {
    let config_path = match &cli.command {
        Command::Simulate { scenario: Some(p) } => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let scenario = match &config_path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(t) = scenario.task {
        if t != cli.command.task() {
            return Err(ReportError::Usage(format!(
                "scenario is for task '{}', not '{}'",
                t.name(),
                cli.command.task().name()
            )));
        }
    }
    let line = cli.line.or(scenario.line).unwrap_or(LineModel::Static);
    let opts = scan_options(&scenario, cli.param.or(scenario.scan.param));
    let ctx = Context {
        scenario,
        opts,
        out: cli.out.clone(),
    };
    let params = ctx.scenario.params;

    let primary = match &cli.command {
        Command::Equilibrium => {
            let json = to_json(&equilibrium_record(&params, line)?);
            ctx.emit(&format!("equilibrium_{line}.json"), &json)?;
            json
        }
        Command::Scan | Command::Margin | Command::Nvec => {
            let param = ctx.param(cli.param)?;
            let dir = ctx.direction(param, cli.direction)?;
            let h = scan_to_hopf(&params, line, param, dir, &ctx.opts)?;
            let (stem, json) = match cli.command {
                Command::Scan => ("scan", to_json(&scan_record(&h))),
                Command::Margin => (
                    "margin",
                    to_json(&MarginRecord {
                        param,
                        direction: dir,
                        line,
                        margin: h.margin(),
                        margin_display: h.margin() * param.unit().scale(),
                        unit: param.unit().label(),
                    }),
                ),
                _ => ("nvec", to_json(&normal_record(&h)?)),
            };
            ctx.emit(&format!("{stem}_{param}_{line}.json"), &json)?;
            json
        }
        Command::Sens { control, values } => {
            let param = ctx.param(cli.param)?;
            let dir = ctx.direction(param, cli.direction)?;
            let control = control.or(ctx.scenario.estimate.control);
            let values = if values.is_empty() { ctx.scenario.estimate.values.clone() } else { values.clone() };
            if !values.is_empty() && control.is_none() {
                return Err(ReportError::Usage("--values needs --control".into()));
            }
            let h = scan_to_hopf(&params, line, param, dir, &ctx.opts)?;
            let rec = sens_record(&h, control, &values, &params, &ctx.opts)?;
            let json = to_json(&rec);
            ctx.emit(&format!("sens_{param}_{line}.json"), &json)?;
            if let (Some(c), false) = (control, values.is_empty()) {
                ctx.emit(&format!("estimates_{param}_{c}_{line}.csv"), &estimates_csv(&rec))?;
            }
            json
        }
        Command::Heatmap => {
            let r = full_sensitivity_matrix(&params, line, &ctx.opts);
            let csv = heatmap_csv(&r);
            ctx.emit(&format!("heatmap_{line}.csv"), &csv)?;
            ctx.emit(&format!("heatmap_{line}.json"), &to_json(&r))?;
            csv
        }
        Command::Simulate { .. } => {
            let (rec, traj) = run_simulation(&ctx.scenario, line, &ctx.opts)?;
            let json = to_json(&rec);
            ctx.emit(&format!("trajectory_{line}.csv"), &trajectory_csv(&traj))?;
            ctx.emit(&format!("simulation_{line}.json"), &json)?;
            json
        }
        Command::Table1 => {
            let (s, d) = rayon::join(
                || margin_report(&params, LineModel::Static, &ctx.opts),
                || margin_report(&params, LineModel::Dynamic, &ctx.opts),
            );
            let csv = table1_csv(&s, &d)?;
            ctx.emit("table1.csv", &csv)?;
            ctx.emit("margins_static.json", &to_json(&s))?;
            ctx.emit("margins_dynamic.json", &to_json(&d))?;
            csv
        }
        Command::Table4 => {
            let (s, d) = rayon::join(
                || full_sensitivity_matrix(&params, LineModel::Static, &ctx.opts),
                || full_sensitivity_matrix(&params, LineModel::Dynamic, &ctx.opts),
            );
            let csv = table4_csv(&s, &d);
            ctx.emit("table4.csv", &csv)?;
            ctx.emit("sensitivity_static.json", &to_json(&s))?;
            ctx.emit("sensitivity_dynamic.json", &to_json(&d))?;
            csv
        }
        Command::CompareLines {
            static_report,
            dynamic_report,
        } => {
            let (s, d) = match (static_report, dynamic_report) {
                (Some(a), Some(b)) => (read_report(a)?, read_report(b)?),
                (None, None) => rayon::join(
                    || margin_report(&params, LineModel::Static, &ctx.opts),
                    || margin_report(&params, LineModel::Dynamic, &ctx.opts),
                ),
                _ => {
                    return Err(ReportError::Usage(
                        "--static-report and --dynamic-report go together".into(),
                    ))
                }
            };
            let c = compare_lines(&s, &d)?;
            let json = to_json(&c);
            ctx.emit("compare_lines.csv", &comparison_csv(&c))?;
            ctx.emit("compare_lines.json", &json)?;
            json
        }
    };
    Ok(primary)
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    let pool = match threads_from_env() {
        Ok(n) => {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(n) = n {
                b = b.num_threads(n);
            }
            b.build()
        }
        Err(e) => {
            let _ = writeln!(stderr, "hopfmargin: {e}");
            return e.exit_code();
        }
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "hopfmargin: cannot start worker pool: {e}");
            return exit::NUMERICAL;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(primary) => match stdout.write_all(primary.as_bytes()) {
            Ok(()) => exit::OK,
            Err(e) => {
                let _ = writeln!(stderr, "hopfmargin: {e}");
                exit::IO
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "hopfmargin: {e}");
            e.exit_code()
        }
    }
}
