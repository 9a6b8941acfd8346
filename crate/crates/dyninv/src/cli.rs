//! Command-line front end: scenario files in, traces, metric reports, and a
//! plot script out.
//!
//! Scenario files are flat `key = value` lines grouped into `[section]`
//! blocks; `#` starts a comment. Unknown sections or keys are rejected with
//! the offending name, and every parameter is validated before a run starts.
//! Angular quantities in files and reports are degrees; the conversion to
//! the radian-based core happens here and nowhere else.
//!
//! Subcommands: `run`, `compare`, `gains`, `list-scenarios`.
//! Exit codes: 0 success, 2 invalid configuration, 3 diverged run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controllers::ControllerKind;
use crate::error_spec::{expand_cascade, polynomial_roots, ErrorSpecError};
use crate::model::RollPlant;
use crate::sim::{
    self, ActuatorConfig, CommandSignal, InitialConditions, Integrator, ReferenceConfig, SimConfig,
    SimError, SimTrace,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

const DEG: f64 = std::f64::consts::PI / 180.0;
const RAD_TO_DEG: f64 = 180.0 / std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: expected 'key = value' or '[section]', got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for '{key}': '{value}' ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key '{key}' in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("study '{0}' is not one of step, perturbation, sweep, limit, compare")]
    UnknownStudy(String),
    #[error("controller '{0}' is not a known kind")]
    UnknownController(String),
    #[error("compare study needs at least two controllers, got {0}")]
    NotEnoughControllers(usize),
    #[error("cannot write output: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spec(#[from] ErrorSpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Step,
    Perturbation,
    Sweep,
    Limit,
    Compare,
}

impl StudyKind {
    fn parse(s: &str) -> Result<Self, ScenarioError> {
        match s {
            "step" => Ok(Self::Step),
            "perturbation" => Ok(Self::Perturbation),
            "sweep" => Ok(Self::Sweep),
            "limit" => Ok(Self::Limit),
            "compare" => Ok(Self::Compare),
            other => Err(ScenarioError::UnknownStudy(other.into())),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Step => "step",
            Self::Perturbation => "perturbation",
            Self::Sweep => "sweep",
            Self::Limit => "limit",
            Self::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReferenceKind {
    Auto,
    Roll,
    FirstOrder,
    Filter,
    Physical,
}

/// A fully parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub study: StudyKind,
    pub controllers: Vec<ControllerKind>,
    pub output: Option<String>,
    pub sweep_omegas: Vec<f64>,
    pub dt_control: f64,
    pub dt_integration: f64,
    plant: RollPlant,
    actuator: ActuatorConfig,
    gains: Vec<f64>,
    omega_y: f64,
    reference_kind: ReferenceKind,
    desired_damping: f64,
    accel_bandwidth: f64,
    filter_damping: f64,
    filter_frequency: f64,
    command_deg: f64,
    command_time: f64,
    initial_state_deg: f64,
    initial_actuator_deg: f64,
    initial_actuator_rate_deg: f64,
    t_final: f64,
    integrator: Integrator,
    hat_effectiveness: Option<f64>,
    hat_bandwidth: Option<f64>,
    hat_error_gain: Option<f64>,
}

impl Scenario {
    /// Parse the flat key = value format and validate every run it implies.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario {
            name: String::new(),
            study: StudyKind::Step,
            controllers: Vec::new(),
            output: None,
            sweep_omegas: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0],
            dt_control: 1e-3,
            dt_integration: 1e-4,
            plant: RollPlant::default(),
            actuator: ActuatorConfig::FirstOrder { bandwidth: 20.0 },
            gains: vec![13.2],
            omega_y: 20.0,
            reference_kind: ReferenceKind::Auto,
            desired_damping: -13.2,
            accel_bandwidth: 20.0,
            filter_damping: 0.7,
            filter_frequency: 20.0,
            command_deg: 0.0,
            command_time: 0.0,
            initial_state_deg: 0.0,
            initial_actuator_deg: 0.0,
            initial_actuator_rate_deg: 0.0,
            t_final: 2.0,
            integrator: Integrator::Rk4,
            hat_effectiveness: None,
            hat_bandwidth: None,
            hat_error_gain: None,
        };
        let mut section = String::from("scenario");
        let mut actuator_type = String::from("first_order");
        let mut actuator_omega = 20.0;
        let mut actuator_zeta = 0.7;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            if let Some(inner) = stripped.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or(ScenarioError::Malformed {
                    line,
                    text: stripped.into(),
                })?;
                section = name.trim().to_string();
                match section.as_str() {
                    "scenario" | "plant" | "actuator" | "controller" | "error_spec"
                    | "reference" | "command" | "initial" | "sim" | "sweep" | "hat" => {}
                    other => return Err(ScenarioError::UnknownSection(other.into())),
                }
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ScenarioError::Malformed {
                line,
                text: stripped.into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: &str| ScenarioError::BadValue {
                key: key.into(),
                value: value.into(),
                reason: reason.into(),
            };
            let parse_f64 = |v: &str| -> Result<f64, ScenarioError> {
                v.parse::<f64>().map_err(|e| ScenarioError::BadValue {
                    key: key.into(),
                    value: v.into(),
                    reason: e.to_string(),
                })
            };
            let parse_list = |v: &str| -> Result<Vec<f64>, ScenarioError> {
                v.split(',').map(|p| parse_f64(p.trim())).collect()
            };

            match (section.as_str(), key) {
                ("scenario", "name") => s.name = value.into(),
                ("scenario", "study") => s.study = StudyKind::parse(value)?,
                ("scenario", "controllers") => {
                    s.controllers = value
                        .split(',')
                        .map(|p| parse_controller(p.trim()))
                        .collect::<Result<_, _>>()?;
                }
                ("scenario", "output") => s.output = Some(value.into()),
                ("plant", "l_p") => s.plant.roll_damping = parse_f64(value)?,
                ("plant", "l_u") => s.plant.aileron_effectiveness = parse_f64(value)?,
                ("actuator", "type") => {
                    actuator_type = value.into();
                    if actuator_type != "first_order" && actuator_type != "second_order" {
                        return Err(bad("expected first_order or second_order"));
                    }
                }
                ("actuator", "omega") => actuator_omega = parse_f64(value)?,
                ("actuator", "zeta") => actuator_zeta = parse_f64(value)?,
                ("controller", "kind") => s.controllers = vec![parse_controller(value)?],
                ("controller", "lambda") => {
                    let lambda = parse_f64(value)?;
                    match s.controllers.last_mut() {
                        Some(ControllerKind::IndiScaled { lambda: l }) => *l = lambda,
                        _ => return Err(bad("lambda applies to kind = indi_scaled only")),
                    }
                }
                ("error_spec", "gains") => s.gains = parse_list(value)?,
                ("error_spec", "omega_y") => s.omega_y = parse_f64(value)?,
                ("reference", "type") => {
                    s.reference_kind = match value {
                        "auto" => ReferenceKind::Auto,
                        "roll" => ReferenceKind::Roll,
                        "first_order" => ReferenceKind::FirstOrder,
                        "filter" => ReferenceKind::Filter,
                        "physical" => ReferenceKind::Physical,
                        _ => return Err(bad("expected auto, roll, first_order, filter, physical")),
                    }
                }
                ("reference", "l_pd") => s.desired_damping = parse_f64(value)?,
                ("reference", "omega_d") => s.accel_bandwidth = parse_f64(value)?,
                ("reference", "zeta_y") => s.filter_damping = parse_f64(value)?,
                ("reference", "omega_y_filter") => s.filter_frequency = parse_f64(value)?,
                ("command", "step_deg") => s.command_deg = parse_f64(value)?,
                ("command", "step_time") => s.command_time = parse_f64(value)?,
                ("initial", "p_deg") => s.initial_state_deg = parse_f64(value)?,
                ("initial", "u_deg") => s.initial_actuator_deg = parse_f64(value)?,
                ("initial", "u_rate_deg") => s.initial_actuator_rate_deg = parse_f64(value)?,
                ("sim", "dt_integration") => s.dt_integration = parse_f64(value)?,
                ("sim", "dt_control") => s.dt_control = parse_f64(value)?,
                ("sim", "t_final") => s.t_final = parse_f64(value)?,
                ("sim", "integrator") => {
                    s.integrator = match value {
                        "rk4" => Integrator::Rk4,
                        "euler" => Integrator::Euler,
                        _ => return Err(bad("expected rk4 or euler")),
                    }
                }
                ("sweep", "omegas") => s.sweep_omegas = parse_list(value)?,
                ("hat", "f_u") => s.hat_effectiveness = Some(parse_f64(value)?),
                ("hat", "omega_hat") => s.hat_bandwidth = Some(parse_f64(value)?),
                ("hat", "omega_d_gain") => s.hat_error_gain = Some(parse_f64(value)?),
                (sec, k) => {
                    return Err(ScenarioError::UnknownKey {
                        section: sec.into(),
                        key: k.into(),
                    })
                }
            }
        }

        s.actuator = match actuator_type.as_str() {
            "second_order" => ActuatorConfig::SecondOrder {
                omega: actuator_omega,
                zeta: actuator_zeta,
            },
            _ => ActuatorConfig::FirstOrder {
                bandwidth: actuator_omega,
            },
        };
        if s.name.is_empty() {
            return Err(ScenarioError::MissingKey {
                section: "scenario".into(),
                key: "name".into(),
            });
        }
        if s.controllers.is_empty() {
            return Err(ScenarioError::MissingKey {
                section: "controller".into(),
                key: "kind".into(),
            });
        }
        if s.study == StudyKind::Compare && s.controllers.len() < 2 {
            return Err(ScenarioError::NotEnoughControllers(s.controllers.len()));
        }
        s.validate_runs()?;
        Ok(s)
    }

    /// Validate every run this scenario implies, before anything executes.
    fn validate_runs(&self) -> Result<(), ScenarioError> {
        for kind in &self.controllers {
            self.config_for(kind)?.validate()?;
        }
        Ok(())
    }

    /// Assemble the simulation configuration for one controller kind,
    /// resolving `auto` references to the family each law pairs with.
    pub fn config_for(&self, kind: &ControllerKind) -> Result<SimConfig, ScenarioError> {
        let reference = match (self.reference_kind, kind) {
            (ReferenceKind::Roll, _) => ReferenceConfig::Roll {
                desired_damping: self.desired_damping,
                accel_bandwidth: self.accel_bandwidth,
            },
            (ReferenceKind::FirstOrder, _) => ReferenceConfig::FirstOrder {
                desired_damping: self.desired_damping,
            },
            (ReferenceKind::Filter, _) => ReferenceConfig::Filter {
                damping: self.filter_damping,
                natural_frequency: self.filter_frequency,
            },
            (ReferenceKind::Physical, _) => ReferenceConfig::Physical {
                desired_damping: self.desired_damping,
                accel_bandwidth: self.accel_bandwidth,
            },
            (ReferenceKind::Auto, ControllerKind::IndiClassic)
            | (ReferenceKind::Auto, ControllerKind::IndiScaled { .. }) => {
                ReferenceConfig::FirstOrder {
                    desired_damping: self.desired_damping,
                }
            }
            (ReferenceKind::Auto, ControllerKind::RmFeedforward) => ReferenceConfig::Physical {
                desired_damping: self.desired_damping,
                accel_bandwidth: self.accel_bandwidth,
            },
            (ReferenceKind::Auto, _) => ReferenceConfig::Roll {
                desired_damping: self.desired_damping,
                accel_bandwidth: self.accel_bandwidth,
            },
        };
        Ok(SimConfig {
            plant: self.plant,
            actuator: self.actuator,
            controller: kind.clone(),
            error_gains: self.gains.clone(),
            omega_y: self.omega_y,
            reference,
            command: CommandSignal::step(self.command_deg * DEG, self.command_time),
            initial: InitialConditions {
                state: self.initial_state_deg * DEG,
                actuator: self.initial_actuator_deg * DEG,
                actuator_rate: self.initial_actuator_rate_deg * DEG,
                reference: Vec::new(),
            },
            dt_integration: self.dt_integration,
            dt_control: self.dt_control,
            t_final: self.t_final,
            integrator: self.integrator,
            hat: sim::HatConfig {
                effectiveness: self.hat_effectiveness,
                actuator_bandwidth: self.hat_bandwidth,
                error_gain: self.hat_error_gain,
            },
        })
    }
}

fn parse_controller(name: &str) -> Result<ControllerKind, ScenarioError> {
    ControllerKind::parse(name).ok_or_else(|| ScenarioError::UnknownController(name.into()))
}

/// Scenario texts compiled into the binary.
pub const SHIPPED_SCENARIOS: &[(&str, &str)] = &[
    (
        "roll_step_ndi_vs_indi",
        include_str!("../scenarios/roll_step_ndi_vs_indi.scn"),
    ),
    (
        "roll_step_indi_actuators",
        include_str!("../scenarios/roll_step_indi_actuators.scn"),
    ),
    (
        "roll_perturbation_andi",
        include_str!("../scenarios/roll_perturbation_andi.scn"),
    ),
    (
        "roll_perturbation_indi",
        include_str!("../scenarios/roll_perturbation_indi.scn"),
    ),
    (
        "roll_bandwidth_sweep",
        include_str!("../scenarios/roll_bandwidth_sweep.scn"),
    ),
    (
        "roll_limit_scaling",
        include_str!("../scenarios/roll_limit_scaling.scn"),
    ),
    (
        "roll_second_order_actuator",
        include_str!("../scenarios/roll_second_order_actuator.scn"),
    ),
    (
        "roll_rm_feedforward",
        include_str!("../scenarios/roll_rm_feedforward.scn"),
    ),
];

pub fn shipped_scenario(name: &str) -> Option<&'static str> {
    SHIPPED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

struct CliOptions {
    out_dir: Option<PathBuf>,
    dt_control: Option<f64>,
    quiet: bool,
    rest: Vec<String>,
}

fn parse_options(args: &[String]) -> Result<CliOptions, String> {
    let mut opts = CliOptions {
        out_dir: None,
        dt_control: None,
        quiet: false,
        rest: Vec::new(),
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" => {
                let v = it.next().ok_or("--out needs a directory argument")?;
                opts.out_dir = Some(PathBuf::from(v));
            }
            "--dt" => {
                let v = it.next().ok_or("--dt needs a value in seconds")?;
                opts.dt_control = Some(v.parse::<f64>().map_err(|e| format!("--dt: {e}"))?);
            }
            "--quiet" => opts.quiet = true,
            other => opts.rest.push(other.to_string()),
        }
    }
    Ok(opts)
}

const USAGE: &str = "usage: dyninv [--out DIR] [--dt SECONDS] [--quiet] <subcommand> ...
subcommands:
  run <scenario>              run a scenario (shipped name or file path)
  compare <scenario>          run a scenario as a multi-controller comparison
  gains <K0,K1,...> <omega_y> expand the error cascade and report its roots
  list-scenarios              list the scenarios compiled into the binary";

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli(args: &[String]) -> i32 {
    let opts = match parse_options(args) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
    };
    let Some(command) = opts.rest.first().cloned() else {
        eprintln!("{USAGE}");
        return EXIT_INVALID;
    };
    match command.as_str() {
        "run" => cmd_run(&opts, false),
        "compare" => cmd_run(&opts, true),
        "gains" => cmd_gains(&opts),
        "list-scenarios" => {
            for (name, text) in SHIPPED_SCENARIOS {
                let study = text
                    .lines()
                    .filter_map(|l| l.trim().strip_prefix("study"))
                    .map(|r| r.trim_start_matches(['=', ' ']).to_string())
                    .next()
                    .unwrap_or_default();
                println!("{name:32} {study}");
            }
            EXIT_OK
        }
        other => {
            eprintln!("error: unknown subcommand '{other}'");
            eprintln!("{USAGE}");
            EXIT_INVALID
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, (i32, String)> {
    let text = if let Some(text) = shipped_scenario(arg) {
        text.to_string()
    } else {
        fs::read_to_string(arg)
            .map_err(|e| (EXIT_INVALID, format!("cannot read scenario '{arg}': {e}")))?
    };
    Scenario::parse(&text).map_err(|e| (EXIT_INVALID, e.to_string()))
}

fn cmd_run(opts: &CliOptions, force_compare: bool) -> i32 {
    let Some(path) = opts.rest.get(1) else {
        eprintln!("error: run/compare need a scenario name or path");
        return EXIT_INVALID;
    };
    let mut scenario = match load_scenario(path) {
        Ok(s) => s,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    if force_compare {
        scenario.study = StudyKind::Compare;
        if scenario.controllers.len() < 2 {
            eprintln!(
                "error: {}",
                ScenarioError::NotEnoughControllers(scenario.controllers.len())
            );
            return EXIT_INVALID;
        }
    }
    if let Some(dt) = opts.dt_control {
        scenario.dt_control = dt;
        if scenario.dt_integration > dt {
            scenario.dt_integration = dt;
        }
        if let Err(e) = scenario.validate_runs() {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    }
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| scenario.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    if let Err(e) = fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory: {e}");
        return EXIT_IO;
    }
    match execute(&scenario, &out_dir) {
        Ok(summary) => {
            if !opts.quiet {
                print!("{summary}");
                println!("outputs written to {}", out_dir.display());
            }
            EXIT_OK
        }
        Err(ScenarioError::Sim(SimError::Diverged { last_valid_time })) => {
            eprintln!("error: run diverged; last finite sample at t = {last_valid_time} s");
            EXIT_DIVERGED
        }
        Err(e @ ScenarioError::Io(_)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

/// First time after which the tracking error stays below the threshold.
fn settle_time(trace: &SimTrace, threshold: f64) -> Option<f64> {
    let mut settled_at = None;
    for (i, e) in trace.error.iter().enumerate() {
        if e.abs() > threshold {
            settled_at = None;
        } else if settled_at.is_none() {
            settled_at = Some(trace.time[i]);
        }
    }
    settled_at
}

fn execute(scenario: &Scenario, out_dir: &Path) -> Result<String, ScenarioError> {
    let mut summary = String::new();
    let _ = writeln!(summary, "scenario: {}", scenario.name);
    let _ = writeln!(summary, "study: {}", scenario.study.name());
    let mut csv_files: Vec<(String, String)> = Vec::new();

    match scenario.study {
        StudyKind::Step | StudyKind::Compare => {
            let _ = writeln!(
                summary,
                "{:26} {:>16} {:>16} {:>12} {:>12}",
                "controller", "max|e| [deg/s]", "dev Linf [deg/s]", "dev L2", "settle [s]"
            );
            for kind in &scenario.controllers {
                let cfg = scenario.config_for(kind)?;
                let design = sim::design_error_solution(&cfg)?;
                let trace = sim::run_closed_loop(&cfg)?;
                let deviation = sim::deviation_from_design(&trace, &design).scaled(RAD_TO_DEG);
                let settle = settle_time(&trace, 0.01 * cfg.command.amplitude.abs().max(1e-9));
                let _ = writeln!(
                    summary,
                    "{:26} {:>16.6e} {:>16.6e} {:>12.4e} {:>12}",
                    kind.name(),
                    trace.max_tracking_error() * RAD_TO_DEG,
                    deviation.l_inf,
                    deviation.l2,
                    settle
                        .map(|t| format!("{t:.3}"))
                        .unwrap_or_else(|| "-".into()),
                );
                for w in &trace.warnings {
                    let _ = writeln!(summary, "  warning ({}): {w}", kind.name());
                }
                csv_files.push((format!("{}.csv", kind.name()), trace.to_csv(RAD_TO_DEG)));
            }
        }
        StudyKind::Perturbation => {
            for kind in &scenario.controllers {
                let cfg = scenario.config_for(kind)?;
                let (trace, metric) = sim::perturbation_study(&cfg)?;
                let metric_deg = metric.scaled(RAD_TO_DEG);
                let _ = writeln!(
                    summary,
                    "{}: deviation Linf {:.6e} deg/s, L2 {:.6e}",
                    kind.name(),
                    metric_deg.l_inf,
                    metric_deg.l2
                );
                let design = sim::design_error_solution(&cfg)?;
                let mut csv = String::from("t,e_sim,e_design,deviation\n");
                for (i, &t) in trace.time.iter().enumerate() {
                    let e_sim = trace.error[i] * RAD_TO_DEG;
                    let e_design = design.eval(t) * RAD_TO_DEG;
                    let _ = writeln!(csv, "{t},{e_sim},{e_design},{}", e_sim - e_design);
                }
                csv_files.push((format!("{}.csv", kind.name()), trace.to_csv(RAD_TO_DEG)));
                csv_files.push((format!("{}_error.csv", kind.name()), csv));
            }
        }
        StudyKind::Sweep => {
            let kind = &scenario.controllers[0];
            let cfg = scenario.config_for(kind)?;
            let points = sim::bandwidth_sweep(&cfg, &scenario.sweep_omegas)?;
            let _ = writeln!(
                summary,
                "{:>10} {:>16} {:>12} {:>16} {:>12}",
                "omega", "sim Linf [deg/s]", "sim L2", "design Linf", "design L2"
            );
            let mut csv =
                String::from("omega,sim_linf_deg,sim_l2_deg,design_linf_deg,design_l2_deg\n");
            for p in &points {
                let sim_deg = p.simulated.scaled(RAD_TO_DEG);
                let gap_deg = p.design_gap.scaled(RAD_TO_DEG);
                let _ = writeln!(
                    summary,
                    "{:>10.1} {:>16.6e} {:>12.4e} {:>16.6e} {:>12.4e}",
                    p.omega, sim_deg.l_inf, sim_deg.l2, gap_deg.l_inf, gap_deg.l2
                );
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    p.omega, sim_deg.l_inf, sim_deg.l2, gap_deg.l_inf, gap_deg.l2
                );
            }
            csv_files.push(("sweep.csv".into(), csv));
        }
        StudyKind::Limit => {
            // Frozen off-equilibrium snapshot with non-vanishing state
            // derivative and feed-forward, so something is actually
            // neglected by the increment.
            let snapshot = sim::Snapshot {
                state: 2.0 * DEG,
                actuator: 0.3 * DEG,
                reference: -DEG,
                reference_rate: 7.0 * DEG,
                reference_accel: 150.0 * DEG,
            };
            let study = sim::limit_study(
                &scenario.plant,
                &scenario.gains,
                &snapshot,
                &scenario.sweep_omegas,
            )?;
            let mut csv = String::from("omega,command_gap\n");
            for &(w, g) in &study.points {
                let _ = writeln!(csv, "{w},{g}");
                let _ = writeln!(summary, "omega {w:>8.1}: command gap {g:.6e}");
            }
            match study.slope {
                Some(slope) => {
                    let _ = writeln!(summary, "log-log slope: {slope:.4} (expected -1)");
                }
                None => {
                    let _ = writeln!(summary, "log-log slope: undefined (gap vanishes)");
                }
            }
            csv_files.push(("limit.csv".into(), csv));
        }
    }

    for (name, contents) in &csv_files {
        fs::write(out_dir.join(name), contents).map_err(io_err)?;
    }
    fs::write(out_dir.join("summary.txt"), &summary).map_err(io_err)?;
    fs::write(out_dir.join("plot.gp"), plot_script(scenario, &csv_files)).map_err(io_err)?;
    Ok(summary)
}

fn io_err(e: std::io::Error) -> ScenarioError {
    ScenarioError::Io(e.to_string())
}

/// Gnuplot script reproducing the side-by-side trace/error layout from the
/// CSVs a study wrote.
fn plot_script(scenario: &Scenario, csvs: &[(String, String)]) -> String {
    let mut gp = String::new();
    let _ = writeln!(gp, "# generated for scenario {}", scenario.name);
    let _ = writeln!(gp, "set datafile separator ','");
    let _ = writeln!(gp, "set key autotitle columnhead");
    let _ = writeln!(gp, "set grid");
    let _ = writeln!(gp, "set terminal pngcairo size 1280,520");
    let _ = writeln!(gp, "set output '{}.png'", scenario.name);
    match scenario.study {
        StudyKind::Step | StudyKind::Compare => {
            let _ = writeln!(gp, "set multiplot layout 1,2");
            let _ = writeln!(gp, "set xlabel 't [s]'; set ylabel 'p [deg/s]'");
            let traces: Vec<&String> = csvs
                .iter()
                .map(|(n, _)| n)
                .filter(|n| !n.ends_with("_error.csv"))
                .collect();
            let mut plots: Vec<String> = Vec::new();
            if let Some(first) = traces.first() {
                plots.push(format!("'{first}' using 1:3 with lines title 'reference'"));
            }
            for name in &traces {
                let label = name.trim_end_matches(".csv");
                plots.push(format!("'{name}' using 1:2 with lines title 'p {label}'"));
            }
            let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
            let _ = writeln!(gp, "set ylabel 'e_p [deg/s]'");
            let plots: Vec<String> = traces
                .iter()
                .map(|name| {
                    let label = name.trim_end_matches(".csv");
                    format!("'{name}' using 1:6 with lines title 'e {label}'")
                })
                .collect();
            let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
            let _ = writeln!(gp, "unset multiplot");
        }
        StudyKind::Perturbation => {
            let _ = writeln!(gp, "set multiplot layout 1,2");
            let _ = writeln!(gp, "set xlabel 't [s]'; set ylabel 'e_p [deg/s]'");
            if let Some((name, _)) = csvs.iter().find(|(n, _)| n.ends_with("_error.csv")) {
                let _ = writeln!(
                    gp,
                    "plot '{name}' using 1:2 with lines title 'simulated', \\\n     '{name}' \
                     using 1:3 with lines title 'design'"
                );
                let _ = writeln!(gp, "set ylabel 'deviation [deg/s]'");
                let _ = writeln!(
                    gp,
                    "plot '{name}' using 1:4 with lines title 'simulated - design'"
                );
            }
            let _ = writeln!(gp, "unset multiplot");
        }
        StudyKind::Sweep => {
            let _ = writeln!(gp, "set logscale xy");
            let _ = writeln!(gp, "set xlabel 'actuator bandwidth [rad/s]'");
            let _ = writeln!(gp, "set ylabel 'deviation [deg/s]'");
            let _ = writeln!(
                gp,
                "plot 'sweep.csv' using 1:2 with linespoints title 'simulated vs design', \\\n  \
                 'sweep.csv' using 1:4 with linespoints title 'cascade vs first-order design'"
            );
        }
        StudyKind::Limit => {
            let _ = writeln!(gp, "set logscale xy");
            let _ = writeln!(gp, "set xlabel 'actuator bandwidth [rad/s]'");
            let _ = writeln!(gp, "set ylabel 'command gap'");
            let _ = writeln!(
                gp,
                "plot 'limit.csv' using 1:2 with linespoints title 'exact vs incremental'"
            );
        }
    }
    gp
}

fn cmd_gains(opts: &CliOptions) -> i32 {
    let (Some(gains_arg), Some(omega_arg)) = (opts.rest.get(1), opts.rest.get(2)) else {
        eprintln!("error: gains needs <K0,K1,...> and <omega_y>");
        return EXIT_INVALID;
    };
    let gains: Result<Vec<f64>, _> = gains_arg
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect();
    let Ok(gains) = gains else {
        eprintln!("error: cannot parse gain list '{gains_arg}'");
        return EXIT_INVALID;
    };
    let Ok(omega_y) = omega_arg.parse::<f64>() else {
        eprintln!("error: cannot parse omega_y '{omega_arg}'");
        return EXIT_INVALID;
    };
    match gains_report(&gains, omega_y) {
        Ok(report) => {
            print!("{report}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

/// Expanded cascade coefficients, roots, and a stability verdict.
pub fn gains_report(gains: &[f64], omega_y: f64) -> Result<String, ScenarioError> {
    let k = expand_cascade(gains, omega_y)?;
    let roots = polynomial_roots(&k)?;
    let mut out = String::new();
    let order = k.len();
    let terms: Vec<String> = (0..order)
        .rev()
        .map(|i| format!("{}*e({i})", k[i]))
        .collect();
    let _ = writeln!(
        out,
        "characteristic: e({order}) + {} = 0",
        terms.join(" + ")
    );
    for (i, ki) in k.iter().enumerate() {
        let _ = writeln!(out, "k_{i} = {ki}");
    }
    let root_strings: Vec<String> = roots
        .iter()
        .map(|r| {
            if r.im.abs() < 1e-9 {
                format!("{:.6}", r.re)
            } else {
                format!("{:.6}{:+.6}i", r.re, r.im)
            }
        })
        .collect();
    let _ = writeln!(out, "roots: {}", root_strings.join(", "));
    let tol = 1e-9;
    let verdict = if roots.iter().all(|r| r.re < -tol) {
        "hurwitz"
    } else if roots.iter().any(|r| r.re > tol) {
        "unstable"
    } else {
        "marginal"
    };
    let _ = writeln!(out, "verdict: {verdict}");
    Ok(out)
}
