//! Browser bindings for the dynamic-inversion control laboratory.
//!
//! Exposes three interactive operations to the demo page: a step-response
//! run, a perturbation study against the analytic design error dynamics, and
//! the actuator-bandwidth sweep. Angular values cross this boundary in
//! degrees, matching the CLI convention.
//!
//! The `*_impl` functions carry the logic and error strings so they stay
//! testable on the host; the `wasm_bindgen` exports only translate errors.

use wasm_bindgen::prelude::*;

use dyninv::controllers::ControllerKind;
use dyninv::sim::{self, SimConfig};

const DEG: f64 = std::f64::consts::PI / 180.0;
const RAD_TO_DEG: f64 = 180.0 / std::f64::consts::PI;

fn controller(name: &str) -> Result<ControllerKind, String> {
    ControllerKind::parse(name).ok_or_else(|| format!("unknown controller '{name}'"))
}

fn apply_timing(cfg: &mut SimConfig, dt_control_ms: f64) {
    if dt_control_ms <= 0.0 {
        // continuous mode: law inside the integrator
        cfg.dt_control = cfg.dt_integration;
    } else {
        cfg.dt_control = dt_control_ms * 1e-3;
        if cfg.dt_integration > cfg.dt_control {
            cfg.dt_integration = cfg.dt_control;
        }
    }
}

fn set_bandwidth(cfg: &mut SimConfig, omega: f64) {
    let omega = omega.clamp(0.5, 2000.0);
    cfg.actuator = sim::ActuatorConfig::FirstOrder { bandwidth: omega };
    // keep the innermost design bandwidth tied to the actuator, like the
    // built-in studies
    cfg.omega_y = omega;
}

fn scale(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v * RAD_TO_DEG).collect()
}

/// Closed-loop trace, degree-scaled, ready for plotting.
#[wasm_bindgen]
pub struct TraceResult {
    time: Vec<f64>,
    state: Vec<f64>,
    reference: Vec<f64>,
    error: Vec<f64>,
    actuator: Vec<f64>,
    max_error: f64,
    warnings: String,
}

#[wasm_bindgen]
impl TraceResult {
    #[wasm_bindgen(getter)]
    pub fn time(&self) -> Vec<f64> {
        self.time.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn state(&self) -> Vec<f64> {
        self.state.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn error(&self) -> Vec<f64> {
        self.error.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn actuator(&self) -> Vec<f64> {
        self.actuator.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn max_error(&self) -> f64 {
        self.max_error
    }
    #[wasm_bindgen(getter)]
    pub fn warnings(&self) -> String {
        self.warnings.clone()
    }
}

fn step_response_impl(
    controller_name: &str,
    omega: f64,
    amplitude_deg: f64,
    dt_control_ms: f64,
    t_final: f64,
) -> Result<TraceResult, String> {
    let kind = controller(controller_name)?;
    let mut cfg = SimConfig::roll_step(kind, amplitude_deg * DEG);
    set_bandwidth(&mut cfg, omega);
    cfg.t_final = t_final.clamp(0.1, 10.0);
    apply_timing(&mut cfg, dt_control_ms);
    let trace = sim::run_closed_loop(&cfg).map_err(|e| e.to_string())?;
    Ok(TraceResult {
        time: trace.time.clone(),
        state: scale(&trace.state),
        reference: scale(&trace.reference),
        error: scale(&trace.error),
        actuator: scale(&trace.actuator),
        max_error: trace.max_tracking_error() * RAD_TO_DEG,
        warnings: trace.warnings.join("; "),
    })
}

/// Run a roll-rate step response.
///
/// `dt_control_ms <= 0` selects continuous control; positive values hold the
/// command for that many milliseconds.
#[wasm_bindgen]
pub fn step_response(
    controller_name: &str,
    omega: f64,
    amplitude_deg: f64,
    dt_control_ms: f64,
    t_final: f64,
) -> Result<TraceResult, JsError> {
    step_response_impl(
        controller_name,
        omega,
        amplitude_deg,
        dt_control_ms,
        t_final,
    )
    .map_err(|e| JsError::new(&e))
}

/// Free response from an initial roll-rate offset, paired with the analytic
/// design error trajectory.
#[wasm_bindgen]
pub struct PerturbationResult {
    time: Vec<f64>,
    simulated: Vec<f64>,
    design: Vec<f64>,
    deviation_linf: f64,
}

#[wasm_bindgen]
impl PerturbationResult {
    #[wasm_bindgen(getter)]
    pub fn time(&self) -> Vec<f64> {
        self.time.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn simulated(&self) -> Vec<f64> {
        self.simulated.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn design(&self) -> Vec<f64> {
        self.design.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn deviation_linf(&self) -> f64 {
        self.deviation_linf
    }
}

fn perturbation_impl(
    controller_name: &str,
    omega: f64,
    perturbation_deg: f64,
) -> Result<PerturbationResult, String> {
    let kind = controller(controller_name)?;
    let mut cfg = SimConfig::roll_perturbation(kind, perturbation_deg * DEG).continuous();
    set_bandwidth(&mut cfg, omega);
    let design = sim::design_error_solution(&cfg).map_err(|e| e.to_string())?;
    let (trace, metric) = sim::perturbation_study(&cfg).map_err(|e| e.to_string())?;
    Ok(PerturbationResult {
        time: trace.time.clone(),
        simulated: scale(&trace.error),
        design: trace
            .time
            .iter()
            .map(|&t| design.eval(t) * RAD_TO_DEG)
            .collect(),
        deviation_linf: metric.l_inf * RAD_TO_DEG,
    })
}

#[wasm_bindgen]
pub fn perturbation(
    controller_name: &str,
    omega: f64,
    perturbation_deg: f64,
) -> Result<PerturbationResult, JsError> {
    perturbation_impl(controller_name, omega, perturbation_deg).map_err(|e| JsError::new(&e))
}

/// Bandwidth sweep of the perturbation study.
#[wasm_bindgen]
pub struct SweepResult {
    omegas: Vec<f64>,
    simulated_linf: Vec<f64>,
    simulated_l2: Vec<f64>,
    design_linf: Vec<f64>,
    design_l2: Vec<f64>,
}

#[wasm_bindgen]
impl SweepResult {
    #[wasm_bindgen(getter)]
    pub fn omegas(&self) -> Vec<f64> {
        self.omegas.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn simulated_linf(&self) -> Vec<f64> {
        self.simulated_linf.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn simulated_l2(&self) -> Vec<f64> {
        self.simulated_l2.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn design_linf(&self) -> Vec<f64> {
        self.design_linf.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn design_l2(&self) -> Vec<f64> {
        self.design_l2.clone()
    }
}

fn bandwidth_sweep_impl(
    controller_name: &str,
    omegas: &[f64],
    perturbation_deg: f64,
) -> Result<SweepResult, String> {
    let kind = controller(controller_name)?;
    let cfg = SimConfig::roll_perturbation(kind, perturbation_deg * DEG).continuous();
    let points = sim::bandwidth_sweep(&cfg, omegas).map_err(|e| e.to_string())?;
    Ok(SweepResult {
        omegas: points.iter().map(|p| p.omega).collect(),
        simulated_linf: points
            .iter()
            .map(|p| p.simulated.l_inf * RAD_TO_DEG)
            .collect(),
        simulated_l2: points.iter().map(|p| p.simulated.l2 * RAD_TO_DEG).collect(),
        design_linf: points
            .iter()
            .map(|p| p.design_gap.l_inf * RAD_TO_DEG)
            .collect(),
        design_l2: points
            .iter()
            .map(|p| p.design_gap.l2 * RAD_TO_DEG)
            .collect(),
    })
}

#[wasm_bindgen]
pub fn bandwidth_sweep(
    controller_name: &str,
    omegas: Vec<f64>,
    perturbation_deg: f64,
) -> Result<SweepResult, JsError> {
    bandwidth_sweep_impl(controller_name, &omegas, perturbation_deg).map_err(|e| JsError::new(&e))
}
