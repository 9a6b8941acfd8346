//! Deterministic fixed-step closed-loop simulation and the comparison
//! studies built on it.
//!
//! One run integrates plant, actuator chain, and reference model jointly at
//! `dt_integration` while the controller updates at `dt_control`. Two control
//! modes fall out of the time steps: when `dt_control > dt_integration` the
//! command is computed at the tick and held (zero-order hold); when the two
//! are equal the controller is evaluated inside every integrator stage,
//! which realizes the continuous-time law up to integrator accuracy and is
//! the mode the tight-tolerance checks run in. Incremental laws latch their
//! previous-sample values at ticks in held mode and use current values in
//! continuous mode, consistent with the sample interval going to zero.
//!
//! Everything is a pure function of the configuration: identical configs
//! produce bit-identical traces.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::controllers::{
    self, ControllerError, ControllerInput, ControllerKind, HatParameters, IndiActuatorVariant,
    PreviousSample, ReferenceCommandSignals,
};
use crate::error_spec::{AnalyticErrorSolution, ErrorDynamicsSpec, ErrorSpecError};
use crate::model::{
    FirstOrderActuatorBank, GeneralizedActuator, ModelError, PlantModel, RollPlant,
};
use crate::refmodel::{FilterRefModel, FirstOrderRefModel, PhysicalRefModel, RollRefModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged; last finite sample at t = {last_valid_time} s")]
    Diverged { last_valid_time: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Spec(#[from] ErrorSpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reference model error: {0}")]
    RefModel(String),
}

impl From<crate::refmodel::RefModelError> for SimError {
    fn from(e: crate::refmodel::RefModelError) -> Self {
        SimError::RefModel(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

/// Pilot command: a step of `amplitude` at `time`, zero before. A zero
/// amplitude is the zero command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSignal {
    pub amplitude: f64,
    pub time: f64,
}

impl CommandSignal {
    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            time: 0.0,
        }
    }

    pub fn step(amplitude: f64, time: f64) -> Self {
        Self { amplitude, time }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t >= self.time {
            self.amplitude
        } else {
            0.0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActuatorConfig {
    FirstOrder { bandwidth: f64 },
    SecondOrder { omega: f64, zeta: f64 },
}

impl ActuatorConfig {
    pub fn order(&self) -> usize {
        match self {
            ActuatorConfig::FirstOrder { .. } => 1,
            ActuatorConfig::SecondOrder { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceConfig {
    /// Two-state roll reference: desired damping cascaded with an
    /// actuator-like acceleration pole. Supplies derivatives up to order 3.
    Roll {
        desired_damping: f64,
        accel_bandwidth: f64,
    },
    /// One-state reference paired with the classical incremental law.
    FirstOrder { desired_damping: f64 },
    /// Second-order command filter.
    Filter {
        damping: f64,
        natural_frequency: f64,
    },
    /// Plant replica with an internal exact-inversion controller; required
    /// by the feed-forward law.
    Physical {
        desired_damping: f64,
        accel_bandwidth: f64,
    },
}

impl ReferenceConfig {
    fn state_dim(&self) -> usize {
        match self {
            ReferenceConfig::Roll { .. } => 2,
            ReferenceConfig::FirstOrder { .. } => 1,
            ReferenceConfig::Filter { .. } => 2,
            // x_ref, u_ref, inner reference (p_ref, delta)
            ReferenceConfig::Physical { .. } => 4,
        }
    }

    /// Highest reference derivative order available.
    fn max_derivative_order(&self) -> usize {
        match self {
            ReferenceConfig::Roll { .. } => 3,
            ReferenceConfig::FirstOrder { .. } => 1,
            ReferenceConfig::Filter { .. } => 2,
            ReferenceConfig::Physical { .. } => 2,
        }
    }
}

/// Hat (design-model) parameters for the feed-forward law. `None` fields
/// default to the true plant/actuator values, i.e. exact hats.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HatConfig {
    pub effectiveness: Option<f64>,
    pub actuator_bandwidth: Option<f64>,
    pub error_gain: Option<f64>,
}

/// Initial state of one run. The reference entries map onto the chosen
/// reference family in its natural order; an empty vector means at rest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialConditions {
    pub state: f64,
    pub actuator: f64,
    /// Actuator rate, used by second-order actuators.
    pub actuator_rate: f64,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub plant: RollPlant,
    pub actuator: ActuatorConfig,
    pub controller: ControllerKind,
    /// System-factor gains `K_0 … K_{r_eff−1}` of the error cascade.
    pub error_gains: Vec<f64>,
    /// Innermost error bandwidth `Ω_y`.
    pub omega_y: f64,
    pub reference: ReferenceConfig,
    pub command: CommandSignal,
    pub initial: InitialConditions,
    pub dt_integration: f64,
    pub dt_control: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub hat: HatConfig,
}

impl SimConfig {
    /// Step-command roll scenario with the default parameters used across
    /// the built-in studies: `L_u = 0.25`, `L_p = −6.6 = L_{p,d}/2`,
    /// `ω = ω_d = 20 rad/s`.
    pub fn roll_step(controller: ControllerKind, amplitude: f64) -> Self {
        let reference = match controller {
            ControllerKind::IndiClassic | ControllerKind::IndiScaled { .. } => {
                ReferenceConfig::FirstOrder {
                    desired_damping: -13.2,
                }
            }
            ControllerKind::RmFeedforward => ReferenceConfig::Physical {
                desired_damping: -13.2,
                accel_bandwidth: 20.0,
            },
            _ => ReferenceConfig::Roll {
                desired_damping: -13.2,
                accel_bandwidth: 20.0,
            },
        };
        Self {
            plant: RollPlant::default(),
            actuator: ActuatorConfig::FirstOrder { bandwidth: 20.0 },
            controller,
            error_gains: vec![13.2],
            omega_y: 20.0,
            reference,
            command: CommandSignal::step(amplitude, 0.0),
            initial: InitialConditions::default(),
            dt_integration: 1e-4,
            dt_control: 1e-3,
            t_final: 2.0,
            integrator: Integrator::Rk4,
            hat: HatConfig::default(),
        }
    }

    /// Free-response scenario: zero command, plant perturbed to
    /// `perturbation`, reference at rest.
    pub fn roll_perturbation(controller: ControllerKind, perturbation: f64) -> Self {
        let mut cfg = Self::roll_step(controller, 0.0);
        cfg.command = CommandSignal::zero();
        cfg.initial.state = perturbation;
        cfg
    }

    /// Continuous-control mode: the controller becomes part of the
    /// right-hand side, for tight-tolerance checks.
    pub fn continuous(mut self) -> Self {
        self.dt_control = self.dt_integration;
        self
    }

    pub fn is_continuous(&self) -> bool {
        self.substeps() == 1
    }

    fn substeps(&self) -> usize {
        (self.dt_control / self.dt_integration).round() as usize
    }

    fn ticks(&self) -> usize {
        (self.t_final / self.dt_control).round() as usize
    }

    /// Effective relative degree of the error cascade: plant relative degree
    /// plus actuator order minus one. Roll has relative degree 1.
    fn effective_degree(&self) -> usize {
        self.actuator.order()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.dt_integration > 0.0) {
            return fail(format!(
                "dt_integration must be positive, got {}",
                self.dt_integration
            ));
        }
        if !(self.dt_control > 0.0) {
            return fail(format!(
                "dt_control must be positive, got {}",
                self.dt_control
            ));
        }
        if !(self.t_final > 0.0) {
            return fail(format!("t_final must be positive, got {}", self.t_final));
        }
        let sub = self.dt_control / self.dt_integration;
        if (sub - sub.round()).abs() > 1e-9 * sub.max(1.0) || sub < 1.0 - 1e-12 {
            return fail(format!(
                "dt_control ({}) must be an integer multiple of dt_integration ({})",
                self.dt_control, self.dt_integration
            ));
        }
        if !(self.omega_y > 0.0) {
            return fail(format!("omega_y must be positive, got {}", self.omega_y));
        }
        let r_eff = self.effective_degree();
        if self.error_gains.len() != r_eff {
            return fail(format!(
                "error_gains has {} entries, the order-{} error cascade needs {}",
                self.error_gains.len(),
                r_eff + 1,
                r_eff
            ));
        }
        if !self.initial.reference.is_empty()
            && self.initial.reference.len() != self.reference.state_dim()
        {
            return fail(format!(
                "initial reference state has {} entries, the reference model has {}",
                self.initial.reference.len(),
                self.reference.state_dim()
            ));
        }
        // Signal availability per controller kind.
        let needed = match self.controller {
            ControllerKind::IndiClassic | ControllerKind::IndiScaled { .. } => 1,
            _ => r_eff + 1,
        };
        if self.reference.max_derivative_order() < needed {
            return fail(format!(
                "controller '{}' needs reference derivatives up to order {needed}, the chosen \
                 reference model provides {}",
                self.controller.name(),
                self.reference.max_derivative_order()
            ));
        }
        if matches!(self.controller, ControllerKind::RmFeedforward)
            && !matches!(self.reference, ReferenceConfig::Physical { .. })
        {
            return fail("the feed-forward law requires the physical reference model".into());
        }
        if matches!(self.actuator, ActuatorConfig::SecondOrder { .. })
            && self.controller != ControllerKind::AndiGeneralized
        {
            return fail(format!(
                "controller '{}' inverts first-order actuators only; use the generalized law \
                 for second-order actuators",
                self.controller.name()
            ));
        }
        match self.actuator {
            ActuatorConfig::FirstOrder { bandwidth } if !(bandwidth > 0.0) => {
                return fail(format!(
                    "actuator bandwidth must be positive, got {bandwidth}"
                ));
            }
            ActuatorConfig::SecondOrder { omega, zeta } => {
                if !(omega > 0.0) {
                    return fail(format!("actuator omega must be positive, got {omega}"));
                }
                if !(zeta > 0.0) {
                    return fail(format!("actuator zeta must be positive, got {zeta}"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Uniformly sampled closed-loop record. Angular signals are in the units the
/// configuration used (the CLI converts degrees at its boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub time: Vec<f64>,
    /// Plant state `p`.
    pub state: Vec<f64>,
    /// Actuator position `u`.
    pub actuator: Vec<f64>,
    /// Command `u_c` applied from this sample on.
    pub command: Vec<f64>,
    /// Output `y`.
    pub output: Vec<f64>,
    /// Reference output `y_ref`.
    pub reference: Vec<f64>,
    /// Tracking error `e_y = y_ref − y`.
    pub error: Vec<f64>,
    /// State derivative `ẋ`.
    pub state_rate: Vec<f64>,
    /// Diagnostic pseudo control: the commanded top-order output derivative
    /// for the inverting laws, the incremental feedback for the others.
    pub pseudo_control: Vec<f64>,
    /// Per-sample inversion residual: commanded top-order output derivative
    /// minus the achieved one at the instant the command applies. NaN for
    /// laws without that contract.
    pub inversion_residual: Vec<f64>,
    /// Sample interval of the rows (the control interval).
    pub dt_sample: f64,
    pub warnings: Vec<String>,
}

impl SimTrace {
    fn with_capacity(n: usize, dt_sample: f64) -> Self {
        Self {
            time: Vec::with_capacity(n),
            state: Vec::with_capacity(n),
            actuator: Vec::with_capacity(n),
            command: Vec::with_capacity(n),
            output: Vec::with_capacity(n),
            reference: Vec::with_capacity(n),
            error: Vec::with_capacity(n),
            state_rate: Vec::with_capacity(n),
            pseudo_control: Vec::with_capacity(n),
            inversion_residual: Vec::with_capacity(n),
            dt_sample,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn max_tracking_error(&self) -> f64 {
        self.error.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn max_inversion_residual(&self) -> f64 {
        self.inversion_residual
            .iter()
            .filter(|r| r.is_finite())
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    /// CSV with the stable schema `t,p,p_ref,u,u_c,e_p,nu`; angular columns
    /// scaled by the given factor (pass `180/π` for degrees).
    pub fn to_csv(&self, angle_scale: f64) -> String {
        let mut out = String::with_capacity(self.len() * 64 + 32);
        out.push_str("t,p,p_ref,u,u_c,e_p,nu\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.time[i],
                self.state[i] * angle_scale,
                self.reference[i] * angle_scale,
                self.actuator[i] * angle_scale,
                self.command[i] * angle_scale,
                self.error[i] * angle_scale,
                self.pseudo_control[i] * angle_scale,
            );
        }
        out
    }
}

/// L∞ and L2 norms of the difference between a simulated error trajectory
/// and its design counterpart. The first control tick is discarded so hold
/// startup transients do not pollute comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationMetric {
    pub l_inf: f64,
    pub l2: f64,
}

impl DeviationMetric {
    fn from_samples(deviation: &[f64], dt: f64) -> Self {
        let l_inf = deviation.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let l2 = (deviation.iter().map(|d| d * d).sum::<f64>() * dt).sqrt();
        Self { l_inf, l2 }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            l_inf: self.l_inf * factor,
            l2: self.l2 * factor,
        }
    }
}

enum ReferenceState {
    Roll(RollRefModel),
    FirstOrder(FirstOrderRefModel),
    Filter(FilterRefModel),
    Physical(Box<PhysicalRefModel>),
}

struct Harness {
    cfg: SimConfig,
    plant: RollPlant,
    bank: FirstOrderActuatorBank,
    generalized: GeneralizedActuator,
    spec: ErrorDynamicsSpec,
    hat: HatParameters,
}

struct Evaluation {
    command: DVector<f64>,
    reference_command: Option<DVector<f64>>,
    pseudo_control: f64,
    inversion_residual: f64,
    reference_output: f64,
}

impl Harness {
    fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let plant = cfg.plant;
        let (bank, generalized) = match cfg.actuator {
            ActuatorConfig::FirstOrder { bandwidth } => {
                let bank = FirstOrderActuatorBank::scalar(bandwidth)?;
                let gen = GeneralizedActuator::first_order(&bank);
                (bank, gen)
            }
            ActuatorConfig::SecondOrder { omega, zeta } => {
                // The scalar bank carries ω for the hat defaults; the chain
                // itself integrates through the generalized form.
                let bank = FirstOrderActuatorBank::scalar(omega)?;
                let gen = GeneralizedActuator::second_order(1, omega, zeta)?;
                (bank, gen)
            }
        };
        let spec = ErrorDynamicsSpec::siso(&cfg.error_gains, cfg.omega_y)?;
        let omega = bank.bandwidths()[0];
        let hat = HatParameters {
            effectiveness: nalgebra::DMatrix::from_element(
                1,
                1,
                cfg.hat.effectiveness.unwrap_or(plant.aileron_effectiveness),
            ),
            actuator_bandwidth: DVector::from_element(
                1,
                cfg.hat.actuator_bandwidth.unwrap_or(omega),
            ),
            error_gain: DVector::from_element(1, cfg.hat.error_gain.unwrap_or(cfg.omega_y)),
        };
        Ok(Self {
            cfg: cfg.clone(),
            plant,
            bank,
            generalized,
            spec,
            hat,
        })
    }

    fn actuator_order(&self) -> usize {
        self.generalized.order()
    }

    fn state_len(&self) -> usize {
        1 + self.actuator_order() + self.cfg.reference.state_dim()
    }

    fn initial_state(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.state_len());
        z[0] = self.cfg.initial.state;
        z[1] = self.cfg.initial.actuator;
        if self.actuator_order() == 2 {
            z[2] = self.cfg.initial.actuator_rate;
        }
        let offset = 1 + self.actuator_order();
        for (i, &v) in self.cfg.initial.reference.iter().enumerate() {
            z[offset + i] = v;
        }
        z
    }

    fn reference_state(&self, z: &DVector<f64>) -> ReferenceState {
        let o = 1 + self.actuator_order();
        match self.cfg.reference {
            ReferenceConfig::Roll {
                desired_damping,
                accel_bandwidth,
            } => {
                let mut m = RollRefModel::new(desired_damping, accel_bandwidth);
                m.p_ref = z[o];
                m.delta = z[o + 1];
                ReferenceState::Roll(m)
            }
            ReferenceConfig::FirstOrder { desired_damping } => {
                let mut m = FirstOrderRefModel::new(desired_damping);
                m.p_ref = z[o];
                ReferenceState::FirstOrder(m)
            }
            ReferenceConfig::Filter {
                damping,
                natural_frequency,
            } => {
                let mut m = FilterRefModel::new(damping, natural_frequency);
                m.y_ref = z[o];
                m.y_dot_ref = z[o + 1];
                ReferenceState::Filter(m)
            }
            ReferenceConfig::Physical {
                desired_damping,
                accel_bandwidth,
            } => {
                let mut inner = RollRefModel::new(desired_damping, accel_bandwidth);
                inner.p_ref = z[o + 2];
                inner.delta = z[o + 3];
                let mut model = PhysicalRefModel::new(
                    Arc::new(self.plant),
                    FirstOrderActuatorBank::scalar(self.hat.actuator_bandwidth[0])
                        .expect("validated bandwidth"),
                    self.spec.clone(),
                    inner,
                )
                .expect("roll replica is square");
                model.x_ref = DVector::from_element(1, z[o]);
                model.u_ref = DVector::from_element(1, z[o + 1]);
                ReferenceState::Physical(Box::new(model))
            }
        }
    }

    /// Measurement stacks derived analytically from the plant equations:
    /// `(x, [ẋ, …], [u, u̇, …], [y, ẏ, …])`.
    #[allow(clippy::type_complexity)]
    fn measurements(
        &self,
        z: &DVector<f64>,
    ) -> (
        DVector<f64>,
        Vec<DVector<f64>>,
        Vec<DVector<f64>>,
        Vec<DVector<f64>>,
    ) {
        let x = DVector::from_element(1, z[0]);
        let order = self.actuator_order();
        let u_chain: Vec<DVector<f64>> = (0..order)
            .map(|i| DVector::from_element(1, z[1 + i]))
            .collect();
        let u = &u_chain[0];
        let x_dot = self.plant.state_derivative(&x, u);
        let mut x_derivs = vec![x_dot.clone()];
        let mut y = vec![self.plant.output(&x), x_dot.clone()];
        if order == 2 {
            // ẍ = F_x·ẋ + F_u·u̇ along the scalar roll chain
            let f_x = self.plant.jacobian_x(&x, u);
            let f_u = self.plant.jacobian_u(&x, u);
            let x_ddot = &f_x * &x_dot + &f_u * &u_chain[1];
            x_derivs.push(x_ddot.clone());
            y.push(x_ddot);
        }
        (x, x_derivs, u_chain, y)
    }

    /// Reference stack of length `r_eff + 2`, one order beyond the measured
    /// stack.
    fn reference_stack(
        &self,
        reference: &ReferenceState,
        p_c: f64,
        reference_command: Option<&DVector<f64>>,
    ) -> Result<Vec<DVector<f64>>, SimError> {
        let scalar = |v: f64| DVector::from_element(1, v);
        match reference {
            ReferenceState::Roll(m) => {
                let (r0, r1, r2) = m.derivatives(p_c)?;
                let mut stack = vec![scalar(r0), scalar(r1), scalar(r2)];
                if self.actuator_order() == 2 {
                    stack.push(scalar(m.third_derivative(p_c)));
                }
                Ok(stack)
            }
            ReferenceState::FirstOrder(m) => Ok(vec![scalar(m.p_ref), scalar(m.rate(p_c))]),
            ReferenceState::Filter(m) => {
                let d = m.derivatives(p_c);
                Ok(vec![scalar(d[0]), scalar(d[1]), scalar(d[2])])
            }
            ReferenceState::Physical(m) => {
                let u_c_ref = reference_command.expect("physical reference command available");
                Ok(m.output_stack(u_c_ref)?)
            }
        }
    }

    /// Evaluate the controller at one instant.
    fn evaluate(
        &self,
        t: f64,
        z: &DVector<f64>,
        latch: &PreviousSample,
    ) -> Result<Evaluation, SimError> {
        let p_c = self.cfg.command.value(t);
        let (x, x_derivatives, u_chain, y) = self.measurements(z);
        let reference = self.reference_state(z);

        let reference_command = match &reference {
            ReferenceState::Physical(m) => Some(m.reference_command(p_c)?),
            _ => None,
        };
        let y_ref = self.reference_stack(&reference, p_c, reference_command.as_ref())?;
        let reference_output = y_ref[0][0];

        let input = ControllerInput {
            x,
            x_derivatives,
            u_chain,
            y,
            y_ref,
            previous: latch.clone(),
        };

        let command = match &self.cfg.controller {
            ControllerKind::AndiFirstOrder => {
                controllers::andi_first_order(&input, &self.plant, &self.bank, &self.spec)?
            }
            ControllerKind::AndiGeneralized => controllers::andi_generalized(
                &input,
                &self.plant,
                &self.generalized,
                &self.spec,
                None,
            )?,
            ControllerKind::IndiClassic => {
                controllers::indi_classic(&input, &self.plant, &self.spec)?
            }
            ControllerKind::IndiActuatorsEqualBandwidth => controllers::indi_with_actuators(
                &input,
                &self.plant,
                &self.bank,
                &self.spec,
                IndiActuatorVariant::EqualBandwidth,
            )?,
            ControllerKind::IndiActuatorsRaab => controllers::indi_with_actuators(
                &input,
                &self.plant,
                &self.bank,
                &self.spec,
                IndiActuatorVariant::PerChannel,
            )?,
            ControllerKind::IndiScaled { lambda } => controllers::indi_scaled(
                &input,
                &self.plant,
                &DVector::from_element(1, *lambda),
                &self.spec,
            )?,
            ControllerKind::RmFeedforward => {
                let m = match &reference {
                    ReferenceState::Physical(m) => m,
                    _ => unreachable!("validated: feed-forward runs on the physical reference"),
                };
                let u_c_ref = reference_command
                    .as_ref()
                    .expect("physical reference command");
                let rm = ReferenceCommandSignals {
                    command: u_c_ref.clone(),
                    actuator: m.u_ref.clone(),
                    output_derivative: m.plant.output_highest_derivative(&m.x_ref, &m.u_ref),
                };
                controllers::rm_feedforward(&input, &self.hat, &rm)?
            }
        };

        let (pseudo_control, inversion_residual) =
            self.diagnostics(&input, &reference, &command, reference_command.as_ref())?;

        Ok(Evaluation {
            command,
            reference_command,
            pseudo_control,
            inversion_residual,
            reference_output,
        })
    }

    /// Diagnostic ν and the inversion residual. The residual compares the
    /// top-order output derivative commanded by the law against the one the
    /// plant equations produce the instant the fresh command applies.
    fn diagnostics(
        &self,
        input: &ControllerInput,
        reference: &ReferenceState,
        command: &DVector<f64>,
        reference_command: Option<&DVector<f64>>,
    ) -> Result<(f64, f64), SimError> {
        let achieved_top = |cmd: &DVector<f64>| -> f64 {
            let f_x = self.plant.jacobian_x(&input.x, input.actuator_position());
            let f_u = self.plant.jacobian_u(&input.x, input.actuator_position());
            let x_high = input.x_derivatives.last().unwrap();
            let omega_a = self.generalized.omega_a(&input.x, &input.u_chain);
            let omega_b = self.generalized.omega_b(&input.x, &input.u_chain);
            let u_top = omega_a + omega_b * (cmd - input.actuator_position());
            (f_x * x_high + f_u * u_top)[0]
        };

        match &self.cfg.controller {
            ControllerKind::AndiFirstOrder
            | ControllerKind::AndiGeneralized
            | ControllerKind::IndiActuatorsRaab
            | ControllerKind::IndiActuatorsEqualBandwidth => {
                let nu = match self.cfg.controller {
                    ControllerKind::IndiActuatorsEqualBandwidth => self
                        .spec
                        .with_omega_y(self.bank.bandwidths()[0])?
                        .pseudo_control(&input.y_ref, &input.y)?[0],
                    _ => self.spec.pseudo_control(&input.y_ref, &input.y)?[0],
                };
                Ok((nu, achieved_top(command) - nu))
            }
            ControllerKind::IndiClassic | ControllerKind::IndiScaled { .. } => {
                let fb = self.spec.incremental_feedback(&input.y_ref, &input.y)?[0];
                Ok((fb, f64::NAN))
            }
            ControllerKind::RmFeedforward => {
                let m = match reference {
                    ReferenceState::Physical(m) => m,
                    _ => unreachable!(),
                };
                let u_c_ref = reference_command.expect("physical reference command");
                // Closed-loop identity of the feed-forward law:
                //   y⁽ⁿ⁺¹⁾ = ratio·y_ref⁽ⁿ⁺¹⁾ + ratio·ω_d(y_ref⁽ⁿ⁾ − y⁽ⁿ⁾)
                //            + F_x·ẋ − ratio·F̂_x·ẋ_ref,
                // ratio = F_u·ω/(F̂_u·ω̂). The residual measures it directly.
                let f_u = self.plant.jacobian_u(&input.x, input.actuator_position())[(0, 0)];
                let f_x = self.plant.jacobian_x(&input.x, input.actuator_position())[(0, 0)];
                let omega = self.bank.bandwidths()[0];
                let ratio =
                    f_u * omega / (self.hat.effectiveness[(0, 0)] * self.hat.actuator_bandwidth[0]);
                let x_dot_ref = m.plant.state_derivative(&m.x_ref, &m.u_ref);
                let f_x_hat = m.plant.jacobian_x(&m.x_ref, &m.u_ref)[(0, 0)];
                let stack = m.output_stack(u_c_ref)?;
                let y_ref_n = stack[1][0];
                let y_ref_np1 = stack[2][0];
                let y_n = input.y[1][0];
                let omega_d = self.hat.error_gain[0];
                let predicted = ratio * y_ref_np1
                    + ratio * omega_d * (y_ref_n - y_n)
                    + f_x * input.state_rate()[0]
                    - ratio * f_x_hat * x_dot_ref[0];
                Ok((predicted, achieved_top(command) - predicted))
            }
        }
    }

    /// Joint state derivative under a fixed applied command.
    fn rates(
        &self,
        t: f64,
        z: &DVector<f64>,
        u_c: &DVector<f64>,
        u_c_ref: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>, SimError> {
        let p_c = self.cfg.command.value(t);
        let (x, _, u_chain, _) = self.measurements(z);
        let mut dz = DVector::zeros(z.len());
        dz[0] = self.plant.state_derivative(&x, &u_chain[0])[0];
        let chain_rates = self.generalized.chain_derivative(&x, &u_chain, u_c)?;
        for (i, rate) in chain_rates.iter().enumerate() {
            dz[1 + i] = rate[0];
        }
        let o = 1 + self.actuator_order();
        match self.reference_state(z) {
            ReferenceState::Roll(m) => {
                let (dp, dd) = m.rates(p_c);
                dz[o] = dp;
                dz[o + 1] = dd;
            }
            ReferenceState::FirstOrder(m) => {
                dz[o] = m.rate(p_c);
            }
            ReferenceState::Filter(m) => {
                dz[o] = m.y_dot_ref;
                dz[o + 1] = m.acceleration(p_c);
            }
            ReferenceState::Physical(m) => {
                let cmd = match u_c_ref {
                    Some(c) => c.clone(),
                    // Continuous mode re-evaluates the replica command at
                    // every stage.
                    None => m.reference_command(p_c)?,
                };
                let (x_dot, u_dot, (dp, dd)) = m.rates(&cmd, p_c)?;
                dz[o] = x_dot[0];
                dz[o + 1] = u_dot[0];
                dz[o + 2] = dp;
                dz[o + 3] = dd;
            }
        }
        Ok(dz)
    }

    fn latch_from(&self, z: &DVector<f64>) -> PreviousSample {
        let (x, _, u_chain, y) = self.measurements(z);
        PreviousSample {
            x,
            u: u_chain[0].clone(),
            y_r: y[1].clone(),
        }
    }

    fn collect_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if !self.spec.is_hurwitz() {
            warnings.push(
                "error-dynamics specification is not Hurwitz; the free response grows".into(),
            );
        }
        if let ControllerKind::IndiScaled { lambda } = self.cfg.controller {
            if lambda > 1.0 {
                warnings.push(format!(
                    "scaling gain {lambda} exceeds 1: requested innermost bandwidth exceeds \
                     the actuator bandwidth"
                ));
            }
        }
        warnings
    }
}

type RhsFn<'a> = dyn FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError> + 'a;

fn step(
    integrator: Integrator,
    f: &mut RhsFn,
    t: f64,
    z: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, SimError> {
    match integrator {
        Integrator::Euler => Ok(z + f(t, z)? * h),
        Integrator::Rk4 => {
            let k1 = f(t, z)?;
            let k2 = f(t + 0.5 * h, &(z + &k1 * (0.5 * h)))?;
            let k3 = f(t + 0.5 * h, &(z + &k2 * (0.5 * h)))?;
            let k4 = f(t + h, &(z + &k3 * h))?;
            Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        }
    }
}

/// Run one closed-loop simulation.
///
/// The controller updates every `dt_control` with the command held in
/// between; with `dt_control == dt_integration` the law is evaluated inside
/// every integrator stage instead (continuous mode). The trace is sampled at
/// the control interval.
pub fn run_closed_loop(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    let harness = Harness::new(cfg)?;
    let mut z = harness.initial_state();
    let ticks = cfg.ticks();
    let substeps = cfg.substeps();
    let continuous = cfg.is_continuous();
    let mut trace = SimTrace::with_capacity(ticks + 1, cfg.dt_control);
    trace.warnings = harness.collect_warnings();

    let mut latch = harness.latch_from(&z);

    for tick in 0..=ticks {
        let t = tick as f64 * cfg.dt_control;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged {
                last_valid_time: tick.saturating_sub(1) as f64 * cfg.dt_control,
            });
        }
        let eval = if continuous {
            harness.evaluate(t, &z, &harness.latch_from(&z))?
        } else {
            harness.evaluate(t, &z, &latch)?
        };

        trace.time.push(t);
        trace.state.push(z[0]);
        trace.actuator.push(z[1]);
        trace.command.push(eval.command[0]);
        trace.output.push(z[0]);
        trace.reference.push(eval.reference_output);
        trace.error.push(eval.reference_output - z[0]);
        trace.state_rate.push(
            harness.plant.state_derivative(
                &DVector::from_element(1, z[0]),
                &DVector::from_element(1, z[1]),
            )[0],
        );
        trace.pseudo_control.push(eval.pseudo_control);
        trace.inversion_residual.push(eval.inversion_residual);

        if tick == ticks {
            break;
        }

        if continuous {
            let mut rhs = |tt: f64, zz: &DVector<f64>| -> Result<DVector<f64>, SimError> {
                let stage = harness.evaluate(tt, zz, &harness.latch_from(zz))?;
                harness.rates(tt, zz, &stage.command, stage.reference_command.as_ref())
            };
            z = step(cfg.integrator, &mut rhs, t, &z, cfg.dt_integration)?;
        } else {
            // The latch for the next tick is taken now, after this tick's
            // command was computed with the previous latch.
            latch = harness.latch_from(&z);
            let u_c = eval.command.clone();
            let u_c_ref = eval.reference_command.clone();
            let mut rhs = |tt: f64, zz: &DVector<f64>| -> Result<DVector<f64>, SimError> {
                harness.rates(tt, zz, &u_c, u_c_ref.as_ref())
            };
            for sub in 0..substeps {
                let ts = t + sub as f64 * cfg.dt_integration;
                z = step(cfg.integrator, &mut rhs, ts, &z, cfg.dt_integration)?;
            }
        }
    }
    Ok(trace)
}

/// Analytic design error trajectory matched to a configuration's initial
/// conditions.
///
/// Exact-inversion laws are held against the full cascade; the incremental
/// laws against the first-order system factor alone, which is the dynamics
/// their increment commands.
pub fn design_error_solution(cfg: &SimConfig) -> Result<AnalyticErrorSolution, SimError> {
    let harness = Harness::new(cfg)?;
    let z = harness.initial_state();
    let (e0, de0, dde0) = initial_errors(&harness, &z)?;
    let solution = match cfg.controller {
        ControllerKind::IndiClassic | ControllerKind::IndiScaled { .. } => {
            AnalyticErrorSolution::from_coefficients(&[cfg.error_gains[0]], &[e0])?
        }
        _ => {
            let k = crate::error_spec::expand_cascade(&cfg.error_gains, cfg.omega_y)?;
            let mut init = vec![e0, de0];
            if k.len() >= 3 {
                init.push(dde0);
            }
            AnalyticErrorSolution::from_coefficients(&k, &init)?
        }
    };
    Ok(solution)
}

fn initial_errors(harness: &Harness, z: &DVector<f64>) -> Result<(f64, f64, f64), SimError> {
    let p_c = harness.cfg.command.value(0.0);
    let (_, _, _, y) = harness.measurements(z);
    let reference = harness.reference_state(z);
    let reference_command = match &reference {
        ReferenceState::Physical(m) => Some(m.reference_command(p_c)?),
        _ => None,
    };
    let y_ref = harness.reference_stack(&reference, p_c, reference_command.as_ref())?;
    let e0 = y_ref[0][0] - y[0][0];
    let de0 = y_ref[1][0] - y[1][0];
    let dde0 = if y_ref.len() > 2 && y.len() > 2 {
        y_ref[2][0] - y[2][0]
    } else {
        0.0
    };
    Ok((e0, de0, dde0))
}

/// Free-response study: perturb the plant, command zero, and measure how far
/// the simulated error strays from the analytic design error dynamics.
pub fn perturbation_study(cfg: &SimConfig) -> Result<(SimTrace, DeviationMetric), SimError> {
    if !cfg.command.is_zero() {
        return Err(SimError::InvalidConfig(
            "perturbation studies run with the zero command".into(),
        ));
    }
    let design = design_error_solution(cfg)?;
    let trace = run_closed_loop(cfg)?;
    let metric = deviation_from_design(&trace, &design);
    Ok((trace, metric))
}

/// Deviation between a simulated trace and an analytic design solution,
/// first control tick discarded.
pub fn deviation_from_design(trace: &SimTrace, design: &AnalyticErrorSolution) -> DeviationMetric {
    let deviation: Vec<f64> = trace
        .time
        .iter()
        .zip(trace.error.iter())
        .skip(1)
        .map(|(&t, &e)| e - design.eval(t))
        .collect();
    DeviationMetric::from_samples(&deviation, trace.dt_sample)
}

/// One bandwidth point of the sweep study.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub omega: f64,
    /// Simulated closed loop against its own design dynamics.
    pub simulated: DeviationMetric,
    /// Analytic cascade design against the analytic first-order design.
    pub design_gap: DeviationMetric,
}

/// Re-run the perturbation study across actuator bandwidths, re-deriving
/// `Ω_y = ω` at every point, and pair each simulated deviation with the
/// analytic gap between the cascade design and the first-order design.
pub fn bandwidth_sweep(cfg: &SimConfig, omegas: &[f64]) -> Result<Vec<SweepPoint>, SimError> {
    if omegas.is_empty() {
        return Err(SimError::InvalidConfig("bandwidth list is empty".into()));
    }
    if !(omegas[0] > 0.0) || omegas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidConfig(
            "bandwidth list must be strictly increasing and positive".into(),
        ));
    }
    let mut out = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut point_cfg = cfg.clone();
        point_cfg.actuator = ActuatorConfig::FirstOrder { bandwidth: omega };
        point_cfg.omega_y = omega;
        let (trace, simulated) = perturbation_study(&point_cfg)?;

        // Analytic pair: cascade (system factor × innermost pole at ω)
        // against the bare first-order system factor, same initial errors.
        let harness = Harness::new(&point_cfg)?;
        let z = harness.initial_state();
        let (e0, de0, _) = initial_errors(&harness, &z)?;
        let cascade = AnalyticErrorSolution::from_coefficients(
            &crate::error_spec::expand_cascade(&point_cfg.error_gains, omega)?,
            &[e0, de0],
        )?;
        let first_order =
            AnalyticErrorSolution::from_coefficients(&[point_cfg.error_gains[0]], &[e0])?;
        let gap: Vec<f64> = trace
            .time
            .iter()
            .skip(1)
            .map(|&t| cascade.eval(t) - first_order.eval(t))
            .collect();
        let design_gap = DeviationMetric::from_samples(&gap, trace.dt_sample);
        out.push(SweepPoint {
            omega,
            simulated,
            design_gap,
        });
    }
    Ok(out)
}

/// Frozen signal snapshot for the fixed-state limit study.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub state: f64,
    pub actuator: f64,
    pub reference: f64,
    pub reference_rate: f64,
    pub reference_accel: f64,
}

/// Result of the limit study: per-ω command gap between the exact inversion
/// and the incremental law, plus the log-log slope of gap versus ω.
#[derive(Debug, Clone)]
pub struct LimitStudy {
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of ln(gap) against ln(ω); `None` when the gap
    /// vanishes (nothing was neglected).
    pub slope: Option<f64>,
}

/// Evaluate both laws on one frozen snapshot across bandwidths with
/// `Ω = ω·I`, `Ω_y = ω·I` and the latch at current values, and fit how the
/// command gap scales with ω.
pub fn limit_study(
    plant: &RollPlant,
    gains: &[f64],
    snapshot: &Snapshot,
    omegas: &[f64],
) -> Result<LimitStudy, SimError> {
    let scalar = |v: f64| DVector::from_element(1, v);
    let x_dot =
        plant.roll_damping * snapshot.state + plant.aileron_effectiveness * snapshot.actuator;
    let input = ControllerInput {
        x: scalar(snapshot.state),
        x_derivatives: vec![scalar(x_dot)],
        u_chain: vec![scalar(snapshot.actuator)],
        y: vec![scalar(snapshot.state), scalar(x_dot)],
        y_ref: vec![
            scalar(snapshot.reference),
            scalar(snapshot.reference_rate),
            scalar(snapshot.reference_accel),
        ],
        previous: PreviousSample {
            x: scalar(snapshot.state),
            u: scalar(snapshot.actuator),
            y_r: scalar(x_dot),
        },
    };
    let mut points = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let bank = FirstOrderActuatorBank::scalar(omega)?;
        let spec = ErrorDynamicsSpec::siso(gains, omega)?;
        let andi = controllers::andi_first_order(&input, plant, &bank, &spec)?;
        let indi = controllers::indi_classic(&input, plant, &spec)?;
        points.push((omega, (andi - indi).norm()));
    }
    let slope = fit_log_slope(&points);
    Ok(LimitStudy { points, slope })
}

fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(_, g)| g <= 1e-300) {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(w, g) in points {
        let (lx, ly) = (w.ln(), g.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
