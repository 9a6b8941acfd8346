//! Control laws as interchangeable command generators.
//!
//! Every law shares one evaluation contract: given the measured signals, the
//! reference stack, and the current actuator state, produce the actuator
//! command `u_c`. All laws are increments on an actuator position — the
//! differences lie in which dynamics they invert and which terms they drop:
//!
//! * [`andi_first_order`] inverts plant and first-order actuator exactly,
//! * [`andi_generalized`] does the same through an order-`r_a` actuator,
//! * [`indi_classic`] increments on latched measurements, dropping the
//!   state-derivative term and the actuator feed-forward,
//! * [`indi_with_actuators`] keeps the actuator in the error-controller
//!   design but still neglects the state-derivative term,
//! * [`indi_scaled`] is the classic increment with an input-scaling gain,
//! * [`rm_feedforward`] replaces state-derivative feedback with feed-forward
//!   signals from a physical reference model.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::allocation::{self, AllocationError};
use crate::error_spec::{ErrorDynamicsSpec, ErrorSpecError};
use crate::model::{FirstOrderActuatorBank, GeneralizedActuator, PlantModel};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    ErrorSpec(#[from] ErrorSpecError),
    #[error("state-derivative chain has {got} entries, actuator order {expected} required")]
    MissingDerivativeChain { expected: usize, got: usize },
    #[error("equal-bandwidth variant requires one shared actuator bandwidth, got {0:?}")]
    NonUniformBandwidth(Vec<f64>),
    #[error("scaling gain must be positive on every channel, got {0}")]
    NonPositiveScaling(f64),
    #[error("scaling gain has {got} channels, expected {expected}")]
    ScalingDimension { expected: usize, got: usize },
    #[error("hat effectiveness matrix is singular")]
    SingularHatEffectiveness,
}

/// Signals latched at the previous controller tick. Incremental laws build
/// their command on these rather than on current values.
#[derive(Debug, Clone)]
pub struct PreviousSample {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    /// `y⁽ʳ⁾` as measured at the latch instant.
    pub y_r: DVector<f64>,
}

/// Everything a law may consume at one evaluation instant.
///
/// Derivative stacks are ordered from the zeroth derivative upward and are
/// computed analytically from the plant equations; no differentiating
/// filters are involved.
#[derive(Debug, Clone)]
pub struct ControllerInput {
    pub x: DVector<f64>,
    /// `ẋ, ẍ, …, x⁽ʳᵃ⁾` — as many state derivatives as the actuator order
    /// requires; first-order laws use only `ẋ`.
    pub x_derivatives: Vec<DVector<f64>>,
    /// `u, u̇, …, u⁽ʳᵃ⁻¹⁾` — actuator state chain, position first.
    pub u_chain: Vec<DVector<f64>>,
    /// `y, ẏ, …` up to the order the error spec requires.
    pub y: Vec<DVector<f64>>,
    /// `y_ref, ẏ_ref, …` one order beyond the measured stack.
    pub y_ref: Vec<DVector<f64>>,
    pub previous: PreviousSample,
}

impl ControllerInput {
    pub fn actuator_position(&self) -> &DVector<f64> {
        &self.u_chain[0]
    }

    pub fn state_rate(&self) -> &DVector<f64> {
        &self.x_derivatives[0]
    }
}

/// Which law a scenario runs. Parameters that are not part of the shared
/// model/spec context ride along here.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind {
    AndiFirstOrder,
    AndiGeneralized,
    IndiClassic,
    IndiActuatorsEqualBandwidth,
    IndiActuatorsRaab,
    IndiScaled { lambda: f64 },
    RmFeedforward,
}

impl ControllerKind {
    /// Inverse of [`ControllerKind::name`]; `indi_scaled` gets λ = 1.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "andi" => Some(Self::AndiFirstOrder),
            "andi_generalized" => Some(Self::AndiGeneralized),
            "indi" => Some(Self::IndiClassic),
            "indi_actuators_equal_bw" => Some(Self::IndiActuatorsEqualBandwidth),
            "indi_actuators_raab" => Some(Self::IndiActuatorsRaab),
            "indi_scaled" => Some(Self::IndiScaled { lambda: 1.0 }),
            "rm_feedforward" => Some(Self::RmFeedforward),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::AndiFirstOrder => "andi",
            ControllerKind::AndiGeneralized => "andi_generalized",
            ControllerKind::IndiClassic => "indi",
            ControllerKind::IndiActuatorsEqualBandwidth => "indi_actuators_equal_bw",
            ControllerKind::IndiActuatorsRaab => "indi_actuators_raab",
            ControllerKind::IndiScaled { .. } => "indi_scaled",
            ControllerKind::RmFeedforward => "rm_feedforward",
        }
    }

    /// True for laws that build their increment on latched previous-tick
    /// values rather than current measurements.
    pub fn uses_latched_sample(&self) -> bool {
        matches!(
            self,
            ControllerKind::IndiClassic | ControllerKind::IndiActuatorsEqualBandwidth
        )
    }
}

/// Exact inversion through first-order actuators:
/// `u_c = (F_u·Ω)†(ν − F_x·ẋ) + u`.
pub fn andi_first_order(
    input: &ControllerInput,
    plant: &dyn PlantModel,
    actuator: &FirstOrderActuatorBank,
    spec: &ErrorDynamicsSpec,
) -> Result<DVector<f64>, ControllerError> {
    let u = input.actuator_position();
    let f_x = plant.jacobian_x(&input.x, u);
    let f_u = plant.jacobian_u(&input.x, u);
    let nu = spec.pseudo_control(&input.y_ref, &input.y)?;
    let effectiveness = f_u * actuator.bandwidth_matrix();
    let rhs = nu - f_x * input.state_rate();
    Ok(allocation::superposition_split(&effectiveness, u, &rhs)?)
}

/// Lower-derivative cross terms of the chain rule, supplied by the caller
/// when the plant is nonlinear.
pub type CrossTerm = dyn Fn(&ControllerInput) -> DVector<f64>;

/// Exact inversion through an order-`r_a` actuator in the affine form
/// `u⁽ʳᵃ⁾ = Ω_A + Ω_B(u_c − u)`:
///
/// `u_c = C_a(F_u·Ω_B, ν − F_x·x⁽ʳᵃ⁾ − F_u·Ω_A − g) + u`
///
/// where `g` collects the lower-derivative cross terms of the chain rule and
/// vanishes for linear plants.
pub fn andi_generalized(
    input: &ControllerInput,
    plant: &dyn PlantModel,
    actuator: &GeneralizedActuator,
    spec: &ErrorDynamicsSpec,
    g_term: Option<&CrossTerm>,
) -> Result<DVector<f64>, ControllerError> {
    let order = actuator.order();
    if input.x_derivatives.len() < order {
        return Err(ControllerError::MissingDerivativeChain {
            expected: order,
            got: input.x_derivatives.len(),
        });
    }
    if input.u_chain.len() < order {
        return Err(ControllerError::MissingDerivativeChain {
            expected: order,
            got: input.u_chain.len(),
        });
    }
    let u = input.actuator_position();
    let f_x = plant.jacobian_x(&input.x, u);
    let f_u = plant.jacobian_u(&input.x, u);
    let omega_a = actuator.omega_a(&input.x, &input.u_chain);
    let omega_b = actuator.omega_b(&input.x, &input.u_chain);
    let nu = spec.pseudo_control(&input.y_ref, &input.y)?;
    let x_high = &input.x_derivatives[order - 1];

    let mut rhs = nu - f_x * x_high - &f_u * omega_a;
    if let Some(g) = g_term {
        rhs -= g(input);
    }
    Ok(allocation::superposition_split(&(f_u * omega_b), u, &rhs)?)
}

/// Classical incremental law on latched measurements:
/// `u_c = F_u†(e⁽ʳ⁾ + Σ K_i e⁽ⁱ⁾) + u_0` with `e⁽ʳ⁾ = y_ref⁽ʳ⁾ − y_0⁽ʳ⁾`.
pub fn indi_classic(
    input: &ControllerInput,
    plant: &dyn PlantModel,
    spec: &ErrorDynamicsSpec,
) -> Result<DVector<f64>, ControllerError> {
    let r = spec.relative_degree();
    let f_u = plant.jacobian_u(&input.x, input.actuator_position());
    let mut y = input.y[..r].to_vec();
    y.push(input.previous.y_r.clone());
    let fb = spec.incremental_feedback(&input.y_ref, &y)?;
    let inv = allocation::right_inverse(&f_u)?;
    Ok(inv * fb + &input.previous.u)
}

/// How the actuator enters an incremental law's error-controller design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndiActuatorVariant {
    /// Assumes every actuator shares one bandwidth ω; the output derivative
    /// then follows ν through the actuator lag, and the innermost design
    /// bandwidth is pinned to ω.
    EqualBandwidth,
    /// Allocates against `F_u·Ω` directly; admits distinct per-channel
    /// bandwidths and a freely chosen `Ω_y`.
    PerChannel,
}

/// Incremental law with actuator dynamics in the design.
///
/// Equal-bandwidth: `u_c = F_u†·(1/ω)·ν|_{Ω_y=ω} + u_0`.
/// Per-channel:     `u_c = (F_u·Ω)†·ν + u` with the spec's own `Ω_y`.
///
/// Both equal the exact first-order inversion with the `F_x·ẋ` term
/// neglected.
pub fn indi_with_actuators(
    input: &ControllerInput,
    plant: &dyn PlantModel,
    actuator: &FirstOrderActuatorBank,
    spec: &ErrorDynamicsSpec,
    variant: IndiActuatorVariant,
) -> Result<DVector<f64>, ControllerError> {
    let u = input.actuator_position();
    let f_u = plant.jacobian_u(&input.x, u);
    match variant {
        IndiActuatorVariant::EqualBandwidth => {
            let bw = actuator.bandwidths();
            let omega = bw[0];
            if bw.iter().any(|&w| (w - omega).abs() > 1e-12 * omega.abs()) {
                return Err(ControllerError::NonUniformBandwidth(
                    bw.iter().copied().collect(),
                ));
            }
            let nu = spec
                .with_omega_y(omega)?
                .pseudo_control(&input.y_ref, &input.y)?;
            let inv = allocation::right_inverse(&f_u)?;
            Ok(inv * nu / omega + &input.previous.u)
        }
        IndiActuatorVariant::PerChannel => {
            let nu = spec.pseudo_control(&input.y_ref, &input.y)?;
            let effectiveness = f_u * actuator.bandwidth_matrix();
            let inv = allocation::right_inverse(&effectiveness)?;
            Ok(inv * nu + u)
        }
    }
}

/// Incremental law with a diagonal input-scaling gain Λ:
/// `u_c = F_u†·Λ·(e⁽ʳ⁾ + Σ K_i e⁽ⁱ⁾) + u`.
///
/// Entries above 1 raise the innermost bandwidth past the actuator's and are
/// accepted; [`scaling_exceeds_unity`] lets callers surface a warning.
pub fn indi_scaled(
    input: &ControllerInput,
    plant: &dyn PlantModel,
    lambda: &DVector<f64>,
    spec: &ErrorDynamicsSpec,
) -> Result<DVector<f64>, ControllerError> {
    if lambda.len() != spec.channels() {
        return Err(ControllerError::ScalingDimension {
            expected: spec.channels(),
            got: lambda.len(),
        });
    }
    for &l in lambda.iter() {
        if !(l > 0.0) {
            return Err(ControllerError::NonPositiveScaling(l));
        }
    }
    let u = input.actuator_position();
    let f_u = plant.jacobian_u(&input.x, u);
    let fb = spec.incremental_feedback(&input.y_ref, &input.y)?;
    let inv = allocation::right_inverse(&f_u)?;
    Ok(inv * lambda.component_mul(&fb) + u)
}

/// True when any scaling entry exceeds 1, i.e. the requested innermost
/// bandwidth exceeds the actuator bandwidth.
pub fn scaling_exceeds_unity(lambda: &DVector<f64>) -> bool {
    lambda.iter().any(|&l| l > 1.0)
}

/// Hat (design-model) parameters for the reference-model feed-forward law.
#[derive(Debug, Clone)]
pub struct HatParameters {
    /// `F̂_u`, square and invertible.
    pub effectiveness: DMatrix<f64>,
    /// `ω̂` — reference-model actuator bandwidth per channel.
    pub actuator_bandwidth: DVector<f64>,
    /// `ω_d` — error-decay gain per channel.
    pub error_gain: DVector<f64>,
}

/// Feed-forward signals exported by a physical reference model at the same
/// evaluation instant.
#[derive(Debug, Clone)]
pub struct ReferenceCommandSignals {
    /// `u_{c,ref}` — command of the reference-model controller.
    pub command: DVector<f64>,
    /// `u_ref` — reference-model actuator state.
    pub actuator: DVector<f64>,
    /// `y_ref⁽ⁿ⁾` — reference output derivative at the plant's relative degree.
    pub output_derivative: DVector<f64>,
}

/// Reference-model feed-forward law:
/// `u_c = u_{c,ref} − u_ref + F̂_u⁻¹(ω_d/ω̂)(y_ref⁽ⁿ⁾ − y⁽ⁿ⁾) + u`.
///
/// Avoids feeding back `ẋ`; with exact hat parameters and matching states the
/// command passes the reference-model command straight through.
pub fn rm_feedforward(
    input: &ControllerInput,
    hat: &HatParameters,
    rm: &ReferenceCommandSignals,
) -> Result<DVector<f64>, ControllerError> {
    let r = input.y.len() - 1;
    let y_n = &input.y[r];
    let inv = hat
        .effectiveness
        .clone()
        .try_inverse()
        .ok_or(ControllerError::SingularHatEffectiveness)?;
    let ratio = hat.error_gain.component_div(&hat.actuator_bandwidth);
    let feedback = inv * ratio.component_mul(&(&rm.output_derivative - y_n));
    Ok(&rm.command - &rm.actuator + feedback + input.actuator_position())
}
