//! Plant and actuator dynamics with their analytic derivative maps.
//!
//! A plant is anything of the form `ẋ = f(x, u)`, `y = h(x)` with a known
//! relative degree `r`, i.e. `y⁽ʳ⁾ = F(x, u)` is the first output derivative
//! in which the input appears. Controllers consume `F` together with its
//! Jacobians `F_x` and `F_u`, so implementations are expected to provide
//! them analytically; a central-difference fallback is available as an
//! oracle and for models without closed-form Jacobians.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch for {quantity}: expected {expected}, got {got}")]
    DimensionMismatch {
        quantity: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("actuator bandwidth entries must be strictly positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("actuator order must be at least 1, got {0}")]
    InvalidActuatorOrder(usize),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite value encountered while evaluating {0}")]
    NonFinite(&'static str),
}

/// Continuous-time plant with explicit relative degree.
///
/// Implementations must keep `h` and its first `r − 1` time derivatives
/// along `f` independent of `u`; `F` is where the input first appears.
pub trait PlantModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn relative_degree(&self) -> usize;

    /// State derivative `f(x, u)`.
    fn state_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Output map `h(x)`.
    fn output(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `F(x, u) = y⁽ʳ⁾`, the r-th output time derivative.
    fn output_highest_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `F_x = ∂F/∂x`, an m×n Jacobian.
    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    /// `F_u = ∂F/∂u`, an m×k Jacobian.
    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
}

/// Dimension-checked evaluation of `f(x, u)`.
pub fn plant_derivative(
    model: &dyn PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_dim("state x", model.state_dim(), x.len())?;
    check_dim("input u", model.input_dim(), u.len())?;
    Ok(model.state_derivative(x, u))
}

/// Central-difference Jacobians of `F` with respect to `x` and `u`.
///
/// Serves as the independent oracle for analytic `F_x`/`F_u` and as a
/// fallback for user models without closed-form derivatives. Runs flagging
/// a finite-difference model should carry that in their metadata since the
/// inversion laws are only as exact as these Jacobians.
pub fn finite_difference_jacobians(
    model: &dyn PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    step: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    if !(step > 0.0) {
        return Err(ModelError::InvalidStep(step));
    }
    check_dim("state x", model.state_dim(), x.len())?;
    check_dim("input u", model.input_dim(), u.len())?;

    let m = model.output_dim();
    let n = model.state_dim();
    let k = model.input_dim();

    let mut f_x = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[j] += step;
        lo[j] -= step;
        let d = (model.output_highest_derivative(&hi, u) - model.output_highest_derivative(&lo, u))
            / (2.0 * step);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("F(x ± h, u)"));
        }
        f_x.set_column(j, &d);
    }

    let mut f_u = DMatrix::zeros(m, k);
    for j in 0..k {
        let mut hi = u.clone();
        let mut lo = u.clone();
        hi[j] += step;
        lo[j] -= step;
        let d = (model.output_highest_derivative(x, &hi) - model.output_highest_derivative(x, &lo))
            / (2.0 * step);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("F(x, u ± h)"));
        }
        f_u.set_column(j, &d);
    }

    Ok((f_x, f_u))
}

/// Roll-rate dynamics `ṗ = L_p·p + L_u·u` with output `y = p`.
///
/// `roll_damping` is `L_p` in 1/s (negative for a stable airframe) and
/// `aileron_effectiveness` is `L_u` in 1/s² per unit deflection. The
/// relative degree is 1 and both Jacobians are constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollPlant {
    pub roll_damping: f64,
    pub aileron_effectiveness: f64,
}

impl RollPlant {
    pub fn new(roll_damping: f64, aileron_effectiveness: f64) -> Self {
        Self {
            roll_damping,
            aileron_effectiveness,
        }
    }
}

impl Default for RollPlant {
    /// Light fixed-wing roll dynamics used throughout the built-in scenarios.
    fn default() -> Self {
        Self::new(-6.6, 0.25)
    }
}

impl PlantModel for RollPlant {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn relative_degree(&self) -> usize {
        1
    }

    fn state_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(
            1,
            self.roll_damping * x[0] + self.aileron_effectiveness * u[0],
        )
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn output_highest_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.state_derivative(x, u)
    }

    fn jacobian_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.roll_damping)
    }

    fn jacobian_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.aileron_effectiveness)
    }
}

/// Bank of independent first-order actuators `u̇ = Ω(u_c − u)` with a
/// diagonal, strictly positive bandwidth matrix Ω (rad/s per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderActuatorBank {
    bandwidths: DVector<f64>,
}

impl FirstOrderActuatorBank {
    pub fn new(bandwidths: DVector<f64>) -> Result<Self, ModelError> {
        for &w in bandwidths.iter() {
            if !(w > 0.0) {
                return Err(ModelError::NonPositiveBandwidth(w));
            }
        }
        Ok(Self { bandwidths })
    }

    /// Single-channel bank.
    pub fn scalar(bandwidth: f64) -> Result<Self, ModelError> {
        Self::new(DVector::from_element(1, bandwidth))
    }

    pub fn channels(&self) -> usize {
        self.bandwidths.len()
    }

    /// Diagonal entries of Ω.
    pub fn bandwidths(&self) -> &DVector<f64> {
        &self.bandwidths
    }

    /// Ω as a dense matrix, for allocation products like `F_u·Ω`.
    pub fn bandwidth_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.bandwidths)
    }

    /// `u̇ = Ω(u_c − u)`.
    pub fn derivative(
        &self,
        u: &DVector<f64>,
        u_c: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        check_dim("actuator state u", self.channels(), u.len())?;
        check_dim("actuator command u_c", self.channels(), u_c.len())?;
        Ok(self.bandwidths.component_mul(&(u_c - u)))
    }
}

type CoefficientVec = Arc<dyn Fn(&DVector<f64>, &[DVector<f64>]) -> DVector<f64> + Send + Sync>;
type CoefficientMat = Arc<dyn Fn(&DVector<f64>, &[DVector<f64>]) -> DMatrix<f64> + Send + Sync>;

/// Actuator bank in the affine-in-command form
/// `u⁽ʳᵃ⁾ = Ω_A + Ω_B(u_c − u)`.
///
/// `Ω_A` and `Ω_B` may depend on the plant state and on the actuator state
/// chain `u, u̇, …, u⁽ʳᵃ⁻¹⁾`, which admits linear actuators of any order as
/// well as state-dependent effects such as hinge-moment loading. Only the
/// constant-coefficient first- and second-order forms ship as constructors.
#[derive(Clone)]
pub struct GeneralizedActuator {
    order: usize,
    channels: usize,
    omega_a: CoefficientVec,
    omega_b: CoefficientMat,
}

impl fmt::Debug for GeneralizedActuator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedActuator")
            .field("order", &self.order)
            .field("channels", &self.channels)
            .finish()
    }
}

impl GeneralizedActuator {
    pub fn new(
        order: usize,
        channels: usize,
        omega_a: CoefficientVec,
        omega_b: CoefficientMat,
    ) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidActuatorOrder(order));
        }
        Ok(Self {
            order,
            channels,
            omega_a,
            omega_b,
        })
    }

    /// First-order specialization: `Ω_A = 0`, `Ω_B = Ω`.
    pub fn first_order(bank: &FirstOrderActuatorBank) -> Self {
        let k = bank.channels();
        let omega = bank.bandwidths().clone();
        Self {
            order: 1,
            channels: k,
            omega_a: Arc::new(move |_, _| DVector::zeros(k)),
            omega_b: Arc::new(move |_, _| DMatrix::from_diagonal(&omega)),
        }
    }

    /// Second-order servo `ü = ω²(u_c − u) − 2ζω·u̇` on every channel,
    /// identified as `Ω_A = −2ζω·u̇`, `Ω_B = ω²·I`.
    pub fn second_order(channels: usize, omega: f64, zeta: f64) -> Result<Self, ModelError> {
        if !(omega > 0.0) {
            return Err(ModelError::NonPositiveBandwidth(omega));
        }
        Ok(Self {
            order: 2,
            channels,
            omega_a: Arc::new(move |_, chain: &[DVector<f64>]| &chain[1] * (-2.0 * zeta * omega)),
            omega_b: Arc::new(move |_, _| {
                DMatrix::from_diagonal_element(channels, channels, omega * omega)
            }),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn omega_a(&self, x: &DVector<f64>, u_chain: &[DVector<f64>]) -> DVector<f64> {
        (self.omega_a)(x, u_chain)
    }

    pub fn omega_b(&self, x: &DVector<f64>, u_chain: &[DVector<f64>]) -> DMatrix<f64> {
        (self.omega_b)(x, u_chain)
    }

    /// Highest actuator derivative `u⁽ʳᵃ⁾ = Ω_A + Ω_B(u_c − u)`.
    ///
    /// `u_chain` supplies `u, u̇, …, u⁽ʳᵃ⁻¹⁾` in that order.
    pub fn highest_derivative(
        &self,
        x: &DVector<f64>,
        u_chain: &[DVector<f64>],
        u_c: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        check_dim("actuator state chain", self.order, u_chain.len())?;
        for stage in u_chain {
            check_dim("actuator chain entry", self.channels, stage.len())?;
        }
        check_dim("actuator command u_c", self.channels, u_c.len())?;
        let a = self.omega_a(x, u_chain);
        let b = self.omega_b(x, u_chain);
        Ok(a + b * (u_c - &u_chain[0]))
    }

    /// Time derivative of the full chain state, for joint integration:
    /// d/dt [u, u̇, …, u⁽ʳᵃ⁻¹⁾] = [u̇, …, u⁽ʳᵃ⁾].
    pub fn chain_derivative(
        &self,
        x: &DVector<f64>,
        u_chain: &[DVector<f64>],
        u_c: &DVector<f64>,
    ) -> Result<Vec<DVector<f64>>, ModelError> {
        let top = self.highest_derivative(x, u_chain, u_c)?;
        let mut out: Vec<DVector<f64>> = u_chain[1..].to_vec();
        out.push(top);
        Ok(out)
    }
}

fn check_dim(quantity: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch {
            quantity,
            expected,
            got,
        });
    }
    Ok(())
}
