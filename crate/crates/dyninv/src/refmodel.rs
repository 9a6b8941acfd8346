//! Reference models: generators of `y_ref` and its derivatives.
//!
//! Three families. A filter model shapes the command through a second-order
//! lag. The roll-example model cascades the desired roll damping with a
//! desired actuator-like pole, which makes the reference derivatives
//! available in closed form. A physical reference model replicates plant and
//! actuator structure and closes an exact-inversion controller around the
//! replica, exporting the command and actuator signals the feed-forward law
//! consumes.

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::controllers::{self, ControllerError, ControllerInput, PreviousSample};
use crate::error_spec::ErrorDynamicsSpec;
use crate::model::{FirstOrderActuatorBank, PlantModel};

#[derive(Debug, Error)]
pub enum RefModelError {
    #[error("reference model state is not finite")]
    NonFiniteState,
    #[error("ganged effectors must share actuator dynamics, bandwidths {0:?} differ")]
    MixedBandwidths(Vec<f64>),
    #[error(
        "physical reference model with partial output control ({inputs} inputs, {outputs} \
         outputs) would need its own allocation and is not supported"
    )]
    UnsupportedAllocation { inputs: usize, outputs: usize },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Second-order filter reference `ÿ_ref = −2ζ_y ω_y ẏ_ref + ω_y²(y_c − y_ref)`
/// with unit DC gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRefModel {
    pub damping: f64,
    pub natural_frequency: f64,
    pub y_ref: f64,
    pub y_dot_ref: f64,
}

impl FilterRefModel {
    pub fn new(damping: f64, natural_frequency: f64) -> Self {
        Self {
            damping,
            natural_frequency,
            y_ref: 0.0,
            y_dot_ref: 0.0,
        }
    }

    pub fn acceleration(&self, y_c: f64) -> f64 {
        let w = self.natural_frequency;
        -2.0 * self.damping * w * self.y_dot_ref + w * w * (y_c - self.y_ref)
    }

    /// `[y_ref, ẏ_ref, ÿ_ref]`.
    pub fn derivatives(&self, y_c: f64) -> [f64; 3] {
        [self.y_ref, self.y_dot_ref, self.acceleration(y_c)]
    }
}

/// Roll-example reference: desired roll damping fed by a generalized roll
/// acceleration that builds up with an actuator-like pole.
///
/// `ṗ_ref = −L_{p,d}(δ − p_ref)`, `δ̇ = ω_d(p_c − δ)`; in steady state
/// `p_ref = p_c`. Signs follow that exact form, so a stable model needs
/// `desired_damping < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollRefModel {
    /// `L_{p,d}` in 1/s.
    pub desired_damping: f64,
    /// `ω_d` in rad/s.
    pub accel_bandwidth: f64,
    pub p_ref: f64,
    pub delta: f64,
}

impl RollRefModel {
    pub fn new(desired_damping: f64, accel_bandwidth: f64) -> Self {
        Self {
            desired_damping,
            accel_bandwidth,
            p_ref: 0.0,
            delta: 0.0,
        }
    }

    /// `(ṗ_ref, δ̇)` for joint integration.
    pub fn rates(&self, p_c: f64) -> (f64, f64) {
        (
            -self.desired_damping * (self.delta - self.p_ref),
            self.accel_bandwidth * (p_c - self.delta),
        )
    }

    /// `(p_ref, ṗ_ref, p̈_ref)` with the acceleration obtained by
    /// differentiating the reference dynamics once.
    pub fn derivatives(&self, p_c: f64) -> Result<(f64, f64, f64), RefModelError> {
        if !(self.p_ref.is_finite() && self.delta.is_finite() && p_c.is_finite()) {
            return Err(RefModelError::NonFiniteState);
        }
        let (dp_ref, ddelta) = self.rates(p_c);
        let ddp_ref = -self.desired_damping * (ddelta - dp_ref);
        Ok((self.p_ref, dp_ref, ddp_ref))
    }

    /// `p⃛_ref` for piecewise-constant commands (`ṗ_c = 0` between steps).
    pub fn third_derivative(&self, p_c: f64) -> f64 {
        let (dp_ref, ddelta) = self.rates(p_c);
        let ddp_ref = -self.desired_damping * (ddelta - dp_ref);
        let dddelta = -self.accel_bandwidth * ddelta;
        -self.desired_damping * (dddelta - ddp_ref)
    }
}

/// First-order reference `ṗ_ref = −L_{p,d}(p_c − p_ref)`, the form the
/// classical incremental law is paired with. Stable for negative
/// `desired_damping` exactly as written.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderRefModel {
    pub desired_damping: f64,
    pub p_ref: f64,
}

impl FirstOrderRefModel {
    pub fn new(desired_damping: f64) -> Self {
        Self {
            desired_damping,
            p_ref: 0.0,
        }
    }

    pub fn rate(&self, p_c: f64) -> f64 {
        first_order_ref_derivative(self.desired_damping, self.p_ref, p_c)
    }
}

/// `ṗ_ref = −L_{p,d}(p_c − p_ref)`.
pub fn first_order_ref_derivative(desired_damping: f64, p_ref: f64, p_c: f64) -> f64 {
    -desired_damping * (p_c - p_ref)
}

/// One effector's contribution to a ganged virtual input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectorContribution {
    /// Control effectiveness `b_j`.
    pub effectiveness: f64,
    /// Effector state `u_j`.
    pub input: f64,
    /// First-order actuator bandwidth of the effector.
    pub bandwidth: f64,
}

/// Gang input-affine effector contributions into one virtual input
/// `u_ẏ = Σ b_j·u_j`.
///
/// Only effectors with identical actuator dynamics can be lumped this way;
/// with mixed bandwidths the contributions build up at different rates and
/// the lumped state stops being meaningful.
pub fn virtual_input_gang(contributions: &[EffectorContribution]) -> Result<f64, RefModelError> {
    if let Some(first) = contributions.first() {
        if contributions.iter().any(|c| c.bandwidth != first.bandwidth) {
            return Err(RefModelError::MixedBandwidths(
                contributions.iter().map(|c| c.bandwidth).collect(),
            ));
        }
    }
    Ok(contributions
        .iter()
        .map(|c| c.effectiveness * c.input)
        .sum())
}

/// Replica state rates: `(ẋ_ref, u̇_ref, (ṗ_ref, δ̇))`.
pub type ReplicaRates = (DVector<f64>, DVector<f64>, (f64, f64));

/// Plant-replica reference model.
///
/// Runs the replica `ẋ_ref = f̂(x_ref, u_ref)`, `u̇_ref = ω̂(u_{c,ref} − u_ref)`
/// under an exact-inversion controller whose own reference trajectory comes
/// from an internal [`RollRefModel`]. Exports `u_{c,ref}`, `u_ref` and the
/// replica output stack for the feed-forward law.
#[derive(Clone)]
pub struct PhysicalRefModel {
    pub plant: Arc<dyn PlantModel>,
    pub actuator: FirstOrderActuatorBank,
    pub controller_spec: ErrorDynamicsSpec,
    pub inner_reference: RollRefModel,
    pub x_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
}

impl PhysicalRefModel {
    pub fn new(
        plant: Arc<dyn PlantModel>,
        actuator: FirstOrderActuatorBank,
        controller_spec: ErrorDynamicsSpec,
        inner_reference: RollRefModel,
    ) -> Result<Self, RefModelError> {
        // A replica with more effectors than outputs needs its own control
        // allocation, which would let allocation mismatches drive the replica
        // away from the plant. Rejected rather than supported badly.
        if plant.input_dim() > plant.output_dim() {
            return Err(RefModelError::UnsupportedAllocation {
                inputs: plant.input_dim(),
                outputs: plant.output_dim(),
            });
        }
        let n = plant.state_dim();
        let k = plant.input_dim();
        Ok(Self {
            plant,
            actuator,
            controller_spec,
            inner_reference,
            x_ref: DVector::zeros(n),
            u_ref: DVector::zeros(k),
        })
    }

    /// `u_{c,ref}`: the internal exact-inversion command on replica signals.
    pub fn reference_command(&self, p_c: f64) -> Result<DVector<f64>, RefModelError> {
        let x_dot = self.plant.state_derivative(&self.x_ref, &self.u_ref);
        let y = self.plant.output(&self.x_ref);
        let y_r = self
            .plant
            .output_highest_derivative(&self.x_ref, &self.u_ref);
        let (r0, r1, r2) = self.inner_reference.derivatives(p_c)?;
        let input = ControllerInput {
            x: self.x_ref.clone(),
            x_derivatives: vec![x_dot],
            u_chain: vec![self.u_ref.clone()],
            y: vec![y, y_r.clone()],
            y_ref: vec![
                DVector::from_element(1, r0),
                DVector::from_element(1, r1),
                DVector::from_element(1, r2),
            ],
            previous: PreviousSample {
                x: self.x_ref.clone(),
                u: self.u_ref.clone(),
                y_r,
            },
        };
        Ok(controllers::andi_first_order(
            &input,
            self.plant.as_ref(),
            &self.actuator,
            &self.controller_spec,
        )?)
    }

    /// Replica state rates under a given reference command, plus the internal
    /// reference-model rates: `(ẋ_ref, u̇_ref, (ṗ_ref, δ̇))`.
    pub fn rates(&self, u_c_ref: &DVector<f64>, p_c: f64) -> Result<ReplicaRates, RefModelError> {
        let x_dot = self.plant.state_derivative(&self.x_ref, &self.u_ref);
        let u_dot = self
            .actuator
            .derivative(&self.u_ref, u_c_ref)
            .map_err(|_| RefModelError::NonFiniteState)?;
        Ok((x_dot, u_dot, self.inner_reference.rates(p_c)))
    }

    /// Replica output stack `[y_ref, …, y_ref⁽ʳ⁺¹⁾]`; the top order uses the
    /// replica actuator response to the given command.
    pub fn output_stack(&self, u_c_ref: &DVector<f64>) -> Result<Vec<DVector<f64>>, RefModelError> {
        let x_dot = self.plant.state_derivative(&self.x_ref, &self.u_ref);
        let u_dot = self
            .actuator
            .derivative(&self.u_ref, u_c_ref)
            .map_err(|_| RefModelError::NonFiniteState)?;
        let f_x = self.plant.jacobian_x(&self.x_ref, &self.u_ref);
        let f_u = self.plant.jacobian_u(&self.x_ref, &self.u_ref);
        Ok(vec![
            self.plant.output(&self.x_ref),
            self.plant
                .output_highest_derivative(&self.x_ref, &self.u_ref),
            f_x * x_dot + f_u * u_dot,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RollPlant;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn roll_ref_initial_step_acceleration() {
        let mut m = RollRefModel::new(-13.2, 20.0);
        m.p_ref = 0.0;
        m.delta = 0.0;
        let (p, dp, ddp) = m.derivatives(5.0).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(dp, 0.0);
        assert_relative_eq!(ddp, 13.2 * 20.0 * 5.0, max_relative = 1e-13);
    }

    #[test]
    fn roll_ref_steady_state() {
        let mut m = RollRefModel::new(-13.2, 20.0);
        m.p_ref = 5.0;
        m.delta = 5.0;
        let (_, dp, ddp) = m.derivatives(5.0).unwrap();
        assert_eq!(dp, 0.0);
        assert_eq!(ddp, 0.0);
    }

    #[test]
    fn roll_ref_step_matches_two_pole_solution() {
        // Cascade of first-order lags at a = −L_{p,d} and ω_d: integrate and
        // compare to the closed-form step response.
        let a: f64 = 13.2;
        let w: f64 = 20.0;
        let p_c = 5.0;
        let mut m = RollRefModel::new(-a, w);
        let dt = 1e-5;
        let analytic = |t: f64| p_c * (1.0 - (w * (-a * t).exp() - a * (-w * t).exp()) / (w - a));
        for step in 0..=200_000 {
            let t = step as f64 * dt;
            if step % 10_000 == 0 {
                assert!(
                    (m.p_ref - analytic(t)).abs() <= 1e-8,
                    "t={t}: {} vs {}",
                    m.p_ref,
                    analytic(t)
                );
            }
            // RK4 on the two-state model
            let f = |s: &RollRefModel| s.rates(p_c);
            let mut s2 = m;
            let k1 = f(&m);
            s2.p_ref = m.p_ref + 0.5 * dt * k1.0;
            s2.delta = m.delta + 0.5 * dt * k1.1;
            let k2 = f(&s2);
            s2.p_ref = m.p_ref + 0.5 * dt * k2.0;
            s2.delta = m.delta + 0.5 * dt * k2.1;
            let k3 = f(&s2);
            s2.p_ref = m.p_ref + dt * k3.0;
            s2.delta = m.delta + dt * k3.1;
            let k4 = f(&s2);
            m.p_ref += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            m.delta += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
    }

    #[test]
    fn roll_ref_acceleration_is_rate_derivative() {
        // Finite-difference ṗ_ref along a short trajectory and compare with
        // the closed-form p̈_ref.
        let p_c = 3.0;
        let mut m = RollRefModel::new(-13.2, 20.0);
        m.p_ref = 0.4;
        m.delta = 1.1;
        let h = 1e-6;
        let advance = |m: &RollRefModel, dt: f64| {
            let mut out = *m;
            let (dp, dd) = m.rates(p_c);
            out.p_ref += dt * dp;
            out.delta += dt * dd;
            out
        };
        let plus = advance(&m, h);
        let minus = advance(&m, -h);
        let fd = (plus.rates(p_c).0 - minus.rates(p_c).0) / (2.0 * h);
        let (_, _, ddp) = m.derivatives(p_c).unwrap();
        assert_relative_eq!(fd, ddp, max_relative = 1e-6);
    }

    #[test]
    fn roll_ref_third_derivative_matches_finite_difference() {
        let p_c = 2.0;
        let mut m = RollRefModel::new(-13.2, 20.0);
        m.p_ref = -0.3;
        m.delta = 0.9;
        let h = 1e-6;
        let ddp_at = |m: &RollRefModel| m.derivatives(p_c).unwrap().2;
        let advance = |m: &RollRefModel, dt: f64| {
            let mut out = *m;
            let (dp, dd) = m.rates(p_c);
            out.p_ref += dt * dp;
            out.delta += dt * dd;
            out
        };
        let fd = (ddp_at(&advance(&m, h)) - ddp_at(&advance(&m, -h))) / (2.0 * h);
        assert_relative_eq!(fd, m.third_derivative(p_c), max_relative = 1e-5);
    }

    #[test]
    fn first_order_ref_examples() {
        assert_eq!(first_order_ref_derivative(-13.2, 5.0, 5.0), 0.0);
        assert_relative_eq!(
            first_order_ref_derivative(-13.2, 0.0, 5.0),
            66.0,
            max_relative = 1e-13
        );
        // Equilibrium at p_ref = p_c for any gain.
        for gain in [-20.0, -1.0, 0.5, 4.0] {
            assert_eq!(first_order_ref_derivative(gain, 2.5, 2.5), 0.0);
        }
    }

    #[test]
    fn filter_step_matches_second_order_solution() {
        let zeta: f64 = 0.7;
        let w: f64 = 12.0;
        let y_c = 1.0;
        let mut m = FilterRefModel::new(zeta, w);
        let wd = w * (1.0 - zeta * zeta).sqrt();
        let analytic = |t: f64| {
            1.0 - (-zeta * w * t).exp()
                * ((wd * t).cos() + zeta / (1.0 - zeta * zeta).sqrt() * (wd * t).sin())
        };
        let dt = 1e-5;
        for step in 0..=300_000 {
            let t = step as f64 * dt;
            if step % 20_000 == 0 {
                assert!((m.y_ref - analytic(t)).abs() <= 1e-8);
            }
            let f = |m: &FilterRefModel| (m.y_dot_ref, m.acceleration(y_c));
            let mut s = m;
            let k1 = f(&m);
            s.y_ref = m.y_ref + 0.5 * dt * k1.0;
            s.y_dot_ref = m.y_dot_ref + 0.5 * dt * k1.1;
            let k2 = f(&s);
            s.y_ref = m.y_ref + 0.5 * dt * k2.0;
            s.y_dot_ref = m.y_dot_ref + 0.5 * dt * k2.1;
            let k3 = f(&s);
            s.y_ref = m.y_ref + dt * k3.0;
            s.y_dot_ref = m.y_dot_ref + dt * k3.1;
            let k4 = f(&s);
            m.y_ref += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            m.y_dot_ref += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        assert!((m.y_ref - y_c).abs() <= 1e-9, "final value {}", m.y_ref);
    }

    #[test]
    fn gang_single_and_sum() {
        let one = [EffectorContribution {
            effectiveness: 0.8,
            input: 0.5,
            bandwidth: 20.0,
        }];
        assert_relative_eq!(virtual_input_gang(&one).unwrap(), 0.4, max_relative = 1e-15);
        let two = [
            EffectorContribution {
                effectiveness: 1.0,
                input: 0.5,
                bandwidth: 20.0,
            },
            EffectorContribution {
                effectiveness: 1.0,
                input: 0.5,
                bandwidth: 20.0,
            },
        ];
        assert_relative_eq!(virtual_input_gang(&two).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn gang_rejects_mixed_bandwidths() {
        let mixed = [
            EffectorContribution {
                effectiveness: 1.0,
                input: 0.5,
                bandwidth: 20.0,
            },
            EffectorContribution {
                effectiveness: 1.0,
                input: 0.5,
                bandwidth: 10.0,
            },
        ];
        assert!(matches!(
            virtual_input_gang(&mixed),
            Err(RefModelError::MixedBandwidths(_))
        ));
    }

    #[test]
    fn ganged_replica_equals_per_effector_replica() {
        // ẋ = a·x + b₁u₁ + b₂u₂ with shared actuator dynamics, commands held
        // constant: the lumped virtual-input replica must match the
        // per-effector replica trajectory.
        let a = -2.0;
        let (b1, b2) = (0.7, 1.3);
        let w = 15.0;
        let (uc1, uc2) = (0.4, -0.2);
        let dt = 1e-4;

        // per-effector states
        let (mut x1, mut u1, mut u2) = (0.0, 0.0, 0.0);
        // ganged states
        let (mut x2, mut uy) = (0.0, 0.0);
        let uy_cmd = b1 * uc1 + b2 * uc2;

        for _ in 0..20_000 {
            let f1 = |x: f64, u1: f64, u2: f64| {
                (a * x + b1 * u1 + b2 * u2, w * (uc1 - u1), w * (uc2 - u2))
            };
            let k1 = f1(x1, u1, u2);
            let k2 = f1(
                x1 + 0.5 * dt * k1.0,
                u1 + 0.5 * dt * k1.1,
                u2 + 0.5 * dt * k1.2,
            );
            let k3 = f1(
                x1 + 0.5 * dt * k2.0,
                u1 + 0.5 * dt * k2.1,
                u2 + 0.5 * dt * k2.2,
            );
            let k4 = f1(x1 + dt * k3.0, u1 + dt * k3.1, u2 + dt * k3.2);
            x1 += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            u1 += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            u2 += dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);

            let f2 = |x: f64, uy: f64| (a * x + uy, w * (uy_cmd - uy));
            let k1 = f2(x2, uy);
            let k2 = f2(x2 + 0.5 * dt * k1.0, uy + 0.5 * dt * k1.1);
            let k3 = f2(x2 + 0.5 * dt * k2.0, uy + 0.5 * dt * k2.1);
            let k4 = f2(x2 + dt * k3.0, uy + dt * k3.1);
            x2 += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            uy += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);

            let lumped = virtual_input_gang(&[
                EffectorContribution {
                    effectiveness: b1,
                    input: u1,
                    bandwidth: w,
                },
                EffectorContribution {
                    effectiveness: b2,
                    input: u2,
                    bandwidth: w,
                },
            ])
            .unwrap();
            assert!((lumped - uy).abs() <= 1e-9);
            assert!((x1 - x2).abs() <= 1e-9);
        }
    }

    #[test]
    fn physical_model_passes_command_through_at_equilibrium() {
        let plant = Arc::new(RollPlant::default());
        let actuator = FirstOrderActuatorBank::scalar(20.0).unwrap();
        let spec = ErrorDynamicsSpec::siso(&[13.2], 20.0).unwrap();
        let rm = RollRefModel::new(-13.2, 20.0);
        let model = PhysicalRefModel::new(plant, actuator, spec, rm).unwrap();
        // Everything at rest with zero command: replica command must be zero.
        let u_c_ref = model.reference_command(0.0).unwrap();
        assert!(u_c_ref[0].abs() <= 1e-14);
        let stack = model.output_stack(&u_c_ref).unwrap();
        assert_eq!(stack.len(), 3);
        assert!(stack.iter().all(|v| v[0].abs() <= 1e-13));
    }

    /// Two inputs driving one output: enough structure to trip the
    /// partial-output-control rejection.
    struct WidePlant;

    impl PlantModel for WidePlant {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            2
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn relative_degree(&self) -> usize {
            1
        }
        fn state_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, -x[0] + u[0] + 0.5 * u[1])
        }
        fn output(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn output_highest_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            self.state_derivative(x, u)
        }
        fn jacobian_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -1.0)
        }
        fn jacobian_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[1.0, 0.5])
        }
    }

    #[test]
    fn physical_model_rejects_partial_output_control() {
        let actuator = FirstOrderActuatorBank::new(DVector::from_vec(vec![20.0, 20.0])).unwrap();
        let spec = ErrorDynamicsSpec::siso(&[13.2], 20.0).unwrap();
        let rm = RollRefModel::new(-13.2, 20.0);
        assert!(matches!(
            PhysicalRefModel::new(Arc::new(WidePlant), actuator, spec, rm),
            Err(RefModelError::UnsupportedAllocation { .. })
        ));
    }
}
