//! Desired error-dynamics synthesis and analytic initial-value solutions.
//!
//! The closed-loop error order is the relative degree plus one once the
//! actuator is inverted, so the desired dynamics are specified as a cascade:
//! a system factor `s^r + Σ K_i s^i` times an innermost first-order factor
//! `s + Ω_y` whose bandwidth plays the role of the actuator. Expanding the
//! cascade gives the monic coefficients `k_0 … k_r` of
//! `e⁽ʳ⁺¹⁾ + Σ k_i e⁽ⁱ⁾ = 0`, and the same factored form yields the pseudo
//! control ν that realizes those dynamics.
//!
//! Gains are diagonal per output channel so channels decouple and the scalar
//! initial-value solution below remains valid channel by channel.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ErrorSpecError {
    #[error("gain list must not be empty")]
    EmptyGains,
    #[error("Ω_y must be diagonal")]
    NonDiagonalOmega,
    #[error("Ω_y diagonal entries must be strictly positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("gain {index} has {got} channels, expected {expected}")]
    ChannelMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("derivative stack for {name} has {got} entries, {expected} required")]
    MissingDerivative {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("initial conditions have {got} entries, order {expected} required")]
    InitialConditionCount { expected: usize, got: usize },
    #[error("mode basis is ill-conditioned (estimate {0:.3e} > 1e12)")]
    IllConditioned(f64),
    #[error("eigenvalue extraction failed for the companion matrix")]
    EigenFailure,
}

/// Expand the SISO cascade `(s^r + Σ K_i s^i)(s + ω_y)` into the monic
/// coefficients `k_0 … k_r` of `e⁽ʳ⁺¹⁾ + Σ k_i e⁽ⁱ⁾ = 0`.
pub fn expand_cascade(gains: &[f64], omega_y: f64) -> Result<Vec<f64>, ErrorSpecError> {
    if gains.is_empty() {
        return Err(ErrorSpecError::EmptyGains);
    }
    if !(omega_y > 0.0) {
        return Err(ErrorSpecError::NonPositiveOmega(omega_y));
    }
    let r = gains.len();
    let mut k = vec![0.0; r + 1];
    k[0] = omega_y * gains[0];
    for i in 1..r {
        k[i] = gains[i - 1] + omega_y * gains[i];
    }
    k[r] = gains[r - 1] + omega_y;
    Ok(k)
}

/// Desired error dynamics: diagonal gains `K_0 … K_{r−1}` for the system
/// factor plus the diagonal innermost bandwidth `Ω_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDynamicsSpec {
    system_gains: Vec<DVector<f64>>,
    omega_y: DVector<f64>,
}

impl ErrorDynamicsSpec {
    pub fn new(
        system_gains: Vec<DVector<f64>>,
        omega_y: DVector<f64>,
    ) -> Result<Self, ErrorSpecError> {
        if system_gains.is_empty() {
            return Err(ErrorSpecError::EmptyGains);
        }
        let m = omega_y.len();
        for (index, g) in system_gains.iter().enumerate() {
            if g.len() != m {
                return Err(ErrorSpecError::ChannelMismatch {
                    index,
                    expected: m,
                    got: g.len(),
                });
            }
        }
        for &w in omega_y.iter() {
            if !(w > 0.0) {
                return Err(ErrorSpecError::NonPositiveOmega(w));
            }
        }
        Ok(Self {
            system_gains,
            omega_y,
        })
    }

    /// Single-channel spec.
    pub fn siso(gains: &[f64], omega_y: f64) -> Result<Self, ErrorSpecError> {
        Self::new(
            gains.iter().map(|&g| DVector::from_element(1, g)).collect(),
            DVector::from_element(1, omega_y),
        )
    }

    /// Build from full gain matrices, rejecting anything non-diagonal.
    pub fn from_matrices(
        gains: &[DMatrix<f64>],
        omega_y: &DMatrix<f64>,
    ) -> Result<Self, ErrorSpecError> {
        let diag_of = |m: &DMatrix<f64>| -> Result<DVector<f64>, ErrorSpecError> {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if i != j && m[(i, j)] != 0.0 {
                        return Err(ErrorSpecError::NonDiagonalOmega);
                    }
                }
            }
            Ok(m.diagonal())
        };
        let sys = gains.iter().map(diag_of).collect::<Result<Vec<_>, _>>()?;
        Self::new(sys, diag_of(omega_y)?)
    }

    /// Relative degree `r` of the system factor.
    pub fn relative_degree(&self) -> usize {
        self.system_gains.len()
    }

    pub fn channels(&self) -> usize {
        self.omega_y.len()
    }

    pub fn system_gains(&self) -> &[DVector<f64>] {
        &self.system_gains
    }

    pub fn omega_y(&self) -> &DVector<f64> {
        &self.omega_y
    }

    /// Same spec with the innermost bandwidth replaced by `ω·I`.
    pub fn with_omega_y(&self, omega: f64) -> Result<Self, ErrorSpecError> {
        Self::new(
            self.system_gains.clone(),
            DVector::from_element(self.channels(), omega),
        )
    }

    /// Expanded monic coefficients `k_0 … k_r`, one vector of per-channel
    /// diagonal entries per order.
    #[allow(clippy::needless_range_loop)] // index recurrence over two offsets
    pub fn expanded_coefficients(&self) -> Vec<DVector<f64>> {
        let r = self.relative_degree();
        let m = self.channels();
        let mut k = vec![DVector::zeros(m); r + 1];
        k[0] = self.omega_y.component_mul(&self.system_gains[0]);
        for i in 1..r {
            k[i] = &self.system_gains[i - 1] + self.omega_y.component_mul(&self.system_gains[i]);
        }
        k[r] = &self.system_gains[r - 1] + &self.omega_y;
        k
    }

    /// Expanded coefficients of one channel.
    pub fn expanded_siso(&self, channel: usize) -> Vec<f64> {
        self.expanded_coefficients()
            .iter()
            .map(|k| k[channel])
            .collect()
    }

    /// Pseudo control realizing the cascade dynamics:
    ///
    /// `ν = y_ref⁽ʳ⁺¹⁾ + Σ_{i=1..r} K_{i−1} e⁽ⁱ⁾ + Ω_y (e⁽ʳ⁾ + Σ_{i=0..r−1} K_i e⁽ⁱ⁾)`
    ///
    /// with `e⁽ⁱ⁾ = y_ref⁽ⁱ⁾ − y⁽ⁱ⁾`. Expects `y_ref` to hold orders
    /// `0 ..= r+1` and `y` orders `0 ..= r`.
    #[allow(clippy::needless_range_loop)] // index recurrence over two offsets
    pub fn pseudo_control(
        &self,
        y_ref: &[DVector<f64>],
        y: &[DVector<f64>],
    ) -> Result<DVector<f64>, ErrorSpecError> {
        let r = self.relative_degree();
        if y_ref.len() < r + 2 {
            return Err(ErrorSpecError::MissingDerivative {
                name: "y_ref",
                expected: r + 2,
                got: y_ref.len(),
            });
        }
        if y.len() < r + 1 {
            return Err(ErrorSpecError::MissingDerivative {
                name: "y",
                expected: r + 1,
                got: y.len(),
            });
        }
        let e: Vec<DVector<f64>> = (0..=r).map(|i| &y_ref[i] - &y[i]).collect();

        let mut nu = y_ref[r + 1].clone();
        for i in 1..=r {
            nu += self.system_gains[i - 1].component_mul(&e[i]);
        }
        let mut inner = e[r].clone();
        for i in 0..r {
            inner += self.system_gains[i].component_mul(&e[i]);
        }
        nu += self.omega_y.component_mul(&inner);
        Ok(nu)
    }

    /// The system-factor feedback `e⁽ʳ⁾ + Σ_{i=0..r−1} K_i e⁽ⁱ⁾` used by the
    /// incremental laws. `y[r]` may be a latched measurement.
    pub fn incremental_feedback(
        &self,
        y_ref: &[DVector<f64>],
        y: &[DVector<f64>],
    ) -> Result<DVector<f64>, ErrorSpecError> {
        let r = self.relative_degree();
        if y_ref.len() < r + 1 {
            return Err(ErrorSpecError::MissingDerivative {
                name: "y_ref",
                expected: r + 1,
                got: y_ref.len(),
            });
        }
        if y.len() < r + 1 {
            return Err(ErrorSpecError::MissingDerivative {
                name: "y",
                expected: r + 1,
                got: y.len(),
            });
        }
        let mut fb = &y_ref[r] - &y[r];
        for i in 0..r {
            fb += self.system_gains[i].component_mul(&(&y_ref[i] - &y[i]));
        }
        Ok(fb)
    }

    /// True when every channel's expanded polynomial is Hurwitz.
    pub fn is_hurwitz(&self) -> bool {
        (0..self.channels()).all(|ch| {
            polynomial_roots(&self.expanded_siso(ch))
                .map(|roots| roots.iter().all(|l| l.re < 0.0))
                .unwrap_or(false)
        })
    }
}

/// Roots of the monic polynomial `s^n + c_{n−1} s^{n−1} + … + c_0` given the
/// low-order coefficients `c`, via companion-matrix eigenvalues.
pub fn polynomial_roots(coefficients: &[f64]) -> Result<Vec<Complex<f64>>, ErrorSpecError> {
    let n = coefficients.len();
    if n == 0 {
        return Err(ErrorSpecError::EmptyGains);
    }
    let mut companion = DMatrix::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for (i, &c) in coefficients.iter().enumerate() {
        companion[(i, n - 1)] = -c;
    }
    let eigs = companion.complex_eigenvalues();
    Ok(eigs.iter().copied().collect())
}

/// Roots within this distance are treated as one repeated root.
const ROOT_TIE_TOL: f64 = 1e-9;

/// Condition-number ceiling for the mode-basis solve.
const CONDITION_LIMIT: f64 = 1e12;

/// One exponential mode cluster `Σ_l c_l t^l exp(λ t)`.
#[derive(Debug, Clone)]
struct Mode {
    lambda: Complex<f64>,
    coefficients: Vec<Complex<f64>>,
}

/// Closed-form scalar solution of `e⁽ⁿ⁾ + Σ k_i e⁽ⁱ⁾ = 0`.
///
/// Roots come from the companion matrix; clusters closer than the tie
/// tolerance are merged and carried with the confluent `t^l·exp(λt)` basis,
/// so repeated roots are handled exactly rather than through a nearly
/// singular eigenbasis.
#[derive(Debug, Clone)]
pub struct AnalyticErrorSolution {
    modes: Vec<Mode>,
    roots: Vec<Complex<f64>>,
    hurwitz: bool,
}

impl AnalyticErrorSolution {
    /// Solve for the given spec channel with initial conditions
    /// `e(0), ė(0), …, e⁽ʳ⁾(0)`.
    pub fn from_spec(
        spec: &ErrorDynamicsSpec,
        channel: usize,
        initial: &[f64],
    ) -> Result<Self, ErrorSpecError> {
        Self::from_coefficients(&spec.expanded_siso(channel), initial)
    }

    /// Solve `e⁽ⁿ⁾ + Σ k_i e⁽ⁱ⁾ = 0` for the low-order coefficients `k` and
    /// initial conditions of orders `0 … n−1`.
    pub fn from_coefficients(
        coefficients: &[f64],
        initial: &[f64],
    ) -> Result<Self, ErrorSpecError> {
        let n = coefficients.len();
        if initial.len() != n {
            return Err(ErrorSpecError::InitialConditionCount {
                expected: n,
                got: initial.len(),
            });
        }
        let roots = polynomial_roots(coefficients)?;
        let clusters = cluster_roots(&roots);
        let hurwitz = roots.iter().all(|l| l.re < 0.0);

        // Column layout: for each cluster j with multiplicity m_j, powers
        // l = 0 … m_j−1 of t. Row i imposes e^{(i)}(0).
        let mut columns: Vec<(usize, usize)> = Vec::with_capacity(n);
        for (j, c) in clusters.iter().enumerate() {
            for l in 0..c.multiplicity {
                columns.push((j, l));
            }
        }
        let mut basis = DMatrix::<Complex<f64>>::zeros(n, n);
        for (col, &(j, l)) in columns.iter().enumerate() {
            let lambda = clusters[j].lambda;
            for i in 0..n {
                basis[(i, col)] = basis_derivative_at_zero(i, l, lambda);
            }
        }

        let cond = condition_estimate(&basis)?;
        if cond > CONDITION_LIMIT {
            return Err(ErrorSpecError::IllConditioned(cond));
        }

        let rhs = DVector::from_iterator(n, initial.iter().map(|&v| Complex::new(v, 0.0)));
        let coeffs = basis.lu().solve(&rhs).ok_or(ErrorSpecError::EigenFailure)?;

        let mut modes: Vec<Mode> = clusters
            .iter()
            .map(|c| Mode {
                lambda: c.lambda,
                coefficients: vec![Complex::new(0.0, 0.0); c.multiplicity],
            })
            .collect();
        for (col, &(j, l)) in columns.iter().enumerate() {
            modes[j].coefficients[l] = coeffs[col];
        }

        Ok(Self {
            modes,
            roots,
            hurwitz,
        })
    }

    pub fn roots(&self) -> &[Complex<f64>] {
        &self.roots
    }

    /// False flags a spec whose free response grows; callers surface this as
    /// a warning rather than an error.
    pub fn is_hurwitz(&self) -> bool {
        self.hurwitz
    }

    /// `e(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// `e⁽q⁾(t)` from the mode expansion.
    pub fn derivative(&self, t: f64, order: usize) -> f64 {
        let mut acc = Complex::new(0.0, 0.0);
        for mode in &self.modes {
            let exp = (mode.lambda * t).exp();
            for (l, &c) in mode.coefficients.iter().enumerate() {
                acc += c * derivative_of_power_exp(t, l, mode.lambda, order) * exp;
            }
        }
        acc.re
    }
}

struct RootCluster {
    lambda: Complex<f64>,
    multiplicity: usize,
}

fn cluster_roots(roots: &[Complex<f64>]) -> Vec<RootCluster> {
    let mut clusters: Vec<RootCluster> = Vec::new();
    let mut sorted: Vec<Complex<f64>> = roots.to_vec();
    sorted.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for root in sorted {
        match clusters
            .iter_mut()
            .find(|c| (c.lambda - root).norm() < ROOT_TIE_TOL)
        {
            Some(c) => c.multiplicity += 1,
            None => clusters.push(RootCluster {
                lambda: root,
                multiplicity: 1,
            }),
        }
    }
    clusters
}

/// i-th derivative of `t^l exp(λt)` at `t = 0`: `i!/(i−l)!·λ^{i−l}` for
/// `i ≥ l`, zero otherwise.
fn basis_derivative_at_zero(i: usize, l: usize, lambda: Complex<f64>) -> Complex<f64> {
    if i < l {
        return Complex::new(0.0, 0.0);
    }
    let mut falling = 1.0;
    for q in 0..l {
        falling *= (i - q) as f64;
    }
    lambda.powu((i - l) as u32) * falling
}

/// q-th derivative of `t^l exp(λt)` divided by `exp(λt)`:
/// `Σ_j C(q,j)·l!/(l−j)!·t^{l−j}·λ^{q−j}`.
fn derivative_of_power_exp(t: f64, l: usize, lambda: Complex<f64>, q: usize) -> Complex<f64> {
    let mut acc = Complex::new(0.0, 0.0);
    for j in 0..=q.min(l) {
        let mut binom = 1.0;
        for b in 0..j {
            binom = binom * (q - b) as f64 / (b + 1) as f64;
        }
        let mut falling = 1.0;
        for b in 0..j {
            falling *= (l - b) as f64;
        }
        acc += lambda.powu((q - j) as u32) * binom * falling * t.powi((l - j) as i32);
    }
    acc
}

fn condition_estimate(m: &DMatrix<Complex<f64>>) -> Result<f64, ErrorSpecError> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or(ErrorSpecError::EigenFailure)?;
    Ok(inf_norm(m) * inf_norm(&inv))
}

fn inf_norm(m: &DMatrix<Complex<f64>>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
