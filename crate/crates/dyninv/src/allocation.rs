//! Linear control allocation: solving `A·u_c = b` for the effectiveness
//! matrix `A = F_u·Ω_B`.
//!
//! The concrete allocation function is the minimum-norm (Moore–Penrose)
//! solution, which coincides with the plain inverse for square full-rank
//! systems. Rank decisions use singular values with a relative threshold.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff: σ counts toward the rank iff
/// σ > RANK_RTOL·σ_max.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("effectiveness matrix is rank deficient: rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("no exact solution: least-squares residual {residual:.3e} exceeds tolerance")]
    NoSolution { rank: usize, residual: f64 },
    #[error("dimension mismatch: matrix is {rows}×{cols}, vector has {len} entries")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("singular value decomposition failed to converge")]
    SvdFailure,
}

/// One allocation problem `A·u_c = b` with `A = F_u·Ω_B`.
#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub effectiveness: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Solution together with the numerical rank used to produce it.
#[derive(Debug, Clone)]
pub struct AllocationSolution {
    pub command: DVector<f64>,
    pub rank: usize,
    pub residual: f64,
}

impl AllocationProblem {
    pub fn new(effectiveness: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        Self { effectiveness, rhs }
    }

    pub fn solve(&self) -> Result<AllocationSolution, AllocationError> {
        let (rows, cols) = self.effectiveness.shape();
        if self.rhs.len() != rows {
            return Err(AllocationError::DimensionMismatch {
                rows,
                cols,
                len: self.rhs.len(),
            });
        }
        let (pinv, rank) = pseudo_inverse(&self.effectiveness)?;
        let command = &pinv * &self.rhs;
        let residual = (&self.effectiveness * &command - &self.rhs).norm();
        let tol = 1e-10 * self.rhs.norm().max(1.0);
        if residual > tol {
            return Err(AllocationError::NoSolution { rank, residual });
        }
        Ok(AllocationSolution {
            command,
            rank,
            residual,
        })
    }
}

fn pseudo_inverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize), AllocationError> {
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(AllocationError::SvdFailure)?;
    let sigma_max = svd.singular_values.max();
    let cutoff = RANK_RTOL * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();

    let u = svd.u.as_ref().ok_or(AllocationError::SvdFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(AllocationError::SvdFailure)?;
    let mut sigma_inv = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    Ok((v_t.transpose() * sigma_inv * u.transpose(), rank))
}

/// Minimum-Frobenius-norm right inverse `A†` of a full-row-rank matrix,
/// satisfying `A·A† = I`.
pub fn right_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, AllocationError> {
    let (pinv, rank) = pseudo_inverse(a)?;
    if rank < a.nrows() {
        return Err(AllocationError::RankDeficient {
            rank,
            rows: a.nrows(),
        });
    }
    Ok(pinv)
}

/// Minimum-norm solution of `A·x = b`.
///
/// Rank-deficient systems are accepted as long as they are consistent;
/// inconsistent ones are rejected with the least-squares residual attached.
pub fn allocate(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, AllocationError> {
    AllocationProblem::new(a.clone(), b.clone())
        .solve()
        .map(|s| s.command)
}

/// Incremental allocation: the current input solves the `A·u_c = A·u` part
/// by superposition, so only the remainder is allocated.
pub fn superposition_split(
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    rhs_without_u: &DVector<f64>,
) -> Result<DVector<f64>, AllocationError> {
    Ok(u + allocate(a, rhs_without_u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_right_inverse() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let inv = right_inverse(&a).unwrap();
        assert_relative_eq!(inv[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn wide_right_inverse_is_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let inv = right_inverse(&a).unwrap();
        assert_relative_eq!(inv[(0, 0)], 0.5, max_relative = 1e-14);
        assert_relative_eq!(inv[(1, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn identity_right_inverse() {
        let a = DMatrix::<f64>::identity(3, 3);
        let inv = right_inverse(&a).unwrap();
        assert!((a * inv - DMatrix::identity(3, 3)).norm() <= 1e-12);
    }

    #[test]
    fn rank_deficient_rejected_with_rank() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match right_inverse(&a) {
            Err(AllocationError::RankDeficient { rank, rows }) => {
                assert_eq!(rank, 1);
                assert_eq!(rows, 2);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn allocate_scalar() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DVector::from_element(1, 6.0);
        let x = allocate(&a, &b).unwrap();
        assert_relative_eq!(x[0], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn allocate_min_norm_pair() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_element(1, 1.0);
        let x = allocate(&a, &b).unwrap();
        assert_relative_eq!(x[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(x[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn allocate_roll_effectiveness() {
        // F_u·Ω = 0.25·20 = 5, so a unit of pseudo-control costs 0.2 deflection.
        let a = DMatrix::from_element(1, 1, 0.25 * 20.0);
        let b = DVector::from_element(1, 1.0);
        let x = allocate(&a, &b).unwrap();
        assert_relative_eq!(x[0], 0.2, max_relative = 1e-14);
    }

    #[test]
    fn inconsistent_rank_deficient_carries_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        match allocate(&a, &b) {
            Err(AllocationError::NoSolution { residual, .. }) => assert!(residual > 0.1),
            other => panic!("expected no-solution error, got {other:?}"),
        }
    }

    #[test]
    fn consistent_rank_deficient_allocates() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = allocate(&a, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solution_reports_rank_and_residual() {
        let problem = AllocationProblem::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        );
        let sol = problem.solve().unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.residual <= 1e-12);
        assert_relative_eq!(sol.command[0], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn superposition_holds_current_input_for_zero_rhs() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let u = DVector::from_vec(vec![0.3, -0.1]);
        let rhs = DVector::zeros(1);
        let u_c = superposition_split(&a, &u, &rhs).unwrap();
        assert!((u_c - u).amax() <= 1e-15);
    }

    #[test]
    fn superposition_roll_numbers() {
        let a = DMatrix::from_element(1, 1, 5.0);
        let u = DVector::from_element(1, 0.1);
        let rhs = DVector::from_element(1, 5.0);
        let u_c = superposition_split(&a, &u, &rhs).unwrap();
        assert_relative_eq!(u_c[0], 1.1, max_relative = 1e-14);
    }

    fn random_full_row_rank(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DMatrix<f64> {
        loop {
            let a = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
            let svd = a.clone().svd(false, false);
            let smin: f64 = svd.singular_values.min();
            let smax: f64 = svd.singular_values.max();
            if smin > 1e-3 * smax.max(1e-12) {
                return a;
            }
        }
    }

    #[test]
    fn right_inverse_identity_residual_500_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let m = rng.random_range(1..=5);
            let k = rng.random_range(m..=5);
            let a = random_full_row_rank(&mut rng, m, k);
            let inv = right_inverse(&a).unwrap();
            let residual = (&a * inv - DMatrix::identity(m, m)).norm();
            assert!(residual <= 1e-10, "residual {residual} for {m}x{k}");
        }
    }

    #[test]
    fn allocate_is_min_norm_against_null_space_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let m = rng.random_range(1..=4);
            let k = rng.random_range(m..=5);
            let a = random_full_row_rank(&mut rng, m, k);
            let b = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let x = allocate(&a, &b).unwrap();

            // x + n for any null-space n also solves; it must never be shorter.
            let svd = a.clone().svd(false, true);
            let v_t = svd.v_t.unwrap();
            for _ in 0..5 {
                let raw = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
                // project onto the null space of a
                let n = &raw - v_t.transpose() * (&v_t * &raw);
                if n.norm() < 1e-12 {
                    continue;
                }
                let alt = &x + n;
                assert!((&a * &alt - &b).norm() <= 1e-8 * b.norm().max(1.0));
                assert!(x.norm() <= alt.norm() + 1e-9);
            }
        }
    }

    #[test]
    fn superposition_equals_one_shot_allocation() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..200 {
            let m = rng.random_range(1..=4);
            let k = rng.random_range(m..=5);
            let a = random_full_row_rank(&mut rng, m, k);
            let u = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let rhs = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));

            let split = superposition_split(&a, &u, &rhs).unwrap();
            let one_shot = allocate(&a, &(&rhs + &a * &u)).unwrap();
            // Both satisfy A·u_c = rhs + A·u; they differ only inside the
            // null space, and their images must agree.
            assert!((&a * &split - &a * &one_shot).amax() <= 1e-9);
            if m == k {
                assert!((split - one_shot).amax() <= 1e-9);
            }
        }
    }
}
