//! Classical and quantum Fisher information.
//!
//! `H = 2 Σ_{n,m} |⟨m|∂ρ|n⟩|² / (p_n + p_m)` over the eigenbasis of `ρ`, and
//! `F = Σ_k (∂p_k)² / p_k` for a fixed measurement.

use crate::eigen::HermitianEigen;
use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::state::DensityMatrix;

/// Pairs with `p_n + p_m` below this are dropped from the QFI sum.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Outcomes with probability below this are dropped from the classical sum.
pub const POSITIVITY_THRESHOLD: f64 = 1e-12;

/// Tolerance on outcome probabilities summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Hermiticity tolerance for a state derivative, relative to `max(1, |∂ρ|)`.
pub const DERIVATIVE_HERMITIAN_TOLERANCE: f64 = 1e-9;

/// Default finite-difference step `1e-5 · max(1, |δB|)`.
pub fn default_step(delta_b: f64) -> f64 {
    1e-5 * delta_b.abs().max(1.0)
}

/// Quantum Fisher information of `ρ` given its parameter derivative.
pub fn qfi_spectral<const N: usize>(rho: &DensityMatrix<N>, drho: &CMatrix<N>) -> Result<f64>
where
    CMatrix<N>: HermitianEigen<N>,
{
    let dev = drho.hermitian_deviation();
    if dev > DERIVATIVE_HERMITIAN_TOLERANCE * drho.max_abs().max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    let spec = rho.spectral_decompose();
    let mut h = 0.0;
    for (n, vn) in spec.eigenvectors.iter().enumerate() {
        for (m, vm) in spec.eigenvectors.iter().enumerate() {
            let denom = spec.eigenvalues[n] + spec.eigenvalues[m];
            if denom < DEGENERACY_THRESHOLD {
                continue;
            }
            h += 2.0 * drho.sandwich(vm, vn).norm_sqr() / denom;
        }
    }
    Ok(h.max(0.0))
}

/// Symmetric logarithmic derivative `L` with `∂ρ = (Lρ + ρL)/2`, restricted
/// to the support of `ρ`. Its eigenbasis is a measurement attaining the QFI.
pub fn symmetric_log_derivative<const N: usize>(
    rho: &DensityMatrix<N>,
    drho: &CMatrix<N>,
) -> CMatrix<N>
where
    CMatrix<N>: HermitianEigen<N>,
{
    let spec = rho.spectral_decompose();
    let mut l = CMatrix::<N>::zeros();
    for (n, vn) in spec.eigenvectors.iter().enumerate() {
        for (m, vm) in spec.eigenvectors.iter().enumerate() {
            let denom = spec.eigenvalues[n] + spec.eigenvalues[m];
            if denom < DEGENERACY_THRESHOLD {
                continue;
            }
            let coeff = drho.sandwich(vm, vn) * (2.0 / denom);
            l = l + CMatrix::outer(vm, vn).scale(coeff);
        }
    }
    l.hermitian_part()
}

/// Central difference of a matrix-valued family, Richardson-extrapolated from
/// steps `h` and `h/2`. The result is symmetrized since the exact derivative
/// of a Hermitian family is Hermitian.
pub fn matrix_derivative<const N: usize, F>(family: F, x: f64, h: f64) -> Result<CMatrix<N>>
where
    F: Fn(f64) -> Result<CMatrix<N>>,
{
    let (coarse, fine) = matrix_central_pair(&family, x, h)?;
    Ok((fine.scale_re(4.0) - coarse).scale_re(1.0 / 3.0))
}

/// Central differences at steps `h` and `h/2`.
pub fn matrix_central_pair<const N: usize, F>(family: &F, x: f64, h: f64) -> Result<(CMatrix<N>, CMatrix<N>)>
where
    F: Fn(f64) -> Result<CMatrix<N>>,
{
    let central = |step: f64| -> Result<CMatrix<N>> {
        let d = (family(x + step)? - family(x - step)?).scale_re(1.0 / (2.0 * step));
        Ok(d.hermitian_part())
    };
    Ok((central(h)?, central(0.5 * h)?))
}

/// Richardson-extrapolated central difference of a scalar function.
pub fn scalar_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let c = |s: f64| (f(x + s) - f(x - s)) / (2.0 * s);
    (4.0 * c(0.5 * h) - c(h)) / 3.0
}

/// Classical Fisher information of an outcome distribution family at `delta_b`.
pub fn classical_fisher<F>(family: F, delta_b: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let p = family(delta_b)?;
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::ProbabilityNormalization(total));
    }
    let evals = [-step, step, -0.5 * step, 0.5 * step]
        .iter()
        .map(|s| family(delta_b + s))
        .collect::<Result<Vec<_>>>()?;
    if evals.iter().any(|e| e.len() != p.len()) {
        return Err(Error::Domain("outcome count changed across the family".into()));
    }
    let mut f = 0.0;
    for k in 0..p.len() {
        if p[k] < POSITIVITY_THRESHOLD {
            continue;
        }
        let coarse = (evals[1][k] - evals[0][k]) / (2.0 * step);
        let fine = (evals[3][k] - evals[2][k]) / step;
        let dp = (4.0 * fine - coarse) / 3.0;
        f += dp * dp / p[k];
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Mat2, ZERO};
    use crate::state::{Povm, QubitState};
    use num_complex::Complex64;

    fn direct_state(delta_b: f64, t: f64, xi: f64) -> QubitState {
        let c = Complex64::new(0.0, -0.5) * Complex64::from_polar(xi, -delta_b * t);
        QubitState::new(Mat2::from_rows([
            [Complex64::new(0.5, 0.0), c],
            [c.conj(), Complex64::new(0.5, 0.0)],
        ]))
        .unwrap()
    }

    #[test]
    fn zero_derivative_has_zero_qfi() {
        let rho = direct_state(0.3, 1.0, 0.7);
        assert_eq!(qfi_spectral(&rho, &Mat2::zeros()).unwrap(), 0.0);
    }

    #[test]
    fn analytic_direct_derivative_gives_xi_squared_t_squared() {
        let (t, xi, db) = (1.7, 0.6, 0.4);
        let rho = direct_state(db, t, xi);
        // ∂ρ₁₂ = −i t ρ₁₂
        let d12 = rho.element(0, 1) * Complex64::new(0.0, -t);
        let drho = Mat2::from_rows([[ZERO, d12], [d12.conj(), ZERO]]);
        let h = qfi_spectral(&rho, &drho).unwrap();
        assert!((h - xi * xi * t * t).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_derivative_rejected() {
        let rho = direct_state(0.0, 1.0, 0.5);
        let mut d = Mat2::zeros();
        d[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(qfi_spectral(&rho, &d), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn sigma_x_fisher_at_optimal_and_pessimal_angles() {
        let (t, xi) = (1.3, 0.8);
        let povm = Povm::sigma_x();
        let fam = |db: f64| Ok(povm.probabilities(&direct_state(db, t, xi)));
        let f0 = classical_fisher(fam, 0.0, default_step(0.0)).unwrap();
        assert!((f0 - t * t * xi * xi).abs() < 1e-9);
        let pess = std::f64::consts::FRAC_PI_2 / t;
        let f1 = classical_fisher(fam, pess, default_step(pess)).unwrap();
        assert!(f1.abs() < 1e-9);
    }

    #[test]
    fn unnormalized_family_rejected() {
        let r = classical_fisher(|_| Ok(vec![0.5, 0.6]), 0.0, 1e-5);
        assert!(matches!(r, Err(Error::ProbabilityNormalization(_))));
        assert!(classical_fisher(|_| Ok(vec![1.0]), 0.0, 0.0).is_err());
    }

    #[test]
    fn sld_measurement_attains_qfi() {
        let (t, xi, db) = (1.0, 0.7, 0.25);
        let rho = direct_state(db, t, xi);
        let drho = matrix_derivative(|x| Ok(*direct_state(x, t, xi).matrix()), db, 1e-5).unwrap();
        let l = symmetric_log_derivative(&rho, &drho);
        let basis = crate::eigen::eigh_2x2(&l).eigenvectors;
        let povm = Povm::projective(&basis).unwrap();
        let f = classical_fisher(|x| Ok(povm.probabilities(&direct_state(x, t, xi))), db, 1e-5).unwrap();
        assert!((f - xi * xi * t * t).abs() < 1e-8);
    }
}
