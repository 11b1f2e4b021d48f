//! Validated density operators, POVMs, Kraus channels and the two-qubit
//! reductions used by the protocol (partial trace, postselection).
//!
//! The two-qubit ordering is system ⊗ meter: the system occupies the
//! leftmost tensor slot, so basis index `2·s + m` labels system level `s`
//! and meter level `m`.

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{HermitianEigen, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::matrix::{kron, pauli, CMatrix, CVector, Mat2, Mat4, ONE, ZERO};

/// Tolerance on Hermiticity, unit trace and positivity of every state.
pub const STATE_TOLERANCE: f64 = 1e-12;

/// Density operator satisfying Hermiticity, unit trace and PSD.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityMatrix<const N: usize>(CMatrix<N>);

pub type QubitState = DensityMatrix<2>;
pub type TwoQubitState = DensityMatrix<4>;

impl<const N: usize> DensityMatrix<N>
where
    CMatrix<N>: HermitianEigen<N>,
{
    pub fn new(m: CMatrix<N>) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let herm = m.hermitian_deviation();
        if herm > STATE_TOLERANCE {
            return Err(Error::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > STATE_TOLERANCE {
            return Err(Error::InvalidTrace(tr.re));
        }
        let m = m.hermitian_part();
        let min = m.eigh().min_eigenvalue();
        if min < -STATE_TOLERANCE {
            return Err(Error::NotPositive(min));
        }
        Ok(DensityMatrix(m))
    }

    /// `|ψ⟩⟨ψ|` for a normalized `ψ`.
    pub fn pure(psi: &CVector<N>) -> Result<Self> {
        check_normalized(psi)?;
        Self::new(CMatrix::outer(psi, psi))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(CMatrix::identity().scale_re(1.0 / N as f64))
    }

    pub fn matrix(&self) -> &CMatrix<N> {
        &self.0
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// `ρ = Σ p_n |n⟩⟨n|` with eigenvalues sorted descending.
    pub fn spectral_decompose(&self) -> SpectralDecomposition<N> {
        self.0.eigh()
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// Unitary evolution `U ρ U†`.
    pub fn evolve(&self, u: &CMatrix<N>) -> Result<Self> {
        Self::new(self.0.conjugate_by(u))
    }
}

pub(crate) fn check_normalized<const N: usize>(psi: &CVector<N>) -> Result<()> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > STATE_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

/// Spectral decomposition of a validated state.
pub fn spectral_decompose<const N: usize>(rho: &DensityMatrix<N>) -> SpectralDecomposition<N>
where
    CMatrix<N>: HermitianEigen<N>,
{
    rho.spectral_decompose()
}

/// `ρ_s ⊗ ρ_m`
pub fn product_state(system: &QubitState, meter: &QubitState) -> TwoQubitState {
    // the tensor product of two valid states is valid
    DensityMatrix(kron(system.matrix(), meter.matrix()))
}

/// Trace out the system (left) factor, leaving the meter.
pub fn partial_trace_system(joint: &TwoQubitState) -> Result<QubitState> {
    let j = joint.matrix();
    let mut m = Mat2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            m[(a, b)] = j[(a, b)] + j[(2 + a, 2 + b)];
        }
    }
    QubitState::new(m)
}

/// Unnormalized meter operator `(⟨ψ_f| ⊗ I) J (|ψ_f⟩ ⊗ I)`.
pub fn project_system(joint: &Mat4, psi_f: &CVector<2>) -> Mat2 {
    let mut m = Mat2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = ZERO;
            for k in 0..2 {
                for l in 0..2 {
                    acc += psi_f[k].conj() * joint[(2 * k + a, 2 * l + b)] * psi_f[l];
                }
            }
            m[(a, b)] = acc;
        }
    }
    m
}

/// Below this success probability the conditional state is undefined.
pub const POSTSELECTION_THRESHOLD: f64 = 1e-12;

/// Postselect the system onto `|ψ_f⟩`; returns the normalized meter and the
/// success probability `q`.
pub fn postselect_system(joint: &TwoQubitState, psi_f: &CVector<2>) -> Result<(QubitState, f64)> {
    check_normalized(psi_f)?;
    let un = project_system(joint.matrix(), psi_f);
    let q = un.trace().re;
    if q < POSTSELECTION_THRESHOLD {
        return Err(Error::UndefinedConditionalState(q));
    }
    // validate before normalizing: dividing by a small q inflates round-off
    let herm = un.hermitian_deviation();
    if herm > STATE_TOLERANCE {
        return Err(Error::NotHermitian(herm));
    }
    let un = un.hermitian_part();
    let min = un.eigh().min_eigenvalue();
    if min < -STATE_TOLERANCE {
        return Err(Error::NotPositive(min));
    }
    let rho = un.scale_re(1.0 / q);
    let spec = rho.eigh();
    if spec.min_eigenvalue() >= 0.0 {
        return Ok((DensityMatrix(rho), q.min(1.0)));
    }
    // the operator passed validation, so the negative part is inflated
    // round-off of size at most STATE_TOLERANCE / q: clip it
    let clipped = SpectralDecomposition {
        eigenvalues: spec.eigenvalues.map(|p| p.max(0.0)),
        eigenvectors: spec.eigenvectors,
    };
    let total: f64 = clipped.eigenvalues.iter().sum();
    Ok((DensityMatrix(clipped.reconstruct().scale_re(1.0 / total).hermitian_part()), q.min(1.0)))
}

/// Single POVM effect on a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PovmElement(Mat2);

impl PovmElement {
    pub fn new(m: Mat2) -> Result<Self> {
        let herm = m.hermitian_deviation();
        if herm > STATE_TOLERANCE {
            return Err(Error::NotHermitian(herm));
        }
        let m = m.hermitian_part();
        let min = m.eigh().min_eigenvalue();
        if min < -STATE_TOLERANCE {
            return Err(Error::NotPositive(min));
        }
        Ok(PovmElement(m))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }
}

/// Complete qubit POVM: effects summing to the identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Povm {
    elements: Vec<PovmElement>,
}

impl Povm {
    pub fn new(elements: Vec<PovmElement>) -> Result<Self> {
        let sum = elements
            .iter()
            .fold(Mat2::zeros(), |acc, e| acc + *e.matrix());
        let dev = sum.max_abs_diff(&Mat2::identity());
        if elements.is_empty() || dev > STATE_TOLERANCE {
            return Err(Error::IncompletePovm(dev));
        }
        Ok(Povm { elements })
    }

    /// Projective measurement onto an orthonormal basis.
    pub fn projective(basis: &[CVector<2>; 2]) -> Result<Self> {
        let elems = basis
            .iter()
            .map(|v| {
                check_normalized(v)?;
                PovmElement::new(CMatrix::outer(v, v))
            })
            .collect::<Result<Vec<_>>>()?;
        Povm::new(elems)
    }

    /// Sharp measurement along the equatorial axis `cos φ σx + sin φ σy`.
    /// Outcome 0 is the +1 eigenvalue.
    pub fn equatorial(phi: f64) -> Self {
        let axis = pauli::sigma_x().scale_re(phi.cos()) + pauli::sigma_y().scale_re(phi.sin());
        let plus = (Mat2::identity() + axis).scale_re(0.5);
        let minus = (Mat2::identity() - axis).scale_re(0.5);
        Povm {
            elements: vec![PovmElement(plus), PovmElement(minus)],
        }
    }

    pub fn sigma_x() -> Self {
        Self::equatorial(0.0)
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Born rule `p(k) = Tr[ρ Π_k]`.
    pub fn probabilities(&self, rho: &QubitState) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| (*rho.matrix() * e.0).trace().re.max(0.0))
            .collect()
    }
}

/// Completely positive trace-preserving qubit map `ρ ↦ Σ K ρ K†`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    operators: Vec<Mat2>,
}

impl KrausChannel {
    pub fn new(operators: Vec<Mat2>) -> Result<Self> {
        let sum = operators
            .iter()
            .fold(Mat2::zeros(), |acc, k| acc + k.adjoint() * *k);
        let dev = sum.max_abs_diff(&Mat2::identity());
        if operators.is_empty() || dev > STATE_TOLERANCE {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(KrausChannel { operators })
    }

    /// Phase damping that multiplies the coherences by `attenuation ∈ [0, 1]`:
    /// `K₀ = √((1+a)/2)·I`, `K₁ = √((1−a)/2)·σz`.
    pub fn dephasing(attenuation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&attenuation) {
            return Err(Error::Domain(format!(
                "attenuation {attenuation} outside [0, 1]"
            )));
        }
        let k0 = Mat2::identity().scale_re(((1.0 + attenuation) / 2.0).sqrt());
        let k1 = pauli::sigma_z().scale_re(((1.0 - attenuation) / 2.0).sqrt());
        KrausChannel::new(vec![k0, k1])
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    pub fn apply(&self, rho: &QubitState) -> Result<QubitState> {
        let out = self
            .operators
            .iter()
            .fold(Mat2::zeros(), |acc, k| acc + rho.matrix().conjugate_by(k));
        QubitState::new(out)
    }
}

/// `(|0⟩ + e^{iφ}|1⟩)/√2`
pub fn equatorial_ket(phi: f64) -> CVector<2> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(s, 0.0), Complex64::from_polar(s, phi)]
}
