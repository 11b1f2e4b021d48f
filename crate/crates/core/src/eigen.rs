//! Hermitian eigensolvers: closed form at dimension 2, cyclic Jacobi otherwise.

use num_complex::Complex64;

use crate::matrix::{CMatrix, CVector, ONE, ZERO};

/// Eigen-decomposition `A = Σ p_n |n⟩⟨n|`, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<const N: usize> {
    pub eigenvalues: [f64; N],
    pub eigenvectors: [CVector<N>; N],
}

impl<const N: usize> SpectralDecomposition<N> {
    pub fn reconstruct(&self) -> CMatrix<N> {
        let mut m = CMatrix::<N>::zeros();
        for (p, v) in self.eigenvalues.iter().zip(self.eigenvectors.iter()) {
            m = m + CMatrix::outer(v, v).scale_re(*p);
        }
        m
    }

    /// Largest `|⟨m|n⟩ − δ_mn|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut err = 0.0_f64;
        for (a, va) in self.eigenvectors.iter().enumerate() {
            for (b, vb) in self.eigenvectors.iter().enumerate() {
                let ip: Complex64 = va.iter().zip(vb).map(|(x, y)| x.conj() * y).sum();
                let target = if a == b { ONE } else { ZERO };
                err = err.max((ip - target).norm());
            }
        }
        err
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[N - 1]
    }

    fn sorted(mut pairs: Vec<(f64, CVector<N>)>) -> Self {
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let eigenvalues = std::array::from_fn(|i| pairs[i].0);
        let eigenvectors = std::array::from_fn(|i| pairs[i].1);
        SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix. Only the upper triangle is read
/// by the 2×2 path, so callers must check Hermiticity first.
pub trait HermitianEigen<const N: usize> {
    fn eigh(&self) -> SpectralDecomposition<N>;
}

impl HermitianEigen<2> for CMatrix<2> {
    fn eigh(&self) -> SpectralDecomposition<2> {
        eigh_2x2(self)
    }
}

impl HermitianEigen<4> for CMatrix<4> {
    fn eigh(&self) -> SpectralDecomposition<4> {
        eigh_jacobi(self)
    }
}

fn normalize<const N: usize>(v: CVector<N>) -> CVector<N> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.map(|z| z / n)
}

/// Closed-form 2×2 solve, `λ± = (a+d)/2 ± √(((a−d)/2)² + |b|²)`.
pub fn eigh_2x2(m: &CMatrix<2>) -> SpectralDecomposition<2> {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let h = 0.5 * (a - d);
    let r = h.hypot(b.norm());
    let mean = 0.5 * (a + d);
    let (lp, lm) = (mean + r, mean - r);

    let scale = a.abs().max(d.abs()).max(b.norm());
    if b.norm() <= f64::MIN_POSITIVE.max(1e-300 * scale) {
        let e0 = [ONE, ZERO];
        let e1 = [ZERO, ONE];
        return SpectralDecomposition::sorted(vec![(a, e0), (d, e1)]);
    }
    // pick the row of (A − λ₊) that avoids cancellation
    let vp = if h >= 0.0 {
        normalize([Complex64::new(h + r, 0.0), b.conj()])
    } else {
        normalize([b, Complex64::new(r - h, 0.0)])
    };
    let vm = [-vp[1].conj(), vp[0].conj()];
    SpectralDecomposition::sorted(vec![(lp, vp), (lm, vm)])
}

/// Cyclic complex Jacobi iteration for a Hermitian `N×N` matrix.
pub fn eigh_jacobi<const N: usize>(m: &CMatrix<N>) -> SpectralDecomposition<N> {
    let mut a = m.hermitian_part();
    let mut v = CMatrix::<N>::identity();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let off: f64 = (0..N)
            .flat_map(|i| (i + 1..N).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 * scale {
                    continue;
                }
                let phase = apq / mag;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + theta.hypot(1.0))
                };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                let mut rot = CMatrix::<N>::identity();
                rot[(p, p)] = Complex64::new(c, 0.0);
                rot[(q, q)] = Complex64::new(c, 0.0);
                rot[(p, q)] = phase * s;
                rot[(q, p)] = -phase.conj() * s;
                a = rot.adjoint() * a * rot;
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                v = v * rot;
            }
        }
    }

    let pairs = (0..N)
        .map(|k| (a[(k, k)].re, std::array::from_fn(|i| v[(i, k)])))
        .collect();
    SpectralDecomposition::sorted(pairs)
}
