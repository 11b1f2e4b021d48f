//! Fixed-size dense complex matrices for one- and two-qubit operators.
//!
//! Only the handful of operations the protocol needs are provided. Sizes are
//! const generics so a 2×2 can never be confused with a 4×4 at compile time.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Complex amplitude used throughout the crate.
pub type ComplexScalar = Complex64;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense `N×N` complex matrix in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix<const N: usize>(#[serde(with = "serde_rows")] pub [[Complex64; N]; N]);

pub type Mat2 = CMatrix<2>;
pub type Mat4 = CMatrix<4>;

/// Column vector of length `N`.
pub type CVector<const N: usize> = [Complex64; N];

impl<const N: usize> CMatrix<N> {
    pub fn zeros() -> Self {
        CMatrix([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_rows(rows: [[Complex64; N]; N]) -> Self {
        CMatrix(rows)
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(d: [Complex64; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d[i];
        }
        m
    }

    /// `|v⟩⟨w|`
    pub fn outer(v: &CVector<N>, w: &CVector<N>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = v[i] * w[j].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z *= s);
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `U A U†`
    pub fn conjugate_by(&self, u: &Self) -> Self {
        *u * *self * u.adjoint()
    }

    pub fn apply(&self, v: &CVector<N>) -> CVector<N> {
        let mut out = [ZERO; N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..N).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    /// `⟨v|A|w⟩`
    pub fn sandwich(&self, v: &CVector<N>, w: &CVector<N>) -> Complex64 {
        let aw = self.apply(w);
        (0..N).map(|i| v[i].conj() * aw[i]).sum()
    }

    /// Largest `|A_ij − conj(A_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev = 0.0_f64;
        for i in 0..N {
            for j in i..N {
                dev = dev.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        dev
    }

    /// `(A + A†)/2`
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale_re(0.5)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<const N: usize> Index<(usize, usize)> for CMatrix<N> {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for CMatrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Add for CMatrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for CMatrix<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for CMatrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

/// Tensor product `A ⊗ B`; the left factor indexes the high bit.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    m
}

/// Pauli matrices. `sigma_z` follows the sign used for the meter coupling,
/// `σz = |1⟩⟨1| − |0⟩⟨0|`.
pub mod pauli {
    use super::*;

    pub fn sigma_x() -> Mat2 {
        CMatrix([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn sigma_y() -> Mat2 {
        CMatrix([[ZERO, -I], [I, ZERO]])
    }

    pub fn sigma_z() -> Mat2 {
        CMatrix([[-ONE, ZERO], [ZERO, ONE]])
    }
}

mod serde_rows {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        m: &[[Complex64; N]; N],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m
            .iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[[Complex64; N]; N], D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        if rows.len() != N || rows.iter().any(|r| r.len() != N) {
            return Err(serde::de::Error::custom(format!("expected {N}x{N} matrix")));
        }
        let mut out = [[Complex64::new(0.0, 0.0); N]; N];
        for (i, r) in rows.iter().enumerate() {
            for (j, z) in r.iter().enumerate() {
                out[i][j] = Complex64::new(z[0], z[1]);
            }
        }
        Ok(out)
    }
}
