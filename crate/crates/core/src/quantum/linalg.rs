//! Small dense complex matrices and the scaling-and-squaring exponential.
//!
//! Propagation itself works on sparse operators (see `propagate`); the dense
//! path is used for `build_hamiltonian` and as an independent reference for
//! the sparse exponential action.

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry-wise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `⟨x|M|x⟩`.
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        self.matvec(x)
            .iter()
            .zip(x)
            .map(|(mx, xi)| xi.conj() * mx)
            .sum()
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    fn solve(&self, rhs: &Self) -> Self {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
                .expect("non-empty range");
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                    b.swap(col * n + k, pivot * n + k);
                }
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                if f == ZERO {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= f * v;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[row * n + k] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[col * n + col];
            for k in 0..n {
                b[col * n + k] /= d;
            }
            for row in 0..col {
                let f = a[row * n + col];
                if f == ZERO {
                    continue;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[row * n + k] -= f * v;
                }
            }
        }
        Self { n, data: b }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `exp(A)` by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &DenseMatrix) -> DenseMatrix {
    let n = a.dim();
    let norm = a.norm1();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = a.scale(Complex64::new(0.5f64.powi(squarings as i32), 0.0));
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let ident = DenseMatrix::identity(n);
    let a2 = a.mul(&a);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);

    let u_inner = a6
        .scale(b(13))
        .add(&a4.scale(b(11)))
        .add(&a2.scale(b(9)));
    let u = a.mul(
        &a6.mul(&u_inner)
            .add(&a6.scale(b(7)))
            .add(&a4.scale(b(5)))
            .add(&a2.scale(b(3)))
            .add(&ident.scale(b(1))),
    );
    let v_inner = a6
        .scale(b(12))
        .add(&a4.scale(b(10)))
        .add(&a2.scale(b(8)));
    let v = a6
        .mul(&v_inner)
        .add(&a6.scale(b(6)))
        .add(&a4.scale(b(4)))
        .add(&a2.scale(b(2)))
        .add(&ident.scale(b(0)));

    let mut r = v.sub(&u).solve(&v.add(&u));
    for _ in 0..squarings {
        r = r.mul(&r);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_of_pauli_x() {
        // exp(−iθσx) = cos θ I − i sin θ σx
        let theta = 2.7;
        let mut a = DenseMatrix::zeros(2);
        a[(0, 1)] = Complex64::new(0.0, -theta);
        a[(1, 0)] = Complex64::new(0.0, -theta);
        let u = expm(&a);
        assert!((u[(0, 0)] - Complex64::new(theta.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - Complex64::new(0.0, -theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn exponential_of_diagonal_with_squaring() {
        let mut a = DenseMatrix::zeros(3);
        let d = [Complex64::new(0.0, 40.0), Complex64::new(-3.0, 1.0), Complex64::new(0.5, -25.0)];
        for (i, x) in d.iter().enumerate() {
            a[(i, i)] = *x;
        }
        let u = expm(&a);
        for (i, x) in d.iter().enumerate() {
            assert!((u[(i, i)] - x.exp()).norm() < 1e-11 * x.exp().norm().max(1.0));
        }
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn nilpotent_exponential() {
        let mut a = DenseMatrix::zeros(2);
        a[(0, 1)] = Complex64::new(3.0, 0.0);
        let u = expm(&a);
        assert!((u[(0, 1)] - Complex64::new(3.0, 0.0)).norm() < 1e-14);
        assert!((u[(0, 0)] - ONE).norm() < 1e-14);
    }
}
