//! Small dense complex linear algebra: LU with partial pivoting and a 2x2
//! matrix type used throughout the transformation formulas.
//!
//! The matrices encountered here are tiny (Toeplitz blocks up to ~20x20,
//! block determinants up to ~6x6), so a straightforward O(n^3) factorization
//! in double precision is the right tool.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone)]
pub struct CMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![C64::new(0.0, 0.0); n_rows * n_cols],
        }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Copy of this matrix with column `col` removed.
    pub fn without_column(&self, col: usize) -> CMatrix {
        let mut m = CMatrix::zeros(self.n_rows, self.n_cols - 1);
        for i in 0..self.n_rows {
            let mut jj = 0;
            for j in 0..self.n_cols {
                if j != col {
                    m[(i, jj)] = self[(i, j)];
                    jj += 1;
                }
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// LU factorization with partial pivoting, PA = LU.
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    piv: Vec<usize>,
    sign: f64,
}

/// Factor a square matrix. Does not fail on singular input; `det` then
/// returns 0 and `solve` reports the singularity.
pub fn lu_factor(m: &CMatrix) -> Lu {
    assert_eq!(m.n_rows, m.n_cols, "lu_factor needs a square matrix");
    let n = m.n_rows;
    let mut lu = m.data.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].norm();
        for i in k + 1..n {
            let v = lu[i * n + k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            piv.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[k * n + k];
        if pivot.norm() == 0.0 {
            continue;
        }
        for i in k + 1..n {
            let factor = lu[i * n + k] / pivot;
            lu[i * n + k] = factor;
            for j in k + 1..n {
                let sub = factor * lu[k * n + j];
                lu[i * n + j] -= sub;
            }
        }
    }
    Lu { n, lu, piv, sign }
}

impl Lu {
    pub fn det(&self) -> C64 {
        let mut d = C64::new(self.sign, 0.0);
        for k in 0..self.n {
            d *= self.lu[k * self.n + k];
        }
        d
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<C64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let sub = self.lu[i * n + j] * x[j];
                x[i] -= sub;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let sub = self.lu[i * n + j] * x[j];
                x[i] -= sub;
            }
            let pivot = self.lu[i * n + i];
            if pivot.norm() < 1e-300 {
                return Err(Error::Degeneracy("singular matrix in LU solve".into()));
            }
            x[i] /= pivot;
        }
        Ok(x)
    }
}

/// Determinant by LU.
pub fn det(m: &CMatrix) -> C64 {
    if m.n_rows == 0 {
        return C64::new(1.0, 0.0);
    }
    lu_factor(m).det()
}

/// 2x2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub e: [[C64; 2]; 2],
}

impl Mat2 {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { e: [[a, b], [c, d]] }
    }

    pub fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        Self::new(z, z, z, z)
    }

    pub fn identity() -> Self {
        let o = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        Self::new(o, z, z, o)
    }

    pub fn det(&self) -> C64 {
        self.e[0][0] * self.e[1][1] - self.e[0][1] * self.e[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.e[0][0] + self.e[1][1]
    }

    pub fn inv(&self) -> Result<Mat2> {
        let d = self.det();
        if d.norm() < 1e-300 {
            return Err(Error::Degeneracy("singular 2x2 matrix".into()));
        }
        Ok(Mat2::new(
            self.e[1][1] / d,
            -self.e[0][1] / d,
            -self.e[1][0] / d,
            self.e[0][0] / d,
        ))
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        let mut m = *self;
        for r in &mut m.e {
            for v in r {
                *v *= s;
            }
        }
        m
    }

    /// Max entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.e
            .iter()
            .flatten()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues, sorted by modulus (ascending).
    pub fn eigenvalues(&self) -> [C64; 2] {
        let t = self.trace();
        let d = self.det();
        let disc = (t * t - 4.0 * d).sqrt();
        let l1 = (t + disc) * 0.5;
        let l2 = (t - disc) * 0.5;
        if l1.norm() <= l2.norm() {
            [l1, l2]
        } else {
            [l2, l1]
        }
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.e[0][0] * v[0] + self.e[0][1] * v[1],
            self.e[1][0] * v[0] + self.e[1][1] * v[1],
        ]
    }
}

impl std::ops::Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut m = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                m.e[i][j] = self.e[i][0] * rhs.e[0][j] + self.e[i][1] * rhs.e[1][j];
            }
        }
        m
    }
}

impl std::ops::Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut m = self;
        for i in 0..2 {
            for j in 0..2 {
                m.e[i][j] += rhs.e[i][j];
            }
        }
        m
    }
}

impl std::ops::Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut m = self;
        for i in 0..2 {
            for j in 0..2 {
                m.e[i][j] -= rhs.e[i][j];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn lu_det_matches_cofactor_expansion() {
        let m = CMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 + 1.0, (i as f64) - (j as f64)));
        // cofactor expansion along the first row
        let minor = |r0: usize, c0: usize| {
            let mut vals = Vec::new();
            for i in 0..3 {
                for j in 0..3 {
                    if i != r0 && j != c0 {
                        vals.push(m[(i, j)]);
                    }
                }
            }
            vals[0] * vals[3] - vals[1] * vals[2]
        };
        let expect = m[(0, 0)] * minor(0, 0) - m[(0, 1)] * minor(0, 1) + m[(0, 2)] * minor(0, 2);
        let got = det(&m);
        assert!((got - expect).norm() < 1e-12 * expect.norm().max(1.0));
    }

    #[test]
    fn lu_solve_roundtrip() {
        let m = CMatrix::from_fn(4, 4, |i, j| {
            c(((i + 2 * j) % 5) as f64 + if i == j { 6.0 } else { 0.0 }, (i as f64) * 0.5 - j as f64)
        });
        let x_true: Vec<C64> = (0..4).map(|k| c(k as f64 + 0.5, -(k as f64))).collect();
        let mut b = vec![c(0.0, 0.0); 4];
        for i in 0..4 {
            for j in 0..4 {
                b[i] += m[(i, j)] * x_true[j];
            }
        }
        let x = lu_factor(&m).solve(&b).unwrap();
        for k in 0..4 {
            assert!((x[k] - x_true[k]).norm() < 1e-11);
        }
    }

    #[test]
    fn mat2_inverse() {
        let m = Mat2::new(c(1.0, 2.0), c(0.5, 0.0), c(-1.0, 1.0), c(3.0, -0.5));
        let p = m * m.inv().unwrap();
        assert!((p - Mat2::identity()).norm_max() < 1e-14);
    }

    #[test]
    fn empty_determinant_is_one() {
        assert_eq!(det(&CMatrix::zeros(0, 0)), c(1.0, 0.0));
    }
}
