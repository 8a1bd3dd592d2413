//! Polynomials with complex coefficients, ascending powers of z.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Polynomial in z with complex coefficients, `coeffs[k]` the coefficient of
/// z^k. The zero polynomial is an empty coefficient list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub coeffs: Vec<C64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn from_coeffs(coeffs: Vec<C64>) -> Self {
        Self { coeffs }
    }

    /// Monomial c z^k.
    pub fn monomial(c: C64, k: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); k + 1];
        coeffs[k] = c;
        Self { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Degree as the highest stored index (nominal degree); None for the
    /// zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs
            .iter()
            .rposition(|c| c.norm() != 0.0)
    }

    /// Coefficient of z^k, zero beyond the stored range. Negative k gives 0.
    pub fn coeff(&self, k: i64) -> C64 {
        if k < 0 || k as usize >= self.coeffs.len() {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[k as usize]
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial::from_coeffs(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, &c)| c * ((k + 1) as f64))
                .collect(),
        )
    }

    pub fn scale(&self, s: C64) -> Polynomial {
        Polynomial::from_coeffs(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.coeff(k as i64) + other.coeff(k as i64);
        }
        Polynomial::from_coeffs(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::from_coeffs(out)
    }

    /// Synthetic division by (z - root): returns (quotient, remainder).
    pub fn divide_by_linear(&self, root: C64) -> (Polynomial, C64) {
        if self.coeffs.is_empty() {
            return (Polynomial::zero(), C64::new(0.0, 0.0));
        }
        let n = self.coeffs.len();
        let mut q = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut carry = C64::new(0.0, 0.0);
        for k in (0..n).rev() {
            let val = self.coeffs[k] + carry * root;
            if k == 0 {
                return (Polynomial::from_coeffs(q), val);
            }
            q[k - 1] = val;
            carry = val;
        }
        unreachable!()
    }

    /// Reciprocal polynomial in the degree-n frame: z^n p(1/z).
    ///
    /// Requires deg p <= n.
    pub fn reciprocal(&self, n: usize) -> Result<Polynomial> {
        if let Some(d) = self.degree() {
            if d > n {
                return Err(Error::Range(format!(
                    "reciprocal: polynomial degree {d} exceeds frame degree {n}"
                )));
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); n + 1];
        for (l, v) in out.iter_mut().enumerate() {
            // coefficient of z^(n-l) comes from coeffs[l]
            *v = self.coeff((n - l) as i64);
        }
        Ok(Polynomial::from_coeffs(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reciprocal_examples() {
        // z^2 in frame 2 -> 1
        let p = Polynomial::monomial(c(1.0, 0.0), 2);
        let r = p.reciprocal(2).unwrap();
        assert_eq!(r.coeff(0), c(1.0, 0.0));
        assert_eq!(r.degree(), Some(0));
        // 1 + 2z in frame 3 -> z^3 + 2z^2
        let p = Polynomial::from_coeffs(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let r = p.reciprocal(3).unwrap();
        assert_eq!(r.coeff(3), c(1.0, 0.0));
        assert_eq!(r.coeff(2), c(2.0, 0.0));
        assert_eq!(r.coeff(1), c(0.0, 0.0));
    }

    #[test]
    fn reciprocal_shape_error() {
        let p = Polynomial::monomial(c(1.0, 0.0), 3);
        assert!(p.reciprocal(2).is_err());
    }

    #[test]
    fn divide_by_linear_exact() {
        // (z - 2)(z^2 + 3z + 1)
        let q_true = Polynomial::from_coeffs(vec![c(1.0, 0.0), c(3.0, 0.0), c(1.0, 0.0)]);
        let p = q_true.mul(&Polynomial::from_coeffs(vec![c(-2.0, 0.0), c(1.0, 0.0)]));
        let (q, rem) = p.divide_by_linear(c(2.0, 0.0));
        assert!(rem.norm() < 1e-14);
        for k in 0..3 {
            assert!((q.coeff(k) - q_true.coeff(k)).norm() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn reciprocal_is_an_involution(coeffs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8)) {
            let p = Polynomial::from_coeffs(coeffs.iter().map(|&(re, im)| c(re, im)).collect());
            let n = p.coeffs.len() - 1;
            let r = p.reciprocal(n).unwrap().reciprocal(n).unwrap();
            for k in 0..=n {
                prop_assert!((r.coeff(k as i64) - p.coeff(k as i64)).norm() < 1e-12);
            }
        }

        #[test]
        fn eval_consistent_with_horner(coeffs in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
                                       zre in -1.5f64..1.5, zim in -1.5f64..1.5) {
            let p = Polynomial::from_coeffs(coeffs.iter().map(|&(re, im)| c(re, im)).collect());
            let z = c(zre, zim);
            let direct: C64 = p.coeffs.iter().enumerate()
                .map(|(k, &a)| a * z.powu(k as u32))
                .sum();
            prop_assert!((p.eval(z) - direct).norm() < 1e-10);
        }
    }
}
