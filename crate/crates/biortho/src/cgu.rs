//! Rational modifications of the weight and the induced transformations of
//! the bi-orthogonal system: the four elementary matrix generators, the
//! block-determinant formulas for a general rational modification, and the
//! compatibility residuals with the recurrence and the spectral derivative.

use num_complex::Complex64 as C64;

use crate::bops::{region_of, BopsSystem};
use crate::error::{Error, Result};
use crate::linalg::{det, CMatrix, Mat2};
use crate::poly::Polynomial;
use crate::semiclassical::{residue_set, SemiClassicalData};

/// A rational-modification request (zeros over poles, plain and conjugated).
pub use crate::weight::RationalMod as CguShift;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The four elementary generator kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    /// numerator factor (z - alpha)
    K1,
    /// denominator factor (z - beta)
    L1,
    /// numerator factor (1 - alpha* / z)
    K1Star,
    /// denominator factor (1 - beta* / z)
    L1Star,
}

/// Transformed leading and r-coefficients of an elementary modification.
#[derive(Debug, Clone, Copy)]
pub struct TransformedCoeffs {
    pub kappa_sq: C64,
    pub r: C64,
    pub rbar: C64,
}

/// xi, xi* at a point with the negative-index extension always available
/// (the generators at n = 0 reach one step below the diagonal).
fn assoc_ext(system: &BopsSystem, n: i64, z: C64) -> Result<(C64, C64)> {
    if n < 0 {
        region_of(z)?;
        let zp = z.powi(n as i32);
        Ok((2.0 * zp, c(2.0, 0.0)))
    } else {
        let a = system.associated(n, z)?;
        Ok((a.xi, a.xi_star))
    }
}

/// Transformed coefficients of the four elementary modifications.
pub fn transformed_coeffs(
    system: &BopsSystem,
    kind: GenKind,
    location: C64,
    n: usize,
) -> Result<TransformedCoeffs> {
    let kappa_n = system.kappa(n)?;
    match kind {
        GenKind::K1 => {
            let a = location;
            let phi_n = system.phi(n)?.eval(a);
            let phi_n1 = system.phi(n + 1)?.eval(a);
            if phi_n.norm() < 1e-13 || phi_n1.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "K=1 generator needs phi_n(alpha) != 0 at n = {n}"
                )));
            }
            let kappa_n1 = system.kappa(n + 1)?;
            Ok(TransformedCoeffs {
                kappa_sq: -kappa_n1 * kappa_n * phi_n / phi_n1,
                r: (system.phi(n)?.coeff(0) * phi_n1 - system.phi(n + 1)?.coeff(0) * phi_n)
                    / (a * kappa_n1 * phi_n),
                rbar: system.phistar(n)?.eval(a) / phi_n,
            })
        }
        GenKind::L1 => {
            let b = location;
            let (xi_nm1, xis_nm1) = assoc_ext(system, n as i64 - 1, b)?;
            let (_, xis_n) = assoc_ext(system, n as i64, b)?;
            if xis_nm1.norm() < 1e-13 || xis_n.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "L=1 generator needs xi*_n(beta) != 0 at n = {n}"
                )));
            }
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            Ok(TransformedCoeffs {
                kappa_sq: -kappa_n * kappa_nm1 * b * xis_nm1 / xis_n,
                r: b * xi_nm1 / xis_nm1,
                rbar: (system.phibar0_at(n as i64)? * b * xis_nm1
                    - system.phibar0_at(n as i64 - 1)? * xis_n)
                    / (b * kappa_n * xis_nm1),
            })
        }
        GenKind::K1Star => {
            let a = location;
            let phis_n = system.phistar(n)?.eval(a);
            let phis_n1 = system.phistar(n + 1)?.eval(a);
            if phis_n.norm() < 1e-13 || phis_n1.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "K*=1 generator needs phi*_n(alpha*) != 0 at n = {n}"
                )));
            }
            let kappa_n1 = system.kappa(n + 1)?;
            Ok(TransformedCoeffs {
                kappa_sq: kappa_n1 * kappa_n * phis_n / phis_n1,
                r: system.phi(n)?.eval(a) / phis_n,
                rbar: (system.phibar(n)?.coeff(0) * phis_n1
                    - system.phibar(n + 1)?.coeff(0) * a * phis_n)
                    / (kappa_n1 * phis_n),
            })
        }
        GenKind::L1Star => {
            let b = location;
            let (xi_nm1, xis_nm1) = assoc_ext(system, n as i64 - 1, b)?;
            let (xi_n, _) = assoc_ext(system, n as i64, b)?;
            if xi_nm1.norm() < 1e-13 || xi_n.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "L*=1 generator needs xi_n(beta*) != 0 at n = {n}"
                )));
            }
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            Ok(TransformedCoeffs {
                kappa_sq: kappa_n * kappa_nm1 * b * xi_nm1 / xi_n,
                r: (system.phi0_at(n as i64)? * xi_nm1 - system.phi0_at(n as i64 - 1)? * xi_n)
                    / (kappa_n * xi_nm1),
                rbar: xis_nm1 / (b * xi_nm1),
            })
        }
    }
}

/// A ratio of polynomials in z.
#[derive(Debug, Clone)]
pub struct RationalFn {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl RationalFn {
    fn new(num: Polynomial, den: Polynomial) -> Self {
        Self { num, den }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        let d = self.den.eval(z);
        if d.norm() < 1e-12 {
            return Err(Error::Domain(format!(
                "rational entry evaluated at a pole, z = {z}"
            )));
        }
        Ok(self.num.eval(z) / d)
    }

    pub fn deriv(&self, z: C64) -> Result<C64> {
        let d = self.den.eval(z);
        if d.norm() < 1e-12 {
            return Err(Error::Domain(format!(
                "rational entry differentiated at a pole, z = {z}"
            )));
        }
        let n = self.num.eval(z);
        let np = self.num.derivative().eval(z);
        let dp = self.den.derivative().eval(z);
        Ok((np * d - n * dp) / (d * d))
    }
}

/// An elementary 2x2 matrix generator with rational entries; the scalar
/// kappa-ratio prefactor is baked into the numerators.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub entries: [[RationalFn; 2]; 2],
    pub kind: GenKind,
    pub location: C64,
    pub n: usize,
}

impl GeneratorMatrix {
    pub fn eval(&self, z: C64) -> Result<Mat2> {
        Ok(Mat2::new(
            self.entries[0][0].eval(z)?,
            self.entries[0][1].eval(z)?,
            self.entries[1][0].eval(z)?,
            self.entries[1][1].eval(z)?,
        ))
    }

    pub fn deriv(&self, z: C64) -> Result<Mat2> {
        Ok(Mat2::new(
            self.entries[0][0].deriv(z)?,
            self.entries[0][1].deriv(z)?,
            self.entries[1][0].deriv(z)?,
            self.entries[1][1].deriv(z)?,
        ))
    }
}

/// The elementary matrix generator for the given kind at `location`.
pub fn generator(
    system: &BopsSystem,
    kind: GenKind,
    location: C64,
    n: usize,
) -> Result<GeneratorMatrix> {
    let coeffs = transformed_coeffs(system, kind, location, n)?;
    let kappa_n = system.kappa(n)?;
    let kappa_pm = coeffs.kappa_sq.sqrt();
    let one = c(1.0, 0.0);
    let lin = |a0: C64, a1: C64| Polynomial::from_coeffs(vec![a0, a1]);
    let konst = Polynomial::constant;

    let entries = match kind {
        GenKind::K1 => {
            let a = location;
            let pre = kappa_pm / kappa_n;
            let phi_n = system.phi(n)?.eval(a);
            let phi_n1 = system.phi(n + 1)?.eval(a);
            let kappa_n1 = system.kappa(n + 1)?;
            let den = lin(-a, one);
            [
                [
                    RationalFn::new(lin(-kappa_n * phi_n1 / (kappa_n1 * phi_n), one).scale(pre), den.clone()),
                    RationalFn::new(konst(pre * system.phi(n + 1)?.coeff(0) / kappa_n1), den.clone()),
                ],
                [
                    RationalFn::new(lin(c(0.0, 0.0), pre * system.phistar(n)?.eval(a) / phi_n), den.clone()),
                    RationalFn::new(konst(-pre * a), den),
                ],
            ]
        }
        GenKind::L1 => {
            let b = location;
            let pre = kappa_pm / kappa_n;
            let (xi_n, xis_n) = assoc_ext(system, n as i64, b)?;
            let (_, xis_nm1) = assoc_ext(system, n as i64 - 1, b)?;
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            let u = kappa_n * xis_n / (kappa_nm1 * xis_nm1);
            let v = kappa_n * xi_n / (kappa_nm1 * xis_nm1);
            let s = system.phibar0_at(n as i64)? * xis_n / (kappa_nm1 * xis_nm1);
            let den = konst(one);
            [
                [
                    RationalFn::new(konst(pre * u), den.clone()),
                    RationalFn::new(konst(pre * v), den.clone()),
                ],
                [
                    RationalFn::new(lin(c(0.0, 0.0), pre * s / b), den.clone()),
                    RationalFn::new(lin(one, -u / b).scale(pre), den),
                ],
            ]
        }
        GenKind::K1Star => {
            let a = location;
            let pre = kappa_pm / kappa_n;
            let phis_n = system.phistar(n)?.eval(a);
            let phis_n1 = system.phistar(n + 1)?.eval(a);
            let kappa_n1 = system.kappa(n + 1)?;
            let den = lin(-a, one);
            [
                [
                    RationalFn::new(lin(c(0.0, 0.0), pre), den.clone()),
                    RationalFn::new(
                        konst(-pre * a * system.phi(n)?.eval(a) / phis_n),
                        den.clone(),
                    ),
                ],
                [
                    RationalFn::new(
                        lin(c(0.0, 0.0), -pre * system.phibar(n + 1)?.coeff(0) * a / kappa_n1),
                        den.clone(),
                    ),
                    RationalFn::new(
                        lin(-pre * a, pre * kappa_n * phis_n1 / (kappa_n1 * phis_n)),
                        den,
                    ),
                ],
            ]
        }
        GenKind::L1Star => {
            let b = location;
            let pre = kappa_pm / kappa_n;
            let (xi_n, xis_n) = assoc_ext(system, n as i64, b)?;
            let (xi_nm1, _) = assoc_ext(system, n as i64 - 1, b)?;
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            let q = kappa_n * xi_n / (kappa_nm1 * xi_nm1);
            let den_z = lin(c(0.0, 0.0), one);
            let den_1 = konst(one);
            [
                [
                    RationalFn::new(lin(-q, one).scale(pre), den_z.clone()),
                    RationalFn::new(
                        konst(pre * system.phi(n)?.coeff(0) * xi_n / (kappa_nm1 * xi_nm1)),
                        den_z,
                    ),
                ],
                [
                    RationalFn::new(
                        konst(pre * kappa_n * xis_n / (kappa_nm1 * b * xi_nm1)),
                        den_1.clone(),
                    ),
                    RationalFn::new(konst(pre * q / b), den_1),
                ],
            ]
        }
    };
    Ok(GeneratorMatrix {
        entries,
        kind,
        location,
        n,
    })
}

/// Closed-form inverse of an elementary generator (printed for the K=1 and
/// L=1 kinds: the opposite-direction generator of the modified system).
pub fn inverse_generator_eval(
    system: &BopsSystem,
    kind: GenKind,
    location: C64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let tc = transformed_coeffs(system, kind, location, n)?;
    let kappa_pm = tc.kappa_sq.sqrt();
    let kappa_n = system.kappa(n)?;
    match kind {
        GenKind::K1 => {
            let a = location;
            let phi_n = system.phi(n)?.eval(a);
            let phi_n1 = system.phi(n + 1)?.eval(a);
            let phistar_n = system.phistar(n)?.eval(a);
            let phi0 = system.phi(n + 1)?.coeff(0);
            let kappa_n1 = system.kappa(n + 1)?;
            Ok(Mat2::new(
                kappa_n1 * a / phi_n1,
                phi0 / phi_n1,
                kappa_n1 * phistar_n * z / (phi_n1 * phi_n),
                kappa_n / phi_n - kappa_n1 * z / phi_n1,
            )
            .scale(phi_n / kappa_pm))
        }
        GenKind::L1 => {
            let b = location;
            let (xi_n, xis_n) = assoc_ext(system, n as i64, b)?;
            let (_, xis_nm1) = assoc_ext(system, n as i64 - 1, b)?;
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            let d = z - b;
            if d.norm() < 1e-12 {
                return Err(Error::Domain(
                    "inverse generator evaluated at its pole".into(),
                ));
            }
            Ok(Mat2::new(
                z - kappa_nm1 * xis_nm1 * b / (kappa_n * xis_n),
                xi_n * b / xis_n,
                system.phibar0_at(n as i64)? * z / kappa_n,
                -b,
            )
            .scale(kappa_n / (kappa_pm * d)))
        }
        _ => Err(Error::Validity(
            "closed-form inverses are printed for the K=1 and L=1 kinds".into(),
        )),
    }
}

/// The recurrence matrix of a transformed system, from its transformed
/// coefficients at n and n + 1.
pub fn transformed_k_matrix(
    system: &BopsSystem,
    kind: GenKind,
    location: C64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let tc_n = transformed_coeffs(system, kind, location, n)?;
    let tc_n1 = transformed_coeffs(system, kind, location, n + 1)?;
    let kappa_n = tc_n.kappa_sq.sqrt();
    let kappa_n1 = tc_n1.kappa_sq.sqrt();
    Ok(Mat2::new(
        kappa_n1 * z,
        tc_n1.r * kappa_n1,
        tc_n1.rbar * kappa_n1 * z,
        kappa_n1,
    )
    .scale(c(1.0, 0.0) / kappa_n))
}

/// Residual of the recurrence compatibility
/// R_{n+1}(z) K_n(z) - K^{+-}_n(z) R_n(z).
pub fn recurrence_compat_residual(
    system: &BopsSystem,
    kind: GenKind,
    location: C64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let r_n = generator(system, kind, location, n)?.eval(z)?;
    let r_n1 = generator(system, kind, location, n + 1)?.eval(z)?;
    let k_n = system.k_matrix(n as i64, z)?;
    let k_mod = transformed_k_matrix(system, kind, location, n, z)?;
    Ok(r_n1 * k_n - k_mod * r_n)
}

/// The transformed spectral matrix of an elementary modification, from the
/// closed sandwich formulas (available for the K=1 and L=1 kinds).
pub fn transformed_spectral_matrix(
    system: &BopsSystem,
    data: &SemiClassicalData,
    kind: GenKind,
    location: C64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let rs = residue_set(system, data, n)?;
    let a_n = rs.spectral_matrix(data, z)?;
    let kappa_n = system.kappa(n)?;
    let zero = c(0.0, 0.0);
    match kind {
        GenKind::K1 => {
            let a = location;
            let d = z - a;
            if d.norm() < 1e-10 {
                return Err(Error::Domain(
                    "transformed spectral matrix evaluated at z = alpha".into(),
                ));
            }
            let phi_n = system.phi(n)?.eval(a);
            let phi_n1 = system.phi(n + 1)?.eval(a);
            let phis_n = system.phistar(n)?.eval(a);
            let phi0 = system.phi(n + 1)?.coeff(0);
            let kappa_n1 = system.kappa(n + 1)?;
            if phi_n.norm() < 1e-13 || phi_n1.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "transformed spectral matrix needs phi(alpha) != 0 at n = {n}"
                )));
            }
            let m1 = Mat2::new(
                -phi0 * phis_n,
                phi0 * phi_n,
                a * kappa_n1 * phis_n,
                -a * kappa_n1 * phi_n,
            )
            .scale(c(1.0, 0.0) / (kappa_n * phi_n1));
            let m2 = Mat2::new(
                kappa_n * phi_n1 - kappa_n1 * phi_n * z,
                -phi0 * phi_n,
                -kappa_n1 * phis_n * z,
                a * kappa_n1 * phi_n,
            );
            let m3 = Mat2::new(
                -a * kappa_n1 * phi_n,
                -phi0 * phi_n,
                -kappa_n1 * phis_n * z,
                kappa_n1 * phi_n * z - kappa_n * phi_n1,
            );
            let sandwich =
                (m2 * a_n * m3).scale(c(1.0, 0.0) / (kappa_n * kappa_n1 * phi_n * phi_n1));
            Ok((m1 + sandwich).scale(c(1.0, 0.0) / d))
        }
        GenKind::L1 => {
            let b = location;
            let d = z - b;
            if d.norm() < 1e-10 {
                return Err(Error::Domain(
                    "transformed spectral matrix evaluated at z = beta".into(),
                ));
            }
            let (xi_n, xis_n) = assoc_ext(system, n as i64, b)?;
            let (_, xis_nm1) = assoc_ext(system, n as i64 - 1, b)?;
            if xis_n.norm() < 1e-13 || xis_nm1.norm() < 1e-13 {
                return Err(Error::Degeneracy(format!(
                    "transformed spectral matrix needs xi*(beta) != 0 at n = {n}"
                )));
            }
            let kappa_nm1 = system.kappa_at(n as i64 - 1)?;
            let phibar0 = system.phibar(n)?.coeff(0);
            let m1 = Mat2::new(zero, zero, -phibar0, kappa_n).scale(c(1.0, 0.0) / kappa_n);
            let m2 = Mat2::new(
                b * kappa_n * xis_n,
                b * kappa_n * xi_n,
                phibar0 * xis_n * z,
                -kappa_n * xis_n * z + b * kappa_nm1 * xis_nm1,
            );
            let m3 = Mat2::new(
                kappa_n * xis_n * z - b * kappa_nm1 * xis_nm1,
                b * kappa_n * xi_n,
                phibar0 * xis_n * z,
                -b * kappa_n * xis_n,
            );
            let sandwich =
                (m2 * a_n * m3).scale(c(1.0, 0.0) / (b * kappa_nm1 * kappa_n * xis_nm1 * xis_n));
            Ok((m1 + sandwich).scale(c(1.0, 0.0) / d))
        }
        _ => Err(Error::Validity(
            "transformed spectral matrices are available for the K=1 and L=1 kinds".into(),
        )),
    }
}

/// Residual of the spectral compatibility
/// dR/dz + R A_n - A^{+-}_n R at z.
pub fn spectral_compat_residual(
    system: &BopsSystem,
    data: &SemiClassicalData,
    kind: GenKind,
    location: C64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let gen = generator(system, kind, location, n)?;
    let r = gen.eval(z)?;
    let rp = gen.deriv(z)?;
    let rs = residue_set(system, data, n)?;
    let a_n = rs.spectral_matrix(data, z)?;
    let a_mod = transformed_spectral_matrix(system, data, kind, location, n, z)?;
    Ok(rp + r * a_n - a_mod * r)
}

// ---------------------------------------------------------------------------
// general rational modification via the block determinants
// ---------------------------------------------------------------------------

/// A column of the block determinant: either z^pow f_idx(z) or a plain
/// monomial column (the small-n identity block).
#[derive(Debug, Clone, Copy)]
enum ColDesc {
    Func { pow: i64, idx: i64 },
    Mono { z_pow: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Plain,
    Star,
}

/// Lower-block row: evaluation point and whether the row carries polynomial
/// or associated-function values.
#[derive(Debug, Clone, Copy)]
enum RowKind {
    Poly(C64),
    Assoc(C64),
}

/// One produced degree of a transformed system.
#[derive(Debug, Clone)]
pub struct TransformedRow {
    pub n: usize,
    pub kappa_sq: C64,
    pub kappa: C64,
    pub r: C64,
    pub rbar: C64,
    pub phi: Polynomial,
    pub phistar: Polynomial,
    cols: Vec<ColDesc>,
    cof: Vec<C64>,
    cof_star: Vec<C64>,
    c_norm: C64,
    c_star_norm: C64,
    /// max relative remainder of the polynomial divisions (diagnostic)
    pub division_residual: f64,
}

/// The system of a rationally modified weight, produced degree by degree
/// from the base system.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub shift: CguShift,
    /// first produced degree (0 for pure-denominator shifts, L + L* else)
    pub n_start: usize,
    pub rows: Vec<TransformedRow>,
}

fn eval_func(system: &BopsSystem, family: Family, row: RowKind, idx: i64, pow: i64) -> Result<C64> {
    match row {
        RowKind::Poly(p) => {
            let f = match family {
                Family::Plain => system.phi_eval(idx, p)?,
                Family::Star => system.phistar_eval(idx, p)?,
            };
            Ok(p.powi(pow as i32) * f)
        }
        RowKind::Assoc(p) => {
            let (xi, xis) = assoc_ext(system, idx, p)?;
            let f = match family {
                Family::Plain => xi,
                Family::Star => xis,
            };
            Ok(p.powi(pow as i32) * f)
        }
    }
}

fn lower_entry(system: &BopsSystem, family: Family, row: RowKind, col: ColDesc) -> Result<C64> {
    match col {
        ColDesc::Func { pow, idx } => eval_func(system, family, row, idx, pow),
        ColDesc::Mono { z_pow } => {
            let p = match row {
                RowKind::Poly(p) | RowKind::Assoc(p) => p,
            };
            Ok(p.powi(z_pow as i32))
        }
    }
}

/// Signed cofactors of the first row: the determinant is
/// sum_j first_row_j * cof_j. Rows are equilibrated first; the common scale
/// is absorbed into the family constant.
fn first_row_cofactors(lower: &CMatrix) -> Vec<C64> {
    let d = lower.n_cols;
    let mut scaled = lower.clone();
    for i in 0..scaled.n_rows {
        let mut m = 0.0f64;
        for j in 0..d {
            m = m.max(scaled[(i, j)].norm());
        }
        if m > 0.0 {
            for j in 0..d {
                scaled[(i, j)] /= m;
            }
        }
    }
    (0..d)
        .map(|j| {
            let minor = scaled.without_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            det(&minor) * sign
        })
        .collect()
}

/// Exterior-expansion coefficient of z^{-m} in xi*_idx (m >= 0).
fn xi_star_ext_coeff(system: &BopsSystem, idx: i64, m: i64) -> Result<C64> {
    if m < 0 {
        return Ok(c(0.0, 0.0));
    }
    if idx < 0 {
        // xi*_{-N} = 2 exactly under the default extension
        return Ok(if m == 0 { c(2.0, 0.0) } else { c(0.0, 0.0) });
    }
    system.xi_star_series_coeff(idx as usize, m, crate::bops::Region::Exterior)
}

/// Transform the base system by a general rational modification.
///
/// Degrees n >= L + L* use the master block determinant; for a pure
/// denominator shift (K = K* = L* = 0) the degrees n < L come from the
/// small-n determinant with the monomial identity block.
pub fn transform_system(
    system: &BopsSystem,
    shift: &CguShift,
    n_out: usize,
) -> Result<TransformedSystem> {
    shift.validate().map_err(|e| {
        Error::Degeneracy(format!("invalid shift for transform_system: {e}"))
    })?;
    let k = shift.alphas.len();
    let k_star = shift.alpha_stars.len();
    let l = shift.betas.len();
    let l_star = shift.beta_stars.len();
    let small_n_supported = k == 0 && k_star == 0 && l_star == 0 && l > 0;
    let n_start = if small_n_supported { 0 } else { l + l_star };
    let needed_depth = n_out + k + k_star + 1;
    if needed_depth > system.n_max {
        return Err(Error::Range(format!(
            "transform_system needs base depth {needed_depth}, have {}",
            system.n_max
        )));
    }

    let mut rows = Vec::new();
    for n in n_start..=n_out {
        let row = if n >= l + l_star {
            transform_row_master(system, shift, n)?
        } else {
            transform_row_small_n(system, shift, n)?
        };
        rows.push(row);
    }
    Ok(TransformedSystem {
        shift: shift.clone(),
        n_start,
        rows,
    })
}

fn lower_rows(shift: &CguShift) -> Vec<RowKind> {
    shift
        .alphas
        .iter()
        .map(|&a| RowKind::Poly(a))
        .chain(shift.alpha_stars.iter().map(|&a| RowKind::Poly(a)))
        .chain(shift.betas.iter().map(|&b| RowKind::Assoc(b)))
        .chain(shift.beta_stars.iter().map(|&b| RowKind::Assoc(b)))
        .collect()
}

fn master_columns(shift: &CguShift, n: usize) -> Vec<ColDesc> {
    let k = shift.alphas.len() as i64;
    let k_star = shift.alpha_stars.len() as i64;
    let l = shift.betas.len() as i64;
    let l_star = shift.beta_stars.len() as i64;
    let n = n as i64;
    let mut cols = Vec::new();
    for c0 in 0..l {
        cols.push(ColDesc::Func {
            pow: l - c0,
            idx: n - l_star - l + c0,
        });
    }
    for c0 in 0..l_star {
        cols.push(ColDesc::Func {
            pow: 0,
            idx: n - l_star + c0,
        });
    }
    for c0 in 0..=k_star {
        cols.push(ColDesc::Func {
            pow: -c0,
            idx: n + c0,
        });
    }
    for c0 in 1..=k {
        cols.push(ColDesc::Func {
            pow: -k_star,
            idx: n + k_star + c0,
        });
    }
    cols
}

fn small_n_columns(shift: &CguShift, n: usize, family: Family) -> Vec<ColDesc> {
    let l = shift.betas.len() as i64;
    let n = n as i64;
    let mut cols = Vec::new();
    for c0 in 0..(l - n) {
        let z_pow = match family {
            Family::Plain => l - 1 - c0,
            Family::Star => l - c0,
        };
        cols.push(ColDesc::Mono { z_pow });
    }
    for c0 in 0..=n {
        cols.push(ColDesc::Func {
            pow: n - c0,
            idx: c0,
        });
    }
    cols
}

/// Assemble the numerator polynomial of the Phi-type determinant: the
/// first-row entries are shifted polynomial coefficient vectors.
fn assemble_phi(
    system: &BopsSystem,
    family: Family,
    cols: &[ColDesc],
    cof: &[C64],
    shift: &CguShift,
    n: usize,
) -> Result<(Polynomial, f64)> {
    let k_star = shift.alpha_stars.len() as i64;
    // Laurent window: powers from -k_star upward
    let offset = k_star;
    let max_pow = n as i64 + shift.alphas.len() as i64 + k_star;
    let mut acc = vec![c(0.0, 0.0); (max_pow + offset + 1) as usize];
    for (col, &cf) in cols.iter().zip(cof) {
        match *col {
            ColDesc::Mono { .. } => {} // zero first-row entries in the Phi rows
            ColDesc::Func { pow, idx } => {
                if idx < 0 {
                    continue; // phi_{-N} = 0
                }
                let p = match family {
                    Family::Plain => system.phi(idx as usize)?,
                    Family::Star => system.phistar(idx as usize)?,
                };
                for (kk, &a) in p.coeffs.iter().enumerate() {
                    let slot = kk as i64 + pow + offset;
                    acc[slot as usize] += a * cf;
                }
            }
        }
    }
    // acc now holds z^{k_star} * det; divide by prod (z - alpha) prod (z - alpha*)
    let mut poly = Polynomial::from_coeffs(acc);
    let scale: f64 = poly
        .coeffs
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut worst_rem = 0.0f64;
    for &root in shift.alphas.iter().chain(&shift.alpha_stars) {
        let (q, rem) = poly.divide_by_linear(root);
        worst_rem = worst_rem.max(rem.norm() / scale);
        poly = q;
    }
    poly.coeffs.truncate(n + 1);
    Ok((poly, worst_rem))
}

/// First-row entry of the Xi-type determinant at an off-circle point.
fn xi_row_entry(
    system: &BopsSystem,
    family: Family,
    col: ColDesc,
    z: C64,
) -> Result<C64> {
    match col {
        ColDesc::Mono { z_pow } => Ok(z.powi(z_pow as i32)),
        ColDesc::Func { pow, idx } => eval_func(system, family, RowKind::Assoc(z), idx, pow),
    }
}

fn transform_row_master(
    system: &BopsSystem,
    shift: &CguShift,
    n: usize,
) -> Result<TransformedRow> {
    let cols = master_columns(shift, n);
    finish_row(system, shift, n, cols, None)
}

fn transform_row_small_n(
    system: &BopsSystem,
    shift: &CguShift,
    n: usize,
) -> Result<TransformedRow> {
    let cols = small_n_columns(shift, n, Family::Plain);
    let cols_star = small_n_columns(shift, n, Family::Star);
    finish_row(system, shift, n, cols, Some(cols_star))
}

fn finish_row(
    system: &BopsSystem,
    shift: &CguShift,
    n: usize,
    cols: Vec<ColDesc>,
    cols_star: Option<Vec<ColDesc>>,
) -> Result<TransformedRow> {
    let points = lower_rows(shift);
    let d = cols.len();
    debug_assert_eq!(points.len() + 1, d);
    let star_cols = cols_star.as_ref().unwrap_or(&cols);

    let lower = |family: Family, cs: &[ColDesc]| -> Result<CMatrix> {
        let mut m = CMatrix::zeros(points.len(), d);
        for (i, &pt) in points.iter().enumerate() {
            for (j, &col) in cs.iter().enumerate() {
                m[(i, j)] = lower_entry(system, family, pt, col)?;
            }
        }
        Ok(m)
    };
    let cof = first_row_cofactors(&lower(Family::Plain, &cols)?);
    let cof_star = first_row_cofactors(&lower(Family::Star, star_cols)?);

    let (phi_hat, rem1) = assemble_phi(system, Family::Plain, &cols, &cof, shift, n)?;
    let (phistar_hat, rem2) = assemble_phi(system, Family::Star, star_cols, &cof_star, shift, n)?;

    // normalization: K_n^2 = 2 Phi*_n(0) / lim_{z->inf} Xi*_n(z)
    let l = shift.betas.len() as i64;
    let mut xi_star_inf = c(0.0, 0.0);
    for (&col, &cf) in star_cols.iter().zip(&cof_star) {
        match col {
            ColDesc::Mono { z_pow } => {
                if z_pow == l {
                    xi_star_inf += cf;
                }
            }
            ColDesc::Func { pow, idx } => {
                xi_star_inf += cf * xi_star_ext_coeff(system, idx, pow - l)?;
            }
        }
    }
    let phistar_at_0 = phistar_hat.coeff(0);
    if phistar_at_0.norm() < 1e-250 || xi_star_inf.norm() < 1e-250 {
        return Err(Error::Degeneracy(format!(
            "transform_system normalization degenerate at n = {n}"
        )));
    }
    let kappa_sq = 2.0 * phistar_at_0 / xi_star_inf;
    let kappa = kappa_sq.sqrt();
    let lead = phi_hat.coeff(n as i64);
    if lead.norm() < 1e-250 {
        return Err(Error::Degeneracy(format!(
            "transformed polynomial degenerate at n = {n} (vanishing leading coefficient)"
        )));
    }
    let c_norm = kappa / lead;
    let c_star_norm = kappa / phistar_at_0;
    let phi = phi_hat.scale(c_norm);
    let phistar = phistar_hat.scale(c_star_norm);
    let r = phi.coeff(0) / kappa;
    let rbar = phistar.coeff(n as i64) / kappa;
    Ok(TransformedRow {
        n,
        kappa_sq,
        kappa,
        r,
        rbar,
        cols,
        cof,
        cof_star,
        c_norm,
        c_star_norm,
        phi,
        phistar,
        division_residual: rem1.max(rem2),
    })
}

impl TransformedSystem {
    pub fn row(&self, n: usize) -> Result<&TransformedRow> {
        if n < self.n_start {
            return Err(Error::Validity(format!(
                "degree {n} below the validity range (starts at {})",
                self.n_start
            )));
        }
        self.rows.get(n - self.n_start).ok_or_else(|| {
            Error::Range(format!("degree {n} beyond transformed depth"))
        })
    }

    /// Transformed associated function Xi_n(z), evaluated pointwise from the
    /// determinant representation.
    pub fn xi(&self, system: &BopsSystem, n: usize, z: C64) -> Result<C64> {
        self.xi_impl(system, n, z, Family::Plain)
    }

    /// Transformed associated function Xi*_n(z).
    pub fn xi_star(&self, system: &BopsSystem, n: usize, z: C64) -> Result<C64> {
        self.xi_impl(system, n, z, Family::Star)
    }

    fn xi_impl(&self, system: &BopsSystem, n: usize, z: C64, family: Family) -> Result<C64> {
        let row = self.row(n)?;
        let (cols, cof, norm) = match family {
            Family::Plain => (
                small_or_master_cols(&self.shift, row, Family::Plain),
                &row.cof,
                row.c_norm,
            ),
            Family::Star => (
                small_or_master_cols(&self.shift, row, Family::Star),
                &row.cof_star,
                row.c_star_norm,
            ),
        };
        let mut acc = c(0.0, 0.0);
        for (&col, &cf) in cols.iter().zip(cof) {
            acc += cf * xi_row_entry(system, family, col, z)?;
        }
        // divide by prod (z - beta) prod (1 - beta*/z)
        let one = c(1.0, 0.0);
        for &b in &self.shift.betas {
            let dd = z - b;
            if dd.norm() < 1e-10 {
                return Err(Error::Domain(format!(
                    "transformed associated function evaluated at the pole {b}"
                )));
            }
            acc /= dd;
        }
        for &b in &self.shift.beta_stars {
            let dd = one - b / z;
            if dd.norm() < 1e-10 {
                return Err(Error::Domain(format!(
                    "transformed associated function evaluated at the pole {b}"
                )));
            }
            acc /= dd;
        }
        Ok(acc * norm)
    }

    /// Chain of transformed Toeplitz determinants I_0, ..; only available
    /// when the produced range starts at degree 0.
    pub fn i_chain(&self, len: usize) -> Result<Vec<C64>> {
        if self.n_start != 0 {
            return Err(Error::Validity(
                "I-chain needs rows from degree 0 (pure denominator shifts)".into(),
            ));
        }
        let mut out = vec![c(1.0, 0.0)];
        for m in 0..len.min(self.rows.len()) {
            let prev = out[m];
            out.push(prev / self.rows[m].kappa_sq);
        }
        Ok(out)
    }
}

fn small_or_master_cols(shift: &CguShift, row: &TransformedRow, family: Family) -> Vec<ColDesc> {
    let l = shift.betas.len();
    let l_star = shift.beta_stars.len();
    if row.n < l + l_star {
        small_n_columns(shift, row.n, family)
    } else {
        row.cols.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bops::build_system;
    use crate::weight::WeightSpec;

    fn build(spec: &WeightSpec, n_max: usize) -> BopsSystem {
        let t = spec.fourier_coefficients(1e-12, 1 << 16).unwrap();
        build_system(&t, n_max, 1e-12).unwrap()
    }

    #[test]
    fn k1_coefficients_lebesgue() {
        let sys = build(&WeightSpec::one(), 6);
        let tc = transformed_coeffs(&sys, GenKind::K1, c(2.0, 0.0), 3).unwrap();
        assert!((tc.kappa_sq - c(-0.5, 0.0)).norm() < 1e-12);
        assert!(tc.r.norm() < 1e-12);
        assert!((tc.rbar - c(0.125, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn l1_coefficients_lebesgue() {
        let sys = build(&WeightSpec::one(), 6);
        let tc = transformed_coeffs(&sys, GenKind::L1, c(2.0, 0.0), 2).unwrap();
        assert!((tc.kappa_sq - c(-2.0, 0.0)).norm() < 1e-12);
        assert!(tc.r.norm() < 1e-12);
        assert!(tc.rbar.norm() < 1e-12);
        let tc = transformed_coeffs(&sys, GenKind::L1, c(2.0, 0.0), 1).unwrap();
        assert!((tc.rbar - c(-0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn elementary_coeffs_match_rebuilt_systems() {
        let base = WeightSpec::semiclassical_m2();
        let sys = build(&base, 12);
        let cases = [
            (GenKind::K1, c(2.2, 0.4), CguShift { alphas: vec![c(2.2, 0.4)], ..Default::default() }),
            (GenKind::L1, c(3.1, -0.2), CguShift { betas: vec![c(3.1, -0.2)], ..Default::default() }),
            (GenKind::K1Star, c(0.45, 0.1), CguShift { alpha_stars: vec![c(0.45, 0.1)], ..Default::default() }),
            (GenKind::L1Star, c(0.3, -0.15), CguShift { beta_stars: vec![c(0.3, -0.15)], ..Default::default() }),
        ];
        for (kind, loc, shift) in cases {
            let modified = base.modify(&shift).unwrap();
            let rebuilt = build(&modified, 11);
            for n in 0..=8usize {
                let tc = transformed_coeffs(&sys, kind, loc, n).unwrap();
                let kappa_sq_oracle =
                    rebuilt.i_det(n).unwrap() / rebuilt.i_det(n + 1).unwrap();
                assert!(
                    (tc.kappa_sq - kappa_sq_oracle).norm()
                        < 1e-8 * kappa_sq_oracle.norm().max(1.0),
                    "{kind:?} kappa^2 at n = {n}: {} vs {kappa_sq_oracle}",
                    tc.kappa_sq
                );
                let r_oracle = rebuilt.r(n).unwrap();
                assert!(
                    (tc.r - r_oracle).norm() < 1e-8 * r_oracle.norm().max(1.0),
                    "{kind:?} r at n = {n}"
                );
                let rbar_oracle = rebuilt.rbar(n).unwrap();
                assert!(
                    (tc.rbar - rbar_oracle).norm() < 1e-8 * rbar_oracle.norm().max(1.0),
                    "{kind:?} rbar at n = {n}"
                );
            }
        }
    }

    #[test]
    fn k1_generator_lebesgue_closed_form() {
        let sys = build(&WeightSpec::one(), 4);
        let g = generator(&sys, GenKind::K1, c(2.0, 0.0), 1).unwrap();
        let z = c(0.7, 0.3);
        let got = g.eval(z).unwrap();
        // (i/sqrt 2) (1/(z-2)) [[z-2, 0], [z/2, -2]]
        let pre = c(-0.5, 0.0).sqrt() / (z - c(2.0, 0.0));
        let expect = Mat2::new(z - c(2.0, 0.0), c(0.0, 0.0), z * 0.5, c(-2.0, 0.0)).scale(pre);
        assert!((got - expect).norm_max() < 1e-13);
    }

    #[test]
    fn generator_determinants() {
        let base = WeightSpec::semiclassical_m2();
        let sys = build(&base, 8);
        let zs = [c(0.4, 0.3), c(0.9, -0.2), c(1.5, 0.8), c(-2.0, 0.3)];
        for n in [0usize, 2, 5] {
            let g = generator(&sys, GenKind::K1, c(2.6, 0.3), n).unwrap();
            for &z in &zs {
                let d = g.eval(z).unwrap().det() * (z - c(2.6, 0.3));
                assert!((d - c(1.0, 0.0)).norm() < 1e-9, "K1 n={n} z={z}: det*(z-a) = {d}");
            }
            let g = generator(&sys, GenKind::L1, c(3.0, -0.4), n).unwrap();
            for &z in &zs {
                let d = g.eval(z).unwrap().det() / (z - c(3.0, -0.4));
                assert!((d - c(1.0, 0.0)).norm() < 1e-9, "L1 n={n} z={z}");
            }
            let g = generator(&sys, GenKind::K1Star, c(0.4, 0.1), n).unwrap();
            for &z in &zs {
                let d = g.eval(z).unwrap().det() * (z - c(0.4, 0.1)) / z;
                assert!((d - c(1.0, 0.0)).norm() < 1e-9, "K1* n={n} z={z}");
            }
            let g = generator(&sys, GenKind::L1Star, c(0.35, -0.2), n).unwrap();
            for &z in &zs {
                let d = g.eval(z).unwrap().det() * z / (z - c(0.35, -0.2));
                assert!((d - c(1.0, 0.0)).norm() < 1e-9, "L1* n={n} z={z}");
            }
        }
    }

    #[test]
    fn generator_maps_y_to_transformed_y() {
        // R_n Y_n must reproduce the modified system's Y_n
        let base = WeightSpec::semiclassical_m2();
        let sys = build(&base, 8);
        let alpha = c(2.5, 0.5);
        let shift = CguShift {
            alphas: vec![alpha],
            ..Default::default()
        };
        let modified = base.modify(&shift).unwrap();
        let msys = build(&modified, 7);
        let n = 3usize;
        let g = generator(&sys, GenKind::K1, alpha, n).unwrap();
        for &z in &[c(0.5, 0.25), c(1.8, -0.6)] {
            let y = sys.y_matrix(&base, n as i64, z).unwrap().entries;
            let ry = g.eval(z).unwrap() * y;
            let ym = msys.y_matrix(&modified, n as i64, z).unwrap().entries;
            // the two Y's agree up to the kappa sign convention
            let s = ry.e[0][0] / ym.e[0][0];
            assert!(
                ((s - c(1.0, 0.0)).norm() < 1e-7) || ((s + c(1.0, 0.0)).norm() < 1e-7),
                "sign ratio {s}"
            );
            let ym_signed = ym.scale(s);
            assert!(
                (ry - ym_signed).norm_max() < 1e-7 * ym_signed.norm_max().max(1.0),
                "z = {z}: R Y = {ry:?} vs {ym_signed:?}"
            );
        }
    }

    #[test]
    fn recurrence_compatibility() {
        let sys = build(&WeightSpec::one(), 6);
        for &z in &[c(0.3, 0.0), c(1.4, 0.7)] {
            let res = recurrence_compat_residual(&sys, GenKind::K1, c(2.0, 0.0), 1, z).unwrap();
            assert!(res.norm_max() < 1e-12, "residual {res:?}");
        }
        let base = WeightSpec::one().modify(&CguShift {
            betas: vec![c(3.0, 0.0)],
            ..Default::default()
        })
        .unwrap();
        let sys = build(&base, 8);
        let res = recurrence_compat_residual(&sys, GenKind::L1, c(2.0, 0.0), 2, c(1.7, 0.0)).unwrap();
        assert!(res.norm_max() < 1e-10, "residual {res:?}");
    }

    #[test]
    fn spectral_compatibility() {
        let base = WeightSpec::semiclassical_m2();
        let sys = build(&base, 8);
        let data = SemiClassicalData::from_weight(&base).unwrap();
        // Schlesinger specialization: alpha at the singularity 2
        let res =
            spectral_compat_residual(&sys, &data, GenKind::K1, c(2.0, 0.0), 2, c(0.7, 0.0))
                .unwrap();
        assert!(res.norm_max() < 1e-8, "K1 at singularity: {res:?}");
        // L1 at the singularity
        let res =
            spectral_compat_residual(&sys, &data, GenKind::L1, c(2.0, 0.0), 3, c(0.0, 1.5))
                .unwrap();
        assert!(res.norm_max() < 1e-8, "L1 at singularity: {res:?}");
        // pure rational modification: alpha away from the singularities
        let res =
            spectral_compat_residual(&sys, &data, GenKind::K1, c(4.0, 0.0), 2, c(0.45, 0.2))
                .unwrap();
        assert!(res.norm_max() < 1e-8, "K1 generic: {res:?}");
    }

    fn compare_with_rebuild(base: &WeightSpec, shift: &CguShift, n_hi: usize, tol: f64) {
        let depth = n_hi + shift.alphas.len() + shift.alpha_stars.len() + 1;
        let sys = build(base, depth);
        let ts = transform_system(&sys, shift, n_hi).unwrap();
        let modified = base.modify(shift).unwrap();
        let rebuilt = build(&modified, n_hi + 1);
        for n in ts.n_start..=n_hi {
            let row = ts.row(n).unwrap();
            assert!(row.division_residual < 1e-9, "division residual at n = {n}");
            let kappa_sq_oracle = rebuilt.i_det(n).unwrap() / rebuilt.i_det(n + 1).unwrap();
            assert!(
                (row.kappa_sq - kappa_sq_oracle).norm() < tol * kappa_sq_oracle.norm().max(1.0),
                "kappa^2 at n = {n}: {} vs {kappa_sq_oracle}",
                row.kappa_sq
            );
            let r_oracle = rebuilt.r(n).unwrap();
            assert!((row.r - r_oracle).norm() < tol * r_oracle.norm().max(1.0), "r at n = {n}");
            let rbar_oracle = rebuilt.rbar(n).unwrap();
            assert!(
                (row.rbar - rbar_oracle).norm() < tol * rbar_oracle.norm().max(1.0),
                "rbar at n = {n}"
            );
            // polynomials agree up to the kappa sign
            let sign = row.kappa / rebuilt.kappa(n).unwrap();
            assert!(
                ((sign - c(1.0, 0.0)).norm() < 1e-6) || ((sign + c(1.0, 0.0)).norm() < 1e-6),
                "kappa ratio {sign} at n = {n}"
            );
            for kk in 0..=n {
                let got = row.phi.coeff(kk as i64);
                let want = rebuilt.phi(n).unwrap().coeff(kk as i64) * sign;
                assert!(
                    (got - want).norm() < tol * want.norm().max(1.0),
                    "phi coeff {kk} at n = {n}: {got} vs {want}"
                );
                let got = row.phistar.coeff(kk as i64);
                let want = rebuilt.phistar(n).unwrap().coeff(kk as i64) * sign;
                assert!(
                    (got - want).norm() < tol * want.norm().max(1.0),
                    "phi* coeff {kk} at n = {n}"
                );
            }
            // associated functions at two off-circle points
            for &z in &[c(0.41, 0.23), c(1.9, -0.5)] {
                let a = rebuilt.associated(n as i64, z).unwrap();
                let got = ts.xi(&sys, n, z).unwrap();
                let want = a.xi * sign;
                assert!(
                    (got - want).norm() < 1e-7 * want.norm().max(1.0),
                    "Xi at n = {n}, z = {z}: {got} vs {want}"
                );
                let got = ts.xi_star(&sys, n, z).unwrap();
                let want = a.xi_star * sign;
                assert!(
                    (got - want).norm() < 1e-7 * want.norm().max(1.0),
                    "Xi* at n = {n}, z = {z}"
                );
            }
        }
    }

    #[test]
    fn transform_matches_rebuild_k() {
        compare_with_rebuild(
            &WeightSpec::one(),
            &CguShift {
                alphas: vec![c(2.0, 0.0)],
                ..Default::default()
            },
            8,
            1e-9,
        );
    }

    #[test]
    fn transform_matches_rebuild_l_including_small_n() {
        let base = WeightSpec::from_factors(vec![crate::weight::WeightFactor::outer(
            c(2.0, 0.0),
            c(0.4, 0.0),
        )]);
        compare_with_rebuild(
            &base,
            &CguShift {
                betas: vec![c(3.0, 0.0)],
                ..Default::default()
            },
            7,
            1e-8,
        );
    }

    #[test]
    fn transform_matches_rebuild_conjugated_kinds() {
        let base = WeightSpec::semiclassical_m2();
        compare_with_rebuild(
            &base,
            &CguShift {
                alpha_stars: vec![c(0.45, 0.1)],
                ..Default::default()
            },
            7,
            1e-8,
        );
        compare_with_rebuild(
            &base,
            &CguShift {
                beta_stars: vec![c(0.3, -0.15)],
                ..Default::default()
            },
            7,
            1e-8,
        );
    }

    #[test]
    fn transform_matches_rebuild_composite() {
        compare_with_rebuild(
            &WeightSpec::one(),
            &CguShift {
                alphas: vec![c(2.0, 0.0)],
                betas: vec![c(3.0, 0.0)],
                alpha_stars: vec![c(0.5, 0.0)],
                beta_stars: vec![c(0.4, 0.0)],
            },
            7,
            1e-8,
        );
    }
}
