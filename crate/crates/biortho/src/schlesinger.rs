//! Elementary exponent shifts rho_j -> rho_j +- 1 of a regular semi-classical
//! weight: the rational 2x2 multipliers, shifted coefficients and
//! evaluations, transformed residue matrices, commutativity and the three
//! compatibility residuals.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bops::{build_system, BopsSystem};
use crate::cgu::{self, GenKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::semiclassical::{
    deformation_matrix, point_data, residue_set, PointData, ResidueSet, SemiClassicalData,
};
use crate::weight::{RationalMod, WeightSpec};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Integer shift of the singularity exponents and the degree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentShift {
    /// delta rho_j for j = 0..M (index 0 acts through the monomial exponent)
    pub shifts: Vec<i64>,
    #[serde(default)]
    pub n_shift: i64,
}

/// An elementary Schlesinger request.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShiftRequest {
    pub j: usize,
    pub direction: i64,
}

/// An elementary Schlesinger matrix: the generator of rho_j -> rho_j + dir.
#[derive(Debug, Clone)]
pub struct SchlesingerMatrix {
    pub gen: GeneratorMatrix,
    pub j: usize,
    pub direction: i64,
}

fn kind_of(direction: i64) -> Result<GenKind> {
    match direction {
        1 => Ok(GenKind::K1),
        -1 => Ok(GenKind::L1),
        _ => Err(Error::Validity(format!(
            "Schlesinger direction must be +1 or -1, got {direction}"
        ))),
    }
}

fn singularity(data: &SemiClassicalData, j: usize) -> Result<(C64, C64)> {
    if j == 0 {
        return Err(Error::Validity(
            "elementary Schlesinger matrices need z_j != 0 (j >= 1)".into(),
        ));
    }
    let s = data
        .singularities
        .get(j - 1)
        .ok_or_else(|| Error::Range(format!("singularity index {j} out of range")))?;
    Ok((s.z, s.rho))
}

/// The weight with rho_j shifted by `direction`.
pub fn apply_shift(
    spec: &WeightSpec,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
) -> Result<WeightSpec> {
    let m = if j == 0 {
        // realized through the monomial exponent z^{+-1}
        let mut out = spec.clone();
        let factors = out.factors.as_mut().ok_or_else(|| {
            Error::InvalidWeight("exponent shifts need a factor-based weight".into())
        })?;
        let mono = factors
            .iter_mut()
            .find(|f| f.kind == crate::weight::FactorKind::Monomial);
        match mono {
            Some(f) => f.exponent += c(direction as f64, 0.0),
            None => factors.push(crate::weight::WeightFactor::monomial(direction)),
        }
        return Ok(out);
    } else {
        let (zj, _) = singularity(data, j)?;
        if direction == 1 {
            RationalMod {
                alphas: vec![zj],
                ..Default::default()
            }
        } else {
            RationalMod {
                betas: vec![zj],
                ..Default::default()
            }
        }
    };
    spec.modify(&m)
}

/// The weight with an arbitrary integer exponent shift applied.
pub fn apply_exponent_shift(
    spec: &WeightSpec,
    data: &SemiClassicalData,
    shift: &ExponentShift,
) -> Result<WeightSpec> {
    if shift.shifts.len() != data.m() + 1 {
        return Err(Error::Range(format!(
            "expected {} exponent shifts, got {}",
            data.m() + 1,
            shift.shifts.len()
        )));
    }
    let mut out = spec.clone();
    for (j, &s) in shift.shifts.iter().enumerate() {
        for _ in 0..s.abs() {
            out = apply_shift(&out, data, j, s.signum())?;
        }
    }
    Ok(out)
}

/// The elementary Schlesinger matrix R^{j+-}_n.
pub fn schlesinger_matrix(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
) -> Result<SchlesingerMatrix> {
    let (zj, _) = singularity(data, j)?;
    let kind = kind_of(direction)?;
    Ok(SchlesingerMatrix {
        gen: cgu::generator(system, kind, zj, n)?,
        j,
        direction,
    })
}

/// Inverse of the elementary Schlesinger matrix, from its closed form
/// (the opposite-direction matrix of the shifted system).
pub fn inverse_schlesinger_eval(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let (zj, _) = singularity(data, j)?;
    cgu::inverse_generator_eval(system, kind_of(direction)?, zj, n, z)
}

/// Shifted leading and r-coefficients, in both printed forms.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedCoeffs {
    pub kappa_sq: C64,
    pub r: C64,
    pub rbar: C64,
    /// disagreement of the evaluation form and the Theta/Omega form
    pub form_residual: f64,
}

/// Shifted coefficients with the Theta/Omega cross-check.
pub fn shifted_coeffs(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
) -> Result<ShiftedCoeffs> {
    let (zj, _) = singularity(data, j)?;
    let kind = kind_of(direction)?;
    let tc = cgu::transformed_coeffs(system, kind, zj, n)?;
    let kappa_n = system.kappa(n)?;
    let v_at = data.v.eval(zj);

    let mut form_residual = 0.0f64;
    let rel = |a: C64, b: C64| (a - b).norm() / a.norm().max(1.0);
    if direction == 1 {
        let b_n = crate::semiclassical::bilinear_products(system, data, n, j);
        if let Ok(b) = b_n {
            let kappa_n1 = system.kappa(n + 1)?;
            let alt_kappa_sq = -kappa_n1 * kappa_n * b.theta / (b.omega + v_at);
            form_residual = form_residual.max(rel(tc.kappa_sq, alt_kappa_sq));
            let phi0_n = system.phi(n)?.coeff(0);
            let phi0_n1 = system.phi(n + 1)?.coeff(0);
            if phi0_n.norm() > 1e-12 {
                let alt_r = phi0_n / kappa_n1 * (b.omega + v_at - phi0_n1 / phi0_n * b.theta)
                    / (zj * b.theta);
                form_residual = form_residual.max(rel(tc.r, alt_r));
            }
            let phibar0_n1 = system.phibar(n + 1)?.coeff(0);
            let alt_rbar = phibar0_n1 / kappa_n * b.theta_star
                / (b.omega_star - v_at - kappa_n1 / kappa_n * b.theta_star);
            form_residual = form_residual.max(rel(tc.rbar, alt_rbar));
        }
    } else if n >= 1 {
        let b_nm1 = crate::semiclassical::bilinear_products(system, data, n - 1, j);
        if let Ok(b) = b_nm1 {
            let kappa_nm1 = system.kappa(n - 1)?;
            let alt_kappa_sq =
                -kappa_n * kappa_nm1 * zj * b.theta_star / (b.omega_star + v_at);
            form_residual = form_residual.max(rel(tc.kappa_sq, alt_kappa_sq));
            let phi0_n = system.phi(n)?.coeff(0);
            let alt_r = -phi0_n / kappa_nm1 * zj * b.theta
                / (b.omega - v_at - kappa_n / kappa_nm1 * zj * b.theta);
            form_residual = form_residual.max(rel(tc.r, alt_r));
            let phibar0_nm1 = system.phibar(n - 1)?.coeff(0);
            let phibar0_n = system.phibar(n)?.coeff(0);
            if phibar0_nm1.norm() > 1e-12 {
                let alt_rbar = -phibar0_nm1 / kappa_n
                    * (b.omega_star + v_at - phibar0_n / phibar0_nm1 * zj * b.theta_star)
                    / (zj * b.theta_star);
                form_residual = form_residual.max(rel(tc.rbar, alt_rbar));
            }
        }
    }
    Ok(ShiftedCoeffs {
        kappa_sq: tc.kappa_sq,
        r: tc.r,
        rbar: tc.rbar,
        form_residual,
    })
}

/// Evaluations of the shifted system at one singular point.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedPoint {
    pub k: usize,
    pub phi: C64,
    pub phistar: C64,
    pub xi: C64,
    pub xistar: C64,
}

/// The auxiliary T^{j+-} sum, expressed through the residue-matrix entries
/// so that the k = 0 term stays finite.
fn t_sum(
    rs: &ResidueSet,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    u: C64,
    v: C64,
    rho_j: C64,
) -> Result<C64> {
    let denom = rho_j + c(direction as f64, 0.0);
    if denom.norm() < 1e-12 {
        return Err(Error::ExponentDegeneracy(format!(
            "T^{{j{}}} undefined: rho_j {} 1 = 0",
            if direction == 1 { "+" } else { "-" },
            if direction == 1 { "+" } else { "-" }
        )));
    }
    let zj = data.singularities[j - 1].z;
    let zs: Vec<C64> = std::iter::once(c(0.0, 0.0))
        .chain(data.singularities.iter().map(|s| s.z))
        .collect();
    let mut acc = c(0.0, 0.0);
    for k in 0..=data.m() {
        if k == j {
            continue;
        }
        let a = rs.a[k];
        // u^2 a_21 - u v (a_11 - a_22) - v^2 a_12, with (u, v) = (phi, phi*)
        // for the up-shift and (xi, -xi*)-like pairing for the down-shift
        let quad = u * u * a.e[1][0] - u * v * (a.e[0][0] - a.e[1][1]) - v * v * a.e[0][1];
        acc += quad / (zj - zs[k]);
    }
    Ok(acc / denom)
}

/// Evaluations of the shifted polynomials and associated functions at every
/// singular point z_k, k = 1..M.
pub fn shifted_evaluations(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
) -> Result<Vec<ShiftedPoint>> {
    let (zj, rho_j) = singularity(data, j)?;
    let kind = kind_of(direction)?;
    let tc = cgu::transformed_coeffs(system, kind, zj, n)?;
    let kappa_pm = tc.kappa_sq.sqrt();
    let kappa_n = system.kappa(n)?;
    let rs = residue_set(system, data, n)?;
    let pj = point_data(system, data, n, j)?;
    let zjn = zj.powi(n as i32);

    let mut out = Vec::with_capacity(data.m());
    if direction == 1 {
        let kappa_n1 = system.kappa(n + 1)?;
        let phi0_n1 = system.phi(n + 1)?.coeff(0);
        let phibar0_n1 = system.phibar(n + 1)?.coeff(0);
        let pj1 = point_data(system, data, n + 1, j)?;
        let t_plus = t_sum(&rs, data, j, 1, pj.phi, pj.phistar, rho_j)?;
        for k in 1..=data.m() {
            if k == j {
                out.push(ShiftedPoint {
                    k,
                    phi: kappa_pm / kappa_n
                        * (pj.phi + phi0_n1 / (kappa_n1 * pj.phi) * t_plus),
                    phistar: kappa_pm * pj.phistar / (kappa_n * pj.phi)
                        * (pj.phi - zj / pj.phistar * t_plus),
                    xi: -kappa_pm * phi0_n1 / (kappa_n * kappa_n1 * pj.phi) * 2.0 * zjn,
                    xistar: -kappa_pm / (kappa_n * pj.phi) * 2.0 * zjn * zj,
                });
            } else {
                let zk = data.singularities[k - 1].z;
                let pk = point_data(system, data, n, k)?;
                let pk1 = point_data(system, data, n + 1, k)?;
                out.push(ShiftedPoint {
                    k,
                    phi: kappa_pm / (kappa_n1 * pj.phi) * (pj1.phi * pk.phi - pj.phi * pk1.phi)
                        / (zj - zk),
                    phistar: kappa_pm / (phibar0_n1 * pj.phi)
                        * (pj1.phistar * pk.phistar - pj.phistar * pk1.phistar)
                        / (zj - zk),
                    xi: kappa_pm / (kappa_n1 * pj.phi) * (pj.phi * pk1.xi - pj1.phi * pk.xi),
                    xistar: kappa_pm / (phibar0_n1 * pj.phi)
                        * (pj.phistar * pk1.xistar - pj1.phistar * pk.xistar),
                });
            }
        }
    } else {
        let (kappa_nm1, pjm1, points_m1): (C64, PointData, Vec<PointData>) = if n == 0 {
            return Err(Error::Range(
                "down-shifted evaluations need n >= 1 (xi*_{n-1} at the singularities)".into(),
            ));
        } else {
            (
                system.kappa(n - 1)?,
                point_data(system, data, n - 1, j)?,
                (1..=data.m())
                    .map(|k| point_data(system, data, n - 1, k))
                    .collect::<Result<_>>()?,
            )
        };
        let phibar0_n = system.phibar(n)?.coeff(0);
        let t_minus = t_sum(&rs, data, j, -1, pj.xi, -pj.xistar, rho_j)?;
        for k in 1..=data.m() {
            if k == j {
                out.push(ShiftedPoint {
                    k,
                    phi: kappa_pm / (kappa_nm1 * pjm1.xistar) * 2.0 * zjn,
                    phistar: kappa_pm * phibar0_n / (kappa_n * kappa_nm1 * pjm1.xistar)
                        * 2.0
                        * zjn,
                    xi: -kappa_pm / (kappa_nm1 * pjm1.xistar) * t_minus,
                    xistar: kappa_pm / kappa_n
                        * (phibar0_n / (kappa_nm1 * pjm1.xistar) * t_minus - pj.xistar / zj),
                });
            } else {
                let zk = data.singularities[k - 1].z;
                let pk = point_data(system, data, n, k)?;
                let pkm1 = &points_m1[k - 1];
                out.push(ShiftedPoint {
                    k,
                    phi: kappa_pm / (kappa_nm1 * pjm1.xistar)
                        * (pk.phi * pj.xistar + pk.phistar * pj.xi),
                    phistar: kappa_pm / (kappa_n * zj * pjm1.xistar)
                        * (zj * pjm1.xistar * pk.phistar - zk * pj.xistar * pkm1.phistar),
                    xi: kappa_pm / (kappa_nm1 * pjm1.xistar)
                        * (pj.xi * pk.xistar - pj.xistar * pk.xi)
                        / (zj - zk),
                    xistar: -kappa_pm / (kappa_n * zj * pjm1.xistar)
                        * (zj * pjm1.xistar * pk.xistar - zk * pj.xistar * pkm1.xistar)
                        / (zj - zk),
                });
            }
        }
    }
    Ok(out)
}

/// Transformed residue set together with the disagreement of the two
/// computation routes for the k != j residues.
#[derive(Debug, Clone)]
pub struct TransformedResidues {
    pub set: ResidueSet,
    pub route_residual: f64,
    pub sum_residual: f64,
}

/// Residue matrices of the shifted system, by the explicit sandwich
/// formulas, cross-checked against the similarity route R A R^{-1}.
pub fn transformed_residues(
    rs: &ResidueSet,
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
) -> Result<TransformedResidues> {
    let (zj, rho_j) = singularity(data, j)?;
    let kind = kind_of(direction)?;
    let tc = cgu::transformed_coeffs(system, kind, zj, n)?;
    let gen = schlesinger_matrix(system, data, j, direction, n)?;
    let pj = point_data(system, data, n, j)?;
    let kappa_n = system.kappa(n)?;
    let zs: Vec<C64> = std::iter::once(c(0.0, 0.0))
        .chain(data.singularities.iter().map(|s| s.z))
        .collect();

    let mut a_new = vec![Mat2::zero(); data.m() + 1];
    let mut route_residual = 0.0f64;

    // k = 0 residue keeps its structure with the shifted r-coefficient
    let nn = c(n as f64, 0.0);
    a_new[0] = Mat2::new(nn - data.rho0, -(nn - data.rho0) * tc.r, c(0.0, 0.0), c(0.0, 0.0));

    for k in 0..=data.m() {
        if k == j {
            continue;
        }
        let zk = zs[k];
        let explicit = match direction {
            1 => {
                let kappa_n1 = system.kappa(n + 1)?;
                let phi0 = system.phi(n + 1)?.coeff(0);
                let d = zj - zk;
                let ml = Mat2::new(
                    kappa_n1 * pj.phi + phi0 * pj.phistar / d,
                    -phi0 * pj.phi / d,
                    -zk * kappa_n1 * pj.phistar / d,
                    zj * kappa_n1 * pj.phi / d,
                );
                let mr = Mat2::new(
                    zj * kappa_n1 * pj.phi,
                    phi0 * pj.phi,
                    zk * kappa_n1 * pj.phistar,
                    d * kappa_n1 * pj.phi + phi0 * pj.phistar,
                );
                let phi_n1 = system.phi(n + 1)?.eval(zj);
                (ml * rs.a[k] * mr)
                    .scale(c(1.0, 0.0) / (kappa_n * kappa_n1 * pj.phi * phi_n1))
            }
            _ => {
                let (xis_nm1, kappa_nm1) = if n == 0 {
                    (c(2.0, 0.0), c(1.0, 0.0))
                } else {
                    (
                        point_data(system, data, n - 1, j)?.xistar,
                        system.kappa(n - 1)?,
                    )
                };
                let phibar0 = system.phibar(n)?.coeff(0);
                let d = zj - zk;
                let ml = Mat2::new(
                    zj * kappa_n * pj.xistar / d,
                    zj * kappa_n * pj.xi / d,
                    zk * phibar0 * pj.xistar / d,
                    kappa_n * pj.xistar + zj * phibar0 * pj.xi / d,
                );
                let mr = Mat2::new(
                    d * kappa_n * pj.xistar + zj * phibar0 * pj.xi,
                    -zj * kappa_n * pj.xi,
                    -zk * phibar0 * pj.xistar,
                    zj * kappa_n * pj.xistar,
                );
                (ml * rs.a[k] * mr)
                    .scale(c(1.0, 0.0) / (kappa_nm1 * kappa_n * zj * xis_nm1 * pj.xistar))
            }
        };
        // similarity route
        let r_at = gen.gen.eval(zk)?;
        let similar = r_at * rs.a[k] * r_at.inv()?;
        let scale = explicit.norm_max().max(1.0);
        route_residual = route_residual.max((explicit - similar).norm_max() / scale);
        if k >= 1 {
            a_new[k] = explicit;
        } else {
            // the origin residue keeps its closed form; the sandwich is the
            // cross-check
            route_residual =
                route_residual.max((explicit - a_new[0]).norm_max() / scale);
        }
    }

    // k = j residue
    a_new[j] = match direction {
        1 => {
            let kappa_n1 = system.kappa(n + 1)?;
            let phi0 = system.phi(n + 1)?.coeff(0);
            let phi_n1 = system.phi(n + 1)?.eval(zj);
            let front = Mat2::new(
                -phi0 * pj.phistar,
                phi0 * pj.phi,
                zj * kappa_n1 * pj.phistar,
                -zj * kappa_n1 * pj.phi,
            )
            .scale(c(1.0, 0.0) / (kappa_n * phi_n1));
            let mut inner = Mat2::identity().scale(rho_j + c(1.0, 0.0));
            for k in 0..=data.m() {
                if k == j {
                    continue;
                }
                let m = Mat2::new(
                    zj * kappa_n1 * pj.phi,
                    phi0 * pj.phi,
                    zj * kappa_n1 * pj.phistar,
                    phi0 * pj.phistar,
                );
                inner = inner
                    + (rs.a[k] * m).scale(
                        c(1.0, 0.0) / ((zj - zs[k]) * kappa_n1 * pj.phi),
                    );
            }
            front * inner
        }
        _ => {
            let (xis_nm1, kappa_nm1) = if n == 0 {
                (c(2.0, 0.0), c(1.0, 0.0))
            } else {
                (
                    point_data(system, data, n - 1, j)?.xistar,
                    system.kappa(n - 1)?,
                )
            };
            let phibar0 = system.phibar(n)?.coeff(0);
            let first = Mat2::new(c(0.0, 0.0), c(0.0, 0.0), -phibar0, kappa_n)
                .scale((rho_j - 1.0) / kappa_n);
            let left = Mat2::new(
                kappa_n * pj.xistar,
                kappa_n * pj.xi,
                phibar0 * pj.xistar,
                phibar0 * pj.xi,
            );
            let right = Mat2::new(
                -phibar0 * pj.xi,
                kappa_n * pj.xi,
                phibar0 * pj.xistar,
                -kappa_n * pj.xistar,
            );
            let mut sum = Mat2::zero();
            for k in 0..=data.m() {
                if k == j {
                    continue;
                }
                sum = sum + rs.a[k].scale(c(1.0, 0.0) / (zj - zs[k]));
            }
            first
                + (left * sum * right)
                    .scale(zj * zj / (kappa_nm1 * kappa_n * xis_nm1 * pj.xistar))
        }
    };

    // residue at infinity with the shifted exponent bookkeeping
    let rho_total = data.rho_total() + c(direction as f64, 0.0);
    let a_inf = Mat2::new(-nn, c(0.0, 0.0), -(nn + rho_total) * tc.rbar, rho_total);
    let mut sum = Mat2::zero();
    for m in &a_new {
        sum = sum + *m;
    }
    let sum_residual = (a_inf + sum).norm_max();

    Ok(TransformedResidues {
        set: ResidueSet {
            n,
            a: a_new,
            a_inf,
        },
        route_residual,
        sum_residual,
    })
}

/// The three compatibility residuals of an elementary shift: with the
/// recurrence, the spectral derivative and the deformation derivative.
#[derive(Debug, Clone, Copy)]
pub struct CompatibilityResiduals {
    pub recurrence: Mat2,
    pub spectral: Mat2,
    pub deformation: Mat2,
}

#[allow(clippy::too_many_arguments)]
pub fn compatibility_residuals(
    system: &BopsSystem,
    spec: &WeightSpec,
    data: &SemiClassicalData,
    j: usize,
    direction: i64,
    n: usize,
    z: C64,
    velocities: &[C64],
    fd_step: f64,
) -> Result<CompatibilityResiduals> {
    let (zj, _) = singularity(data, j)?;
    let kind = kind_of(direction)?;
    let gen = schlesinger_matrix(system, data, j, direction, n)?;
    let r_z = gen.gen.eval(z)?;

    // recurrence: R_{n+1} K_n - K_n(rho +- 1) R_n
    let r_n1 = schlesinger_matrix(system, data, j, direction, n + 1)?
        .gen
        .eval(z)?;
    let k_n = system.k_matrix(n as i64, z)?;
    let k_shifted = cgu::transformed_k_matrix(system, kind, zj, n, z)?;
    let recurrence = r_n1 * k_n - k_shifted * r_z;

    // spectral: dR/dz + R A_n - A_n(rho +- 1) R
    let rs = residue_set(system, data, n)?;
    let a_n = rs.spectral_matrix(data, z)?;
    let tr = transformed_residues(&rs, system, data, j, direction, n)?;
    let shifted_data = SemiClassicalData::from_weight(&apply_shift(spec, data, j, direction)?)?;
    let a_shifted = tr.set.spectral_matrix(&shifted_data, z)?;
    let spectral = gen.gen.deriv(z)? + r_z * a_n - a_shifted * r_z;

    // deformation: dR/dt + R B_n - B_n(rho +- 1) R, with dR/dt by central
    // finite differences of the generator under the moving singularities
    let b_n = deformation_matrix(&rs, system, data, velocities, z)?;
    let shifted_spec = apply_shift(spec, data, j, direction)?;
    let shifted_table = shifted_spec.fourier_coefficients(system.tol, 1 << 16)?;
    let shifted_system = build_system(&shifted_table, system.n_max, system.tol)?;
    let rs_shifted = residue_set(&shifted_system, &shifted_data, n)?;
    let b_shifted = deformation_matrix(&rs_shifted, &shifted_system, &shifted_data, velocities, z)?;

    let r_at = |t: f64| -> Result<Mat2> {
        let moved = crate::semiclassical::shift_singularities(spec, data, velocities, t)?;
        let table = moved.fourier_coefficients(system.tol, 1 << 16)?;
        let sys_t = build_system(&table, n + 2, system.tol)?;
        let data_t = SemiClassicalData::from_weight(&moved)?;
        schlesinger_matrix(&sys_t, &data_t, j, direction, n)?.gen.eval(z)
    };
    let r_dot = (r_at(fd_step)? - r_at(-fd_step)?).scale(c(1.0 / (2.0 * fd_step), 0.0));
    let deformation = r_dot + r_z * b_n - b_shifted * r_z;

    Ok(CompatibilityResiduals {
        recurrence,
        spectral,
        deformation,
    })
}

/// R^{j+} evaluated from explicit data (used for shifted-system generators).
#[allow(clippy::too_many_arguments)]
fn r_plus_eval(
    kappa_n: C64,
    kappa_n1: C64,
    kappa_plus: C64,
    phi_n_zj: C64,
    phi_n1_zj: C64,
    phistar_n_zj: C64,
    phi_n1_0: C64,
    zj: C64,
    z: C64,
) -> Mat2 {
    Mat2::new(
        z - kappa_n * phi_n1_zj / (kappa_n1 * phi_n_zj),
        phi_n1_0 / kappa_n1,
        phistar_n_zj * z / phi_n_zj,
        -zj,
    )
    .scale(kappa_plus / (kappa_n * (z - zj)))
}

/// R^{j-} evaluated from explicit data.
#[allow(clippy::too_many_arguments)]
fn r_minus_eval(
    kappa_n: C64,
    kappa_nm1: C64,
    kappa_minus: C64,
    xi_n_zj: C64,
    xistar_n_zj: C64,
    xistar_nm1_zj: C64,
    phibar_n_0: C64,
    zj: C64,
    z: C64,
) -> Mat2 {
    let u = kappa_n * xistar_n_zj / (kappa_nm1 * xistar_nm1_zj);
    let v = kappa_n * xi_n_zj / (kappa_nm1 * xistar_nm1_zj);
    let s = phibar_n_0 * xistar_n_zj / (kappa_nm1 * xistar_nm1_zj);
    Mat2::new(u, v, s * z / zj, c(1.0, 0.0) - u * z / zj).scale(kappa_minus / kappa_n)
}

/// Commutativity residual of two distinct elementary shifts, plus the
/// symmetric double-shift kappa^2 disagreement.
#[allow(clippy::too_many_arguments)]
pub fn commutativity_residual(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j: usize,
    k: usize,
    dir_j: i64,
    dir_k: i64,
    n: usize,
    z: C64,
) -> Result<(Mat2, f64)> {
    if j == k {
        return Err(Error::Validity("commutativity needs j != k".into()));
    }
    singularity(data, j)?;
    singularity(data, k)?;

    // R^{j dir_j}(rho_k shifted at z_j) from the k-shifted data
    let r_j_shifted = shifted_generator_eval(system, data, j, dir_j, k, dir_k, n, z)?;
    let r_k = schlesinger_matrix(system, data, k, dir_k, n)?.gen.eval(z)?;
    let lhs = r_j_shifted * r_k;

    let r_k_shifted = shifted_generator_eval(system, data, k, dir_k, j, dir_j, n, z)?;
    let r_j = schlesinger_matrix(system, data, j, dir_j, n)?.gen.eval(z)?;
    let rhs = r_k_shifted * r_j;

    // double-shift kappa^2 computed in both orders
    let kappa_jk = double_shift_kappa_sq(system, data, j, dir_j, k, dir_k, n)?;
    let kappa_kj = double_shift_kappa_sq(system, data, k, dir_k, j, dir_j, n)?;
    let kappa_diff = (kappa_jk - kappa_kj).norm() / kappa_jk.norm().max(1.0);

    Ok((lhs - rhs, kappa_diff))
}

/// kappa^2 of the system shifted first at (k2, dir2) then at (j1, dir1).
fn double_shift_kappa_sq(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j1: usize,
    dir1: i64,
    k2: usize,
    dir2: i64,
    n: usize,
) -> Result<C64> {
    let (zj, _) = singularity(data, j1)?;
    let sc_n = shifted_coeffs(system, data, k2, dir2, n)?;
    let sc_n1 = shifted_coeffs(system, data, k2, dir2, n + 1)?;
    let ev_n = shifted_evaluations(system, data, k2, dir2, n)?;
    let ev_n1 = shifted_evaluations(system, data, k2, dir2, n + 1)?;
    let at = |evs: &[ShiftedPoint], idx: usize| evs[idx - 1];
    let kappa_n = sc_n.kappa_sq.sqrt();
    let kappa_n1 = sc_n1.kappa_sq.sqrt();
    match dir1 {
        1 => {
            let phi_n = at(&ev_n, j1).phi;
            let phi_n1 = at(&ev_n1, j1).phi;
            if phi_n.norm() < 1e-13 || phi_n1.norm() < 1e-13 {
                return Err(Error::Degeneracy(
                    "double shift needs the shifted polynomial nonzero at z_j".into(),
                ));
            }
            Ok(-kappa_n1 * kappa_n * phi_n / phi_n1)
        }
        -1 => {
            if n == 0 {
                return Err(Error::Range("double down-shift needs n >= 1".into()));
            }
            let ev_nm1 = shifted_evaluations(system, data, k2, dir2, n - 1)?;
            let xis_nm1 = at(&ev_nm1, j1).xistar;
            let xis_n = at(&ev_n, j1).xistar;
            if xis_nm1.norm() < 1e-13 || xis_n.norm() < 1e-13 {
                return Err(Error::Degeneracy(
                    "double shift needs the shifted xi* nonzero at z_j".into(),
                ));
            }
            let kappa_nm1 = shifted_coeffs(system, data, k2, dir2, n - 1)?.kappa_sq.sqrt();
            Ok(-kappa_n * kappa_nm1 * zj * xis_nm1 / xis_n)
        }
        _ => Err(Error::Validity("direction must be +1 or -1".into())),
    }
}

/// Evaluate R^{j1 dir1}_n of the (k2, dir2)-shifted system at z, entirely
/// from the shifted-system formulas.
#[allow(clippy::too_many_arguments)]
fn shifted_generator_eval(
    system: &BopsSystem,
    data: &SemiClassicalData,
    j1: usize,
    dir1: i64,
    k2: usize,
    dir2: i64,
    n: usize,
    z: C64,
) -> Result<Mat2> {
    let (zj, _) = singularity(data, j1)?;
    let sc_n = shifted_coeffs(system, data, k2, dir2, n)?;
    let kappa_n = sc_n.kappa_sq.sqrt();
    let kappa_double = double_shift_kappa_sq(system, data, j1, dir1, k2, dir2, n)?.sqrt();
    let ev_n = shifted_evaluations(system, data, k2, dir2, n)?;
    let at = |evs: &[ShiftedPoint], idx: usize| evs[idx - 1];
    match dir1 {
        1 => {
            let sc_n1 = shifted_coeffs(system, data, k2, dir2, n + 1)?;
            let kappa_n1 = sc_n1.kappa_sq.sqrt();
            let ev_n1 = shifted_evaluations(system, data, k2, dir2, n + 1)?;
            Ok(r_plus_eval(
                kappa_n,
                kappa_n1,
                kappa_double,
                at(&ev_n, j1).phi,
                at(&ev_n1, j1).phi,
                at(&ev_n, j1).phistar,
                sc_n1.r * kappa_n1,
                zj,
                z,
            ))
        }
        -1 => {
            if n == 0 {
                return Err(Error::Range("down-shift generator needs n >= 1".into()));
            }
            let sc_nm1 = shifted_coeffs(system, data, k2, dir2, n - 1)?;
            let kappa_nm1 = sc_nm1.kappa_sq.sqrt();
            let ev_nm1 = shifted_evaluations(system, data, k2, dir2, n - 1)?;
            Ok(r_minus_eval(
                kappa_n,
                kappa_nm1,
                kappa_double,
                at(&ev_n, j1).xi,
                at(&ev_n, j1).xistar,
                at(&ev_nm1, j1).xistar,
                sc_n.rbar * kappa_n,
                zj,
                z,
            ))
        }
        _ => Err(Error::Validity("direction must be +1 or -1".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (WeightSpec, BopsSystem, SemiClassicalData) {
        let w = WeightSpec::semiclassical_m2();
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        let sys = build_system(&t, 12, 1e-12).unwrap();
        let data = SemiClassicalData::from_weight(&w).unwrap();
        (w, sys, data)
    }

    fn rebuild(spec: &WeightSpec, n_max: usize) -> BopsSystem {
        let t = spec.fourier_coefficients(1e-12, 1 << 16).unwrap();
        build_system(&t, n_max, 1e-12).unwrap()
    }

    #[test]
    fn inverse_pair_is_identity() {
        let (_, sys, data) = setup();
        for n in [1usize, 3] {
            for dir in [1i64, -1] {
                let r = schlesinger_matrix(&sys, &data, 2, dir, n).unwrap();
                for m in 0..8 {
                    let theta = 0.3 + 0.77 * m as f64;
                    let z = c(0.6 * theta.cos(), 0.6 * theta.sin()) + c(0.05, 0.02);
                    let ri = inverse_schlesinger_eval(&sys, &data, 2, dir, n, z).unwrap();
                    let prod = ri * r.gen.eval(z).unwrap();
                    assert!(
                        (prod - Mat2::identity()).norm_max() < 1e-9,
                        "dir {dir} n {n} z {z}: {prod:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn determinant_identities() {
        let (_, sys, data) = setup();
        let zj = data.singularities[1].z;
        for n in [0usize, 2, 4] {
            let rp = schlesinger_matrix(&sys, &data, 2, 1, n).unwrap();
            let rm = schlesinger_matrix(&sys, &data, 2, -1, n).unwrap();
            for m in 0..4 {
                let z = c(1.5 + 0.2 * m as f64, 0.3 - 0.15 * m as f64);
                let dp = rp.gen.eval(z).unwrap().det() * (z - zj);
                assert!((dp - c(1.0, 0.0)).norm() < 1e-9, "det R+ n={n}");
                let dm = rm.gen.eval(z).unwrap().det() / (z - zj);
                assert!((dm - c(1.0, 0.0)).norm() < 1e-9, "det R- n={n}");
            }
        }
    }

    #[test]
    fn shifted_coeffs_match_rebuilt_weight() {
        let (w, sys, data) = setup();
        for (j, dir) in [(1usize, 1i64), (2, 1), (1, -1), (2, -1)] {
            let shifted = apply_shift(&w, &data, j, dir).unwrap();
            let rsys = rebuild(&shifted, 9);
            for n in 0..=7usize {
                let sc = shifted_coeffs(&sys, &data, j, dir, n).unwrap();
                let oracle = rsys.i_det(n).unwrap() / rsys.i_det(n + 1).unwrap();
                assert!(
                    (sc.kappa_sq - oracle).norm() < 1e-8 * oracle.norm().max(1.0),
                    "kappa^2 j={j} dir={dir} n={n}: {} vs {oracle}",
                    sc.kappa_sq
                );
                assert!(
                    (sc.r - rsys.r(n).unwrap()).norm() < 1e-8,
                    "r j={j} dir={dir} n={n}"
                );
                assert!(
                    (sc.rbar - rsys.rbar(n).unwrap()).norm() < 1e-8,
                    "rbar j={j} dir={dir} n={n}"
                );
                assert!(sc.form_residual < 1e-9, "forms j={j} dir={dir} n={n}: {}", sc.form_residual);
            }
        }
    }

    #[test]
    fn up_then_down_is_identity() {
        let (w, sys, data) = setup();
        let j = 2usize;
        let up = apply_shift(&w, &data, j, 1).unwrap();
        let up_data = SemiClassicalData::from_weight(&up).unwrap();
        let up_sys = rebuild(&up, 10);
        for n in 0..=6usize {
            let down = shifted_coeffs(&up_sys, &up_data, j, -1, n).unwrap();
            let base_kappa_sq = sys.i_det(n).unwrap() / sys.i_det(n + 1).unwrap();
            assert!(
                (down.kappa_sq - base_kappa_sq).norm() < 1e-9 * base_kappa_sq.norm().max(1.0),
                "n = {n}"
            );
            assert!((down.r - sys.r(n).unwrap()).norm() < 1e-9);
            assert!((down.rbar - sys.rbar(n).unwrap()).norm() < 1e-9);
        }
    }

    #[test]
    fn shifted_evaluations_match_rebuilt() {
        let (w, sys, data) = setup();
        for dir in [1i64, -1] {
            let j = 2usize;
            let shifted = apply_shift(&w, &data, j, dir).unwrap();
            let rsys = rebuild(&shifted, 9);
            for n in 1..=6usize {
                let evs = shifted_evaluations(&sys, &data, j, dir, n).unwrap();
                let sign = {
                    let formula_kappa = shifted_coeffs(&sys, &data, j, dir, n)
                        .unwrap()
                        .kappa_sq
                        .sqrt();
                    formula_kappa / rsys.kappa(n).unwrap()
                };
                assert!(
                    ((sign - c(1.0, 0.0)).norm() < 1e-6) || ((sign + c(1.0, 0.0)).norm() < 1e-6)
                );
                for ev in &evs {
                    let zk = data.singularities[ev.k - 1].z;
                    let a = rsys.associated(n as i64, zk).unwrap();
                    let want_phi = rsys.phi(n).unwrap().eval(zk) * sign;
                    assert!(
                        (ev.phi - want_phi).norm() < 1e-8 * want_phi.norm().max(1.0),
                        "phi dir={dir} n={n} k={}: {} vs {want_phi}",
                        ev.k,
                        ev.phi
                    );
                    let want = rsys.phistar(n).unwrap().eval(zk) * sign;
                    assert!(
                        (ev.phistar - want).norm() < 1e-8 * want.norm().max(1.0),
                        "phi* dir={dir} n={n} k={}",
                        ev.k
                    );
                    let want = a.xi * sign;
                    assert!(
                        (ev.xi - want).norm() < 1e-8 * want.norm().max(1.0),
                        "xi dir={dir} n={n} k={}: {} vs {want}",
                        ev.k,
                        ev.xi
                    );
                    let want = a.xi_star * sign;
                    assert!(
                        (ev.xistar - want).norm() < 1e-8 * want.norm().max(1.0),
                        "xi* dir={dir} n={n} k={}",
                        ev.k
                    );
                }
            }
        }
    }

    #[test]
    fn casoratian_transfers_to_shifted_evaluations() {
        let (_, sys, data) = setup();
        let n = 3usize;
        for dir in [1i64, -1] {
            let evs = shifted_evaluations(&sys, &data, 1, dir, n).unwrap();
            for ev in &evs {
                let zk = data.singularities[ev.k - 1].z;
                let cas = ev.phi * ev.xistar + ev.xi * ev.phistar - 2.0 * zk.powi(n as i32);
                assert!(cas.norm() < 1e-8, "dir={dir} k={}: {cas}", ev.k);
            }
        }
    }

    #[test]
    fn transformed_residue_routes_agree() {
        let (_, sys, data) = setup();
        for dir in [1i64, -1] {
            for n in 1..=5usize {
                let rs = residue_set(&sys, &data, n).unwrap();
                let tr = transformed_residues(&rs, &sys, &data, 2, dir, n).unwrap();
                assert!(
                    tr.route_residual < 1e-9,
                    "routes dir={dir} n={n}: {}",
                    tr.route_residual
                );
                assert!(
                    tr.sum_residual < 1e-9,
                    "sum dir={dir} n={n}: {}",
                    tr.sum_residual
                );
            }
        }
    }

    #[test]
    fn transformed_residue_eigenvalues() {
        let (_, sys, data) = setup();
        let n = 3usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        let tr = transformed_residues(&rs, &sys, &data, 2, 1, n).unwrap();
        let rho2 = data.singularities[1].rho;
        let eig = tr.set.a[2].eigenvalues();
        assert!(eig[0].norm() < 1e-8);
        assert!((eig[1] + rho2 + c(1.0, 0.0)).norm() < 1e-8, "{:?}", eig);
    }

    #[test]
    fn transformed_residues_match_rebuilt() {
        let (w, sys, data) = setup();
        let j = 2usize;
        let dir = 1i64;
        let n = 3usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        let tr = transformed_residues(&rs, &sys, &data, j, dir, n).unwrap();
        let shifted = apply_shift(&w, &data, j, dir).unwrap();
        let sdata = SemiClassicalData::from_weight(&shifted).unwrap();
        let ssys = rebuild(&shifted, 7);
        let rs_oracle = residue_set(&ssys, &sdata, n).unwrap();
        for k in 0..=data.m() {
            let d = (tr.set.a[k] - rs_oracle.a[k]).norm_max();
            assert!(d < 1e-8, "A_{k}: {:?} vs {:?}", tr.set.a[k], rs_oracle.a[k]);
        }
    }

    #[test]
    fn compatibility_residuals_small() {
        let (w, sys, data) = setup();
        let vels = [c(0.0, 0.5), c(1.0, 0.0)];
        for dir in [1i64, -1] {
            let res = compatibility_residuals(
                &sys,
                &w,
                &data,
                2,
                dir,
                3,
                c(0.55, 0.3),
                &vels,
                1e-5,
            )
            .unwrap();
            assert!(res.recurrence.norm_max() < 1e-10, "recurrence dir={dir}");
            assert!(res.spectral.norm_max() < 1e-8, "spectral dir={dir}: {:?}", res.spectral);
            assert!(res.deformation.norm_max() < 1e-5, "deformation dir={dir}: {:?}", res.deformation);
        }
    }

    #[test]
    fn commutativity() {
        let (_, sys, data) = setup();
        let z = c(0.8, 0.45);
        for (dj, dk) in [(1i64, 1i64), (1, -1), (-1, -1)] {
            let (res, kdiff) = commutativity_residual(&sys, &data, 1, 2, dj, dk, 2, z).unwrap();
            assert!(
                res.norm_max() < 1e-9,
                "commute ({dj},{dk}): {:?}",
                res
            );
            if dj == 1 && dk == 1 {
                assert!(kdiff < 1e-10, "double kappa: {kdiff}");
            }
        }
    }

    #[test]
    fn specialization_matches_cgu_generator() {
        let (_, sys, data) = setup();
        let zj = data.singularities[1].z;
        let r = schlesinger_matrix(&sys, &data, 2, 1, 2).unwrap();
        let g = cgu::generator(&sys, GenKind::K1, zj, 2).unwrap();
        let z = c(0.3, 0.6);
        assert!((r.gen.eval(z).unwrap() - g.eval(z).unwrap()).norm_max() < 1e-14);
    }
}
