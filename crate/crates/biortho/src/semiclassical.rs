//! Regular semi-classical structure: singularity data, the spectral matrix
//! in residue form, formal monodromy, bilinear product relations and
//! deformation derivatives along trajectories of the singularities.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bops::BopsSystem;
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::poly::Polynomial;
use crate::weight::{FactorKind, WeightSpec, ZERO_MERGE_TOL};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A finite singularity of the weight away from the origin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Singularity {
    #[serde(with = "crate::weight::serde_c64")]
    pub z: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub rho: C64,
}

/// Singularity data of a regular semi-classical weight: the origin exponent
/// rho_0, the finite singularities z_1..z_M and the polynomials V, W of the
/// logarithmic derivative w'/w = 2V/W.
#[derive(Debug, Clone)]
pub struct SemiClassicalData {
    pub rho0: C64,
    pub singularities: Vec<Singularity>,
    pub v: Polynomial,
    pub w: Polynomial,
    pub warnings: Vec<String>,
}

impl SemiClassicalData {
    /// Extract singularity data from a factor-based weight.
    pub fn from_weight(spec: &WeightSpec) -> Result<Self> {
        spec.validate()?;
        let factors = spec.factors.as_ref().ok_or_else(|| {
            Error::InvalidWeight(
                "semi-classical data needs a factor-based weight (no singularity data)".into(),
            )
        })?;
        let mut rho0 = c(0.0, 0.0);
        let mut sing: Vec<Singularity> = Vec::new();
        let add = |z: C64, rho: C64, sing: &mut Vec<Singularity>| {
            for s in sing.iter_mut() {
                if (s.z - z).norm() < ZERO_MERGE_TOL * z.norm().max(1.0) {
                    s.rho += rho;
                    return;
                }
            }
            sing.push(Singularity { z, rho });
        };
        for f in factors {
            match f.kind {
                FactorKind::Outer => add(f.zero.unwrap(), f.exponent, &mut sing),
                FactorKind::Conjugated => {
                    add(f.zero.unwrap(), f.exponent, &mut sing);
                    rho0 -= f.exponent;
                }
                FactorKind::Monomial => rho0 += f.exponent,
            }
        }
        if let Some(m) = &spec.rational_mod {
            let one = c(1.0, 0.0);
            for &a in &m.alphas {
                add(a, one, &mut sing);
            }
            for &a in &m.alpha_stars {
                add(a, one, &mut sing);
                rho0 -= one;
            }
            for &b in &m.betas {
                add(b, -one, &mut sing);
            }
            for &b in &m.beta_stars {
                add(b, -one, &mut sing);
                rho0 += one;
            }
        }
        sing.retain(|s| s.rho.norm() > ZERO_MERGE_TOL);
        if sing.is_empty() {
            return Err(Error::InvalidWeight(
                "weight is not regular semi-classical with deg W >= 2 (no finite singularities)"
                    .into(),
            ));
        }

        // W = z prod (z - z_j), V = (W/2) sum rho_j / (z - z_j)
        let mut w = Polynomial::from_coeffs(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        for s in &sing {
            w = w.mul(&Polynomial::from_coeffs(vec![-s.z, c(1.0, 0.0)]));
        }
        let mut v = Polynomial::zero();
        let all: Vec<(C64, C64)> = std::iter::once((c(0.0, 0.0), rho0))
            .chain(sing.iter().map(|s| (s.z, s.rho)))
            .collect();
        for (j, &(_, rho)) in all.iter().enumerate() {
            let mut p = Polynomial::constant(rho * 0.5);
            for (k, &(zk, _)) in all.iter().enumerate() {
                if k != j {
                    p = p.mul(&Polynomial::from_coeffs(vec![-zk, c(1.0, 0.0)]));
                }
            }
            v = v.add(&p);
        }

        let mut warnings = Vec::new();
        let wp = w.derivative();
        for (j, &(zj, rho)) in all.iter().enumerate() {
            let resid = 2.0 * v.eval(zj) / wp.eval(zj);
            if (resid - rho).norm() > 1e-9 * rho.norm().max(1.0) {
                warnings.push(format!(
                    "residue mismatch at z_{j}: 2V/W' = {resid}, factor exponent {rho}"
                ));
            }
            let is_nonneg_int =
                rho.im.abs() < 1e-12 && rho.re >= -1e-12 && (rho.re - rho.re.round()).abs() < 1e-12;
            if is_nonneg_int && j >= 1 {
                warnings.push(format!(
                    "rho_{j} = {rho} is a nonnegative integer; generic-condition checks suppressed"
                ));
            }
        }
        for (i, a) in all.iter().enumerate() {
            for b in all.iter().skip(i + 1) {
                if (a.0 - b.0).norm() < ZERO_MERGE_TOL {
                    warnings.push(format!("coincident singularities at {}", a.0));
                }
            }
        }

        Ok(Self {
            rho0,
            singularities: sing,
            v,
            w,
            warnings,
        })
    }

    /// Number of finite singularities away from the origin.
    pub fn m(&self) -> usize {
        self.singularities.len()
    }

    /// Sum of all exponents rho_0 + ... + rho_M.
    pub fn rho_total(&self) -> C64 {
        self.rho0 + self.singularities.iter().map(|s| s.rho).sum::<C64>()
    }

    /// Logarithmic derivative w'/w = sum_j rho_j / (z - z_j).
    pub fn log_derivative(&self, z: C64) -> C64 {
        let mut acc = self.rho0 / z;
        for s in &self.singularities {
            acc += s.rho / (z - s.z);
        }
        acc
    }
}

/// Evaluations of the system at one singular point.
#[derive(Debug, Clone, Copy)]
pub struct PointData {
    pub phi: C64,
    pub phistar: C64,
    pub xi: C64,
    pub xistar: C64,
}

/// Evaluate phi, phi*, xi, xi* at the j-th singularity (j >= 1).
pub fn point_data(system: &BopsSystem, data: &SemiClassicalData, n: usize, j: usize) -> Result<PointData> {
    let zj = data
        .singularities
        .get(j - 1)
        .ok_or_else(|| Error::Range(format!("singularity index {j} out of range")))?
        .z;
    let a = system.associated(n as i64, zj)?;
    Ok(PointData {
        phi: system.phi(n)?.eval(zj),
        phistar: system.phistar(n)?.eval(zj),
        xi: a.xi,
        xistar: a.xi_star,
    })
}

/// Residue matrices of the spectral matrix A_n at z_0 = 0, z_1..z_M and
/// infinity.
#[derive(Debug, Clone)]
pub struct ResidueSet {
    pub n: usize,
    /// index 0 is the origin residue, 1..=M the finite singularities
    pub a: Vec<Mat2>,
    pub a_inf: Mat2,
}

/// Assemble the residue matrices of A_n.
///
/// The residue at infinity is computed from its closed form and
/// cross-checked against minus the sum of the finite residues.
pub fn residue_set(system: &BopsSystem, data: &SemiClassicalData, n: usize) -> Result<ResidueSet> {
    let r_n = system.r(n)?;
    let rbar_n = system.rbar(n)?;
    let nn = c(n as f64, 0.0);
    let mut a = Vec::with_capacity(data.m() + 1);
    a.push(Mat2::new(nn - data.rho0, -(nn - data.rho0) * r_n, c(0.0, 0.0), c(0.0, 0.0)));
    for j in 1..=data.m() {
        let s = data.singularities[j - 1];
        let p = point_data(system, data, n, j)?;
        let scale = -s.rho / (2.0 * s.z.powi(n as i32));
        a.push(
            Mat2::new(
                p.phistar * p.xi,
                -p.phi * p.xi,
                -p.phistar * p.xistar,
                p.phi * p.xistar,
            )
            .scale(scale),
        );
    }
    let rho_total = data.rho_total();
    let a_inf = Mat2::new(
        -nn,
        c(0.0, 0.0),
        -(nn + rho_total) * rbar_n,
        rho_total,
    );
    let mut sum = Mat2::zero();
    for m in &a {
        sum = sum + *m;
    }
    let mismatch = (a_inf + sum).norm_max();
    let scale = a_inf.norm_max().max(1.0);
    if mismatch > 1e-7 * scale {
        return Err(Error::Consistency(
            format!("residue sum at infinity disagrees with its closed form (n = {n})"),
            mismatch,
        ));
    }
    Ok(ResidueSet { n, a, a_inf })
}

impl ResidueSet {
    /// A_n(z) = sum_j A_{n,j} / (z - z_j).
    pub fn spectral_matrix(&self, data: &SemiClassicalData, z: C64) -> Result<Mat2> {
        let mut acc = Mat2::zero();
        let poles: Vec<C64> = std::iter::once(c(0.0, 0.0))
            .chain(data.singularities.iter().map(|s| s.z))
            .collect();
        for (j, &zj) in poles.iter().enumerate() {
            let d = z - zj;
            if d.norm() < 1e-12 {
                return Err(Error::Domain(format!(
                    "spectral matrix evaluated at its pole z_{j} = {zj}"
                )));
            }
            acc = acc + self.a[j].scale(c(1.0, 0.0) / d);
        }
        Ok(acc)
    }

    /// Residual of the trace identity Tr A_n = n/z - w'/w.
    pub fn trace_residual(&self, data: &SemiClassicalData, z: C64) -> Result<C64> {
        let tr = self.spectral_matrix(data, z)?.trace();
        Ok(tr - c(self.n as f64, 0.0) / z + data.log_derivative(z))
    }
}

/// Formal monodromy data at one singular point.
#[derive(Debug, Clone)]
pub struct MonodromyEntry {
    /// 0 = origin, 1..=M finite, M+1 = infinity
    pub index: usize,
    pub theta: C64,
    pub t: Mat2,
    pub g: Mat2,
    /// entrywise residual of G T G^{-1} - A
    pub diag_residual: f64,
}

/// Diagonalize every residue matrix as A = G T G^{-1} with the scale
/// constants d_j = 1, and report the exponent bookkeeping.
pub fn formal_monodromy(
    rs: &ResidueSet,
    system: &BopsSystem,
    data: &SemiClassicalData,
) -> Result<Vec<MonodromyEntry>> {
    let n = rs.n;
    let nn = c(n as f64, 0.0);
    let kappa = system.kappa(n)?;
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let mut out = Vec::with_capacity(data.m() + 2);

    let push = |entries: &mut Vec<MonodromyEntry>,
                index: usize,
                theta: C64,
                t: Mat2,
                g: Mat2,
                a: Mat2|
     -> Result<()> {
        let gi = g
            .inv()
            .map_err(|_| Error::Degeneracy(format!("G_{{n,{index}}} numerically singular")))?;
        let residual = (g * t * gi - a).norm_max();
        entries.push(MonodromyEntry {
            index,
            theta,
            t,
            g,
            diag_residual: residual,
        });
        Ok(())
    };

    // origin
    let t0 = Mat2::new(zero, zero, zero, nn - data.rho0);
    let g0 = Mat2::new(system.phi(n)?.coeff(0), one / kappa, kappa, zero);
    push(&mut out, 0, nn - data.rho0, t0, g0, rs.a[0])?;
    // finite singularities
    for j in 1..=data.m() {
        let s = data.singularities[j - 1];
        let p = point_data(system, data, n, j)?;
        let t = Mat2::new(zero, zero, zero, -s.rho);
        let g = Mat2::new(p.phi, p.xi, p.phistar, -p.xistar);
        push(&mut out, j, -s.rho, t, g, rs.a[j])?;
    }
    // infinity
    let rho_total = data.rho_total();
    let t_inf = Mat2::new(-nn, zero, zero, rho_total);
    let g_inf = Mat2::new(kappa, zero, system.phibar(n)?.coeff(0), one / kappa);
    push(&mut out, data.m() + 1, nn + rho_total, t_inf, g_inf, rs.a_inf)?;
    Ok(out)
}

/// Spectral-coefficient evaluations recovered from the bilinear products at
/// a singular point, plus the consistency residuals of the redundant pairs.
#[derive(Debug, Clone)]
pub struct BilinearData {
    pub theta: C64,
    pub theta_star: C64,
    pub omega: C64,
    pub omega_star: C64,
    pub v_at: C64,
    /// residual of the alternative omega route
    pub omega_alt_residual: f64,
    /// residual of the alternative omega* route
    pub omega_star_alt_residual: f64,
    /// disagreement of the two expressions for phi_n xi*_n
    pub phi_xistar_residual: f64,
    /// disagreement of the two expressions for phi*_n xi_n
    pub phistar_xi_residual: f64,
}

/// Invert the bilinear product relations at singularity j >= 1 for the
/// spectral-coefficient evaluations Theta, Theta*, Omega, Omega*.
pub fn bilinear_products(
    system: &BopsSystem,
    data: &SemiClassicalData,
    n: usize,
    j: usize,
) -> Result<BilinearData> {
    let s = data
        .singularities
        .get(j - 1)
        .ok_or_else(|| Error::Range(format!("singularity index {j} out of range")))?;
    let zj = s.z;
    let v_at = data.v.eval(zj);
    let kappa_n = system.kappa(n)?;
    let kappa_n1 = system.kappa(n + 1)?;
    let phi_n1_0 = system.phi(n + 1)?.coeff(0);
    let phibar_n1_0 = system.phibar(n + 1)?.coeff(0);
    let zn = zj.powi(n as i32);
    let p = point_data(system, data, n, j)?;
    let p1 = point_data(system, data, n + 1, j)?;

    if phi_n1_0.norm() < 1e-13 {
        return Err(Error::Degeneracy(format!(
            "phi_{}(0) = 0: Theta inversion impossible",
            n + 1
        )));
    }
    if phibar_n1_0.norm() < 1e-13 {
        return Err(Error::Degeneracy(format!(
            "phibar_{}(0) = 0: Theta* inversion impossible",
            n + 1
        )));
    }

    let theta = p.phi * p.xi * kappa_n * v_at / (phi_n1_0 * zn);
    let theta_star = -p.phistar * p.xistar * kappa_n * v_at / (phibar_n1_0 * zn * zj);
    let omega = v_at * (p1.phi * p.xi * kappa_n / (phi_n1_0 * zn) - 1.0);
    let omega_star = v_at * (1.0 - p1.phistar * p.xistar * kappa_n / (phibar_n1_0 * zn * zj));

    // redundant pair: phi_n xi_{n+1} should reproduce (omega - V)
    let omega_alt = v_at * (p.phi * p1.xi * kappa_n / (phi_n1_0 * zn) + 1.0);
    // redundant pair: phi*_n xi*_{n+1} should reproduce (omega* + V)
    let omega_star_alt = v_at * (-p.phistar * p1.xistar * kappa_n / (phibar_n1_0 * zn * zj) - 1.0);

    let kr = kappa_n1 / kappa_n;
    let e_g = -zn / v_at * (omega - v_at - kr * zj * theta);
    let e_h = -zn / v_at * (omega_star - v_at - kr * theta_star);
    let e_i = zn / v_at * (omega + v_at - kr * zj * theta);
    let e_j = zn / v_at * (omega_star + v_at - kr * theta_star);

    let scale = (p.phi * p.xistar).norm().max(1.0);
    Ok(BilinearData {
        theta,
        theta_star,
        omega,
        omega_star,
        v_at,
        omega_alt_residual: (omega - omega_alt).norm() / v_at.norm().max(1.0),
        omega_star_alt_residual: (omega_star - omega_star_alt).norm() / v_at.norm().max(1.0),
        phi_xistar_residual: ((p.phi * p.xistar - e_g).norm() + (e_g - e_h).norm()) / scale,
        phistar_xi_residual: ((p.phistar * p.xi - e_i).norm() + (e_i - e_j).norm()) / scale,
    })
}

/// Deformation derivatives of the system data along singularity velocities.
#[derive(Debug, Clone)]
pub struct DeformationDerivs {
    pub kappa_dot_over_kappa: C64,
    pub r_dot: C64,
    pub rbar_dot: C64,
    /// d/dt of P_{n,j} = phi*_n(z_j)/phi_n(z_j), per j = 1..M
    pub p_dot: Vec<C64>,
    /// d/dt of Q_{n,j} = xi_n(z_j)/xi*_n(z_j), per j = 1..M
    pub q_dot: Vec<C64>,
}

/// Evaluate the closed-form deformation derivatives.
///
/// The sums over k != j are expressed through the residue-matrix entries,
/// which keeps the k = 0 term finite.
pub fn deformation_derivatives(
    system: &BopsSystem,
    data: &SemiClassicalData,
    n: usize,
    velocities: &[C64],
) -> Result<DeformationDerivs> {
    if velocities.len() != data.m() {
        return Err(Error::Range(format!(
            "expected {} velocities, got {}",
            data.m(),
            velocities.len()
        )));
    }
    let r_n = system.r(n)?;
    let rbar_n = system.rbar(n)?;
    let rs = residue_set(system, data, n)?;
    let points: Vec<PointData> = (1..=data.m())
        .map(|j| point_data(system, data, n, j))
        .collect::<Result<_>>()?;

    let mut kappa_dot = c(0.0, 0.0);
    let mut r_dot = c(0.0, 0.0);
    let mut rbar_dot = c(0.0, 0.0);
    for (k, p) in points.iter().enumerate() {
        let s = data.singularities[k];
        let vel = velocities[k] / s.z;
        let weight = s.rho / (2.0 * s.z.powi(n as i32));
        kappa_dot -= 0.5 * vel * weight * p.phi * p.xistar;
        r_dot += vel * weight * (p.phi - r_n * p.phistar) * p.xi;
        rbar_dot += vel * weight * (rbar_n * p.phi - p.phistar) * p.xistar;
    }

    // per-singularity derivatives of P and Q
    let zs: Vec<C64> = std::iter::once(c(0.0, 0.0))
        .chain(data.singularities.iter().map(|s| s.z))
        .collect();
    let vels: Vec<C64> = std::iter::once(c(0.0, 0.0))
        .chain(velocities.iter().copied())
        .collect();
    let mut p_dot = Vec::with_capacity(data.m());
    let mut q_dot = Vec::with_capacity(data.m());
    for j in 1..=data.m() {
        let pj = &points[j - 1];
        if pj.phi.norm() < 1e-13 {
            return Err(Error::Degeneracy(format!("phi_{n}(z_{j}) = 0")));
        }
        if pj.xistar.norm() < 1e-13 {
            return Err(Error::Degeneracy(format!("xi*_{n}(z_{j}) = 0")));
        }
        let p_nj = pj.phistar / pj.phi;
        let q_nj = pj.xi / pj.xistar;

        let mut pd = c(0.0, 0.0);
        let mut qd = c(0.0, 0.0);
        for (k, p) in points.iter().enumerate() {
            let s = data.singularities[k];
            let vel = velocities[k] / s.z;
            let weight = s.rho / (2.0 * s.z.powi(n as i32));
            pd += vel * weight * (p.phi * p_nj - p.phistar) * p.xistar;
            qd -= vel * weight * q_nj * (p.phi + p.phistar * q_nj) * p.xistar;
        }
        for k in 0..=data.m() {
            if k == j {
                continue;
            }
            let a = rs.a[k];
            let ratio = (vels[j] - vels[k]) / (zs[j] - zs[k]);
            // rho_k/(2 z_k^n) [phi P - phi*][xi P + xi*] through A-entries
            let p_quad =
                p_nj * p_nj * a.e[0][1] + p_nj * (a.e[0][0] - a.e[1][1]) - a.e[1][0];
            pd -= ratio * p_quad;
            // rho_k/(2 z_k^n) [phi + phi* Q][xi - xi* Q] through A-entries
            let q_quad =
                a.e[0][1] + q_nj * (a.e[1][1] - a.e[0][0]) - q_nj * q_nj * a.e[1][0];
            qd -= ratio * q_quad;
        }
        p_dot.push(pd);
        q_dot.push(qd);
    }

    Ok(DeformationDerivs {
        kappa_dot_over_kappa: kappa_dot,
        r_dot,
        rbar_dot,
        p_dot,
        q_dot,
    })
}

/// The deformation matrix B_n(z) = B_inf - sum_j A_{n,j} zdot_j / (z - z_j).
pub fn deformation_matrix(
    rs: &ResidueSet,
    system: &BopsSystem,
    data: &SemiClassicalData,
    velocities: &[C64],
    z: C64,
) -> Result<Mat2> {
    let derivs = deformation_derivatives(system, data, rs.n, velocities)?;
    let b_inf = b_infinity(system, rs.n, &derivs)?;
    let mut acc = b_inf;
    for (j, s) in data.singularities.iter().enumerate() {
        let d = z - s.z;
        if d.norm() < 1e-12 {
            return Err(Error::Domain(format!(
                "deformation matrix evaluated at its pole z_{} = {}",
                j + 1,
                s.z
            )));
        }
        acc = acc - rs.a[j + 1].scale(velocities[j] / d);
    }
    Ok(acc)
}

/// B_infinity from the kappa and rbar deformation derivatives, as
/// Gdot_inf G_inf^{-1} with G_inf = [[kappa, 0], [phibar_n(0), 1/kappa]]:
/// the (2,1) entry is 2 (kappadot/kappa) rbar + rbardot.
pub fn b_infinity(system: &BopsSystem, n: usize, derivs: &DeformationDerivs) -> Result<Mat2> {
    let rbar = system.rbar(n)?;
    let kd = derivs.kappa_dot_over_kappa;
    Ok(Mat2::new(
        kd,
        c(0.0, 0.0),
        2.0 * kd * rbar + derivs.rbar_dot,
        -kd,
    ))
}

/// Deterministic deformation velocities that keep the branch convention of
/// every factor continuous: an outer factor at real-positive z_j > 1 must
/// not cross the positive real axis (its prefactor (-z_j)^rho would jump
/// branches), so such singularities move radially.
pub fn safe_velocities(data: &SemiClassicalData) -> Vec<C64> {
    data.singularities
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let real_positive_outer = s.z.im.abs() < 1e-9 && s.z.re > 1.0;
            if real_positive_outer {
                c(1.0 + 0.1 * idx as f64, 0.0)
            } else {
                c(0.1 * idx as f64, 0.5)
            }
        })
        .collect()
}

/// Move every finite singularity along its velocity: z_j -> z_j + zdot_j dt.
/// Used by the finite-difference oracles of the deformation theory.
///
/// The branch convention requires the trajectory of an outer factor to stay
/// clear of the positive real axis crossing; see `safe_velocities`.
pub fn shift_singularities(
    spec: &WeightSpec,
    data: &SemiClassicalData,
    velocities: &[C64],
    dt: f64,
) -> Result<WeightSpec> {
    let mut out = spec.clone();
    let factors = out
        .factors
        .as_mut()
        .ok_or_else(|| Error::InvalidWeight("singularity shift needs a factor-based weight".into()))?;
    for (j, s) in data.singularities.iter().enumerate() {
        let target = s.z + velocities[j] * dt;
        let mut moved = false;
        for f in factors.iter_mut() {
            if let Some(z0) = f.zero {
                if (z0 - s.z).norm() < ZERO_MERGE_TOL * s.z.norm().max(1.0) {
                    f.zero = Some(target);
                    moved = true;
                }
            }
        }
        if !moved {
            return Err(Error::InvalidWeight(format!(
                "no factor found at singularity z_{} = {}",
                j + 1,
                s.z
            )));
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bops::build_system;

    fn system_and_data() -> (WeightSpec, BopsSystem, SemiClassicalData) {
        let w = WeightSpec::semiclassical_m2();
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        let sys = build_system(&t, 10, 1e-12).unwrap();
        let data = SemiClassicalData::from_weight(&w).unwrap();
        (w, sys, data)
    }

    #[test]
    fn singularity_bookkeeping() {
        let (_, _, data) = system_and_data();
        assert_eq!(data.m(), 2);
        assert!((data.rho0 - c(-0.3, 0.0)).norm() < 1e-14);
        let zs: Vec<C64> = data.singularities.iter().map(|s| s.z).collect();
        assert!(zs.iter().any(|&z| (z - c(0.5, 0.0)).norm() < 1e-14));
        assert!(zs.iter().any(|&z| (z - c(2.0, 0.0)).norm() < 1e-14));
        assert!(data.warnings.is_empty(), "{:?}", data.warnings);
        // 2V/W equals the sum of simple poles
        let z = c(0.9, 0.4);
        let lhs = 2.0 * data.v.eval(z) / data.w.eval(z);
        assert!((lhs - data.log_derivative(z)).norm() < 1e-12);
    }

    #[test]
    fn log_derivative_matches_weight() {
        let (w, _, data) = system_and_data();
        let z = c(1.3, 0.7);
        assert!((data.log_derivative(z) - w.log_derivative(z).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn lebesgue_is_not_semiclassical() {
        assert!(SemiClassicalData::from_weight(&WeightSpec::one()).is_err());
    }

    #[test]
    fn residue_structure() {
        let (_, sys, data) = system_and_data();
        for n in 0..=6usize {
            let rs = residue_set(&sys, &data, n).unwrap();
            // origin residue: second row zero, (0,0) entry n - rho0
            assert!(rs.a[0].e[1][0].norm() < 1e-14);
            assert!(rs.a[0].e[1][1].norm() < 1e-14);
            assert!((rs.a[0].e[0][0] - (c(n as f64, 0.0) - data.rho0)).norm() < 1e-12);
            // determinants of finite residues vanish
            for j in 1..=data.m() {
                assert!(
                    rs.a[j].det().norm() < 1e-9 * rs.a[j].norm_max().max(1.0).powi(2),
                    "det A_{n},{j} = {}",
                    rs.a[j].det()
                );
            }
            // closed form at infinity matches the sum
            let mut sum = Mat2::zero();
            for m in &rs.a {
                sum = sum + *m;
            }
            assert!((rs.a_inf + sum).norm_max() < 1e-9);
        }
    }

    #[test]
    fn residue_eigenvalues() {
        let (_, sys, data) = system_and_data();
        let rs = residue_set(&sys, &data, 3).unwrap();
        let eig = rs.a[1].eigenvalues();
        let rho1 = data.singularities[0].rho;
        assert!(eig[0].norm() < 1e-9);
        assert!((eig[1] + rho1).norm() < 1e-9);
    }

    #[test]
    fn eigenvector_identities() {
        let (_, sys, data) = system_and_data();
        let n = 4usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        for j in 1..=data.m() {
            let s = data.singularities[j - 1];
            let p = point_data(&sys, &data, n, j).unwrap();
            let av = rs.a[j].apply([p.phi, p.phistar]);
            assert!(av[0].norm() < 1e-9 && av[1].norm() < 1e-9);
            let av = rs.a[j].apply([p.xi, -p.xistar]);
            assert!((av[0] + s.rho * p.xi).norm() < 1e-9);
            assert!((av[1] - s.rho * p.xistar).norm() < 1e-9);
        }
    }

    #[test]
    fn trace_identity() {
        let (_, sys, data) = system_and_data();
        let rs = residue_set(&sys, &data, 3).unwrap();
        for &z in &[c(0.3, 0.2), c(0.8, -0.3), c(1.7, 0.4), c(-2.5, 1.0)] {
            assert!(rs.trace_residual(&data, z).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn sum_identities() {
        let (_, sys, data) = system_and_data();
        for n in 0..=6usize {
            let r_n = sys.r(n).unwrap();
            let rbar_n = sys.rbar(n).unwrap();
            let mut s_a = c(0.0, 0.0);
            let mut s_b = c(0.0, 0.0);
            let mut s_c = c(0.0, 0.0);
            let mut s_d = c(0.0, 0.0);
            for j in 1..=data.m() {
                let s = data.singularities[j - 1];
                let p = point_data(&sys, &data, n, j).unwrap();
                let w = s.rho / (2.0 * s.z.powi(n as i32));
                s_a += w * p.phi * p.xi;
                s_b += w * p.phistar * p.xi;
                s_c += w * p.phi * p.xistar;
                s_d += w * p.phistar * p.xistar;
            }
            let nn = c(n as f64, 0.0);
            let rho_total = data.rho_total();
            assert!((s_a - (nn - data.rho0) * r_n).norm() < 1e-9, "a at n = {n}");
            assert!((s_b + data.rho0).norm() < 1e-9, "b at n = {n}");
            assert!((s_c - rho_total).norm() < 1e-9, "c at n = {n}");
            assert!((s_d - (nn + rho_total) * rbar_n).norm() < 1e-9, "d at n = {n}");
        }
    }

    #[test]
    fn spectral_ode_by_finite_differences() {
        let (w, sys, data) = system_and_data();
        let n = 3usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        for &z in &[c(0.3, 0.15), c(1.6, -0.6)] {
            let h = 1e-6;
            let yp = sys.y_matrix(&w, n as i64, z + c(h, 0.0)).unwrap().entries;
            let ym = sys.y_matrix(&w, n as i64, z - c(h, 0.0)).unwrap().entries;
            let dy = (yp - ym).scale(c(1.0 / (2.0 * h), 0.0));
            let ay = rs.spectral_matrix(&data, z).unwrap() * sys.y_matrix(&w, n as i64, z).unwrap().entries;
            assert!((dy - ay).norm_max() < 1e-7, "z = {z}");
        }
    }

    #[test]
    fn recurrence_spectral_compatibility() {
        let (_, sys, data) = system_and_data();
        let n = 3usize;
        let rs_n = residue_set(&sys, &data, n).unwrap();
        let rs_n1 = residue_set(&sys, &data, n + 1).unwrap();
        let kappa_n = sys.kappa(n).unwrap();
        for &z in &[c(0.4, 0.2), c(1.9, 0.8)] {
            let k = sys.k_matrix(n as i64, z).unwrap();
            let kp = Mat2::new(
                sys.kappa(n + 1).unwrap(),
                c(0.0, 0.0),
                sys.phibar(n + 1).unwrap().coeff(0),
                c(0.0, 0.0),
            )
            .scale(c(1.0, 0.0) / kappa_n);
            let lhs = kp;
            let rhs = rs_n1.spectral_matrix(&data, z).unwrap() * k
                - k * rs_n.spectral_matrix(&data, z).unwrap();
            assert!((lhs - rhs).norm_max() < 1e-9, "z = {z}");
        }
    }

    #[test]
    fn monodromy_diagonalization() {
        let (_, sys, data) = system_and_data();
        let n = 4usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        let entries = formal_monodromy(&rs, &sys, &data).unwrap();
        assert_eq!(entries.len(), data.m() + 2);
        let theta_sum: C64 = entries.iter().map(|e| e.theta).sum();
        assert!((theta_sum - c(2.0 * n as f64, 0.0)).norm() < 1e-12);
        for e in &entries {
            assert!(e.diag_residual < 1e-9, "index {}: {}", e.index, e.diag_residual);
        }
    }

    #[test]
    fn bilinear_consistency() {
        let (_, sys, data) = system_and_data();
        for n in 1..=5usize {
            for j in 1..=data.m() {
                let b = bilinear_products(&sys, &data, n, j).unwrap();
                assert!(b.omega_alt_residual < 1e-9, "n={n} j={j}");
                assert!(b.omega_star_alt_residual < 1e-9, "n={n} j={j}");
                assert!(b.phi_xistar_residual < 1e-9, "n={n} j={j}");
                assert!(b.phistar_xi_residual < 1e-9, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn deformation_derivatives_match_finite_differences() {
        let (w, sys, data) = system_and_data();
        let vels = [c(0.0, 0.5), c(1.0, 0.0)];
        let n = 3usize;
        let derivs = deformation_derivatives(&sys, &data, n, &vels).unwrap();
        let dt = 1e-5;
        let build_at = |t: f64| {
            let spec = shift_singularities(&w, &data, &vels, t).unwrap();
            let table = spec.fourier_coefficients(1e-12, 1 << 16).unwrap();
            build_system(&table, 6, 1e-12).unwrap()
        };
        let sp = build_at(dt);
        let sm = build_at(-dt);
        let fd = |a: C64, b: C64| (a - b) / (2.0 * dt);

        let kd_fd = fd(sp.kappa(n).unwrap(), sm.kappa(n).unwrap()) / sys.kappa(n).unwrap();
        assert!(
            (kd_fd - derivs.kappa_dot_over_kappa).norm() < 1e-6,
            "kappa: {kd_fd} vs {}",
            derivs.kappa_dot_over_kappa
        );
        let rd_fd = fd(sp.r(n).unwrap(), sm.r(n).unwrap());
        assert!((rd_fd - derivs.r_dot).norm() < 1e-6);
        let rbd_fd = fd(sp.rbar(n).unwrap(), sm.rbar(n).unwrap());
        assert!((rbd_fd - derivs.rbar_dot).norm() < 1e-6);

        // P and Q track the moving evaluation points
        for j in 1..=data.m() {
            let zj = data.singularities[j - 1].z;
            let vj = vels[j - 1];
            let at = |s: &BopsSystem, t: f64| {
                let z = zj + vj * t;
                let a = s.associated(n as i64, z).unwrap();
                (
                    s.phistar(n).unwrap().eval(z) / s.phi(n).unwrap().eval(z),
                    a.xi / a.xi_star,
                )
            };
            let (pp, qp) = at(&sp, dt);
            let (pm, qm) = at(&sm, -dt);
            assert!(
                (fd(pp, pm) - derivs.p_dot[j - 1]).norm() < 1e-6,
                "P_dot at j = {j}"
            );
            assert!(
                (fd(qp, qm) - derivs.q_dot[j - 1]).norm() < 1e-6,
                "Q_dot at j = {j}"
            );
        }
    }

    #[test]
    fn deformation_matrix_zero_velocities() {
        let (_, sys, data) = system_and_data();
        let rs = residue_set(&sys, &data, 2).unwrap();
        let b = deformation_matrix(&rs, &sys, &data, &[c(0.0, 0.0), c(0.0, 0.0)], c(0.7, 0.3)).unwrap();
        assert!(b.norm_max() < 1e-12);
    }

    #[test]
    fn deformation_ode_by_finite_differences() {
        let (w, sys, data) = system_and_data();
        let vels = [c(0.0, 0.5), c(1.0, 0.0)];
        let n = 2usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        let dt = 1e-5;
        let z = c(0.75, 0.3);
        let y_at = |t: f64| {
            let spec = shift_singularities(&w, &data, &vels, t).unwrap();
            let table = spec.fourier_coefficients(1e-12, 1 << 16).unwrap();
            let s = build_system(&table, 5, 1e-12).unwrap();
            s.y_matrix(&spec, n as i64, z).unwrap().entries
        };
        let dy = (y_at(dt) - y_at(-dt)).scale(c(1.0 / (2.0 * dt), 0.0));
        let b = deformation_matrix(&rs, &sys, &data, &vels, z).unwrap();
        let by = b * y_at(0.0);
        assert!((dy - by).norm_max() < 1e-6, "dY/dt - B Y = {:?}", dy - by);
    }

    #[test]
    fn schlesinger_pde_residual() {
        let (w, sys, data) = system_and_data();
        let vels = [c(0.0, 0.5), c(1.0, 0.0)];
        let n = 2usize;
        let rs = residue_set(&sys, &data, n).unwrap();
        let derivs = deformation_derivatives(&sys, &data, n, &vels).unwrap();
        let b_inf = b_infinity(&sys, n, &derivs).unwrap();
        let dt = 1e-5;
        let rs_at = |t: f64| {
            let spec = shift_singularities(&w, &data, &vels, t).unwrap();
            let table = spec.fourier_coefficients(1e-12, 1 << 16).unwrap();
            let s = build_system(&table, 5, 1e-12).unwrap();
            let d = SemiClassicalData::from_weight(&spec).unwrap();
            residue_set(&s, &d, n).unwrap()
        };
        let rp = rs_at(dt);
        let rm = rs_at(-dt);
        for j in 1..=data.m() {
            let fd = (rp.a[j] - rm.a[j]).scale(c(1.0 / (2.0 * dt), 0.0));
            let mut rhs = b_inf * rs.a[j] - rs.a[j] * b_inf;
            for k in 1..=data.m() {
                if k == j {
                    continue;
                }
                let ratio = (vels[j - 1] - vels[k - 1])
                    / (data.singularities[j - 1].z - data.singularities[k - 1].z);
                rhs = rhs + (rs.a[k] * rs.a[j] - rs.a[j] * rs.a[k]).scale(ratio);
            }
            assert!((fd - rhs).norm_max() < 1e-5, "j = {j}");
        }
    }
}
