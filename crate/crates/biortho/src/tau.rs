//! The lattice of Toeplitz determinants over integer exponent shifts and the
//! bilinear difference equations they satisfy.

use std::collections::BTreeMap;
use std::sync::Mutex;

use num_complex::Complex64 as C64;

use crate::bops::{toeplitz_det, BopsSystem};
use crate::error::{Error, Result};
use crate::schlesinger::{apply_exponent_shift, ExponentShift};
use crate::semiclassical::SemiClassicalData;
use crate::weight::WeightSpec;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Map from (n, exponent-shift vector) to Toeplitz determinants of the
/// correspondingly shifted weight. Values are computed from scratch by
/// quadrature and determinant evaluation, so the bilinear equations below
/// are genuine checks rather than self-fulfilling recurrences.
pub struct TauLattice {
    pub spec: WeightSpec,
    pub data: SemiClassicalData,
    pub tol: f64,
    pub quad_max: usize,
    values: Mutex<BTreeMap<(i64, Vec<i64>), C64>>,
}

/// Key-ordering note: lattice keys are the raw rho-shift vectors; the
/// monodromy-exponent labels are derived display data only.
impl TauLattice {
    pub fn new(spec: WeightSpec, tol: f64, quad_max: usize) -> Result<Self> {
        let data = SemiClassicalData::from_weight(&spec)?;
        Ok(Self {
            spec,
            data,
            tol,
            quad_max,
            values: Mutex::new(BTreeMap::new()),
        })
    }

    /// Toeplitz determinant I_n of the weight with exponents shifted by
    /// `shifts` (index 0 = origin, 1..=M the finite singularities).
    pub fn value(&self, n: i64, shifts: &[i64]) -> Result<C64> {
        if n < 0 {
            return Err(Error::Range(format!(
                "Toeplitz determinants need n >= 0, got {n}"
            )));
        }
        if shifts.len() != self.data.m() + 1 {
            return Err(Error::Range(format!(
                "expected {} shift entries, got {}",
                self.data.m() + 1,
                shifts.len()
            )));
        }
        let key = (n, shifts.to_vec());
        if let Some(v) = self.values.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let shifted = apply_exponent_shift(
            &self.spec,
            &self.data,
            &ExponentShift {
                shifts: shifts.to_vec(),
                n_shift: 0,
            },
        )?;
        let table = shifted.fourier_coefficients(self.tol, self.quad_max)?;
        let v = toeplitz_det(&table, n as usize)?;
        self.values.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Monodromy-exponent labels (theta_0, theta_1..theta_M, theta_inf) of a
    /// lattice point, derived for display.
    pub fn theta_labels(&self, n: i64, shifts: &[i64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data.m() + 2);
        let rho0 = self.data.rho0 + c(shifts[0] as f64, 0.0);
        out.push(c(n as f64, 0.0) - rho0);
        let mut total = rho0;
        for (j, s) in self.data.singularities.iter().enumerate() {
            let rho = s.rho + c(shifts[j + 1] as f64, 0.0);
            out.push(-rho);
            total += rho;
        }
        out.push(c(n as f64, 0.0) + total);
        out
    }

    fn unit_shift(&self, j: usize, delta: i64) -> Vec<i64> {
        let mut s = vec![0i64; self.data.m() + 1];
        s[j] = delta;
        s
    }

    fn shift2(&self, j: usize, dj: i64, k: usize, dk: i64) -> Vec<i64> {
        let mut s = vec![0i64; self.data.m() + 1];
        s[j] += dj;
        s[k] += dk;
        s
    }
}

/// One bilinear-equation residual.
#[derive(Debug, Clone)]
pub struct HirotaResidual {
    pub equation: &'static str,
    pub n: i64,
    pub j: usize,
    pub k: Option<usize>,
    pub residual: f64,
    pub normalizer: f64,
    /// true when every term is below the absolute floor and the relative
    /// residual is meaningless
    pub indeterminate: bool,
}

fn residual_of(equation: &'static str, n: i64, j: usize, k: Option<usize>, terms: &[C64]) -> HirotaResidual {
    // terms sum to zero when the identity holds
    let sum: C64 = terms.iter().sum();
    let normalizer = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
    if normalizer < 1e-13 {
        return HirotaResidual {
            equation,
            n,
            j,
            k,
            residual: sum.norm(),
            normalizer,
            indeterminate: true,
        };
    }
    HirotaResidual {
        equation,
        n,
        j,
        k,
        residual: sum.norm() / normalizer,
        normalizer,
        indeterminate: false,
    }
}

/// Residuals of the one-exponent bilinear equations at (n, j), and of the
/// two-exponent equations when `k` is given.
pub fn hirota_residuals(
    lattice: &TauLattice,
    n: i64,
    j: usize,
    k: Option<usize>,
) -> Result<Vec<HirotaResidual>> {
    if j == 0 || j > lattice.data.m() {
        return Err(Error::Range(format!(
            "generic exponent index j must be 1..={}, got {j}",
            lattice.data.m()
        )));
    }
    let zj = lattice.data.singularities[j - 1].z;
    let zero = vec![0i64; lattice.data.m() + 1];
    let mut out = Vec::new();

    // HM-a: I_n I_{n+1}
    //     = I_{n+1}[rho_0+1, rho_j-1] I_n[rho_0-1, rho_j+1]
    //     - z_j I_n[rho_j+1] I_{n+1}[rho_j-1]
    {
        let t1 = lattice.value(n, &zero)? * lattice.value(n + 1, &zero)?;
        let t2 = lattice.value(n + 1, &lattice.shift2(0, 1, j, -1))?
            * lattice.value(n, &lattice.shift2(0, -1, j, 1))?;
        let t3 = zj
            * lattice.value(n, &lattice.unit_shift(j, 1))?
            * lattice.value(n + 1, &lattice.unit_shift(j, -1))?;
        out.push(residual_of("HM-a", n, j, None, &[t1, -t2, t3]));
    }
    // HM-b: I_n I_n[rho_0+1]
    //     = I_n[rho_j+1] I_n[rho_0+1, rho_j-1]
    //     + z_j I_{n+1}[rho_0+1, rho_j-1] I_{n-1}[rho_j+1]
    if n >= 1 {
        let t1 = lattice.value(n, &zero)? * lattice.value(n, &lattice.unit_shift(0, 1))?;
        let t2 = lattice.value(n, &lattice.unit_shift(j, 1))?
            * lattice.value(n, &lattice.shift2(0, 1, j, -1))?;
        let t3 = zj
            * lattice.value(n + 1, &lattice.shift2(0, 1, j, -1))?
            * lattice.value(n - 1, &lattice.unit_shift(j, 1))?;
        out.push(residual_of("HM-b", n, j, None, &[t1, -t2, -t3]));
    }

    let Some(k) = k else {
        return Ok(out);
    };
    if k == 0 || k > lattice.data.m() || k == j {
        return Err(Error::Range(format!(
            "generic exponent index k must be 1..={} and != j, got {k}",
            lattice.data.m()
        )));
    }
    let zk = lattice.data.singularities[k - 1].z;

    // HM-d: (z_j - z_k) I_{n+1} I_n[rho_j+1, rho_k+1]
    //     = I_{n+1}[rho_k+1] I_n[rho_j+1] - I_{n+1}[rho_j+1] I_n[rho_k+1]
    {
        let t1 = (zj - zk)
            * lattice.value(n + 1, &zero)?
            * lattice.value(n, &lattice.shift2(j, 1, k, 1))?;
        let t2 = lattice.value(n + 1, &lattice.unit_shift(k, 1))?
            * lattice.value(n, &lattice.unit_shift(j, 1))?;
        let t3 = lattice.value(n + 1, &lattice.unit_shift(j, 1))?
            * lattice.value(n, &lattice.unit_shift(k, 1))?;
        out.push(residual_of("HM-d", n, j, Some(k), &[t1, -t2, t3]));
    }
    // HM-e: I_{n+1} I_n[rho_j+1, rho_k-1]
    //     = -z_k I_{n+1}[rho_k-1] I_n[rho_j+1]
    //     + I_{n+1}[rho_0+1, rho_k-1] I_n[rho_0-1, rho_j+1]
    {
        let t1 = lattice.value(n + 1, &zero)? * lattice.value(n, &lattice.shift2(j, 1, k, -1))?;
        let t2 = zk
            * lattice.value(n + 1, &lattice.unit_shift(k, -1))?
            * lattice.value(n, &lattice.unit_shift(j, 1))?;
        let t3 = lattice.value(n + 1, &lattice.shift2(0, 1, k, -1))?
            * lattice.value(n, &lattice.shift2(0, -1, j, 1))?;
        out.push(residual_of("HM-e", n, j, Some(k), &[t1, t2, -t3]));
    }
    // HM-f: (z_j - z_k) I_n I_n[rho_0-1, rho_j+1, rho_k+1]
    //     = z_j I_n[rho_j+1] I_n[rho_0-1, rho_k+1]
    //     - z_k I_n[rho_0-1, rho_j+1] I_n[rho_k+1]
    {
        let mut s = lattice.shift2(j, 1, k, 1);
        s[0] -= 1;
        let t1 = (zj - zk) * lattice.value(n, &zero)? * lattice.value(n, &s)?;
        let t2 = zj
            * lattice.value(n, &lattice.unit_shift(j, 1))?
            * lattice.value(n, &lattice.shift2(0, -1, k, 1))?;
        let t3 = zk
            * lattice.value(n, &lattice.shift2(0, -1, j, 1))?
            * lattice.value(n, &lattice.unit_shift(k, 1))?;
        out.push(residual_of("HM-f", n, j, Some(k), &[t1, -t2, t3]));
    }
    // HM-g: I_n I_n[rho_0-1, rho_j+1, rho_k-1]
    //     = z_j I_{n-1}[rho_0-1, rho_j+1] I_{n+1}[rho_k-1]
    //     + I_n[rho_0-1, rho_j+1] I_n[rho_k-1]
    if n >= 1 {
        let mut s = lattice.shift2(j, 1, k, -1);
        s[0] -= 1;
        let t1 = lattice.value(n, &zero)? * lattice.value(n, &s)?;
        let t2 = zj
            * lattice.value(n - 1, &lattice.shift2(0, -1, j, 1))?
            * lattice.value(n + 1, &lattice.unit_shift(k, -1))?;
        let t3 = lattice.value(n, &lattice.shift2(0, -1, j, 1))?
            * lattice.value(n, &lattice.unit_shift(k, -1))?;
        out.push(residual_of("HM-g", n, j, Some(k), &[t1, -t2, -t3]));
    }
    Ok(out)
}

/// Residuals of the intermediate single-exponent bilinear identities that
/// sit between the Casoratians and the tau-form equations.
pub fn hirota_intermediate_residuals(
    lattice: &TauLattice,
    system: &BopsSystem,
    n: i64,
    j: usize,
) -> Result<Vec<HirotaResidual>> {
    if j == 0 || j > lattice.data.m() {
        return Err(Error::Range(format!("index j out of range: {j}")));
    }
    if n < 0 || n as usize + 1 > system.n_max {
        return Err(Error::Range(format!("intermediate identities need 0 <= n < n_max, got {n}")));
    }
    let zj = lattice.data.singularities[j - 1].z;
    let zero = vec![0i64; lattice.data.m() + 1];
    let nn = n as usize;
    let sign = if nn % 2 == 0 { 1.0 } else { -1.0 };
    let i_n = lattice.value(n, &zero)?;
    let i_n1 = lattice.value(n + 1, &zero)?;
    let up = lattice.unit_shift(j, 1);
    let up_star = lattice.shift2(0, -1, j, 1);
    let dn = lattice.unit_shift(j, -1);
    let dn_star = lattice.shift2(0, 1, j, -1);
    let mut out = Vec::new();

    // I_n I_{n+1} = I*j+_n I*j-_{n+1} - z_j Ij+_n Ij-_{n+1}
    {
        let t1 = i_n * i_n1;
        let t2 = lattice.value(n, &up_star)? * lattice.value(n + 1, &dn_star)?;
        let t3 = zj * lattice.value(n, &up)? * lattice.value(n + 1, &dn)?;
        out.push(residual_of("HM-int-1", n, j, None, &[t1, -t2, t3]));
    }
    // (-)^n r_n I_n^2 = Ij+_n I*j-_n + z_j Ij+_{n-1} I*j-_{n+1}
    if n >= 1 {
        let r_n = system.r(nn)?;
        let t1 = sign * r_n * i_n * i_n;
        let t2 = lattice.value(n, &up)? * lattice.value(n, &dn_star)?;
        let t3 = zj * lattice.value(n - 1, &up)? * lattice.value(n + 1, &dn_star)?;
        out.push(residual_of("HM-int-2", n, j, None, &[t1, -t2, -t3]));
    }
    // (-)^n rbar_n I_n^2 = I*j+_n Ij-_n + z_j I*j+_{n-1} Ij-_{n+1}
    if n >= 1 {
        let rbar_n = system.rbar(nn)?;
        let t1 = sign * rbar_n * i_n * i_n;
        let t2 = lattice.value(n, &up_star)? * lattice.value(n, &dn)?;
        let t3 = zj * lattice.value(n - 1, &up_star)? * lattice.value(n + 1, &dn)?;
        out.push(residual_of("HM-int-3", n, j, None, &[t1, -t2, -t3]));
    }
    Ok(out)
}

/// Residuals of the four integral-representation identities linking the
/// determinants of singly modified weights to the base system, at an
/// arbitrary off-circle point z.
pub fn integral_representation_residuals(
    system: &BopsSystem,
    spec: &WeightSpec,
    n: usize,
    z: C64,
    tol: f64,
    quad_max: usize,
) -> Result<[HirotaResidual; 4]> {
    use crate::weight::RationalMod;
    let i_n = system.i_det(n)?;
    let kappa_n = system.kappa(n)?;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let det_of = |m: RationalMod, size: usize| -> Result<C64> {
        let w = spec.modify(&m)?;
        let t = w.fourier_coefficients(tol, quad_max)?;
        toeplitz_det(&t, size)
    };

    // I_n[w (zeta - z)] = (-)^n I_n phi_n(z) / kappa_n
    let lhs = det_of(
        RationalMod {
            alphas: vec![z],
            ..Default::default()
        },
        n,
    )?;
    let rhs = sign * i_n * system.phi(n)?.eval(z) / kappa_n;
    let r1 = residual_of("Eq-3.1", n as i64, 0, None, &[lhs, -rhs]);

    // I_n[w (1 - z/zeta)] = I_n phi*_n(z) / kappa_n
    let lhs = det_of(
        RationalMod {
            alpha_stars: vec![z],
            ..Default::default()
        },
        n,
    )?;
    let rhs = i_n * system.phistar(n)?.eval(z) / kappa_n;
    let r2 = residual_of("Eq-3.2", n as i64, 0, None, &[lhs, -rhs]);

    // I_{n+1}[w / (1 - z/zeta)] = I_{n+1} kappa_n xi_n(z) / (2 z^n)
    let a = system.associated(n as i64, z)?;
    let i_n1 = system.i_det(n + 1)?;
    let lhs = det_of(
        RationalMod {
            beta_stars: vec![z],
            ..Default::default()
        },
        n + 1,
    )?;
    let rhs = i_n1 * kappa_n * a.xi / (2.0 * z.powi(n as i32));
    let r3 = residual_of("Eq-3.3", n as i64 + 1, 0, None, &[lhs, -rhs]);

    // I_{n+1}[w / (zeta - z)] = (-)^{n+1} I_{n+1} kappa_n xi*_n(z) / (2 z^{n+1})
    let lhs = det_of(
        RationalMod {
            betas: vec![z],
            ..Default::default()
        },
        n + 1,
    )?;
    let rhs = -sign * i_n1 * kappa_n * a.xi_star / (2.0 * z.powi(n as i32 + 1));
    let r4 = residual_of("Eq-3.4", n as i64 + 1, 0, None, &[lhs, -rhs]);

    Ok([r1, r2, r3, r4])
}
