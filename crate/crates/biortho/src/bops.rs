//! The bi-orthogonal system on the unit circle built from Fourier data:
//! polynomials, reciprocal polynomials, associated functions, the 2x2
//! fundamental matrix and its recurrence structure.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, CMatrix, Mat2};
use crate::poly::Polynomial;
use crate::weight::{FourierTable, WeightSpec, CIRCLE_MARGIN};

/// Existence threshold: I_n counts as nonzero when
/// |I_n| > EXISTENCE_THRESHOLD * max(1, |I_{n-1}|).
pub const EXISTENCE_THRESHOLD: f64 = 1e-13;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Toeplitz determinant I_n = det [w_{j-k}]_{j,k=0..n-1}; I_0 = 1.
pub fn toeplitz_det(table: &FourierTable, n: usize) -> Result<C64> {
    if n == 0 {
        return Ok(c(1.0, 0.0));
    }
    let needed = n as i64 - 1;
    if (table.k_max < needed || -table.k_min < needed) && table.tail_bound > 1e-9 {
        return Err(Error::Range(format!(
            "Fourier table covers [{}, {}] with tail {:.2e}, need |k| <= {needed}",
            table.k_min, table.k_max, table.tail_bound
        )));
    }
    let m = CMatrix::from_fn(n, n, |j, k| table.coeff(j as i64 - k as i64));
    Ok(lu_factor(&m).det())
}

/// Side of the unit circle an evaluation point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Exterior,
}

pub fn region_of(z: C64) -> Result<Region> {
    let r = z.norm();
    if (r - 1.0).abs() < CIRCLE_MARGIN {
        return Err(Error::Domain(format!(
            "evaluation needs |z| != 1, got |z| = {r}"
        )));
    }
    Ok(if r < 1.0 {
        Region::Interior
    } else {
        Region::Exterior
    })
}

/// Two-sided coefficient sequence of a product w(z) p(z) (a Laurent series
/// truncated with the table).
#[derive(Debug, Clone)]
struct Conv {
    k_min: i64,
    coeffs: Vec<C64>,
}

impl Conv {
    /// Coefficients of w * p where p has ascending coefficients `poly`.
    fn product(table: &FourierTable, poly: &Polynomial) -> Conv {
        let deg = poly.coeffs.len().max(1) as i64 - 1;
        let k_min = table.k_min;
        let k_max = table.k_max + deg;
        let mut coeffs = vec![c(0.0, 0.0); (k_max - k_min + 1) as usize];
        for (l, &a) in poly.coeffs.iter().enumerate() {
            for k in table.k_min..=table.k_max {
                coeffs[(k + l as i64 - k_min) as usize] += a * table.coeff(k);
            }
        }
        Conv { k_min, coeffs }
    }

    /// Coefficients of w(z) p(1/z).
    fn product_reflected(table: &FourierTable, poly: &Polynomial) -> Conv {
        let deg = poly.coeffs.len().max(1) as i64 - 1;
        let k_min = table.k_min - deg;
        let k_max = table.k_max;
        let mut coeffs = vec![c(0.0, 0.0); (k_max - k_min + 1) as usize];
        for (l, &a) in poly.coeffs.iter().enumerate() {
            for k in table.k_min..=table.k_max {
                coeffs[(k - l as i64 - k_min) as usize] += a * table.coeff(k);
            }
        }
        Conv { k_min, coeffs }
    }

    fn coeff(&self, k: i64) -> C64 {
        let idx = k - self.k_min;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            c(0.0, 0.0)
        } else {
            self.coeffs[idx as usize]
        }
    }

    fn k_max(&self) -> i64 {
        self.k_min + self.coeffs.len() as i64 - 1
    }

    /// Cauchy-kernel evaluation: h_0 + 2 sum_{m>=1} h_m z^m inside,
    /// -h_0 - 2 sum_{m>=1} h_{-m} z^{-m} outside.
    fn kernel(&self, z: C64, region: Region) -> C64 {
        match region {
            Region::Interior => {
                let mut acc = c(0.0, 0.0);
                let mut zp = c(1.0, 0.0);
                for m in 1..=self.k_max().max(0) {
                    zp *= z;
                    acc += self.coeff(m) * zp;
                }
                self.coeff(0) + 2.0 * acc
            }
            Region::Exterior => {
                let zi = c(1.0, 0.0) / z;
                let mut acc = c(0.0, 0.0);
                let mut zp = c(1.0, 0.0);
                for m in 1..=(-self.k_min).max(0) {
                    zp *= zi;
                    acc += self.coeff(-m) * zp;
                }
                -self.coeff(0) - 2.0 * acc
            }
        }
    }
}

/// Per-degree data of the system.
#[derive(Debug, Clone)]
struct Row {
    kappa: C64,
    phi: Polynomial,
    phibar: Polynomial,
    phistar: Polynomial,
    r: C64,
    rbar: C64,
    h_phi: Conv,
    h_phistar: Conv,
}

/// Associated-function pair at a point.
#[derive(Debug, Clone, Copy)]
pub struct Assoc {
    pub xi: C64,
    pub xi_star: C64,
}

/// Evaluation of the fundamental 2x2 matrix Y_n(z).
#[derive(Debug, Clone, Copy)]
pub struct YEval {
    pub entries: Mat2,
    pub n: i64,
    pub z: C64,
    pub region: Region,
}

/// Direction of a recurrence step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// The bi-orthogonal system of a weight up to degree n_max.
#[derive(Debug, Clone)]
pub struct BopsSystem {
    pub n_max: usize,
    rows: Vec<Row>,
    /// I_0 .. I_{n_max + 1}
    i_dets: Vec<C64>,
    pub fourier: FourierTable,
    pub tol: f64,
    /// Depth of the negative-index extension (0 = not extended).
    neg_depth: i64,
}

/// Build the system from a Fourier table.
///
/// Polynomial coefficients are obtained by solving one Toeplitz linear system
/// per degree (the bordered-determinant cofactors), kappa_n as the principal
/// square root of I_n / I_{n+1}.
pub fn build_system(table: &FourierTable, n_max: usize, tol: f64) -> Result<BopsSystem> {
    let w0 = table.coeff(0);
    if w0.norm() < EXISTENCE_THRESHOLD {
        return Err(Error::InvalidWeight(
            "w_0 = 0: the normalization w_0 kappa_0^2 = 1 is impossible".into(),
        ));
    }
    let needed = n_max as i64;
    if (table.k_max < needed || -table.k_min < needed) && table.tail_bound > 1e-9 {
        return Err(Error::Range(format!(
            "Fourier table covers [{}, {}] with tail {:.2e}, need |k| <= {needed}",
            table.k_min, table.k_max, table.tail_bound
        )));
    }

    let mut i_dets: Vec<C64> = Vec::with_capacity(n_max + 2);
    for n in 0..=n_max + 1 {
        let i_n = toeplitz_det(table, n)?;
        let prev = if n == 0 {
            1.0
        } else {
            i_dets[n - 1].norm().max(1.0)
        };
        if i_n.norm() <= EXISTENCE_THRESHOLD * prev {
            return Err(Error::Existence {
                n,
                magnitude: i_n.norm(),
            });
        }
        i_dets.push(i_n);
    }

    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let kappa = (i_dets[n] / i_dets[n + 1]).sqrt();
        // phi_n: null vector of the n x (n+1) block [w_{m-l}]
        let mut v = if n == 0 {
            vec![c(1.0, 0.0)]
        } else {
            let t = CMatrix::from_fn(n, n, |m, l| table.coeff(m as i64 - l as i64));
            let rhs: Vec<C64> = (0..n).map(|m| -table.coeff(m as i64 - n as i64)).collect();
            let mut x = lu_factor(&t).solve(&rhs)?;
            x.push(c(1.0, 0.0));
            x
        };
        for a in v.iter_mut() {
            *a *= kappa;
        }
        let phi = Polynomial::from_coeffs(v);

        // phibar_n: null vector of the transposed block [w_{l-m}]
        let mut vb = if n == 0 {
            vec![c(1.0, 0.0)]
        } else {
            let t = CMatrix::from_fn(n, n, |m, l| table.coeff(l as i64 - m as i64));
            let rhs: Vec<C64> = (0..n).map(|m| -table.coeff(n as i64 - m as i64)).collect();
            let mut x = lu_factor(&t).solve(&rhs)?;
            x.push(c(1.0, 0.0));
            x
        };
        for a in vb.iter_mut() {
            *a *= kappa;
        }
        let phibar = Polynomial::from_coeffs(vb);
        let phistar = phibar.reciprocal(n)?;

        let r = phi.coeff(0) / kappa;
        let rbar = phibar.coeff(0) / kappa;
        let h_phi = Conv::product(table, &phi);
        let h_phistar = Conv::product(table, &phistar);

        rows.push(Row {
            kappa,
            phi,
            phibar,
            phistar,
            r,
            rbar,
            h_phi,
            h_phistar,
        });
    }

    Ok(BopsSystem {
        n_max,
        rows,
        i_dets,
        fourier: table.clone(),
        tol,
        neg_depth: 0,
    })
}

impl BopsSystem {
    fn row(&self, n: usize) -> Result<&Row> {
        self.rows.get(n).ok_or_else(|| {
            Error::Range(format!("degree {n} beyond system depth {}", self.n_max))
        })
    }

    /// I_n for 0 <= n <= n_max + 1.
    pub fn i_det(&self, n: usize) -> Result<C64> {
        self.i_dets
            .get(n)
            .copied()
            .ok_or_else(|| Error::Range(format!("I_{n} beyond system depth {}", self.n_max)))
    }

    pub fn kappa(&self, n: usize) -> Result<C64> {
        Ok(self.row(n)?.kappa)
    }

    /// kappa with the negative-index default kappa_{-N} = 1.
    pub fn kappa_at(&self, n: i64) -> Result<C64> {
        if n < 0 {
            Ok(c(1.0, 0.0))
        } else {
            self.kappa(n as usize)
        }
    }

    pub fn phi(&self, n: usize) -> Result<&Polynomial> {
        Ok(&self.row(n)?.phi)
    }

    pub fn phibar(&self, n: usize) -> Result<&Polynomial> {
        Ok(&self.row(n)?.phibar)
    }

    pub fn phistar(&self, n: usize) -> Result<&Polynomial> {
        Ok(&self.row(n)?.phistar)
    }

    pub fn r(&self, n: usize) -> Result<C64> {
        Ok(self.row(n)?.r)
    }

    pub fn rbar(&self, n: usize) -> Result<C64> {
        Ok(self.row(n)?.rbar)
    }

    /// phi_n(0), with phi_{-N}(0) = 0 for the negative extension.
    pub fn phi0_at(&self, n: i64) -> Result<C64> {
        if n < 0 {
            Ok(c(0.0, 0.0))
        } else {
            Ok(self.row(n as usize)?.phi.coeff(0))
        }
    }

    pub fn phibar0_at(&self, n: i64) -> Result<C64> {
        if n < 0 {
            Ok(c(0.0, 0.0))
        } else {
            Ok(self.row(n as usize)?.phibar.coeff(0))
        }
    }

    /// phi_n(z), zero for negative indices.
    pub fn phi_eval(&self, n: i64, z: C64) -> Result<C64> {
        if n < 0 {
            Ok(c(0.0, 0.0))
        } else {
            Ok(self.row(n as usize)?.phi.eval(z))
        }
    }

    pub fn phistar_eval(&self, n: i64, z: C64) -> Result<C64> {
        if n < 0 {
            Ok(c(0.0, 0.0))
        } else {
            Ok(self.row(n as usize)?.phistar.eval(z))
        }
    }

    /// Extend the system to negative indices -1, ..., n_min with the default
    /// choices kappa_{-N} = 1, phi_{-N}(0) = phibar_{-N}(0) = 0.
    pub fn extend_negative(&mut self, n_min: i64) -> Result<()> {
        if n_min > 0 {
            return Err(Error::Range("extend_negative needs n_min <= 0".into()));
        }
        self.neg_depth = -n_min;
        Ok(())
    }

    pub fn negative_depth(&self) -> i64 {
        self.neg_depth
    }

    /// Associated functions xi_n, xi*_n at z (|z| != 1). Negative n is served
    /// by the negative-index extension once `extend_negative` was called.
    pub fn associated(&self, n: i64, z: C64) -> Result<Assoc> {
        let region = region_of(z)?;
        if n < 0 {
            if -n > self.neg_depth {
                return Err(Error::Range(format!(
                    "negative index {n} outside extension depth {}",
                    self.neg_depth
                )));
            }
            // defaults: (kappa_{-N}/2) xi_{-N} = z^{-N}, (kappa_{-N}/2) xi*_{-N} = 1
            let zp = z.powi(n as i32);
            return Ok(Assoc {
                xi: 2.0 * zp,
                xi_star: c(2.0, 0.0),
            });
        }
        let row = self.row(n as usize)?;
        let mut xi = row.h_phi.kernel(z, region);
        if n == 0 {
            xi += c(1.0, 0.0) / row.kappa;
        }
        let xi_star = c(1.0, 0.0) / row.kappa - row.h_phistar.kernel(z, region);
        Ok(Assoc { xi, xi_star })
    }

    /// As `associated`, but also evaluates the alternative definition of
    /// xi*_n (through the reflected partner polynomial) and returns the
    /// discrepancy of the two routes.
    pub fn associated_checked(&self, n: usize, z: C64) -> Result<(Assoc, f64)> {
        let region = region_of(z)?;
        let a = self.associated(n as i64, z)?;
        let row = self.row(n)?;
        let h_refl = Conv::product_reflected(&self.fourier, &row.phibar);
        let mut alt = -z.powi(n as i32) * h_refl.kernel(z, region);
        if n == 0 {
            // the initial value carries the same w_0-shift as xi_0
            alt += c(1.0, 0.0) / row.kappa;
        }
        Ok((a, (alt - a.xi_star).norm()))
    }

    /// Coefficient of z^p (interior) or z^-p (exterior) in the expansion of
    /// xi_n; p >= 0.
    pub fn xi_series_coeff(&self, n: usize, p: i64, region: Region) -> Result<C64> {
        let row = self.row(n)?;
        let base = match region {
            Region::Interior => {
                if p == 0 {
                    row.h_phi.coeff(0)
                } else {
                    2.0 * row.h_phi.coeff(p)
                }
            }
            Region::Exterior => {
                if p == 0 {
                    -row.h_phi.coeff(0)
                } else {
                    -2.0 * row.h_phi.coeff(-p)
                }
            }
        };
        let init = if n == 0 && p == 0 {
            c(1.0, 0.0) / row.kappa
        } else {
            c(0.0, 0.0)
        };
        Ok(base + init)
    }

    /// Coefficient of z^p (interior) or z^-p (exterior) in the expansion of
    /// xi*_n; p >= 0.
    pub fn xi_star_series_coeff(&self, n: usize, p: i64, region: Region) -> Result<C64> {
        let row = self.row(n)?;
        let kernel = match region {
            Region::Interior => {
                if p == 0 {
                    row.h_phistar.coeff(0)
                } else {
                    2.0 * row.h_phistar.coeff(p)
                }
            }
            Region::Exterior => {
                if p == 0 {
                    -row.h_phistar.coeff(0)
                } else {
                    -2.0 * row.h_phistar.coeff(-p)
                }
            }
        };
        let init = if p == 0 {
            c(1.0, 0.0) / row.kappa
        } else {
            c(0.0, 0.0)
        };
        Ok(init - kernel)
    }

    /// The fundamental matrix Y_n(z) = [[phi, xi/w], [phi*, -xi*/w]].
    pub fn y_matrix(&self, spec: &WeightSpec, n: i64, z: C64) -> Result<YEval> {
        let region = region_of(z)?;
        let w = spec.evaluate(z)?;
        if w.norm() < 1e-300 {
            return Err(Error::Domain(format!("weight vanishes at z = {z}")));
        }
        let a = self.associated(n, z)?;
        let entries = Mat2::new(
            self.phi_eval(n, z)?,
            a.xi / w,
            self.phistar_eval(n, z)?,
            -a.xi_star / w,
        );
        Ok(YEval {
            entries,
            n,
            z,
            region,
        })
    }

    /// The recurrence matrix K_n(z) with Y_{n+1} = K_n Y_n.
    pub fn k_matrix(&self, n: i64, z: C64) -> Result<Mat2> {
        let kappa_n = self.kappa_at(n)?;
        if kappa_n.norm() < 1e-300 {
            return Err(Error::Degeneracy(format!("kappa_{n} = 0")));
        }
        let kappa_n1 = self.kappa_at(n + 1)?;
        let phi0 = self.phi0_at(n + 1)?;
        let phibar0 = self.phibar0_at(n + 1)?;
        Ok(Mat2::new(kappa_n1 * z, phi0, phibar0 * z, kappa_n1).scale(c(1.0, 0.0) / kappa_n))
    }

    /// Apply the forward recurrence (Y_n -> Y_{n+1}) or its inverse.
    pub fn recurrence_step(&self, n: i64, direction: Direction, y: &YEval) -> Result<YEval> {
        match direction {
            Direction::Forward => {
                if y.n != n {
                    return Err(Error::Range(format!(
                        "forward step at n = {n} needs Y_{n}, got Y_{}",
                        y.n
                    )));
                }
                let k = self.k_matrix(n, y.z)?;
                Ok(YEval {
                    entries: k * y.entries,
                    n: n + 1,
                    z: y.z,
                    region: y.region,
                })
            }
            Direction::Backward => {
                if y.n != n + 1 {
                    return Err(Error::Range(format!(
                        "backward step to n = {n} needs Y_{}, got Y_{}",
                        n + 1,
                        y.n
                    )));
                }
                if y.z.norm() == 0.0 {
                    return Err(Error::Domain("backward recurrence needs z != 0".into()));
                }
                let kappa_n = self.kappa_at(n)?;
                if kappa_n.norm() < 1e-300 {
                    return Err(Error::Degeneracy(format!("kappa_{n} = 0")));
                }
                let kappa_n1 = self.kappa_at(n + 1)?;
                let phi0 = self.phi0_at(n + 1)?;
                let phibar0 = self.phibar0_at(n + 1)?;
                let inv = Mat2::new(kappa_n1 / y.z, -phi0 / y.z, -phibar0, kappa_n1)
                    .scale(c(1.0, 0.0) / kappa_n);
                Ok(YEval {
                    entries: inv * y.entries,
                    n,
                    z: y.z,
                    region: y.region,
                })
            }
        }
    }

    /// Residual of the decoupled second-order recurrence for the monic
    /// polynomials; requires r_n != 0.
    pub fn second_order_residual(&self, n: usize, z: C64) -> Result<C64> {
        if n == 0 || n + 1 > self.n_max {
            return Err(Error::Range(format!(
                "second-order residual needs 1 <= n <= {}",
                self.n_max - 1
            )));
        }
        let r_n = self.r(n)?;
        if r_n.norm() < 1e-12 {
            return Err(Error::Inapplicable(format!(
                "second-order recurrence presumes r_n != 0, but r_{n} = {r_n}"
            )));
        }
        let r_n1 = self.r(n + 1)?;
        let rb_n = self.rbar(n)?;
        let monic = |m: usize| -> Result<C64> { Ok(self.phi(m)?.eval(z) / self.kappa(m)?) };
        let lhs = monic(n + 1)? - r_n1 / r_n * monic(n)?;
        let rhs = z * (monic(n)? - r_n1 / r_n * (c(1.0, 0.0) - r_n * rb_n) * monic(n - 1)?);
        Ok(lhs - rhs)
    }

    /// The three Casoratian residuals at (n, z); all vanish for a consistent
    /// system.
    pub fn casoratian_residuals(&self, n: usize, z: C64) -> Result<[C64; 3]> {
        let a_n = self.associated(n as i64, z)?;
        let a_n1 = self.associated(n as i64 + 1, z)?;
        let phi_n = self.phi(n)?.eval(z);
        let phi_n1 = self.phi(n + 1)?.eval(z);
        let phis_n = self.phistar(n)?.eval(z);
        let phis_n1 = self.phistar(n + 1)?.eval(z);
        let kappa_n = self.kappa(n)?;
        let zn = z.powi(n as i32);
        let c1 = phi_n1 * a_n.xi - a_n1.xi * phi_n - 2.0 * self.phi(n + 1)?.coeff(0) / kappa_n * zn;
        let c2 = phis_n1 * a_n.xi_star - a_n1.xi_star * phis_n
            - 2.0 * self.phibar(n + 1)?.coeff(0) / kappa_n * zn * z;
        let c3 = phi_n * a_n.xi_star + a_n.xi * phis_n - 2.0 * zn;
        Ok([c1, c2, c3])
    }

    /// Serializable per-degree dump.
    pub fn dump(&self) -> SystemDump {
        let rows = (0..=self.n_max)
            .map(|n| DumpRow {
                n,
                i: self.i_dets[n],
                kappa: self.rows[n].kappa,
                r: self.rows[n].r,
                rbar: self.rows[n].rbar,
                phi: self.rows[n].phi.coeffs.clone(),
                phibar: self.rows[n].phibar.coeffs.clone(),
            })
            .collect();
        SystemDump {
            rows,
            negative_ext: if self.neg_depth > 0 {
                Some(NegativeExt {
                    depth: self.neg_depth,
                    kappa_choice: c(1.0, 0.0),
                    phi0_choice: c(0.0, 0.0),
                    phibar0_choice: c(0.0, 0.0),
                })
            } else {
                None
            },
        }
    }
}

/// JSON dump row of a system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpRow {
    pub n: usize,
    #[serde(rename = "I", with = "crate::weight::serde_c64")]
    pub i: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub kappa: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub r: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub rbar: C64,
    #[serde(with = "crate::weight::serde_c64_vec")]
    pub phi: Vec<C64>,
    #[serde(with = "crate::weight::serde_c64_vec")]
    pub phibar: Vec<C64>,
}

/// Record of the negative-index extension choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegativeExt {
    pub depth: i64,
    #[serde(with = "crate::weight::serde_c64")]
    pub kappa_choice: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub phi0_choice: C64,
    #[serde(with = "crate::weight::serde_c64")]
    pub phibar0_choice: C64,
}

/// Serializable dump of a full system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDump {
    pub rows: Vec<DumpRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_ext: Option<NegativeExt>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::WeightFactor;

    fn table_of(spec: &WeightSpec) -> FourierTable {
        spec.fourier_coefficients(1e-12, 1 << 16).unwrap()
    }

    fn z_minus_two() -> WeightSpec {
        WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(1.0, 0.0))])
    }

    fn inv_z_minus_two() -> WeightSpec {
        WeightSpec {
            factors: Some(vec![]),
            base_fourier: None,
            rational_mod: Some(crate::weight::RationalMod {
                betas: vec![c(2.0, 0.0)],
                ..Default::default()
            }),
        }
    }

    /// Naive determinant by cofactor expansion, the independent oracle.
    fn naive_det(m: &CMatrix) -> C64 {
        let n = m.n_rows;
        if n == 0 {
            return c(1.0, 0.0);
        }
        if n == 1 {
            return m[(0, 0)];
        }
        let mut acc = c(0.0, 0.0);
        for j in 0..n {
            let minor = CMatrix::from_fn(n - 1, n - 1, |r, cc| {
                m[(r + 1, if cc < j { cc } else { cc + 1 })]
            });
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += m[(0, j)] * naive_det(&minor) * sign;
        }
        acc
    }

    #[test]
    fn toeplitz_examples() {
        let t = table_of(&WeightSpec::one());
        assert!((toeplitz_det(&t, 5).unwrap() - c(1.0, 0.0)).norm() < 1e-12);

        let t = table_of(&z_minus_two());
        assert!((toeplitz_det(&t, 3).unwrap() - c(-8.0, 0.0)).norm() < 1e-10);

        let t = table_of(&inv_z_minus_two());
        assert!((toeplitz_det(&t, 2).unwrap() - c(0.25, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn toeplitz_matches_naive_det() {
        let t = table_of(&WeightSpec::semiclassical_m2());
        for n in 1..=5usize {
            let m = CMatrix::from_fn(n, n, |j, k| t.coeff(j as i64 - k as i64));
            let got = toeplitz_det(&t, n).unwrap();
            let want = naive_det(&m);
            assert!(
                (got - want).norm() < 1e-10 * want.norm().max(1.0),
                "n = {n}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn lebesgue_system() {
        let sys = build_system(&table_of(&WeightSpec::one()), 8, 1e-12).unwrap();
        for n in 0..=8usize {
            assert!((sys.kappa(n).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
            let phi = sys.phi(n).unwrap();
            for k in 0..n {
                assert!(phi.coeff(k as i64).norm() < 1e-12);
            }
            assert!((phi.coeff(n as i64) - c(1.0, 0.0)).norm() < 1e-12);
            let expect_r = if n == 0 { 1.0 } else { 0.0 };
            assert!((sys.r(n).unwrap() - c(expect_r, 0.0)).norm() < 1e-12);
            assert!((sys.rbar(n).unwrap() - c(expect_r, 0.0)).norm() < 1e-12);
        }
    }

    /// Brute-force bordered-determinant construction of phi_n, the oracle for
    /// `build_system`.
    fn phi_by_determinant(t: &FourierTable, n: usize) -> Polynomial {
        let i_n = toeplitz_det(t, n).unwrap();
        let i_n1 = toeplitz_det(t, n + 1).unwrap();
        let kappa = (i_n / i_n1).sqrt();
        // bordered matrix rows 0..n-1 Toeplitz, cofactors of the monomial row
        let block = CMatrix::from_fn(n, n + 1, |m, l| t.coeff(m as i64 - l as i64));
        let mut coeffs = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let minor = block.without_column(j);
            let sign = if (n + j) % 2 == 0 { 1.0 } else { -1.0 };
            coeffs.push(naive_det(&minor) * sign * kappa / i_n);
        }
        Polynomial::from_coeffs(coeffs)
    }

    #[test]
    fn build_system_z_minus_two() {
        let sys = build_system(&table_of(&z_minus_two()), 5, 1e-12).unwrap();
        let kappa_expected = c(-0.5, 0.0).sqrt(); // i / sqrt(2)
        for n in 0..=5usize {
            assert!((sys.kappa(n).unwrap() - kappa_expected).norm() < 1e-11);
            if n >= 1 {
                assert!(sys.r(n).unwrap().norm() < 1e-11);
            }
            let expect = 0.5f64.powi(n as i32);
            assert!((sys.rbar(n).unwrap() - c(expect, 0.0)).norm() < 1e-11);
        }
        // determinantal oracle for the polynomials
        let t = table_of(&z_minus_two());
        for n in 1..=4usize {
            let oracle = phi_by_determinant(&t, n);
            let got = sys.phi(n).unwrap();
            for k in 0..=n {
                assert!((oracle.coeff(k as i64) - got.coeff(k as i64)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn build_system_geronimus_weight() {
        let sys = build_system(&table_of(&inv_z_minus_two()), 5, 1e-12).unwrap();
        for n in 1..=5usize {
            assert!(sys.r(n).unwrap().norm() < 1e-11);
        }
        assert!((sys.rbar(1).unwrap() - c(-0.5, 0.0)).norm() < 1e-11);
        for n in 2..=5usize {
            assert!(sys.rbar(n).unwrap().norm() < 1e-11);
        }
    }

    #[test]
    fn orthogonality_against_moment_matrix() {
        let t = table_of(&WeightSpec::semiclassical_m2());
        let sys = build_system(&t, 6, 1e-12).unwrap();
        for m in 0..=6usize {
            for n in 0..=6usize {
                // integral of w phi_m(zeta) phibar_n(conj zeta)
                let mut acc = c(0.0, 0.0);
                for (a, &ca) in sys.phi(m).unwrap().coeffs.iter().enumerate() {
                    for (b, &cb) in sys.phibar(n).unwrap().coeffs.iter().enumerate() {
                        acc += ca * cb * t.coeff(b as i64 - a as i64);
                    }
                }
                let expect = if m == n { 1.0 } else { 0.0 };
                assert!(
                    (acc - c(expect, 0.0)).norm() < 1e-10,
                    "<phi_{m}, phibar_{n}> = {acc}"
                );
            }
        }
    }

    #[test]
    fn associated_lebesgue_values() {
        let sys = build_system(&table_of(&WeightSpec::one()), 4, 1e-12).unwrap();
        let a = sys.associated(2, c(0.5, 0.0)).unwrap();
        assert!((a.xi - c(0.5, 0.0)).norm() < 1e-12);
        assert!(a.xi_star.norm() < 1e-12);
        let a = sys.associated(2, c(3.0, 0.0)).unwrap();
        assert!(a.xi.norm() < 1e-12);
        assert!((a.xi_star - c(2.0, 0.0)).norm() < 1e-12);
    }

    /// Determinantal representations of the associated functions (the g_j
    /// bordered determinants), used as an independent oracle.
    fn assoc_by_determinant(t: &FourierTable, n: usize, z: C64) -> Assoc {
        let i_n = toeplitz_det(t, n).unwrap();
        let kappa = (i_n / toeplitz_det(t, n + 1).unwrap()).sqrt();
        // xi_n: Toeplitz rows then the g-row (ascending)
        let m_xi = CMatrix::from_fn(n + 1, n + 1, |r, cc| {
            if r < n {
                t.coeff(r as i64 - cc as i64)
            } else {
                t.g_moment(cc as i64, z).unwrap()
            }
        });
        // xi*_n: rows j = n..0 with [w_{n-j-c}]_{c} and last column g_j
        let m_xis = CMatrix::from_fn(n + 1, n + 1, |r, cc| {
            let j = n - r;
            if cc < n {
                t.coeff(n as i64 - j as i64 - cc as i64)
            } else {
                t.g_moment(j as i64, z).unwrap()
            }
        });
        Assoc {
            xi: naive_det(&m_xi) * kappa / i_n,
            xi_star: -naive_det(&m_xis) * kappa / i_n,
        }
    }

    #[test]
    fn associated_matches_determinantal_representation() {
        let t = table_of(&inv_z_minus_two());
        let sys = build_system(&t, 4, 1e-12).unwrap();
        let z = c(0.4, 0.0);
        for n in 1..=3usize {
            let got = sys.associated(n as i64, z).unwrap();
            let want = assoc_by_determinant(&t, n, z);
            assert!(
                (got.xi - want.xi).norm() < 1e-10,
                "xi_{n}: {} vs {}",
                got.xi,
                want.xi
            );
            assert!(
                (got.xi_star - want.xi_star).norm() < 1e-10,
                "xi*_{n}: {} vs {}",
                got.xi_star,
                want.xi_star
            );
        }
    }

    #[test]
    fn xi_star_two_route_agreement() {
        let t = table_of(&WeightSpec::semiclassical_m2());
        let sys = build_system(&t, 6, 1e-12).unwrap();
        for n in 0..=5usize {
            for &z in &[c(0.3, 0.2), c(1.6, -0.5)] {
                let (_, diff) = sys.associated_checked(n, z).unwrap();
                assert!(diff < 1e-10, "n = {n}, z = {z}: diff = {diff}");
            }
        }
    }

    #[test]
    fn y_matrix_values() {
        let w1 = WeightSpec::one();
        let sys = build_system(&table_of(&w1), 3, 1e-12).unwrap();
        let y = sys.y_matrix(&w1, 1, c(0.5, 0.0)).unwrap();
        assert!((y.entries.e[0][0] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((y.entries.e[0][1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((y.entries.e[1][0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(y.entries.e[1][1].norm() < 1e-12);
        assert!((y.entries.det() - c(-1.0, 0.0)).norm() < 1e-12);

        // exterior n = 0: det Y_0 = -2, via F(2) = -1
        let y = sys.y_matrix(&w1, 0, c(2.0, 0.0)).unwrap();
        assert!((y.entries.det() - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((y.entries.e[0][0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(y.entries.e[0][1].norm() < 1e-12);
        assert!((y.entries.e[1][1] - c(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn y_determinant_identity() {
        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(0.4, 0.0))]);
        let sys = build_system(&table_of(&w), 5, 1e-12).unwrap();
        let z = c(0.3, 0.0);
        let y = sys.y_matrix(&w, 3, z).unwrap();
        let expect = -2.0 * z.powu(3) / w.evaluate(z).unwrap();
        assert!((y.entries.det() - expect).norm() < 1e-10);
    }

    #[test]
    fn recurrence_forward_backward() {
        let w = WeightSpec::semiclassical_m2();
        let sys = build_system(&table_of(&w), 5, 1e-12).unwrap();
        let z = c(0.3, 0.1);
        let y1 = sys.y_matrix(&w, 1, z).unwrap();
        let y2 = sys.recurrence_step(1, Direction::Forward, &y1).unwrap();
        let y2_direct = sys.y_matrix(&w, 2, z).unwrap();
        assert!((y2.entries - y2_direct.entries).norm_max() < 1e-10);
        let back = sys.recurrence_step(1, Direction::Backward, &y2).unwrap();
        assert!((back.entries - y1.entries).norm_max() < 1e-11);
    }

    #[test]
    fn recurrence_reproduces_next_polynomial() {
        let t = table_of(&inv_z_minus_two());
        let sys = build_system(&t, 4, 1e-12).unwrap();
        let w = inv_z_minus_two();
        let z = c(0.37, 0.21);
        let y1 = sys.y_matrix(&w, 1, z).unwrap();
        let y2 = sys.recurrence_step(1, Direction::Forward, &y1).unwrap();
        assert!((y2.entries.e[0][0] - sys.phi(2).unwrap().eval(z)).norm() < 1e-11);
        assert!((y2.entries.e[1][0] - sys.phistar(2).unwrap().eval(z)).norm() < 1e-11);
    }

    #[test]
    fn second_order_recurrence() {
        let sys = build_system(&table_of(&WeightSpec::one()), 4, 1e-12).unwrap();
        assert!(matches!(
            sys.second_order_residual(1, c(0.5, 0.0)),
            Err(Error::Inapplicable(_))
        ));

        let sys = build_system(&table_of(&WeightSpec::semiclassical_m2()), 5, 1e-12).unwrap();
        let res = sys.second_order_residual(2, c(0.7, 0.0)).unwrap();
        assert!(res.norm() < 1e-10, "residual = {res}");
    }

    #[test]
    fn casoratian_residuals_vanish() {
        let w1 = WeightSpec::one();
        let sys = build_system(&table_of(&w1), 4, 1e-12).unwrap();
        let res = sys.casoratian_residuals(1, c(0.5, 0.0)).unwrap();
        assert!(res[2].norm() < 1e-14);

        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(0.4, 0.0))]);
        let sys = build_system(&table_of(&w), 6, 1e-12).unwrap();
        for r in sys.casoratian_residuals(4, c(3.0, 0.0)).unwrap() {
            assert!(r.norm() < 1e-10);
        }
        let t = table_of(&inv_z_minus_two());
        let sys = build_system(&t, 3, 1e-12).unwrap();
        for r in sys.casoratian_residuals(0, c(0.2, 0.0)).unwrap() {
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn negative_extension_seed_values() {
        let w = WeightSpec::semiclassical_m2();
        let mut sys = build_system(&table_of(&w), 3, 1e-12).unwrap();
        sys.extend_negative(-2).unwrap();
        let z = c(0.4, 0.3);
        let a = sys.associated(-1, z).unwrap();
        assert!((a.xi - 2.0 / z).norm() < 1e-14);
        assert!((a.xi_star - c(2.0, 0.0)).norm() < 1e-14);
        assert_eq!(sys.phi_eval(-1, z).unwrap(), c(0.0, 0.0));
        assert_eq!(sys.phistar_eval(-1, z).unwrap(), c(0.0, 0.0));

        // backward recurrence from the n = 0 row reproduces the seed
        let y0 = sys.y_matrix(&w, 0, z).unwrap();
        let ym1 = sys.recurrence_step(-1, Direction::Backward, &y0).unwrap();
        let w_z = w.evaluate(z).unwrap();
        assert!((ym1.entries.e[0][0]).norm() < 1e-12);
        assert!((ym1.entries.e[0][1] - 2.0 / z / w_z).norm() < 1e-12);
        assert!((ym1.entries.e[1][0]).norm() < 1e-12);
        assert!((ym1.entries.e[1][1] + 2.0 / w_z).norm() < 1e-12);
    }

    #[test]
    fn expansion_coefficients_match_series_helpers() {
        let t = table_of(&WeightSpec::semiclassical_m2());
        let sys = build_system(&t, 8, 1e-12).unwrap();
        // spot-check the series helpers against direct evaluation
        let n = 3usize;
        let z = c(0.2, 0.1);
        let mut acc = c(0.0, 0.0);
        for p in 0..40 {
            acc += sys.xi_series_coeff(n, p, Region::Interior).unwrap() * z.powi(p as i32);
        }
        let direct = sys.associated(n as i64, z).unwrap().xi;
        assert!((acc - direct).norm() < 1e-12);
    }
}
