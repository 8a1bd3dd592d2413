//! Weights on the unit circle: symbolic factor products, Fourier
//! coefficients, the Caratheodory function, Cauchy-type moments and rational
//! modifications.
//!
//! Every factor is normalized so that it is single-valued and analytic in an
//! annulus containing the unit circle:
//!
//! - `outer`: (z - z0)^rho with |z0| > 1, evaluated as
//!   (-z0)^rho (1 - z/z0)^rho with principal branches;
//! - `conjugated`: (1 - z0/z)^rho with 0 < |z0| < 1, principal branch;
//! - `monomial`: z^m with integer m.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for recognizing two zero locations as coincident (exponent
/// merging in rational modifications).
pub const ZERO_MERGE_TOL: f64 = 1e-14;

/// Margin around |z| = 1 inside which evaluations are refused.
pub const CIRCLE_MARGIN: f64 = 1e-8;

pub(crate) mod serde_c64 {
    use super::C64;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&v.re)?;
        seq.serialize_element(&v.im)?;
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        if raw.len() != 2 {
            return Err(D::Error::custom("complex number must be a [re, im] pair"));
        }
        Ok(C64::new(raw[0], raw[1]))
    }
}

pub(crate) mod serde_c64_vec {
    use super::C64;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for c in v {
            seq.serialize_element(&[c.re, c.im])?;
        }
        seq.end()
    }

    #[allow(clippy::ptr_arg)]
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        raw.into_iter()
            .map(|p| {
                if p.len() != 2 {
                    Err(D::Error::custom("complex number must be a [re, im] pair"))
                } else {
                    Ok(C64::new(p[0], p[1]))
                }
            })
            .collect()
    }
}

mod serde_c64_opt {
    use super::C64;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(c) => super::serde_c64::serialize(c, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<C64>, D::Error> {
        let raw = Option::<Vec<f64>>::deserialize(d)?;
        match raw {
            None => Ok(None),
            Some(p) if p.len() == 2 => Ok(Some(C64::new(p[0], p[1]))),
            Some(_) => Err(D::Error::custom("complex number must be a [re, im] pair")),
        }
    }
}

/// Kind of an elementary weight factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Outer,
    Conjugated,
    Monomial,
}

/// One multiplicative factor of a weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightFactor {
    pub kind: FactorKind,
    #[serde(
        with = "serde_c64_opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub zero: Option<C64>,
    #[serde(with = "serde_c64")]
    pub exponent: C64,
}

impl WeightFactor {
    pub fn outer(zero: C64, exponent: C64) -> Self {
        Self {
            kind: FactorKind::Outer,
            zero: Some(zero),
            exponent,
        }
    }

    pub fn conjugated(zero: C64, exponent: C64) -> Self {
        Self {
            kind: FactorKind::Conjugated,
            zero: Some(zero),
            exponent,
        }
    }

    pub fn monomial(m: i64) -> Self {
        Self {
            kind: FactorKind::Monomial,
            zero: None,
            exponent: C64::new(m as f64, 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FactorKind::Outer => {
                let z0 = self
                    .zero
                    .ok_or_else(|| Error::InvalidWeight("outer factor needs a zero".into()))?;
                if z0.norm() <= 1.0 + CIRCLE_MARGIN {
                    return Err(Error::InvalidWeight(format!(
                        "outer factor zero {z0} must satisfy |z0| > 1"
                    )));
                }
            }
            FactorKind::Conjugated => {
                let z0 = self
                    .zero
                    .ok_or_else(|| Error::InvalidWeight("conjugated factor needs a zero".into()))?;
                if z0.norm() >= 1.0 - CIRCLE_MARGIN || z0.norm() == 0.0 {
                    return Err(Error::InvalidWeight(format!(
                        "conjugated factor zero {z0} must satisfy 0 < |z0| < 1"
                    )));
                }
            }
            FactorKind::Monomial => {
                if self.zero.is_some() {
                    return Err(Error::InvalidWeight("monomial factor takes no zero".into()));
                }
                let m = self.exponent;
                if m.im.abs() > 1e-12 || (m.re - m.re.round()).abs() > 1e-12 {
                    return Err(Error::InvalidWeight(format!(
                        "monomial exponent {m} must be an integer"
                    )));
                }
            }
        }
        if self.kind != FactorKind::Monomial {
            // integrability bound, enforced for non-integer exponents only:
            // integer exponents are rational factors with no branch, valid for
            // any exponent when the zero is off the circle
            let e = self.exponent;
            let is_integer = e.im.abs() < 1e-12 && (e.re - e.re.round()).abs() < 1e-12;
            if !is_integer && e.re <= -1.0 {
                return Err(Error::InvalidWeight(format!(
                    "factor exponent {} must have real part > -1",
                    self.exponent
                )));
            }
        }
        Ok(())
    }

    /// Evaluate the factor at z (off its zero/pole).
    fn eval(&self, z: C64) -> Result<C64> {
        match self.kind {
            FactorKind::Outer => {
                let z0 = self.zero.unwrap();
                if (z - z0).norm() < ZERO_MERGE_TOL * z0.norm().max(1.0) {
                    return Err(Error::Domain(format!(
                        "evaluation at the zero {z0} of an outer factor"
                    )));
                }
                // (z - z0)^rho = (-z0)^rho (1 - z/z0)^rho, principal branches
                Ok((-z0).powc(self.exponent) * (C64::new(1.0, 0.0) - z / z0).powc(self.exponent))
            }
            FactorKind::Conjugated => {
                let z0 = self.zero.unwrap();
                if z.norm() == 0.0 {
                    return Err(Error::Domain(
                        "evaluation at z = 0 with a conjugated factor present".into(),
                    ));
                }
                if (z - z0).norm() < ZERO_MERGE_TOL * z0.norm().max(1.0) {
                    return Err(Error::Domain(format!(
                        "evaluation at the zero {z0} of a conjugated factor"
                    )));
                }
                Ok((C64::new(1.0, 0.0) - z0 / z).powc(self.exponent))
            }
            FactorKind::Monomial => {
                let m = self.exponent.re.round() as i32;
                if z.norm() == 0.0 {
                    return Err(Error::Domain(
                        "evaluation at z = 0 with a monomial factor present".into(),
                    ));
                }
                Ok(z.powi(m))
            }
        }
    }
}

/// Rational modification data: zeros (z - alpha_i), (1 - alpha*_j / z) over
/// poles (z - beta_k), (1 - beta*_l / z).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RationalMod {
    #[serde(with = "serde_c64_vec", default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<C64>,
    #[serde(with = "serde_c64_vec", default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_stars: Vec<C64>,
    #[serde(with = "serde_c64_vec", default, skip_serializing_if = "Vec::is_empty")]
    pub betas: Vec<C64>,
    #[serde(with = "serde_c64_vec", default, skip_serializing_if = "Vec::is_empty")]
    pub beta_stars: Vec<C64>,
}

impl RationalMod {
    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
            && self.alpha_stars.is_empty()
            && self.betas.is_empty()
            && self.beta_stars.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let near = |a: C64, b: C64| (a - b).norm() < ZERO_MERGE_TOL * a.norm().max(1.0);
        for list in [&self.alphas, &self.alpha_stars, &self.betas, &self.beta_stars] {
            for (i, &a) in list.iter().enumerate() {
                if (a.norm() - 1.0).abs() < CIRCLE_MARGIN {
                    return Err(Error::Domain(format!(
                        "rational modification zero/pole {a} lies on the unit circle"
                    )));
                }
                for &b in &list[i + 1..] {
                    if near(a, b) {
                        return Err(Error::Degeneracy(format!(
                            "coincident entries {a} within a rational modification list"
                        )));
                    }
                }
            }
        }
        for &a in &self.alphas {
            if self.betas.iter().any(|&b| near(a, b)) {
                return Err(Error::Degeneracy(format!(
                    "numerator zero {a} coincides with a denominator zero"
                )));
            }
        }
        for &a in &self.alpha_stars {
            if self.beta_stars.iter().any(|&b| near(a, b)) {
                return Err(Error::Degeneracy(format!(
                    "conjugated numerator zero {a} coincides with a conjugated pole"
                )));
            }
        }
        Ok(())
    }

    fn eval(&self, z: C64) -> Result<C64> {
        let one = C64::new(1.0, 0.0);
        let mut v = one;
        for &a in &self.alphas {
            v *= z - a;
        }
        for &a in &self.alpha_stars {
            if z.norm() == 0.0 {
                return Err(Error::Domain("rational modification needs z != 0".into()));
            }
            v *= one - a / z;
        }
        for &b in &self.betas {
            let d = z - b;
            if d.norm() < ZERO_MERGE_TOL * b.norm().max(1.0) {
                return Err(Error::Domain(format!(
                    "evaluation at the pole {b} of a rational modification"
                )));
            }
            v /= d;
        }
        for &b in &self.beta_stars {
            if z.norm() == 0.0 {
                return Err(Error::Domain("rational modification needs z != 0".into()));
            }
            let d = one - b / z;
            if d.norm() < ZERO_MERGE_TOL {
                return Err(Error::Domain(format!(
                    "evaluation at the pole {b} of a conjugated rational modification"
                )));
            }
            v /= d;
        }
        Ok(v)
    }
}

/// Truncated two-sided Fourier table of a weight, with a certified bound on
/// the discarded coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierTable {
    pub k_min: i64,
    pub k_max: i64,
    #[serde(with = "serde_c64_vec")]
    pub coeffs: Vec<C64>,
    pub tail_bound: f64,
}

impl FourierTable {
    pub fn new(k_min: i64, coeffs: Vec<C64>, tail_bound: f64) -> Self {
        let k_max = k_min + coeffs.len() as i64 - 1;
        Self {
            k_min,
            k_max,
            coeffs,
            tail_bound,
        }
    }

    /// Coefficient w_k, zero outside the stored range.
    pub fn coeff(&self, k: i64) -> C64 {
        if k < self.k_min || k > self.k_max {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k - self.k_min) as usize]
        }
    }

    /// Reconstruct w at a point of the annulus from the truncated series.
    pub fn reconstruct(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in self.k_min..=self.k_max {
            acc += self.coeff(k) * z.powi(k as i32);
        }
        acc
    }

    /// Caratheodory function F(z) of the table, interior or exterior branch.
    pub fn caratheodory(&self, z: C64) -> Result<C64> {
        let r = z.norm();
        if (r - 1.0).abs() < CIRCLE_MARGIN {
            return Err(Error::Domain(format!(
                "Caratheodory function needs |z| != 1, got |z| = {r}"
            )));
        }
        let w0 = self.coeff(0);
        if r < 1.0 {
            let mut acc = C64::new(0.0, 0.0);
            let mut zp = C64::new(1.0, 0.0);
            for k in 1..=self.k_max.max(0) {
                zp *= z;
                acc += self.coeff(k) * zp;
            }
            Ok(w0 + 2.0 * acc)
        } else {
            let zi = C64::new(1.0, 0.0) / z;
            let mut acc = C64::new(0.0, 0.0);
            let mut zp = C64::new(1.0, 0.0);
            for k in 1..=(-self.k_min).max(0) {
                zp *= zi;
                acc += self.coeff(-k) * zp;
            }
            Ok(-w0 - 2.0 * acc)
        }
    }

    /// Cauchy-type moment g_j(z) = 2 sum_{m>=0} z^{m+1} w_{m+1-j}, |z| < 1.
    pub fn g_moment(&self, j: i64, z: C64) -> Result<C64> {
        if z.norm() >= 1.0 - CIRCLE_MARGIN {
            return Err(Error::Domain(format!(
                "g_moment needs |z| < 1, got |z| = {}",
                z.norm()
            )));
        }
        let mut acc = C64::new(0.0, 0.0);
        let m_lo = (self.k_min + j - 1).max(0);
        let m_hi = self.k_max + j - 1;
        if m_hi < m_lo {
            return Ok(acc);
        }
        let mut zp = z.powi((m_lo + 1) as i32);
        for m in m_lo..=m_hi {
            acc += zp * self.coeff(m + 1 - j);
            zp *= z;
        }
        Ok(2.0 * acc)
    }
}

/// Symbolic weight on the unit circle: a factor product or an explicit
/// Fourier table, optionally multiplied by a rational modification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<WeightFactor>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_fourier: Option<FourierTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rational_mod: Option<RationalMod>,
}

impl WeightSpec {
    /// The Lebesgue weight w = 1.
    pub fn one() -> Self {
        Self {
            factors: Some(Vec::new()),
            base_fourier: None,
            rational_mod: None,
        }
    }

    /// The two-singularity weight (1 - 0.5/z)^0.3 (z - 2)^0.4 used throughout
    /// the verification suites.
    pub fn semiclassical_m2() -> Self {
        Self::from_factors(vec![
            WeightFactor::conjugated(C64::new(0.5, 0.0), C64::new(0.3, 0.0)),
            WeightFactor::outer(C64::new(2.0, 0.0), C64::new(0.4, 0.0)),
        ])
    }

    pub fn from_factors(factors: Vec<WeightFactor>) -> Self {
        Self {
            factors: Some(factors),
            base_fourier: None,
            rational_mod: None,
        }
    }

    pub fn from_table(table: FourierTable) -> Self {
        Self {
            factors: None,
            base_fourier: Some(table),
            rational_mod: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.factors, &self.base_fourier) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidWeight(
                    "exactly one of factors / base_fourier may be present".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidWeight(
                    "weight needs factors or base_fourier".into(),
                ))
            }
            _ => {}
        }
        if let Some(factors) = &self.factors {
            for f in factors {
                f.validate()?;
            }
        }
        if let Some(m) = &self.rational_mod {
            m.validate()?;
        }
        Ok(())
    }

    /// Evaluate the weight at z.
    pub fn evaluate(&self, z: C64) -> Result<C64> {
        let mut v = C64::new(1.0, 0.0);
        if let Some(factors) = &self.factors {
            for f in factors {
                v *= f.eval(z)?;
            }
        } else if let Some(table) = &self.base_fourier {
            v = table.reconstruct(z);
        }
        if let Some(m) = &self.rational_mod {
            v *= m.eval(z)?;
        }
        Ok(v)
    }

    /// Logarithmic derivative w'/w at z, from the factor data.
    pub fn log_derivative(&self, z: C64) -> Result<C64> {
        let factors = self.factors.as_ref().ok_or_else(|| {
            Error::InvalidWeight("log derivative needs a factor-based weight".into())
        })?;
        let mut acc = C64::new(0.0, 0.0);
        for f in factors {
            match f.kind {
                FactorKind::Outer => acc += f.exponent / (z - f.zero.unwrap()),
                FactorKind::Conjugated => {
                    let z0 = f.zero.unwrap();
                    acc += f.exponent / (z - z0) - f.exponent / z;
                }
                FactorKind::Monomial => acc += f.exponent / z,
            }
        }
        if let Some(m) = &self.rational_mod {
            for &a in &m.alphas {
                acc += C64::new(1.0, 0.0) / (z - a);
            }
            for &a in &m.alpha_stars {
                acc += C64::new(1.0, 0.0) / (z - a) - C64::new(1.0, 0.0) / z;
            }
            for &b in &m.betas {
                acc -= C64::new(1.0, 0.0) / (z - b);
            }
            for &b in &m.beta_stars {
                acc -= C64::new(1.0, 0.0) / (z - b) - C64::new(1.0, 0.0) / z;
            }
        }
        Ok(acc)
    }

    /// Apply a rational modification, merging coincident zeros into factor
    /// exponents (the elementary-shift specialization).
    pub fn modify(&self, m: &RationalMod) -> Result<WeightSpec> {
        self.validate()?;
        m.validate()?;
        let mut out = self.clone();
        if let Some(factors) = out.factors.as_mut() {
            for &a in &m.alphas {
                merge_zero(factors, a, 1)?;
            }
            for &b in &m.betas {
                merge_zero(factors, b, -1)?;
            }
            for &a in &m.alpha_stars {
                merge_conjugated(factors, a, 1)?;
            }
            for &b in &m.beta_stars {
                merge_conjugated(factors, b, -1)?;
            }
            factors.retain(|f| match f.kind {
                FactorKind::Monomial => f.exponent.norm() > 0.5,
                _ => f.exponent.norm() > ZERO_MERGE_TOL,
            });
        } else {
            let near = |a: C64, b: C64| (a - b).norm() < ZERO_MERGE_TOL * a.norm().max(1.0);
            let mut combined = out.rational_mod.take().unwrap_or_default();
            for (&src, dst) in m
                .alphas
                .iter()
                .map(|a| (a, 0usize))
                .chain(m.alpha_stars.iter().map(|a| (a, 1)))
                .chain(m.betas.iter().map(|a| (a, 2)))
                .chain(m.beta_stars.iter().map(|a| (a, 3)))
            {
                let list = match dst {
                    0 => &mut combined.alphas,
                    1 => &mut combined.alpha_stars,
                    2 => &mut combined.betas,
                    _ => &mut combined.beta_stars,
                };
                if list.iter().any(|&x| near(x, src)) {
                    return Err(Error::Degeneracy(format!(
                        "repeated rational modification at {src}; confluent factors are unsupported"
                    )));
                }
                list.push(src);
            }
            combined.validate()?;
            out.rational_mod = Some(combined);
        }
        out.validate()?;
        Ok(out)
    }

    /// Fourier coefficients by the equi-spaced-node discrete transform,
    /// doubling the node count until the aliasing tail falls below tol.
    pub fn fourier_coefficients(&self, tol: f64, max_points: usize) -> Result<FourierTable> {
        self.validate()?;
        if tol <= 0.0 {
            return Err(Error::InvalidWeight("tolerance must be positive".into()));
        }
        if self.rational_mod.is_none() {
            if let Some(table) = &self.base_fourier {
                return Ok(table.clone());
            }
        }
        let mut n = 64usize;
        let mut planner = FftPlanner::new();
        let mut achieved = f64::INFINITY;
        while n <= max_points {
            let mut samples: Vec<C64> = Vec::with_capacity(n);
            for l in 0..n {
                let theta = 2.0 * std::f64::consts::PI * (l as f64) / (n as f64);
                let z = C64::new(theta.cos(), theta.sin());
                samples.push(self.evaluate(z)?);
            }
            let fft = planner.plan_fft_forward(n);
            fft.process(&mut samples);
            let scale = 1.0 / n as f64;
            // bin k -> w_k for k < n/2, bin k -> w_{k-n} for k >= n/2
            let half = (n / 2) as i64;
            let coeff_at = |k: i64| -> C64 {
                let idx = if k >= 0 { k as usize } else { (n as i64 + k) as usize };
                samples[idx] * scale
            };
            let tail_start = (3 * n / 8) as i64;
            let mut tail: f64 = 0.0;
            for k in tail_start..half {
                tail = tail.max(coeff_at(k).norm());
                tail = tail.max(coeff_at(-k).norm());
            }
            tail = tail.max(coeff_at(-half).norm());
            achieved = tail;
            if tail <= tol {
                let mut k_min = -half;
                let mut k_max = half - 1;
                let keep = tol * 1e-2;
                let mut trimmed: f64 = 0.0;
                while k_min < 0 && coeff_at(k_min).norm() <= keep {
                    trimmed = trimmed.max(coeff_at(k_min).norm());
                    k_min += 1;
                }
                while k_max > 0 && coeff_at(k_max).norm() <= keep {
                    trimmed = trimmed.max(coeff_at(k_max).norm());
                    k_max -= 1;
                }
                let coeffs: Vec<C64> = (k_min..=k_max).map(coeff_at).collect();
                return Ok(FourierTable::new(k_min, coeffs, tail.max(trimmed)));
            }
            n *= 2;
        }
        Err(Error::Accuracy(
            format!("Fourier quadrature did not converge within {max_points} nodes"),
            achieved,
        ))
    }

    /// Direct quadrature of the Caratheodory integral, bypassing the table.
    /// Used as an independent cross-check of `FourierTable::caratheodory`.
    pub fn caratheodory_quadrature(&self, z: C64, n_points: usize) -> Result<C64> {
        if (z.norm() - 1.0).abs() < 1e-3 {
            return Err(Error::Domain(
                "Caratheodory quadrature needs z away from the circle".into(),
            ));
        }
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..n_points {
            let theta = 2.0 * std::f64::consts::PI * (l as f64) / (n_points as f64);
            let zeta = C64::new(theta.cos(), theta.sin());
            acc += (zeta + z) / (zeta - z) * self.evaluate(zeta)?;
        }
        Ok(acc / n_points as f64)
    }
}

fn monomial_shift(factors: &mut Vec<WeightFactor>, delta: i64) {
    if delta == 0 {
        return;
    }
    for f in factors.iter_mut() {
        if f.kind == FactorKind::Monomial {
            f.exponent += C64::new(delta as f64, 0.0);
            return;
        }
    }
    factors.push(WeightFactor::monomial(delta));
}

/// Multiply by (z - x)^s, s = +-1, merging into an existing factor at x.
fn merge_zero(factors: &mut Vec<WeightFactor>, x: C64, s: i64) -> Result<()> {
    let near =
        |a: Option<C64>| a.map_or(false, |z0| (z0 - x).norm() < ZERO_MERGE_TOL * x.norm().max(1.0));
    let sc = C64::new(s as f64, 0.0);
    if let Some(i) = factors.iter().position(|f| near(f.zero)) {
        match factors[i].kind {
            FactorKind::Outer => factors[i].exponent += sc,
            FactorKind::Conjugated => {
                // (z - x)^s = z^s (1 - x/z)^s
                factors[i].exponent += sc;
                monomial_shift(factors, s);
            }
            FactorKind::Monomial => unreachable!("monomial factors carry no zero"),
        }
        return Ok(());
    }
    if x.norm() > 1.0 {
        factors.push(WeightFactor::outer(x, sc));
    } else if x.norm() > 0.0 {
        factors.push(WeightFactor::conjugated(x, sc));
        monomial_shift(factors, s);
    } else {
        monomial_shift(factors, s);
    }
    Ok(())
}

/// Multiply by (1 - x/z)^s, s = +-1, merging into an existing factor at x.
fn merge_conjugated(factors: &mut Vec<WeightFactor>, x: C64, s: i64) -> Result<()> {
    if x.norm() == 0.0 {
        return Err(Error::InvalidWeight(
            "conjugated modification zero must be nonzero".into(),
        ));
    }
    let near =
        |a: Option<C64>| a.map_or(false, |z0| (z0 - x).norm() < ZERO_MERGE_TOL * x.norm().max(1.0));
    let sc = C64::new(s as f64, 0.0);
    if let Some(i) = factors.iter().position(|f| near(f.zero)) {
        match factors[i].kind {
            FactorKind::Conjugated => factors[i].exponent += sc,
            FactorKind::Outer => {
                // (1 - x/z)^s = z^{-s} (z - x)^s
                factors[i].exponent += sc;
                monomial_shift(factors, -s);
            }
            FactorKind::Monomial => unreachable!("monomial factors carry no zero"),
        }
        return Ok(());
    }
    if x.norm() < 1.0 {
        factors.push(WeightFactor::conjugated(x, sc));
    } else {
        factors.push(WeightFactor::outer(x, sc));
        monomial_shift(factors, -s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn test_weight() -> WeightSpec {
        WeightSpec::semiclassical_m2()
    }

    #[test]
    fn evaluate_empty_product() {
        let w = WeightSpec::one();
        assert_eq!(w.evaluate(c(0.3, 0.4)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn evaluate_exponent_one_factor() {
        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(1.0, 0.0))]);
        let v = w.evaluate(c(0.0, 1.0)).unwrap();
        assert!((v - (c(0.0, 1.0) - c(2.0, 0.0))).norm() < 1e-14);
    }

    #[test]
    fn evaluate_conjugated_square_root() {
        let w = WeightSpec::from_factors(vec![WeightFactor::conjugated(c(0.5, 0.0), c(0.5, 0.0))]);
        let v = w.evaluate(c(1.0, 0.0)).unwrap();
        assert_relative_eq!(v.re, 0.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn evaluation_at_factor_zero_is_domain_error() {
        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(0.4, 0.0))]);
        assert!(matches!(w.evaluate(c(2.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn fourier_lebesgue() {
        let t = WeightSpec::one().fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.coeff(0) - c(1.0, 0.0)).norm() < 1e-13);
        for k in 1..=3 {
            assert!(t.coeff(k).norm() < 1e-13);
            assert!(t.coeff(-k).norm() < 1e-13);
        }
    }

    #[test]
    fn fourier_polynomial_weight() {
        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(1.0, 0.0))]);
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.coeff(1) - c(1.0, 0.0)).norm() < 1e-12);
        assert!((t.coeff(0) - c(-2.0, 0.0)).norm() < 1e-12);
        assert!(t.coeff(-1).norm() < 1e-12);
        assert!(t.coeff(2).norm() < 1e-12);
    }

    #[test]
    fn fourier_binomial_series() {
        // (1 - 0.5/z)^{1/2}: binomial series in 1/z
        let w = WeightSpec::from_factors(vec![WeightFactor::conjugated(c(0.5, 0.0), c(0.5, 0.0))]);
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.coeff(0) - c(1.0, 0.0)).norm() < 1e-12);
        assert!((t.coeff(-1) - c(-0.25, 0.0)).norm() < 1e-12);
        assert!((t.coeff(-2) - c(-0.03125, 0.0)).norm() < 1e-12);
        assert!(t.coeff(1).norm() < 1e-12);
    }

    #[test]
    fn fourier_tail_stable_under_doubling() {
        let w = test_weight();
        let t1 = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        // force at least one extra doubling by demanding a tighter tolerance
        let t2 = w.fourier_coefficients(1e-14, 1 << 16).unwrap();
        for k in t1.k_min..=t1.k_max {
            assert!((t1.coeff(k) - t2.coeff(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn caratheodory_values() {
        let t = WeightSpec::one().fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.caratheodory(c(0.5, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((t.caratheodory(c(2.0, 0.0)).unwrap() - c(-1.0, 0.0)).norm() < 1e-12);
        let w = WeightSpec::from_factors(vec![WeightFactor::conjugated(c(0.5, 0.0), c(0.5, 0.0))]);
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.caratheodory(c(0.0, 0.0)).unwrap() - t.coeff(0)).norm() < 1e-14);
    }

    #[test]
    fn caratheodory_rejects_circle() {
        let t = WeightSpec::one().fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!(t.caratheodory(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn caratheodory_matches_direct_quadrature() {
        let w = test_weight();
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        for &z in &[c(0.3, 0.2), c(-0.4, 0.35), c(1.8, 0.7), c(-2.2, -0.4)] {
            let a = t.caratheodory(z).unwrap();
            let b = w.caratheodory_quadrature(z, 4096).unwrap();
            assert!((a - b).norm() < 1e-11, "z = {z}: {a} vs {b}");
        }
    }

    #[test]
    fn g_moment_values() {
        let t = WeightSpec::one().fourier_coefficients(1e-12, 1 << 16).unwrap();
        assert!((t.g_moment(1, c(0.5, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-13);
        assert!(t.g_moment(0, c(0.5, 0.0)).unwrap().norm() < 1e-13);
        let w = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(1.0, 0.0))]);
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        // direct series 2(z w_0 + z^2 w_1) at z = 0.25 with w_0 = -2, w_1 = 1
        let expect = 2.0 * (0.25 * (-2.0) + 0.0625);
        assert!((t.g_moment(1, c(0.25, 0.0)).unwrap() - c(expect, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn modify_weight_basic() {
        let m = RationalMod {
            alphas: vec![c(2.0, 0.0)],
            ..Default::default()
        };
        let w = WeightSpec::one().modify(&m).unwrap();
        let z = c(0.3, 0.1);
        assert!((w.evaluate(z).unwrap() - (z - c(2.0, 0.0))).norm() < 1e-14);
    }

    #[test]
    fn modify_weight_merges_exponent() {
        let base = WeightSpec::from_factors(vec![WeightFactor::outer(c(2.0, 0.0), c(0.3, 0.0))]);
        let m = RationalMod {
            alphas: vec![c(2.0, 0.0)],
            ..Default::default()
        };
        let w = base.modify(&m).unwrap();
        let f = &w.factors.as_ref().unwrap()[0];
        assert!((f.exponent - c(1.3, 0.0)).norm() < 1e-14);
        assert_eq!(w.factors.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn modify_weight_geometric_series() {
        let m = RationalMod {
            betas: vec![c(2.0, 0.0)],
            ..Default::default()
        };
        let w = WeightSpec::one().modify(&m).unwrap();
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        for k in 0..6 {
            let expect = -(0.5f64.powi(k + 1));
            assert!((t.coeff(k as i64) - c(expect, 0.0)).norm() < 1e-12);
        }
        assert!(t.coeff(-1).norm() < 1e-12);
    }

    #[test]
    fn modify_weight_rejects_circle_zero() {
        let m = RationalMod {
            alphas: vec![c(1.0, 0.0)],
            ..Default::default()
        };
        assert!(WeightSpec::one().modify(&m).is_err());
    }

    #[test]
    fn modify_weight_rejects_alpha_beta_collision() {
        let m = RationalMod {
            alphas: vec![c(2.0, 0.0)],
            betas: vec![c(2.0, 0.0)],
            ..Default::default()
        };
        assert!(WeightSpec::one().modify(&m).is_err());
    }

    #[test]
    fn fourier_roundtrip_on_circle() {
        let w = test_weight();
        let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
        for l in 0..128 {
            let theta = 2.0 * std::f64::consts::PI * (l as f64 + 0.37) / 128.0;
            let z = c(theta.cos(), theta.sin());
            let direct = w.evaluate(z).unwrap();
            let series = t.reconstruct(z);
            assert!((direct - series).norm() < 1e-11);
        }
    }

    #[test]
    fn winding_of_log_weight_is_integral() {
        // single-valuedness: the total increase of arg w around the circle
        // must be a multiple of 2 pi
        let w = test_weight();
        let n = 512;
        let mut winding = 0.0f64;
        let mut prev = w.evaluate(c(1.0, 0.0)).unwrap();
        for l in 1..=n {
            let theta = 2.0 * std::f64::consts::PI * (l as f64) / (n as f64);
            let z = c(theta.cos(), theta.sin());
            let v = w.evaluate(z).unwrap();
            winding += (v / prev).arg();
            prev = v;
        }
        let turns = winding / (2.0 * std::f64::consts::PI);
        assert!((turns - turns.round()).abs() < 1e-9, "turns = {turns}");
    }

    #[test]
    fn weight_json_schema_roundtrip() {
        let w = test_weight();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"kind\":\"conjugated\""));
        assert!(s.contains("\"zero\":[0.5,0.0]") || s.contains("\"zero\":[0.5,0]"));
        let back: WeightSpec = serde_json::from_str(&s).unwrap();
        let z = c(0.3, 0.4);
        assert!((w.evaluate(z).unwrap() - back.evaluate(z).unwrap()).norm() < 1e-15);
    }
}
