//! Residual-check records and report serialization.

use num_complex::Complex64 as C64;
use serde::Serialize;

/// One verified identity with its residual.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    /// stable unique id, e.g. "core/Eq-2.20c/n=3/z=5"
    pub check: String,
    /// equation tag, e.g. "Eq-2.20c" or "HM-a"
    pub equation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_opt_c64")]
    pub z: Option<C64>,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

fn ser_opt_c64<S: serde::Serializer>(v: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(c) => crate::weight::serde_c64::serialize(c, s),
        None => s.serialize_none(),
    }
}

/// A full verification report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub seed: u64,
    pub n_max: usize,
    pub checks_total: usize,
    pub checks_failed: usize,
    pub passed: bool,
    pub checks: Vec<CheckRecord>,
}

impl Report {
    pub fn from_checks(suite: &str, seed: u64, n_max: usize, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.check.cmp(&b.check));
        let checks_failed = checks.iter().filter(|c| !c.pass).count();
        Report {
            suite: suite.to_string(),
            seed,
            n_max,
            checks_total: checks.len(),
            checks_failed,
            passed: checks_failed == 0,
            checks,
        }
    }

    pub fn first_failure(&self) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// CSV rendering: one row per check.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,equation,n,j,k,z_re,z_im,residual,normalizer,tol,pass\n");
        for ch in &self.checks {
            let opt_i = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
            let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            let (zre, zim) = ch
                .z
                .map(|z| (format!("{:e}", z.re), format!("{:e}", z.im)))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:e},{},{:e},{}\n",
                ch.check,
                ch.equation,
                opt_i(ch.n),
                opt_u(ch.j),
                opt_u(ch.k),
                zre,
                zim,
                ch.residual,
                ch.normalizer.map(|v| format!("{v:e}")).unwrap_or_default(),
                ch.tol,
                ch.pass
            ));
        }
        out
    }
}
