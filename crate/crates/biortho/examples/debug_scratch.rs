use biortho::bops::build_system;
use biortho::linalg::Mat2;
use biortho::semiclassical::*;
use biortho::schlesinger::*;
use biortho::{C64, WeightSpec};

fn c(re: f64, im: f64) -> C64 { C64::new(re, im) }

fn main() {
    let w = WeightSpec::semiclassical_m2();
    let t = w.fourier_coefficients(1e-12, 1 << 16).unwrap();
    let sys = build_system(&t, 12, 1e-12).unwrap();
    let data = SemiClassicalData::from_weight(&w).unwrap();

    // PDE with k=0 included in the commutator sum
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
    let zs = [c(0.0,0.0), data.singularities[0].z, data.singularities[1].z];
    let vv = [c(0.0,0.0), vels[0], vels[1]];
    for jj in 1..=2usize {
        let fd = (rp.a[jj] - rm.a[jj]).scale(c(1.0 / (2.0 * dt), 0.0));
        let mut rhs = b_inf * rs.a[jj] - rs.a[jj] * b_inf;
        for k in 0..=2usize {
            if k == jj { continue; }
            let ratio = (vv[jj] - vv[k]) / (zs[jj] - zs[k]);
            rhs = rhs + (rs.a[k] * rs.a[jj] - rs.a[jj] * rs.a[k]).scale(ratio);
        }
        println!("PDE (k=0 incl) j={jj}: {:.3e}", (fd - rhs).norm_max());
    }

    // A^{j-}_{n,j} variants vs oracle
    let j = 2usize; let n = 1usize;
    let rs = residue_set(&sys, &data, n).unwrap();
    let shifted = apply_shift(&w, &data, j, -1).unwrap();
    let sd = SemiClassicalData::from_weight(&shifted).unwrap();
    let st = shifted.fourier_coefficients(1e-12, 1 << 16).unwrap();
    let ssys = build_system(&st, 8, 1e-12).unwrap();
    let rso = residue_set(&ssys, &sd, n).unwrap();
    let oracle = rso.a[j];
    println!("oracle A[j]- = {:?}", oracle);

    let zj = data.singularities[j-1].z;
    let rho_j = data.singularities[j-1].rho;
    let p = point_data(&sys, &data, n, j).unwrap();
    let pm1 = point_data(&sys, &data, n-1, j).unwrap();
    let kappa_n = sys.kappa(n).unwrap();
    let kappa_nm1 = sys.kappa(n-1).unwrap();
    let phibar0 = sys.phibar(n).unwrap().coeff(0);
    let first = Mat2::new(c(0.0,0.0), c(0.0,0.0), -phibar0, kappa_n).scale((rho_j - 1.0)/kappa_n);
    let left = Mat2::new(kappa_n*p.xistar, kappa_n*p.xi, phibar0*p.xistar, phibar0*p.xi);
    let right = Mat2::new(-phibar0*p.xi, kappa_n*p.xi, phibar0*p.xistar, -kappa_n*p.xistar);
    let zsv = [c(0.0,0.0), data.singularities[0].z, data.singularities[1].z];
    let sum_incl0 = {
        let mut s = Mat2::zero();
        for k in 0..=2usize { if k != j { s = s + rs.a[k].scale(c(1.0,0.0)/(zj - zsv[k])); } }
        s
    };
    let sum_no0 = {
        let mut s = Mat2::zero();
        for k in 1..=2usize { if k != j { s = s + rs.a[k].scale(c(1.0,0.0)/(zj - zsv[k])); } }
        s
    };
    let scale = zj*zj/(kappa_nm1*kappa_n*pm1.xistar*p.xistar);
    for (name, first_sign, sum) in [
        ("incl0, +(rho-1)", 1.0, sum_incl0), ("incl0, -(rho-1)", -1.0, sum_incl0),
        ("no0,   +(rho-1)", 1.0, sum_no0),   ("no0,   -(rho-1)", -1.0, sum_no0),
    ] {
        let cand = first.scale(c(first_sign,0.0)) + (left*sum*right).scale(scale);
        println!("variant {name}: {:.3e}", (cand - oracle).norm_max());
    }
    // also try transposing the sandwich order or sign of scale
    let cand = first + (left*sum_incl0*right).scale(-scale);
    println!("variant incl0, -scale: {:.3e}", (cand - oracle).norm_max());
}
