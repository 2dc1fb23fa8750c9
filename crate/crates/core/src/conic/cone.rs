//! Cone primitives: nonnegative orthant and real PSD cone in packed `svec` form.
//!
//! `svec` stores the lower triangle column by column with off-diagonal
//! entries scaled by √2, so the Euclidean inner product matches tr(XY).

use nalgebra::{Cholesky, DVector, SVD};

use crate::matcore::{hermitian_eigen, RMat};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    Nonneg(usize),
    Psd(usize),
}

impl ConeKind {
    pub fn dim(&self) -> usize {
        match *self {
            ConeKind::Nonneg(n) => n,
            ConeKind::Psd(k) => svec_len(k),
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            ConeKind::Nonneg(n) => n,
            ConeKind::Psd(k) => k,
        }
    }
}

pub fn svec_len(k: usize) -> usize {
    k * (k + 1) / 2
}

pub fn svec_into(m: &RMat, out: &mut [f64]) {
    let k = m.nrows();
    let mut p = 0;
    for j in 0..k {
        out[p] = m[(j, j)];
        p += 1;
        for i in j + 1..k {
            out[p] = SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]);
            p += 1;
        }
    }
}

pub fn svec(m: &RMat) -> Vec<f64> {
    let mut out = vec![0.0; svec_len(m.nrows())];
    svec_into(m, &mut out);
    out
}

pub fn smat(v: &[f64], k: usize) -> RMat {
    let mut m = RMat::zeros(k, k);
    let mut p = 0;
    for j in 0..k {
        m[(j, j)] = v[p];
        p += 1;
        for i in j + 1..k {
            let x = v[p] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            p += 1;
        }
    }
    m
}

/// Identity element of the cone.
pub fn unit(kind: ConeKind, out: &mut [f64]) {
    match kind {
        ConeKind::Nonneg(_) => out.iter_mut().for_each(|x| *x = 1.0),
        ConeKind::Psd(k) => svec_into(&RMat::identity(k, k), out),
    }
}

/// Smallest t with u + t·e on the boundary, i.e. −λ_min(u).
pub fn boundary_shift(kind: ConeKind, u: &[f64]) -> f64 {
    match kind {
        ConeKind::Nonneg(_) => u.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max),
        ConeKind::Psd(k) => {
            let ev = hermitian_eigen(&smat(u, k)).eigenvalues;
            -ev.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

/// Nesterov–Todd scaling of one cone.
#[derive(Clone, Debug)]
pub enum Scaling {
    /// W = diag(w).
    Nonneg { w: Vec<f64> },
    /// W(u) = Rᵀ U R, W^{-T}(u) = R^{-1} U R^{-T}.
    Psd { r: RMat, rinv: RMat },
}

impl Scaling {
    pub fn identity(kind: ConeKind) -> Self {
        match kind {
            ConeKind::Nonneg(n) => Scaling::Nonneg { w: vec![1.0; n] },
            ConeKind::Psd(k) => Scaling::Psd {
                r: RMat::identity(k, k),
                rinv: RMat::identity(k, k),
            },
        }
    }

    /// u ↦ W u.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => out
                .iter_mut()
                .zip(u)
                .zip(w)
                .for_each(|((o, x), w)| *o = w * x),
            Scaling::Psd { r, .. } => {
                let k = r.nrows();
                svec_into(&(r.transpose() * smat(u, k) * r), out)
            }
        }
    }

    /// u ↦ W^{-T} u.
    pub fn apply_inv_t(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => out
                .iter_mut()
                .zip(u)
                .zip(w)
                .for_each(|((o, x), w)| *o = x / w),
            Scaling::Psd { rinv, .. } => {
                let k = rinv.nrows();
                svec_into(&(rinv * smat(u, k) * rinv.transpose()), out)
            }
        }
    }

    /// u ↦ W^{-1} u.
    pub fn apply_inv(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => out
                .iter_mut()
                .zip(u)
                .zip(w)
                .for_each(|((o, x), w)| *o = x / w),
            Scaling::Psd { rinv, .. } => {
                let k = rinv.nrows();
                svec_into(&(rinv.transpose() * smat(u, k) * rinv), out)
            }
        }
    }

    /// u ↦ Wᵀ u.
    pub fn apply_t(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { w } => out
                .iter_mut()
                .zip(u)
                .zip(w)
                .for_each(|((o, x), w)| *o = w * x),
            Scaling::Psd { r, .. } => {
                let k = r.nrows();
                svec_into(&(r * smat(u, k) * r.transpose()), out)
            }
        }
    }

    /// W^{-T} applied to every column of `g`.
    pub fn scale_columns_inv_t(&self, g: &RMat) -> RMat {
        match self {
            Scaling::Nonneg { w } => {
                let mut out = g.clone();
                for (i, wi) in w.iter().enumerate() {
                    out.row_mut(i).scale_mut(1.0 / wi);
                }
                out
            }
            Scaling::Psd { rinv, .. } => {
                let k = rinv.nrows();
                let rt = rinv.transpose();
                let mut out = RMat::zeros(g.nrows(), g.ncols());
                let mut buf = vec![0.0; g.nrows()];
                for j in 0..g.ncols() {
                    let col: Vec<f64> = g.column(j).iter().cloned().collect();
                    if col.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    svec_into(&(rinv * smat(&col, k) * &rt), &mut buf);
                    out.column_mut(j).copy_from_slice(&buf);
                }
                out
            }
        }
    }
}

/// Scaled point λ (eigenvalues for PSD cones).
pub fn lambda_vec(kind: ConeKind, lambda: &[f64], out: &mut [f64]) {
    match kind {
        ConeKind::Nonneg(_) => out.copy_from_slice(lambda),
        ConeKind::Psd(k) => {
            out.iter_mut().for_each(|x| *x = 0.0);
            let mut p = 0;
            for j in 0..k {
                out[p] = lambda[j];
                p += k - j;
            }
        }
    }
}

/// out = λ ∘ u.
pub fn lambda_prod(kind: ConeKind, lambda: &[f64], u: &[f64], out: &mut [f64]) {
    match kind {
        ConeKind::Nonneg(_) => out
            .iter_mut()
            .zip(u)
            .zip(lambda)
            .for_each(|((o, x), l)| *o = l * x),
        ConeKind::Psd(k) => {
            let mut p = 0;
            for j in 0..k {
                for i in j..k {
                    out[p] = 0.5 * (lambda[i] + lambda[j]) * u[p];
                    p += 1;
                }
            }
        }
    }
}

/// out solves λ ∘ out = u.
pub fn lambda_div(kind: ConeKind, lambda: &[f64], u: &[f64], out: &mut [f64]) {
    match kind {
        ConeKind::Nonneg(_) => out
            .iter_mut()
            .zip(u)
            .zip(lambda)
            .for_each(|((o, x), l)| *o = x / l),
        ConeKind::Psd(k) => {
            let mut p = 0;
            for j in 0..k {
                for i in j..k {
                    out[p] = 2.0 * u[p] / (lambda[i] + lambda[j]);
                    p += 1;
                }
            }
        }
    }
}

/// Jordan product u ∘ v.
pub fn jordan(kind: ConeKind, u: &[f64], v: &[f64], out: &mut [f64]) {
    match kind {
        ConeKind::Nonneg(_) => out
            .iter_mut()
            .zip(u)
            .zip(v)
            .for_each(|((o, a), b)| *o = a * b),
        ConeKind::Psd(k) => {
            let a = smat(u, k);
            let b = smat(v, k);
            let ab = &a * &b;
            svec_into(&((&ab + ab.transpose()) * 0.5), out)
        }
    }
}

/// Largest t with λ + α u ∈ cone for α < 1/t; returns t = max(−eig(λ^{-1/2} u λ^{-1/2})).
pub fn step_bound(kind: ConeKind, lambda: &[f64], u: &[f64]) -> f64 {
    match kind {
        ConeKind::Nonneg(_) => u
            .iter()
            .zip(lambda)
            .map(|(x, l)| -x / l)
            .fold(f64::NEG_INFINITY, f64::max),
        ConeKind::Psd(k) => {
            let mut m = smat(u, k);
            for i in 0..k {
                for j in 0..k {
                    m[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
                }
            }
            let ev = hermitian_eigen(&m).eigenvalues;
            -ev.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

/// NT scaling for an interior pair (s, z); returns the scaling and λ.
pub fn nt_scaling(kind: ConeKind, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
    match kind {
        ConeKind::Nonneg(_) => {
            if s.iter().chain(z).any(|x| !(*x > 0.0)) {
                return None;
            }
            let w = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
            let l = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
            Some((Scaling::Nonneg { w }, l))
        }
        ConeKind::Psd(k) => {
            let (r, rinv, l) = nt_psd(&smat(s, k), &smat(z, k))?;
            Some((Scaling::Psd { r, rinv }, l))
        }
    }
}

fn nt_psd(s: &RMat, z: &RMat) -> Option<(RMat, RMat, Vec<f64>)> {
    let ls = Cholesky::new(s.clone())?.unpack();
    let lz = Cholesky::new(z.clone())?.unpack();
    let m = lz.transpose() * &ls;
    let svd = SVD::new(m, true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let sv = svd.singular_values;
    if sv.iter().any(|x| !(*x > 0.0)) {
        return None;
    }
    let isq = DVector::from_iterator(sv.len(), sv.iter().map(|x| 1.0 / x.sqrt()));
    let mut r = ls * vt.transpose();
    for j in 0..r.ncols() {
        r.column_mut(j).scale_mut(isq[j]);
    }
    let mut rinv = u.transpose() * lz.transpose();
    for i in 0..rinv.nrows() {
        rinv.row_mut(i).scale_mut(isq[i]);
    }
    Some((r, rinv, sv.iter().cloned().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(k: usize, seed: f64) -> RMat {
        let a = RMat::from_fn(k, k, |i, j| ((i * 7 + j * 3) as f64 * seed).sin());
        &a * a.transpose() + RMat::identity(k, k) * 0.1
    }

    #[test]
    fn svec_roundtrip_and_inner_product() {
        let a = spd(4, 0.7);
        let b = spd(4, 1.3);
        let va = svec(&a);
        let vb = svec(&b);
        assert!((smat(&va, 4) - &a).abs().max() < 1e-14);
        let ip: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        assert!((ip - (&a * &b).trace()).abs() < 1e-12);
    }

    #[test]
    fn nt_scaling_maps_both_to_lambda() {
        let k = 3;
        let s = svec(&spd(k, 0.4));
        let z = svec(&spd(k, 0.9));
        let (w, l) = nt_scaling(ConeKind::Psd(k), &s, &z).unwrap();
        let mut lv = vec![0.0; s.len()];
        lambda_vec(ConeKind::Psd(k), &l, &mut lv);
        let mut a = vec![0.0; s.len()];
        let mut b = vec![0.0; s.len()];
        w.apply(&z, &mut a);
        w.apply_inv_t(&s, &mut b);
        for i in 0..s.len() {
            assert!((a[i] - lv[i]).abs() < 1e-10);
            assert!((b[i] - lv[i]).abs() < 1e-10);
        }
        let mut back = vec![0.0; s.len()];
        w.apply_inv(&a, &mut back);
        for i in 0..s.len() {
            assert!((back[i] - z[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_div_inverts_prod() {
        let kind = ConeKind::Psd(3);
        let l = [0.5, 1.5, 2.0];
        let u: Vec<f64> = (0..6).map(|i| (i as f64).cos()).collect();
        let mut p = vec![0.0; 6];
        let mut q = vec![0.0; 6];
        lambda_prod(kind, &l, &u, &mut p);
        lambda_div(kind, &l, &p, &mut q);
        for i in 0..6 {
            assert!((q[i] - u[i]).abs() < 1e-14);
        }
        let mut lv = vec![0.0; 6];
        lambda_vec(kind, &l, &mut lv);
        let mut j = vec![0.0; 6];
        jordan(kind, &lv, &u, &mut j);
        for i in 0..6 {
            assert!((j[i] - p[i]).abs() < 1e-14);
        }
    }
}
