//! Dense complex linear algebra on (bipartite) Hermitian operators.
//!
//! Bipartite operators live on H_A' ⊗ H_A with index `i_out * d_in + i_in`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const ASYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entry of |m - m†|.
pub fn asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hermitian operator, symmetrized at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermOp {
    m: CMat,
}

impl HermOp {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let asym = asymmetry(&m);
        if !(asym <= ASYMMETRY_TOL) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the asymmetry check. Use for matrices that are
    /// Hermitian up to rounding by construction.
    pub fn symmetrized(m: CMat) -> Self {
        let mut h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self { m: h }
    }

    pub fn from_real(m: &RMat) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: CMat::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            m: CMat::zeros(d, d),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            m: CMat::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(values[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// |v⟩⟨v| (not normalized).
    pub fn ket_bra(v: &DVector<C64>) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    /// Projector onto computational basis state |i⟩ in dimension d.
    pub fn basis_projector(d: usize, i: usize) -> Self {
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = C64::new(1.0, 0.0);
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|z| z.re).sum()
    }

    /// tr(self · other), real for Hermitian arguments.
    pub fn dot(&self, other: &HermOp) -> f64 {
        self.m
            .iter()
            .zip(other.m.transpose().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * C64::new(s, 0.0),
        }
    }

    /// U · self · U†.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        Self::symmetrized(u * &self.m * u.adjoint())
    }

    pub fn eigh(&self) -> (DVector<f64>, CMat) {
        let e = hermitian_eigen(&self.m);
        (e.eigenvalues, e.eigenvectors)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        if self.dim() == 0 {
            return DVector::zeros(0);
        }
        hermitian_eigen(&self.m).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &HermOp) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Matrix function applied to the eigenvalues.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigh();
        let d = CMat::from_diagonal(&vals.map(|x| C64::new(f(x), 0.0)));
        Self::symmetrized(&vecs * d * vecs.adjoint())
    }
}

impl Add<&HermOp> for &HermOp {
    type Output = HermOp;
    fn add(self, rhs: &HermOp) -> HermOp {
        HermOp {
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub<&HermOp> for &HermOp {
    type Output = HermOp;
    fn sub(self, rhs: &HermOp) -> HermOp {
        HermOp {
            m: &self.m - &rhs.m,
        }
    }
}

impl Mul<f64> for &HermOp {
    type Output = HermOp;
    fn mul(self, s: f64) -> HermOp {
        self.scale(s)
    }
}

impl Neg for &HermOp {
    type Output = HermOp;
    fn neg(self) -> HermOp {
        self.scale(-1.0)
    }
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Which tensor factor of H_A' ⊗ H_A an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    /// Input system (right factor).
    A,
    /// Output system (left factor).
    APrime,
}

fn spectrum_consistent<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    ev: &DVector<f64>,
) -> bool {
    let tr: f64 = (0..m.nrows()).map(|i| m[(i, i)].clone().real()).sum();
    let fro2: f64 = m.iter().map(|z| z.clone().modulus_squared()).sum();
    let scale = 1.0 + fro2.sqrt() * (m.nrows() as f64).sqrt();
    ev.iter().all(|x| x.is_finite())
        && (ev.sum() - tr).abs() <= 1e-9 * scale
        && (ev.iter().map(|x| x * x).sum::<f64>() - fro2).abs() <= 1e-9 * scale * scale
}

/// Eigendecomposition of a Hermitian (or real symmetric) matrix.
///
/// nalgebra's QR iteration occasionally returns a wrong spectrum on highly
/// structured inputs (e.g. the 64x64 maximally entangled projector). The
/// result is checked against the trace and Frobenius norm; on mismatch the
/// decomposition is redone on H M H for fixed Householder reflections H.
pub fn hermitian_eigen<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> SymmetricEigen<T, Dyn> {
    let e = SymmetricEigen::new(m.clone());
    if spectrum_consistent(m, &e.eigenvalues) {
        return e;
    }
    let n = m.nrows();
    for attempt in 1..=4 {
        let v = DVector::<f64>::from_fn(n, |i, _| {
            ((i + 1) as f64 * (0.7 + attempt as f64)).sin() + 0.1 * attempt as f64
        });
        let v = v.normalize();
        let h = DMatrix::<T>::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            T::from_real(delta - 2.0 * v[i] * v[j])
        });
        let rotated = &h * m * &h;
        let mut f = SymmetricEigen::new(rotated);
        if spectrum_consistent(m, &f.eigenvalues) {
            f.eigenvectors = &h * f.eigenvectors;
            return f;
        }
    }
    e
}

/// Hermitian operator on H_A' ⊗ H_A.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteOp {
    op: HermOp,
    d_out: usize,
    d_in: usize,
}

impl BipartiteOp {
    pub fn new(op: HermOp, d_out: usize, d_in: usize) -> Result<Self> {
        if op.dim() != d_out * d_in {
            return Err(Error::Dimension(format!(
                "operator of side {} is not {}x{}",
                op.dim(),
                d_out,
                d_in
            )));
        }
        Ok(Self { op, d_out, d_in })
    }

    pub fn from_matrix(m: CMat, d_out: usize, d_in: usize) -> Result<Self> {
        Self::new(HermOp::new(m)?, d_out, d_in)
    }

    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Self {
            op: HermOp::zeros(d_out * d_in),
            d_out,
            d_in,
        }
    }

    pub fn op(&self) -> &HermOp {
        &self.op
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn into_op(self) -> HermOp {
        self.op
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            op: self.op.scale(s),
            d_out: self.d_out,
            d_in: self.d_in,
        }
    }

    pub fn add(&self, other: &BipartiteOp) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            op: &self.op + &other.op,
            d_out: self.d_out,
            d_in: self.d_in,
        })
    }

    pub fn sub(&self, other: &BipartiteOp) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            op: &self.op - &other.op,
            d_out: self.d_out,
            d_in: self.d_in,
        })
    }

    fn check_same(&self, other: &BipartiteOp) -> Result<()> {
        if self.d_out != other.d_out || self.d_in != other.d_in {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.d_out, self.d_in, other.d_out, other.d_in
            )));
        }
        Ok(())
    }

    pub fn partial_trace(&self, side: Side) -> HermOp {
        HermOp::symmetrized(ptrace(self.matrix(), self.d_out, self.d_in, side))
    }

    pub fn partial_transpose(&self, side: Side) -> Self {
        Self {
            op: HermOp {
                m: ptranspose(self.matrix(), self.d_out, self.d_in, side),
            },
            d_out: self.d_out,
            d_in: self.d_in,
        }
    }
}

/// Kronecker product; the left factor varies slowest.
pub fn tensor(a: &HermOp, b: &HermOp) -> HermOp {
    HermOp {
        m: a.matrix().kronecker(b.matrix()),
    }
}

pub fn tensor_bipartite(out: &HermOp, inp: &HermOp) -> BipartiteOp {
    BipartiteOp {
        op: tensor(out, inp),
        d_out: out.dim(),
        d_in: inp.dim(),
    }
}

/// Partial trace of a raw matrix on C^{d_out} ⊗ C^{d_in}.
pub fn ptrace(m: &CMat, d_out: usize, d_in: usize, side: Side) -> CMat {
    match side {
        Side::A => CMat::from_fn(d_out, d_out, |i, j| {
            (0..d_in).map(|k| m[(i * d_in + k, j * d_in + k)]).sum()
        }),
        Side::APrime => CMat::from_fn(d_in, d_in, |i, j| {
            (0..d_out).map(|k| m[(k * d_in + i, k * d_in + j)]).sum()
        }),
    }
}

/// Partial transpose of a raw matrix on C^{d_out} ⊗ C^{d_in}.
pub fn ptranspose(m: &CMat, d_out: usize, d_in: usize, side: Side) -> CMat {
    let n = d_out * d_in;
    CMat::from_fn(n, n, |r, col| {
        let (i, k) = (r / d_in, r % d_in);
        let (j, l) = (col / d_in, col % d_in);
        match side {
            Side::A => m[(i * d_in + l, j * d_in + k)],
            Side::APrime => m[(j * d_in + k, i * d_in + l)],
        }
    })
}

/// (Θ_s ⊗ id)(m) = I_A' ⊗ tr_A'(m) − m/s on a raw matrix.
pub fn reduction_raw(m: &CMat, d_out: usize, d_in: usize, s: f64) -> CMat {
    let marg = ptrace(m, d_out, d_in, Side::APrime);
    let id = CMat::identity(d_out, d_out);
    id.kronecker(&marg) - m * C64::new(1.0 / s, 0.0)
}

pub fn partial_trace(m: &BipartiteOp, side: Side) -> HermOp {
    m.partial_trace(side)
}

pub fn partial_transpose(m: &BipartiteOp, side: Side) -> BipartiteOp {
    m.partial_transpose(side)
}

/// Unnormalized |φ+⟩ = Σ_i |ii⟩ / √d as a vector.
pub fn max_entangled_vector(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d * d);
    let s = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        v[i * d + i] = C64::new(s, 0.0);
    }
    v
}

pub fn max_entangled(d: usize) -> Result<BipartiteOp> {
    if d < 1 {
        return Err(Error::Domain("max_entangled requires d >= 1".into()));
    }
    BipartiteOp::new(HermOp::ket_bra(&max_entangled_vector(d)), d, d)
}

pub fn reduction_map(s: usize, m: &BipartiteOp) -> Result<BipartiteOp> {
    if s < 1 {
        return Err(Error::Domain("reduction map requires s >= 1".into()));
    }
    let r = reduction_raw(m.matrix(), m.d_out(), m.d_in(), s as f64);
    BipartiteOp::new(HermOp::symmetrized(r), m.d_out(), m.d_in())
}

pub fn is_psd(m: &HermOp, tol: f64) -> bool {
    m.dim() == 0 || m.min_eigenvalue() >= -tol
}

/// [[Re m, −Im m], [Im m, Re m]].
pub fn real_embedding(m: &HermOp) -> RMat {
    embed_raw(m.matrix())
}

pub fn embed_raw(m: &CMat) -> RMat {
    let n = m.nrows();
    RMat::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Standard ket |i⟩ in dimension d.
pub fn ket(d: usize, i: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d);
    v[i] = C64::new(1.0, 0.0);
    v
}

pub fn pauli_x() -> HermOp {
    HermOp {
        m: CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
    }
}

pub fn pauli_y() -> HermOp {
    HermOp {
        m: CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
    }
}

pub fn pauli_z() -> HermOp {
    HermOp::diag(&[1.0, -1.0])
}

/// (I + n·σ)/2 for a Bloch vector n.
pub fn bloch_state(n: [f64; 3]) -> HermOp {
    let m = CMat::identity(2, 2)
        + pauli_x().matrix() * c(n[0], 0.)
        + pauli_y().matrix() * c(n[1], 0.)
        + pauli_z().matrix() * c(n[2], 0.);
    HermOp::symmetrized(m * c(0.5, 0.))
}

/// Positive semidefinite square root.
pub fn psd_sqrt(m: &HermOp) -> HermOp {
    m.map_eigenvalues(|x| x.max(0.0).sqrt())
}
