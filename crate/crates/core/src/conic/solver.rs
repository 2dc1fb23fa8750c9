//! Primal-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  Gx + s = h,  Ax = b,  s ∈ K
//! ```
//!
//! with K a product of nonnegative orthants and PSD cones. Uses the
//! homogeneous self-dual embedding with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector step.
//!
//! Variables are grouped into blocks and every cone reads exactly one block,
//! so GᵀW⁻¹W⁻ᵀG is block diagonal and the KKT system reduces to a Schur
//! complement on the equality multipliers.

use nalgebra::{Cholesky, DVector, Dyn};

use super::cone::{self, ConeKind, Scaling};
use crate::matcore::RMat;

const STEP: f64 = 0.99;
const EXPON: i32 = 3;

#[derive(Clone, Debug)]
pub struct ConeBlock {
    pub kind: ConeKind,
    /// Variable block the cone reads.
    pub block: usize,
    /// kind.dim() × width(block).
    pub g: RMat,
    pub h: DVector<f64>,
}

/// Sparse row of the equality matrix, columns in global numbering.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Debug, Default)]
pub struct ConeProgram {
    pub block_widths: Vec<usize>,
    pub c: DVector<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeBlock>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverSettings {
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    pub max_iterations: usize,
    pub refinement: usize,
    /// Largest residual/gap accepted as AlmostOptimal when progress stalls.
    pub reduced_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feastol: 1e-8,
            abstol: 1e-8,
            reltol: 1e-8,
            max_iterations: 100_000,
            refinement: 3,
            reduced_tol: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stalled with residuals within 100× the requested tolerances.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

#[derive(Clone, Debug)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    pub stats: SolverStats,
}

impl ConeProgram {
    pub fn n(&self) -> usize {
        self.block_widths.iter().sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.block_widths.len() + 1);
        let mut acc = 0;
        for w in &self.block_widths {
            off.push(acc);
            acc += w;
        }
        off.push(acc);
        off
    }
}

/// Removes linearly dependent equality rows. Returns the kept row indices,
/// or the index of an inconsistent row.
pub fn independent_rows(a: &[SparseRow], b: &[f64], n: usize) -> Result<Vec<usize>, usize> {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    for (i, row) in a.iter().enumerate() {
        let mut v = vec![0.0; n];
        for &(j, x) in row {
            v[j] += x;
        }
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut rhs = b[i];
        if norm0 == 0.0 {
            if rhs.abs() > 1e-9 {
                return Err(i);
            }
            continue;
        }
        for _ in 0..2 {
            for (q, qb) in &basis {
                let p: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                if p != 0.0 {
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                    rhs -= p * qb;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0 {
            if rhs.abs() > 1e-7 * (1.0 + b[i].abs()) {
                return Err(i);
            }
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push((v, rhs / norm));
        kept.push(i);
    }
    Ok(kept)
}

struct Prepared<'a> {
    p: &'a ConeProgram,
    off: Vec<usize>,
    cone_off: Vec<usize>,
    m: usize,
    /// Per block: equality rows touching it and the dense restriction.
    rows: Vec<Vec<usize>>,
    ablk: Vec<RMat>,
    cones_of: Vec<Vec<usize>>,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a ConeProgram) -> Self {
        let off = p.offsets();
        let nb = p.block_widths.len();
        let mut block_of = vec![0usize; off[nb]];
        for k in 0..nb {
            for j in off[k]..off[k + 1] {
                block_of[j] = k;
            }
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for (i, row) in p.a.iter().enumerate() {
            for &(j, _) in row {
                let k = block_of[j];
                if rows[k].last() != Some(&i) {
                    rows[k].push(i);
                }
            }
        }
        for r in rows.iter_mut() {
            r.dedup();
        }
        let mut ablk = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut m = RMat::zeros(rows[k].len(), p.block_widths[k]);
            for (ri, &i) in rows[k].iter().enumerate() {
                for &(j, x) in &p.a[i] {
                    if block_of[j] == k {
                        m[(ri, j - off[k])] += x;
                    }
                }
            }
            ablk.push(m);
        }
        let mut cones_of = vec![Vec::new(); nb];
        let mut cone_off = Vec::with_capacity(p.cones.len() + 1);
        let mut acc = 0;
        for (j, c) in p.cones.iter().enumerate() {
            cones_of[c.block].push(j);
            cone_off.push(acc);
            acc += c.kind.dim();
        }
        cone_off.push(acc);
        Self {
            p,
            off,
            cone_off,
            m: p.a.len(),
            rows,
            ablk,
            cones_of,
        }
    }

    fn nz(&self) -> usize {
        *self.cone_off.last().unwrap()
    }

    fn seg<'b>(&self, v: &'b [f64], j: usize) -> &'b [f64] {
        &v[self.cone_off[j]..self.cone_off[j + 1]]
    }

    /// out += α·A x
    fn a_mul(&self, x: &[f64], alpha: f64, out: &mut [f64]) {
        for (i, row) in self.p.a.iter().enumerate() {
            out[i] += alpha * row.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        }
    }

    /// out += α·Aᵀ y
    fn at_mul(&self, y: &[f64], alpha: f64, out: &mut [f64]) {
        for (i, row) in self.p.a.iter().enumerate() {
            let yi = alpha * y[i];
            if yi != 0.0 {
                for &(j, v) in row {
                    out[j] += v * yi;
                }
            }
        }
    }

    /// out += α·G x
    fn g_mul(&self, x: &[f64], alpha: f64, out: &mut [f64]) {
        for (j, c) in self.p.cones.iter().enumerate() {
            let xb = &x[self.off[c.block]..self.off[c.block + 1]];
            let o = &mut out[self.cone_off[j]..self.cone_off[j + 1]];
            for col in 0..c.g.ncols() {
                let xv = alpha * xb[col];
                if xv != 0.0 {
                    for (r, gv) in c.g.column(col).iter().enumerate() {
                        o[r] += gv * xv;
                    }
                }
            }
        }
    }

    /// out += α·Gᵀ z
    fn gt_mul(&self, z: &[f64], alpha: f64, out: &mut [f64]) {
        for (j, c) in self.p.cones.iter().enumerate() {
            let zs = self.seg(z, j);
            let o = &mut out[self.off[c.block]..self.off[c.block + 1]];
            for col in 0..c.g.ncols() {
                o[col] += alpha
                    * c.g
                        .column(col)
                        .iter()
                        .zip(zs)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
    }
}

struct Kkt {
    gt: Vec<RMat>,
    hchol: Vec<EqCholesky>,
    /// H_k⁻¹ A_kᵀ.
    y: Vec<RMat>,
    schol: Option<EqCholesky>,
}

/// Cholesky factor of D H D with D = diag(H)^(-1/2).
struct EqCholesky {
    chol: Cholesky<f64, Dyn>,
    d: DVector<f64>,
}

impl EqCholesky {
    fn new(mut h: RMat) -> Option<Self> {
        let d = DVector::from_iterator(
            h.nrows(),
            (0..h.nrows()).map(|i| {
                let x = h[(i, i)];
                if x > 0.0 {
                    1.0 / x.sqrt()
                } else {
                    1.0
                }
            }),
        );
        for j in 0..h.ncols() {
            for i in 0..h.nrows() {
                h[(i, j)] *= d[i] * d[j];
            }
        }
        if let Some(chol) = Cholesky::new(h.clone()) {
            return Some(Self { chol, d });
        }
        let mut delta = 1e-14;
        for _ in 0..12 {
            for i in 0..h.nrows() {
                h[(i, i)] += delta;
            }
            if let Some(chol) = Cholesky::new(h.clone()) {
                return Some(Self { chol, d });
            }
            delta *= 10.0;
        }
        None
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(&b.component_mul(&self.d));
        x.component_mul_assign(&self.d);
        x
    }

    fn solve_mat(&self, b: &RMat) -> RMat {
        let mut m = b.clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row *= self.d[i];
        }
        let mut x = self.chol.solve(&m);
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= self.d[i];
        }
        x
    }
}

impl Kkt {
    fn factor(pr: &Prepared, scal: &[Scaling]) -> Option<Kkt> {
        let p = pr.p;
        let gt: Vec<RMat> = p
            .cones
            .iter()
            .zip(scal)
            .map(|(c, w)| w.scale_columns_inv_t(&c.g))
            .collect();
        let mut hchol = Vec::with_capacity(p.block_widths.len());
        let mut y = Vec::with_capacity(p.block_widths.len());
        let mut s = RMat::zeros(pr.m, pr.m);
        for (k, &w) in p.block_widths.iter().enumerate() {
            let mut h = RMat::zeros(w, w);
            for &j in &pr.cones_of[k] {
                h.gemm_tr(1.0, &gt[j], &gt[j], 1.0);
            }
            let ch = EqCholesky::new(h)?;
            let a = &pr.ablk[k];
            let yk = if a.nrows() > 0 {
                ch.solve_mat(&a.transpose())
            } else {
                RMat::zeros(w, 0)
            };
            if a.nrows() > 0 {
                let sk = a * &yk;
                for (ri, &i) in pr.rows[k].iter().enumerate() {
                    for (rj, &jj) in pr.rows[k].iter().enumerate() {
                        s[(i, jj)] += sk[(ri, rj)];
                    }
                }
            }
            hchol.push(ch);
            y.push(yk);
        }
        let schol = if pr.m > 0 {
            Some(EqCholesky::new(s)?)
        } else {
            None
        };
        Some(Kkt {
            gt,
            hchol,
            y,
            schol,
        })
    }

    /// Solves
    /// [0 Aᵀ Gᵀ; A 0 0; G 0 −WᵀW] [ux; uy; W⁻¹uz] = [bx; by; bz],
    /// returning uz in scaled coordinates.
    fn solve(
        &self,
        pr: &Prepared,
        scal: &[Scaling],
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = pr.p;
        let mut wbz = vec![0.0; pr.nz()];
        for j in 0..p.cones.len() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            scal[j].apply_inv_t(&bz[a..b], &mut wbz[a..b]);
        }
        let mut r = bx.to_vec();
        for (j, c) in p.cones.iter().enumerate() {
            let o = &mut r[pr.off[c.block]..pr.off[c.block + 1]];
            let zs = pr.seg(&wbz, j);
            let g = &self.gt[j];
            for col in 0..g.ncols() {
                o[col] += g
                    .column(col)
                    .iter()
                    .zip(zs)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        let mut t = vec![0.0; r.len()];
        for k in 0..p.block_widths.len() {
            let (a, b) = (pr.off[k], pr.off[k + 1]);
            let rk = DVector::from_column_slice(&r[a..b]);
            let tk = self.hchol[k].solve(&rk);
            t[a..b].copy_from_slice(tk.as_slice());
        }
        let mut uy = vec![0.0; pr.m];
        if let Some(sc) = &self.schol {
            let mut rhs = by.iter().map(|x| -x).collect::<Vec<f64>>();
            pr.a_mul(&t, 1.0, &mut rhs);
            let sol = sc.solve(&DVector::from_vec(rhs));
            uy.copy_from_slice(sol.as_slice());
        }
        let mut ux = t;
        for k in 0..p.block_widths.len() {
            if pr.rows[k].is_empty() {
                continue;
            }
            let yv = DVector::from_iterator(pr.rows[k].len(), pr.rows[k].iter().map(|&i| uy[i]));
            let corr = &self.y[k] * yv;
            for (i, v) in corr.iter().enumerate() {
                ux[pr.off[k] + i] -= v;
            }
        }
        let mut uz = vec![0.0; pr.nz()];
        for (j, c) in p.cones.iter().enumerate() {
            let xb = DVector::from_column_slice(&ux[pr.off[c.block]..pr.off[c.block + 1]]);
            let gx = &self.gt[j] * xb;
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            for i in a..b {
                uz[i] = gx[i - a] - wbz[i];
            }
        }
        (ux, uy, uz)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

struct State {
    scal: Vec<Scaling>,
    lambda: Vec<Vec<f64>>,
    lg: f64,
    dg: f64,
}

struct Newton<'a> {
    pr: &'a Prepared<'a>,
    kkt: &'a Kkt,
    st: &'a State,
    x1: Vec<f64>,
    y1: Vec<f64>,
    z1: Vec<f64>,
    th: Vec<f64>,
    tau: f64,
}

#[derive(Clone)]
struct Dir {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    s: Vec<f64>,
    kappa: f64,
}

impl<'a> Newton<'a> {
    fn cones(&self) -> &[ConeBlock] {
        &self.pr.p.cones
    }

    fn solve_no_ir(&self, d: &mut Dir) {
        let pr = self.pr;
        let st = self.st;
        let nz = pr.nz();
        // s := −λ ⊘ bs
        let mut s = vec![0.0; nz];
        for (j, c) in self.cones().iter().enumerate() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            cone::lambda_div(c.kind, &st.lambda[j], &d.s[a..b], &mut s[a..b]);
        }
        s.iter_mut().for_each(|v| *v = -*v);
        // z := −(bz + Wᵀ s)
        let mut z = vec![0.0; nz];
        for j in 0..self.cones().len() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            st.scal[j].apply_t(&s[a..b], &mut z[a..b]);
        }
        for i in 0..nz {
            z[i] = -(z[i] + d.z[i]);
        }
        let y: Vec<f64> = d.y.iter().map(|v| -v).collect();
        let (mut x, mut y, mut z) = self.kkt.solve(pr, &st.scal, &d.x, &y, &z);
        let kappa = -d.kappa / st.lg;
        let num = d.tau
            + kappa / (1.0 / st.dg)
            + dot(pr.p.c.as_slice(), &x)
            + dot(&pr.p.b, &y)
            + dot(&self.th, &z);
        let tau = (1.0 / st.dg) * num / (1.0 + dot(&self.z1, &self.z1));
        axpy(tau, &self.x1, &mut x);
        axpy(tau, &self.y1, &mut y);
        axpy(tau, &self.z1, &mut z);
        for i in 0..nz {
            s[i] -= z[i];
        }
        d.x = x;
        d.y = y;
        d.z = z;
        d.s = s;
        d.tau = tau;
        d.kappa = kappa - tau;
    }

    /// Residual of the Newton system at u for right-hand side v.
    fn residual(&self, u: &Dir, v: &mut Dir) {
        let pr = self.pr;
        let st = self.st;
        let p = pr.p;
        let nz = pr.nz();
        let mut wz = vec![0.0; nz];
        for j in 0..p.cones.len() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            st.scal[j].apply_inv(&u.z[a..b], &mut wz[a..b]);
        }
        pr.at_mul(&u.y, -1.0, &mut v.x);
        pr.gt_mul(&wz, -1.0, &mut v.x);
        axpy(-u.tau / st.dg, p.c.as_slice(), &mut v.x);
        pr.a_mul(&u.x, 1.0, &mut v.y);
        axpy(-u.tau / st.dg, &p.b, &mut v.y);
        pr.g_mul(&u.x, 1.0, &mut v.z);
        axpy(-u.tau / st.dg, &self.hvec(), &mut v.z);
        let mut ws = vec![0.0; nz];
        for j in 0..p.cones.len() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            st.scal[j].apply_t(&u.s[a..b], &mut ws[a..b]);
        }
        axpy(1.0, &ws, &mut v.z);
        v.tau +=
            st.dg * u.kappa + dot(p.c.as_slice(), &u.x) + dot(&p.b, &u.y) + dot(&self.hvec(), &wz);
        let sum: Vec<f64> = u.s.iter().zip(&u.z).map(|(a, b)| a + b).collect();
        let mut prod = vec![0.0; nz];
        for (j, c) in p.cones.iter().enumerate() {
            let (a, b) = (pr.cone_off[j], pr.cone_off[j + 1]);
            cone::lambda_prod(c.kind, &st.lambda[j], &sum[a..b], &mut prod[a..b]);
        }
        axpy(1.0, &prod, &mut v.s);
        v.kappa += st.lg * (u.tau + u.kappa);
    }

    fn hvec(&self) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.pr.nz());
        for c in self.cones() {
            h.extend_from_slice(c.h.as_slice());
        }
        h
    }

    fn solve(&self, d: &mut Dir, refinement: usize) {
        let rhs = d.clone();
        self.solve_no_ir(d);
        for _ in 0..refinement {
            let mut r = rhs.clone();
            self.residual(d, &mut r);
            self.solve_no_ir(&mut r);
            axpy(1.0, &r.x, &mut d.x);
            axpy(1.0, &r.y, &mut d.y);
            axpy(1.0, &r.z, &mut d.z);
            axpy(1.0, &r.s, &mut d.s);
            d.tau += r.tau;
            d.kappa += r.kappa;
        }
        let _ = self.tau;
    }
}

fn fail(n: usize, m: usize, nz: usize, status: SolveStatus, stats: SolverStats) -> ConeSolution {
    ConeSolution {
        status,
        x: DVector::zeros(n),
        y: DVector::zeros(m),
        s: DVector::zeros(nz),
        z: DVector::zeros(nz),
        stats,
    }
}

/// Iterations without a new best iterate before giving up.
const STALL_WINDOW: usize = 10;

pub fn solve(p: &ConeProgram, settings: &SolverSettings) -> ConeSolution {
    let pr = Prepared::new(p);
    let n = p.n();
    let m = pr.m;
    let nz = pr.nz();
    let ncones = p.cones.len();
    let cdeg: usize = p.cones.iter().map(|c| c.kind.degree()).sum();
    let h: Vec<f64> = p.cones.iter().flat_map(|c| c.h.iter().cloned()).collect();
    let c = p.c.as_slice();
    let b = &p.b;

    let ident: Vec<Scaling> = p.cones.iter().map(|c| Scaling::identity(c.kind)).collect();
    let kkt0 = match Kkt::factor(&pr, &ident) {
        Some(k) => k,
        None => {
            return fail(
                n,
                m,
                nz,
                SolveStatus::NumericalError,
                SolverStats::default(),
            )
        }
    };
    // Primal and dual starting points.
    let (mut x, _, zp) = kkt0.solve(&pr, &ident, &vec![0.0; n], b, &h);
    let mut s: Vec<f64> = zp.iter().map(|v| -v).collect();
    let negc: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, mut y, mut z) = kkt0.solve(&pr, &ident, &negc, &vec![0.0; m], &vec![0.0; nz]);

    let shift = |v: &mut Vec<f64>| {
        let nrmv = nrm(v);
        let mut t = f64::NEG_INFINITY;
        for (j, cb) in p.cones.iter().enumerate() {
            t = t.max(cone::boundary_shift(cb.kind, pr.seg(v, j)));
        }
        if t >= -1e-8 * nrmv.max(1.0) {
            let mut e = vec![0.0; nz];
            for (j, cb) in p.cones.iter().enumerate() {
                let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
                cone::unit(cb.kind, &mut e[a..bb]);
            }
            axpy(1.0 + t, &e, v);
        }
    };
    shift(&mut s);
    shift(&mut z);

    let mut tau = 1.0;
    let mut kappa = 1.0;
    let resx0 = nrm(c).max(1.0);
    let resy0 = nrm(b).max(1.0);
    let resz0 = nrm(&h).max(1.0);
    let mut gap = dot(&s, &z);

    let mut st = State {
        scal: ident,
        lambda: vec![Vec::new(); ncones],
        lg: 1.0,
        dg: 1.0,
    };
    let mut best: Option<(f64, ConeSolution)> = None;
    let mut stall = 0;
    let mut best_iter = 0;
    let trace = std::env::var_os("INSTRASIM_SOLVER_TRACE").is_some();

    for iter in 0..=settings.max_iterations {
        let mut rx = vec![0.0; n];
        pr.at_mul(&y, -1.0, &mut rx);
        pr.gt_mul(&z, -1.0, &mut rx);
        let hresx = nrm(&rx);
        axpy(-tau, c, &mut rx);
        let resx = nrm(&rx) / tau;

        let mut ry = vec![0.0; m];
        pr.a_mul(&x, 1.0, &mut ry);
        let hresy = nrm(&ry);
        axpy(-tau, b, &mut ry);
        let resy = nrm(&ry) / tau;

        let mut rz = s.clone();
        pr.g_mul(&x, 1.0, &mut rz);
        let hresz = nrm(&rz);
        axpy(-tau, &h, &mut rz);
        let resz = nrm(&rz) / tau;

        let cx = dot(c, &x);
        let by = dot(b, &y);
        let hz = dot(&h, &z);
        let rt = kappa + cx + by + hz;
        let pcost = cx / tau;
        let dcost = -(by + hz) / tau;
        let ogap = (pcost - dcost).abs();
        let relgap = if pcost < 0.0 {
            Some(ogap / -pcost)
        } else if dcost > 0.0 {
            Some(ogap / dcost)
        } else {
            None
        };
        let pres = (resy / resy0).max(resz / resz0);
        let dres = resx / resx0;
        let pinfres = if hz + by < 0.0 {
            Some(hresx / resx0 / (-hz - by))
        } else {
            None
        };
        let dinfres = if cx < 0.0 {
            Some((hresy / resy0).max(hresz / resz0) / -cx)
        } else {
            None
        };

        let stats = SolverStats {
            iterations: iter,
            primal_residual: pres,
            dual_residual: dres,
            gap,
            primal_objective: pcost,
            dual_objective: dcost,
        };
        if trace {
            eprintln!(
                "it {iter:3} pcost {pcost:+.9e} dcost {dcost:+.9e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e} k/t {:.2e}",
                kappa / tau
            );
        }
        let current = |status| ConeSolution {
            status,
            x: DVector::from_iterator(n, x.iter().map(|v| v / tau)),
            y: DVector::from_iterator(m, y.iter().map(|v| v / tau)),
            s: DVector::from_iterator(nz, s.iter().map(|v| v / tau)),
            z: DVector::from_iterator(nz, z.iter().map(|v| v / tau)),
            stats,
        };

        if pres <= settings.feastol
            && dres <= settings.feastol
            && (ogap <= settings.abstol || relgap.is_some_and(|r| r <= settings.reltol))
        {
            return current(SolveStatus::Optimal);
        }
        if pinfres.is_some_and(|r| r <= settings.feastol) {
            let sc = 1.0 / (-hz - by);
            return ConeSolution {
                status: SolveStatus::PrimalInfeasible,
                x: DVector::zeros(n),
                y: DVector::from_iterator(m, y.iter().map(|v| v * sc)),
                s: DVector::zeros(nz),
                z: DVector::from_iterator(nz, z.iter().map(|v| v * sc)),
                stats,
            };
        }
        if dinfres.is_some_and(|r| r <= settings.feastol) {
            let sc = 1.0 / -cx;
            return ConeSolution {
                status: SolveStatus::DualInfeasible,
                x: DVector::from_iterator(n, x.iter().map(|v| v * sc)),
                y: DVector::zeros(m),
                s: DVector::from_iterator(nz, s.iter().map(|v| v * sc)),
                z: DVector::zeros(nz),
                stats,
            };
        }
        let merit = pres.max(dres).max(relgap.unwrap_or(ogap).min(ogap));
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((merit, current(SolveStatus::AlmostOptimal)));
            best_iter = iter;
        }
        let give_up = |best: Option<(f64, ConeSolution)>, status: SolveStatus| -> ConeSolution {
            match best {
                Some((bm, mut sol))
                    if bm
                        <= settings
                            .reduced_tol
                            .max(settings.feastol)
                            .max(settings.reltol) =>
                {
                    sol.status = SolveStatus::AlmostOptimal;
                    sol
                }
                Some((_, mut sol)) => {
                    sol.status = status;
                    sol
                }
                None => fail(n, m, nz, status, stats),
            }
        };
        if iter == settings.max_iterations {
            return give_up(best, SolveStatus::MaxIterations);
        }
        if iter >= best_iter + STALL_WINDOW {
            return give_up(best, SolveStatus::NumericalError);
        }

        if iter == 0 {
            for j in 0..ncones {
                match cone::nt_scaling(p.cones[j].kind, pr.seg(&s, j), pr.seg(&z, j)) {
                    Some((w, l)) => {
                        st.scal[j] = w;
                        st.lambda[j] = l;
                    }
                    None => return fail(n, m, nz, SolveStatus::NumericalError, stats),
                }
            }
            st.lg = (tau * kappa).sqrt();
            st.dg = (kappa / tau).sqrt();
        }
        let mut lsq = vec![0.0; nz];
        for (j, cb) in p.cones.iter().enumerate() {
            let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
            let sq: Vec<f64> = st.lambda[j].iter().map(|l| l * l).collect();
            cone::lambda_vec(cb.kind, &sq, &mut lsq[a..bb]);
        }

        let kkt = match Kkt::factor(&pr, &st.scal) {
            Some(k) => k,
            None => return give_up(best, SolveStatus::NumericalError),
        };
        let mut th = vec![0.0; nz];
        for j in 0..ncones {
            let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
            st.scal[j].apply_inv_t(&h[a..bb], &mut th[a..bb]);
        }
        let (mut x1, mut y1, mut z1) = kkt.solve(&pr, &st.scal, &negc, b, &h);
        let dgi = 1.0 / st.dg;
        x1.iter_mut().for_each(|v| *v *= dgi);
        y1.iter_mut().for_each(|v| *v *= dgi);
        z1.iter_mut().for_each(|v| *v *= dgi);
        let newton = Newton {
            pr: &pr,
            kkt: &kkt,
            st: &st,
            x1,
            y1,
            z1,
            th,
            tau,
        };

        let lnorm2: f64 = st.lambda.iter().flatten().map(|l| l * l).sum();
        let mu = (lnorm2 + st.lg * st.lg) / (cdeg as f64 + 1.0);
        let mut sigma = 0.0;
        let mut ws3 = vec![0.0; nz];
        let mut wk3 = 0.0;
        let mut step = 0.0;
        let mut dir = None;
        let mut e = vec![0.0; nz];
        for (j, cb) in p.cones.iter().enumerate() {
            let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
            cone::unit(cb.kind, &mut e[a..bb]);
        }
        for i in 0..2 {
            let mut ds = lsq.clone();
            let mut dkappa = st.lg * st.lg;
            if i == 1 {
                axpy(1.0, &ws3, &mut ds);
                axpy(-sigma * mu, &e, &mut ds);
                dkappa += wk3 - sigma * mu;
            }
            let mut d = Dir {
                x: rx.clone(),
                y: ry.clone(),
                z: rz.clone(),
                tau: rt,
                s: ds,
                kappa: dkappa,
            };
            newton.solve(&mut d, settings.refinement);
            if d.x.iter().chain(&d.z).chain(&d.s).any(|v| !v.is_finite()) || !d.tau.is_finite() {
                return give_up(best, SolveStatus::NumericalError);
            }
            if i == 0 {
                for (j, cb) in p.cones.iter().enumerate() {
                    let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
                    cone::jordan(cb.kind, &d.s[a..bb], &d.z[a..bb], &mut ws3[a..bb]);
                }
                wk3 = d.tau * d.kappa;
            }
            let mut t = 0.0f64;
            for (j, cb) in p.cones.iter().enumerate() {
                t = t.max(cone::step_bound(cb.kind, &st.lambda[j], pr.seg(&d.s, j)));
                t = t.max(cone::step_bound(cb.kind, &st.lambda[j], pr.seg(&d.z, j)));
            }
            t = t.max(-d.tau / st.lg).max(-d.kappa / st.lg);
            step = if t == 0.0 {
                1.0
            } else if i == 0 {
                (1.0 / t).min(1.0)
            } else {
                (STEP / t).min(1.0)
            };
            if i == 0 {
                sigma = (1.0 - step).powi(EXPON);
            }
            dir = Some(d);
        }
        let d = dir.unwrap();

        axpy(step, &d.x, &mut x);
        axpy(step, &d.y, &mut y);
        for (j, cb) in p.cones.iter().enumerate() {
            let (a, bb) = (pr.cone_off[j], pr.cone_off[j + 1]);
            let mut ds = vec![0.0; bb - a];
            let mut dz = vec![0.0; bb - a];
            st.scal[j].apply_t(&d.s[a..bb], &mut ds);
            st.scal[j].apply_inv(&d.z[a..bb], &mut dz);
            axpy(step, &ds, &mut s[a..bb]);
            axpy(step, &dz, &mut z[a..bb]);
            match cone::nt_scaling(cb.kind, &s[a..bb], &z[a..bb]) {
                Some((w, l)) => {
                    st.scal[j] = w;
                    st.lambda[j] = l;
                }
                None => return give_up(best, SolveStatus::NumericalError),
            }
        }
        let tt = d.tau / st.lg;
        let tk = d.kappa / st.lg;
        st.dg *= (1.0 + step * tk).sqrt() / (1.0 + step * tt).sqrt();
        st.lg *= (1.0 + step * tt).sqrt() * (1.0 + step * tk).sqrt();
        if !(st.lg > 0.0) || !st.dg.is_finite() {
            return give_up(best, SolveStatus::NumericalError);
        }

        kappa = st.lg * st.dg;
        tau = st.lg / st.dg;
        let ln2: f64 = st.lambda.iter().flatten().map(|l| l * l).sum();
        gap = ln2 / (tau * tau);

        if step < 1e-9 {
            stall += 1;
            if stall >= 3 {
                return give_up(best, SolveStatus::NumericalError);
            }
        } else {
            stall = 0;
        }
    }
    unreachable!()
}
