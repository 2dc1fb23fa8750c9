//! Problems over complex Hermitian matrix variables.
//!
//! A Hermitian m×m matrix is stored in isometric real coordinates
//! (`hvec`): the m diagonal entries followed by √2·Re and √2·Im of each
//! strictly upper entry, so tr(XY) is the Euclidean inner product.
//! Scalars are 1×1 Hermitian matrices.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::cone::{svec_len, ConeKind};
use super::solver::{self, ConeBlock, ConeProgram, SolveStatus, SolverSettings, SolverStats};
use crate::error::{Error, Result};
use crate::matcore::{embed_raw, CMat, HermOp, RMat, C64};

const SQRT2: f64 = std::f64::consts::SQRT_2;

pub fn hvec_len(m: usize) -> usize {
    m * m
}

pub fn hvec(m: &CMat) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * n);
    for i in 0..n {
        v[i] = m[(i, i)].re;
    }
    let mut p = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            v[p] = SQRT2 * z.re;
            v[p + 1] = SQRT2 * z.im;
            p += 2;
        }
    }
    v
}

pub fn unhvec(v: &[f64], n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut p = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(v[p], v[p + 1]) / SQRT2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            p += 2;
        }
    }
    m
}

/// Matrix of a Hermiticity-preserving linear map in hvec coordinates.
pub fn map_matrix(in_side: usize, out_side: usize, f: impl Fn(&CMat) -> CMat) -> RMat {
    let n_in = hvec_len(in_side);
    let mut out = RMat::zeros(hvec_len(out_side), n_in);
    let mut e = vec![0.0; n_in];
    for k in 0..n_in {
        e[k] = 1.0;
        let img = f(&unhvec(&e, in_side));
        out.column_mut(k).copy_from(&hvec(&img));
        e[k] = 0.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeTag {
    Psd,
    Nonneg,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub id: usize,
    pub side: usize,
}

/// Affine Hermitian-valued expression Σ_k T_k x_k + C.
#[derive(Clone, Debug)]
pub struct AffExpr {
    pub side: usize,
    pub terms: BTreeMap<usize, RMat>,
    pub constant: DVector<f64>,
}

impl AffExpr {
    pub fn zero(side: usize) -> Self {
        Self {
            side,
            terms: BTreeMap::new(),
            constant: DVector::zeros(hvec_len(side)),
        }
    }

    pub fn var(v: Var) -> Self {
        let n = hvec_len(v.side);
        let mut terms = BTreeMap::new();
        terms.insert(v.id, RMat::identity(n, n));
        Self {
            side: v.side,
            terms,
            constant: DVector::zeros(n),
        }
    }

    pub fn constant(m: &HermOp) -> Self {
        Self {
            side: m.dim(),
            terms: BTreeMap::new(),
            constant: hvec(m.matrix()),
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            side: 1,
            terms: BTreeMap::new(),
            constant: DVector::from_element(1, x),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.side == 1
    }

    pub fn add(mut self, other: &AffExpr) -> Self {
        assert_eq!(self.side, other.side, "expression sides differ");
        for (k, t) in &other.terms {
            match self.terms.get_mut(k) {
                Some(s) => *s += t,
                None => {
                    self.terms.insert(*k, t.clone());
                }
            }
        }
        self.constant += &other.constant;
        self
    }

    pub fn sub(self, other: &AffExpr) -> Self {
        self.add(&other.clone().scale(-1.0))
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in self.terms.values_mut() {
            *t *= s;
        }
        self.constant *= s;
        self
    }

    /// Applies a linear Hermiticity-preserving map given by its matrix.
    pub fn apply_matrix(&self, out_side: usize, m: &RMat) -> Self {
        Self {
            side: out_side,
            terms: self.terms.iter().map(|(k, t)| (*k, m * t)).collect(),
            constant: m * &self.constant,
        }
    }

    pub fn apply(&self, out_side: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        self.apply_matrix(out_side, &map_matrix(self.side, out_side, f))
    }

    /// Scalar expression tr(C · self).
    pub fn inner(&self, c: &HermOp) -> Self {
        assert_eq!(c.dim(), self.side, "inner product dimension mismatch");
        let hv = hvec(c.matrix());
        let row = RMat::from_row_slice(1, hv.len(), hv.as_slice());
        Self {
            side: 1,
            terms: self.terms.iter().map(|(k, t)| (*k, &row * t)).collect(),
            constant: DVector::from_element(1, hv.dot(&self.constant)),
        }
    }

    pub fn trace(&self) -> Self {
        self.inner(&HermOp::identity(self.side))
    }

    /// For a scalar expression s, the matrix expression s·C.
    pub fn times(&self, c: &HermOp) -> Self {
        assert!(self.is_scalar(), "times() needs a scalar expression");
        let col = RMat::from_column_slice(hvec_len(c.dim()), 1, hvec(c.matrix()).as_slice());
        Self {
            side: c.dim(),
            terms: self.terms.iter().map(|(k, t)| (*k, &col * t)).collect(),
            constant: col.column(0) * self.constant[0],
        }
    }
}

#[derive(Clone, Debug)]
struct VarInfo {
    name: String,
    side: usize,
    tag: ConeTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Backend-neutral conic problem over Hermitian variables.
#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    vars: Vec<VarInfo>,
    equalities: Vec<AffExpr>,
    cones: Vec<AffExpr>,
    objective: Option<(Sense, AffExpr)>,
}

#[derive(Clone, Debug)]
pub struct ModelSolution {
    pub status: SolveStatus,
    /// Objective in the user's sense.
    pub objective: f64,
    /// Dual objective in the user's sense.
    pub dual_objective: f64,
    pub stats: SolverStats,
    x: Vec<f64>,
    offsets: Vec<usize>,
}

impl ModelSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(
            self.status,
            SolveStatus::Optimal | SolveStatus::AlmostOptimal
        )
    }

    pub fn coords(&self, v: Var) -> &[f64] {
        &self.x[self.offsets[v.id]..self.offsets[v.id] + hvec_len(v.side)]
    }

    pub fn matrix(&self, v: Var) -> CMat {
        unhvec(self.coords(v), v.side)
    }

    pub fn herm(&self, v: Var) -> HermOp {
        HermOp::symmetrized(self.matrix(v))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.coords(v)[0]
    }

    pub fn eval(&self, e: &AffExpr) -> CMat {
        let mut acc = e.constant.clone();
        for (k, t) in &e.terms {
            let x =
                DVector::from_column_slice(&self.x[self.offsets[*k]..self.offsets[*k] + t.ncols()]);
            acc += t * x;
        }
        unhvec(acc.as_slice(), e.side)
    }

    pub fn eval_scalar(&self, e: &AffExpr) -> f64 {
        self.eval(e)[(0, 0)].re
    }
}

fn embedding_matrix(side: usize) -> RMat {
    let n = hvec_len(side);
    let k = 2 * side;
    let mut g = RMat::zeros(svec_len(k), n);
    let mut e = vec![0.0; n];
    let mut buf = vec![0.0; svec_len(k)];
    for j in 0..n {
        e[j] = 1.0;
        let emb = embed_raw(&unhvec(&e, side));
        super::cone::svec_into(&emb, &mut buf);
        g.column_mut(j).copy_from_slice(&buf);
        e[j] = 0.0;
    }
    g
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable(&mut self, name: &str, side: usize, tag: ConeTag) -> Var {
        assert!(side >= 1);
        assert!(
            tag != ConeTag::Nonneg || side == 1,
            "Nonneg variables are scalars"
        );
        self.vars.push(VarInfo {
            name: name.to_string(),
            side,
            tag,
        });
        Var {
            id: self.vars.len() - 1,
            side,
        }
    }

    pub fn psd_var(&mut self, name: &str, side: usize) -> Var {
        self.variable(name, side, ConeTag::Psd)
    }

    pub fn nonneg_var(&mut self, name: &str) -> Var {
        self.variable(name, 1, ConeTag::Nonneg)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.vars[v.id].name
    }

    /// expr == 0.
    pub fn eq_zero(&mut self, e: AffExpr) {
        self.equalities.push(e);
    }

    /// lhs == rhs.
    pub fn eq(&mut self, lhs: AffExpr, rhs: &AffExpr) {
        self.eq_zero(lhs.sub(rhs));
    }

    /// expr ⪰ 0 (expr ≥ 0 for scalars).
    pub fn psd(&mut self, e: AffExpr) {
        self.cones.push(e);
    }

    pub fn maximize(&mut self, e: AffExpr) {
        assert!(e.is_scalar());
        self.objective = Some((Sense::Maximize, e));
    }

    pub fn minimize(&mut self, e: AffExpr) {
        assert!(e.is_scalar());
        self.objective = Some((Sense::Minimize, e));
    }

    fn check(&self) -> Result<()> {
        let nv = self.vars.len();
        for e in self
            .equalities
            .iter()
            .chain(&self.cones)
            .chain(self.objective.iter().map(|o| &o.1))
        {
            if let Some(k) = e.terms.keys().find(|k| **k >= nv) {
                return Err(Error::Model(format!("undeclared variable {k}")));
            }
            for (k, t) in &e.terms {
                if t.ncols() != hvec_len(self.vars[*k].side) || t.nrows() != hvec_len(e.side) {
                    return Err(Error::Model(format!(
                        "term for `{}` has wrong shape",
                        self.vars[*k].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lowers to a block-structured cone program. Returns the program and
    /// the offsets of the user variables.
    pub fn lower(&self) -> Result<(ConeProgram, Vec<usize>)> {
        self.check()?;
        let mut vars = self.vars.clone();
        let mut equalities = self.equalities.clone();
        let mut cones_on: Vec<(usize, AffExpr)> = Vec::new();
        for e in &self.cones {
            if e.terms.len() == 1 {
                let (&k, _) = e.terms.iter().next().unwrap();
                cones_on.push((k, e.clone()));
            } else if e.terms.is_empty() {
                let v = unhvec(e.constant.as_slice(), e.side);
                if HermOp::symmetrized(v).min_eigenvalue() < -1e-12 {
                    return Err(Error::Model("constant cone constraint violated".into()));
                }
            } else {
                vars.push(VarInfo {
                    name: format!("aux{}", vars.len()),
                    side: e.side,
                    tag: ConeTag::Psd,
                });
                let aux = Var {
                    id: vars.len() - 1,
                    side: e.side,
                };
                equalities.push(AffExpr::var(aux).sub(e));
            }
        }
        let widths: Vec<usize> = vars.iter().map(|v| hvec_len(v.side)).collect();
        let mut offsets = Vec::with_capacity(widths.len());
        let mut acc = 0;
        for w in &widths {
            offsets.push(acc);
            acc += w;
        }
        let n = acc;

        let mut cones = Vec::new();
        let mut emb_cache: BTreeMap<usize, RMat> = BTreeMap::new();
        let mut push_cone =
            |block: usize, side: usize, t: &RMat, c: &DVector<f64>, cones: &mut Vec<ConeBlock>| {
                if side == 1 {
                    cones.push(ConeBlock {
                        kind: ConeKind::Nonneg(1),
                        block,
                        g: -t.clone(),
                        h: c.clone(),
                    });
                } else {
                    let e = emb_cache
                        .entry(side)
                        .or_insert_with(|| embedding_matrix(side));
                    cones.push(ConeBlock {
                        kind: ConeKind::Psd(2 * side),
                        block,
                        g: -(&*e * t),
                        h: &*e * c,
                    });
                }
            };
        for (k, v) in vars.iter().enumerate() {
            match v.tag {
                ConeTag::Psd | ConeTag::Nonneg => {
                    let id = RMat::identity(widths[k], widths[k]);
                    push_cone(k, v.side, &id, &DVector::zeros(widths[k]), &mut cones);
                }
                ConeTag::Free => {}
            }
        }
        for (k, e) in &cones_on {
            push_cone(*k, e.side, &e.terms[k], &e.constant, &mut cones);
        }
        for (k, v) in vars.iter().enumerate() {
            if !cones.iter().any(|c| c.block == k) {
                return Err(Error::Model(format!(
                    "variable `{}` has no cone constraint",
                    v.name
                )));
            }
        }

        let mut a = Vec::new();
        let mut b = Vec::new();
        for e in &equalities {
            for r in 0..hvec_len(e.side) {
                let mut row = Vec::new();
                for (k, t) in &e.terms {
                    for j in 0..t.ncols() {
                        let x = t[(r, j)];
                        if x != 0.0 {
                            row.push((offsets[*k] + j, x));
                        }
                    }
                }
                a.push(row);
                b.push(-e.constant[r]);
            }
        }
        let kept = solver::independent_rows(&a, &b, n)
            .map_err(|i| Error::Model(format!("inconsistent equality constraints (row {i})")))?;
        let a: Vec<_> = kept.iter().map(|&i| a[i].clone()).collect();
        let b: Vec<_> = kept.iter().map(|&i| b[i]).collect();

        let mut c = DVector::zeros(n);
        if let Some((sense, e)) = &self.objective {
            let sign = if *sense == Sense::Maximize { -1.0 } else { 1.0 };
            for (k, t) in &e.terms {
                for j in 0..t.ncols() {
                    c[offsets[*k] + j] += sign * t[(0, j)];
                }
            }
        }
        Ok((
            ConeProgram {
                block_widths: widths,
                c,
                a,
                b,
                cones,
            },
            offsets,
        ))
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<ModelSolution> {
        let (prog, offsets) = self.lower()?;
        let sol = solver::solve(&prog, settings);
        let (sign, constant) = match &self.objective {
            Some((Sense::Maximize, e)) => (-1.0, e.constant[0]),
            Some((Sense::Minimize, e)) => (1.0, e.constant[0]),
            None => (1.0, 0.0),
        };
        Ok(ModelSolution {
            status: sol.status,
            objective: sign * sol.stats.primal_objective + constant,
            dual_objective: sign * sol.stats.dual_objective + constant,
            stats: sol.stats,
            x: sol.x.iter().cloned().collect(),
            offsets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{c, max_entangled, ptranspose, Side};

    #[test]
    fn hvec_is_isometric() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.3, -0.2), c(0.3, 0.2), c(-0.5, 0.0)],
        );
        let b = CMat::from_row_slice(
            2,
            2,
            &[c(0.2, 0.0), c(-0.1, 0.7), c(-0.1, -0.7), c(0.4, 0.0)],
        );
        let ip = (&a * &b).trace().re;
        assert!((hvec(&a).dot(&hvec(&b)) - ip).abs() < 1e-14);
        assert!(crate::matcore::max_abs_diff(&unhvec(hvec(&a).as_slice(), 2), &a) < 1e-15);
    }

    #[test]
    fn lp_solution() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
        let mut p = ConicProblem::new();
        let x = p.nonneg_var("x");
        let y = p.nonneg_var("y");
        let ex = AffExpr::var(x);
        let ey = AffExpr::var(y);
        p.psd(AffExpr::scalar(4.0).sub(&ex.clone().add(&ey.clone().scale(2.0))));
        p.psd(AffExpr::scalar(6.0).sub(&ex.clone().scale(3.0).add(&ey)));
        p.maximize(ex.add(&ey));
        let s = p.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.scalar(x) - 1.6).abs() < 1e-7);
        assert!((s.scalar(y) - 1.2).abs() < 1e-7);
        assert!((s.objective - 2.8).abs() < 1e-7);
    }

    #[test]
    fn max_eigenvalue_via_sdp() {
        // max tr(C X) s.t. tr X = 1, X ⪰ 0 gives λ_max(C).
        let cm = CMat::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0),
                c(0.5, 0.5),
                c(0.0, 0.2),
                c(0.5, -0.5),
                c(-0.3, 0.0),
                c(0.1, 0.0),
                c(0.0, -0.2),
                c(0.1, 0.0),
                c(0.7, 0.0),
            ],
        );
        let ch = HermOp::new(cm).unwrap();
        let lmax = ch.eigenvalues().max();
        let mut p = ConicProblem::new();
        let x = p.psd_var("X", 3);
        p.eq(AffExpr::var(x).trace(), &AffExpr::scalar(1.0));
        p.maximize(AffExpr::var(x).inner(&ch));
        let s = p.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(
            (s.objective - lmax).abs() < 1e-7,
            "{} vs {}",
            s.objective,
            lmax
        );
    }

    #[test]
    fn ppt_fidelity_bound() {
        // max ⟨φ+|ρ|φ+⟩ over PPT two-qubit states is 1/2.
        let phi = max_entangled(2).unwrap();
        let mut p = ConicProblem::new();
        let r = p.psd_var("rho", 4);
        let e = AffExpr::var(r);
        p.eq(e.trace(), &AffExpr::scalar(1.0));
        p.psd(e.apply(4, |m| ptranspose(m, 2, 2, Side::A)));
        p.maximize(e.inner(phi.op()));
        let s = p.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 0.5).abs() < 1e-7, "{}", s.objective);
    }

    #[test]
    fn infeasible_detection() {
        let mut p = ConicProblem::new();
        let x = p.nonneg_var("x");
        p.psd(AffExpr::scalar(-1.0).sub(&AffExpr::var(x)));
        p.maximize(AffExpr::var(x));
        let s = p.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut p = ConicProblem::new();
        let x = p.psd_var("X", 2);
        let e = AffExpr::var(x);
        p.eq(e.trace(), &AffExpr::scalar(1.0));
        p.eq(e.trace().scale(2.0), &AffExpr::scalar(2.0));
        p.minimize(e.inner(&crate::matcore::pauli_z()));
        let s = p.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-7);
    }
}
