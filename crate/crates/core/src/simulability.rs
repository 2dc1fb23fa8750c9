//! Projective-instrument simulability programs: critical visibilities,
//! feasibility tests, POVM simulability and dual certificates.

use std::collections::BTreeMap;

use serde_json::json;

use crate::conic::model::map_matrix;
use crate::conic::{
    AffExpr, ConicProblem, ModelSolution, SolveStatus, SolverSettings, SolverStats, Var,
};
use crate::error::{Error, Result};
use crate::instruments::{
    kraus_of_choi, matrix_to_rows, mix, noise_instrument, ChoiInstrument, NoiseModel, PiBranch,
    PiDescription, RankVector,
};
use crate::matcore::{
    ptrace, ptranspose, reduction_raw, BipartiteOp, CMat, HermOp, RMat, Side, C64,
};

/// Visibility threshold above which a v-maximization counts as "feasible at v = 1".
pub const FEASIBLE_VISIBILITY: f64 = 1.0 - 1e-6;
pub const DUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SimStatus {
    Feasible,
    Infeasible,
    Optimal,
    NumericalTrouble,
}

/// Constraint standing in for "Schmidt number of σ_{a|r} at most r_a".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchmidtTest {
    /// Positive partial transpose for rank-one blocks of a qubit input.
    Ppt,
    /// (Θ_{r_a} ⊗ id)[σ] ⪰ 0 whenever r_a < min(dA, dA').
    Reduction,
}

#[derive(Clone, Debug)]
pub enum Noise<'a> {
    Fixed(&'a ChoiInstrument),
    /// Noise is an optimization variable.
    WorstCase,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub status: SimStatus,
    pub visibility: Option<f64>,
    /// σ_{a|r} for every rank vector, one operator per outcome (zero when r_a = 0).
    pub decomposition: BTreeMap<RankVector, Vec<BipartiteOp>>,
    pub priors: BTreeMap<RankVector, f64>,
    pub dual_bound: Option<f64>,
    pub stats: SolverStats,
    pub solver_status: SolveStatus,
    /// False when the Schmidt-number test is only a relaxation.
    pub exact: bool,
    /// Optimal normalized noise for worst-case runs.
    pub noise: Option<ChoiInstrument>,
}

impl SimResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SimStatus::Feasible
    }

    pub fn to_json_value(&self, with_decomposition: bool) -> serde_json::Value {
        let q: serde_json::Map<String, serde_json::Value> = self
            .priors
            .iter()
            .map(|(r, q)| (r.to_string(), json!(q)))
            .collect();
        let mut v = json!({
            "status": self.status,
            "visibility": self.visibility,
            "q_r": q,
            "dual_bound": self.dual_bound,
            "exact": self.exact,
            "residuals": {
                "primal": self.stats.primal_residual,
                "dual": self.stats.dual_residual,
                "gap": self.stats.gap,
                "iterations": self.stats.iterations,
                "solver_status": self.solver_status,
            },
        });
        if with_decomposition {
            let d: serde_json::Map<String, serde_json::Value> = self
                .decomposition
                .iter()
                .map(|(r, ops)| {
                    (
                        r.to_string(),
                        json!(ops
                            .iter()
                            .map(|o| matrix_to_rows(o.matrix()))
                            .collect::<Vec<_>>()),
                    )
                })
                .collect();
            v["decomposition"] = json!(d);
            if let Some(n) = &self.noise {
                v["noise"] = n.to_json_value();
            }
        }
        v
    }

    /// Largest entrywise deviation of Σ_r σ_{a|r} from `target`.
    pub fn reconstruction_error(&self, target: &ChoiInstrument) -> f64 {
        let mut err: f64 = 0.0;
        for a in 0..target.n_outcomes() {
            let mut acc = CMat::zeros(
                target.eta(a).matrix().nrows(),
                target.eta(a).matrix().ncols(),
            );
            for ops in self.decomposition.values() {
                acc += ops[a].matrix();
            }
            err = err.max(crate::matcore::max_abs_diff(&acc, target.eta(a).matrix()));
        }
        err
    }

    /// Largest violation of the trace and marginal constraints on σ_{a|r}.
    pub fn constraint_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (r, ops) in &self.decomposition {
            let q = self.priors[r];
            let d = r.dim() as f64;
            let d_in = ops[0].d_in();
            let mut marg = HermOp::zeros(d_in);
            for (a, s) in ops.iter().enumerate() {
                err = err.max((s.trace() - q * r.ranks()[a] as f64 / d).abs());
                marg = &marg + &s.partial_trace(Side::APrime);
            }
            err = err.max(marg.max_abs_diff(&HermOp::identity(d_in).scale(q / d)));
        }
        err
    }

    pub fn prior_error(&self) -> f64 {
        let total: f64 = self.priors.values().sum();
        let neg = self.priors.values().fold(0.0f64, |m, q| m.max(-q));
        neg.max((total - 1.0).abs())
    }
}

fn map_status(s: SolveStatus) -> SimStatus {
    match s {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => SimStatus::Optimal,
        SolveStatus::PrimalInfeasible => SimStatus::Infeasible,
        _ => SimStatus::NumericalTrouble,
    }
}

/// Precomputed linear maps on hvec coordinates of a d_out·d_in operator.
struct Maps {
    marginal: RMat,
    ppt: RMat,
    reductions: BTreeMap<usize, RMat>,
}

impl Maps {
    fn new(d_out: usize, d_in: usize) -> Self {
        let n = d_out * d_in;
        Self {
            marginal: map_matrix(n, d_in, |m| ptrace(m, d_out, d_in, Side::APrime)),
            ppt: map_matrix(n, n, |m| ptranspose(m, d_out, d_in, Side::A)),
            reductions: (1..d_out.min(d_in))
                .map(|s| {
                    (
                        s,
                        map_matrix(n, n, |m| reduction_raw(m, d_out, d_in, s as f64)),
                    )
                })
                .collect(),
        }
    }
}

struct Program {
    problem: ConicProblem,
    v: Option<Var>,
    sigma: BTreeMap<(usize, usize), Var>,
    q: Vec<Var>,
    xi: Vec<Var>,
    ranks: Vec<RankVector>,
}

/// Visibility (`v = None`) or fixed-visibility feasibility (`v = Some`) program.
fn build(
    c: &ChoiInstrument,
    noise: &Noise,
    schmidt: SchmidtTest,
    fixed_v: Option<f64>,
) -> Result<Program> {
    let (d_in, d_out, n_out) = (c.d_in(), c.d_out(), c.n_outcomes());
    let side = d_in * d_out;
    if let Noise::Fixed(nz) = noise {
        if nz.n_outcomes() != n_out || nz.d_in() != d_in || nz.d_out() != d_out {
            return Err(Error::Dimension(
                "instrument and noise shapes differ".into(),
            ));
        }
    }
    if schmidt == SchmidtTest::Ppt && d_in != 2 {
        return Err(Error::Dimension(format!(
            "the qubit program needs dA = 2, got {d_in}"
        )));
    }
    let maps = Maps::new(d_out, d_in);
    let ranks = crate::instruments::rank_vectors(d_in, n_out);
    let mut p = ConicProblem::new();

    let v_expr = match fixed_v {
        Some(v) => AffExpr::scalar(v),
        None => {
            let v = p.nonneg_var("v");
            p.psd(AffExpr::scalar(1.0).sub(&AffExpr::var(v)));
            p.maximize(AffExpr::var(v));
            AffExpr::var(v)
        }
    };
    let v_var = if fixed_v.is_none() {
        Some(Var { id: 0, side: 1 })
    } else {
        None
    };

    let mut sigma = BTreeMap::new();
    let mut q = Vec::new();
    for (ri, r) in ranks.iter().enumerate() {
        let qv = p.nonneg_var(&format!("q{r}"));
        q.push(qv);
        let mut marg = AffExpr::zero(d_in);
        for (a, &ra) in r.ranks().iter().enumerate() {
            if ra == 0 {
                continue;
            }
            let s = p.psd_var(&format!("sigma{a}{r}"), side);
            sigma.insert((a, ri), s);
            let es = AffExpr::var(s);
            p.eq(es.trace(), &AffExpr::var(qv).scale(ra as f64 / d_in as f64));
            marg = marg.add(&es.apply_matrix(d_in, &maps.marginal));
            match schmidt {
                SchmidtTest::Ppt => {
                    if ra == 1 {
                        p.psd(es.apply_matrix(side, &maps.ppt));
                    }
                }
                SchmidtTest::Reduction => {
                    if let Some(m) = maps.reductions.get(&ra) {
                        p.psd(es.apply_matrix(side, m));
                    }
                }
            }
        }
        p.eq(
            marg,
            &AffExpr::var(qv).times(&HermOp::identity(d_in).scale(1.0 / d_in as f64)),
        );
    }

    let mut xi = Vec::new();
    let mut xi_marg = AffExpr::zero(d_in);
    for a in 0..n_out {
        let mut total = AffExpr::zero(side);
        for (ri, _) in ranks.iter().enumerate() {
            if let Some(s) = sigma.get(&(a, ri)) {
                total = total.add(&AffExpr::var(*s));
            }
        }
        let eta = c.eta(a).op();
        let target = match noise {
            Noise::Fixed(nz) => {
                let en = nz.eta(a).op();
                v_expr.times(&(eta - en)).add(&AffExpr::constant(en))
            }
            Noise::WorstCase => {
                let x = p.psd_var(&format!("xi{a}"), side);
                xi.push(x);
                xi_marg = xi_marg.add(&AffExpr::var(x).apply_matrix(d_in, &maps.marginal));
                v_expr.times(eta).add(&AffExpr::var(x))
            }
        };
        p.eq(total, &target);
    }
    if matches!(noise, Noise::WorstCase) {
        let id = HermOp::identity(d_in).scale(1.0 / d_in as f64);
        let rhs = AffExpr::scalar(1.0).sub(&v_expr).times(&id);
        p.eq(xi_marg, &rhs);
    }
    Ok(Program {
        problem: p,
        v: v_var,
        sigma,
        q,
        xi,
        ranks,
    })
}

/// Choi operators of a generic PI inside a larger program: one σ_{a|r} per
/// rank vector and outcome, with priors q_r summing to one.
#[derive(Clone, Debug)]
pub struct PiVariables {
    pub d_in: usize,
    pub d_out: usize,
    pub sigma: BTreeMap<(RankVector, usize), Var>,
    pub priors: BTreeMap<RankVector, Var>,
    /// η_a = Σ_r σ_{a|r} as expressions.
    pub etas: Vec<AffExpr>,
}

impl PiVariables {
    pub fn instrument(&self, sol: &ModelSolution) -> Result<ChoiInstrument> {
        let etas = self
            .etas
            .iter()
            .map(|e| BipartiteOp::new(HermOp::symmetrized(sol.eval(e)), self.d_out, self.d_in))
            .collect::<Result<Vec<_>>>()?;
        ChoiInstrument::unchecked(etas)
    }
}

/// Adds PI variables to `p`. With `only = Some(r)` the measurement uses the
/// single rank vector r with prior one.
pub fn add_pi_variables(
    p: &mut ConicProblem,
    d_in: usize,
    d_out: usize,
    n_out: usize,
    schmidt: SchmidtTest,
    only: Option<&RankVector>,
) -> Result<PiVariables> {
    if schmidt == SchmidtTest::Ppt && d_in != 2 {
        return Err(Error::Dimension(format!(
            "the qubit program needs dA = 2, got {d_in}"
        )));
    }
    let ranks = match only {
        Some(r) => {
            if r.ranks().len() != n_out || r.dim() != d_in {
                return Err(Error::Domain(format!(
                    "rank vector {r} does not fit {n_out} outcomes on C^{d_in}"
                )));
            }
            vec![r.clone()]
        }
        None => crate::instruments::rank_vectors(d_in, n_out),
    };
    let maps = Maps::new(d_out, d_in);
    let side = d_in * d_out;
    let mut sigma = BTreeMap::new();
    let mut priors = BTreeMap::new();
    let mut etas = vec![AffExpr::zero(side); n_out];
    let mut prior_sum = AffExpr::zero(1);
    for r in &ranks {
        let q = if only.is_some() {
            AffExpr::scalar(1.0)
        } else {
            let qv = p.nonneg_var(&format!("q{r}"));
            priors.insert(r.clone(), qv);
            prior_sum = prior_sum.add(&AffExpr::var(qv));
            AffExpr::var(qv)
        };
        let mut marg = AffExpr::zero(d_in);
        for (a, &ra) in r.ranks().iter().enumerate() {
            if ra == 0 {
                continue;
            }
            let s = p.psd_var(&format!("sigma{a}{r}"), side);
            sigma.insert((r.clone(), a), s);
            let es = AffExpr::var(s);
            p.eq(es.trace(), &q.clone().scale(ra as f64 / d_in as f64));
            marg = marg.add(&es.apply_matrix(d_in, &maps.marginal));
            match schmidt {
                SchmidtTest::Ppt if ra == 1 => p.psd(es.apply_matrix(side, &maps.ppt)),
                SchmidtTest::Reduction => {
                    if let Some(m) = maps.reductions.get(&ra) {
                        p.psd(es.apply_matrix(side, m));
                    }
                }
                _ => {}
            }
            etas[a] = std::mem::replace(&mut etas[a], AffExpr::zero(side)).add(&es);
        }
        p.eq(
            marg,
            &q.times(&HermOp::identity(d_in).scale(1.0 / d_in as f64)),
        );
    }
    if only.is_none() {
        p.eq(prior_sum, &AffExpr::scalar(1.0));
    }
    Ok(PiVariables {
        d_in,
        d_out,
        sigma,
        priors,
        etas,
    })
}

fn extract(prog: &Program, sol: &ModelSolution, c: &ChoiInstrument, exact: bool) -> SimResult {
    let (d_in, d_out, n_out) = (c.d_in(), c.d_out(), c.n_outcomes());
    let mut decomposition = BTreeMap::new();
    let mut priors = BTreeMap::new();
    for (ri, r) in prog.ranks.iter().enumerate() {
        let ops = (0..n_out)
            .map(|a| match prog.sigma.get(&(a, ri)) {
                Some(s) => BipartiteOp::new(sol.herm(*s), d_out, d_in).unwrap(),
                None => BipartiteOp::zeros(d_out, d_in),
            })
            .collect();
        decomposition.insert(r.clone(), ops);
        priors.insert(r.clone(), sol.scalar(prog.q[ri]));
    }
    let visibility = prog.v.map(|v| sol.scalar(v));
    let noise = if prog.xi.is_empty() {
        None
    } else {
        let w = 1.0 - visibility.unwrap_or(0.0);
        let etas = prog
            .xi
            .iter()
            .map(|x| {
                BipartiteOp::new(
                    sol.herm(*x).scale(if w > 1e-12 { 1.0 / w } else { 0.0 }),
                    d_out,
                    d_in,
                )
                .unwrap()
            })
            .collect();
        ChoiInstrument::unchecked(etas).ok()
    };
    SimResult {
        status: map_status(sol.status),
        visibility,
        decomposition,
        priors,
        dual_bound: Some(sol.dual_objective),
        stats: sol.stats,
        solver_status: sol.status,
        exact,
        noise,
    }
}

fn failed(status: SimStatus, sol: &ModelSolution, exact: bool) -> SimResult {
    SimResult {
        status,
        visibility: None,
        decomposition: BTreeMap::new(),
        priors: BTreeMap::new(),
        dual_bound: None,
        stats: sol.stats,
        solver_status: sol.status,
        exact,
        noise: None,
    }
}

fn is_exact(c: &ChoiInstrument, schmidt: SchmidtTest) -> bool {
    match schmidt {
        SchmidtTest::Ppt => c.d_out() <= 3,
        SchmidtTest::Reduction => c.d_in().min(c.d_out()) <= 1,
    }
}

/// Maximal v such that vη + (1−v)η^noise passes the simulation program.
pub fn critical_visibility_with(
    c: &ChoiInstrument,
    noise: &Noise,
    schmidt: SchmidtTest,
    settings: &SolverSettings,
) -> Result<SimResult> {
    let prog = build(c, noise, schmidt, None)?;
    let sol = prog.problem.solve(settings)?;
    let exact = is_exact(c, schmidt);
    Ok(match map_status(sol.status) {
        SimStatus::Optimal => extract(&prog, &sol, c, exact),
        s => failed(s, &sol, exact),
    })
}

/// Feasibility of the simulation program at a fixed visibility.
pub fn feasible_at(
    c: &ChoiInstrument,
    noise: &Noise,
    schmidt: SchmidtTest,
    v: f64,
    settings: &SolverSettings,
) -> Result<SimResult> {
    let prog = build(c, noise, schmidt, Some(v))?;
    let sol = prog.problem.solve(settings)?;
    let exact = is_exact(c, schmidt);
    let trusted = sol.status == SolveStatus::Optimal
        || (sol.status == SolveStatus::AlmostOptimal
            && sol.stats.primal_residual <= 10.0 * settings.feastol);
    Ok(match sol.status {
        _ if trusted => {
            let mut r = extract(&prog, &sol, c, exact);
            r.status = SimStatus::Feasible;
            r.visibility = Some(v);
            r
        }
        SolveStatus::PrimalInfeasible => failed(SimStatus::Infeasible, &sol, exact),
        _ => failed(SimStatus::NumericalTrouble, &sol, exact),
    })
}

/// Critical visibility by bisection on [`feasible_at`]; validation path only.
/// Points the solver cannot certify count as infeasible.
pub fn bisect_visibility(
    c: &ChoiInstrument,
    noise: &Noise,
    schmidt: SchmidtTest,
    tol: f64,
    settings: &SolverSettings,
) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    if feasible_at(c, noise, schmidt, 1.0, settings)?.is_feasible() {
        return Ok(1.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match feasible_at(c, noise, schmidt, mid, settings)?.status {
            SimStatus::Feasible => lo = mid,
            SimStatus::Infeasible | SimStatus::NumericalTrouble => hi = mid,
            _ => unreachable!("feasible_at returns a feasibility status"),
        }
    }
    Ok(0.5 * (lo + hi))
}

fn feasibility(c: &ChoiInstrument, schmidt: SchmidtTest) -> Result<SimResult> {
    let white = noise_instrument(&NoiseModel::White, c.n_outcomes(), c.d_in(), c.d_out())?;
    let mut r = critical_visibility_with(
        c,
        &Noise::Fixed(&white),
        schmidt,
        &SolverSettings::default(),
    )?;
    if r.status == SimStatus::Optimal {
        r.status = if r.visibility.unwrap_or(0.0) >= FEASIBLE_VISIBILITY {
            SimStatus::Feasible
        } else {
            SimStatus::Infeasible
        };
    }
    Ok(r)
}

/// PI membership test for qubit inputs using PPT on rank-one blocks.
pub fn qubit_pi_feasible(c: &ChoiInstrument) -> Result<SimResult> {
    if c.d_in() != 2 {
        return Err(Error::Dimension(format!(
            "qubit_pi_feasible needs dA = 2, got {}",
            c.d_in()
        )));
    }
    feasibility(c, SchmidtTest::Ppt)
}

pub fn qubit_critical_visibility(c: &ChoiInstrument, noise: &ChoiInstrument) -> Result<SimResult> {
    if c.d_in() != 2 {
        return Err(Error::Dimension(format!(
            "qubit_critical_visibility needs dA = 2, got {}",
            c.d_in()
        )));
    }
    critical_visibility_with(
        c,
        &Noise::Fixed(noise),
        SchmidtTest::Ppt,
        &SolverSettings::default(),
    )
}

/// Necessary PI test via the reduction map; Infeasible certifies non-PI.
pub fn relaxed_pi_feasible(c: &ChoiInstrument) -> Result<SimResult> {
    feasibility(c, SchmidtTest::Reduction)
}

pub fn relaxed_critical_visibility(
    c: &ChoiInstrument,
    noise: &ChoiInstrument,
) -> Result<SimResult> {
    critical_visibility_with(
        c,
        &Noise::Fixed(noise),
        SchmidtTest::Reduction,
        &SolverSettings::default(),
    )
}

/// Visibility against the least favourable noise instrument.
pub fn worst_case_visibility(c: &ChoiInstrument) -> Result<SimResult> {
    let schmidt = if c.d_in() == 2 {
        SchmidtTest::Ppt
    } else {
        SchmidtTest::Reduction
    };
    critical_visibility_with(c, &Noise::WorstCase, schmidt, &SolverSettings::default())
}

fn check_povm(m: &[HermOp]) -> Result<usize> {
    let d = m
        .first()
        .ok_or_else(|| Error::InvalidInstrument("empty POVM".into()))?
        .dim();
    let mut sum = HermOp::zeros(d);
    for e in m {
        if e.dim() != d {
            return Err(Error::Dimension("POVM elements differ in dimension".into()));
        }
        if e.min_eigenvalue() < -1e-9 {
            return Err(Error::InvalidInstrument("POVM element is not PSD".into()));
        }
        sum = &sum + e;
    }
    if sum.max_abs_diff(&HermOp::identity(d)) > 1e-9 {
        return Err(Error::InvalidInstrument(
            "POVM does not sum to identity".into(),
        ));
    }
    Ok(d)
}

/// Critical visibility for simulating a POVM with projective measurements.
/// Decomposition entries are F_{a|r} stored with a trivial output factor.
pub fn povm_critical_visibility(povm: &[HermOp], noise_povm: &[HermOp]) -> Result<SimResult> {
    let d = check_povm(povm)?;
    if check_povm(noise_povm)? != d || povm.len() != noise_povm.len() {
        return Err(Error::Dimension("POVM and noise shapes differ".into()));
    }
    let n_out = povm.len();
    let ranks = crate::instruments::rank_vectors(d, n_out);
    let mut p = ConicProblem::new();
    let v = p.nonneg_var("v");
    p.psd(AffExpr::scalar(1.0).sub(&AffExpr::var(v)));
    p.maximize(AffExpr::var(v));
    let mut f = BTreeMap::new();
    let mut q = Vec::new();
    for (ri, r) in ranks.iter().enumerate() {
        let qv = p.nonneg_var(&format!("q{r}"));
        q.push(qv);
        let mut sum = AffExpr::zero(d);
        for (a, &ra) in r.ranks().iter().enumerate() {
            if ra == 0 {
                continue;
            }
            let x = p.psd_var(&format!("F{a}{r}"), d);
            f.insert((a, ri), x);
            p.eq(AffExpr::var(x).trace(), &AffExpr::var(qv).scale(ra as f64));
            sum = sum.add(&AffExpr::var(x));
        }
        p.eq(sum, &AffExpr::var(qv).times(&HermOp::identity(d)));
    }
    for a in 0..n_out {
        let mut total = AffExpr::zero(d);
        for ri in 0..ranks.len() {
            if let Some(x) = f.get(&(a, ri)) {
                total = total.add(&AffExpr::var(*x));
            }
        }
        let target = AffExpr::var(v)
            .times(&(&povm[a] - &noise_povm[a]))
            .add(&AffExpr::constant(&noise_povm[a]));
        p.eq(total, &target);
    }
    let sol = p.solve(&SolverSettings::default())?;
    let exact = d == 2;
    if map_status(sol.status) != SimStatus::Optimal {
        return Ok(failed(map_status(sol.status), &sol, exact));
    }
    let mut decomposition = BTreeMap::new();
    let mut priors = BTreeMap::new();
    for (ri, r) in ranks.iter().enumerate() {
        let ops = (0..n_out)
            .map(|a| match f.get(&(a, ri)) {
                Some(x) => BipartiteOp::new(sol.herm(*x), 1, d).unwrap(),
                None => BipartiteOp::zeros(1, d),
            })
            .collect();
        decomposition.insert(r.clone(), ops);
        priors.insert(r.clone(), sol.scalar(q[ri]));
    }
    Ok(SimResult {
        status: SimStatus::Optimal,
        visibility: Some(sol.scalar(v)),
        decomposition,
        priors,
        dual_bound: Some(sol.dual_objective),
        stats: sol.stats,
        solver_status: sol.status,
        exact,
        noise: None,
    })
}

/// Feasible point of the dual of the reduction-map visibility program.
#[derive(Clone, Debug, Default)]
pub struct DualCertificate {
    pub w: Vec<BipartiteOp>,
    pub b: BTreeMap<RankVector, HermOp>,
    pub z: BTreeMap<(usize, RankVector), BipartiteOp>,
    pub t: BTreeMap<(usize, RankVector), f64>,
    pub bound: f64,
}

impl DualCertificate {
    /// O_{a,r} = W_a + tr(B)/d + Z/r_a + (Σ_l r_l t_l)/d − 1⊗B − t_a − 1⊗tr_A'(Z).
    pub fn constraint_operator(&self, a: usize, r: &RankVector) -> HermOp {
        let w = &self.w[a];
        let (d_out, d_in) = (w.d_out(), w.d_in());
        let d = d_in as f64;
        let ra = r.ranks()[a] as f64;
        let id_out = HermOp::identity(d_out);
        let b = self
            .b
            .get(r)
            .cloned()
            .unwrap_or_else(|| HermOp::zeros(d_in));
        let key = (a, r.clone());
        let z = self
            .z
            .get(&key)
            .cloned()
            .unwrap_or_else(|| BipartiteOp::zeros(d_out, d_in));
        let t = |l: usize| self.t.get(&(l, r.clone())).copied().unwrap_or(0.0);
        let st: f64 = r
            .ranks()
            .iter()
            .enumerate()
            .map(|(l, &rl)| rl as f64 * t(l))
            .sum();
        let scalar = b.trace() / d + st / d - t(a);
        let mut o = w.op() + &HermOp::identity(d_out * d_in).scale(scalar);
        o = &o + &z.op().scale(1.0 / ra);
        o = &o - &crate::matcore::tensor(&id_out, &b);
        o = &o - &crate::matcore::tensor(&id_out, &z.partial_trace(Side::APrime));
        o
    }
}

/// Checks every dual constraint at tolerance `DUAL_TOL`; returns validity
/// and the objective 1 + Σ tr(W_a η_a).
pub fn verify_dual_certificate(
    cert: &DualCertificate,
    c: &ChoiInstrument,
    noise: &ChoiInstrument,
) -> Result<(bool, f64)> {
    let n_out = c.n_outcomes();
    if cert.w.len() != n_out || noise.n_outcomes() != n_out {
        return Err(Error::Dimension(
            "certificate has the wrong number of outcomes".into(),
        ));
    }
    for w in &cert.w {
        if w.d_in() != c.d_in() || w.d_out() != c.d_out() {
            return Err(Error::Dimension(
                "certificate operators have the wrong shape".into(),
            ));
        }
    }
    let mut obj = 1.0;
    let mut noise_term = 0.0;
    for a in 0..n_out {
        obj += cert.w[a].op().dot(c.eta(a).op());
        noise_term += cert.w[a].op().dot(noise.eta(a).op());
    }
    let mut valid = (obj - noise_term).abs() <= DUAL_TOL;
    if valid {
        valid = cert
            .z
            .values()
            .all(|z| z.op().min_eigenvalue() >= -DUAL_TOL);
    }
    if valid {
        'outer: for r in crate::instruments::rank_vectors(c.d_in(), n_out) {
            for a in 0..n_out {
                if r.ranks()[a] == 0 {
                    continue;
                }
                if cert.constraint_operator(a, &r).min_eigenvalue() < -DUAL_TOL {
                    valid = false;
                    break 'outer;
                }
            }
        }
    }
    Ok((valid, obj))
}

/// Mixture target η^v for a fixed-noise result.
pub fn target_instrument(
    c: &ChoiInstrument,
    noise: &ChoiInstrument,
    v: f64,
) -> Result<ChoiInstrument> {
    mix(c, noise, v.clamp(0.0, 1.0))
}

/// Builds an explicit projective-instrument model from a qubit
/// decomposition. Each rank-one pair (σ_a, σ_b) is split as σ = X + Y where
/// X has a maximally mixed marginal (a channel after a trivial measurement)
/// and Y is block diagonal on A in the eigenbasis of tr_A'(σ_a) (a basis
/// measurement followed by state preparation). Such a split need not exist
/// for every PPT decomposition; an error is returned when it does not.
pub fn extract_qubit_pi(res: &SimResult) -> Result<PiDescription> {
    let first = res
        .decomposition
        .values()
        .next()
        .ok_or_else(|| Error::Domain("empty decomposition".into()))?;
    let n_out = first.len();
    let (d_out, d_in) = (first[0].d_out(), first[0].d_in());
    if d_in != 2 {
        return Err(Error::Dimension("extraction needs a qubit input".into()));
    }
    let total_q: f64 = res.priors.values().map(|q| q.max(0.0)).sum();
    let unit = |a: usize| RMat::from_fn(n_out, 1, |i, _| if i == a { 1.0 } else { 0.0 });
    let mut branches = Vec::new();
    let push_channel = |prior: f64, choi: &BipartiteOp, a: usize, branches: &mut Vec<PiBranch>| {
        if prior <= 1e-13 {
            return;
        }
        let normalized = choi.scale(1.0 / prior);
        branches.push(PiBranch {
            prior: prior / total_q,
            projectors: vec![HermOp::identity(d_in)],
            channels: vec![complete_channel(
                kraus_of_choi(&normalized, 1e-13),
                d_in,
                d_out,
            )],
            post: unit(a),
        });
    };
    for (r, ops) in &res.decomposition {
        let nz: Vec<usize> = (0..n_out).filter(|&a| r.ranks()[a] > 0).collect();
        match nz.as_slice() {
            [a] => push_channel(res.priors[r].max(0.0), &ops[*a], *a, &mut branches),
            [a, b] => {
                let (_, u) = ops[*a].partial_trace(Side::APrime).eigh();
                let w = CMat::identity(d_out, d_out).kronecker(&u);
                let rot = |s: &BipartiteOp| HermOp::symmetrized(w.adjoint() * s.matrix() * &w);
                let (xa, ya) = split_block_classical(&rot(&ops[*a]), d_out)?;
                let (xb, yb) = split_block_classical(&rot(&ops[*b]), d_out)?;
                let back = |x: &HermOp| BipartiteOp::new(x.conjugate_by(&w), d_out, d_in).unwrap();
                push_channel(xa.trace(), &back(&xa), *a, &mut branches);
                push_channel(xb.trace(), &back(&xb), *b, &mut branches);
                // ξ_{x,k}: output state (unnormalized) for outcome x on basis element k.
                let parts = |y: &HermOp| -> [HermOp; 2] {
                    [0, 1].map(|k| {
                        HermOp::symmetrized(CMat::from_fn(d_out, d_out, |i, j| {
                            y.matrix()[(i * 2 + k, j * 2 + k)]
                        }))
                    })
                };
                let pa = parts(&ya);
                let pb = parts(&yb);
                let t = [
                    [pa[0].trace().max(0.0), pa[1].trace().max(0.0)],
                    [pb[0].trace().max(0.0), pb[1].trace().max(0.0)],
                ];
                let total = 0.5 * (t[0][0] + t[1][0] + t[0][1] + t[1][1]);
                if total <= 1e-13 {
                    continue;
                }
                // A-factor of the Choi operator is the conjugate projector.
                let proj: Vec<HermOp> = (0..2)
                    .map(|k| HermOp::ket_bra(&u.column(k).into_owned()).transpose())
                    .collect();
                let outs = [(*a, &pa), (*b, &pb)];
                for (x, (ox, sx)) in outs.iter().enumerate() {
                    for (y, (oy, sy)) in outs.iter().enumerate() {
                        let wxy = t[x][0] * t[y][1] / total;
                        if wxy <= 1e-13 {
                            continue;
                        }
                        let mut post = RMat::zeros(n_out, 2);
                        post[(*ox, 0)] = 1.0;
                        post[(*oy, 1)] = 1.0;
                        branches.push(PiBranch {
                            prior: 2.0 * wxy / total_q,
                            projectors: proj.clone(),
                            channels: vec![
                                prepare_channel(&sx[0].scale(1.0 / t[x][0]), d_in),
                                prepare_channel(&sy[1].scale(1.0 / t[y][1]), d_in),
                            ],
                            post,
                        });
                    }
                }
            }
            _ => {
                return Err(Error::Dimension(
                    "unexpected rank vector for a qubit input".into(),
                ))
            }
        }
    }
    let prior_sum: f64 = branches.iter().map(|b| b.prior).sum();
    for b in &mut branches {
        b.prior /= prior_sum;
    }
    let pi = PiDescription::new(d_in, d_out, n_out, branches)?;
    let built = pi.to_choi();
    let mut err: f64 = 0.0;
    for a in 0..n_out {
        let target = res
            .decomposition
            .values()
            .fold(BipartiteOp::zeros(d_out, d_in), |acc, ops| {
                acc.add(&ops[a]).unwrap()
            })
            .scale(1.0 / total_q);
        err = err.max(built.eta(a).op().max_abs_diff(target.op()));
    }
    if err > 1e-6 {
        return Err(Error::Domain(format!(
            "extracted model deviates by {err:.3e}"
        )));
    }
    Ok(pi)
}

/// Splits σ (rotated so that its A-marginal is diagonal) as X + Y with
/// X ⪰ 0, tr_A'(X) ∝ I and Y ⪰ 0 block diagonal on A.
fn split_block_classical(sigma: &HermOp, d_out: usize) -> Result<(HermOp, HermOp)> {
    let d_in = 2;
    let side = d_out * d_in;
    let sigma = sigma.map_eigenvalues(|l| l.max(0.0));
    let off = move |m: &CMat| {
        CMat::from_fn(side, side, |r, c| {
            if r % d_in != c % d_in {
                m[(r, c)]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    let mut p = ConicProblem::new();
    let x = p.psd_var("X", side);
    let cvar = p.nonneg_var("c");
    let slack = p.nonneg_var("t");
    let ex = AffExpr::var(x);
    p.psd(
        AffExpr::constant(&sigma)
            .sub(&ex)
            .add(&AffExpr::var(slack).times(&HermOp::identity(side))),
    );
    p.minimize(AffExpr::var(slack));
    p.eq(
        ex.apply(d_in, |m| ptrace(m, d_out, d_in, Side::APrime)),
        &AffExpr::var(cvar).times(&HermOp::identity(d_in)),
    );
    p.eq(
        ex.apply(side, off),
        &AffExpr::constant(&HermOp::symmetrized(off(sigma.matrix()))),
    );
    let sol = p.solve(&SolverSettings::default())?;
    if !sol.is_optimal() || sol.scalar(slack) > 1e-7 {
        return Err(Error::Domain(format!(
            "decomposition is not extractable ({:?}, slack {:.3e})",
            sol.status,
            sol.scalar(slack)
        )));
    }
    let xm = sol.herm(x).map_eigenvalues(|l| l.max(0.0));
    let y =
        HermOp::symmetrized(sigma.matrix() - xm.matrix() - off(&(sigma.matrix() - xm.matrix())));
    if y.min_eigenvalue() < -1e-7 {
        return Err(Error::Domain("decomposition is not extractable".into()));
    }
    Ok((xm, y.map_eigenvalues(|l| l.max(0.0))))
}

/// Kraus operators of the channel ρ ↦ tr(ρ)·state.
fn prepare_channel(state: &HermOp, d_in: usize) -> Vec<CMat> {
    let (vals, vecs) = state.eigh();
    let total: f64 = vals.iter().map(|l| l.max(0.0)).sum();
    let mut ks = Vec::new();
    for (k, &l) in vals.iter().enumerate() {
        if l <= 1e-14 {
            continue;
        }
        let col = vecs.column(k) * crate::matcore::c((l / total).sqrt(), 0.0);
        for j in 0..d_in {
            let mut kmat = CMat::zeros(state.dim(), d_in);
            kmat.set_column(j, &col);
            ks.push(kmat);
        }
    }
    ks
}

/// Rescales Kraus operators so that Σ K†K = I exactly.
fn complete_channel(ks: Vec<CMat>, d_in: usize, d_out: usize) -> Vec<CMat> {
    let mut s = CMat::zeros(d_in, d_in);
    for k in &ks {
        s += k.adjoint() * k;
    }
    let h = HermOp::symmetrized(s);
    let inv_sqrt = h.map_eigenvalues(|l| if l > 1e-14 { 1.0 / l.sqrt() } else { 0.0 });
    let mut out: Vec<CMat> = ks.iter().map(|k| k * inv_sqrt.matrix()).collect();
    let mut deficit = CMat::identity(d_in, d_in);
    for k in &out {
        deficit -= k.adjoint() * k;
    }
    let def = HermOp::symmetrized(deficit).map_eigenvalues(|l| l.max(0.0));
    if def.trace() > 1e-12 {
        let root = crate::matcore::psd_sqrt(&def);
        for start in (0..d_in).step_by(d_out) {
            let take = d_out.min(d_in - start);
            let mut k = CMat::zeros(d_out, d_in);
            k.rows_mut(0, take)
                .copy_from(&root.matrix().rows(start, take));
            out.push(k);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{kraus_to_choi, unsharp_z};

    fn uz(g: f64) -> ChoiInstrument {
        kraus_to_choi(&unsharp_z(g).unwrap()).unwrap()
    }

    #[test]
    fn sharp_measurement_is_pi() {
        let r = qubit_pi_feasible(&uz(1.0)).unwrap();
        assert_eq!(r.status, SimStatus::Feasible);
        assert!(r.reconstruction_error(&uz(1.0)) < 1e-7);
    }

    #[test]
    fn unsharp_is_not_pi() {
        let r = qubit_pi_feasible(&uz(std::f64::consts::FRAC_1_SQRT_2)).unwrap();
        assert_eq!(r.status, SimStatus::Infeasible);
    }

    #[test]
    fn dephasing_visibility_matches_closed_form() {
        let dep = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        for &g in &[0.3, 0.7071067811865476, 0.9] {
            let r = qubit_critical_visibility(&uz(g), &dep).unwrap();
            let v = r.visibility.unwrap();
            let expect = 1.0 / (g + (1.0 - g * g).sqrt());
            assert!((v - expect).abs() < 1e-6, "γ={g}: {v} vs {expect}");
            let target = mix(&uz(g), &dep, v.min(1.0)).unwrap();
            assert!(r.reconstruction_error(&target) < 1e-7);
            assert!(r.constraint_error() < 1e-7);
            assert!(r.prior_error() < 1e-7);
        }
    }

    #[test]
    fn wrong_input_dimension_rejected() {
        let c = kraus_to_choi(&crate::instruments::luders_unsharp(3, 0.5).unwrap()).unwrap();
        assert!(qubit_pi_feasible(&c).is_err());
    }

    #[test]
    fn zero_certificate_is_invalid() {
        let c = uz(0.5);
        let n = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        let cert = DualCertificate {
            w: vec![BipartiteOp::zeros(2, 2); 2],
            ..Default::default()
        };
        let (ok, _) = verify_dual_certificate(&cert, &c, &n).unwrap();
        assert!(!ok);
    }
}
