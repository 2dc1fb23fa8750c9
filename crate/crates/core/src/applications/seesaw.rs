//! Sequential CHSH with a projective-instrument middle party: alternating
//! optimization over Bob's instruments, Alice's assemblage and Charlie's
//! observables.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::conic::{AffExpr, ConicProblem, SolverSettings, Var};
use crate::error::{Error, Result};
use crate::instruments::{choi_map, induced_povm, matrix_to_rows, ChoiInstrument};
use crate::matcore::{ptrace, tensor, CMat, HermOp, Side, C64};
use crate::random::{haar_ket, haar_unitary, split};
use crate::simulability::{add_pi_variables, SchmidtTest};

pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;
/// Margin added to the S_AB floor inside the block programs.
const FLOOR_MARGIN: f64 = 1e-6;
/// Margin phase one must clear before the main loop starts.
const PHASE_ONE_MARGIN: f64 = 1e-5;
const PHASE_ONE_ROUNDS: usize = 100;

fn sgn(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Subnormalized qubit states τ_{a|x}, stored as tau[x][a].
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage {
    pub tau: [[HermOp; 2]; 2],
}

impl Assemblage {
    /// τ_{a|x} = tr_A((Π_{a|x} ⊗ I) |ψ⟩⟨ψ|) for a two-qubit state (Alice
    /// first) and ±1 observables A_x.
    pub fn from_state(psi: &HermOp, alice: &[HermOp; 2]) -> Result<Self> {
        if psi.dim() != 4 {
            return Err(Error::Dimension(
                "assemblage needs a two-qubit state".into(),
            ));
        }
        let id = HermOp::identity(2);
        let tau = |x: usize, a: usize| {
            let proj = (&id + &alice[x].scale(sgn(a))).scale(0.5);
            let m = tensor(&proj, &id).matrix() * psi.matrix();
            HermOp::symmetrized(ptrace(&m, 2, 2, Side::APrime))
        };
        Ok(Self {
            tau: [[tau(0, 0), tau(0, 1)], [tau(1, 0), tau(1, 1)]],
        })
    }

    pub fn reduced(&self, x: usize) -> HermOp {
        &self.tau[x][0] + &self.tau[x][1]
    }

    /// Largest violation of positivity, no-signalling and normalization.
    pub fn violation(&self) -> f64 {
        let neg = self
            .tau
            .iter()
            .flatten()
            .map(|t| (-t.min_eigenvalue()).max(0.0))
            .fold(0.0, f64::max);
        let ns = self.reduced(0).max_abs_diff(&self.reduced(1));
        neg.max(ns).max((self.reduced(0).trace() - 1.0).abs())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        json!(self
            .tau
            .iter()
            .map(|row| row
                .iter()
                .map(|t| matrix_to_rows(t.matrix()))
                .collect::<Vec<_>>())
            .collect::<Vec<_>>())
    }
}

/// S_AB = Σ_{x,y} (−1)^{xy} Σ_{a,b} (−1)^{a+b} tr(τ_{a|x} M_{b|y}).
pub fn chsh_ab(assemblage: &Assemblage, bob: &[ChoiInstrument]) -> f64 {
    let mut s = 0.0;
    for (y, inst) in bob.iter().enumerate() {
        let povm = induced_povm(inst);
        for x in 0..2 {
            for a in 0..2 {
                for (b, m) in povm.iter().enumerate() {
                    s += sgn(x * y + a + b) * assemblage.tau[x][a].dot(m);
                }
            }
        }
    }
    s
}

/// τ̃_{a|x} = ½ Σ_{b,y} I_{b|y}(τ_{a|x}).
pub fn post_assemblage(assemblage: &Assemblage, bob: &[ChoiInstrument]) -> [[HermOp; 2]; 2] {
    let post = |x: usize, a: usize| {
        let mut acc = CMat::zeros(2, 2);
        for inst in bob {
            for e in inst.etas() {
                acc += choi_map(e, assemblage.tau[x][a].matrix());
            }
        }
        HermOp::symmetrized(acc * C64::new(0.5, 0.0))
    };
    [[post(0, 0), post(0, 1)], [post(1, 0), post(1, 1)]]
}

/// S_AC = Σ_{x,z} (−1)^{xz} Σ_a (−1)^a tr(τ̃_{a|x} C_z).
pub fn chsh_ac(assemblage: &Assemblage, bob: &[ChoiInstrument], charlie: &[HermOp]) -> f64 {
    let post = post_assemblage(assemblage, bob);
    let mut s = 0.0;
    for (z, c) in charlie.iter().enumerate() {
        for x in 0..2 {
            for a in 0..2 {
                s += sgn(x * z + a) * post[x][a].dot(c);
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeesawStatus {
    Converged,
    MaxRounds,
    /// Phase one could not lift S_AB above the floor; the best S_AB point
    /// is returned.
    FloorNotReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub s_ab: f64,
    pub s_ac: f64,
}

#[derive(Clone, Debug)]
pub struct SeesawState {
    pub assemblage: Assemblage,
    pub bob: Vec<ChoiInstrument>,
    pub charlie: Vec<HermOp>,
    pub s_ab: f64,
    pub s_ac: f64,
    pub status: SeesawStatus,
    pub restart: usize,
    /// S_AC after every round of the main loop.
    pub trace: Vec<TracePoint>,
}

impl SeesawState {
    fn refresh(&mut self) {
        self.s_ab = chsh_ab(&self.assemblage, &self.bob);
        self.s_ac = chsh_ac(&self.assemblage, &self.bob, &self.charlie);
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "s_ab": self.s_ab,
            "s_ac": self.s_ac,
            "status": self.status,
            "restart": self.restart,
            "model": {
                "assemblage": self.assemblage.to_json_value(),
                "instruments": self.bob.iter().map(|b| b.to_json_value()).collect::<Vec<_>>(),
                "charlie": self.charlie.iter().map(|c| matrix_to_rows(c.matrix())).collect::<Vec<_>>(),
            },
            "trace": self.trace,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeesawSettings {
    pub restarts: usize,
    pub max_rounds: usize,
    /// Stop once a full round improves S_AC by less than this.
    pub tol: f64,
}

impl Default for SeesawSettings {
    fn default() -> Self {
        Self {
            restarts: 25,
            max_rounds: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawReport {
    pub seed: u64,
    pub floor: f64,
    pub settings: SeesawSettings,
    pub best: SeesawState,
    /// (S_AB, S_AC, status) of every restart in order.
    pub restarts: Vec<(f64, f64, SeesawStatus)>,
}

impl SeesawReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "seed": self.seed,
            "restarts": self.settings.restarts,
            "floor": self.floor,
            "best": { "s_ab": self.best.s_ab, "s_ac": self.best.s_ac },
            "model": self.best.to_json_value()["model"].clone(),
            "trace": self.best.trace,
            "per_restart": self.restarts.iter().map(|(ab, ac, st)| json!({"s_ab": ab, "s_ac": ac, "status": st})).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy)]
enum Goal {
    Ab,
    Ac,
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

/// Best Bob instruments for fixed assemblage and observables. With
/// `Goal::Ac` the program keeps S_AB ≥ floor.
fn bob_block(st: &SeesawState, goal: Goal, floor: f64) -> Result<Vec<ChoiInstrument>> {
    let id = HermOp::identity(2);
    let mut k_ac = HermOp::zeros(4);
    for (z, c) in st.charlie.iter().enumerate() {
        for x in 0..2 {
            for a in 0..2 {
                k_ac =
                    &k_ac + &tensor(c, &st.assemblage.tau[x][a].transpose()).scale(sgn(x * z + a));
            }
        }
    }
    let mut p = ConicProblem::new();
    let mut ab = AffExpr::zero(1);
    let mut ac = AffExpr::zero(1);
    let mut vars = Vec::new();
    for y in 0..2 {
        let v = add_pi_variables(&mut p, 2, 2, 2, SchmidtTest::Ppt, None)?;
        for b in 0..2 {
            let mut k_ab = HermOp::zeros(4);
            for x in 0..2 {
                for a in 0..2 {
                    k_ab = &k_ab
                        + &tensor(&id, &st.assemblage.tau[x][a].transpose())
                            .scale(2.0 * sgn(x * y + a + b));
                }
            }
            ab = ab.add(&v.etas[b].inner(&k_ab));
            ac = ac.add(&v.etas[b].inner(&k_ac));
        }
        vars.push(v);
    }
    match goal {
        Goal::Ab => p.maximize(ab),
        Goal::Ac => {
            p.psd(ab.sub(&AffExpr::scalar(floor + FLOOR_MARGIN)));
            p.maximize(ac);
        }
    }
    let sol = p.solve(&settings())?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!(
            "Bob block ended with {:?}",
            sol.status
        )));
    }
    vars.iter().map(|v| v.instrument(&sol)).collect()
}

/// Best assemblage for fixed instruments and observables.
fn assemblage_block(st: &SeesawState, goal: Goal, floor: f64) -> Result<Assemblage> {
    let povms: Vec<Vec<HermOp>> = st.bob.iter().map(induced_povm).collect();
    let mut p = ConicProblem::new();
    let tau: Vec<Vec<Var>> = (0..2)
        .map(|x| {
            (0..2)
                .map(|a| p.psd_var(&format!("tau{a}{x}"), 2))
                .collect()
        })
        .collect();
    let mut ab = AffExpr::zero(1);
    let mut ac = AffExpr::zero(1);
    for x in 0..2 {
        for a in 0..2 {
            let mut l_ab = HermOp::zeros(2);
            let mut l_ac = HermOp::zeros(2);
            for (y, povm) in povms.iter().enumerate() {
                for (b, m) in povm.iter().enumerate() {
                    l_ab = &l_ab + &m.scale(sgn(x * y + a + b));
                }
                for (z, c) in st.charlie.iter().enumerate() {
                    for e in st.bob[y].etas() {
                        let cc = tensor(c, &HermOp::identity(2));
                        let red = HermOp::symmetrized(ptrace(
                            &(cc.matrix() * e.matrix()),
                            2,
                            2,
                            Side::APrime,
                        ))
                        .transpose();
                        l_ac = &l_ac + &red.scale(sgn(x * z + a));
                    }
                }
            }
            let e = AffExpr::var(tau[x][a]);
            ab = ab.add(&e.inner(&l_ab));
            ac = ac.add(&e.inner(&l_ac));
        }
    }
    let r0 = AffExpr::var(tau[0][0]).add(&AffExpr::var(tau[0][1]));
    let r1 = AffExpr::var(tau[1][0]).add(&AffExpr::var(tau[1][1]));
    p.eq(r0.clone().sub(&r1), &AffExpr::zero(2));
    p.eq(r0.trace(), &AffExpr::scalar(1.0));
    match goal {
        Goal::Ab => p.maximize(ab),
        Goal::Ac => {
            p.psd(ab.sub(&AffExpr::scalar(floor + FLOOR_MARGIN)));
            p.maximize(ac);
        }
    }
    let sol = p.solve(&settings())?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!(
            "assemblage block ended with {:?}",
            sol.status
        )));
    }
    let t = |x: usize, a: usize| sol.herm(tau[x][a]);
    Ok(Assemblage {
        tau: [[t(0, 0), t(0, 1)], [t(1, 0), t(1, 1)]],
    })
}

/// Best observables C_z = 2P_z − I over 0 ⪯ P_z ⪯ I: P_z projects onto the
/// nonnegative eigenspace of G_z = Σ_{x,a} (−1)^{xz+a} τ̃_{a|x}.
fn charlie_block(st: &SeesawState) -> Vec<HermOp> {
    let post = post_assemblage(&st.assemblage, &st.bob);
    (0..2)
        .map(|z| {
            let mut g = HermOp::zeros(2);
            for x in 0..2 {
                for a in 0..2 {
                    g = &g + &post[x][a].scale(sgn(x * z + a));
                }
            }
            g.map_eigenvalues(|l| if l >= 0.0 { 1.0 } else { -1.0 })
        })
        .collect()
}

fn random_observable(rng: &mut impl Rng) -> HermOp {
    let u = haar_unitary(2, rng);
    crate::matcore::pauli_z().conjugate_by(&u)
}

fn random_start(restart: usize, rng: &mut impl Rng) -> SeesawState {
    let psi = HermOp::ket_bra(&haar_ket(4, rng));
    let alice = [random_observable(rng), random_observable(rng)];
    let assemblage = Assemblage::from_state(&psi, &alice).expect("two-qubit state");
    let charlie = vec![random_observable(rng), random_observable(rng)];
    let half = |_| {
        let id =
            crate::instruments::kraus_to_choi(&crate::instruments::identity_instrument(2)).unwrap();
        let e = id.eta(0).scale(0.5);
        ChoiInstrument::new(vec![e.clone(), e]).unwrap()
    };
    let bob = (0..2).map(half).collect();
    let mut st = SeesawState {
        assemblage,
        bob,
        charlie,
        s_ab: 0.0,
        s_ac: 0.0,
        status: SeesawStatus::MaxRounds,
        restart,
        trace: Vec::new(),
    };
    st.refresh();
    st
}

/// Replaces `st` by `cand` when the candidate keeps S_AB ≥ floor and does
/// not lower the objective.
fn accept(st: &mut SeesawState, cand: SeesawState, floor: f64, goal: &Goal) {
    let better = match goal {
        Goal::Ab => cand.s_ab >= st.s_ab,
        Goal::Ac => cand.s_ab >= floor && cand.s_ac >= st.s_ac,
    };
    if better {
        *st = cand;
    }
}

fn step_bob(st: &mut SeesawState, goal: Goal, floor: f64) {
    if let Ok(bob) = bob_block(st, goal, floor) {
        let mut cand = st.clone();
        cand.bob = bob;
        cand.refresh();
        accept(st, cand, floor, &goal);
    }
}

fn step_assemblage(st: &mut SeesawState, goal: Goal, floor: f64) {
    if let Ok(a) = assemblage_block(st, goal, floor) {
        let mut cand = st.clone();
        cand.assemblage = a;
        cand.refresh();
        accept(st, cand, floor, &goal);
    }
}

fn step_charlie(st: &mut SeesawState, floor: f64) {
    let mut cand = st.clone();
    cand.charlie = charlie_block(st);
    cand.refresh();
    accept(st, cand, floor, &Goal::Ac);
}

/// Phase-one step on one block: when the block can clear the floor, take
/// the floor-constrained S_AC maximizer; otherwise take the S_AB maximizer.
fn lift_step(st: &mut SeesawState, floor: f64, target: f64, bob: bool) {
    let solve = |st: &SeesawState, goal: Goal| -> Option<SeesawState> {
        let mut cand = st.clone();
        if bob {
            cand.bob = bob_block(st, goal, floor).ok()?;
        } else {
            cand.assemblage = assemblage_block(st, goal, floor).ok()?;
        }
        cand.refresh();
        Some(cand)
    };
    let Some(lifted) = solve(st, Goal::Ab) else {
        return;
    };
    if lifted.s_ab >= target + PHASE_ONE_MARGIN {
        if let Some(cand) = solve(st, Goal::Ac).filter(|c| c.s_ab >= target) {
            *st = cand;
            return;
        }
    }
    if lifted.s_ab >= st.s_ab {
        *st = lifted;
    }
}

/// One restart: phase one lifts S_AB above the floor, then Bob, the
/// assemblage and Charlie are optimized in turn until S_AC stalls.
pub fn seesaw_single(
    floor: f64,
    settings: &SeesawSettings,
    seed: u64,
    restart: usize,
) -> SeesawState {
    let mut rng = split(seed, restart as u64);
    let mut st = random_start(restart, &mut rng);
    let target = floor + PHASE_ONE_MARGIN;
    st.charlie = charlie_block(&st);
    st.refresh();
    let mut rounds = 0;
    while st.s_ab < target && rounds < PHASE_ONE_ROUNDS {
        let before = st.s_ab;
        lift_step(&mut st, floor, target, true);
        if st.s_ab < target {
            lift_step(&mut st, floor, target, false);
        }
        rounds += 1;
        if st.s_ab - before < 1e-10 {
            break;
        }
    }
    if st.s_ab < target {
        st.charlie = charlie_block(&st);
        st.refresh();
        st.status = SeesawStatus::FloorNotReached;
        st.trace.push(TracePoint {
            round: 0,
            s_ab: st.s_ab,
            s_ac: st.s_ac,
        });
        return st;
    }
    st.trace.push(TracePoint {
        round: 0,
        s_ab: st.s_ab,
        s_ac: st.s_ac,
    });
    st.status = SeesawStatus::MaxRounds;
    for round in 1..=settings.max_rounds {
        let before = st.s_ac;
        step_bob(&mut st, Goal::Ac, floor);
        step_assemblage(&mut st, Goal::Ac, floor);
        step_charlie(&mut st, floor);
        st.trace.push(TracePoint {
            round,
            s_ab: st.s_ab,
            s_ac: st.s_ac,
        });
        if st.s_ac - before < settings.tol {
            st.status = SeesawStatus::Converged;
            break;
        }
    }
    st
}

/// Runs `settings.restarts` independent restarts in parallel, each with its
/// own stream split from `seed`, and keeps the largest S_AC among restarts
/// that reached the floor (ties go to the lower restart index).
pub fn seesaw_sequential_chsh(
    floor: f64,
    settings: &SeesawSettings,
    seed: u64,
) -> Result<SeesawReport> {
    if !(2.0..=TSIRELSON + 1e-12).contains(&floor) {
        return Err(Error::Domain(format!(
            "S_AB floor {floor} outside [2, 2√2]"
        )));
    }
    if settings.restarts == 0 || settings.max_rounds == 0 || !(settings.tol > 0.0) {
        return Err(Error::Domain(
            "seesaw needs restarts ≥ 1, rounds ≥ 1 and a positive tolerance".into(),
        ));
    }
    let runs: Vec<SeesawState> = (0..settings.restarts)
        .into_par_iter()
        .map(|k| seesaw_single(floor, settings, seed, k))
        .collect();
    let rank = |s: &SeesawState| {
        (
            s.status != SeesawStatus::FloorNotReached,
            if s.status == SeesawStatus::FloorNotReached {
                s.s_ab
            } else {
                s.s_ac
            },
        )
    };
    let mut best = 0;
    for k in 1..runs.len() {
        let (ra, va) = rank(&runs[k]);
        let (rb, vb) = rank(&runs[best]);
        if (ra && !rb) || (ra == rb && va > vb) {
            best = k;
        }
    }
    Ok(SeesawReport {
        seed,
        floor,
        settings: *settings,
        restarts: runs.iter().map(|s| (s.s_ab, s.s_ac, s.status)).collect(),
        best: runs[best].clone(),
    })
}
