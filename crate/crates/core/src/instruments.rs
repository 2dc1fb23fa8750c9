//! Quantum instruments in Kraus and Choi form, standard families, noise
//! models and projective-instrument (PI) descriptions.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    bloch_state, c, max_abs_diff, max_entangled_vector, ptrace, BipartiteOp, CMat, HermOp, RMat,
    Side, C64,
};

pub const TP_TOL: f64 = 1e-10;
pub const CHOI_TOL: f64 = 1e-9;
pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausInstrument {
    d_in: usize,
    d_out: usize,
    outcomes: Vec<Vec<CMat>>,
}

impl KrausInstrument {
    pub fn new(d_in: usize, d_out: usize, outcomes: Vec<Vec<CMat>>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidInstrument("no outcomes".into()));
        }
        let mut sum = CMat::zeros(d_in, d_in);
        for ks in &outcomes {
            for k in ks {
                if k.nrows() != d_out || k.ncols() != d_in {
                    return Err(Error::Dimension(format!(
                        "Kraus operator is {}x{}, expected {}x{}",
                        k.nrows(),
                        k.ncols(),
                        d_out,
                        d_in
                    )));
                }
                sum += k.adjoint() * k;
            }
        }
        let err = max_abs_diff(&sum, &CMat::identity(d_in, d_in));
        if err > TP_TOL {
            return Err(Error::InvalidInstrument(format!(
                "not trace preserving (error {err:.3e})"
            )));
        }
        Ok(Self {
            d_in,
            d_out,
            outcomes,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[Vec<CMat>] {
        &self.outcomes
    }

    /// Unnormalized post-measurement operators Σ_k K ρ K†.
    pub fn apply(&self, rho: &HermOp) -> Vec<HermOp> {
        self.outcomes
            .iter()
            .map(|ks| {
                let mut acc = CMat::zeros(self.d_out, self.d_out);
                for k in ks {
                    acc += k * rho.matrix() * k.adjoint();
                }
                HermOp::symmetrized(acc)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiInstrument {
    d_in: usize,
    d_out: usize,
    etas: Vec<BipartiteOp>,
}

impl ChoiInstrument {
    pub fn new(etas: Vec<BipartiteOp>) -> Result<Self> {
        let inst = Self::unchecked(etas)?;
        inst.validate(CHOI_TOL)?;
        Ok(inst)
    }

    /// Checks dimensions only.
    pub fn unchecked(etas: Vec<BipartiteOp>) -> Result<Self> {
        let first = etas
            .first()
            .ok_or_else(|| Error::InvalidInstrument("no outcomes".into()))?;
        let (d_out, d_in) = (first.d_out(), first.d_in());
        if etas.iter().any(|e| e.d_out() != d_out || e.d_in() != d_in) {
            return Err(Error::Dimension(
                "outcome operators have different dimensions".into(),
            ));
        }
        Ok(Self { d_in, d_out, etas })
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for (a, e) in self.etas.iter().enumerate() {
            let m = e.op().min_eigenvalue();
            if m < -tol {
                return Err(Error::InvalidInstrument(format!(
                    "η_{a} has eigenvalue {m:.3e}"
                )));
            }
        }
        let err = self.normalization_error();
        if err > tol {
            return Err(Error::InvalidInstrument(format!(
                "normalization error {err:.3e}"
            )));
        }
        Ok(())
    }

    /// max |tr_A' Σ_a η_a − I/d|.
    pub fn normalization_error(&self) -> f64 {
        let marg = self.total_marginal();
        max_abs_diff(
            marg.matrix(),
            HermOp::identity(self.d_in)
                .scale(1.0 / self.d_in as f64)
                .matrix(),
        )
    }

    pub fn total_marginal(&self) -> HermOp {
        let mut acc = HermOp::zeros(self.d_in);
        for e in &self.etas {
            acc = &acc + &e.partial_trace(Side::APrime);
        }
        acc
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn n_outcomes(&self) -> usize {
        self.etas.len()
    }

    pub fn etas(&self) -> &[BipartiteOp] {
        &self.etas
    }

    pub fn eta(&self, a: usize) -> &BipartiteOp {
        &self.etas[a]
    }

    /// Σ_a η_a, the Choi operator of the total channel.
    pub fn total(&self) -> BipartiteOp {
        let mut acc = BipartiteOp::zeros(self.d_out, self.d_in);
        for e in &self.etas {
            acc = acc.add(e).expect("same dims");
        }
        acc
    }

    /// Conjugates every η_a by V ⊗ U (V on the output, U on the input side).
    pub fn conjugate(&self, v: &CMat, u: &CMat) -> Self {
        let w = v.kronecker(u);
        let etas = self
            .etas
            .iter()
            .map(|e| BipartiteOp::new(e.op().conjugate_by(&w), self.d_out, self.d_in).unwrap())
            .collect();
        Self {
            d_in: self.d_in,
            d_out: self.d_out,
            etas,
        }
    }

    pub fn max_abs_diff(&self, other: &ChoiInstrument) -> f64 {
        self.etas
            .iter()
            .zip(&other.etas)
            .map(|(a, b)| a.op().max_abs_diff(b.op()))
            .fold(
                if self.etas.len() == other.etas.len() {
                    0.0
                } else {
                    f64::INFINITY
                },
                f64::max,
            )
    }
}

/// Choi operator Σ_k (K_k ⊗ I) φ+ (K_k ⊗ I)† of a CP map with Kraus list `ks`.
pub fn choi_of_kraus(ks: &[CMat], d_in: usize, d_out: usize) -> BipartiteOp {
    let phi = max_entangled_vector(d_in);
    let id = CMat::identity(d_in, d_in);
    let mut acc = CMat::zeros(d_out * d_in, d_out * d_in);
    for k in ks {
        let v = k.kronecker(&id) * &phi;
        acc += &v * v.adjoint();
    }
    BipartiteOp::new(HermOp::symmetrized(acc), d_out, d_in).unwrap()
}

pub fn kraus_to_choi(k: &KrausInstrument) -> Result<ChoiInstrument> {
    let etas = k
        .outcomes
        .iter()
        .map(|ks| choi_of_kraus(ks, k.d_in, k.d_out))
        .collect();
    ChoiInstrument::new(etas)
}

/// Kraus operators of the CP map with Choi operator `eta` (inverse of
/// [`choi_of_kraus`]); eigenvalues below `tol` are dropped.
pub fn kraus_of_choi(eta: &BipartiteOp, tol: f64) -> Vec<CMat> {
    let (d_out, d_in) = (eta.d_out(), eta.d_in());
    let (vals, vecs) = eta.op().eigh();
    let mut ks = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l <= tol {
            continue;
        }
        let s = (l * d_in as f64).sqrt();
        let v = vecs.column(i);
        ks.push(CMat::from_fn(d_out, d_in, |r, col| v[r * d_in + col] * s));
    }
    ks
}

/// One outcome of [`choi_apply`]; `state` is `None` when the outcome has
/// (numerically) zero probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub state: Option<HermOp>,
}

pub fn check_density(rho: &HermOp, d: usize) -> Result<()> {
    if rho.dim() != d {
        return Err(Error::Dimension(format!(
            "state of dimension {} for input dimension {}",
            rho.dim(),
            d
        )));
    }
    if (rho.trace() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("trace {}", rho.trace())));
    }
    let m = rho.min_eigenvalue();
    if m < -1e-8 {
        return Err(Error::InvalidState(format!("eigenvalue {m:.3e}")));
    }
    Ok(())
}

/// Unnormalized I_a(ρ) = d tr_A((I ⊗ ρᵀ) η_a).
pub fn choi_map(eta: &BipartiteOp, rho: &CMat) -> CMat {
    let (d_out, d_in) = (eta.d_out(), eta.d_in());
    let m = CMat::identity(d_out, d_out).kronecker(&rho.transpose()) * eta.matrix();
    ptrace(&m, d_out, d_in, Side::A) * c(d_in as f64, 0.0)
}

pub fn choi_apply(ci: &ChoiInstrument, rho: &HermOp) -> Result<Vec<Outcome>> {
    check_density(rho, ci.d_in)?;
    Ok(ci
        .etas
        .iter()
        .map(|e| {
            let out = HermOp::symmetrized(choi_map(e, rho.matrix()));
            let p = out.trace();
            if p < 1e-12 {
                Outcome {
                    prob: p.max(0.0),
                    state: None,
                }
            } else {
                Outcome {
                    prob: p,
                    state: Some(out.scale(1.0 / p)),
                }
            }
        })
        .collect())
}

/// M_a = d tr_A'(η_a)ᵀ.
pub fn induced_povm(ci: &ChoiInstrument) -> Vec<HermOp> {
    ci.etas
        .iter()
        .map(|e| {
            e.partial_trace(Side::APrime)
                .transpose()
                .scale(ci.d_in as f64)
        })
        .collect()
}

/// d-outcome Lüders instrument of the unsharp computational-basis
/// measurement with sharpness γ.
pub fn luders_unsharp(d: usize, gamma: f64) -> Result<KrausInstrument> {
    if d < 2 {
        return Err(Error::Domain("luders_unsharp needs d >= 2".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("sharpness {gamma} outside [0,1]")));
    }
    let hi = ((1.0 + gamma) / 2.0).sqrt();
    let lo = ((1.0 - gamma) / (2.0 * (d as f64 - 1.0))).sqrt();
    let outcomes = (0..d)
        .map(|a| {
            vec![CMat::from_fn(d, d, |i, j| {
                if i != j {
                    c(0., 0.)
                } else if i == a {
                    c(hi, 0.)
                } else {
                    c(lo, 0.)
                }
            })]
        })
        .collect();
    KrausInstrument::new(d, d, outcomes)
}

/// Qubit unsharp σ_z instrument.
pub fn unsharp_z(gamma: f64) -> Result<KrausInstrument> {
    luders_unsharp(2, gamma)
}

pub fn sic_bloch_vectors() -> [[f64; 3]; 4] {
    let s = 1.0 / 3f64.sqrt();
    [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]]
}

pub fn sic_states() -> Vec<HermOp> {
    sic_bloch_vectors()
        .iter()
        .map(|n| bloch_state(*n))
        .collect()
}

/// Qubit SIC instrument with Kraus operators φ_a/√2.
pub fn sic_instrument() -> KrausInstrument {
    let outcomes = sic_states()
        .iter()
        .map(|p| vec![p.matrix() * c(std::f64::consts::FRAC_1_SQRT_2, 0.)])
        .collect();
    KrausInstrument::new(2, 2, outcomes).expect("SIC instrument is trace preserving")
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    Dephasing,
    White,
    WorstCase,
    Custom(ChoiInstrument),
}

pub fn noise_instrument(
    model: &NoiseModel,
    n_outcomes: usize,
    d_in: usize,
    d_out: usize,
) -> Result<ChoiInstrument> {
    if n_outcomes < 1 || d_in < 1 || d_out < 1 {
        return Err(Error::Dimension("noise needs positive dimensions".into()));
    }
    let dim = d_out * d_in;
    match model {
        NoiseModel::Dephasing => {
            if d_in != d_out {
                return Err(Error::Dimension(
                    "dephasing noise needs d_in == d_out".into(),
                ));
            }
            let w = 1.0 / (n_outcomes * d_in) as f64;
            let diag: Vec<f64> = (0..dim)
                .map(|k| if k / d_in == k % d_in { w } else { 0.0 })
                .collect();
            let eta = BipartiteOp::new(HermOp::diag(&diag), d_out, d_in)?;
            ChoiInstrument::new(vec![eta; n_outcomes])
        }
        NoiseModel::White => {
            let eta = BipartiteOp::new(
                HermOp::identity(dim).scale(1.0 / (n_outcomes * dim) as f64),
                d_out,
                d_in,
            )?;
            ChoiInstrument::new(vec![eta; n_outcomes])
        }
        NoiseModel::WorstCase => Err(Error::Domain(
            "worst-case noise is an optimization variable, see simulability::worst_case_visibility"
                .into(),
        )),
        NoiseModel::Custom(ci) => {
            if ci.n_outcomes() != n_outcomes || ci.d_in() != d_in || ci.d_out() != d_out {
                return Err(Error::Dimension("custom noise has the wrong shape".into()));
            }
            ci.validate(CHOI_TOL)?;
            Ok(ci.clone())
        }
    }
}

/// Noise that ignores the input, picks a uniformly random outcome a and
/// prepares `states[a]`: η_a = states[a] ⊗ I/(N d).
pub fn measure_prepare_noise(states: &[HermOp], d_in: usize) -> Result<ChoiInstrument> {
    let n = states.len() as f64;
    let etas = states
        .iter()
        .map(|s| {
            let op =
                crate::matcore::tensor(s, &HermOp::identity(d_in)).scale(1.0 / (n * d_in as f64));
            BipartiteOp::new(op, s.dim(), d_in)
        })
        .collect::<Result<Vec<_>>>()?;
    ChoiInstrument::new(etas)
}

pub fn mix(ci: &ChoiInstrument, noise: &ChoiInstrument, v: f64) -> Result<ChoiInstrument> {
    if ci.n_outcomes() != noise.n_outcomes()
        || ci.d_in() != noise.d_in()
        || ci.d_out() != noise.d_out()
    {
        return Err(Error::Dimension(
            "instrument and noise shapes differ".into(),
        ));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("visibility {v} outside [0,1]")));
    }
    let etas = ci
        .etas
        .iter()
        .zip(&noise.etas)
        .map(|(a, b)| a.scale(v).add(&b.scale(1.0 - v)).unwrap())
        .collect();
    ChoiInstrument::new(etas)
}

/// N-tuple of projector ranks summing to the input dimension.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RankVector(pub Vec<usize>);

impl RankVector {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for RankVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All compositions of d into n nonnegative parts, in lexicographic order.
pub fn rank_vectors(d: usize, n: usize) -> Vec<RankVector> {
    fn rec(rem: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<RankVector>) {
        if slots == 1 {
            cur.push(rem);
            out.push(RankVector(cur.clone()));
            cur.pop();
            return;
        }
        for r in 0..=rem {
            cur.push(r);
            rec(rem - r, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n >= 1 {
        rec(d, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// One branch λ of a PI: a projective measurement {E_a'}, a channel per
/// outcome a' and a post-processing p(a|a') (rows a, columns a').
#[derive(Clone, Debug, PartialEq)]
pub struct PiBranch {
    pub prior: f64,
    pub projectors: Vec<HermOp>,
    pub channels: Vec<Vec<CMat>>,
    pub post: RMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiDescription {
    d_in: usize,
    d_out: usize,
    n_outcomes: usize,
    branches: Vec<PiBranch>,
}

fn check_projective(proj: &[HermOp], d: usize) -> Result<()> {
    let mut sum = CMat::zeros(d, d);
    for (i, p) in proj.iter().enumerate() {
        if p.dim() != d {
            return Err(Error::Dimension("projector dimension".into()));
        }
        let sq = p.matrix() * p.matrix();
        if max_abs_diff(&sq, p.matrix()) > PROJECTOR_TOL {
            return Err(Error::InvalidInstrument(format!("E_{i} is not idempotent")));
        }
        for q in &proj[i + 1..] {
            if (p.matrix() * q.matrix())
                .iter()
                .any(|z| z.norm() > PROJECTOR_TOL)
            {
                return Err(Error::InvalidInstrument(
                    "projectors are not orthogonal".into(),
                ));
            }
        }
        sum += p.matrix();
    }
    if max_abs_diff(&sum, &CMat::identity(d, d)) > PROJECTOR_TOL {
        return Err(Error::InvalidInstrument(
            "projectors do not sum to identity".into(),
        ));
    }
    Ok(())
}

fn check_channel(ks: &[CMat], d_in: usize, d_out: usize) -> Result<()> {
    let mut sum = CMat::zeros(d_in, d_in);
    for k in ks {
        if k.nrows() != d_out || k.ncols() != d_in {
            return Err(Error::Dimension("Kraus operator shape".into()));
        }
        sum += k.adjoint() * k;
    }
    if max_abs_diff(&sum, &CMat::identity(d_in, d_in)) > TP_TOL {
        return Err(Error::InvalidInstrument(
            "channel is not trace preserving".into(),
        ));
    }
    Ok(())
}

fn check_stochastic(m: &RMat, n: usize, n_prime: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n_prime {
        return Err(Error::Dimension(format!(
            "post-processing is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            n,
            n_prime
        )));
    }
    for j in 0..n_prime {
        let col = m.column(j);
        if col.iter().any(|x| *x < -1e-12) || (col.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInstrument(format!(
                "post-processing column {j} is not stochastic"
            )));
        }
    }
    Ok(())
}

impl PiDescription {
    pub fn new(
        d_in: usize,
        d_out: usize,
        n_outcomes: usize,
        branches: Vec<PiBranch>,
    ) -> Result<Self> {
        let total: f64 = branches.iter().map(|b| b.prior).sum();
        if branches.iter().any(|b| b.prior < -1e-12) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInstrument(
                "branch priors are not a probability distribution".into(),
            ));
        }
        for b in &branches {
            check_projective(&b.projectors, d_in)?;
            if b.channels.len() != b.projectors.len() {
                return Err(Error::Dimension(
                    "one channel per projector required".into(),
                ));
            }
            for ch in &b.channels {
                check_channel(ch, d_in, d_out)?;
            }
            check_stochastic(&b.post, n_outcomes, b.projectors.len())?;
        }
        Ok(Self {
            d_in,
            d_out,
            n_outcomes,
            branches,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn branches(&self) -> &[PiBranch] {
        &self.branches
    }

    /// η_a = Σ_λ q_λ Σ_a' p(a|a',λ) (Λ_{a',λ} ⊗ id)[(E_{a'|λ} ⊗ 1) φ+ (E_{a'|λ} ⊗ 1)].
    pub fn to_choi(&self) -> ChoiInstrument {
        let mut etas =
            vec![CMat::zeros(self.d_out * self.d_in, self.d_out * self.d_in); self.n_outcomes];
        for b in &self.branches {
            for (ap, (e, ch)) in b.projectors.iter().zip(&b.channels).enumerate() {
                let ks: Vec<CMat> = ch.iter().map(|k| k * e.matrix()).collect();
                let j = choi_of_kraus(&ks, self.d_in, self.d_out);
                for (a, eta) in etas.iter_mut().enumerate() {
                    let w = b.prior * b.post[(a, ap)];
                    if w != 0.0 {
                        *eta += j.matrix() * c(w, 0.0);
                    }
                }
            }
        }
        let etas = etas
            .into_iter()
            .map(|m| BipartiteOp::new(HermOp::symmetrized(m), self.d_out, self.d_in).unwrap())
            .collect();
        ChoiInstrument::unchecked(etas).unwrap()
    }

    pub fn is_canonical(&self) -> bool {
        self.branches.iter().all(|b| {
            b.projectors.len() == self.n_outcomes
                && b.post == RMat::identity(self.n_outcomes, self.n_outcomes)
                && b.channels.windows(2).all(|w| w[0] == w[1])
        })
    }
}

/// Decomposes a column-stochastic matrix into weighted deterministic maps
/// f: a' ↦ a.
pub fn deterministic_decomposition(p: &RMat) -> Vec<(f64, Vec<usize>)> {
    let mut rest = p.clone();
    let mut out = Vec::new();
    loop {
        let mut f = Vec::with_capacity(rest.ncols());
        let mut w = f64::INFINITY;
        for j in 0..rest.ncols() {
            let col = rest.column(j);
            let (i, &x) = col
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (i, x)| {
                    if *x > *acc.1 {
                        (i, x)
                    } else {
                        acc
                    }
                });
            f.push(i);
            w = w.min(x);
        }
        if !(w > 1e-15) {
            break;
        }
        for (j, &i) in f.iter().enumerate() {
            rest[(i, j)] -= w;
        }
        out.push((w, f));
    }
    out
}

/// Equivalent PI description without classical post-processing and with
/// outcome-independent channels.
pub fn canonicalize_pi(p: &PiDescription) -> Result<PiDescription> {
    let n = p.n_outcomes;
    let d = p.d_in;
    let mut branches = Vec::new();
    for b in &p.branches {
        check_stochastic(&b.post, n, b.projectors.len())?;
        let channel: Vec<CMat> = b
            .projectors
            .iter()
            .zip(&b.channels)
            .flat_map(|(e, ks)| ks.iter().map(move |k| k * e.matrix()))
            .collect();
        let decomposition = deterministic_decomposition(&b.post);
        let total: f64 = decomposition.iter().map(|(w, _)| w).sum();
        for (w, f) in decomposition {
            let mut proj = vec![CMat::zeros(d, d); n];
            for (ap, &a) in f.iter().enumerate() {
                proj[a] += b.projectors[ap].matrix();
            }
            branches.push(PiBranch {
                prior: b.prior * w / total,
                projectors: proj.into_iter().map(HermOp::symmetrized).collect(),
                channels: vec![channel.clone(); n],
                post: RMat::identity(n, n),
            });
        }
    }
    PiDescription::new(p.d_in, p.d_out, n, branches)
}

#[derive(Serialize, Deserialize)]
struct ChoiJson {
    #[serde(rename = "dA")]
    d_in: usize,
    #[serde(rename = "dA_prime")]
    d_out: usize,
    outcomes: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Serialize, Deserialize)]
struct KrausJson {
    #[serde(rename = "dA")]
    d_in: usize,
    #[serde(rename = "dA_prime")]
    d_out: usize,
    outcomes: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

pub fn matrix_to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != cols) {
        return Err(Error::Serde("ragged matrix".into()));
    }
    Ok(CMat::from_fn(r, cols, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

impl ChoiInstrument {
    pub fn to_json_value(&self) -> serde_json::Value {
        let j = ChoiJson {
            d_in: self.d_in,
            d_out: self.d_out,
            outcomes: self
                .etas
                .iter()
                .map(|e| matrix_to_rows(e.matrix()))
                .collect(),
        };
        serde_json::to_value(j).expect("serializable")
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ChoiJson = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        let etas = j
            .outcomes
            .iter()
            .map(|rows| BipartiteOp::from_matrix(rows_to_matrix(rows)?, j.d_out, j.d_in))
            .collect::<Result<Vec<_>>>()?;
        Self::new(etas)
    }
}

impl KrausInstrument {
    pub fn to_json(&self) -> String {
        let j = KrausJson {
            d_in: self.d_in,
            d_out: self.d_out,
            outcomes: self
                .outcomes
                .iter()
                .map(|ks| ks.iter().map(matrix_to_rows).collect())
                .collect(),
        };
        serde_json::to_string(&j).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: KrausJson = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        let outcomes = j
            .outcomes
            .iter()
            .map(|ks| {
                ks.iter()
                    .map(|rows| rows_to_matrix(rows))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(j.d_in, j.d_out, outcomes)
    }
}

/// Single-outcome identity channel instrument on C^d.
pub fn identity_instrument(d: usize) -> KrausInstrument {
    KrausInstrument::new(d, d, vec![vec![CMat::identity(d, d)]]).unwrap()
}

/// Normalized ket helper for tests and examples.
pub fn normalized(v: DVector<C64>) -> DVector<C64> {
    let n = v.norm();
    v / c(n, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{ket, max_entangled, tensor};
    use crate::random::{prng, random_pi_description};

    #[test]
    fn identity_channel_choi() {
        let ci = kraus_to_choi(&identity_instrument(2)).unwrap();
        assert!(ci.eta(0).op().max_abs_diff(max_entangled(2).unwrap().op()) < 1e-15);
        let rho = crate::matcore::bloch_state([0.1, 0.2, 0.3]);
        let out = choi_apply(&ci, &rho).unwrap();
        assert!((out[0].prob - 1.0).abs() < 1e-12);
        assert!(out[0].state.as_ref().unwrap().max_abs_diff(&rho) < 1e-12);
        assert!(induced_povm(&ci)[0].max_abs_diff(&HermOp::identity(2)) < 1e-15);
    }

    #[test]
    fn sharp_z_choi() {
        let ci = kraus_to_choi(&unsharp_z(1.0).unwrap()).unwrap();
        let e1 = HermOp::basis_projector(4, 0).scale(0.5);
        let e2 = HermOp::basis_projector(4, 3).scale(0.5);
        assert!(ci.eta(0).op().max_abs_diff(&e1) < 1e-15);
        assert!(ci.eta(1).op().max_abs_diff(&e2) < 1e-15);
        let marg = ci.eta(0).partial_trace(Side::APrime);
        assert!(marg.max_abs_diff(&HermOp::diag(&[0.5, 0.0])) < 1e-15);
        let plus = HermOp::ket_bra(&normalized(ket(2, 0) + ket(2, 1)));
        let out = choi_apply(&ci, &plus).unwrap();
        assert!((out[0].prob - 0.5).abs() < 1e-12 && (out[1].prob - 0.5).abs() < 1e-12);
        assert!(
            out[0]
                .state
                .as_ref()
                .unwrap()
                .max_abs_diff(&HermOp::basis_projector(2, 0))
                < 1e-12
        );
        assert!(
            out[1]
                .state
                .as_ref()
                .unwrap()
                .max_abs_diff(&HermOp::basis_projector(2, 1))
                < 1e-12
        );
        let out0 = choi_apply(&ci, &HermOp::basis_projector(2, 0)).unwrap();
        assert!(out0[1].state.is_none());
    }

    #[test]
    fn unsharp_z_choi_entries() {
        for &g in &[0.0, 0.3, 0.8] {
            let ci = kraus_to_choi(&unsharp_z(g).unwrap()).unwrap();
            let off = (1.0 - g * g).sqrt() / 4.0;
            for (a, sign) in [(0, 1.0), (1, -1.0)] {
                let m = ci.eta(a).matrix();
                assert!((m[(0, 0)].re - (1.0 + sign * g) / 4.0).abs() < 1e-15);
                assert!((m[(3, 3)].re - (1.0 - sign * g) / 4.0).abs() < 1e-15);
                assert!((m[(0, 3)].re - off).abs() < 1e-15);
                assert!(m[(1, 1)].norm() < 1e-15 && m[(2, 2)].norm() < 1e-15);
            }
            let out = choi_apply(&ci, &HermOp::basis_projector(2, 0)).unwrap();
            assert!((out[0].prob - (1.0 + g) / 2.0).abs() < 1e-12);
            assert!((out[1].prob - (1.0 - g) / 2.0).abs() < 1e-12);
            for o in &out {
                assert!(
                    o.state
                        .as_ref()
                        .unwrap()
                        .max_abs_diff(&HermOp::basis_projector(2, 0))
                        < 1e-12
                );
            }
            let povm = induced_povm(&ci);
            assert!(
                povm[0].max_abs_diff(&HermOp::diag(&[(1.0 + g) / 2.0, (1.0 - g) / 2.0])) < 1e-14
            );
        }
    }

    #[test]
    fn luders_qutrit_kraus() {
        let k = luders_unsharp(3, 0.5).unwrap();
        let k1 = &k.outcomes()[0][0];
        assert!((k1[(0, 0)].re - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((k1[(1, 1)].re - 0.125f64.sqrt()).abs() < 1e-15);
        assert!((k1[(2, 2)].re - 0.125f64.sqrt()).abs() < 1e-15);
        assert!(luders_unsharp(3, 1.2).is_err());
        let k0 = luders_unsharp(2, 0.0).unwrap();
        for ks in k0.outcomes() {
            assert!(
                max_abs_diff(
                    &ks[0],
                    &(CMat::identity(2, 2) * c(std::f64::consts::FRAC_1_SQRT_2, 0.))
                ) < 1e-15
            );
        }
    }

    #[test]
    fn sic_properties() {
        let ci = kraus_to_choi(&sic_instrument()).unwrap();
        let povm = induced_povm(&ci);
        let states = sic_states();
        for (m, s) in povm.iter().zip(&states) {
            assert!((m.trace() - 0.5).abs() < 1e-14);
            assert!(m.max_abs_diff(&s.scale(0.5)) < 1e-14);
        }
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((states[i].dot(&states[j]) - 1.0 / 3.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn noise_models() {
        let dep = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        assert!(
            dep.eta(0)
                .op()
                .max_abs_diff(&HermOp::diag(&[0.25, 0., 0., 0.25]))
                < 1e-15
        );
        let white = noise_instrument(&NoiseModel::White, 2, 2, 2).unwrap();
        assert!(
            white
                .eta(1)
                .op()
                .max_abs_diff(&HermOp::identity(4).scale(0.125))
                < 1e-15
        );
        let dep4 = noise_instrument(&NoiseModel::Dephasing, 4, 2, 2).unwrap();
        assert!((dep4.eta(0).trace() - 0.25).abs() < 1e-15);
        assert!(noise_instrument(&NoiseModel::WorstCase, 2, 2, 2).is_err());
    }

    #[test]
    fn mixing() {
        let ci = kraus_to_choi(&unsharp_z(1.0).unwrap()).unwrap();
        let dep = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        assert_eq!(mix(&ci, &dep, 1.0).unwrap().max_abs_diff(&ci), 0.0);
        assert_eq!(mix(&ci, &dep, 0.0).unwrap().max_abs_diff(&dep), 0.0);
        let half = mix(&ci, &dep, 0.5).unwrap();
        assert!(
            half.eta(0)
                .op()
                .max_abs_diff(&HermOp::diag(&[0.375, 0., 0., 0.125]))
                < 1e-15
        );
        let wrong = noise_instrument(&NoiseModel::White, 3, 2, 2).unwrap();
        assert!(mix(&ci, &wrong, 0.5).is_err());
    }

    #[test]
    fn rank_vector_enumeration() {
        let r = rank_vectors(2, 2);
        assert_eq!(
            r,
            vec![
                RankVector(vec![0, 2]),
                RankVector(vec![1, 1]),
                RankVector(vec![2, 0])
            ]
        );
        assert_eq!(rank_vectors(2, 4).len(), 10);
        let r3 = rank_vectors(3, 3);
        assert_eq!(r3.len(), 10);
        for v in [vec![1, 1, 1], vec![3, 0, 0], vec![2, 1, 0]] {
            assert!(r3.contains(&RankVector(v)));
        }
        assert_eq!(RankVector(vec![1, 1]).to_string(), "(1,1)");
    }

    #[test]
    fn swap_post_processing_canonical_form() {
        let z0 = HermOp::basis_projector(2, 0);
        let z1 = HermOp::basis_projector(2, 1);
        let id = vec![CMat::identity(2, 2)];
        let swap = RMat::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let p = PiDescription::new(
            2,
            2,
            2,
            vec![PiBranch {
                prior: 1.0,
                projectors: vec![z0.clone(), z1.clone()],
                channels: vec![id.clone(), id],
                post: swap,
            }],
        )
        .unwrap();
        let can = canonicalize_pi(&p).unwrap();
        assert!(can.is_canonical());
        assert_eq!(can.branches()[0].projectors[0], z1);
        assert!(can.to_choi().max_abs_diff(&p.to_choi()) < 1e-15);
        assert!(
            canonicalize_pi(&can)
                .unwrap()
                .to_choi()
                .max_abs_diff(&can.to_choi())
                < 1e-15
        );
    }

    #[test]
    fn random_pi_canonicalization() {
        let mut rng = prng(7);
        for _ in 0..20 {
            let p = random_pi_description(2, 2, 3, 3, 3, &mut rng);
            let ci = p.to_choi();
            ci.validate(1e-10).unwrap();
            let can = canonicalize_pi(&p).unwrap();
            assert!(can.is_canonical());
            assert!(can.to_choi().max_abs_diff(&ci) < 1e-9);
        }
    }

    #[test]
    fn json_roundtrip() {
        let k = sic_instrument();
        let back = KrausInstrument::from_json(&k.to_json()).unwrap();
        assert_eq!(back, k);
        let ci = kraus_to_choi(&luders_unsharp(3, 0.37).unwrap()).unwrap();
        let back = ChoiInstrument::from_json(&ci.to_json()).unwrap();
        assert_eq!(back, ci);
        let v: serde_json::Value = serde_json::from_str(&ci.to_json()).unwrap();
        assert_eq!(v["dA"], 3);
        assert_eq!(v["dA_prime"], 3);
        assert!(ChoiInstrument::from_json("{\"dA\":2}").is_err());
    }

    #[test]
    fn measure_prepare_noise_is_valid() {
        let n = measure_prepare_noise(&sic_states(), 2).unwrap();
        let s = &sic_states()[1];
        let expect = tensor(s, &HermOp::identity(2)).scale(1.0 / 8.0);
        assert!(n.eta(1).op().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn kraus_of_choi_inverts() {
        let mut rng = prng(3);
        let ks = crate::random::random_channel(2, 3, 2, &mut rng);
        let j = choi_of_kraus(&ks, 2, 3);
        let back = choi_of_kraus(&kraus_of_choi(&j, 1e-13), 2, 3);
        assert!(back.op().max_abs_diff(j.op()) < 1e-13);
    }
}
