//! Seeded random generators for states, unitaries, channels and PI models.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::instruments::{KrausInstrument, PiBranch, PiDescription};
use crate::matcore::{CMat, HermOp, RMat, C64};

pub type Prng = ChaCha20Rng;

pub fn prng(seed: u64) -> Prng {
    use rand::SeedableRng;
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream `k` derived from a master seed.
pub fn split(seed: u64, k: u64) -> Prng {
    let mut r = prng(seed);
    r.set_stream(k + 1);
    r
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Columns orthonormalized by QR with the phase convention that makes the
/// distribution Haar.
fn orthonormal_columns(g: CMat) -> CMat {
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..q.nrows() {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> CMat {
    orthonormal_columns(ginibre(d, d, rng))
}

/// Random isometry C^{cols} → C^{rows}.
pub fn random_isometry(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    orthonormal_columns(ginibre(rows, cols, rng))
}

pub fn haar_ket(d: usize, rng: &mut impl Rng) -> DVector<C64> {
    let v = DVector::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v / C64::new(n, 0.0)
}

pub fn haar_pure_state(d: usize, rng: &mut impl Rng) -> HermOp {
    HermOp::ket_bra(&haar_ket(d, rng))
}

/// Hilbert–Schmidt random density matrix.
pub fn random_density(d: usize, rng: &mut impl Rng) -> HermOp {
    let g = ginibre(d, d, rng);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    HermOp::symmetrized(m / C64::new(t, 0.0))
}

pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermOp {
    let g = ginibre(d, d, rng);
    HermOp::symmetrized((&g + g.adjoint()) * C64::new(0.5, 0.0))
}

/// Kraus operators of a random channel C^{d_in} → C^{d_out}.
pub fn random_channel(d_in: usize, d_out: usize, n_kraus: usize, rng: &mut impl Rng) -> Vec<CMat> {
    let v = random_isometry(d_out * n_kraus, d_in, rng);
    (0..n_kraus)
        .map(|k| v.rows(k * d_out, d_out).into_owned())
        .collect()
}

/// Random instrument from a random isometry.
pub fn random_instrument(
    d_in: usize,
    d_out: usize,
    n_outcomes: usize,
    n_kraus: usize,
    rng: &mut impl Rng,
) -> KrausInstrument {
    let ops = random_channel(d_in, d_out, n_outcomes * n_kraus, rng);
    let outcomes = ops.chunks(n_kraus).map(|c| c.to_vec()).collect();
    KrausInstrument::new(d_in, d_out, outcomes).expect("isometry gives a valid instrument")
}

/// Random projective measurement with `n` outcomes: a Haar basis with each
/// vector assigned to a uniformly random outcome.
pub fn random_projective_measurement(d: usize, n: usize, rng: &mut impl Rng) -> Vec<HermOp> {
    let u = haar_unitary(d, rng);
    let mut proj = vec![CMat::zeros(d, d); n];
    for i in 0..d {
        let a = rng.random_range(0..n);
        let col = u.column(i);
        proj[a] += &col * col.adjoint();
    }
    proj.into_iter().map(HermOp::symmetrized).collect()
}

/// Random column-stochastic matrix (rows: outcome a, columns: a').
pub fn random_stochastic(n: usize, n_prime: usize, rng: &mut impl Rng) -> RMat {
    let mut m = RMat::from_fn(n, n_prime, |_, _| -rng.random::<f64>().max(1e-300).ln());
    for j in 0..n_prime {
        let s: f64 = m.column(j).sum();
        m.column_mut(j).scale_mut(1.0 / s);
    }
    m
}

fn random_prior(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..k)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random PI model: `n_branches` branches, each with a random projective
/// measurement of `n_prime` outcomes, random channels and random
/// post-processing onto `n` outcomes.
pub fn random_pi_description(
    d_in: usize,
    d_out: usize,
    n: usize,
    n_prime: usize,
    n_branches: usize,
    rng: &mut impl Rng,
) -> PiDescription {
    let prior = random_prior(n_branches, rng);
    let branches = prior
        .into_iter()
        .map(|q| PiBranch {
            prior: q,
            projectors: random_projective_measurement(d_in, n_prime, rng),
            channels: (0..n_prime)
                .map(|_| random_channel(d_in, d_out, 2, rng))
                .collect(),
            post: random_stochastic(n, n_prime, rng),
        })
        .collect();
    PiDescription::new(d_in, d_out, n, branches).expect("random PI description is valid")
}
