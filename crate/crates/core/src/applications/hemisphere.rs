//! Bloch-hemisphere discrimination: success probability against average
//! fidelity of the post-measurement state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::witness::{witness_pi_max_at, WitnessSpec};
use crate::error::{Error, Result};
use crate::instruments::{choi_map, ChoiInstrument};
use crate::matcore::{bloch_state, max_entangled, pauli_z, HermOp, Side};
use crate::random::haar_ket;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tradeoff {
    pub p_win: f64,
    pub fidelity: f64,
}

fn check_shape(c: &ChoiInstrument) -> Result<()> {
    if c.n_outcomes() != 2 || c.d_in() != 2 || c.d_out() != 2 {
        return Err(Error::Dimension(
            "hemisphere test needs a 2-outcome qubit-to-qubit instrument".into(),
        ));
    }
    Ok(())
}

/// p_win = 1/2 + tr(η_N^A σ_z)/2 and F = 1/3 + 2 tr(Φ+ η)/3, with outcome 0
/// the northern hemisphere.
pub fn hemisphere_tradeoff(c: &ChoiInstrument) -> Result<Tradeoff> {
    check_shape(c)?;
    let north = c.eta(0).partial_trace(Side::APrime);
    let p_win = 0.5 + 0.5 * north.dot(&pauli_z());
    let phi = max_entangled(2)?;
    let fidelity = 1.0 / 3.0 + 2.0 / 3.0 * phi.op().dot(c.total().op());
    Ok(Tradeoff { p_win, fidelity })
}

/// Haar-sampled estimate of the same pair with standard errors.
pub fn hemisphere_monte_carlo(
    c: &ChoiInstrument,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(Tradeoff, [f64; 2])> {
    check_shape(c)?;
    if samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let (mut sp, mut sp2, mut sf, mut sf2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let psi = haar_ket(2, rng);
        let rho = HermOp::ket_bra(&psi);
        let outs: Vec<_> = c
            .etas()
            .iter()
            .map(|e| HermOp::symmetrized(choi_map(e, rho.matrix())))
            .collect();
        let a = if psi[0].norm_sqr() >= 0.5 { 0 } else { 1 };
        let p = outs[a].trace();
        let f = (&outs[0] + &outs[1]).dot(&rho);
        sp += p;
        sp2 += p * p;
        sf += f;
        sf2 += f * f;
    }
    let n = samples as f64;
    let se = |s: f64, s2: f64| ((s2 / n - (s / n).powi(2)).max(0.0) / (n - 1.0)).sqrt();
    Ok((
        Tradeoff {
            p_win: sp / n,
            fidelity: sf / n,
        },
        [se(sp, sp2), se(sf, sf2)],
    ))
}

/// (F_PI, F_Q) at a given success probability.
pub fn pi_tradeoff_curves(p_win: f64) -> Result<(f64, f64)> {
    if !(0.5..=0.75).contains(&p_win) {
        return Err(Error::Domain(format!("p_win {p_win} outside [1/2, 3/4]")));
    }
    let f_pi = (5.0 - 4.0 * p_win) / 3.0;
    let f_q = (2.0 + (16.0 * p_win * (1.0 - p_win) - 3.0).max(0.0).sqrt()) / 3.0;
    Ok((f_pi, f_q))
}

/// Trade-off point of the unsharp-Z instrument with sharpness γ.
pub fn unsharp_z_tradeoff(gamma: f64) -> Result<Tradeoff> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("sharpness {gamma} outside [0,1]")));
    }
    Ok(Tradeoff {
        p_win: 0.5 + gamma / 4.0,
        fidelity: 2.0 / 3.0 + ((1.0 - gamma) * (1.0 + gamma)).sqrt() / 3.0,
    })
}

/// Octahedron of Bloch states, ±z first: a 3-design, so averages of
/// quadratic expressions match the Haar average.
pub fn octahedron_states() -> Vec<HermOp> {
    [
        [0., 0., 1.],
        [0., 0., -1.],
        [1., 0., 0.],
        [-1., 0., 0.],
        [0., 1., 0.],
        [0., -1., 0.],
    ]
    .iter()
    .map(|n| bloch_state(*n))
    .collect()
}

/// Witness w_f·F + w_p·p_win over the octahedron states. Measurement y
/// tests for state y; p_win uses the ±z states with p_win =
/// 1/4 + (p(N|+z) + p(S|−z))/4.
pub fn hemisphere_witness(w_f: f64, w_p: f64) -> WitnessSpec {
    let states = octahedron_states();
    let measurements: Vec<Vec<HermOp>> = states
        .iter()
        .map(|s| vec![s.clone(), &HermOp::identity(2) - s])
        .collect();
    let mut w = WitnessSpec::zeros(2, 2, 2, states, measurements);
    for x in 0..6 {
        for a in 0..2 {
            w.add(a, 0, x, x, w_f / 6.0);
        }
    }
    for x in 0..2 {
        for a in 0..2 {
            let c = 1.0 / 8.0 + if a == x { 0.25 } else { 0.0 };
            for b in 0..2 {
                w.add(a, b, x, 0, w_p * c);
            }
        }
    }
    w
}

/// Largest average fidelity of a qubit PI at the given success probability.
pub fn pi_fidelity_at(p_win: f64) -> Result<f64> {
    if !(0.5..=0.75).contains(&p_win) {
        return Err(Error::Domain(format!("p_win {p_win} outside [1/2, 3/4]")));
    }
    witness_pi_max_at(
        &hemisphere_witness(1.0, 0.0),
        &hemisphere_witness(0.0, 1.0),
        p_win,
    )
}
