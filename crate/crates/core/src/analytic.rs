//! Closed-form visibilities and explicit models: qubit visibilities for
//! dephasing, worst-case and white noise, the high-dimensional dephasing
//! bound with its dual certificate, the dephasing and worst-case PI models,
//! and the characteristic-polynomial check of the dual constraints.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::{rank_vectors, ChoiInstrument, RankVector};
use crate::matcore::{BipartiteOp, CMat, HermOp, C64};
use crate::simulability::DualCertificate;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
        return Err(Error::Domain(format!("sharpness {gamma} outside [0,1]")));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension {d} < 2")));
    }
    Ok(())
}

/// √(1−γ²) evaluated as √((1−γ)(1+γ)).
fn co(gamma: f64) -> f64 {
    ((1.0 - gamma) * (1.0 + gamma)).max(0.0).sqrt()
}

fn ket_index(d: usize, i: usize, j: usize) -> usize {
    i * d + j
}

/// |ij⟩⟨kl| on C^d ⊗ C^d added with weight w.
fn add_entry(m: &mut CMat, d: usize, (i, j): (usize, usize), (k, l): (usize, usize), w: f64) {
    m[(ket_index(d, i, j), ket_index(d, k, l))] += C64::new(w, 0.0);
}

fn bip(m: CMat, d: usize) -> BipartiteOp {
    BipartiteOp::new(HermOp::symmetrized(m), d, d).expect("square operator of matching size")
}

pub fn v_deph_qubit(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 / (gamma + co(gamma)))
}

/// Internals of the qubit worst-case model: weight of the rank-(1,1)
/// vectors and the noise entries x1, x2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitWorstCase {
    pub v: f64,
    pub q11: f64,
    pub x1: f64,
    pub x2: f64,
}

pub fn v_worst_qubit(gamma: f64) -> Result<f64> {
    Ok(v_worst_qubit_model(gamma)?.v)
}

pub fn v_worst_qubit_model(gamma: f64) -> Result<QubitWorstCase> {
    check_gamma(gamma)?;
    let s = co(gamma);
    let v = 1.0 / (-s + 2.0 * ((1.0 - gamma) * (1.0 - s)).max(0.0).sqrt() - gamma + 2.0);
    let q11 = ((gamma - s) * v + 1.0) / 2.0;
    let (x1, x2) = if 1.0 - v > 1e-12 {
        (
            (3.0 - (s + gamma + 2.0) * v) / (8.0 * (1.0 - v)),
            ((s + gamma - 2.0) * v + 1.0) / (8.0 * (1.0 - v)),
        )
    } else {
        (0.25, 0.0)
    };
    Ok(QubitWorstCase { v, q11, x1, x2 })
}

/// Noise and simulating operators of the qubit worst-case model, outcome
/// by outcome: (η^noise_a, σ_{a|(1,1)}, σ_{a|(2,0)/(0,2)}).
pub fn qubit_worst_case_operators(
    m: &QubitWorstCase,
) -> Vec<(BipartiteOp, BipartiteOp, BipartiteOp)> {
    let c = -(m.x1 * m.x2).max(0.0).sqrt();
    (0..2)
        .map(|a| {
            let (p, q) = if a == 0 { (m.x1, m.x2) } else { (m.x2, m.x1) };
            let mut n = CMat::zeros(4, 4);
            n[(0, 0)] = C64::new(p, 0.0);
            n[(3, 3)] = C64::new(q, 0.0);
            n[(0, 3)] = C64::new(c, 0.0);
            n[(3, 0)] = C64::new(c, 0.0);
            let mut sep = CMat::zeros(4, 4);
            add_entry(&mut sep, 2, (a, a), (a, a), m.q11 / 2.0);
            let mut ent = CMat::zeros(4, 4);
            for i in 0..2 {
                for j in 0..2 {
                    add_entry(&mut ent, 2, (i, i), (j, j), (1.0 - m.q11) / 4.0);
                }
            }
            (bip(n, 2), bip(sep, 2), bip(ent, 2))
        })
        .collect()
}

/// Coefficients of the degree-8 white-noise polynomial, constant term first.
pub fn white_noise_polynomial(gamma: f64) -> [f64; 9] {
    let g = gamma;
    let p = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &x| acc * g + x);
    [
        1.0,
        p(&[9.0, 15.0]),
        p(&[53.0, 79.0, 56.0]),
        p(&[77.0, -437.0, 64.0, 656.0]),
        p(&[-29.0, 795.0, 888.0, -1552.0, -1536.0]),
        p(&[-1061.0, 1645.0, 3328.0, -8480.0, -3520.0, 5568.0]),
        p(&[1575.0, -4787.0, 3176.0, -992.0, 832.0, 10432.0, -1024.0]),
        p(&[
            -625.0, 3065.0, -9280.0, -1392.0, 20160.0, -1728.0, -14336.0, -4096.0,
        ]),
        p(&[
            0.0, -375.0, 1768.0, -4624.0, 448.0, 18496.0, -17408.0, -12288.0, 16384.0,
        ]),
    ]
}

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Real roots of a polynomial (constant term first) via the eigenvalues of
/// its companion matrix, each refined by Newton steps.
pub fn real_roots(coeffs: &[f64], imag_tol: f64) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && c.last().map_or(false, |x| x.abs() <= 1e-14 * scale) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let comp = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let dc = poly_deriv(&c);
    let mut roots: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..3 {
                let dp = poly_eval(&dc, x);
                if dp == 0.0 {
                    break;
                }
                let step = poly_eval(&c, x) / dp;
                x -= step;
                if step.abs() <= 1e-16 * (1.0 + x.abs()) {
                    break;
                }
            }
            x
        })
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Critical white-noise visibility of the qubit unsharp-Z instrument: the
/// largest root in [0, 1] of the degree-8 polynomial.
pub fn v_white_qubit(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "white-noise formula needs γ in (0,1), got {gamma}"
        )));
    }
    let p = white_noise_polynomial(gamma);
    let roots = real_roots(&p, 1e-7);
    roots
        .iter()
        .copied()
        .filter(|&x| (-1e-9..=1.0 + 1e-9).contains(&x))
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .map(|x| x.clamp(0.0, 1.0))
        .ok_or_else(|| {
            Error::Domain(format!(
                "no real root in [0,1] at γ={gamma}; real roots {roots:?}"
            ))
        })
}

/// Parameters y_i, z_i of the qubit white-noise model rebuilt from the
/// closed-form relations, with diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhiteNoiseParams {
    pub gamma: f64,
    pub v: f64,
    pub y: [f64; 4],
    pub z: [f64; 3],
    /// Value of the y_2 equation at the chosen y_2.
    pub equation_residual: f64,
    /// Largest entry of Σ_r σ_{a|r} − (vη_a + (1−v)I/8).
    pub simulation_residual: f64,
    pub valid: bool,
    pub diagnostics: Vec<String>,
}

fn white_y2_equation(x: f64, g: f64, v: f64) -> f64 {
    let a = 64.0 * x * x
        - v * (32.0 * 2f64.sqrt() * (x * (g * g - 1.0) * (v - 1.0)).max(0.0).sqrt()
            + 16.0 * g * g * v
            - 17.0 * v
            + 2.0)
        - 16.0 * x * (v - 1.0)
        + 1.0;
    let b = 64.0 * x * x + 16.0 * x * (4.0 * g * v + 1.0 - v) + (4.0 * g * v + v - 1.0).powi(2);
    a.max(0.0).sqrt() + b.max(0.0).sqrt() - 2.0 * (1.0 + v)
}

/// Golden-section minimization on [lo, hi].
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Rebuilds the white-noise model parameters. The y_2 equation touches zero
/// at a double root, located as the minimum of its left-hand side over
/// [0, (1−v)/8] after a coarse scan.
pub fn white_noise_parameters(gamma: f64) -> Result<WhiteNoiseParams> {
    let v = v_white_qubit(gamma)?;
    let g = gamma;
    let hi = (1.0 - v) / 8.0;
    let f = |x: f64| white_y2_equation(x, g, v).abs();
    let n = 400;
    let best = (0..=n)
        .map(|k| hi * k as f64 / n as f64)
        .fold((0.0, f64::INFINITY), |acc, x| {
            let fx = f(x);
            if fx < acc.1 {
                (x, fx)
            } else {
                acc
            }
        });
    let step = hi / n as f64;
    let y2 = golden_min(f, (best.0 - step).max(0.0), (best.0 + step).min(hi), 1e-15);
    let equation_residual = white_y2_equation(y2, g, v);
    let xi = (64.0 * y2 * y2
        - v * (32.0 * 2f64.sqrt() * (y2 * (1.0 - g * g) * (1.0 - v)).max(0.0).sqrt()
            + 16.0 * g * g * v
            - 17.0 * v
            + 2.0)
        - 16.0 * y2 * (v - 1.0)
        + 1.0)
        .max(0.0)
        .sqrt();
    let y1 = (xi + 8.0 * y2 + 4.0 * g * v + 3.0 * v + 1.0) / 16.0;
    let y4 = (xi - 8.0 * y2 - 4.0 * g * v + v + 3.0) / 16.0;
    let z1 = (xi - 8.0 * y2 - v + 1.0) / 16.0;
    let y3 = (1.0 - v) / 8.0;
    let z2 = (1.0 - 8.0 * y2 - v) / 8.0;
    let z3 = 0.5 - (y1 + y2 + y3 + y4 + z1 + z2);
    let y = [y1, y2, y3, y4];
    let z = [z1, z2, z3];

    let mut diagnostics = Vec::new();
    if equation_residual.abs() > 1e-6 {
        diagnostics.push(format!("y2 equation residual {equation_residual:.3e}"));
    }
    for (name, x) in ["y1", "y2", "y3", "y4", "z1", "z2", "z3"]
        .iter()
        .zip(y.iter().chain(z.iter()))
    {
        if *x < -1e-9 {
            diagnostics.push(format!("{name} = {x:.6e} is negative"));
        }
    }
    let simulation_residual = white_simulation_residual(g, v, &y, &z);
    if !(simulation_residual < 1e-6) {
        diagnostics.push(format!("simulation residual {simulation_residual:.3e}"));
    }
    Ok(WhiteNoiseParams {
        gamma,
        v,
        y,
        z,
        equation_residual,
        simulation_residual,
        valid: diagnostics.is_empty(),
        diagnostics,
    })
}

fn white_simulation_residual(g: f64, v: f64, y: &[f64; 4], z: &[f64; 3]) -> f64 {
    let sq = |x: f64| x.max(0.0).sqrt();
    let r = |d: [f64; 4], off: f64| {
        let mut m = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_row_slice(&d));
        m[(0, 3)] = off;
        m[(3, 0)] = off;
        m
    };
    let s1 =
        r([y[0], y[1], y[2], y[3]], sq(y[1] * y[2])) + r([z[0], z[1], 0.0, z[2]], sq(z[0] * z[2]));
    let s2 =
        r([y[3], y[2], y[1], y[0]], sq(y[1] * y[2])) + r([z[2], 0.0, z[1], z[0]], sq(z[0] * z[2]));
    let c = co(g);
    let t = |a: usize| {
        let (p, q) = if a == 0 {
            ((1.0 + g) / 4.0, (1.0 - g) / 4.0)
        } else {
            ((1.0 - g) / 4.0, (1.0 + g) / 4.0)
        };
        r(
            [
                v * p + (1.0 - v) / 8.0,
                (1.0 - v) / 8.0,
                (1.0 - v) / 8.0,
                v * q + (1.0 - v) / 8.0,
            ],
            v * c / 4.0,
        )
    };
    let e1 = (s1 - t(0)).abs().max();
    let e2 = (s2 - t(1)).abs().max();
    if e1.is_nan() || e2.is_nan() {
        f64::INFINITY
    } else {
        e1.max(e2)
    }
}

/// Upper bound on the critical dephasing visibility of the d-outcome Lüders
/// instrument, 2(d−1)/(d(1+γ+√((1−γ²)(d−1)))−2).
pub fn v_deph_highd_bound(d: usize, gamma: f64) -> Result<f64> {
    check_dim(d)?;
    check_gamma(gamma)?;
    let df = d as f64;
    Ok(2.0 * (df - 1.0) / (df * (1.0 + gamma + co(gamma) * (df - 1.0).sqrt()) - 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub v: f64,
    /// γ ≥ (d−2)/d, equivalently β ≥ 0.
    pub valid: bool,
    /// α, β, δ all nonnegative, so the model is an actual PI. Fails for
    /// every γ < 1 once d ≥ 4 because α turns negative.
    pub priors_nonnegative: bool,
}

/// φ+_j: the subnormalized maximally entangled state orthogonal to |j⟩,
/// or φ+ itself when `skip` is None.
fn phi_plus_without(d: usize, skip: Option<usize>) -> CMat {
    let mut m = CMat::zeros(d * d, d * d);
    for i in (0..d).filter(|&i| Some(i) != skip) {
        for k in (0..d).filter(|&k| Some(k) != skip) {
            add_entry(&mut m, d, (i, i), (k, k), 1.0 / d as f64);
        }
    }
    m
}

fn projector_aa(d: usize, a: usize) -> CMat {
    let mut m = CMat::zeros(d * d, d * d);
    add_entry(&mut m, d, (a, a), (a, a), 1.0);
    m
}

/// Three-class PI model simulating the dephasing-noise Lüders instrument
/// at the bound visibility. `valid` is false when γ < (d−2)/d; the
/// simulation identity itself holds for every (d, γ).
pub fn dephasing_pi_model(d: usize, gamma: f64) -> Result<(DephasingModelParams, ChoiInstrument)> {
    check_dim(d)?;
    check_gamma(gamma)?;
    let df = d as f64;
    let c = co(gamma);
    let s = (df - 1.0).sqrt();
    let den = c * df * df + df * (-c + gamma * s + s) - 2.0 * s;
    let alpha =
        (-3.0 * c - c * df * df + df * (4.0 * c - gamma * s + s) + 2.0 * gamma * s - 2.0 * s) / den;
    let beta = (df - 1.0) * (2.0 * s - c * df) / den;
    let delta = (-c + c * df + gamma * s - s) / den;
    let v = (2.0 * (df - 1.0) * s / den).min(1.0);
    let tol = 1e-12;
    let valid = gamma >= (df - 2.0) / df - tol;
    let priors_nonnegative = alpha >= -tol && beta >= -tol && delta >= -tol;
    let phi = phi_plus_without(d, None);
    let etas = (0..d)
        .map(|a| {
            let mut m = &phi * C64::new(alpha, 0.0);
            m += projector_aa(d, a) * C64::new(beta / df + delta * (df - 1.0) / df, 0.0);
            for k in (0..d).filter(|&k| k != a) {
                m += phi_plus_without(d, Some(k)) * C64::new(delta, 0.0);
            }
            bip(m, d)
        })
        .collect();
    Ok((
        DephasingModelParams {
            alpha,
            beta,
            delta,
            v,
            valid,
            priors_nonnegative,
        },
        ChoiInstrument::unchecked(etas)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
    pub v: f64,
    pub valid: bool,
}

/// Visibility reached by the worst-case high-dimensional model.
pub fn v_worst_highd(d: usize, gamma: f64) -> Result<f64> {
    check_dim(d)?;
    check_gamma(gamma)?;
    let df = d as f64;
    let r = co(gamma) * (df - 1.0).sqrt();
    let inner = df * (1.0 - gamma) * ((gamma + 1.0) * df - 2.0 * (gamma + r));
    Ok(((df - 1.0) / (-gamma - r + inner.max(0.0).sqrt() + df)).min(1.0))
}

/// Two-class PI model μ_a = αφ+ + β|aa⟩⟨aa| and the noise it tolerates.
/// Returns the parameters, the model Choi operators and the noise.
pub fn worst_case_pi_model(
    d: usize,
    gamma: f64,
) -> Result<(WorstCaseModelParams, ChoiInstrument, ChoiInstrument)> {
    let v = v_worst_highd(d, gamma)?;
    let df = d as f64;
    let r = co(gamma) * (df - 1.0).sqrt();
    let alpha = (v * r + (df - 1.0) * (1.0 - v * gamma)) / (2.0 * df * (df - 1.0));
    let beta = (-v * r + (df - 1.0) * (1.0 + v * gamma)) / (2.0 * df * (df - 1.0));
    let (x1, x2) = if 1.0 - v > 1e-12 {
        (
            (-v * r - v * gamma + df * (1.0 - v) + 1.0) / (2.0 * df * df * (1.0 - v)),
            (v * r + v * gamma + df * (1.0 - v) - 1.0) / (2.0 * (df - 1.0) * df * df * (1.0 - v)),
        )
    } else {
        (1.0 / df, 0.0)
    };
    let tol = 1e-9;
    let valid = alpha >= -tol && beta >= -tol && x1 >= -tol && x2 >= -tol;
    let phi = phi_plus_without(d, None);
    let mut model = Vec::with_capacity(d);
    let mut noise = Vec::with_capacity(d);
    let c = (x1 * x2).max(0.0).sqrt();
    for a in 0..d {
        model.push(bip(
            &phi * C64::new(alpha, 0.0) + projector_aa(d, a) * C64::new(beta, 0.0),
            d,
        ));
        let mut n = projector_aa(d, a) * C64::new(x1, 0.0);
        for j in (0..d).filter(|&j| j != a) {
            add_entry(&mut n, d, (a, a), (j, j), -c);
            add_entry(&mut n, d, (j, j), (a, a), -c);
            for l in (0..d).filter(|&l| l != a) {
                add_entry(&mut n, d, (j, j), (l, l), x2);
            }
        }
        noise.push(bip(n, d));
    }
    Ok((
        WorstCaseModelParams {
            alpha,
            beta,
            x1,
            x2,
            v,
            valid,
        },
        ChoiInstrument::unchecked(model)?,
        ChoiInstrument::unchecked(noise)?,
    ))
}

/// Coefficients (α, s') of the dual feasible point; β = −2α.
pub fn dual_point_coefficients(d: usize, gamma: f64) -> Result<(f64, f64)> {
    check_dim(d)?;
    check_gamma(gamma)?;
    let df = d as f64;
    let den = (df - 2.0) + df * gamma + df * (co(gamma) * co(gamma) * (df - 1.0)).sqrt();
    Ok((-df / den, df * df / den))
}

fn dual_w(d: usize, a: usize, alpha: f64) -> CMat {
    let beta = -2.0 * alpha;
    let mut w = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            if (i, j) != (a, a) {
                add_entry(&mut w, d, (i, j), (i, j), beta);
            }
        }
    }
    for j in (0..d).filter(|&j| j != a) {
        add_entry(&mut w, d, (j, j), (a, a), alpha);
        add_entry(&mut w, d, (a, a), (j, j), alpha);
    }
    w
}

fn dual_b(r: &RankVector, alpha: f64) -> HermOp {
    let c: Vec<f64> = r
        .ranks()
        .iter()
        .map(|&rl| alpha * (rl as f64 - 1.0))
        .collect();
    HermOp::diag(&c)
}

/// Dual feasible point of the reduction-map program for the d-outcome
/// Lüders instrument with dephasing noise, over every rank vector with
/// N = d entries. Its bound equals `v_deph_highd_bound`.
pub fn dual_feasible_point(d: usize, gamma: f64) -> Result<DualCertificate> {
    let (alpha, s) = dual_point_coefficients(d, gamma)?;
    let z = bip(phi_plus_without(d, None) * C64::new(s, 0.0), d);
    let mut cert = DualCertificate {
        w: (0..d).map(|a| bip(dual_w(d, a, alpha), d)).collect(),
        b: BTreeMap::new(),
        z: BTreeMap::new(),
        t: BTreeMap::new(),
        bound: 0.0,
    };
    for r in rank_vectors(d, d) {
        cert.b.insert(r.clone(), dual_b(&r, alpha));
        for a in 0..d {
            cert.z.insert((a, r.clone()), z.clone());
            cert.t.insert((a, r.clone()), 0.0);
        }
    }
    cert.bound = v_deph_highd_bound(d, gamma)?;
    Ok(cert)
}

/// O_{a,r} = W_a + (s'/r_a)φ+ − (s'/d − α)I − α I⊗Σ_l r_l|l⟩⟨l| built
/// directly, without materializing a full certificate.
pub fn dual_constraint_operator(d: usize, gamma: f64, a: usize, r: &RankVector) -> Result<HermOp> {
    check_rank_vector(d, a, r)?;
    let (alpha, s) = dual_point_coefficients(d, gamma)?;
    let df = d as f64;
    let ra = r.ranks()[a] as f64;
    let mut o = dual_w(d, a, alpha) + phi_plus_without(d, None) * C64::new(s / ra, 0.0);
    for i in 0..d {
        for l in 0..d {
            let diag = -(s / df - alpha) - alpha * r.ranks()[l] as f64;
            add_entry(&mut o, d, (i, l), (i, l), diag);
        }
    }
    Ok(HermOp::symmetrized(o))
}

fn check_rank_vector(d: usize, a: usize, r: &RankVector) -> Result<()> {
    if r.ranks().len() != d || r.dim() != d {
        return Err(Error::Domain(format!(
            "rank vector {r} is not a composition of {d} into {d} parts"
        )));
    }
    if a >= d {
        return Err(Error::Domain(format!("outcome {a} out of range for d={d}")));
    }
    if r.ranks()[a] == 0 {
        return Err(Error::Domain(format!("outcome {a} has rank zero in {r}")));
    }
    Ok(())
}

/// Elementary symmetric sums e_0..e_m of the ranks with position `a` removed.
fn elementary_symmetric(r: &RankVector, a: usize) -> Vec<i128> {
    let others: Vec<i128> = r
        .ranks()
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != a)
        .map(|(_, &x)| x as i128)
        .collect();
    let mut e = vec![0i128; others.len() + 1];
    e[0] = 1;
    for (k, &x) in others.iter().enumerate() {
        for p in (1..=k + 1).rev() {
            e[p] += e[p - 1] * x;
        }
    }
    e
}

/// Exact integer coefficients A_0..A_d of the polynomial factor P of
/// det(O_{a,r} − λI) in the variable λ̃ = d r_a λ / s'.
pub fn char_poly_coeffs_exact(d: usize, a: usize, r: &RankVector) -> Result<Vec<i128>> {
    check_rank_vector(d, a, r)?;
    let e = elementary_symmetric(r, a);
    let s = |p: i64| -> i128 {
        if p < 0 || p >= d as i64 {
            0
        } else {
            e.get(p as usize).copied().unwrap_or(0)
        }
    };
    let ra = r.ranks()[a] as i128;
    let pow = |k: i64| -> i128 {
        if k < 0 {
            0
        } else {
            ra.pow(k as u32)
        }
    };
    Ok((0..=d as i64)
        .map(|n| {
            let sign = if (d as i64 + n) % 2 == 0 { 1 } else { -1 };
            let m = d as i64 - n;
            sign * (pow(m - 1) * (ra * ra - 2 * ra + (n as i128 + 1)) * s(m - 1) + pow(m) * s(m))
        })
        .collect())
}

pub fn char_poly_coeffs(d: usize, a: usize, r: &RankVector) -> Result<Vec<f64>> {
    Ok(char_poly_coeffs_exact(d, a, r)?
        .into_iter()
        .map(|x| x as f64)
        .collect())
}

/// Monic coefficients (constant first) of P obtained numerically: the
/// eigenvalues of O_{a,r} closest to the known roots s' r_j / d (each with
/// multiplicity d − 1) are removed and the remaining d are rescaled to λ̃.
pub fn char_poly_numeric(d: usize, gamma: f64, a: usize, r: &RankVector) -> Result<Vec<f64>> {
    let o = dual_constraint_operator(d, gamma, a, r)?;
    let (_, s) = dual_point_coefficients(d, gamma)?;
    let df = d as f64;
    let mut eig: Vec<f64> = o.eigenvalues().iter().map(|x| x / s).collect();
    for &rj in r.ranks() {
        let known = rj as f64 / df;
        for _ in 0..d - 1 {
            let (k, _) = eig
                .iter()
                .enumerate()
                .map(|(k, x)| (k, (x - known).abs()))
                .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
                .expect("enough eigenvalues remain");
            eig.swap_remove(k);
        }
    }
    let ra = r.ranks()[a] as f64;
    let roots: Vec<f64> = eig.iter().map(|x| df * ra * x).collect();
    let mut c = vec![1.0];
    for x in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= x * ck;
        }
        c = next;
    }
    Ok(c)
}

/// Largest relative deviation between the closed-form and the numeric
/// coefficients; each difference is scaled by max(|A_n|, 1).
pub fn char_poly_deviation(d: usize, gamma: f64, a: usize, r: &RankVector) -> Result<f64> {
    let exact = char_poly_coeffs(d, a, r)?;
    let lead = *exact.last().expect("degree d polynomial");
    let numeric = char_poly_numeric(d, gamma, a, r)?;
    Ok(exact
        .iter()
        .zip(&numeric)
        .map(|(x, y)| (x / lead - y).abs() / (x / lead).abs().max(1.0))
        .fold(0.0, f64::max))
}

/// True when every nonzero coefficient has sign (−1)^{d+n}.
pub fn descartes_signs_ok(d: usize, coeffs: &[i128]) -> bool {
    coeffs
        .iter()
        .enumerate()
        .all(|(n, &x)| x == 0 || (x > 0) == ((d + n) % 2 == 0))
}
