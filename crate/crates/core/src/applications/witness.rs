//! Linear witnesses of non-projectivity and their PI bounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conic::{AffExpr, ConicProblem, SolverSettings};
use crate::error::{Error, Result};
use crate::instruments::{check_density, rank_vectors, ChoiInstrument, RankVector};
use crate::matcore::{tensor, HermOp};
use crate::simulability::{add_pi_variables, SchmidtTest};

/// W = Σ c_{abxy} p(a,b|x,y) with p(a,b|x,y) = tr(I_a(ψ_x) N_{b|y}).
#[derive(Clone, Debug)]
pub struct WitnessSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub n_outcomes: usize,
    pub states: Vec<HermOp>,
    /// measurements[y][b]
    pub measurements: Vec<Vec<HermOp>>,
    /// Row-major over (a, b, x, y).
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessBound {
    pub beta: f64,
    pub per_rank: BTreeMap<RankVector, f64>,
    /// False when the Schmidt-number constraint is only a relaxation.
    pub exact: bool,
}

impl WitnessSpec {
    pub fn zeros(
        d_in: usize,
        d_out: usize,
        n_outcomes: usize,
        states: Vec<HermOp>,
        measurements: Vec<Vec<HermOp>>,
    ) -> Self {
        let nb = measurements.first().map_or(0, |m| m.len());
        let len = n_outcomes * nb * states.len() * measurements.len();
        Self {
            d_in,
            d_out,
            n_outcomes,
            states,
            measurements,
            coefficients: vec![0.0; len],
        }
    }

    pub fn n_b(&self) -> usize {
        self.measurements.first().map_or(0, |m| m.len())
    }

    fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((a * self.n_b() + b) * self.states.len() + x) * self.measurements.len() + y
    }

    pub fn coefficient(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.coefficients[self.index(a, b, x, y)]
    }

    pub fn set(&mut self, a: usize, b: usize, x: usize, y: usize, c: f64) {
        let i = self.index(a, b, x, y);
        self.coefficients[i] = c;
    }

    pub fn add(&mut self, a: usize, b: usize, x: usize, y: usize, c: f64) {
        let i = self.index(a, b, x, y);
        self.coefficients[i] += c;
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outcomes == 0 || self.states.is_empty() || self.measurements.is_empty() {
            return Err(Error::Domain(
                "witness needs outcomes, states and measurements".into(),
            ));
        }
        for s in &self.states {
            check_density(s, self.d_in)?;
        }
        let nb = self.n_b();
        for (y, m) in self.measurements.iter().enumerate() {
            if m.len() != nb {
                return Err(Error::Domain(format!(
                    "measurement {y} has {} outcomes, expected {nb}",
                    m.len()
                )));
            }
            let mut total = HermOp::zeros(self.d_out);
            for e in m {
                if e.dim() != self.d_out {
                    return Err(Error::Dimension(format!(
                        "measurement {y} acts on C^{}",
                        e.dim()
                    )));
                }
                if e.min_eigenvalue() < -1e-9 {
                    return Err(Error::Domain(format!(
                        "measurement {y} has a negative effect"
                    )));
                }
                total = &total + e;
            }
            if total.max_abs_diff(&HermOp::identity(self.d_out)) > 1e-9 {
                return Err(Error::Domain(format!("measurement {y} is not complete")));
            }
        }
        if self.coefficients.len()
            != self.n_outcomes * nb * self.states.len() * self.measurements.len()
        {
            return Err(Error::Dimension(
                "coefficient tensor has the wrong size".into(),
            ));
        }
        Ok(())
    }

    /// G_a = Σ_{b,x,y} c_{abxy} d (N_{b|y} ⊗ ψ_xᵀ), so that W = Σ_a tr(G_a η_a).
    pub fn operators(&self) -> Vec<HermOp> {
        let d = self.d_in as f64;
        (0..self.n_outcomes)
            .map(|a| {
                let mut g = HermOp::zeros(self.d_out * self.d_in);
                for (y, m) in self.measurements.iter().enumerate() {
                    for (b, n) in m.iter().enumerate() {
                        for (x, psi) in self.states.iter().enumerate() {
                            let c = self.coefficient(a, b, x, y);
                            if c != 0.0 {
                                g = &g + &tensor(n, &psi.transpose()).scale(c * d);
                            }
                        }
                    }
                }
                g
            })
            .collect()
    }

    /// Witness value of a given instrument.
    pub fn value(&self, c: &ChoiInstrument) -> Result<f64> {
        if c.n_outcomes() != self.n_outcomes || c.d_in() != self.d_in || c.d_out() != self.d_out {
            return Err(Error::Dimension(
                "instrument does not fit the witness".into(),
            ));
        }
        Ok(self
            .operators()
            .iter()
            .zip(c.etas())
            .map(|(g, e)| g.dot(e.op()))
            .sum())
    }

    fn schmidt(&self) -> (SchmidtTest, bool) {
        if self.d_in == 2 {
            (SchmidtTest::Ppt, self.d_out <= 3)
        } else {
            (SchmidtTest::Reduction, self.d_in.min(self.d_out) <= 1)
        }
    }
}

fn objective(etas: &[AffExpr], ops: &[HermOp]) -> AffExpr {
    etas.iter()
        .zip(ops)
        .fold(AffExpr::zero(1), |acc, (e, g)| acc.add(&e.inner(g)))
}

/// PI bound of a witness: the maximum over rank vectors of the per-rank
/// program value.
pub fn witness_pi_bound(w: &WitnessSpec) -> Result<WitnessBound> {
    w.validate()?;
    let (schmidt, exact) = w.schmidt();
    let ops = w.operators();
    let settings = SolverSettings::default();
    let mut per_rank = BTreeMap::new();
    for r in rank_vectors(w.d_in, w.n_outcomes) {
        let mut p = ConicProblem::new();
        let vars = add_pi_variables(&mut p, w.d_in, w.d_out, w.n_outcomes, schmidt, Some(&r))?;
        if ops.iter().all(|g| g.frobenius_norm() == 0.0) {
            per_rank.insert(r, 0.0);
            continue;
        }
        let obj = objective(&vars.etas, &ops);
        p.maximize(obj);
        let sol = p.solve(&settings)?;
        if !sol.is_optimal() {
            return Err(Error::Solver(format!(
                "witness program for {r} ended with {:?}",
                sol.status
            )));
        }
        per_rank.insert(r, sol.objective);
    }
    let beta = per_rank.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WitnessBound {
        beta,
        per_rank,
        exact,
    })
}

/// Largest value of `objective` over PIs whose value of `constraint`
/// equals `level`. Rank vectors are mixed, so this is one joint program.
pub fn witness_pi_max_at(
    objective_spec: &WitnessSpec,
    constraint: &WitnessSpec,
    level: f64,
) -> Result<f64> {
    objective_spec.validate()?;
    constraint.validate()?;
    if objective_spec.d_in != constraint.d_in
        || objective_spec.d_out != constraint.d_out
        || objective_spec.n_outcomes != constraint.n_outcomes
    {
        return Err(Error::Dimension(
            "objective and constraint witnesses differ in shape".into(),
        ));
    }
    let w = objective_spec;
    let (schmidt, _) = w.schmidt();
    let mut p = ConicProblem::new();
    let vars = add_pi_variables(&mut p, w.d_in, w.d_out, w.n_outcomes, schmidt, None)?;
    let obj = objective(&vars.etas, &w.operators());
    let con = objective(&vars.etas, &constraint.operators());
    p.eq(con, &AffExpr::scalar(level));
    p.maximize(obj);
    let sol = p.solve(&SolverSettings::default())?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!(
            "constrained witness program ended with {:?}",
            sol.status
        )));
    }
    Ok(sol.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::bloch_state;

    fn z_spec() -> WitnessSpec {
        let states = vec![bloch_state([0., 0., 1.]), bloch_state([0., 0., -1.])];
        let trivial = vec![vec![HermOp::identity(2), HermOp::zeros(2)]];
        WitnessSpec::zeros(2, 2, 2, states, trivial)
    }

    #[test]
    fn zero_witness_has_zero_bound() {
        let b = witness_pi_bound(&z_spec()).unwrap();
        assert_eq!(b.beta, 0.0);
        assert_eq!(b.per_rank.len(), 3);
    }

    #[test]
    fn marginal_correlator_bound_is_two() {
        // ⟨A⟩_{+z} − ⟨A⟩_{−z} for the ±1 outcome observable A.
        let mut w = z_spec();
        for a in 0..2 {
            let s = if a == 0 { 1.0 } else { -1.0 };
            w.set(a, 0, 0, 0, s);
            w.set(a, 0, 1, 0, -s);
        }
        let b = witness_pi_bound(&w).unwrap();
        assert!((b.beta - 2.0).abs() < 1e-6, "{}", b.beta);
        let sharp = crate::instruments::kraus_to_choi(&crate::instruments::unsharp_z(1.0).unwrap())
            .unwrap();
        assert!((w.value(&sharp).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_measurement_rejected() {
        let mut w = z_spec();
        w.measurements[0][0] = HermOp::identity(2).scale(0.5);
        assert!(w.validate().is_err());
    }
}
