//! Python bindings: instruments, visibility programs, closed forms and the
//! sequential CHSH seesaw.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use instrasim::analytic;
use instrasim::applications::hemisphere;
use instrasim::applications::seesaw::{seesaw_sequential_chsh, SeesawSettings};
use instrasim::instruments::{self as inst, NoiseModel};
use instrasim::simulability::{self as sim, SimStatus};

fn to_py(e: instrasim::Error) -> PyErr {
    match e {
        instrasim::Error::Solver(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Quantum instrument in Choi form.
#[pyclass(name = "ChoiInstrument", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyChoiInstrument {
    pub inner: inst::ChoiInstrument,
}

#[pymethods]
impl PyChoiInstrument {
    /// Lüders instrument of the unsharp d-outcome basis measurement.
    #[staticmethod]
    fn luders(d: usize, gamma: f64) -> PyResult<Self> {
        let k = inst::luders_unsharp(d, gamma).map_err(to_py)?;
        Ok(Self {
            inner: inst::kraus_to_choi(&k).map_err(to_py)?,
        })
    }

    /// Qubit SIC instrument.
    #[staticmethod]
    fn sic() -> PyResult<Self> {
        Ok(Self {
            inner: inst::kraus_to_choi(&inst::sic_instrument()).map_err(to_py)?,
        })
    }

    /// Noise instrument: "dephasing" or "white".
    #[staticmethod]
    fn noise(kind: &str, n_outcomes: usize, d: usize) -> PyResult<Self> {
        let model = match kind {
            "dephasing" => NoiseModel::Dephasing,
            "white" => NoiseModel::White,
            _ => return Err(PyValueError::new_err(format!("unknown noise `{kind}`"))),
        };
        Ok(Self {
            inner: inst::noise_instrument(&model, n_outcomes, d, d).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: inst::ChoiInstrument::from_json(s).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn d_in(&self) -> usize {
        self.inner.d_in()
    }

    #[getter]
    fn d_out(&self) -> usize {
        self.inner.d_out()
    }

    #[getter]
    fn n_outcomes(&self) -> usize {
        self.inner.n_outcomes()
    }

    /// Choi operators as nested lists of complex numbers.
    fn etas(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.etas().iter().map(|e| rows(e.matrix())).collect()
    }

    /// Induced POVM M_a = d·tr_{A'}(η_a)ᵀ.
    fn povm(&self) -> Vec<Vec<Vec<Complex64>>> {
        inst::induced_povm(&self.inner)
            .iter()
            .map(|m| rows(m.matrix()))
            .collect()
    }

    /// vη + (1 − v)η_noise.
    fn mix(&self, noise: &PyChoiInstrument, v: f64) -> PyResult<Self> {
        Ok(Self {
            inner: inst::mix(&self.inner, &noise.inner, v).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ChoiInstrument(d_in={}, d_out={}, n_outcomes={})",
            self.d_in(),
            self.d_out(),
            self.n_outcomes()
        )
    }
}

fn rows(m: &instrasim::matcore::CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn status_name(s: SimStatus) -> &'static str {
    match s {
        SimStatus::Feasible => "feasible",
        SimStatus::Infeasible => "infeasible",
        SimStatus::Optimal => "optimal",
        SimStatus::NumericalTrouble => "numerical-trouble",
    }
}

/// PI membership of a qubit-input instrument: "feasible" or "infeasible".
#[pyfunction]
fn qubit_pi_feasible(c: &PyChoiInstrument) -> PyResult<&'static str> {
    Ok(status_name(
        sim::qubit_pi_feasible(&c.inner).map_err(to_py)?.status,
    ))
}

/// Critical visibility against a fixed noise instrument. Qubit inputs use
/// the exact PPT program unless `relaxed` is set.
#[pyfunction]
#[pyo3(signature = (c, noise, relaxed = false))]
fn critical_visibility(
    c: &PyChoiInstrument,
    noise: &PyChoiInstrument,
    relaxed: bool,
) -> PyResult<f64> {
    let r = if c.inner.d_in() == 2 && !relaxed {
        sim::qubit_critical_visibility(&c.inner, &noise.inner)
    } else {
        sim::relaxed_critical_visibility(&c.inner, &noise.inner)
    }
    .map_err(to_py)?;
    visibility_of(r)
}

/// Critical visibility against the least favourable noise.
#[pyfunction]
fn worst_case_visibility(c: &PyChoiInstrument) -> PyResult<f64> {
    visibility_of(sim::worst_case_visibility(&c.inner).map_err(to_py)?)
}

fn visibility_of(r: sim::SimResult) -> PyResult<f64> {
    match (r.status, r.visibility) {
        (SimStatus::Optimal, Some(v)) => Ok(v),
        (s, _) => Err(PyRuntimeError::new_err(format!(
            "visibility program ended with {}",
            status_name(s)
        ))),
    }
}

#[pyfunction]
fn v_deph_qubit(gamma: f64) -> PyResult<f64> {
    analytic::v_deph_qubit(gamma).map_err(to_py)
}

#[pyfunction]
fn v_worst_qubit(gamma: f64) -> PyResult<f64> {
    analytic::v_worst_qubit(gamma).map_err(to_py)
}

#[pyfunction]
fn v_white_qubit(gamma: f64) -> PyResult<f64> {
    analytic::v_white_qubit(gamma).map_err(to_py)
}

#[pyfunction]
fn v_deph_highd_bound(d: usize, gamma: f64) -> PyResult<f64> {
    analytic::v_deph_highd_bound(d, gamma).map_err(to_py)
}

#[pyfunction]
fn v_worst_highd(d: usize, gamma: f64) -> PyResult<f64> {
    analytic::v_worst_highd(d, gamma).map_err(to_py)
}

/// (p_win, fidelity) of a two-outcome qubit instrument.
#[pyfunction]
fn hemisphere_tradeoff(c: &PyChoiInstrument) -> PyResult<(f64, f64)> {
    let t = hemisphere::hemisphere_tradeoff(&c.inner).map_err(to_py)?;
    Ok((t.p_win, t.fidelity))
}

/// (F_PI, F_Q) at a success probability.
#[pyfunction]
fn pi_tradeoff_curves(p_win: f64) -> PyResult<(f64, f64)> {
    hemisphere::pi_tradeoff_curves(p_win).map_err(to_py)
}

/// Sequential CHSH seesaw; returns the JSON report as a string.
#[pyfunction]
#[pyo3(signature = (floor, restarts = 25, seed = 2024, max_rounds = 200, tol = 1e-6))]
fn seesaw(
    py: Python<'_>,
    floor: f64,
    restarts: usize,
    seed: u64,
    max_rounds: usize,
    tol: f64,
) -> PyResult<String> {
    let settings = SeesawSettings {
        restarts,
        max_rounds,
        tol,
    };
    let report = py
        .detach(|| seesaw_sequential_chsh(floor, &settings, seed))
        .map_err(to_py)?;
    Ok(report.to_json_value().to_string())
}

#[pymodule]
pub fn instrasim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChoiInstrument>()?;
    m.add_function(wrap_pyfunction!(qubit_pi_feasible, m)?)?;
    m.add_function(wrap_pyfunction!(critical_visibility, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_visibility, m)?)?;
    m.add_function(wrap_pyfunction!(v_deph_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(v_worst_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(v_white_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(v_deph_highd_bound, m)?)?;
    m.add_function(wrap_pyfunction!(v_worst_highd, m)?)?;
    m.add_function(wrap_pyfunction!(hemisphere_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(pi_tradeoff_curves, m)?)?;
    m.add_function(wrap_pyfunction!(seesaw, m)?)?;
    Ok(())
}
