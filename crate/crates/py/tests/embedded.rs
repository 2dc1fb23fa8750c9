use instrasim_py::instrasim_py;
use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn bindings_work_from_python() {
    pyo3::append_to_inittab!(instrasim_py);
    Python::initialize();
    Python::attach(|py| {
        let locals = PyDict::new(py);
        py.run(
            c"
import instrasim_py as m
z = m.ChoiInstrument.luders(2, 0.6)
v = m.critical_visibility(z, m.ChoiInstrument.noise('dephasing', 2, 2))
p, f = m.hemisphere_tradeoff(z)
err = None
try:
    m.ChoiInstrument.luders(3, -0.1)
except ValueError as e:
    err = str(e)
",
            None,
            Some(&locals),
        )
        .unwrap();
        let v: f64 = locals.get_item("v").unwrap().unwrap().extract().unwrap();
        assert!((v - 1.0 / 1.4).abs() < 1e-6, "{v}");
        let p: f64 = locals.get_item("p").unwrap().unwrap().extract().unwrap();
        assert!((p - 0.65).abs() < 1e-12);
        let err: Option<String> = locals.get_item("err").unwrap().unwrap().extract().unwrap();
        assert!(err.is_some());
    });
}
