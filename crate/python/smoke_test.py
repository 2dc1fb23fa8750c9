"""Smoke test for the instrasim_py extension.

Build first:  cargo build --release -p instrasim-py --features extension-module
Then run:     python3 python/smoke_test.py
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys


def load():
    try:
        import instrasim_py

        return instrasim_py
    except ImportError:
        root = pathlib.Path(__file__).resolve().parent.parent
        for profile in ("release", "debug"):
            lib = root / "target" / profile / "libinstrasim_py.so"
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("instrasim_py", str(lib))
                spec = importlib.util.spec_from_file_location("instrasim_py", lib, loader=loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                return mod
        sys.exit("instrasim_py not built; see the module docstring")


def main():
    m = load()

    z = m.ChoiInstrument.luders(2, 0.6)
    assert (z.d_in, z.d_out, z.n_outcomes) == (2, 2, 2), z
    deph = m.ChoiInstrument.noise("dephasing", 2, 2)
    v = m.critical_visibility(z, deph)
    assert abs(v - m.v_deph_qubit(0.6)) < 1e-6, v
    assert abs(v - 1 / (0.6 + 0.8)) < 1e-6, v

    assert m.qubit_pi_feasible(z) == "infeasible"
    assert m.qubit_pi_feasible(z.mix(deph, v - 1e-3)) == "feasible"

    povm = z.povm()
    total = [[povm[0][i][j] + povm[1][i][j] for j in range(2)] for i in range(2)]
    assert all(abs(total[i][j] - (i == j)) < 1e-12 for i in range(2) for j in range(2))

    again = m.ChoiInstrument.from_json(z.to_json())
    assert again.etas() == z.etas()

    p, f = m.hemisphere_tradeoff(z)
    assert abs(p - (0.5 + 0.6 / 4)) < 1e-12
    assert abs(f - (2 / 3 + math.sqrt(1 - 0.36) / 3)) < 1e-12
    f_pi, f_q = m.pi_tradeoff_curves(0.625)
    assert abs(f_pi - 5 / 6) < 1e-12 and abs(f_q - (2 + math.sqrt(0.75)) / 3) < 1e-12

    white = m.critical_visibility(m.ChoiInstrument.sic(), m.ChoiInstrument.noise("white", 4, 2))
    assert abs(white - 0.773) < 2e-3, white

    rep = json.loads(m.seesaw(2.05, restarts=1, seed=3, max_rounds=5))
    assert rep["best"]["s_ab"] >= 2.05 and rep["seed"] == 3

    try:
        m.ChoiInstrument.luders(2, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("sharpness 1.5 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
