import io

import numpy as np
import pytest
from scipy.optimize import milp, LinearConstraint, Bounds

from ccssp.benchmarks import random_tiny_problem, small_grid
from ccssp.graph import expand
from ccssp.ilp import InfeasibleAtRoot, build_ilp
from ccssp.model import Sense
from ccssp.mps import MPSFormatError, read_mps, write_lp, write_mps
from ccssp.solver import OPTIMAL, solve_milp


def dump(model):
    buf = io.StringIO()
    write_mps(model, buf)
    return buf.getvalue()


def scipy_optimum(model):
    # independent reference straight from the parsed arrays
    A = model.A.toarray()
    lo = np.where(model.rel == "=", model.rhs, -np.inf)
    c = -model.c if model.sense == Sense.MAX else model.c
    res = milp(c, constraints=LinearConstraint(A, lo, model.rhs), integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub))
    return None if res.x is None else (-res.fun if model.sense == Sense.MAX else res.fun)


def models():
    out = []
    for seed in range(12):
        try:
            out.append(build_ilp(expand(random_tiny_problem(seed))))
        except InfeasibleAtRoot:
            pass
    return out


@pytest.mark.parametrize("model", models()[:8])
def test_roundtrip_is_exact(model):
    back = read_mps(io.StringIO(dump(model)))
    assert back.names == model.names and back.row_names == model.row_names
    assert (back.A != model.A).nnz == 0
    for f in ("lb", "ub", "rhs", "c", "integer", "rel"):
        np.testing.assert_array_equal(getattr(back, f), getattr(model, f))
    assert back.sense == model.sense
    assert dump(back) == dump(model)
    for a, b in zip(back.z_index, model.z_index):
        np.testing.assert_array_equal(a, b)


def test_reloaded_model_has_the_same_optimum():
    for model in models()[:6]:
        ref = solve_milp(model)
        back = read_mps(io.StringIO(dump(model)))
        again = solve_milp(back)
        assert again.status == ref.status
        if ref.status == OPTIMAL:
            assert again.objective == pytest.approx(ref.objective, abs=1e-7)
            assert scipy_optimum(back) == pytest.approx(ref.objective, abs=1e-6)


def test_format_details():
    model = build_ilp(expand(small_grid(horizon=2)))
    text = dump(model)
    assert "MARKER  'MARKER'  'INTORG'" in text and " BV BND  z[0][0][0]" in text
    assert "OBJSENSE" not in text
    maxm = build_ilp(expand(random_tiny_problem(0, sense=Sense.MAX)))
    assert "OBJSENSE\n    MAX" in dump(maxm)


def test_greater_equal_rows_are_flipped():
    text = """NAME t
ROWS
 N  obj
 G  r
COLUMNS
    a  obj  1  r  2
RHS
    RHS  r  4
BOUNDS
 UP BND  a  10
ENDATA
"""
    m = read_mps(io.StringIO(text))
    assert list(m.rel) == ["<"] and m.rhs[0] == -4 and m.A.toarray()[0, 0] == -2
    assert m.z_index == [] and m.ub[0] == 10


def test_reader_errors():
    with pytest.raises(MPSFormatError):
        read_mps(io.StringIO("NAME t\nRANGES\n"))
    with pytest.raises(MPSFormatError):
        read_mps(io.StringIO("NAME t\nROWS\n N obj\nCOLUMNS\n    a  nope  1\n"))
    with pytest.raises(MPSFormatError):
        read_mps(io.StringIO("NAME t\nBOGUS\n"))


def test_lp_format():
    buf = io.StringIO()
    write_lp(build_ilp(expand(small_grid(horizon=2))), buf)
    text = buf.getvalue()
    assert text.splitlines()[1] == "Minimize" and "Binary" in text and "[" not in text
    assert text.rstrip().endswith("End")
