import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnfdia.grid import build_ybus, bundled_case, load_case
from gnnfdia.powerflow import (
    ConvergenceError,
    StateVector,
    full_layout,
    jacobian,
    jacobian_dense,
    measurement_function,
    newton_power_flow,
    solve_power_flow,
)

from conftest import CASES, fixture_json, random_state, two_bus_doc


@pytest.mark.parametrize("name", CASES)
def test_power_flow_matches_reference(name):
    ref = fixture_json(f"pf_reference_{name}.json")
    case = bundled_case(name)
    assert ref["bus_ids"] == list(case.bus_ids)
    x, it = newton_power_flow(case, build_ybus(case))
    assert it <= 20
    np.testing.assert_allclose(x.vm, ref["vm"], atol=1e-6)
    np.testing.assert_allclose(x.va, ref["va"], atol=1e-6)


def test_flat_case_solves_in_zero_iterations():
    case = load_case(two_bus_doc())
    x, it = newton_power_flow(case, build_ybus(case))
    assert it == 0
    np.testing.assert_allclose(x.vm, 1.0)
    np.testing.assert_allclose(x.va, 0.0)


def test_two_bus_load_by_hand():
    # lossless line, 50 MW load: sin(theta2) = -P x / (V1 V2)
    case = load_case(two_bus_doc(p_load=50.0))
    x = solve_power_flow(case, build_ybus(case))
    assert x.va[1] < 0
    np.testing.assert_allclose(np.sin(x.va[1]) * x.vm[1], -0.5 * 0.1, atol=1e-9)


def test_infeasible_load_raises():
    case = load_case(two_bus_doc(p_load=2000.0))
    with pytest.raises(ConvergenceError):
        solve_power_flow(case, build_ybus(case))


def test_state_vector_roundtrips(case14):
    rng = np.random.default_rng(3)
    x = random_state(case14, rng)
    again = StateVector.from_free(x.free(), case14.slack)
    np.testing.assert_allclose(again.vm, x.vm)
    np.testing.assert_allclose(again.va, x.va)
    row = StateVector.from_row(x.as_row(), case14.slack)
    np.testing.assert_array_equal(row.as_row(), x.as_row())
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, -1.0]), np.zeros(2), 0)


def test_full_layout_size(case14, layout14):
    assert len(layout14) == 2 * 14 + 4 * 20 == 108
    assert len(layout14.names(case14)) == 108
    assert list(layout14.positions("p_inj")) == list(range(14))
    sub = layout14.subset([0, 50])
    assert len(sub) == 2 and sub.kind[0] == "p_inj"


@pytest.mark.parametrize("name", CASES)
def test_measurement_kcl_at_solution(name):
    # every bus injection equals the sum of its branch end flows plus its shunt
    case = bundled_case(name)
    y = build_ybus(case)
    x = solve_power_flow(case, y)
    h = measurement_function(y, x, full_layout(case))
    n, nb = case.n_bus, case.n_branch
    p_inj, q_inj = h[:n], h[n:2 * n]
    pf, pt, qf, qt = h[2 * n:].reshape(4, nb)
    f, t = y.f, y.t
    p_sum = np.bincount(f, pf, n) + np.bincount(t, pt, n)
    q_sum = np.bincount(f, qf, n) + np.bincount(t, qt, n)
    shunt = np.conj(y.ysh) * x.vm**2
    np.testing.assert_allclose(p_inj, p_sum + shunt.real, atol=1e-9)
    np.testing.assert_allclose(q_inj, q_sum + shunt.imag, atol=1e-9)


def test_injections_match_specified_at_solution(case14, y14, layout14):
    x = solve_power_flow(case14, y14)
    h = measurement_function(y14, x, layout14)
    s = case14.net_injection()
    pq = np.flatnonzero(case14.kinds() == "pq")
    nonslack = np.delete(np.arange(14), case14.slack)
    np.testing.assert_allclose(h[nonslack], s.real[nonslack], atol=1e-8)
    np.testing.assert_allclose(h[14 + pq], s.imag[pq], atol=1e-8)


def _numeric_jacobian(y, x, layout, step=1e-7):
    base = x.free()
    cols = []
    for k in range(len(base)):
        up, down = base.copy(), base.copy()
        up[k] += step
        down[k] -= step
        hu = measurement_function(y, StateVector.from_free(up, x.slack), layout)
        hd = measurement_function(y, StateVector.from_free(down, x.slack), layout)
        cols.append((hu - hd) / (2 * step))
    return np.column_stack(cols)


@pytest.mark.parametrize("name", ["ieee14", "ieee118"])
def test_jacobian_against_finite_differences(name):
    case = bundled_case(name)
    y = build_ybus(case)
    layout = full_layout(case)
    x = random_state(case, np.random.default_rng(11))
    h = jacobian_dense(y, x, layout)
    assert h.shape == (len(layout), 2 * case.n_bus - 1)
    num = _numeric_jacobian(y, x, layout)
    np.testing.assert_allclose(h, num, atol=1e-6 * max(1.0, np.abs(num).max()))


def test_sparse_jacobian_equals_dense(case14, y14, layout14):
    x = random_state(case14, np.random.default_rng(2))
    np.testing.assert_allclose(jacobian(y14, x, layout14).toarray(), jacobian_dense(y14, x, layout14))


def test_tapped_shifted_jacobian():
    case = load_case(two_bus_doc(r=0.02, x=0.1, b=0.03, tap=1.04, shift=0.05))
    y = build_ybus(case)
    layout = full_layout(case)
    x = StateVector(np.array([1.02, 0.97]), np.array([0.0, -0.08]), 0)
    np.testing.assert_allclose(jacobian_dense(y, x, layout), _numeric_jacobian(y, x, layout), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_flat_state_rotation_invariance(case14, y14, layout14, seed):
    # measurements depend on angle differences only
    x = random_state(case14, np.random.default_rng(seed))
    shifted = StateVector(x.vm, x.va + 0.3, x.slack)
    np.testing.assert_allclose(measurement_function(y14, x, layout14),
                               measurement_function(y14, shifted, layout14), atol=1e-12)
