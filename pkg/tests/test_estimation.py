import numpy as np
import pytest

from gnnfdia.estimation import (
    UnobservableError,
    bdd_normalized_residuals,
    estimate_state,
    measurement_variances,
    residual_sensitivity,
)
from gnnfdia.grid import build_ybus, bundled_case
from gnnfdia.powerflow import (
    MeasurementVector,
    full_layout,
    jacobian_dense,
    measurement_function,
    solve_power_flow,
)
from gnnfdia.scenario import ScenarioConfig, generate_dataset, synthetic_profile

from conftest import fixture_json


@pytest.fixture(scope="module")
def solved14(case14, y14, layout14):
    x = solve_power_flow(case14, y14)
    return x, measurement_function(y14, x, layout14)


def _noisy(values, layout, rng, sigma=0.01):
    var_true = measurement_variances(values, sigma)
    z = values + rng.standard_normal(len(values)) * np.sqrt(var_true)
    return MeasurementVector(layout, z, measurement_variances(z, sigma))


def test_measurement_variances_floor():
    v = measurement_variances([0.0, 1.0, -2.0], 0.01, floor=1e-8)
    np.testing.assert_allclose(v, [1e-8, 1e-4, 4e-4])


def test_noiseless_estimate_recovers_truth(case14, y14, layout14, solved14):
    x, h = solved14
    z = MeasurementVector(layout14, h, measurement_variances(h))
    est = estimate_state(case14, y14, z)
    assert est.converged and est.iterations <= 50
    np.testing.assert_allclose(est.x_hat.vm, x.vm, atol=1e-6)
    np.testing.assert_allclose(est.x_hat.va, x.va, atol=1e-6)
    assert est.objective < 1e-10


@pytest.mark.parametrize("name", ["ieee118", "ieee300"])
def test_noiseless_estimate_larger_cases(name):
    case = bundled_case(name)
    y = build_ybus(case)
    layout = full_layout(case)
    x = solve_power_flow(case, y)
    h = measurement_function(y, x, layout)
    est = estimate_state(case, y, MeasurementVector(layout, h, measurement_variances(h)))
    assert np.abs(est.x_hat.vm - x.vm).max() < 1e-5
    assert np.abs(est.x_hat.va - x.va).max() < 1e-5


def test_objective_history_nonincreasing(case14, y14, layout14, solved14):
    z = _noisy(solved14[1], layout14, np.random.default_rng(5))
    est = estimate_state(case14, y14, z)
    hist = np.array(est.history)
    assert np.all(np.diff(hist) <= 1e-9 * hist[:-1] + 1e-12)


def test_noisy_estimate_close(case14, y14, layout14, solved14):
    x, h = solved14
    est = estimate_state(case14, y14, _noisy(h, layout14, np.random.default_rng(1)))
    assert np.abs(est.x_hat.vm - x.vm).max() < 0.01
    assert np.abs(est.x_hat.va - x.va).max() < 0.01


def test_unobservable_layout(case14, y14, layout14, solved14):
    sub = layout14.subset(range(10))
    h = solved14[1][:10]
    with pytest.raises(UnobservableError):
        estimate_state(case14, y14, MeasurementVector(sub, h, measurement_variances(h)))


def test_sensitivity_is_idempotent_projection(case14, y14, layout14, solved14):
    x, h = solved14
    var = measurement_variances(h)
    s = residual_sensitivity(jacobian_dense(y14, x, layout14), var)
    np.testing.assert_allclose(s @ s, s, atol=1e-8)
    assert np.all(np.diag(s) > -1e-12) and np.all(np.diag(s) < 1 + 1e-12)
    # trace equals the redundancy m - (2n - 1)
    assert abs(np.trace(s) - (108 - 27)) < 1e-6


def test_bdd_flags_gross_error(case14, y14, layout14, solved14):
    z = _noisy(solved14[1], layout14, np.random.default_rng(4))
    values = z.values.copy()
    values[20] += 0.5
    bad = MeasurementVector(layout14, values, z.variances)
    rep = bdd_normalized_residuals(case14, y14, bad, estimate_state(case14, y14, bad))
    assert rep.flagged
    assert int(np.argmax(rep.normalized)) == 20
    assert set(rep.to_dict()) >= {"max_normalized", "flagged", "normalized"}


def test_bdd_denominators(case14, y14, layout14, solved14):
    z = _noisy(solved14[1], layout14, np.random.default_rng(8))
    est = estimate_state(case14, y14, z)
    a = bdd_normalized_residuals(case14, y14, z, est, denominator="sqrt")
    b = bdd_normalized_residuals(case14, y14, z, est, denominator="paper")
    omega = np.where(a.normalized > 0, np.abs(a.residuals) / np.maximum(a.normalized, 1e-300), 0)
    ok = a.normalized > 0
    np.testing.assert_allclose(b.normalized[ok], np.abs(a.residuals[ok]) / omega[ok] ** 2, rtol=1e-8)
    with pytest.raises(ValueError):
        bdd_normalized_residuals(case14, y14, z, est, denominator="other")


def test_bdd_rejects_unconverged(case14, y14, layout14, solved14):
    z = _noisy(solved14[1], layout14, np.random.default_rng(9))
    est = estimate_state(case14, y14, z, max_iter=1, raise_on_failure=False)
    assert not est.converged
    with pytest.raises(ValueError):
        bdd_normalized_residuals(case14, y14, z, est)


@pytest.fixture(scope="module")
def honest_stats(case14):
    """Max and signed normalized residuals over a short honest run."""
    ref = fixture_json("bdd_honest_stats.json")
    ds = generate_dataset(case14, synthetic_profile(9600, seed=ref["seed"]), T=ref["T"],
                          config=ScenarioConfig(), seed=ref["seed"])
    y = build_ybus(case14)
    layout = full_layout(case14)
    mx, signed = [], []
    for t in range(ds.T):
        z = MeasurementVector(layout, ds.Z[t], measurement_variances(ds.Z[t]))
        est = estimate_state(case14, y, z)
        rep = bdd_normalized_residuals(case14, y, z, est)
        mx.append(rep.max_normalized)
        signed.append(np.sign(rep.residuals) * rep.normalized)
    return np.array(mx), np.array(signed)


def test_honest_signed_residual_mean_near_zero(honest_stats):
    _, signed = honest_stats
    assert np.abs(signed.mean(axis=0)).max() <= 0.1
    # unit scale under the noise model
    assert 0.8 < signed.std() < 1.2


def test_honest_false_alarm_matches_frozen_statistic(honest_stats):
    ref = fixture_json("bdd_honest_stats.json")
    mx, _ = honest_stats
    fa = float(np.mean(mx > ref["tau"]))
    assert fa == pytest.approx(ref["false_alarm"], abs=1e-12)
    assert np.quantile(mx, 0.5) == pytest.approx(ref["max_quantiles"]["0.5"], rel=1e-9)


@pytest.mark.xfail(strict=True, reason="max of ~100 unit normals exceeds 3 about a quarter of the time")
def test_honest_false_alarm_below_five_percent(honest_stats):
    mx, _ = honest_stats
    assert np.mean(mx > 3.0) < 0.05
