import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matnet.aquifer import AquiferBank, AquiferParams, dwe_dp, step_closed_form, step_recursive


def _random_path(rng, n):
    params = AquiferParams(rng.uniform(1e6, 1e8), rng.uniform(0.1, 20.0), rng.uniform(2000, 6000))
    dt = rng.uniform(1.0, 60.0, n)
    p = params.p_init - np.cumsum(rng.uniform(-5.0, 15.0, n))
    return params, p, dt


def recursive_history(params, p, dt):
    """End-of-step pressure recursion (mid-step average replaced by p^n)."""
    w = [0.0]
    for k in range(p.size):
        w.append(step_recursive(params, w[-1], p[k], p[k], dt[k]))
    return np.array(w)


def test_closed_form_equals_end_pressure_recursion():
    rng = np.random.default_rng(7)
    params, p, dt = _random_path(rng, 200)
    w = recursive_history(params, p, dt)
    for n in (1, 2, 50, 200):
        assert step_closed_form(params, p, dt, n) == pytest.approx(w[n], rel=1e-10)


def test_no_drawdown_no_influx():
    params = AquiferParams(1e7, 2.0, 4000.0)
    assert step_closed_form(params, [4000.0] * 5, [30.0] * 5, 5) == 0.0
    assert step_recursive(params, 0.0, 4000.0, 4000.0, 30.0) == 0.0


def test_influx_bounded_by_encroachable_volume():
    # constant drawdown to zero pressure: W_e approaches W_ei from below
    params = AquiferParams(1e6, 50.0, 4000.0)
    w = recursive_history(params, np.zeros(400), np.full(400, 30.0))
    assert np.all(np.diff(w) >= 0)
    assert w[-1] <= params.wei * (1 + 1e-12)
    assert w[-1] == pytest.approx(params.wei, rel=1e-6)


def test_dwe_dp_finite_difference():
    rng = np.random.default_rng(3)
    params, p, dt = _random_path(rng, 30)
    for k, j in [(30, 30), (30, 1), (17, 9), (5, 5)]:
        h = 1e-2
        pp, pm = p.copy(), p.copy()
        pp[j - 1] += h
        pm[j - 1] -= h
        fd = (step_closed_form(params, pp, dt, k) - step_closed_form(params, pm, dt, k)) / (2 * h)
        assert dwe_dp(params, dt, k, j) == pytest.approx(fd, rel=1e-8)
    assert dwe_dp(params, dt, 3, 4) == 0.0


def test_bank_matches_closed_form():
    rng = np.random.default_rng(11)
    params, p, dt = _random_path(rng, 40)
    bank = AquiferBank([params.wei], [params.j], [params.p_init], [True])
    t = np.cumsum(dt)
    for k in range(40):
        w, dw = bank.influx(t[k], dt[k], np.array([p[k]]))
        assert w[0] == pytest.approx(step_closed_form(params, p, dt, k + 1), rel=1e-12)
        assert dw[0] == pytest.approx(dwe_dp(params, dt, k + 1, k + 1), rel=1e-12)
        bank = bank.appended(t[k], dt[k], np.array([p[k]]))


def test_inactive_bank_entries_are_zero():
    bank = AquiferBank([1.0], [0.0], [4000.0], [False])
    w, dw = bank.influx(30.0, 30.0, np.array([3000.0]))
    assert w[0] == 0.0 and dw[0] == 0.0


def test_from_volume_and_validation():
    a = AquiferParams.from_volume(wi=1e9, theta=180.0, ct=1e-5, j=1.0, p_init=4000.0)
    assert a.wei == pytest.approx(1e-5 * 1e9 * 4000.0 * 0.5)
    with pytest.raises(ValueError):
        AquiferParams(0.0, 1.0, 4000.0)
    with pytest.raises(ValueError):
        AquiferParams(1.0, -1.0, 4000.0)
    with pytest.raises(ValueError):
        AquiferParams.from_volume(1e9, 400.0, 1e-5, 1.0, 4000.0)
    with pytest.raises(ValueError):
        step_recursive(a, 0.0, 4000.0, 3900.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e5, 1e8), st.floats(0.01, 50.0), st.floats(1.0, 100.0))
def test_closed_form_linear_in_drawdown(wei, j, dt):
    params = AquiferParams(wei, j, 4000.0)
    w1 = step_closed_form(params, [3900.0, 3800.0], [dt, dt], 2)
    w2 = step_closed_form(params, [3800.0, 3600.0], [dt, dt], 2)
    assert w2 == pytest.approx(2 * w1, rel=1e-12)
