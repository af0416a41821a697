import math
import time

import pytest
from hypothesis import given, settings, strategies as st

from snaqsim.analytics import (
    AnalyticTcnotModel, ErrorFloorError, FitParams, analytic_ls_error, analytic_tcnot_error,
    cost_metrics, extrapolate, fit_scaling, fit_tcnot_model, load_fit, required_distance,
    save_fit, scaling_model, tcnot_range,
)
from snaqsim.geometry import n_waves

TRUE = dict(A=0.08, alpha=0.02, beta=0.0015, gamma=0.004)


def synthetic(rho=2, ds=(3, 5, 7, 9, 11), **kw):
    p = dict(TRUE, **kw)
    return [(d, scaling_model(d, p["A"], p["alpha"], p["beta"], p["gamma"], rho)) for d in ds]


def test_model_form():
    # hand evaluation at d=7, rho=2: two waves, exponent four
    base = 0.02 + 0.0015 * 7 + 0.004 * 2
    assert scaling_model(7, 0.08, 0.02, 0.0015, 0.004, 2) == pytest.approx(0.08 * base ** 4)


def test_fit_recovers_parameters():
    t0 = time.perf_counter()
    fit = fit_scaling(synthetic(), rho=2, arch="SNAQ")
    assert time.perf_counter() - t0 < 10
    for k, v in TRUE.items():
        assert getattr(fit, k) == pytest.approx(v, rel=1e-3), k
    assert isinstance(fit.A, float)


def test_fit_is_seed_stable():
    a = fit_scaling(synthetic(), rho=2, seed=1)
    b = fit_scaling(synthetic(), rho=2, seed=2)
    assert a.alpha == pytest.approx(b.alpha, rel=1e-4)


def test_fixed_terms_per_architecture():
    pts = [(d, scaling_model(d, 0.05, 0.03, 0, 0)) for d in (3, 5, 7)]
    fit = fit_scaling(pts, arch="SpinBus")
    assert fit.beta == 0 and fit.gamma == 0
    assert fit.alpha == pytest.approx(0.03, rel=1e-3)
    pts = [(d, scaling_model(d, 0.05, 0.02, 0.002, 0)) for d in (3, 5, 7, 9)]
    fit = fit_scaling(pts, arch="2xN")
    assert fit.gamma == 0 and fit.beta == pytest.approx(0.002, rel=1e-3)
    with pytest.raises(ValueError):
        FitParams(1.0, 0.1, 0.1, 0.0, arch="SpinBus")


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_scaling([(3, 1e-3), (5, 1e-4)])
    with pytest.raises(ValueError):
        fit_scaling([(3, 1e-3), (5, 0.0), (7, 1e-6)])
    with pytest.raises(ValueError):
        fit_scaling(synthetic(), starts=4)


def test_round_trip_distance():
    fit = FitParams(**TRUE, arch="SNAQ", rho=2)
    for d in (3, 5, 9, 15, 21):
        assert required_distance(fit, extrapolate(fit, d)) == d


def test_error_floor_names_dominant_term():
    fit = FitParams(A=0.1, alpha=0.05, beta=0.0, gamma=0.2, arch="SNAQ", rho=0.5)
    with pytest.raises(ErrorFloorError) as e:
        required_distance(fit, 1e-12)
    assert e.value.term == "gamma*n_w"
    fit = FitParams(A=0.1, alpha=0.01, beta=0.02, arch="2xN")
    with pytest.raises(ErrorFloorError) as e:
        required_distance(fit, 1e-15)
    assert e.value.term == "beta*d"


def test_save_load(tmp_path):
    fit = fit_scaling(synthetic(), rho=2)
    save_fit(fit, tmp_path / "f.json")
    assert load_fit(tmp_path / "f.json") == fit
    assert fit.data_hash


def test_ls_error_prefactor():
    # s = 1, d = 1 covers a quarter of a cube: (1 + 1) / 4 of the single-patch rate
    assert analytic_ls_error(1, 1, 1e-3, 0.0) == pytest.approx(0.5e-3)
    assert analytic_ls_error(10, 5, 1e-3, 1e-6) > analytic_ls_error(9, 5, 1e-3, 1e-6)
    with pytest.raises(ValueError):
        analytic_ls_error(0, 5, 1e-3, 0.0)


def test_tcnot_model_fit_and_range():
    true = AnalyticTcnotModel(A=0.1, B=2e-5, C=0.03)
    pts = [(s, d, analytic_tcnot_error(true, s, d)) for d in (3, 5, 7) for s in (0, 50, 200)]
    fit = fit_tcnot_model(pts)
    assert fit.B == pytest.approx(true.B, rel=1e-3)
    assert fit.C == pytest.approx(true.C, rel=1e-3)
    r = tcnot_range(true, 11, [10, 100, 1000])
    # affine in the noise ratio
    assert (r[2] - r[1]) / 900 == pytest.approx((r[1] - r[0]) / 90, rel=1e-9)
    s = r[1]
    assert analytic_tcnot_error(true, s, 11) / analytic_tcnot_error(true, 0, 11) == \
        pytest.approx(1.1, rel=1e-6)


def test_cost_metrics():
    assert cost_metrics("SNAQ", 11, 1)["readout_count"] == 48
    assert cost_metrics("SpinBus", 5)["readout_count"] == 25
    assert cost_metrics("2xN", 5)["readout_count"] == 49
    assert cost_metrics("2xN", 5)["physical_qubits"] == 49
    assert cost_metrics("SNAQ", 11)["readout_count"] < cost_metrics("SpinBus", 11)["readout_count"]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.005, 0.05), st.floats(0, 0.002), st.floats(0, 0.005),
       st.integers(1, 10).map(lambda k: 2 * k + 1))
def test_round_trip_property(alpha, beta, gamma, d):
    fit = FitParams(A=0.1, alpha=alpha, beta=beta, gamma=gamma, arch="SNAQ", rho=1)
    if all(fit.base(k) < 1 and extrapolate(fit, k + 2) < extrapolate(fit, k)
           for k in range(3, d, 2)):
        assert required_distance(fit, extrapolate(fit, d)) == d


def test_spinbus_decreases_while_snaq_base_grows():
    spin = FitParams(A=0.05, alpha=0.03, arch="SpinBus")
    snaq = FitParams(A=0.08, alpha=0.02, beta=0.0015, gamma=0.004, arch="SNAQ", rho=1)
    prev_s, prev_b = math.inf, 0.0
    for d in range(3, 41, 2):
        assert extrapolate(spin, d) < prev_s
        assert snaq.base(d) >= prev_b
        prev_s, prev_b = extrapolate(spin, d), snaq.base(d)
    assert n_waves(41, 1) > n_waves(3, 1)
