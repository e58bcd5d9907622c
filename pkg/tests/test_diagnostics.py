import json
import math

import numpy as np
import pytest

from conftest import Instance
from pooldec.design import DesignParams, Overrides, build_design, c_min, derive_params, stream
from pooldec.diagnostics import (
    SMALL_MEAN,
    check_counts,
    check_degrees,
    check_density,
    check_residuals,
    concentration_event,
    expected_offset_degree,
    first_compartment_residuals,
    residual_bound,
    run_all,
)
from pooldec.signal import make_signal, sample_signal


def by_name(report):
    return {c.name: c for c in report.checks}


def test_degree_bands_pass_on_desk_instance(desk):
    checks = by_name(check_degrees(desk.design))
    assert checks["degree_band"].passed and not checks["degree_band"].skipped
    assert checks["distinct_degree_band"].passed
    ratio = checks["distinct_to_total_degree"]
    assert ratio.passed and ratio.statistic >= 1 - 3 / math.sqrt(desk.design.m)


def test_degree_band_skipped_for_sparse_design():
    p = DesignParams(n=60, counts=(3,), c=1, overrides=Overrides(ell=3, s=2, m=4, gamma=2))
    D = build_design(p)
    assert expected_offset_degree(D) < SMALL_MEAN
    checks = by_name(check_degrees(D))
    assert checks["degree_band"].skipped and checks["degree_band"].passed
    assert "max" in checks["degree_band"].detail


def test_count_bands(desk):
    assert check_counts(desk.signal, desk.params, desk.design).passed


def test_count_bands_with_no_nonzeros():
    p = DesignParams(n=500, counts=(0,), c=1, overrides=Overrides(ell=5, s=2, m=12, gamma=4))
    D = build_design(p)
    sig = sample_signal(p, D, stream(0, 1))
    assert check_counts(sig, p, D).passed


def test_count_band_flags_clustered_signal(desk):
    D, p = desk.design, desk.params
    labels = np.array(desk.signal.labels)
    labels[D.n_seed:] = 0
    first = D.items(D.s - 1)
    labels[first.start:first.start + p.k] = 1
    report = check_counts(make_signal(D, labels), p, D)
    assert not report.passed


def test_density_passes_for_default_design_at_1e6():
    p = DesignParams(n=10**6, counts=(1000,), c=1.2 * c_min(0.5, 1.0, 0.05))
    checks = by_name(check_density(derive_params(p), p))
    assert checks["degree_ratio_exponent"].passed
    assert checks["density_ratio_exponent"].passed
    assert checks["residual_vs_signal_scale"].skipped


def test_density_fails_when_window_equals_ell():
    p = DesignParams(n=10**6, counts=(1000,), c=40, overrides=Overrides(ell=8, s=8, m=15 * 5000, gamma=8 * 3))
    checks = by_name(check_density(derive_params(p), p))
    assert checks["density_ratio_exponent"].statistic >= 0
    assert not checks["density_ratio_exponent"].passed


def test_density_exponents_in_the_large_k_limit():
    """With negligible rounding, Delta/s ~ sqrt(2c(1-theta)/theta) k^eps and s^2/ell ~ k^-eps."""
    n, k, eps, c = 10**40, 10**20, 0.05, 30.0
    p = DesignParams(n=n, counts=(k,), eps_design=eps, c=c)
    d = derive_params(p)
    checks = by_name(check_density(d, p))
    theta = d.theta
    log_n = math.log(n)
    prefactor = 0.5 * math.log(2 * c * (1 - theta) / theta) / log_n
    assert checks["degree_ratio_exponent"].statistic == pytest.approx(eps * theta + prefactor, abs=1e-3)
    assert checks["density_ratio_exponent"].statistic == pytest.approx(-eps * theta, abs=1e-3)


def test_residual_bound_value():
    p = DesignParams(n=10**5, counts=(316,), c=30)
    assert residual_bound(p) == pytest.approx(20 * 316**-0.025 * math.log(10**5), rel=1e-12)
    assert residual_bound(p) == pytest.approx(199.4, abs=0.1)


def test_residuals_pass_on_desk_instance(desk):
    r = check_residuals(desk.design, desk.y, desk.signal, desk.params).checks[0]
    assert r.passed
    assert r.detail["median_abs"] < r.detail["bound"]


def test_residuals_vanish_without_nonzeros():
    p = DesignParams(n=400, counts=(0,), c=1, overrides=Overrides(ell=4, s=2, m=25, gamma=10))
    inst = Instance(p)
    R = first_compartment_residuals(inst.design, inst.y, inst.signal, p)
    assert not R.any()


def test_reports_are_deterministic(small):
    a = run_all(small.design, small.y, small.signal, small.params)
    b = run_all(small.design, small.y, small.signal, small.params)
    assert a.to_json() == b.to_json()
    raw = json.loads(a.to_json())
    assert raw["passed"] == a.passed
    for c in raw["checks"]:
        assert c["anchor"]
    table = a.table()
    for c in a.checks:
        assert c.name in table


def test_concentration_event(desk):
    ev = concentration_event(desk.design, desk.signal, desk.params)
    assert set(ev) == {"K1", "K2", "K3", "K"}
    assert ev["K"] == (ev["K1"] and ev["K2"] and ev["K3"])
    assert ev["K1"] and ev["K2"]
