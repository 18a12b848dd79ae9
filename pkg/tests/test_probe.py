import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocalreg import exceptions
from nonlocalreg.functions import AnalyticFunction, power_fixture, sample_grid
from nonlocalreg.probe import (
    RefinementReport,
    SeminormReport,
    fit_holder,
    holder_seminorm_report,
    oscillation_profile,
    seminorm_refinement,
)

# dyadic spacing keeps every profile radius on a node
H = 2.0 ** -10
S = 2.0 ** -3
M = 192


def on_grid(func):
    return sample_grid(func, [-M * H], H, (2 * M + 1,))


def constant(c):
    return AnalyticFunction(lambda p: np.full(len(p), c), bound=abs(c))


@settings(max_examples=20, deadline=None)
@given(beta=st.floats(0.1, 0.9))
def test_power_decay_is_recovered(beta):
    profile = oscillation_profile(on_grid(power_fixture(0.0, beta)), 0.0, S, 4)
    assert not profile.truncated
    np.testing.assert_allclose(profile.osc, profile.radii ** beta, rtol=1e-12)
    fit = fit_holder(profile)
    assert fit.status == "ok"
    assert fit.alpha_emp == pytest.approx(beta, abs=1e-8)
    assert fit.C_emp == pytest.approx(1.0, rel=1e-8)
    assert fit.gamma_emp == pytest.approx(1.0 - 2.0 ** -beta, rel=1e-7)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert fit.levels_used == 5


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 10.0), c=st.floats(-5.0, 5.0))
def test_fit_ignores_affine_changes(a, c):
    u = on_grid(power_fixture(0.0, 0.5))
    base = fit_holder(oscillation_profile(u, 0.0, S, 4))
    moved = fit_holder(oscillation_profile(u.affine(a, c), 0.0, S, 4))
    assert moved.alpha_emp == pytest.approx(base.alpha_emp, abs=1e-8)
    assert moved.C_emp == pytest.approx(a * base.C_emp, rel=1e-8)


def test_profile_is_monotone():
    profile = oscillation_profile(on_grid(power_fixture(0.01, 0.7)), 0.0, S, 4)
    assert profile.monotone
    assert len(profile.radii) == 5


def test_constant_is_flat():
    fit = fit_holder(oscillation_profile(on_grid(constant(0.3)), 0.0, S, 4))
    assert fit.flat
    assert math.isnan(fit.alpha_emp)


def test_too_few_levels():
    profile = oscillation_profile(on_grid(power_fixture(0.0, 0.5)), 0.0, S, 1)
    with pytest.raises(exceptions.PreconditionError):
        fit_holder(profile)


def test_small_balls_are_truncated():
    profile = oscillation_profile(on_grid(power_fixture(0.0, 0.5)), 0.0, 4 * H, 3)
    assert profile.truncated
    assert len(profile.osc) == 1


@pytest.mark.parametrize("x0, s, K", [(0.15, S, 2), (0.0, 0.0, 2), (0.0, S, -1)])
def test_profile_preconditions(x0, s, K):
    with pytest.raises(exceptions.PreconditionError):
        oscillation_profile(on_grid(power_fixture(0.0, 0.5)), x0, s, K)


def test_seminorm_of_a_line():
    u = on_grid(AnalyticFunction(lambda p: p[:, 0], bound=1.0))
    report = holder_seminorm_report(u, 0.0, 0.2, 1.0, norm=2.0)
    assert report.seminorm == pytest.approx(1.0, rel=1e-9)
    assert report.bound_constant == pytest.approx(0.1, rel=1e-9)
    assert report.stride == 1


def test_seminorm_of_a_cusp():
    # |x|^1/2 has seminorm exactly 1 for the exponent 1/2, attained against the origin
    u = on_grid(power_fixture(0.0, 0.5))
    report = holder_seminorm_report(u, 0.0, 0.2, 0.5)
    assert report.seminorm == pytest.approx(1.0, rel=1e-9)


def test_seminorm_pair_budget():
    u = on_grid(power_fixture(0.0, 0.5))
    report = holder_seminorm_report(u, 0.0, 0.2, 0.5, max_pairs=500)
    assert report.stride > 1
    assert report.pairs <= 500
    assert 0.0 < report.seminorm <= 1.0 + 1e-9


def test_seminorm_needs_positive_exponent():
    with pytest.raises(exceptions.PreconditionError):
        holder_seminorm_report(on_grid(constant(1.0)), 0.0, 0.2, 0.0)


def test_implied_constant_survives_refinement():
    func = power_fixture(0.0, 0.5)
    fine = sample_grid(func, [-2 * M * H / 2], H / 2, (4 * M + 1,))
    study = seminorm_refinement(on_grid(func), fine, 0.0, 0.2, 0.5)
    assert study.coarse.seminorm == pytest.approx(1.0, rel=1e-9)
    assert study.fine.seminorm == pytest.approx(1.0, rel=1e-9)
    # only the sup norm, sampled around each box, moves
    assert study.change < 1e-3


def test_refinement_change_is_relative():
    study = RefinementReport(SeminormReport(2.0, 0.8, 10, 1), SeminormReport(2.5, 1.0, 40, 1))
    assert study.change == pytest.approx(0.25)
    flat = RefinementReport(SeminormReport(0.0, 0.0, 10, 1), SeminormReport(0.0, 0.0, 40, 1))
    assert flat.change == 0.0
