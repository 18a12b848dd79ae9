import math

import numpy as np
import pytest

from nonlocalreg import exceptions, levy
from nonlocalreg.levy import (
    ExponentProfile,
    check_H,
    levy_density_sbm,
    parse_bernstein,
    stable_density,
    sup_envelope,
    verify_almost_increasing,
    verify_nu_bounds,
)
from nonlocalreg.scaling import BernsteinScaling, check_weak_scaling, default_s_grid, default_t_grid


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("rho", [0.05, 1.0, 7.0])
def test_subordinated_stable_density(alpha, rho):
    value = levy_density_sbm(levy.stable(alpha), [rho], 1)
    assert value == pytest.approx(stable_density(alpha, 1, rho), rel=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_subordinated_stable_density_in_the_plane(alpha):
    x = np.array([0.3, 0.4])
    assert levy_density_sbm(levy.stable(alpha), x, 2) == pytest.approx(stable_density(alpha, 2, x), rel=1e-6)


def test_mixed_density_adds():
    rho = 0.4
    expected = stable_density(1.5, 1, rho) + stable_density(0.5, 1, rho)
    assert levy_density_sbm(levy.mixed(1.5, 0.5), [rho], 1) == pytest.approx(expected, rel=1e-6)


def test_relativistic_density_is_lighter():
    rho = 2.0
    assert levy_density_sbm(levy.relativistic(1.0, 1.0), [rho], 1) < stable_density(1.0, 1, rho)


def test_relativistic_density_is_stable_near_the_origin():
    bspec = levy.relativistic(1.0, 1.0)
    gaps = [abs(levy_density_sbm(bspec, [rho], 1) / stable_density(1.0, 1, rho) - 1.0)
            for rho in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


@pytest.mark.parametrize("bspec", [levy.stable(1.0), levy.relativistic(1.0, 1.0), levy.mixed(1.5, 0.5)], ids=repr)
@pytest.mark.parametrize("rho", [0.01, 0.5, 3.0])
def test_density_ignores_the_time_window(bspec, rho):
    value = levy_density_sbm(bspec, [rho], 1)
    for window in (0.5, 2.0):
        assert levy_density_sbm(bspec, [rho], 1, window=window) == pytest.approx(value, rel=1e-8)


def test_density_singularities():
    with pytest.raises(exceptions.SingularPoint):
        levy_density_sbm(levy.stable(1.0), [0.0], 1)
    with pytest.raises(exceptions.UnsupportedFamily):
        levy_density_sbm(levy.log_perturbed(1.0, 0.25), [0.5], 1)


def test_exponent_is_phi_of_square():
    bspec = levy.relativistic(1.0, 1.0)
    t = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(levy.psi_from_bernstein(bspec, t), np.sqrt(t ** 2 + 1.0) - 1.0, atol=1e-15)
    with pytest.raises(exceptions.PreconditionError):
        levy.psi_from_bernstein(bspec, [-1.0])


def test_sup_envelope_of_sine():
    envelope = sup_envelope(np.sin, [1.0, 2.0, 5.0])
    np.testing.assert_allclose(envelope, [math.sin(1.0), 1.0, 1.0], rtol=1e-8)
    with pytest.raises(exceptions.PreconditionError):
        sup_envelope(np.sin, [-1.0])


@pytest.mark.parametrize("bspec", levy.library(), ids=repr)
def test_monotone_exponents_are_their_own_envelope(bspec):
    profile = ExponentProfile(bspec)
    t = np.geomspace(1e-2, 1e2, 9)
    np.testing.assert_allclose(profile.psi_star(t), profile.psi(t), rtol=1e-12)


@pytest.mark.parametrize("bspec", levy.library(), ids=repr)
def test_exponents_are_almost_increasing(bspec):
    records = verify_almost_increasing(ExponentProfile(bspec), np.geomspace(1e-3, 1e3, 13))
    assert all(r.passed for r in records)


@pytest.mark.slow
@pytest.mark.parametrize("bspec", levy.library(), ids=repr)
def test_almost_increasing_on_a_thousand_samples(bspec):
    profile = ExponentProfile(bspec)
    records = verify_almost_increasing(profile, np.geomspace(1e-3, 1e3, 1000) / profile.r0)
    assert len(records) == 1000
    assert all(r.passed for r in records)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_stable_exponent_scales_exactly(alpha):
    profile = ExponentProfile(levy.stable(alpha))
    fit = check_H(profile, default_t_grid(1.0), default_s_grid())
    assert fit.passed
    assert fit.delta1 == pytest.approx(alpha, abs=1e-9)
    assert fit.delta2 == pytest.approx(alpha, abs=1e-9)
    assert fit.a1 == pytest.approx(1.0, rel=1e-9)
    assert fit.a2 == pytest.approx(1.0, rel=1e-9)


def test_scaling_fit_needs_a_wide_s_grid():
    with pytest.raises(exceptions.PreconditionError):
        check_H(ExponentProfile(levy.stable(1.0)), default_t_grid(1.0), [0.5, 2.0])


def test_scaling_fit_starts_at_the_inverse_scale():
    profile = ExponentProfile(levy.relativistic(1.0, 4.0))
    assert check_H(profile, default_t_grid(0.25), default_s_grid()).r0 == pytest.approx(0.25)
    with pytest.raises(exceptions.PreconditionError):
        check_H(profile, default_t_grid(1.0), default_s_grid())


def test_relativistic_scale():
    assert levy.default_r0(levy.relativistic(1.0, 4.0)) == pytest.approx(0.25)
    assert levy.default_r0(levy.stable(1.0)) == 1.0


@pytest.mark.parametrize("bspec", [levy.stable(1.0), levy.relativistic(1.0, 1.0), levy.mixed(1.5, 0.5)], ids=repr)
def test_bernstein_shape(bspec):
    assert bspec.check_shape()


@pytest.mark.parametrize("bspec", levy.library(), ids=repr)
def test_exponents_build_weakly_scaling_kernels(bspec):
    fspec = BernsteinScaling(bspec)
    assert 0 < fspec.delta1 <= fspec.delta2 < 2
    assert check_weak_scaling(fspec).passed


@pytest.mark.parametrize("bspec", [levy.stable(1.0), levy.relativistic(1.0, 1.0), levy.mixed(1.5, 0.5)], ids=repr)
def test_density_is_comparable_to_envelope(bspec):
    r0 = levy.default_r0(bspec)
    report = verify_nu_bounds(bspec, r0 * np.geomspace(1e-3, 1.0, 7, endpoint=False))
    assert report.passed
    assert report.spread < 10.0
    assert report.psi_change == pytest.approx(1.0, rel=1e-9)


def test_density_bounds_need_inner_radii():
    report = verify_nu_bounds(levy.stable(1.0), [2.0, 3.0])
    assert not report.passed
    with pytest.raises(exceptions.PreconditionError):
        verify_nu_bounds(levy.stable(1.0), [])


@pytest.mark.parametrize("family, params", [
    ("stable", {"alpha": 2.5}),
    ("stable", {}),
    ("relativistic", {"alpha": 1.0, "m": 0.0}),
    ("log_perturbed", {"alpha": 1.0, "p": 0.9}),
    ("gamma", {"alpha": 1.0}),
])
def test_parse_bernstein_rejects(family, params):
    with pytest.raises(exceptions.ConfigError):
        parse_bernstein(family, params)


def test_negative_drift_rejected():
    with pytest.raises(exceptions.PreconditionError):
        levy.BernsteinSpec("stable", {"alpha": 1.0}, drift=-1.0)
