import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocalreg import exceptions, kernel_factories
from nonlocalreg.kernel import (
    ExponentialDamping,
    ExtremalClass,
    KernelSpec,
    PowerContinuation,
    Truncate,
    constant_multiplier,
    continuity_jump,
    eval_kernel,
    parse_tail,
    random_multiplier,
    sine_multiplier,
    tail_mass,
)
from nonlocalreg.scaling import (
    LogPerturbedScaling,
    MixedScaling,
    PowerScaling,
    check_weak_scaling,
)


@pytest.mark.parametrize("fspec", kernel_factories.library_scalings(), ids=repr)
def test_library_profiles_scale_weakly(fspec):
    report = check_weak_scaling(fspec)
    assert report.passed
    assert report.witness is None
    assert report.monotone


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.05, 1.95))
def test_pure_powers_scale_exactly(alpha):
    report = check_weak_scaling(PowerScaling(alpha))
    assert report.passed
    assert abs(report.worst_lower_margin) < 1e-10
    assert abs(report.worst_upper_margin) < 1e-10


def test_wrong_exponent_has_witness():
    fspec = PowerScaling(0.5).with_certificate(delta2=0.3)
    report = check_weak_scaling(fspec)
    assert not report.passed
    s, t = report.witness
    assert s > 1.0 and t >= 1.0 - 1e-9
    assert report.worst_upper_margin < 0


def test_log_perturbed_exponents():
    fspec = LogPerturbedScaling(1.0, 1.0)
    assert fspec.delta1 == 1.0
    assert fspec.delta2 == 1.5
    assert fspec.a2 >= 1.0
    assert check_weak_scaling(fspec).passed


def test_mixed_exponents_are_sorted():
    fspec = MixedScaling(1.5, 0.5)
    assert (fspec.delta1, fspec.delta2) == (0.5, 1.5)


@pytest.mark.parametrize("kwargs", [
    {"alpha": 0.0},
    {"alpha": 2.0},
    {"alpha": 1.0, "a1": 0.0},
    {"alpha": 1.0, "r0": -1.0},
])
def test_invalid_constants_rejected(kwargs):
    with pytest.raises(exceptions.PreconditionError):
        PowerScaling(**kwargs)


def test_log_power_at_or_below_minus_alpha_rejected():
    with pytest.raises(exceptions.PreconditionError):
        LogPerturbedScaling(1.0, -1.0)
    with pytest.raises(exceptions.PreconditionError):
        LogPerturbedScaling(0.5, -0.75)


def test_negative_log_power():
    fspec = LogPerturbedScaling(1.0, -0.25)
    assert fspec.delta1 == pytest.approx(0.875)
    assert fspec.delta2 == 1.0
    assert 0 < fspec.a1 < 1.0
    assert fspec.a2 == 1.0
    assert fspec(0.0) == 0.0
    report = check_weak_scaling(fspec)
    assert report.passed
    assert report.monotone


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.2, 1.8), share=st.floats(-1.0, 1.0), r0=st.sampled_from([0.5, 1.0, 4.0]))
def test_log_perturbed_defaults_scale_weakly(alpha, share, r0):
    p = share * (alpha / 2.0 if share < 0 else (2.0 - alpha) / 2.0)
    fspec = LogPerturbedScaling(alpha, p, r0=r0)
    assert fspec.delta1 <= alpha <= fspec.delta2
    report = check_weak_scaling(fspec)
    assert report.passed, report
    assert report.monotone


def test_delta_order_enforced():
    with pytest.raises(exceptions.PreconditionError):
        PowerScaling(1.0, delta1=1.2, delta2=0.8)


@pytest.mark.parametrize("text, kind", [
    ("power_continuation", PowerContinuation),
    ("truncate:2.5", Truncate),
    ("exponential_damping:1", ExponentialDamping),
])
def test_parse_tail(text, kind):
    tail = parse_tail(text)
    assert isinstance(tail, kind)
    assert parse_tail(tail.describe()).describe() == tail.describe()


@pytest.mark.parametrize("text", ["gaussian", "truncate:x", "truncate"])
def test_parse_tail_rejects(text):
    with pytest.raises(exceptions.ConfigError):
        parse_tail(text)


def test_truncation_below_r0_rejected():
    with pytest.raises(exceptions.PreconditionError):
        KernelSpec(PowerScaling(0.5), tail=Truncate(0.5))


def test_eval_kernel_near_diagonal():
    kspec = kernel_factories.get("power_0.5")
    assert eval_kernel(kspec, 0.0, [0.25]) == pytest.approx(0.25 ** -1.5)
    values = eval_kernel(kspec, [1.0], [[0.5], [1.5], [3.0]])
    np.testing.assert_allclose(values, [0.5 ** -1.5, 0.5 ** -1.5, 2.0 ** -1.5])


def test_eval_kernel_on_diagonal_is_singular():
    with pytest.raises(exceptions.SingularPoint):
        eval_kernel(kernel_factories.get("power_0.5"), [0.3], [0.3])


def test_eval_kernel_applies_multiplier():
    base = kernel_factories.get("power_0.5")
    kspec = base.with_multiplier(constant_multiplier(2.0))
    y = np.array([[0.1], [0.7]])
    np.testing.assert_allclose(eval_kernel(kspec, 0.0, y), 2.0 * eval_kernel(base, 0.0, y))


def test_truncated_tail_vanishes():
    kspec = kernel_factories.get("power_0.5_unit_mass")
    assert eval_kernel(kspec, 0.0, [2.0]) == 0.0
    assert eval_kernel(kspec, 0.0, [1.5]) > 0.0


def test_unit_mass_example():
    assert tail_mass(kernel_factories.get("power_0.5_unit_mass")) == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_power_continuation_mass(alpha):
    # 2 int_1^inf rho^(-1-alpha) drho
    assert tail_mass(kernel_factories.fractional(alpha)) == pytest.approx(2.0 / alpha, rel=1e-7)


def test_power_continuation_mass_in_the_plane():
    # 2 pi int_1^inf rho^(1-2-alpha) drho
    kspec = kernel_factories.fractional(1.0, d=2)
    assert tail_mass(kspec) == pytest.approx(2.0 * math.pi, rel=1e-7)


def test_damped_tail_mass():
    # 2 int_1^inf rho^-2.5 exp(1 - rho) drho, computed independently
    from scipy import integrate
    expected = 2.0 * integrate.quad(lambda r: r ** -2.5 * math.exp(1.0 - r), 1.0, math.inf)[0]
    assert tail_mass(kernel_factories.get("power_1.5_damped")) == pytest.approx(expected, rel=1e-7)


def test_slowly_decaying_continuation_diverges():
    with pytest.raises(exceptions.DivergentTail):
        tail_mass(KernelSpec(PowerScaling(1e-4)))


def test_continuity_jump():
    assert continuity_jump(kernel_factories.get("power_1.5")) == 0.0
    assert continuity_jump(kernel_factories.get("power_1.5_damped")) == pytest.approx(0.0, abs=1e-12)
    assert continuity_jump(KernelSpec(PowerScaling(0.5), tail=Truncate(1.0))) == pytest.approx(1.0)


def test_with_dimension_resets_mass():
    kspec = kernel_factories.fractional(1.0)
    assert tail_mass(kspec) == pytest.approx(2.0, rel=1e-7)
    planar = kernel_factories.with_dimension(kspec, 2)
    assert tail_mass(planar) == pytest.approx(2.0 * math.pi, rel=1e-7)


@pytest.mark.parametrize("make", [
    lambda rng: sine_multiplier(1.0, 2.0),
    lambda rng: random_multiplier(1.0, 2.0, rng, d=2),
])
def test_multipliers_stay_in_range(make):
    rng = np.random.default_rng(7)
    multiplier = make(rng)
    for _ in range(10):
        x = rng.uniform(-5, 5, size=2)
        y = rng.uniform(-5, 5, size=(50, 2))
        values = multiplier(x, y)
        assert np.all(values >= 1.0 - 1e-12)
        assert np.all(values <= 2.0 + 1e-12)


def test_extremal_class_case():
    with pytest.raises(exceptions.CaseMismatch):
        ExtremalClass(1.0, 2.0, base=kernel_factories.get("power_1")).check_case()
    ExtremalClass(1.0, 2.0, symmetric=True, base=kernel_factories.get("power_1")).check_case()
    ExtremalClass(1.0, 2.0, base=kernel_factories.get("power_0.5")).check_case()
    ExtremalClass(1.0, 2.0, base=kernel_factories.get("power_1.5")).check_case()


def test_extremal_class_members():
    cls = ExtremalClass(1.0, 2.0, base=kernel_factories.get("power_0.5"))
    assert cls.admits(cls.member(1.5))
    assert cls.admits(cls.base.with_multiplier(sine_multiplier(1.0, 2.0)))
    assert not cls.admits(cls.base.with_multiplier(constant_multiplier(3.0)))
    with pytest.raises(exceptions.PreconditionError):
        cls.member(2.5)


@pytest.mark.parametrize("lam, Lam", [(0.0, 1.0), (2.0, 1.0)])
def test_extremal_class_bounds(lam, Lam):
    with pytest.raises(exceptions.PreconditionError):
        ExtremalClass(lam, Lam, base=kernel_factories.get("power_0.5"))
