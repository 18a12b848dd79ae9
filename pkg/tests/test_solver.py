import numpy as np
import pytest

from nonlocalreg import exceptions, kernel_factories
from nonlocalreg.functions import gaussian
from nonlocalreg.kernel import ExtremalClass, KernelSpec, Truncate, sine_multiplier
from nonlocalreg.kinds import EquationKind
from nonlocalreg.lemmas import derive_constants, dyadic_rescale, verify_oscillation_lemma
from nonlocalreg.operators import apply_linear
from nonlocalreg.scaling import PowerScaling
from nonlocalreg.solver import ProblemSpec, exterior_from_text, residual, solve
from nonlocalreg.stencil import Ball, Box, Grid, StencilMatrix, build_stencil, self_moment

DOMAIN = Ball([0.0], 0.5)


def ramp(p):
    return np.clip(p[:, 0], -1.0, 1.0)


def constant(c):
    return lambda p: np.full(len(p), c)


@pytest.fixture(scope="module")
def base():
    return kernel_factories.get("power_0.5")


@pytest.fixture(scope="module")
def linear_ramp(base):
    return solve(ProblemSpec(DOMAIN, 0.025, ramp, kernels=[base]))


def test_grid_is_cell_centred():
    grid = Grid(Ball([0.0], 0.5), 0.025)
    assert grid.n == 40
    assert grid.nodes[0, 0] == pytest.approx(-0.5 + 0.0125)
    assert grid.inside.all()
    square = Grid(Box([0.0, 0.0], 0.5), 0.1)
    assert square.nodes.shape == (100, 2)
    disc = Grid(Ball([0.0, 0.0], 0.5), 0.1)
    assert 0 < np.count_nonzero(disc.inside) < 100


def test_coarse_grid_rejected(base):
    with pytest.raises(exceptions.StencilRejected):
        build_stencil(base, Grid(DOMAIN, 0.3))


def test_stencil_is_an_m_matrix(base):
    stencil = build_stencil(base, Grid(DOMAIN, 0.025))
    assert np.all(stencil.couplings["weight"] > 0)
    ones = np.ones(len(stencil.ext_points))
    A, load = stencil.matrix(stencil.linear_levels(), ones)
    A = A.toarray()
    off = A - np.diag(np.diag(A))
    assert np.all(off >= 0)
    assert np.all(np.diag(A) < 0)
    np.testing.assert_allclose(A @ np.ones(stencil.N) + load, 0.0, atol=1e-9 * np.abs(np.diag(A)).max())


def test_stencil_matches_quadrature(base):
    grid = Grid(DOMAIN, 0.01)
    stencil = build_stencil(base, grid)
    u = gaussian(0.0, 0.3)
    discrete = stencil.apply(stencil.gather(u), stencil.linear_levels())
    nodes = stencil.nodes[:, 0]
    for target in (-0.1, 0.0, 0.1):
        i = int(np.argmin(np.abs(nodes - target)))
        exact = apply_linear(base, u, nodes[i])
        assert discrete[i] == pytest.approx(exact, rel=5e-2)


def test_exterior_weights_near_the_boundary():
    kspec = KernelSpec(PowerScaling(0.5), tail=Truncate(2.0), name="power_0.5_truncated")
    grid = Grid(DOMAIN, 0.025)
    stencil = build_stencil(kspec, grid)
    row = int(np.argmin(np.abs(stencil.nodes[:, 0] - 0.4875)))
    c = stencil.couplings[stencil.couplings["row"] == row]
    outside = c["weight"] * (c["a"] >= stencil.N) + c["weight"] * (c["paired"] & (c["b"] >= stencil.N))
    # the self cell enters through its axis neighbours, one of which is exterior
    surrogate = self_moment(kspec, grid.h) / (2.0 * grid.h ** 2)
    # J(z) = |z|^-1.5 on |z| <= 2, integrated over y outside (-0.5, 0.5)
    exact = 2.0 * (0.0125 ** -0.5 - 2.0 ** -0.5) + 2.0 * (0.9875 ** -0.5 - 2.0 ** -0.5)
    assert outside.sum() - surrogate == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("name", ["power_0.5", "power_1.5", "power_0.5_unit_mass"])
def test_constant_exterior_gives_constant_solution(name):
    solution = solve(ProblemSpec(DOMAIN, 0.025, constant(0.7), kernels=[kernel_factories.get(name)]))
    np.testing.assert_allclose(solution.inner, 0.7, rtol=1e-10)
    assert solution.residual <= 1e-8


def test_linear_solution_is_bounded_by_data(linear_ramp):
    assert linear_ramp.inner.min() >= -1.0 - 1e-10
    assert linear_ramp.inner.max() <= 1.0 + 1e-10
    # odd data, odd solution
    np.testing.assert_allclose(linear_ramp.inner, -linear_ramp.inner[::-1], atol=1e-9)
    summary = linear_ramp.summary()
    assert summary["unknowns"] == 40


def test_discrete_comparison_principle(base):
    stencil = build_stencil(base, Grid(DOMAIN, 0.025))
    A, _ = stencil.matrix(stencil.linear_levels(), np.zeros(len(stencil.ext_points)))
    rng = np.random.default_rng(9)
    for _ in range(20):
        low = rng.normal(size=len(stencil.ext_points))
        high = low + rng.uniform(0.0, 1.0, size=low.shape)
        u_low = _linear_solve(stencil, A, low)
        u_high = _linear_solve(stencil, A, high)
        assert np.all(u_high - u_low >= -1e-12)


def _linear_solve(stencil, A, ext):
    from scipy.sparse.linalg import spsolve
    _, load = stencil.matrix(stencil.linear_levels(), ext)
    return spsolve(A.tocsc(), -load)


def test_extremal_solutions_bracket_the_linear_one(base, linear_ramp):
    cls = ExtremalClass(1.0, 2.0, base=base)
    upper = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_PLUS, cls=cls))
    lower = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_MINUS, cls=cls))
    assert np.all(upper.inner >= linear_ramp.inner - 1e-6)
    assert np.all(lower.inner <= linear_ramp.inner + 1e-6)
    assert upper.residual <= 1e-8 and lower.residual <= 1e-8
    # M^+(-u) = -M^-(u): the minus problem with data -g is the mirror of the plus problem
    mirrored = solve(ProblemSpec(DOMAIN, 0.025, lambda p: -ramp(p), EquationKind.EXTREMAL_MINUS, cls=cls))
    np.testing.assert_allclose(mirrored.inner, -upper.inner, atol=1e-8)


def test_equal_bounds_settle_at_once(base, linear_ramp):
    cls = ExtremalClass(1.0, 1.0, base=base)
    solution = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_PLUS, cls=cls))
    assert solution.iterations == 1
    np.testing.assert_allclose(solution.inner, linear_ramp.inner, atol=1e-8)


def test_midpoint_of_a_constant_class_is_linear(base, linear_ramp):
    cls = ExtremalClass(1.0, 2.0, base=base)
    solution = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.MIDPOINT, cls=cls))
    np.testing.assert_allclose(solution.inner, linear_ramp.inner, atol=1e-8)


def test_bellman_solutions_bracket_their_members(base):
    family = [base, base.with_multiplier(sine_multiplier(1.0, 2.0))]
    members = [solve(ProblemSpec(DOMAIN, 0.025, ramp, kernels=[k])) for k in family]
    top = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.BELLMAN_MAX, kernels=family))
    bottom = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.BELLMAN_MIN, kernels=family))
    for member in members:
        assert np.all(top.inner >= member.inner - 1e-6)
        assert np.all(bottom.inner <= member.inner + 1e-6)
    assert set(np.unique(top.policy)) <= {0, 1}
    assert top.history[-1]["changed"] == 0


def test_bellman_family_of_one_is_linear(base, linear_ramp):
    solution = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.BELLMAN_MAX, kernels=[base]))
    np.testing.assert_allclose(solution.inner, linear_ramp.inner, atol=1e-9)
    assert solution.iterations == 1


def test_bellman_warm_restarts_agree():
    family = [kernel_factories.get("power_0.5"), kernel_factories.get("power_1.5")]
    pspec = ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.BELLMAN_MAX, kernels=family)
    reference = solve(pspec)
    rng = np.random.default_rng(5)
    for _ in range(5):
        restart = solve(pspec, initial_policy=rng.integers(0, 2, size=40))
        np.testing.assert_allclose(restart.inner, reference.inner, atol=1e-7)
        residuals = [step["residual"] for step in restart.history]
        assert np.all(np.diff(residuals) <= 1e-12), residuals
    with pytest.raises(exceptions.PreconditionError):
        solve(pspec, initial_policy=np.full(40, 2))


def test_isaacs_with_proportional_kernels(base, linear_ramp):
    cls = ExtremalClass(1.0, 2.0, base=base)
    family = [cls.member(1.0), cls.member(2.0)]
    solution = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.ISAACS, kernels=family,
                                 inf_kernels=family[::-1]))
    np.testing.assert_allclose(solution.inner, linear_ramp.inner, atol=1e-7)
    assert solution.policy.shape == (2, 40)


def test_symmetric_class_solve():
    cls = ExtremalClass(1.0, 2.0, symmetric=True, base=kernel_factories.get("power_1"))
    solution = solve(ProblemSpec(DOMAIN, 0.025, constant(-0.3), EquationKind.EXTREMAL_PLUS, cls=cls))
    np.testing.assert_allclose(solution.inner, -0.3, rtol=1e-10)


def test_planar_constant_solution():
    kspec = kernel_factories.with_dimension(kernel_factories.get("power_0.5_unit_mass"), 2)
    solution = solve(ProblemSpec(Ball([0.0, 0.0], 0.3), 0.05, constant(2.0), kernels=[kspec]))
    np.testing.assert_allclose(solution.inner, 2.0, rtol=1e-10)


def test_residual_of_a_solution(base):
    cls = ExtremalClass(1.0, 2.0, base=base)
    solution = solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_PLUS, cls=cls))
    field = residual(cls, solution.u, solution.stencil)
    assert abs(field.min_plus) <= 1e-8
    assert np.all(field.scaled_minus <= field.scaled_plus + 1e-12)
    box = field.on_box(field.scaled_plus)
    assert box.shape == (40,)


@pytest.mark.parametrize("kwargs", [
    {"kernels": []},
    {"equation": EquationKind.ISAACS},
    {"equation": EquationKind.MIDPOINT, "kernels": []},
    {"tolerance": 0.0},
    {"max_iterations": 0},
])
def test_problem_preconditions(base, kwargs):
    values = {"kernels": [base], **kwargs}
    with pytest.raises(exceptions.PreconditionError):
        ProblemSpec(DOMAIN, 0.025, ramp, **values)


def test_iteration_budget(base):
    cls = ExtremalClass(1.0, 2.0, base=base)
    with pytest.raises(exceptions.BudgetExhausted):
        solve(ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_PLUS, cls=cls, max_iterations=1))


def test_extremal_stable_policy_must_meet_tolerance(base, monkeypatch):
    # a policy update that never moves leaves the lowest levels in place
    monkeypatch.setattr(StencilMatrix, "bang_bang_levels",
                        lambda self, V, lam, Lam, sign, previous=None: previous)
    cls = ExtremalClass(1.0, 2.0, base=base)
    pspec = ProblemSpec(DOMAIN, 0.025, ramp, EquationKind.EXTREMAL_PLUS, cls=cls)
    couplings = build_stencil(base, pspec.grid).couplings
    with pytest.raises(exceptions.BudgetExhausted, match="stable policy"):
        solve(pspec, initial_policy=np.full(len(couplings), 1.0))


def test_non_finite_exterior_rejected(base):
    with pytest.raises(exceptions.PreconditionError):
        solve(ProblemSpec(DOMAIN, 0.025, constant(np.inf), kernels=[base]))


@pytest.mark.parametrize("text, point, value", [
    ("constant:2", [3.0], 2.0),
    ("indicator:0.6:1", [0.8], 1.0),
    ("indicator:0.6:1", [1.2], 0.0),
    ("step:1", [1.5], 0.5),
    ("step:1", [0.5], -0.5),
    ("ramp", [-4.0], -1.0),
    ("bump:0.2", [1.0], 1.0),
])
def test_exterior_catalog(text, point, value):
    g = exterior_from_text(text, DOMAIN)
    assert g(np.array([point]))[0] == pytest.approx(value)


@pytest.mark.parametrize("text", ["constant", "step:a", "wave:1"])
def test_exterior_catalog_rejects(text):
    with pytest.raises(exceptions.ConfigError):
        exterior_from_text(text, DOMAIN)


@pytest.mark.slow
def test_refinement_error_decreases():
    kspec = kernel_factories.fractional(1.0)
    g = exterior_from_text("indicator:0.6:1", DOMAIN)
    solutions = [solve(ProblemSpec(DOMAIN, h, g, kernels=[kspec])).u for h in (0.05, 0.025, 0.0125)]
    coarse = solutions[0].nodes
    inner = coarse[np.abs(coarse[:, 0]) <= 0.8 * DOMAIN.radius]
    e1 = np.max(np.abs(solutions[0](inner) - solutions[1](inner)))
    e2 = np.max(np.abs(solutions[1](inner) - solutions[2](inner)))
    assert e1 / e2 >= 1.5
    # against the 4x finer solve on every coarse node
    assert np.max(np.abs(solutions[0](coarse) - solutions[2](coarse))) < 2e-2


@pytest.mark.slow
def test_oscillation_step_on_a_solved_problem():
    kspec = kernel_factories.get("power_1.5")
    cls = ExtremalClass(1.0, 2.0, base=kspec)
    consts = derive_constants(kspec, cls)
    r = 0.9 * consts.r1
    domain = Ball([0.0], r)
    solution = solve(ProblemSpec(domain, r / 20, lambda p: np.where(p[:, 0] >= 2 * r, 0.5, -0.5),
                                 EquationKind.MIDPOINT, cls=cls))
    rescaled = dyadic_rescale(solution.u, 0.0, r, 0, consts.gamma)
    assert not rescaled.flipped
    field = residual(cls, rescaled.function, solution.stencil)
    report = verify_oscillation_lemma(rescaled.function, 0.0, r, consts,
                                      plus_residual=field.on_box(field.scaled_plus))
    assert report.asserted, report.details
    assert report.passed
