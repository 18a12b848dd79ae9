"""Nonlocal Dirichlet problems: I u = 0 in a ball or box, u = g outside.

Every equation is reduced to linear solves with frozen policies:

- linear: one kernel, one solve;
- bellman_max / bellman_min: per-node choice of a kernel from a family;
- extremal_plus / extremal_minus: per-coupling choice of lam or Lam (Pucci);
- midpoint: (M^+ + M^-)/2, which is linear with level (lam + Lam)/2;
- isaacs: sup over one family of inf over another of (L_a + L_b)/2, by
  nested policy iteration.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from nonlocalreg import exceptions
from nonlocalreg.functions import GridFunction, beta
from nonlocalreg.kernel import ExtremalClass, KernelSpec
from nonlocalreg.kinds import EquationKind
from nonlocalreg.quadrature import DEFAULT_CONFIG, QuadratureConfig
from nonlocalreg.stencil import TIE_TOLERANCE, Box, Grid, StencilMatrix, build_stencil

logger = logging.getLogger(__name__)

Exterior = Callable[[np.ndarray], np.ndarray]

FAMILY_EQUATIONS = (EquationKind.BELLMAN_MAX, EquationKind.BELLMAN_MIN, EquationKind.ISAACS)
CLASS_EQUATIONS = (EquationKind.EXTREMAL_PLUS, EquationKind.EXTREMAL_MINUS, EquationKind.MIDPOINT)


@dataclass
class ProblemSpec:
    domain: object
    h: float
    exterior: Exterior
    equation: EquationKind = EquationKind.LINEAR
    kernels: Sequence[KernelSpec] = ()
    inf_kernels: Sequence[KernelSpec] = ()
    cls: Optional[ExtremalClass] = None
    tolerance: float = 1e-8
    max_iterations: int = 50
    cfg: QuadratureConfig = DEFAULT_CONFIG

    def __post_init__(self):
        if not self.h > 0:
            raise exceptions.PreconditionError(f"grid step must be positive, got {self.h}")
        if self.tolerance <= 0:
            raise exceptions.PreconditionError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise exceptions.PreconditionError("max_iterations must be at least 1")
        eq = self.equation
        if eq is EquationKind.LINEAR and len(self.kernels) != 1:
            raise exceptions.PreconditionError("a linear problem takes exactly one kernel")
        if eq in FAMILY_EQUATIONS and not self.kernels:
            raise exceptions.PreconditionError(f"{eq.value} needs a nonempty kernel family")
        if eq is EquationKind.ISAACS and not self.inf_kernels:
            raise exceptions.PreconditionError("isaacs needs a second (inf) kernel family")
        if eq in CLASS_EQUATIONS and self.cls is None:
            raise exceptions.PreconditionError(f"{eq.value} needs an extremal class")
        self._grid: Optional[Grid] = None

    @property
    def all_kernels(self) -> List[KernelSpec]:
        if self.equation in CLASS_EQUATIONS:
            return [self.cls.base]
        return [*self.kernels, *self.inf_kernels]

    @property
    def r0(self) -> float:
        return min(k.r0 for k in self.all_kernels)

    @property
    def radius(self) -> float:
        return self.domain.half_width

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            self._grid = Grid(self.domain, self.h)
        return self._grid


@dataclass
class Solution:
    u: GridFunction
    stencils: List[StencilMatrix]
    inner: np.ndarray
    iterations: int
    residual: float
    policy: Optional[np.ndarray] = None
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def stencil(self) -> StencilMatrix:
        return self.stencils[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.stencil.nodes

    def summary(self) -> Dict[str, float]:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "unknowns": self.stencil.N,
            "h": self.stencil.grid.h,
            "u_min": float(self.inner.min()),
            "u_max": float(self.inner.max()),
        }


def _spsolve(A: sparse.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    u = sparse_linalg.spsolve(A.tocsc(), rhs)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not np.all(np.isfinite(u)):
        raise exceptions.Impossible("singular stencil system")
    return u


def _policy_key(policy: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(policy).tobytes()).hexdigest()


def _scaled(values: np.ndarray, diag: np.ndarray) -> np.ndarray:
    return values / np.where(diag > 0, diag, 1.0)


def _solve_refined(A: sparse.csr_matrix, load: np.ndarray, tolerance: float,
                   max_iterations: int) -> Tuple[np.ndarray, float, int]:
    """A u = -load, refined until the diagonal-scaled residual is below tolerance."""
    diag = -A.diagonal()
    u = _spsolve(A, -load)
    for step in range(1, max_iterations + 1):
        r = A @ u + load
        res = float(np.max(np.abs(_scaled(r, diag)))) if len(r) else 0.0
        if res <= tolerance:
            return u, res, step
        u = u + _spsolve(A, -r)
    raise exceptions.BudgetExhausted(f"linear solve residual {res:g} above {tolerance:g}",
                                     max_iterations)


def _check_exterior(stencil: StencilMatrix, g: Exterior) -> np.ndarray:
    ext = stencil.exterior_values(g)
    if not np.all(np.isfinite(ext)):
        raise exceptions.PreconditionError("exterior data must be finite and bounded")
    return ext


def _result(stencils: List[StencilMatrix], inner: np.ndarray, g: Exterior, ext: np.ndarray,
            **kwargs) -> Solution:
    stencil = stencils[0]
    values = stencil.box_values(inner, g)
    bound = float(max(np.max(np.abs(values)), np.max(np.abs(ext)) if len(ext) else 0.0))
    u = GridFunction(stencil.grid.lo, stencil.grid.h, values, g, bound=bound)
    return Solution(u, stencils, inner, **kwargs)


def solve_dirichlet(pspec: ProblemSpec) -> Solution:
    if pspec.equation is not EquationKind.LINEAR:
        raise exceptions.PreconditionError(f"solve_dirichlet takes linear problems, got {pspec.equation.value}")
    stencil = build_stencil(pspec.kernels[0], pspec.grid, cfg=pspec.cfg)
    ext = _check_exterior(stencil, pspec.exterior)
    A, load = stencil.matrix(stencil.linear_levels(), ext)
    inner, res, steps = _solve_refined(A, load, pspec.tolerance, pspec.max_iterations)
    logger.info("linear solve: %d unknowns, residual %.3g", stencil.N, res)
    return _result([stencil], inner, pspec.exterior, ext, iterations=steps, residual=res,
                   history=[{"iteration": 1, "residual": res}])


class _Family:
    """Frozen-policy matrices of a kernel family sharing one grid."""

    def __init__(self, stencils: Sequence[StencilMatrix], g: Exterior):
        self.stencils = list(stencils)
        self.parts = []
        for s in self.stencils:
            ext = _check_exterior(s, g)
            self.parts.append(s.matrix(s.linear_levels(), ext))
        self.N = self.stencils[0].N

    def select(self, policy: np.ndarray) -> Tuple[sparse.csr_matrix, np.ndarray]:
        A = None
        load = np.zeros(self.N)
        for k, (Ak, lk) in enumerate(self.parts):
            mask = (policy == k).astype(float)
            chosen = sparse.diags(mask) @ Ak
            A = chosen if A is None else A + chosen
            load += mask * lk
        return A.tocsr(), load

    def values(self, u: np.ndarray) -> np.ndarray:
        """(family size, N) array of L_k u."""
        return np.stack([Ak @ u + lk for Ak, lk in self.parts])

    def scale(self) -> np.ndarray:
        return np.max(np.stack([-Ak.diagonal() for Ak, _ in self.parts]), axis=0)


def _improve(values: np.ndarray, policy: np.ndarray, scale: np.ndarray, sense: int) -> np.ndarray:
    """Best kernel per node; the previous choice is kept on ties."""
    best = np.argmax(values, axis=0) if sense > 0 else np.argmin(values, axis=0)
    cols = np.arange(values.shape[1])
    gain = sense * (values[best, cols] - values[policy, cols]) / scale
    return np.where(gain > TIE_TOLERANCE, best, policy)


def _policy_iteration(select: Callable[[np.ndarray], Tuple[sparse.csr_matrix, np.ndarray]],
                      values: Callable[[np.ndarray], np.ndarray], scale: np.ndarray, sense: int,
                      policy: np.ndarray, tolerance: float, max_iterations: int,
                      history: Optional[List[Dict[str, float]]] = None, label: str = "policy"):
    seen = {}
    for it in range(1, max_iterations + 1):
        seen[_policy_key(policy)] = it
        A, load = select(policy)
        u, _, _ = _solve_refined(A, load, tolerance, max_iterations)
        vals = values(u)
        new = _improve(vals, policy, scale, sense)
        extreme = vals.max(axis=0) if sense > 0 else vals.min(axis=0)
        res = float(np.max(np.abs(extreme / scale)))
        changed = int(np.count_nonzero(new != policy))
        logger.debug("%s iteration %d: %d changes, residual %.3g", label, it, changed, res)
        if history is not None:
            history.append({"iteration": it, "changed": changed, "residual": res,
                            "u_min": float(u.min()), "u_max": float(u.max())})
        if changed == 0:
            if res > tolerance:
                raise exceptions.BudgetExhausted(
                    f"{label}: stable policy with residual {res:g} above {tolerance:g}", it)
            return u, policy, it, res
        key = _policy_key(new)
        if key in seen:
            raise exceptions.PolicyCycle(it + 1 - seen[key])
        policy = new
    raise exceptions.BudgetExhausted(f"{label} iteration did not settle", max_iterations)


def _solve_family(pspec: ProblemSpec, sense: int, initial_policy: Optional[np.ndarray]) -> Solution:
    stencils = [build_stencil(k, pspec.grid, cfg=pspec.cfg) for k in pspec.kernels]
    family = _Family(stencils, pspec.exterior)
    policy = np.zeros(family.N, dtype=np.int64) if initial_policy is None else np.asarray(initial_policy, dtype=np.int64)
    if policy.shape != (family.N,) or policy.min() < 0 or policy.max() >= len(stencils):
        raise exceptions.PreconditionError("initial policy does not match the family and grid")
    history = []
    u, policy, it, res = _policy_iteration(family.select, family.values, family.scale(), sense,
                                           policy, pspec.tolerance, pspec.max_iterations, history,
                                           label=pspec.equation.value)
    ext = stencils[0].exterior_values(pspec.exterior)
    return _result(stencils, u, pspec.exterior, ext, iterations=it, residual=res, policy=policy,
                   history=history)


def _solve_isaacs(pspec: ProblemSpec, initial_policy: Optional[np.ndarray]) -> Solution:
    sup_family = _Family([build_stencil(k, pspec.grid, cfg=pspec.cfg) for k in pspec.kernels],
                         pspec.exterior)
    inf_family = _Family([build_stencil(k, pspec.grid, cfg=pspec.cfg) for k in pspec.inf_kernels],
                         pspec.exterior)
    N = sup_family.N
    outer = np.zeros(N, dtype=np.int64)
    inner = np.zeros(N, dtype=np.int64)
    if initial_policy is not None:
        outer, inner = (np.asarray(p, dtype=np.int64) for p in initial_policy)
    scale = 0.5 * (sup_family.scale() + inf_family.scale())
    history: List[Dict[str, float]] = []
    seen = {}
    for it in range(1, pspec.max_iterations + 1):
        seen[_policy_key(outer)] = it
        A_sup, l_sup = sup_family.select(outer)

        def select(policy, A_sup=A_sup, l_sup=l_sup):
            A_inf, l_inf = inf_family.select(policy)
            return 0.5 * (A_sup + A_inf), 0.5 * (l_sup + l_inf)

        def values(u, A_sup=A_sup, l_sup=l_sup):
            return 0.5 * ((A_sup @ u + l_sup)[None, :] + inf_family.values(u))

        u, inner, _, _ = _policy_iteration(select, values, scale, -1, inner, pspec.tolerance,
                                           pspec.max_iterations, label="isaacs inner")
        # the inf part is fixed for the outer choice
        inf_part = inf_family.values(u)[inner, np.arange(N)]
        vals = 0.5 * (sup_family.values(u) + inf_part[None, :])
        new = _improve(vals, outer, scale, +1)
        res = float(np.max(np.abs(vals.max(axis=0) / scale)))
        changed = int(np.count_nonzero(new != outer))
        history.append({"iteration": it, "changed": changed, "residual": res,
                        "u_min": float(u.min()), "u_max": float(u.max())})
        if changed == 0:
            ext = sup_family.stencils[0].exterior_values(pspec.exterior)
            return _result(sup_family.stencils + inf_family.stencils, u, pspec.exterior, ext,
                           iterations=it, residual=res, policy=np.stack((outer, inner)),
                           history=history)
        key = _policy_key(new)
        if key in seen:
            raise exceptions.PolicyCycle(it + 1 - seen[key])
        outer = new
    raise exceptions.BudgetExhausted("isaacs outer iteration did not settle", pspec.max_iterations)


def _solve_extremal(pspec: ProblemSpec, sign: int, initial_levels: Optional[np.ndarray]) -> Solution:
    cls = pspec.cls
    stencil = build_stencil(cls.base, pspec.grid, symmetric=cls.symmetric, cfg=pspec.cfg)
    ext = _check_exterior(stencil, pspec.exterior)
    mid = 0.5 * (cls.lam + cls.Lam)
    levels = np.full(len(stencil.couplings), mid) if initial_levels is None else np.asarray(initial_levels, dtype=float)
    scale = stencil.diagonal(np.full(len(stencil.couplings), cls.Lam))
    history = []
    seen = {}
    for it in range(1, pspec.max_iterations + 1):
        seen[_policy_key(levels)] = it
        A, load = stencil.matrix(levels, ext)
        u, _, _ = _solve_refined(A, load, pspec.tolerance, pspec.max_iterations)
        V = stencil.extended(u, ext)
        new = stencil.bang_bang_levels(V, cls.lam, cls.Lam, sign, previous=levels)
        res = float(np.max(np.abs(_scaled(stencil.apply(V, new), scale))))
        changed = int(np.count_nonzero(new != levels))
        history.append({"iteration": it, "changed": changed, "residual": res,
                        "u_min": float(u.min()), "u_max": float(u.max())})
        if changed == 0:
            if res > pspec.tolerance:
                raise exceptions.BudgetExhausted(
                    f"extremal: stable policy with residual {res:g} above {pspec.tolerance:g}", it)
            return _result([stencil], u, pspec.exterior, ext, iterations=it, residual=res,
                           policy=levels, history=history)
        key = _policy_key(new)
        if key in seen:
            raise exceptions.PolicyCycle(it + 1 - seen[key])
        levels = new
    raise exceptions.BudgetExhausted("extremal iteration did not settle", pspec.max_iterations)


def _solve_midpoint(pspec: ProblemSpec) -> Solution:
    cls = pspec.cls
    stencil = build_stencil(cls.base, pspec.grid, symmetric=cls.symmetric, cfg=pspec.cfg)
    ext = _check_exterior(stencil, pspec.exterior)
    levels = np.full(len(stencil.couplings), 0.5 * (cls.lam + cls.Lam))
    A, load = stencil.matrix(levels, ext)
    inner, res, steps = _solve_refined(A, load, pspec.tolerance, pspec.max_iterations)
    return _result([stencil], inner, pspec.exterior, ext, iterations=steps, residual=res,
                   policy=levels, history=[{"iteration": 1, "residual": res}])


def solve_bellman(pspec: ProblemSpec, initial_policy: Optional[np.ndarray] = None) -> Solution:
    """Policy iteration for the nonlinear equations; see the module docstring."""
    eq = pspec.equation
    if eq is EquationKind.BELLMAN_MAX:
        solution = _solve_family(pspec, +1, initial_policy)
    elif eq is EquationKind.BELLMAN_MIN:
        solution = _solve_family(pspec, -1, initial_policy)
    elif eq is EquationKind.ISAACS:
        solution = _solve_isaacs(pspec, initial_policy)
    elif eq is EquationKind.EXTREMAL_PLUS:
        solution = _solve_extremal(pspec, +1, initial_policy)
    elif eq is EquationKind.EXTREMAL_MINUS:
        solution = _solve_extremal(pspec, -1, initial_policy)
    elif eq is EquationKind.MIDPOINT:
        solution = _solve_midpoint(pspec)
    else:
        raise exceptions.PreconditionError("linear problems go through solve_dirichlet")
    logger.info("%s solve: %d iterations, residual %.3g", eq.value, solution.iterations, solution.residual)
    return solution


def solve(pspec: ProblemSpec, initial_policy: Optional[np.ndarray] = None) -> Solution:
    if pspec.equation is EquationKind.LINEAR:
        return solve_dirichlet(pspec)
    return solve_bellman(pspec, initial_policy)


@dataclass
class ResidualField:
    nodes: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    scale: np.ndarray
    stencil: StencilMatrix

    @property
    def scaled_plus(self) -> np.ndarray:
        return _scaled(self.plus, self.scale)

    @property
    def scaled_minus(self) -> np.ndarray:
        return _scaled(self.minus, self.scale)

    @property
    def min_plus(self) -> float:
        return float(self.scaled_plus.min())

    @property
    def max_minus(self) -> float:
        return float(self.scaled_minus.max())

    def on_box(self, values: np.ndarray) -> np.ndarray:
        return self.stencil.scatter(values)


def grid_of(u: GridFunction) -> Grid:
    """The full box lattice a grid function lives on."""
    if len(set(u.shape)) != 1:
        raise exceptions.PreconditionError("residuals need a cubic lattice")
    n = u.shape[0]
    center = u.lo + 0.5 * (n - 1) * u.h
    return Grid(Box(center, 0.5 * n * u.h), u.h)


def residual(cls: ExtremalClass, u: GridFunction, stencil: Optional[StencilMatrix] = None,
             cfg: QuadratureConfig = DEFAULT_CONFIG) -> ResidualField:
    """M^+_h u and M^-_h u at the unknowns of `stencil` (every box node by default)."""
    if stencil is None:
        stencil = build_stencil(cls.base, grid_of(u), symmetric=cls.symmetric, cfg=cfg)
    V = stencil.gather(u)
    plus = stencil.apply(V, stencil.bang_bang_levels(V, cls.lam, cls.Lam, +1))
    minus = stencil.apply(V, stencil.bang_bang_levels(V, cls.lam, cls.Lam, -1))
    scale = stencil.diagonal(np.full(len(stencil.couplings), cls.Lam))
    return ResidualField(stencil.nodes, plus, minus, scale, stencil)


def exterior_from_text(text: str, domain) -> Exterior:
    """Exterior data from the catalog: constant:c, indicator:a:b, step:a, ramp, bump:r."""
    name, _, rest = text.strip().partition(":")
    args = rest.split(":") if rest else []
    try:
        values = [float(a) for a in args]
    except ValueError as exc:
        raise exceptions.ConfigError(f"bad exterior arguments in {text!r}") from exc

    if name == "constant" and len(values) == 1:
        c = values[0]
        return lambda p: np.full(len(p), c)
    if name == "indicator" and len(values) == 2:
        a, b = values
        return lambda p: ((p[:, 0] >= a) & (p[:, 0] <= b)).astype(float)
    if name == "step" and len(values) == 1:
        a = values[0]
        return lambda p: np.where(p[:, 0] >= a, 0.5, -0.5)
    if name == "ramp" and not values:
        return lambda p: np.clip(p[:, 0], -1.0, 1.0)
    if name == "bump" and len(values) == 1:
        r = values[0]
        center = domain.center.copy()
        center[0] += 2.0 * domain.half_width
        return lambda p: beta(np.linalg.norm(p - center, axis=-1) / r)
    raise exceptions.ConfigError(f"unknown exterior data {text!r}")
