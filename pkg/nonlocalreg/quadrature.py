"""Radial quadrature for the singular and tail integrals of the kernel class.

Integrals over R^d are reduced to one-dimensional integrals in the radius
rho = |y - x|,

    int g(y) K(x, y) dy = int_0^inf rho^(d-1) J(rho) A(rho) drho,

where A(rho) is the angular sum of g * multiplier over the unit sphere
(two points in d = 1, a trapezoid rule in d = 2).  Each radial panel is
integrated by scipy's adaptive quadrature in the variable v = ln(rho),
which turns the algebraic singularity at rho = 0 and the power tail at
rho = inf into exponentially decaying ends.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np
from scipy import integrate, special

from nonlocalreg import exceptions
from nonlocalreg.kinds import MomentKind

if TYPE_CHECKING:
    from nonlocalreg.kernel import KernelSpec
    from nonlocalreg.scaling import ScalingFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    split_radii: Tuple[float, ...] = ()
    max_panels: int = 200
    # inner shell radius, relative to the length scale of the integrand
    inner_fraction: float = 1e-5
    angular_nodes: int = 64

    def scaled(self, factor: float) -> QuadratureConfig:
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=self.rel_tol * factor)

    def with_splits(self, *radii: float) -> QuadratureConfig:
        extra = {float(r) for r in radii if r > 0 and math.isfinite(r)}
        return replace(self, split_radii=tuple(sorted(set(self.split_radii) | extra)))


DEFAULT_CONFIG = QuadratureConfig()


@dataclass
class QuadResult:
    value: float
    error: float

    def __add__(self, other: QuadResult) -> QuadResult:
        return QuadResult(self.value + other.value, self.error + other.error)

    def scale(self, factor: float) -> QuadResult:
        return QuadResult(self.value * factor, self.error * abs(factor))

    def __float__(self) -> float:
        return self.value


ZERO = QuadResult(0.0, 0.0)


def omega(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)


def directions(d: int, nodes: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """Unit directions and weights whose sum is omega(d)."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        theta = 2.0 * math.pi * np.arange(nodes) / nodes
        return np.stack((np.cos(theta), np.sin(theta)), axis=1), np.full(nodes, 2.0 * math.pi / nodes)
    raise exceptions.PreconditionError(f"radial quadrature is implemented for d = 1, 2 only (d={d})")


def _log_integrand(h: Callable[[float], float]) -> Callable[[float], float]:
    def integrand(v: float) -> float:
        rho = math.exp(v)
        if rho == 0.0 or math.isinf(rho):
            return 0.0
        with np.errstate(all="ignore"):
            value = float(h(rho)) * rho
        # overflow of f(1/rho) against underflow of rho: the product tends to 0
        return value if math.isfinite(value) else 0.0
    return integrand


def quad_panel(h: Callable[[float], float], a: float, b: float,
               cfg: QuadratureConfig = DEFAULT_CONFIG) -> QuadResult:
    """Integrate h over [a, b] in the log variable; a may be 0 and b may be inf."""
    if not b > a:
        return ZERO
    lo = -np.inf if a == 0 else math.log(a)
    hi = np.inf if math.isinf(b) else math.log(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(
            _log_integrand(h), lo, hi,
            epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_panels, full_output=1,
        )
    value, error = float(out[0]), float(out[1])
    if len(out) > 3:  # scipy appends a message only when the integrator gave up
        allowed = max(cfg.abs_tol, cfg.rel_tol * abs(value))
        if not math.isfinite(value) or error > 10.0 * allowed:
            raise exceptions.QuadratureFailure(
                f"quadrature on [{a:.6g}, {b:.6g}] failed: {out[3]}", value, error
            )
        logger.debug("quadrature on [%g, %g] accepted with error %g: %s", a, b, error, out[3])
    return QuadResult(value, error)


def radial_integral(kspec: KernelSpec, angular: Callable[[float], float],
                    cfg: QuadratureConfig = DEFAULT_CONFIG, start: float = 0.0,
                    stop: float = math.inf, splits: Iterable[float] = ()) -> QuadResult:
    """int_start^stop rho^(d-1) J(rho) A(rho) drho, split at r0, the tail radius and `splits`."""
    stop = min(stop, kspec.upper)
    if not stop > start:
        return ZERO
    cuts = sorted(
        {float(c) for c in (*cfg.split_radii, *splits, *kspec.breakpoints()) if start < c < stop}
    )
    edges = [start, *cuts, stop]
    d = kspec.d

    def h(rho: float) -> float:
        return rho ** (d - 1) * kspec.radial(rho) * angular(rho)

    total = ZERO
    for a, b in zip(edges[:-1], edges[1:]):
        total = total + quad_panel(h, a, b, cfg)
    return total


def singular_integral(kspec: KernelSpec, g: Callable[[np.ndarray], np.ndarray], x,
                      cfg: QuadratureConfig = DEFAULT_CONFIG, start: float = 0.0,
                      splits: Iterable[float] = ()) -> QuadResult:
    """int g(y) K(x, y) dy over |y - x| > start.

    `g` maps an (m, d) array of points to m values.  The caller asserts that
    g(y) K(x, y) is integrable near x.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dirs, weights = directions(kspec.d, cfg.angular_nodes)
    multiplier = kspec.multiplier

    def angular(rho: float) -> float:
        y = x + rho * dirs
        values = np.asarray(g(y), dtype=float)
        if multiplier is not None:
            values = values * multiplier(x, y)
        return float(np.dot(weights, values))

    return radial_integral(kspec, angular, cfg, start=start, splits=splits)


def shell_moment(kspec: KernelSpec, radius: float, order: float,
                 cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """int_0^radius rho^(d-1+order) J(rho) drho, the moment of an inner shell."""
    return radial_integral(kspec, lambda rho: rho ** order, cfg, stop=radius).value


def wedge_integral(kspec: KernelSpec, x, r: float,
                   cfg: QuadratureConfig = DEFAULT_CONFIG) -> QuadResult:
    """int (1 ^ (|y-x|/r)^2) K(x, y) dy."""
    if not 0 < r <= kspec.r0 * (1 + 1e-12):
        raise exceptions.PreconditionError(f"wedge integral needs 0 < r <= r0, got r={r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def g(y):
        return np.minimum(1.0, (np.linalg.norm(y - x, axis=-1) / r) ** 2)

    return singular_integral(kspec, g, x, cfg, splits=(r,))


def growth_integral(kspec: KernelSpec, x, s: float, eta: float,
                    cfg: QuadratureConfig = DEFAULT_CONFIG) -> QuadResult:
    """int over |y-x| > s/4 of ((2(4|y-x| ^ r0)/s)^eta - 1) K(x, y) dy."""
    delta1 = kspec.scaling.delta1
    if s <= 0:
        raise exceptions.PreconditionError(f"growth integral needs s > 0, got s={s}")
    if not 0 <= eta < delta1:
        raise exceptions.PreconditionError(
            f"growth integral needs 0 <= eta < delta1={delta1:g}, got eta={eta:g}; the far part diverges"
        )
    if eta == 0:
        return ZERO
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r0 = kspec.r0

    def g(y):
        rho = np.linalg.norm(y - x, axis=-1)
        return (2.0 * np.minimum(4.0 * rho, r0) / s) ** eta - 1.0

    return singular_integral(kspec, g, x, cfg, start=s / 4, splits=(r0 / 4,))


def growth_tail_integral(eta: float, delta1: float) -> float:
    """int_1^inf ((2t)^eta - 1) t^(-delta1-1) dt in closed form."""
    if not 0 <= eta < delta1:
        raise exceptions.PreconditionError(f"needs 0 <= eta < delta1, got eta={eta}, delta1={delta1}")
    return 2.0 ** eta / (delta1 - eta) - 1.0 / delta1


@dataclass
class MomentResult:
    kind: MomentKind
    r: float
    value: float
    bound: float
    error: float
    slack: float

    @property
    def margin(self) -> float:
        """Relative slack of the bound; negative when violated."""
        return (self.bound - self.value) / self.bound

    @property
    def passed(self) -> bool:
        return self.margin >= -self.slack


def applicable_kinds(fspec: ScalingFunction) -> Sequence[MomentKind]:
    kinds = [MomentKind.F0, MomentKind.FR0]
    if fspec.delta2 < 1:
        kinds.append(MomentKind.GRADF0)
    if fspec.delta1 > 1:
        kinds.append(MomentKind.GRADFR0)
    return kinds


def radial_moment(fspec: ScalingFunction, r: float, kind: MomentKind,
                  cfg: QuadratureConfig = DEFAULT_CONFIG) -> MomentResult:
    r0 = fspec.r0
    if not 0 < r < r0:
        raise exceptions.PreconditionError(f"radial moments need 0 < r < r0={r0:g}, got r={r:g}")
    if kind is MomentKind.GRADF0 and not fspec.delta2 < 1:
        raise exceptions.PreconditionError("the gradf0 bound needs delta2 < 1")
    if kind is MomentKind.GRADFR0 and not fspec.delta1 > 1:
        raise exceptions.PreconditionError("the gradfr0 bound needs delta1 > 1")

    f = fspec.profile
    a1, a2, d1, d2 = fspec.a1, fspec.a2, fspec.delta1, fspec.delta2
    f_r = float(f(1.0 / r))

    if kind is MomentKind.F0:
        integral = quad_panel(lambda s: s * f(1.0 / s), 0.0, r, cfg).scale(r ** -2)
        bound = a2 / (2.0 - d2) * f_r
    elif kind is MomentKind.FR0:
        integral = quad_panel(lambda s: f(1.0 / s) / s, r, r0, cfg)
        bound = f_r / (a1 * d1)
    elif kind is MomentKind.GRADF0:
        integral = quad_panel(lambda s: f(1.0 / s), 0.0, r, cfg).scale(1.0 / r)
        bound = a2 / (1.0 - d2) * f_r
    else:
        integral = quad_panel(lambda s: f(1.0 / s), r, r0, cfg).scale(1.0 / r)
        bound = f_r / (a1 * (d1 - 1.0))

    return MomentResult(
        kind=kind,
        r=r,
        value=integral.value,
        bound=bound,
        error=integral.error,
        slack=max(cfg.rel_tol, integral.error / bound),
    )
