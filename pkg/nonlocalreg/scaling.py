"""Scaling profiles f and their weak-scaling certificates.

A profile f: [0, inf) -> [0, inf) enters the near-diagonal kernel as
J(x, y) = f(|x-y|^-1) / |x-y|^d.  Every profile carries the constants of
the two-sided sandwich

    a1 * s**delta1 <= f(s*t) / f(t) <= a2 * s**delta2,   s >= 1, t >= 1/r0,

which `check_weak_scaling` certifies on a sample grid.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np

from nonlocalreg.exceptions import PreconditionError
from nonlocalreg import levy

if TYPE_CHECKING:
    from nonlocalreg.levy import BernsteinSpec

logger = logging.getLogger(__name__)

SCALING_TOLERANCE = 1e-12


def default_s_grid() -> np.ndarray:
    return np.geomspace(1.0, 1e3, 32)


def default_t_grid(r0: float) -> np.ndarray:
    return np.geomspace(1.0 / r0, 1e3 / r0, 32)


class ScalingFunction:
    family = "<unnamed>"

    def __init__(self, a1: float, a2: float, delta1: float, delta2: float, r0: float = 1.0):
        if a1 <= 0 or a2 <= 0:
            raise PreconditionError(f"a1 and a2 must be positive, got a1={a1}, a2={a2}")
        for name, delta in (("delta1", delta1), ("delta2", delta2)):
            if not 0.0 < delta < 2.0:
                raise PreconditionError(f"{name} must lie in (0, 2), got {delta}")
        if delta1 > delta2:
            raise PreconditionError(f"delta1={delta1} exceeds delta2={delta2}")
        if r0 <= 0:
            raise PreconditionError(f"r0 must be positive, got {r0}")
        self.a1 = float(a1)
        self.a2 = float(a2)
        self.delta1 = float(delta1)
        self.delta2 = float(delta2)
        self.r0 = float(r0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise PreconditionError("scaling profile evaluated at negative t")
        return self.profile(t)

    def profile(self, t: np.ndarray) -> np.ndarray:
        """f evaluated on nonnegative input, vectorized."""
        raise NotImplementedError()

    @property
    def params(self) -> dict:
        raise NotImplementedError()

    def with_certificate(self, **constants) -> ScalingFunction:
        """Return a copy with some of (a1, a2, delta1, delta2, r0) replaced."""
        clone = copy.copy(self)
        for name, value in constants.items():
            if name not in ("a1", "a2", "delta1", "delta2", "r0"):
                raise PreconditionError(f"unknown scaling constant {name!r}")
            setattr(clone, name, float(value))
        return clone

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return (
            f"{self.family}({args}; a1={self.a1:g}, a2={self.a2:g}, "
            f"delta1={self.delta1:g}, delta2={self.delta2:g}, r0={self.r0:g})"
        )


class PowerScaling(ScalingFunction):
    family = "power"

    def __init__(self, alpha: float, r0: float = 1.0, a1: float = 1.0, a2: float = 1.0,
                 delta1: Optional[float] = None, delta2: Optional[float] = None):
        self.alpha = float(alpha)
        super().__init__(
            a1, a2,
            alpha if delta1 is None else delta1,
            alpha if delta2 is None else delta2,
            r0,
        )

    def profile(self, t):
        return np.power(t, self.alpha)

    @property
    def params(self):
        return {"alpha": self.alpha}


def _log_factor_extreme(p: float, gap: float, r0: float) -> float:
    """Extreme over s >= 1 of (1 + c ln s)**p * s**-gap, c = 1/ln(1 + 1/r0).

    For t >= 1/r0 the ratio ln(1 + st) / ln(1 + t) lies in [1, 1 + c ln s], so
    this bounds f(st)/f(t) / s**(alpha + gap) from above (p > 0, gap > 0)
    or from below (p < 0, gap < 0).
    """
    if p == 0:
        return 1.0
    c = 1.0 / math.log1p(1.0 / r0)
    log_s = p / gap - 1.0 / c
    if log_s <= 0:
        return 1.0
    return (1.0 + c * log_s) ** p * math.exp(-gap * log_s)


class LogPerturbedScaling(ScalingFunction):
    """f(t) = t**alpha * ln(1 + t)**p, a logarithmic correction of the pure power."""
    family = "log_perturbed"

    def __init__(self, alpha: float, p: float, r0: float = 1.0, a1: Optional[float] = None,
                 a2: Optional[float] = None, delta1: Optional[float] = None,
                 delta2: Optional[float] = None):
        if p <= -alpha:
            raise PreconditionError(
                f"log_perturbed needs p > -alpha to stay non-decreasing near 0, got p={p}"
            )
        self.alpha = float(alpha)
        self.p = float(p)
        if p < 0:
            # f(st)/f(t) lies in [s**alpha (1 + c ln s)**p, s**alpha]
            if delta2 is None:
                delta2 = alpha
            if a2 is None:
                a2 = 1.0
            if delta1 is None:
                delta1 = alpha + p / 2.0
            if a1 is None:
                a1 = _log_factor_extreme(p, delta1 - alpha, r0) * (1.0 - 1e-9)
        else:
            if delta2 is None:
                delta2 = alpha if p == 0 else min(alpha + 0.5, (alpha + 2.0) / 2.0)
            if a2 is None:
                a2 = _log_factor_extreme(p, delta2 - alpha, r0) * (1.0 + 1e-9) if delta2 > alpha else 1.0
            if a1 is None:
                a1 = 1.0
            if delta1 is None:
                delta1 = alpha
        super().__init__(a1, a2, delta1, delta2, r0)

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.power(t, self.alpha) * np.power(np.log1p(t), self.p)
        return np.where(t > 0, value, 0.0)

    @property
    def params(self):
        return {"alpha": self.alpha, "p": self.p}


class MixedScaling(ScalingFunction):
    """f(t) = t**alpha + t**beta."""
    family = "mixed"

    def __init__(self, alpha: float, beta: float, r0: float = 1.0, a1: float = 1.0,
                 a2: float = 1.0, delta1: Optional[float] = None,
                 delta2: Optional[float] = None):
        self.alpha = float(alpha)
        self.beta = float(beta)
        low, high = sorted((self.alpha, self.beta))
        super().__init__(
            a1, a2,
            low if delta1 is None else delta1,
            high if delta2 is None else delta2,
            r0,
        )

    def profile(self, t):
        return np.power(t, self.alpha) + np.power(t, self.beta)

    @property
    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}


class BernsteinScaling(ScalingFunction):
    """f(t) = phi(t**2), the characteristic exponent of a subordinate Brownian motion.

    The sandwich constants are fitted by `levy.check_H` on the default grids.
    """
    family = "bernstein_induced"

    def __init__(self, bspec: BernsteinSpec, r0: Optional[float] = None):
        self.bspec = bspec
        r0 = levy.default_r0(bspec) if r0 is None else r0
        exponent = levy.ExponentProfile(bspec, r0=r0)
        fit = levy.check_H(exponent, default_t_grid(r0), default_s_grid())
        if not fit.passed:
            raise PreconditionError(f"{bspec!r} does not satisfy the scaling condition on the grid")
        super().__init__(fit.a1, fit.a2, fit.delta1, fit.delta2, r0)

    def profile(self, t):
        return levy.psi_from_bernstein(self.bspec, t)

    @property
    def params(self):
        return {"bernstein": self.bspec.family, **self.bspec.params}


def eval_scaling(fspec: ScalingFunction, t: float) -> float:
    return float(fspec(t))


@dataclass
class WeakScalingReport:
    worst_lower_margin: float
    worst_upper_margin: float
    passed: bool
    witness: Optional[Tuple[float, float]] = None
    monotone: bool = True


def is_nondecreasing(fspec: ScalingFunction, grid: Optional[Sequence[float]] = None) -> bool:
    if grid is None:
        grid = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, 241) / fspec.r0))
    values = fspec(np.sort(np.asarray(grid, dtype=float)))
    return bool(np.all(np.diff(values) >= -1e-14 * np.abs(values[1:])))


def check_weak_scaling(fspec: ScalingFunction, s_grid: Optional[Sequence[float]] = None,
                       t_grid: Optional[Sequence[float]] = None) -> WeakScalingReport:
    s_grid = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    t_grid = default_t_grid(fspec.r0) if t_grid is None else np.asarray(t_grid, dtype=float)
    if s_grid.size == 0 or t_grid.size == 0:
        raise PreconditionError("weak-scaling grids must be nonempty")
    if np.any(s_grid < 1.0) or np.any(t_grid < (1.0 - 1e-12) / fspec.r0):
        raise PreconditionError("weak scaling is only asserted for s >= 1 and t >= 1/r0")

    s, t = np.meshgrid(s_grid, t_grid, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = fspec(s * t) / fspec(t)
        lower = ratio / (fspec.a1 * s ** fspec.delta1) - 1.0
        upper = 1.0 - ratio / (fspec.a2 * s ** fspec.delta2)
    lower = np.where(np.isfinite(lower), lower, -np.inf)
    upper = np.where(np.isfinite(upper), upper, -np.inf)

    worst = np.minimum(lower, upper)
    passed = bool(worst.min() >= -SCALING_TOLERANCE)
    witness = None
    if not passed:
        i, j = np.unravel_index(np.argmin(worst), worst.shape)
        witness = (float(s[i, j]), float(t[i, j]))
        logger.info("weak scaling of %r fails at s=%g, t=%g", fspec, *witness)
    return WeakScalingReport(
        worst_lower_margin=float(lower.min()),
        worst_upper_margin=float(upper.min()),
        passed=passed,
        witness=witness,
        monotone=is_nondecreasing(fspec),
    )
