"""Spatial kernels J(x, y) and the comparability classes built over them."""
from __future__ import annotations

import copy
import logging
import math
from typing import Callable, List, Optional, TYPE_CHECKING

import numpy as np

from nonlocalreg import exceptions
from nonlocalreg.kinds import TailKind
from nonlocalreg.quadrature import DEFAULT_CONFIG, QuadratureConfig, omega, radial_integral

if TYPE_CHECKING:
    from nonlocalreg.scaling import ScalingFunction

logger = logging.getLogger(__name__)


class TailModel:
    """Radial continuation of J beyond r0, as a factor on the near-diagonal formula."""
    kind: TailKind

    def factor(self, rho, r0: float):
        raise NotImplementedError()

    @property
    def upper(self) -> float:
        """Radius beyond which the kernel vanishes."""
        return math.inf

    def describe(self) -> str:
        raise NotImplementedError()


class PowerContinuation(TailModel):
    kind = TailKind.POWER_CONTINUATION

    def factor(self, rho, r0):
        return np.ones_like(rho, dtype=float)

    def describe(self):
        return "power_continuation"


class Truncate(TailModel):
    kind = TailKind.TRUNCATE

    def __init__(self, radius: float):
        self.radius = float(radius)

    def factor(self, rho, r0):
        return np.where(rho <= self.radius, 1.0, 0.0)

    @property
    def upper(self):
        return self.radius

    def describe(self):
        return f"truncate:{self.radius!r}"


class ExponentialDamping(TailModel):
    kind = TailKind.EXPONENTIAL_DAMPING

    def __init__(self, rate: float):
        if rate <= 0:
            raise exceptions.PreconditionError(f"damping rate must be positive, got {rate}")
        self.rate = float(rate)

    def factor(self, rho, r0):
        return np.exp(-self.rate * (rho - r0))

    def describe(self):
        return f"exponential_damping:{self.rate!r}"


def parse_tail(text: str) -> TailModel:
    name, _, arg = text.strip().partition(":")
    try:
        if name == "power_continuation":
            return PowerContinuation()
        if name == "truncate":
            return Truncate(float(arg))
        if name == "exponential_damping":
            return ExponentialDamping(float(arg))
    except ValueError as exc:
        raise exceptions.ConfigError(f"bad tail argument in {text!r}") from exc
    raise exceptions.ConfigError(f"unknown tail model {text!r}")


class Multiplier:
    """Bounded field m(x, y) turning J into a concrete kernel K = m J."""

    def __init__(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray], lower: float,
                 upper: float, name: str = "custom"):
        self.func = func
        self.lower = float(lower)
        self.upper = float(upper)
        self.name = name

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(x, y), dtype=float)


def constant_multiplier(level: float) -> Multiplier:
    return Multiplier(lambda x, y: np.full(len(y), level), level, level, name=f"constant:{level!r}")


def sine_multiplier(lam: float, Lam: float) -> Multiplier:
    def func(x, y):
        return lam + (Lam - lam) * (1.0 + np.sin(x[0] + y[:, 0])) / 2.0
    return Multiplier(func, lam, Lam, name="sine")


def random_multiplier(lam: float, Lam: float, rng: np.random.Generator, d: int = 1,
                      modes: int = 3) -> Multiplier:
    """A seeded smooth multiplier with values in [lam, Lam]."""
    a = rng.normal(size=(modes, d))
    b = rng.normal(size=(modes, d))
    c = rng.uniform(0.0, 2.0 * math.pi, size=modes)

    def func(x, y):
        phase = (x @ a.T)[None, :] + y @ b.T + c[None, :]
        return lam + (Lam - lam) * (1.0 + np.sin(phase).mean(axis=1)) / 2.0

    return Multiplier(func, lam, Lam, name="random")


class KernelSpec:
    def __init__(self, scaling: ScalingFunction, d: int = 1, tail: Optional[TailModel] = None,
                 multiplier: Optional[Multiplier] = None, name: str = "<unnamed>"):
        if d < 1:
            raise exceptions.PreconditionError(f"dimension must be positive, got d={d}")
        self.scaling = scaling
        self.d = int(d)
        self.tail = PowerContinuation() if tail is None else tail
        if self.tail.upper < scaling.r0:
            raise exceptions.PreconditionError("a truncation radius below r0 cuts the near-diagonal part")
        self.multiplier = multiplier
        self.name = name
        self._tail_mass: Optional[float] = None

    @property
    def r0(self) -> float:
        return self.scaling.r0

    @property
    def upper(self) -> float:
        return self.tail.upper

    @property
    def M0(self) -> float:
        return tail_mass(self)

    def breakpoints(self) -> List[float]:
        points = [self.r0]
        if math.isfinite(self.upper):
            points.append(self.upper)
        return points

    def radial(self, rho):
        """J as a function of rho = |x - y| > 0, vectorized."""
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            near = self.scaling.profile(1.0 / rho) / rho ** self.d
            return np.where(rho < self.r0, near, near * self.tail.factor(rho, self.r0))

    def without_multiplier(self) -> KernelSpec:
        if self.multiplier is None:
            return self
        return self.with_multiplier(None)

    def with_multiplier(self, multiplier: Optional[Multiplier]) -> KernelSpec:
        clone = copy.copy(self)
        clone.multiplier = multiplier
        return clone

    def __repr__(self):
        return f"KernelSpec({self.name}, d={self.d}, {self.scaling!r}, tail={self.tail.describe()})"


def eval_kernel(kspec: KernelSpec, x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1 and y.shape[0] == kspec.d
    y = y.reshape(-1, kspec.d)
    rho = np.linalg.norm(y - x, axis=-1)
    if np.any(rho == 0):
        raise exceptions.SingularPoint("the kernel is singular on the diagonal x = y")
    value = kspec.radial(rho)
    if kspec.multiplier is not None:
        value = value * kspec.multiplier(x, y)
    return float(value[0]) if single else value


def far_exponent(fspec: ScalingFunction) -> float:
    """Log-slope of f near t = 0: the decay rate of the power continuation."""
    t1, t2 = 1e-10 / fspec.r0, 1e-8 / fspec.r0
    f1, f2 = float(fspec.profile(t1)), float(fspec.profile(t2))
    if f1 <= 0 or f2 <= 0:
        return math.inf
    return math.log(f2 / f1) / math.log(t2 / t1)


def tail_mass(kspec: KernelSpec, x=None, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """int_{|y-x| >= r0} J(x, y) dy; independent of x for radial tails."""
    if kspec._tail_mass is not None:
        return kspec._tail_mass
    if kspec.tail.kind is TailKind.POWER_CONTINUATION and far_exponent(kspec.scaling) <= 1e-3:
        raise exceptions.DivergentTail(
            f"{kspec!r}: the power continuation decays no faster than |z|^-d and has infinite mass"
        )
    mass = omega(kspec.d) * radial_integral(kspec, lambda rho: 1.0, cfg, start=kspec.r0).value
    kspec._tail_mass = mass
    return mass


def continuity_jump(kspec: KernelSpec) -> float:
    """Size of the jump of J across |x - y| = r0."""
    r0 = kspec.r0
    inner = float(kspec.scaling.profile(1.0 / r0)) / r0 ** kspec.d
    outer = inner * float(kspec.tail.factor(np.nextafter(r0, math.inf), r0))
    return abs(inner - outer)


class ExtremalClass:
    """Kernels K with lam J <= K <= Lam J, optionally restricted to K(x, x+z) = K(x, x-z)."""

    def __init__(self, lam: float, Lam: float, symmetric: bool = False,
                 base: Optional[KernelSpec] = None):
        if not 0 < lam <= Lam:
            raise exceptions.PreconditionError(f"needs 0 < lambda <= Lambda, got {lam}, {Lam}")
        if base is None:
            raise exceptions.PreconditionError("an extremal class needs a base kernel")
        self.lam = float(lam)
        self.Lam = float(Lam)
        self.symmetric = bool(symmetric)
        self.base = base.without_multiplier()

    @property
    def compensated(self) -> bool:
        return self.base.scaling.delta2 >= 1

    def check_case(self) -> None:
        scaling = self.base.scaling
        if not self.symmetric and scaling.delta1 <= 1 <= scaling.delta2:
            raise exceptions.CaseMismatch(
                f"delta1={scaling.delta1:g} <= 1 <= delta2={scaling.delta2:g} needs the symmetric class"
            )

    def admits(self, kspec: KernelSpec) -> bool:
        if kspec.multiplier is None:
            return self.lam <= 1.0 <= self.Lam
        return self.lam <= kspec.multiplier.lower and kspec.multiplier.upper <= self.Lam

    def member(self, level: float) -> KernelSpec:
        """The kernel level * J, a member of the class for lam <= level <= Lam."""
        if not self.lam <= level <= self.Lam:
            raise exceptions.PreconditionError(f"level {level} lies outside [{self.lam}, {self.Lam}]")
        return self.base.with_multiplier(constant_multiplier(level))

    def __repr__(self):
        kind = "symmetric" if self.symmetric else "general"
        return f"ExtremalClass({kind}, lambda={self.lam:g}, Lambda={self.Lam:g}, base={self.base.name})"
