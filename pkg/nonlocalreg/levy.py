"""Subordinate Brownian motions: exponents, scaling fits and jump densities.

A Bernstein function phi(lam) = b lam + int (1 - e^{-lam t}) mu(dt) gives the
characteristic exponent psi(t) = phi(t^2) of Brownian motion run on the
subordinator clock, and its jump density

    nu(x) = int_0^inf (4 pi t)^(-d/2) exp(-|x|^2 / (4t)) mu(t) dt.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from nonlocalreg import exceptions
from nonlocalreg.report_log import Record, check

logger = logging.getLogger(__name__)

FAMILIES = ("stable", "relativistic", "mixed", "log_perturbed")
ALMOST_INCREASING = math.pi ** 2
ENVELOPE_SAMPLES = 4001
# exp(-60) of the Gaussian factor is dropped below t_min
SHORT_TIME_EXPONENT = 60.0
TAIL_DIGITS = 10.0


@dataclass(frozen=True)
class BernsteinSpec:
    family: str
    params: Dict[str, float] = field(default_factory=dict)
    drift: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise exceptions.PreconditionError(f"unknown Bernstein family {self.family!r}")
        if self.drift < 0:
            raise exceptions.PreconditionError(f"drift must be nonnegative, got {self.drift}")
        p = self.params
        required = {
            "stable": ("alpha",),
            "relativistic": ("alpha", "m"),
            "mixed": ("alpha", "beta"),
            "log_perturbed": ("alpha", "p"),
        }[self.family]
        missing = [k for k in required if k not in p]
        if missing:
            raise exceptions.PreconditionError(f"{self.family} needs parameters {missing}")
        for key in ("alpha", "beta"):
            if key in p and not 0 < p[key] < 2:
                raise exceptions.PreconditionError(f"{key} must lie in (0, 2), got {p[key]}")
        if self.family == "relativistic" and p["m"] <= 0:
            raise exceptions.PreconditionError(f"mass must be positive, got {p['m']}")
        if self.family == "log_perturbed":
            alpha = p["alpha"]
            if not -alpha / 2 <= p["p"] <= (2 - alpha) / 2:
                raise exceptions.PreconditionError(
                    f"log_perturbed needs -alpha/2 <= p <= (2-alpha)/2, got p={p['p']}"
                )

    @property
    def alpha(self) -> float:
        return self.params["alpha"]

    @property
    def has_density(self) -> bool:
        return self.family != "log_perturbed"

    @property
    def tail_exponent(self) -> float:
        """Small-lam exponent of phi, which sets the large-t decay of mu."""
        if self.family == "mixed":
            return min(self.params["alpha"], self.params["beta"]) / 2
        return self.alpha / 2

    def phi(self, lam):
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.family == "stable":
            value = np.power(lam, p["alpha"] / 2)
        elif self.family == "relativistic":
            mass = p["m"] ** (2 / p["alpha"])
            value = np.power(lam + mass, p["alpha"] / 2) - p["m"]
        elif self.family == "mixed":
            value = np.power(lam, p["alpha"] / 2) + np.power(lam, p["beta"] / 2)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                value = np.power(lam, p["alpha"] / 2) * np.power(np.log1p(lam), p["p"])
            value = np.where(lam > 0, value, 0.0)
        return value + self.drift * lam

    def mu_density(self, t):
        """Density of the Lévy measure of the subordinator."""
        if not self.has_density:
            raise exceptions.UnsupportedFamily(f"no explicit Lévy measure density for {self.family}")
        t = np.asarray(t, dtype=float)
        p = self.params

        def stable_part(a):
            return (a / 2) / special.gamma(1 - a / 2) * np.power(t, -1 - a / 2)

        if self.family == "stable":
            return stable_part(p["alpha"])
        if self.family == "relativistic":
            return stable_part(p["alpha"]) * np.exp(-p["m"] ** (2 / p["alpha"]) * t)
        return stable_part(p["alpha"]) + stable_part(p["beta"])

    def check_shape(self, grid: Optional[Sequence[float]] = None) -> bool:
        """phi >= 0, non-decreasing, with non-increasing divided differences on a grid."""
        grid = np.geomspace(1e-6, 1e6, 241) if grid is None else np.sort(np.asarray(grid, dtype=float))
        values = self.phi(grid)
        slopes = np.diff(values) / np.diff(grid)
        tol = 1e-10 * np.max(np.abs(slopes))
        return bool(np.all(values >= 0) and np.all(slopes >= -tol) and np.all(np.diff(slopes) <= tol))

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"BernsteinSpec({self.family}, {args})"


def stable(alpha: float) -> BernsteinSpec:
    return BernsteinSpec("stable", {"alpha": alpha})


def relativistic(alpha: float, m: float) -> BernsteinSpec:
    return BernsteinSpec("relativistic", {"alpha": alpha, "m": m})


def mixed(alpha: float, beta: float) -> BernsteinSpec:
    return BernsteinSpec("mixed", {"alpha": alpha, "beta": beta})


def log_perturbed(alpha: float, p: float) -> BernsteinSpec:
    return BernsteinSpec("log_perturbed", {"alpha": alpha, "p": p})


def library() -> List[BernsteinSpec]:
    return [stable(1.0), relativistic(1.0, 1.0), mixed(1.5, 0.5), log_perturbed(1.0, 0.25)]


def parse_bernstein(family: str, params: Dict[str, float]) -> BernsteinSpec:
    try:
        return BernsteinSpec(family, dict(params))
    except exceptions.PreconditionError as exc:
        raise exceptions.ConfigError(str(exc)) from exc


def psi_from_bernstein(bspec: BernsteinSpec, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise exceptions.PreconditionError("the characteristic exponent is taken at t >= 0")
    return bspec.phi(t * t)


def default_r0(bspec: BernsteinSpec) -> float:
    if bspec.family == "relativistic":
        return bspec.params["m"] ** (-1.0 / bspec.alpha)
    return 1.0


def sup_envelope(func: Callable[[np.ndarray], np.ndarray], t) -> np.ndarray:
    """sup_{0 <= s <= t} func(s), from a dense sample refined at interior local maxima."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise exceptions.PreconditionError("the sup envelope is taken at t >= 0")
    top = float(t.max())
    if top == 0:
        return np.asarray(func(t), dtype=float)
    grid = np.concatenate(([0.0], np.geomspace(top * 1e-9, top, ENVELOPE_SAMPLES), t))
    grid = np.unique(grid)
    values = np.asarray(func(grid), dtype=float)
    peaks = np.flatnonzero((values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:])) + 1
    extra_t, extra_v = [], []
    for i in peaks:
        res = optimize.minimize_scalar(lambda s: -float(func(np.array([s]))[0]),
                                       bounds=(grid[i - 1], grid[i + 1]), method="bounded")
        if res.success and -res.fun > values[i]:
            extra_t.append(res.x)
            extra_v.append(-res.fun)
    if extra_t:
        grid = np.concatenate((grid, extra_t))
        values = np.concatenate((values, extra_v))
        order = np.argsort(grid, kind="stable")
        grid, values = grid[order], values[order]
    envelope = np.maximum.accumulate(values)
    # last grid entry <= t
    index = np.searchsorted(grid, t, side="right") - 1
    return np.maximum(envelope[index], np.asarray(func(t), dtype=float))


class ExponentProfile:
    def __init__(self, bspec: BernsteinSpec, r0: Optional[float] = None):
        self.bspec = bspec
        self.r0 = default_r0(bspec) if r0 is None else float(r0)

    def psi(self, t):
        return psi_from_bernstein(self.bspec, t)

    def psi_star(self, t):
        return sup_envelope(self.psi, t)

    def __repr__(self):
        return f"ExponentProfile({self.bspec!r}, r0={self.r0:g})"


@dataclass
class HFit:
    passed: bool
    a1: float
    a2: float
    delta1: float
    delta2: float
    r0: float


def check_H(profile: ExponentProfile, t_grid: Sequence[float], s_grid: Sequence[float]) -> HFit:
    """Fit a1 s^delta1 <= psi(st)/psi(t) <= a2 s^delta2 on the grids.

    delta1 and delta2 are the extreme per-t log-log slopes; the constants
    are the tightest ones making the sandwich hold on every grid point.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if len(s_grid) < 2 or np.any(s_grid < 1):
        raise exceptions.PreconditionError("the s grid needs at least two points s >= 1")
    if np.any(t_grid < (1.0 - 1e-12) / profile.r0):
        raise exceptions.PreconditionError("the scaling condition is only fitted for t >= 1/r0")
    s, t = np.meshgrid(s_grid, t_grid, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = profile.psi(s * t) / profile.psi(t)
    nan = math.nan
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
        return HFit(False, nan, nan, nan, nan, profile.r0)
    log_s = np.log(s_grid)
    slopes = np.polyfit(log_s, np.log(ratio), 1)[0]
    delta1, delta2 = float(slopes.min()), float(slopes.max())
    a1 = float(np.min(ratio / s ** delta1))
    a2 = float(np.max(ratio / s ** delta2))
    passed = 0 < delta1 <= delta2 < 2 and a1 > 0 and math.isfinite(a2)
    if not passed:
        logger.info("scaling fit for %r failed: delta1=%g delta2=%g", profile, delta1, delta2)
    return HFit(bool(passed), a1, a2, delta1, delta2, profile.r0)


def _time_window(bspec: BernsteinSpec, rho: float, d: int):
    scale = rho * rho / 4.0
    t_min = scale / SHORT_TIME_EXPONENT
    t_max = scale * 10.0 ** (TAIL_DIGITS / (d / 2 + bspec.tail_exponent))
    return t_min, t_max, scale


def levy_density_sbm(bspec: BernsteinSpec, x, d: Optional[int] = None, window: float = 1.0) -> float:
    """nu(x) by quadrature in ln t; `window` scales the truncation window about the peak."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if d is None:
        d = x.shape[0] if x.shape[0] > 1 else 1
    rho = float(np.linalg.norm(x))
    if rho <= 0:
        raise exceptions.SingularPoint("the jump density is singular at x = 0")
    if not bspec.has_density:
        raise exceptions.UnsupportedFamily(f"no explicit Lévy measure density for {bspec.family}")
    t_min, t_max, scale = _time_window(bspec, rho, d)
    t_min, t_max = t_min * window, t_max / window

    def integrand(v):
        t = math.exp(v)
        heat = (4.0 * math.pi * t) ** (-d / 2) * math.exp(-rho * rho / (4.0 * t))
        return heat * float(bspec.mu_density(t)) * t

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, error = integrate.quad(integrand, math.log(t_min), math.log(t_max),
                                      points=[math.log(scale)], epsabs=0.0, epsrel=1e-12, limit=400)
    if not math.isfinite(value) or error > 1e-8 * abs(value):
        raise exceptions.QuadratureFailure(f"subordination integral at |x|={rho:g} failed", value, error)
    return value


def stable_density(alpha: float, d: int, x) -> float:
    """Closed-form jump density of the isotropic alpha-stable process."""
    rho = float(np.linalg.norm(np.atleast_1d(x)))
    c = (alpha * 2.0 ** (alpha - 1.0) * special.gamma((d + alpha) / 2.0)
         / (math.pi ** (d / 2.0) * special.gamma(1.0 - alpha / 2.0)))
    return c * rho ** (-d - alpha)


@dataclass
class NuReport:
    min_ratio: float
    max_ratio: float
    psi_change: float
    passed: bool
    records: List[Record] = field(default_factory=list)

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio


def verify_nu_bounds(bspec: BernsteinSpec, radii: Sequence[float], d: int = 1,
                     r0: Optional[float] = None) -> NuReport:
    """Witness nu(x) |x|^d / psi*(1/|x|) bounded above on all radii and below on |x| < r0."""
    profile = ExponentProfile(bspec, r0)
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0):
        raise exceptions.PreconditionError("sample radii must be positive")
    star = profile.psi_star(1.0 / radii)
    psi = profile.psi(1.0 / radii)
    records = []
    ratios, changes = [], []
    for rho, s_val, p_val in zip(radii, star, psi):
        nu = levy_density_sbm(bspec, np.r_[rho, np.zeros(d - 1)], d)
        ratio = nu * rho ** d / s_val
        ratios.append(ratio)
        changes.append(s_val / p_val)
        ok = bool(math.isfinite(ratio) and ratio > 0)
        records.append(Record("nu_ratio", {"family": bspec.family, "r": float(rho)}, ratio, None, None, ok))
        records.append(check("psi_star_vs_psi", float(s_val), ALMOST_INCREASING * float(p_val),
                             family=bspec.family, r=float(rho)))
    ratios = np.array(ratios)
    inner = radii < profile.r0
    lower = float(ratios[inner].min()) if inner.any() else math.nan
    passed = all(r.passed for r in records) and bool(inner.any())
    return NuReport(lower, float(ratios.max()), float(max(changes)), passed, records)


def verify_almost_increasing(profile: ExponentProfile, t: Sequence[float]) -> List[Record]:
    """psi(t) <= psi*(t) <= pi^2 psi(t) at each sample."""
    t = np.asarray(t, dtype=float)
    star = profile.psi_star(t)
    psi = profile.psi(t)
    records = []
    for ti, s_val, p_val in zip(t, star, psi):
        upper = check("psi_star_upper", float(s_val), ALMOST_INCREASING * float(p_val),
                      family=profile.bspec.family, t=float(ti))
        upper.passed = upper.passed and s_val >= p_val
        records.append(upper)
    return records
