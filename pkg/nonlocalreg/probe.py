"""Empirical Hölder regularity: dyadic oscillation profiles and seminorms."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from nonlocalreg import exceptions
from nonlocalreg.functions import GridFunction

logger = logging.getLogger(__name__)

NODES_PER_DIAMETER = 5
MAX_PAIRS = 1_000_000


@dataclass
class OscillationProfile:
    center: np.ndarray
    s: float
    radii: np.ndarray
    osc: np.ndarray
    noise_floor: float = 0.0
    truncated: bool = False

    @property
    def levels(self) -> np.ndarray:
        return np.arange(len(self.osc))

    @property
    def usable(self) -> np.ndarray:
        return self.osc > self.noise_floor

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.osc) <= 1e-14 * (1.0 + np.abs(self.osc[:-1]))))


def oscillation_profile(u: GridFunction, x0, s: float, K: int, tolerance: float = 1e-8) -> OscillationProfile:
    """Osc of u over the closed balls B(x0, 2^-k s), k = 0..K, taken over grid nodes."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if s <= 0 or K < 0:
        raise exceptions.PreconditionError(f"needs s > 0 and K >= 0, got s={s}, K={K}")
    if not np.all(u.inside(np.stack((x0 - s, x0 + s)))):
        raise exceptions.PreconditionError("the base ball must lie inside the grid")
    nodes = u.nodes
    values = u.flat_values
    dist = np.linalg.norm(nodes - x0, axis=-1)
    radii, osc = [], []
    truncated = False
    for k in range(K + 1):
        rho = s * 2.0 ** -k
        if 2.0 * rho / u.h < NODES_PER_DIAMETER:
            truncated = True
            logger.warning("oscillation profile at %s truncated at level %d: %.3g nodes per diameter",
                           x0.tolist(), k, 2.0 * rho / u.h)
            break
        ball = values[dist <= rho * (1.0 + 1e-12)]
        radii.append(rho)
        osc.append(float(ball.max() - ball.min()))
    floor = 10.0 * tolerance * (1.0 + float(np.max(np.abs(values))))
    return OscillationProfile(x0, float(s), np.array(radii), np.array(osc), floor, truncated)


@dataclass
class HolderFit:
    alpha_emp: float
    C_emp: float
    gamma_emp: float
    r_squared: float
    levels_used: int
    status: str = "ok"

    @property
    def flat(self) -> bool:
        return self.status == "flat"


def fit_holder(profile: OscillationProfile) -> HolderFit:
    """Least squares of log2 Osc_k against k; alpha is minus the slope."""
    usable = profile.usable & (profile.osc > 0)
    if not usable.any():
        return HolderFit(math.nan, math.nan, math.nan, math.nan, 0, status="flat")
    if np.count_nonzero(usable) < 3:
        raise exceptions.PreconditionError("a Hölder fit needs at least 3 profile levels above the noise floor")
    k = profile.levels[usable].astype(float)
    y = np.log2(profile.osc[usable])
    slope, intercept = np.polyfit(k, y, 1)
    fitted = slope * k + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    alpha = -float(slope)
    C = 2.0 ** float(intercept) / profile.s ** alpha
    return HolderFit(alpha, C, 1.0 - 2.0 ** -alpha, r_squared, int(np.count_nonzero(usable)))


@dataclass
class SeminormReport:
    seminorm: float
    bound_constant: float
    pairs: int
    stride: int


def holder_seminorm_report(u: GridFunction, z0, r: float, alpha: float, r0: float = 1.0,
                           max_pairs: int = MAX_PAIRS, norm: Optional[float] = None) -> SeminormReport:
    """Discrete sup of |u(x) - u(y)| / |x - y|^alpha over node pairs in B(z0, r/2).

    Pairs are enumerated row by row and every `stride`-th one is kept, so
    that at most `max_pairs` are visited.
    """
    if alpha <= 0:
        raise exceptions.PreconditionError(f"alpha must be positive, got {alpha}")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    nodes = u.nodes
    inside = np.linalg.norm(nodes - z0, axis=-1) <= 0.5 * r * (1.0 + 1e-12)
    pts, vals = nodes[inside], u.flat_values[inside]
    m = len(pts)
    total = m * (m - 1) // 2
    stride = max(1, int(math.ceil(total / max_pairs))) if total else 1
    best = 0.0
    visited = 0
    offset = 0
    for i in range(m - 1):
        count = m - 1 - i
        local = np.arange(count)
        keep = (offset + local) % stride == 0
        offset += count
        if not keep.any():
            continue
        j = i + 1 + local[keep]
        dist = np.linalg.norm(pts[j] - pts[i], axis=-1)
        best = max(best, float(np.max(np.abs(vals[j] - vals[i]) / dist ** alpha)))
        visited += int(np.count_nonzero(keep))
    sup = u.bound if norm is None else norm
    constant = best * min(r, r0) ** alpha / sup if sup > 0 else 0.0
    return SeminormReport(best, constant, visited, stride)


@dataclass
class RefinementReport:
    coarse: SeminormReport
    fine: SeminormReport

    @property
    def change(self) -> float:
        """Relative change of the implied constant from the coarse to the fine grid."""
        base = self.coarse.bound_constant
        if base == 0:
            return 0.0 if self.fine.bound_constant == 0 else math.inf
        return abs(self.fine.bound_constant - base) / base


def seminorm_refinement(coarse: GridFunction, fine: GridFunction, z0, r: float, alpha: float,
                        r0: float = 1.0) -> RefinementReport:
    """Implied Hölder constants of the same function on two grids, at one exponent."""
    return RefinementReport(
        holder_seminorm_report(coarse, z0, r, alpha, r0=r0),
        holder_seminorm_report(fine, z0, r, alpha, r0=r0),
    )
