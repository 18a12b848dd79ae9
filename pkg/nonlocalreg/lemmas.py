"""Numerical certificates for the quantitative steps of the Hölder estimate.

Each `verify_*` function samples the inequality it certifies and returns a
`LemmaReport` of check records: lhs, rhs and the relative margin
(rhs - lhs) / |rhs|.  The constants themselves come from closed forms in
`constants_from_values`; `derive_constants` chains them into the Hölder
exponent and constant for a concrete kernel and class.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from nonlocalreg import exceptions
from nonlocalreg.functions import BumpFunction, GridFunction, beta
from nonlocalreg.kernel import ExtremalClass, KernelSpec, Multiplier, tail_mass
from nonlocalreg.operators import extremal_minus, extremal_plus
from nonlocalreg.quadrature import (
    DEFAULT_CONFIG,
    QuadratureConfig,
    applicable_kinds,
    growth_integral,
    growth_tail_integral,
    omega,
    radial_moment,
    wedge_integral,
)
from nonlocalreg.report_log import Record, check
from nonlocalreg.scaling import ScalingFunction

logger = logging.getLogger(__name__)

# beta(1/2) - beta(3/4): the guaranteed drop of the bump between the two radii
BUMP_DROP = float(beta(0.5) - beta(0.75))
THETA_CAP = 0.25 - 1e-12
# relative slack granted to quadrature-backed inequalities
QUADRATURE_SLACK = 1e-6


@dataclass
class LemmaReport:
    records: List[Record] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def failures(self) -> List[Record]:
        return [r for r in self.records if not r.passed]

    @property
    def witness(self) -> Optional[Dict]:
        """Inputs of the worst failing record."""
        failures = self.failures
        if not failures:
            return None
        return min(failures, key=lambda r: r.margin).inputs

    def worst(self, name: Optional[str] = None) -> Optional[Record]:
        pool = [r for r in self.records if name is None or r.check == name]
        if not pool:
            return None
        return min(pool, key=lambda r: r.margin if r.margin is not None else math.inf)

    def extend(self, other: LemmaReport) -> LemmaReport:
        self.records.extend(other.records)
        return self


@dataclass
class LemmaConstants:
    d: int
    omega_d: float
    C1: float
    C2: float
    C2_tight: float
    C3: float
    theta: float
    theta_capped: bool
    gamma: float
    alpha: float
    eta1: float
    r1: float
    r0: float
    epsilon: float

    def as_dict(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def wedge_constant(d: int, a1: float, a2: float, delta1: float, delta2: float,
                   M0: float, f_r0: float) -> float:
    """C1 = omega_d (a2/(2 - delta2) + 1/(a1 delta1)) + M0 / f(1/r0)."""
    return omega(d) * (a2 / (2.0 - delta2) + 1.0 / (a1 * delta1)) + M0 / f_r0


def _first_order_term(d: int, a1: float, a2: float, delta1: float, delta2: float) -> float:
    w = omega(d)
    if delta2 < 1:
        return w * a2 / (1.0 - delta2)
    if delta1 > 1:
        return w / (a1 * (delta1 - 1.0))
    raise exceptions.CaseMismatch(
        f"delta1={delta1:g} <= 1 <= delta2={delta2:g} needs the symmetric class"
    )


def bump_constants(d: int, C1: float, Lam: float, symmetric: bool, a1: float, a2: float,
                   delta1: float, delta2: float) -> Tuple[float, float]:
    """(combined, tight) forms of the bump constant C2."""
    if symmetric:
        c2 = 12.0 * d * Lam * C1
        return c2, c2
    active = _first_order_term(d, a1, a2, delta1, delta2)
    combined = 12.0 * d * Lam * (C1 + active)
    tight = 12.0 * d * Lam * C1 + 4.0 * Lam * active
    return combined, tight


def oscillation_epsilon(d: int, lam: float, Lam: float, a2: float, delta2: float) -> float:
    return omega(d) * lam / (Lam * 2.0 ** (d + 5 + delta2) * a2 * d)


def constants_from_values(d: int, a1: float, a2: float, delta1: float, delta2: float,
                          M0: float, f_r0: float, lam: float, Lam: float, symmetric: bool,
                          eta1: float, r1: float, r0: float = 1.0) -> LemmaConstants:
    if not 0 < lam <= Lam:
        raise exceptions.PreconditionError(f"needs 0 < lambda <= Lambda, got {lam}, {Lam}")
    if eta1 <= 0:
        raise exceptions.PreconditionError(f"eta1 must be positive, got {eta1}")
    if not 0 < r1 < r0:
        raise exceptions.PreconditionError(f"r1 must lie in (0, r0={r0:g}), got {r1}")
    w = omega(d)
    C1 = wedge_constant(d, a1, a2, delta1, delta2, M0, f_r0)
    C2, C2_tight = bump_constants(d, C1, Lam, symmetric, a1, a2, delta1, delta2)
    C3 = w * lam / (2.0 ** (d + 3 + delta2) * a2 * d)

    raw = min(C3 / (8.0 * C2), (1.0 - 2.0 ** -eta1) / (2.0 * BUMP_DROP))
    theta = min(raw, THETA_CAP)
    if raw > THETA_CAP:
        logger.info("theta=%g capped at %g", raw, THETA_CAP)
    gamma = theta * BUMP_DROP
    alpha = -math.log2(1.0 - gamma)
    return LemmaConstants(
        d=d, omega_d=w, C1=C1, C2=C2, C2_tight=C2_tight, C3=C3,
        theta=theta, theta_capped=raw > THETA_CAP, gamma=gamma, alpha=alpha,
        eta1=eta1, r1=r1, r0=r0, epsilon=oscillation_epsilon(d, lam, Lam, a2, delta2),
    )


def _profile_values(kspec: KernelSpec) -> Tuple[ScalingFunction, float, float]:
    fspec = kspec.scaling
    return fspec, tail_mass(kspec), float(fspec.profile(1.0 / fspec.r0))


def compute_constants(kspec: KernelSpec, cls: ExtremalClass, eta1: float,
                      r1: float) -> LemmaConstants:
    fspec, M0, f_r0 = _profile_values(kspec.without_multiplier())
    return constants_from_values(
        kspec.d, fspec.a1, fspec.a2, fspec.delta1, fspec.delta2, M0, f_r0,
        cls.lam, cls.Lam, cls.symmetric, eta1, r1, fspec.r0,
    )


def holder_constant(consts: LemmaConstants) -> float:
    """(4 r0 / r1)^alpha, the constant of |u(x) - u(y)| <= C |x - y|^alpha sup|u| / r^alpha."""
    return (4.0 * consts.r0 / consts.r1) ** consts.alpha


def verify_lemma_integrals(fspec: ScalingFunction, kspec: Optional[KernelSpec],
                           r_samples: Sequence[float], x_samples: Optional[Sequence] = None,
                           multipliers: Sequence[Multiplier] = (),
                           cfg: QuadratureConfig = DEFAULT_CONFIG) -> LemmaReport:
    """Radial moment bounds for fspec and the wedge bound for kspec at each radius."""
    r0 = fspec.r0
    for r in r_samples:
        if not 0 < r < r0:
            raise exceptions.PreconditionError(f"sample radius {r} outside (0, r0={r0:g})")
    report = LemmaReport()
    for r in r_samples:
        for kind in applicable_kinds(fspec):
            moment = radial_moment(fspec, float(r), kind, cfg)
            report.records.append(Record(
                f"radial_moment:{kind.value}", {"r": float(r), "profile": repr(fspec)},
                moment.value, moment.bound, moment.margin, moment.passed,
            ))
    if kspec is None:
        return report

    base = kspec.without_multiplier()
    sc, M0, f_r0 = _profile_values(base)
    C1 = wedge_constant(base.d, sc.a1, sc.a2, sc.delta1, sc.delta2, M0, f_r0)
    variants = [(kspec, 1.0 if kspec.multiplier is None else kspec.multiplier.upper)]
    variants += [(base.with_multiplier(m), m.upper) for m in multipliers]
    points = [np.zeros(base.d)] if x_samples is None else [np.atleast_1d(x) for x in x_samples]
    for r in r_samples:
        rhs = C1 * float(sc.profile(1.0 / r))
        for variant, upper in variants:
            name = "none" if variant.multiplier is None else variant.multiplier.name
            for x in points:
                wedge = wedge_integral(variant, x, float(r), cfg)
                report.records.append(check(
                    "wedge", wedge.value, rhs * upper, QUADRATURE_SLACK,
                    r=float(r), x=x.tolist(), multiplier=name,
                ))
    return report


@dataclass
class GrowthLemmaResult:
    epsilon: float
    r_eps: float
    eta_eps: float
    eta_limit: float
    worst_margin: float
    records: List[Record] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


def _growth_records(kspec: KernelSpec, epsilon: float, eta: float, s_values: Iterable[float],
                    cfg: QuadratureConfig) -> List[Record]:
    origin = np.zeros(kspec.d)
    records = []
    for s in s_values:
        value = growth_integral(kspec, origin, float(s), eta, cfg).value
        rhs = epsilon * float(kspec.scaling.profile(1.0 / s))
        records.append(check("growth", value, rhs, QUADRATURE_SLACK, s=float(s), eta=eta))
    return records


def find_eta_r(kspec: KernelSpec, epsilon: float, cfg: QuadratureConfig = DEFAULT_CONFIG,
               samples: int = 20) -> GrowthLemmaResult:
    """Pick eta in (0, delta1) and r in (0, r0) with the growth integral below eps f(1/s) for s < r.

    The near part is bounded by coef * int_1^inf ((2t)^eta - 1) t^(-delta1-1) dt,
    which increases in eta; eta is half the crossing with eps/2.  The far
    part decays like (s/r0)^(delta1 - eta), which fixes r.
    """
    if epsilon <= 0:
        raise exceptions.PreconditionError(f"epsilon must be positive, got {epsilon}")
    base = kspec.without_multiplier()
    fspec, M0, f_r0 = _profile_values(base)
    d1, r0 = fspec.delta1, fspec.r0
    C1 = wedge_constant(base.d, fspec.a1, fspec.a2, d1, fspec.delta2, M0, f_r0)
    coef = omega(base.d) * fspec.a2 * 4.0 ** fspec.delta2 / fspec.a1
    target = epsilon / 2.0

    lo, hi = 0.0, d1 * (1.0 - 1e-12)
    if coef * growth_tail_integral(hi, d1) <= target:
        lo = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if coef * growth_tail_integral(mid, d1) <= target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * d1:
                break
    eta = 0.5 * lo
    if eta <= 0:
        raise exceptions.Impossible(f"no positive eta for epsilon={epsilon:g}")

    far = 2.0 ** (4 + d1) * C1 / fspec.a1
    r_eps = min(0.5 * r0 * (target / far) ** (1.0 / (d1 - eta)), r0 * (1.0 - 1e-12))
    s_values = r_eps * np.geomspace(1e-3, 1.0, samples + 1)[:-1]
    records = _growth_records(base, epsilon, eta, s_values, cfg)
    worst = min(r.margin for r in records)
    logger.info("growth lemma: eta=%g r=%g worst margin %.3g", eta, r_eps, worst)
    return GrowthLemmaResult(epsilon, float(r_eps), float(eta), float(lo), float(worst), records)


def validate_growth(kspec: KernelSpec, result: GrowthLemmaResult, s_values: Sequence[float],
                    cfg: QuadratureConfig = DEFAULT_CONFIG) -> LemmaReport:
    """Re-check a growth choice at fresh radii below r_eps."""
    if any(not 0 < s < result.r_eps for s in s_values):
        raise exceptions.PreconditionError("validation radii must lie in (0, r_eps)")
    return LemmaReport(_growth_records(kspec.without_multiplier(), result.epsilon,
                                       result.eta_eps, s_values, cfg))


def derive_constants(kspec: KernelSpec, cls: ExtremalClass,
                     cfg: QuadratureConfig = DEFAULT_CONFIG) -> LemmaConstants:
    cls.check_case()
    fspec = kspec.scaling
    eps = oscillation_epsilon(kspec.d, cls.lam, cls.Lam, fspec.a2, fspec.delta2)
    growth = find_eta_r(kspec, eps, cfg)
    r1 = min(growth.r_eps, 0.5 * fspec.r0)
    return compute_constants(kspec, cls, growth.eta_eps, r1)


def bump_samples(rng: np.random.Generator, n: int, d: int, r0: float) -> List[Tuple[np.ndarray, float, np.ndarray]]:
    """(z, r, x) triples with x inside, on the edge of, and outside the bump."""
    samples = []
    for _ in range(n):
        z = rng.uniform(-1.0, 1.0, size=d)
        r = float(r0 * 10.0 ** rng.uniform(-2.0, 0.0))
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        x = z + r * rng.uniform(0.0, 3.0) * direction
        samples.append((z, r, x))
    return samples


def verify_bump_bound(cls: ExtremalClass, samples: Sequence[Tuple[np.ndarray, float, np.ndarray]],
                      C2: Optional[float] = None,
                      cfg: QuadratureConfig = DEFAULT_CONFIG) -> LemmaReport:
    """|M^- b_{z,r}(x)| <= C2 f(1/r) at each sample."""
    cls.check_case()
    base = cls.base
    fspec = base.scaling
    if C2 is None:
        _, M0, f_r0 = _profile_values(base)
        C1 = wedge_constant(base.d, fspec.a1, fspec.a2, fspec.delta1, fspec.delta2, M0, f_r0)
        C2, _ = bump_constants(base.d, C1, cls.Lam, cls.symmetric, fspec.a1, fspec.a2,
                               fspec.delta1, fspec.delta2)
    report = LemmaReport()
    for z, r, x in samples:
        if not 0 < r <= fspec.r0:
            raise exceptions.PreconditionError(f"bump radius {r} outside (0, r0]")
        value = extremal_minus(cls, BumpFunction(z, r), x, cfg)
        report.records.append(check(
            "bump", abs(value), C2 * float(fspec.profile(1.0 / r)), QUADRATURE_SLACK,
            z=np.asarray(z).tolist(), r=float(r), x=np.asarray(x).tolist(),
        ))
    return report


@dataclass
class OscillationReport:
    hypotheses: Dict[str, bool]
    conclusion: bool
    details: Dict[str, float]

    @property
    def asserted(self) -> bool:
        """Whether the hypotheses hold, so the conclusion is claimed."""
        return all(self.hypotheses.values())

    @property
    def passed(self) -> bool:
        return not self.asserted or self.conclusion

    def records(self) -> List[Record]:
        out = [Record(f"oscillation:{k}", {}, None, None, None, v) for k, v in self.hypotheses.items()]
        out.append(Record("oscillation:conclusion", {"asserted": self.asserted},
                          self.details.get("max_half_ball"), self.details.get("conclusion_bound"),
                          None, self.passed))
        return out


def _probe_rays(z: np.ndarray, r: float, reach: float) -> np.ndarray:
    d = z.shape[0]
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        if d > 2:
            dirs = np.concatenate([dirs, np.zeros((len(dirs), d - 2))], axis=1)
    radii = np.geomspace(r, max(reach, 2.0 * r), 200)
    return (z[None, None, :] + radii[None, :, None] * dirs[:, None, :]).reshape(-1, d)


def verify_oscillation_lemma(u: GridFunction, z, r: float, consts: LemmaConstants,
                             cls: Optional[ExtremalClass] = None,
                             plus_residual: Optional[np.ndarray] = None,
                             measure_fraction: float = 0.5, tol: float = 1e-8,
                             cfg: QuadratureConfig = DEFAULT_CONFIG) -> OscillationReport:
    """Check the four hypotheses of the oscillation step and, if they hold, its conclusion.

    `plus_residual` holds M^+ u at every node of u (NaN where undefined), as
    scaled by the solver; without it M^+ u is evaluated by quadrature at the
    interior nodes of the ball, which needs `cls`.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not 0 < r < consts.r1:
        raise exceptions.PreconditionError(f"the oscillation step needs 0 < r < r1={consts.r1:g}, got {r}")
    if not 0 < measure_fraction < 1:
        raise exceptions.PreconditionError("measure_fraction must lie in (0, 1)")
    nodes = u.nodes
    values = u.flat_values
    dist = np.linalg.norm(nodes - z, axis=-1)
    in_ball = dist < r
    if not in_ball.any():
        raise exceptions.PreconditionError("no grid node inside the ball; refine the grid")

    # M^+ u >= 0 in the ball
    if plus_residual is not None:
        plus = np.asarray(plus_residual, dtype=float)[in_ball]
        plus = plus[np.isfinite(plus)]
        floor = -tol
    else:
        if cls is None:
            raise exceptions.PreconditionError("quadrature evaluation of M^+ u needs the class")
        interior = [p for p in nodes[in_ball] if u.node_index(p) is not None
                    and all(0 < i < n - 1 for i, n in zip(u.node_index(p), u.shape))]
        plus = np.array([extremal_plus(cls, u, p, cfg) for p in interior])
        f_h = float(cls.base.scaling.profile(1.0 / u.h))
        floor = -tol * cls.Lam * f_h * max(u.bound, 1.0)
    min_plus = float(plus.min()) if plus.size else math.inf

    # u <= 1/2 in the ball
    max_ball = float(values[in_ball].max())

    # u <= envelope outside
    def envelope(rho):
        return (2.0 * np.minimum(rho, consts.r0) / r) ** consts.eta1 - 0.5

    outside = ~in_ball
    excess = values[outside] - envelope(dist[outside]) if outside.any() else np.zeros(1)
    reach = 10.0 * max(consts.r0, float(np.max(u.hi - u.lo)) + u.h)
    rays = _probe_rays(z, r, reach)
    ray_excess = u(rays) - envelope(np.linalg.norm(rays - z, axis=-1))
    max_excess = float(max(excess.max(), ray_excess.max()))

    # |{u <= 0} cap B| > fraction |B|, counted over cells wholly inside the ball
    d = u.d
    cell_in = dist + 0.5 * u.h * math.sqrt(d) < r
    measure = float(np.count_nonzero(cell_in & (values <= 0.0))) * u.h ** d
    ball_volume = omega(d) * r ** d / d

    half = dist < r / 2
    max_half = float(values[half].max()) if half.any() else -math.inf
    bound = 0.5 - consts.gamma

    hypotheses = {
        "subsolution": min_plus >= floor,
        "ball_bound": max_ball <= 0.5 + tol,
        "envelope": max_excess <= tol,
        "measure": measure > measure_fraction * ball_volume,
    }
    report = OscillationReport(
        hypotheses=hypotheses,
        conclusion=max_half <= bound + tol,
        details={
            "min_plus": min_plus,
            "max_ball": max_ball,
            "envelope_excess": max_excess,
            "measure_fraction": measure / ball_volume,
            "max_half_ball": max_half,
            "conclusion_bound": bound,
        },
    )
    logger.debug("oscillation step at z=%s r=%g: %s", z, r, report.details)
    return report


@dataclass
class DyadicRescaling:
    function: GridFunction
    shift: float
    factor: float
    flipped: bool


def dyadic_rescale(u: GridFunction, x0, s: float, k: int, gamma: float) -> DyadicRescaling:
    """Normalize u to |u| <= 1/2 and blow up the k-th dyadic ball B(x0, 2^-k s).

    The result has minimum -1/2 on the ball; when fewer than half of its
    nodes there are nonpositive it is reflected so that they are.
    """
    if k < 0 or not 0 < gamma < 1:
        raise exceptions.PreconditionError(f"needs k >= 0 and 0 < gamma < 1, got k={k}, gamma={gamma}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    bound = u.bound
    normalized = u if bound == 0 else u.affine(0.5 / bound, 0.0)
    radius = s * 2.0 ** -k
    ball = np.linalg.norm(u.nodes - x0, axis=-1) < radius
    if not ball.any():
        raise exceptions.PreconditionError("no grid node inside the dyadic ball")
    factor = (1.0 - gamma) ** -k
    shift = float(normalized.flat_values[ball].min()) + 0.5 / factor
    v = normalized.affine(factor, -factor * shift)
    inside = v.flat_values[ball]
    if np.count_nonzero(inside <= 0.0) >= 0.5 * inside.size:
        return DyadicRescaling(v, shift, factor, False)
    top = float(inside.max())
    return DyadicRescaling(v.affine(-1.0, -(0.5 - top)), shift, factor, True)
