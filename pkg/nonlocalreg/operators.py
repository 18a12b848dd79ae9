"""Linear and extremal nonlocal operators evaluated by radial quadrature.

For a point x and a function u on R^d the integrand is built from

    g(y) = u(y) - u(x) - grad u(x).(y - x) 1{|y-x| < r0}     (compensated, delta2 >= 1)
    g(y) = u(y) - u(x)                                         (otherwise)

or from the second difference u(x+z) + u(x-z) - 2u(x) for the symmetric
class.  The extremal operators select Lam J or lam J pointwise according to
the sign of the integrand.

Near x the shell |y - x| < rho_in is replaced by a model of the angular sum:
the local quadratic model of a grid function on rho_in = h, and a
leading-order power extrapolation for analytic functions.
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from nonlocalreg.exceptions import PreconditionError
from nonlocalreg.functions import FieldFunction, GridFunction
from nonlocalreg.kernel import ExtremalClass, KernelSpec
from nonlocalreg.quadrature import (
    DEFAULT_CONFIG,
    QuadratureConfig,
    QuadResult,
    directions,
    radial_integral,
    shell_moment,
)

logger = logging.getLogger(__name__)

Weighing = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _linear(kspec: KernelSpec, x: np.ndarray) -> Weighing:
    multiplier = kspec.multiplier
    if multiplier is None:
        return lambda g, y: g
    return lambda g, y: g * multiplier(x, y)


def _bang_bang(lam: float, Lam: float, sign: int) -> Weighing:
    up, down = (Lam, lam) if sign > 0 else (lam, Lam)
    return lambda g, y: up * np.maximum(g, 0.0) - down * np.maximum(-g, 0.0)


def _integrate(kspec: KernelSpec, u: FieldFunction, x, weigh: Weighing, *, paired: bool,
               compensated: bool, cfg: QuadratureConfig) -> QuadResult:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != kspec.d:
        raise PreconditionError(f"point of dimension {x.shape[0]} for a kernel in d={kspec.d}")
    dirs, weights = directions(kspec.d, cfg.angular_nodes)
    r0 = kspec.r0
    ux = float(u(x[None, :])[0])
    grad = u.gradient(x) if compensated and not paired else None
    along = None if grad is None else dirs @ grad

    def angular(rho: float) -> float:
        y = x + rho * dirs
        if paired:
            g = u(y) + u(x - rho * dirs) - 2.0 * ux
        else:
            g = u(y) - ux
            if along is not None and rho < r0:
                g = g - rho * along
        return float(np.dot(weights, weigh(g, y)))

    model_node = isinstance(u, GridFunction) and u.node_index(x) is not None
    if model_node:
        centre, model_grad, hess = u.local_model(x)
        inner_radius = u.h
        slope = dirs @ model_grad
        curvature = 0.5 * np.einsum("ij,jk,ik->i", dirs, hess, dirs)

        def model_angular(rho: float) -> float:
            y = x + rho * dirs
            if paired:
                g = 2.0 * rho * rho * curvature
            else:
                g = rho * rho * curvature
                if not compensated:
                    g = g + rho * slope
            return float(np.dot(weights, weigh(g, y)))

        inner = radial_integral(kspec, model_angular, cfg, stop=inner_radius)
    else:
        inner_radius = min(cfg.inner_fraction * u.scale, r0 / 4)
        order = 2 if (paired or compensated) else 1
        moment = shell_moment(kspec, inner_radius, order, cfg)
        inner = QuadResult(angular(inner_radius) * moment / inner_radius ** order, 0.0)

    splits = tuple(u.breakpoints(x))
    outer = radial_integral(kspec, angular, cfg, start=inner_radius, splits=splits)
    total = inner + outer
    return total.scale(0.5) if paired else total


def apply_linear(kspec: KernelSpec, u: FieldFunction, x,
                 cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """L_K u(x), with K = m J when the kernel carries a multiplier."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    compensated = kspec.scaling.delta2 >= 1
    return _integrate(kspec, u, x, _linear(kspec, x), paired=False,
                      compensated=compensated, cfg=cfg).value


def _extremal(cls: ExtremalClass, u: FieldFunction, x, sign: int,
              cfg: QuadratureConfig) -> float:
    if cls.symmetric:
        return second_difference_form(cls, u, x, sign, cfg)
    return _integrate(cls.base, u, x, _bang_bang(cls.lam, cls.Lam, sign), paired=False,
                      compensated=cls.compensated, cfg=cfg).value


def extremal_plus(cls: ExtremalClass, u: FieldFunction, x,
                  cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    return _extremal(cls, u, x, +1, cfg)


def extremal_minus(cls: ExtremalClass, u: FieldFunction, x,
                   cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    return _extremal(cls, u, x, -1, cfg)


def second_difference_form(cls: ExtremalClass, u: FieldFunction, x, sign: int,
                           cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """1/2 int [Lam (d2u)_+ - lam (d2u)_-] J(x, x+z) dz for sign +1, the mirror for -1."""
    if not cls.symmetric:
        raise PreconditionError("the second-difference form is the extremal operator of the symmetric class")
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign}")
    return _integrate(cls.base, u, x, _bang_bang(cls.lam, cls.Lam, sign), paired=True,
                      compensated=False, cfg=cfg).value
