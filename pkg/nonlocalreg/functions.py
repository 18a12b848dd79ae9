"""Functions on all of R^d: analytic closures, bumps, and grid values with an exterior."""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate

from nonlocalreg.exceptions import PreconditionError


def as_points(points, d: int) -> np.ndarray:
    """Coerce input to an (m, d) array of points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1) if d == 1 else arr.reshape(1, d)
    return arr


def beta(t):
    """(1 - t^2)_+^2."""
    return np.clip(1.0 - np.asarray(t, dtype=float) ** 2, 0.0, None) ** 2


class FieldFunction:
    """A bounded function on R^d."""
    d: int = 1
    scale: float = 1.0

    def __call__(self, points) -> np.ndarray:
        raise NotImplementedError()

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        step = 1e-6 * self.scale
        eye = np.eye(self.d) * step
        return (self(x + eye) - self(x - eye)) / (2.0 * step)

    def breakpoints(self, x) -> Tuple[float, ...]:
        """Radii about x where the function is known to have kinks."""
        return ()

    @property
    def bound(self) -> float:
        raise NotImplementedError()


class AnalyticFunction(FieldFunction):
    def __init__(self, func: Callable[[np.ndarray], np.ndarray], d: int = 1,
                 gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 bound: Optional[float] = None, scale: float = 1.0,
                 breakpoints: Optional[Callable[[np.ndarray], Sequence[float]]] = None):
        self.func = func
        self.d = d
        self._gradient = gradient
        self._bound = bound
        self.scale = scale
        self._breakpoints = breakpoints

    def __call__(self, points):
        return np.asarray(self.func(as_points(points, self.d)), dtype=float).reshape(-1)

    def gradient(self, x):
        if self._gradient is None:
            return super().gradient(x)
        return np.asarray(self._gradient(np.atleast_1d(np.asarray(x, dtype=float))), dtype=float)

    def breakpoints(self, x):
        if self._breakpoints is None:
            return ()
        return tuple(r for r in self._breakpoints(np.atleast_1d(x)) if r > 0)

    @property
    def bound(self):
        if self._bound is None:
            axis = np.linspace(-4.0, 4.0, 2001 if self.d == 1 else 201)
            grid = np.stack(np.meshgrid(*[axis] * self.d, indexing="ij"), axis=-1).reshape(-1, self.d)
            self._bound = float(np.max(np.abs(self(grid))))
        return self._bound

    def __neg__(self):
        grad = None if self._gradient is None else (lambda x: -self._gradient(x))
        return AnalyticFunction(lambda p: -self.func(p), self.d, grad, self._bound, self.scale,
                                self._breakpoints)

    def __add__(self, other: AnalyticFunction):
        grad = None
        if self._gradient is not None and other._gradient is not None:
            grad = lambda x: self._gradient(x) + other._gradient(x)
        return AnalyticFunction(lambda p: self.func(p) + other.func(p), self.d, grad,
                                None, min(self.scale, other.scale))

    def scaled(self, c: float) -> AnalyticFunction:
        grad = None if self._gradient is None else (lambda x: c * self._gradient(x))
        bound = None if self._bound is None else abs(c) * self._bound
        return AnalyticFunction(lambda p: c * self.func(p), self.d, grad, bound, self.scale,
                                self._breakpoints)

    def shifted(self, offset) -> AnalyticFunction:
        """x -> u(x - offset)."""
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        grad = None if self._gradient is None else (lambda x: self._gradient(x - offset))
        kinks = None if self._breakpoints is None else (lambda x: self._breakpoints(x - offset))
        return AnalyticFunction(lambda p: self.func(p - offset), self.d, grad, self._bound,
                                self.scale, kinks)


class BumpFunction(FieldFunction):
    """b(x) = beta(|x - z| / r), supported in the closed ball B(z, r)."""

    def __init__(self, z, r: float):
        if r <= 0:
            raise PreconditionError(f"bump radius must be positive, got {r}")
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        self.r = float(r)
        self.d = self.z.shape[0]
        self.scale = self.r

    def __call__(self, points):
        pts = as_points(points, self.d)
        return beta(np.linalg.norm(pts - self.z, axis=-1) / self.r)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.linalg.norm(x - self.z) / self.r
        if t >= 1:
            return np.zeros(self.d)
        return -4.0 * (1.0 - t * t) * (x - self.z) / self.r ** 2

    def breakpoints(self, x):
        dist = float(np.linalg.norm(np.atleast_1d(x) - self.z))
        return tuple(r for r in (abs(dist - self.r), dist + self.r) if r > 0)

    @property
    def bound(self):
        return 1.0


class GridFunction(FieldFunction):
    """Values on a uniform box grid plus an analytic exterior closure.

    Inside the node hull the function is the multilinear interpolant of the
    node values; outside it is the exterior closure.
    """

    def __init__(self, lo, h: float, values, exterior: Callable[[np.ndarray], np.ndarray],
                 bound: Optional[float] = None):
        self.values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("grid values must be finite")
        self.d = self.values.ndim
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        if self.lo.shape[0] != self.d:
            raise PreconditionError("grid origin and value array disagree on the dimension")
        self.h = float(h)
        self.scale = self.h
        self.shape = self.values.shape
        self.hi = self.lo + self.h * (np.array(self.shape) - 1)
        self.axes = [self.lo[k] + self.h * np.arange(n) for k, n in enumerate(self.shape)]
        self.exterior = exterior
        self._bound = bound
        self._interpolator = None

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    def inside(self, points: np.ndarray) -> np.ndarray:
        eps = 1e-12 * self.h
        return np.all((points >= self.lo - eps) & (points <= self.hi + eps), axis=-1)

    def _interpolate(self, points: np.ndarray) -> np.ndarray:
        if self.d == 1:
            return np.interp(points[:, 0], self.axes[0], self.values)
        if self._interpolator is None:
            self._interpolator = interpolate.RegularGridInterpolator(
                tuple(self.axes), self.values, method="linear", bounds_error=False, fill_value=None
            )
        return self._interpolator(points)

    def __call__(self, points):
        pts = as_points(points, self.d)
        result = np.empty(len(pts))
        mask = self.inside(pts)
        if mask.any():
            result[mask] = self._interpolate(pts[mask])
        if (~mask).any():
            result[~mask] = np.asarray(self.exterior(pts[~mask]), dtype=float).reshape(-1)
        return result

    def node_index(self, x) -> Optional[Tuple[int, ...]]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        position = (x - self.lo) / self.h
        index = np.rint(position)
        if np.any(np.abs(position - index) > 1e-9) or np.any(index < 0) or np.any(index >= self.shape):
            return None
        return tuple(int(i) for i in index)

    def local_model(self, x) -> Tuple[float, np.ndarray, np.ndarray]:
        """(value, gradient, Hessian) at a node from its 3^d neighbourhood."""
        index = self.node_index(x)
        if index is None:
            raise PreconditionError("the local model needs x at a grid node")
        if any(i == 0 or i == n - 1 for i, n in zip(index, self.shape)):
            raise PreconditionError("x lies on the box boundary; no local model")
        v, h, d = self.values, self.h, self.d
        centre = v[index]
        grad = np.empty(d)
        hess = np.empty((d, d))
        for k in range(d):
            up = list(index); up[k] += 1
            dn = list(index); dn[k] -= 1
            grad[k] = (v[tuple(up)] - v[tuple(dn)]) / (2 * h)
            hess[k, k] = (v[tuple(up)] - 2 * centre + v[tuple(dn)]) / h ** 2
            for m in range(k):
                pp = list(index); pp[k] += 1; pp[m] += 1
                pm = list(index); pm[k] += 1; pm[m] -= 1
                mp = list(index); mp[k] -= 1; mp[m] += 1
                mm = list(index); mm[k] -= 1; mm[m] -= 1
                hess[k, m] = hess[m, k] = (
                    v[tuple(pp)] - v[tuple(pm)] - v[tuple(mp)] + v[tuple(mm)]
                ) / (4 * h * h)
        return float(centre), grad, hess

    def gradient(self, x):
        if self.node_index(x) is not None:
            return self.local_model(x)[1]
        return super().gradient(x)

    @property
    def bound(self):
        if self._bound is None:
            width = self.hi - self.lo + self.h
            axis = [np.linspace(l - 2 * w, u + 2 * w, 201) for l, u, w in zip(self.lo, self.hi, width)]
            ring = np.stack(np.meshgrid(*axis, indexing="ij"), axis=-1).reshape(-1, self.d)
            ring = ring[~self.inside(ring)]
            outer = np.abs(np.asarray(self.exterior(ring), dtype=float)) if len(ring) else np.zeros(1)
            self._bound = float(max(np.max(np.abs(self.values)), np.max(outer)))
        return self._bound

    def affine(self, a: float, c: float) -> GridFunction:
        """x -> a * u(x) + c."""
        exterior = self.exterior
        return GridFunction(
            self.lo, self.h, a * self.values + c,
            lambda p: a * np.asarray(exterior(p), dtype=float) + c,
        )


def sample_grid(func: FieldFunction, lo, h: float, shape: Sequence[int]) -> GridFunction:
    """Sample `func` on a box grid and keep it as the exterior closure."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    axes = [lo[k] + h * np.arange(n) for k, n in enumerate(shape)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
    return GridFunction(lo, h, func(nodes).reshape(tuple(shape)), func)


def power_fixture(x0, beta_exp: float, d: int = 1) -> AnalyticFunction:
    """|x - x0|^beta, the exact oracle for oscillation decay."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return AnalyticFunction(lambda p: np.linalg.norm(p - x0, axis=-1) ** beta_exp, d=d)


def gaussian(center, width: float = 0.3, d: int = 1) -> AnalyticFunction:
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def value(p):
        return np.exp(-np.sum((p - center) ** 2, axis=-1) / (2 * width ** 2))

    def grad(x):
        return -(x - center) / width ** 2 * np.exp(-np.sum((x - center) ** 2) / (2 * width ** 2))

    return AnalyticFunction(value, d=d, gradient=grad, bound=1.0, scale=width)
