"""Monotone quadrature stencils on uniform cell-centred lattices.

The box around the domain is split into n^d cells of side h with nodes at
the cell centres.  At a node x the operator is the sum of couplings

    single:  w * s * (u(y) - u(x))
    paired:  w * s * (u(x + z) + u(x - z) - 2 u(x))

where w is the integral of J over a lattice cell (or a far-field panel
node) and s is the level of the kernel on that coupling: the multiplier for
a linear operator, lam or Lam under a bang-bang policy.  All weights are
nonnegative, so every frozen-policy matrix is an M-matrix.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, sparse

from nonlocalreg import exceptions
from nonlocalreg.kernel import KernelSpec, far_exponent
from nonlocalreg.kinds import TailKind
from nonlocalreg.quadrature import DEFAULT_CONFIG, QuadratureConfig, radial_integral, shell_moment

logger = logging.getLogger(__name__)

# One row of the coupling table.
coupling_dt = np.dtype(
    [
        ("row", np.int64),  # unknown the coupling belongs to
        ("a", np.int64),  # index of u(x + z) in the extended value vector
        ("b", np.int64),  # index of u(x - z); -1 for a single coupling
        ("weight", np.float64),  # cell or panel integral of J
        ("m", np.float64),  # multiplier level, averaged over both ends of a pair
        ("paired", np.bool_),
    ]
)

GAUSS_NODES = 6
PANEL_WIDTH = 2.0
NEAR_CELLS = 2
TIE_TOLERANCE = 1e-12


class Ball:
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise exceptions.PreconditionError(f"ball radius must be positive, got {radius}")
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)

    @property
    def half_width(self) -> float:
        return self.radius

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) < self.radius

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius:g})"


class Box:
    def __init__(self, center, half: float):
        if half <= 0:
            raise exceptions.PreconditionError(f"box half-width must be positive, got {half}")
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.half = float(half)

    @property
    def half_width(self) -> float:
        return self.half

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(points - self.center) < self.half, axis=-1)

    def __repr__(self):
        return f"Box({self.center.tolist()}, {self.half:g})"


class Grid:
    """Cell-centred lattice on the bounding box of a domain."""

    def __init__(self, domain, h: float):
        if h <= 0:
            raise exceptions.PreconditionError(f"grid spacing must be positive, got {h}")
        self.domain = domain
        self.d = domain.center.shape[0]
        if self.d not in (1, 2):
            raise exceptions.PreconditionError(f"grids are implemented for d = 1, 2 only (d={self.d})")
        half = domain.half_width
        self.n = max(int(round(2.0 * half / h)), 1)
        self.h = 2.0 * half / self.n
        self.lo = domain.center - half + 0.5 * self.h
        self.shape = (self.n,) * self.d

    @property
    def indices(self) -> np.ndarray:
        mesh = np.meshgrid(*[np.arange(self.n)] * self.d, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)

    def points(self, index: np.ndarray) -> np.ndarray:
        return self.lo + self.h * np.asarray(index, dtype=float)

    @property
    def nodes(self) -> np.ndarray:
        return self.points(self.indices)

    @property
    def inside(self) -> np.ndarray:
        return self.domain.contains(self.nodes)


def _cell_weights_1d(kspec: KernelSpec, h: float, K: int, cfg: QuadratureConfig) -> np.ndarray:
    half = np.empty(K)
    for k in range(1, K + 1):
        half[k - 1] = radial_integral(kspec, lambda rho: 1.0, cfg,
                                      start=(k - 0.5) * h, stop=(k + 0.5) * h).value
    return np.concatenate((half[::-1], [0.0], half))


def _cell_weights_2d(kspec: KernelSpec, h: float, K: int, cfg: QuadratureConfig) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    offsets = np.arange(-K, K + 1)
    # (2K+1, GAUSS_NODES) abscissae per axis
    pts = (offsets[:, None] + 0.5 * x[None, :]) * h
    X = pts[:, None, :, None]
    Y = pts[None, :, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        J = kspec.radial(np.hypot(X, Y))
    J = np.where(np.isfinite(J), J, 0.0)
    weights = np.einsum("ijab,a,b->ij", J, w, w) * (0.5 * h) ** 2

    def integrand(y, x_):
        return float(kspec.radial(math.hypot(x_, y)))

    for i in range(-NEAR_CELLS, NEAR_CELLS + 1):
        for j in range(-NEAR_CELLS, NEAR_CELLS + 1):
            if (i, j) == (0, 0) or max(abs(i), abs(j)) > K:
                continue
            value, _ = integrate.dblquad(
                integrand, (i - 0.5) * h, (i + 0.5) * h, (j - 0.5) * h, (j + 0.5) * h,
                epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
            )
            weights[i + K, j + K] = value
    weights[K, K] = 0.0
    return weights


def cell_weights(kspec: KernelSpec, h: float, K: int,
                 cfg: QuadratureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Integrals of J over the cells of offsets -K..K per axis; the centre cell is 0."""
    if kspec.d == 1:
        return _cell_weights_1d(kspec, h, K, cfg)
    return _cell_weights_2d(kspec, h, K, cfg)


def self_moment(kspec: KernelSpec, h: float, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """int over the centre cell of z_1^2 J(z) dz."""
    if kspec.d == 1:
        return 2.0 * shell_moment(kspec, 0.5 * h, 2, cfg)
    value, _ = integrate.quad(
        lambda theta: shell_moment(kspec, 0.5 * h / math.cos(theta), 2, cfg),
        0.0, 0.25 * math.pi, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
    )
    return 4.0 * value


def _far_extent(kspec: KernelSpec, rho_min: float) -> float:
    """Log-radius range of the far field beyond rho_min."""
    r0 = kspec.r0
    if math.isfinite(kspec.upper):
        return math.log(kspec.upper / rho_min) if kspec.upper > rho_min else 0.0
    start = math.log(max(r0, rho_min) / rho_min)
    if kspec.tail.kind is TailKind.EXPONENTIAL_DAMPING:
        return math.log((max(r0, rho_min) + 40.0 / kspec.tail.rate) / rho_min)
    return start + min(80.0, 30.0 / max(far_exponent(kspec.scaling), 0.375))


def far_nodes(kspec: KernelSpec, rho_min: float) -> Tuple[np.ndarray, np.ndarray]:
    """Radii and weights of int_{rho_min}^inf rho^(d-1) J(rho) (.) drho by panels in ln(rho)."""
    v_max = _far_extent(kspec, rho_min)
    if v_max <= 0:
        return np.empty(0), np.empty(0)
    breaks = {0.0, v_max}
    for c in kspec.breakpoints():
        if rho_min < c < rho_min * math.exp(v_max):
            breaks.add(math.log(c / rho_min))
    breaks = sorted(breaks)
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    rhos, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        panels = max(int(math.ceil((b - a) / PANEL_WIDTH)), 1)
        edges = np.linspace(a, b, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            v = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            rho = rho_min * np.exp(v)
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                dens = kspec.radial(rho) * rho ** kspec.d
            rhos.append(rho)
            weights.append(0.5 * (hi - lo) * w * np.where(np.isfinite(dens), dens, 0.0))
    return np.concatenate(rhos), np.concatenate(weights)


def _far_directions(d: int, count: int) -> Tuple[np.ndarray, float]:
    """Half of a symmetric direction set and the weight of each full-circle direction."""
    if d == 1:
        return np.array([[1.0]]), 1.0
    half = max(count // 2, 1)
    theta = math.pi * np.arange(half) / half
    return np.stack((np.cos(theta), np.sin(theta)), axis=1), math.pi / half


class StencilMatrix:
    """Coupling table of a kernel on a grid, with the exterior points it reads."""

    def __init__(self, grid: Grid, kspec: KernelSpec, couplings: np.ndarray, unknown: np.ndarray,
                 ext_points: np.ndarray, symmetric: bool):
        self.grid = grid
        self.kspec = kspec
        self.couplings = couplings
        self.unknown = unknown
        self.ext_points = ext_points
        self.symmetric = symmetric
        self.N = len(unknown)
        self._rows = couplings["row"]
        self._a = couplings["a"]
        self._b = np.where(couplings["paired"], couplings["b"], couplings["row"])

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.points(self.grid.indices[self.unknown])

    def exterior_values(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(g(self.ext_points), dtype=float).reshape(-1)

    def extended(self, inner: np.ndarray, ext: np.ndarray) -> np.ndarray:
        return np.concatenate((np.asarray(inner, dtype=float), ext))

    def gather(self, u: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Extended value vector of a function defined everywhere."""
        return self.extended(np.asarray(u(self.nodes), dtype=float).reshape(-1),
                             self.exterior_values(u))

    def differences(self, V: np.ndarray) -> np.ndarray:
        """u(a) - u(x) for singles, u(a) + u(b) - 2 u(x) for pairs."""
        rows = self._rows
        return V[self._a] + V[self._b] - 2.0 * V[rows]

    def apply(self, V: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """L_h u at every unknown under per-coupling levels."""
        contrib = levels * self.couplings["weight"] * self.differences(V)
        return np.bincount(self._rows, weights=contrib, minlength=self.N)

    def diagonal(self, levels: np.ndarray) -> np.ndarray:
        factor = np.where(self.couplings["paired"], 2.0, 1.0)
        return np.bincount(self._rows, weights=levels * self.couplings["weight"] * factor,
                           minlength=self.N)

    def linear_levels(self) -> np.ndarray:
        return self.couplings["m"].copy()

    def bang_bang_levels(self, V: np.ndarray, lam: float, Lam: float, sign: int,
                         previous: Optional[np.ndarray] = None) -> np.ndarray:
        """Levels realizing M^+ (sign +1) or M^- (sign -1) on the current differences."""
        diff = self.differences(V)
        up, down = (Lam, lam) if sign > 0 else (lam, Lam)
        levels = np.where(diff > 0, up, down)
        if previous is not None:
            levels = np.where(np.abs(diff) < TIE_TOLERANCE, previous, levels)
        return levels

    def matrix(self, levels: np.ndarray, ext: np.ndarray) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """(A, load) with L_h u = A u + load on the unknowns."""
        c = self.couplings
        sw = levels * c["weight"]
        paired = c["paired"]
        rows = np.concatenate((c["row"], c["row"][paired], c["row"]))
        cols = np.concatenate((c["a"], c["b"][paired], c["row"]))
        data = np.concatenate((sw, sw[paired], -sw * np.where(paired, 2.0, 1.0)))
        inner = cols < self.N
        A = sparse.coo_matrix((data[inner], (rows[inner], cols[inner])),
                              shape=(self.N, self.N)).tocsr()
        outer = ~inner
        load = np.bincount(rows[outer], weights=data[outer] * ext[cols[outer] - self.N],
                           minlength=self.N)
        return A, load

    def box_values(self, inner: np.ndarray, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Values on every box node: the unknowns where solved, g elsewhere."""
        values = np.asarray(g(self.grid.nodes), dtype=float).reshape(-1)
        values[self.unknown] = inner
        return values.reshape(self.grid.shape)

    def scatter(self, inner: np.ndarray) -> np.ndarray:
        """Box-shaped array with NaN off the unknowns."""
        out = np.full(self.grid.n ** self.grid.d, np.nan)
        out[self.unknown] = inner
        return out


def _pairing(kspec: KernelSpec, symmetric: bool, radius: np.ndarray) -> np.ndarray:
    if symmetric:
        return np.ones(radius.shape, dtype=bool)
    if kspec.scaling.delta2 >= 1:
        return radius < kspec.r0
    return np.zeros(radius.shape, dtype=bool)


def _multiplier_levels(kspec: KernelSpec, x: np.ndarray, ya: np.ndarray,
                       yb: Optional[np.ndarray]) -> np.ndarray:
    multiplier = kspec.multiplier
    if multiplier is None:
        return np.ones(len(ya))
    level = multiplier(x, ya)
    if yb is not None:
        level = 0.5 * (level + multiplier(x, yb))
    return level


def build_stencil(kspec: KernelSpec, grid: Grid, symmetric: bool = False,
                  cfg: QuadratureConfig = DEFAULT_CONFIG, far_directions: int = 32) -> StencilMatrix:
    """Assemble the coupling table of kspec on grid.

    Offsets inside the lattice block reach every box node; the far field
    beyond it is read from the exterior closure.
    """
    d, h, n = grid.d, grid.h, grid.n
    if kspec.d != d:
        raise exceptions.PreconditionError(f"kernel in d={kspec.d} on a grid in d={d}")
    if not h < kspec.r0 / 4:
        raise exceptions.StencilRejected(f"h={h:g} must be below r0/4={kspec.r0 / 4:g}")

    unknown = np.flatnonzero(grid.inside)
    N = len(unknown)
    if N == 0:
        raise exceptions.PreconditionError("no grid node inside the domain; refine the grid")

    K = n - 1
    W = cell_weights(kspec, h, K, cfg)
    m_self = self_moment(kspec, h, cfg)
    if not (np.all(np.isfinite(W)) and np.all(W >= 0) and math.isfinite(m_self) and m_self >= 0):
        raise exceptions.StencilRejected("cell weights are not finite and nonnegative")

    # every slot of the extended lattice [-K, n-1+K]^d gets an index:
    # unknowns first, then all other slots as exterior points
    L = n + 2 * K
    ext_mesh = np.stack(np.meshgrid(*[np.arange(-K, n + K)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    slot_of = np.full(L ** d, -1, dtype=np.int64)
    box_idx = grid.indices[unknown]
    flat_unknown = np.ravel_multi_index(tuple((box_idx + K).T), (L,) * d)
    slot_of[flat_unknown] = np.arange(N)
    others = np.flatnonzero(slot_of < 0)
    slot_of[others] = N + np.arange(len(others))
    lattice_points = grid.points(ext_mesh[others])

    def slot(index: np.ndarray) -> np.ndarray:
        return slot_of[np.ravel_multi_index(tuple((index + K).T), (L,) * d)]

    offsets = np.stack(np.meshgrid(*[np.arange(-K, K + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    weights = W.reshape(-1)
    nonzero = np.any(offsets != 0, axis=1)
    offsets, weights = offsets[nonzero], weights[nonzero]
    paired = _pairing(kspec, symmetric, np.linalg.norm(offsets, axis=1) * h)
    # one representative per +-k pair: first nonzero coordinate positive
    lead = np.array([k[np.flatnonzero(k)[0]] for k in offsets])
    pair_offsets, pair_w = offsets[paired & (lead > 0)], weights[paired & (lead > 0)]
    single_offsets, single_w = offsets[~paired], weights[~paired]
    axes = np.eye(d, dtype=np.int64)

    far_dirs, dir_weight = _far_directions(d, far_directions)
    far_rho, far_w, far_u = [], [], []
    for direction in far_dirs:
        rho_min = (K + 0.5) * h / np.max(np.abs(direction))
        rho, w = far_nodes(kspec, rho_min)
        far_rho.append(rho)
        far_w.append(w * dir_weight)
        far_u.append(np.repeat(direction[None, :], len(rho), axis=0))
    far_rho = np.concatenate(far_rho)
    far_w = np.concatenate(far_w)
    far_u = np.concatenate(far_u).reshape(-1, d)
    far_paired = _pairing(kspec, symmetric, far_rho)

    blocks = []
    far_points = []
    next_ext = N + len(others)
    for i, p in enumerate(box_idx):
        x = grid.points(p)
        # lattice pairs, the self cell as axis pairs, and lattice singles
        pa, pb = p + pair_offsets, p - pair_offsets
        sa, sb = p + axes, p - axes
        qa = p + single_offsets
        ya, yb = grid.points(pa), grid.points(pb)
        rows = [
            _block(i, slot(pa), slot(pb), pair_w, _multiplier_levels(kspec, x, ya, yb), True),
            _block(i, slot(sa), slot(sb), np.full(d, m_self / (2.0 * h * h)),
                   _multiplier_levels(kspec, x, grid.points(sa), grid.points(sb)), True),
            _block(i, slot(qa), np.full(len(qa), -1), single_w,
                   _multiplier_levels(kspec, x, grid.points(qa), None), False),
        ]
        # far field: x + rho u and x - rho u
        if len(far_rho):
            plus = x + far_rho[:, None] * far_u
            minus = x - far_rho[:, None] * far_u
            count = len(far_rho)
            ia = next_ext + np.arange(count)
            ib = ia + count
            next_ext += 2 * count
            far_points.extend((plus, minus))
            fp = far_paired
            rows.append(_block(i, ia[fp], ib[fp], far_w[fp],
                               _multiplier_levels(kspec, x, plus[fp], minus[fp]), True))
            rows.append(_block(i, np.concatenate((ia[~fp], ib[~fp])), np.full(2 * np.count_nonzero(~fp), -1),
                               np.concatenate((far_w[~fp], far_w[~fp])),
                               _multiplier_levels(kspec, x, np.concatenate((plus[~fp], minus[~fp])), None),
                               False))
        blocks.extend(rows)

    couplings = np.concatenate(blocks)
    couplings = couplings[couplings["weight"] > 0]
    ext_points = np.concatenate([lattice_points, *far_points]) if far_points else lattice_points
    if np.any(couplings["m"] < 0):
        raise exceptions.StencilRejected("negative multiplier levels break monotonicity")
    logger.info("stencil for %s on n=%d (d=%d): %d unknowns, %d couplings, %d exterior points",
                kspec.name, n, d, N, len(couplings), len(ext_points))
    return StencilMatrix(grid, kspec, couplings, unknown, ext_points, symmetric)


def _block(row: int, a: np.ndarray, b: np.ndarray, weight: np.ndarray, m: np.ndarray,
           paired: bool) -> np.ndarray:
    out = np.empty(len(a), dtype=coupling_dt)
    out["row"] = row
    out["a"] = a
    out["b"] = b
    out["weight"] = weight
    out["m"] = m
    out["paired"] = paired
    return out
