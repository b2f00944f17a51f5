"""Discrete Dirichlet solves (harmonic extension, Green potential) plus the
closed-form kernels used as oracles: interval Green function, half-plane
Green function, and the half-space Poisson kernel with its extension
quadrature.

Both discrete operations share one sparse LU factorization of K = -L
restricted to interior nodes:

    harmonic extension   h = K^-1 B f   (Lh = 0 inside, h = f on the boundary)
    Green potential      g = K^-1 psi   (Lg = -psi inside, g = 0 on the boundary)

Factorizations are immutable; concurrent solves are serialized behind a
lock so the external contract (all operations callable concurrently)
holds regardless of the SuperLU build.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .operator import DiscreteOperator

__all__ = [
    "GreenOperator",
    "factorize",
    "harmonic_extension",
    "green_potential",
    "interval_green",
    "halfplane_green",
    "poisson_kernel_halfspace",
    "poisson_extension",
]


@dataclass
class GreenOperator:
    """Factorized solve handle over a DiscreteOperator's interior system.

    Sign convention: solves K v = rhs with K = -matrix, so Green data enters
    with a plus sign and L(G psi) = -psi.
    """

    op: DiscreteOperator
    _lu: object = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.op.K.tocsc())
            except RuntimeError as e:
                raise RuntimeError(f"singular interior system: {e}") from e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        with self._lock:
            return self._lu.solve(np.asarray(rhs, dtype=float))

    @property
    def grid(self):
        return self.op.grid


def factorize(op: DiscreteOperator) -> GreenOperator:
    return GreenOperator(op=op)


def _as_green(op) -> GreenOperator:
    if isinstance(op, GreenOperator):
        return op
    return factorize(op)


def _boundary_field(gop: GreenOperator, f) -> np.ndarray:
    grid = gop.grid
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(len(grid.boundary_nodes), float(f))
    if f.shape[0] == grid.n_nodes:
        f = f[grid.boundary_nodes]
    if f.shape[0] != len(grid.boundary_nodes):
        raise ValueError(
            f"boundary data length {f.shape[0]} does not match "
            f"{len(grid.boundary_nodes)} boundary nodes"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("boundary data must be finite")
    return f


def harmonic_extension(op, f) -> np.ndarray:
    """Solve the Dirichlet problem Lh = 0, h = f on the boundary.

    Parameters
    ----------
    op : DiscreteOperator or GreenOperator (reuses the factorization).
    f : boundary values, aligned with grid.boundary_nodes; a scalar or a
        full node field are also accepted.

    Returns
    -------
    Full node field with h = f exactly on boundary nodes.
    """
    gop = _as_green(op)
    grid = gop.grid
    fb = _boundary_field(gop, f)
    h = np.empty(grid.n_nodes)
    h[grid.boundary_nodes] = fb
    h[grid.interior_nodes] = gop.solve(gop.op.B @ fb)
    return h


def green_potential(gop, psi) -> np.ndarray:
    """Solve L g = -psi with zero boundary data; returns a full node field.

    psi may be interior-length or a full node field (boundary entries of a
    full field are ignored: the potential lives on interior sources).
    """
    gop = _as_green(gop)
    grid = gop.grid
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        psi = np.full(grid.n_interior, float(psi))
    if psi.shape[0] == grid.n_nodes:
        psi = psi[grid.interior_nodes]
    if psi.shape[0] != grid.n_interior:
        raise ValueError(
            f"source field length {psi.shape[0]} does not match "
            f"{grid.n_interior} interior nodes"
        )
    if not np.all(np.isfinite(psi)):
        raise ValueError("source field must be finite")
    g = np.zeros(grid.n_nodes)
    g[grid.interior_nodes] = gop.solve(psi)
    return g


def interval_green(x: float, y: float, endpoints=(0.0, 1.0)) -> float:
    """Green function of d^2/dx^2 on an interval: G(x,y) = (x-a)(b-y)/(b-a)
    for x <= y, symmetric otherwise. Arguments must lie strictly inside."""
    a, b = float(endpoints[0]), float(endpoints[1])
    if not (a < x < b and a < y < b):
        raise ValueError(f"points must lie strictly inside ({a}, {b})")
    lo, hi = (x, y) if x <= y else (y, x)
    return (lo - a) * (b - hi) / (b - a)


def halfplane_green(z, w) -> float:
    """Green function of the Laplacian on the upper half-plane:
    G(z,w) = ln(|z - conj(w)| / |z - w|) / (2 pi). Points as (x,y) pairs."""
    zx, zy = float(z[0]), float(z[1])
    wx, wy = float(w[0]), float(w[1])
    if zy <= 0 or wy <= 0:
        raise ValueError("points must lie in the open upper half-plane")
    d2 = (zx - wx) ** 2 + (zy - wy) ** 2
    if d2 == 0.0:
        raise ValueError("coincident points")
    m2 = (zx - wx) ** 2 + (zy + wy) ** 2
    return 0.25 * math.log(m2 / d2) / math.pi


def poisson_kernel_halfspace(x, y: float, n: int = 1) -> float:
    """Poisson kernel of the upper half-space over R^n, normalized to unit
    mass: P(x,y) = c_n * y / (|x|^2 + y^2)^((n+1)/2), c_1 = 1/pi."""
    if y <= 0:
        raise ValueError("y must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if xv.shape[0] != n:
        raise ValueError(f"x must have {n} components")
    c_n = math.gamma((n + 1) / 2.0) / math.pi ** ((n + 1) / 2.0)
    r2 = float(np.dot(xv, xv)) + y * y
    return c_n * y / r2 ** ((n + 1) / 2.0)


def _simpson_panel(func, lo: float, hi: float, n_sub: int) -> float:
    # composite Simpson with n_sub even subintervals on [lo, hi]
    xs = np.linspace(lo, hi, n_sub + 1)
    ys = func(xs)
    h = (hi - lo) / n_sub
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum())


def poisson_extension(
    f,
    eval_points,
    radius: float = 100.0,
    breakpoints=(),
    n_sub: int = 512,
    tail_correction: bool = True,
) -> np.ndarray:
    """Harmonic extension of bounded data on the real line into the upper
    half-plane: h(x,y) = integral of P(x - s, y) f(s) ds.

    The quadrature is composite Simpson on [-radius, radius], split at the
    declared breakpoints so discontinuous data (indicators) keeps full
    accuracy. The tail beyond the truncation is corrected analytically
    assuming f is constant there at its endpoint values:
    integral of P over [R, inf) = 1/2 - arctan((R - x)/y) / pi.

    Parameters
    ----------
    f : callable mapping a sample array to data values.
    eval_points : sequence of (x, y) with y > 0.
    breakpoints : data discontinuity locations inside [-radius, radius].
    """
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    if np.any(pts[:, 1] <= 0):
        raise ValueError("evaluation points must have y > 0")
    edges = sorted({-radius, radius, *(float(b) for b in breakpoints if -radius < float(b) < radius)})
    out = np.empty(pts.shape[0])
    for k, (x0, y0) in enumerate(pts):
        total = 0.0
        for lo, hi in zip(edges, edges[1:]):
            # resolve the kernel peak near s = x0: refine panels by width
            width = max(2, int(math.ceil((hi - lo) / y0)))
            nn = min(8192, n_sub * max(1, min(width, 16)))
            nn += nn % 2
            # data samples stay strictly inside the panel so a jump placed
            # exactly at a breakpoint contributes its one-sided limits
            nudge = 1e-9 * max(1.0, abs(lo), abs(hi))

            def integrand(s, x0=x0, y0=y0, lo=lo, hi=hi, nudge=nudge):
                inside = np.clip(s, lo + nudge, hi - nudge)
                return f(inside) / math.pi * y0 / ((x0 - s) ** 2 + y0 * y0)

            total += _simpson_panel(integrand, lo, hi, nn)
        if tail_correction:
            f_hi = float(np.asarray(f(np.array([radius]))).ravel()[0])
            f_lo = float(np.asarray(f(np.array([-radius]))).ravel()[0])
            total += f_hi * (0.5 - math.atan((radius - x0) / y0) / math.pi)
            total += f_lo * (0.5 - math.atan((radius + x0) / y0) / math.pi)
        out[k] = total
    return out
