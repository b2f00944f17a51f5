"""Nonlinear solution operator: the fixed point u = H_D f - G_D phi(.,u).

Three schemes:

* ``sandwich`` (default): iterate T u = H_D f - G_D phi(.,u). T is antitone
  for monotone phi, so even iterates decrease, odd iterates increase, and
  the two envelopes bracket the fixed point; the envelope gap equals the
  identity residual of the latest iterate. Needs only monotonicity of phi.
* ``damped_picard``: u <- (1-omega) u + omega T u, for nonlinearities where
  the pure alternation cycles.
* ``newton``: solves (K + diag(d phi)) delta = -(K u + phi(u) - B f) with a
  finite-difference slope, projecting iterates onto u >= 0 (the discrete
  fixed point is nonnegative for f >= 0 under (H3)). Offered only when the
  nonlinearity is declared differentiable. The slope is the larger of an
  absolute-step and a relative-step secant; for concave phi this is
  tangent-quality, which keeps the descent monotone even on degenerate
  dead-core problems where an absolute step alone chatters.

Convergence is declared on the identity residual ||u + G phi(u) - H f||_inf.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operator import DiscreteOperator, apply as apply_op
from .potential import GreenOperator, _as_green, _boundary_field, harmonic_extension

__all__ = [
    "Nonlinearity",
    "SolveReport",
    "CheckVerdict",
    "NonConvergence",
    "apply_T",
    "solve_U",
    "check_comparison",
    "check_monotone_in_data",
    "condition_factor",
]

SCHEMES = ("sandwich", "damped_picard", "newton")


class NonConvergence(RuntimeError):
    """A solve ended without meeting its tolerance; .report has the trace."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Nonlinearity:
    """Evaluator for phi(x, t).

    phi : callable(points, t) -> values, vectorized over an (n, dim) point
        array with t scalar or length-n; must satisfy phi >= 0, phi
        increasing in t, and phi(x, t) = 0 for t <= 0.
    differentiable : declared smoothness in t; gates the newton scheme.
    monotone_check_samples : probe count for validate().
    metadata : free-form (split masks and similar).
    """

    phi: Callable
    differentiable: bool = False
    monotone_check_samples: int = 16
    metadata: dict = field(default_factory=dict)

    def __call__(self, points: np.ndarray, t) -> np.ndarray:
        out = np.asarray(self.phi(points, t), dtype=float)
        if out.ndim == 0:
            out = np.full(points.shape[0], float(out))
        return out

    def validate(self, points: np.ndarray, t_max: float = 1.0) -> None:
        """Spot-check (H1)-(H3) on sampled nodes and a t probe range."""
        m = self.monotone_check_samples
        idx = np.linspace(0, points.shape[0] - 1, min(m, points.shape[0])).astype(int)
        pts = points[idx]
        probes = np.concatenate([[-1.0, -1e-9, 0.0], np.linspace(1e-9, max(t_max, 1e-9), m)])
        prev = None
        for t in probes:
            vals = self(pts, t)
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"phi returned non-finite values at t={t}")
            if np.any(vals < 0):
                raise ValueError(f"phi must be nonnegative; got {vals.min():.3e} at t={t}")
            if t <= 0 and np.any(vals != 0):
                raise ValueError(f"phi(x, t) must vanish for t <= 0; got {vals.max():.3e} at t={t}")
            if prev is not None and np.any(vals < prev - 1e-12 * max(1.0, float(np.max(prev)))):
                raise ValueError(f"phi must be increasing in t; decrease detected at t={t}")
            prev = vals


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    status: str  # converged | max_iter | diverged
    final_identity_residual: float
    sandwich_gap_history: list = field(default_factory=list)
    scheme: str = ""


def apply_T(op, gop, f, u, phi: Nonlinearity) -> np.ndarray:
    """One application of T u = H_D f - G_D phi(., u); full node fields."""
    gop = _as_green(gop if gop is not None else op)
    grid = gop.grid
    fb = _boundary_field(gop, f)
    u = np.asarray(u, dtype=float)
    ui = u[grid.interior_nodes] if u.shape[0] == grid.n_nodes else u
    pts = grid.nodes[grid.interior_nodes]
    hf = gop.solve(gop.op.B @ fb)
    out = np.empty(grid.n_nodes)
    out[grid.boundary_nodes] = fb
    out[grid.interior_nodes] = hf - gop.solve(_phi_checked(phi, pts, ui))
    return out


def _phi_checked(phi: Nonlinearity, pts, t) -> np.ndarray:
    vals = phi(pts, t)
    if not np.all(np.isfinite(vals)):
        raise ValueError("phi returned non-finite values during iteration")
    if np.any(vals < 0):
        raise ValueError("phi returned negative values during iteration (H1 violated)")
    return vals


def solve_U(
    op: DiscreteOperator,
    gop,
    f,
    phi: Nonlinearity,
    tol: float = 1e-10,
    max_iter: int = 200,
    scheme: str = "sandwich",
    omega: float = 0.5,
) -> tuple:
    """Solve u = H_D f - G_D phi(., u) for boundary data f >= 0.

    Returns (u, SolveReport); u is a full node field with u = f on the
    boundary. Non-convergence is reported in SolveReport.status, not
    raised: a stalled sandwich still returns verified envelope data.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    gop = _as_green(gop if gop is not None else op)
    grid = gop.grid
    fb = _boundary_field(gop, f)
    if np.min(fb) < 0:
        raise ValueError(f"boundary data must be nonnegative; min f = {np.min(fb):.3e}")
    if scheme == "newton" and not phi.differentiable:
        raise ValueError(
            "scheme=newton requires a nonlinearity declared differentiable"
        )
    pts = grid.nodes[grid.interior_nodes]
    phi.validate(pts, t_max=float(np.max(fb)) if fb.size else 1.0)

    out = np.empty(grid.n_nodes)
    out[grid.boundary_nodes] = fb

    if np.max(fb, initial=0.0) == 0.0:
        # zero data: zero is the (trivial) solution, one step
        out[grid.interior_nodes] = 0.0
        report = SolveReport(0, [0.0], "converged", 0.0, scheme=scheme)
        return out, report

    hf = gop.solve(gop.op.B @ fb)

    def identity_residual(ui):
        return float(np.max(np.abs(ui + gop.solve(_phi_checked(phi, pts, ui)) - hf)))

    if scheme == "sandwich":
        ui, report = _solve_sandwich(gop, hf, pts, phi, tol, max_iter)
    elif scheme == "damped_picard":
        ui, report = _solve_damped(gop, hf, pts, phi, tol, max_iter, omega, identity_residual)
    else:
        ui, report = _solve_newton(gop, hf, fb, pts, phi, tol, max_iter, identity_residual)
    report.scheme = scheme
    out[grid.interior_nodes] = ui
    return out, report


def _status(res_hist, tol):
    if not np.isfinite(res_hist[-1]):
        return "diverged"
    return "converged" if res_hist[-1] <= tol else "max_iter"


def _solve_sandwich(gop, hf, pts, phi, tol, max_iter):
    u = hf.copy()  # upper envelope start: T maps [0, Hf] downward
    gaps, residuals = [], []
    for it in range(max_iter):
        tu = hf - gop.solve(_phi_checked(phi, pts, u))
        gap = float(np.max(np.abs(u - tu)))
        gaps.append(gap)
        residuals.append(gap)  # identity residual of u equals the step gap
        if not np.isfinite(gap):
            return u, SolveReport(it + 1, residuals, "diverged", gap, gaps)
        if gap <= tol:
            return u, SolveReport(it + 1, residuals, "converged", gap, gaps)
        u = tu
    return u, SolveReport(max_iter, residuals, _status(residuals, tol), residuals[-1], gaps)


def _solve_damped(gop, hf, pts, phi, tol, max_iter, omega, identity_residual):
    if not (0 < omega <= 1):
        raise ValueError(f"omega must be in (0, 1], got {omega}")
    u = hf.copy()
    residuals = []
    for it in range(max_iter):
        tu = hf - gop.solve(_phi_checked(phi, pts, u))
        res = float(np.max(np.abs(u - tu)))
        residuals.append(res)
        if not np.isfinite(res):
            return u, SolveReport(it + 1, residuals, "diverged", res)
        if res <= tol:
            return u, SolveReport(it + 1, residuals, "converged", res)
        u = (1.0 - omega) * u + omega * tu
    return u, SolveReport(max_iter, residuals, _status(residuals, tol), residuals[-1])


def _fd_slope(phi, pts, t, step):
    return (phi(pts, t + step) - phi(pts, t)) / step


def _solve_newton(gop, hf, fb, pts, phi, tol, max_iter, identity_residual):
    K = gop.op.K.tocsc()
    bf = gop.op.B @ fb
    u = hf.copy()
    residuals = []
    for it in range(max_iter):
        res = identity_residual(u)
        residuals.append(res)
        if not np.isfinite(res):
            return u, SolveReport(it, residuals, "diverged", res)
        if res <= tol:
            return u, SolveReport(it, residuals, "converged", res)
        # slope: max of absolute-step and relative-step secants (see module doc)
        s_abs = 1e-6 * (1.0 + np.abs(u))
        s_rel = 1e-6 * np.abs(u) + 1e-300
        d = np.maximum(_fd_slope(phi, pts, u, s_abs), _fd_slope(phi, pts, u, s_rel))
        d = np.maximum(d, 0.0)
        direct = K @ u + _phi_checked(phi, pts, u) - bf
        delta = spla.spsolve(K + sp.diags(d), -direct)
        u = np.maximum(u + delta, 0.0)
    res = identity_residual(u)
    residuals.append(res)
    return u, SolveReport(max_iter, residuals, _status(residuals, tol), res)


@dataclass(frozen=True)
class CheckVerdict:
    passed: bool
    worst_node: int
    margin: float
    kappa: float = float("nan")
    reason: str = ""


def condition_factor(gop) -> float:
    """kappa = 1 + max(G_D 1): how far an interior residual slack of tol can
    displace the solution, by the discrete maximum principle."""
    gop = _as_green(gop)
    return 1.0 + float(np.max(gop.solve(np.ones(gop.grid.n_interior))))


def check_comparison(op, u, v, phi: Nonlinearity, boundary_gap: float = 0.0, tol: float = 1e-9) -> CheckVerdict:
    """Discrete comparison check for Lu - phi(.,u) <= Lv - phi(.,v).

    Passes iff all three hold:
      residual premise   (Lu - phi(u)) <= (Lv - phi(v)) + tol at interior nodes,
      boundary premise   u >= v - boundary_gap on the boundary,
      conclusion         u >= v - boundary_gap - kappa*tol in the interior.
    """
    grid = op.grid
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != grid.n_nodes or v.shape[0] != grid.n_nodes:
        raise ValueError("check_comparison needs full node fields for u and v")
    pts = grid.nodes[grid.interior_nodes]
    ru = apply_op(op, u) - phi(pts, u[grid.interior_nodes])
    rv = apply_op(op, v) - phi(pts, v[grid.interior_nodes])
    kappa = condition_factor(op)

    excess = ru - rv
    k = int(np.argmax(excess))
    if excess[k] > tol:
        return CheckVerdict(
            False, int(grid.interior_nodes[k]), float(excess[k] - tol), kappa,
            "residual premise violated",
        )
    bdiff = u[grid.boundary_nodes] - v[grid.boundary_nodes]
    k = int(np.argmin(bdiff))
    if bdiff[k] < -boundary_gap:
        return CheckVerdict(
            False, int(grid.boundary_nodes[k]), float(bdiff[k] + boundary_gap), kappa,
            "boundary premise violated",
        )
    idiff = u[grid.interior_nodes] - v[grid.interior_nodes]
    k = int(np.argmin(idiff))
    bound = -(boundary_gap + kappa * tol)
    if idiff[k] < bound:
        return CheckVerdict(
            False, int(grid.interior_nodes[k]), float(idiff[k] - bound), kappa,
            "interior conclusion violated",
        )
    return CheckVerdict(True, int(grid.interior_nodes[k]), float(idiff[k] - bound), kappa)


def check_monotone_in_data(op, gop, f, g, phi: Nonlinearity, tol: float = 1e-9, **solve_kw) -> CheckVerdict:
    """Solve with data f and g, f <= g on the boundary, and check
    U f <= U g + tol componentwise."""
    gop = _as_green(gop if gop is not None else op)
    fb = _boundary_field(gop, f)
    gb = _boundary_field(gop, g)
    if np.any(fb > gb):
        raise ValueError("pre-condition f <= g on the boundary is violated")
    uf, rf = solve_U(op, gop, fb, phi, **solve_kw)
    ug, rg = solve_U(op, gop, gb, phi, **solve_kw)
    for name, rep in (("f", rf), ("g", rg)):
        if rep.status != "converged":
            raise NonConvergence(f"solve for data {name} did not converge", rep)
    diff = uf - ug
    k = int(np.argmax(diff))
    return CheckVerdict(
        bool(diff[k] <= tol), k, float(tol - diff[k]),
        reason="" if diff[k] <= tol else "monotonicity violated",
    )
