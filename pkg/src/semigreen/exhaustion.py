"""Exhaustion-limit constructions on increasing domain families.

Solves the absorption problem stage by stage with the same supersolution
data, enforces the monotone-decrease law between consecutive stages, tracks
the harmonic-majorant family of the limiting field, and classifies the
anchor trace as nontrivial / trivial_trend / undecided.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Exhaustion, Grid, restrict, shared_node_indices
from .operator import EllipticCoefficients, apply as apply_op, assemble, check_superharmonic
from .potential import factorize, harmonic_extension
from .solver import NonConvergence, Nonlinearity, condition_factor, solve_U

__all__ = [
    "ExhaustionRun",
    "run_exhaustion",
    "harmonic_majorant",
    "correspondence_roundtrip",
    "RoundtripReport",
    "split_experiment",
    "SplitReport",
]

# verdict thresholds: fractions of the initial anchor value / sup s,
# applied over the last WINDOW stages
DECAY_FRACTION = 1e-3
NONTRIVIAL_FRACTION = 0.05
STALL_FRACTION = 0.1
WINDOW = 3


@dataclass
class ExhaustionRun:
    stages: tuple  # (grid, u_n, h_n) per stage; h_n may be None if untracked
    anchor: tuple
    anchor_values: np.ndarray
    limit_estimate: np.ndarray  # u_N on the final stage
    triviality_verdict: str  # nontrivial | trivial_trend | undecided
    tail_metrics: tuple  # per-stage identity residuals
    sup_s: float
    coeffs: EllipticCoefficients
    phi: Nonlinearity
    reports: tuple = ()
    monotone_slack: float = 0.0  # worst observed u_{n+1} - u_n on shared nodes


def _s_field(s, grid: Grid) -> np.ndarray:
    if callable(s):
        vals = np.asarray(s(grid.nodes), dtype=float)
        if vals.shape != (grid.n_nodes,):
            raise ValueError("supersolution callable must return one value per node")
        return vals
    vals = np.asarray(s, dtype=float)
    if vals.ndim == 0:
        return np.full(grid.n_nodes, float(vals))
    raise ValueError("supersolution data must be a scalar or a callable on points")


def _classify(anchor_values: np.ndarray, sup_s: float) -> str:
    if len(anchor_values) < WINDOW:
        return "undecided"
    tail = anchor_values[-WINDOW:]
    if np.all(tail < DECAY_FRACTION * anchor_values[0]):
        return "trivial_trend"
    stalled = tail[0] - tail[-1] <= STALL_FRACTION * max(tail[0], 0.0)
    if np.all(tail >= NONTRIVIAL_FRACTION * sup_s) and stalled:
        return "nontrivial"
    return "undecided"


def run_exhaustion(
    exh: Exhaustion,
    coeffs: EllipticCoefficients,
    phi: Nonlinearity,
    s,
    tol: float = 1e-10,
    max_iter: int = 200,
    scheme: str = "sandwich",
    sh_tol: float = 1e-9,
    mono_tol: float = 1e-9,
    track_majorants: bool = True,
) -> ExhaustionRun:
    """Solve the absorption problem on every stage with data s|boundary.

    s must be discretely superharmonic on each stage (a scalar skips the
    check when c vanishes identically: constants are then harmonic). The
    decrease u_{n+1} <= u_n + kappa*tol on shared nodes is enforced; a
    violation means the discretization, not the math, is wrong.
    """
    fields, gops, anchors, tails, reports = [], [], [], [], []
    slack = -np.inf
    sup_s = -np.inf
    prev_grid = None
    for n, grid in enumerate(exh.stages):
        op = assemble(grid, coeffs)
        gop = factorize(op)
        sf = _s_field(s, grid)
        sup_s = max(sup_s, float(np.max(sf)))
        if callable(s) or coeffs.zero_order_mode != "c_zero":
            rep = check_superharmonic(op, sf, tol=sh_tol)
            if not rep.passed:
                raise ValueError(
                    f"stage {n}: supersolution data fails the superharmonic check "
                    f"(residual {rep.max_residual:.3e} at node {rep.worst_node})"
                )
        u, srep = solve_U(op, gop, sf[grid.boundary_nodes], phi,
                          tol=tol, max_iter=max_iter, scheme=scheme)
        if srep.status != "converged":
            raise NonConvergence(
                f"stage {n}: solve ended with status {srep.status!r} "
                f"(residual {srep.final_identity_residual:.3e})", srep)
        if prev_grid is not None:
            own, prior = shared_node_indices(prev_grid, grid)
            defect = float(np.max(u[prior] - fields[-1][own]))
            slack = max(slack, defect)
            bound = condition_factor(gops[-1]) * tol
            if defect > bound:
                raise RuntimeError(
                    f"stage {n}: monotone decrease violated by {defect:.3e} "
                    f"(allowed {bound:.3e}); discretization problem")
        fields.append(u)
        gops.append(gop)
        anchors.append(float(u[grid.index_of(exh.anchor)]))
        tails.append(srep.final_identity_residual)
        reports.append(srep)
        prev_grid = grid

    majorants = [None] * len(fields)
    if track_majorants:
        w_family = [restrict(fields[-1], exh.stages[-1], g) for g in exh.stages]
        majorants, _ = _majorant_family(exh.stages, gops, w_family, mono_tol)

    anchor_values = np.asarray(anchors)
    return ExhaustionRun(
        stages=tuple(zip(exh.stages, fields, majorants)),
        anchor=exh.anchor,
        anchor_values=anchor_values,
        limit_estimate=fields[-1],
        triviality_verdict=_classify(anchor_values, sup_s),
        tail_metrics=tuple(tails),
        sup_s=sup_s,
        coeffs=coeffs,
        phi=phi,
        reports=tuple(reports),
        monotone_slack=float(slack) if np.isfinite(slack) else 0.0,
    )


def _majorant_family(grids, gops, w_family, tol):
    family = []
    for n, (grid, gop, w) in enumerate(zip(grids, gops, w_family)):
        h = harmonic_extension(gop, np.asarray(w, dtype=float)[grid.boundary_nodes])
        if family:
            own, prior = shared_node_indices(grids[n - 1], grid)
            defect = float(np.min(h[prior] - family[-1][own]))
            if defect < -tol:
                raise RuntimeError(
                    f"stage {n}: majorant family not increasing "
                    f"(drop {defect:.3e} beyond {tol:.1e})")
        family.append(h)
    return family, family[-1]


def harmonic_majorant(exh: Exhaustion, coeffs: EllipticCoefficients, w, tol: float = 1e-9):
    """Least-harmonic-majorant family of a solution field.

    w: either one field on the final stage (restricted down internally) or a
    list of per-stage fields. Returns (family, h_N); the family is checked
    to be increasing in n on shared nodes.
    """
    if isinstance(w, np.ndarray):
        w_family = [restrict(w, exh.stages[-1], g) for g in exh.stages]
    else:
        w_family = [np.asarray(wn, dtype=float) for wn in w]
        if len(w_family) != len(exh.stages):
            raise ValueError(
                f"expected {len(exh.stages)} stage fields, got {len(w_family)}")
    gops = [factorize(assemble(g, coeffs)) for g in exh.stages]
    return _majorant_family(exh.stages, gops, w_family, tol)


@dataclass(frozen=True)
class RoundtripReport:
    passed: bool
    harmonicity_residual: float
    reconstruction_residual: float
    kappa: float
    monotone_ok: bool
    injective_gap: float


def correspondence_roundtrip(
    grid: Grid,
    coeffs: EllipticCoefficients,
    phi: Nonlinearity,
    h,
    tol: float = 1e-10,
    harmonicity_tol: float = 1e-8,
    **solve_kw,
) -> tuple:
    """Check the pairing between a nonnegative harmonic field h and the
    absorption solution with boundary data h.

    Asserts the reconstruction u + G phi(u) == h up to kappa*tol, and probes
    injectivity by bumping the data with a positive harmonic field (the
    extension of boundary values 1; a constant when c vanishes).

    Returns (u, RoundtripReport).
    """
    op = assemble(grid, coeffs)
    gop = factorize(op)
    if callable(h):
        h = np.asarray(h(grid.nodes), dtype=float)
    else:
        h = np.asarray(h, dtype=float)
        if h.ndim == 0:
            h = np.full(grid.n_nodes, float(h))
    if h.shape != (grid.n_nodes,):
        raise ValueError("h must be a full node field")
    if np.min(h) < 0:
        raise ValueError(f"h must be nonnegative; min = {np.min(h):.3e}")
    harm_res = float(np.max(np.abs(apply_op(op, h)))) if grid.n_interior else 0.0
    if harm_res > harmonicity_tol:
        raise ValueError(
            f"h fails the harmonicity check: residual {harm_res:.3e} "
            f"> {harmonicity_tol:.1e}")

    kappa = condition_factor(gop)
    u, rep = solve_U(op, gop, h[grid.boundary_nodes], phi, tol=tol, **solve_kw)
    if rep.status != "converged":
        raise NonConvergence("roundtrip solve did not converge", rep)
    pts = grid.nodes[grid.interior_nodes]
    gphi = gop.solve(phi(pts, u[grid.interior_nodes]))
    recon = float(np.max(np.abs(u[grid.interior_nodes] + gphi - h[grid.interior_nodes])))

    bump = harmonic_extension(gop, 1.0)
    u2, rep2 = solve_U(op, gop, h[grid.boundary_nodes] + 1.0, phi, tol=tol, **solve_kw)
    if rep2.status != "converged":
        raise NonConvergence("roundtrip probe solve did not converge", rep2)
    monotone_ok = bool(np.min(u2 - u) >= -tol * kappa)
    gap = float(np.max(u2 - u))
    passed = recon <= kappa * tol and monotone_ok and gap > 0 and np.min(bump) > 0
    return u, RoundtripReport(passed, harm_res, recon, kappa, monotone_ok, gap)


@dataclass(frozen=True)
class SplitReport:
    mode: str
    passed: bool
    max_violation: float
    verdict: str  # nontriviality verdict of the relevant run
    runs: dict = field(default_factory=dict, repr=False)


def split_experiment(
    exh: Exhaustion,
    coeffs: EllipticCoefficients,
    phi1: Nonlinearity,
    phi2: Nonlinearity,
    mode: str,
    s,
    tol: float = 1e-9,
    **run_kw,
) -> SplitReport:
    """Compare absorption runs under ordered or summed nonlinearities.

    domination: requires phi1 <= phi2 (sampled); solutions then satisfy
    u1 >= u2 - tol stagewise. sum: u(phi1+phi2) <= min(u1, u2) + tol and
    the sum run's verdict is reported.
    """
    if mode not in ("domination", "sum"):
        raise ValueError(f"unknown split mode {mode!r}")
    final = exh.stages[-1]
    sup_s = float(np.max(_s_field(s, final)))
    probes = np.linspace(0.0, max(sup_s, 1.0), 9)
    pts = final.nodes
    if mode == "domination":
        for t in probes:
            gap = phi1(pts, t) - phi2(pts, t)
            if np.max(gap) > 1e-12:
                raise ValueError(
                    f"sampled domination violated: phi1 > phi2 by "
                    f"{np.max(gap):.3e} at t={t}")
        r1 = run_exhaustion(exh, coeffs, phi1, s, **run_kw)
        r2 = run_exhaustion(exh, coeffs, phi2, s, **run_kw)
        worst = max(
            float(np.max(u2 - u1))
            for (_, u1, _), (_, u2, _) in zip(r1.stages, r2.stages)
        )
        return SplitReport("domination", worst <= tol, worst,
                           r2.triviality_verdict, {"phi1": r1, "phi2": r2})

    phi_sum = Nonlinearity(
        phi=lambda p, t: phi1(p, t) + phi2(p, t),
        differentiable=phi1.differentiable and phi2.differentiable,
    )
    r1 = run_exhaustion(exh, coeffs, phi1, s, **run_kw)
    r2 = run_exhaustion(exh, coeffs, phi2, s, **run_kw)
    rs = run_exhaustion(exh, coeffs, phi_sum, s, **run_kw)
    worst = max(
        float(np.max(us - np.minimum(u1, u2)))
        for (_, u1, _), (_, u2, _), (_, us, _) in zip(r1.stages, r2.stages, rs.stages)
    )
    return SplitReport("sum", worst <= tol, worst, rs.triviality_verdict,
                       {"phi1": r1, "phi2": r2, "sum": rs})
