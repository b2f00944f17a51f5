"""Rectilinear grids in 1D/2D with interior/boundary classification and
nested exhaustion sequences.

Grids are axis-aligned boxes sampled on a uniform lattice. A node is a
boundary node iff it lies on a box face; everything else is interior.
Unbounded domains (the upper half-plane) are represented by growing box
truncations kept a fixed offset ``delta`` above the axis.

All objects here are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Exhaustion",
    "build_box_grid",
    "build_halfplane_truncation",
    "build_exhaustion",
    "restrict",
]

_COMMENSURATE_RTOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over a closed box.

    Attributes
    ----------
    dim : int
        1 or 2.
    bbox : tuple of (lo, hi) pairs, one per axis.
    spacing : tuple of floats, one per axis.
    nodes : (n_nodes, dim) array of node positions, x fastest in axis
        order, flattened C-style over axis index tuples.
    interior_mask : (n_nodes,) bool array.
    boundary_nodes : (n_boundary,) int array of node indices.
    """

    dim: int
    bbox: tuple
    spacing: tuple
    shape: tuple
    nodes: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)
    boundary_nodes: np.ndarray = field(repr=False)
    interior_nodes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior_nodes.shape[0]

    def index_of(self, point) -> int:
        """Node index of a lattice point; raises if not on the lattice."""
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        if pt.shape != (self.dim,):
            raise ValueError(f"point has wrong dimension {pt.shape}, grid dim {self.dim}")
        idx = []
        for ax in range(self.dim):
            k = (pt[ax] - self.bbox[ax][0]) / self.spacing[ax]
            ki = int(round(k))
            if not (0 <= ki < self.shape[ax]) or abs(k - ki) > 1e-6:
                raise ValueError(f"point {tuple(pt)} is not a lattice node of this grid")
            idx.append(ki)
        flat = idx[0]
        for ax in range(1, self.dim):
            flat = flat * self.shape[ax] + idx[ax]
        return flat


@dataclass(frozen=True)
class Exhaustion:
    """Nested grids D_0 subset D_1 subset ... sharing an anchor point."""

    stages: tuple
    anchor: tuple

    def __len__(self) -> int:
        return len(self.stages)


def _axis_count(lo: float, hi: float, h: float) -> int:
    """Number of intervals along one axis; errors if h is not commensurate."""
    length = hi - lo
    if not (length > 0):
        raise ValueError(f"degenerate box axis [{lo}, {hi}]")
    if not (h > 0):
        raise ValueError(f"spacing must be positive, got {h}")
    n = length / h
    ni = round(n)
    if ni < 2 or abs(n - ni) > _COMMENSURATE_RTOL * max(1.0, n):
        raise ValueError(
            f"spacing {h} does not divide axis [{lo}, {hi}] "
            f"(needs an integer number >= 2 of cells, got {n})"
        )
    return int(ni)


def build_box_grid(bbox, spacing) -> Grid:
    """Build a uniform grid over a box.

    Parameters
    ----------
    bbox : (lo, hi) for 1D, or ((xlo, xhi), (ylo, yhi)) for 2D.
    spacing : positive float, or per-axis tuple.

    Returns
    -------
    Grid with boundary nodes exactly on the box faces.
    """
    box = np.asarray(bbox, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] not in (1, 2):
        raise ValueError(f"bbox must be (lo,hi) or ((lo,hi),(lo,hi)), got {bbox!r}")
    dim = box.shape[0]
    hs = np.broadcast_to(np.asarray(spacing, dtype=float), (dim,))

    counts = [_axis_count(box[ax, 0], box[ax, 1], hs[ax]) for ax in range(dim)]
    shape = tuple(c + 1 for c in counts)
    axes = [box[ax, 0] + hs[ax] * np.arange(shape[ax]) for ax in range(dim)]
    # snap the last node onto the box face to kill accumulation error
    for ax in range(dim):
        axes[ax][-1] = box[ax, 1]

    if dim == 1:
        nodes = axes[0][:, None]
        on_face = np.zeros(shape[0], dtype=bool)
        on_face[0] = on_face[-1] = True
    else:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        I, J = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        on_face = ((I == 0) | (I == shape[0] - 1) | (J == 0) | (J == shape[1] - 1)).ravel()

    interior_mask = ~on_face
    return Grid(
        dim=dim,
        bbox=tuple((float(a), float(b)) for a, b in box),
        spacing=tuple(float(h) for h in hs),
        shape=shape,
        nodes=nodes,
        interior_mask=interior_mask,
        boundary_nodes=np.flatnonzero(on_face),
        interior_nodes=np.flatnonzero(interior_mask),
    )


def build_halfplane_truncation(radius: float, delta: float, spacing) -> Grid:
    """Box truncation [-R, R] x [delta, delta + 2R] of the upper half-plane.

    The strip 0 < y < delta stays outside every truncation; delta defaults
    to one spacing unit at call sites.
    """
    if not (radius > 0 and delta > 0):
        raise ValueError("radius and delta must be positive")
    return build_box_grid(((-radius, radius), (delta, delta + 2.0 * radius)), spacing)


def build_exhaustion(
    base_bbox,
    growth_factor: float,
    n_stages: int,
    spacing_rule: str = "fixed",
    spacing=None,
    anchor=None,
    halfplane: bool = False,
    delta: float | None = None,
) -> Exhaustion:
    """Build a nested sequence of grids with geometrically growing boxes.

    Parameters
    ----------
    base_bbox : box of stage 0 (for halfplane mode: the scalar radius R_0).
    growth_factor : box scale ratio between consecutive stages, > 1.
    n_stages : >= 2.
    spacing_rule : "fixed" keeps the stage-0 spacing on every stage;
        "halve" divides the spacing by 2 per stage. Both nest exactly.
    spacing : stage-0 spacing (required).
    anchor : point that must be a lattice node of stage 0. Defaults to the
        box center (halfplane mode: one spacing unit above the bottom
        face midpoint).
    halfplane : grow upper half-plane truncations instead of centered boxes.
    delta : half-plane bottom offset; defaults to the stage-0 spacing.
    """
    if not growth_factor > 1:
        raise ValueError(f"growth_factor must be > 1, got {growth_factor}")
    if n_stages < 2:
        raise ValueError(f"n_stages must be >= 2, got {n_stages}")
    if spacing is None:
        raise ValueError("spacing is required")
    if spacing_rule not in ("fixed", "halve"):
        raise ValueError(f"unknown spacing_rule {spacing_rule!r}")

    stages = []
    for n in range(n_stages):
        scale = growth_factor**n
        h = spacing if spacing_rule == "fixed" else spacing / (2.0**n)
        if halfplane:
            r0 = float(np.asarray(base_bbox).ravel()[0])
            d = spacing if delta is None else delta
            g = build_halfplane_truncation(r0 * scale, d, h)
        else:
            box = np.asarray(base_bbox, dtype=float)
            if box.ndim == 1:
                box = box[None, :]
            g = build_box_grid(box * scale, h)
        stages.append(g)

    for a, b in zip(stages, stages[1:]):
        _check_nested(a, b)

    g0 = stages[0]
    if anchor is None:
        if halfplane:
            anchor = (0.0, g0.bbox[1][0] + g0.spacing[1])
        else:
            anchor = tuple((lo + hi) / 2.0 for lo, hi in g0.bbox)
    anchor = tuple(float(v) for v in np.atleast_1d(anchor))
    for g in stages:
        g.index_of(anchor)  # raises if the anchor is not a shared node
    return Exhaustion(stages=tuple(stages), anchor=anchor)


def _check_nested(inner: Grid, outer: Grid) -> None:
    """Exact node nesting: every inner node is an outer lattice node."""
    if inner.dim != outer.dim:
        raise ValueError("stages differ in dimension")
    for ax in range(inner.dim):
        ratio = inner.spacing[ax] / outer.spacing[ax]
        if abs(ratio - round(ratio)) > _COMMENSURATE_RTOL or round(ratio) < 1:
            raise ValueError(
                f"stage spacings {inner.spacing[ax]} / {outer.spacing[ax]} do not nest"
            )
        off = (inner.bbox[ax][0] - outer.bbox[ax][0]) / outer.spacing[ax]
        if abs(off - round(off)) > 1e-6:
            raise ValueError("stage lattices are not aligned")
        if inner.bbox[ax][0] < outer.bbox[ax][0] - 1e-12 or inner.bbox[ax][1] > outer.bbox[ax][1] + 1e-12:
            raise ValueError("inner stage box is not contained in the outer stage box")
    # interior containment: the inner box must sit strictly inside the outer box
    # on every axis except faces shared with a fixed offset (half-plane bottom)
    strict = [
        inner.bbox[ax][0] > outer.bbox[ax][0] or inner.bbox[ax][0] == outer.bbox[ax][0]
        for ax in range(inner.dim)
    ]
    if not all(strict):
        raise ValueError("stages do not nest")


def shared_node_indices(inner: Grid, outer: Grid):
    """Index arrays (idx_inner, idx_outer) of nodes common to both grids.

    Requires exact nesting; every inner node must be an outer node.
    """
    _check_nested(inner, outer)
    ratios = [int(round(inner.spacing[ax] / outer.spacing[ax])) for ax in range(inner.dim)]
    offs = [
        int(round((inner.bbox[ax][0] - outer.bbox[ax][0]) / outer.spacing[ax]))
        for ax in range(inner.dim)
    ]
    if inner.dim == 1:
        ii = np.arange(inner.shape[0])
        oi = offs[0] + ratios[0] * ii
        return ii, oi
    ii = np.arange(inner.shape[0] * inner.shape[1])
    i0, j0 = np.divmod(ii, inner.shape[1])
    oi = (offs[0] + ratios[0] * i0) * outer.shape[1] + (offs[1] + ratios[1] * j0)
    return ii, oi


def restrict(values: np.ndarray, frm: Grid, to: Grid) -> np.ndarray:
    """Copy a node field from a finer/larger grid onto a nested coarser one.

    Exact value copy at shared nodes, no interpolation.
    """
    values = np.asarray(values)
    if values.shape[0] != frm.n_nodes:
        raise ValueError(
            f"field has {values.shape[0]} values, grid has {frm.n_nodes} nodes"
        )
    idx_to, idx_frm = shared_node_indices(to, frm)
    out = np.empty(to.n_nodes, dtype=values.dtype)
    out[idx_to] = values[idx_frm]
    return out
