"""Run-config parsing: flat INI sections -> validated model objects.

Sections: [domain], [operator], [nonlinearity], [solver], [experiment],
[output]. Every error names the offending "[section] key" so the CLI can
map it to a validation exit. Expression values use the expr mini-language
over (x, y) for fields and (x, y, t) for the nonlinearity.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .expr import Expr, ParseError, parse
from .geometry import Exhaustion, Grid, build_box_grid, build_exhaustion, build_halfplane_truncation
from .operator import EllipticCoefficients
from .solver import SCHEMES, Nonlinearity

__all__ = ["ConfigError", "RunConfig", "load_config", "field_function", "phi_function"]

_SECTIONS = ("domain", "operator", "nonlinearity", "solver", "experiment", "output")
_EXPERIMENTS = ("solve", "exhaust", "thin-check", "criterion", "green", "verify")


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class RunConfig:
    """Validated run description; expression values are kept as Expr and
    turned into callables on demand."""

    dim: int
    spacing: float
    bbox: tuple = None  # ((lo,hi),...) or None in halfplane mode
    halfplane: bool = False
    radius: float = None
    delta: float = None
    anchor: tuple = None
    exhaustion: dict = None  # factor, stages, delta, spacing_rule

    coeffs: EllipticCoefficients = None
    phi: Nonlinearity = None
    phi_expr: Expr = None

    scheme: str = "sandwich"
    tol: float = 1e-10
    max_iter: int = 200
    omega: float = 0.5

    experiment: str = "solve"
    experiment_opts: dict = field(default_factory=dict)

    precision: int = 17
    basename: str = None

    def grid(self) -> Grid:
        if self.halfplane:
            return build_halfplane_truncation(self.radius, self.delta, self.spacing)
        return build_box_grid(self.bbox if self.dim == 2 else self.bbox[0], self.spacing)

    def build_exhaustion(self) -> Exhaustion:
        if self.exhaustion is None:
            raise ConfigError("[domain] exhaustion.stages", "exhaust experiments need an exhaustion block")
        ex = self.exhaustion
        base = self.radius if self.halfplane else self.bbox
        return build_exhaustion(
            base, ex["factor"], ex["stages"],
            spacing_rule=ex["spacing_rule"], spacing=self.spacing,
            anchor=self.anchor, halfplane=self.halfplane, delta=ex["delta"],
        )

    def fmt(self, value: float) -> str:
        return f"{value:.{self.precision}g}"


def _parse_expr(raw: str, where: str, allowed: set) -> Expr:
    try:
        e = parse(raw)
    except ParseError as exc:
        raise ConfigError(where, f"parse error at offset {exc.offset}: {exc}") from exc
    extra = e.variables - allowed
    if extra:
        raise ConfigError(where, f"unknown variables {sorted(extra)}; allowed {sorted(allowed)}")
    return e


def field_function(e: Expr, dim: int):
    """Expression over (x, y) -> callable(points) -> values."""

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        bind = {"x": pts[:, 0]}
        if dim == 2:
            bind["y"] = pts[:, 1]
        return np.broadcast_to(np.asarray(e.eval(bind), dtype=float), (pts.shape[0],)).copy()

    return fn


def phi_function(e: Expr, dim: int):
    """Expression over (x, y, t) -> callable(points, t) -> values."""

    def fn(pts, t):
        pts = np.asarray(pts, dtype=float)
        bind = {"x": pts[:, 0], "t": t}
        if dim == 2:
            bind["y"] = pts[:, 1]
        out = np.asarray(e.eval(bind), dtype=float)
        return np.broadcast_to(out, (pts.shape[0],)).copy()

    return fn


def _floats(raw: str, where: str, n: int = None):
    try:
        vals = [float(v) for v in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(where, f"expected numbers, got {raw!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(where, f"expected {n} numbers, got {len(vals)}")
    return vals


def _get(cp, section, key, default=None, required=False):
    if cp.has_option(section, key):
        return cp.get(section, key).strip()
    if required:
        raise ConfigError(f"[{section}] {key}", "required key is missing")
    return default


def _get_float(cp, section, key, default=None, required=False):
    raw = _get(cp, section, key, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}", f"expected a number, got {raw!r}") from exc


def _get_int(cp, section, key, default=None, required=False):
    raw = _get(cp, section, key, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}", f"expected an integer, got {raw!r}") from exc


def _get_bool(cp, section, key, default=False):
    raw = _get(cp, section, key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key}", f"expected a boolean, got {raw!r}")


def _domain(cp, cfg_kw):
    dim = _get_int(cp, "domain", "dim", required=True)
    if dim not in (1, 2):
        raise ConfigError("[domain] dim", f"must be 1 or 2, got {dim}")
    spacing = _get_float(cp, "domain", "spacing", required=True)
    halfplane = _get_bool(cp, "domain", "halfplane", default=False)
    cfg_kw.update(dim=dim, spacing=spacing, halfplane=halfplane)

    exh = None
    if cp.has_option("domain", "exhaustion.stages"):
        exh = {
            "factor": _get_float(cp, "domain", "exhaustion.factor", default=2.0),
            "stages": _get_int(cp, "domain", "exhaustion.stages", required=True),
            "delta": _get_float(cp, "domain", "exhaustion.delta"),
            "spacing_rule": _get(cp, "domain", "exhaustion.spacing_rule", default="fixed"),
        }
        if exh["spacing_rule"] not in ("fixed", "halve"):
            raise ConfigError("[domain] exhaustion.spacing_rule",
                              f"must be fixed or halve, got {exh['spacing_rule']!r}")
    cfg_kw["exhaustion"] = exh

    if halfplane:
        if dim != 2:
            raise ConfigError("[domain] halfplane", "halfplane mode needs dim = 2")
        radius = _get_float(cp, "domain", "radius", required=True)
        delta = _get_float(cp, "domain", "delta")
        if delta is None:
            delta = exh["delta"] if exh and exh["delta"] is not None else spacing
        if exh is not None and exh["delta"] is None:
            exh["delta"] = delta
        cfg_kw.update(radius=radius, delta=delta)
    else:
        raw = _get(cp, "domain", "bbox", required=True)
        vals = _floats(raw, "[domain] bbox", 2 * dim)
        bbox = tuple((vals[2 * i], vals[2 * i + 1]) for i in range(dim))
        for lo, hi in bbox:
            if not lo < hi:
                raise ConfigError("[domain] bbox", f"axis [{lo}, {hi}] is degenerate")
        cfg_kw["bbox"] = bbox
        if exh is not None and exh["delta"] is None:
            exh["delta"] = spacing

    raw_anchor = _get(cp, "domain", "anchor")
    cfg_kw["anchor"] = tuple(_floats(raw_anchor, "[domain] anchor", dim)) if raw_anchor else None


_COEFF_KEYS = ("a11", "a12", "a22", "b1", "b2", "c")
_COEFF_DEFAULTS = {"a11": 1.0, "a12": 0.0, "a22": 1.0, "b1": 0.0, "b2": 0.0, "c": 0.0}


def _operator(cp, cfg_kw):
    dim = cfg_kw["dim"]
    mode = _get(cp, "operator", "zero_order_mode", default="c_nonpos")
    if mode not in ("c_nonpos", "c_zero"):
        raise ConfigError("[operator] zero_order_mode",
                          f"must be c_nonpos or c_zero, got {mode!r}")
    kw = {"zero_order_mode": mode}
    for key in _COEFF_KEYS:
        raw = _get(cp, "operator", key)
        if raw is None:
            kw[key] = _COEFF_DEFAULTS[key]
            continue
        e = _parse_expr(raw, f"[operator] {key}", {"x", "y"} if dim == 2 else {"x"})
        if e.variables:
            kw[key] = field_function(e, dim)
        else:
            kw[key] = float(e.eval({}))
    cfg_kw["coeffs"] = EllipticCoefficients(**kw)


def _nonlinearity(cp, cfg_kw):
    dim = cfg_kw["dim"]
    raw = _get(cp, "nonlinearity", "phi")
    differentiable = _get_bool(cp, "nonlinearity", "differentiable", default=False)
    if raw is None:
        cfg_kw["phi"] = Nonlinearity(phi=lambda p, t: np.zeros(p.shape[0]),
                                     differentiable=True)
        return
    allowed = {"x", "y", "t"} if dim == 2 else {"x", "t"}
    e = _parse_expr(raw, "[nonlinearity] phi", allowed)
    cfg_kw["phi_expr"] = e
    cfg_kw["phi"] = Nonlinearity(phi=phi_function(e, dim), differentiable=differentiable)


def _solver(cp, cfg_kw):
    scheme = _get(cp, "solver", "scheme", default="sandwich")
    if scheme not in SCHEMES:
        raise ConfigError("[solver] scheme", f"must be one of {SCHEMES}, got {scheme!r}")
    tol = _get_float(cp, "solver", "tol", default=1e-10)
    max_iter = _get_int(cp, "solver", "max_iter", default=200)
    omega = _get_float(cp, "solver", "omega", default=0.5)
    if not tol > 0:
        raise ConfigError("[solver] tol", f"must be positive, got {tol}")
    if max_iter < 1:
        raise ConfigError("[solver] max_iter", f"must be >= 1, got {max_iter}")
    cfg_kw.update(scheme=scheme, tol=tol, max_iter=max_iter, omega=omega)


def _experiment(cp, cfg_kw):
    dim = cfg_kw["dim"]
    kind = _get(cp, "experiment", "type", required=True)
    if kind not in _EXPERIMENTS:
        raise ConfigError("[experiment] type",
                          f"must be one of {_EXPERIMENTS}, got {kind!r}")
    opts = {}
    fvars = {"x", "y"} if dim == 2 else {"x"}

    if kind == "solve":
        raw = _get(cp, "experiment", "boundary_f", required=True)
        opts["boundary_f"] = field_function(_parse_expr(raw, "[experiment] boundary_f", fvars), dim)
    elif kind == "exhaust":
        raw = _get(cp, "experiment", "super_s", required=True)
        e = _parse_expr(raw, "[experiment] super_s", fvars)
        opts["super_s"] = field_function(e, dim) if e.variables else float(e.eval({}))
    elif kind == "thin-check":
        raw = _get(cp, "experiment", "witness_s", required=True)
        opts["witness_s"] = field_function(_parse_expr(raw, "[experiment] witness_s", fvars), dim)
        raw = _get(cp, "experiment", "set_A", required=True)
        pred_fn = field_function(_parse_expr(raw, "[experiment] set_A", fvars), dim)
        opts["set_A"] = lambda pts: np.asarray(pred_fn(pts)) != 0.0
        margin = _get_float(cp, "experiment", "margin", required=True)
        if not margin > 0:
            raise ConfigError("[experiment] margin", f"must be positive, got {margin}")
        opts["margin"] = margin
    elif kind == "criterion":
        kernel = _get(cp, "experiment", "kernel", required=True)
        if kernel == "interval":
            pts = _floats(_get(cp, "experiment", "endpoints", required=True),
                          "[experiment] endpoints", 2)
            opts["kernel"] = ("interval", tuple(pts))
            opts["x0"] = (_get_float(cp, "experiment", "anchor",
                                     default=(pts[0] + pts[1]) / 2.0),)
        elif kernel == "halfplane":
            opts["kernel"] = "halfplane"
            raw = _get(cp, "experiment", "anchor", default="0, 2")
            opts["x0"] = tuple(_floats(raw, "[experiment] anchor", 2))
        else:
            raise ConfigError("[experiment] kernel",
                              f"must be halfplane or interval, got {kernel!r}")
        opts["c0"] = _get_float(cp, "experiment", "c0", required=True)
        opts["truncations"] = _floats(_get(cp, "experiment", "truncations", required=True),
                                      "[experiment] truncations")
        opts["cell"] = _get_float(cp, "experiment", "cell", default=0.125)
        raw = _get(cp, "experiment", "set_A")
        if raw is not None:
            avars = {"x", "y"} if kernel == "halfplane" else {"x"}
            pred_fn = field_function(_parse_expr(raw, "[experiment] set_A", avars),
                                     2 if kernel == "halfplane" else 1)
            opts["set_A"] = lambda pts: np.asarray(pred_fn(pts)) != 0.0
        else:
            opts["set_A"] = None
    elif kind == "green":
        oracle = _get(cp, "experiment", "oracle", default="interval")
        if oracle not in ("interval", "halfplane"):
            raise ConfigError("[experiment] oracle",
                              f"must be interval or halfplane, got {oracle!r}")
        opts["oracle"] = oracle
        raw = _get(cp, "experiment", "source")
        opts["source"] = tuple(_floats(raw, "[experiment] source", 2)) if raw else None
    elif kind == "verify":
        raw = _get(cp, "experiment", "suites")
        opts["suites"] = [s.strip() for s in raw.split(",")] if raw else None
        opts["trials"] = _get_int(cp, "experiment", "trials", default=25)

    cfg_kw.update(experiment=kind, experiment_opts=opts)


def _output(cp, cfg_kw):
    precision = _get_int(cp, "output", "precision", default=17)
    if not 1 <= precision <= 17:
        raise ConfigError("[output] precision", f"must be in [1, 17], got {precision}")
    cfg_kw["precision"] = precision
    cfg_kw["basename"] = _get(cp, "output", "basename")


def load_config(path: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(path), f"bad config syntax: {exc}") from exc
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"[{sec}]", f"unknown section; expected {_SECTIONS}")
    for need in ("domain", "experiment"):
        if not cp.has_section(need):
            raise ConfigError(f"[{need}]", "required section is missing")

    kw = {}
    _domain(cp, kw)
    _operator(cp, kw)
    _nonlinearity(cp, kw)
    _solver(cp, kw)
    _experiment(cp, kw)
    _output(cp, kw)
    cfg = RunConfig(**kw)
    if cfg.basename is None:
        cfg.basename = cfg.experiment.replace("-", "_")
    return cfg
