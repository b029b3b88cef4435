"""Geometric representations of sets E in R^d (d = 1, 2) with exact boundary data.

Shapes are immutable after construction; constructors validate and
canonicalize (counterclockwise orientation, unit normals), so instances
can be shared freely across threads.  All numeric boundary data used by
the quadrature engine (vertices, edge directions, unit outer normals,
dense curve samples) is cached on first access.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache, singledispatch
from importlib import resources

import numpy as np

from .errors import (
    DegenerateEdge,
    NonPositiveLambda,
    SelfIntersecting,
    WrongOrientation,
    ZeroSpeedNode,
)

_DENSE_CURVE_SAMPLES = 4096
_SIMPLICITY_SAMPLES = 512


def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the d-dimensional unit ball; the d = 0 value is 1."""
    if d < 0:
        raise ValueError("dimension must be >= 0")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class Interval1D:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("interval endpoints must be finite")
        if not self.a < self.b:
            raise ValueError(f"interval requires a < b, got ({self.a}, {self.b})")

    @property
    def dim(self) -> int:
        return 1

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Polygon2D:
    vertices: tuple = field()

    def __init__(self, vertices):
        arr = np.asarray(vertices, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) point sequence")
        if len(arr) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(arr)):
            raise ValueError("polygon vertices must be finite")
        edges = np.roll(arr, -1, axis=0) - arr
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        scale = lengths.max()
        if lengths.min() <= 1e-14 * max(scale, 1.0):
            raise DegenerateEdge("polygon has a zero-length edge")
        area2 = _signed_area2(arr)
        if area2 < 0:
            warnings.warn("clockwise vertex order auto-reversed", WrongOrientation)
            arr = arr[::-1].copy()
            area2 = -area2
        if area2 == 0.0:
            raise SelfIntersecting("polygon has zero signed area")
        if _segments_self_intersect(arr, closed=True):
            raise SelfIntersecting("polygon edges cross")
        object.__setattr__(self, "vertices", tuple(map(tuple, arr.tolist())))

    @property
    def dim(self) -> int:
        return 2

    @cached_property
    def vertices_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        v = self.vertices_array
        return np.roll(v, -1, axis=0) - v

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edge_vectors
        return np.hypot(e[:, 0], e[:, 1])

    @cached_property
    def edge_dirs(self) -> np.ndarray:
        return self.edge_vectors / self.edge_lengths[:, None]

    @cached_property
    def edge_normals(self) -> np.ndarray:
        # outward normal of a counterclockwise polygon: rotate the edge
        # direction 90 degrees clockwise
        d = self.edge_dirs
        return np.column_stack([d[:, 1], -d[:, 0]])

    @cached_property
    def signed_area(self) -> float:
        return 0.5 * _signed_area2(self.vertices_array)


@dataclass(frozen=True)
class SmoothCurve2D:
    """Closed planar curve t -> (x(t), y(t)) on [0, 2pi) as truncated
    trigonometric series, so derivatives and curvature are exact.

    cos_x[k] multiplies cos(k t) (k starting at 0); sin_x[j] multiplies
    sin((j+1) t); same for the y coordinate.
    """

    cos_x: tuple
    sin_x: tuple
    cos_y: tuple
    sin_y: tuple
    panels: int = 64

    def __init__(self, cos_x, sin_x, cos_y, sin_y, panels=64):
        object.__setattr__(self, "cos_x", tuple(float(c) for c in cos_x))
        object.__setattr__(self, "sin_x", tuple(float(c) for c in sin_x))
        object.__setattr__(self, "cos_y", tuple(float(c) for c in cos_y))
        object.__setattr__(self, "sin_y", tuple(float(c) for c in sin_y))
        object.__setattr__(self, "panels", int(panels))
        if self.panels < 4:
            raise ValueError("panels must be >= 4")
        t = np.linspace(0.0, 2 * math.pi, _DENSE_CURVE_SAMPLES, endpoint=False)
        sp = self.speed(t)
        if sp.min() <= 1e-9 * max(sp.max(), 1e-30):
            raise ZeroSpeedNode("curve speed vanishes at a sampled node")
        tc = np.linspace(0.0, 2 * math.pi, _SIMPLICITY_SAMPLES, endpoint=False)
        pts = np.column_stack(self.position(tc))
        if _signed_area2(pts) < 0:
            warnings.warn("clockwise parametrization auto-reversed",
                          WrongOrientation)
            object.__setattr__(self, "sin_x",
                               tuple(-c for c in self.sin_x))
            object.__setattr__(self, "sin_y",
                               tuple(-c for c in self.sin_y))
            pts = pts[::-1].copy()
        if _segments_self_intersect(pts, closed=True):
            raise SelfIntersecting("curve crosses itself")

    @property
    def dim(self) -> int:
        return 2

    def _series(self, coeff_cos, coeff_sin, t, derivative=0):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for k, c in enumerate(coeff_cos):
            if c == 0.0:
                continue
            phase = k * t + derivative * math.pi / 2
            out = out + c * (k ** derivative) * np.cos(phase)
        for j, c in enumerate(coeff_sin):
            if c == 0.0:
                continue
            k = j + 1
            phase = k * t + derivative * math.pi / 2
            out = out + c * (k ** derivative) * np.sin(phase)
        return out

    def position(self, t):
        return (self._series(self.cos_x, self.sin_x, t),
                self._series(self.cos_y, self.sin_y, t))

    def velocity(self, t):
        return (self._series(self.cos_x, self.sin_x, t, derivative=1),
                self._series(self.cos_y, self.sin_y, t, derivative=1))

    def acceleration(self, t):
        return (self._series(self.cos_x, self.sin_x, t, derivative=2),
                self._series(self.cos_y, self.sin_y, t, derivative=2))

    def speed(self, t):
        vx, vy = self.velocity(t)
        return np.hypot(vx, vy)

    def tangent(self, t):
        vx, vy = self.velocity(t)
        sp = np.hypot(vx, vy)
        return vx / sp, vy / sp

    def outward_normal(self, t):
        tx, ty = self.tangent(t)
        return ty, -tx

    @cached_property
    def dense_polyline(self) -> np.ndarray:
        t = np.linspace(0.0, 2 * math.pi, _DENSE_CURVE_SAMPLES, endpoint=False)
        return np.column_stack(self.position(t))


@dataclass(frozen=True)
class BallShape:
    dim: int
    radius: float
    center: tuple

    def __init__(self, dim, radius, center=None):
        if dim < 1:
            raise ValueError("ball dimension must be >= 1")
        if radius <= 0:
            raise ValueError("ball radius must be > 0")
        if center is None:
            center = (0.0,) * dim
        center = tuple(float(c) for c in center)
        if len(center) != dim:
            raise ValueError("center length must match dim")
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "radius", float(radius))
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class HalfSpaceProbe:
    """Tangent half-space model {x : (y - x) . normal > 0}; an
    integrand-building block, never a finite-measure shape."""

    dim: int
    normal: tuple

    def __init__(self, dim, normal):
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("normal must be nonzero")
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "normal", tuple((n / norm).tolist()))


Shape = (Interval1D, Polygon2D, SmoothCurve2D, BallShape)


def _signed_area2(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_self_intersect(pts: np.ndarray, closed: bool) -> bool:
    """Pairwise intersection check of the closed polyline edges.

    Non-adjacent edges of a simple closed boundary never meet at all, so
    any contact between them -- endpoint touching included -- is flagged.
    """
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    # coincident non-neighbor vertices mean the boundary touches itself
    # (catches e.g. a doubly-traversed loop that segment crossing tests
    # miss by rounding error)
    scale = max(float(np.abs(pts).max()), 1e-30)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    ii, jj = np.triu_indices(n, k=2)
    near = d2[ii, jj] < (1e-9 * scale) ** 2
    if np.any(near & ~((ii == 0) & (jj == n - 1))):
        return True
    i_idx, j_idx = np.triu_indices(n, k=2)
    # the wrap-around edge (n-1, 0) is adjacent to edge 0, not a crossing
    keep = ~((i_idx == 0) & (j_idx == n - 1))
    i_idx, j_idx = i_idx[keep], j_idx[keep]
    p, r = a[i_idx], b[i_idx] - a[i_idx]
    q, s = a[j_idx], b[j_idx] - a[j_idx]
    rxs = _cross2(r, s)
    qp = q - p
    t_num = _cross2(qp, s)
    u_num = _cross2(qp, r)
    eps = 1e-13
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / rxs
        u = u_num / rxs
    crossing = (np.abs(rxs) > eps) & (t > -eps) & (t < 1 + eps) \
        & (u > -eps) & (u < 1 + eps)
    if crossing.any():
        return True
    # collinear overlap of non-adjacent edges also breaks simplicity
    collinear = (np.abs(rxs) <= eps) & (np.abs(t_num) <= eps)
    if collinear.any():
        rr = (r[collinear] ** 2).sum(axis=1)
        t0 = (qp[collinear] * r[collinear]).sum(axis=1) / rr
        t1 = t0 + (s[collinear] * r[collinear]).sum(axis=1) / rr
        lo = np.minimum(t0, t1)
        hi = np.maximum(t0, t1)
        if np.any((hi > -eps) & (lo < 1 + eps)):
            return True
    return False


def validate(shape):
    """Re-run all type invariants; returns a canonicalized instance."""
    if isinstance(shape, Interval1D):
        return Interval1D(shape.a, shape.b)
    if isinstance(shape, Polygon2D):
        return Polygon2D(shape.vertices)
    if isinstance(shape, SmoothCurve2D):
        return SmoothCurve2D(shape.cos_x, shape.sin_x, shape.cos_y,
                             shape.sin_y, shape.panels)
    if isinstance(shape, BallShape):
        return BallShape(shape.dim, shape.radius, shape.center)
    if isinstance(shape, HalfSpaceProbe):
        return HalfSpaceProbe(shape.dim, shape.normal)
    raise TypeError(f"not a shape: {type(shape).__name__}")


@lru_cache(maxsize=64)
def _curve_arclength_data(curve: SmoothCurve2D):
    # composite Gauss on the parameter; integrand is entire, converges fast
    nodes, weights = np.polynomial.legendre.leggauss(10)
    n_pan = max(curve.panels, 128)
    edges = np.linspace(0.0, 2 * math.pi, n_pan + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    t = (mid[:, None] + half * nodes[None, :]).ravel()
    w = np.broadcast_to(half * weights, (n_pan, len(weights))).ravel()
    return t, w


@singledispatch
def measure(shape) -> float:
    """Lebesgue measure |E|."""
    raise TypeError(f"measure not defined for {type(shape).__name__}")


@measure.register
def _(shape: Interval1D) -> float:
    return shape.b - shape.a


@measure.register
def _(shape: Polygon2D) -> float:
    return shape.signed_area


@measure.register
def _(shape: SmoothCurve2D) -> float:
    # area = 1/2 oint (x y' - y x') dt, exact up to quadrature of a smooth map
    t, w = _curve_arclength_data(shape)
    x, y = shape.position(t)
    vx, vy = shape.velocity(t)
    return float(0.5 * np.sum(w * (x * vy - y * vx)))


@measure.register
def _(shape: BallShape) -> float:
    return unit_ball_volume(shape.dim) * shape.radius ** shape.dim


@singledispatch
def classical_perimeter(shape) -> float:
    """P(E): counting measure of the boundary for d=1, length for d=2."""
    raise TypeError(f"perimeter not defined for {type(shape).__name__}")


@classical_perimeter.register
def _(shape: Interval1D) -> float:
    return 2.0


@classical_perimeter.register
def _(shape: Polygon2D) -> float:
    return float(shape.edge_lengths.sum())


@classical_perimeter.register
def _(shape: SmoothCurve2D) -> float:
    t, w = _curve_arclength_data(shape)
    return float(np.sum(w * shape.speed(t)))


@classical_perimeter.register
def _(shape: BallShape) -> float:
    d = shape.dim
    return d * unit_ball_volume(d) * shape.radius ** (d - 1)


@singledispatch
def diameter(shape) -> float:
    raise TypeError(f"diameter not defined for {type(shape).__name__}")


@diameter.register
def _(shape: Interval1D) -> float:
    return shape.b - shape.a


@diameter.register
def _(shape: Polygon2D) -> float:
    v = shape.vertices_array
    d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=-1)
    return float(np.sqrt(d2.max()))


@diameter.register
def _(shape: SmoothCurve2D) -> float:
    # sampled max inflated by 1% -- documented approximate upper bound,
    # only used where an upper bound suffices
    pts = shape.dense_polyline
    best = 0.0
    block = 512
    for i in range(0, len(pts), block):
        d2 = ((pts[i:i + block, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return 1.01 * math.sqrt(best)


@diameter.register
def _(shape: BallShape) -> float:
    return 2.0 * shape.radius


@singledispatch
def rescale(shape, lam: float):
    """lambda * E, scaled about the origin."""
    raise TypeError(f"rescale not defined for {type(shape).__name__}")


def _check_lambda(lam):
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
        raise NonPositiveLambda(f"scale factor must be > 0, got {lam!r}")


@rescale.register
def _(shape: Interval1D, lam: float):
    _check_lambda(lam)
    return Interval1D(lam * shape.a, lam * shape.b)


@rescale.register
def _(shape: Polygon2D, lam: float):
    _check_lambda(lam)
    return Polygon2D(lam * shape.vertices_array)


@rescale.register
def _(shape: SmoothCurve2D, lam: float):
    _check_lambda(lam)
    return SmoothCurve2D([lam * c for c in shape.cos_x],
                         [lam * c for c in shape.sin_x],
                         [lam * c for c in shape.cos_y],
                         [lam * c for c in shape.sin_y],
                         shape.panels)


@rescale.register
def _(shape: BallShape, lam: float):
    _check_lambda(lam)
    return BallShape(shape.dim, lam * shape.radius,
                     tuple(lam * c for c in shape.center))


def curvature(curve: SmoothCurve2D, t) -> float:
    """Signed curvature (x'y'' - y'x'')/speed^3; positive for a
    counterclockwise circle, independent of the parametrization speed."""
    if not isinstance(curve, SmoothCurve2D):
        raise TypeError("curvature requires a SmoothCurve2D")
    vx, vy = curve.velocity(t)
    ax, ay = curve.acceleration(t)
    sp = np.hypot(vx, vy)
    if np.min(sp) < 1e-12:
        raise ZeroSpeedNode(f"curve speed vanishes at t = {t}")
    val = (vx * ay - vy * ax) / sp ** 3
    return float(val) if np.ndim(val) == 0 else val


def contains(shape, points) -> np.ndarray:
    """Vectorized membership test; points is (n, d)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(shape, Interval1D):
        x = pts[:, 0]
        return (x > shape.a) & (x < shape.b)
    if isinstance(shape, BallShape):
        c = np.asarray(shape.center)
        return ((pts - c) ** 2).sum(axis=1) < shape.radius ** 2
    if isinstance(shape, Polygon2D):
        return _points_in_polygon(pts, shape.vertices_array)
    if isinstance(shape, SmoothCurve2D):
        return _points_in_polygon(pts, shape.dense_polyline)
    raise TypeError(f"contains not defined for {type(shape).__name__}")


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    # even-odd rule with a horizontal ray, vectorized over points x edges
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1 = np.roll(poly[:, 0], -1)[None, :]
    y1 = np.roll(poly[:, 1], -1)[None, :]
    straddles = (y0 <= y) != (y1 <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = straddles & (x < x_cross)
    return (hits.sum(axis=1) % 2).astype(bool)


def is_convex(shape, tol: float = 1e-9) -> bool:
    if isinstance(shape, (Interval1D, BallShape)):
        return True
    if isinstance(shape, Polygon2D):
        e = shape.edge_vectors
        cross = _cross2(e, np.roll(e, -1, axis=0))
        return bool(np.all(cross >= -tol * shape.edge_lengths.max() ** 2))
    if isinstance(shape, SmoothCurve2D):
        t = np.linspace(0, 2 * math.pi, 1024, endpoint=False)
        return bool(np.min(curvature(shape, t)) >= -tol)
    raise TypeError(f"is_convex not defined for {type(shape).__name__}")


# --- JSON shape files ---

def shape_to_json(shape) -> dict:
    if isinstance(shape, Interval1D):
        return {"type": "interval", "a": shape.a, "b": shape.b}
    if isinstance(shape, Polygon2D):
        return {"type": "polygon",
                "vertices": [list(v) for v in shape.vertices]}
    if isinstance(shape, SmoothCurve2D):
        return {"type": "curve", "cos_x": list(shape.cos_x),
                "sin_x": list(shape.sin_x), "cos_y": list(shape.cos_y),
                "sin_y": list(shape.sin_y), "panels": shape.panels}
    if isinstance(shape, BallShape):
        return {"type": "ball", "dim": shape.dim, "radius": shape.radius,
                "center": list(shape.center)}
    raise TypeError(f"cannot serialize {type(shape).__name__}")


def shape_from_json(obj: dict):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("shape JSON must be an object with a 'type' key")
    kind = obj["type"]
    try:
        if kind == "interval":
            return Interval1D(float(obj["a"]), float(obj["b"]))
        if kind == "polygon":
            return Polygon2D(obj["vertices"])
        if kind == "curve":
            return SmoothCurve2D(obj["cos_x"], obj.get("sin_x", []),
                                 obj["cos_y"], obj.get("sin_y", []),
                                 obj.get("panels", 64))
        if kind == "ball":
            return BallShape(int(obj["dim"]), float(obj["radius"]),
                             obj.get("center"))
    except KeyError as exc:
        raise ValueError(f"shape JSON missing field {exc}") from exc
    raise ValueError(f"unknown shape type {kind!r}")


def load_shape_file(path) -> object:
    with open(path, "r", encoding="utf-8") as fh:
        return shape_from_json(json.load(fh))


def load_named_shape(name: str):
    """Load one of the shape files shipped with the package."""
    ref = resources.files("fracperim").joinpath(f"data/shapes/{name}.json")
    if not ref.is_file():
        raise ValueError(f"no packaged shape named {name!r}")
    return shape_from_json(json.loads(ref.read_text(encoding="utf-8")))
