"""Shared polar-coordinate core for the boundary-reduced functionals.

Every nonlocal functional in this package reduces to weighted radial
moments along rays shot from boundary quadrature points:

    ray(y, theta):  r -> y + r * omega(theta),   r > 0

For each ray we record the set I = {r : y + r omega lies inside E} as a
sorted list of crossing radii plus the parity at r = 0+ (a ray entering
the interior starts inside).  All functionals are then integrals of

    weight(y, theta) * W_p(radial set ∩ window),
    W_p(a, b) = integral of r^{-p} over (a, b),

with different powers p, windows, and weights: the symmetric-difference
integrals use |omega . nu| and the complement-or-identity of I, the
far-field flux uses -(omega . nu) and I beyond a radius.  The crossing
table is computed once per (shape, resolution) and reused by every
functional and every exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import shapes as _shapes
from .errors import DivergentInner, QuadratureFailure

_INF = math.inf
_R_MIN = 1e-13


@dataclass(frozen=True)
class EngineSpec:
    """Resolution knobs for the ray table.

    levels: geometric grading steps toward each edge endpoint (or
    tangent direction); y_gauss / theta_gauss: Gauss orders of the
    boundary-point and angular rules; curve_scan: samples for root
    bracketing on non-elliptic curves.
    """

    levels: int = 24
    y_gauss: int = 8
    theta_gauss: int = 12
    tangent_levels: int = 12
    curve_scan: int = 2048


PRESETS = {
    "accurate": EngineSpec(levels=28, y_gauss=10, theta_gauss=16,
                           tangent_levels=18),
    "default": EngineSpec(levels=24, y_gauss=8, theta_gauss=12,
                          tangent_levels=12),
    "fast": EngineSpec(levels=10, y_gauss=4, theta_gauss=6,
                       tangent_levels=6),
}


def coarser(spec: EngineSpec) -> EngineSpec:
    """Companion resolution used for error estimation by comparison."""
    return EngineSpec(levels=max(spec.levels - 2, 3),
                      y_gauss=max(spec.y_gauss - 2, 2),
                      theta_gauss=max(spec.theta_gauss - 4, 3),
                      tangent_levels=max(spec.tangent_levels - 2, 3),
                      curve_scan=spec.curve_scan)


class RayTable:
    """Crossing data for all quadrature rays of one shape.

    Attributes (N rays, K max crossings):
      weight: (N,) combined boundary x angular quadrature weight
      mu:     (N,) omega . nu(y)
      inside0: (N,) bool, parity at r = 0+
      radii:  (N, K) ascending crossing radii padded with +inf
      counts: (N,) number of valid crossings per ray
    """

    def __init__(self, weight, mu, inside0, radii, counts):
        self.weight = np.asarray(weight, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.inside0 = np.asarray(inside0, dtype=bool)
        self.radii = np.asarray(radii, dtype=float)
        self.counts = np.asarray(counts, dtype=np.int64)
        # A ray that claims to start inside yet never exits is a tangent
        # graze with vanishing angular weight; remove it outright.
        never_exits = self.inside0 & (self.counts == 0)
        if np.any(never_exits):
            keep = ~never_exits
            self.weight = self.weight[keep]
            self.mu = self.mu[keep]
            self.inside0 = self.inside0[keep]
            self.radii = self.radii[keep]
            self.counts = self.counts[keep]
        # make the inside-set pair count even: a dangling crossing is a
        # grazing hit; close it with a zero-length interval.
        odd = (self.counts + self.inside0) % 2 == 1
        if np.any(odd):
            k = self.radii.shape[1]
            need = self.counts[odd].max() + 1
            if need > k:
                pad = np.full((len(self.counts), need - k), _INF)
                self.radii = np.concatenate([self.radii, pad], axis=1)
            idx = np.flatnonzero(odd)
            last = self.radii[idx, self.counts[idx] - 1]
            self.radii[idx, self.counts[idx]] = last
            self.counts[idx] += 1

    # -- radial moment machinery -------------------------------------

    def _pairs_inside(self):
        """Interval endpoints of I: prepend 0 on rays starting inside."""
        n, k = self.radii.shape
        t = np.full((n, k + 1), _INF)
        t[self.inside0, 0] = 0.0
        t[self.inside0, 1:] = self.radii[self.inside0]
        t[~self.inside0, :k] = self.radii[~self.inside0]
        m = self.counts + self.inside0
        return t, m

    def _pairs_complement(self):
        """Interval endpoints of (0, inf) \\ I."""
        n, k = self.radii.shape
        t = np.full((n, k + 2), _INF)
        out = ~self.inside0
        t[out, 0] = 0.0
        t[out, 1:k + 1] = self.radii[out]
        t[self.inside0, :k] = self.radii[self.inside0]
        m = self.counts + 1 + out  # trailing +inf endpoint included
        cols = np.arange(t.shape[1])
        t[cols[None, :] == m[:, None] - 1] = _INF
        return t, m

    @staticmethod
    def _w_power(p: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise integral of r^{-p} over (a, b), a <= b."""
        if abs(p - 1.0) < 1e-14:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.log(b / a)
        else:
            e = 1.0 - p
            with np.errstate(divide="ignore", invalid="ignore"):
                if e > 0:
                    out = (b ** e - a ** e) / e
                else:
                    # b may be +inf: r^{e} -> 0 there
                    bb = np.where(np.isinf(b), 0.0, b ** e)
                    out = (bb - a ** e) / e
        return out

    def _moment(self, pairs, p: float, lo: float, hi: float) -> np.ndarray:
        """Per-ray sum of W_p over (pair intervals) ∩ (lo, hi)."""
        t, m = pairs
        n, k = t.shape
        npairs = k // 2
        a = t[:, 0:2 * npairs:2]
        b = t[:, 1:2 * npairs:2]
        valid = (np.arange(npairs)[None, :] * 2 + 1) < m[:, None]
        a_c = np.clip(a, lo, hi)
        b_c = np.clip(b, lo, hi)
        live = valid & (b_c > a_c)
        if not np.any(live):
            return np.zeros(n)
        w = np.zeros_like(a_c)
        w[live] = self._w_power(p, a_c[live], b_c[live])
        if not np.all(np.isfinite(w[live])):
            raise DivergentInner(
                "radial moment diverges: an inside/outside interval "
                "touches the singular point with p >= 1")
        return w.sum(axis=1)

    def fused_moment(self, p: float) -> float:
        """Single-quadrature renormalized moment

            Q_p = Symm_p(0,R) - Far_p(R) - omega_{d-1} P Phi_p(R),

        which is independent of the window radius R: per ray it equals
        the alternating sum over crossing radii

            |omega.nu| [sum_j (-1)^j Phi_p(r_j) - Phi_p(1) 1_{inward}]

        evaluated in the cancellation-free expm1 form.  The integrand is
        analytic in the radii (no window kinks), so plain per-sector
        Gauss quadrature converges at full rate.  Q_1 is the second-order
        limit functional plus nothing: H = Q_1; the renormalized
        fractional quantity is Q_s itself.
        """
        n, k = self.radii.shape
        jj = np.arange(k)
        sign = np.where(jj % 2 == 0, -1.0, 1.0)
        mask = jj[None, :] < self.counts[:, None]
        r = np.where(mask, self.radii, 1.0)
        if abs(p - 1.0) < 1e-14:
            terms = np.log(r)
            b = (terms * sign[None, :]).sum(axis=1) - self.inside0
        else:
            e = 1.0 - p
            terms = np.expm1(e * np.log(r))
            b = ((terms * sign[None, :]).sum(axis=1)
                 - e * self.inside0) / (p * e)
        if not np.all(np.isfinite(b)):
            raise DivergentInner("fused moment hit a zero crossing radius")
        return float(np.dot(self.weight, np.abs(self.mu) * b))

    def symm_moment(self, p: float, lo: float, hi: float) -> float:
        """Integral over boundary x angles of |omega.nu| W_p(SD ∩ window),
        where SD is the ray trace of E Δ H^-(y): the complement of I on
        inward rays, I itself on outward rays."""
        vals = np.zeros(len(self.mu))
        inward = self.mu < 0.0
        if np.any(inward):
            t, m = self._pairs_complement()
            vals[inward] = self._moment((t[inward], m[inward]), p, lo, hi)
        if np.any(~inward):
            t, m = self._pairs_inside()
            vals[~inward] = self._moment((t[~inward], m[~inward]), p, lo,
                                         hi)
        return float(np.dot(self.weight, np.abs(self.mu) * vals))

    def symm_flat_moment(self, p: float, lo: float, hi: float) -> float:
        """Integral over boundary x angles of W_p on the symmetric
        difference, with the bare angular measure (no |omega.nu|
        factor): the radial reduction of the flat kernel |x-y|^{-d}
        is W_d ... r^{d-1} dr = W_1, so call this with p = 1."""
        vals = np.zeros(len(self.mu))
        inward = self.mu < 0.0
        if np.any(inward):
            t, m = self._pairs_complement()
            vals[inward] = self._moment((t[inward], m[inward]), p, lo, hi)
        if np.any(~inward):
            t, m = self._pairs_inside()
            vals[~inward] = self._moment((t[~inward], m[~inward]), p, lo,
                                         hi)
        return float(np.dot(self.weight, vals))

    def far_moment(self, p: float, R: float) -> float:
        """Signed far-field flux: integral of -(omega.nu) W_p(I ∩ (R, inf))."""
        t, m = self._pairs_inside()
        vals = self._moment((t, m), p, R, _INF)
        return float(np.dot(self.weight, -self.mu * vals))

    def max_radius(self) -> float:
        r = self.radii[np.isfinite(self.radii)]
        return float(r.max()) if len(r) else 0.0


# -- boundary quadrature point layouts --------------------------------

def _graded_panels(length: float, levels: int) -> np.ndarray:
    """Panel edges on (0, length), geometrically refined toward both
    endpoints (ratio 1/2), to resolve corner-log integrands."""
    half = 0.5 * length
    cuts = half * 0.5 ** np.arange(1, levels + 1)
    left = np.concatenate([[0.0], np.sort(cuts)])
    right = length - left[::-1]
    return np.concatenate([left, right])


def _gauss_on_panels(edges: np.ndarray, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def _circle_edge_dirs(y: np.ndarray, verts: np.ndarray, dirs: np.ndarray,
                      lens: np.ndarray, radius: float) -> list:
    """Directions from y to the intersections of the circle of given
    radius about y with the boundary edges.  Windowed radial moments
    have derivative kinks exactly at these directions, so they must be
    sector boundaries of the angular rule."""
    out = []
    for e in range(len(lens)):
        rel = verts[e] - y
        b = rel @ dirs[e]
        c = rel @ rel - radius * radius
        disc = b * b - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        for t in (-b - sq, -b + sq):
            if 1e-12 < t < lens[e] - 1e-12:
                p = rel + t * dirs[e]
                out.append(math.atan2(p[1], p[0]))
    return out


def _angular_nodes_polygon(y: np.ndarray, vertices: np.ndarray,
                           order: int, extra_dirs=(), grade_scale=None):
    """Sector-split angular rule: panels between consecutive vertex
    directions as seen from y (the theta-integrand is analytic inside
    each sector and kinked at its ends), plus any extra split
    directions from window radii.

    For y close to a corner the integrand has a log branch point a
    distance ~grade_scale beyond the sector endpoints (the direction
    parallel to an adjacent edge), so each sector is geometrically
    refined toward its endpoints down to that scale."""
    ang = np.arctan2(vertices[:, 1] - y[1], vertices[:, 0] - y[0])
    if len(extra_dirs):
        ang = np.concatenate([ang, np.asarray(extra_dirs)])
    ang = np.sort(np.mod(ang, 2.0 * math.pi))
    bounds = np.concatenate([ang, [ang[0] + 2.0 * math.pi]])
    widths = np.diff(bounds)
    th_parts, wt_parts = [], []
    x, w = np.polynomial.legendre.leggauss(order)
    x_sub, w_sub = np.polynomial.legendre.leggauss(max(order // 2, 6))
    for a, width in zip(bounds[:-1], widths):
        if width <= 1e-14:
            continue
        depth = 0
        if grade_scale is not None and grade_scale < 0.25 * width:
            depth = int(min(np.ceil(np.log2(width / grade_scale)), 48))
        if depth == 0:
            th_parts.append(a + 0.5 * width * (1.0 + x))
            wt_parts.append(0.5 * width * w)
        else:
            edges = a + _graded_panels(width, depth)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * np.diff(edges)
            th_parts.append(
                (mid[:, None] + half[:, None] * x_sub[None, :]).ravel())
            wt_parts.append((half[:, None] * w_sub[None, :]).ravel())
    return np.concatenate(th_parts), np.concatenate(wt_parts)


def _polygon_crossings(y: np.ndarray, th: np.ndarray,
                       verts: np.ndarray, dirs: np.ndarray,
                       lens: np.ndarray):
    """Sorted positive crossing radii for each direction, vectorized
    over (rays x edges)."""
    om = np.column_stack([np.cos(th), np.sin(th)])
    rel = verts[None, :, :] - y[None, None, :][0]
    cr_pd = rel[:, :, 0] * dirs[None, :, 1] - rel[:, :, 1] * dirs[None, :, 0]
    cr_od = (om[:, None, 0] * dirs[None, :, 1]
             - om[:, None, 1] * dirs[None, :, 0])
    cr_po = rel[:, :, 0] * om[:, None, 1] - rel[:, :, 1] * om[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = cr_pd / cr_od
        u = cr_po / (lens[None, :] * cr_od)
    hit = (np.abs(cr_od) > 1e-15) & (u > 0.0) & (u < 1.0) & (r > _R_MIN) \
        & np.isfinite(r)
    rr = np.where(hit, r, _INF)
    rr.sort(axis=1)
    counts = hit.sum(axis=1)
    return rr, counts


def _build_polygon(poly: _shapes.Polygon2D, spec: EngineSpec,
                   window_radii=()) -> RayTable:
    verts = poly.vertices_array
    dirs = poly.edge_dirs
    lens = poly.edge_lengths
    normals = poly.edge_normals
    weights, mus, inside0s, radii_list, counts_list = [], [], [], [], []
    max_k = 1
    for e in range(poly.n_edges):
        edges = _graded_panels(lens[e], spec.levels)
        tpts, twts = _gauss_on_panels(edges, spec.y_gauss)
        for tp, tw in zip(tpts, twts):
            y = verts[e] + tp * dirs[e]
            extra = []
            for rad in window_radii:
                extra.extend(_circle_edge_dirs(y, verts, dirs, lens, rad))
            dmin = float(np.hypot(verts[:, 0] - y[0],
                                  verts[:, 1] - y[1]).min())
            th, wt = _angular_nodes_polygon(y, verts, spec.theta_gauss,
                                            extra,
                                            grade_scale=max(dmin, 1e-13))
            rr, cnt = _polygon_crossings(y, th, verts, dirs, lens)
            mu = np.cos(th) * normals[e, 0] + np.sin(th) * normals[e, 1]
            weights.append(tw * wt)
            mus.append(mu)
            inside0s.append(mu < 0.0)
            radii_list.append(rr)
            counts_list.append(cnt)
            max_k = max(max_k, int(cnt.max()) if len(cnt) else 0)
    n_rays = sum(len(m) for m in mus)
    radii = np.full((n_rays, max_k), _INF)
    pos = 0
    for rr, cnt in zip(radii_list, counts_list):
        radii[pos:pos + len(rr), :] = rr[:, :max_k]
        pos += len(rr)
    return RayTable(np.concatenate(weights), np.concatenate(mus),
                    np.concatenate(inside0s), radii,
                    np.concatenate(counts_list))


def _build_interval(iv: _shapes.Interval1D, spec: EngineSpec) -> RayTable:
    L = iv.b - iv.a
    # two boundary atoms x two directions; crossing radii are exact
    weight = np.ones(4)
    #       y=a,om=+1  y=a,om=-1  y=b,om=+1  y=b,om=-1
    mu = np.array([-1.0, 1.0, 1.0, -1.0])
    inside0 = mu < 0.0
    radii = np.array([[L], [_INF], [_INF], [L]])
    counts = np.array([1, 0, 0, 1])
    return RayTable(weight, mu, inside0, radii, counts)


def _ellipse_data(curve: _shapes.SmoothCurve2D):
    """If the curve is a (possibly rotated/translated) ellipse --
    harmonics of order <= 1 only -- return (center, matrix M) with
    gamma(t) = c + M (cos t, sin t); else None."""
    cx, sx = curve.cos_x, curve.sin_x
    cy, sy = curve.cos_y, curve.sin_y
    if any(abs(v) > 0 for v in cx[2:]) or any(abs(v) > 0 for v in sx[1:]):
        return None
    if any(abs(v) > 0 for v in cy[2:]) or any(abs(v) > 0 for v in sy[1:]):
        return None
    c = np.array([cx[0] if cx else 0.0, cy[0] if cy else 0.0])
    m = np.array([
        [cx[1] if len(cx) > 1 else 0.0, sx[0] if sx else 0.0],
        [cy[1] if len(cy) > 1 else 0.0, sy[0] if sy else 0.0],
    ])
    if abs(np.linalg.det(m)) < 1e-14:
        return None
    return c, m


def _tangent_graded_half(levels: int):
    """Panel edges on (0, pi) graded toward both ends (the tangent
    directions, where the chord radius degenerates)."""
    return _graded_panels(math.pi, levels)


def _chord_split_phis(y, base, chord_fn, window_radii, n_scan=256):
    """Local angles phi in (0, pi) of the inward half where the chord
    length crosses one of the window radii (kink directions)."""
    phis = np.linspace(0.0, math.pi, n_scan)[1:-1]
    om = np.column_stack([np.cos(base + phis), np.sin(base + phis)])
    chord = chord_fn(y, om)
    out = []
    for rad in window_radii:
        f = chord - rad
        flips = np.flatnonzero(np.signbit(f[:-1]) != np.signbit(f[1:]))
        for i in flips:
            lo, hi = phis[i], phis[i + 1]
            flo = f[i]
            for _ in range(45):
                mid = 0.5 * (lo + hi)
                fm = chord_fn(y, np.array(
                    [[math.cos(base + mid), math.sin(base + mid)]]))[0] \
                    - rad
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            out.append(0.5 * (lo + hi))
    return out


def _build_convex_chord(y_pts, y_wts, nus, tangents, chord_fn,
                        spec: EngineSpec, window_radii=()) -> RayTable:
    """Ray table for a convex shape whose inward chord length is given
    in closed form by chord_fn(y, omega).  Outward rays never re-enter,
    so only the inward half-circle (tangent direction + (0, pi))
    carries crossings; the outward half contributes zero to every
    moment and is omitted, with the angular rule graded toward the
    tangent directions where the chord degenerates."""
    base_edges = _tangent_graded_half(spec.tangent_levels)
    weights, mus, inside0s, radii_l, counts_l = [], [], [], [], []
    for y, yw, nu, tau in zip(y_pts, y_wts, nus, tangents):
        base = math.atan2(tau[1], tau[0])
        edges = base_edges
        if window_radii:
            splits = _chord_split_phis(y, base, chord_fn, window_radii)
            if splits:
                edges = np.unique(np.concatenate([base_edges, splits]))
        loc, locw = _gauss_on_panels(edges, spec.theta_gauss)
        th = base + loc
        om = np.column_stack([np.cos(th), np.sin(th)])
        mu = om @ nu
        inward = mu < 0.0
        rr = np.full((len(th), 1), _INF)
        cnt = np.zeros(len(th), dtype=np.int64)
        if np.any(inward):
            chord = chord_fn(y, om[inward])
            rr[inward, 0] = np.maximum(chord, _R_MIN)
            cnt[inward] = 1
        weights.append(yw * locw)
        mus.append(mu)
        inside0s.append(inward)
        radii_l.append(rr)
        counts_l.append(cnt)
    return RayTable(np.concatenate(weights), np.concatenate(mus),
                    np.concatenate(inside0s), np.vstack(radii_l),
                    np.concatenate(counts_l))


def _build_ball2(ball: _shapes.BallShape, spec: EngineSpec,
                 window_radii=()) -> RayTable:
    c = np.asarray(ball.center)
    R = ball.radius
    k = max(8, 4 * spec.levels)
    edges = np.linspace(0.0, 2.0 * math.pi, k + 1)
    tpts, twts = _gauss_on_panels(edges, spec.y_gauss)
    y_pts = c + R * np.column_stack([np.cos(tpts), np.sin(tpts)])
    y_wts = twts * R
    nus = np.column_stack([np.cos(tpts), np.sin(tpts)])
    tangents = np.column_stack([-np.sin(tpts), np.cos(tpts)])

    def chord(y, om):
        return -2.0 * (om @ (y - c))

    return _build_convex_chord(y_pts, y_wts, nus, tangents, chord, spec,
                               window_radii)


def _curve_boundary_nodes(curve: _shapes.SmoothCurve2D, spec: EngineSpec):
    k = max(curve.panels, 4 * spec.levels)
    edges = np.linspace(0.0, 2.0 * math.pi, k + 1)
    tpts, twts = _gauss_on_panels(edges, spec.y_gauss)
    gx, gy = curve.position(tpts)
    vx, vy = curve.velocity(tpts)
    sp = np.hypot(vx, vy)
    y_pts = np.column_stack([gx, gy])
    y_wts = twts * sp
    tangents = np.column_stack([vx / sp, vy / sp])
    nus = np.column_stack([tangents[:, 1], -tangents[:, 0]])
    return y_pts, y_wts, nus, tangents, tpts


def _build_curve(curve: _shapes.SmoothCurve2D, spec: EngineSpec,
                 window_radii=()) -> RayTable:
    conic = _ellipse_data(curve)
    y_pts, y_wts, nus, tangents, _ = _curve_boundary_nodes(curve, spec)
    if conic is not None:
        c, m = conic
        minv = np.linalg.inv(m)

        def chord(y, om):
            wv = minv @ (y - c)
            v = om @ minv.T
            return -2.0 * (v @ wv) / (v ** 2).sum(axis=1)

        return _build_convex_chord(y_pts, y_wts, nus, tangents, chord,
                                   spec, window_radii)
    # generic curves get no window splits: their windowed moments carry
    # the kink error, reflected honestly in the coarse/fine estimate
    return _build_curve_scan(curve, y_pts, y_wts, nus, tangents, spec)


def _build_curve_scan(curve, y_pts, y_wts, nus, tangents,
                      spec: EngineSpec) -> RayTable:
    """General closed-curve crossings by dense sign scan + bisection."""
    ts = np.linspace(0.0, 2.0 * math.pi, spec.curve_scan, endpoint=False)
    gx, gy = curve.position(ts)
    edges = _tangent_graded_half(spec.tangent_levels)
    x, w = np.polynomial.legendre.leggauss(spec.theta_gauss)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    loc = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    locw = (half[:, None] * w[None, :]).ravel()
    step = ts[1] - ts[0]
    weights, mus, inside0s, radii_l, counts_l = [], [], [], [], []
    max_k = 1
    for y, yw, nu, tau in zip(y_pts, y_wts, nus, tangents):
        base = math.atan2(tau[1], tau[0])
        th = np.concatenate([base + loc, base + math.pi + loc])
        wt = np.concatenate([locw, locw])
        om = np.column_stack([np.cos(th), np.sin(th)])
        # f[i, j] = cross(gamma(ts_i) - y, omega_j); roots are line hits
        relx, rely = gx - y[0], gy - y[1]
        f = relx[:, None] * om[None, :, 1] - rely[:, None] * om[None, :, 0]
        neg = np.signbit(f)
        flips = neg != np.roll(neg, -1, axis=0)
        i_idx, j_idx = np.nonzero(flips)
        rr = np.full((len(th), 24), _INF)
        cnt = np.zeros(len(th), dtype=np.int64)
        if len(i_idx):
            lo_t = ts[i_idx]
            hi_t = lo_t + step
            flo = f[i_idx, j_idx]
            ox, oy = om[j_idx, 0], om[j_idx, 1]
            for _ in range(44):
                mid_t = 0.5 * (lo_t + hi_t)
                mx, my = curve.position(mid_t)
                fm = (mx - y[0]) * oy - (my - y[1]) * ox
                take_lo = np.signbit(fm) == np.signbit(flo)
                lo_t = np.where(take_lo, mid_t, lo_t)
                flo = np.where(take_lo, fm, flo)
                hi_t = np.where(take_lo, hi_t, mid_t)
            mx, my = curve.position(0.5 * (lo_t + hi_t))
            r = (mx - y[0]) * ox + (my - y[1]) * oy
            good = r > _R_MIN
            order = np.lexsort((r, j_idx))
            for pos in order:
                if not good[pos]:
                    continue
                j = j_idx[pos]
                if cnt[j] < rr.shape[1]:
                    rr[j, cnt[j]] = r[pos]
                    cnt[j] += 1
        mu = om @ nu
        weights.append(yw * wt)
        mus.append(mu)
        inside0s.append(mu < 0.0)
        radii_l.append(rr)
        counts_l.append(cnt)
        max_k = max(max_k, int(cnt.max()) if len(cnt) else 1)
    radii = np.vstack([r[:, :max(max_k, 1)] for r in radii_l])
    return RayTable(np.concatenate(weights), np.concatenate(mus),
                    np.concatenate(inside0s), radii,
                    np.concatenate(counts_l))


_TABLE_CACHE: dict = {}


def ray_table(shape, spec: EngineSpec, window_radii=()) -> RayTable:
    """Build (or fetch) the crossing table.  window_radii lists the
    window boundaries at which symm_moment / far_moment will later be
    clipped; the angular rule gains sector splits at the corresponding
    kink directions.  fused_moment needs no windows."""
    window_radii = tuple(sorted(float(r) for r in window_radii))
    key = (shape, spec, window_radii)
    hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    if isinstance(shape, _shapes.Interval1D):
        table = _build_interval(shape, spec)
    elif isinstance(shape, _shapes.BallShape):
        if shape.dim == 1:
            table = _build_interval(
                _shapes.Interval1D(shape.center[0] - shape.radius,
                                   shape.center[0] + shape.radius), spec)
        elif shape.dim == 2:
            table = _build_ball2(shape, spec, window_radii)
        else:
            raise QuadratureFailure("ray engine supports dim <= 2")
    elif isinstance(shape, _shapes.Polygon2D):
        table = _build_polygon(shape, spec, window_radii)
    elif isinstance(shape, _shapes.SmoothCurve2D):
        table = _build_curve(shape, spec, window_radii)
    else:
        raise TypeError(f"no ray table for {type(shape).__name__}")
    # bound the cache by total stored rays, evicting oldest entries
    budget = 25_000_000
    held = sum(len(t.mu) for t in _TABLE_CACHE.values())
    while _TABLE_CACHE and held + len(table.mu) > budget:
        oldest = next(iter(_TABLE_CACHE))
        held -= len(_TABLE_CACHE.pop(oldest).mu)
    _TABLE_CACHE[key] = table
    return table


def dim_of(shape) -> int:
    return shape.dim


def omega_ball(k: int) -> float:
    return _shapes.unit_ball_volume(k)


# -- covariogram and derived volume-side quantities --------------------

def _ear_clip(verts: np.ndarray):
    """Triangulate a simple CCW polygon into index triples."""
    idx = list(range(len(verts)))
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = verts[i0], verts[i1], verts[i2]
            cross = ((b[0] - a[0]) * (c[1] - a[1])
                     - (b[1] - a[1]) * (c[0] - a[0]))
            if cross <= 1e-14:
                continue
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = verts[j]
                if _point_in_tri(p, a, b, c):
                    ok = False
                    break
            if ok:
                tris.append((i0, i1, i2))
                del idx[k]
                break
        else:
            break
    if len(idx) == 3:
        tris.append(tuple(idx))
    return tris


def _point_in_tri(p, a, b, c) -> bool:
    def s(u, v):
        return ((v[0] - u[0]) * (p[1] - u[1])
                - (v[1] - u[1]) * (p[0] - u[0]))
    d1, d2, d3 = s(a, b), s(b, c), s(c, a)
    neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (neg and pos)


def covariogram(shape):
    """Return g(v) = |E ∩ (E + v)| as a callable of a 2-vector (or a
    scalar shift for intervals).  Exact for intervals, disks, ellipses,
    and polygons (clipping); non-elliptic curves use their dense
    polygonal proxy."""
    if isinstance(shape, _shapes.Interval1D):
        L = shape.b - shape.a

        def g1(v):
            return max(L - abs(float(np.atleast_1d(v)[0])), 0.0)

        return g1
    if isinstance(shape, _shapes.BallShape) and shape.dim == 2:
        return _disk_covariogram(shape.radius)
    if isinstance(shape, _shapes.SmoothCurve2D):
        conic = _ellipse_data(shape)
        if conic is not None:
            c, m = conic
            minv = np.linalg.inv(m)
            det = abs(np.linalg.det(m))
            gd = _disk_covariogram(1.0)

            def ge(v):
                return det * gd(minv @ np.asarray(v, dtype=float))

            return ge
        poly = _shapes.Polygon2D(shape.dense_polyline[::4])
        return covariogram(poly)
    if isinstance(shape, _shapes.Polygon2D):
        verts = shape.vertices_array
        tris = [[(float(x), float(y)) for x, y in verts[list(t)]]
                for t in _ear_clip(verts)]
        # bounding radii let most triangle pairs be rejected instantly
        cents = [((a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0)
                 for a, b, c in tris]
        rads = [max(math.hypot(p[0] - cx, p[1] - cy) for p in t)
                for t, (cx, cy) in zip(tris, cents)]

        def gp(v):
            vx = float(v[0])
            vy = float(v[1])
            tot = 0.0
            for ta, (ax, ay), ra in zip(tris, cents, rads):
                for tb, (bx, by), rb in zip(tris, cents, rads):
                    if math.hypot(bx + vx - ax, by + vy - ay) > ra + rb:
                        continue
                    tot += _tri_overlap_area(
                        ta, [(p[0] + vx, p[1] + vy) for p in tb])
            return tot

        return gp
    raise TypeError(f"covariogram not available for "
                    f"{type(shape).__name__}")


def _tri_overlap_area(ta, tb) -> float:
    """Area of the intersection of two CCW triangles (pure floats:
    this sits in the innermost loop of every covariogram call)."""
    out = ta
    n = len(tb)
    for i in range(n):
        ax, ay = tb[i]
        bx, by = tb[(i + 1) % n]
        ex = bx - ax
        ey = by - ay
        inp = out
        out = []
        m = len(inp)
        if m == 0:
            return 0.0
        px, py = inp[-1]
        dp = ex * (py - ay) - ey * (px - ax)
        for cx, cy in inp:
            dc = ex * (cy - ay) - ey * (cx - ax)
            if dc >= 0.0:
                if dp < 0.0:
                    t = dp / (dp - dc)
                    out.append((px + t * (cx - px), py + t * (cy - py)))
                out.append((cx, cy))
            elif dp >= 0.0:
                t = dp / (dp - dc)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            px, py, dp = cx, cy, dc
    area = 0.0
    m = len(out)
    for i in range(m):
        x0, y0 = out[i]
        x1, y1 = out[(i + 1) % m]
        area += x0 * y1 - x1 * y0
    return 0.5 * area


def _disk_covariogram(R: float):
    def g(v):
        t = float(np.hypot(*np.asarray(v, dtype=float)))
        if t >= 2.0 * R:
            return 0.0
        return (2.0 * R * R * math.acos(t / (2.0 * R))
                - 0.5 * t * math.sqrt(4.0 * R * R - t * t))

    return g


_SHELL_CACHE: dict = {}
_FARVOL_CACHE: dict = {}


def _covariogram_segments(poly: _shapes.Polygon2D):
    """Minkowski segments v = (edge point) - (vertex): the covariogram
    of a polygon is piecewise quadratic in v with creases exactly on
    these segments (a translated vertex sliding along an edge)."""
    verts = poly.vertices_array
    dirs = poly.edge_dirs
    lens = poly.edge_lengths
    segs = []
    for e in range(poly.n_edges):
        for b in range(len(verts)):
            segs.append((verts[e] - verts[b], dirs[e], lens[e]))
    return segs


def _poly_shell_kink_dirs(segs, radius: float) -> list:
    """Angles where the circle of given radius crosses a crease segment
    (both orientations, since g is even)."""
    out = []
    r2 = radius * radius
    for o, d, L in segs:
        b = float(o @ d)
        c = float(o @ o) - r2
        disc = b * b - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        for t in (-b - sq, -b + sq):
            if -1e-12 <= t <= L + 1e-12:
                p = o + t * d
                a = math.atan2(p[1], p[0])
                out.append(a)
                out.append(a + math.pi)
    return out


def _shell_sectors(g, radius: float, kink_dirs, order: int = 12,
                   grade_levels: int = 0) -> float:
    ang = np.sort(np.mod(np.asarray(
        list(kink_dirs) + [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]),
        2.0 * math.pi))
    bounds = np.concatenate([ang, [ang[0] + 2.0 * math.pi]])
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a <= 1e-13:
            continue
        if grade_levels > 0:
            sub = a + _graded_panels(b - a, grade_levels)
        else:
            sub = np.array([a, b])
        for sa, sb in zip(sub[:-1], sub[1:]):
            th = sa + 0.5 * (sb - sa) * (1.0 + x)
            wt = 0.5 * (sb - sa) * w
            vals = [g(radius * np.array([math.cos(t), math.sin(t)]))
                    for t in th]
            total += float(np.dot(wt, vals))
    return total


def _shell_adaptive(g, radius: float, rel_tol: float) -> float:
    from .quadrature import QuadratureSpec, integrate_adaptive

    def f(th):
        th = np.atleast_1d(th)
        return np.array([g(radius * np.array([math.cos(t), math.sin(t)]))
                         for t in th])

    spec = QuadratureSpec(gauss_order=12, max_depth=22, rel_tol=rel_tol)
    val, _ = integrate_adaptive(f, np.array([0.0, 2.0 * math.pi]), spec)
    return val


def _conic_matrix(shape):
    """Linear map M with boundary c + M (cos t, sin t), or None."""
    if isinstance(shape, _shapes.BallShape) and shape.dim == 2:
        return shape.radius * np.eye(2)
    if isinstance(shape, _shapes.SmoothCurve2D):
        conic = _ellipse_data(shape)
        if conic is not None:
            return conic[1]
    return None


def _conic_support_dirs(m: np.ndarray, radius: float) -> list:
    """Directions where r*omega leaves the covariogram support of the
    ellipse with matrix m, i.e. radius * |m^{-1} omega| = 2."""
    minv = np.linalg.inv(m)
    nmat = minv.T @ minv
    mean = 0.5 * (nmat[0, 0] + nmat[1, 1])
    amp = math.hypot(0.5 * (nmat[0, 0] - nmat[1, 1]), nmat[0, 1])
    phi = math.atan2(nmat[0, 1], 0.5 * (nmat[0, 0] - nmat[1, 1]))
    rhs = 4.0 / (radius * radius) - mean
    if amp < 1e-15 or abs(rhs) >= amp:
        return []
    psi = math.acos(rhs / amp)
    out = []
    for two_theta in (phi + psi, phi - psi):
        out.append(0.5 * two_theta)
        out.append(0.5 * two_theta + math.pi)
    return out


def shell_integral(shape, radius: float = 1.0,
                   rel_tol: float = 1e-10) -> float:
    """Integral over the unit directions of g(radius * omega): the total
    slice mass int_E H^{d-1}(E ∩ ∂B_radius(x)) dx with radius^{d-1}
    scaled out (d = 2), or the two-atom sum (d = 1).  For polygons and
    conics the angular rule splits exactly at the kink directions of
    the covariogram; other shapes use adaptive splitting."""
    if isinstance(shape, _shapes.Interval1D):
        g = covariogram(shape)
        return 2.0 * g(radius)
    key = (shape, round(radius, 14))
    hit = _SHELL_CACHE.get(key)
    if hit is not None:
        return hit
    g = covariogram(shape)
    conic_m = _conic_matrix(shape)
    if isinstance(shape, _shapes.Polygon2D):
        segs = _covariogram_segments(shape)
        val = _shell_sectors(g, radius, _poly_shell_kink_dirs(segs,
                                                              radius))
    elif conic_m is not None:
        # Grade toward the support-touch directions: the covariogram
        # vanishes there with a 3/2-power in angle.
        dirs = _conic_support_dirs(conic_m, radius)
        val = _shell_sectors(g, radius, dirs, order=16,
                             grade_levels=8 if dirs else 0)
    else:
        val = _shell_adaptive(g, radius, rel_tol)
    if len(_SHELL_CACHE) > 10000:
        _SHELL_CACHE.clear()
    _SHELL_CACHE[key] = val
    return val


def _poly_radial_breaks(poly: _shapes.Polygon2D) -> list:
    """Radii where the covariogram's crease pattern changes: vertex
    difference norms and perpendicular distances to crease segments."""
    verts = poly.vertices_array
    out = []
    for a in verts:
        for b in verts:
            out.append(float(np.hypot(*(a - b))))
    for o, d, L in _covariogram_segments(poly):
        t = -float(o @ d)
        if 0.0 <= t <= L:
            out.append(float(np.hypot(*(o + t * d))))
    return out


def far_volume_integral(shape) -> float:
    """V = double integral over E x E, |x-y| > 1, of |x-y|^{-d-1},
    computed on the volume side through the covariogram."""
    hit = _FARVOL_CACHE.get(shape)
    if hit is not None:
        return hit
    if isinstance(shape, _shapes.Interval1D):
        L = shape.b - shape.a
        if L <= 1.0:
            val = 0.0
        else:
            # 2 int_1^L (L - t) t^{-2} dt
            val = 2.0 * (L * (1.0 - 1.0 / L) - math.log(L))
        _FARVOL_CACHE[shape] = val
        return val
    D = _shapes.diameter(shape)
    if D <= 1.0:
        _FARVOL_CACHE[shape] = 0.0
        return 0.0
    breaks = [1.0, D]
    conic_m = _conic_matrix(shape)
    if isinstance(shape, _shapes.Polygon2D):
        breaks += [r for r in _poly_radial_breaks(shape) if 1.0 < r < D]
    elif conic_m is not None:
        # The shell integral kinks where the sphere of radius r first
        # touches / last leaves the covariogram support (an ellipse of
        # semi-axes 2 * singular values of the boundary matrix).
        breaks += [2.0 * sv for sv in np.linalg.svd(conic_m)[1]
                   if 1.0 < 2.0 * sv < D]
    else:
        breaks += list(np.linspace(1.0, D, 9)[1:-1])
    edges = np.unique(np.asarray(breaks))
    if conic_m is not None:
        # g(r omega) has one-sided (break - r)^{3/2} behaviour at the
        # touch radii, so grade panels toward the break points.
        refined = [edges[0]]
        for a, b in zip(edges[:-1], edges[1:]):
            refined.extend((a + _graded_panels(b - a, 7))[1:])
        edges = np.unique(np.asarray(refined))
    x, w = np.polynomial.legendre.leggauss(16)
    shell_tol = 1e-10 if conic_m is None else 1e-9
    val = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-13:
            continue
        rr = a + 0.5 * (b - a) * (1.0 + x)
        wr = 0.5 * (b - a) * w
        vals = [shell_integral(shape, radius=r, rel_tol=shell_tol)
                for r in rr]
        val += float(np.dot(wr, np.asarray(vals) / (rr * rr)))
    _FARVOL_CACHE[shape] = val
    return val
