"""Analytic obstacle domains, distance queries and the reflection decomposition.

Every domain is an open set ``outer \\ closure(obstacle)``. Points are passed as
arrays of shape ``(m, n)`` (a single point of shape ``(n,)`` is also accepted);
all queries are vectorized.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GEOM_TOL = 1e-12


def _as_points(x, dim):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != dim:
        raise ValueError(f"point dimension {pts.shape[-1]} does not match domain dimension {dim}")
    return pts, single


def _unit(v):
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("direction vector must be nonzero")
    return v / nrm


class RegionLabel(enum.IntEnum):
    """Pieces of the reflection decomposition of a domain."""

    OMEGA_PLUS = 0
    OMEGA_MINUS = 1
    OMEGA_MINUS_MINUS = 2
    INTERFACE_H = 3
    EXTERIOR = 4


@dataclass(frozen=True)
class Reflection:
    """Mirror across the hyperplane ``{x : <x, normal> = offset}``."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > GEOM_TOL:
            raise ValueError("reflection normal must be a unit vector")
        object.__setattr__(self, "normal", tuple(float(c) for c in n))

    @property
    def dim(self):
        return len(self.normal)

    def side(self, x):
        """Signed distance of ``x`` from the hyperplane (positive on the normal side)."""
        pts = np.asarray(x, dtype=float)
        return pts @ np.asarray(self.normal) - self.offset

    def __call__(self, x):
        pts = np.asarray(x, dtype=float)
        n = np.asarray(self.normal)
        d = self.side(pts)
        return pts - 2.0 * np.multiply.outer(d, n) if pts.ndim > 1 else pts - 2.0 * d * n

    def axis(self):
        """Index of the coordinate axis the normal is aligned with, or ``None``."""
        n = np.abs(np.asarray(self.normal))
        k = int(np.argmax(n))
        return k if abs(n[k] - 1.0) <= GEOM_TOL else None

    def to_dict(self):
        return {"normal": list(self.normal), "offset": self.offset}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["normal"]), float(d.get("offset", 0.0)))


def reflect(reflection: Reflection, x):
    """Mirror image of ``x`` across the reflection hyperplane."""
    return reflection(x)


# ---------------------------------------------------------------------------
# Primitive solids: each knows its interior, its boundary distance, ray hits and
# the area of its intersection with axis-aligned boxes.
# ---------------------------------------------------------------------------


def _circle_below(y, x0, x1, r):
    """Area of ``{(x, y') in disk(0, r) : x0 <= x <= x1, y' < y}`` (vectorized)."""

    def prim(x):
        # antiderivative of sqrt(r^2 - x^2)
        x = np.clip(x, -r, r)
        return 0.5 * (x * np.sqrt(np.maximum(r * r - x * x, 0.0)) + r * r * np.arcsin(x / r))

    a = np.clip(x0, -r, r)
    b = np.clip(x1, -r, r)
    b = np.maximum(a, b)
    half = prim(b) - prim(a)  # area of the upper half-chord strip
    yy = np.clip(np.abs(y), 0.0, r)
    q = np.sqrt(np.maximum(r * r - yy * yy, 0.0))
    lo = np.clip(a, -q, q)
    hi = np.clip(b, -q, q)
    inner = np.maximum(hi - lo, 0.0)
    # integral of min(|y|, s(x)) over [a, b]
    capped = yy * inner + half - (prim(hi) - prim(lo))
    return np.where(y >= 0.0, half + capped, half - capped)


def _disk_box_area(center, r, lo, hi):
    cx, cy = center
    x0 = lo[..., 0] - cx
    x1 = hi[..., 0] - cx
    y0 = lo[..., 1] - cy
    y1 = hi[..., 1] - cy
    return np.maximum(_circle_below(y1, x0, x1, r) - _circle_below(y0, x0, x1, r), 0.0)


@dataclass(frozen=True)
class Ball:
    """Open ball; in 1D an interval, in 2D a disk."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return len(self.center)

    def inside(self, pts, closed=False):
        r = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return r <= self.radius if closed else r < self.radius

    def surface_distance(self, pts):
        return np.abs(np.linalg.norm(pts - np.asarray(self.center), axis=-1) - self.radius)

    def ray_roots(self, pts, direction):
        """Parameters ``(t_in, t_out)`` where ``p + t d`` crosses the sphere (nan if missed)."""
        p = pts - np.asarray(self.center)
        b = p @ direction
        c = np.einsum("ij,ij->i", p, p) - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        return -b - sq, -b + sq

    def box_area(self, lo, hi):
        if self.dim == 1:
            c = self.center[0]
            return np.maximum(np.minimum(hi[..., 0], c + self.radius) - np.maximum(lo[..., 0], c - self.radius), 0.0)
        if self.dim != 2:
            raise NotImplementedError("cut-cell volumes implemented for n <= 2")
        return _disk_box_area(self.center, self.radius, lo, hi)

    @property
    def volume(self):
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    @property
    def perimeter(self):
        n = self.dim
        return n * self.volume / self.radius

    def boundary_samples(self, m):
        """``m`` equispaced points on the circle with outward normals and arc weights."""
        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        nrm = np.c_[np.cos(theta), np.sin(theta)]
        pts = np.asarray(self.center) + self.radius * nrm
        return pts, nrm, np.full(m, 2 * np.pi * self.radius / m)

    def translated(self, shift):
        return Ball(tuple(np.asarray(self.center) + shift), self.radius)

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Ellipse:
    """Open ellipse with semi-axis ``a`` along ``direction`` and ``b`` across it."""

    center: tuple
    a: float
    b: float
    direction: tuple = (1.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "direction", tuple(_unit(self.direction)))
        if self.a <= 0 or self.b <= 0:
            raise ValueError("semi-axes must be positive")

    dim = 2

    def _frame(self):
        d = np.asarray(self.direction)
        return d, np.array([-d[1], d[0]])

    def _local(self, pts):
        d, e = self._frame()
        p = pts - np.asarray(self.center)
        return p @ d, p @ e

    def inside(self, pts, closed=False):
        u, v = self._local(pts)
        q = (u / self.a) ** 2 + (v / self.b) ** 2
        return q <= 1.0 if closed else q < 1.0

    def surface_distance(self, pts):
        # Newton iteration on the foot-point angle; accurate to ~1e-14 for moderate eccentricity
        u, v = self._local(pts)
        au, av = np.abs(u), np.abs(v)
        a, b = self.a, self.b
        th = np.arctan2(a * av, b * au)
        for _ in range(40):
            c, s = np.cos(th), np.sin(th)
            ex, ey = a * c, b * s
            g = (a * a - b * b) * c * s - au * a * s + av * b * c
            dg = (a * a - b * b) * (c * c - s * s) - au * a * c - av * b * s
            step = np.where(np.abs(dg) > 0, g / np.where(dg == 0, 1, dg), 0.0)
            th = np.clip(th - step, 0.0, np.pi / 2)
        c, s = np.cos(th), np.sin(th)
        return np.hypot(au - a * c, av - b * s)

    def ray_roots(self, pts, direction):
        d, e = self._frame()
        u, v = self._local(pts)
        du, dv = direction @ d, direction @ e
        A = (du / self.a) ** 2 + (dv / self.b) ** 2
        B = u * du / self.a**2 + v * dv / self.b**2
        C = (u / self.a) ** 2 + (v / self.b) ** 2 - 1.0
        disc = B * B - A * C
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        return (-B - sq) / A, (-B + sq) / A

    def box_area(self, lo, hi):
        d, _ = self._frame()
        if abs(abs(d[0]) - 1.0) <= GEOM_TOL:
            ax, ay = self.a, self.b
        elif abs(abs(d[1]) - 1.0) <= GEOM_TOL:
            ax, ay = self.b, self.a
        else:
            raise NotImplementedError("cut-cell areas need an axis-aligned ellipse")
        c = np.asarray(self.center)
        scale = np.array([ax, ay])
        return ax * ay * _disk_box_area((0.0, 0.0), 1.0, (lo - c) / scale, (hi - c) / scale)

    @property
    def volume(self):
        return math.pi * self.a * self.b

    @property
    def perimeter(self):
        a, b = self.a, self.b
        hh = ((a - b) / (a + b)) ** 2
        return math.pi * (a + b) * (1 + 3 * hh / (10 + math.sqrt(4 - 3 * hh)))

    def boundary_samples(self, m):
        """Boundary points, outward unit normals and arc-length weights.

        Equispaced in the parametric angle; weights are exact arc-length
        elements times the angular step, so the sum converges spectrally.
        """
        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        d, e = self._frame()
        c, s = np.cos(theta), np.sin(theta)
        pts = np.asarray(self.center) + np.outer(self.a * c, d) + np.outer(self.b * s, e)
        tang = np.outer(-self.a * s, d) + np.outer(self.b * c, e)
        speed = np.linalg.norm(tang, axis=1)
        nrm = np.outer(self.b * c, d) + np.outer(self.a * s, e)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        return pts, nrm, speed * 2 * np.pi / m

    def translated(self, shift):
        return Ellipse(tuple(np.asarray(self.center) + shift), self.a, self.b, self.direction)

    def to_dict(self):
        return {"kind": "ellipse", "center": list(self.center), "a": self.a, "b": self.b,
                "direction": list(self.direction)}


@dataclass(frozen=True)
class Rectangle:
    """Open axis-aligned box ``prod (lo_i, hi_i)``; 1D gives an interval."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("rectangle needs lo < hi componentwise")

    @property
    def dim(self):
        return len(self.lo)

    def inside(self, pts, closed=False):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((pts >= lo) & (pts <= hi), axis=-1)
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def surface_distance(self, pts):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inner = np.minimum(pts - lo, hi - pts)
        outside = np.linalg.norm(np.maximum(np.maximum(lo - pts, pts - hi), 0.0), axis=-1)
        return np.where(self.inside(pts, closed=True), np.min(inner, axis=-1), outside)

    def ray_roots(self, pts, direction):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - pts) / direction
            t2 = (hi - pts) / direction
        tmin = np.where(direction != 0, np.minimum(t1, t2), -np.inf)
        tmax = np.where(direction != 0, np.maximum(t1, t2), np.inf)
        return np.max(tmin, axis=-1), np.min(tmax, axis=-1)

    def box_area(self, lo, hi):
        ext = np.minimum(hi, np.asarray(self.hi)) - np.maximum(lo, np.asarray(self.lo))
        return np.prod(np.maximum(ext, 0.0), axis=-1)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def perimeter(self):
        if self.dim == 1:
            return 2.0
        w, h = np.subtract(self.hi, self.lo)
        return 2.0 * (w + h)

    def translated(self, shift):
        return Rectangle(tuple(np.asarray(self.lo) + shift), tuple(np.asarray(self.hi) + shift))

    def to_dict(self):
        return {"kind": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}


def shape_from_dict(d):
    kind = d["kind"]
    if kind == "ball":
        return Ball(tuple(d["center"]), float(d["radius"]))
    if kind == "ellipse":
        return Ellipse(tuple(d["center"]), float(d["a"]), float(d["b"]), tuple(d.get("direction", (1.0, 0.0))))
    if kind == "rectangle":
        return Rectangle(tuple(d["lo"]), tuple(d["hi"]))
    raise ValueError(f"unknown shape kind {kind!r}")


def symmetry_of(body):
    """Reflection through the center of a convex body, perpendicular to its axis."""
    if isinstance(body, Ellipse):
        v = np.asarray(body.direction)
    elif isinstance(body, Ball):
        v = np.zeros(body.dim)
        v[0] = 1.0
    else:
        raise TypeError("obstacles must be balls or ellipses")
    return Reflection(tuple(v), float(np.asarray(body.center) @ v))


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Open set ``outer \\ closure(obstacle)`` with optional reflection metadata."""

    outer: object
    obstacle: Optional[object] = None
    reflection: Optional[Reflection] = None
    variant: str = field(default="domain", compare=False)

    def __post_init__(self):
        if self.obstacle is not None:
            if self.obstacle.dim != self.outer.dim:
                raise ValueError("obstacle and outer region dimensions differ")
            gap = self._obstacle_clearance()
            if not gap > 0:
                raise ValueError("closure of the obstacle must lie strictly inside the outer region")
        if self.reflection is not None and self.reflection.dim != self.dim:
            raise ValueError("reflection dimension mismatch")

    def _obstacle_clearance(self):
        obs = self.obstacle
        if isinstance(obs, Ball) and isinstance(self.outer, Ball):
            return self.outer.radius - obs.radius - np.linalg.norm(np.subtract(obs.center, self.outer.center))
        pts, _, _ = obs.boundary_samples(2048)
        if not np.all(self.outer.inside(pts)):
            return -1.0
        return float(np.min(self.outer.surface_distance(pts)))

    @property
    def dim(self):
        return self.outer.dim

    @property
    def volume(self):
        v = self.outer.volume
        return v - self.obstacle.volume if self.obstacle is not None else v

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        inside = self.outer.inside(pts)
        if self.obstacle is not None:
            inside &= ~self.obstacle.inside(pts, closed=True)
        return bool(inside[0]) if single else inside

    def boundary_distance(self, x):
        pts, single = _as_points(x, self.dim)
        if not np.all(self.contains(pts)):
            raise ValueError("boundary_distance requires points inside the domain")
        d = self.outer.surface_distance(pts)
        if self.obstacle is not None:
            d = np.minimum(d, self.obstacle.surface_distance(pts))
        return float(d[0]) if single else d

    def ray_distance(self, pts, direction):
        """Distance from interior points along ``direction`` to the first boundary crossing."""
        direction = np.asarray(direction, dtype=float)
        _, t_out = self.outer.ray_roots(pts, direction)
        t = t_out
        if self.obstacle is not None:
            t_in, _ = self.obstacle.ray_roots(pts, direction)
            hit = np.isfinite(t_in) & (t_in > 0)
            t = np.where(hit, np.minimum(t, t_in), t)
        return t

    def box_area(self, lo, hi):
        """Exact area of ``box ∩ domain`` for an array of boxes."""
        a = self.outer.box_area(lo, hi)
        if self.obstacle is not None:
            a = a - self.obstacle.box_area(lo, hi)
        return np.maximum(a, 0.0)

    def narrowest_gap(self):
        """Smallest distance between obstacle and outer boundary (inf without obstacle)."""
        if self.obstacle is None:
            return math.inf
        return float(self._obstacle_clearance())

    def classify(self, x, tol=GEOM_TOL):
        """Label points by the reflection decomposition.

        Points on the ``normal`` side whose mirror image is in the domain form
        OMEGA_PLUS; their mirror images are OMEGA_MINUS; everything else inside
        is OMEGA_MINUS_MINUS; points within ``tol`` of the plane are INTERFACE_H.
        """
        if self.reflection is None:
            raise ValueError("domain carries no reflection")
        pts, single = _as_points(x, self.dim)
        inside = self.contains(pts)
        on_boundary = np.zeros(len(pts), dtype=bool)
        if not np.all(inside):
            # closure points are allowed: they sit on the boundary within tolerance
            out = ~inside
            d = self.outer.surface_distance(pts[out])
            if self.obstacle is not None:
                d = np.minimum(d, self.obstacle.surface_distance(pts[out]))
            if np.any(d > max(tol, GEOM_TOL) + 1e-9):
                raise ValueError("classify requires points in the closure of the domain")
            on_boundary[out] = True
        refl = self.reflection
        side = refl.side(pts)
        mirror_in = self.contains(refl(pts))
        labels = np.full(len(pts), RegionLabel.OMEGA_MINUS_MINUS, dtype=int)
        labels[(side > tol) & mirror_in] = RegionLabel.OMEGA_PLUS
        labels[(side < -tol) & mirror_in] = RegionLabel.OMEGA_MINUS
        labels[np.abs(side) <= tol] = RegionLabel.INTERFACE_H
        labels[on_boundary] = RegionLabel.EXTERIOR
        if single:
            return RegionLabel(int(labels[0]))
        return labels

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = {"variant": self.variant, "outer": self.outer.to_dict()}
        if self.obstacle is not None:
            d["obstacle"] = self.obstacle.to_dict()
        if self.reflection is not None:
            d["reflection"] = self.reflection.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def key(self):
        """Stable identity string used for cache keys."""
        return self.to_json()


class EccentricAnnulus(Domain):
    """Disk of radius ``r2`` minus the closed disk of radius ``r1`` centred at ``s * V``.

    The reflection plane passes through the obstacle centre perpendicular to
    ``V``, so OMEGA_PLUS is the cap on the side ``V`` points to.
    """

    def __init__(self, r1, r2, s, V=(1.0, 0.0)):
        if not 0 < r1 < r2:
            raise ValueError("need 0 < r1 < r2")
        if not 0 <= s < r2 - r1:
            raise ValueError("displacement must satisfy 0 <= s < r2 - r1")
        V = _unit(V)
        object.__setattr__(self, "r1", float(r1))
        object.__setattr__(self, "r2", float(r2))
        object.__setattr__(self, "s", float(s))
        object.__setattr__(self, "V", tuple(V))
        zero = tuple(0.0 for _ in V)
        super().__init__(Ball(zero, r2), Ball(tuple(s * V), r1),
                         Reflection(tuple(V), float(s)), "eccentric_annulus")

    def with_displacement(self, s):
        return EccentricAnnulus(self.r1, self.r2, s, self.V)

    def to_dict(self):
        return {"variant": "eccentric_annulus", "r1": self.r1, "r2": self.r2, "s": self.s,
                "V": list(self.V), "reflection": self.reflection.to_dict()}


class ObstacleDomain(Domain):
    """``outer`` minus a convex body translated by ``eps`` along its symmetry normal."""

    def __init__(self, outer, obstacle, eps=0.0):
        sym = symmetry_of(obstacle)
        V = np.asarray(sym.normal)
        moved = obstacle.translated(eps * V)
        object.__setattr__(self, "base_obstacle", obstacle)
        object.__setattr__(self, "eps", float(eps))
        object.__setattr__(self, "V", tuple(V))
        super().__init__(outer, moved, Reflection(tuple(V), sym.offset + eps), "obstacle_domain")

    def with_displacement(self, eps):
        return ObstacleDomain(self.outer, self.base_obstacle, eps)

    def to_dict(self):
        return {"variant": "obstacle_domain", "outer": self.outer.to_dict(),
                "obstacle": self.base_obstacle.to_dict(), "eps": self.eps,
                "reflection": self.reflection.to_dict()}


def ball_domain(center=(0.0, 0.0), radius=1.0, reflection=None):
    return Domain(Ball(tuple(center), radius), reflection=reflection, variant="ball")


def rectangle_domain(lo, hi, reflection=None):
    return Domain(Rectangle(tuple(lo), tuple(hi)), reflection=reflection, variant="rectangle")


def interval_domain(a=0.0, b=math.pi):
    return Domain(Rectangle((a,), (b,)), variant="rectangle")


def domain_from_dict(d):
    """Inverse of ``Domain.to_dict``; also accepts the short ``ball``/``rectangle`` forms."""
    variant = d.get("variant", "domain")
    refl = Reflection.from_dict(d["reflection"]) if d.get("reflection") else None
    if variant == "eccentric_annulus":
        dom = EccentricAnnulus(d["r1"], d["r2"], d["s"], tuple(d.get("V", (1.0, 0.0))))
        if refl is not None and refl != dom.reflection:
            raise ValueError("eccentric annulus reflection is fixed by its obstacle")
        return dom
    if variant == "obstacle_domain":
        return ObstacleDomain(shape_from_dict(d["outer"]), shape_from_dict(d["obstacle"]), d.get("eps", 0.0))
    if variant == "ball" and "outer" not in d:
        return ball_domain(tuple(d.get("center", (0.0, 0.0))), float(d.get("radius", 1.0)), refl)
    if variant == "rectangle" and "outer" not in d:
        return rectangle_domain(tuple(d["lo"]), tuple(d["hi"]), refl)
    obstacle = shape_from_dict(d["obstacle"]) if d.get("obstacle") else None
    return Domain(shape_from_dict(d["outer"]), obstacle, refl, variant)


def load_domain(path):
    with open(path) as fh:
        return domain_from_dict(json.load(fh))


# module-level wrappers mirroring the method API


def contains(domain, x):
    return domain.contains(x)


def boundary_distance(domain, x):
    return domain.boundary_distance(x)


def classify(domain, x, tol=GEOM_TOL):
    return domain.classify(x, tol)
