"""Embedded-boundary finite differences for the Dirichlet Laplacian.

Nodes are the lattice points ``origin + h * k`` strictly inside the domain.
When the domain carries an axis-aligned reflection the lattice is anchored on
the mirror plane, so reflection maps nodes onto nodes.

The operator is the symmetric cut-cell pencil ``(C, W)``: ``C`` uses the exact
arm length to the boundary on the diagonal only (off-diagonals stay ``-1``), and
``W`` holds cut-cell volumes. ``W^{-1} C`` approximates ``-Laplacian`` with
second-order eigenvalue and solution error.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import Ball, Ellipse, Rectangle, RegionLabel

log = logging.getLogger(__name__)

MIN_ARM = 1e-3


class GridError(ValueError):
    """Raised when a domain cannot be resolved at the requested spacing."""


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    h: float
    origin: np.ndarray
    lattice: np.ndarray  # (m, dim) integer lattice indices of the nodes
    nodes: np.ndarray  # (m, dim) coordinates
    node_region: Optional[np.ndarray]
    kmin: np.ndarray
    lookup: np.ndarray  # dense lattice -> node id table, -1 where no node

    @property
    def size(self):
        return len(self.nodes)

    @property
    def bbox(self):
        lo = self.origin + self.h * self.kmin
        hi = lo + self.h * (np.asarray(self.lookup.shape) - 1)
        return lo, hi

    def node_at(self, k):
        """Node id for integer lattice indices ``k`` (``-1`` when absent)."""
        k = np.atleast_2d(np.asarray(k, dtype=int)) - self.kmin
        shape = np.asarray(self.lookup.shape)
        ok = np.all((k >= 0) & (k < shape), axis=1)
        out = np.full(len(k), -1, dtype=int)
        out[ok] = self.lookup[tuple(k[ok].T)]
        return out

    def locate(self, x):
        """Node id of each point that coincides with a node (``-1`` otherwise)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = (x - self.origin) / self.h
        k = np.rint(q).astype(int)
        ids = self.node_at(k)
        off = np.max(np.abs(q - k), axis=1) > 1e-6
        ids[off] = -1
        return ids

    def interpolate(self, values, x, order=1):
        """Multilinear (``order=1``) or tensor quadratic (``order=2``) interpolation.

        Lattice points that are not nodes contribute zero, i.e. the field is
        extended by its Dirichlet value. Returns ``(vals, clean)`` where
        ``clean`` marks points whose whole stencil consists of nodes. With
        ``order=2`` points whose 3^n stencil is incomplete fall back to the
        multilinear value.
        """
        if order == 2:
            return self._interpolate_quadratic(values, x)
        values = np.asarray(values)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = (x - self.origin) / self.h
        base = np.floor(q).astype(int)
        frac = q - base
        out = np.zeros((len(x),) + values.shape[1:])
        clean = np.ones(len(x), dtype=bool)
        for corner in range(2**self.dim):
            bits = np.array([(corner >> a) & 1 for a in range(self.dim)])
            wgt = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
            ids = self.node_at(base + bits)
            has = ids >= 0
            clean &= has | (wgt == 0)
            contrib = np.zeros_like(out)
            contrib[has] = values[ids[has]]
            out += (wgt.reshape((-1,) + (1,) * (values.ndim - 1))) * contrib
        return out, clean

    def _interpolate_quadratic(self, values, x):
        values = np.asarray(values)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = (x - self.origin) / self.h
        base = np.rint(q).astype(int)
        u = q - base  # in [-1/2, 1/2]
        # Lagrange weights on offsets -1, 0, 1
        L = np.stack([0.5 * u * (u - 1), 1 - u * u, 0.5 * u * (u + 1)], axis=-1)
        out = np.zeros((len(x),) + values.shape[1:])
        clean = np.ones(len(x), dtype=bool)
        for off in np.ndindex(*(3,) * self.dim):
            o = np.asarray(off) - 1
            wgt = np.prod(L[np.arange(len(x))[:, None], np.arange(self.dim)[None, :], np.asarray(off)[None, :]],
                          axis=1)
            ids = self.node_at(base + o)
            has = ids >= 0
            clean &= has
            contrib = np.zeros_like(out)
            contrib[has] = values[ids[has]]
            out += wgt.reshape((-1,) + (1,) * (values.ndim - 1)) * contrib
        if not np.all(clean):
            lin, lin_clean = self.interpolate(values, x[~clean], order=1)
            out[~clean] = lin
        return out, clean


def _outer_bounds(shape):
    if isinstance(shape, Ball):
        c = np.asarray(shape.center)
        return c - shape.radius, c + shape.radius
    if isinstance(shape, Rectangle):
        return np.asarray(shape.lo), np.asarray(shape.hi)
    if isinstance(shape, Ellipse):
        r = max(shape.a, shape.b)
        c = np.asarray(shape.center)
        return c - r, c + r
    raise TypeError(f"unsupported outer shape {type(shape).__name__}")


def lattice_origin(domain):
    """Anchor point of the lattice: on the mirror plane when it is axis-aligned."""
    origin = np.zeros(domain.dim)
    refl = domain.reflection
    if refl is not None and refl.axis() is not None:
        origin = refl.offset * np.asarray(refl.normal)
    return origin


def _unit_dirs(dim):
    """Axis directions in the fixed order (+e0, -e0, +e1, -e1, ...)."""
    out = []
    for a in range(dim):
        for sgn in (1, -1):
            e = np.zeros(dim, dtype=int)
            e[a] = sgn
            out.append(e)
    return out


def build_grid(domain, h, anchor=True):
    """Lattice nodes strictly inside ``domain`` with spacing ``h``.

    Raises:
        GridError: if the narrowest gap between obstacle and outer boundary is
            not resolved by four cells, or if no node survives.
    """
    h = float(h)
    if not h > 0:
        raise GridError("spacing must be positive")
    gap = domain.narrowest_gap()
    if gap < 4 * h:
        raise GridError(f"gap unresolved: narrowest gap {gap:.4g} < 4h = {4 * h:.4g}")
    dim = domain.dim
    origin = lattice_origin(domain) if anchor else np.zeros(dim)
    lo, hi = _outer_bounds(domain.outer)
    kmin = np.floor((lo - origin) / h).astype(int) - 1
    kmax = np.ceil((hi - origin) / h).astype(int) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(kmin, kmax)]
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    X = origin + h * K
    inside = domain.contains(X)
    K, X = K[inside], X[inside]

    dirs = _unit_dirs(dim)
    ray = np.stack([domain.ray_distance(X, e.astype(float)) for e in dirs], axis=1)
    close = np.any(ray < MIN_ARM * h, axis=1)
    if np.any(close):
        warnings.warn(f"dropping {int(close.sum())} node(s) closer than {MIN_ARM}h to the boundary")
        K, X = K[~close], X[~close]
    if len(K) == 0:
        raise GridError("empty grid")

    shape = tuple(kmax - kmin + 1)
    lookup = np.full(shape, -1, dtype=int)
    lookup[tuple((K - kmin).T)] = np.arange(len(K))
    region = None
    if domain.reflection is not None:
        region = domain.classify(X, tol=0.5 * h)
    return Grid(dim, h, origin, K, X, region, kmin, lookup)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Symmetric pencil ``(stiffness, mass)`` for ``-Laplacian`` with Dirichlet data.

    ``arms[i, j]`` is the distance from node ``i`` to its neighbour or to the
    boundary in direction ``j`` (order +e0, -e0, +e1, -e1).
    """

    stiffness: sp.csr_matrix
    mass: np.ndarray
    arms: np.ndarray
    h: float

    @property
    def size(self):
        return self.stiffness.shape[0]

    @property
    def matrix(self):
        """``W^{-1/2} C W^{-1/2}``: symmetric, same spectrum as the pencil."""
        s = sp.diags(1.0 / np.sqrt(self.mass))
        return (s @ self.stiffness @ s).tocsr()

    def apply(self, u):
        """Discrete ``-Laplacian u`` at the nodes."""
        return (self.stiffness @ u) / (self.mass if np.ndim(u) == 1 else self.mass[:, None])

    def lattice_operator(self):
        """Stiffness divided by ``h^n``: the plain finite-difference matrix."""
        n = self.arms.shape[1] // 2
        return (self.stiffness / self.h**n).tocsr()


def node_arms(grid, domain):
    dirs = _unit_dirs(grid.dim)
    h = grid.h
    arms = np.empty((grid.size, len(dirs)))
    nbrs = np.empty((grid.size, len(dirs)), dtype=int)
    for j, e in enumerate(dirs):
        nb = grid.node_at(grid.lattice + e)
        ray = domain.ray_distance(grid.nodes, e.astype(float))
        if np.any((nb >= 0) & (ray < h * (1 - 1e-9))):
            raise GridError("gap unresolved: a lattice edge crosses the boundary twice")
        arms[:, j] = np.where(nb >= 0, h, np.minimum(ray, h * (1 + MIN_ARM)))
        nbrs[:, j] = nb
    return arms, nbrs


def cell_volumes(grid, domain):
    """Cut-cell volumes with boundary-cell area handed to adjacent nodes.

    Each lattice cell ``x_k + [-h/2, h/2]^n`` contributes its exact overlap with
    the domain. Cells of lattice points that are not nodes pass their overlap to
    their axis neighbours that are nodes (diagonal neighbours as a fallback,
    nearest node as a last resort), so the weights sum to the domain volume.
    """
    h, dim = grid.h, grid.dim
    shape = np.asarray(grid.lookup.shape)
    axes = [np.arange(n) + k0 for n, k0 in zip(shape, grid.kmin)]
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    X = grid.origin + h * K
    area = domain.box_area(X - h / 2, X + h / 2)
    w = np.zeros(grid.size)
    ids = grid.lookup.reshape(-1)
    is_node = ids >= 0
    w[ids[is_node]] = area[is_node]
    orphan = np.nonzero((~is_node) & (area > 0))[0]
    if len(orphan) == 0:
        return w
    Ko, Ao = K[orphan], area[orphan]
    axis_nb = np.stack([grid.node_at(Ko + e) for e in _unit_dirs(dim)], axis=1)
    count = (axis_nb >= 0).sum(axis=1)
    for j in range(axis_nb.shape[1]):
        sel = axis_nb[:, j] >= 0
        np.add.at(w, axis_nb[sel, j], Ao[sel] / count[sel])
    left = count == 0
    if np.any(left):
        offs = np.stack(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij"), -1).reshape(-1, dim)
        offs = offs[np.any(offs != 0, axis=1)]
        diag_nb = np.stack([grid.node_at(Ko[left] + o) for o in offs], axis=1)
        dcount = (diag_nb >= 0).sum(axis=1)
        la = Ao[left]
        for j in range(diag_nb.shape[1]):
            sel = diag_nb[:, j] >= 0
            np.add.at(w, diag_nb[sel, j], la[sel] / dcount[sel])
        stray = np.nonzero(left)[0][dcount == 0]
        for i in stray:
            nearest = np.argmin(np.linalg.norm(grid.nodes - (grid.origin + h * Ko[i]), axis=1))
            w[nearest] += Ao[i]
    return w


def assemble_laplacian(grid, domain):
    """Cut-cell stiffness/mass pencil for the Dirichlet Laplacian on ``grid``."""
    h, dim = grid.h, grid.dim
    arms, nbrs = node_arms(grid, domain)
    scale = h ** (dim - 2)
    diag = scale * np.sum(h / arms, axis=1)
    rows, cols = [np.arange(grid.size)], [np.arange(grid.size)]
    vals = [diag]
    for j in range(nbrs.shape[1]):
        sel = nbrs[:, j] >= 0
        rows.append(np.nonzero(sel)[0])
        cols.append(nbrs[sel, j])
        vals.append(np.full(sel.sum(), -scale))
    C = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.size, grid.size))
    mass = cell_volumes(grid, domain)
    if np.any(mass <= 0):
        raise GridError("non-positive cell volume")
    return DiscreteOperator(C, mass, arms, h)


@dataclass(frozen=True, eq=False)
class QuadratureWeights:
    volume_weights: np.ndarray
    boundary_points: Optional[np.ndarray] = None
    boundary_normals: Optional[np.ndarray] = None  # unit normal pointing into the domain
    boundary_weights: Optional[np.ndarray] = None


def quadrature(grid, domain, obstacle_boundary=False, n_boundary=None):
    """Volume weights and, optionally, a uniform sampling of the obstacle boundary.

    Obstacle normals point out of the obstacle, i.e. into the domain.
    """
    w = cell_volumes(grid, domain)
    if not obstacle_boundary:
        return QuadratureWeights(w)
    if domain.obstacle is None:
        raise ValueError("domain has no obstacle")
    if n_boundary is None:
        n_boundary = 4 * int(np.ceil(domain.obstacle.perimeter / grid.h))
    pts, nrm, dS = domain.obstacle.boundary_samples(n_boundary)
    return QuadratureWeights(w, pts, nrm, dS)


def normal_derivative(field, grid, weights, delta=None):
    """One-sided derivative along the inward normal at each boundary sample.

    Uses ``(4 u(delta) - u(2 delta)) / (2 delta)`` with ``delta = 2h`` and
    tensor quadratic interpolation, so the result is second order in ``h``.
    Samples whose stencil leaves the node set fall back to multilinear
    interpolation and ``u(delta) / delta``, and are flagged.

    Returns:
        (derivative, flagged): arrays over the boundary samples; ``derivative``
        has trailing dimensions matching ``field``'s.
    """
    if weights.boundary_points is None:
        raise ValueError("quadrature weights carry no boundary samples")
    delta = 2.0 * grid.h if delta is None else delta
    p, nrm = weights.boundary_points, weights.boundary_normals
    u1, ok1 = grid.interpolate(field, p + delta * nrm, order=2)
    u2, ok2 = grid.interpolate(field, p + 2 * delta * nrm, order=2)
    second = (4.0 * u1 - u2) / (2.0 * delta)
    first = u1 / delta
    good = (ok1 & ok2).reshape((-1,) + (1,) * (np.ndim(field) - 1))
    return np.where(good, second, first), ~(ok1 & ok2)
