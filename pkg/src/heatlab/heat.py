"""Heat kernel, heat trace, heat content and the heat field.

Two independent routes are provided for heat content: the truncated
eigen-expansion, and Crank-Nicolson time stepping of the cut-cell pencil
``W psi' = -C psi`` from ``psi(0) = 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .eigensolve import TailTooLarge, tail_bound


@dataclass
class HeatContentCurve:
    times: np.ndarray
    values: np.ndarray
    route: str
    err_est: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "H", "err_est", "route"])
            for t, v, e in zip(self.times, self.values, self.err_est):
                wr.writerow([f"{t:.17g}", f"{v:.17g}", f"{e:.17g}", self.route])


@dataclass
class HeatField:
    tau: float
    u: np.ndarray


# -- spectral route -----------------------------------------------------------


def _kernel_tail(basis, t, dim):
    return tail_bound(basis, t, "kernel", dim)


def nodal_values(basis, x):
    """Eigenfunction values at points: exact rows for nodes, interpolated otherwise."""
    grid = basis.grid
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ids = grid.locate(x)
    vals = np.empty((len(x), basis.K))
    on = ids >= 0
    vals[on] = basis.phis[ids[on]]
    if np.any(~on):
        vals[~on], _ = grid.interpolate(basis.phis, x[~on])
    return vals


def heat_kernel(basis, x, y, t, dim=2, check_tail=True):
    """``p(x, y, t) = sum_k e^{-lambda_k t} phi_k(x) phi_k(y)`` for paired points.

    Returns:
        (values, tail): kernel values for each pair and the truncation bound.

    Raises:
        TailTooLarge: when ``t`` is below the validity range of the basis.
    """
    tail = _kernel_tail(basis, t, dim) if check_tail else 0.0
    fx = nodal_values(basis, x)
    fy = nodal_values(basis, y)
    e = np.exp(-basis.lambdas * t)
    # phi(x) * phi(y) first: multiplication commutes, so p(x, y) == p(y, x) bitwise
    return (fx * fy) @ e, tail


def kernel_by_ids(basis, xi, yi, t):
    """Kernel for paired node ids; no interpolation."""
    e = np.exp(-basis.lambdas * t)
    P = basis.phis
    return (P[xi] * P[yi]) @ e


def heat_trace(basis, t, dim=2):
    """``Z(t) = sum e^{-lambda_k t}`` plus its tail bound."""
    tail = tail_bound(basis, t, "trace", dim)
    return float(np.sum(np.exp(-basis.lambdas * t))), tail


def heat_content_spectral(basis, times, dim=2, weights=None):
    """``H(t) = sum e^{-lambda_k t} m_k^2`` with moments from the volume weights."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    m2 = basis.moments(weights) ** 2
    vol = float(basis.mass.sum() if weights is None else np.sum(weights))
    vals, errs = [], []
    for t in times:
        errs.append(tail_bound(basis, t, "content", dim, volume=vol))
        vals.append(float(np.sum(np.exp(-basis.lambdas * t) * m2)))
    return HeatContentCurve(times, np.array(vals), "spectral", np.array(errs))


def heat_field_spectral(basis, tau):
    m = basis.moments()
    return HeatField(tau, basis.phis @ (np.exp(-basis.lambdas * tau) * m))


# -- time stepping ------------------------------------------------------------


class _Stepper:
    """Crank-Nicolson for ``W psi' = -C psi`` with factorizations cached per step size."""

    def __init__(self, op):
        self.C = op.stiffness.tocsc()
        self.W = sp.diags(op.mass).tocsc()
        self._lu = {}

    def _factor(self, dt):
        key = float(dt)
        if key not in self._lu:
            if len(self._lu) > 8:
                self._lu.pop(next(iter(self._lu)))
            self._lu[key] = sla.splu((self.W + 0.5 * dt * self.C).tocsc())
        return self._lu[key]

    def implicit_euler(self, psi, dt):
        # backward Euler with step dt/2 shares the CN matrix W + dt/2 C
        return self._factor(dt).solve(self.W @ psi)

    def crank_nicolson(self, psi, dt):
        rhs = self.W @ psi - 0.5 * dt * (self.C @ psi)
        return self._factor(dt).solve(rhs)


def _schedule(times, h, level):
    """Step sizes per segment: ``min(h, t_i / 64) / 2^level`` rounded to fit the segment."""
    segs = []
    prev = 0.0
    for t in times:
        length = t - prev
        if length <= 0:
            segs.append((0, 0.0))
            continue
        target = min(h, t / 64.0) / 2**level
        n = max(1, int(math.ceil(length / target - 1e-9)))
        segs.append((n, length / n))
        prev = t
    return segs


def evolve(op, times, level=0, psi0=None, callback=None):
    """Advance ``psi(0) = 1`` to each of the ascending ``times``; yields node fields.

    The first step is replaced by two backward-Euler half steps (Rannacher
    startup) to damp the mismatch between initial and boundary data.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be positive and ascending")
    stepper = _Stepper(op)
    psi = np.ones(op.size) if psi0 is None else np.array(psi0, dtype=float)
    started = False
    t_now = 0.0
    out = []
    for (n, dt), t in zip(_schedule(times, op.h, level), times):
        for _ in range(n):
            if not started:
                psi = stepper.implicit_euler(psi, dt)
                psi = stepper.implicit_euler(psi, dt)
                started = True
            else:
                psi = stepper.crank_nicolson(psi, dt)
            t_now += dt
            if callback is not None:
                callback(t_now, psi)
        out.append(psi.copy())
    return out


def heat_content_timestep(op, times, weights=None, rtol=1e-4, max_level=6):
    """Time-stepped heat content with step halving until successive runs agree.

    ``err_est`` is the Richardson estimate ``|H_fine - H_coarse| / 3``; the
    returned values are the finest run.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    order = np.argsort(times)
    ts = times[order]
    w = op.mass if weights is None else weights
    prev = None
    for level in range(max_level + 1):
        cur = np.array([w @ f for f in evolve(op, ts, level)])
        if prev is not None:
            change = np.abs(cur - prev)
            if np.all(change <= rtol * np.abs(cur)):
                break
        prev = cur
    else:
        raise RuntimeError("time stepping did not settle within the step-halving budget")
    err = change / 3.0
    vals = np.empty_like(cur)
    errs = np.empty_like(err)
    vals[order], errs[order] = cur, err
    return HeatContentCurve(times, vals, "timestep", errs)


def heat_field(op, tau, level=1):
    """Node field ``u(x, tau) = integral of p(x, y, tau) dy`` by time stepping."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return HeatField(float(tau), evolve(op, [tau], level)[0])


def stitched_content(basis, op, times, dim=2, rtol=1e-4):
    """Spectral values where the tail is negligible, time stepping below that."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = np.empty(len(times))
    errs = np.empty(len(times))
    small = []
    for i, t in enumerate(times):
        try:
            c = heat_content_spectral(basis, [t], dim)
            if c.err_est[0] > 1e-9 * c.values[0]:
                raise TailTooLarge("tail not negligible")
            vals[i], errs[i] = c.values[0], c.err_est[0]
        except TailTooLarge:
            small.append(i)
    if small:
        c = heat_content_timestep(op, times[small], rtol=rtol)
        vals[small], errs[small] = c.values, c.err_est
    return HeatContentCurve(times, vals, "stitched", errs)
