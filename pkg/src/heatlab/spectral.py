"""Zeta functions on the real axis and exit-time moments.

The series routes sum over the computed spectrum; the Mellin route integrates
the heat content curve in time; the elliptic route solves the exit-time
recursion ``-Lap u_1 = 1``, ``-Lap u_j = j u_{j-1}`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg as sla
from scipy.special import gamma, gammaincc

from .heat import heat_content_spectral, heat_content_timestep
from .eigensolve import TailTooLarge, t_min, tail_bound


@dataclass(frozen=True)
class SpectralValue:
    z: float
    value: float
    route: str
    err_est: float

    def to_dict(self):
        return {"z": self.z, "value": self.value, "route": self.route, "err_est": self.err_est}


def _unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def weyl_counting(lam, dim, volume, perimeter):
    """Two-term Weyl law ``N(lambda)`` for the Dirichlet problem."""
    a = _unit_ball_volume(dim) * volume / (2 * math.pi) ** dim
    b = _unit_ball_volume(dim - 1) * perimeter / (4 * (2 * math.pi) ** (dim - 1))
    return a * lam ** (dim / 2) - b * lam ** ((dim - 1) / 2)


def _weyl_coeffs(dim, volume, perimeter):
    a = _unit_ball_volume(dim) * volume / (2 * math.pi) ** dim
    b = _unit_ball_volume(dim - 1) * perimeter / (4 * (2 * math.pi) ** (dim - 1))
    return a, b


def zeta(basis, z, dim, volume, perimeter):
    """``sum lambda_k^{-z}`` over the computed spectrum plus a Weyl-law tail.

    The tail ``sum_{k>K}`` is integrated by parts against the two-term Weyl
    counting function with the midpoint convention ``N(lambda_K) = K - 1/2``;
    ``err_est`` bounds the effect of the counting-function fluctuation seen in
    the upper half of the computed spectrum.
    """
    if not z > dim / 2 + 0.25:
        raise ValueError(f"z={z} too close to the pole at n/2 = {dim / 2}")
    lam = basis.lambdas
    K = len(lam)
    partial = float(np.sum(lam ** (-z)))
    Lam = float(lam[-1])
    a, b = _weyl_coeffs(dim, volume, perimeter)
    p1, p2 = dim / 2, (dim - 1) / 2
    tail = z * a * Lam ** (p1 - z) / (z - p1) - z * b * Lam ** (p2 - z) / (z - p2) - (K - 0.5) * Lam ** (-z)
    k = np.arange(1, K + 1)
    upper = k > K // 2
    fluct = float(np.max(np.abs(k[upper] - 0.5 - weyl_counting(lam[upper], dim, volume, perimeter))))
    err = 2.0 * fluct * Lam ** (-z)
    return SpectralValue(float(z), partial + tail, "series", err)


def content_zeta(basis, z, volume=None):
    """``sum m_k^2 / lambda_k^z``; tail bounded via the Parseval remainder of the moments."""
    if not z > 0.25:
        raise ValueError("content zeta needs z > 0.25")
    m2 = basis.moments() ** 2
    vol = float(basis.mass.sum()) if volume is None else volume
    partial = float(np.sum(m2 * basis.lambdas ** (-z)))
    rest = max(vol - float(m2.sum()), 0.0)
    return SpectralValue(float(z), partial, "series", rest * float(basis.lambdas[-1]) ** (-z))


# -- Mellin quadrature over the heat content curve ----------------------------


def _log_gauss_nodes(t_lo, t_hi, per_decade=6, order=8):
    """Composite Gauss-Legendre nodes/weights in ``log t`` over ``[t_lo, t_hi]``."""
    n_pan = max(1, int(math.ceil(per_decade * math.log10(t_hi / t_lo))))
    edges = np.linspace(math.log(t_lo), math.log(t_hi), n_pan + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        nodes.append(np.exp(s))
        wts.append(0.5 * (b - a) * w * np.exp(s))  # dt = t d(log t)
    return np.concatenate(nodes), np.concatenate(wts)


@dataclass
class MellinCurve:
    """Heat content sampled on Gauss nodes plus the data for both end corrections."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    err: np.ndarray
    t_lo: float
    t_hi: float
    volume: float
    perimeter: float
    lam1: float
    amp: float  # H(t) ~ amp * exp(-lam1 t) beyond t_hi
    dim: int
    kind: str = "content"  # or "trace"
    euler_characteristic: Optional[float] = None


def mellin_curve(basis, op, volume, perimeter, dim=2, t_lo=1e-4, t_hi=None, rtol=1e-5):
    """Sample H on log-Gauss nodes: spectral where the tail is negligible, stepping below."""
    lam1 = float(basis.lambdas[0])
    if t_hi is None:
        t_hi = 40.0 / lam1
    nodes, wts = _log_gauss_nodes(t_lo, t_hi)
    vals = np.empty(len(nodes))
    errs = np.empty(len(nodes))
    need = []
    for i, t in enumerate(nodes):
        try:
            c = heat_content_spectral(basis, [t], dim)
        except TailTooLarge:
            need.append(i)
            continue
        if c.err_est[0] > 1e-9 * c.values[0]:
            need.append(i)
            continue
        vals[i], errs[i] = c.values[0], c.err_est[0]
    if need:
        c = heat_content_timestep(op, nodes[need], rtol=rtol)
        vals[need], errs[need] = c.values, c.err_est
    # exponential model fitted on the last decade
    last = nodes > t_hi / 10
    amp = float(np.exp(np.mean(np.log(vals[last]) + lam1 * nodes[last])))
    return MellinCurve(nodes, wts, vals, errs, t_lo, t_hi, volume, perimeter, lam1, amp, dim)


def trace_curve(basis, volume, perimeter, dim=2, t_lo=None, t_hi=None, euler_characteristic=None):
    """Heat trace on log-Gauss nodes over the window where its series tail is negligible."""
    if dim != 2:
        raise ValueError("the small-time trace expansion is implemented for n = 2")
    lam1 = float(basis.lambdas[0])
    t_lo = t_min(basis, dim, "trace", 1e-10) if t_lo is None else t_lo
    t_hi = 40.0 / lam1 if t_hi is None else t_hi
    nodes, wts = _log_gauss_nodes(t_lo, t_hi)
    vals = np.exp(-np.outer(nodes, basis.lambdas)).sum(axis=1)
    errs = np.array([tail_bound(basis, t, "trace", dim) for t in nodes])
    last = nodes > t_hi / 10
    amp = float(np.exp(np.mean(np.log(vals[last]) + lam1 * nodes[last])))
    return MellinCurve(nodes, wts, vals, errs, t_lo, t_hi, volume, perimeter, lam1, amp, dim,
                       "trace", euler_characteristic)


def _low_piece(curve, z):
    """``int_0^{t_lo} t^{z-1} F(t) dt`` from the small-time expansion of ``F``."""
    t0 = curve.t_lo
    if curve.kind == "trace":
        # Z ~ |Omega| / (4 pi t) - |dOmega| / (8 sqrt(pi t)) + chi / 6
        lo = curve.volume / (4 * math.pi) * t0 ** (z - 1) / (z - 1)
        lo -= curve.perimeter / (8 * math.sqrt(math.pi)) * t0 ** (z - 0.5) / (z - 0.5)
        const = t0**z / (6 * z)
        if curve.euler_characteristic is None:
            return lo, const + t0 ** (z + 0.5) / (z + 0.5)
        return lo + curve.euler_characteristic * const, t0 ** (z + 0.5) / (z + 0.5)
    # H ~ |Omega| - (2/sqrt(pi)) |dOmega| t^{1/2} near t = 0
    c1 = 2.0 / math.sqrt(math.pi) * curve.perimeter if curve.dim > 1 else 2.0 / math.sqrt(math.pi) * 2
    lo = curve.volume * t0**z / z - c1 * t0 ** (z + 0.5) / (z + 0.5)
    return lo, abs(c1 * t0 ** (z + 0.5) / (z + 0.5))


def mellin_integral(curve, z):
    """``int_0^inf t^{z-1} F(t) dt`` with analytic end pieces (``F`` = H or Z)."""
    body = float(np.sum(curve.weights * curve.nodes ** (z - 1) * curve.values))
    berr = float(np.sum(curve.weights * curve.nodes ** (z - 1) * curve.err))
    lo, lo_err = _low_piece(curve, z)
    x = curve.lam1 * curve.t_hi
    hi = curve.amp * curve.lam1 ** (-z) * gamma(z) * gammaincc(z, x)
    return body + lo + hi, berr + lo_err + 0.1 * abs(hi)


def mellin_zeta(curve, z):
    """Zeta value by Mellin transform of the sampled curve (content or trace)."""
    val, err = mellin_integral(curve, z)
    g = math.gamma(z)
    return SpectralValue(float(z), float(val / g), "mellin", float(err / g))


def exit_moment_quadrature(curve, k):
    """``k int t^{k-1} H(t) dt``."""
    val, err = mellin_integral(curve, k)
    return SpectralValue(float(k), float(k * val), "mellin", float(k * err))


def exit_moment_elliptic(op, k, weights=None):
    """Integral of ``u_k`` from ``C u_1 = W 1``, ``C u_j = j W u_{j-1}``.

    One sparse factorization is reused for all levels.
    """
    if k not in (1, 2, 3) and not (isinstance(k, int) and k >= 1):
        raise ValueError("k must be a positive integer")
    lu = sla.splu(op.stiffness.tocsc())
    w = op.mass if weights is None else weights
    u = np.ones(op.size)
    for j in range(1, k + 1):
        u = lu.solve(j * op.mass * u)
    return SpectralValue(float(k), float(w @ u), "elliptic", 0.0)


def torsion_field(op):
    """Node values of the torsion function ``-Lap u = 1``."""
    return sla.splu(op.stiffness.tocsc()).solve(op.mass.copy())


def exit_moment(k, via, **inputs):
    """Dispatch to the quadrature (``curve=``) or elliptic (``op=``) route."""
    if k not in (1, 2, 3):
        raise ValueError("exit moments are provided for k in {1, 2, 3}")
    if via == "quadrature":
        return exit_moment_quadrature(inputs["curve"], k)
    if via == "elliptic":
        return exit_moment_elliptic(inputs["op"], k)
    raise ValueError(f"unknown route {via!r}")


def moments_agree(a, b, rtol=0.02):
    """Flag for the two-route comparison: relative gap within ``rtol``."""
    return abs(a.value - b.value) <= rtol * abs(b.value)
