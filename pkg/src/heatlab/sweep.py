"""Displacement experiments on the eccentric annulus.

For each obstacle displacement ``s`` the sweep computes the heat content
``H(s, t)``, the heat trace ``Z(s, t)`` and the two lowest eigenvalues, at the
requested spacing and optionally at ``h / sqrt(2)``. Monotonicity verdicts
compare consecutive differences in ``s`` against a Richardson noise estimate
built from the two resolutions.

The boundary-integral derivative of ``H`` under obstacle translation is
evaluated by ``savo_derivative`` and compared with a centered difference.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .discretize import assemble_laplacian, build_grid, normal_derivative, quadrature
from .eigensolve import TailTooLarge, compute_basis
from .geometry import EccentricAnnulus
from .heat import evolve, heat_content_spectral, heat_trace, stitched_content
from .spectral import exit_moment_elliptic
from .verify import PRECISION

log = logging.getLogger(__name__)

CLAIMS = ("content_monotone", "D1", "D2", "D3")


@dataclass
class SweepConfig:
    r1: float = 0.25
    r2: float = 1.0
    s_grid: tuple = (0.0, 0.15, 0.3, 0.45, 0.6)
    t_grid: tuple = (0.05, 0.1, 0.5, 1.0)
    h: float = 1 / 128
    K: int = 120
    confirm: bool = True  # rerun at h / sqrt(2) for the Richardson estimate
    z_times: tuple = (0.1, 0.5)

    def __post_init__(self):
        self.s_grid = tuple(float(s) for s in self.s_grid)
        self.t_grid = tuple(float(t) for t in self.t_grid)
        if list(self.s_grid) != sorted(set(self.s_grid)):
            raise ValueError("s_grid must be strictly ascending")
        if any(t <= 0 for t in self.t_grid):
            raise ValueError("t_grid must be positive")
        if self.s_grid and (self.s_grid[0] < 0 or self.s_grid[-1] >= self.r2 - self.r1 - 4 * self.h):
            raise ValueError("s_grid must lie in [0, r2 - r1 - 4h)")

    @staticmethod
    def default_s_grid(r1, r2, n=5):
        return tuple(np.linspace(0.0, 0.8 * (r2 - r1), n))


@dataclass
class Column:
    """All quantities for one displacement at one spacing."""

    s: float
    h: float
    H: list
    H_err: list
    Z: list
    lambda1: float
    lambda2: float
    volume: float
    reason: str = ""

    @property
    def ok(self):
        return not self.reason


def compute_column(r1, r2, s, t_grid, h, K, z_times=()):
    """Build the annulus at displacement ``s`` and evaluate every sweep quantity."""
    times = sorted(set(t_grid) | set(z_times))
    try:
        dom = EccentricAnnulus(r1, r2, s)
        grid = build_grid(dom, h)
        op = assemble_laplacian(grid, dom)
        basis = compute_basis(op, min(K, grid.size // 4), grid)
        curve = stitched_content(basis, op, list(t_grid))
        Z = []
        for t in times:
            try:
                Z.append(heat_trace(basis, t)[0])
            except TailTooLarge:
                Z.append(math.nan)
        zmap = dict(zip(times, Z))
        return Column(s, h, curve.values.tolist(), curve.err_est.tolist(),
                      [zmap[t] for t in times], float(basis.lambdas[0]), float(basis.lambdas[1]),
                      float(op.mass.sum()))
    except Exception as exc:  # recorded per column, the sweep carries on
        log.warning("column s=%g failed: %s", s, exc)
        n = len(t_grid)
        return Column(s, h, [math.nan] * n, [math.nan] * n, [math.nan] * len(times),
                      math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def _column_args(args):
    return compute_column(*args)


@dataclass
class SweepResult:
    s_grid: np.ndarray
    t_grid: np.ndarray
    z_times: np.ndarray
    H: np.ndarray  # (s, t) at the requested spacing
    err: np.ndarray  # (s, t) Richardson + time-stepping estimate
    Z: np.ndarray  # (s, z_times and t_grid merged), see z_grid
    z_grid: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    volume: np.ndarray
    verdicts: dict
    details: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def z_at(self, t):
        j = int(np.argmin(np.abs(self.z_grid - t)))
        return self.Z[:, j]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s", "t", "H", "err", "Z", "lambda1", "lambda2"])
            for i, s in enumerate(self.s_grid):
                for j, t in enumerate(self.t_grid):
                    wr.writerow([_f(s), _f(t), _f(self.H[i, j]), _f(self.err[i, j]),
                                 _f(self.z_at(t)[i]), _f(self.lambda1[i]), _f(self.lambda2[i])])

    def verdict_json(self):
        return {"verdicts": self.verdicts, "details": self.details, "failures": self.failures,
                "volume": [_f(v) for v in self.volume]}


def _f(x):
    return f"{float(x):.17g}"


# -- verdict logic -------------------------------------------------------------


def monotone_verdict(values, noise, direction=1, strict=True):
    """Verdict for ``direction * (v[i+1] - v[i]) > 0`` along a sequence.

    The noise of a difference is the sum of the two endpoint noises. Strict
    claims are certified when every margin exceeds its noise; non-strict
    claims likewise (a positive margin above noise certifies non-decrease).
    Any margin below ``-3 * noise`` is a violation.
    """
    v = np.asarray(values, dtype=float)
    e = np.asarray(noise, dtype=float)
    margin = direction * np.diff(v)
    nz = e[:-1] + e[1:]
    if np.any(~np.isfinite(margin)):
        return "consistent", margin, nz
    if np.any(margin < -3 * nz):
        return "violated", margin, nz
    if np.all(margin > nz):
        return "certified", margin, nz
    return "consistent", margin, nz


def _combine(verdicts):
    if "violated" in verdicts:
        return "violated"
    if all(v == "certified" for v in verdicts):
        return "certified"
    return "consistent"


def richardson_noise(coarse, fine, ratio=2.0):
    """Error estimates of both levels for a second-order method.

    With spacings ``h`` and ``h / sqrt(ratio)`` the leading error halves, so
    the difference equals the fine-level error and ``ratio / (ratio - 1)``
    times it is the coarse-level error.
    """
    d = np.abs(np.asarray(coarse) - np.asarray(fine))
    return ratio / (ratio - 1.0) * d, d


def run_sweep(cfg: SweepConfig, jobs=1):
    """Evaluate all columns (in parallel when ``jobs > 1``) and derive verdicts."""
    levels = [cfg.h] + ([cfg.h / math.sqrt(2)] if cfg.confirm else [])
    tasks = [(cfg.r1, cfg.r2, s, cfg.t_grid, h, cfg.K, cfg.z_times) for h in levels for s in cfg.s_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cols = list(pool.map(_column_args, tasks))
    else:
        cols = [_column_args(a) for a in tasks]
    n = len(cfg.s_grid)
    by_level = [cols[i * n:(i + 1) * n] for i in range(len(levels))]
    z_grid = np.array(sorted(set(cfg.t_grid) | set(cfg.z_times)))

    def grab(lv, attr):
        return np.array([getattr(c, attr) for c in by_level[lv]], dtype=float)

    H = [grab(lv, "H") for lv in range(len(levels))]
    Herr_t = [grab(lv, "H_err") for lv in range(len(levels))]
    Z = [grab(lv, "Z") for lv in range(len(levels))]
    l1 = [grab(lv, "lambda1") for lv in range(len(levels))]
    l2 = [grab(lv, "lambda2") for lv in range(len(levels))]

    if cfg.confirm:
        nH = richardson_noise(H[0], H[1])
        nZ = richardson_noise(Z[0], Z[1])
        n1 = richardson_noise(l1[0], l1[1])
        n2 = richardson_noise(l2[0], l2[1])
    else:
        zero = lambda a: (np.zeros_like(a),)  # noqa: E731
        nH, nZ, n1, n2 = zero(H[0]), zero(Z[0]), zero(l1[0]), zero(l2[0])
    noiseH = [nH[lv] + Herr_t[lv] for lv in range(len(levels))]

    verdicts, details = {}, {}
    # strict increase of H in s at every t
    per = []
    for lv in range(len(levels)):
        for j, t in enumerate(cfg.t_grid):
            v, m, e = monotone_verdict(H[lv][:, j], noiseH[lv][:, j], +1)
            per.append(v)
            details[f"content_monotone/h{lv}/t={t:g}"] = {"verdict": v, "margin": m.tolist(), "noise": e.tolist()}
    verdicts["content_monotone"] = _combine(per)
    # strict decrease of lambda_1
    per = []
    for lv in range(len(levels)):
        v, m, e = monotone_verdict(l1[lv], n1[lv], -1)
        per.append(v)
        details[f"D1/h{lv}"] = {"verdict": v, "margin": m.tolist(), "noise": e.tolist()}
    verdicts["D1"] = _combine(per)
    # lambda_2 maximal at s = 0 (argmax-level)
    per = []
    for lv in range(len(levels)):
        lam = l2[lv]
        if np.all(np.isnan(lam)) or (len(lam) > 1 and np.all(np.isnan(lam[1:]))):
            per.append("consistent")
            details[f"D2/h{lv}"] = {"verdict": "consistent", "argmax_s": math.nan, "margin": math.nan,
                                    "noise": math.nan}
            continue
        arg = int(np.nanargmax(lam))
        gap = lam[0] - np.nanmax(lam[1:]) if len(lam) > 1 else math.inf
        nz = n2[lv][0] + np.nanmax(n2[lv][1:]) if len(lam) > 1 else 0.0
        if arg != 0 and gap < -3 * nz:
            v = "violated"
        elif arg == 0 and gap > nz:
            v = "certified"
        else:
            v = "consistent"
        per.append(v)
        details[f"D2/h{lv}"] = {"verdict": v, "argmax_s": float(cfg.s_grid[arg]), "margin": float(gap),
                                "noise": float(nz)}
    verdicts["D2"] = _combine(per)
    # non-decrease of Z at the requested times
    per = []
    for lv in range(len(levels)):
        for t in cfg.z_times:
            j = int(np.argmin(np.abs(z_grid - t)))
            v, m, e = monotone_verdict(Z[lv][:, j], nZ[lv][:, j], +1, strict=False)
            per.append(v)
            details[f"D3/h{lv}/t={t:g}"] = {"verdict": v, "margin": m.tolist(), "noise": e.tolist()}
    verdicts["D3"] = _combine(per)

    failures = {f"s={c.s:g},h={c.h:.6g}": c.reason for c in cols if not c.ok}
    return SweepResult(np.array(cfg.s_grid), np.array(cfg.t_grid), np.array(cfg.z_times),
                       H[0], noiseH[0], Z[0], z_grid, l1[0], l2[0], grab(0, "volume"),
                       verdicts, details, failures)


# -- boundary-integral derivative ---------------------------------------------------


@dataclass
class SavoReport:
    s0: float
    t: float
    h: float
    boundary_value: float
    fd_value: float
    rel_gap: float
    fd_noise: float = 0.0
    n_resolved: int = 0

    def to_dict(self):
        return asdict(self)


class FDNoiseError(RuntimeError):
    """Finite-difference noise exceeds the signal."""


def _content_at(dom, h, t, K=30):
    grid = build_grid(dom, h)
    op = assemble_laplacian(grid, dom)
    basis = compute_basis(op, min(K, grid.size // 4), grid)
    c = heat_content_spectral(basis, [t])
    return float(c.values[0]), float(c.err_est[0])


def boundary_derivative(domain, t, h, n_theta=24, resolve=4.0, level=1):
    """``-int_0^t int_{dB} <V, N> u_N(x, tau) u_N(x, t - tau) dS dtau``.

    ``N`` is the normal pointing out of the obstacle into the domain. Near
    ``tau = 0`` the normal derivative behaves like ``1 / sqrt(pi tau)``; the
    substitution ``tau = t sin^2(theta)`` removes the endpoint singularity and
    the smooth factor ``gamma = sqrt(pi tau) u_N`` is integrated by
    Gauss-Legendre in ``theta``. Nodes with ``sqrt(tau) < resolve * h`` are not
    resolved by the grid; there ``gamma`` is extrapolated linearly in
    ``sqrt(tau)`` from the three smallest resolved nodes.

    Returns:
        (value, n_resolved)
    """
    grid = build_grid(domain, h)
    op = assemble_laplacian(grid, domain)
    q = quadrature(grid, domain, obstacle_boundary=True)
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = (x + 1) * math.pi / 4
    wt = w * math.pi / 4
    taus = t * np.sin(theta) ** 2
    fields = np.stack(evolve(op, taus, level=level), axis=1)
    uN, flagged = normal_derivative(fields, grid, q)
    if np.any(flagged):
        log.warning("%d boundary samples used the first-order fallback", int(flagged.sum()))
    gam = uN * np.sqrt(math.pi * taus)[None, :]
    root = np.sqrt(taus)
    resolved = root >= resolve * h
    good = np.flatnonzero(resolved)
    if len(good) < 3:
        raise ValueError("too few resolved time nodes; refine h or raise t")
    base = good[:3]
    A = np.vstack([np.ones(3), root[base]]).T
    coef = np.linalg.lstsq(A, gam[:, base].T, rcond=None)[0]
    for j in np.flatnonzero(~resolved):
        gam[:, j] = coef[0] + coef[1] * root[j]
    VN = q.boundary_normals @ np.asarray(domain.reflection.normal)
    inner = (q.boundary_weights * VN) @ (gam * gam[:, ::-1])  # theta -> pi/2 - theta swaps tau, t - tau
    # dtau / sqrt(tau (t - tau)) = 2 dtheta
    return -(2.0 / math.pi) * float(np.sum(wt * inner)), int(resolved.sum())


def savo_derivative(domain, t, h, delta_eps=0.02, n_theta=24):
    """Compare the boundary-integral derivative with a centered difference in ``s``.

    Raises:
        FDNoiseError: when the difference of the two contents is not larger
            than their combined error estimates.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    s0 = domain.s
    if s0 - delta_eps < 0 or s0 + delta_eps >= domain.r2 - domain.r1:
        raise ValueError("s0 +/- delta_eps must stay admissible")
    value, nres = boundary_derivative(domain, t, h, n_theta)
    hp, ep = _content_at(domain.with_displacement(s0 + delta_eps), h, t)
    hm, em = _content_at(domain.with_displacement(s0 - delta_eps), h, t)
    noise = ep + em + PRECISION * (abs(hp) + abs(hm))
    if abs(hp - hm) <= noise:
        raise FDNoiseError("finite-difference noise exceeds signal; increase delta_eps or refine h")
    fd = (hp - hm) / (2 * delta_eps)
    return SavoReport(s0, t, h, value, fd, abs(value - fd) / abs(fd), noise / (2 * delta_eps), nres)


# -- exit-time moments ------------------------------------------------------------


def concentric_torsion_integral(r1, r2, n=20_000):
    """``int w dA`` for the concentric-annulus torsion function, by the radial closed form."""
    r = np.linspace(r1, r2, n + 1)
    wv = (r2**2 - r**2) / 4 + (r2**2 - r1**2) * np.log(r / r2) / (4 * math.log(r2 / r1))
    f = 2 * math.pi * r * wv
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(r)))


@dataclass
class MomentTable:
    s_grid: list
    k_list: list
    values: dict  # k -> list over s
    verdicts: dict  # k -> verdict

    def to_dict(self):
        return {"s_grid": self.s_grid, "k_list": self.k_list,
                "values": {str(k): v for k, v in self.values.items()},
                "verdicts": {str(k): v for k, v in self.verdicts.items()}}


def exit_moment_sweep(cfg: SweepConfig, k_list=(1, 2, 3)):
    """Elliptic-route exit moments per displacement, with h vs h/sqrt(2) noise."""
    levels = [cfg.h] + ([cfg.h / math.sqrt(2)] if cfg.confirm else [])
    vals = {lv: {k: [] for k in k_list} for lv in range(len(levels))}
    for lv, h in enumerate(levels):
        for s in cfg.s_grid:
            dom = EccentricAnnulus(cfg.r1, cfg.r2, s)
            grid = build_grid(dom, h)
            op = assemble_laplacian(grid, dom)
            for k in k_list:
                vals[lv][k].append(exit_moment_elliptic(op, k).value)
    verdicts = {}
    for k in k_list:
        per = []
        if cfg.confirm:
            nc, nf = richardson_noise(vals[0][k], vals[1][k])
            noise = [nc, nf]
        else:
            noise = [np.zeros(len(cfg.s_grid))]
        for lv in range(len(levels)):
            per.append(monotone_verdict(vals[lv][k], noise[lv], +1)[0])
        verdicts[k] = _combine(per)
    return MomentTable(list(cfg.s_grid), list(k_list), vals[0], verdicts)


def write_sweep(result: SweepResult, csv_path, json_path: Optional[str] = None):
    result.to_csv(csv_path)
    if json_path is None:
        json_path = str(csv_path).rsplit(".", 1)[0] + ".verdicts.json"
    with open(json_path, "w") as fh:
        json.dump(result.verdict_json(), fh, indent=2, sort_keys=True)
    return json_path
