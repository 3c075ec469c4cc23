"""Lowest Dirichlet eigenpairs of the cut-cell pencil."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as sla

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-8


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Ascending eigenvalues and mass-orthonormal eigenvectors (columns of ``phis``)."""

    lambdas: np.ndarray
    phis: np.ndarray
    mass: np.ndarray
    residuals: np.ndarray
    grid: object = None

    @property
    def K(self):
        return len(self.lambdas)

    def moments(self, weights=None):
        """``m_k = sum_nodes phi_k * w``."""
        w = self.mass if weights is None else weights
        return self.phis.T @ w

    def gram(self):
        return self.phis.T @ (self.mass[:, None] * self.phis)


def _fix_signs(phis, lambdas):
    # phi_1 positive; others positive at their first largest-magnitude node
    for k in range(phis.shape[1]):
        col = phis[:, k]
        if k == 0:
            s = np.sign(col.sum())
        else:
            s = np.sign(col[np.argmax(np.abs(col))])
        if s < 0:
            phis[:, k] = -col
    return phis


def _orthonormalize_clusters(lambdas, phis, mass):
    """Mass-orthonormalize inside clusters of numerically equal eigenvalues."""
    k = 0
    K = len(lambdas)
    while k < K:
        j = k + 1
        while j < K and abs(lambdas[j] - lambdas[k]) <= CLUSTER_RTOL * abs(lambdas[k]):
            j += 1
        block = phis[:, k:j]
        G = block.T @ (mass[:, None] * block)
        L = np.linalg.cholesky(G)
        phis[:, k:j] = np.linalg.solve(L, block.T).T
        k = j
    return phis


def compute_basis(op, K, grid=None, tol=0.0, maxiter=None, seed=0):
    """``K`` smallest eigenpairs of ``C phi = lambda W phi`` via shift-invert Lanczos.

    Eigenvectors are normalized so ``sum phi_k^2 w = 1``; ``phi_1 > 0``. The
    Lanczos start vector is drawn from ``seed``, so repeated calls agree bitwise.

    Raises:
        EigenError: when ``K`` exceeds a quarter of the node count or ARPACK
            fails to converge.
    """
    n = op.size
    if K < 1 or K > n // 4:
        raise EigenError(f"K={K} must lie in [1, {n // 4}] for {n} nodes")
    M = _diag(op.mass)
    v0 = np.random.default_rng(seed).uniform(0.5, 1.5, n)
    try:
        vals, vecs = sla.eigsh(op.stiffness.tocsc(), k=K, M=M, sigma=0.0, which="LM",
                               tol=tol, maxiter=maxiter, v0=v0)
    except sla.ArpackNoConvergence as exc:
        raise EigenError(f"eigensolver did not converge: {len(exc.eigenvalues)} of {K} pairs") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(np.einsum("ik,i,ik->k", vecs, op.mass, vecs))
    vecs = _orthonormalize_clusters(vals, vecs, op.mass)
    vecs = _fix_signs(vecs, vals)
    R = op.stiffness @ vecs - (op.mass[:, None] * vecs) * vals
    res = np.sqrt(np.einsum("ik,i->k", R * R, 1.0 / op.mass))
    if np.any(res > 1e-8 * np.maximum(vals, 1.0)):
        log.warning("eigenpair residuals up to %.3g", float(np.max(res / vals)))
    return EigenBasis(vals, vecs, op.mass.copy(), res, grid)


def _diag(w):
    import scipy.sparse as sp

    return sp.diags(w).tocsc()


def default_K(n_nodes):
    return max(1, min(300, n_nodes // 10))


def weyl_ratio(basis, domain, k):
    """``lambda_k^{n/2} |Omega| / (k (4 pi)^{n/2} Gamma((n+2)/2))``; tends to 1."""
    if not 1 <= k <= basis.K:
        raise ValueError(f"k={k} outside the computed range 1..{basis.K}")
    n = domain.dim
    if basis.grid is not None and k > basis.grid.size // 10:
        warnings.warn("k beyond the resolved part of the discrete spectrum")
    lam = basis.lambdas[k - 1]
    return lam ** (n / 2) * domain.volume / (k * (4 * math.pi) ** (n / 2) * math.gamma((n + 2) / 2))


class TailTooLarge(ValueError):
    """The truncated series is not trustworthy at this time."""


def _weyl_fit(basis, dim):
    """Constant ``c`` with ``lambda_k >= c k^{2/n}`` over the upper half of the spectrum."""
    k = np.arange(1, basis.K + 1)
    half = k > basis.K // 2
    return float(np.min(basis.lambdas[half] / k[half] ** (2.0 / dim)))


def tail_bound(basis, t, target="trace", dim=2, volume=None, sup_phi=None):
    """Upper estimate of the series tail ``sum_{k > K}``.

    ``trace``: ``sum e^{-lambda_k t}`` with ``lambda_k >= c k^{2/n}`` fitted from
    the computed spectrum. ``content``: the same times ``|Omega|`` (Cauchy-Schwarz
    bound on squared moments). ``kernel``: times ``sup|phi|^2``.

    Raises:
        TailTooLarge: if the bound exceeds 10% of the partial sum.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    c = _weyl_fit(basis, dim)
    K = basis.K
    p = 2.0 / dim
    # sum_{k>K} exp(-c t k^p) <= integral_K^inf exp(-c t x^p) dx
    a = c * t
    if p == 1.0:
        tail = math.exp(-a * K) / a
    else:
        from scipy.special import gammaincc, gamma

        tail = gamma(1 / p) * gammaincc(1 / p, a * K**p) / (p * a ** (1 / p))
    lam = basis.lambdas
    if target == "trace":
        partial = float(np.sum(np.exp(-lam * t)))
    elif target == "content":
        if volume is None:
            volume = float(basis.mass.sum())
        tail *= volume
        partial = float(np.sum(np.exp(-lam * t) * basis.moments() ** 2))
    elif target == "kernel":
        sup = float(np.max(np.abs(basis.phis))) if sup_phi is None else sup_phi
        tail *= sup * sup
        partial = float(np.exp(-lam[0] * t) * sup * sup)
    else:
        raise ValueError(f"unknown tail target {target!r}")
    if tail > 0.1 * partial:
        raise TailTooLarge(f"t={t:g}: tail bound {tail:.3g} exceeds 10% of partial sum {partial:.3g}")
    return tail


def t_min(basis, dim=2, target="content", rel=1e-10):
    """Smallest time whose tail bound falls below ``rel`` times the partial sum."""
    lo, hi = 1e-6, 10.0
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        try:
            ok = tail_bound(basis, mid, target, dim) <= rel * _partial(basis, mid, target)
        except TailTooLarge:
            ok = False
        if ok:
            hi = mid
        else:
            lo = mid
    return hi


def _partial(basis, t, target):
    lam = basis.lambdas
    if target == "content":
        return float(np.sum(np.exp(-lam * t) * basis.moments() ** 2))
    if target == "kernel":
        return float(np.exp(-lam[0] * t) * np.max(np.abs(basis.phis)) ** 2)
    return float(np.sum(np.exp(-lam * t)))
