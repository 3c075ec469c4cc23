"""On-disk cache of eigenbases.

Each entry is a directory named by a hash of (domain, h, K) holding
``meta.json`` plus raw little-endian float64 arrays. Grids and operators are
cheap and deterministic, so only the eigenpairs are stored; loading returns
bit-identical arrays.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .eigensolve import EigenBasis

FORMAT_VERSION = 1


def cache_dir():
    return Path(os.environ.get("HEATLAB_CACHE_DIR", Path.home() / ".cache" / "heatlab"))


def cache_key(domain, h, K):
    payload = json.dumps({"domain": domain.to_dict(), "h": repr(float(h)), "K": int(K),
                          "v": FORMAT_VERSION}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _write_array(path, a):
    np.ascontiguousarray(a, dtype="<f8").tofile(path)


def _read_array(path, shape):
    return np.fromfile(path, dtype="<f8").reshape(shape)


def save_basis(basis, domain, h, root=None):
    root = Path(root) if root is not None else cache_dir()
    entry = root / cache_key(domain, h, basis.K)
    entry.mkdir(parents=True, exist_ok=True)
    n = basis.phis.shape[0]
    _write_array(entry / "lambdas.f8", basis.lambdas)
    _write_array(entry / "phis.f8", basis.phis)
    _write_array(entry / "residuals.f8", basis.residuals)
    meta = {"version": FORMAT_VERSION, "domain": domain.to_dict(), "h": float(h), "K": basis.K,
            "n_nodes": n}
    (entry / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return entry


def load_basis(domain, h, K, op, grid=None, root=None):
    """Cached basis or ``None``; raises ``ValueError`` on a mismatching entry."""
    root = Path(root) if root is not None else cache_dir()
    entry = root / cache_key(domain, h, K)
    meta_path = entry / "meta.json"
    if not meta_path.exists():
        return None
    meta = json.loads(meta_path.read_text())
    if meta.get("version") != FORMAT_VERSION or meta["n_nodes"] != op.size or meta["K"] != K:
        raise ValueError(f"conflicting cache entry at {entry}")
    lam = _read_array(entry / "lambdas.f8", (K,))
    phis = _read_array(entry / "phis.f8", (op.size, K))
    res = _read_array(entry / "residuals.f8", (K,))
    return EigenBasis(lam, phis, op.mass.copy(), res, grid)


def cached_basis(domain, h, K, op, grid, compute, use_cache=True, root=None):
    """Load from the cache or call ``compute()`` and store the result."""
    if use_cache:
        hit = load_basis(domain, h, K, op, grid, root)
        if hit is not None:
            return hit
    basis = compute()
    if use_cache:
        save_basis(basis, domain, h, root)
    return basis
