import numpy as np
import pytest

from heatlab import store
from heatlab.discretize import assemble_laplacian, build_grid
from heatlab.eigensolve import compute_basis
from heatlab.geometry import EccentricAnnulus, ball_domain


def _setup(dom, h):
    g = build_grid(dom, h)
    return g, assemble_laplacian(g, dom)


class TestCache:
    def test_round_trip_bitwise(self, tmp_path):
        dom = EccentricAnnulus(0.25, 1, 0.3)
        g, op = _setup(dom, 1 / 16)
        b = compute_basis(op, 10, g)
        store.save_basis(b, dom, 1 / 16, tmp_path)
        c = store.load_basis(dom, 1 / 16, 10, op, g, tmp_path)
        assert np.array_equal(b.lambdas, c.lambdas) and np.array_equal(b.phis, c.phis)

    def test_miss_computes_once(self, tmp_path):
        dom = ball_domain()
        g, op = _setup(dom, 1 / 8)
        calls = []

        def compute():
            calls.append(1)
            return compute_basis(op, 4, g)

        a = store.cached_basis(dom, 1 / 8, 4, op, g, compute, root=tmp_path)
        b = store.cached_basis(dom, 1 / 8, 4, op, g, compute, root=tmp_path)
        assert len(calls) == 1 and np.array_equal(a.phis, b.phis)

    def test_bypass(self, tmp_path):
        dom = ball_domain()
        g, op = _setup(dom, 1 / 8)
        store.cached_basis(dom, 1 / 8, 4, op, g, lambda: compute_basis(op, 4, g), use_cache=False, root=tmp_path)
        assert not any(tmp_path.iterdir())

    def test_keys_distinguish_inputs(self):
        d = EccentricAnnulus(0.25, 1, 0.3)
        keys = {store.cache_key(d, 1 / 16, 10), store.cache_key(d, 1 / 32, 10), store.cache_key(d, 1 / 16, 11),
                store.cache_key(d.with_displacement(0.15), 1 / 16, 10)}
        assert len(keys) == 4

    def test_conflicting_entry(self, tmp_path):
        dom = ball_domain()
        g, op = _setup(dom, 1 / 8)
        entry = store.save_basis(compute_basis(op, 4, g), dom, 1 / 8, tmp_path)
        meta = (entry / "meta.json").read_text().replace('"n_nodes": ', '"n_nodes": 1')
        (entry / "meta.json").write_text(meta)
        with pytest.raises(ValueError):
            store.load_basis(dom, 1 / 8, 4, op, g, tmp_path)

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HEATLAB_CACHE_DIR", str(tmp_path))
        assert store.cache_dir() == tmp_path
