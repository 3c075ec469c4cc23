import math
import warnings

import numpy as np
import pytest

from heatlab.discretize import assemble_laplacian, build_grid
from heatlab.eigensolve import (
    EigenError,
    TailTooLarge,
    compute_basis,
    default_K,
    tail_bound,
    weyl_ratio,
)
from heatlab.geometry import EccentricAnnulus, ball_domain
from oracles import J01_SQ, concentric_annulus_eigenvalue, disk_eigenvalues, rectangle_eigenvalues


def basis_for(domain, h, K):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = build_grid(domain, h)
        return compute_basis(assemble_laplacian(g, domain), K, g)


class TestComputeBasis:
    def test_square_lowest_five(self, square):
        b = basis_for(square, math.pi / 128, 5)
        assert np.allclose(b.lambdas, rectangle_eigenvalues(5), rtol=2e-3)

    def test_square_eigenfunction_shape(self, square):
        b = basis_for(square, math.pi / 64, 1)
        x = b.grid.nodes
        exact = (2 / math.pi) * np.sin(x[:, 0]) * np.sin(x[:, 1])
        assert np.max(np.abs(b.phis[:, 0] - exact)) < 1e-3

    def test_disk_lambda1_fine(self, disk):
        b = basis_for(disk, 1 / 128, 1)
        assert abs(b.lambdas[0] - J01_SQ) / J01_SQ < 5e-3

    def test_concentric_annulus_degenerate_pair(self):
        b = basis_for(EccentricAnnulus(0.25, 1, 0.0), 1 / 64, 4)
        assert abs(b.lambdas[1] - b.lambdas[2]) / b.lambdas[1] < 5e-3
        ref1 = concentric_annulus_eigenvalue(0, 0.25, 1)
        ref2 = concentric_annulus_eigenvalue(1, 0.25, 1)
        assert abs(b.lambdas[0] - ref1) / ref1 < 5e-3
        assert abs(b.lambdas[1] - ref2) / ref2 < 5e-3

    def test_mass_orthonormal(self, disk64):
        G = disk64.basis.gram()
        assert np.max(np.abs(G - np.eye(len(G)))) < 1e-8

    def test_residuals_small(self, disk64):
        b = disk64.basis
        assert np.all(b.residuals < 1e-8 * b.lambdas)

    def test_ground_state_simple_and_positive(self, ann03_64):
        b = ann03_64.basis
        assert b.lambdas[1] - b.lambdas[0] > 10 * max(b.residuals[:2].max(), 1e-12)
        assert np.all(b.phis[:, 0] > 0)

    def test_sign_convention(self, disk64):
        P = disk64.basis.phis
        for k in range(1, 10):
            i = int(np.argmax(np.abs(P[:, k])))
            assert P[i, k] > 0

    def test_deterministic(self, disk):
        a = basis_for(disk, 1 / 16, 6)
        b = basis_for(disk, 1 / 16, 6)
        assert np.array_equal(a.lambdas, b.lambdas) and np.array_equal(a.phis, b.phis)

    def test_too_many_modes(self, disk):
        with pytest.raises(EigenError):
            basis_for(disk, 0.25, 100)

    def test_default_K(self):
        assert default_K(100_000) == 300 and default_K(500) == 50

    @pytest.mark.parametrize("s", [0.0, 0.3, 0.6])
    def test_domain_monotonicity(self, s):
        lam = basis_for(EccentricAnnulus(0.25, 1, s), 1 / 32, 1).lambdas[0]
        assert lam > J01_SQ


class TestWeyl:
    def test_disk_k1(self, disk64, disk):
        assert weyl_ratio(disk64.basis, disk, 1) == pytest.approx(J01_SQ / 4, rel=1e-3)

    def test_disk_k50_tracks_oracle(self, disk64, disk):
        # the continuum ratio at k=50 follows from Bessel zeros
        exact = disk_eigenvalues(400)[49] * math.pi / (50 * 4 * math.pi)
        assert weyl_ratio(disk64.basis, disk, 50) == pytest.approx(exact, rel=5e-3)

    def test_rectangle_ratio_matches_lattice_oracle(self, square):
        b = basis_for(square, math.pi / 128, 100)
        ref = rectangle_eigenvalues(100)[99] * math.pi**2 / (100 * 4 * math.pi)
        # discretization error of lambda_100 is about lambda h^2 / 12
        assert weyl_ratio(b, square, 100) == pytest.approx(ref, rel=1.5e-2)

    def test_out_of_range(self, disk64, disk):
        with pytest.raises(ValueError):
            weyl_ratio(disk64.basis, disk, 10_000)


class TestTailBound:
    def test_disk_k200_t05(self, disk64):
        b = disk64.basis
        from heatlab.eigensolve import EigenBasis

        b200 = EigenBasis(b.lambdas[:200], b.phis[:, :200], b.mass, b.residuals[:200], b.grid)
        assert tail_bound(b200, 0.5, "trace") < 1e-12

    def test_decreasing_in_t(self, disk64):
        v = [tail_bound(disk64.basis, t, "trace") for t in (0.05, 0.1, 0.5, 2.0)]
        assert all(a > b for a, b in zip(v, v[1:]))
        assert v[-1] < 1e-100

    def test_rejects_tiny_t(self, disk64):
        with pytest.raises(TailTooLarge):
            tail_bound(disk64.basis, 0.001, "trace")

    def test_bound_dominates_true_tail(self, disk64):
        # true tail of the first 100 modes against the bound built from them
        b = disk64.basis
        from heatlab.eigensolve import EigenBasis

        b100 = EigenBasis(b.lambdas[:100], b.phis[:, :100], b.mass, b.residuals[:100], b.grid)
        exact = disk_eigenvalues(2000)
        for t in (0.05, 0.1, 0.2):
            true_tail = float(np.sum(np.exp(-exact[100:] * t)))
            assert tail_bound(b100, t, "trace") >= true_tail
