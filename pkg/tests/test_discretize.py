import math
import warnings

import numpy as np
import pytest
import scipy.sparse.linalg as sla

from heatlab.discretize import (
    GridError,
    QuadratureWeights,
    assemble_laplacian,
    build_grid,
    normal_derivative,
    quadrature,
)
from heatlab.eigensolve import compute_basis
from heatlab.geometry import EccentricAnnulus, ball_domain, interval_domain, rectangle_domain
from oracles import J01_SQ, enumerate_ball_nodes


def lam1(domain, h):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = build_grid(domain, h)
        return compute_basis(assemble_laplacian(g, domain), 1, g).lambdas[0]


class TestBuildGrid:
    def test_ball_half_spacing_matches_enumeration(self):
        g = build_grid(ball_domain(), 0.5)
        got = sorted(map(tuple, np.round(g.nodes, 12)))
        assert got == enumerate_ball_nodes(0.5)
        assert g.size == 9

    def test_square_quarter_pi(self):
        g = build_grid(rectangle_domain((0, 0), (math.pi, math.pi)), math.pi / 4)
        assert g.size == 9

    def test_gap_unresolved(self):
        with pytest.raises(GridError, match="gap unresolved"):
            build_grid(EccentricAnnulus(0.25, 1, 0.7), 0.25)

    def test_invalid_displacement(self):
        with pytest.raises(ValueError):
            EccentricAnnulus(0.25, 1, 0.9)

    def test_lattice_anchored_on_mirror(self):
        d = EccentricAnnulus(0.25, 1, 0.3)
        g = build_grid(d, 1 / 16)
        mirrored = g.locate(d.reflection(g.nodes[g.node_region == 0]))
        assert np.all(mirrored >= 0)

    def test_interface_nodes_lie_on_plane(self):
        d = EccentricAnnulus(0.25, 1, 0.3)
        g = build_grid(d, 1 / 16)
        on = g.nodes[g.node_region == 3]
        assert len(on) > 0 and np.allclose(on[:, 0], 0.3, atol=1e-12)

    def test_locate_and_interpolate(self):
        g = build_grid(ball_domain(), 1 / 8)
        f = g.nodes[:, 0] * 2 + g.nodes[:, 1]
        assert np.array_equal(g.locate(g.nodes), np.arange(g.size))
        x = np.array([[0.11, -0.23], [0.3, 0.41]])
        v, clean = g.interpolate(f, x)
        assert np.all(clean) and np.allclose(v, x[:, 0] * 2 + x[:, 1])


class TestLaplacian:
    def test_regular_node_five_point(self):
        d = rectangle_domain((0, 0), (math.pi, math.pi))
        h = math.pi / 8
        g = build_grid(d, h)
        A = assemble_laplacian(g, d).lattice_operator()
        i = int(g.node_at([[4, 4]])[0])
        row = A.getrow(i).toarray().ravel()
        assert row[i] == pytest.approx(4 / h**2)
        assert sorted(row[row != 0])[:4] == pytest.approx([-1 / h**2] * 4)

    def test_interval_tridiagonal_spectrum(self):
        d = interval_domain()
        h = math.pi / 4
        g = build_grid(d, h)
        assert g.size == 3
        ev = np.sort(np.linalg.eigvalsh(assemble_laplacian(g, d).lattice_operator().toarray()))
        ref = np.array([2 - math.sqrt(2), 2, 2 + math.sqrt(2)]) / h**2
        assert np.allclose(ev, ref, rtol=1e-12)

    def test_disk_lambda1_within_one_percent(self):
        assert abs(lam1(ball_domain(), 1 / 64) - J01_SQ) / J01_SQ < 0.01

    def test_second_order_convergence(self):
        errs = [abs(lam1(ball_domain(), h) - J01_SQ) for h in (1 / 16, 1 / 32, 1 / 64)]
        ratios = [errs[0] / errs[1], errs[1] / errs[2]]
        assert all(3.2 <= r <= 4.8 for r in ratios), ratios

    @pytest.mark.parametrize("domain", [ball_domain(), EccentricAnnulus(0.25, 1, 0.45),
                                        rectangle_domain((0, 0), (1, 2))])
    def test_symmetric_positive_definite(self, domain):
        g = build_grid(domain, 1 / 16)
        op = assemble_laplacian(g, domain)
        C = op.stiffness
        assert abs(C - C.T).max() < 1e-14
        smallest = sla.eigsh(op.matrix, k=1, sigma=0, which="LM")[0][0]
        assert smallest > 0

    @pytest.mark.parametrize("domain", [ball_domain(), EccentricAnnulus(0.25, 1, 0.3)])
    def test_discrete_maximum_principle(self, domain):
        g = build_grid(domain, 1 / 24)
        op = assemble_laplacian(g, domain)
        rng = np.random.default_rng(0)
        f = rng.uniform(0, 1, g.size) * op.mass
        u = sla.spsolve(op.stiffness.tocsc(), f)
        assert np.all(u >= 0)


class TestQuadrature:
    def test_disk_area_two_resolutions(self):
        d = ball_domain()
        s = [quadrature(build_grid(d, h), d).volume_weights.sum() for h in (1 / 32, 1 / 64)]
        assert abs(s[1] - math.pi) < 1e-3 and abs(s[0] - math.pi) < 1e-3

    def test_obstacle_circumference(self):
        d = EccentricAnnulus(0.25, 1, 0.3)
        q = quadrature(build_grid(d, 1 / 32), d, obstacle_boundary=True)
        assert q.boundary_weights.sum() == pytest.approx(math.pi / 2, abs=1e-6)
        # normals point out of the obstacle
        c = np.array([0.3, 0.0])
        assert np.all(np.einsum("ij,ij->i", q.boundary_points - c, q.boundary_normals) > 0)

    def test_square_exact(self):
        d = rectangle_domain((0, 0), (math.pi, math.pi))
        w = quadrature(build_grid(d, math.pi / 16), d).volume_weights
        assert w.sum() == pytest.approx(math.pi**2, rel=1e-14)

    def test_annulus_volume_constant_in_s(self):
        vols = []
        for s in (0.0, 0.15, 0.3, 0.45, 0.6):
            d = EccentricAnnulus(0.25, 1, s)
            vols.append(quadrature(build_grid(d, 1 / 32), d).volume_weights.sum())
        assert np.ptp(vols) / np.mean(vols) < 2e-3


class TestNormalDerivative:
    dom = EccentricAnnulus(0.25, 1.0, 0.0)

    def _setup(self, h):
        g = build_grid(self.dom, h)
        return g, quadrature(g, self.dom, obstacle_boundary=True)

    def test_quadratic_field_exact(self):
        # (r^2 - r1^2)/4 vanishes on the obstacle, du/dN = r1/2 there
        g, q = self._setup(1 / 32)
        u = (np.sum(g.nodes**2, axis=1) - 0.0625) / 4
        d, flagged = normal_derivative(u, g, q)
        assert not flagged.any()
        assert np.allclose(d, 0.125, atol=1e-12)

    def test_second_order_on_log_field(self):
        errs = []
        for h in (1 / 32, 1 / 64, 1 / 128):
            g, q = self._setup(h)
            u = np.log(np.sqrt(np.sum(g.nodes**2, axis=1)) / 0.25)
            d, _ = normal_derivative(u, g, q)
            errs.append(np.max(np.abs(d - 4.0)))
        assert errs[0] / errs[1] > 2.8 and errs[1] / errs[2] > 2.8

    def test_disk_torsion_outer_boundary(self):
        # normal derivative of (1-|x|^2)/4 at |x| = 1 along the inward normal is 1/2
        d = ball_domain()
        g = build_grid(d, 1 / 64)
        th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        pts = np.c_[np.cos(th), np.sin(th)]
        q = QuadratureWeights(None, pts, -pts, np.full(64, 2 * np.pi / 64))
        u = (1 - np.sum(g.nodes**2, axis=1)) / 4
        val, _ = normal_derivative(u, g, q)
        assert np.allclose(val, 0.5, atol=2e-3)

    def test_zero_field(self):
        g, q = self._setup(1 / 32)
        val, _ = normal_derivative(np.zeros(g.size), g, q)
        assert np.all(val == 0)

    def test_hopf_sign_for_ground_state(self):
        g, q = self._setup(1 / 32)
        op = assemble_laplacian(g, self.dom)
        phi = compute_basis(op, 1, g).phis[:, 0]
        val, _ = normal_derivative(phi, g, q)
        assert np.all(val > 0)
