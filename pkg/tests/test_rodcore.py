import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rodsim import liegroup as lg
from rodsim.bench.experiments import HelixGeometry
from rodsim.rodcore import (
    ConstitutiveLaw,
    ElementGeometry,
    Mesh,
    complement_update,
    element_strains,
    interpolate_pose,
    interpolate_pose_symmetric,
    nodal_kinematic_map,
    node_pose,
    pose_jacobian,
    relative_twist,
    shape_functions,
    strain_jacobian,
    stress_resultants,
)

UNIT = ElementGeometry(0.0, 1.0, 1.0)
# quarter circle of radius 1 from (0,0,0) to (1,0,1) around (1,0,0)
QUARTER = np.r_[0.0, 0.0, 0.0, 0.0, -math.pi / 2, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]


def fd(fun, x, h=1e-6):
    f0 = np.asarray(fun(x))
    out = np.zeros(f0.shape + x.shape)
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        out[..., j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h)
    return out


def random_element(rng, angle=1.5):
    qe = np.zeros(12)
    for i in (0, 1):
        qe[6 * i : 6 * i + 3] = rng.normal(size=3) + np.array([i, 0, 0])
        qe[6 * i + 3 : 6 * i + 6] = rng.normal(size=3) * angle / math.sqrt(3) / 2
    return qe


class TestMesh:
    def test_uniform(self):
        m = Mesh.uniform(4, J=2.0)
        assert (m.n_el, m.n_nodes) == (4, 5)
        assert m.element(1) == ElementGeometry(0.25, 0.5, 2.0)
        assert m.element(1).length == pytest.approx(0.5)

    def test_callable_density_sampled_at_midpoints(self):
        m = Mesh.uniform(2, J=lambda xi: 1.0 + xi)
        assert m.element(0).J == pytest.approx(1.25)
        assert m.element(1).J == pytest.approx(1.75)

    def test_locate(self):
        m = Mesh([0.0, 0.3, 1.0])
        assert [m.locate(x) for x in (0.0, 0.29, 0.3, 1.0)] == [0, 0, 1, 1]

    @pytest.mark.parametrize("bounds", [[0.0, 0.5], [0.0, 0.6, 0.4, 1.0], [0.1, 1.0]])
    def test_invalid_bounds(self, bounds):
        with pytest.raises(ValueError):
            Mesh(bounds)

    def test_nonpositive_density(self):
        with pytest.raises(ValueError):
            Mesh.uniform(2, J=0.0)


class TestPoses:
    def test_node_pose(self):
        np.testing.assert_array_equal(node_pose(np.zeros(6)), np.eye(4))
        h = node_pose([1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(h[:3, 3], [1.0, 0.0, 1.0])
        psi = [0.0, -math.pi / 2, 0.0]
        np.testing.assert_array_equal(node_pose(np.r_[0, 0, 0, psi])[:3, :3], lg.exp_so3(psi))

    def test_relative_twist_trivial(self):
        h = node_pose([1.0, 2.0, 3.0, 0.1, 0.2, 0.3])
        np.testing.assert_allclose(relative_twist(h, h), 0.0, atol=1e-15)
        t = np.eye(4)
        t[:3, 3] = (1.0, -2.0, 0.5)
        np.testing.assert_allclose(relative_twist(np.eye(4), t), [1.0, -2.0, 0.5, 0, 0, 0])

    def test_relative_twist_quarter_circle(self):
        theta = relative_twist(node_pose(QUARTER[:6]), node_pose(QUARTER[6:]))
        np.testing.assert_allclose(theta[3:], [0.0, math.pi / 2, 0.0], atol=1e-14)
        # arc length pi/2 along the local x-axis, no shear
        np.testing.assert_allclose(theta[:3], [math.pi / 2, 0.0, 0.0], atol=1e-14)
        np.testing.assert_allclose(
            lg.exp_se3(theta), lg.se3_inv(node_pose(QUARTER[:6])) @ node_pose(QUARTER[6:]), atol=1e-14
        )

    def test_shape_functions(self):
        n, dn = shape_functions(0.3, ElementGeometry(0.2, 0.6, 1.0))
        np.testing.assert_allclose(n, [0.75, 0.25])
        np.testing.assert_allclose(dn, [-2.5, 2.5])


class TestInterpolation:
    def test_endpoints(self):
        np.testing.assert_allclose(interpolate_pose(0.0, QUARTER, UNIT), node_pose(QUARTER[:6]), atol=1e-12)
        np.testing.assert_allclose(interpolate_pose(1.0, QUARTER, UNIT), node_pose(QUARTER[6:]), atol=1e-12)

    def test_identical_nodes(self):
        q = np.r_[1.0, 2.0, 3.0, 0.3, -0.1, 0.2]
        np.testing.assert_allclose(interpolate_pose(0.4, np.r_[q, q], UNIT), node_pose(q), atol=1e-14)

    def test_quarter_circle_is_exact(self):
        for xi in np.linspace(0, 1, 11):
            r = interpolate_pose(xi, QUARTER, UNIT)[:3, 3]
            assert np.linalg.norm(r - [1.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-14)
            assert r[1] == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_form_agrees(self):
        for xi in np.linspace(0.05, 0.95, 10):
            np.testing.assert_allclose(
                interpolate_pose_symmetric(xi, QUARTER, UNIT), interpolate_pose(xi, QUARTER, UNIT), atol=1e-10
            )
        np.testing.assert_allclose(interpolate_pose_symmetric(0.0, QUARTER, UNIT), node_pose(QUARTER[:6]), atol=1e-12)
        np.testing.assert_allclose(interpolate_pose_symmetric(1.0, QUARTER, UNIT), node_pose(QUARTER[6:]), atol=1e-12)


class TestStrains:
    def test_straight_element(self):
        el = ElementGeometry(0.2, 0.7, 3.0)
        qe = np.r_[0, 0, 0, 0, 0, 0, 1.5, 0, 0, 0, 0, 0]
        s = element_strains(qe, el)
        np.testing.assert_allclose(s.gamma, [1.0, 0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(s.kappa, 0.0, atol=1e-15)

    def test_helix_nodes(self):
        geom = HelixGeometry()
        q = geom.nodal_coordinates(5)
        g, k = geom.strains()
        mesh = Mesh.uniform(5, J=geom.length)
        for e in range(5):
            s = element_strains(q[6 * e : 6 * e + 12], mesh.element(e))
            np.testing.assert_allclose(s.gamma, g, atol=1e-10)
            np.testing.assert_allclose(s.kappa, k, atol=1e-10 * np.abs(k).max())

    def test_quarter_circle_strains(self):
        s = element_strains(QUARTER, UNIT)
        # unit radius arc of length pi/2 at J = 1: scaled strains
        np.testing.assert_allclose(s.gamma, [math.pi / 2, 0, 0], atol=1e-14)
        np.testing.assert_allclose(s.kappa, [0, math.pi / 2, 0], atol=1e-14)

    def test_objectivity(self):
        rng = np.random.default_rng(0)
        qe = random_element(rng)
        G = lg.exp_se3([1.0, -2.0, 0.5, 0.4, -1.1, 0.7])
        moved = np.zeros(12)
        for i in (0, 1):
            h = G @ node_pose(qe[6 * i : 6 * i + 6])
            moved[6 * i : 6 * i + 3] = h[:3, 3]
            moved[6 * i + 3 : 6 * i + 6] = lg.log_so3(h[:3, :3])
        a, b = element_strains(qe, UNIT), element_strains(moved, UNIT)
        np.testing.assert_allclose(a.as_vector(), b.as_vector(), atol=1e-10)


class TestConstitutiveLaw:
    law = ConstitutiveLaw.from_stiffness(10.0, 4.0, 2.0, 3.0)

    def test_reference(self):
        n, m = self.law.stress(np.array([1.0, 0, 0]), np.zeros(3))
        np.testing.assert_array_equal(np.r_[n, m], 0.0)
        assert self.law.energy_density(np.array([1.0, 0, 0]), np.zeros(3)) == 0.0

    def test_axial(self):
        n, _ = self.law.stress(np.array([1.2, 0, 0]), np.zeros(3))
        np.testing.assert_allclose(n, [2.0, 0, 0])

    def test_helix_moment(self):
        geom = HelixGeometry()
        law = ConstitutiveLaw.from_stiffness(1.0, 1.0, 5.0, 5.0)
        g, k = geom.strains()
        from rodsim.rodcore import StrainState

        n, m = stress_resultants(StrainState(g, k), law)
        expected = np.array([5.0 * geom.c, 0.0, 5.0]) * geom.radius * geom.alpha_xi**2 / geom.length**2
        np.testing.assert_allclose(m, expected)
        np.testing.assert_allclose(n, 0.0)

    def test_energy_matches_stress(self):
        rng = np.random.default_rng(1)
        g, k = rng.normal(size=3), rng.normal(size=3)
        n, m = self.law.stress(g, k)
        grad = fd(lambda x: self.law.energy_density(x[:3], x[3:]), np.r_[g, k])
        np.testing.assert_allclose(grad, np.r_[n, m], atol=1e-8)


class TestComplement:
    def test_below_pi(self):
        psi = np.array([0.3, 0.4, 0.0])
        np.testing.assert_array_equal(complement_update(psi), psi)

    def test_three_halves_pi(self):
        np.testing.assert_allclose(complement_update([1.5 * math.pi, 0.0, 0.0]), [-0.5 * math.pi, 0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(st.floats(math.pi, 2 * math.pi - 0.1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1))
    def test_same_rotation(self, w, a, b, c):
        d = np.array([a, b, c]) / np.linalg.norm([a, b, c])
        psi = w * d
        out = complement_update(psi)
        assert np.linalg.norm(out) <= math.pi
        np.testing.assert_allclose(lg.exp_so3(out), lg.exp_so3(psi), atol=1e-10)


class TestKinematicMap:
    def test_identity(self):
        np.testing.assert_array_equal(nodal_kinematic_map(np.zeros(6)), np.eye(6))

    def test_block(self):
        q = np.r_[1.0, 2.0, 3.0, 0.3, 0.2, -0.1]
        B = nodal_kinematic_map(q)
        np.testing.assert_array_equal(B[:3, :3], np.eye(3))
        np.testing.assert_array_equal(B[3:, 3:], lg.inv_tangent_so3(q[3:]))
        np.testing.assert_array_equal(B[:3, 3:], 0.0)

    def test_matches_rotation_rate(self):
        # psi(t) = Log(A0 Exp(t omega)); its rate is B(psi) omega
        A0 = lg.exp_so3([0.4, -0.3, 0.9])
        om = np.array([0.5, 1.0, -0.2])
        h = 1e-6
        psi_p = lg.log_so3(A0 @ lg.exp_so3(h * om))
        psi_m = lg.log_so3(A0 @ lg.exp_so3(-h * om))
        psi = lg.log_so3(A0)
        B = nodal_kinematic_map(np.r_[np.zeros(3), psi])
        np.testing.assert_allclose((psi_p - psi_m) / (2 * h), B[3:, 3:] @ om, atol=1e-6)


class TestJacobians:
    def test_pose_jacobian_fd(self):
        for xi in (0.0, 0.5, 0.8):
            num = fd(lambda q: interpolate_pose(xi, q, UNIT), QUARTER.copy())
            np.testing.assert_allclose(pose_jacobian(xi, QUARTER, UNIT), num, atol=1e-7)

    def test_pose_jacobian_left_endpoint(self):
        np.testing.assert_allclose(pose_jacobian(0.0, QUARTER, UNIT)[:, :, 6:], 0.0, atol=1e-14)

    def test_pose_jacobian_translation_block(self):
        q = np.r_[0.0, 0, 0, 0.2, 0.1, 0.3]
        qe = np.r_[q, q]
        J = pose_jacobian(0.3, qe, UNIT)
        np.testing.assert_allclose(J[:3, 3, 0:3], 0.7 * np.eye(3), atol=1e-9)
        np.testing.assert_allclose(J[:3, 3, 6:9], 0.3 * np.eye(3), atol=1e-9)

    def test_strain_jacobian_fd(self):
        rng = np.random.default_rng(2)
        el = ElementGeometry(0.0, 0.5, 2.0)
        for _ in range(5):
            qe = random_element(rng)
            num = fd(lambda q: element_strains(q, el).as_vector(), qe)
            np.testing.assert_allclose(strain_jacobian(qe, el), num, rtol=1e-5, atol=1e-8)

    def test_strain_jacobian_rigid_null_space(self):
        rng = np.random.default_rng(3)
        qe = random_element(rng)
        J = strain_jacobian(qe, UNIT)
        np.testing.assert_allclose(J @ np.r_[1.0, 2.0, 3.0, 0, 0, 0, 1.0, 2.0, 3.0, 0, 0, 0], 0.0, atol=1e-12)
        # common spatial rotation w: node velocities (w x r_i, A_i^T w) in (r, K-omega) form, mapped by B
        w = np.array([0.3, -0.7, 0.2])
        d = np.zeros(12)
        for i in (0, 1):
            A = lg.exp_so3(qe[6 * i + 3 : 6 * i + 6])
            d[6 * i : 6 * i + 3] = np.cross(w, qe[6 * i : 6 * i + 3])
            d[6 * i + 3 : 6 * i + 6] = lg.inv_tangent_so3(qe[6 * i + 3 : 6 * i + 6]) @ (A.T @ w)
        np.testing.assert_allclose(J @ d, 0.0, atol=1e-8)
