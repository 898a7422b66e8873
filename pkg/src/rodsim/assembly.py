"""Element and global forces, mass matrix and diagnostics.

Global coordinates are node-major, ``q = (r_0, psi_0, r_1, psi_1, ...)``;
element ``e`` owns the contiguous slice ``6e:6e+12``.  Force vectors are
expressed in the virtual-displacement slots ``(dr_i, dphi_i)``; equilibrium
reads ``f_int + f_ext = 0``.

Two variants are available.  ``"K"`` (default) carries angular velocities
and virtual rotations in the cross-section basis; ``"I"`` carries them in the
inertial basis, which makes the mass matrix configuration-dependent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .liegroup import d_exp_so3, exp_so3, inv_tangent_so3, skew
from .rodcore import (
    ConstitutiveLaw,
    CrossSectionInertia,
    ElementGeometry,
    Mesh,
    element_kinematics,
    interpolate_pose,
    node_pose,
)

__all__ = [
    "Quadrature",
    "gauss",
    "LoadSpec",
    "GlobalVectors",
    "Diagnostics",
    "element_internal_force",
    "element_internal_jacobian",
    "element_external_force",
    "element_mass",
    "element_gyroscopic",
    "inertial_frame_variant",
    "assemble_vector",
    "assemble_matrix",
    "Rod",
    "assemble",
    "diagnostics",
]


@dataclass(frozen=True)
class Quadrature:
    """Rule on the unit element: points in (0, 1), weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __iter__(self):
        return zip(self.points, self.weights)


def gauss(n=2) -> Quadrature:
    x, w = np.polynomial.legendre.leggauss(n)
    return Quadrature(0.5 * (x + 1.0), 0.5 * w)


GAUSS2 = gauss(2)


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _value(f, *args):
    if f is None:
        return np.zeros(3)
    if callable(f):
        return np.asarray(f(*args), dtype=float)
    return np.asarray(f, dtype=float)


@dataclass
class LoadSpec:
    """Applied loads.

    Forces ``b`` are inertial-basis vectors, moments ``c`` are cross-section
    basis vectors.  Distributed loads are called as ``b(xi, t, H)`` and point
    loads at the rod ends as ``b1(t, H)``, where ``H`` is the current pose at
    the load point (this is how follower loads are expressed).  Constant
    arrays are accepted in place of callables.
    """

    b: Callable | np.ndarray | None = None
    c: Callable | np.ndarray | None = None
    b0: Callable | np.ndarray | None = None
    c0: Callable | np.ndarray | None = None
    b1: Callable | np.ndarray | None = None
    c1: Callable | np.ndarray | None = None

    @property
    def has_distributed(self):
        return self.b is not None or self.c is not None


@dataclass
class GlobalVectors:
    f_int: np.ndarray
    f_ext: np.ndarray
    f_gyr: np.ndarray | None = None
    M: np.ndarray | None = None
    K: np.ndarray | None = None


@dataclass
class Diagnostics:
    T: float
    U: float
    L: np.ndarray
    J_ang: np.ndarray | None = None  # only available for the "I" variant

    @property
    def E(self):
        return self.T + self.U


# ---------------------------------------------------------------------------
# element level


def _internal(qe, elem: ElementGeometry, law: ConstitutiveLaw, quad: Quadrature, want_jac: bool):
    kin = element_kinematics(qe, elem, jacobian=want_jac)
    ell, dxi = elem.length, elem.dxi
    th_v, th_w = kin.theta[:3], kin.theta[3:]
    n, m = law.stress(th_v / ell, th_w / ell)
    gb, kb = th_v / dxi, th_w / dxi  # J-scaled strains
    couple = _cross(gb, n) + _cross(kb, m)
    f = np.zeros(12)
    K = None
    if want_jac:
        K = np.zeros((12, 12))
        dn = law.C_gamma @ kin.dtheta[:3] / ell
        dm = law.C_kappa @ kin.dtheta[3:] / ell
        dcouple = (
            skew(gb) @ dn
            - skew(n) @ kin.dtheta[:3] / dxi
            + skew(kb) @ dm
            - skew(m) @ kin.dtheta[3:] / dxi
        )
    dN = np.array([-1.0, 1.0]) / dxi
    for s, w in quad:
        N = (1.0 - s, s)
        E = exp_so3(s * th_w)
        A = kin.A0 @ E
        An = A @ n
        wd = w * dxi
        for i in (0, 1):
            f[6 * i : 6 * i + 3] -= wd * dN[i] * An
            f[6 * i + 3 : 6 * i + 6] -= wd * (dN[i] * m - N[i] * couple)
        if want_jac:
            dA = np.einsum("imk,mj->ijk", kin.dA0, E)
            dA += s * np.einsum("im,mjn,nk->ijk", kin.A0, d_exp_so3(s * th_w), kin.dtheta[3:])
            dAn = np.einsum("ijk,j->ik", dA, n) + A @ dn
            for i in (0, 1):
                K[6 * i : 6 * i + 3] -= wd * dN[i] * dAn
                K[6 * i + 3 : 6 * i + 6] -= wd * (dN[i] * dm - N[i] * dcouple)
    return f, K


def element_internal_force(qe, elem, law, quad: Quadrature = GAUSS2):
    return _internal(np.asarray(qe, dtype=float), elem, law, quad, False)[0]


def element_internal_jacobian(qe, elem, law, quad: Quadrature = GAUSS2):
    """d f_int / d qe (12 x 12, non-symmetric)."""
    return _internal(np.asarray(qe, dtype=float), elem, law, quad, True)[1]


def element_external_force(elem: ElementGeometry, loads: LoadSpec, qe, t, quad: Quadrature = GAUSS2):
    """Distributed-load contribution; end-point loads are added globally."""
    f = np.zeros(12)
    if loads is None or not loads.has_distributed:
        return f
    needs_pose = callable(loads.b) or callable(loads.c)
    for s, w in quad:
        xi = elem.xi0 + s * elem.dxi
        H = interpolate_pose(xi, qe, elem) if needs_pose else None
        b = _value(loads.b, xi, t, H)
        c = _value(loads.c, xi, t, H)
        wJ = w * elem.length
        for i, N in enumerate((1.0 - s, s)):
            f[6 * i : 6 * i + 3] += wJ * N * b
            f[6 * i + 3 : 6 * i + 6] += wJ * N * c
    return f


def _rotation_at(qe, s, kin):
    return kin.A0 @ exp_so3(s * kin.theta[3:])


def element_mass(qe, elem: ElementGeometry, inertia: CrossSectionInertia, quad: Quadrature = GAUSS2):
    qe = np.asarray(qe, dtype=float)
    M = np.zeros((12, 12))
    S = inertia.S_rho0
    has_S = np.any(S != 0.0)
    kin = element_kinematics(qe, elem, jacobian=False) if has_S else None
    for s, w in quad:
        N = (1.0 - s, s)
        wJ = w * elem.length
        if has_S:
            A = _rotation_at(qe, s, kin)
            ASt = A @ S.T
        for i in (0, 1):
            for k in (0, 1):
                c = wJ * N[i] * N[k]
                M[6 * i : 6 * i + 3, 6 * k : 6 * k + 3] += c * inertia.A_rho0 * np.eye(3)
                M[6 * i + 3 : 6 * i + 6, 6 * k + 3 : 6 * k + 6] += c * inertia.I_rho0
                if has_S:
                    M[6 * i : 6 * i + 3, 6 * k + 3 : 6 * k + 6] += c * ASt
                    M[6 * i + 3 : 6 * i + 6, 6 * k : 6 * k + 3] += c * ASt.T
    return M


def element_gyroscopic(qe, ue, elem: ElementGeometry, inertia: CrossSectionInertia, quad: Quadrature = GAUSS2):
    qe = np.asarray(qe, dtype=float)
    ue = np.asarray(ue, dtype=float)
    f = np.zeros(12)
    S = inertia.S_rho0
    has_S = np.any(S != 0.0)
    kin = element_kinematics(qe, elem, jacobian=False) if has_S else None
    for s, w in quad:
        N = (1.0 - s, s)
        om = N[0] * ue[3:6] + N[1] * ue[9:12]
        Wom = skew(om)
        wJ = w * elem.length
        g_rot = Wom @ inertia.I_rho0 @ om
        g_tr = _rotation_at(qe, s, kin) @ Wom @ S.T @ om if has_S else None
        for i in (0, 1):
            f[6 * i + 3 : 6 * i + 6] += wJ * N[i] * g_rot
            if has_S:
                f[6 * i : 6 * i + 3] += wJ * N[i] * g_tr
    return f


def inertial_frame_variant(qe, ue, elem: ElementGeometry, law, inertia: CrossSectionInertia, quad: Quadrature = GAUSS2):
    """Internal force, mass and gyroscopic force with inertial-basis rotations.

    ``ue`` holds inertial-basis angular velocities in its rotation slots.
    Assumes a centroidal centerline (S_rho0 = 0).
    """
    qe = np.asarray(qe, dtype=float)
    ue = np.asarray(ue, dtype=float)
    f_int = _inertial_internal(qe, elem, law, quad)
    f_gyr = _inertial_gyroscopic(qe, ue, elem, inertia, quad)
    return f_int, _inertial_mass(qe, elem, inertia, quad), f_gyr


def _inertial_mass(qe, elem, inertia, quad):
    kin = element_kinematics(qe, elem, jacobian=False)
    M = np.zeros((12, 12))
    for s, w in quad:
        N = (1.0 - s, s)
        A = _rotation_at(qe, s, kin)
        I_I = A @ inertia.I_rho0 @ A.T
        for i in (0, 1):
            for k in (0, 1):
                c = w * elem.length * N[i] * N[k]
                M[6 * i : 6 * i + 3, 6 * k : 6 * k + 3] += c * inertia.A_rho0 * np.eye(3)
                M[6 * i + 3 : 6 * i + 6, 6 * k + 3 : 6 * k + 6] += c * I_I
    return M


# ---------------------------------------------------------------------------
# global level


def assemble_vector(n_nodes, contributions: Iterable[tuple[int, np.ndarray]]):
    """Scatter-add element 12-vectors ``(e, fe)`` in the given order."""
    out = np.zeros(6 * n_nodes)
    for e, fe in contributions:
        out[6 * e : 6 * e + 12] += fe
    return out


def assemble_matrix(n_nodes, contributions: Iterable[tuple[int, np.ndarray]]):
    out = np.zeros((6 * n_nodes, 6 * n_nodes))
    for e, ke in contributions:
        out[6 * e : 6 * e + 12, 6 * e : 6 * e + 12] += ke
    return out


@dataclass
class Rod:
    """Discretized rod: mesh, material, inertia, quadrature and variant."""

    mesh: Mesh
    law: ConstitutiveLaw
    inertia: CrossSectionInertia | None = None
    quadrature: Quadrature = field(default_factory=lambda: GAUSS2)
    variant: str = "K"

    def __post_init__(self):
        if self.variant not in ("K", "I"):
            raise ValueError("variant must be 'K' or 'I'")
        self._elements = self.mesh.elements()
        self._mass_cache = None

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_q(self):
        return 6 * self.mesh.n_nodes

    @property
    def elements(self):
        return self._elements

    @staticmethod
    def element_coords(x, e):
        return x[6 * e : 6 * e + 12]

    # -- forces -----------------------------------------------------------
    def internal_force(self, q):
        if self.variant == "I":
            return assemble_vector(
                self.n_nodes,
                (
                    (e, _inertial_internal(self.element_coords(q, e), el, self.law, self.quadrature))
                    for e, el in enumerate(self._elements)
                ),
            )
        return assemble_vector(
            self.n_nodes,
            (
                (e, element_internal_force(self.element_coords(q, e), el, self.law, self.quadrature))
                for e, el in enumerate(self._elements)
            ),
        )

    def internal_force_and_jacobian(self, q):
        """K-variant f_int and d f_int/dq."""
        f = np.zeros(self.n_q)
        K = np.zeros((self.n_q, self.n_q))
        for e, el in enumerate(self._elements):
            fe, ke = _internal(self.element_coords(q, e), el, self.law, self.quadrature, True)
            f[6 * e : 6 * e + 12] += fe
            K[6 * e : 6 * e + 12, 6 * e : 6 * e + 12] += ke
        return f, K

    def internal_jacobian(self, q):
        return self.internal_force_and_jacobian(q)[1]

    def external_force(self, q, t, loads: LoadSpec | None):
        f = np.zeros(self.n_q)
        if loads is None:
            return f
        if loads.has_distributed:
            for e, el in enumerate(self._elements):
                f[6 * e : 6 * e + 12] += element_external_force(
                    el, loads, self.element_coords(q, e), t, self.quadrature
                )
        if loads.b0 is not None or loads.c0 is not None:
            H = node_pose(q[:6])
            f[0:3] += _value(loads.b0, t, H)
            f[3:6] += _value(loads.c0, t, H)
        if loads.b1 is not None or loads.c1 is not None:
            H = node_pose(q[-6:])
            f[-6:-3] += _value(loads.b1, t, H)
            f[-3:] += _value(loads.c1, t, H)
        if self.variant == "I":
            # cross-section moments are rotated into the inertial basis
            f = self._moments_to_inertial(q, t, f, loads)
        return f

    def _moments_to_inertial(self, q, t, f, loads):
        # point and distributed moments are given in the K-basis; nodal
        # rotation slots of the I variant carry inertial-basis components.
        # Distributed moments are rotated per quadrature point.
        g = f.copy()
        for i in range(self.n_nodes):
            g[6 * i + 3 : 6 * i + 6] = 0.0
        if loads.c is not None:
            for e, el in enumerate(self._elements):
                qe = self.element_coords(q, e)
                for s, w in self.quadrature:
                    xi = el.xi0 + s * el.dxi
                    H = interpolate_pose(xi, qe, el)
                    c = H[:3, :3] @ _value(loads.c, xi, t, H)
                    for k, N in enumerate((1.0 - s, s)):
                        g[6 * (e + k) + 3 : 6 * (e + k) + 6] += w * el.length * N * c
        if loads.c0 is not None:
            H = node_pose(q[:6])
            g[3:6] += H[:3, :3] @ _value(loads.c0, t, H)
        if loads.c1 is not None:
            H = node_pose(q[-6:])
            g[-3:] += H[:3, :3] @ _value(loads.c1, t, H)
        return g

    # -- inertia ----------------------------------------------------------
    def _require_inertia(self):
        if self.inertia is None:
            raise ValueError("rod has no cross-section inertia")
        return self.inertia

    def mass(self, q):
        inertia = self._require_inertia()
        if self.variant == "I":
            return assemble_matrix(
                self.n_nodes,
                (
                    (e, _inertial_mass(self.element_coords(q, e), el, inertia, self.quadrature))
                    for e, el in enumerate(self._elements)
                ),
            )
        const = not np.any(inertia.S_rho0 != 0.0)
        if const and self._mass_cache is not None:
            return self._mass_cache
        M = assemble_matrix(
            self.n_nodes,
            (
                (e, element_mass(self.element_coords(q, e), el, inertia, self.quadrature))
                for e, el in enumerate(self._elements)
            ),
        )
        if const:
            self._mass_cache = M
        return M

    def mass_is_constant(self):
        return self.variant == "K" and not np.any(self._require_inertia().S_rho0 != 0.0)

    def gyroscopic(self, q, u):
        inertia = self._require_inertia()
        if self.variant == "I":
            return assemble_vector(
                self.n_nodes,
                (
                    (e, _inertial_gyroscopic(self.element_coords(q, e), self.element_coords(u, e), el, inertia, self.quadrature))
                    for e, el in enumerate(self._elements)
                ),
            )
        return assemble_vector(
            self.n_nodes,
            (
                (e, element_gyroscopic(self.element_coords(q, e), self.element_coords(u, e), el, inertia, self.quadrature))
                for e, el in enumerate(self._elements)
            ),
        )

    # -- kinematics -------------------------------------------------------
    def kinematic_map(self, q):
        """Block-diagonal B(q) with q_dot = B(q) u."""
        B = np.eye(self.n_q)
        for i in range(self.n_nodes):
            B[6 * i + 3 : 6 * i + 6, 6 * i + 3 : 6 * i + 6] = self._rotation_block(q[6 * i : 6 * i + 6])
        return B

    def _rotation_block(self, q_i):
        Ti = inv_tangent_so3(q_i[3:])
        if self.variant == "I":
            return Ti @ exp_so3(q_i[3:]).T
        return Ti

    def qdot(self, q, u):
        out = np.array(u, dtype=float, copy=True)
        for i in range(self.n_nodes):
            sl = slice(6 * i + 3, 6 * i + 6)
            out[sl] = self._rotation_block(q[6 * i : 6 * i + 6]) @ u[sl]
        return out

    # -- energies ---------------------------------------------------------
    def potential_energy(self, q):
        U = 0.0
        for e, el in enumerate(self._elements):
            th = element_kinematics(self.element_coords(q, e), el, jacobian=False).theta
            U += self.law.energy_density(th[:3] / el.length, th[3:] / el.length) * el.length
        return U

    def potential_gradient(self, q):
        """dU/dq (coordinate gradient)."""
        g = np.zeros(self.n_q)
        for e, el in enumerate(self._elements):
            kin = element_kinematics(self.element_coords(q, e), el)
            n, m = self.law.stress(kin.theta[:3] / el.length, kin.theta[3:] / el.length)
            g[6 * e : 6 * e + 12] += np.concatenate([n, m]) @ kin.dtheta
        return g

    def energy_rate_residual(self, q, u):
        """|u.f_int(q) + dU/dq . B(q) u|; zero for an exactly conservative f_int."""
        return abs(u @ self.internal_force(q) + self.potential_gradient(q) @ self.qdot(q, u))

    # -- geometry ---------------------------------------------------------
    def pose(self, q, xi):
        e = self.mesh.locate(xi)
        return interpolate_pose(xi, self.element_coords(q, e), self._elements[e])

    def diagnostics(self, q, u) -> Diagnostics:
        inertia = self._require_inertia()
        T = 0.5 * u @ self.mass(q) @ u
        U = self.potential_energy(q)
        L = np.zeros(3)
        J_ang = np.zeros(3) if self.variant == "I" else None
        for e, el in enumerate(self._elements):
            qe, ue = self.element_coords(q, e), self.element_coords(u, e)
            kin = element_kinematics(qe, el, jacobian=False)
            for s, w in self.quadrature:
                N = (1.0 - s, s)
                v = N[0] * ue[0:3] + N[1] * ue[6:9]
                om = N[0] * ue[3:6] + N[1] * ue[9:12]
                A = _rotation_at(qe, s, kin)
                wJ = w * el.length
                if self.variant == "K":
                    L += wJ * (inertia.A_rho0 * v + A @ inertia.S_rho0.T @ om)
                else:
                    L += wJ * inertia.A_rho0 * v
                    r = N[0] * qe[0:3] + N[1] * qe[6:9]
                    J_ang += wJ * (_cross(r, inertia.A_rho0 * v) + A @ inertia.I_rho0 @ A.T @ om)
        return Diagnostics(T, U, L, J_ang)


def _inertial_internal(qe, el, law, quad):
    kin = element_kinematics(qe, el, jacobian=False)
    ell, dxi = el.length, el.dxi
    n, m = law.stress(kin.theta[:3] / ell, kin.theta[3:] / ell)
    gb = kin.theta[:3] / dxi
    f = np.zeros(12)
    dN = np.array([-1.0, 1.0]) / dxi
    for s, w in quad:
        N = (1.0 - s, s)
        A = _rotation_at(qe, s, kin)
        An, Am = A @ n, A @ m
        wd = w * dxi
        for i in (0, 1):
            f[6 * i : 6 * i + 3] -= wd * dN[i] * An
            f[6 * i + 3 : 6 * i + 6] -= wd * (dN[i] * Am - N[i] * _cross(A @ gb, An))
    return f


def _inertial_gyroscopic(qe, ue, el, inertia, quad):
    kin = element_kinematics(qe, el, jacobian=False)
    f = np.zeros(12)
    for s, w in quad:
        N = (1.0 - s, s)
        A = _rotation_at(qe, s, kin)
        om = N[0] * ue[3:6] + N[1] * ue[9:12]
        g = _cross(om, A @ inertia.I_rho0 @ A.T @ om)
        for i in (0, 1):
            f[6 * i + 3 : 6 * i + 6] += w * el.length * N[i] * g
    return f


def assemble(rod: Rod, q, u=None, t=0.0, loads: LoadSpec | None = None, jacobian=False) -> GlobalVectors:
    """Evaluate all global force vectors (and optionally M and K)."""
    if jacobian:
        f_int, K = rod.internal_force_and_jacobian(q)
    else:
        f_int, K = rod.internal_force(q), None
    f_ext = rod.external_force(q, t, loads)
    f_gyr = M = None
    if u is not None and rod.inertia is not None:
        f_gyr = rod.gyroscopic(q, u)
        M = rod.mass(q)
    return GlobalVectors(f_int, f_ext, f_gyr, M, K)


def diagnostics(q, u, rod: Rod) -> Diagnostics:
    return rod.diagnostics(q, u)
