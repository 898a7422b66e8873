"""Two-node SE(3) rod kinematics.

Nodal coordinates are 6-vectors ``q_i = (r_i, psi_i)``; element coordinates
are the 12-vector ``(r_0, psi_0, r_1, psi_1)``.  Poses are 4x4 homogeneous
matrices and twists are 6-vectors ``(v, omega)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .liegroup import (
    d_exp_se3,
    d_exp_so3,
    d_log_se3,
    exp_se3,
    exp_so3,
    inv_tangent_so3,
    log_se3,
    se3_inv,
)

__all__ = [
    "ElementGeometry",
    "Mesh",
    "StrainState",
    "ConstitutiveLaw",
    "CrossSectionInertia",
    "node_pose",
    "node_pose_jacobian",
    "relative_twist",
    "shape_functions",
    "interpolate_pose",
    "interpolate_pose_symmetric",
    "element_strains",
    "stress_resultants",
    "complement_update",
    "nodal_kinematic_map",
    "ElementKinematics",
    "element_kinematics",
    "pose_jacobian",
    "strain_jacobian",
]

_I3 = np.eye(3)


@dataclass(frozen=True)
class ElementGeometry:
    """Parameter interval [xi0, xi1] of one element and its length density J."""

    xi0: float
    xi1: float
    J: float

    @property
    def dxi(self):
        return self.xi1 - self.xi0

    @property
    def length(self):
        return self.dxi * self.J


@dataclass
class Mesh:
    """Element partition of xi in [0, 1].

    ``J`` is a scalar, one value per element, or a function of xi.  A
    function is sampled at element midpoints since the discrete strains are
    constant per element.
    """

    xi_bounds: np.ndarray
    J: float | Sequence[float] | Callable[[float], float] = 1.0

    def __post_init__(self):
        xb = np.asarray(self.xi_bounds, dtype=float)
        if xb.ndim != 1 or xb.size < 2:
            raise ValueError("need at least two element bounds")
        if xb[0] != 0.0 or xb[-1] != 1.0 or np.any(np.diff(xb) <= 0.0):
            raise ValueError("xi_bounds must increase strictly from 0 to 1")
        self.xi_bounds = xb
        mid = 0.5 * (xb[:-1] + xb[1:])
        if callable(self.J):
            j = np.array([float(self.J(x)) for x in mid])
        else:
            j = np.broadcast_to(np.asarray(self.J, dtype=float), mid.shape).copy()
        if np.any(j <= 0.0):
            raise ValueError("reference length density must be positive")
        self._J = j

    @classmethod
    def uniform(cls, n_el, J=1.0):
        return cls(np.linspace(0.0, 1.0, n_el + 1), J)

    @property
    def n_el(self):
        return self.xi_bounds.size - 1

    @property
    def n_nodes(self):
        return self.xi_bounds.size

    def element(self, e) -> ElementGeometry:
        return ElementGeometry(self.xi_bounds[e], self.xi_bounds[e + 1], self._J[e])

    def elements(self):
        return [self.element(e) for e in range(self.n_el)]

    def locate(self, xi):
        """Index of the element containing ``xi`` (right end belongs to the last one)."""
        e = int(np.searchsorted(self.xi_bounds, xi, side="right")) - 1
        return min(max(e, 0), self.n_el - 1)


@dataclass
class StrainState:
    gamma: np.ndarray
    kappa: np.ndarray

    def as_vector(self):
        return np.concatenate([self.gamma, self.kappa])


@dataclass
class ConstitutiveLaw:
    """Quadratic strain energy with diagonal elasticity matrices.

    ``C_gamma = diag(k_e, k_s, k_s)`` and ``C_kappa = diag(k_t, k_by, k_bz)``
    (any 3-vector or full 3x3 matrix is accepted).
    """

    C_gamma: np.ndarray
    C_kappa: np.ndarray
    gamma0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    kappa0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.C_gamma = _as_matrix(self.C_gamma)
        self.C_kappa = _as_matrix(self.C_kappa)
        self.gamma0 = np.asarray(self.gamma0, dtype=float)
        self.kappa0 = np.asarray(self.kappa0, dtype=float)

    @classmethod
    def from_stiffness(cls, k_e, k_s, k_t, k_b, k_b2=None):
        return cls(np.array([k_e, k_s, k_s]), np.array([k_t, k_b, k_b if k_b2 is None else k_b2]))

    def stress(self, gamma, kappa):
        return self.C_gamma @ (gamma - self.gamma0), self.C_kappa @ (kappa - self.kappa0)

    def energy_density(self, gamma, kappa):
        dg = gamma - self.gamma0
        dk = kappa - self.kappa0
        return 0.5 * (dg @ self.C_gamma @ dg + dk @ self.C_kappa @ dk)


def _as_matrix(c):
    c = np.asarray(c, dtype=float)
    return np.diag(c) if c.ndim == 1 else c


@dataclass
class CrossSectionInertia:
    """Line density, first and second mass moments of the cross-section."""

    A_rho0: float
    I_rho0: np.ndarray
    S_rho0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        self.I_rho0 = _as_matrix(self.I_rho0)
        self.S_rho0 = np.asarray(self.S_rho0, dtype=float)
        if not self.A_rho0 > 0.0:
            raise ValueError("A_rho0 must be positive")


# ---------------------------------------------------------------------------


def node_pose(q_i):
    q_i = np.asarray(q_i, dtype=float)
    h = np.eye(4)
    h[:3, :3] = exp_so3(q_i[3:])
    h[:3, 3] = q_i[:3]
    return h


def node_pose_jacobian(q_i):
    """dH_ij / dq_k for one node (4 x 4 x 6)."""
    out = np.zeros((4, 4, 6))
    out[:3, :3, 3:] = d_exp_so3(q_i[3:])
    out[:3, 3, :3] = _I3
    return out


def relative_twist(h0, h1):
    return log_se3(se3_inv(h0) @ h1)


def shape_functions(xi, elem: ElementGeometry):
    """(N0, N1) and their xi-derivatives for the linear two-node element."""
    s = (xi - elem.xi0) / elem.dxi
    return np.array([1.0 - s, s]), np.array([-1.0, 1.0]) / elem.dxi


def interpolate_pose(xi, qe, elem: ElementGeometry):
    qe = np.asarray(qe, dtype=float)
    h0 = node_pose(qe[:6])
    theta = relative_twist(h0, node_pose(qe[6:]))
    n1 = (xi - elem.xi0) / elem.dxi
    return h0 @ exp_se3(n1 * theta)


def interpolate_pose_symmetric(xi, qe, elem: ElementGeometry):
    """Interpolation relative to the midpoint frame of the element."""
    qe = np.asarray(qe, dtype=float)
    h0, h1 = node_pose(qe[:6]), node_pose(qe[6:])
    h_ref = h0 @ exp_se3(0.5 * relative_twist(h0, h1))
    n, _ = shape_functions(xi, elem)
    twist = n[0] * relative_twist(h_ref, h0) + n[1] * relative_twist(h_ref, h1)
    return h_ref @ exp_se3(twist)


def element_strains(qe, elem: ElementGeometry) -> StrainState:
    qe = np.asarray(qe, dtype=float)
    theta = relative_twist(node_pose(qe[:6]), node_pose(qe[6:]))
    eps = theta / elem.length
    return StrainState(eps[:3], eps[3:])


def stress_resultants(eps: StrainState, law: ConstitutiveLaw):
    """Contact force n and moment m (K-basis)."""
    return law.stress(eps.gamma, eps.kappa)


def complement_update(psi):
    psi = np.asarray(psi, dtype=float)
    w = math.sqrt(psi @ psi)
    if w >= math.pi:
        return (1.0 - 2.0 * math.pi / w) * psi
    return psi.copy()


def nodal_kinematic_map(q_i):
    out = np.eye(6)
    out[3:, 3:] = inv_tangent_so3(np.asarray(q_i, dtype=float)[3:])
    return out


class ElementKinematics(NamedTuple):
    """Cached element quantities shared by force and Jacobian evaluation."""

    A0: np.ndarray  # rotation of node 0
    dA0: np.ndarray  # dA0/dqe, 3 x 3 x 12
    theta: np.ndarray  # relative twist
    dtheta: np.ndarray  # dtheta/dqe, 6 x 12


def element_kinematics(qe, elem: ElementGeometry | None = None, jacobian=True):
    qe = np.asarray(qe, dtype=float)
    h0, h1 = node_pose(qe[:6]), node_pose(qe[6:])
    h0inv = se3_inv(h0)
    h01 = h0inv @ h1
    theta = log_se3(h01)
    if not jacobian:
        return ElementKinematics(h0[:3, :3], None, theta, None)
    A0, r0 = h0[:3, :3], h0[:3, 3]
    dA0 = d_exp_so3(qe[3:6])
    # derivative of the inverse node-0 pose
    dh0inv = np.zeros((4, 4, 12))
    dh0inv[:3, :3, 3:6] = dA0.transpose(1, 0, 2)
    dh0inv[:3, 3, 0:3] = -A0.T
    dh0inv[:3, 3, 3:6] = -np.einsum("jik,j->ik", dA0, r0)
    dh1 = np.zeros((4, 4, 12))
    dh1[:, :, 6:] = node_pose_jacobian(qe[6:])
    dh01 = np.einsum("imk,mj->ijk", dh0inv, h1) + np.einsum("im,mjk->ijk", h0inv, dh1)
    dtheta = np.einsum("ijk,jkl->il", d_log_se3(h01), dh01)
    dA0_full = np.zeros((3, 3, 12))
    dA0_full[:, :, 3:6] = dA0
    return ElementKinematics(A0, dA0_full, theta, dtheta)


def pose_jacobian(xi, qe, elem: ElementGeometry):
    """d(H_IK)_ij / d(qe)_k at xi (4 x 4 x 12)."""
    qe = np.asarray(qe, dtype=float)
    kin = element_kinematics(qe, elem)
    h0 = node_pose(qe[:6])
    dh0 = np.zeros((4, 4, 12))
    dh0[:, :, :6] = node_pose_jacobian(qe[:6])
    n1 = (xi - elem.xi0) / elem.dxi
    e = exp_se3(n1 * kin.theta)
    de = n1 * np.einsum("ijm,ml->ijl", d_exp_se3(n1 * kin.theta), kin.dtheta)
    return np.einsum("iml,mj->ijl", dh0, e) + np.einsum("im,mjl->ijl", h0, de)


def strain_jacobian(qe, elem: ElementGeometry):
    """d(gamma, kappa)/d(qe) (6 x 12)."""
    return element_kinematics(qe, elem).dtheta / elem.length
