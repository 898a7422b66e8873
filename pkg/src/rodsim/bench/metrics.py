"""Error measures and the R3 x SO(3) strain baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..liegroup import exp_so3, log_so3, skew, unskew
from ..rodcore import ElementGeometry, StrainState, node_pose

PoseField = Callable[[float], np.ndarray]  # xi -> 4x4 pose


@dataclass
class ErrorReport:
    e_r: float
    e_psi: float
    k: int


def error_metrics(trial: PoseField, reference: PoseField, k=100) -> ErrorReport:
    """Sampled centerline and rotation errors on xi_i = i/(k-1)."""
    if k < 2:
        raise ValueError("need k >= 2 samples")
    sr = spsi = 0.0
    for xi in np.linspace(0.0, 1.0, k):
        h, h_ref = trial(xi), reference(xi)
        dr = h[:3, 3] - h_ref[:3, 3]
        dpsi = log_so3(h[:3, :3].T @ h_ref[:3, :3])
        sr += dr @ dr
        spsi += dpsi @ dpsi
    return ErrorReport(np.sqrt(sr) / k, np.sqrt(spsi) / k, k)


def loglog_slope(n, e):
    """Least-squares slope of log(e) over log(n)."""
    return float(np.polyfit(np.log(np.asarray(n, dtype=float)), np.log(np.asarray(e, dtype=float)), 1)[0])


def r3so3_baseline_strains(qe, xi, elem: ElementGeometry = ElementGeometry(0.0, 1.0, 1.0)) -> StrainState:
    """Strains of the uncoupled interpolation (linear centerline, geodesic rotation)."""
    qe = np.asarray(qe, dtype=float)
    h0, h1 = node_pose(qe[:6]), node_pose(qe[6:])
    A0 = h0[:3, :3]
    psi01 = log_so3(A0.T @ h1[:3, :3])
    s = (xi - elem.xi0) / elem.dxi
    A = A0 @ exp_so3(s * psi01)
    r_xi = (h1[:3, 3] - h0[:3, 3]) / elem.dxi
    # A^T A_xi = skew(psi01)/dxi along the geodesic
    kappa_bar = unskew(A.T @ (A0 @ _d_exp_along(s, psi01))) / elem.dxi
    return StrainState(A.T @ r_xi / elem.J, kappa_bar / elem.J)


def _d_exp_along(s, psi):
    # d/ds Exp(s psi) = Exp(s psi) skew(psi)
    return exp_so3(s * psi) @ skew(psi)
