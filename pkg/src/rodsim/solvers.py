"""Static Newton solver with load stepping and dynamic time integration.

Constrained nodal slots (clamped or prescribed) are removed from the unknowns
in statics and handled on acceleration level in dynamics.  Rotation
constraints act on a node's whole rotation triplet; translations likewise.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .assembly import LoadSpec, Rod
from .errors import AngleAtPi, NewtonDiverged, StepFailure
from .rodcore import complement_update

__all__ = [
    "BoundaryCondition",
    "clamped",
    "pinned",
    "prescribed",
    "StaticSettings",
    "StaticSolution",
    "static_solve",
    "kinematic_ode",
    "DynamicSettings",
    "Trajectory",
    "dynamic_solve",
    "generalized_alpha_parameters",
    "dormand_prince",
    "generalized_alpha",
]

log = logging.getLogger(__name__)

# half bandwidth of the node-major two-node element pattern
_BANDWIDTH = 11
_BANDED_MIN_SIZE = 120


@dataclass
class BoundaryCondition:
    """Constraint on the translation and/or rotation triplet of one node.

    Without ``q`` the constrained slots keep their initial values (clamped).
    ``q(t)`` returns the 6 nodal coordinates, ``u(t)`` the nodal velocities
    and ``du(t)`` their rates; only the constrained slots are used.
    """

    node: int
    translation: bool = True
    rotation: bool = True
    q: Callable[[float], np.ndarray] | None = None
    u: Callable[[float], np.ndarray] | None = None
    du: Callable[[float], np.ndarray] | None = None

    def slots(self, n_nodes):
        i = self.node % n_nodes
        out = []
        if self.translation:
            out += [6 * i, 6 * i + 1, 6 * i + 2]
        if self.rotation:
            out += [6 * i + 3, 6 * i + 4, 6 * i + 5]
        return out


def clamped(node=0):
    return BoundaryCondition(node)


def pinned(node=0):
    return BoundaryCondition(node, translation=True, rotation=False)


def prescribed(node, q, u=None, du=None, translation=True, rotation=True):
    return BoundaryCondition(node, translation, rotation, q, u, du)


class _Constraints:
    def __init__(self, bcs: Sequence[BoundaryCondition], n_nodes):
        self.bcs = list(bcs)
        self.n_nodes = n_nodes
        n_q = 6 * n_nodes
        mask = np.zeros(n_q, dtype=bool)
        for bc in self.bcs:
            mask[bc.slots(n_nodes)] = True
        self.fixed = np.flatnonzero(mask)
        self.free = np.flatnonzero(~mask)
        rot_free = []
        for i in range(n_nodes):
            if not mask[6 * i + 3]:
                rot_free.append(i)
        self.rot_free_nodes = rot_free

    def apply_q(self, q, t):
        for bc in self.bcs:
            if bc.q is not None:
                sl = bc.slots(self.n_nodes)
                i = bc.node % self.n_nodes
                q[sl] = np.asarray(bc.q(t), dtype=float)[np.asarray(sl) - 6 * i]
        return q

    def _nodal(self, attr, t, out):
        for bc in self.bcs:
            sl = bc.slots(self.n_nodes)
            f = getattr(bc, attr)
            if f is None:
                out[sl] = 0.0
            else:
                i = bc.node % self.n_nodes
                out[sl] = np.asarray(f(t), dtype=float)[np.asarray(sl) - 6 * i]
        return out

    def apply_u(self, u, t):
        return self._nodal("u", t, u)

    def accelerations(self, t, n_q):
        return self._nodal("du", t, np.zeros(n_q))

    def complement(self, q):
        for i in self.rot_free_nodes:
            sl = slice(6 * i + 3, 6 * i + 6)
            q[sl] = complement_update(q[sl])
        return q


# ---------------------------------------------------------------------------
# statics


@dataclass
class StaticSettings:
    n_increments: int = 20
    atol: float = 1e-8
    max_newton_iters: int = 30
    # load factor as a function of pseudo-time t in (0, 1]; linear ramp by default
    load_factor: Callable[[float], float] | None = None
    # include a finite-difference tangent of configuration-dependent end loads
    linearize_point_loads: bool = True
    # a failed increment is retried as two halves, at most this deep
    max_bisections: int = 6

    def __post_init__(self):
        if not self.atol > 0.0:
            raise ValueError("atol must be positive")
        if self.n_increments < 1:
            raise ValueError("need at least one increment")


@dataclass
class StaticSolution:
    t: np.ndarray
    q: np.ndarray  # (n_increments + 1, n_q); row 0 is the initial configuration
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)  # per increment: residual history
    bisections: list = field(default_factory=list)  # per increment: number of extra sub-steps


def _solve_linear(K, r):
    n = K.shape[0]
    if n < _BANDED_MIN_SIZE:
        # iterates far from equilibrium can be badly conditioned; convergence
        # is judged on the residual, so the warning carries no information
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            return sla.solve(K, r, check_finite=False)
    bw = _BANDWIDTH
    ab = np.zeros((2 * bw + 1, n))
    for d in range(-bw, bw + 1):
        diag = np.diagonal(K, d)
        if d >= 0:
            ab[bw - d, d:] = diag
        else:
            ab[bw - d, : n + d] = diag
    return sla.solve_banded((bw, bw), ab, r, check_finite=False)


def _point_load_tangent(rod: Rod, loads: LoadSpec, q, t):
    """Finite-difference tangent of the end-point loads w.r.t. their node."""
    n = rod.n_q
    K = np.zeros((n, n))
    ends = []
    # the I variant rotates K-basis moments by A(psi), so constant ones depend on q too
    if callable(loads.b0) or loads.c0 is not None:
        ends.append(0)
    if callable(loads.b1) or loads.c1 is not None:
        ends.append(rod.n_nodes - 1)
    if not ends:
        return K
    only_points = LoadSpec(b0=loads.b0, c0=loads.c0, b1=loads.b1, c1=loads.c1)
    for i in ends:
        sl = slice(6 * i, 6 * i + 6)
        for j in range(6 * i, 6 * i + 6):
            d = 1e-7 * max(1.0, abs(q[j]))
            qp, qm = q.copy(), q.copy()
            qp[j] += d
            qm[j] -= d
            K[sl, j] = (rod.external_force(qp, t, only_points)[sl] - rod.external_force(qm, t, only_points)[sl]) / (2 * d)
    return K


def _newton(rod, loads, cons, q, t, lam, settings):
    """Newton iterations at pseudo-time t, in place on q; returns the residual history."""
    free = cons.free
    cons.apply_q(q, t)
    hist = []
    for it in range(settings.max_newton_iters + 1):
        f_int, K = rod.internal_force_and_jacobian(q)
        f_ext = rod.external_force(q, t, loads)
        r = (f_int + lam(t) * f_ext)[free]
        err = np.max(np.abs(r)) if r.size else 0.0
        hist.append(err)
        if not np.isfinite(err):
            raise NewtonDiverged(f"non-finite residual at t={t:.6g}")
        if err <= settings.atol:
            return hist
        if it == settings.max_newton_iters:
            break
        if settings.linearize_point_loads and loads is not None:
            K = K + lam(t) * _point_load_tangent(rod, loads, q, t)
        q[free] -= _solve_linear(K[np.ix_(free, free)], r)
        cons.complement(q)
    raise NewtonDiverged(
        f"t={t:.6g}: residual {hist[-1]:.3e} after {settings.max_newton_iters} iterations (atol {settings.atol:.1e})"
    )


def _advance(rod, loads, cons, q, t0, t1, lam, settings, depth=0):
    """Reach t1 from the equilibrium q at t0, halving the step on failure."""
    q_start = q.copy()
    try:
        return _newton(rod, loads, cons, q, t1, lam, settings), 0
    except (NewtonDiverged, AngleAtPi):
        # an iterate that leaves the admissible set counts as a failed attempt
        if depth >= settings.max_bisections:
            raise
    q[:] = q_start
    tm = 0.5 * (t0 + t1)
    _, n0 = _advance(rod, loads, cons, q, t0, tm, lam, settings, depth + 1)
    hist, n1 = _advance(rod, loads, cons, q, tm, t1, lam, settings, depth + 1)
    return hist, n0 + n1 + 1


def static_solve(rod: Rod, loads: LoadSpec | None, bcs: Sequence[BoundaryCondition], settings: StaticSettings, q0=None) -> StaticSolution:
    """Solve f_int(q) + lambda(t) f_ext(q, t) = 0 for t = k/n, k = 1..n."""
    cons = _Constraints(bcs, rod.n_nodes)
    q = np.zeros(rod.n_q) if q0 is None else np.array(q0, dtype=float)
    lam = settings.load_factor or (lambda t: t)
    ts = [0.0]
    qs = [q.copy()]
    iters, hist, bis = [], [], []
    for k in range(1, settings.n_increments + 1):
        t = k / settings.n_increments
        res_hist, n_bis = _advance(rod, loads, cons, q, ts[-1], t, lam, settings)
        if n_bis:
            log.info("increment %d needed %d bisections", k, n_bis)
        iters.append(len(res_hist) - 1)
        hist.append(res_hist)
        bis.append(n_bis)
        log.debug("increment %d: %d iterations, residual %.3e", k, iters[-1], res_hist[-1])
        ts.append(t)
        qs.append(q.copy())
    return StaticSolution(np.array(ts), np.array(qs), iters, hist, bis)


# ---------------------------------------------------------------------------
# dynamics


def kinematic_ode(rod: Rod, q, u):
    """q_dot = B(q) u."""
    return rod.qdot(np.asarray(q, dtype=float), np.asarray(u, dtype=float))


@dataclass
class DynamicSettings:
    t_end: float
    method: str = "rk45"  # "rk45" or "generalized-alpha"
    atol: float = 1e-8
    rtol: float = 1e-8
    rho_inf: float = 0.9
    h: float = 1e-5
    h_max: float = math.inf
    t_out: Sequence[float] | None = None  # sample times; accepted steps if None
    newton_tol: float = 1e-9
    max_newton_iters: int = 25
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk45", "generalized-alpha"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.rho_inf <= 1.0:
            raise ValueError("rho_inf must lie in [0, 1]")
        if not self.h > 0:
            raise ValueError("step size must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    u: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0


class _RodODE:
    """Right-hand side y = (q, u) -> (B u, M^-1 (f_int + f_ext - f_gyr))."""

    def __init__(self, rod: Rod, loads, cons: _Constraints):
        self.rod, self.loads, self.cons = rod, loads, cons
        self.n = rod.n_q
        free = cons.free
        self._const_mass = rod.mass_is_constant()
        if self._const_mass:
            M = rod.mass(np.zeros(self.n))
            self._M = M
            self._Mff_inv = np.linalg.inv(M[np.ix_(free, free)])
            self._Mfc = M[np.ix_(free, cons.fixed)]

    def __call__(self, t, y):
        rod, cons, n = self.rod, self.cons, self.n
        q = y[:n]
        u = cons.apply_u(y[n:].copy(), t)
        free = cons.free
        F = rod.internal_force(q) + rod.external_force(q, t, self.loads) - rod.gyroscopic(q, u)
        du = cons.accelerations(t, n)
        if self._const_mass:
            du[free] = self._Mff_inv @ (F[free] - self._Mfc @ du[cons.fixed])
        else:
            M = rod.mass(q)
            rhs = F[free] - M[np.ix_(free, cons.fixed)] @ du[cons.fixed]
            du[free] = sla.solve(M[np.ix_(free, free)], rhs, assume_a="pos")
        return np.concatenate([rod.qdot(q, u), du])

    def complement(self, y, ydot=None):
        """Complement update of free nodal rotations (and of their rates).

        Returns True if any node was re-parametrized.
        """
        changed = False
        for i in self.cons.rot_free_nodes:
            sl = slice(6 * i + 3, 6 * i + 6)
            psi = y[sl]
            w = math.sqrt(psi @ psi)
            if w >= math.pi:
                if ydot is not None:
                    c = 1.0 - 2.0 * math.pi / w
                    jac = c * np.eye(3) + (2.0 * math.pi / w**3) * np.outer(psi, psi)
                    ydot[sl] = jac @ ydot[sl]
                y[sl] = complement_update(psi)
                changed = True
        return changed


def dynamic_solve(rod: Rod, loads: LoadSpec | None, bcs: Sequence[BoundaryCondition], q0, u0, settings: DynamicSettings) -> Trajectory:
    cons = _Constraints(bcs, rod.n_nodes)
    q0 = cons.apply_q(np.array(q0, dtype=float), 0.0)
    # project the initial velocities onto the constraints
    u0 = cons.apply_u(np.array(u0, dtype=float), 0.0)
    ode = _RodODE(rod, loads, cons)
    y0 = np.concatenate([q0, u0])
    if settings.method == "rk45":
        ts, ys, n_steps, n_rej = dormand_prince(
            ode, y0, settings.t_end, settings.atol, settings.rtol,
            h_max=settings.h_max, t_out=settings.t_out, post_step=ode.complement,
            max_steps=settings.max_steps,
        )
    else:
        ts, ys, n_steps = generalized_alpha(
            ode, y0, settings.t_end, settings.h, settings.rho_inf,
            tol=settings.newton_tol, max_iters=settings.max_newton_iters,
            t_out=settings.t_out, post_step=ode.complement,
        )
        n_rej = 0
    n = rod.n_q
    return Trajectory(ts, ys[:, :n], ys[:, n:], n_steps, n_rej)


# -- adaptive Runge-Kutta ------------------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = _DP_B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _initial_step(f, t0, y0, f0, atol, rtol, order=5):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = f(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / order)
    return min(100 * h0, h1)


def dormand_prince(f, y0, t_end, atol, rtol, t0=0.0, h_max=math.inf, t_out=None, post_step=None, max_steps=10_000_000):
    """Embedded 5(4) Runge-Kutta pair with PI step-size control.

    ``post_step(y)`` may modify an accepted state in place (the derivative
    is then re-evaluated).  Returns ``(t, Y, n_accepted, n_rejected)``.
    """
    safety, k1, k2 = 0.9, 0.17, 0.04
    t = t0
    y = np.array(y0, dtype=float)
    fy = f(t, y)
    h = min(_initial_step(f, t, y, fy, atol, rtol), h_max, t_end - t0)
    outs = None if t_out is None else list(np.asarray(t_out, dtype=float))
    ts, ys = [t], [y.copy()]
    if outs is not None and outs and outs[0] <= t0:
        outs.pop(0)
    err_prev = 1e-4
    n_acc = n_rej = 0
    k = np.empty((7, y.size))
    while t < t_end * (1 - 1e-15) and t_end - t > 1e-14:
        if n_acc + n_rej > max_steps:
            raise StepFailure("maximum number of steps exceeded")
        target = t_end if not outs else min(outs[0], t_end)
        h_try = min(h, target - t)
        if h_try < 1e-14 * max(1.0, abs(t)):
            raise StepFailure(f"step size underflow at t = {t}")
        k[0] = fy
        for s in range(1, 7):
            k[s] = f(t + _DP_C[s] * h_try, y + h_try * (np.asarray(_DP_A[s]) @ k[:s]))
        y_new = y + h_try * (_DP_B @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((h_try * (_DP_E @ k) / sc) ** 2))
        if not np.isfinite(err):
            n_rej += 1
            h = 0.2 * h_try
            continue
        if err <= 1.0:
            n_acc += 1
            t = t + h_try
            y = y_new
            hit = abs(t - target) <= 1e-12 * max(1.0, abs(target))
            if hit:
                t = target
            if post_step is not None and post_step(y):
                fy = f(t, y)
            else:
                fy = k[6]
            if outs is None:
                ts.append(t)
                ys.append(y.copy())
            elif hit and outs and target == outs[0]:
                ts.append(t)
                ys.append(y.copy())
                outs.pop(0)
            fac = safety * max(err, 1e-10) ** (-k1) * err_prev**k2
            h = min(h_max, h_try * min(10.0, max(0.2, fac)))
            err_prev = max(err, 1e-4)
        else:
            n_rej += 1
            h = h_try * max(0.2, safety * err ** (-0.2))
    if outs is None and ts[-1] != t:
        ts.append(t)
        ys.append(y.copy())
    return np.array(ts), np.array(ys), n_acc, n_rej


# -- generalized-alpha -------------------------------------------------------------


def generalized_alpha_parameters(rho_inf):
    """(alpha_m, alpha_f, gamma) of the first-order generalized-alpha scheme."""
    alpha_m = 0.5 * (3.0 - rho_inf) / (1.0 + rho_inf)
    alpha_f = 1.0 / (1.0 + rho_inf)
    gamma = 0.5 + alpha_m - alpha_f
    return alpha_m, alpha_f, gamma


def _fd_jacobian(f, t, y, fy):
    J = np.empty((y.size, y.size))
    for j in range(y.size):
        d = 1e-7 * max(1.0, abs(y[j]))
        yp = y.copy()
        yp[j] += d
        J[:, j] = (f(t, yp) - fy) / d
    return J


def generalized_alpha(f, y0, t_end, h, rho_inf, t0=0.0, tol=1e-10, max_iters=25, t_out=None, post_step=None):
    """First-order generalized-alpha integration of y' = f(t, y).

    Stage equations are solved by simplified Newton iterations with a finite
    difference Jacobian that is refreshed when convergence slows down.
    ``post_step(y, ydot)`` may re-parametrize an accepted state in place.
    """
    am, af, gam = generalized_alpha_parameters(rho_inf)
    n_steps = int(math.ceil((t_end - t0) / h - 1e-9))
    h = (t_end - t0) / n_steps
    y = np.array(y0, dtype=float)
    yd = f(t0, y)
    outs = None if t_out is None else np.asarray(t_out, dtype=float)
    ts, ys = [t0], [y.copy()]
    out_idx = 0
    if outs is not None:
        while out_idx < outs.size and outs[out_idx] <= t0 + 0.5 * h:
            out_idx += 1
    lu = None
    yd_prev = None
    eye = np.eye(y.size)
    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * h
        t_af = t + af * h
        # linear extrapolation of the derivative as predictor
        z = 2.0 * yd - yd_prev if yd_prev is not None else yd.copy()
        converged = False
        refreshed = False
        for attempt in range(2):
            if lu is None:
                y_af = y + af * h * yd
                J = _fd_jacobian(f, t_af, y_af, f(t_af, y_af))
                lu = sla.lu_factor(am * eye - af * h * gam * J)
                refreshed = True
            prev = math.inf
            for it in range(max_iters):
                y_new = y + h * yd + h * gam * (z - yd)
                y_af = y + af * (y_new - y)
                R = yd + am * (z - yd) - f(t_af, y_af)
                dz = sla.lu_solve(lu, -R)
                z += dz
                dy = h * gam * np.abs(dz)
                size = np.max(dy / (tol + tol * np.abs(y_new)))
                if not np.isfinite(size):
                    break
                if size <= 1.0:
                    converged = True
                    break
                if it > 0 and size > 0.5 * prev and it >= 4:
                    break
                prev = size
            if converged:
                break
            if refreshed:
                break
            lu = None
            z = yd.copy()
        if not converged:
            raise NewtonDiverged(f"generalized-alpha stage solve failed at t = {t:.6g}")
        y = y + h * yd + h * gam * (z - yd)
        yd_prev, yd = yd, z
        if post_step is not None:
            flipped = post_step(y, yd)
            if flipped:
                yd_prev = None
        t_new = t0 + step * h
        if outs is None:
            ts.append(t_new)
            ys.append(y.copy())
        else:
            while out_idx < outs.size and abs(outs[out_idx] - t_new) <= 0.5 * h:
                ts.append(t_new)
                ys.append(y.copy())
                out_idx += 1
    return np.array(ts), np.array(ys), n_steps
