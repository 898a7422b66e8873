"""The benchmark experiments.

Each ``run_*`` function takes a settings dict (see ``config.DEFAULTS``) and
returns an :class:`ExperimentResult` holding CSV tables, figure data, a flat
summary and a list of solver failures.  Nothing is written to disk here.
"""
from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import liegroup as lg
from ..assembly import LoadSpec, Rod
from ..errors import AngleAtPi, NewtonDiverged, StepFailure
from ..rodcore import (
    ConstitutiveLaw,
    CrossSectionInertia,
    Mesh,
    element_strains,
    interpolate_pose,
    node_pose,
)
from ..solvers import (
    DynamicSettings,
    StaticSettings,
    clamped,
    dynamic_solve,
    pinned,
    prescribed,
    static_solve,
)
from .metrics import error_metrics, loglog_slope

log = logging.getLogger(__name__)

SOLVER_ERRORS = (NewtonDiverged, StepFailure, AngleAtPi)


@dataclass
class Table:
    name: str
    columns: list  # "name [unit]"
    rows: np.ndarray


@dataclass
class Figure:
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: list  # (label, x, y)
    logx: bool = False
    logy: bool = False
    equal_axes: bool = False


@dataclass
class ExperimentResult:
    experiment: str
    tables: list = field(default_factory=list)
    figures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _map(fn, items, jobs):
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _straight(n_el, length, origin=np.zeros(3), A0=np.eye(3)):
    """Nodal coordinates of a straight rod along the first column of A0."""
    q = np.zeros(6 * (n_el + 1))
    psi = lg.log_so3(A0) if not np.allclose(A0, np.eye(3)) else np.zeros(3)
    for i, xi in enumerate(np.linspace(0.0, 1.0, n_el + 1)):
        q[6 * i : 6 * i + 3] = origin + A0[:, 0] * length * xi
        q[6 * i + 3 : 6 * i + 6] = psi
    return q


def _strain_rows(rod: Rod, q):
    """Step profile: one row per element end, (xi, gamma, kappa)."""
    rows = []
    for e, el in enumerate(rod.elements):
        eps = element_strains(rod.element_coords(q, e), el).as_vector()
        rows.append(np.r_[el.xi0, eps])
        rows.append(np.r_[el.xi1, eps])
    return np.array(rows)


_STRAIN_COLS = ["xi [-]", "gamma_1 [-]", "gamma_2 [-]", "gamma_3 [-]", "kappa_1 [1/m]", "kappa_2 [1/m]", "kappa_3 [1/m]"]


def _strain_figures(name, title, rows):
    xi = rows[:, 0]
    return [
        Figure(f"{name}_gamma", f"{title}: dilatation and shear", "xi", "gamma",
               [(f"gamma_{i}", xi, rows[:, i]) for i in (1, 2, 3)]),
        Figure(f"{name}_kappa", f"{title}: torsion and curvatures", "xi", "kappa",
               [(f"kappa_{i}", xi, rows[:, 3 + i]) for i in (1, 2, 3)]),
    ]


# ---------------------------------------------------------------------------
# cantilever


def cantilever_rod(n_el, slenderness, length=1e3, E=1.0, G=0.5):
    """Quadratic cross-section cantilever with tip moment and follower force."""
    w = length / slenderness
    A, I = w * w, w**4 / 12.0
    law = ConstitutiveLaw.from_stiffness(E * A, G * A, 2.0 * G * I, E * I)
    rod = Rod(Mesh.uniform(n_el, J=length), law)
    k_b = E * I
    c1 = np.array([0.0, 0.0, 0.5 * math.pi * k_b / length])
    f_K = np.array([0.0, 0.0, 0.5 * math.pi * k_b / length**2])
    loads = LoadSpec(c1=c1, b1=lambda t, H: H[:3, :3] @ f_K)
    return rod, loads, _straight(n_el, length)


@functools.lru_cache(maxsize=64)
def _cantilever_solution(n_el, slenderness, atol, increments, length, E, G):
    rod, loads, q0 = cantilever_rod(n_el, slenderness, length, E, G)
    sol = static_solve(rod, loads, [clamped(0)], StaticSettings(increments, atol), q0)
    q = sol.q[-1].copy()
    q.flags.writeable = False
    return q, tuple(sol.iterations)


def solve_cantilever(n_el, slenderness, atol, increments=20, length=1e3, E=1.0, G=0.5):
    """Final configuration and Newton iteration counts (cached)."""
    q, its = _cantilever_solution(n_el, float(slenderness), float(atol), increments, float(length), float(E), float(G))
    rod = cantilever_rod(n_el, slenderness, length, E, G)[0]
    return rod, q, list(its)


def _cantilever_case(args):
    cfg, rho, atol, ref_atol = args
    kw = dict(increments=cfg["increments"], length=cfg["length"], E=cfg["youngs_modulus"], G=cfg["shear_modulus"])
    try:
        ref_rod, q_ref, _ = solve_cantilever(cfg["reference_elements"], rho, ref_atol, **kw)
    except SOLVER_ERRORS as exc:
        return rho, atol, [], None, f"reference (rho={rho:g}): {exc}"
    rows, last = [], None
    for n in cfg["n_elements"]:
        try:
            rod, q, its = solve_cantilever(n, rho, atol, **kw)
        except SOLVER_ERRORS as exc:
            return rho, atol, rows, last, f"n_el={n} (rho={rho:g}): {exc}"
        rep = error_metrics(lambda x: rod.pose(q, x), lambda x: ref_rod.pose(q_ref, x), cfg["samples"])
        rows.append([rho, atol, n, rep.e_r, rep.e_psi, max(its)])
        last = _strain_rows(rod, q)
    return rho, atol, rows, last, None


def run_cantilever(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("cantilever")
    cases = _map(
        _cantilever_case,
        [(cfg, r, a, ra) for r, a, ra in zip(cfg["slenderness"], cfg["tolerances"], cfg["reference_tolerances"])],
        jobs,
    )
    rows = []
    conv_series_r, conv_series_psi = [], []
    for rho, atol, case_rows, strains, err in cases:
        if err:
            res.failures.append(err)
        rows += case_rows
        if not case_rows:
            continue
        arr = np.array(case_rows)
        conv_series_r.append((f"e_r rho={rho:g}", arr[:, 2], arr[:, 3]))
        conv_series_psi.append((f"e_psi rho={rho:g}", arr[:, 2], arr[:, 4]))
        sel = np.isin(arr[:, 2], cfg["slope_elements"])
        if sel.sum() >= 2:
            res.summary[f"slope_e_r_rho={rho:g}"] = loglog_slope(arr[sel, 2], arr[sel, 3])
            res.summary[f"slope_e_psi_rho={rho:g}"] = loglog_slope(arr[sel, 2], arr[sel, 4])
        if strains is not None:
            tag = f"strains_rho={rho:g}_n_el={int(arr[-1, 2])}"
            res.tables.append(Table(f"cantilever_{tag}", _STRAIN_COLS, strains))
    table = np.array(rows) if rows else np.zeros((0, 6))
    res.tables.insert(0, Table(
        "cantilever_errors",
        ["slenderness [-]", "atol [N]", "n_el [-]", "e_r [m]", "e_psi [rad]", "max_newton_iterations [-]"],
        table,
    ))
    # locking: spread of the errors across slenderness at fixed n_el
    for n in cfg["n_elements"]:
        sel = table[table[:, 2] == n] if table.size else table
        if len(sel) > 1:
            for j, key in ((3, "e_r"), (4, "e_psi")):
                v = sel[:, j]
                res.summary[f"locking_spread_{key}_n_el={n}"] = float((v.max() - v.min()) / v.max())
    res.figures.append(Figure("cantilever_convergence", "Cantilever: error vs elements", "n_el", "error",
                              conv_series_r + conv_series_psi, logx=True, logy=True))
    if len(res.tables) > 1:
        first = res.tables[1]
        res.figures += _strain_figures("cantilever_strains", first.name, first.rows)
    res.notes.append(
        f"errors are measured against a {cfg['reference_elements']}-element solution of the same formulation, "
        f"converged to atol = {', '.join(f'{a:g}' for a in cfg['reference_tolerances'])}"
    )
    return res


# ---------------------------------------------------------------------------
# helix


@dataclass
class HelixGeometry:
    turns: float = 2.0
    radius: float = 10.0
    height: float = 50.0

    @property
    def c(self):
        return self.height / (2 * math.pi * self.turns * self.radius)

    @property
    def alpha_xi(self):
        return 2 * math.pi * self.turns

    @property
    def length(self):
        return math.sqrt(1 + self.c**2) * self.radius * self.alpha_xi

    def position(self, xi):
        a = self.alpha_xi * xi
        return self.radius * np.array([math.sin(a), -math.cos(a), self.c * a])

    def frame(self, xi):
        a = self.alpha_xi * xi
        s = math.sqrt(1 + self.c**2)
        ex = np.array([math.cos(a), math.sin(a), self.c]) / s
        ey = np.array([-math.sin(a), math.cos(a), 0.0])
        ez = np.array([-self.c * math.cos(a), -self.c * math.sin(a), 1.0]) / s
        return np.column_stack([ex, ey, ez])

    def strains(self):
        kappa = np.array([self.c, 0.0, 1.0]) * self.radius * self.alpha_xi**2 / self.length**2
        return np.array([1.0, 0.0, 0.0]), kappa

    def nodal_coordinates(self, n_el):
        q = np.zeros(6 * (n_el + 1))
        for i, xi in enumerate(np.linspace(0.0, 1.0, n_el + 1)):
            q[6 * i : 6 * i + 3] = self.position(xi)
            q[6 * i + 3 : 6 * i + 6] = lg.log_so3(self.frame(xi))
        return q


def helix_rod(geom: HelixGeometry, n_el, slenderness, E=1.0, G=0.5):
    L = geom.length
    r = 0.5 * L / slenderness
    A, I = math.pi * r * r, 0.25 * math.pi * r**4
    law = ConstitutiveLaw.from_stiffness(E * A, G * A, 2 * G * I, E * I)
    rod = Rod(Mesh.uniform(n_el, J=L), law)
    k_t, k_b = law.C_kappa[0, 0], law.C_kappa[1, 1]
    c1 = np.array([k_t * geom.c, 0.0, k_b]) * geom.radius * geom.alpha_xi**2 / L**2
    q0 = _straight(n_el, L, geom.position(0.0), geom.frame(0.0))
    return rod, LoadSpec(c1=c1), q0


def _helix_case(args):
    cfg, rho, atol, inc = args
    geom = HelixGeometry(cfg["turns"], cfg["radius"], cfg["height"])
    n_el = cfg["n_elements"]
    rod, loads, q0 = helix_rod(geom, n_el, rho, cfg["youngs_modulus"], cfg["shear_modulus"])
    free = np.arange(6, rod.n_q)
    q_exact = geom.nodal_coordinates(n_el)
    r_exact = (rod.internal_force(q_exact) + rod.external_force(q_exact, 1.0, loads))[free]
    out = dict(rho=rho, atol=atol, inc=inc, exact_residual=float(np.abs(r_exact).max()))
    try:
        sol = static_solve(rod, loads, [clamped(0)], StaticSettings(inc, atol), q0)
    except SOLVER_ERRORS as exc:
        out["error"] = f"rho={rho:g}: {exc}"
        return out
    q = sol.q[-1]
    g_ex, k_ex = geom.strains()
    dg = dk = 0.0
    for e, el in enumerate(rod.elements):
        s = element_strains(rod.element_coords(q, e), el)
        dg = max(dg, np.abs(s.gamma - g_ex).max())
        dk = max(dk, np.abs(s.kappa - k_ex).max() / np.abs(k_ex).max())
    out.update(
        gamma_error=dg,
        kappa_rel_error=dk,
        tip_error=float(np.linalg.norm(q[-6:-3] - geom.position(1.0))),
        max_iterations=max(sol.iterations),
        bisections=sum(sol.bisections),
        strains=_strain_rows(rod, q),
        centerline=np.array([rod.pose(q, x)[:3, 3] for x in np.linspace(0, 1, 101)]),
    )
    return out


def run_helix(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("helix")
    geom = HelixGeometry(cfg["turns"], cfg["radius"], cfg["height"])
    args = [(cfg, r, a, n) for r, a, n in zip(cfg["slenderness"], cfg["tolerances"], cfg["increments"])]
    rows = []
    for out in _map(_helix_case, args, jobs):
        rho = out["rho"]
        res.summary[f"exact_helix_residual_rho={rho:g}"] = out["exact_residual"]
        if "error" in out:
            res.failures.append(out["error"])
            rows.append([rho, out["atol"], out["inc"], out["exact_residual"], *([np.nan] * 5)])
            continue
        rows.append([rho, out["atol"], out["inc"], out["exact_residual"], out["gamma_error"],
                     out["kappa_rel_error"], out["tip_error"], out["max_iterations"], out["bisections"]])
        res.tables.append(Table(f"helix_strains_rho={rho:g}", _STRAIN_COLS, out["strains"]))
        c = out["centerline"]
        res.figures.append(Figure(f"helix_centerline_rho={rho:g}", f"Helix rho={rho:g}: centerline (x-y)",
                                  "x", "y", [("rod", c[:, 0], c[:, 1])], equal_axes=True))
    res.tables.insert(0, Table(
        "helix_summary",
        ["slenderness [-]", "atol [N]", "increments [-]", "exact_config_residual [N]", "gamma_error [-]",
         "kappa_rel_error [-]", "tip_error [m]", "max_newton_iterations [-]", "bisections [-]"],
        np.array(rows),
    ))
    res.summary["helix_length"] = geom.length
    return res


# ---------------------------------------------------------------------------
# superimposed rotation


def run_objectivity(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("objectivity")
    n_load, n_rot = cfg["load_increments"], cfg["rotation_increments"]
    n_total = n_load + n_rot
    total_angle = 2 * math.pi * cfg["turns"]
    rod, loads, q0 = cantilever_rod(cfg["n_elements"], cfg["slenderness"], cfg["length"],
                                    cfg["youngs_modulus"], cfg["shear_modulus"])

    def angle(t):
        return total_angle * max(0.0, (n_total * t - n_load) / n_rot)

    bc = prescribed(0, q=lambda t: np.array([0.0, 0.0, 0.0, angle(t), 0.0, 0.0]))
    settings = StaticSettings(n_total, cfg["tolerance"], load_factor=lambda t: min(1.0, n_total * t / n_load))
    try:
        sol = static_solve(rod, loads, [bc], settings, q0)
    except SOLVER_ERRORS as exc:
        res.failures.append(str(exc))
        return res
    U = np.array([rod.potential_energy(q) for q in sol.q])
    tip = sol.q[:, -6:-3]
    psi1 = sol.q[:, -3:]
    k = np.arange(n_total + 1)
    res.tables.append(Table(
        "objectivity_increments",
        ["increment [-]", "psi0_1 [rad]", "U [J]", "r1_x [m]", "r1_y [m]", "r1_z [m]",
         "psi1_1 [rad]", "psi1_2 [rad]", "psi1_3 [rad]", "newton_iterations [-]"],
        np.column_stack([k, [angle(t) for t in sol.t], U, tip, psi1, np.r_[0, sol.iterations]]),
    ))
    rot = slice(n_load, n_total + 1)
    U_ref = U[n_load]
    res.summary["U_after_loading"] = float(U_ref)
    res.summary["U_rel_variation"] = float(np.max(np.abs(U[rot] - U_ref)) / abs(U_ref))
    dist = np.linalg.norm(tip[rot, 1:], axis=1)
    res.summary["tip_axis_distance_rel_variation"] = float((dist.max() - dist.min()) / dist.max())
    H_a = rod.pose(sol.q[n_load], 1.0)
    H_b = rod.pose(sol.q[-1], 1.0)
    res.summary["final_pose_rotation_error"] = float(np.abs(H_a[:3, :3] - H_b[:3, :3]).max())
    res.summary["final_pose_position_error_rel"] = float(np.abs(H_a[:3, 3] - H_b[:3, 3]).max() / cfg["length"])
    jumps = np.linalg.norm(np.diff(psi1, axis=0), axis=1)
    res.summary["psi1_max_jump"] = float(jumps.max())
    res.summary["psi1_discontinuities"] = int(np.sum(jumps > math.pi))
    steps = [np.linalg.norm(lg.log_so3(rod.pose(a, 1.0)[:3, :3].T @ rod.pose(b, 1.0)[:3, :3]))
             for a, b in zip(sol.q[:-1], sol.q[1:])]
    res.summary["tip_rotation_max_step"] = float(max(steps))
    res.summary["nominal_rotation_step"] = total_angle / n_rot
    res.summary["max_newton_iterations"] = int(max(sol.iterations))
    res.figures += [
        Figure("objectivity_energy", "Potential energy vs increment", "increment", "U", [("U", k, U)]),
        Figure("objectivity_tip_position", "Tip position vs increment", "increment", "r1",
               [(f"r1_{c}", k, tip[:, i]) for i, c in enumerate("xyz")]),
        Figure("objectivity_tip_rotation_vector", "Tip rotation vector vs increment", "increment", "psi1",
               [(f"psi1_{i + 1}", k, psi1[:, i]) for i in range(3)]),
    ]
    return res


# ---------------------------------------------------------------------------
# rod bent to a helical form


def bent_helix_rod(cfg):
    L = cfg["length"]
    law = ConstitutiveLaw.from_stiffness(cfg["axial_stiffness"], cfg["shear_stiffness"],
                                         cfg["torsional_stiffness"], cfg["bending_stiffness"])
    n_el = cfg["n_elements"]
    rod = Rod(Mesh.uniform(n_el, J=L), law)
    m_I = np.array([0.0, 0.0, cfg["moment_factor"] * cfg["bending_stiffness"] / L])
    loads = LoadSpec(c1=lambda t, H: H[:3, :3].T @ m_I, b1=np.array([0.0, 0.0, cfg["tip_force"]]))
    return rod, loads, _straight(n_el, L)


def oscillation_stats(z):
    """Sign changes of a trace and the magnitudes of its extrema between them."""
    s = np.sign(z)
    nz = np.flatnonzero(s != 0)
    s = s[nz]
    changes = np.flatnonzero(s[1:] != s[:-1])
    bounds = np.r_[0, changes + 1, s.size]
    amps = np.array([np.abs(z[nz[a:b]]).max() for a, b in zip(bounds[:-1], bounds[1:]) if b > a])
    return changes.size, amps


def run_bent_helix(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("bent-helix")
    rod, loads, q0 = bent_helix_rod(cfg)
    try:
        sol = static_solve(rod, loads, [clamped(0)], StaticSettings(cfg["increments"], cfg["tolerance"]), q0)
    except SOLVER_ERRORS as exc:
        res.failures.append(str(exc))
        return res
    k = np.arange(sol.q.shape[0])
    tip = sol.q[:, -6:-3]
    res.tables.append(Table(
        "bent_helix_tip",
        ["increment [-]", "load_factor [-]", "r1_x [m]", "r1_y [m]", "r1_z [m]", "newton_iterations [-]"],
        np.column_stack([k, sol.t, tip, np.r_[0, sol.iterations]]),
    ))
    q = sol.q[-1]
    strains = _strain_rows(rod, q)
    res.tables.append(Table("bent_helix_strains", _STRAIN_COLS, strains))
    # strains sampled inside each element from the interpolated pose field
    var = 0.0
    for e, el in enumerate(rod.elements):
        samples = np.array([_field_strain(rod, q, e, s) for s in (0.1, 0.3, 0.5, 0.7, 0.9)])
        var = max(var, float(samples.var(axis=0).max()))
    res.summary["max_within_element_strain_variance"] = var
    n_changes, amps = oscillation_stats(tip[1:, 2])
    res.summary["tip_z_sign_changes"] = int(n_changes)
    res.summary["tip_z_amplitudes_decreasing_after_second"] = bool(np.all(np.diff(amps[1:]) < 0)) if amps.size > 2 else False
    res.summary["tip_final"] = [float(x) for x in tip[-1]]
    res.summary["max_newton_iterations"] = int(max(sol.iterations))
    res.summary["bisections"] = int(sum(sol.bisections))
    res.figures.append(Figure("bent_helix_tip_z", "Tip e_z-displacement vs increment", "increment", "r1_z",
                              [("r1_z", k, tip[:, 2])]))
    res.figures += _strain_figures("bent_helix_strains", "Final configuration", strains)
    res.notes.append(f"{cfg['increments']} load increments (count chosen here, not taken from the source)")
    return res


def _field_strain(rod: Rod, q, e, s):
    """(gamma, kappa) at local position s from H^-1 H' of the interpolated pose."""
    el = rod.elements[e]
    qe = rod.element_coords(q, e)
    h0 = node_pose(qe[:6])
    theta = lg.log_se3(lg.se3_inv(h0) @ node_pose(qe[6:]))
    H = h0 @ lg.exp_se3(s * theta)
    # derivative of Exp(s theta) along s is Exp(s theta) theta^
    hat = np.zeros((4, 4))
    hat[:3, :3] = lg.skew(theta[3:])
    hat[:3, 3] = theta[:3]
    dH = H @ hat / el.dxi
    g = lg.se3_inv(H) @ dH / el.J
    return np.r_[g[:3, 3], lg.unskew(g[:3, :3])]


# ---------------------------------------------------------------------------
# flexible heavy top


def heavy_top_model(cfg, soft=False):
    r, L = cfg["radius"], cfg["length"]
    E, nu = cfg["youngs_modulus"], cfg["poisson_ratio"]
    G = E / (2 * (1 + nu))
    A, I = math.pi * r * r, 0.25 * math.pi * r**4
    f = cfg["softening"] if soft else 1.0
    law = ConstitutiveLaw.from_stiffness(E * A / f, G * A / f, 2 * G * I / f, E * I / f)
    rho0 = cfg["density"]
    inertia = CrossSectionInertia(rho0 * A, rho0 * np.array([2 * I, I, I]))
    n_el = cfg["n_elements"]
    rod = Rod(Mesh.uniform(n_el, J=L), law, inertia, variant=cfg["variant"])
    g = cfg["gravity"]
    spin = cfg["spin"]
    precession = g * L / (r * r * spin)
    w = np.array([spin, 0.0, precession])
    q0 = _straight(n_el, L)
    u0 = np.zeros_like(q0)
    for i, xi in enumerate(np.linspace(0.0, 1.0, n_el + 1)):
        u0[6 * i : 6 * i + 3] = np.cross(w, [L * xi, 0.0, 0.0])
        u0[6 * i + 3 : 6 * i + 6] = w  # K- and I-components agree in the reference frame
    loads = LoadSpec(b=np.array([0.0, 0.0, -rho0 * A * g]))
    return rod, loads, q0, u0, precession


def _gravity_potential(rod: Rod, q, b):
    V = 0.0
    for e, el in enumerate(rod.elements):
        qe = rod.element_coords(q, e)
        for s, w in rod.quadrature:
            V -= w * el.length * b @ interpolate_pose(el.xi0 + s * el.dxi, qe, el)[:3, 3]
    return V


def _heavy_top_run(args):
    cfg, soft, method, tol = args
    rod, loads, q0, u0, wp = heavy_top_model(cfg, soft)
    t_end = cfg["t_end_fraction"] * 2 * math.pi / wp
    n_out = cfg["samples"]
    t_out = t_end * np.arange(n_out + 1) / n_out
    h = cfg["step"]
    if method == "generalized-alpha":
        # step size chosen so that every output time is a step
        per = math.ceil(t_end / (h * n_out))
        h = t_end / (per * n_out)
    settings = DynamicSettings(t_end=t_end, method=method, atol=tol, rtol=tol, rho_inf=cfg["rho_inf"], h=h, t_out=t_out)
    try:
        tr = dynamic_solve(rod, loads, [pinned(0)], q0, u0, settings)
    except SOLVER_ERRORS as exc:
        return dict(error=f"{'soft' if soft else 'stiff'} {method}: {exc}")
    tip = tr.q[:, -6:-3]
    L = cfg["length"]
    circle = L * np.column_stack([np.cos(wp * tr.t), np.sin(wp * tr.t), np.zeros_like(tr.t)])
    dev = np.linalg.norm(tip - circle, axis=1)
    cons = []
    for q, u in zip(tr.q, tr.u):
        d = rod.diagnostics(q, u)
        V = _gravity_potential(rod, q, loads.b)
        row = [d.T, d.U, V, d.T + d.U + V, *d.L]
        if d.J_ang is not None:
            row += list(d.J_ang)
        cons.append(row)
    return dict(t=tr.t, tip=tip, dev=dev, cons=np.array(cons), steps=tr.n_steps, rejected=tr.n_rejected,
                variant=rod.variant, h=h)


def run_heavy_top(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("heavy-top")
    runs = [
        ("stiff_rk45", False, "rk45", cfg["atol"]),
        ("stiff_generalized_alpha", False, "generalized-alpha", cfg["atol"]),
        ("stiff_rk45_calibration", False, "rk45", cfg["calibration_tol"]),
        ("soft_rk45", True, "rk45", cfg["atol"]),
        ("soft_generalized_alpha", True, "generalized-alpha", cfg["atol"]),
    ]
    outs = _map(_heavy_top_run, [(cfg, soft, m, tol) for _, soft, m, tol in runs], jobs)
    done = {}
    for (name, *_), out in zip(runs, outs):
        if "error" in out:
            res.failures.append(out["error"])
            continue
        done[name] = out
        res.tables.append(Table(
            f"heavy_top_{name}_tip",
            ["t [s]", "r1_x [m]", "r1_y [m]", "r1_z [m]", "circle_deviation [m]"],
            np.column_stack([out["t"], out["tip"], out["dev"]]),
        ))
        cols = ["t [s]", "T [J]", "U [J]", "V_gravity [J]", "E [J]", "L_x [kg m/s]", "L_y [kg m/s]", "L_z [kg m/s]"]
        if out["cons"].shape[1] > 7:
            cols += ["J_x [kg m^2/s]", "J_y [kg m^2/s]", "J_z [kg m^2/s]"]
        res.tables.append(Table(f"heavy_top_{name}_conservation", cols, np.column_stack([out["t"], out["cons"]])))
        res.summary[f"{name}_max_deviation"] = float(out["dev"].max())
        res.summary[f"{name}_steps"] = int(out["steps"])
    if "stiff_rk45_calibration" in done:
        bound = cfg["calibration_factor"] * done["stiff_rk45_calibration"]["dev"].max()
        res.summary["calibration_bound"] = float(bound)
    if "stiff_rk45" in done and "stiff_generalized_alpha" in done:
        a, b = done["stiff_rk45"], done["stiff_generalized_alpha"]
        res.summary["stiff_rk_vs_generalized_alpha"] = float(np.abs(a["tip"] - b["tip"]).max())
        res.summary["stiff_time_mismatch"] = float(np.abs(a["t"] - b["t"]).max())
    if "soft_rk45" in done and "soft_generalized_alpha" in done:
        a, b = done["soft_rk45"], done["soft_generalized_alpha"]
        res.summary["soft_rk_vs_generalized_alpha"] = float(np.abs(a["tip"] - b["tip"]).max())
    series = [(name, out["tip"][:, 0], out["tip"][:, 1]) for name, out in done.items() if "calibration" not in name]
    res.figures.append(Figure("heavy_top_tip_xy", "Tip trajectory (x-y)", "x", "y", series, equal_axes=True))
    res.figures.append(Figure("heavy_top_deviation", "Distance to the precession circle", "t", "deviation",
                              [(n, o["t"], o["dev"]) for n, o in done.items()]))
    res.figures.append(Figure("heavy_top_energy", "Total energy", "t", "E",
                              [(n, o["t"], o["cons"][:, 3]) for n, o in done.items()]))
    return res


# ---------------------------------------------------------------------------
# Lie-group self test


def _random_vectors(rng, n, max_angle, dim=3):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    ang = rng.uniform(0.0, max_angle, size=n)
    ang[:3] = (1e-9, 1e-7, 1e-4)[: min(3, n)]  # small-angle branches
    out = d * ang[:, None]
    if dim == 6:
        out = np.column_stack([rng.normal(size=(n, 3)), out])
    return out


def _fd(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    out = np.zeros(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[(...,) + idx] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h)
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0))


def liegroup_checks(samples=50, seed=0, series_terms=30, max_angle=3.0):
    """Max errors of the Lie-group kernel against identities, finite differences and series."""
    rng = np.random.default_rng(seed)
    psis = _random_vectors(rng, samples, max_angle)
    thetas = _random_vectors(rng, samples, max_angle, dim=6)
    series_psis = _random_vectors(rng, samples, 2.0)
    err = {k: 0.0 for k in (
        "log_exp_so3", "exp_log_so3", "log_exp_se3", "T_Tinv", "T_transpose",
        "d_exp_so3", "d_log_so3", "d_tangent_so3", "d_inv_tangent_so3", "d_exp_se3", "d_log_se3",
        "series_exp_so3", "series_exp_se3", "series_T", "series_T_inv",
    )}

    def up(key, v):
        err[key] = max(err[key], v)

    for psi, theta, sp in zip(psis, thetas, series_psis):
        A = lg.exp_so3(psi)
        up("log_exp_so3", float(np.abs(lg.log_so3(A) - psi).max()))
        up("exp_log_so3", float(np.abs(lg.exp_so3(lg.log_so3(A)) - A).max()))
        up("log_exp_se3", float(np.abs(lg.log_se3(lg.exp_se3(theta)) - theta).max()))
        up("T_Tinv", float(np.abs(lg.tangent_so3(psi) @ lg.inv_tangent_so3(psi) - np.eye(3)).max()))
        up("T_transpose", float(np.abs(lg.tangent_so3(-psi) - lg.tangent_so3(psi).T).max()))
        up("d_exp_so3", _rel(lg.d_exp_so3(psi), _fd(lg.exp_so3, psi)))
        up("d_tangent_so3", _rel(lg.d_tangent_so3(psi), _fd(lg.tangent_so3, psi)))
        up("d_inv_tangent_so3", _rel(lg.d_inv_tangent_so3(psi), _fd(lg.inv_tangent_so3, psi)))
        up("d_exp_se3", _rel(lg.d_exp_se3(theta), _fd(lg.exp_se3, theta)))
        if np.linalg.norm(psi) > 1e-3:  # FD of log needs a margin to the small-angle switch
            up("d_log_so3", _rel(lg.d_log_so3(A), _fd(lg.log_so3, A)))
            H = lg.exp_se3(theta)
            up("d_log_se3", _rel(lg.d_log_se3(H), _fd(lg.log_se3, H)))
        up("series_exp_so3", float(np.abs(lg.exp_so3(sp) - lg.series_oracle("exp", lg.skew(sp), series_terms)).max()))
        hat = np.zeros((4, 4))
        hat[:3, :3] = lg.skew(theta[3:])
        hat[:3, 3] = theta[:3]
        up("series_exp_se3", float(np.abs(lg.exp_se3(theta) - lg.series_oracle("exp", hat, series_terms)).max()))
        up("series_T", float(np.abs(lg.tangent_so3(sp) - lg.series_oracle("T", sp, series_terms)).max()))
        up("series_T_inv", float(np.abs(lg.inv_tangent_so3(sp) - lg.series_oracle("T_inv", sp, series_terms)).max()))
    return err


SELFTEST_TOLERANCES = {
    "log_exp_so3": 1e-11, "exp_log_so3": 1e-12, "log_exp_se3": 1e-10, "T_Tinv": 1e-12, "T_transpose": 1e-14,
    "d_exp_so3": 1e-5, "d_log_so3": 1e-5, "d_tangent_so3": 1e-5, "d_inv_tangent_so3": 1e-5,
    "d_exp_se3": 1e-5, "d_log_se3": 1e-5,
    "series_exp_so3": 1e-11, "series_exp_se3": 1e-11, "series_T": 1e-11, "series_T_inv": 1e-11,
}


def run_liegroup_selftest(cfg, jobs=1) -> ExperimentResult:
    res = ExperimentResult("liegroup-selftest")
    err = liegroup_checks(cfg["samples"], cfg["seed"], cfg["series_terms"], cfg["max_angle"])
    names = list(err)
    rows = np.array([[i, err[k], SELFTEST_TOLERANCES[k], float(err[k] <= SELFTEST_TOLERANCES[k])]
                     for i, k in enumerate(names)])
    res.tables.append(Table("liegroup_selftest", ["check_id [-]", "max_error [-]", "tolerance [-]", "passed [-]"], rows))
    res.summary.update({f"{k}": err[k] for k in names})
    res.notes += [f"check_id {i}: {k}" for i, k in enumerate(names)]
    for k in names:
        if err[k] > SELFTEST_TOLERANCES[k]:
            res.failures.append(f"{k}: {err[k]:.3e} > {SELFTEST_TOLERANCES[k]:.0e}")
    return res


RUNNERS = {
    "cantilever": run_cantilever,
    "helix": run_helix,
    "objectivity": run_objectivity,
    "bent-helix": run_bent_helix,
    "heavy-top": run_heavy_top,
    "liegroup-selftest": run_liegroup_selftest,
}
