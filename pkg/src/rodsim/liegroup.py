"""Closed-form SO(3)/SE(3) maps, tangent operators and their derivatives.

Conventions
-----------
* ``skew(w) @ r == cross(w, r)``; ``skew(w)[i, j] = -eps[i, j, k] w[k]``.
* Twists are ordered ``theta = (v, omega)``.
* Derivative tensors are dense with index order ``[i][j][k]``:
  ``d_exp_so3(psi)[i, j, k] = dA_ij / dpsi_k`` and
  ``d_log_so3(A)[i, j, k] = dpsi_i / dA_jk``.
* Below ``omega_crit`` every map switches to its first-order expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import AngleAtPi, NonSkewInput, TangentSingular

__all__ = [
    "LieConfig",
    "DEFAULT_CONFIG",
    "EPS",
    "skew",
    "unskew",
    "exp_so3",
    "log_so3",
    "tangent_so3",
    "inv_tangent_so3",
    "exp_se3",
    "log_se3",
    "se3_inv",
    "d_exp_so3",
    "d_log_so3",
    "d_tangent_so3",
    "d_inv_tangent_so3",
    "d_exp_se3",
    "d_log_se3",
    "series_oracle",
]


@dataclass(frozen=True)
class LieConfig:
    """Switch angle for the small-angle branches and default series length."""

    omega_crit: float = 1e-6
    series_terms: int = 30

    def __post_init__(self):
        if not self.omega_crit > 0.0:
            raise ValueError("omega_crit must be positive")
        if self.series_terms < 20:
            raise ValueError("series_terms must be >= 20")


DEFAULT_CONFIG = LieConfig()

# closeness to pi at which log is refused (trace test) and to 2*pi*k for T^-1
_TRACE_PI_TOL = 1e-9
_CLAMP_TOL = 1e-12
_SINGULAR_TOL = 1e-8

EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0

_I3 = np.eye(3)


def skew(omega):
    w1, w2, w3 = omega
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def unskew(m):
    m = np.asarray(m, dtype=float)
    scale = np.linalg.norm(m)
    if np.linalg.norm(m + m.T) > 1e-10 * scale:
        raise NonSkewInput("matrix is not skew-symmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _norm(x):
    return math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])


def _alpha_beta(w):
    # alpha = sin(w)/w, beta = 2(1 - cos(w))/w^2, the latter written as
    # (sin(w/2)/(w/2))^2 to avoid cancellation at small angles
    s, c = math.sin(w), math.cos(w)
    sh = math.sin(0.5 * w) / (0.5 * w)
    return s / w, sh * sh, s, c


def _gamma(w):
    # gamma = (w/2) cot(w/2)
    half = 0.5 * w
    return half * math.cos(half) / math.sin(half)


def _check_tangent_singular(w):
    k = round(w / (2.0 * math.pi))
    if k >= 1 and abs(w - 2.0 * math.pi * k) < _SINGULAR_TOL:
        raise TangentSingular(f"inverse tangent operator singular at |psi| = {w!r}")


# ---------------------------------------------------------------------------
# SO(3)


def exp_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    """Rotation matrix of the rotation vector ``psi`` (Rodrigues)."""
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    W = skew(psi)
    if w > cfg.omega_crit:
        a, b, _, _ = _alpha_beta(w)
        return _I3 + a * W + (0.5 * b) * (W @ W)
    return _I3 + W


def log_so3(a, cfg: LieConfig = DEFAULT_CONFIG):
    """Rotation vector of ``a``; the angle must stay below pi."""
    a = np.asarray(a, dtype=float)
    tr = a[0, 0] + a[1, 1] + a[2, 2]
    if tr <= -1.0 + _TRACE_PI_TOL:
        raise AngleAtPi("rotation angle too close to pi")
    v = np.array([a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]])
    cos_w = 0.5 * (tr - 1.0)
    if cos_w > 1.0 + _CLAMP_TOL or cos_w < -1.0 - _CLAMP_TOL:
        raise ValueError("trace outside the range of a rotation matrix")
    w = math.acos(min(1.0, max(-1.0, cos_w)))
    if w > cfg.omega_crit:
        return (w / (2.0 * math.sin(w))) * v
    return 0.5 * v


def tangent_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    """Tangent operator T with omega_K = T(psi) psi_dot."""
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    W = skew(psi)
    if w > cfg.omega_crit:
        a, b, _, _ = _alpha_beta(w)
        return _I3 - (0.5 * b) * W + ((1.0 - a) / (w * w)) * (W @ W)
    return _I3 - 0.5 * W


def inv_tangent_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    W = skew(psi)
    if w > cfg.omega_crit:
        _check_tangent_singular(w)
        g = _gamma(w)
        return _I3 + 0.5 * W + ((1.0 - g) / (w * w)) * (W @ W)
    return _I3 + 0.5 * W


def _sym_product_term(W):
    # d(W @ W)_ij / d psi_k = eps_kli W_lj + W_il eps_kjl
    return np.einsum("kli,lj->ijk", EPS, W) + np.einsum("il,kjl->ijk", W, EPS)


def d_exp_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    if w <= cfg.omega_crit:
        return -EPS.copy()
    W = skew(psi)
    W2 = W @ W
    a, b, _, c = _alpha_beta(w)
    w2 = w * w
    out = -a * EPS
    out += ((c - a) / w2) * np.multiply.outer(W, psi)
    out += ((a - b) / w2) * np.multiply.outer(W2, psi)
    out += (0.5 * b) * _sym_product_term(W)
    return out


def d_log_so3(a, cfg: LieConfig = DEFAULT_CONFIG):
    a = np.asarray(a, dtype=float)
    tr = a[0, 0] + a[1, 1] + a[2, 2]
    if tr <= -1.0 + _TRACE_PI_TOL:
        raise AngleAtPi("rotation angle too close to pi")
    w = math.acos(min(1.0, max(-1.0, 0.5 * (tr - 1.0))))
    if w <= cfg.omega_crit:
        return -0.5 * EPS
    s, c = math.sin(w), math.cos(w)
    v = np.array([a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]])
    out = -(w / (2.0 * s)) * EPS
    out += ((w * c - s) / (4.0 * s**3)) * np.multiply.outer(v, _I3)
    return out


def d_tangent_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    if w <= cfg.omega_crit:
        return 0.5 * EPS
    W = skew(psi)
    W2 = W @ W
    a, b, _, c = _alpha_beta(w)
    w2 = w * w
    out = (0.5 * b) * EPS
    out += ((b - a) / w2) * np.multiply.outer(W, psi)
    out += ((1.0 - a) / w2) * _sym_product_term(W)
    out += ((3.0 * a - 2.0 - c) / (w2 * w2)) * np.multiply.outer(W2, psi)
    return out


def d_inv_tangent_so3(psi, cfg: LieConfig = DEFAULT_CONFIG):
    psi = np.asarray(psi, dtype=float)
    w = _norm(psi)
    if w <= cfg.omega_crit:
        return -0.5 * EPS
    _check_tangent_singular(w)
    W = skew(psi)
    W2 = W @ W
    g = _gamma(w)
    w2 = w * w
    out = -0.5 * EPS
    out += ((1.0 - g) / w2) * _sym_product_term(W)
    coef = (0.25 - (2.0 * (1.0 - g) + g * (1.0 - g)) / w2) / w2
    out += coef * np.multiply.outer(W2, psi)
    return out


# ---------------------------------------------------------------------------
# SE(3)


def se3_inv(h):
    """Inverse of a homogeneous transformation."""
    out = np.eye(4)
    out[:3, :3] = h[:3, :3].T
    out[:3, 3] = -h[:3, :3].T @ h[:3, 3]
    return out


def exp_se3(theta, cfg: LieConfig = DEFAULT_CONFIG):
    theta = np.asarray(theta, dtype=float)
    v, om = theta[:3], theta[3:]
    h = np.eye(4)
    h[:3, :3] = exp_so3(om, cfg)
    h[:3, 3] = tangent_so3(om, cfg).T @ v
    return h


def log_se3(h, cfg: LieConfig = DEFAULT_CONFIG):
    h = np.asarray(h, dtype=float)
    psi = log_so3(h[:3, :3], cfg)
    theta = np.empty(6)
    theta[:3] = inv_tangent_so3(psi, cfg).T @ h[:3, 3]
    theta[3:] = psi
    return theta


def d_exp_se3(theta, cfg: LieConfig = DEFAULT_CONFIG):
    """``[i, j, k] = dH_ij / dtheta_k`` (4 x 4 x 6)."""
    theta = np.asarray(theta, dtype=float)
    v, om = theta[:3], theta[3:]
    out = np.zeros((4, 4, 6))
    out[:3, :3, 3:] = d_exp_so3(om, cfg)
    out[:3, 3, :3] = tangent_so3(om, cfg).T
    out[:3, 3, 3:] = np.einsum("l,lik->ik", v, d_tangent_so3(om, cfg))
    return out


def d_log_se3(h, cfg: LieConfig = DEFAULT_CONFIG):
    """``[i, j, k] = dtheta_i / dH_jk`` (6 x 4 x 4)."""
    h = np.asarray(h, dtype=float)
    a, r = h[:3, :3], h[:3, 3]
    psi = log_so3(a, cfg)
    dlog = d_log_so3(a, cfg)
    out = np.zeros((6, 4, 4))
    out[:3, :3, :3] = np.einsum("l,lim,mjk->ijk", r, d_inv_tangent_so3(psi, cfg), dlog)
    out[:3, :3, 3] = inv_tangent_so3(psi, cfg).T
    out[3:, :3, :3] = dlog
    return out


# ---------------------------------------------------------------------------
# Truncated-series oracle (testing only)


def _bernoulli(n):
    """First ``n`` Bernoulli numbers B_0..B_{n-1} with B_1 = -1/2."""
    b = []
    for m in range(n):
        acc = Fraction(0)
        for k in range(m):
            acc += Fraction(math.comb(m + 1, k)) * b[k]
        b.append(Fraction(1) if m == 0 else -acc / (m + 1))
    return [float(x) for x in b]


def _box(x):
    """Matrix of x -> j^-1(ad_j(x)(j(.))) on so(3) (len 3) or se(3) (len 6)."""
    x = np.asarray(x, dtype=float)
    if x.size == 3:
        return skew(x)
    if x.size == 6:
        out = np.zeros((6, 6))
        out[:3, :3] = skew(x[3:])
        out[:3, 3:] = skew(x[:3])
        out[3:, 3:] = skew(x[3:])
        return out
    raise ValueError("expected a 3- or 6-vector")


def series_oracle(kind, arg, n_terms=DEFAULT_CONFIG.series_terms):
    """Evaluate the defining power series of a Lie-group map.

    kind
        ``"exp"``: ``arg`` is a square matrix X, returns sum X^i/i!.
        ``"dexp"`` / ``"dexp_inv"``: ``arg = (X, Y)``, returns the series
        applied to Y (coefficients 1/(i+1)! resp. B_i/i! on ad_X^i).
        ``"T"`` / ``"T_inv"``: ``arg`` is a 3- or 6-vector, returns the
        tangent operator (inverse) matrix.
    """
    if n_terms < 10:
        raise ValueError("n_terms must be >= 10")
    if kind == "exp":
        x = np.asarray(arg, dtype=float)
        out = np.eye(x.shape[0])
        term = np.eye(x.shape[0])
        for i in range(1, n_terms):
            term = term @ x / i
            out = out + term
        return out
    if kind in ("dexp", "dexp_inv"):
        x, y = (np.asarray(z, dtype=float) for z in arg)
        coef = (
            [1.0 / math.factorial(i + 1) for i in range(n_terms)]
            if kind == "dexp"
            else [bi / math.factorial(i) for i, bi in enumerate(_bernoulli(n_terms))]
        )
        out = np.zeros_like(y)
        ad = y
        for c in coef:
            out = out + c * ad
            ad = x @ ad - ad @ x
        return out
    if kind in ("T", "T_inv"):
        box = _box(arg)
        if kind == "T":
            coef = [(-1.0) ** i / math.factorial(i + 1) for i in range(n_terms)]
        else:
            coef = [(-1.0) ** i * bi / math.factorial(i) for i, bi in enumerate(_bernoulli(n_terms))]
        out = np.zeros_like(box)
        power = np.eye(box.shape[0])
        for c in coef:
            out = out + c * power
            power = power @ box
        return out
    raise ValueError(f"unknown series kind {kind!r}")
