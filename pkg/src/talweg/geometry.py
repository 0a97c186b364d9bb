"""Gradient extremals, talweg and crest points, valleys.

Eigen-indices are 1-based throughout (i = 1 is the talweg, i = d the crest).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceError,
    CriticalPointError,
    DegenerateSpectrumError,
    LevelTooSmallError,
    ScanError,
    TrackingError,
)
from .field import GAP_TOL, ScalarField, third_directional
from .spectra import SpectralFrame, align_frame, decompose

CORRECTOR_TOL = 1e-8
MAX_CORRECTOR_ITERS = 25
SECOND_ORDER_TOL = 1e-10


@dataclass(frozen=True)
class ValleySpec:
    """Valley of width ``width`` around ``center`` inside a working ball."""

    center: np.ndarray
    width: float
    radius: float = 0.25

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("valley width must be nonnegative")
        if self.radius <= 0:
            raise ValueError("working radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def _eigs_batch(field, X, gap_tol=GAP_TOL):
    H = field.hess(X)
    lam = np.linalg.eigvalsh(H)
    gaps = np.diff(lam, axis=-1)
    if gaps.size and gaps.min() <= gap_tol:
        k = int(np.unravel_index(np.argmin(gaps), gaps.shape)[-1])
        raise DegenerateSpectrumError(
            f"eigenvalues {k + 1} and {k + 2} collide along the evaluated points",
            pair=(k + 1, k + 2),
        )
    return H, lam


def _relative_residual(field, X, i):
    """Residual |H g - lambda_i g| / |g| for a batch; NaN where g = 0."""
    X = np.asarray(X, dtype=float)
    g = field.grad(X)
    H, lam = _eigs_batch(field, X)
    Hg = np.einsum("...ij,...j->...i", H, g)
    num = np.linalg.norm(Hg - lam[..., i - 1, None] * g, axis=-1)
    gn = np.linalg.norm(g, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(gn > 0, num / gn, np.nan)


def extremal_residual(field: ScalarField, x, i) -> float:
    """Relative defect of grad f(x) being a lambda_i-eigenvector of Hess f(x)."""
    x = np.asarray(x, dtype=float)
    if not 1 <= i <= field.dim:
        raise ValueError(f"index {i} out of range 1..{field.dim}")
    r = _relative_residual(field, x, i)
    if np.any(np.isnan(r)):
        raise CriticalPointError("gradient vanishes: the extremal residual is undefined")
    return float(r) if np.ndim(r) == 0 else r


def is_in_valley(field: ScalarField, spec: ValleySpec, x):
    """Membership in the width-w valley; x* itself is a member by convention.

    Accepts a single point or a batch of shape (..., d).
    """
    x = np.asarray(x, dtype=float)
    dist = np.linalg.norm(x - spec.center, axis=-1)
    if np.any(dist > spec.radius * (1 + 1e-12)):
        raise ValueError("point outside the working ball of the valley")
    at_center = dist == 0
    safe = np.where(at_center[..., None], spec.center + spec.radius * 0.5 / np.sqrt(x.shape[-1]), x)
    r = _relative_residual(field, safe, 1)
    if np.any(np.isnan(r) & ~at_center):
        raise CriticalPointError("gradient vanishes away from x* inside the valley ball")
    out = at_center | (r <= spec.width)
    return bool(out) if out.ndim == 0 else out


def quadratic_valley_membership(frame: SpectralFrame, w, y):
    """Membership of y in the cone |(A^2 - lambda_1 A) y| <= w |A y|, A = Hess f(x*)."""
    y = np.asarray(y, dtype=float)
    A = frame.matrix
    Ay = y @ A
    lhs = np.linalg.norm(Ay @ A - frame.eigenvalues[0] * Ay, axis=-1)
    rhs = w * np.linalg.norm(Ay, axis=-1)
    out = lhs <= rhs * (1 + 1e-12) + 1e-300
    return bool(out) if out.ndim == 0 else out


def tangent_cone_probe(field: ScalarField, spec: ValleySpec, h, scales):
    """Valley membership of x* + tau h for each tau in ``scales``."""
    h = np.asarray(h, dtype=float)
    if abs(np.linalg.norm(h) - 1) > 1e-12:
        raise ValueError("h must be a unit vector")
    scales = np.asarray(scales, dtype=float)
    if np.any(np.diff(scales) >= 0) or np.any(scales <= 0):
        raise ValueError("scales must be positive and strictly descending")
    return np.array([is_in_valley(field, spec, spec.center + s * h) for s in scales])


# ---------------------------------------------------------------------------
# continuation of gradient extremals


@dataclass
class ExtremalCurve:
    """Polyline on the i-th gradient extremal, starting at x*."""

    index: int
    points: np.ndarray
    arclength: np.ndarray
    residuals: np.ndarray
    eigenvalue_along: np.ndarray
    direction: int = 1
    step: float = 0.0
    stop_reason: str = "arclength"

    @property
    def initial_tangent(self):
        v = self.points[1] - self.points[0]
        return v / np.linalg.norm(v)

    @property
    def stalled(self):
        return self.stop_reason == "stall"


def _reduced_gradient(field, x, i, ref):
    """z(x) = P(x)^T grad f(x) without its i-th entry, frame aligned to ``ref``."""
    fr = align_frame(decompose(field.hess(x), x), ref)
    z = fr.eigenvectors.T @ field.grad(x)
    return np.delete(z, i - 1), fr


def _reduced_jacobian(field, x, i, ref):
    d = x.size
    h = 1e-6 * max(1.0, np.linalg.norm(x))
    J = np.empty((d - 1, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        sp, _ = _reduced_gradient(field, x + e, i, ref)
        sm, _ = _reduced_gradient(field, x - e, i, ref)
        J[:, k] = (sp - sm) / (2 * h)
    return J


def _correct(field, x, i, ref, tol):
    for _ in range(MAX_CORRECTOR_ITERS + 1):
        S, fr = _reduced_gradient(field, x, i, ref)
        g = field.grad(x)
        gn = np.linalg.norm(g)
        res = extremal_residual(field, x, i) if gn > 0 else np.inf
        if np.linalg.norm(S) <= tol * (1 + gn) and res <= tol:
            return x, fr, res
        J = _reduced_jacobian(field, x, i, fr)
        x = x - np.linalg.lstsq(J, S, rcond=None)[0]
        if not np.all(np.isfinite(x)):
            break
    raise ConvergenceError("corrector did not converge")


def trace_extremal(
    field: ScalarField,
    x_star,
    i,
    step=1e-3,
    max_arclength=0.2,
    direction=1,
    radius=0.25,
    tol=CORRECTOR_TOL,
) -> ExtremalCurve:
    """Predictor-corrector continuation of Ext_i from x* along direction * v_i(x*).

    Solves z_j(x) = 0 for all j != i, where z = P^T grad f with eigenframes
    sign-aligned along the curve. The predictor is a secant step (the first
    step follows v_i(x*)); the corrector is Gauss-Newton with a
    finite-difference Jacobian, accepted once the relative extremal residual
    is below ``tol``. A corrector failure is retried with half and quarter
    steps before the curve is returned with ``stop_reason="stall"``.
    """
    x_star = np.asarray(x_star, dtype=float)
    d = field.dim
    if not 1 <= i <= d:
        raise ValueError(f"index {i} out of range 1..{d}")
    if step <= 0:
        raise ValueError("step must be positive")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if np.linalg.norm(field.grad(x_star)) > 1e-9:
        raise CriticalPointError("trace_extremal must start at a critical point")
    frame0 = decompose(field.hess(x_star), x_star)
    points = [x_star.copy()]
    arcs = [0.0]
    resid = [0.0]
    lams = [frame0.value(i)]
    ref = frame0
    tangent = direction * frame0.vector(i)
    reason = "arclength"
    while arcs[-1] < max_arclength - 1e-3 * step:
        x = points[-1]
        done = False
        for frac in (1.0, 0.5, 0.25):
            h = min(step * frac, max_arclength - arcs[-1])
            try:
                xn, fr, res = _correct(field, x + h * tangent, i, ref, tol)
            except (ConvergenceError, TrackingError, DegenerateSpectrumError):
                continue
            if np.dot(xn - x, tangent) <= 0:
                continue
            done = True
            break
        if not done:
            reason = "stall"
            break
        if np.linalg.norm(xn - x_star) > radius:
            reason = "radius"
            break
        tangent = (xn - x) / np.linalg.norm(xn - x)
        arcs.append(arcs[-1] + np.linalg.norm(xn - x))
        points.append(xn)
        resid.append(res)
        lams.append(fr.value(i))
        ref = fr
    return ExtremalCurve(
        index=i,
        points=np.array(points),
        arclength=np.array(arcs),
        residuals=np.array(resid),
        eigenvalue_along=np.array(lams),
        direction=direction,
        step=step,
        stop_reason=reason,
    )


# ---------------------------------------------------------------------------
# talweg and crest points on level sets


@dataclass
class TalwegBranchPoint:
    level: float
    point: np.ndarray
    branch: str
    multiplier: float
    second_order_ok: bool
    second_order_margin: float = float("nan")


def _radial_level_point(field, x_star, u, r, radius):
    """x* + t u with f = r, t found by bracketing then Brent."""
    f0 = float(field.value(x_star))

    def phi(t):
        return float(field.value(x_star + t * u)) - r

    lam = max(float(np.linalg.eigvalsh(field.hess(x_star))[-1]), 1e-12)
    t_hi = np.sqrt(2 * (r - f0) / lam)
    while phi(t_hi) < 0:
        t_hi *= 2
        if radius is not None and t_hi > 4 * radius or t_hi > 1e6:
            raise ValueError(f"level {r:g} not reached within the working ball along {u}")
    return x_star + brentq(phi, 0.0, t_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps) * u


def _kkt_newton(field, x, lam, r, scale, max_iter=60):
    """Newton on F(x, lam) = (H g - lam g, f - r); ``scale`` ~ |x - x*|."""
    d = field.dim
    for _ in range(max_iter):
        g = field.grad(x)
        H = field.hess(x)
        F = np.concatenate([H @ g - lam * g, [float(field.value(x)) - r]])
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = third_directional(field, x, g) + H @ H - lam * H
        J[:d, d] = -g
        J[d, :d] = g
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular KKT Jacobian") from None
        x = x + delta[:d]
        lam = lam + delta[d]
        if not np.all(np.isfinite(x)):
            break
        if np.linalg.norm(delta[:d]) <= 1e-13 * scale and abs(delta[d]) <= 1e-12 * (1 + abs(lam)):
            return x, lam
    raise ConvergenceError(f"KKT Newton did not converge at level {r:g}")


def _second_order(field, x, lam, mode):
    g = field.grad(x)
    H = field.hess(x)
    Q = third_directional(field, x, g) + H @ H - lam * H
    # orthonormal basis of the gradient-orthogonal complement
    _, _, Vt = np.linalg.svd(g[None, :])
    B = Vt[1:].T
    ev = np.linalg.eigvalsh(B.T @ Q @ B)
    if mode == "min":
        return bool(ev[0] >= SECOND_ORDER_TOL), float(ev[0])
    return bool(ev[-1] <= -SECOND_ORDER_TOL), float(ev[-1])


def talweg_points(field: ScalarField, x_star, r, mode="min", radius=None):
    """The two talweg (mode="min") or crest (mode="max") points on [f = r].

    Solves Hess f(x) grad f(x) = lam grad f(x), f(x) = r by Newton's method
    on (x, lam), seeded on the level set along -v and +v, v = v_1(x*) or
    v_d(x*). Returns ``(minus, plus)`` ordered by the sign of <theta - x*, v>.
    """
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    x_star = np.asarray(x_star, dtype=float)
    r_star = float(field.value(x_star))
    if not r > r_star:
        raise LevelTooSmallError(f"level {r!r} is not above f(x*) = {r_star!r}", level=r)
    frame = decompose(field.hess(x_star), x_star)
    idx = 1 if mode == "min" else field.dim
    v = frame.vector(idx)
    out = []
    for sign, name in ((-1, "minus"), (1, "plus")):
        seed = _radial_level_point(field, x_star, sign * v, r, radius)
        lam0 = np.linalg.eigvalsh(field.hess(seed))[idx - 1]
        theta, lam = _kkt_newton(field, seed, lam0, r, np.linalg.norm(seed - x_star))
        if np.sign(np.dot(theta - x_star, v)) != sign:
            raise LevelTooSmallError(
                f"Newton from the {name} seed crossed to the other branch at level {r:g}", level=r
            )
        ok, margin = _second_order(field, theta, lam, mode)
        out.append(TalwegBranchPoint(r, theta, name, float(lam), ok, margin))
    sep = np.linalg.norm(out[1].point - out[0].point)
    if sep <= 1e-12 * max(1.0, np.linalg.norm(x_star)):
        raise LevelTooSmallError(f"talweg branches collide at level {r:g}", level=r)
    return out[0], out[1]


@dataclass
class BranchSeries:
    """Talweg branch sampled over levels, with its speed |d theta / dr|."""

    branch: str
    levels: np.ndarray
    points: np.ndarray
    grad_norm: np.ndarray
    speed: np.ndarray
    multiplier: np.ndarray
    second_order_ok: np.ndarray

    @property
    def product(self):
        return self.speed * self.grad_norm


def talweg_branch_scan(field: ScalarField, x_star, levels, mode="min", rel_step=1e-5, radius=None):
    """Chain talweg points across ascending levels; differentiate theta(r).

    theta'(r) is a central difference with step ``rel_step * (r - r*)``.
    Branches are chained by nearest neighbour, accepted within half the
    current inter-branch distance.
    """
    levels = np.asarray(levels, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    r_star = float(field.value(x_star))
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be strictly ascending")
    if np.any(levels <= r_star):
        bad = float(levels[levels <= r_star][0])
        raise LevelTooSmallError(f"level {bad!r} is not above f(x*) = {r_star!r}", level=bad)
    cols = {"minus": [], "plus": []}
    prev = None
    for r in levels:
        pair = talweg_points(field, x_star, r, mode, radius)
        pts = np.array([p.point for p in pair])
        if prev is not None:
            D = np.linalg.norm(prev[:, None, :] - pts[None, :, :], axis=-1)
            assign = np.argmin(D, axis=1)
            accept = 0.5 * np.linalg.norm(pts[0] - pts[1])
            if assign[0] == assign[1] or D[[0, 1], assign].max() > accept:
                raise ScanError(f"ambiguous branch chaining at level {r:g}")
            pair = tuple(pair[k] for k in assign)
        dr = rel_step * (r - r_star)
        lo = talweg_points(field, x_star, r - dr, mode, radius)
        hi = talweg_points(field, x_star, r + dr, mode, radius)
        for k, bp in enumerate(pair):
            name = ("minus", "plus")[k]
            j = 0 if bp.branch == "minus" else 1
            deriv = (hi[j].point - lo[j].point) / (2 * dr)
            cols[name].append(
                (r, bp.point, np.linalg.norm(field.grad(bp.point)), np.linalg.norm(deriv),
                 bp.multiplier, bp.second_order_ok)
            )
        prev = np.array([bp.point for bp in pair])
    out = {}
    for name, rows in cols.items():
        r, p, gn, sp, mul, ok = zip(*rows)
        out[name] = BranchSeries(name, np.array(r), np.array(p), np.array(gn), np.array(sp),
                                 np.array(mul), np.array(ok))
    return out


def level_set_samples(field: ScalarField, x_star, r, n=64, seed=0, radius=None):
    """n points of [f = r] near x*, one per seeded random direction."""
    rng = np.random.default_rng(seed)
    x_star = np.asarray(x_star, dtype=float)
    U = rng.standard_normal((n, field.dim))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return np.array([_radial_level_point(field, x_star, u, r, radius) for u in U])
