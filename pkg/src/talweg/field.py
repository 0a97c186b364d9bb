"""C^3 objective functions with exact or finite-difference derivatives.

Every callable attached to a :class:`ScalarField` is expected to broadcast
over leading axes: ``value_fn`` maps ``(..., d) -> (...)``, ``grad_fn`` maps
``(..., d) -> (..., d)`` and ``hess_fn`` maps ``(..., d) -> (..., d, d)``.
Fields without analytic derivatives fall back to central differences, which
are computed point by point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.stats import qmc

from .errors import (
    ConfigError,
    CriticalPointError,
    DegenerateConfigError,
    EvaluationError,
)

EPS = np.finfo(float).eps
CRIT_TOL = 1e-9
GAP_TOL = 1e-6
MAX_DIM = 64


def _symmetrize(h):
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def _check_finite(arr, x, what):
    if not np.all(np.isfinite(arr)):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            bad = ~np.isfinite(np.asarray(arr)).reshape(x.shape[:-1] + (-1,)).all(axis=-1)
            x = x[bad][0]
        raise EvaluationError(f"non-finite {what} at x={x.tolist()}", point=x)


@dataclass(frozen=True)
class ScalarField:
    """A C^3 objective on R^dim.

    Only ``value_fn`` is mandatory; missing derivatives are replaced by
    central finite differences (see :func:`fd_gradient`, :func:`fd_hessian`).
    ``third_fn(x, u)`` returns the matrix ``D^3 f(x)[u]``.
    """

    dim: int
    value_fn: Callable
    grad_fn: Optional[Callable] = None
    hess_fn: Optional[Callable] = None
    third_fn: Optional[Callable] = None
    name: str = "custom"
    params: Mapping = dc_field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {self.dim!r}")
        if self.dim > MAX_DIM:
            raise ConfigError(f"dim {self.dim} exceeds the dense limit {MAX_DIM}")

    def _point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x):
        x = self._point(x)
        v = np.asarray(self.value_fn(x), dtype=float)
        _check_finite(v, x, "value")
        return v

    def grad(self, x):
        x = self._point(x)
        if self.grad_fn is not None:
            g = np.asarray(self.grad_fn(x), dtype=float)
        else:
            g = _pointwise(lambda p: fd_gradient(self.value_fn, p), x, (self.dim,))
        _check_finite(g, x, "gradient")
        return g

    def hess(self, x):
        x = self._point(x)
        if self.hess_fn is not None:
            h = np.asarray(self.hess_fn(x), dtype=float)
        elif self.grad_fn is not None:
            h = _pointwise(lambda p: _fd_jacobian(self.grad_fn, p), x, (self.dim, self.dim))
        else:
            h = _pointwise(lambda p: fd_hessian(self.value_fn, p), x, (self.dim, self.dim))
        _check_finite(h, x, "Hessian")
        return _symmetrize(h)

    def trace_hess(self, x):
        return np.trace(self.hess(x), axis1=-2, axis2=-1)


def _pointwise(fn, x, out_shape):
    if x.ndim == 1:
        return fn(x)
    flat = x.reshape(-1, x.shape[-1])
    out = np.stack([fn(p) for p in flat])
    return out.reshape(x.shape[:-1] + out_shape)


def fd_gradient(value_fn, x):
    """Central-difference gradient with step eps^(1/3) * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    h = np.cbrt(EPS) * max(1.0, np.linalg.norm(x))
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (float(value_fn(x + e)) - float(value_fn(x - e))) / (2 * h)
    return g


def fd_hessian(value_fn, x):
    """Second-difference Hessian from values only, step eps^(1/4) * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = EPS**0.25 * max(1.0, np.linalg.norm(x))
    f0 = float(value_fn(x))
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (float(value_fn(x + ei)) - 2 * f0 + float(value_fn(x - ei))) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (
                float(value_fn(x + ei + ej))
                - float(value_fn(x + ei - ej))
                - float(value_fn(x - ei + ej))
                + float(value_fn(x - ei - ej))
            ) / (4 * h**2)
    return H


def _fd_jacobian(vec_fn, x):
    x = np.asarray(x, dtype=float)
    h = np.cbrt(EPS) * max(1.0, np.linalg.norm(x))
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(vec_fn(x + e)) - np.asarray(vec_fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def eval_derivatives(field: ScalarField, x):
    """Return ``(value, gradient, Hessian)`` at a single point.

    Analytic derivatives are used when attached, central differences
    otherwise. The Hessian is always symmetrized.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (field.dim,):
        raise ValueError(f"expected a point of dimension {field.dim}, got shape {x.shape}")
    return float(field.value(x)), field.grad(x), field.hess(x)


def third_directional(field: ScalarField, x, u):
    """Matrix ``h -> D^3 f(x)[u, h, .]``.

    Falls back to ``(H(x + s u) - H(x - s u)) / 2s`` with
    ``s = sqrt(eps) * max(1, |x|) / |u|``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    nu = np.linalg.norm(u)
    if nu == 0:
        raise ValueError("third_directional needs a nonzero direction u")
    if field.third_fn is not None:
        T = np.asarray(field.third_fn(x, u), dtype=float)
    else:
        s = np.sqrt(EPS) * max(1.0, np.linalg.norm(x)) / nu
        T = (field.hess(x + s * u) - field.hess(x - s * u)) / (2 * s)
    _check_finite(T, x, "third derivative")
    return _symmetrize(T)


# ---------------------------------------------------------------------------
# polynomial fields


class Polynomial:
    """Sparse multivariate polynomial ``sum_k c_k prod_j x_j^{e_kj}``.

    Evaluation broadcasts over leading axes of ``x``.
    """

    def __init__(self, coeffs, exponents, dim=None):
        exponents = np.asarray(exponents, dtype=int)
        coeffs = np.asarray(coeffs, dtype=float)
        if exponents.ndim != 2:
            if dim is None or exponents.size:
                raise ConfigError("exponents must be a list of integer vectors")
            exponents = exponents.reshape(0, dim)
        if dim is not None and exponents.shape[1] != dim:
            raise ConfigError(f"monomials must have {dim} exponents")
        if coeffs.shape != (exponents.shape[0],):
            raise ConfigError("one coefficient per monomial is required")
        if np.any(exponents < 0):
            raise ConfigError("negative exponents are not polynomial")
        keep = coeffs != 0
        self.coeffs = coeffs[keep]
        self.exponents = exponents[keep]
        self.dim = exponents.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not len(self.coeffs):
            return np.zeros(x.shape[:-1])
        # (..., m, d) powers, product over d
        mono = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        return mono @ self.coeffs

    def derivative(self, j):
        e = self.exponents[:, j]
        keep = e > 0
        exps = self.exponents[keep].copy()
        coeffs = self.coeffs[keep] * e[keep]
        exps[:, j] -= 1
        return Polynomial(coeffs, exps, dim=self.dim)

    @property
    def degree(self):
        return int(self.exponents.sum(axis=1).max()) if len(self.coeffs) else 0


def polynomial_field(dim, terms, name="polynomial", params=None) -> ScalarField:
    """Build a field from ``[(coeff, [e_1, ..., e_d]), ...]`` with exact derivatives."""
    terms = list(terms)
    if not terms:
        raise ConfigError("polynomial needs at least one term")
    try:
        coeffs = [float(c) for c, _ in terms]
        exps = [list(e) for _, e in terms]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad polynomial term list: {exc}") from None
    p = Polynomial(coeffs, exps, dim=dim)
    g = [p.derivative(j) for j in range(dim)]
    h = [[g[i].derivative(j) for j in range(dim)] for i in range(dim)]
    t = [[[h[i][j].derivative(k) for k in range(dim)] for j in range(dim)] for i in range(dim)]

    def grad_fn(x):
        return np.stack([gj(x) for gj in g], axis=-1)

    def hess_fn(x):
        return np.stack([np.stack([hij(x) for hij in row], axis=-1) for row in h], axis=-2)

    def third_fn(x, u):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        for k in range(dim):
            if u[k] == 0:
                continue
            out = out + u[k] * np.stack(
                [np.stack([t[i][j][k](x) for j in range(dim)], axis=-1) for i in range(dim)],
                axis=-2,
            )
        return out

    return ScalarField(
        dim=dim,
        value_fn=p,
        grad_fn=grad_fn,
        hess_fn=hess_fn,
        third_fn=third_fn,
        name=name,
        params=dict(params or {}),
    )


def _quadratic_terms(A):
    """Monomials of 0.5 * x^T A x."""
    d = A.shape[0]
    terms = []
    for i in range(d):
        for j in range(i, d):
            c = 0.5 * A[i, i] if i == j else A[i, j]
            if c != 0:
                e = [0] * d
                e[i] += 1
                e[j] += 1
                terms.append((c, e))
    return terms


# ---------------------------------------------------------------------------
# builtins


def _lambdas(params, key="lambdas"):
    if key not in params:
        raise ConfigError(f"missing parameter {key!r}")
    try:
        lam = np.asarray(params[key], dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a list of reals") from None
    if lam.size < 1 or not np.all(np.isfinite(lam)):
        raise ConfigError(f"parameter {key!r} must be a nonempty list of finite reals")
    if np.any(lam == 0):
        raise ConfigError("eigenvalues must be nonzero (nondegenerate critical point)")
    s = np.sort(lam)
    gaps = np.diff(s)
    if np.any(gaps <= GAP_TOL):
        k = int(np.argmin(gaps))
        raise DegenerateConfigError(
            f"repeated eigenvalues {s[k]:g} and {s[k + 1]:g}: degenerate spectrum",
            pair=(k + 1, k + 2),
        )
    return lam


def _real(params, key, default=None):
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}")
        return float(default)
    try:
        v = float(params[key])
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a real number") from None
    if not np.isfinite(v):
        raise ConfigError(f"parameter {key!r} must be finite")
    return v


def _fig1(params):
    def value(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = x1 + x2 + x2**3
        return x1**2 + g**2

    def grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = x1 + x2 + x2**3
        g2 = 1 + 3 * x2**2
        return np.stack([2 * x1 + 2 * g, 2 * g * g2], axis=-1)

    def hess(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = x1 + x2 + x2**3
        g2 = 1 + 3 * x2**2
        h11 = np.full_like(x1, 4.0)
        h12 = 2 * g2
        h22 = 2 * g2**2 + 12 * g * x2
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    def third(x, u):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        g = x1 + x2 + x2**3
        g2 = 1 + 3 * x2**2
        t122 = 12 * x2
        t222 = 36 * x2 * g2 + 12 * g
        # T[a, b, c] nonzero: (1,2,2) perms -> t122, (2,2,2) -> t222
        m11 = t122 * 0.0
        m12 = t122 * u[1]
        m22 = t122 * u[0] + t222 * u[1]
        return np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)

    return ScalarField(2, value, grad, hess, third, name="fig1", params=dict(params))


def _sharpness(params):
    l1 = _real(params, "l1")
    l2 = _real(params, "l2")
    a = _real(params, "a")
    if l1 <= 0 or l2 <= 0 or abs(l1 - l2) <= GAP_TOL:
        raise ConfigError("sharpness needs distinct positive l1, l2")

    def value(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 0.5 * l1 * x1**2 + 0.5 * l2 * x2**2 + a * x1**2 * x2

    def grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([l1 * x1 + 2 * a * x1 * x2, l2 * x2 + a * x1**2], -1)

    def hess(x):
        x1, x2 = x[..., 0], x[..., 1]
        h11 = l1 + 2 * a * x2
        h12 = 2 * a * x1
        h22 = np.full_like(x1, l2)
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    def third(x, u):
        x = np.asarray(x, dtype=float)
        z = np.zeros(x.shape[:-1])
        m11 = z + 2 * a * u[1]
        m12 = z + 2 * a * u[0]
        return np.stack([np.stack([m11, m12], -1), np.stack([m12, z], -1)], -2)

    return ScalarField(
        2, value, grad, hess, third, name="sharpness", params={"l1": l1, "l2": l2, "a": a}
    )


def _matrix_quadratic(A, name, params):
    A = _symmetrize(np.asarray(A, dtype=float))
    d = A.shape[0]

    def value(x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, A, x)

    def grad(x):
        return x @ A

    def hess(x):
        x = np.asarray(x)
        return np.broadcast_to(A, x.shape[:-1] + (d, d)).copy()

    def third(x, u):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (d, d))

    return ScalarField(d, value, grad, hess, third, name=name, params=dict(params))


def _quadratic(params):
    lam = _lambdas(params)
    return _matrix_quadratic(np.diag(lam), "quadratic", {"lambdas": lam.tolist()})


def _rotation(d, angle, i=0, j=1):
    R = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    R[i, i] = R[j, j] = c
    R[i, j], R[j, i] = -s, s
    return R


def _rotated_quadratic(params):
    lam = _lambdas(params)
    if lam.size < 2:
        raise ConfigError("rotated_quadratic needs at least two eigenvalues")
    angle = _real(params, "angle")
    R = _rotation(lam.size, angle)
    A = R @ np.diag(lam) @ R.T
    return _matrix_quadratic(A, "rotated_quadratic", {"lambdas": lam.tolist(), "angle": angle})


def _random_poly(params):
    lam = _lambdas(params) if "lambdas" in params else np.array([1.0, 3.0])
    d = lam.size
    if np.any(lam <= 0):
        raise ConfigError("random_poly builds around a strong minimizer: lambdas must be > 0")
    seed = int(_real(params, "seed", 0))
    degree = int(_real(params, "degree", 4))
    if degree not in (3, 4):
        raise ConfigError("random_poly degree must be 3 or 4")
    radius = _real(params, "radius", 0.25)
    scale = _real(params, "scale", 1.0)
    if radius <= 0:
        raise ConfigError("radius must be positive")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    base = _quadratic_terms(Q @ np.diag(lam) @ Q.T)
    pert = []
    for deg in range(3, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            e = [0] * d
            for k in combo:
                e[k] += 1
            pert.append((rng.standard_normal(), e))
    probe = _ball_points(d, radius, 256, seed=seed)
    lam_min = lam.min()
    while True:
        terms = base + [(scale * c, e) for c, e in pert]
        fld = polynomial_field(d, terms, name="random_poly")
        l1 = np.linalg.eigvalsh(fld.hess(probe))[:, 0].min()
        if l1 >= 0.5 * lam_min:
            break
        scale *= 0.5
    info = {"lambdas": lam.tolist(), "seed": seed, "degree": degree, "radius": radius,
            "scale": scale}
    return polynomial_field(d, terms, name="random_poly", params=info)


BUILTINS = {
    "fig1": _fig1,
    "sharpness": _sharpness,
    "quadratic": _quadratic,
    "rotated_quadratic": _rotated_quadratic,
    "random_poly": _random_poly,
}


def builtin(name: str, params: Mapping | None = None) -> ScalarField:
    """Construct one of the named example fields.

    ``fig1``: x1^2 + (x1 + x2 + x2^3)^2.
    ``sharpness`` (l1, l2, a): 0.5 l1 x1^2 + 0.5 l2 x2^2 + a x1^2 x2.
    ``quadratic`` (lambdas): 0.5 sum lambda_i x_i^2.
    ``rotated_quadratic`` (lambdas, angle): the quadratic conjugated by a
    rotation of the (x1, x2) plane.
    ``random_poly`` (lambdas, seed, degree, radius, scale): randomly rotated
    quadratic plus seeded cubic/quartic terms, shrunk until the smallest
    Hessian eigenvalue on the radius ball stays above half its value at 0.
    """
    params = dict(params or {})
    try:
        maker = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    return maker(params)


# ---------------------------------------------------------------------------
# sampling and bounds


def _ball_points(d, radius, n, seed=0, center=None):
    """Low-discrepancy points in a ball (Halton in the cube, then rejection)."""
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    out = []
    count = 0
    while count < n:
        u = 2 * sampler.random(max(2 * n, 16)) - 1
        u = u[np.linalg.norm(u, axis=1) <= 1]
        out.append(u)
        count += len(u)
    pts = radius * np.concatenate(out)[:n]
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts


def estimate_hessian_bounds(field: ScalarField, center, radius, samples=512, seed=0):
    """Sampled estimates of the Hessian bounds on a ball.

    Returns ``(L1, L2)`` where L1 is the smallest and L2 the largest Hessian
    eigenvalue seen over ``samples`` low-discrepancy points (the center is
    always included). These are sampling envelopes, not certified bounds.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    center = np.asarray(center, dtype=float)
    pts = np.vstack([center, _ball_points(field.dim, radius, samples - 1, seed, center)])
    ev = np.linalg.eigvalsh(field.hess(pts))
    return float(ev[:, 0].min()), float(ev[:, -1].max())


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPointInfo:
    location: np.ndarray
    value: float
    frame: "object"
    is_strong_min: bool


def critical_point_info(field: ScalarField, x, crit_tol=CRIT_TOL, gap_tol=GAP_TOL):
    """Validate that ``x`` is a nondegenerate critical point with simple spectrum."""
    from .spectra import decompose

    x = np.asarray(x, dtype=float)
    v, g, H = eval_derivatives(field, x)
    gn = np.linalg.norm(g)
    if gn > crit_tol:
        raise CriticalPointError(f"|grad f(x*)| = {gn:.3e} exceeds tolerance {crit_tol:g}")
    frame = decompose(H, x, gap_tol=gap_tol)
    if np.any(np.abs(frame.eigenvalues) <= gap_tol):
        raise CriticalPointError("Hessian has a zero eigenvalue: degenerate critical point")
    return CriticalPointInfo(x, v, frame, bool(frame.eigenvalues[0] > 0))


def find_critical_point(field: ScalarField, guess, tol=CRIT_TOL, max_iter=50):
    """Newton iteration on grad f = 0 from ``guess``."""
    x = np.asarray(guess, dtype=float).copy()
    for _ in range(max_iter):
        g = field.grad(x)
        if np.linalg.norm(g) <= tol:
            return x
        x = x - np.linalg.solve(field.hess(x), g)
    if np.linalg.norm(field.grad(x)) <= tol:
        return x
    raise CriticalPointError(f"Newton did not reach a critical point from {list(guess)}")


def default_working_radius(field: ScalarField, x_star, others=()):
    """0.25 times the distance to the nearest other known critical point, else 0.25."""
    x_star = np.asarray(x_star, dtype=float)
    dists = [np.linalg.norm(np.asarray(o, dtype=float) - x_star) for o in others]
    dists = [d for d in dists if d > 0]
    return 0.25 * min(dists) if dists else 0.25
