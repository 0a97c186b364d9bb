"""Gradient flow, constant-step gradient descent and their linearizations."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .errors import EvaluationError
from .field import EPS, ScalarField
from .spectra import SpectralFrame

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_LOW

# PI controller (Hairer, Norsett & Wanner II.4)
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0
_TINY = 1e-300


@dataclass
class Trajectory:
    """Time-stamped states of a continuous or discrete trajectory.

    ``states`` has shape ``(T, d)`` for a single start or ``(T, n, d)`` for an
    ensemble. For continuous runs ``velocities`` holds ``-grad f`` at each
    state; for discrete runs ``steps[k] = x_{k+1} - x_k`` (one fewer entry
    than states) and ``times[k] = k * gamma``.
    """

    kind: str
    times: np.ndarray
    states: np.ndarray
    velocities: Optional[np.ndarray] = None
    steps: Optional[np.ndarray] = None
    meta: dict = dc_field(default_factory=dict)
    flag: Optional[str] = None
    x_star: Optional[np.ndarray] = None
    escaped: Optional[np.ndarray] = None

    @property
    def indices(self):
        if self.kind != "discrete":
            raise AttributeError("only discrete trajectories carry iteration indices")
        return np.rint(self.times / self.meta["gamma"]).astype(int)

    @property
    def final(self):
        return self.states[-1]

    def distances(self, x_star=None):
        xs = self.x_star if x_star is None else np.asarray(x_star, dtype=float)
        if xs is None:
            xs = np.zeros(self.states.shape[-1])
        return np.linalg.norm(self.states - xs, axis=-1)


def _rk_step(fun, t, y, f0, h):
    k = [f0]
    for s in range(1, 7):
        ys = y + h * sum(a * kk for a, kk in zip(_A[s], k))
        k.append(fun(ys))
    y_new = y + h * sum(b * kk for b, kk in zip(_B, k) if b != 0)
    err = h * sum(e * kk for e, kk in zip(_E, k) if e != 0)
    return y_new, err, k[-1]


def dopri5(fun, y0, t_end, rtol, atol, sample_times, h0=None, max_steps=1_000_000):
    """Adaptive Dormand-Prince 5(4) on ``y' = fun(y)`` from t = 0.

    The error norm is the max over all components, so an ensemble stacked
    along leading axes of ``y0`` is integrated with one shared step
    sequence that meets the tolerance for every member.

    Steps are clipped so that every sample time is hit exactly; no
    interpolation error enters the samples. Returns
    ``(samples, node_times, node_states, flag)``; ``flag`` is
    ``"step_underflow"`` when the step size collapses, in which case only the
    samples reached so far are returned.
    """
    y = np.array(y0, dtype=float)
    sample_times = np.asarray(sample_times, dtype=float)
    t = 0.0
    f = fun(y)
    if h0 is None:
        sc = atol + rtol * np.abs(y)
        d0 = np.max(np.abs(y) / np.maximum(sc, _TINY))
        d1 = np.max(np.abs(f) / np.maximum(sc, _TINY))
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    else:
        h = h0
    h = min(max(h, 1e-12), t_end) if t_end > 0 else 0.0

    samples = []
    si = 0
    while si < len(sample_times) and sample_times[si] <= 0.0:
        samples.append(y.copy())
        si += 1
    node_t = [0.0]
    node_y = [y.copy()]
    err_old = 1e-4
    rejected = False
    flag = None
    steps = 0
    while t < t_end and (si < len(sample_times) or not len(sample_times)):
        steps += 1
        if steps > max_steps:
            flag = "max_steps"
            break
        if h < 16 * EPS * max(1.0, abs(t)):
            flag = "step_underflow"
            break
        t_stop = sample_times[si] if si < len(sample_times) else t_end
        h_try = min(h, t_stop - t)
        clipped = h_try < h
        y_new, err, f_new = _rk_step(fun, t, y, f, h_try)
        if not np.all(np.isfinite(y_new)):
            raise EvaluationError("non-finite state during integration", point=y)
        scale = np.maximum(atol + rtol * np.maximum(np.abs(y), np.abs(y_new)), _TINY)
        en = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        if en <= 1.0:
            t = t_stop if h_try == t_stop - t else t + h_try
            y, f = y_new, f_new
            while si < len(sample_times) and sample_times[si] <= t:
                samples.append(y.copy())
                si += 1
            node_t.append(t)
            node_y.append(y.copy())
            if en == 0.0:
                fac = _FAC_MAX
            else:
                fac = _SAFETY * en ** (-_ALPHA) * err_old**_BETA
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if rejected:
                fac = min(fac, 1.0)
            # a step shortened to hit a sample does not shrink the proposal
            h = max(h, h_try * fac) if clipped and fac >= 1 else h_try * fac
            err_old = max(en, 1e-4)
            rejected = False
        else:
            h = h_try * max(_FAC_MIN, _SAFETY * en ** (-0.2))
            rejected = True
    return samples, np.array(node_t), np.array(node_y), flag


def integrate_flow(
    field: ScalarField,
    x0,
    t_end,
    rel_tol=1e-8,
    sample_times=None,
    abs_tol=None,
    x_star=None,
) -> Trajectory:
    """Integrate x' = -grad f(x) from ``x0`` (one start or an (n, d) ensemble).

    The absolute tolerance defaults to ``rel_tol * (1 + |x0|)``. Passing
    ``abs_tol=0`` switches to purely relative, componentwise error control,
    which keeps exponentially small components accurate (needed when fitting
    decay rates over many orders of magnitude).

    When ``sample_times`` is omitted the accepted integrator steps are
    returned.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not 1e-12 <= rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in [1e-12, 1e-3]")
    x0 = np.asarray(x0, dtype=float)
    if abs_tol is None:
        abs_tol = rel_tol * (1 + np.linalg.norm(x0, axis=-1).max())

    def rhs(y):
        return -field.grad(y)

    if sample_times is None:
        samples, nt, ny, flag = dopri5(rhs, x0, t_end, rel_tol, abs_tol, [])
        times, states = nt, ny
    else:
        times = np.asarray(sample_times, dtype=float)
        if np.any(np.diff(times) < 0) or times.size == 0:
            raise ValueError("sample_times must be nonempty and ascending")
        if times[0] < 0 or times[-1] > t_end * (1 + 1e-12):
            raise ValueError("sample_times must lie in [0, t_end]")
        samples, nt, ny, flag = dopri5(rhs, x0, t_end, rel_tol, abs_tol, times)
        times = times[: len(samples)]
        states = np.array(samples)
    return Trajectory(
        kind="continuous",
        times=times,
        states=states,
        velocities=-field.grad(states),
        meta={"rel_tol": rel_tol, "abs_tol": float(abs_tol), "t_end": float(t_end),
              "accepted_steps": len(nt) - 1},
        flag=flag,
        x_star=None if x_star is None else np.asarray(x_star, dtype=float),
    )


def gd_iterates(field: ScalarField, x0, gamma, k_max, x_star=None, radius=0.25) -> Trajectory:
    """Constant-step gradient descent x_{k+1} = x_k - gamma grad f(x_k).

    Iteration stops early with ``flag="escape"`` once some iterate is
    farther than ``10 * radius`` from ``x_star`` (origin by default). For an
    ensemble the escaped members are frozen and listed in ``escaped``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    x = np.array(x0, dtype=float)
    xs = np.zeros(x.shape[-1]) if x_star is None else np.asarray(x_star, dtype=float)
    limit = 10 * radius
    states = [x.copy()]
    escaped = np.zeros(x.shape[:-1], dtype=bool)
    flag = None
    for _ in range(k_max):
        g = field.grad(x)
        step = np.where(escaped[..., None], 0.0, -gamma * g)
        x = x + step
        states.append(x.copy())
        out = np.linalg.norm(x - xs, axis=-1) > limit
        if np.any(out & ~escaped):
            escaped |= out
            flag = "escape"
            if x.ndim == 1:
                break
    states = np.array(states)
    return Trajectory(
        kind="discrete",
        times=gamma * np.arange(len(states)),
        states=states,
        steps=np.diff(states, axis=0),
        meta={"gamma": float(gamma), "k_max": int(k_max)},
        flag=flag,
        x_star=xs,
        escaped=escaped if x.ndim > 1 else None,
    )


def linear_flow(frame: SpectralFrame, y0, t_or_k, mode="continuous", gamma=None):
    """Closed-form linearized dynamics in the eigenbasis of ``frame``.

    ``mode="continuous"``: exp(-H t) y0. ``mode="discrete"``: (I - gamma H)^k y0.
    ``t_or_k`` may be an array, in which case a leading axis is added.
    """
    y0 = np.asarray(y0, dtype=float)
    alpha = frame.coordinates(y0)
    tk = np.asarray(t_or_k, dtype=float)
    if mode == "continuous":
        factors = np.exp(-np.multiply.outer(tk, frame.eigenvalues))
    elif mode == "discrete":
        if gamma is None:
            raise ValueError("discrete mode needs gamma")
        mu = 1 - gamma * frame.eigenvalues
        factors = mu ** tk[..., None]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return (factors * alpha) @ frame.eigenvectors.T


def radial_project(v):
    """v / |v| along the last axis."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("radial projection of the zero vector")
    return v / n


def line_distance(u, v):
    """Distance from the unit vector(s) u to the line R v: |u - <u, v> v|.

    Equal to sqrt(1 - <u, v>^2) but without cancellation for tiny angles.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    u = np.asarray(u, dtype=float)
    c = u @ v
    return np.linalg.norm(u - c[..., None] * v, axis=-1)


@dataclass
class RateConstants:
    """Stepsize-dependent contraction constants at a strong minimizer.

    ``kappa[i]`` and ``kappa_dir[i]`` are keyed by the 1-based index i of the
    stratum (i = d is the generic case); a value of ``None`` means the
    stepsize lies outside the constant's defining interval, with the reason
    recorded in ``reasons``.
    """

    spectrum: np.ndarray
    gamma: Optional[float]
    kappa: dict
    kappa_dir: dict
    s_gamma: Optional[float]
    reasons: dict


def _kappa(lam, gamma, i):
    d = lam.size
    lm, ld = lam[d - i], lam[-1]
    if 0 < gamma <= 2 / (lm + ld):
        return 1 - gamma * lm, None
    if 2 / (lm + ld) < gamma < 2 / ld:
        return gamma * ld - 1, None
    return None, f"gamma={gamma:g} outside (0, 2/lambda_d={2 / ld:g})"


def _kappa_dir(lam, gamma, i):
    d = lam.size
    lm, lm2, ld = lam[d - i], lam[d - i + 1], lam[-1]
    if 0 < gamma <= 2 / (lm2 + ld):
        return (1 - gamma * lm2) / (1 - gamma * lm), None
    if 2 / (lm2 + ld) < gamma < 2 / (lm + ld):
        return (gamma * ld - 1) / (1 - gamma * lm), None
    return None, f"gamma={gamma:g} outside (0, {2 / (lm + ld):g})"


def rate_constants(spectrum, gamma=None, L1=None, L2=None) -> RateConstants:
    """kappa_i(gamma), kappa_dir_i(gamma) and the stability factor s(gamma)."""
    lam = np.asarray(spectrum, dtype=float)
    if np.any(np.diff(lam) <= 0):
        raise ValueError("spectrum must be strictly ascending")
    d = lam.size
    kappa, kappa_dir, reasons = {}, {}, {}
    s = None
    if gamma is not None:
        for i in range(1, d + 1):
            kappa[i], why = _kappa(lam, gamma, i)
            if why:
                reasons[f"kappa_{i}"] = why
        for i in range(2, d + 1):
            kappa_dir[i], why = _kappa_dir(lam, gamma, i)
            if why:
                reasons[f"kappa_dir_{i}"] = why
        if L1 is not None and L2 is not None:
            if 0 < gamma < 2 / L2:
                s = max(abs(1 - gamma * L1), abs(1 - gamma * L2))
            else:
                reasons["s_gamma"] = f"gamma={gamma:g} outside (0, 2/L2={2 / L2:g})"
        else:
            reasons["s_gamma"] = "L1/L2 not supplied"
    return RateConstants(lam, gamma, kappa, kappa_dir, s, reasons)


def stability_factor(gamma, L1, L2):
    """s(gamma) = max(|1 - gamma L1|, |1 - gamma L2|) for gamma in (0, 2/L2)."""
    if not 0 < gamma < 2 / L2:
        raise ValueError("gamma must lie in (0, 2/L2)")
    return max(abs(1 - gamma * L1), abs(1 - gamma * L2))


def flow_jacobian_det(trajectory: Trajectory, field: ScalarField):
    """det of the flow-map Jacobian at every stored sample.

    Continuous: exp(-int_0^t tr Hess f(x(s)) ds) by the trapezoidal rule on
    the stored samples (accuracy follows the sampling density).
    Discrete: prod_{l<k} det(I - gamma Hess f(x_l)), exactly.
    """
    X = trajectory.states
    if trajectory.kind == "continuous":
        tr = field.trace_hess(X)
        dt = np.diff(trajectory.times)
        dt = dt.reshape(dt.shape + (1,) * (tr.ndim - 1))
        integral = np.concatenate(
            [np.zeros((1,) + tr.shape[1:]), np.cumsum(0.5 * dt * (tr[1:] + tr[:-1]), axis=0)]
        )
        return np.exp(-integral)
    gamma = trajectory.meta["gamma"]
    d = X.shape[-1]
    M = np.eye(d) - gamma * field.hess(X[:-1])
    dets = np.linalg.det(M)
    return np.concatenate([np.ones((1,) + dets.shape[1:]), np.cumprod(dets, axis=0)])
