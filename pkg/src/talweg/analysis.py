"""Alignment rates, oscillation, valley entry, volume concentration, genericity."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .errors import ExperimentError
from .field import ScalarField, builtin
from .flow import (
    Trajectory,
    flow_jacobian_det,
    gd_iterates,
    integrate_flow,
    line_distance,
    linear_flow,
    radial_project,
)
from .geometry import ValleySpec, is_in_valley
from .spectra import SpectralFrame, decompose

FIT_MIN_POINTS = 8
FIT_LO, FIT_HI = 1e-12, 0.5
CENSUS_THRESHOLD = 0.05
MAX_EXCLUDED = 0.05


class RateFit(NamedTuple):
    """Log-linear fit of a decaying series.

    Continuous series: ``value ~ exp(intercept - rate * t)``. Discrete series:
    ``value ~ exp(intercept) * rate**k`` (rate is a per-step factor).
    """

    rate: float
    intercept: float
    r2: float
    ci_low: float
    ci_high: float
    window: tuple
    low_confidence: bool


def fit_rate(times, values, window="auto", discrete=False) -> RateFit:
    """Least squares on (t, log value) over the usable window.

    Usable points have values in [1e-12, 0.5]; the automatic window is the
    last half of them. ``window`` may instead be an explicit ``(start, stop)``
    index range into the series. A fit with r^2 < 0.9 is flagged
    ``low_confidence`` but still returned.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window == "auto":
        usable = np.flatnonzero((v >= FIT_LO) & (v <= FIT_HI))
        idx = usable[len(usable) // 2:]
    else:
        lo, hi = window
        idx = np.arange(lo, hi)
        idx = idx[(v[idx] >= FIT_LO) & (v[idx] <= FIT_HI)]
    if len(idx) < FIT_MIN_POINTS:
        raise ValueError(f"degenerate fit window: {len(idx)} usable points, need {FIT_MIN_POINTS}")
    res = stats.linregress(t[idx], np.log(v[idx]))
    tq = stats.t.ppf(0.975, len(idx) - 2)
    r2 = res.rvalue**2
    lo_s, hi_s = res.slope - tq * res.stderr, res.slope + tq * res.stderr
    if discrete:
        rate, ci = np.exp(res.slope), (np.exp(lo_s), np.exp(hi_s))
    else:
        rate, ci = -res.slope, (-hi_s, -lo_s)
    return RateFit(float(rate), float(res.intercept), float(r2), float(ci[0]), float(ci[1]),
                   (int(idx[0]), int(idx[-1]) + 1), bool(r2 < 0.9))


@dataclass
class AlignmentSeries:
    """Distances of secant and velocity directions to the line R v_target.

    For discrete trajectories ``velocity_dist[k]`` uses the step
    x_{k+1} - x_k, so its last entry is NaN.
    """

    times: np.ndarray
    secant_dist: np.ndarray
    velocity_dist: np.ndarray
    kind: str
    fit: Optional[RateFit] = None

    @property
    def fitted_rate(self):
        return None if self.fit is None else self.fit.rate

    @property
    def fit_window(self):
        return None if self.fit is None else self.fit.window


def alignment_series(trajectory: Trajectory, x_star, v_target, fit=True) -> AlignmentSeries:
    """Secant and velocity alignment with a target line along a trajectory."""
    x_star = np.asarray(x_star, dtype=float)
    X = trajectory.states
    if X.ndim != 2:
        raise ValueError("alignment_series takes a single trajectory")
    diff = X - x_star
    keep = np.linalg.norm(diff, axis=1) > 0
    if trajectory.kind == "continuous":
        vel = trajectory.velocities
    else:
        vel = np.vstack([trajectory.steps, np.full((1, X.shape[1]), np.nan)])
    if keep.sum() < 2:
        raise ValueError("fewer than 2 samples away from x*")
    times = trajectory.times[keep]
    sec = line_distance(radial_project(diff[keep]), v_target)
    V = vel[keep]
    vn = np.linalg.norm(V, axis=1)
    vd = np.full(len(V), np.nan)
    ok = np.isfinite(vn) & (vn > 0)
    vd[ok] = line_distance(V[ok] / vn[ok, None], v_target)
    out = AlignmentSeries(times, sec, vd, trajectory.kind)
    if fit:
        x = trajectory.indices[keep] if trajectory.kind == "discrete" else times
        try:
            out.fit = fit_rate(x, sec, discrete=trajectory.kind == "discrete")
        except ValueError:
            out.fit = None
    return out


class SharpnessProbe(NamedTuple):
    factor: float
    fit: RateFit
    expected: Optional[float]
    kappa_dir: float
    escaped: bool


def discrete_sharpness_probe(l1, l2, a, gamma, x0=(0.02, 0.01), k_max=150) -> SharpnessProbe:
    """Per-step alignment factor of gradient descent on the sharpness example.

    When lambda_2 > 2 lambda_1 and gamma < 1/lambda_2 (and a != 0) the
    expected factor is 1 - gamma lambda_1 rather than the spectral-gap factor
    kappa_dir = (1 - gamma lambda_2) / (1 - gamma lambda_1); outside that
    regime ``expected`` is None.
    """
    fld = builtin("sharpness", {"l1": l1, "l2": l2, "a": a})
    traj = gd_iterates(fld, np.asarray(x0, dtype=float), gamma, k_max)
    series = alignment_series(traj, np.zeros(2), np.array([1.0, 0.0]), fit=False)
    fit = fit_rate(traj.indices[: len(series.secant_dist)], series.secant_dist, discrete=True)
    lo, hi = sorted((l1, l2))
    kd = abs(1 - gamma * hi) / (1 - gamma * lo)
    if a == 0:
        expected = kd
    elif hi > 2 * lo and 0 < gamma < 1 / hi:
        expected = 1 - gamma * lo
    else:
        expected = None
    return SharpnessProbe(fit.rate, fit, expected, kd, traj.flag == "escape")


class OscillationResult(NamedTuple):
    even_limit: np.ndarray
    odd_limit: np.ndarray
    oscillating: bool


def oscillation_probe(field: ScalarField, gamma, y0, k_max=60, x_star=None) -> OscillationResult:
    """Last even and odd directions rho(Psi_k y0) of the linearized iterates."""
    xs = np.zeros(field.dim) if x_star is None else np.asarray(x_star, dtype=float)
    frame = decompose(field.hess(xs), xs)
    k_even = k_max - (k_max % 2)
    k_odd = k_max if k_max % 2 else k_max - 1
    ks = np.arange(k_max + 1)
    Y = linear_flow(frame, y0, ks, mode="discrete", gamma=gamma)
    # renormalize in log space to avoid underflow of both components
    even = radial_project(Y[k_even])
    odd = radial_project(Y[k_odd])
    return OscillationResult(even, odd, bool(np.linalg.norm(even - odd) > 1e-3))


def valley_entry_time(trajectory: Trajectory, field: ScalarField, spec: ValleySpec):
    """First sample time after which every remaining sample lies in the valley.

    Returns None when the final sample is outside the valley.
    """
    d = trajectory.distances(spec.center)
    if not d[-1] < 0.01 * d[0]:
        raise ValueError("trajectory does not converge to the valley center")
    member = is_in_valley(field, spec, trajectory.states)
    if not member[-1]:
        return None
    outside = np.flatnonzero(~member)
    k = 0 if outside.size == 0 else outside[-1] + 1
    return float(trajectory.times[k])


def ball_sampler(center, radius):
    """Uniform sampler on the ball B(center, radius): ``sampler(rng, n)``."""
    center = np.asarray(center, dtype=float)
    d = center.size

    def sample(rng, n):
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = radius * rng.random(n) ** (1.0 / d)
        return center + r[:, None] * u

    return sample


@dataclass
class ConcentrationReport:
    times: np.ndarray
    ratios: np.ndarray
    std_errors: np.ndarray
    sample_count: int
    excluded: int
    width: float
    seed: int
    mode: str
    gamma: Optional[float] = None
    estimator: str = "jacobian_weighted"


def _run_ensemble(field, X0, mode, t_max, gamma, rel_tol, dt, x_star, radius):
    if mode == "continuous":
        grid = np.union1d(np.arange(0.0, t_max, dt), [t_max])
        traj = integrate_flow(field, X0, t_max, rel_tol=rel_tol, sample_times=grid)
    else:
        traj = gd_iterates(field, X0, gamma, int(t_max), x_star=x_star, radius=radius)
    return traj


def volume_concentration(
    field: ScalarField,
    x_star,
    sampler,
    w,
    times,
    n=1000,
    mode="continuous",
    gamma=None,
    radius=0.25,
    seed=0,
    rel_tol=1e-8,
    dt=0.02,
) -> ConcentrationReport:
    """Jacobian-weighted estimate of vol(Phi_t(S) & Val) / vol(Phi_t(S)).

    Starts are drawn with ``sampler(rng, n)``; each is weighted by the
    determinant of the flow-map Jacobian so that the uniform sample of S
    represents the pushed-forward set. Standard errors use the delta
    method for a ratio estimator. Starts whose trajectories leave the
    working ball are excluded; more than 5% exclusions is an error.
    """
    if n < 100:
        raise ValueError("volume_concentration needs n >= 100")
    if mode not in ("continuous", "discrete"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "discrete" and gamma is None:
        raise ValueError("discrete mode needs gamma")
    x_star = np.asarray(x_star, dtype=float)
    times = np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    X0 = sampler(rng, n)
    if np.any(np.linalg.norm(X0 - x_star, axis=1) > radius):
        raise ValueError("the start set S must lie inside the working ball")
    traj = _run_ensemble(field, X0, mode, times.max(), gamma, rel_tol, dt, x_star, radius)
    J = flow_jacobian_det(traj, field)
    if mode == "continuous":
        pos = np.searchsorted(traj.times, times)
    else:
        pos = np.rint(times).astype(int)
    states = traj.states[pos]
    dist = np.linalg.norm(states - x_star, axis=-1)
    bad = np.any(dist > radius, axis=0)
    if traj.escaped is not None:
        bad |= traj.escaped
    excluded = int(bad.sum())
    if excluded:
        warnings.warn(f"{excluded} of {n} samples left the working ball and were excluded")
    if excluded > MAX_EXCLUDED * n:
        raise ExperimentError(f"{excluded} of {n} samples excluded (> 5%)")
    spec = ValleySpec(x_star, w, radius)
    ratios, ses = [], []
    for k in range(len(times)):
        inside = is_in_valley(field, spec, states[k][~bad])
        Jk = J[pos[k]][~bad]
        R = Jk[inside].sum() / Jk.sum()
        ratios.append(R)
        ses.append(np.sqrt(np.sum((Jk * (inside - R)) ** 2)) / Jk.sum())
    return ConcentrationReport(
        times=times,
        ratios=np.array(ratios),
        std_errors=np.array(ses),
        sample_count=n - excluded,
        excluded=excluded,
        width=float(w),
        seed=int(seed),
        mode=mode,
        gamma=None if gamma is None else float(gamma),
    )


def power_method_crosscheck(frame: SpectralFrame, gamma, y0, k=20) -> float:
    """Max sign-insensitive gap between rho(Psi_j y0) and normalized power iteration."""
    y0 = np.asarray(y0, dtype=float)
    M = np.eye(frame.dim) - gamma * frame.matrix
    u = radial_project(y0)
    gap = 0.0
    for j in range(1, k + 1):
        u = radial_project(M @ u)
        p = radial_project(linear_flow(frame, y0, j, mode="discrete", gamma=gamma))
        gap = max(gap, min(np.linalg.norm(u - p), np.linalg.norm(u + p)))
    return float(gap)


@dataclass
class CensusResult:
    fraction: float
    n: int
    excluded: int
    non_aligning: np.ndarray
    final_distances: np.ndarray
    seed: int


def genericity_census(
    field: ScalarField,
    x_star,
    n=500,
    radius=0.25,
    mode="continuous",
    horizon=20.0,
    gamma=None,
    seed=0,
    threshold=CENSUS_THRESHOLD,
    rel_tol=1e-8,
    starts=None,
) -> CensusResult:
    """Fraction of uniform random starts whose secant aligns with R v_1(x*).

    A start aligns when its secant distance to the line is at most
    ``threshold`` at the horizon (time for the flow, iteration count for
    gradient descent). ``starts`` overrides the random draw.
    """
    x_star = np.asarray(x_star, dtype=float)
    if starts is None:
        if n < 100:
            raise ValueError("genericity_census needs n >= 100")
        X0 = ball_sampler(x_star, radius)(np.random.default_rng(seed), n)
    else:
        X0 = np.atleast_2d(np.asarray(starts, dtype=float))
        n = len(X0)
    v1 = decompose(field.hess(x_star), x_star).vector(1)
    if mode == "continuous":
        traj = integrate_flow(field, X0, horizon, rel_tol=rel_tol, sample_times=[0.0, horizon],
                              abs_tol=0.0)
        final = traj.states[-1]
        escaped = np.zeros(n, dtype=bool)
    else:
        traj = gd_iterates(field, X0, gamma, int(horizon), x_star=x_star, radius=radius)
        final = traj.states[-1]
        escaped = traj.escaped
    diff = final - x_star
    nz = np.linalg.norm(diff, axis=1) > 0
    dist = np.ones(n)
    dist[nz] = line_distance(radial_project(diff[nz]), v1)
    usable = ~escaped
    aligned = (dist <= threshold) & usable
    frac = aligned.sum() / usable.sum()
    return CensusResult(float(frac), n, int((~usable).sum()), X0[usable & ~aligned], dist, seed)


def quadratic_directional_bound(frame: SpectralFrame, y0, t_or_k, mode="continuous", gamma=None,
                                velocity=False):
    """Upper bound on |rho(Psi(y0)) - sign(alpha_1) v_1| for the linearized dynamics.

    The bound is (2|y0|/|alpha_1|) * decay, where decay is exp(-(lambda_2 - lambda_1) t)
    for the flow and kappa_dir^k for gradient descent (gamma below
    2/(lambda_1 + lambda_d)). With ``velocity=True`` it carries the extra
    factor lambda_d/lambda_1 and bounds the distance of the velocity
    direction to -sign(alpha_1) v_1.
    """
    from .flow import rate_constants

    y0 = np.asarray(y0, dtype=float)
    lam = frame.eigenvalues
    a1 = frame.coordinates(y0)[0]
    if a1 == 0:
        raise ValueError("y0 has no component along v_1")
    tk = np.asarray(t_or_k, dtype=float)
    if mode == "continuous":
        decay = np.exp(-(lam[1] - lam[0]) * tk)
    elif mode == "discrete":
        if gamma is None or not 0 < gamma < 2 / (lam[0] + lam[-1]):
            raise ValueError("gamma must lie in (0, 2/(lambda_1 + lambda_d))")
        kd = rate_constants(lam, gamma).kappa_dir[frame.dim]
        decay = kd**tk
    else:
        raise ValueError(f"unknown mode {mode!r}")
    c = 2 * np.linalg.norm(y0) / abs(a1)
    if velocity:
        c *= lam[-1] / lam[0]
    return c * decay
