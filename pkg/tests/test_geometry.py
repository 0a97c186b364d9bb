import numpy as np
import pytest

from talweg.errors import CriticalPointError, LevelTooSmallError
from talweg.field import builtin
from talweg.geometry import (
    ValleySpec,
    extremal_residual,
    is_in_valley,
    level_set_samples,
    quadratic_valley_membership,
    talweg_branch_scan,
    talweg_points,
    tangent_cone_probe,
    trace_extremal,
)
from talweg.spectra import decompose

QFRAME = decompose(np.diag([1.0, 3.0]))
FIG1_LAMBDAS = np.array([3 - np.sqrt(5), 3 + np.sqrt(5)])


def _angle_to_line(u, v):
    c = abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return np.arccos(min(1.0, c))


def _ball(n, radius, seed, d=2):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return U * (radius * rng.random(n) ** (1 / d))[:, None]


def test_residual_on_axis_is_zero(quad):
    for t in (-2.0, 0.3, 5.0):
        assert extremal_residual(quad, np.array([t, 0.0]), 1) == 0.0


def test_residual_off_axis(quad):
    assert np.isclose(extremal_residual(quad, np.array([1.0, 1.0]), 1), 6 / np.sqrt(10))


def test_residual_at_critical_point(quad):
    with pytest.raises(CriticalPointError):
        extremal_residual(quad, np.zeros(2), 1)


def test_valley_examples(quad):
    big = ValleySpec(np.zeros(2), 0.0, radius=2.0)
    assert is_in_valley(quad, big, np.array([1.0, 0.0]))
    assert not is_in_valley(quad, ValleySpec(np.zeros(2), 1.9, 2.0), np.array([0.0, 1.0]))
    assert is_in_valley(quad, ValleySpec(np.zeros(2), 2.0, 2.0), np.array([0.0, 1.0]))
    assert is_in_valley(quad, big, np.zeros(2))
    with pytest.raises(ValueError):
        is_in_valley(quad, ValleySpec(np.zeros(2), 0.1, 0.5), np.array([1.0, 0.0]))


def test_valley_contains_traced_talweg(fig1):
    c = trace_extremal(fig1, np.zeros(2), 1, step=1e-3, max_arclength=0.06)
    k = np.argmin(np.abs(np.linalg.norm(c.points, axis=1) - 0.05))
    assert is_in_valley(fig1, ValleySpec(np.zeros(2), 1e-6), c.points[k])


def test_quadratic_cone_examples():
    assert quadratic_valley_membership(QFRAME, 0.0, np.array([-2.0, 0.0]))
    assert quadratic_valley_membership(QFRAME, 2.0, np.array([0.0, 1.0]))
    assert not quadratic_valley_membership(QFRAME, 0.5, np.array([1.0, 1.0]))
    assert quadratic_valley_membership(QFRAME, 0.5, np.zeros(2))


def test_cone_monotone_in_width():
    Y = _ball(400, 1.0, 3)
    for w1, w2 in [(0.1, 0.2), (0.5, 1.5), (0.0, 0.01)]:
        m1 = quadratic_valley_membership(QFRAME, w1, Y)
        m2 = quadratic_valley_membership(QFRAME, w2, Y)
        assert np.all(~m1 | m2)


def test_trace_quadratic_axis(quad):
    c = trace_extremal(quad, np.zeros(2), 1, step=0.01, max_arclength=0.2)
    assert np.all(np.abs(c.points[:, 1]) <= 1e-14)
    assert np.all(c.points[1:, 0] > 0)


@pytest.mark.parametrize("direction", [1, -1])
def test_trace_fig1_talweg(fig1, direction):
    c = trace_extremal(fig1, np.zeros(2), 1, step=1e-3, max_arclength=0.2, direction=direction)
    v1 = decompose(fig1.hess(np.zeros(2))).vector(1)
    assert c.stop_reason == "arclength"
    assert np.max(c.residuals) <= 1e-8
    assert _angle_to_line(c.initial_tangent, v1) <= 1e-3
    spacing = np.diff(c.arclength)
    assert np.all(spacing[:-1] >= 0.25 * 1e-3) and np.all(spacing <= 4e-3)
    assert np.isclose(c.arclength[-1], 0.2, atol=1e-5)


def test_trace_fig1_crest(fig1):
    c = trace_extremal(fig1, np.zeros(2), 2, step=1e-3, max_arclength=0.05)
    v2 = decompose(fig1.hess(np.zeros(2))).vector(2)
    assert _angle_to_line(c.initial_tangent, v2) <= 1e-3
    assert np.max(c.residuals) <= 1e-8


def test_trace_radius_stop(fig1):
    c = trace_extremal(fig1, np.zeros(2), 1, step=0.01, max_arclength=1.0, radius=0.1)
    assert c.stop_reason == "radius"
    assert np.linalg.norm(c.points[-1]) <= 0.1


def test_trace_bad_index(fig1):
    with pytest.raises(ValueError):
        trace_extremal(fig1, np.zeros(2), 3)


def test_talweg_points_quadratic(quad):
    minus, plus = talweg_points(quad, np.zeros(2), 0.5)
    assert np.allclose(plus.point, [1.0, 0.0]) and np.allclose(minus.point, [-1.0, 0.0])
    assert np.isclose(plus.multiplier, 1.0)
    assert plus.second_order_ok and minus.second_order_ok


def test_crest_points_quadratic(quad):
    minus, plus = talweg_points(quad, np.zeros(2), 0.5, mode="max")
    assert np.allclose(plus.point, [0.0, np.sqrt(1 / 3)])
    assert np.allclose(minus.point, [0.0, -np.sqrt(1 / 3)])
    assert np.isclose(plus.multiplier, 3.0)
    assert plus.second_order_ok


def test_talweg_points_fig1(fig1):
    pts = talweg_points(fig1, np.zeros(2), 1e-4)
    v1 = decompose(fig1.hess(np.zeros(2))).vector(1)
    signs = []
    for p in pts:
        assert extremal_residual(fig1, p.point, 1) <= 1e-8
        assert p.second_order_ok
        assert abs(fig1.value(p.point) - 1e-4) <= 1e-10 * (1 + 1e-4)
        signs.append(np.sign(p.point @ v1))
    assert signs == [-1.0, 1.0]


def test_talweg_level_too_small(fig1):
    with pytest.raises(LevelTooSmallError) as info:
        talweg_points(fig1, np.zeros(2), 0.0)
    assert info.value.level == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_talweg_agreement_random_poly(seed):
    # Each branch is a local minimizer of |grad f| on the level set, so it is
    # compared with the competitors on its own side of the v_1 hyperplane.
    fld = builtin("random_poly", {"lambdas": [1.0, 3.0], "seed": seed})
    v1 = decompose(fld.hess(np.zeros(2))).vector(1)
    for r in np.geomspace(1e-6, 1e-3, 4):
        comp = level_set_samples(fld, np.zeros(2), r, n=128, seed=seed)
        for p in talweg_points(fld, np.zeros(2), r):
            assert extremal_residual(fld, p.point, 1) <= 1e-6
            side = comp[np.sign(comp @ v1) == np.sign(p.point @ v1)]
            assert len(side) >= 32
            best = np.linalg.norm(fld.grad(side), axis=1).min()
            assert np.linalg.norm(fld.grad(p.point)) <= best + 1e-6


def test_branch_scan_quadratic_exact(quad):
    levels = np.geomspace(1e-6, 1e-2, 6)
    scan = talweg_branch_scan(quad, np.zeros(2), levels)
    for s in scan.values():
        assert np.all(np.abs(s.product - 1) <= 1e-10)
        # blow-up lower bound |theta'| >= 1 / (2 lambda_d sqrt(r - r*))
        assert np.all(s.speed >= 1 / (2 * 3.0 * np.sqrt(levels)))
        assert np.allclose(s.speed, 1 / np.sqrt(2 * levels), rtol=1e-8)


def test_branch_scan_fig1_limit(fig1):
    scan = talweg_branch_scan(fig1, np.zeros(2), np.geomspace(1e-6, 1e-3, 8))
    for s in scan.values():
        assert abs(s.product[0] - 1) <= 0.05
        assert np.all(s.second_order_ok)
        assert np.all(s.speed >= 1 / (2 * FIG1_LAMBDAS[1] * np.sqrt(s.levels)))


def test_tangent_cone_generator(fig1):
    spec = ValleySpec(np.zeros(2), 0.05)
    v1 = decompose(fig1.hess(np.zeros(2))).vector(1)
    assert np.all(tangent_cone_probe(fig1, spec, v1, np.geomspace(1e-2, 1e-6, 9)))


def test_tangent_cone_excludes_v2(fig1):
    spec = ValleySpec(np.zeros(2), 0.5 * (FIG1_LAMBDAS[1] - FIG1_LAMBDAS[0]))
    v2 = decompose(fig1.hess(np.zeros(2))).vector(2)
    assert not np.any(tangent_cone_probe(fig1, spec, v2, np.geomspace(1e-2, 1e-6, 9))[-3:])


def test_tangent_cone_inner_direction(fig1):
    frame = decompose(fig1.hess(np.zeros(2)))
    w_inner, w = 0.1, 0.2
    # a direction strictly inside the narrower quadratic cone
    Y = _ball(2000, 1.0, 5)
    Y = Y[quadratic_valley_membership(frame, w_inner, Y) & (np.linalg.norm(Y, axis=1) > 0.1)]
    Y = Y[~quadratic_valley_membership(frame, 0.5 * w_inner, Y)]
    h = Y[0] / np.linalg.norm(Y[0])
    probe = tangent_cone_probe(fig1, ValleySpec(np.zeros(2), w), h, np.geomspace(1e-2, 1e-6, 9))
    assert np.all(probe[-4:])


def test_valley_sandwich(fig1):
    frame = decompose(fig1.hess(np.zeros(2)))
    w_in, w_out = 0.1, 0.2
    delta = 0.25
    while delta > 1e-4:
        Y = _ball(2000, delta, 9)
        q_in = quadratic_valley_membership(frame, w_in, Y)
        f_in = is_in_valley(fig1, ValleySpec(np.zeros(2), w_in), Y)
        ok_1 = np.all(is_in_valley(fig1, ValleySpec(np.zeros(2), w_out), Y[q_in]))
        ok_2 = np.all(quadratic_valley_membership(frame, w_out, Y[f_in]))
        if ok_1 and ok_2:
            break
        delta /= 2
    assert delta > 1e-3
