import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from talweg.field import builtin, estimate_hessian_bounds
from talweg.flow import (
    dopri5,
    flow_jacobian_det,
    gd_iterates,
    integrate_flow,
    line_distance,
    linear_flow,
    radial_project,
    rate_constants,
    stability_factor,
)
from talweg.spectra import decompose

QFRAME = decompose(np.diag([1.0, 3.0]))


def test_dopri5_exponential():
    ts = np.linspace(0, 2, 5)
    samples, _, _, flag = dopri5(lambda y: -y, np.array([1.0]), 2.0, 1e-10, 1e-12, ts)
    assert flag is None
    assert np.allclose(np.asarray(samples)[:, 0], np.exp(-ts), rtol=1e-9)


def test_flow_quadratic_closed_form(quad):
    tr = integrate_flow(quad, np.array([1.0, 1.0]), np.log(2), rel_tol=1e-9)
    assert np.allclose(tr.final, [0.5, 0.125], rtol=1e-8)


def test_flow_from_critical_point_is_constant(fig1):
    tr = integrate_flow(fig1, np.zeros(2), 3.0, sample_times=np.linspace(0, 3, 7))
    assert np.all(tr.states == 0.0)


def test_flow_fig1_decays(fig1):
    tr = integrate_flow(fig1, np.array([0.1, 0.1]), 10.0, sample_times=np.linspace(0, 10, 101))
    assert np.linalg.norm(tr.final) <= 1e-3
    assert np.all(np.diff(fig1.value(tr.states)) <= 1e-12)


def test_flow_rejects_bad_tolerance(quad):
    with pytest.raises(ValueError):
        integrate_flow(quad, np.ones(2), 1.0, rel_tol=1e-2)
    with pytest.raises(ValueError):
        integrate_flow(quad, np.ones(2), 0.0)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2), st.floats(0.1, 5))
def test_flow_matches_linear_flow(y0, t):
    quad = builtin("quadratic", {"lambdas": [1.0, 3.0]})
    y0 = np.array(y0)
    tr = integrate_flow(quad, y0, t, rel_tol=1e-9)
    exact = linear_flow(QFRAME, y0, t)
    assert np.allclose(tr.final, exact, rtol=1e-7, atol=1e-9 * (1 + np.linalg.norm(y0)))


def test_flow_semigroup(fig1):
    x0, s, t = np.array([0.2, -0.1]), 0.7, 1.3
    direct = integrate_flow(fig1, x0, s + t, rel_tol=1e-10).final
    mid = integrate_flow(fig1, x0, s, rel_tol=1e-10).final
    composed = integrate_flow(fig1, mid, t, rel_tol=1e-10).final
    assert np.linalg.norm(direct - composed) <= 10 * 1e-10 * (1 + np.linalg.norm(x0))


def test_flow_ensemble_matches_single(fig1):
    X0 = np.array([[0.1, 0.1], [-0.2, 0.05]])
    ens = integrate_flow(fig1, X0, 2.0, rel_tol=1e-10)
    for j in range(2):
        one = integrate_flow(fig1, X0[j], 2.0, rel_tol=1e-10)
        assert np.allclose(ens.final[j], one.final, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("name,params", [("fig1", {}), ("sharpness", {"l1": 1.0, "l2": 3.0, "a": 1.0})])
def test_absorbing_ball(name, params):
    fld = builtin(name, params)
    rng = np.random.default_rng(2)
    X0 = rng.uniform(-0.15, 0.15, (20, 2))
    tr = integrate_flow(fld, X0, 10.0, sample_times=np.linspace(0, 10, 201))
    d = np.linalg.norm(tr.states, axis=-1)
    assert np.all(np.diff(d, axis=0) <= 1e-12)


def test_gd_quadratic_closed_form(quad):
    tr = gd_iterates(quad, np.array([1.0, 1.0]), 0.25, 10)
    k = np.arange(11)
    assert np.allclose(tr.states, np.column_stack([0.75**k, 0.25**k]), rtol=1e-14)
    assert np.allclose(tr.indices, k)
    assert np.allclose(tr.steps, np.diff(tr.states, axis=0))


def test_gd_from_critical_point(fig1):
    tr = gd_iterates(fig1, np.zeros(2), 0.1, 5)
    assert np.all(tr.states == 0.0)


def test_gd_escape_flag(quad):
    tr = gd_iterates(quad, np.array([0.1, 0.1]), 0.7, 200)
    assert tr.flag == "escape"
    assert abs(tr.final[1]) > 2.5
    assert len(tr.states) < 201


def test_gd_matches_discrete_linear_flow(quad):
    y0 = np.array([0.3, -0.8])
    tr = gd_iterates(quad, y0, 0.3, 30)
    exact = linear_flow(QFRAME, y0, np.arange(31), mode="discrete", gamma=0.3)
    assert np.allclose(tr.states, exact, rtol=1e-13, atol=1e-15)


def test_linear_flow_examples():
    y0 = np.array([1.0, 1.0])
    assert np.allclose(linear_flow(QFRAME, y0, np.log(2)), [0.5, 0.125])
    assert np.allclose(linear_flow(QFRAME, y0, 2, mode="discrete", gamma=0.25), [0.5625, 0.0625])
    assert np.all(linear_flow(QFRAME, np.zeros(2), 3.0) == 0)
    with pytest.raises(ValueError):
        linear_flow(QFRAME, y0, 1, mode="discrete")


def test_radial_project_examples():
    assert np.allclose(radial_project(np.array([3.0, 4.0])), [0.6, 0.8])
    for ell in (1e-9, 1e9):
        assert np.allclose(radial_project(ell * np.array([3.0, 4.0])), [0.6, 0.8])
    a, b = np.array([1.0, 0.0]), np.array([0.0, 0.1])
    gap = np.linalg.norm(radial_project(a + b) - radial_project(a))
    assert gap <= 0.2
    assert np.isclose(gap, 0.0997, atol=1e-4)
    with pytest.raises(ValueError):
        radial_project(np.zeros(2))


@given(
    st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
)
def test_radial_inequality(a, b):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(a + b) < 1e-9:
        return
    lhs = np.linalg.norm(radial_project(a + b) - radial_project(a))
    assert lhs <= 2 * np.linalg.norm(b) / np.linalg.norm(a) + 1e-12


def test_line_distance_sign_insensitive():
    u = radial_project(np.array([1.0, 2.0]))
    v = np.array([1.0, 0.0])
    assert np.isclose(line_distance(u, v), line_distance(-u, v))
    assert np.isclose(line_distance(u, v), np.sqrt(1 - u[0] ** 2))
    assert line_distance(v, v) == 0.0


def test_rate_constants_examples():
    assert np.isclose(rate_constants([1, 3], 0.4).kappa[2], 0.6)
    assert np.isclose(rate_constants([1, 3], 0.25).kappa_dir[2], 1 / 3)
    assert np.isclose(rate_constants([1, 3], 0.5, L1=1, L2=3).s_gamma, 0.5)


def test_rate_constants_case_splits():
    rc = rate_constants([1, 3], 0.45)  # second branch of kappa_dir
    assert np.isclose(rc.kappa_dir[2], (0.45 * 3 - 1) / (1 - 0.45))
    rc = rate_constants([1, 3], 0.6)  # outside the kappa_dir interval
    assert rc.kappa_dir[2] is None and "kappa_dir_2" in rc.reasons
    assert np.isclose(rc.kappa[2], 0.8)
    rc = rate_constants([1, 3], 0.8, L1=1, L2=3)
    assert rc.s_gamma is None and "s_gamma" in rc.reasons


@given(st.floats(0.01, 0.66))
def test_kappas_in_unit_interval(gamma):
    rc = rate_constants([1.0, 3.0], gamma)
    for v in [*rc.kappa.values(), *rc.kappa_dir.values()]:
        if v is not None:
            assert 0 <= v < 1


def test_stability_factor_matches_contraction(fig1):
    L1, L2 = estimate_hessian_bounds(fig1, np.zeros(2), 0.25)
    gamma = 1.5 / L2
    s = stability_factor(gamma, L1, L2)
    tr = gd_iterates(fig1, np.array([0.1, -0.12]), gamma, 50)
    d = np.linalg.norm(tr.states, axis=1)
    assert np.all(d[1:] <= s * d[:-1] + 1e-15)


def test_jacobian_quadratic_continuous(quad):
    grid = np.linspace(0, 1, 51)
    tr = integrate_flow(quad, np.array([0.1, 0.2]), 1.0, sample_times=grid)
    J = flow_jacobian_det(tr, quad)
    assert J[0] == 1.0
    assert np.isclose(J[-1], np.exp(-4.0), rtol=1e-12)


def test_jacobian_quadratic_discrete(quad):
    tr = gd_iterates(quad, np.array([0.1, 0.2]), 0.25, 2)
    J = flow_jacobian_det(tr, quad)
    assert J[0] == 1.0
    assert np.isclose(J[2], 0.03515625)


def test_jacobian_fd_oracle(fig1):
    x0, h = np.array([0.1, -0.15]), 1e-6
    X = np.array([x0 + h * e for e in (np.eye(2)[0], -np.eye(2)[0], np.eye(2)[1], -np.eye(2)[1])])
    X = np.vstack([x0, X])
    grid = np.union1d(np.arange(0, 2, 0.02), [2.0])
    tr = integrate_flow(fig1, X, 2.0, rel_tol=1e-11, sample_times=grid)
    J = flow_jacobian_det(tr, fig1)[-1, 0]
    F = tr.states[-1]
    D = np.column_stack([(F[1] - F[2]) / (2 * h), (F[3] - F[4]) / (2 * h)])
    assert abs(J / np.linalg.det(D) - 1) <= 0.01
