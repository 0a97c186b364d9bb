import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from talweg.errors import DegenerateSpectrumError, TrackingError
from talweg.field import ScalarField, builtin
from talweg.spectra import (
    SpectralFrame,
    align_frame,
    check_nonresonance,
    decompose,
    frame_along_curve,
    frame_at,
)


def test_decompose_swaps_to_ascending():
    fr = decompose(np.diag([3.0, 1.0]))
    assert np.allclose(fr.eigenvalues, [1.0, 3.0])
    assert np.allclose(fr.eigenvectors, [[0.0, 1.0], [1.0, 0.0]])


def test_decompose_fig1_hessian():
    fr = decompose(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert np.allclose(fr.eigenvalues, [3 - np.sqrt(5), 3 + np.sqrt(5)])
    # characteristic polynomial oracle: (4 - l) v1 + 2 v2 = 0
    v = np.array([1.0, -(1 + np.sqrt(5)) / 2])
    v /= np.linalg.norm(v)
    assert np.isclose(abs(fr.vector(1) @ v), 1.0)


def test_decompose_degenerate_names_pair():
    with pytest.raises(DegenerateSpectrumError) as info:
        decompose(np.eye(2))
    assert info.value.pair == (1, 2)


def test_decompose_rejects_asymmetric():
    with pytest.raises(ValueError):
        decompose(np.array([[1.0, 2.0], [0.0, 3.0]]))


@given(st.integers(0, 10_000))
def test_decompose_reconstruction(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    A = rng.standard_normal((d, d))
    H = A + A.T
    try:
        fr = decompose(H)
    except DegenerateSpectrumError:
        return
    P = fr.eigenvectors
    assert np.max(np.abs(P.T @ P - np.eye(d))) <= 1e-10
    assert np.max(np.abs(fr.matrix - H)) <= 1e-8 * (1 + np.max(np.abs(H)))
    for i in range(1, d + 1):
        lam = fr.value(i)
        assert np.linalg.norm(H @ fr.vector(i) - lam * fr.vector(i)) <= 1e-8 * (1 + abs(lam))
    assert np.all(np.diff(fr.eigenvalues) > 0)
    idx = np.argmax(np.abs(P), axis=0)
    assert np.all(P[idx, np.arange(d)] > 0)


def test_align_identity_and_flip():
    ref = decompose(np.array([[2.0, 0.5], [0.5, 1.0]]))
    assert np.array_equal(align_frame(ref, ref).eigenvectors, ref.eigenvectors)
    flipped = SpectralFrame(ref.eigenvalues, ref.eigenvectors * [-1.0, 1.0])
    assert np.allclose(align_frame(flipped, ref).eigenvectors, ref.eigenvectors)


def test_align_idempotent():
    ref = decompose(np.array([[2.0, 0.5], [0.5, 1.0]]))
    fr = SpectralFrame(ref.eigenvalues, -ref.eigenvectors)
    once = align_frame(fr, ref)
    assert np.array_equal(align_frame(once, ref).eigenvectors, once.eigenvectors)


def test_align_fig1_nearby(fig1):
    ref = frame_at(fig1, np.zeros(2))
    fr = frame_at(fig1, np.array([0.01, 0.0]), reference=ref)
    dots = np.einsum("ij,ij->j", fr.eigenvectors, ref.eigenvectors)
    assert np.all(dots >= 0.999)


def test_align_far_frames_raise():
    ref = decompose(np.diag([1.0, 2.0]))
    c, s = np.cos(np.pi / 2 - 0.01), np.sin(np.pi / 2 - 0.01)
    R = np.array([[c, -s], [s, c]])
    with pytest.raises(TrackingError):
        align_frame(decompose(R @ np.diag([1.0, 2.0]) @ R.T), ref)


def test_frames_constant_for_quadratic(quad):
    pts = np.linspace([0, 0], [1, 2], 7)
    frames = frame_along_curve(quad, pts)
    for fr in frames:
        assert np.array_equal(fr.eigenvectors, frames[0].eigenvectors)


def test_frames_fig1_segment(fig1):
    s = np.linspace(0, 0.1, 11)
    frames = frame_along_curve(fig1, np.column_stack([s, 0 * s]))
    lam1 = np.array([fr.value(1) for fr in frames])
    assert np.sum(np.abs(np.diff(lam1))) < 0.5
    for a, b in zip(frames, frames[1:]):
        assert np.all(np.einsum("ij,ij->j", a.eigenvectors, b.eigenvectors) >= 0.9)


def test_frames_reversal_consistent(fig1):
    pts = np.column_stack([np.linspace(-0.2, 0.2, 21), np.linspace(0.1, -0.1, 21)])
    fwd = frame_along_curve(fig1, pts)
    back = frame_along_curve(fig1, pts[::-1])[::-1]
    for a, b in zip(fwd, back):
        assert np.all(np.abs(np.einsum("ij,ij->j", a.eigenvectors, b.eigenvectors)) >= 0.999)


def _crossing_field():
    # Hessian diag(1 + x1, 2 - x1, 5): eigenvalues 1 and 2 cross at x1 = 0.5
    def value(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return 0.5 * x1**2 + x1**3 / 6 + x2**2 - 0.5 * x1 * x2**2 + 2.5 * x3**2

    return ScalarField(3, value)


def test_frames_near_crossing_raise_with_index():
    fld = _crossing_field()
    pts = np.column_stack([np.linspace(0.3, 0.7, 9), np.zeros(9), np.zeros(9)])
    with pytest.raises((DegenerateSpectrumError, TrackingError)) as info:
        frame_along_curve(fld, pts)
    assert info.value.index == 4


def test_nonresonance_examples():
    ok, res = check_nonresonance([1.0, 3.0], max_order=4)
    assert not ok and res.index == 2 and res.multi_index == (3, 0)
    assert check_nonresonance([1.0, np.pi], max_order=6) == (True, None)
    ok, res = check_nonresonance([1.0, 2.0], max_order=2)
    assert not ok and res.index == 2 and res.multi_index == (2, 0)


def test_nonresonance_fig1():
    ok, _ = check_nonresonance([3 - np.sqrt(5), 3 + np.sqrt(5)], max_order=10)
    assert ok
