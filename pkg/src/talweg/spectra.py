"""Ordered, sign-consistent eigendecompositions of Hessians."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSpectrumError, TrackingError
from .field import GAP_TOL, ScalarField

SYM_TOL = 1e-10
MATCH_TOL = 0.1


@dataclass(frozen=True)
class SpectralFrame:
    """Ascending eigenvalues and the orthogonal matrix of eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    point: np.ndarray | None = None

    @property
    def dim(self):
        return self.eigenvalues.size

    def vector(self, i):
        """Eigenvector v_i, 1-based."""
        return self.eigenvectors[:, i - 1]

    def value(self, i):
        return float(self.eigenvalues[i - 1])

    @property
    def matrix(self):
        P = self.eigenvectors
        return (P * self.eigenvalues) @ P.T

    def coordinates(self, y):
        """Components of y in the eigenbasis (alpha_j = <y, v_j>)."""
        return np.asarray(y, dtype=float) @ self.eigenvectors


def canonical_signs(P):
    """Flip columns so that each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(P), axis=0)
    s = np.sign(P[idx, np.arange(P.shape[1])])
    s[s == 0] = 1.0
    return P * s


def decompose(hess, at=None, gap_tol=GAP_TOL) -> SpectralFrame:
    """Eigendecomposition with ascending eigenvalues and canonical signs.

    Raises
    ------
    DegenerateSpectrumError
        If two consecutive eigenvalues are closer than ``gap_tol``.
    """
    H = np.asarray(hess, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, np.abs(H).max())
    if np.abs(H - H.T).max() > SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    lam, P = np.linalg.eigh(0.5 * (H + H.T))
    gaps = np.diff(lam)
    if gaps.size and gaps.min() <= gap_tol:
        k = int(np.argmin(gaps))
        raise DegenerateSpectrumError(
            f"eigenvalues {k + 1} and {k + 2} collide "
            f"({lam[k]:.6g} vs {lam[k + 1]:.6g}, gap {gaps[k]:.2e})",
            pair=(k + 1, k + 2),
        )
    point = None if at is None else np.asarray(at, dtype=float)
    return SpectralFrame(lam, canonical_signs(P), point)


def align_frame(frame: SpectralFrame, reference: SpectralFrame) -> SpectralFrame:
    """Flip eigenvectors to agree in sign with the same-index reference vectors."""
    if frame.dim != reference.dim:
        raise ValueError("frames have different dimensions")
    dots = np.einsum("ij,ij->j", frame.eigenvectors, reference.eigenvectors)
    bad = np.flatnonzero(np.abs(dots) < MATCH_TOL)
    if bad.size:
        i = int(bad[0]) + 1
        raise TrackingError(
            f"eigenvector {i} moved too far from the reference (|<v, v_ref>| = {abs(dots[bad[0]]):.3f})"
        )
    s = np.where(dots < 0, -1.0, 1.0)
    return SpectralFrame(frame.eigenvalues, frame.eigenvectors * s, frame.point)


def frame_at(field: ScalarField, x, reference=None, gap_tol=GAP_TOL) -> SpectralFrame:
    x = np.asarray(x, dtype=float)
    fr = decompose(field.hess(x), x, gap_tol=gap_tol)
    return fr if reference is None else align_frame(fr, reference)


def frame_along_curve(field: ScalarField, points, gap_tol=GAP_TOL):
    """Decompose at each point and chain sign alignment from the first frame."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("points must be a nonempty (n, d) array")
    frames = []
    prev = None
    for k, x in enumerate(points):
        try:
            fr = decompose(field.hess(x), x, gap_tol=gap_tol)
            if prev is not None:
                fr = align_frame(fr, prev)
        except DegenerateSpectrumError as exc:
            raise DegenerateSpectrumError(f"at point {k}: {exc}", exc.pair, index=k) from exc
        except TrackingError as exc:
            raise TrackingError(f"at point {k}: {exc}", index=k) from exc
        frames.append(fr)
        prev = fr
    return frames


class Resonance(NamedTuple):
    """``lambda_index == sum_j multi_index[j] * lambda_{j+1}`` (index is 1-based)."""

    index: int
    multi_index: tuple


def check_nonresonance(eigenvalues, max_order=10, rel_tol=1e-9):
    """Exhaustive search for resonances of total order 2..max_order.

    Returns ``(True, None)`` when none is found, else ``(False, Resonance)``
    for the first hit, scanning eigenvalue index, then total order, then
    multi-indices in lexicographic order of their sorted supports.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    d = lam.size
    tol = rel_tol * np.abs(lam).max()
    for i in range(d):
        for order in range(2, max_order + 1):
            for combo in itertools.combinations_with_replacement(range(d), order):
                m = np.bincount(combo, minlength=d)
                if abs(lam[i] - m @ lam) <= tol:
                    return False, Resonance(i + 1, tuple(int(v) for v in m))
    return True, None
