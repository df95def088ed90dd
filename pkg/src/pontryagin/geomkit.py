"""Small-dimension linear algebra: frames, GL+ paths and the Gauss linking integral."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm, polar, schur

from .errors import DegenerateFrame, LoopsTooClose, OrientationMismatch, WrongAmbientDimension

FRAME_SIGMA_MIN = 1e-9


@dataclass(frozen=True)
class Frame:
    """An ordered basis of a subspace, stored as the columns of ``vectors``."""

    vectors: np.ndarray  # (ambient_dim, count)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.shape[1] > v.shape[0]:
            raise DegenerateFrame(f"{v.shape[1]} vectors cannot be independent in R^{v.shape[0]}")
        if v.size and np.linalg.svd(v, compute_uv=False).min() < FRAME_SIGMA_MIN:
            raise DegenerateFrame("frame vectors are linearly dependent")
        object.__setattr__(self, "vectors", v)

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def det(self) -> float:
        return float(np.linalg.det(self.vectors))

    @classmethod
    def from_rows(cls, vs: Sequence) -> "Frame":
        return cls(np.asarray(vs, dtype=float).T)


def gram_schmidt(vs: Sequence) -> Frame:
    """Orthonormalise a list of vectors (modified Gram-Schmidt, re-orthogonalised)."""
    A = np.atleast_2d(np.asarray(vs, dtype=float))
    if A.shape[0] > A.shape[1] or np.linalg.svd(A, compute_uv=False).min() < FRAME_SIGMA_MIN:
        raise DegenerateFrame("input vectors are not linearly independent")
    out: list[np.ndarray] = []
    for v in A:
        w = v.copy()
        for _ in range(2):
            for q in out:
                w -= (q @ w) * q
        out.append(w / np.linalg.norm(w))
    return Frame(np.array(out).T)


# ---------------------------------------------------------------------------
# GL+ paths


@dataclass(frozen=True)
class GLPath:
    matrices: list[np.ndarray]
    step_constant: float  # consecutive max-norm differences are <= step_constant / steps


def _rotation_log(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real Schur basis Z and skew generator L with Q = Z expm(L) Z^T for Q in SO(n)."""
    n = Q.shape[0]
    T, Z = schur(Q, output="real")
    L = np.zeros((n, n))
    minus: list[int] = []
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 1e-14:
            ang = np.arctan2(T[i + 1, i], T[i, i])
            L[i + 1, i], L[i, i + 1] = ang, -ang
            i += 2
            continue
        if T[i, i] < 0:
            minus.append(i)
        i += 1
    # det Q = +1 leaves an even number of -1 eigenvalues; pair them into half-turns
    for a, b in zip(minus[::2], minus[1::2]):
        L[b, a], L[a, b] = np.pi, -np.pi
    return Z, L


def glplus_path(A, B, steps: int) -> GLPath:
    """Path in GL+(n) from A to B by polar-decomposition interpolation.

    The orthogonal factor moves along a one-parameter subgroup, the symmetric
    positive-definite factor linearly; the product keeps positive determinant.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square of equal size")
    if steps < 1:
        raise ValueError("steps must be positive")
    dA, dB = np.linalg.det(A), np.linalg.det(B)
    if dA * dB <= 0 or dA <= 0:
        raise OrientationMismatch(f"det A = {dA:.3g}, det B = {dB:.3g}; both must be positive")
    RA, PA = polar(A, side="left")  # A = P R
    RB, PB = polar(B, side="left")
    Z, L = _rotation_log(RA.T @ RB)
    mats = []
    for j in range(steps + 1):
        t = j / steps
        R = RA @ Z @ expm(t * L) @ Z.T
        P = (1 - t) * PA + t * PB
        mats.append(P @ R)
    mats[0], mats[-1] = A.copy(), B.copy()
    C = (np.linalg.norm(L, 2) * max(np.linalg.norm(PA, 2), np.linalg.norm(PB, 2))
         + np.linalg.norm(PB - PA, 2))
    return GLPath(mats, float(C) + 1e-12)


# ---------------------------------------------------------------------------
# loops and linking


@dataclass(frozen=True)
class PolyLoop:
    """Ordered samples of a curve; a closed loop repeats its first sample last."""

    samples: np.ndarray
    closed: bool = True

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[0] < 8:
            raise ValueError("a PolyLoop needs at least 8 samples")
        if np.any(np.linalg.norm(np.diff(s, axis=0), axis=1) == 0.0):
            raise ValueError("consecutive samples must be distinct")
        if self.closed and np.linalg.norm(s[0] - s[-1]) > 1e-9:
            raise ValueError("closed loop must end at its first sample")
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def vertices(self) -> np.ndarray:
        """Samples without the repeated closing point."""
        return self.samples[:-1] if self.closed else self.samples

    def reversed(self) -> "PolyLoop":
        return PolyLoop(self.samples[::-1].copy(), self.closed)

    def translated(self, offset) -> "PolyLoop":
        return PolyLoop(self.samples + np.asarray(offset, dtype=float), self.closed)

    def mean_spacing(self) -> float:
        return float(np.linalg.norm(np.diff(self.samples, axis=0), axis=1).mean())

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.samples, axis=0), axis=1).sum())

    @classmethod
    def closing(cls, vertices) -> "PolyLoop":
        v = np.asarray(vertices, dtype=float)
        return cls(np.vstack([v, v[:1]]), True)


def min_distance(a: np.ndarray, b: np.ndarray) -> float:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.min()))


def gauss_linking(a: PolyLoop, b: PolyLoop, min_separation: float = 1e-3) -> float:
    """Double Gauss integral over segment pairs (midpoint rule).

    lk = (1/4π) ΣΣ (m_i - m_j) · (Δa_i × Δb_j) / |m_i - m_j|^3, with the loops
    oriented by their sample order in right-handed R^3.
    """
    for loop in (a, b):
        if loop.dim != 3:
            raise WrongAmbientDimension(f"linking needs loops in R^3, got R^{loop.dim}")
        if not loop.closed:
            raise ValueError("linking needs closed loops")
    if min_distance(a.samples, b.samples) < min_separation:
        raise LoopsTooClose("loops come closer than the separation threshold")
    da = np.diff(a.samples, axis=0)
    db = np.diff(b.samples, axis=0)
    ma = a.samples[:-1] + 0.5 * da
    mb = b.samples[:-1] + 0.5 * db
    r = ma[:, None, :] - mb[None, :, :]
    cross = np.cross(da[:, None, :], db[None, :, :])
    terms = np.einsum("ijk,ijk->ij", r, cross) / np.linalg.norm(r, axis=-1) ** 3
    # symmetric evaluation: lk(a,b) and lk(b,a) share the same pairwise terms
    return float(np.sum(terms, dtype=np.float64) / (4.0 * np.pi))


def unit_circle(n: int, center=(0.0, 0.0, 0.0), normal_axis: int = 2, radius: float = 1.0) -> PolyLoop:
    """Circle sampled with ``n`` segments in a coordinate plane (helper for tests and demos)."""
    t = np.linspace(0.0, 2 * np.pi, n + 1)
    first, second = [i for i in range(3) if i != normal_axis]
    pts = np.zeros((n + 1, 3))
    pts[:, first] = radius * np.cos(t)
    pts[:, second] = radius * np.sin(t)
    pts += np.asarray(center, dtype=float)
    pts[-1] = pts[0]
    return PolyLoop(pts)
