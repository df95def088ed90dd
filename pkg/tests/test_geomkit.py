import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import disk_crossing_linking
from pontryagin.errors import DegenerateFrame, LoopsTooClose, OrientationMismatch, WrongAmbientDimension
from pontryagin.geomkit import Frame, PolyLoop, gauss_linking, glplus_path, gram_schmidt, unit_circle


# --- frames -------------------------------------------------------------------

def test_gram_schmidt_standard_basis():
    F = gram_schmidt(np.eye(3))
    np.testing.assert_array_equal(F.vectors, np.eye(3))


def test_gram_schmidt_one_projection():
    F = gram_schmidt([(1, 0), (1, 1)])
    np.testing.assert_allclose(F.vectors.T, [[1, 0], [0, 1]], atol=1e-15)


def test_gram_schmidt_random_triples_in_r5():
    rng = np.random.default_rng(5)
    for _ in range(50):
        V = rng.normal(size=(3, 5))
        Q = gram_schmidt(V).vectors
        G = Q.T @ Q
        assert np.abs(G - np.eye(3)).max() <= 1e-12
        # span residual: every input vector is reproduced by its projection
        R = V.T - Q @ (Q.T @ V.T)
        assert np.abs(R).max() <= 1e-12 * max(1.0, np.abs(V).max())


def test_gram_schmidt_dependent():
    with pytest.raises(DegenerateFrame):
        gram_schmidt([(1, 2, 3), (2, 4, 6)])


def test_frame_rejects_dependent_columns():
    with pytest.raises(DegenerateFrame):
        Frame(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert Frame.from_rows([(0, 1), (1, 0)]).det() == pytest.approx(-1.0)


# --- GL+ paths ------------------------------------------------------------------

def test_glplus_identity_constant():
    path = glplus_path(np.eye(3), np.eye(3), 8)
    assert len(path.matrices) == 9
    for M in path.matrices:
        np.testing.assert_allclose(M, np.eye(3), atol=1e-14)


def test_glplus_quarter_rotation():
    B = np.array([[0.0, -1.0], [1.0, 0.0]])
    path = glplus_path(np.eye(2), B, 10)
    np.testing.assert_array_equal(path.matrices[-1], B)
    for j, M in enumerate(path.matrices):
        assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(M.T @ M, np.eye(2), atol=1e-12)
        # a rotation by (j/10)·π/2
        assert math.atan2(M[1, 0], M[0, 0]) == pytest.approx(j * math.pi / 20, abs=1e-12)


def test_glplus_reflection_rejected():
    with pytest.raises(OrientationMismatch):
        glplus_path(np.eye(2), np.diag([1.0, -1.0]), 4)


def _random_glplus(rng, n):
    while True:
        A = rng.normal(size=(n, n))
        if abs(np.linalg.det(A)) > 1e-2:
            if np.linalg.det(A) < 0:
                A[:, 0] *= -1
            return A


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_glplus_path_stays_positive(n, seed, steps):
    rng = np.random.default_rng(seed)
    A, B = _random_glplus(rng, n), _random_glplus(rng, n)
    path = glplus_path(A, B, steps)
    np.testing.assert_array_equal(path.matrices[0], A)
    np.testing.assert_array_equal(path.matrices[-1], B)
    assert all(np.linalg.det(M) > 0 for M in path.matrices)
    jumps = [np.abs(b - a).max() for a, b in zip(path.matrices, path.matrices[1:])]
    assert max(jumps) <= path.step_constant / steps + 1e-9


# --- loops ------------------------------------------------------------------------

def test_polyloop_validation():
    with pytest.raises(ValueError):
        PolyLoop(np.zeros((4, 3)))
    pts = unit_circle(16).samples.copy()
    pts[-1] += 1e-3
    with pytest.raises(ValueError):
        PolyLoop(pts)


def test_far_circles_unlinked():
    a = unit_circle(512)
    b = unit_circle(512, center=(0, 0, 5))
    assert abs(gauss_linking(a, b)) <= 5e-3


def hopf_link(n=512):
    return unit_circle(n), unit_circle(n, center=(1, 0, 0), normal_axis=1)


def test_hopf_link_is_plus_minus_one():
    a, b = hopf_link()
    lk = gauss_linking(a, b)
    oracle = disk_crossing_linking(a.vertices, b.vertices)
    assert abs(oracle) == 1
    assert abs(lk - oracle) <= 5e-3


def test_linking_refinement_stable():
    vals = [gauss_linking(*hopf_link(n)) for n in (512, 1024, 2048)]
    assert all(abs(v - round(v)) <= 5e-3 for v in vals)
    assert abs(vals[-1] - vals[-2]) < abs(vals[-2] - vals[-3]) + 1e-12


def test_loop_with_itself():
    a = unit_circle(64)
    with pytest.raises(LoopsTooClose):
        gauss_linking(a, a)


def test_linking_needs_r3():
    t = np.linspace(0, 2 * np.pi, 33)
    a = PolyLoop(np.c_[np.cos(t), np.sin(t)])
    with pytest.raises(WrongAmbientDimension):
        gauss_linking(a, a)


def test_linking_symmetry_and_reversal():
    a, b = hopf_link(256)
    lab, lba = gauss_linking(a, b), gauss_linking(b, a)
    assert abs(lab - lba) <= 1e-9
    assert abs(gauss_linking(a.reversed(), b) + lab) <= 1e-9
    assert abs(gauss_linking(a, b.reversed()) + lab) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(0.3, 3.0))
def test_linking_matches_crossing_oracle(dx, dz, r):
    # circle b in the xz-plane through the disk of a, or beside it
    a = unit_circle(384)
    b = unit_circle(384, center=(1 + dx, 0, dz), normal_axis=1, radius=r)
    try:
        lk = gauss_linking(a, b, min_separation=0.05)
    except LoopsTooClose:
        return
    assert abs(lk - disk_crossing_linking(a.vertices, b.vertices)) <= 5e-3
