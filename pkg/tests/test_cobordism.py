import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import disk_crossing_linking, hopf_fiber
from pontryagin.cobordism import (CobordismDescriptor, descriptor, disjoint_union, frames_path_cobordant,
                                  push_off, twisted, with_frames_times)
from pontryagin.errors import DimensionMismatch, NonIntegerLinking, UnsupportedDimension
from pontryagin.geomkit import Frame, PolyLoop, unit_circle
from pontryagin.preimage import FramedLoop, FramedLoops, FramedPoint, FramedPoints, PontryaginManifold


def framed_circle(segments, center=(0, 0, 0), normal_axis=2, radius=1.0) -> FramedLoop:
    loop = unit_circle(segments, center, normal_axis, radius)
    rel = loop.samples - np.asarray(center, dtype=float)
    radial = rel / np.linalg.norm(rel, axis=1)[:, None]
    axis = np.zeros((len(rel), 3))
    axis[:, normal_axis] = 1.0
    W = np.stack([axis, radial], axis=2)
    T = np.roll(loop.samples, -1, axis=0) - loop.samples
    if np.linalg.det(np.concatenate([W[:1], T[:1, :, None]], axis=2))[0] < 0:
        W = W[:, :, ::-1]  # keep (ω1, ω2, tangent) positive
    return FramedLoop(loop, W)


def loops_manifold(*components) -> PontryaginManifold:
    return PontryaginManifold(1, 2, None, FramedLoops(3, tuple(components)))


def points_manifold(xs, signs) -> PontryaginManifold:
    n = np.asarray(xs).shape[1]
    pts = []
    for x, s in zip(xs, signs):
        F = np.eye(n)
        F[0, 0] = s
        pts.append(FramedPoint(np.asarray(x, dtype=float), Frame(F)))
    return PontryaginManifold(0, n, None, FramedPoints(n, tuple(pts)))


# --- descriptor ---------------------------------------------------------------

def test_empty_is_zero():
    assert descriptor(PontryaginManifold.empty(0, 2)).value == 0
    assert descriptor(PontryaginManifold.empty(1, 2)).value == 0


def test_single_point_signs():
    assert descriptor(points_manifold([[0.0, 0.0]], [1])).value == 1
    assert descriptor(points_manifold([[0.0, 0.0]], [-1])).value == -1


def test_hopf_fiber_descriptor(hopf_manifold):
    d = descriptor(hopf_manifold)
    assert (d.kind, d.value) == ("hopf-number", 1)
    (self_link,) = d.details["self_linking"]
    # the push-off of a fiber is again (isotopic to) a fiber: compare with two nearby exact fibers
    y = hopf_manifold.regular_value
    oracle = disk_crossing_linking(hopf_fiber(y, 2048), hopf_fiber(y + [0.05, 0.0], 2048))
    assert oracle == 1
    assert abs(self_link - oracle) <= 5e-3


def test_planar_circle_radial_framing_is_zero(circle):
    assert descriptor(circle).value == 0


@pytest.mark.parametrize("turns", [-2, -1, 1, 3])
def test_twisted_circle(turns, circle):
    c = twisted(circle.payload.components[0], turns)
    assert descriptor(loops_manifold(c)).value == turns


def test_twist_changes_hopf_number_by_one(hopf_manifold):
    comp = hopf_manifold.payload.components[0]
    for turns in (-1, 1, 2):
        P = loops_manifold(twisted(comp, turns))
        assert descriptor(P).value == 1 + turns


def test_coarse_link_rejected():
    P = loops_manifold(framed_circle(8), framed_circle(8, center=(1, 0, 0), normal_axis=1))
    with pytest.raises(NonIntegerLinking):
        descriptor(P)


def test_linked_circles_pairwise_term():
    a = framed_circle(512)
    b = framed_circle(512, center=(1, 0, 0), normal_axis=1)
    d = descriptor(loops_manifold(a, b))
    (_, _, lk), = d.details["pairwise_linking"]
    assert d.value == 2 * round(lk) == -2


def test_unsupported_dimensions():
    t = np.linspace(0, 2 * np.pi, 65)
    t[-1] = 0.0
    X = np.c_[np.cos(t), np.sin(t), np.zeros_like(t), np.zeros_like(t)]
    W = np.stack([X, np.tile([0, 0, 1.0, 0], (65, 1)), np.tile([0, 0, 0, 1.0], (65, 1))], axis=2)
    P = PontryaginManifold(1, 3, None, FramedLoops(4, (FramedLoop(PolyLoop(X), W),)))
    with pytest.raises(UnsupportedDimension):
        descriptor(P)
    X2 = X[:, :2]
    P1 = PontryaginManifold(1, 1, None, FramedLoops(2, (FramedLoop(PolyLoop(X2), X2[:, :, None]),)))
    with pytest.raises(UnsupportedDimension):
        descriptor(P1)


def test_descriptor_kind_invariants():
    with pytest.raises(ValueError):
        CobordismDescriptor(1, 2, "signed-count", 0)
    with pytest.raises(ValueError):
        CobordismDescriptor(1, 3, "hopf-number", 0)
    d = descriptor(points_manifold([[0.0]], [1]))
    assert d.to_json()["kind"] == "signed-count"


# --- disjoint union ----------------------------------------------------------------

def test_union_with_empty_is_identity():
    P = points_manifold([[0.0, 1.0]], [1])
    assert disjoint_union(P, PontryaginManifold.empty(0, 2)) is P
    assert disjoint_union(PontryaginManifold.empty(0, 2), P) is P


def test_plus_and_minus_cancel():
    U = disjoint_union(points_manifold([[0.0]], [1]), points_manifold([[0.0]], [-1]))
    assert len(U.payload) == 2
    assert U.meta["offset"] != [0.0]
    assert descriptor(U).value == 0


def test_union_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        disjoint_union(points_manifold([[0.0]], [1]), points_manifold([[0.0, 0.0]], [1]))


def test_hopf_union_hopf(hopf_manifold):
    U = disjoint_union(hopf_manifold, hopf_manifold)
    d = descriptor(U)
    assert d.value == 2
    (_, _, lk), = d.details["pairwise_linking"]
    assert abs(lk) <= 5e-3
    assert U.meta["offset"][0] > 0


def test_linked_union_is_separated():
    a = loops_manifold(framed_circle(256))
    b = loops_manifold(framed_circle(256, center=(1, 0, 0), normal_axis=1))
    U = disjoint_union(a, b)
    assert descriptor(U).value == descriptor(a).value + descriptor(b).value


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 5), st.integers(0, 5), st.integers(0, 2**31 - 1),
       st.booleans())
def test_point_additivity(n, c1, c2, seed, same_place):
    rng = np.random.default_rng(seed)
    X1 = rng.uniform(-2, 2, (c1, n))
    X2 = X1[:c2].copy() if same_place and c2 <= c1 else rng.uniform(-2, 2, (c2, n))
    P1 = points_manifold(X1, rng.choice([-1, 1], c1)) if c1 else PontryaginManifold.empty(0, n)
    P2 = points_manifold(X2, rng.choice([-1, 1], len(X2))) if len(X2) else PontryaginManifold.empty(0, n)
    U = disjoint_union(P1, P2)
    assert descriptor(U).value == descriptor(P1).value + descriptor(P2).value


@settings(max_examples=12, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_loop_additivity(t1, t2, dx, dz):
    c1 = twisted(framed_circle(256), t1)
    c2 = twisted(framed_circle(256, center=(dx, 0, dz), normal_axis=1, radius=0.8), t2)
    P1, P2 = loops_manifold(c1), loops_manifold(c2)
    assert descriptor(disjoint_union(P1, P2)).value == t1 + t2


# --- framings ---------------------------------------------------------------------------

def test_frame_change_invariance_points():
    P = points_manifold([[0, 0, 0], [1, 0, 0], [0, 2, 0]], [1, -1, 1])
    T = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])
    assert descriptor(with_frames_times(P, T)).value == descriptor(P).value == 1


def test_frame_change_invariance_hopf(hopf_manifold):
    for T in (np.array([[2.0, 0.5], [-0.3, 1.0]]), np.array([[0.0, -1.0], [1.0, 0.0]])):
        assert np.linalg.det(T) > 0
        assert descriptor(with_frames_times(hopf_manifold, T)).value == 1


def test_push_off_offset(circle):
    comp = circle.payload.components[0]
    L = push_off(comp)
    d = np.linalg.norm(L.samples - comp.loop.samples, axis=1)
    np.testing.assert_allclose(d, 10 * comp.loop.mean_spacing(), rtol=1e-12)


def test_identical_framings_cobordant():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    nu = np.stack([np.eye(2), np.diag([2.0, 1.0])])
    res = frames_path_cobordant(X, nu, nu)
    assert res.cobordant
    for path, a in zip(res.witness, nu):
        for M in path.matrices:
            np.testing.assert_allclose(M, a, atol=1e-12)


def test_reflected_framing_not_cobordant():
    X = np.zeros((1, 3))
    res = frames_path_cobordant(X, np.eye(3)[None], np.diag([1.0, 1.0, -1.0])[None])
    assert not res.cobordant and res.witness is None


def test_loop_twist_not_cobordant(circle):
    comp = circle.payload.components[0]
    res = frames_path_cobordant(comp.loop, comp.frames, twisted(comp, 1).frames)
    assert not res.cobordant
    assert abs(res.windings[0]) == 1


def test_loop_constant_change_cobordant(circle):
    comp = circle.payload.components[0]
    T = np.array([[1.5, 0.7], [-0.4, 0.9]])
    res = frames_path_cobordant(comp.loop, comp.frames, comp.frames @ T)
    assert res.cobordant and res.windings == (0,)
    (path,) = res.witness
    assert path.shape == (17, comp.frames.shape[0], 2, 2)
    np.testing.assert_allclose(path[0], np.broadcast_to(np.eye(2), path[0].shape), atol=1e-12)
    np.testing.assert_allclose(path[-1], np.broadcast_to(T, path[-1].shape), atol=1e-12)
    assert (np.linalg.det(path) > 0).all()


def test_loop_frame_comparison_needs_r3():
    loop = PolyLoop(np.c_[np.cos(np.linspace(0, 2 * np.pi, 17)), np.sin(np.linspace(0, 2 * np.pi, 17))]
                    .round(15))
    W = np.ones((17, 2, 1))
    with pytest.raises(UnsupportedDimension):
        frames_path_cobordant(loop, W, W)
