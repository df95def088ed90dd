import numpy as np
import pytest

from oracles import circle_through, distance_to_circle, hopf_fiber, winding_roots
from pontryagin.errors import DimensionMismatch, NotRegular, UnsupportedDimension
from pontryagin.geomkit import Frame
from pontryagin.mapdsl import builtin, parse_map
from pontryagin.preimage import (pontryagin_manifold, pullback_framing, solve_preimage_points,
                                 trace_cobordism, trace_preimage_loops)


# --- points --------------------------------------------------------------------

def test_identity_preimage():
    X = solve_preimage_points(builtin("identity:2"), [0.3, -0.7])
    assert X.shape == (1, 2)
    np.testing.assert_allclose(X[0], [0.3, -0.7], atol=1e-12)


@pytest.mark.parametrize("y", [0.37, -0.9, 0.05])
def test_winding_two_matches_closed_form(y):
    X = solve_preimage_points(builtin("winding:2"), [y])
    np.testing.assert_allclose(X[:, 0], winding_roots(2, y), atol=1e-10)


@pytest.mark.parametrize("d", [-3, -1, 3])
def test_winding_roots(d):
    X = solve_preimage_points(builtin(f"winding:{d}"), [0.61])
    np.testing.assert_allclose(X[:, 0], winding_roots(d, 0.61), atol=1e-10)


def test_constant_infinity_empty():
    assert len(solve_preimage_points(builtin("constant-inf:2,0"), [0.1, 0.2])) == 0


def test_fold_point_not_regular():
    with pytest.raises(NotRegular):
        solve_preimage_points(parse_map("x1^2", 1, 1, support_radius=2.0), [0.0])


# --- loops ------------------------------------------------------------------------

def test_unit_circle_loop():
    f = parse_map("x1^2 + x2^2", 2, 1, support_radius=2.0)
    loops = trace_preimage_loops(f, [1.0], step=1e-2)
    assert len(loops) == 1
    v = loops[0].vertices
    assert np.abs(np.linalg.norm(v, axis=1) - 1.0).max() <= 1e-6
    assert np.linalg.norm(loops[0].samples[0] - loops[0].samples[-1]) <= 1e-9


def test_two_circles_found():
    f = parse_map("(x1^2 + x2^2 - 1) * ((x1 - 4)^2 + x2^2 - 1)", 2, 1, support_radius=6.0)
    loops = trace_preimage_loops(f, [0.0], step=2e-2)
    assert len(loops) == 2


def test_hopf_fiber(hopf_manifold):
    P = hopf_manifold
    assert P.k == 1 and len(P.payload) == 1
    f = builtin("hopf")
    S = P.payload.components[0].loop.samples
    F, _, _ = f.evaluate_batch(S)
    assert np.abs(F - P.regular_value).max() <= 1e-8
    # Hopf fibers are round circles; compare with the circle through three exact fiber points
    c, r, normal = circle_through(*hopf_fiber(P.regular_value, 3))
    assert distance_to_circle(S, c, r, normal).max() <= 1e-6
    # and the loop goes all the way round
    rel = S - c
    ang = np.unwrap(np.arctan2(rel @ np.cross(normal, rel[0]), rel @ rel[0] / 1.0))
    assert abs(abs(ang[-1] - ang[0]) - 2 * np.pi) <= 1e-9


@pytest.mark.parametrize("src", ["(x1^2 + x2^2)^2 - 2*(x1^2 - x2^2)", "x1^2 - x2^2"])
def test_cone_singularity_not_regular(src):
    f = parse_map(src, 2, 1, support_radius=3.0)
    with pytest.raises(NotRegular):
        trace_preimage_loops(f, [0.0])


# --- framing --------------------------------------------------------------------------

def test_identity_framing():
    P = pullback_framing(builtin("identity:3"), [0.1, 0.2, 0.3], [[0.1, 0.2, 0.3]])
    np.testing.assert_allclose(P.payload.points[0].frame.vectors, np.eye(3))


def test_linear_framing_is_inverse():
    A = np.array([[2.0, 1.0], [-1.0, 3.0]])
    f = parse_map("2*x1 + x2; -x1 + 3*x2", 2, 2)
    nu = Frame(np.array([[1.0, 1.0], [0.0, 2.0]]))
    P = pullback_framing(f, [0.0, 0.0], [[0.0, 0.0]], nu)
    np.testing.assert_allclose(P.payload.points[0].frame.vectors, np.linalg.solve(A, nu.vectors),
                               atol=1e-14)


def test_winding_two_frames_positive():
    f = builtin("winding:2")
    P = pontryagin_manifold(f, 1, 0, y=[0.37])
    assert len(P.payload) == 2
    for p in P.payload.points:
        _, J = f.evaluate_with_jacobian(p.x)
        assert p.frame.det() > 0
        assert p.frame.vectors[0, 0] == pytest.approx(1.0 / J[0, 0], rel=1e-12)


def test_loop_framing_invariants(hopf_manifold):
    f = builtin("hopf")
    comp = hopf_manifold.payload.components[0]
    _, J, _ = f.evaluate_batch(comp.loop.samples)
    resid = np.einsum("snm,smj->snj", J, comp.frames) - np.eye(2)[None]
    assert np.abs(resid).max() <= 1e-9
    assert comp.normality_defect() <= 1e-3
    assert comp.max_frame_turn() <= 0.2


def test_loop_orientation_convention(hopf_manifold):
    comp = hopf_manifold.payload.components[0]
    T = comp.discrete_tangents()
    dets = np.linalg.det(np.concatenate([comp.frames, T[:, :, None]], axis=2))
    assert (dets > 0).all()


# --- pipeline -----------------------------------------------------------------------------

def test_pipeline_constant_infinity():
    P = pontryagin_manifold(builtin("constant-inf:2,1"), 2, 1)
    assert P.is_empty and P.regular_value is not None


def test_pipeline_reflection():
    P = pontryagin_manifold(builtin("reflection:2"), 2, 0, rng_seed=4)
    assert len(P.payload) == 1
    assert P.payload.points[0].frame.det() < 0


def test_pipeline_dimension_checks():
    with pytest.raises(UnsupportedDimension):
        pontryagin_manifold(builtin("identity:2"), 0, 2)
    with pytest.raises(DimensionMismatch):
        pontryagin_manifold(builtin("identity:2"), 2, 1)


def test_pipeline_deterministic():
    a = pontryagin_manifold(builtin("winding:3"), 1, 0, rng_seed=9)
    b = pontryagin_manifold(builtin("winding:3"), 1, 0, rng_seed=9)
    np.testing.assert_array_equal(a.regular_value, b.regular_value)
    np.testing.assert_array_equal(a.payload.positions, b.payload.positions)


def test_pipeline_deterministic_loops(hopf_manifold):
    again = pontryagin_manifold(builtin("hopf"), 2, 1, rng_seed=1)
    np.testing.assert_array_equal(again.payload.components[0].loop.samples,
                                  hopf_manifold.payload.components[0].loop.samples)
    np.testing.assert_array_equal(again.payload.components[0].frames,
                                  hopf_manifold.payload.components[0].frames)


# --- cobordisms ------------------------------------------------------------------------------

def test_product_cobordism():
    H = parse_map("x1^3 - x1", 2, 1, support_radius=3.0)  # constant in t = x2
    tr = trace_cobordism(H, [0.2])
    assert len(tr.components) == 3
    for c in tr.components:
        assert c.kind == "arc"
        assert {c.endpoints[0][0], c.endpoints[1][0]} == {0, 1}
        assert np.ptp(c.samples[:, 0]) <= 1e-9
    assert tr.boundary_error() <= 1e-6
    assert tr.signed_counts() == (1, 1)


WIND2 = "(x1^2 - 1) / (2*x1)"
# A rotated copy of the target circle moves the basepoint; this copy keeps
# the poles (0 and ∞) fixed so that no fiber point passes through ∞.
MOVED = f"1.5*({WIND2}) + 0.3"


def test_linear_homotopy_to_moved_copy():
    H = parse_map(f"(1 - x2)*({WIND2}) + x2*({MOVED})", 2, 1, support_radius=6.0)
    tr = trace_cobordism(H, [0.37])
    n0, n1 = (len(e) for e in tr.ends)
    assert n0 == 2 and n1 == 2
    assert tr.signed_counts() == (2, 2)
    assert tr.boundary_error() <= 1e-6
    for face, P in enumerate(tr.ends):
        F, _, _ = H.evaluate_batch(np.c_[P, np.full(len(P), float(face))])
        assert np.abs(F - 0.37).max() <= 1e-10


def test_fold_cobordism():
    H = parse_map("x1^2 - (x2 - 0.5)", 2, 1, support_radius=3.0)
    tr = trace_cobordism(H, [0.0])
    assert len(tr.ends[0]) == 0
    np.testing.assert_allclose(np.sort(tr.ends[1][:, 0]), [-np.sqrt(0.5), np.sqrt(0.5)], atol=1e-10)
    (arc,) = tr.components
    assert arc.kind == "arc" and {e[0] for e in arc.endpoints} == {1}
    np.testing.assert_allclose(arc.samples[:, 1], arc.samples[:, 0] ** 2 + 0.5, atol=1e-8)
    assert tr.signed_counts() == (0, 0)
    assert tr.boundary_error() <= 1e-6
