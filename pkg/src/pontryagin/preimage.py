"""Pontryagin manifolds: fibers f^{-1}(y) with their pullback framings.

For k = 0 the fiber is a finite set of points located by multi-start Newton;
for k = 1 it is a union of closed curves traced by continuation. The framing
at x is the minimum-norm solution ω_i of df_x ω_i = e_i, which lies in the
orthogonal complement of the tangent space ker(df_x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (BudgetExhausted, ContinuationFailed, DegenerateFrame, DimensionMismatch,
                     NotRegular, UnsupportedDimension)
from .geomkit import Frame, PolyLoop
from .mapdsl import SmoothMap
from .solvers import (DEDUP_RADIUS, ROOT_TOL, dedup_points, newton_batch, oriented_kernel,
                      sigma_min, sobol_ball, trace_curve)

DEFAULT_TOL = 1e-6
DEFAULT_SEEDS = 4096
FIBER_TOL = 1e-8
FRAMING_RESIDUAL = 1e-9


# ---------------------------------------------------------------------------
# payload types


@dataclass(frozen=True)
class FramedPoint:
    x: np.ndarray
    frame: Frame

    @property
    def sign(self) -> int:
        return 1 if self.frame.det() > 0 else -1


@dataclass(frozen=True)
class FramedPoints:
    ambient_dim: int
    points: tuple[FramedPoint, ...]

    def __post_init__(self):
        xs = [p.x for p in self.points]
        for i in range(len(xs)):
            for j in range(i):
                if np.linalg.norm(xs[i] - xs[j]) < DEDUP_RADIUS:
                    raise ValueError("framed points must be pairwise distinct")
        for p in self.points:
            if p.frame.vectors.shape != (self.ambient_dim, self.ambient_dim):
                raise DegenerateFrame("frame size does not match the ambient dimension")

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.x for p in self.points]).reshape(-1, self.ambient_dim)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class FramedLoop:
    """A closed sampled curve with a normal frame (columns) at every sample."""

    loop: PolyLoop
    frames: np.ndarray  # (samples, ambient_dim, n)

    def __post_init__(self):
        fr = np.asarray(self.frames, dtype=float)
        if fr.shape[0] != self.loop.samples.shape[0] or fr.shape[1] != self.loop.dim:
            raise DegenerateFrame("one frame per loop sample is required")
        if np.linalg.svd(fr, compute_uv=False).min() < 1e-9:
            raise DegenerateFrame("loop frame is degenerate somewhere")
        object.__setattr__(self, "frames", fr)

    def discrete_tangents(self) -> np.ndarray:
        v = self.loop.vertices
        t = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
        t /= np.linalg.norm(t, axis=1)[:, None]
        return np.vstack([t, t[:1]])

    def normality_defect(self) -> float:
        """max |<ω_i/|ω_i|, tangent>| over samples and frame vectors."""
        T = self.discrete_tangents()
        W = self.frames / np.linalg.norm(self.frames, axis=1, keepdims=True)
        return float(np.abs(np.einsum("sd,sdi->si", T, W)).max())

    def max_frame_turn(self) -> float:
        """Largest angle (rad) between a frame vector and its successor."""
        W = self.frames / np.linalg.norm(self.frames, axis=1, keepdims=True)
        c = np.einsum("sdi,sdi->si", W[:-1], W[1:])
        return float(np.arccos(np.clip(c, -1.0, 1.0)).max())

    def translated(self, offset) -> "FramedLoop":
        return FramedLoop(self.loop.translated(offset), self.frames)


@dataclass(frozen=True)
class FramedLoops:
    ambient_dim: int
    components: tuple[FramedLoop, ...]

    def __len__(self):
        return len(self.components)

    def validate(self, normal_tol: float = 1e-3, turn_tol: float = 0.2):
        for c in self.components:
            if c.normality_defect() > normal_tol:
                raise DegenerateFrame("frame is not normal to the loop")
            if c.max_frame_turn() > turn_tol:
                raise DegenerateFrame("frame field jumps between consecutive samples")


@dataclass(frozen=True)
class PontryaginManifold:
    k: int
    n: int
    regular_value: np.ndarray | None
    payload: FramedPoints | FramedLoops | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.k not in (0, 1):
            raise UnsupportedDimension(f"k = {self.k} is not supported")
        p = self.payload
        if p is None:
            return
        expected = FramedPoints if self.k == 0 else FramedLoops
        if not isinstance(p, expected):
            raise DimensionMismatch(f"k = {self.k} needs a {expected.__name__} payload")
        if p.ambient_dim != self.n + self.k:
            raise DimensionMismatch("payload lives in the wrong ambient dimension")

    @property
    def is_empty(self) -> bool:
        return self.payload is None or len(self.payload) == 0

    @classmethod
    def empty(cls, k: int, n: int, y=None) -> "PontryaginManifold":
        return cls(k, n, None if y is None else np.asarray(y, dtype=float), None)


# ---------------------------------------------------------------------------
# k = 0


def _seeds(f: SmoothMap, count: int, rng_seed: int) -> np.ndarray:
    X = sobol_ball(f.domain_dim, f.support_radius, count, rng_seed)
    hints = f.seed_hints(np.random.default_rng(rng_seed))
    if hints is not None and len(hints):
        X = np.vstack([hints, X])
    return X


def solve_preimage_points(f: SmoothMap, y, rng_seed: int = 0, budget: int = DEFAULT_SEEDS,
                          tol: float = DEFAULT_TOL) -> np.ndarray:
    """All points of f^{-1}(y) in the support ball, as rows sorted lexicographically.

    Raises NotRegular when a converged point has σ_min(df) < tol.
    """
    if f.domain_dim != f.codomain_dim:
        raise DimensionMismatch("point preimages need a map R^n -> R^n")
    if budget < 1:
        raise BudgetExhausted("no Newton starts allowed")
    y = np.asarray(y, dtype=float).reshape(-1)
    X0 = _seeds(f, budget, rng_seed)
    X, res = newton_batch(f, y, X0, f.support_radius)
    inside = np.linalg.norm(X, axis=1) <= f.support_radius
    conv = (res <= ROOT_TOL) & inside
    pts = dedup_points(X[conv])
    stalled = (res > ROOT_TOL) & (res <= 1e-6) & inside
    for x in X[stalled]:
        if len(pts) == 0 or np.min(np.linalg.norm(pts - x, axis=1)) > 1e-4:
            raise BudgetExhausted(f"Newton stalled next to the fiber near {x.tolist()}")
    if len(pts) == 0:
        return pts
    _, J, _ = f.evaluate_batch(pts)
    for x, Jx in zip(pts, J):
        if sigma_min(Jx) < tol:
            raise NotRegular(f"df is singular at {x.tolist()}; re-pick the value")
    order = np.lexsort(pts.T[::-1])
    return pts[order]


# ---------------------------------------------------------------------------
# k = 1


def _cell(x: np.ndarray, step: float) -> tuple:
    return tuple(np.floor(x / step).astype(int))


def trace_preimage_loops(f: SmoothMap, y, step: float = 0.02, rng_seed: int = 0,
                         budget: int = DEFAULT_SEEDS, tol: float = DEFAULT_TOL,
                         max_samples: int = 200_000) -> list[PolyLoop]:
    """Closed components of the 1-dimensional fiber f^{-1}(y).

    Every component is oriented so that (ω_1, ..., ω_n, tangent) is a
    positive basis, where ω is the pullback framing.
    """
    if f.domain_dim != f.codomain_dim + 1:
        raise DimensionMismatch("loop preimages need a map R^(n+1) -> R^n")
    y = np.asarray(y, dtype=float).reshape(-1)
    X0 = _seeds(f, budget, rng_seed)
    X, res = newton_batch(f, y, X0, f.support_radius)
    conv = (res <= ROOT_TOL) & (np.linalg.norm(X, axis=1) <= f.support_radius)
    starts = X[conv]
    loops: list[PolyLoop] = []
    visited: set[tuple] = set()
    traced = np.zeros((0, f.domain_dim))
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * f.domain_dim)).reshape(f.domain_dim, -1).T
    for x in starts:
        c = np.array(_cell(x, step))
        if any(tuple(c + o) in visited for o in offsets):
            if np.min(np.linalg.norm(traced - x, axis=1)) <= 2 * step:
                continue
        curve = trace_curve(f, y, x, step, f.support_radius, tol=tol, max_samples=max_samples)
        if not curve.closed:
            raise ContinuationFailed("loop did not close")
        loops.append(PolyLoop(curve.samples))
        traced = np.vstack([traced, curve.samples])
        for s in curve.samples:
            visited.add(_cell(s, step))
    # deterministic component order: by lexicographically smallest sample
    loops.sort(key=lambda L: tuple(L.vertices[np.lexsort(L.vertices.T[::-1])[0]]))
    return loops


def resample_loop(f: SmoothMap, y, loop: PolyLoop, count: int) -> PolyLoop:
    """``count`` segments equally spaced in arclength, projected back onto the fiber."""
    S = loop.samples
    seg = np.linalg.norm(np.diff(S, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, S, bc_type="periodic")
    # rotate the start to the original first sample; fixed parameter grid
    grid = np.linspace(0.0, s[-1], count + 1)[:-1]
    P = spline(grid)
    P[0] = S[0]
    y = np.asarray(y, dtype=float)
    Xc, res = newton_batch(f, y, P, f.support_radius, max_iter=20)
    if np.any(res > FIBER_TOL):
        raise ContinuationFailed("resampled loop could not be projected onto the fiber")
    return PolyLoop.closing(Xc)


# ---------------------------------------------------------------------------
# framing


def _standard(n: int) -> np.ndarray:
    return np.eye(n)


def pullback_frames(f: SmoothMap, X: np.ndarray, nu: np.ndarray | None = None) -> np.ndarray:
    """ω with df_x ω_i = ν_i, ω_i ⟂ ker(df_x), for every row x of X; shape (N, m, n)."""
    n = f.codomain_dim
    nu = _standard(n) if nu is None else np.asarray(nu, dtype=float)
    _, J, ok = f.evaluate_batch(X)
    if not ok.all():
        raise DegenerateFrame("map is not smooth at a fiber point")
    W = np.einsum("kmn,nj->kmj", np.linalg.pinv(J, rcond=1e-14), nu)
    resid = np.abs(np.einsum("knm,kmj->knj", J, W) - nu[None]).max() if len(X) else 0.0
    if resid > FRAMING_RESIDUAL * max(1.0, np.abs(nu).max()):
        raise DegenerateFrame(f"pullback framing residual {resid:.2e}; df is near singular")
    return W


def pullback_framing(f: SmoothMap, y, geometry, nu=None) -> PontryaginManifold:
    """Attach f^*ν to certified fiber geometry (an array of points or a list of loops)."""
    n = f.codomain_dim
    k = f.domain_dim - n
    yv = np.asarray(y, dtype=float).reshape(-1)
    nu_arr = _standard(n) if nu is None else (nu.vectors if isinstance(nu, Frame) else np.asarray(nu, dtype=float))
    if k == 0:
        pts = np.asarray(geometry, dtype=float).reshape(-1, n)
        if len(pts) == 0:
            return PontryaginManifold(0, n, yv, FramedPoints(n, ()))
        W = pullback_frames(f, pts, nu_arr)
        return PontryaginManifold(0, n, yv, FramedPoints(
            n, tuple(FramedPoint(x, Frame(w)) for x, w in zip(pts, W))))
    if k == 1:
        comps = []
        for loop in geometry:
            W = pullback_frames(f, loop.samples, nu_arr)
            comps.append(FramedLoop(loop, W))
        return PontryaginManifold(1, n, yv, FramedLoops(n + 1, tuple(comps)))
    raise UnsupportedDimension(f"k = {k} is not supported")


# ---------------------------------------------------------------------------
# pipeline


def extract_geometry(f: SmoothMap, y, k: int, rng_seed: int = 0, budget: int = DEFAULT_SEEDS,
                     tol: float = DEFAULT_TOL, step: float = 0.02,
                     loop_samples: int | None = 1024):
    """Certified fiber geometry over y: points (k = 0) or resampled loops (k = 1)."""
    if k == 0:
        return solve_preimage_points(f, y, rng_seed, budget, tol)
    if k == 1:
        loops = trace_preimage_loops(f, y, step, rng_seed, budget, tol)
        if loop_samples:
            loops = [resample_loop(f, y, L, loop_samples) for L in loops]
        return loops
    raise UnsupportedDimension(f"k = {k} is not supported")


def pontryagin_manifold(f: SmoothMap, n: int, k: int, rng_seed: int = 0, y=None,
                        search_radius: float = 1.0, value_budget: int = 64,
                        budget: int = DEFAULT_SEEDS, tol: float = DEFAULT_TOL,
                        step: float = 0.02, loop_samples: int | None = 1024) -> PontryaginManifold:
    """f^{-1}(y) with the pullback of the standard frame at a regular value y.

    Without ``y`` a regular value is drawn by seeded rejection sampling.
    """
    if k not in (0, 1):
        raise UnsupportedDimension(f"k = {k} is not supported (only k in {{0, 1}})")
    if f.domain_dim != n + k or f.codomain_dim != n:
        raise DimensionMismatch(
            f"map is R^{f.domain_dim} -> R^{f.codomain_dim}, expected R^{n + k} -> R^{n}")
    from .transversality import sample_regular_value

    opts = dict(budget=budget, tol=tol, step=step, loop_samples=loop_samples)
    if y is None:
        y, geometry, attempts = sample_regular_value(f, search_radius, rng_seed, value_budget, **opts)
    else:
        geometry = extract_geometry(f, y, k, rng_seed=rng_seed, **opts)
        attempts = 0
    P = pullback_framing(f, y, geometry)
    P.meta.update({"value_attempts": attempts, "rng_seed": rng_seed})
    if k == 1:
        P.payload.validate()
    return P


# ---------------------------------------------------------------------------
# cobordisms inside homotopies


class FixedLastCoordinate(SmoothMap):
    """The slice x -> H(x, t) of a map on R^n x R."""

    def __init__(self, H: SmoothMap, t: float):
        self.H = H
        self.t = float(t)
        self.domain_dim = H.domain_dim - 1
        self.codomain_dim = H.codomain_dim
        self.support_radius = H.support_radius

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xt = np.hstack([X, np.full((X.shape[0], 1), self.t)])
        F, J, ok = self.H.evaluate_batch(Xt)
        return F, J[:, :, :-1], ok


@dataclass(frozen=True)
class CobordismComponent:
    """A traced component of H^{-1}(y) in R^n x [0, 1].

    ``endpoints`` lists (face, index into that face's fiber) for arcs and is
    empty for closed loops.
    """

    kind: str  # "arc" | "loop"
    samples: np.ndarray
    endpoints: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class CobordismTrace:
    y: np.ndarray
    ends: tuple[np.ndarray, np.ndarray]  # fibers of H_0 and H_1
    signs: tuple[tuple[int, ...], tuple[int, ...]]
    components: tuple[CobordismComponent, ...]

    def signed_counts(self) -> tuple[int, int]:
        return sum(self.signs[0]), sum(self.signs[1])

    def boundary_error(self) -> float:
        """Hausdorff distance between arc endpoints and the union of both end fibers."""
        ends = [np.hstack([P, np.full((len(P), 1), float(t))]) for t, P in enumerate(self.ends)]
        fib = np.vstack(ends) if any(len(e) for e in ends) else np.zeros((0, self.y.size + 1))
        arc_ends = [c.samples[i] for c in self.components if c.kind == "arc" for i in (0, -1)]
        A = np.array(arc_ends).reshape(-1, self.y.size + 1)
        if len(A) == 0 and len(fib) == 0:
            return 0.0
        if len(A) == 0 or len(fib) == 0 or len(A) != len(fib):
            return float("inf")
        D = np.linalg.norm(A[:, None, :] - fib[None, :, :], axis=-1)
        return float(max(D.min(axis=0).max(), D.min(axis=1).max()))


def _match(P: np.ndarray, x: np.ndarray) -> int:
    if len(P) == 0:
        return -1
    d = np.linalg.norm(P - x, axis=1)
    i = int(np.argmin(d))
    return i if d[i] <= 1e-6 else -1


def trace_cobordism(H: SmoothMap, y, step: float = 0.02, rng_seed: int = 0,
                    budget: int = DEFAULT_SEEDS, tol: float = DEFAULT_TOL) -> CobordismTrace:
    """Trace the 1-manifold H^{-1}(y) ⊂ R^n x [0, 1] for a homotopy H of k = 0 maps.

    Arcs start from the end fibers; interior seeds pick up closed loops.
    """
    n = H.codomain_dim
    if H.domain_dim != n + 1:
        raise DimensionMismatch("a k = 0 homotopy is a map R^n x [0,1] -> R^n")
    y = np.asarray(y, dtype=float).reshape(-1)
    ends = tuple(solve_preimage_points(FixedLastCoordinate(H, t), y, rng_seed, budget, tol)
                 for t in (0.0, 1.0))
    signs = []
    for t, P in enumerate(ends):
        if len(P):
            _, J, _ = FixedLastCoordinate(H, float(t)).evaluate_batch(P)
            signs.append(tuple(int(np.sign(np.linalg.det(Jx))) for Jx in J))
        else:
            signs.append(())
    used = [np.zeros(len(P), dtype=bool) for P in ends]
    comps: list[CobordismComponent] = []
    radius = np.hypot(H.support_radius, 1.0)
    for face in (0, 1):
        for i, p in enumerate(ends[face]):
            if used[face][i]:
                continue
            x0 = np.append(p, float(face))
            _, J, _ = H.evaluate_batch(x0[None, :])
            T = oriented_kernel(J[0])
            inward = 1.0 if face == 0 else -1.0
            direction = 1.0 if T[-1] * inward > 0 else -1.0
            if abs(T[-1]) < 1e-12:
                raise NotRegular("fiber is tangent to the boundary slice")
            curve = trace_curve(H, y, x0, step, radius, tol=tol, direction=direction,
                                slab=(0.0, 1.0), allow_close=False)
            end = curve.samples[-1]
            efface = int(round(end[-1]))
            j = _match(ends[efface], end[:-1])
            if j < 0 or used[efface][j] or (efface == face and j == i):
                raise ContinuationFailed("arc endpoint does not match an end-fiber point")
            used[face][i] = True
            used[efface][j] = True
            comps.append(CobordismComponent("arc", curve.samples, ((face, i), (efface, j))))
    # closed loops strictly inside the slab
    seeds = sobol_ball(n + 1, radius, budget, rng_seed + 1)
    seeds = seeds[(seeds[:, -1] > 0.0) & (seeds[:, -1] < 1.0)]
    X, res = newton_batch(H, y, seeds, radius)
    conv = (res <= ROOT_TOL) & (X[:, -1] > 0.0) & (X[:, -1] < 1.0) & \
           (np.linalg.norm(X, axis=1) <= radius)
    traced = np.vstack([c.samples for c in comps]) if comps else np.zeros((0, n + 1))
    for x in X[conv]:
        if len(traced) and np.min(np.linalg.norm(traced - x, axis=1)) <= 2 * step:
            continue
        curve = trace_curve(H, y, x, step, radius, tol=tol, slab=(0.0, 1.0))
        if not curve.closed:
            raise ContinuationFailed("interior component reached the boundary unmatched")
        comps.append(CobordismComponent("loop", curve.samples, ()))
        traced = np.vstack([traced, curve.samples])
    return CobordismTrace(y, ends, (signs[0], signs[1]), tuple(comps))
