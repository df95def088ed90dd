"""Framed-cobordism invariants for the supported cases.

For k = 0 the class of a framed point set is its signed count (the degree).
For (k, n) = (1, 2) the class of a framed link in R^3 is the Hopf number

    Σ_i lk(L_i, L_i') + 2 Σ_{i<j} lk(L_i, L_j),

where L_i' is L_i pushed off along its first framing vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrame, DimensionMismatch, NonIntegerLinking, UnsupportedDimension
from .geomkit import Frame, PolyLoop, gauss_linking, glplus_path, min_distance
from .preimage import FramedLoop, FramedLoops, FramedPoint, FramedPoints, PontryaginManifold

ROUNDING_TOL = 5e-3
PUSH_FACTOR = 10.0
OVERLAP_SEPARATION = 1e-3


@dataclass(frozen=True)
class CobordismDescriptor:
    k: int
    n: int
    kind: str  # "signed-count" | "hopf-number" | "unsupported"
    value: int | None
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind == "signed-count" and self.k != 0:
            raise ValueError("signed-count descriptors need k = 0")
        if self.kind == "hopf-number" and (self.k, self.n) != (1, 2):
            raise ValueError("hopf-number descriptors need (k, n) = (1, 2)")

    def to_json(self) -> dict:
        return {"k": self.k, "n": self.n, "kind": self.kind, "value": self.value,
                "details": self.details}


def _round_linking(value: float, what: str) -> int:
    r = int(round(value))
    if abs(value - r) > ROUNDING_TOL:
        raise NonIntegerLinking(f"{what} = {value:.6f} is not within {ROUNDING_TOL} of an integer; "
                                "refine the loop sampling")
    return r


def push_off(component: FramedLoop, offset: float | None = None) -> PolyLoop:
    """The loop moved along its (normalised) first framing vector."""
    loop = component.loop
    if offset is None:
        offset = PUSH_FACTOR * loop.mean_spacing()
    w = component.frames[:, :, 0]
    w = w / np.linalg.norm(w, axis=1)[:, None]
    return PolyLoop(loop.samples + offset * w, loop.closed)


def hopf_terms(loops: FramedLoops) -> tuple[list[float], list[tuple[int, int, float]]]:
    """Raw self-linking numbers and pairwise linking numbers of a framed link."""
    comps = loops.components
    selfs = [gauss_linking(c.loop, push_off(c)) for c in comps]
    pairs = [(i, j, gauss_linking(comps[i].loop, comps[j].loop))
             for i in range(len(comps)) for j in range(i + 1, len(comps))]
    return selfs, pairs


def descriptor(P: PontryaginManifold) -> CobordismDescriptor:
    """The integer classifying P up to framed cobordism (k = 0, or k = 1 with n = 2)."""
    if P.k == 0:
        pts = [] if P.payload is None else P.payload.points
        signs = [p.sign for p in pts]
        return CobordismDescriptor(0, P.n, "signed-count", int(sum(signs)),
                                   {"points": len(signs), "positive": signs.count(1),
                                    "negative": signs.count(-1)})
    if P.k == 1 and P.n == 2:
        if P.is_empty:
            return CobordismDescriptor(1, 2, "hopf-number", 0, {"components": 0})
        selfs, pairs = hopf_terms(P.payload)
        value = sum(_round_linking(s, f"self-linking of component {i}") for i, s in enumerate(selfs))
        value += sum(2 * _round_linking(l, f"lk of components {i}, {j}") for i, j, l in pairs)
        return CobordismDescriptor(1, 2, "hopf-number", int(value), {
            "components": len(selfs), "self_linking": selfs,
            "pairwise_linking": [[i, j, l] for i, j, l in pairs],
            "push_factor": PUSH_FACTOR})
    raise UnsupportedDimension(f"no descriptor is implemented for (k, n) = ({P.k}, {P.n})")


# ---------------------------------------------------------------------------
# disjoint union


def _bounds(P: PontryaginManifold) -> tuple[np.ndarray, np.ndarray]:
    X = _all_samples(P)
    return X.min(axis=0), X.max(axis=0)


def _all_samples(P: PontryaginManifold) -> np.ndarray:
    if P.k == 0:
        return P.payload.positions
    return np.vstack([c.loop.samples for c in P.payload.components])


def _overlaps(P1: PontryaginManifold, P2: PontryaginManifold) -> bool:
    if P1.k == 0:
        return min_distance(P1.payload.positions, P2.payload.positions) < OVERLAP_SEPARATION
    # loops may link without touching; demand a separating coordinate slab
    lo1, hi1 = _bounds(P1)
    lo2, hi2 = _bounds(P2)
    gap = np.maximum(lo2 - hi1, lo1 - hi2)
    return bool(gap.max() < OVERLAP_SEPARATION)


def _translate(P: PontryaginManifold, offset: np.ndarray) -> PontryaginManifold:
    if P.k == 0:
        payload = FramedPoints(P.payload.ambient_dim,
                               tuple(FramedPoint(p.x + offset, p.frame) for p in P.payload.points))
    else:
        payload = FramedLoops(P.payload.ambient_dim,
                              tuple(c.translated(offset) for c in P.payload.components))
    return PontryaginManifold(P.k, P.n, P.regular_value, payload, dict(P.meta))


def disjoint_union(P1: PontryaginManifold, P2: PontryaginManifold) -> PontryaginManifold:
    """P1 ⊔ P2; P2 is translated along x1 when the two would overlap.

    The offset actually applied is recorded in ``meta["offset"]``.
    """
    if (P1.k, P1.n) != (P2.k, P2.n):
        raise DimensionMismatch(f"cannot unite (k, n) = ({P1.k}, {P1.n}) with ({P2.k}, {P2.n})")
    if P2.is_empty:
        return P1
    if P1.is_empty:
        return P2
    offset = np.zeros(P1.n + P1.k)
    if _overlaps(P1, P2):
        lo1, hi1 = _bounds(P1)
        lo2, _ = _bounds(P2)
        offset[0] = hi1[0] - lo2[0] + 1.0
        P2 = _translate(P2, offset)
    y = P1.regular_value
    if P1.k == 0:
        payload = FramedPoints(P1.payload.ambient_dim, P1.payload.points + P2.payload.points)
    else:
        payload = FramedLoops(P1.payload.ambient_dim, P1.payload.components + P2.payload.components)
    return PontryaginManifold(P1.k, P1.n, y, payload, {"offset": offset.tolist()})


# ---------------------------------------------------------------------------
# paths of framings


@dataclass(frozen=True)
class FramingComparison:
    """Outcome of :func:`frames_path_cobordant`.

    ``witness`` holds one GL+ path per point (k = 0), or for k = 1 the
    per-sample transition matrices along a contraction, shape
    (steps + 1, samples, n, n) per component.
    """

    cobordant: bool
    witness: list | None
    windings: tuple[int, ...] = ()
    reason: str = ""


def _transition(nu: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """T with ω = ν T for stacks of frames (columns), shape (..., n, n)."""
    T = np.einsum("...ij,...jk->...ik", np.linalg.pinv(nu), omega)
    fit = np.abs(np.einsum("...ij,...jk->...ik", nu, T) - omega).max()
    if fit > 1e-8 * max(1.0, np.abs(omega).max()):
        raise DegenerateFrame("the two framings do not span the same normal spaces")
    dets = np.linalg.det(T)
    if np.abs(dets).min() < 1e-12:
        raise DegenerateFrame("a transition matrix is singular")
    return T


def _rotation_angles(T: np.ndarray) -> np.ndarray:
    # angle of the orthogonal polar factor of each 2x2 matrix in GL+
    a = T[:, 0, 0] + T[:, 1, 1]
    b = T[:, 1, 0] - T[:, 0, 1]
    return np.arctan2(b, a)


def frames_path_cobordant(geometry, nu, omega, steps: int = 16) -> FramingComparison:
    """Decide whether two framings of the same fiber are joined by a path of framings.

    ``geometry`` is an (N, d) array of points with ``nu``/``omega`` of shape
    (N, d, d), or a list of :class:`PolyLoop` with per-sample frames of
    shape (samples, 3, 2) each (the case k = 1, n = 2).
    """
    if isinstance(geometry, PolyLoop):
        geometry, nu, omega = [geometry], [nu], [omega]
    if isinstance(geometry, (list, tuple)) and geometry and isinstance(geometry[0], PolyLoop):
        return _loops_cobordant(geometry, nu, omega, steps)
    X = np.atleast_2d(np.asarray(geometry, dtype=float))
    nu = np.asarray(nu, dtype=float).reshape(len(X), X.shape[1], X.shape[1])
    omega = np.asarray(omega, dtype=float).reshape(nu.shape)
    for a in (*nu, *omega):
        Frame(a)
    T = _transition(nu, omega)
    bad = np.flatnonzero(np.linalg.det(T) < 0)
    if bad.size:
        return FramingComparison(False, None, reason=f"orientation differs at point {int(bad[0])}")
    return FramingComparison(True, [glplus_path(a, b, steps) for a, b in zip(nu, omega)])


def _loops_cobordant(loops, nus, omegas, steps: int) -> FramingComparison:
    windings = []
    witness = []
    for loop, nu, om in zip(loops, nus, omegas):
        nu = np.asarray(nu, dtype=float)
        om = np.asarray(om, dtype=float)
        if nu.shape != (loop.samples.shape[0], 3, 2) or om.shape != nu.shape:
            raise UnsupportedDimension("loop framings are compared only in R^3 with 2 normal vectors")
        T = _transition(nu, om)
        if np.linalg.det(T).min() < 0:
            return FramingComparison(False, None, tuple(windings), "orientation differs along a loop")
        ang = np.unwrap(_rotation_angles(T))
        w = int(round((ang[-1] - ang[0]) / (2 * np.pi)))
        windings.append(w)
        if w != 0:
            continue
        # contract: rotate back along the lifted angle and interpolate the SPD factor
        path = np.empty((steps + 1,) + T.shape)
        ang = ang - 2 * np.pi * round(ang[0] / (2 * np.pi))
        c, s = np.cos(ang), np.sin(ang)
        R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        Psym = np.einsum("sij,skj->sik", T, R)  # T = P R  =>  P = T R^T
        for j in range(steps + 1):
            t = j / steps
            ct, st = np.cos(t * ang), np.sin(t * ang)
            Rt = np.stack([np.stack([ct, -st], -1), np.stack([st, ct], -1)], -2)
            Pt = (1 - t) * np.eye(2) + t * Psym
            path[j] = Pt @ Rt
        witness.append(path)
    ok = all(w == 0 for w in windings)
    return FramingComparison(ok, witness if ok else None, tuple(windings),
                             "" if ok else "the transition loop winds around GL+(2)")


def twisted(component: FramedLoop, turns: int) -> FramedLoop:
    """The framing rotated ``turns`` full times in the normal plane along the loop."""
    S = component.loop.samples
    seg = np.linalg.norm(np.diff(S, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
    a = 2 * np.pi * turns * u
    c, s = np.cos(a), np.sin(a)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return FramedLoop(component.loop, np.einsum("sdi,sij->sdj", component.frames, R))


def with_frames_times(P: PontryaginManifold, T) -> PontryaginManifold:
    """Every frame replaced by frame · T for a fixed matrix T."""
    T = np.asarray(T, dtype=float)
    if P.is_empty:
        return P
    if P.k == 0:
        payload = FramedPoints(P.payload.ambient_dim, tuple(
            FramedPoint(p.x, Frame(p.frame.vectors @ T)) for p in P.payload.points))
    else:
        payload = FramedLoops(P.payload.ambient_dim, tuple(
            FramedLoop(c.loop, c.frames @ T) for c in P.payload.components))
    return PontryaginManifold(P.k, P.n, P.regular_value, payload, dict(P.meta))


__all__ = ["CobordismDescriptor", "FramingComparison", "descriptor", "disjoint_union",
           "frames_path_cobordant", "hopf_terms", "push_off", "twisted", "with_frames_times"]
