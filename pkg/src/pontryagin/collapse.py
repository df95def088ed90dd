"""The Pontryagin-Thom collapse: product neighborhoods and the map θ.

A framed submanifold M ⊂ R^{n+k} with frame ν gives straight-line normal
coordinates ψ(x, η) = x + Σ η_i ν_i(x). On the image U of {‖η‖ < ε} the
collapse map is θ = φ ∘ pr ∘ ψ^{-1} with the ball diffeomorphism
φ(η) = η / (1 - ‖η‖²/ε²); outside U it is the basepoint ∞.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .cobordism import descriptor
from .errors import DegenerateFrame, EpsilonUnderflow, OutsideBall
from .geomkit import Frame
from .mapdsl import SmoothMap, is_infinite
from .preimage import FramedPoint, FramedPoints, PontryaginManifold, pontryagin_manifold

CERT_SAMPLES = 10_000
EPS_FLOOR = 1e-7
COINCIDENCE = 1e-9
_NEWTON_ITERS = 30


def ball_diffeo(eta, epsilon: float) -> np.ndarray:
    """φ(η) = η / (1 - ‖η‖²/ε²), a diffeomorphism of the open ε-ball onto R^n."""
    eta = np.asarray(eta, dtype=float)
    q = np.sum(eta ** 2, axis=-1, keepdims=True) / epsilon ** 2
    if np.any(q >= 1.0):
        raise OutsideBall(f"‖η‖ must be below ε = {epsilon}")
    return eta / (1.0 - q)


def _ball_diffeo_jacobian(eta: np.ndarray, epsilon: float) -> np.ndarray:
    # d(η g) = g I + η ⊗ ∇g with g = 1/(1 - q), ∇g = 2 g² η / ε²
    g = 1.0 / (1.0 - np.sum(eta ** 2, axis=-1) / epsilon ** 2)
    n = eta.shape[-1]
    return (g[:, None, None] * np.eye(n)
            + 2.0 * (g ** 2)[:, None, None] * eta[:, :, None] * eta[:, None, :] / epsilon ** 2)


# ---------------------------------------------------------------------------
# features: framed points and spline loops


class _LoopFeature:
    """A framed loop as periodic cubic splines in arclength."""

    def __init__(self, samples: np.ndarray, frames: np.ndarray):
        seg = np.linalg.norm(np.diff(samples, axis=0), axis=1)
        self.u = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.u[-1])
        fr = frames.copy()
        if np.abs(fr[-1] - fr[0]).max() > 1e-9:
            raise DegenerateFrame("loop frame does not close up")
        fr[-1] = fr[0]
        self.shape = fr.shape[1:]
        self.gamma = CubicSpline(self.u, samples, bc_type="periodic")
        self.dgamma = self.gamma.derivative()
        self.W = CubicSpline(self.u, fr.reshape(len(fr), -1), bc_type="periodic")
        self.dW = self.W.derivative()
        self.knots = samples[:-1]

    def wrap(self, u):
        return np.mod(u, self.length)

    def point(self, u):
        return self.gamma(self.wrap(u))

    def frame(self, u):
        return self.W(self.wrap(u)).reshape((-1,) + self.shape)

    def psi(self, u, eta):
        return self.point(u) + np.einsum("sdi,si->sd", self.frame(u), eta)

    def dpsi(self, u, eta):
        """Columns d/du and d/dη_i of ψ, shape (N, d, 1 + n)."""
        du = self.dgamma(self.wrap(u)) + np.einsum(
            "sdi,si->sd", self.dW(self.wrap(u)).reshape((-1,) + self.shape), eta)
        return np.concatenate([du[:, :, None], self.frame(u)], axis=2)


def _sigma_max(frames: np.ndarray) -> float:
    return float(np.linalg.svd(frames, compute_uv=False).max())


@dataclass(frozen=True)
class ProductNeighborhood:
    """Normal coordinates ψ around the payload of a Pontryagin manifold.

    Points use the affine ψ(p, η) = p + F η and are inverted exactly. Loops
    use periodic splines through the samples and are inverted by Newton's
    method in (arclength, η) from the nearest sample.
    """

    manifold: PontryaginManifold
    epsilon: float
    inverse_strategy: str
    _features: tuple = field(repr=False, compare=False, default=())

    @property
    def k(self) -> int:
        return self.manifold.k

    @property
    def n(self) -> int:
        return self.manifold.n

    @property
    def payload(self):
        return self.manifold.payload

    def psi(self, feature: int, param, eta) -> np.ndarray:
        """ψ at a payload point (k = 0; ``param`` ignored) or loop arclength ``param``."""
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if self.k == 0:
            p = self.payload.points[feature]
            return p.x + eta @ p.frame.vectors.T
        u = np.atleast_1d(np.asarray(param, dtype=float))
        return self._features[feature].psi(u, eta)

    def invert(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(feature, param, η, ok) with ψ(feature, param, η) = x for each row x.

        ``ok`` is false where no normal coordinates with ‖η‖ < ε exist.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _invert(self, X)

    def shell_points(self, fraction: float, count: int, rng_seed: int = 0) -> np.ndarray:
        """Random points ψ(x, η) with ‖η‖ = fraction · ε (used for seeds and checks)."""
        rng = np.random.default_rng(rng_seed)
        feats, params, etas = _sample_coordinates(self, count, rng, fraction)
        return _psi_many(self, feats, params, etas)


def _sample_coordinates(nb, count, rng, fraction=None):
    n = nb.n
    nf = len(nb.payload)
    feats = rng.integers(0, nf, count)
    if nb.k == 0:
        params = np.zeros(count)
    else:
        params = rng.random(count) * np.array([nb._features[i].length for i in feats])
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = np.full(count, fraction) if fraction is not None else rng.random(count) ** (1.0 / n)
    return feats, params, v * (r * nb.epsilon)[:, None]


def _psi_many(nb, feats, params, etas) -> np.ndarray:
    out = np.empty((len(feats), nb.n + nb.k))
    for i in np.unique(feats):
        sel = feats == i
        out[sel] = nb.psi(int(i), params[sel], etas[sel])
    return out


def _newton_loop(f: _LoopFeature, u, e, x):
    """Newton on ψ(u, η) = x for rows still moving; returns (u, η, residual)."""
    u, e = u.copy(), e.copy()
    scale = 1e-13 * (1.0 + np.linalg.norm(x, axis=1))
    r = np.linalg.norm(f.psi(u, e) - x, axis=1)
    act = np.flatnonzero(r > scale)
    for _ in range(_NEWTON_ITERS):
        if act.size == 0:
            break
        res = f.psi(u[act], e[act]) - x[act]
        with np.errstate(all="ignore"):
            st = np.linalg.solve(f.dpsi(u[act], e[act]), res[:, :, None])[:, :, 0]
        st = np.where(np.isfinite(st), st, 0.0)
        u[act] -= st[:, 0]
        e[act] -= st[:, 1:]
        r[act] = np.linalg.norm(f.psi(u[act], e[act]) - x[act], axis=1)
        still = (r[act] > scale[act]) & (np.linalg.norm(st, axis=1) > 1e-15) & np.isfinite(r[act])
        act = act[still]
    return u, e, r


def _invert(nb: ProductNeighborhood, X: np.ndarray):
    N = X.shape[0]
    n = nb.n
    eps = nb.epsilon
    feat = np.full(N, -1)
    param = np.zeros(N)
    eta = np.zeros((N, n))
    ok = np.zeros(N, dtype=bool)
    if nb.k == 0:
        best = np.full(N, np.inf)
        for i, p in enumerate(nb.payload.points):
            e = np.linalg.solve(p.frame.vectors, (X - p.x).T).T
            r = np.linalg.norm(e, axis=1)
            take = (r < eps) & (r < best)
            feat[take], eta[take], best[take] = i, e[take], r[take]
        ok = feat >= 0
        return feat, param, eta, ok
    # loops: nearest knot, then Newton on ψ(u, η) = x
    owner = np.concatenate([np.full(len(f.knots), i) for i, f in enumerate(nb._features)])
    kpar = np.concatenate([f.u[:-1] for f in nb._features])
    reach = eps * max(_sigma_max(c.frames) for c in nb.payload.components)
    reach += max(np.diff(f.u).max() for f in nb._features)
    dist, idx = nb._tree.query(X, distance_upper_bound=2.0 * reach + 1e-12)
    near = np.isfinite(dist)
    for i, f in enumerate(nb._features):
        sel = np.flatnonzero(near & (owner[np.minimum(idx, len(owner) - 1)] == i))
        if sel.size == 0:
            continue
        u = kpar[idx[sel]]
        x = X[sel]
        e = np.einsum("sid,sd->si", np.linalg.pinv(f.frame(u)), x - f.point(u))
        u, e, r = _newton_loop(f, u, e, x)
        good = (r <= 1e-11 * (1.0 + np.linalg.norm(x, axis=1))) & (np.linalg.norm(e, axis=1) < eps)
        g = sel[good]
        feat[g], param[g], eta[g], ok[g] = i, f.wrap(u[good]), e[good], True
    return feat, param, eta, ok


def _min_feature_separation(P: PontryaginManifold) -> float | None:
    """Smallest distance between distinct features (and far-apart parts of one loop)."""
    if P.k == 0:
        X = P.payload.positions
        if len(X) < 2:
            return None
        D = np.linalg.norm(X[:, None] - X[None], axis=-1)
        return float(D[np.triu_indices(len(X), 1)].min())
    best = np.inf
    comps = P.payload.components
    for i, c in enumerate(comps):
        V = c.loop.vertices
        S = len(V)
        # self-separation between samples more than a quarter loop apart
        rows = np.arange(0, S, max(1, S // 256))
        D = np.linalg.norm(V[rows, None, :] - V[None, :, :], axis=-1)
        gap = np.abs(rows[:, None] - np.arange(S)[None, :])
        gap = np.minimum(gap, S - gap)
        best = min(best, float(D[gap > S // 4].min()))
        tree = cKDTree(V)
        for c2 in comps[i + 1:]:
            d, _ = tree.query(c2.loop.vertices)
            best = min(best, float(d.min()))
    return best


def _frame_scale(P: PontryaginManifold) -> float:
    if P.k == 0:
        return max(_sigma_max(p.frame.vectors) for p in P.payload.points)
    return max(_sigma_max(c.frames) for c in P.payload.components)


def injectivity_certificate(nb: ProductNeighborhood, rng_seed: int = 0,
                            samples: int = CERT_SAMPLES) -> bool:
    """Sampled check that ψ is injective on {‖η‖ < ε}.

    Each sampled coordinate (x, η) is mapped forward and re-inverted from
    every nearby feature; another preimage with ‖η'‖ < ε, or a sign change
    of det dψ (a fold), fails the certificate.
    """
    rng = np.random.default_rng(rng_seed)
    feats, params, etas = _sample_coordinates(nb, samples, rng)
    X = _psi_many(nb, feats, params, etas)
    eps = nb.epsilon
    if nb.k == 0:
        for i, p in enumerate(nb.payload.points):
            e = np.linalg.solve(p.frame.vectors, (X - p.x).T).T
            inside = np.linalg.norm(e, axis=1) < eps
            other = inside & (feats != i)
            if other.any():
                # a coincidence within COINCIDENCE counts as the same coordinate only on the same feature
                return False
        return True
    for i, f in enumerate(nb._features):
        sel = feats == i
        if not sel.any():
            continue
        d0 = np.sign(np.linalg.det(f.dpsi(params[sel], np.zeros_like(etas[sel]))))
        d1 = np.sign(np.linalg.det(f.dpsi(params[sel], etas[sel])))
        if np.any(d0 != d1):
            return False
    # re-invert from coarse seeds spread over every loop, all (sample, seed) pairs at once
    scale = _frame_scale(nb.manifold)
    seeds_u, seeds_f = [], []
    for i, f in enumerate(nb._features):
        m = int(np.clip(np.ceil(f.length / max(0.25 * eps * scale, 1e-12)), 16, 512))
        seeds_u.append(np.linspace(0.0, f.length, m, endpoint=False))
        seeds_f.append(np.full(m, i))
    seeds_u = np.concatenate(seeds_u)
    seeds_f = np.concatenate(seeds_f)
    seed_pts = np.vstack([nb._features[i].point(seeds_u[seeds_f == i])
                          for i in range(len(nb._features))])
    reach = 1.5 * eps * scale
    lists = cKDTree(seed_pts).query_ball_point(X, reach)
    pair_s = np.repeat(np.arange(len(X)), [len(c) for c in lists])
    pair_c = np.concatenate([np.asarray(c, dtype=int) for c in lists]) if len(pair_s) else pair_s
    for i, f in enumerate(nb._features):
        sel = seeds_f[pair_c] == i
        if not sel.any():
            continue
        ps = pair_s[sel]
        u = seeds_u[pair_c[sel]]
        x = X[ps]
        e = np.einsum("sid,sd->si", np.linalg.pinv(f.frame(u)), x - f.point(u))
        u, e, r = _newton_loop(f, u, e, x)
        hit = (r <= COINCIDENCE) & (np.linalg.norm(e, axis=1) < eps)
        if not hit.any():
            continue
        if np.any(feats[ps[hit]] != i):
            return False
        L = f.length
        du = np.abs(np.mod(u[hit] - params[ps[hit]] + 0.5 * L, L) - 0.5 * L)
        de = np.linalg.norm(e[hit] - etas[ps[hit]], axis=1)
        if np.any(du + de > 1e-6):
            return False
    return True


def build_product_neighborhood(P: PontryaginManifold, rng_seed: int = 0,
                               samples: int = CERT_SAMPLES,
                               epsilon: float | None = None) -> ProductNeighborhood:
    """Normal coordinates around P with an ε certified by sampling.

    ε starts at half the minimum feature separation divided by the largest
    frame stretch (1.0 for a single point) and halves until the injectivity
    certificate passes. A given ``epsilon`` skips the search and is only
    certified.
    """
    if P.is_empty:
        raise ValueError("the payload is empty; there is nothing to collapse onto")
    features: tuple = ()
    tree = None
    if P.k == 1:
        features = tuple(_LoopFeature(c.loop.samples, c.frames) for c in P.payload.components)
        tree = cKDTree(np.vstack([f.knots for f in features]))
    strategy = "affine" if P.k == 0 else "spline-newton"
    if epsilon is None:
        sep = _min_feature_separation(P)
        eps = 1.0 if sep is None else 0.5 * sep / _frame_scale(P)
        fixed = False
    else:
        eps, fixed = float(epsilon), True
    while True:
        if eps < EPS_FLOOR:
            raise EpsilonUnderflow(f"no certified ε above {EPS_FLOOR}; the geometry is too tangled")
        nb = ProductNeighborhood(P, eps, strategy, features)
        object.__setattr__(nb, "_tree", tree)
        if injectivity_certificate(nb, rng_seed, samples):
            return nb
        if fixed:
            raise EpsilonUnderflow(f"ε = {eps} fails the injectivity certificate")
        eps *= 0.5


# ---------------------------------------------------------------------------
# the collapse map


class CollapseMap(SmoothMap):
    """θ = φ ∘ pr ∘ ψ^{-1} on the neighborhood, ∞ elsewhere.

    Evaluable like a parsed chart map, so the preimage pipeline consumes it
    directly.
    """

    def __init__(self, neighborhood: ProductNeighborhood, seed_count: int = 64):
        self.neighborhood = neighborhood
        P = neighborhood.manifold
        self.domain_dim = P.n + P.k
        self.codomain_dim = P.n
        X = (P.payload.positions if P.k == 0
             else np.vstack([c.loop.samples for c in P.payload.components]))
        reach = neighborhood.epsilon * _frame_scale(P)
        self.support_radius = float(np.linalg.norm(X, axis=1).max() + 2.0 * reach + 1.0)
        self.seed_count = seed_count

    @property
    def epsilon(self) -> float:
        return self.neighborhood.epsilon

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N = X.shape[0]
        nb = self.neighborhood
        n, m = self.codomain_dim, self.domain_dim
        F = np.full((N, n), np.inf)
        J = np.zeros((N, n, m))
        feat, param, eta, inside = nb.invert(X)
        if inside.any():
            e = eta[inside]
            F[inside] = ball_diffeo(e, nb.epsilon)
            dphi = _ball_diffeo_jacobian(e, nb.epsilon)
            if nb.k == 0:
                Finv = np.stack([np.linalg.inv(nb.payload.points[i].frame.vectors) for i in feat[inside]])
                J[inside] = np.einsum("sij,sjk->sik", dphi, Finv)
            else:
                D = np.empty((e.shape[0], m, m))
                fi, pi = feat[inside], param[inside]
                for i in np.unique(fi):
                    sel = fi == i
                    D[sel] = nb._features[i].dpsi(pi[sel], e[sel])
                Dinv = np.linalg.inv(D)
                J[inside] = np.einsum("sij,sjk->sik", dphi, Dinv[:, 1:, :])
        return F, J, np.ones(N, dtype=bool)

    def seed_hints(self, rng):
        nb = self.neighborhood
        count = self.seed_count * len(nb.payload)
        feats, params, etas = _sample_coordinates(nb, count, rng, None)
        return _psi_many(nb, feats, params, 0.5 * etas)


def collapse_map(P: PontryaginManifold, rng_seed: int = 0) -> CollapseMap:
    return CollapseMap(build_product_neighborhood(P, rng_seed))


def export_grid_csv(theta: SmoothMap, path, lo: float, hi: float, resolution: int) -> int:
    """Write θ on a regular grid as CSV rows ``x1..xm, θ1..θn`` (``inf`` off U).

    Returns the number of rows written.
    """
    axis = np.linspace(lo, hi, resolution)
    G = np.array(list(product(axis, repeat=theta.domain_dim)))
    F, _, _ = theta.evaluate_batch(G)
    inf = is_infinite(F)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(theta.domain_dim)]
                   + [f"theta{i + 1}" for i in range(theta.codomain_dim)])
        for x, v, off in zip(G, F, inf):
            w.writerow([repr(float(c)) for c in x] + (["inf"] * len(v) if off else [repr(float(c)) for c in v]))
    return len(G)


# ---------------------------------------------------------------------------
# round trip


@dataclass(frozen=True)
class RoundtripReport:
    k: int
    n: int
    epsilon: float
    hausdorff: float
    framing_deviation: float
    descriptor_in: int
    descriptor_out: int
    recovered: PontryaginManifold

    @property
    def descriptors_equal(self) -> bool:
        return self.descriptor_in == self.descriptor_out

    def to_json(self) -> dict:
        return {"k": self.k, "n": self.n, "epsilon": self.epsilon, "hausdorff": self.hausdorff,
                "framing_deviation": self.framing_deviation, "descriptor_in": self.descriptor_in,
                "descriptor_out": self.descriptor_out, "descriptors_equal": self.descriptors_equal}


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angles between corresponding frame vectors, arrays (..., d, n)."""
    a = a / np.linalg.norm(a, axis=-2, keepdims=True)
    b = b / np.linalg.norm(b, axis=-2, keepdims=True)
    return np.arccos(np.clip(np.sum(a * b, axis=-2), -1.0, 1.0))


def _point_to_polyline(P: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Distance from each row of P to the closed polyline with samples S."""
    A, B = S[:-1], S[1:]
    AB = B - A
    best = np.full(len(P), np.inf)
    for lo in range(0, len(P), 256):
        Q = P[lo:lo + 256]
        t = np.einsum("qsd,sd->qs", Q[:, None, :] - A[None], AB) / np.sum(AB ** 2, axis=1)
        t = np.clip(t, 0.0, 1.0)
        C = A[None] + t[:, :, None] * AB[None]
        best[lo:lo + 256] = np.linalg.norm(Q[:, None, :] - C, axis=-1).min(axis=1)
    return best


def _compare_points(P: PontryaginManifold, R: PontryaginManifold) -> tuple[float, float]:
    A, B = P.payload.positions, R.payload.positions
    if len(A) != len(B):
        return float("inf"), float("inf")
    D = np.linalg.norm(A[:, None] - B[None], axis=-1)
    haus = float(max(D.min(axis=0).max(), D.min(axis=1).max()))
    match = D.argmin(axis=1)
    dev = max(float(_angle(p.frame.vectors, R.payload.points[j].frame.vectors).max())
              for p, j in zip(P.payload.points, match))
    return haus, dev


def _compare_loops(nb: ProductNeighborhood, R: PontryaginManifold) -> tuple[float, float]:
    P = nb.manifold
    if len(P.payload) != len(R.payload):
        return float("inf"), float("inf")
    haus = 0.0
    dev = 0.0
    for c in R.payload.components:
        S = c.loop.samples
        dists = [_point_to_polyline(S, a.loop.samples) for a in P.payload.components]
        owner = int(np.argmin([d.max() for d in dists]))
        fwd = dists[owner].max()
        back = _point_to_polyline(P.payload.components[owner].loop.samples, S).max()
        haus = max(haus, float(fwd), float(back))
        # framing compared at the nearest point of the input spline
        feat, param, _, ok = nb.invert(S)
        if not ok.all():
            return haus, float("inf")
        f = nb._features[owner]
        W = f.frame(param)
        T = f.dgamma(param)
        T /= np.linalg.norm(T, axis=1)[:, None]
        W = W - T[:, :, None] * np.einsum("sd,sdi->si", T, W)[:, None, :]
        dev = max(dev, float(_angle(W, c.frames).max()))
    return haus, dev


def roundtrip(P: PontryaginManifold, rng_seed: int = 0, neighborhood: ProductNeighborhood | None = None,
              **pipeline) -> RoundtripReport:
    """Collapse P, extract the Pontryagin manifold of θ at 0 and compare with P."""
    nb = neighborhood if neighborhood is not None else build_product_neighborhood(P, rng_seed)
    theta = CollapseMap(nb)
    R = pontryagin_manifold(theta, P.n, P.k, rng_seed=rng_seed, y=np.zeros(P.n), **pipeline)
    if P.k == 0:
        haus, dev = _compare_points(P, R)
    else:
        haus, dev = _compare_loops(nb, R)
    return RoundtripReport(P.k, P.n, nb.epsilon, haus, dev, descriptor(P).value,
                           descriptor(R).value, R)


def random_framed_points(n: int, count: int, rng_seed: int, spread: float = 2.0) -> PontryaginManifold:
    """Seeded framed point set in R^n with random GL frames of either orientation."""
    rng = np.random.default_rng(rng_seed)
    pts = []
    while len(pts) < count:
        x = rng.uniform(-spread, spread, n)
        if any(np.linalg.norm(x - p.x) < 0.2 for p in pts):
            continue
        A = rng.standard_normal((n, n)) + 1.5 * np.eye(n)
        if abs(np.linalg.det(A)) < 0.2 or np.linalg.cond(A) > 20:
            continue
        if rng.random() < 0.5:
            A[:, 0] *= -1
        pts.append(FramedPoint(x, Frame(A)))
    return PontryaginManifold(0, n, np.zeros(n), FramedPoints(n, tuple(pts)))


__all__ = ["CollapseMap", "ProductNeighborhood", "RoundtripReport", "ball_diffeo",
           "build_product_neighborhood", "collapse_map", "export_grid_csv",
           "injectivity_certificate", "random_framed_points", "roundtrip"]
