"""Homotopies between chart maps and the invariance checks built on them.

Includes the smooth cutoff h, the translation τ that moves a regular value y
to z, linear and glued homotopies, the half-space radius estimate and
descriptor sweeps along a homotopy.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .cobordism import descriptor
from .errors import DimensionMismatch, PontryaginError, PreconditionViolated
from .mapdsl import SmoothMap, is_infinite
from .preimage import FixedLastCoordinate, pontryagin_manifold, trace_cobordism
from .transversality import ComposedMap


def cutoff(r):
    """h(r) = e^{-1/(1-r)} / (e^{-1/(1-r)} + e^{-1/r}) on (0, 1); 1 for r ≤ 0, 0 for r ≥ 1."""
    r = np.asarray(r, dtype=float)
    inner = (r > 0) & (r < 1)
    rs = np.where(inner, r, 0.5)
    with np.errstate(over="ignore"):
        val = expit(1.0 / rs - 1.0 / (1.0 - rs))
    out = np.where(r <= 0, 1.0, np.where(r >= 1, 0.0, val))
    return out if out.ndim else float(out)


def cutoff_derivative(r):
    r = np.asarray(r, dtype=float)
    inner = (r > 0) & (r < 1)
    rs = np.where(inner, r, 0.5)
    with np.errstate(over="ignore"):
        h = expit(1.0 / rs - 1.0 / (1.0 - rs))
    d = -h * (1.0 - h) * (1.0 / rs ** 2 + 1.0 / (1.0 - rs) ** 2)
    out = np.where(inner, d, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# translation of regular values


class TranslationMap(SmoothMap):
    """τ(x) = x + h((‖x‖ - 2c)/(4c)) (z - y) with c = 2 max(‖y‖, ‖z‖).

    τ(y) = z, τ is the identity for ‖x‖ ≥ 6c, and τ = id + (z - y) on the
    ball of radius 2c. c = 0 (y = z = 0) gives the identity.
    """

    def __init__(self, y, z):
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.z = np.asarray(z, dtype=float).reshape(-1)
        if self.y.shape != self.z.shape:
            raise DimensionMismatch("y and z must have the same dimension")
        self.domain_dim = self.codomain_dim = self.y.size
        self.c = 2.0 * max(np.linalg.norm(self.y), np.linalg.norm(self.z))
        self.support_radius = max(6.0 * self.c, 1.0)

    def _profile(self, X):
        norm = np.linalg.norm(X, axis=1)
        if self.c == 0.0:
            return norm, np.zeros_like(norm), np.zeros_like(norm)
        r = (norm - 2.0 * self.c) / (4.0 * self.c)
        return norm, cutoff(r), cutoff_derivative(r) / (4.0 * self.c)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        norm, h, dh = self._profile(X)
        d = self.z - self.y
        F = X + h[:, None] * d
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm[:, None] > 0, X / norm[:, None], 0.0)
        J = np.eye(self.domain_dim)[None] + (dh[:, None, None] * d[None, :, None]) * unit[:, None, :]
        return F, J, np.ones(X.shape[0], dtype=bool)


def translation_map(y, z) -> TranslationMap:
    return TranslationMap(y, z)


# ---------------------------------------------------------------------------
# homotopies


class _Homotopy(SmoothMap):
    """Base for maps H on R^m x R with the last coordinate as time."""

    def slice(self, t: float) -> SmoothMap:
        return FixedLastCoordinate(self, t)


class LinearHomotopySpace(_Homotopy):
    """H(x, t) = (1 - t) f(x) + t g(x); ∞ if either end is ∞ at x."""

    def __init__(self, f: SmoothMap, g: SmoothMap):
        if (f.domain_dim, f.codomain_dim) != (g.domain_dim, g.codomain_dim):
            raise DimensionMismatch("linear homotopy needs maps of equal shape")
        self.f, self.g = f, g
        self.domain_dim = f.domain_dim + 1
        self.codomain_dim = f.codomain_dim
        self.support_radius = np.hypot(max(f.support_radius, g.support_radius), 1.0)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x, t = X[:, :-1], X[:, -1]
        F0, J0, ok0 = self.f.evaluate_batch(x)
        F1, J1, ok1 = self.g.evaluate_batch(x)
        inf = is_infinite(F0) | is_infinite(F1)
        with np.errstate(invalid="ignore"):
            F = (1 - t)[:, None] * F0 + t[:, None] * F1
            Jx = (1 - t)[:, None, None] * J0 + t[:, None, None] * J1
            Jt = F1 - F0
        F[inf] = np.inf
        J = np.concatenate([Jx, Jt[:, :, None]], axis=2)
        J[inf] = 0.0
        return F, J, (ok0 & ok1) | inf


class TauHomotopySpace(_Homotopy):
    """H(x, t) = f(x) + t h((‖f(x)‖ - 2c)/(4c)) (z - y): from f to τ∘f."""

    def __init__(self, f: SmoothMap, y, z):
        self.f = f
        self.tau = TranslationMap(y, z)
        self.domain_dim = f.domain_dim + 1
        self.codomain_dim = f.codomain_dim
        self.support_radius = np.hypot(f.support_radius, 1.0)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x, t = X[:, :-1], X[:, -1]
        F, Jf, ok = self.f.evaluate_batch(x)
        inf = is_infinite(F)
        Fs = np.where(inf[:, None], 0.0, F)
        norm, h, dh = self.tau._profile(Fs)
        d = self.tau.z - self.tau.y
        G = Fs + (t * h)[:, None] * d
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm[:, None] > 0, Fs / norm[:, None], 0.0)
        grad_h = dh[:, None] * np.einsum("si,sij->sj", unit, Jf)  # d h / dx
        Jx = Jf + t[:, None, None] * d[None, :, None] * grad_h[:, None, :]
        Jt = h[:, None] * d
        J = np.concatenate([Jx, Jt[:, :, None]], axis=2)
        G[inf] = np.inf
        J[inf] = 0.0
        return G, J, ok


class GluedHomotopySpace(_Homotopy):
    """H(x, η, t) = g0 + t h_a(‖η‖) (g2 - g0), η the last ``n`` inputs.

    h_a(r) = h((r - δa) / ((1 - δ)a)) equals 1 for r ≤ δa and 0 for r ≥ a;
    δ is the flat fraction (δ = 0 is the plain rescaling h(r/a)).
    """

    def __init__(self, g0: SmoothMap, g2: SmoothMap, a: float, n: int, flat_fraction: float = 0.5):
        if a <= 0:
            raise ValueError("a must be positive")
        if not 0 <= flat_fraction < 1:
            raise ValueError("flat_fraction must lie in [0, 1)")
        if (g0.domain_dim, g0.codomain_dim) != (g2.domain_dim, g2.codomain_dim):
            raise DimensionMismatch("g0 and g2 must have the same shape")
        self.g0, self.g2 = g0, g2
        self.a, self.n, self.delta = float(a), int(n), float(flat_fraction)
        self.domain_dim = g0.domain_dim + 1
        self.codomain_dim = g0.codomain_dim
        self.support_radius = np.hypot(max(g0.support_radius, g2.support_radius), 1.0)

    def weight(self, eta_norm):
        a, d = self.a, self.delta
        return cutoff((np.asarray(eta_norm) - d * a) / ((1 - d) * a))

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, t = X[:, :-1], X[:, -1]
        F0, J0, ok0 = self.g0.evaluate_batch(p)
        F2, J2, ok2 = self.g2.evaluate_batch(p)
        eta = p[:, -self.n:]
        rho = np.linalg.norm(eta, axis=1)
        a, d = self.a, self.delta
        w = self.weight(rho)
        dw = cutoff_derivative((rho - d * a) / ((1 - d) * a)) / ((1 - d) * a)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[:, None] > 0, eta / rho[:, None], 0.0)
        grad = np.zeros_like(p)
        grad[:, -self.n:] = dw[:, None] * unit
        diff = F2 - F0
        s = t * w
        F = F0 + s[:, None] * diff
        Jp = J0 + s[:, None, None] * (J2 - J0) + t[:, None, None] * diff[:, :, None] * grad[:, None, :]
        J = np.concatenate([Jp, (w[:, None] * diff)[:, :, None]], axis=2)
        return F, J, ok0 & ok2


@dataclass(frozen=True)
class HomotopyPath:
    """H: R^m x [0, 1] -> R^n with its two end maps."""

    H: SmoothMap
    f0: SmoothMap
    f1: SmoothMap
    description: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def at(self, t: float) -> SmoothMap:
        return FixedLastCoordinate(self.H, t)

    def as_map(self) -> SmoothMap:
        return self.H

    def endpoint_error(self, samples: int = 50, rng_seed: int = 0, radius: float | None = None) -> float:
        """max |H(x, 0) - f0(x)|, |H(x, 1) - f1(x)| over random finite points."""
        rng = np.random.default_rng(rng_seed)
        radius = self.f0.support_radius if radius is None else radius
        X = rng.uniform(-radius, radius, (samples, self.f0.domain_dim))
        err = 0.0
        for t, f in ((0.0, self.f0), (1.0, self.f1)):
            A, _, okA = self.at(t).evaluate_batch(X)
            B, _, okB = f.evaluate_batch(X)
            fin = okA & okB & ~is_infinite(A) & ~is_infinite(B)
            if np.any(is_infinite(A) != is_infinite(B)):
                return float("inf")
            if fin.any():
                err = max(err, float(np.abs(A[fin] - B[fin]).max()))
        return err


def linear_homotopy(f: SmoothMap, g: SmoothMap) -> HomotopyPath:
    return HomotopyPath(LinearHomotopySpace(f, g), f, g, "linear")


def translation_homotopy(f: SmoothMap, y, z) -> HomotopyPath:
    """From f to τ∘f, where τ moves y to z."""
    H = TauHomotopySpace(f, y, z)
    return HomotopyPath(H, f, ComposedMap(H.tau, f), "translation",
                        {"y": H.tau.y.tolist(), "z": H.tau.z.tolist(), "c": H.tau.c})


def constant_homotopy(f: SmoothMap) -> HomotopyPath:
    return HomotopyPath(LinearHomotopySpace(f, f), f, f, "constant")


def glued_homotopy(g0: SmoothMap, g2: SmoothMap, a: float, n: int | None = None,
                   flat_fraction: float = 0.5) -> HomotopyPath:
    """Homotopy from g0 to the map equal to g2 near η = 0 and to g0 for ‖η‖ ≥ a.

    Every value lies on the segment [g0(x, η), g2(x, η)].
    """
    n = g0.codomain_dim if n is None else n
    H = GluedHomotopySpace(g0, g2, a, n, flat_fraction)
    return HomotopyPath(H, g0, FixedLastCoordinate(H, 1.0), "glued",
                        {"a": float(a), "flat_fraction": float(flat_fraction),
                         "cutoff": "h((r - flat_fraction*a) / ((1 - flat_fraction)*a))"})


# ---------------------------------------------------------------------------
# half-space radius


def halfspace_radius(g: SmoothMap, base_points, samples: int = 4000, rng_seed: int = 0,
                     safety: float = 1.25, tol: float = 1e-6) -> float:
    """Radius a with ⟨g(x, η), η⟩ > 0 for 0 < ‖η‖ < a (checked on samples).

    ``g`` takes (x, η) with η the last n = g.codomain_dim inputs and
    ``base_points`` are the x parts to sample from. Requires g(x, 0) = 0 and
    dg_{(x,0)} = pr onto the η factor. a_0 is the sampled maximum of
    ‖g(x, η) - η‖ / ‖η‖² over ‖η‖ ≤ 1 times ``safety``; a = min(1/a_0, 1).
    """
    n = g.codomain_dim
    B = np.atleast_2d(np.asarray(base_points, dtype=float))
    if B.shape[1] + n != g.domain_dim:
        raise DimensionMismatch("base points and η do not fill the domain of g")
    Z = np.hstack([B, np.zeros((len(B), n))])
    F0, J0, _ = g.evaluate_batch(Z)
    proj = np.hstack([np.zeros((n, B.shape[1])), np.eye(n)])
    if np.abs(F0).max() > tol or np.abs(J0 - proj[None]).max() > tol:
        raise PreconditionViolated("g(x, 0) must vanish with differential equal to the projection")
    rng = np.random.default_rng(rng_seed)
    idx = rng.integers(0, len(B), samples)
    v = rng.standard_normal((samples, n))
    v /= np.linalg.norm(v, axis=1)[:, None]
    eta = v * (rng.random(samples) ** (1.0 / n))[:, None]
    eta = eta[np.linalg.norm(eta, axis=1) > 1e-12]
    idx = idx[:len(eta)]
    G, _, _ = g.evaluate_batch(np.hstack([B[idx], eta]))
    rn = np.linalg.norm(eta, axis=1)
    a0 = safety * float((np.linalg.norm(G - eta, axis=1) / rn ** 2).max())
    a = 1.0 if a0 <= 1.0 else 1.0 / a0
    # soundness on the samples; shrink if the Taylor estimate was optimistic
    while True:
        inside = rn < a
        if not inside.any() or np.all(np.einsum("si,si->s", G[inside], eta[inside]) > 0):
            return a
        a *= 0.5


# ---------------------------------------------------------------------------
# invariance sweeps


@dataclass(frozen=True)
class SweepSample:
    t: float
    descriptor: int | None
    regular_value: list | None
    error: dict | None


@dataclass(frozen=True)
class InvarianceReport:
    n: int
    k: int
    samples: tuple[SweepSample, ...]
    cobordism_check: dict | None
    params: dict

    @property
    def values(self) -> set:
        return {s.descriptor for s in self.samples if s.descriptor is not None}

    @property
    def consistent(self) -> bool:
        ends_ok = self.samples[0].error is None and self.samples[-1].error is None
        return ends_ok and len(self.values) == 1

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k, "consistent": self.consistent, "params": self.params,
                "samples": [{"t": s.t, "descriptor": s.descriptor, "regular_value": s.regular_value,
                             "error": s.error} for s in self.samples],
                "cobordism_check": self.cobordism_check}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PONTRYAGIN_THREADS", "1")))
    except ValueError:
        return 1


def verify_invariance(f: SmoothMap | None, H: HomotopyPath | None, n: int, k: int,
                      t_samples=(0.0, 0.25, 0.5, 0.75, 1.0), rng_seed: int = 0, y=None,
                      **pipeline) -> InvarianceReport:
    """Descriptors of H_t at each sampled t (the constant homotopy of f when H is None).

    Sample i uses the seed ``rng_seed + i``. Pipeline errors are recorded per
    sample. For k = 0 with a common value y the traced cobordism in
    R^n x [0, 1] is checked against the two end fibers.
    """
    if H is None:
        if f is None:
            raise ValueError("give a map or a homotopy")
        H = constant_homotopy(f)
    ts = [float(t) for t in t_samples]
    if not ts or ts[0] != 0.0 or ts[-1] != 1.0:
        ts = sorted({0.0, 1.0, *ts})

    def run(i_t):
        i, t = i_t
        try:
            P = pontryagin_manifold(H.at(t), n, k, rng_seed=rng_seed + i, y=y, **pipeline)
            return SweepSample(t, descriptor(P).value, P.regular_value.tolist(), None)
        except PontryaginError as exc:
            return SweepSample(t, None, None, exc.to_json())

    workers = min(_threads(), len(ts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            samples = tuple(pool.map(run, enumerate(ts)))
    else:
        samples = tuple(run(it) for it in enumerate(ts))
    check = None
    if k == 0 and y is not None:
        try:
            tr = trace_cobordism(H.as_map(), y, rng_seed=rng_seed)
            c0, c1 = tr.signed_counts()
            check = {"signed_counts": [c0, c1], "boundary_error": tr.boundary_error(),
                     "arcs": sum(c.kind == "arc" for c in tr.components),
                     "loops": sum(c.kind == "loop" for c in tr.components), "error": None}
        except PontryaginError as exc:
            check = {"error": exc.to_json()}
    return InvarianceReport(n, k, samples, check,
                            {"t_samples": ts, "rng_seed": rng_seed, "homotopy": H.description,
                             "y": None if y is None else np.asarray(y, dtype=float).tolist(),
                             **H.params})


__all__ = ["GluedHomotopySpace", "HomotopyPath", "InvarianceReport", "LinearHomotopySpace",
           "TauHomotopySpace", "TranslationMap", "constant_homotopy", "cutoff", "cutoff_derivative",
           "glued_homotopy", "halfspace_radius", "linear_homotopy", "translation_homotopy",
           "translation_map", "verify_invariance"]
