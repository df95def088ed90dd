"""Numerical transversality: certificates, regular values and generic shifts.

A point x with f(x) ∈ S = φ^{-1}(0) is transverse when d(φ∘f)_x = dφ_{f(x)} df_x
is surjective; numerically, when its smallest singular value is at least
``tol``. Regular values are the special case S = {y}, φ = id - y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (BudgetExhausted, ContinuationFailed, DimensionMismatch, EscapedSupport,
                     NotRegular, PointNotOnFiber, PreconditionViolated)
from .mapdsl import ChartMap, SmoothMap, is_infinite
from .solvers import ROOT_TOL, dedup_points, newton_batch, sigma_min, sobol_ball

DEFAULT_TOL = 1e-6

# errors meaning "this value is unusable, draw another"
_REJECT = (NotRegular, EscapedSupport, ContinuationFailed, BudgetExhausted)


class ComposedMap(SmoothMap):
    """outer ∘ inner; the basepoint ∞ is carried through unchanged."""

    def __init__(self, outer: SmoothMap, inner: SmoothMap):
        if outer.domain_dim != inner.codomain_dim:
            raise DimensionMismatch("cannot compose: dimensions differ")
        self.outer, self.inner = outer, inner
        self.domain_dim = inner.domain_dim
        self.codomain_dim = outer.codomain_dim
        self.support_radius = inner.support_radius

    def evaluate_batch(self, X):
        F, J, ok = self.inner.evaluate_batch(X)
        inf = is_infinite(F)
        G = np.full((F.shape[0], self.codomain_dim), np.inf)
        DJ = np.zeros((F.shape[0], self.codomain_dim, self.domain_dim))
        fin = ~inf
        if fin.any():
            Go, K, ok2 = self.outer.evaluate_batch(F[fin])
            G[fin] = Go
            DJ[fin] = np.einsum("kij,kjl->kil", K, J[fin])
            ok = ok.copy()
            ok[fin] &= ok2
        return G, DJ, ok

    def seed_hints(self, rng):
        return self.inner.seed_hints(rng)


class ShiftedMap(SmoothMap):
    """x -> f(x) + t for evaluables that are not parsed chart maps."""

    def __init__(self, f: SmoothMap, t):
        self.f = f
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.domain_dim, self.codomain_dim = f.domain_dim, f.codomain_dim
        self.support_radius = f.support_radius

    def evaluate_batch(self, X):
        F, J, ok = self.f.evaluate_batch(X)
        return F + self.t, J, ok


class ArgumentShiftedMap(SmoothMap):
    """x -> f(x - t); shifts the zero set of a submersion by t."""

    def __init__(self, f: SmoothMap, t):
        self.f = f
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.domain_dim, self.codomain_dim = f.domain_dim, f.codomain_dim
        self.support_radius = f.support_radius + float(np.linalg.norm(self.t))

    def evaluate_batch(self, X):
        return self.f.evaluate_batch(np.atleast_2d(X) - self.t)


def shift(f: SmoothMap, t) -> SmoothMap:
    if isinstance(f, ChartMap):
        return f.shifted(t)
    return ShiftedMap(f, t)


@dataclass(frozen=True)
class LevelSetSubmanifold:
    """S = φ^{-1}(0) ⊂ R^n for a submersion φ: R^n -> R^c."""

    ambient_dim: int
    codim: int
    submersion: SmoothMap
    description: str = ""

    def __post_init__(self):
        if self.submersion.domain_dim != self.ambient_dim or self.submersion.codomain_dim != self.codim:
            raise DimensionMismatch("submersion has the wrong shape")

    def shifted(self, t) -> "LevelSetSubmanifold":
        return LevelSetSubmanifold(self.ambient_dim, self.codim,
                                   ArgumentShiftedMap(self.submersion, t),
                                   f"{self.description} shifted by {np.asarray(t).tolist()}")

    @classmethod
    def point(cls, y) -> "LevelSetSubmanifold":
        from .mapdsl import parse_map

        y = np.asarray(y, dtype=float).reshape(-1)
        src = "; ".join(f"x{i + 1} - {repr(float(v))}" if v >= 0 else f"x{i + 1} + {repr(float(-v))}"
                        for i, v in enumerate(y))
        return cls(y.size, y.size, parse_map(src, y.size, y.size), f"the point {y.tolist()}")


@dataclass(frozen=True)
class TransversalityReport:
    point: np.ndarray
    value: np.ndarray
    verdict: str  # "transverse" | "not-transverse" | "not-on-S"
    sigma_min: float
    tol: float
    level: float  # ‖φ(f(x))‖

    @property
    def transverse(self) -> bool:
        return self.verdict == "transverse"

    def to_json(self) -> dict:
        return {"point": self.point.tolist(), "value": self.value.tolist(), "verdict": self.verdict,
                "sigma_min": self.sigma_min, "tol": self.tol, "level": self.level}


def check_transverse(f: SmoothMap, S: LevelSetSubmanifold, x, tol: float = DEFAULT_TOL) -> TransversalityReport:
    if f.codomain_dim != S.ambient_dim:
        raise DimensionMismatch("f does not map into the ambient space of S")
    fx, J = f.evaluate_with_jacobian(x)
    phi, K = S.submersion.evaluate_with_jacobian(fx)
    if sigma_min(K) < 1e-8:
        raise PreconditionViolated("dφ is not surjective; S is not a level set of a submersion here")
    composed = K @ J
    s = sigma_min(composed)
    level = float(np.linalg.norm(phi))
    if level > tol:
        verdict = "not-on-S"
    else:
        verdict = "transverse" if s >= tol else "not-transverse"
    return TransversalityReport(np.asarray(x, dtype=float).reshape(-1), fx, verdict, s, tol, level)


def is_regular_value(f: SmoothMap, y, preimage_points, tol: float = DEFAULT_TOL) -> bool:
    """True iff df_x has full rank n (σ_min ≥ tol) at every supplied point of f^{-1}(y)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    ok = True
    for x in preimage_points:
        fx, J = f.evaluate_with_jacobian(x)
        if np.linalg.norm(fx - y) > 1e-8:
            raise PointNotOnFiber(f"‖f(x) - y‖ = {np.linalg.norm(fx - y):.2e} at {np.asarray(x).tolist()}")
        ok &= sigma_min(J) >= tol
    return bool(ok)


def _uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.random() ** (1.0 / dim)


def sample_regular_value(f: SmoothMap, search_radius: float, rng_seed: int, value_budget: int,
                         sampler=None, **pipeline):
    """Draw y until the preimage pipeline certifies it; returns (y, geometry, attempts).

    ``pipeline`` is forwarded to :func:`~pontryagin.preimage.extract_geometry`.
    """
    from .preimage import extract_geometry

    budget = value_budget
    if budget < 1:
        raise BudgetExhausted("budget must be at least 1")
    rng = np.random.default_rng(rng_seed)
    k = f.domain_dim - f.codomain_dim
    reasons = []
    for attempt in range(1, budget + 1):
        y = sampler(rng) if sampler is not None else _uniform_ball(rng, f.codomain_dim, search_radius)
        y = np.asarray(y, dtype=float).reshape(-1)
        try:
            geometry = extract_geometry(f, y, k, rng_seed=rng_seed, **pipeline)
        except _REJECT as exc:
            reasons.append(type(exc).__name__)
            continue
        return y, geometry, attempt
    raise BudgetExhausted(f"no regular value in {budget} draws ({', '.join(sorted(set(reasons)))}); "
                          "the map may be constant or ill-conditioned")


def find_regular_value(f: SmoothMap, search_radius: float = 1.0, rng_seed: int = 0,
                       budget: int = 64, sampler=None, seeds: int = 4096, **pipeline) -> np.ndarray:
    """A value y in the search ball whose whole fiber is certified regular.

    Rejection sampling: by Sard, critical values have measure zero, so draws
    succeed with probability one. ``budget`` counts draws, ``seeds`` the
    Newton starts per draw; ``sampler(rng)`` overrides the uniform draw.
    """
    return sample_regular_value(f, search_radius, rng_seed, budget, sampler,
                                budget=seeds, **pipeline)[0]


def locate_intersections(f: SmoothMap, S: LevelSetSubmanifold, rng_seed: int = 0,
                         seeds: int = 1024) -> np.ndarray:
    """Points of f^{-1}(S) found by multi-start Newton on φ∘f (sample points when dim > 0)."""
    g = ComposedMap(S.submersion, f)
    X0 = sobol_ball(f.domain_dim, f.support_radius, seeds, rng_seed)
    X, res = newton_batch(g, np.zeros(S.codim), X0, f.support_radius, max_iter=200)
    conv = (res <= ROOT_TOL) & (np.linalg.norm(X, axis=1) <= f.support_radius)
    return dedup_points(X[conv])


@dataclass(frozen=True)
class PerturbationResult:
    t: np.ndarray
    f_t: SmoothMap
    reports: tuple[TransversalityReport, ...]
    attempts: int


def perturb_to_transverse(f: SmoothMap, S: LevelSetSubmanifold, radius: float, rng_seed: int = 0,
                          budget: int = 64, tol: float = DEFAULT_TOL, seeds: int = 1024) -> PerturbationResult:
    """Find t with ‖t‖ ≤ radius such that f_t = f + t is transverse to S.

    t = 0 is tried first; later candidates are uniform in the ball.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(rng_seed)
    n = f.codomain_dim
    for attempt in range(1, budget + 1):
        t = np.zeros(n) if attempt == 1 else _uniform_ball(rng, n, radius)
        ft = shift(f, t)
        reports = []
        good = True
        for x in locate_intersections(ft, S, rng_seed, seeds):
            rep = check_transverse(ft, S, x, tol)
            reports.append(rep)
            if not rep.transverse:
                good = False
                break
        if good:
            return PerturbationResult(t, ft, tuple(reports), attempt)
    raise BudgetExhausted(f"no transverse shift found in {budget} draws")


def shift_is_transverse(f: SmoothMap, S: LevelSetSubmanifold, t, tol: float = DEFAULT_TOL,
                        rng_seed: int = 0, seeds: int = 256) -> bool:
    """Whether f + t is transverse to S at every located intersection point."""
    ft = shift(f, t)
    return all(check_transverse(ft, S, x, tol).transverse
               for x in locate_intersections(ft, S, rng_seed, seeds))
