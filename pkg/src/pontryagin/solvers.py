"""Batched Newton / Gauss-Newton and predictor-corrector curve tracing.

All routines consume :class:`~pontryagin.mapdsl.SmoothMap` objects through
``evaluate_batch`` so many starts are iterated at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ContinuationFailed, EscapedSupport, NotRegular
from .mapdsl import SmoothMap, is_infinite

ROOT_TOL = 1e-10
DEDUP_RADIUS = 1e-6
NEAR_CRITICAL = 1e3  # multiples of tol below which a stalled step counts as singular


def sobol_ball(dim: int, radius: float, count: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points of the cube [-radius, radius]^dim kept inside the ball."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    out = []
    have = 0
    while have < count:
        need = max(count - have, 16)
        m = int(np.ceil(np.log2(need * 2.0 ** dim)))
        P = (2.0 * sampler.random_base2(m) - 1.0) * radius
        P = P[np.linalg.norm(P, axis=1) <= radius]
        out.append(P)
        have += len(P)
    return np.vstack(out)[:count]


def _residual(F: np.ndarray, y: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        r = np.linalg.norm(F - y, axis=1)
    return np.where(np.isfinite(r), r, np.inf)


def newton_batch(f: SmoothMap, y, X0: np.ndarray, radius: float, max_iter: int = 100,
                 fixed: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Damped (Gauss-)Newton from every row of ``X0`` towards f(x) = y.

    Steps are minimum-norm (pseudo-inverse), so the same routine handles square
    and underdetermined systems. An Armijo backtracking line search on
    ‖f(x) - y‖^2 damps each step. Starts that leave the ball of ``1.5 radius``
    or the smooth domain are dropped (residual inf). ``fixed`` masks
    coordinates that are held constant. Returns final points and residuals.
    """
    y = np.asarray(y, dtype=float)
    X = np.array(X0, dtype=float, copy=True)
    N = X.shape[0]
    res = np.full(N, np.inf)
    active = np.ones(N, dtype=bool)
    F, J, ok = f.evaluate_batch(X)
    ok &= ~is_infinite(F)
    res[ok] = _residual(F[ok], y)
    active &= ok
    free = None if fixed is None else ~np.asarray(fixed, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ja = J[idx]
        if free is not None:
            Ja = Ja * free[None, None, :]
        step = np.einsum("nij,nj->ni", np.linalg.pinv(Ja, rcond=1e-14), F[idx] - y)
        r0 = res[idx]
        alpha = np.ones(idx.size)
        pending = np.arange(idx.size)
        newX = X[idx].copy()
        newF, newJ, newr = F[idx].copy(), J[idx].copy(), r0.copy()
        accepted = np.zeros(idx.size, dtype=bool)
        for _ls in range(30):
            if pending.size == 0:
                break
            cand = X[idx[pending]] - alpha[pending, None] * step[pending]
            Fc, Jc, okc = f.evaluate_batch(cand)
            okc &= ~is_infinite(Fc) & (np.linalg.norm(cand, axis=1) <= 1.5 * radius)
            rc = np.where(okc, _residual(Fc, y), np.inf)
            good = rc ** 2 <= (1.0 - 1e-4 * alpha[pending]) * r0[pending] ** 2
            g = pending[good]
            newX[g], newF[g], newJ[g], newr[g] = cand[good], Fc[good], Jc[good], rc[good]
            accepted[g] = True
            pending = pending[~good]
            alpha[pending] *= 0.5
        # no decrease: stalled (zero residual already or stuck at a critical point)
        stepn = np.linalg.norm(alpha[:, None] * step, axis=1)
        X[idx], F[idx], J[idx], res[idx] = newX, newF, newJ, newr
        scale = 1.0 + np.linalg.norm(X[idx], axis=1)
        done = ~accepted | (stepn <= 1e-15 * scale) | (res[idx] == 0.0)
        active[idx[done]] = False
    return X, res


def dedup_points(X: np.ndarray, radius: float = DEDUP_RADIUS) -> np.ndarray:
    """Greedy first-come deduplication; keeps the earliest representative."""
    kept: list[np.ndarray] = []
    for x in X:
        if kept and np.min(np.linalg.norm(np.asarray(kept) - x, axis=1)) < radius:
            continue
        kept.append(x)
    return np.asarray(kept).reshape(-1, X.shape[1])


def sigma_min(J: np.ndarray) -> float:
    """Smallest singular value counting rank deficiency of wide/tall matrices."""
    J = np.atleast_2d(J)
    s = np.linalg.svd(J, compute_uv=False)
    if J.shape[0] > J.shape[1]:
        return 0.0
    return float(s.min()) if s.size else 0.0


def oriented_kernel(J: np.ndarray) -> np.ndarray:
    """Unit kernel vector T of an n x (n+1) matrix with det[J; T] > 0."""
    _, _, Vt = np.linalg.svd(J)
    t = Vt[-1]
    if np.linalg.det(np.vstack([J, t])) < 0:
        t = -t
    return t


# ---------------------------------------------------------------------------
# continuation


@dataclass
class TracedCurve:
    samples: np.ndarray
    closed: bool
    end: str  # "closed" | "boundary"


def _correct(f: SmoothMap, y, x: np.ndarray, fixed=None, iters: int = 10,
             tol: float = 1e-12):
    """Gauss-Newton corrector for a single point; returns (x, J, residual)."""
    y = np.asarray(y, dtype=float)
    for _ in range(iters):
        F, J, ok = f.evaluate_batch(x[None, :])
        if not ok[0] or is_infinite(F)[0]:
            return x, None, np.inf
        r = float(np.linalg.norm(F[0] - y))
        if r <= tol:
            return x, J[0], r
        Jm = J[0] if fixed is None else J[0] * (~fixed)[None, :]
        x = x - np.linalg.pinv(Jm, rcond=1e-14) @ (F[0] - y)
    F, J, ok = f.evaluate_batch(x[None, :])
    if not ok[0] or is_infinite(F)[0]:
        return x, None, np.inf
    return x, J[0], float(np.linalg.norm(F[0] - y))


def trace_curve(f: SmoothMap, y, x0: np.ndarray, step: float, radius: float,
                tol: float = 1e-6, direction: float = 1.0, max_samples: int = 200_000,
                slab: tuple[float, float] | None = None, min_step: float = 1e-5,
                corrector_tol: float = 1e-12, allow_close: bool = True) -> TracedCurve:
    """Trace the component of f^{-1}(y) through ``x0`` by pseudo-arclength steps.

    The tangent is the oriented kernel vector of df (times ``direction``);
    Gauss-Newton corrects back onto the fiber. Failed corrections halve the
    step down to ``min_step``. With ``slab = (lo, hi)`` the last coordinate is
    confined to [lo, hi] and tracing stops on the boundary, landing exactly
    on it. Tracing also stops when the curve closes (unless ``allow_close``
    is false, used for arcs starting on a slab face).
    """
    y = np.asarray(y, dtype=float)
    dim = x0.shape[0]
    x, J, r = _correct(f, y, np.asarray(x0, dtype=float), tol=corrector_tol)
    if J is None or r > 1e-8:
        raise ContinuationFailed("start point is not on the fiber")
    if np.linalg.svd(J, compute_uv=False).min() < tol:
        raise NotRegular(f"kernel of df is not 1-dimensional at {x.tolist()}")
    start = x.copy()
    T = direction * oriented_kernel(J)
    samples = [x.copy()]
    h = step
    travelled = 0.0
    fixed_t = np.zeros(dim, dtype=bool)
    fixed_t[-1] = True
    while True:
        if len(samples) > max_samples:
            raise ContinuationFailed("curve did not close within the sample budget")
        xp = x + h * T
        hit = None
        if slab is not None:
            lo, hi = slab
            if xp[-1] < lo or xp[-1] > hi:
                bound = lo if xp[-1] < lo else hi
                if T[-1] != 0.0:
                    hb = (bound - x[-1]) / T[-1]
                    if 0 < hb <= h:
                        xp = x + hb * T
                        xp[-1] = bound
                        hit = bound
        if hit is not None:
            xc, Jc, rc = _correct(f, y, xp, fixed=fixed_t, tol=corrector_tol, iters=30)
            xc[-1] = hit
        else:
            xc, Jc, rc = _correct(f, y, xp, tol=corrector_tol)
        good = Jc is not None and rc <= 1e-10 and np.linalg.norm(xc - xp) <= 0.5 * h + 1e-12
        if good:
            svals = np.linalg.svd(Jc, compute_uv=False)
            if svals.min() < tol:
                raise NotRegular(f"kernel of df is not 1-dimensional at {xc.tolist()}")
            Tn = direction * oriented_kernel(Jc)
            good = float(Tn @ T) > np.cos(0.3)
        if not good:
            h *= 0.5
            if h < min_step:
                # a collapsing step next to a near-critical point is a singular fiber
                _, Jx, _ = f.evaluate_batch(x[None, :])
                if np.linalg.svd(Jx[0], compute_uv=False).min() <= NEAR_CRITICAL * tol:
                    raise NotRegular(f"fiber runs into a critical point near {x.tolist()}")
                raise ContinuationFailed(f"step fell below {min_step} at {x.tolist()}")
            continue
        if np.linalg.norm(xc) > radius:
            raise EscapedSupport(f"fiber leaves the support ball of radius {radius}")
        seg = float(np.linalg.norm(xc - x))
        travelled += seg
        if hit is not None:
            samples.append(xc.copy())
            return TracedCurve(np.asarray(samples), False, "boundary")
        gap = float(np.linalg.norm(xc - start))
        if allow_close and travelled > 3 * step and gap <= step and float((start - x) @ T) > 0:
            if gap > 0.1 * step:
                samples.append(xc.copy())
            samples.append(start.copy())
            return TracedCurve(np.asarray(samples), True, "closed")
        samples.append(xc.copy())
        x, T = xc, Tn
        h = min(step, 1.5 * h)
