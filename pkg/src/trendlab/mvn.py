"""Equicoordinate multivariate-normal probabilities and quantiles.

These are the reference-distribution computations behind max-test adjusted
p-values and simultaneous confidence bounds: for Z ~ N(0, R),

    upper-max          P(max_m Z_m <= t)   = P(all Z in (-inf, t])
    lower-min          P(min_m Z_m >= t)   = P(all Z in [t, inf))
    two-sided-max-abs  P(max_m |Z_m| <= t) = P(all Z in [-t, t])

computed by randomized quasi-Monte-Carlo integration after a Cholesky
transform with variable reordering (smallest conditional interval first).
Results are deterministic for a fixed (seed, points, backend) and come with
an error estimate of three standard errors across randomizations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ndtr, ndtri

from ._mvn_kernels import SQRT_PRIMES, active_backend, lattice_means
from .errors import CorrelationMatrixError, QuantileSearchError

DEFAULT_SEED = 20240101
DEFAULT_POINTS = 8192
DEFAULT_RANDOMIZATIONS = 12
DEFAULT_TOL = 1e-5

Tail = Literal["upper-max", "lower-min", "two-sided-max-abs"]
TAILS = ("upper-max", "lower-min", "two-sided-max-abs")

_EIG_CLIP = 1e-10
_EIG_NEG_TOL = 1e-8


@dataclass(frozen=True)
class MvnProblem:
    """One equicoordinate probability evaluation.

    ``tol`` is the target absolute error; ``points`` and ``randomizations``
    size the lattice rule.  The default rule (8192 points, 12 shifts) meets
    ``tol=1e-5`` comfortably for the dimensions this package produces.
    """

    R: np.ndarray
    bound: float
    tail: Tail = "upper-max"
    tol: float = DEFAULT_TOL
    seed: int = DEFAULT_SEED
    points: int = DEFAULT_POINTS
    randomizations: int = DEFAULT_RANDOMIZATIONS

    def __post_init__(self):
        if self.tail not in TAILS:
            raise ValueError(f"unknown tail {self.tail!r}; expected one of {TAILS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.points < 1 or self.randomizations < 2:
            raise ValueError("need points >= 1 and randomizations >= 2")
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))


def validate_correlation(R: np.ndarray, warn: bool = True) -> np.ndarray:
    """Check and, if near-singular, repair a correlation matrix.

    Symmetry and a unit diagonal are enforced exactly; eigenvalues below
    -1e-8 raise :class:`CorrelationMatrixError`, while eigenvalues in
    [-1e-8, 1e-10) are clipped to 1e-10 followed by re-standardization
    (with a warning).
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise CorrelationMatrixError("correlation matrix must be square")
    if R.shape[0] == 0:
        raise CorrelationMatrixError("correlation matrix must have at least one row")
    if not np.allclose(R, R.T, atol=1e-8):
        raise CorrelationMatrixError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-8):
        raise CorrelationMatrixError("correlation matrix must have a unit diagonal")
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    eigval, eigvec = np.linalg.eigh(R)
    if eigval[0] < -_EIG_NEG_TOL:
        raise CorrelationMatrixError(
            f"matrix is not positive semidefinite (min eigenvalue {eigval[0]:.3e})")
    if eigval[0] < _EIG_CLIP:
        if warn:
            warnings.warn(
                f"correlation matrix is numerically singular (min eigenvalue {eigval[0]:.3e}); "
                f"clipping eigenvalues at {_EIG_CLIP:g}")
        eigval = np.maximum(eigval, _EIG_CLIP)
        R = (eigvec * eigval) @ eigvec.T
        scale = np.sqrt(np.diag(R))
        R = R / np.outer(scale, scale)
        np.fill_diagonal(R, 1.0)
    return R


def _tail_bounds(M: int, bound: float, tail: Tail) -> tuple[np.ndarray, np.ndarray]:
    if tail == "upper-max":
        return np.full(M, -np.inf), np.full(M, bound)
    if tail == "lower-min":
        return np.full(M, bound), np.full(M, np.inf)
    b = abs(bound)
    return np.full(M, -b), np.full(M, b)


def _reordered_cholesky(R: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Cholesky factor with greedy variable reordering.

    At each elimination step the variable with the smallest conditional
    interval probability (evaluated at the truncated-normal expectation of
    the earlier coordinates) is processed next; this flattens the integrand
    and is the standard ordering for this integration scheme.
    """
    M = R.shape[0]
    C = R.copy()
    a = lower.copy()
    b = upper.copy()
    L = np.zeros((M, M))
    y = np.zeros(M)
    for j in range(M):
        best_p, best_k = np.inf, j
        for k in range(j, M):
            djj = C[k, k] - L[k, :j] @ L[k, :j]
            djj = math.sqrt(max(djj, 1e-14))
            s = L[k, :j] @ y[:j]
            lo = (a[k] - s) / djj if np.isfinite(a[k]) else -np.inf
            hi = (b[k] - s) / djj if np.isfinite(b[k]) else np.inf
            p = (ndtr(hi) if np.isfinite(hi) else 1.0) - (ndtr(lo) if np.isfinite(lo) else 0.0)
            if p < best_p:
                best_p, best_k = p, k
        k = best_k
        if k != j:
            C[[j, k], :] = C[[k, j], :]
            C[:, [j, k]] = C[:, [k, j]]
            L[[j, k], :j] = L[[k, j], :j]
            a[[j, k]] = a[[k, j]]
            b[[j, k]] = b[[k, j]]
        djj = C[j, j] - L[j, :j] @ L[j, :j]
        L[j, j] = math.sqrt(max(djj, 1e-14))
        for i in range(j + 1, M):
            L[i, j] = (C[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
        # truncated-normal mean of the j-th coordinate, used by the ordering
        s = L[j, :j] @ y[:j]
        lo = (a[j] - s) / L[j, j] if np.isfinite(a[j]) else -np.inf
        hi = (b[j] - s) / L[j, j] if np.isfinite(b[j]) else np.inf
        plo = ndtr(lo) if np.isfinite(lo) else 0.0
        phi_hi = ndtr(hi) if np.isfinite(hi) else 1.0
        width = max(phi_hi - plo, 1e-300)
        dens_lo = math.exp(-0.5 * lo * lo) / math.sqrt(2 * math.pi) if np.isfinite(lo) else 0.0
        dens_hi = math.exp(-0.5 * hi * hi) / math.sqrt(2 * math.pi) if np.isfinite(hi) else 0.0
        y[j] = (dens_lo - dens_hi) / width
    return L, a, b


def mvn_prob(problem: MvnProblem, backend: str | None = None) -> tuple[float, float]:
    """Equicoordinate rectangle probability and its error estimate.

    Returns ``(probability, error_estimate)`` where the estimate is three
    standard errors over the lattice randomizations (0 when the rule is
    exact, e.g. M=1).  Deterministic for fixed (R, bound, seed, points).
    """
    R = validate_correlation(problem.R)
    M = R.shape[0]
    if M > SQRT_PRIMES.size + 1:
        raise ValueError(f"dimension {M} exceeds the supported maximum {SQRT_PRIMES.size + 1}")
    lower, upper = _tail_bounds(M, problem.bound, problem.tail)
    L, a, b = _reordered_cholesky(R, lower, upper)
    rng = np.random.default_rng(problem.seed)
    ndim = max(M - 1, 1)
    shifts = rng.random((problem.randomizations, ndim))
    vals = lattice_means(L, a, b, shifts, SQRT_PRIMES[:ndim], problem.points, backend=backend)
    prob = float(np.mean(vals))
    err = 3.0 * float(np.std(vals, ddof=1)) / math.sqrt(problem.randomizations)
    return min(max(prob, 0.0), 1.0), err


def equicoordinate_quantile(R: np.ndarray, level: float, tail: Tail = "upper-max",
                            seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL,
                            points: int = DEFAULT_POINTS,
                            randomizations: int = DEFAULT_RANDOMIZATIONS,
                            backend: str | None = None) -> float:
    """Critical value c with P(tail rectangle at c) = level.

    Found by safeguarded root search (Brent) on the monotone, deterministic
    map ``c -> probability``; the returned c satisfies
    ``|probability(c) - level| <= 2 * tol``.  The search bracket comes from
    the perfect-correlation and Bonferroni bounds, which enclose the root
    for every valid correlation matrix.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    R = validate_correlation(R)
    M = R.shape[0]

    def prob(c: float) -> float:
        p, _ = mvn_prob(MvnProblem(R, c, tail, tol=tol, seed=seed, points=points,
                                   randomizations=randomizations), backend=backend)
        return p

    if tail == "two-sided-max-abs":
        lo = float(ndtri((1.0 + level) / 2.0)) - 0.1
        hi = float(ndtri(1.0 - (1.0 - level) / (2.0 * M))) + 0.1
    else:
        lo = float(ndtri(level)) - 0.1
        hi = float(ndtri(1.0 - (1.0 - level) / M)) + 0.1
        if tail == "lower-min":
            # P(min Z >= c) decreases in c; search the mirrored problem
            flo, fhi = prob(-lo) - level, prob(-hi) - level
            if flo > 0 or fhi < 0:
                raise QuantileSearchError("failed to bracket the critical value")
            from scipy.optimize import brentq
            c = brentq(lambda x: prob(-x) - level, lo, hi, xtol=1e-6, rtol=8.9e-16)
            return float(-c)

    flo, fhi = prob(lo) - level, prob(hi) - level
    if flo > 0 or fhi < 0:
        raise QuantileSearchError(
            f"failed to bracket the critical value on [{lo:.4f}, {hi:.4f}]")
    from scipy.optimize import brentq
    c = brentq(lambda x: prob(x) - level, lo, hi, xtol=1e-6, rtol=8.9e-16)
    return float(c)


def backend_in_use() -> str:
    """Name of the kernel backend mvn_prob dispatches to."""
    return active_backend()
