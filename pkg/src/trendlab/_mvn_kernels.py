"""Quasi-Monte-Carlo kernels for equicoordinate normal probabilities.

The integrand is the separation-of-variables transform of the rectangle
probability P(a <= Z <= b), Z ~ N(0, R): after a Cholesky factorization
with variable reordering, each lattice point is pushed through a chain of
conditional univariate normal CDFs and the interval widths are multiplied
up.  Points come from a tent-transformed Kronecker sequence (square roots
of primes) with one uniform random shift per randomization; the spread of
the per-randomization means yields the error estimate.

Two implementations of the hot loop live here: a numba ``@njit`` kernel
and a vectorized pure-numpy twin.  Both evaluate the same arithmetic; the
active one is chosen by the ``TRENDLAB_BACKEND`` environment variable
("numba" or "numpy", default numba when importable).  Results are
deterministic for a fixed backend, seed and point count.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np
from scipy.special import erfc as _erfc_np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: generators of the Kronecker lattice, one per integration dimension
SQRT_PRIMES = np.sqrt(np.array(
    [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71],
    dtype=np.float64))

# Abramowitz-Stegun 26.2.23 rational initial guess, sharpened by Newton
_AS_C0, _AS_C1, _AS_C2 = 2.515517, 0.802853, 0.010328
_AS_D1, _AS_D2, _AS_D3 = 1.432788, 0.189269, 0.001308
_NEWTON_STEPS = 4
_UMIN, _UMAX = 1e-300, 1.0 - 1e-16


# ---------------------------------------------------------------------------
# scalar math (numba side)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _phi_nb(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def _ndtri_nb(u):
    if u < _UMIN:
        u = _UMIN
    elif u > _UMAX:
        u = _UMAX
    p = u if u <= 0.5 else 1.0 - u
    t = math.sqrt(-2.0 * math.log(p))
    x = t - (_AS_C0 + t * (_AS_C1 + t * _AS_C2)) / (1.0 + t * (_AS_D1 + t * (_AS_D2 + t * _AS_D3)))
    if u <= 0.5:
        x = -x
    for _ in range(_NEWTON_STEPS):
        f = _phi_nb(x) - u
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
        x = x - f / pdf
    return x


@njit(cache=True)
def _lattice_means_nb(L, lower, upper, shifts, sqp, points):
    M = L.shape[0]
    nrand = shifts.shape[0]
    out = np.empty(nrand)
    # first coordinate integrates exactly
    d1 = _phi_nb(lower[0] / L[0, 0]) if not math.isinf(lower[0]) else 0.0
    e1 = _phi_nb(upper[0] / L[0, 0]) if not math.isinf(upper[0]) else 1.0
    y = np.empty(M)
    for r in range(nrand):
        acc = 0.0
        for i in range(points):
            f = e1 - d1
            d = d1
            e = e1
            for j in range(1, M):
                w = (i + 1.0) * sqp[j - 1] + shifts[r, j - 1]
                w = w - math.floor(w)
                w = abs(2.0 * w - 1.0)
                u = d + w * (e - d)
                y[j - 1] = _ndtri_nb(u)
                s = 0.0
                for l in range(j):
                    s += L[j, l] * y[l]
                ajj = L[j, j]
                d = _phi_nb((lower[j] - s) / ajj) if not math.isinf(lower[j]) else 0.0
                e = _phi_nb((upper[j] - s) / ajj) if not math.isinf(upper[j]) else 1.0
                width = e - d
                if width < 0.0:
                    width = 0.0
                f *= width
            acc += f
        out[r] = acc / points
    return out


# ---------------------------------------------------------------------------
# vectorized twin (numpy side)
# ---------------------------------------------------------------------------

def _phi_np(x):
    return 0.5 * _erfc_np(-x / _SQRT2)


def _ndtri_np(u):
    u = np.clip(u, _UMIN, _UMAX)
    p = np.where(u <= 0.5, u, 1.0 - u)
    t = np.sqrt(-2.0 * np.log(p))
    x = t - (_AS_C0 + t * (_AS_C1 + t * _AS_C2)) / (1.0 + t * (_AS_D1 + t * (_AS_D2 + t * _AS_D3)))
    x = np.where(u <= 0.5, -x, x)
    for _ in range(_NEWTON_STEPS):
        f = _phi_np(x) - u
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        x = x - f / pdf
    return x


def _lattice_means_np(L, lower, upper, shifts, sqp, points):
    M = L.shape[0]
    nrand = shifts.shape[0]
    out = np.empty(nrand)
    d1 = _phi_np(np.array(lower[0] / L[0, 0]))[()] if np.isfinite(lower[0]) else 0.0
    e1 = _phi_np(np.array(upper[0] / L[0, 0]))[()] if np.isfinite(upper[0]) else 1.0
    i = np.arange(1, points + 1, dtype=np.float64)
    for r in range(nrand):
        f = np.full(points, e1 - d1)
        d = np.full(points, d1)
        e = np.full(points, e1)
        ys = np.empty((points, max(M - 1, 1)))
        for j in range(1, M):
            w = i * sqp[j - 1] + shifts[r, j - 1]
            w = np.abs(2.0 * (w - np.floor(w)) - 1.0)
            u = d + w * (e - d)
            ys[:, j - 1] = _ndtri_np(u)
            s = ys[:, :j] @ L[j, :j]
            ajj = L[j, j]
            d = _phi_np((lower[j] - s) / ajj) if np.isfinite(lower[j]) else np.zeros(points)
            e = _phi_np((upper[j] - s) / ajj) if np.isfinite(upper[j]) else np.ones(points)
            f = f * np.maximum(e - d, 0.0)
        out[r] = f.mean()
    return out


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

def _resolve_backend() -> str:
    choice = os.environ.get("TRENDLAB_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        warnings.warn(f"TRENDLAB_BACKEND={choice!r} not recognized; using auto selection")
        choice = ""
    if choice == "numba" and not HAVE_NUMBA:
        warnings.warn("TRENDLAB_BACKEND=numba requested but numba is unavailable; using numpy")
        return "numpy"
    if choice == "":
        return "numba" if HAVE_NUMBA else "numpy"
    return choice


def active_backend() -> str:
    """Backend that lattice_means will dispatch to ("numba" or "numpy")."""
    return _resolve_backend()


def lattice_means(L, lower, upper, shifts, sqp, points, backend: str | None = None):
    """Per-randomization QMC means of the transformed rectangle integrand."""
    name = backend or _resolve_backend()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _lattice_means_nb(L, lower, upper, shifts, sqp, np.int64(points))
    if name == "numpy":
        return _lattice_means_np(L, lower, upper, shifts, sqp, int(points))
    raise ValueError(f"unknown backend {name!r}")
