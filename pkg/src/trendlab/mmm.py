"""Joint inference across marginal models fitted to the same table.

Several GLMs fitted to one dataset yield correlated estimates.  Stacking
the per-observation influence contributions of the selected coefficients
gives an empirical estimate of that correlation: with one standardized
influence column per component, the Gram matrix of the stack is the joint
covariance estimate, and its correlation is what calibrates the max-test.

Each column is standardized so that its squared norm equals the marginal
model-based variance of the component; the test statistic
``t_m = estimate_m / std_error_m`` therefore agrees with the marginal Wald
statistic, while the between-component correlations are the empirical
influence correlations.  The raw (un-standardized) sandwich standard errors
are kept for diagnostics.

Saturated marginal fits (e.g. a cell-means model on a one-row-per-dose
table) have identically zero per-row influence.  A stack containing such a
component falls back to the success/failure decomposition of every row for
all components, which preserves alignment and restores the within-row
binomial information; components that stay degenerate even then are dropped
with a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DegenerateComponentError
from .glm import GlmFit, influence_matrix

SMALL_N_WARN = 10
_DEGENERATE_RATIO = 1e-7

Selector = int | str | np.ndarray


@dataclass(frozen=True)
class StackEntry:
    """One component of a joint stack: a fit plus a coefficient selector.

    The selector is a coefficient index, a coefficient name, or a linear
    combination vector over the fit's coefficients (used for contrasts).
    """

    fit: GlmFit
    selector: Selector
    label: str = ""

    def combination(self) -> np.ndarray:
        p = self.fit.n_params
        if isinstance(self.selector, str):
            c = np.zeros(p)
            c[self.fit.coefficient_index(self.selector)] = 1.0
            return c
        if isinstance(self.selector, (int, np.integer)):
            c = np.zeros(p)
            c[int(self.selector)] = 1.0
            return c
        c = np.asarray(self.selector, dtype=float)
        if c.shape != (p,):
            raise AlignmentError(f"selector length {c.size} does not match {p} coefficients")
        return c


@dataclass(frozen=True)
class MmmJoint:
    """Stacked estimates with joint covariance, correlation and statistics.

    ``V`` is the standardized influence Gram matrix: its diagonal equals the
    squared (model-based) standard errors, its correlation ``R`` is the
    empirical influence correlation.  ``t`` are the component Wald
    statistics; ``sandwich_std_errors`` the un-standardized alternatives.
    """

    labels: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    V: np.ndarray
    R: np.ndarray
    N: int
    t: np.ndarray
    sandwich_std_errors: np.ndarray
    influence_unit: str
    warnings: tuple[str, ...]
    kept: tuple[int, ...]

    @property
    def n_components(self) -> int:
        return self.estimates.size


def stack_models(entries: list[StackEntry | tuple], influence_unit: str = "auto") -> MmmJoint:
    """Stack the selected coefficients of several fits into a joint estimate.

    All fits must come from the same table (equal row count and order).
    ``influence_unit`` is "row" (one influence row per table row), "cell"
    (success/failure decomposition) or "auto" (row, falling back to cell
    when any component's per-row influence is degenerate).
    """
    entries = [e if isinstance(e, StackEntry) else StackEntry(*e) for e in entries]
    if not entries:
        raise ValueError("nothing to stack")
    n_rows = {e.fit.n_rows for e in entries}
    if len(n_rows) != 1:
        raise AlignmentError(f"fits disagree on the number of rows: {sorted(n_rows)}")
    if influence_unit not in ("auto", "row", "cell"):
        raise ValueError("influence_unit must be 'auto', 'row' or 'cell'")

    messages: list[str] = []
    labels = tuple(e.label or f"component {i + 1}" for i, e in enumerate(entries))
    combos = [e.combination() for e in entries]
    estimates = np.array([c @ e.fit.coefficients for c, e in zip(combos, entries)])
    model_var = np.array([c @ e.fit.model_cov @ c for c, e in zip(combos, entries)])
    if np.any(model_var <= 0):
        raise DegenerateComponentError("a component has non-positive model variance")
    model_se = np.sqrt(model_var)

    def build_columns(unit: str) -> np.ndarray:
        mats = [influence_matrix(e.fit, unit=unit).rows for e in entries]
        return np.column_stack([m @ c for m, c in zip(mats, combos)])

    unit = "row" if influence_unit == "auto" else influence_unit
    cols = build_columns(unit)
    sand_var = np.sum(cols * cols, axis=0)
    degenerate = sand_var < (_DEGENERATE_RATIO * model_se) ** 2
    if influence_unit == "auto" and np.any(degenerate):
        unit = "cell"
        cols = build_columns(unit)
        sand_var = np.sum(cols * cols, axis=0)
        degenerate = sand_var < (_DEGENERATE_RATIO * model_se) ** 2
        messages.append(
            "per-row influence is degenerate for a saturated component; "
            "using the success/failure decomposition for the whole stack")

    kept = np.flatnonzero(~degenerate)
    if kept.size == 0:
        raise DegenerateComponentError("all stacked components have zero influence variance")
    if kept.size < len(entries):
        dropped = [labels[i] for i in np.flatnonzero(degenerate)]
        msg = f"dropping degenerate component(s) with zero influence variance: {', '.join(dropped)}"
        warnings.warn(msg)
        messages.append(msg)

    cols = cols[:, kept]
    sand_se = np.sqrt(sand_var[kept])
    model_se_k = model_se[kept]
    estimates_k = estimates[kept]
    labels_k = tuple(labels[i] for i in kept)

    # standardize columns to the marginal model-based scale
    cols = cols * (model_se_k / sand_se)[None, :]
    V = cols.T @ cols
    dg = np.sqrt(np.diag(V))
    R = V / np.outer(dg, dg)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    t = estimates_k / model_se_k

    N = int(next(iter(n_rows)))
    if N < SMALL_N_WARN:
        msg = (f"only {N} influence rows at table level; the empirical correlation "
               "estimate is coarse")
        warnings.warn(msg)
        messages.append(msg)

    return MmmJoint(
        labels=labels_k,
        estimates=estimates_k,
        std_errors=model_se_k,
        V=V,
        R=R,
        N=cols.shape[0],
        t=t,
        sandwich_std_errors=sand_se,
        influence_unit=unit,
        warnings=tuple(messages),
        kept=tuple(int(i) for i in kept),
    )
