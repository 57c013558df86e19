"""Williams-type multiple contrasts over dose groups.

A Williams-type contrast compares the control group against size-weighted
pooled means of the highest j doses, for j = 1..k-1.  Applied to the
cell-means model on the link scale, these contrasts are sensitive to
plateau-shaped dose-response profiles that regression metameters miss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DoseResponseTable, WeightedTable, as_weighted
from .glm import fit_glm
from .mmm import StackEntry


@dataclass(frozen=True)
class ContrastMatrix:
    """Named contrast rows over dose groups (ascending dose order)."""

    labels: tuple[str, ...]
    coefficients: np.ndarray  # (k-1) x k

    def __post_init__(self):
        C = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", C)
        if C.ndim != 2 or C.shape[0] != len(self.labels):
            raise ValueError("labels must match contrast rows")
        sums = C.sum(axis=1)
        if np.any(np.abs(sums) > 1e-12):
            raise ValueError("contrast rows must sum to zero")
        if np.any(~((C < 0).any(axis=1) & (C > 0).any(axis=1))):
            raise ValueError("each contrast row needs a negative and a positive coefficient")

    @property
    def n_groups(self) -> int:
        return self.coefficients.shape[1]


def williams_contrasts(group_sizes, group_names=None) -> ContrastMatrix:
    """Williams-type contrast matrix for k ordered groups.

    Row j puts -1 on the control (first) group and pools the top j groups
    with weights proportional to their sizes.  ``group_names`` (defaults to
    "1".."k") label the pooled groups, e.g. "0 vs 2+4".
    """
    sizes = np.asarray(group_sizes, dtype=float)
    k = sizes.size
    if k < 2:
        raise ValueError("need at least two groups")
    if np.any(sizes < 1):
        raise ValueError("all group sizes must be >= 1")
    names = [str(i + 1) for i in range(k)] if group_names is None else [str(g) for g in group_names]
    rows, labels = [], []
    for j in range(1, k):
        c = np.zeros(k)
        c[0] = -1.0
        top = sizes[k - j:]
        c[k - j:] = top / top.sum()
        rows.append(c)
        labels.append(f"{names[0]} vs {'+'.join(names[k - j:])}")
    return ContrastMatrix(tuple(labels), np.vstack(rows))


def contrast_components(table: DoseResponseTable | WeightedTable,
                        link: str = "logit",
                        C: ContrastMatrix | None = None,
                        family: str = "binomial") -> list[StackEntry]:
    """Cell-means fit plus one stack entry per contrast row.

    Fits the dose-as-factor model under ``link`` and maps each contrast row
    c to the estimate ``c' mu_hat`` (link scale) with its influence column;
    the entries plug into the model stacker alongside regression slopes.
    """
    wt = as_weighted(table)
    if C is None:
        sizes = np.zeros(wt.distinct_doses.size)
        np.add.at(sizes, wt.group_index, wt.weights)
        names = [f"{d:g}" for d in wt.distinct_doses]
        C = williams_contrasts(sizes, group_names=names)
    if C.n_groups != wt.distinct_doses.size:
        raise ValueError(f"contrast matrix has {C.n_groups} columns for "
                         f"{wt.distinct_doses.size} dose groups")
    fit = fit_glm(wt, "factor", link=link, family=family)
    return [StackEntry(fit, row, label=label)
            for label, row in zip(C.labels, C.coefficients)]
