"""Trend test procedures: classical score test, max-tests, joint tests.

All max-test procedures share one pipeline: fit the requested marginal
GLMs, stack the slope (or contrast) components into a joint estimate with
an empirical correlation matrix, and calibrate per-component adjusted
p-values and simultaneous confidence bounds on the equicoordinate
multivariate-normal reference distribution.

Pseudo-count policy: when ``pseudo_count`` is None, 0.5 pseudo events and
failures per row are added for logit- and identity-link fits whenever the
table has a boundary cell (a row with 0 or all events); log-link fits never
receive an automatic correction because their fitted probabilities stay
strictly positive.  An explicit ``pseudo_count`` value overrides the policy
for every fit of the procedure.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .contrasts import contrast_components
from .data import (DoseResponseTable, add_pseudo_counts, canonical_scaling,
                   scale_doses)
from .errors import (ConvergenceError, DegenerateTableError,
                     DegreesOfFreedomError, TableValidationError)
from .glm import EFFECT_LABELS, fit_glm
from .mmm import MmmJoint, StackEntry, stack_models
from .mvn import (DEFAULT_POINTS, DEFAULT_RANDOMIZATIONS, DEFAULT_SEED,
                  DEFAULT_TOL, MvnProblem, equicoordinate_quantile, mvn_prob)

ALTERNATIVES = ("greater", "less", "two-sided")

_SHORT = {"arithmetic": "ari", "ordinal": "ord", "logarithmic": "log"}


@dataclass(frozen=True)
class CaTestResult:
    """Cochran-Armitage style linear trend score test outcome."""

    statistic: float
    p_value: float
    alternative: str
    continuity: bool


@dataclass(frozen=True)
class TrendComponent:
    """One tested component of a trend report."""

    effect_size: str          # OR / RD / RR, or a contrast label
    metameter: str            # ari / ord / log, or "treat"
    label: str
    estimate_link_scale: float
    estimate_effect_scale: float
    std_error: float
    statistic: float
    raw_p: float
    adjusted_p: float
    sci_lower_link: float
    sci_upper_link: float
    sci_lower_effect: float
    sci_upper_effect: float
    dispersion: float | None = None


@dataclass(frozen=True)
class TrendReport:
    """Joint multiplicity-adjusted trend test report."""

    procedure: str
    components: tuple[TrendComponent, ...]
    best: str
    alternative: str
    level: float
    seed: int
    N: int
    M: int
    critical_value: float
    mvn_error: float
    influence_unit: str
    warnings: tuple[str, ...]
    dispersion: float | None = None

    def component(self, label: str) -> TrendComponent:
        for comp in self.components:
            if comp.label == label:
                return comp
        raise KeyError(label)

    def adjusted_p_values(self) -> np.ndarray:
        return np.array([c.adjusted_p for c in self.components])


def _check_alternative(alternative: str) -> str:
    if alternative not in ALTERNATIVES:
        raise ValueError(f"unknown alternative {alternative!r}; expected one of {ALTERNATIVES}")
    return alternative


def ca_test(table: DoseResponseTable, alternative: str = "greater",
            continuity: bool = False) -> CaTestResult:
    """Classical linear-trend score test for proportions over doses.

    Requires one row per dose.  The optional continuity correction shrinks
    the score numerator toward zero by (max dose - min dose) / (2 (k - 1)).
    """
    _check_alternative(alternative)
    doses, events, trials = table.doses, table.events, table.trials
    if np.unique(doses).size != doses.size:
        raise TableValidationError("trend score test needs one row per dose; aggregate replicates first")
    n_total = trials.sum()
    p_bar = events.sum() / n_total
    if p_bar <= 0.0 or p_bar >= 1.0:
        raise DegenerateTableError("pooled proportion is 0 or 1; the trend statistic is undefined")
    d_bar = float(np.sum(trials * doses) / n_total)
    numer = float(np.sum(events * (doses - d_bar)))
    if continuity:
        step = (doses.max() - doses.min()) / (2.0 * (doses.size - 1))
        numer = math.copysign(max(abs(numer) - step, 0.0), numer)
    denom = math.sqrt(p_bar * (1.0 - p_bar) * float(np.sum(trials * (doses - d_bar) ** 2)))
    stat = numer / denom
    if alternative == "greater":
        p = 1.0 - ndtr(stat)
    elif alternative == "less":
        p = float(ndtr(stat))
    else:
        p = 2.0 * (1.0 - ndtr(abs(stat)))
    return CaTestResult(statistic=stat, p_value=float(p), alternative=alternative,
                        continuity=continuity)


def _auto_pseudo(table: DoseResponseTable, link: str, pseudo_count: float | None) -> float:
    if pseudo_count is not None:
        if pseudo_count < 0:
            raise ValueError("pseudo_count must be >= 0")
        return float(pseudo_count)
    if link in ("logit", "identity") and table.has_boundary_cell():
        return 0.5
    return 0.0


def _raw_p(t: float, alternative: str) -> float:
    if alternative == "greater":
        return float(1.0 - ndtr(t))
    if alternative == "less":
        return float(ndtr(t))
    return float(2.0 * (1.0 - ndtr(abs(t))))


def _adjusted_p(t: float, R: np.ndarray, alternative: str, seed: int, tol: float,
                points: int, randomizations: int) -> tuple[float, float]:
    if alternative == "greater":
        tail, bound = "upper-max", t
    elif alternative == "less":
        tail, bound = "lower-min", t
    else:
        tail, bound = "two-sided-max-abs", abs(t)
    prob, err = mvn_prob(MvnProblem(R, bound, tail, tol=tol, seed=seed, points=points,
                                    randomizations=randomizations))
    return float(min(max(1.0 - prob, 0.0), 1.0)), err


def _effect_transform(link: str):
    if link in ("logit", "log"):
        return math.exp
    return lambda x: x


@dataclass
class _ComponentMeta:
    effect_size: str
    metameter: str
    label: str
    link: str
    dispersion: float | None = None


def _build_report(procedure: str, joint: MmmJoint, meta: list[_ComponentMeta],
                  alternative: str, level: float, seed: int, tol: float,
                  points: int, randomizations: int, n_rows: int,
                  extra_warnings: list[str],
                  dispersion: float | None = None) -> TrendReport:
    meta_kept = [meta[i] for i in joint.kept]
    with _warnings.catch_warnings():
        # the near-singular repair warning, if any, already fired during stacking
        _warnings.simplefilter("ignore")
        critical = equicoordinate_quantile(
            joint.R, level,
            tail="two-sided-max-abs" if alternative == "two-sided" else "upper-max",
            seed=seed, tol=tol, points=points, randomizations=randomizations)
        adj_err = []
        comps = []
        for m, mt in enumerate(meta_kept):
            est = float(joint.estimates[m])
            se = float(joint.std_errors[m])
            t = float(joint.t[m])
            raw = _raw_p(t, alternative)
            adj, err = _adjusted_p(t, joint.R, alternative, seed, tol, points, randomizations)
            adj_err.append(err)
            if alternative == "greater":
                lo, hi = est - critical * se, math.inf
            elif alternative == "less":
                lo, hi = -math.inf, est + critical * se
            else:
                lo, hi = est - critical * se, est + critical * se
            trans = _effect_transform(mt.link)
            comps.append(TrendComponent(
                effect_size=mt.effect_size,
                metameter=mt.metameter,
                label=mt.label,
                estimate_link_scale=est,
                estimate_effect_scale=trans(est),
                std_error=se,
                statistic=t,
                raw_p=raw,
                adjusted_p=adj,
                sci_lower_link=lo,
                sci_upper_link=hi,
                sci_lower_effect=trans(lo) if math.isfinite(lo) else (0.0 if mt.link != "identity" else -math.inf),
                sci_upper_effect=trans(hi) if math.isfinite(hi) else math.inf,
                dispersion=mt.dispersion,
            ))
    best = comps[int(np.argmin([c.adjusted_p for c in comps]))].label
    return TrendReport(
        procedure=procedure,
        components=tuple(comps),
        best=best,
        alternative=alternative,
        level=level,
        seed=seed,
        N=n_rows,
        M=len(comps),
        critical_value=float(critical),
        mvn_error=float(max(adj_err)) if adj_err else 0.0,
        influence_unit=joint.influence_unit,
        warnings=tuple(extra_warnings) + joint.warnings,
        dispersion=dispersion,
    )


def _regression_entries(table: DoseResponseTable, link: str, scalings, pseudo: float,
                        family: str, zero_dose_replacement: float | None,
                        label_prefix: str = "") -> tuple[list[StackEntry], list[_ComponentMeta]]:
    wt = add_pseudo_counts(table, pseudo)
    entries, meta = [], []
    for kind in scalings:
        kind = canonical_scaling(kind)
        scaled = scale_doses(table, kind, zero_replacement=zero_dose_replacement)
        fit = fit_glm(wt, scaled, link=link, family=family)
        short = _SHORT[kind]
        label = f"{label_prefix}{short}"
        entries.append(StackEntry(fit, "slope", label=label))
        meta.append(_ComponentMeta(effect_size=EFFECT_LABELS[link], metameter=short,
                                   label=label, link=link,
                                   dispersion=fit.dispersion if family == "quasi-binomial" else None))
    return entries, meta


def _dedupe_scalings(scalings) -> list[str]:
    seen, out = set(), []
    for s in scalings:
        kind = canonical_scaling(s)
        if kind not in seen:
            seen.add(kind)
            out.append(kind)
    if not out:
        raise ValueError("need at least one dose scaling")
    return out


def tukey_trend_test(table: DoseResponseTable, link: str = "logit",
                     scalings=("ari", "ord", "log"), alternative: str = "greater",
                     level: float = 0.95, pseudo_count: float | None = None,
                     seed: int = DEFAULT_SEED, mvn_tol: float = DEFAULT_TOL,
                     points: int = DEFAULT_POINTS,
                     randomizations: int = DEFAULT_RANDOMIZATIONS,
                     zero_dose_replacement: float | None = None) -> TrendReport:
    """Max-test over dose metameters for one link function.

    Fits one regression per requested scaling, stacks the slopes, and
    reports per-component adjusted p-values and simultaneous confidence
    bounds at ``level``.
    """
    _check_alternative(alternative)
    scalings = _dedupe_scalings(scalings)
    pseudo = _auto_pseudo(table, link, pseudo_count)
    notes = []
    if pseudo > 0:
        notes.append(f"pseudo-count {pseudo:g} added per cell for the {link} link")
    entries, meta = _regression_entries(table, link, scalings, pseudo, "binomial",
                                        zero_dose_replacement)
    with _warnings.catch_warnings(record=True):
        _warnings.simplefilter("always")
        joint = stack_models(entries)
    return _build_report(f"trend[{link}]", joint, meta, alternative, level, seed,
                         mvn_tol, points, randomizations, table.n_rows, notes)


def double_max_test(table: DoseResponseTable, links=("logit", "identity", "log"),
                    scalings=("ari", "ord", "log"), alternative: str = "greater",
                    level: float = 0.95, pseudo_count: float | None = None,
                    seed: int = DEFAULT_SEED, mvn_tol: float = DEFAULT_TOL,
                    points: int = DEFAULT_POINTS,
                    randomizations: int = DEFAULT_RANDOMIZATIONS,
                    zero_dose_replacement: float | None = None) -> TrendReport:
    """Double max-test across link functions and dose metameters.

    Stacks every (link, scaling) slope into one joint estimate (up to 9
    components); the best component identifies both the effect size and the
    metameter most in the alternative.  A member fit that fails to converge
    is dropped with a warning.
    """
    _check_alternative(alternative)
    scalings = _dedupe_scalings(scalings)
    links = list(dict.fromkeys(links))
    if not links:
        raise ValueError("need at least one link")
    entries: list[StackEntry] = []
    meta: list[_ComponentMeta] = []
    notes: list[str] = []
    for link in links:
        pseudo = _auto_pseudo(table, link, pseudo_count)
        if pseudo > 0:
            notes.append(f"pseudo-count {pseudo:g} added per cell for the {link} link")
        prefix = f"{EFFECT_LABELS[link]}:"
        try:
            e, mt = _regression_entries(table, link, scalings, pseudo, "binomial",
                                        zero_dose_replacement, label_prefix=prefix)
        except ConvergenceError as exc:
            notes.append(f"dropping non-converging {link}-link fits: {exc}")
            continue
        entries.extend(e)
        meta.extend(mt)
    if not entries:
        raise ConvergenceError("no member model of the double max-test converged")
    joint = stack_models(entries)
    return _build_report("links", joint, meta, alternative, level, seed,
                         mvn_tol, points, randomizations, table.n_rows, notes)


def joint_regression_williams_test(table: DoseResponseTable, link: str = "logit",
                                   scalings=("ari", "ord", "log"),
                                   alternative: str = "greater", level: float = 0.95,
                                   pseudo_count: float | None = None,
                                   seed: int = DEFAULT_SEED, mvn_tol: float = DEFAULT_TOL,
                                   points: int = DEFAULT_POINTS,
                                   randomizations: int = DEFAULT_RANDOMIZATIONS,
                                   zero_dose_replacement: float | None = None) -> TrendReport:
    """Joint max-test over regression slopes and Williams-type contrasts.

    Dose enters both as a quantitative covariate (one slope per metameter)
    and as a qualitative factor (k-1 Williams contrasts over the cell
    means), all calibrated jointly: M = |scalings| + (k - 1) components.
    """
    _check_alternative(alternative)
    scalings = _dedupe_scalings(scalings)
    pseudo = _auto_pseudo(table, link, pseudo_count)
    notes = []
    if pseudo > 0:
        notes.append(f"pseudo-count {pseudo:g} added per cell for the {link} link")
    entries, meta = _regression_entries(table, link, scalings, pseudo, "binomial",
                                        zero_dose_replacement)
    wt = add_pseudo_counts(table, pseudo)
    for entry in contrast_components(wt, link=link):
        entries.append(entry)
        meta.append(_ComponentMeta(effect_size=entry.label, metameter="treat",
                                   label=entry.label, link=link))
    joint = stack_models(entries)
    return _build_report(f"joint[{link}]", joint, meta, alternative, level, seed,
                         mvn_tol, points, randomizations, table.n_rows, notes)


def overdispersed_trend_test(table: DoseResponseTable, scalings=("ari", "ord", "log"),
                             alternative: str = "greater", level: float = 0.95,
                             seed: int = DEFAULT_SEED, link: str = "logit",
                             mvn_tol: float = DEFAULT_TOL,
                             points: int = DEFAULT_POINTS,
                             randomizations: int = DEFAULT_RANDOMIZATIONS,
                             zero_dose_replacement: float | None = None) -> TrendReport:
    """Metameter max-test for replicated proportions under quasi-binomial.

    Each marginal fit carries its own Pearson dispersion, which scales its
    covariance and influence contributions; the report's ``dispersion`` is
    the largest marginal estimate (the one the calibration guarded
    against), with per-component values on the components.  Warns and
    proceeds when a fit is underdispersed.
    """
    _check_alternative(alternative)
    scalings = _dedupe_scalings(scalings)
    if table.n_rows <= table.distinct_doses.size:
        raise DegreesOfFreedomError(
            "quasi-binomial trend test needs replicated rows per dose "
            "(insufficient residual degrees of freedom)")
    entries, meta = _regression_entries(table, link, scalings, 0.0, "quasi-binomial",
                                        zero_dose_replacement)
    notes = []
    for entry, mt in zip(entries, meta):
        if entry.fit.dispersion < 1.0:
            msg = (f"dispersion {entry.fit.dispersion:.3f} < 1 (underdispersion) for the "
                   f"{mt.label} fit; proceeding")
            _warnings.warn(msg)
            notes.append(msg)
    joint = stack_models(entries)
    dispersion = max(e.fit.dispersion for e in entries)
    return _build_report("overdisp", joint, meta, alternative, level, seed,
                         mvn_tol, points, randomizations, table.n_rows, notes,
                         dispersion=dispersion)
