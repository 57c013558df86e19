"""Binomial and quasi-binomial GLMs via IRLS, with influence contributions.

Fits grouped-binomial regression or cell-means models under the logit,
identity or log link.  Fitting is plain iteratively reweighted least squares
with step-halving: an accepted step never increases the deviance, and for
the identity and log links candidate steps whose fitted probabilities leave
``[CLAMP, 1-CLAMP]`` are halved until feasible.

The per-row influence contributions are the empirical building blocks of
the joint covariance used by the model stacker: row ``n`` is

    psi_n = (X' W X)^-1 x_n w_n (p_n - mu_n) / (dmu/deta)_n

so that ``sum_n psi_n' psi_n`` is the sandwich estimate of the coefficient
covariance.  For saturated fits these rows vanish identically; the
``unit="cell"`` variant decomposes each row into its success and failure
parts (two weighted pseudo-observations per row), which keeps the
within-row binomial variation visible and stays aligned across models
fitted to the same table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import DoseResponseTable, ScaledDoses, WeightedTable, as_weighted
from .errors import (ConvergenceError, DegreesOfFreedomError, DesignError,
                     NotConvergedError, StartValueError)

CLAMP = 1e-10
MAX_HALVINGS = 50
DEVIANCE_RTOL = 1e-10
SCORE_RTOL = 1e-8

LINKS = ("logit", "identity", "log")
FAMILIES = ("binomial", "quasi-binomial")

#: effect-size label implied by each link (slope back-transformation)
EFFECT_LABELS = {"logit": "OR", "identity": "RD", "log": "RR"}


def _link_eta(mu: np.ndarray, link: str) -> np.ndarray:
    if link == "logit":
        return np.log(mu / (1.0 - mu))
    if link == "identity":
        return mu.copy()
    return np.log(mu)


def _inverse_link(eta: np.ndarray, link: str) -> np.ndarray:
    if link == "logit":
        return 1.0 / (1.0 + np.exp(-eta))
    if link == "identity":
        return eta
    return np.exp(eta)


def _dmu_deta(mu: np.ndarray, link: str) -> np.ndarray:
    if link == "logit":
        return mu * (1.0 - mu)
    if link == "identity":
        return np.ones_like(mu)
    return mu


def _deviance(prop: np.ndarray, mu: np.ndarray, m: np.ndarray) -> float:
    # 0*log(0) := 0 for boundary proportions
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(prop > 0, prop * np.log(prop / mu), 0.0)
        t2 = np.where(prop < 1, (1.0 - prop) * np.log((1.0 - prop) / (1.0 - mu)), 0.0)
    return float(2.0 * np.sum(m * (t1 + t2)))


@dataclass(frozen=True)
class GlmFit:
    """One converged (or final-iterate) marginal model.

    ``model_cov`` is the model-based coefficient covariance
    ``dispersion * (X' W X)^-1``; ``dispersion`` is fixed at 1 for the
    binomial family and is the Pearson estimate for quasi-binomial.
    ``pearson_dispersion`` is always reported when residual df allow.
    """

    link: str
    family: str
    coefficients: np.ndarray
    coefficient_labels: tuple[str, ...]
    model_cov: np.ndarray
    fitted: np.ndarray
    dispersion: float
    design: np.ndarray
    prior_weights: np.ndarray
    response: np.ndarray          # observed effective proportions per row
    converged: bool
    iterations: int
    deviance: float
    deviance_trace: tuple[float, ...]
    pearson_dispersion_value: float | None
    xtwx: np.ndarray
    doses: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.design.shape[0]

    @property
    def n_params(self) -> int:
        return self.design.shape[1]

    def coefficient_index(self, name: str) -> int:
        return self.coefficient_labels.index(name)

    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.model_cov))


@dataclass(frozen=True)
class InfluenceMatrix:
    """Per-observation influence contributions of one fit.

    ``rows`` has one row per observational unit (table row, or the
    success/failure decomposition thereof) and one column per coefficient;
    columns sum to ~0 because the score equations hold at the optimum.
    """

    rows: np.ndarray
    column_labels: tuple[str, ...]
    unit: str  # "row" or "cell"

    def column_sums(self) -> np.ndarray:
        return self.rows.sum(axis=0)


def _resolve_design(table: WeightedTable,
                    regressor: ScaledDoses | np.ndarray | str) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(regressor, str):
        if regressor != "factor":
            raise DesignError(f"unknown regressor spec {regressor!r}")
        idx = table.group_index
        k = table.distinct_doses.size
        X = np.zeros((table.n_rows, k))
        X[np.arange(table.n_rows), idx] = 1.0
        labels = tuple(f"mean@{d:g}" for d in table.distinct_doses)
        return X, labels
    values = regressor.values if isinstance(regressor, ScaledDoses) else np.asarray(regressor, dtype=float)
    if values.shape != (table.n_rows,):
        raise DesignError("regressor length does not match the table")
    X = np.column_stack([np.ones_like(values), values])
    return X, ("intercept", "slope")


def _start_values(table: WeightedTable, X: np.ndarray, labels: tuple[str, ...], link: str) -> np.ndarray:
    pooled = float(np.sum(table.successes) / np.sum(table.weights))
    pooled = min(max(pooled, CLAMP), 1.0 - CLAMP)
    if labels and labels[0] == "intercept":
        beta = np.zeros(X.shape[1])
        beta[0] = _link_eta(np.array([pooled]), link)[0]
        return beta
    # cell means: start at per-group pooled proportions
    prop = np.zeros(X.shape[1])
    wsum = np.zeros(X.shape[1])
    idx = table.group_index
    np.add.at(prop, idx, table.successes)
    np.add.at(wsum, idx, table.weights)
    grp = np.clip(prop / wsum, CLAMP, 1.0 - CLAMP)
    return _link_eta(grp, link)


def fit_glm(table: DoseResponseTable | WeightedTable,
            regressor: ScaledDoses | np.ndarray | str,
            link: str = "logit",
            family: str = "binomial",
            max_iter: int = 200) -> GlmFit:
    """Fit a binomial GLM by IRLS with step-halving.

    ``regressor`` is a :class:`ScaledDoses`, a raw value array (an intercept
    column is added), or ``"factor"`` for the cell-means parametrization.
    Raises :class:`DesignError` on rank deficiency, :class:`ConvergenceError`
    (carrying the last iterate) after ``max_iter`` iterations, and
    :class:`DegreesOfFreedomError` for a quasi-binomial fit without residual
    degrees of freedom.
    """
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}; expected one of {LINKS}")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    wt = as_weighted(table)
    X, labels = _resolve_design(wt, regressor)
    n, p = X.shape
    if n < p:
        raise DesignError(f"need at least {p} rows, got {n}")
    if np.linalg.matrix_rank(X) < p:
        raise DesignError("design matrix is rank deficient")

    m = wt.weights
    prop = wt.proportions()

    beta = _start_values(wt, X, labels, link)
    eta = X @ beta
    mu = np.clip(_inverse_link(eta, link), CLAMP, 1.0 - CLAMP)
    if link in ("identity", "log"):
        raw = eta if link == "identity" else np.exp(eta)
        if np.any(raw <= 0.0) or np.any(raw >= 1.0):
            # fall back to a logit fit mapped through the requested link
            logit_fit = fit_glm(wt, regressor, link="logit", family="binomial", max_iter=max_iter)
            start_mu = np.clip(logit_fit.fitted, CLAMP, 1.0 - CLAMP)
            eta0 = _link_eta(start_mu, link)
            beta, *_ = np.linalg.lstsq(X, eta0, rcond=None)
            eta = X @ beta
            raw = eta if link == "identity" else np.exp(eta)
            if np.any(raw <= 0.0) or np.any(raw >= 1.0):
                raise StartValueError(f"no feasible starting values for the {link} link")
            mu = np.clip(_inverse_link(eta, link), CLAMP, 1.0 - CLAMP)

    dev = _deviance(prop, mu, m)
    trace = [dev]
    score_start = X.T @ (m * (prop - mu) * _dmu_deta(mu, link) / (mu * (1.0 - mu)))
    score0 = max(float(np.max(np.abs(score_start))), 1.0)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        d = _dmu_deta(mu, link)
        var = mu * (1.0 - mu)
        w = m * d * d / var
        z = eta + (prop - mu) / d
        WX = X * w[:, None]
        xtwx = X.T @ WX
        try:
            beta_new = np.linalg.solve(xtwx, WX.T @ z)
        except np.linalg.LinAlgError as exc:
            raise DesignError(f"weighted normal equations are singular: {exc}") from None

        step = beta_new - beta
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            eta_c = X @ cand
            if link in ("identity", "log"):
                raw = eta_c if link == "identity" else np.exp(eta_c)
                if np.any(raw <= CLAMP) or np.any(raw >= 1.0 - CLAMP):
                    step *= 0.5
                    continue
            mu_c = np.clip(_inverse_link(eta_c, link), CLAMP, 1.0 - CLAMP)
            dev_c = _deviance(prop, mu_c, m)
            if dev_c <= dev * (1.0 + 1e-14) + 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # flat spot: keep the previous iterate and let the criteria decide
            dev_c, mu_c, eta_c, cand = dev, mu, eta, beta

        beta, eta, mu = cand, eta_c, mu_c
        dev_prev, dev = dev, dev_c
        trace.append(dev)

        score = X.T @ (m * (prop - mu) * _dmu_deta(mu, link) / (mu * (1.0 - mu)))
        dev_ok = abs(dev_prev - dev) <= DEVIANCE_RTOL * (abs(dev) + 0.1)
        score_ok = float(np.max(np.abs(score))) <= SCORE_RTOL * score0
        if dev_ok and score_ok:
            converged = True
            break

    d = _dmu_deta(mu, link)
    var = mu * (1.0 - mu)
    w = m * d * d / var
    xtwx = X.T @ (X * w[:, None])
    cov_unscaled = np.linalg.inv(xtwx)

    pearson = None
    if n > p:
        resid2 = m * (prop - mu) ** 2 / var
        pearson = float(np.sum(resid2) / (n - p))

    if family == "quasi-binomial":
        if pearson is None:
            raise DegreesOfFreedomError(
                "quasi-binomial dispersion needs residual degrees of freedom (N > p)")
        dispersion = pearson
    else:
        dispersion = 1.0

    fit = GlmFit(
        link=link,
        family=family,
        coefficients=beta,
        coefficient_labels=labels,
        model_cov=dispersion * cov_unscaled,
        fitted=mu,
        dispersion=dispersion,
        design=X,
        prior_weights=m,
        response=prop,
        converged=converged,
        iterations=iterations,
        deviance=dev,
        deviance_trace=tuple(trace),
        pearson_dispersion_value=pearson,
        xtwx=xtwx,
        doses=wt.doses.copy(),
    )
    if not converged:
        raise ConvergenceError(
            f"IRLS did not converge in {max_iter} iterations ({link} link)", last_fit=fit)
    return fit


def pearson_dispersion(fit: GlmFit) -> float:
    """Pearson dispersion ``X^2 / (N - p)`` of a fit.

    Reported for any family; it scales covariance and influence only under
    quasi-binomial.  Raises :class:`DegreesOfFreedomError` for saturated
    fits (``N <= p``).
    """
    if fit.n_rows <= fit.n_params:
        raise DegreesOfFreedomError("Pearson dispersion undefined: no residual degrees of freedom")
    mu = fit.fitted
    resid2 = fit.prior_weights * (fit.response - mu) ** 2 / (mu * (1.0 - mu))
    return float(np.sum(resid2) / (fit.n_rows - fit.n_params))


def _score_rows(fit: GlmFit, unit: str) -> np.ndarray:
    mu = fit.fitted
    d = _dmu_deta(mu, fit.link)
    var = mu * (1.0 - mu)
    if unit == "row":
        r = fit.prior_weights * (fit.response - mu) * d / var
        return fit.design * r[:, None]
    if unit == "cell":
        succ = fit.response * fit.prior_weights
        fail = (1.0 - fit.response) * fit.prior_weights
        rs = succ * (1.0 - mu) * d / var
        rf = fail * (0.0 - mu) * d / var
        return np.vstack([fit.design * rs[:, None], fit.design * rf[:, None]])
    raise ValueError(f"unknown influence unit {unit!r}; expected 'row' or 'cell'")


def influence_matrix(fit: GlmFit, unit: str = "row") -> InfluenceMatrix:
    """Per-observation influence contributions of the coefficient estimates.

    With ``unit="row"`` there is one row per table row; ``unit="cell"``
    splits each table row into its success and failure parts (successes
    block first, then failures, both in table order).  Under the
    quasi-binomial family rows carry the extra ``sqrt(dispersion)`` factor
    so their Gram matrix matches the dispersion-scaled covariance.
    """
    if not fit.converged:
        raise NotConvergedError("influence matrix requires a converged fit")
    U = _score_rows(fit, unit)
    psi = U @ np.linalg.inv(fit.xtwx)
    if fit.family == "quasi-binomial":
        psi = psi * np.sqrt(fit.dispersion)
    return InfluenceMatrix(rows=psi, column_labels=fit.coefficient_labels, unit=unit)


def warn_if_underdispersed(fit: GlmFit, label: str = "") -> str | None:
    """Return (and emit) a warning message when a quasi-binomial fit has phi < 1."""
    if fit.family == "quasi-binomial" and fit.dispersion < 1.0:
        msg = (f"estimated dispersion {fit.dispersion:.3f} < 1 (underdispersion)"
               f"{' for ' + label if label else ''}; proceeding")
        warnings.warn(msg, stacklevel=2)
        return msg
    return None
