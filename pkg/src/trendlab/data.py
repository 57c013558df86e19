"""Dose-response count tables, dose metameter scalings, pseudo-count correction.

The central object is :class:`DoseResponseTable`: an ordered set of rows
``(dose, events, trials[, unit])`` with raw integer counts.  Replicated
designs (several rows sharing one dose) are allowed everywhere; the row is
the observational unit downstream.

Dose metameters
---------------
``arithmetic``   raw dose values.
``ordinal``      rank scores 0..m-1 over the m distinct sorted doses.
``logarithmic``  natural log of dose; a zero dose is replaced by d1^2/d2
                 (one log-spacing step below the smallest positive dose d1,
                 where d2 is the second smallest) before taking logs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ScalingError, TableParseError, TableValidationError

SCALINGS = ("arithmetic", "ordinal", "logarithmic")

_SCALING_ALIASES = {
    "ari": "arithmetic",
    "arithmetic": "arithmetic",
    "ord": "ordinal",
    "ordinal": "ordinal",
    "log": "logarithmic",
    "logarithmic": "logarithmic",
}


def canonical_scaling(kind: str) -> str:
    """Map a scaling name or its short alias onto the canonical name."""
    try:
        return _SCALING_ALIASES[kind.lower()]
    except KeyError:
        raise ScalingError(f"unknown dose scaling {kind!r}; expected one of "
                           f"{sorted(set(_SCALING_ALIASES))}") from None


@dataclass(frozen=True)
class DoseResponseTable:
    """Validated 2-by-k (or replicated) dose-response counts.

    Attributes:
        doses: per-row dose in study units, finite and >= 0.
        events: per-row event counts, 0 <= events <= trials.
        trials: per-row trial counts, >= 1.
        units: optional per-row unit labels for replicated designs.
    """

    doses: np.ndarray
    events: np.ndarray
    trials: np.ndarray
    units: tuple[str, ...] | None = None

    def __post_init__(self):
        doses = np.asarray(self.doses, dtype=float)
        events = np.asarray(self.events, dtype=float)
        trials = np.asarray(self.trials, dtype=float)
        if not (doses.shape == events.shape == trials.shape) or doses.ndim != 1:
            raise TableValidationError("doses, events and trials must be equal-length 1-d sequences")
        if doses.size < 2:
            raise TableValidationError("table needs at least two rows")
        if not np.all(np.isfinite(doses)) or np.any(doses < 0):
            raise TableValidationError("doses must be finite and non-negative")
        if np.any(events != np.round(events)) or np.any(trials != np.round(trials)):
            raise TableValidationError("events and trials must be integer counts")
        if np.any(events < 0):
            raise TableValidationError("events must be non-negative")
        if np.any(trials < 1):
            raise TableValidationError("trials must be at least 1")
        if np.any(events > trials):
            bad = int(np.argmax(events > trials)) + 1
            raise TableValidationError(f"events exceed trials in row {bad}")
        if np.unique(doses).size < 2:
            raise TableValidationError("table needs at least two distinct dose values")
        if self.units is not None and len(self.units) != doses.size:
            raise TableValidationError("unit labels must match the number of rows")
        object.__setattr__(self, "doses", doses)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "trials", trials)
        if self.units is not None:
            object.__setattr__(self, "units", tuple(self.units))

    @property
    def n_rows(self) -> int:
        return self.doses.size

    @property
    def distinct_doses(self) -> np.ndarray:
        """Distinct dose values in ascending order."""
        return np.unique(self.doses)

    @property
    def group_index(self) -> np.ndarray:
        """Per-row index into :attr:`distinct_doses`."""
        return np.searchsorted(self.distinct_doses, self.doses)

    def group_sizes(self) -> np.ndarray:
        """Total trials per distinct dose, ascending dose order."""
        sizes = np.zeros(self.distinct_doses.size)
        np.add.at(sizes, self.group_index, self.trials)
        return sizes

    def has_boundary_cell(self) -> bool:
        """True when any row has 0 events or all-events (proportion 0 or 1)."""
        return bool(np.any(self.events == 0) or np.any(self.events == self.trials))

    def proportions(self) -> np.ndarray:
        return self.events / self.trials


@dataclass(frozen=True)
class WeightedTable:
    """A table after pseudo-count correction: real-valued successes/failures.

    ``successes + failures`` plays the role of (effective) trials in GLM
    fitting; dose values and row order are untouched.
    """

    doses: np.ndarray
    successes: np.ndarray
    failures: np.ndarray
    units: tuple[str, ...] | None = None
    pseudo_count: float = 0.0

    @property
    def n_rows(self) -> int:
        return self.doses.size

    @property
    def weights(self) -> np.ndarray:
        """Effective trials per row."""
        return self.successes + self.failures

    @property
    def distinct_doses(self) -> np.ndarray:
        return np.unique(self.doses)

    @property
    def group_index(self) -> np.ndarray:
        return np.searchsorted(self.distinct_doses, self.doses)

    def proportions(self) -> np.ndarray:
        return self.successes / self.weights


@dataclass(frozen=True)
class ScaledDoses:
    """Per-row regressor values for one dose metameter."""

    kind: str
    values: np.ndarray
    zero_replacement: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_scaling(self.kind))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def parse_table(csv_text: str) -> DoseResponseTable:
    """Parse CSV with header ``dose,events,trials[,unit]`` into a table.

    Rejects malformed rows with the offending line number and enforces all
    :class:`DoseResponseTable` invariants.  Row order is preserved.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise TableParseError("empty input") from None
    header = [h.strip().lower() for h in header]
    if header[:3] != ["dose", "events", "trials"]:
        raise TableParseError(f"expected header dose,events,trials[,unit]; got {','.join(header)}", line=1)
    has_unit = len(header) >= 4 and header[3] == "unit"
    if len(header) > 3 and not has_unit:
        raise TableParseError(f"unexpected extra column {header[3]!r}", line=1)

    doses, events, trials, units = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        expected = 4 if has_unit else 3
        if len(row) != expected:
            raise TableParseError(f"expected {expected} fields, got {len(row)}", line=lineno)
        try:
            doses.append(float(row[0]))
            events.append(float(row[1]))
            trials.append(float(row[2]))
        except ValueError as exc:
            raise TableParseError(f"non-numeric field ({exc})", line=lineno) from None
        if has_unit:
            units.append(row[3].strip())
    if not doses:
        raise TableParseError("no data rows")
    return DoseResponseTable(np.array(doses), np.array(events), np.array(trials),
                             tuple(units) if has_unit else None)


def scale_doses(table: DoseResponseTable | WeightedTable, kind: str,
                zero_replacement: float | None = None) -> ScaledDoses:
    """Compute per-row metameter values for ``kind``.

    For logarithmic scaling a zero dose is replaced by ``d1**2 / d2`` (one
    log-spacing extrapolation below the two smallest positive doses d1 < d2)
    unless an explicit ``zero_replacement`` is given.  Requires at least two
    distinct positive doses.
    """
    kind = canonical_scaling(kind)
    doses = table.doses
    if kind == "arithmetic":
        return ScaledDoses(kind, doses.copy())
    if kind == "ordinal":
        distinct = np.unique(doses)
        return ScaledDoses(kind, np.searchsorted(distinct, doses).astype(float))
    # logarithmic
    positive = np.unique(doses[doses > 0])
    if positive.size < 2:
        raise ScalingError("logarithmic scaling needs at least two distinct positive doses")
    repl = None
    values = doses.astype(float).copy()
    if np.any(doses == 0):
        repl = float(positive[0] ** 2 / positive[1]) if zero_replacement is None else float(zero_replacement)
        if repl <= 0:
            raise ScalingError("zero-dose replacement must be positive")
        values[values == 0] = repl
    return ScaledDoses(kind, np.log(values), zero_replacement=repl)


def add_pseudo_counts(table: DoseResponseTable | WeightedTable, amount: float) -> WeightedTable:
    """Add ``amount`` pseudo events and pseudo failures to every row.

    Effective successes become ``events + amount`` and effective failures
    ``(trials - events) + amount``, so each row's effective total grows by
    ``2 * amount``.  ``amount=0`` returns an equivalent weighted view.
    """
    if amount < 0:
        raise ValueError("pseudo-count amount must be >= 0")
    if isinstance(table, WeightedTable):
        succ, fail = table.successes, table.failures
    else:
        succ, fail = table.events, table.trials - table.events
    return WeightedTable(
        doses=table.doses.copy(),
        successes=succ + amount,
        failures=fail + amount,
        units=table.units,
        pseudo_count=float(amount) + getattr(table, "pseudo_count", 0.0),
    )


def as_weighted(table: DoseResponseTable | WeightedTable) -> WeightedTable:
    """View any table as a :class:`WeightedTable` without correction."""
    if isinstance(table, WeightedTable):
        return table
    return add_pseudo_counts(table, 0.0)
