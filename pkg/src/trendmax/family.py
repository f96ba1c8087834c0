"""Dose scalings, Williams-type contrasts and the marginal model family.

Every member of a family is fitted to the same observational units, so that
their per-unit score contributions can be stacked into one joint covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (
    AnalysisConfig,
    AnimalDataset,
    EndpointDataset,
    GroupedTable,
    apply_pseudo_counts,
    pseudo_increment,
)
from .errors import NumericalError, ValidationError
from .glm import DesignMatrix, FittedModel, fit_binomial
from .polyk import polyk_weights


@dataclass(frozen=True)
class DoseScaling:
    tag: str
    values: np.ndarray


@dataclass(frozen=True)
class ContrastMatrix:
    rows: np.ndarray
    labels: tuple[str, ...]


def _fmt(d: float) -> str:
    return f"{d:g}"


def make_scaling(doses: Sequence[float], tag: str, log_zero_dose: float | None = None) -> DoseScaling:
    """Dose scores for one of the three regression scalings.

    The logarithmic scaling replaces a zero control dose by ``d1**2 / d2``
    (one log-spacing below the lowest nonzero dose ``d1``) unless
    ``log_zero_dose`` gives the substitute explicitly.
    """
    d = np.asarray(doses, dtype=float)
    if d.size < 2:
        raise ValidationError("at least 2 doses are required")
    if np.any(np.diff(d) <= 0):
        raise ValidationError("doses must be strictly increasing")
    if tag == "arithmetic":
        values = d.copy()
    elif tag == "ordinal":
        values = np.arange(d.size, dtype=float)
    elif tag == "logarithmic":
        if d[0] < 0:
            raise ValidationError("negative dose on the logarithmic scale")
        x = d.copy()
        if x[0] == 0:
            if log_zero_dose is not None:
                if not 0 < log_zero_dose < x[1]:
                    raise ValidationError("zero-dose substitute must lie in (0, lowest nonzero dose)")
                x[0] = log_zero_dose
            else:
                if d.size < 3:
                    raise ValidationError(
                        "logarithmic scaling with a zero dose needs 2 nonzero doses"
                    )
                x[0] = x[1] ** 2 / x[2]
        values = np.log(x)
    else:
        raise ValidationError(f"unknown scaling {tag!r}")
    values.setflags(write=False)
    return DoseScaling(tag, values)


def williams_contrasts(group_sizes: Sequence[float], doses: Sequence[float] | None = None,
                       weighting: str = "sized") -> ContrastMatrix:
    """Control versus the pooled top-``r`` dose groups, ``r = 1..k``.

    Rows run from the highest dose alone to all doses pooled. With
    ``weighting="sized"`` the pooled mean is weighted by group size.
    """
    n = np.asarray(group_sizes, dtype=float)
    if n.size < 2:
        raise ValidationError("Williams contrasts need a control and at least one dose")
    if np.any(n <= 0):
        raise ValidationError("group sizes must be positive")
    if weighting not in ("sized", "equal"):
        raise ValidationError(f"unknown weighting {weighting!r}")
    k = n.size - 1
    doses = list(doses) if doses is not None else list(range(n.size))
    rows, labels = [], []
    for r in range(1, k + 1):
        top = np.arange(n.size - r, n.size)
        c = np.zeros(n.size)
        c[0] = -1.0
        c[top] = n[top] / n[top].sum() if weighting == "sized" else 1.0 / r
        rows.append(c)
        names = [_fmt(doses[i]) for i in top]
        pooled = names[0] if r == 1 else f"({'+'.join(names)})/{r}"
        labels.append(f"C: {_fmt(doses[0])}-{pooled}")
    return ContrastMatrix(np.array(rows), tuple(labels))


# --------------------------------------------------------------------- units

@dataclass(frozen=True)
class Units:
    """Observational units shared by all members of a family.

    ``keys`` identify units across families (animal ids, or
    ``(group, outcome)`` cells of a grouped table).
    """

    keys: tuple
    group: np.ndarray
    successes: np.ndarray
    trials: np.ndarray
    prior_weights: np.ndarray
    frequencies: np.ndarray
    doses: tuple[float, ...]

    @property
    def n_units(self) -> int:
        return len(self.keys)

    @property
    def n_groups(self) -> int:
        return len(self.doses)

    def group_sizes(self) -> np.ndarray:
        """Effective animals at risk per group (``n_i*`` under poly-k)."""
        w = self.frequencies * self.prior_weights * self.trials
        return np.bincount(self.group, weights=w, minlength=self.n_groups)

    def group_events(self) -> np.ndarray:
        w = self.frequencies * self.prior_weights * self.successes
        return np.bincount(self.group, weights=w, minlength=self.n_groups)

    def table(self) -> GroupedTable:
        return GroupedTable.from_columns(self.doses, self.group_events(), self.group_sizes())


def units_from_table(table: GroupedTable, pseudo_count: str = "none") -> Units:
    """Two cells per group (tumor / tumor-free) weighted by their counts."""
    table = apply_pseudo_counts(table, pseudo_count)
    keys, group, y, freq = [], [], [], []
    for i, g in enumerate(table.groups):
        for outcome, count in ((1, g.events), (0, g.at_risk - g.events)):
            keys.append((i, outcome))
            group.append(i)
            y.append(float(outcome))
            freq.append(count)
    n = len(keys)
    return Units(tuple(keys), np.array(group), np.array(y), np.ones(n), np.ones(n),
                 np.array(freq, dtype=float), tuple(table.doses))


def _animal_units(ids, doses, tumors, weights, pseudo_count) -> Units:
    levels = sorted(set(doses))
    index = {d: i for i, d in enumerate(levels)}
    keys = list(ids)
    group = [index[d] for d in doses]
    y = [1.0 if t else 0.0 for t in tumors]
    pw = list(weights)
    freq = [1.0] * len(keys)
    succ, fail = pseudo_increment(pseudo_count)
    if pseudo_count != "none":
        # one pseudo tumor-bearing and one tumor-free animal per group
        for i, d in enumerate(levels):
            for outcome, count in ((1, succ), (0, fail)):
                keys.append(("pseudo", d, outcome))
                group.append(i)
                y.append(float(outcome))
                pw.append(1.0)
                freq.append(count)
    n = len(keys)
    return Units(tuple(keys), np.array(group), np.array(y), np.ones(n),
                 np.array(pw, dtype=float), np.array(freq), tuple(levels))


def units_from_animals(data: AnimalDataset, k: float | None = None,
                       pseudo_count: str = "none") -> Units:
    """One unit per animal; poly-k weights enter as prior weights."""
    if k is not None and pseudo_count != "none":
        raise ValidationError("poly-k weighting and pseudo counts are mutually exclusive")
    if k is None:
        weights = np.ones(len(data.records))
    else:
        weights = polyk_weights(data, k).weights
    return _animal_units(range(len(data.records)), [r.dose for r in data.records],
                         [r.tumor for r in data.records], weights, pseudo_count)


def units_from_endpoint(data: EndpointDataset, endpoint: str, k: float | None = None,
                        pseudo_count: str = "none", t_max: float | None = None) -> Units:
    """Units for one endpoint of a wide dataset, keyed by animal id."""
    if endpoint not in data.endpoints:
        raise ValidationError(f"unknown endpoint {endpoint!r}")
    if k is not None and pseudo_count != "none":
        raise ValidationError("poly-k weighting and pseudo counts are mutually exclusive")
    tumors = data.endpoints[endpoint]
    if k is None:
        weights = np.ones(len(data.ids))
    else:
        weights = polyk_weights(data.animals(endpoint, t_max=t_max), k).weights
    return _animal_units(data.ids, data.doses, tumors, weights, pseudo_count)


# -------------------------------------------------------------------- family

@dataclass(frozen=True)
class Member:
    model: FittedModel
    functional: np.ndarray
    label: str
    kind: str  # "covariate" or "factor"


@dataclass(frozen=True)
class MarginalModelFamily:
    members: tuple[Member, ...]
    units: Units

    @property
    def shared_units(self) -> int:
        return self.units.n_units

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.members)


def _annotated_fit(label, design, units, link) -> FittedModel:
    try:
        return fit_binomial(design, units.successes, units.trials,
                            units.prior_weights, link, frequencies=units.frequencies)
    except NumericalError as exc:
        raise NumericalError(f"{label}: {exc}", last_iterate=exc.last_iterate,
                             error_estimate=exc.error_estimate) from exc


def fit_covariate_model(units: Units, scaling: DoseScaling, link: str) -> FittedModel:
    """Intercept + slope model on the dose scores.

    The scores are mapped to [0, 1] for fitting; coefficients, covariance and
    scores are reported for the original scale.
    """
    x = scaling.values[units.group]
    lo, span = float(scaling.values.min()), float(np.ptp(scaling.values))
    X = np.column_stack([np.ones(units.n_units), (x - lo) / span])
    fit = _annotated_fit(scaling.tag, DesignMatrix(X, ("(Intercept)", "std_dose")), units, link)
    T = np.array([[1.0, -lo / span], [0.0, 1.0 / span]])
    return fit.reparametrize(T, labels=("(Intercept)", scaling.tag))


def fit_factor_model(units: Units, link: str) -> FittedModel:
    """One linear-predictor parameter per dose group (no intercept)."""
    X = np.eye(units.n_groups)[units.group]
    labels = tuple(f"dose={_fmt(d)}" for d in units.doses)
    return _annotated_fit("dose factor", DesignMatrix(X, labels), units, link)


def family_from_units(units: Units, config: AnalysisConfig) -> MarginalModelFamily:
    members = []
    for tag in config.scalings:
        scaling = make_scaling(units.doses, tag, config.log_zero_dose)
        model = fit_covariate_model(units, scaling, config.link)
        members.append(Member(model, np.array([0.0, 1.0]), tag, "covariate"))
    if config.include_williams:
        model = fit_factor_model(units, config.link)
        contrasts = williams_contrasts(units.group_sizes(), units.doses, config.williams_weights)
        for row, label in zip(contrasts.rows, contrasts.labels):
            members.append(Member(model, row, label, "factor"))
    return MarginalModelFamily(tuple(members), units)


def build_family(data, config: AnalysisConfig, polyk: float | None = None) -> MarginalModelFamily:
    """Fit the marginal model family to a grouped table or to animal data.

    Grouped tables get the configured pseudo counts. Animal data with a
    poly-k exponent are fitted per animal with the poly-k weights as prior
    weights; without one they are analysed crude.
    """
    if isinstance(data, Units):
        units = data
    elif isinstance(data, GroupedTable):
        if polyk is not None:
            raise ValidationError("poly-k weighting needs animal-level data")
        units = units_from_table(data, config.pseudo_count)
    elif isinstance(data, AnimalDataset):
        pseudo = "none" if polyk is not None else config.pseudo_count
        if config.t_max is not None and config.t_max != data.t_max:
            data = AnimalDataset(data.records, t_max=config.t_max)
        units = units_from_animals(data, polyk, pseudo)
    else:
        raise ValidationError(f"cannot build a family from {type(data).__name__}")
    if "logarithmic" in config.scalings and units.n_groups < 3 and units.doses[0] == 0 \
            and config.log_zero_dose is None:
        raise ValidationError("logarithmic scaling with a zero dose needs 2 nonzero doses")
    if any(math.isclose(s, 0.0) for s in units.group_sizes()):
        raise ValidationError("a dose group has zero weight")
    return family_from_units(units, config)
