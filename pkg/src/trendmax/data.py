"""Bioassay data types, analysis configuration and CSV ingestion."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import ValidationError

LINKS = ("logit", "identity", "log")
PSEUDO_COUNTS = ("none", "add1", "add2")
SCALINGS = ("arithmetic", "ordinal", "logarithmic")
ALTERNATIVES = ("greater", "less", "two_sided")
WILLIAMS_WEIGHTS = ("sized", "equal")

# pseudo (successes, failures) added to every group
_PSEUDO = {"none": (0.0, 0.0), "add1": (0.5, 0.5), "add2": (1.0, 1.0)}


@dataclass(frozen=True)
class Group:
    dose: float
    events: float
    at_risk: float

    @property
    def proportion(self) -> float:
        return self.events / self.at_risk


@dataclass(frozen=True)
class GroupedTable:
    """A 2-by-k table: one row per dose group, control first.

    ``at_risk`` is real so poly-k adjusted sizes share the type with crude
    counts.
    """

    groups: tuple[Group, ...]

    def __post_init__(self):
        groups = tuple(self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) < 2:
            raise ValidationError("a table needs at least 2 dose groups")
        doses = [g.dose for g in groups]
        if len(set(doses)) != len(doses):
            raise ValidationError("dose values must be distinct")
        if any(b <= a for a, b in zip(doses, doses[1:])):
            raise ValidationError("doses must be strictly increasing")
        for i, g in enumerate(groups):
            if not all(math.isfinite(v) for v in (g.dose, g.events, g.at_risk)):
                raise ValidationError(f"group {i}: non-finite value")
            if g.dose < 0:
                raise ValidationError(f"group {i}: negative dose {g.dose}")
            if g.at_risk <= 0:
                raise ValidationError(f"group {i}: at-risk count must be positive")
            if not 0 <= g.events <= g.at_risk:
                raise ValidationError(
                    f"group {i}: events ({g.events:g}) must lie in [0, n={g.at_risk:g}]"
                )

    @classmethod
    def from_columns(cls, doses, events, at_risk) -> GroupedTable:
        rows = sorted(zip(doses, events, at_risk), key=lambda r: r[0])
        return cls(tuple(Group(float(d), float(y), float(n)) for d, y, n in rows))

    @property
    def doses(self) -> list[float]:
        return [g.dose for g in self.groups]

    @property
    def events(self) -> list[float]:
        return [g.events for g in self.groups]

    @property
    def at_risk(self) -> list[float]:
        return [g.at_risk for g in self.groups]

    @property
    def proportions(self) -> list[float]:
        return [g.proportion for g in self.groups]

    def __len__(self):
        return len(self.groups)


@dataclass(frozen=True)
class AnimalRecord:
    dose: float
    tumor: bool
    death_time: float


@dataclass(frozen=True)
class AnimalDataset:
    records: tuple[AnimalRecord, ...]
    t_max: float = None

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise ValidationError("animal dataset is empty")
        for i, r in enumerate(records):
            if not (math.isfinite(r.death_time) and r.death_time > 0):
                raise ValidationError(f"animal {i}: death_time must be positive")
            if not (math.isfinite(r.dose) and r.dose >= 0):
                raise ValidationError(f"animal {i}: dose must be nonnegative")
        observed = max(r.death_time for r in records)
        if self.t_max is None:
            object.__setattr__(self, "t_max", observed)
        elif self.t_max < observed:
            raise ValidationError(
                f"t_max {self.t_max:g} is below the largest death time {observed:g}"
            )
        if len(self.dose_levels) < 2:
            raise ValidationError("animal dataset needs at least 2 dose levels")

    @property
    def dose_levels(self) -> list[float]:
        return sorted({r.dose for r in self.records})

    def crude_table(self) -> GroupedTable:
        levels = self.dose_levels
        events = [sum(r.tumor for r in self.records if r.dose == d) for d in levels]
        sizes = [sum(1 for r in self.records if r.dose == d) for d in levels]
        return GroupedTable.from_columns(levels, events, sizes)


@dataclass(frozen=True)
class EndpointDataset:
    """Animals with several binary endpoints, keyed by a shared ``id``."""

    ids: tuple[str, ...]
    doses: tuple[float, ...]
    endpoints: dict
    death_times: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.ids)
        if n == 0:
            raise ValidationError("endpoint dataset is empty")
        if len(set(self.ids)) != n:
            raise ValidationError("animal ids must be unique")
        if len(set(self.doses)) < 2:
            raise ValidationError("endpoint dataset needs at least 2 dose levels")
        for name, col in self.endpoints.items():
            if len(col) != n:
                raise ValidationError(f"endpoint {name!r} has wrong length")
        if not self.endpoints:
            raise ValidationError("no endpoints selected")

    def animals(self, endpoint: str, t_max: float | None = None) -> AnimalDataset:
        if self.death_times is None:
            raise ValidationError("poly-k weighting needs a death_time column")
        col = self.endpoints[endpoint]
        return AnimalDataset(
            tuple(AnimalRecord(d, bool(y), t)
                  for d, y, t in zip(self.doses, col, self.death_times)),
            t_max=t_max,
        )


@dataclass(frozen=True)
class AnalysisConfig:
    link: str = "logit"
    pseudo_count: str = "add2"
    scalings: tuple[str, ...] = SCALINGS
    include_williams: bool = True
    alternative: str = "greater"
    polyk_exponents: tuple[float, ...] = ()
    confidence_level: float = 0.95
    mvn_abs_tol: float = 1e-4
    mvn_seed: int = 42
    williams_weights: str = "sized"
    log_zero_dose: float | None = None
    t_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scalings", tuple(self.scalings))
        object.__setattr__(self, "polyk_exponents",
                           tuple(float(k) for k in self.polyk_exponents))
        if self.link not in LINKS:
            raise ValidationError(f"unknown link {self.link!r}")
        if self.pseudo_count not in PSEUDO_COUNTS:
            raise ValidationError(f"unknown pseudo-count rule {self.pseudo_count!r}")
        unknown = set(self.scalings) - set(SCALINGS)
        if unknown:
            raise ValidationError(f"unknown scalings {sorted(unknown)}")
        if len(set(self.scalings)) != len(self.scalings):
            raise ValidationError("scalings must not repeat")
        if not self.scalings and not self.include_williams:
            raise ValidationError("the family needs at least one scaling or Williams contrasts")
        if self.alternative not in ALTERNATIVES:
            raise ValidationError(f"unknown alternative {self.alternative!r}")
        if any(not (k > 0 and math.isfinite(k)) for k in self.polyk_exponents):
            raise ValidationError("poly-k exponents must be positive")
        if not 0 < self.confidence_level < 1:
            raise ValidationError("confidence level must lie in (0, 1)")
        if not self.mvn_abs_tol > 0:
            raise ValidationError("MVN tolerance must be positive")
        if self.williams_weights not in WILLIAMS_WEIGHTS:
            raise ValidationError(f"unknown Williams weighting {self.williams_weights!r}")
        if self.log_zero_dose is not None and not self.log_zero_dose > 0:
            raise ValidationError("log-scale substitute for a zero dose must be positive")

    def with_(self, **changes) -> AnalysisConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "pseudo_count": self.pseudo_count,
            "scalings": list(self.scalings),
            "include_williams": self.include_williams,
            "alternative": self.alternative,
            "polyk_exponents": list(self.polyk_exponents),
            "confidence_level": self.confidence_level,
            "mvn_abs_tol": self.mvn_abs_tol,
            "mvn_seed": self.mvn_seed,
            "williams_weights": self.williams_weights,
            "log_zero_dose": self.log_zero_dose,
            "t_max": self.t_max,
        }


def pseudo_increment(rule: str) -> tuple[float, float]:
    """Pseudo (successes, failures) added per group under ``rule``."""
    if rule not in _PSEUDO:
        raise ValidationError(f"unknown pseudo-count rule {rule!r}")
    return _PSEUDO[rule]


def apply_pseudo_counts(table: GroupedTable, rule: str) -> GroupedTable:
    """Add pseudo observations to every group.

    ``add2`` adds one tumor and one tumor-free animal per group; ``add1``
    adds half of each.
    """
    succ, fail = pseudo_increment(rule)
    if rule == "none":
        return table
    if any(not float(n).is_integer() for n in table.at_risk):
        raise ValidationError(
            "pseudo counts apply to crude integer counts only; "
            "poly-k adjusted sizes must use pseudo_count='none'"
        )
    return GroupedTable(tuple(
        Group(g.dose, g.events + succ, g.at_risk + succ + fail) for g in table.groups
    ))


# ---------------------------------------------------------------- CSV parsing

def _rows(text) -> list[tuple[int, list[str]]]:
    if hasattr(text, "read"):
        text = text.read()
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        out.append((lineno, [c.strip() for c in row]))
    return out


def _header(rows, required: Sequence[str]) -> dict[str, int]:
    if not rows:
        raise ValidationError("input is empty (no header row)")
    _, header = rows[0]
    names = [h.lower() for h in header]
    missing = [c for c in required if c not in names]
    if missing:
        raise ValidationError(
            f"header must contain columns {','.join(required)}; missing {','.join(missing)}"
        )
    return {name: i for i, name in enumerate(names)}


def _number(cell: str, lineno: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ValidationError(f"row {lineno}: malformed number {cell!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"row {lineno}: non-finite value in column {column!r}")
    return value


def parse_grouped_csv(text) -> GroupedTable:
    """Parse ``dose,events,n`` rows into a validated table sorted by dose."""
    rows = _rows(text)
    cols = _header(rows, ("dose", "events", "n"))
    doses, events, sizes = [], [], []
    for lineno, row in rows[1:]:
        if len(row) < len(cols):
            raise ValidationError(f"row {lineno}: expected {len(cols)} fields, got {len(row)}")
        doses.append(_number(row[cols["dose"]], lineno, "dose"))
        events.append(_number(row[cols["events"]], lineno, "events"))
        sizes.append(_number(row[cols["n"]], lineno, "n"))
    if not doses:
        raise ValidationError("input has a header but no data rows")
    if len(set(doses)) != len(doses):
        raise ValidationError("duplicate dose value")
    return GroupedTable.from_columns(doses, events, sizes)


def serialize_grouped_csv(table: GroupedTable) -> str:
    lines = ["dose,events,n"]
    lines += [f"{g.dose!r},{g.events!r},{g.at_risk!r}" for g in table.groups]
    return "\n".join(lines) + "\n"


def _tumor(cell: str, lineno: int) -> bool:
    value = _number(cell, lineno, "tumor")
    if value not in (0.0, 1.0):
        raise ValidationError(f"row {lineno}: tumor must be 0 or 1, got {cell!r}")
    return value == 1.0


def parse_animal_csv(text, t_max: float | None = None) -> AnimalDataset:
    """Parse ``dose,tumor,death_time`` rows, one per animal."""
    rows = _rows(text)
    cols = _header(rows, ("dose", "tumor", "death_time"))
    records = []
    for lineno, row in rows[1:]:
        if len(row) < len(cols):
            raise ValidationError(f"row {lineno}: expected {len(cols)} fields, got {len(row)}")
        death = _number(row[cols["death_time"]], lineno, "death_time")
        if death <= 0:
            raise ValidationError(f"row {lineno}: death_time must be positive")
        records.append(AnimalRecord(
            dose=_number(row[cols["dose"]], lineno, "dose"),
            tumor=_tumor(row[cols["tumor"]], lineno),
            death_time=death,
        ))
    if not records:
        raise ValidationError("input has a header but no data rows")
    return AnimalDataset(tuple(records), t_max=t_max)


def parse_endpoint_csv(text, endpoints: Iterable[str]) -> EndpointDataset:
    """Parse a wide table ``id,dose[,death_time],<endpoint>...``."""
    endpoints = [e.strip().lower() for e in endpoints]
    rows = _rows(text)
    cols = _header(rows, ("id", "dose", *endpoints))
    has_death = "death_time" in cols
    ids, doses, deaths = [], [], []
    values = {e: [] for e in endpoints}
    for lineno, row in rows[1:]:
        if len(row) < len(cols):
            raise ValidationError(f"row {lineno}: expected {len(cols)} fields, got {len(row)}")
        ids.append(row[cols["id"]])
        doses.append(_number(row[cols["dose"]], lineno, "dose"))
        if has_death:
            death = _number(row[cols["death_time"]], lineno, "death_time")
            if death <= 0:
                raise ValidationError(f"row {lineno}: death_time must be positive")
            deaths.append(death)
        for e in endpoints:
            values[e].append(_tumor(row[cols[e]], lineno))
    if not ids:
        raise ValidationError("input has a header but no data rows")
    return EndpointDataset(
        ids=tuple(ids),
        doses=tuple(doses),
        endpoints={e: tuple(v) for e, v in values.items()},
        death_times=tuple(deaths) if has_death else None,
    )
