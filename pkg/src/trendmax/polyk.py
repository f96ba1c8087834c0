"""Poly-k mortality adjustment.

A tumor-free animal that died at time ``t`` counts as ``(t / t_max) ** k``
of an animal at risk; tumor-bearing animals count fully.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnimalDataset, GroupedTable
from .errors import ValidationError


@dataclass(frozen=True)
class PolykWeights:
    exponent: float
    weights: np.ndarray
    doses: tuple[float, ...]
    events: tuple[float, ...]
    crude_sizes: tuple[float, ...]
    adjusted_sizes: tuple[float, ...]

    @property
    def adjusted_rates(self) -> tuple[float, ...]:
        return tuple(y / n for y, n in zip(self.events, self.adjusted_sizes))

    @property
    def crude_rates(self) -> tuple[float, ...]:
        return tuple(y / n for y, n in zip(self.events, self.crude_sizes))


def polyk_weights(data: AnimalDataset, k: float) -> PolykWeights:
    """Animal-level poly-k weights and the per-dose adjusted sizes ``n_i*``."""
    if not k > 0:
        raise ValidationError("poly-k exponent must be positive")
    t = np.array([r.death_time for r in data.records])
    tumor = np.array([r.tumor for r in data.records], dtype=bool)
    dose = np.array([r.dose for r in data.records])
    w = np.where(tumor, 1.0, (t / data.t_max) ** k)
    levels = data.dose_levels
    events, crude, adjusted = [], [], []
    for d in levels:
        sel = dose == d
        events.append(float(tumor[sel].sum()))
        crude.append(float(sel.sum()))
        adjusted.append(float(w[sel].sum()))
    w.setflags(write=False)
    return PolykWeights(float(k), w, tuple(levels), tuple(events),
                        tuple(crude), tuple(adjusted))


def adjusted_table(data: AnimalDataset, k: float) -> GroupedTable:
    """Grouped table with tumor counts and poly-k adjusted sizes (reporting only)."""
    pw = polyk_weights(data, k)
    for d, n in zip(pw.doses, pw.adjusted_sizes):
        if not n > 0:
            raise ValidationError(f"dose {d:g}: adjusted sample size is zero")
    return GroupedTable.from_columns(pw.doses, pw.events, pw.adjusted_sizes)
