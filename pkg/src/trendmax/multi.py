"""Joint max-tests across several marginal model families.

Families fitted to the same animals (several tumor sites, or several poly-k
exponents) are stacked into one family; the cross-block covariance then comes
from the same per-unit score products as within a block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import AnalysisConfig, AnimalDataset, EndpointDataset
from .errors import ValidationError
from .family import (
    MarginalModelFamily,
    Member,
    Units,
    family_from_units,
    units_from_animals,
    units_from_endpoint,
)

# combined min adjusted p above this multiple of the smallest raw p
CONSERVATISM_RATIO = 50.0
CONSERVATISM_WARNING = "low-correlation combination, interpret with care"


@dataclass(frozen=True)
class CombinedFamily:
    blocks: tuple[tuple[str, MarginalModelFamily], ...]

    @property
    def units(self) -> Units:
        return self.blocks[0][1].units

    @property
    def members(self) -> tuple[Member, ...]:
        out = []
        for label, fam in self.blocks:
            for m in fam.members:
                out.append(Member(m.model, m.functional, f"{label}: {m.label}", m.kind))
        return tuple(out)

    @property
    def size(self) -> int:
        return sum(fam.size for _, fam in self.blocks)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.members)

    def block_slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for label, fam in self.blocks:
            out[label] = slice(start, start + fam.size)
            start += fam.size
        return out


def combine(families: Sequence[MarginalModelFamily], labels: Sequence[str]) -> CombinedFamily:
    """Stack families that share their observational units.

    Raises:
        ValidationError: fewer than two families, label count mismatch,
            repeated labels, or units that differ in number, identity or
            frequency.
    """
    families, labels = list(families), [str(x) for x in labels]
    if len(families) < 2:
        raise ValidationError("combine needs at least 2 families")
    if len(families) != len(labels):
        raise ValidationError("one label per family is required")
    if len(set(labels)) != len(labels):
        raise ValidationError("block labels must be distinct")
    ref = families[0].units
    for label, fam in zip(labels[1:], families[1:]):
        u = fam.units
        if u.n_units != ref.n_units:
            raise ValidationError(
                f"block {label!r} has {u.n_units} units, block {labels[0]!r} has {ref.n_units}"
            )
        if u.keys != ref.keys:
            raise ValidationError(f"block {label!r} is not aligned unit by unit")
        if not np.array_equal(u.frequencies, ref.frequencies):
            raise ValidationError(f"block {label!r} has different unit frequencies")
    return CombinedFamily(tuple(zip(labels, families)))


def conservatism_warning(inference) -> str | None:
    """Flag a combined test whose adjustment costs far more than usual."""
    if inference.max_test_p > CONSERVATISM_RATIO * float(np.min(inference.unadjusted_p)):
        return CONSERVATISM_WARNING
    return None


def endpoint_families(data: EndpointDataset, endpoints: Sequence[str], config: AnalysisConfig,
                      polyk: Sequence[float] = ()) -> CombinedFamily:
    """One family per endpoint (and per poly-k exponent, if any), combined."""
    if not endpoints:
        raise ValidationError("no endpoints selected")
    families, labels = [], []
    for ep in endpoints:
        if polyk:
            for k in polyk:
                u = units_from_endpoint(data, ep, k=k, t_max=config.t_max)
                families.append(family_from_units(u, config))
                labels.append(f"{ep} k={k:g}")
        else:
            u = units_from_endpoint(data, ep, pseudo_count=config.pseudo_count)
            families.append(family_from_units(u, config))
            labels.append(ep)
    if len(families) == 1:
        raise ValidationError("a joint test needs at least 2 endpoint families")
    return combine(families, labels)


def polyk_families(data: AnimalDataset, exponents: Sequence[float],
                   config: AnalysisConfig) -> CombinedFamily | MarginalModelFamily:
    """Poly-k families for several exponents, combined when more than one."""
    if not exponents:
        raise ValidationError("at least one poly-k exponent is required")
    if config.t_max is not None and config.t_max != data.t_max:
        data = AnimalDataset(data.records, t_max=config.t_max)
    fams = [family_from_units(units_from_animals(data, k), config) for k in exponents]
    if len(fams) == 1:
        return fams[0]
    return combine(fams, [f"k={k:g}" for k in exponents])
