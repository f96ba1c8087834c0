import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trendmax.data import AnalysisConfig, GroupedTable
from trendmax.errors import NumericalError, ValidationError
from trendmax.family import (
    build_family,
    make_scaling,
    units_from_animals,
    units_from_table,
    williams_contrasts,
)
from trendmax.inference import test_family as run_test

from conftest import random_animals, random_table


class TestScalings:
    def test_ordinal_scores(self, acrylamide):
        assert make_scaling(acrylamide.doses, "ordinal").values.tolist() == [0, 1, 2, 3, 4]

    def test_log_zero_dose_substitute(self, glyphosate):
        values = make_scaling(glyphosate.doses, "logarithmic").values
        assert math.exp(values[0]) == pytest.approx(121**2 / 361, rel=1e-12)
        assert math.exp(values[0]) == pytest.approx(40.557, abs=5e-4)
        assert np.exp(values[1:]) == pytest.approx([121, 361, 1214])

    def test_explicit_log_zero_dose(self):
        values = make_scaling([0, 2, 4], "logarithmic", log_zero_dose=0.5).values
        assert values[0] == pytest.approx(math.log(0.5))

    def test_log_zero_dose_must_be_below_first_dose(self):
        with pytest.raises(ValidationError):
            make_scaling([0, 2, 4], "logarithmic", log_zero_dose=3)

    def test_arithmetic_identity(self):
        assert make_scaling([0, 1], "arithmetic").values.tolist() == [0, 1]

    def test_two_doses_with_zero_cannot_be_logged(self):
        with pytest.raises(ValidationError, match="2 nonzero"):
            make_scaling([0, 1], "logarithmic")

    def test_unknown_tag(self):
        with pytest.raises(ValidationError):
            make_scaling([0, 1], "quadratic")


class TestWilliams:
    def test_equal_sizes(self):
        c = williams_contrasts([50, 50, 50, 50], doses=[0, 37.5, 75, 150])
        expected = [[-1, 0, 0, 1], [-1, 0, 0.5, 0.5], [-1, 1 / 3, 1 / 3, 1 / 3]]
        assert c.rows == pytest.approx(np.array(expected), abs=1e-15)
        assert c.labels == ("C: 0-150", "C: 0-(75+150)/2", "C: 0-(37.5+75+150)/3")

    def test_single_dose_is_pairwise(self):
        c = williams_contrasts([20, 30])
        assert c.rows.tolist() == [[-1.0, 1.0]]

    def test_size_weighted_row(self):
        c = williams_contrasts([46, 45, 46, 47, 44])
        assert c.rows[1] == pytest.approx([-1, 0, 0, 47 / 91, 44 / 91], abs=1e-15)

    def test_equal_weighting_flag(self):
        c = williams_contrasts([46, 45, 46, 47, 44], weighting="equal")
        assert c.rows[1] == pytest.approx([-1, 0, 0, 0.5, 0.5])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.5, 500), min_size=2, max_size=9),
           st.sampled_from(["sized", "equal"]))
    def test_rows_sum_to_zero(self, sizes, weighting):
        c = williams_contrasts(sizes, weighting=weighting)
        assert np.all(np.abs(c.rows.sum(axis=1)) <= 1e-12)
        assert c.rows.shape == (len(sizes) - 1, len(sizes))


class TestFamily:
    def test_acrylamide_has_seven_members(self, acrylamide, config):
        family = build_family(acrylamide, config)
        assert family.labels == (
            "arithmetic", "ordinal", "logarithmic",
            "C: 0-0.7", "C: 0-(0.35+0.7)/2", "C: 0-(0.175+0.35+0.7)/3",
            "C: 0-(0.0875+0.175+0.35+0.7)/4",
        )
        kinds = [m.kind for m in family.members]
        assert kinds == ["covariate"] * 3 + ["factor"] * 4

    def test_glyphosate_has_six_members(self, glyphosate, config):
        assert build_family(glyphosate, config).size == 6

    def test_single_member(self, glyphosate):
        config = AnalysisConfig(scalings=("arithmetic",), include_williams=False)
        assert build_family(glyphosate, config).size == 1

    def test_williams_uses_pseudo_count_sizes(self, acrylamide, config):
        family = build_family(acrylamide, config)
        sizes = family.units.group_sizes()
        assert sizes.tolist() == [48, 47, 48, 49, 46]
        assert family.members[4].functional[-2:] == pytest.approx([49 / 95, 46 / 95])

    def test_members_share_units(self, acrylamide, config):
        family = build_family(acrylamide, config)
        n = family.units.n_units
        assert all(m.model.n_units == n for m in family.members)

    def test_saturated_factor_model_recovers_add2_proportions(self, glyphosate, config):
        family = build_family(glyphosate, config.with_(scalings=()))
        mu = 1 / (1 + np.exp(-family.members[0].model.coefficients))
        assert mu == pytest.approx([1 / 54, 3 / 54, 1 / 54, 7 / 54], abs=1e-10)

    def test_covariate_model_on_original_scale(self, glyphosate, config):
        # the fit runs on [0, 1] scores; the slope must refer to raw doses
        family = build_family(glyphosate, config.with_(include_williams=False))
        units = family.units
        for member, tag in zip(family.members, config.scalings):
            beta = member.model.coefficients
            x = make_scaling(units.doses, tag).values
            eta = beta[0] + beta[1] * x
            mu = 1 / (1 + np.exp(-eta))
            score = np.sum((units.group_events() - units.group_sizes() * mu)[:, None]
                           * np.column_stack([np.ones_like(x), x]), axis=0)
            assert score == pytest.approx([0, 0], abs=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ordinal_statistic_ignores_dose_magnitudes(self, seed):
        rng = np.random.default_rng(seed)
        table = random_table(rng)
        doses = np.cumsum(rng.uniform(0.1, 100, size=len(table)))
        moved = GroupedTable.from_columns(doses, table.events, table.at_risk)
        config = AnalysisConfig(scalings=("ordinal",), include_williams=False)
        a = run_test(build_family(table, config), config).statistics[0]
        b = run_test(build_family(moved, config), config).statistics[0]
        assert a == pytest.approx(b, abs=1e-8)

    def test_grouped_units_are_cells(self, acrylamide):
        units = units_from_table(acrylamide, "add2")
        assert units.n_units == 10
        assert units.keys[:2] == ((0, 1), (0, 0))
        assert units.frequencies[:2].tolist() == [1, 47]

    def test_animal_units_with_pseudo_counts(self, rng):
        data = random_animals(rng, n=10)
        units = units_from_animals(data, pseudo_count="add1")
        assert units.n_units == 40 + 8
        assert units.keys[-1] == ("pseudo", 100.0, 0)
        table = units.table()
        crude = data.crude_table()
        assert table.at_risk == pytest.approx([n + 1 for n in crude.at_risk])

    def test_polyk_and_pseudo_are_exclusive(self, rng):
        with pytest.raises(ValidationError):
            units_from_animals(random_animals(rng, n=5), k=3, pseudo_count="add2")

    def test_fit_failure_names_the_member(self):
        table = GroupedTable.from_columns([0, 1, 2], [0, 0, 5], [10, 10, 10])
        config = AnalysisConfig(pseudo_count="none", scalings=(), link="logit")
        with pytest.raises(NumericalError, match="dose factor"):
            build_family(table, config)

    def test_unsupported_input(self, config):
        with pytest.raises(ValidationError):
            build_family([1, 2, 3], config)
