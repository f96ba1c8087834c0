import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendmax.data import (
    AnalysisConfig,
    GroupedTable,
    apply_pseudo_counts,
    parse_animal_csv,
    parse_endpoint_csv,
    parse_grouped_csv,
    serialize_grouped_csv,
)
from trendmax.errors import ValidationError


def test_parse_acrylamide_layout():
    t = parse_grouped_csv("dose,events,n\n0,0,46\n0.0875,2,45\n0.175,2,46\n0.35,6,47\n0.70,6,44\n")
    assert t.doses == [0, 0.0875, 0.175, 0.35, 0.7]
    assert t.events == [0, 2, 2, 6, 6]
    assert t.at_risk == [46, 45, 46, 47, 44]


def test_parse_sorts_by_dose_and_skips_comments():
    t = parse_grouped_csv("# note\ndose,events,n\n1214,6,52\n0,0,52\n\n361,0,52\n121,2,52\n")
    assert t.doses == [0, 121, 361, 1214]
    assert t.events == [0, 2, 0, 6]


@pytest.mark.parametrize("text, fragment", [
    ("dose,events,n\n0,5,10\n", "at least 2"),
    ("dose,events,n\n0,1,10\n0,2,10\n", "duplicate dose"),
    ("dose,events,n\n0,11,10\n1,2,10\n", "events"),
    ("dose,events,n\n0,1,10\n1,x,10\n", "row 3"),
    ("", "empty"),
    ("dose,events,n\n", "no data rows"),
    ("dose,count,n\n0,1,10\n", "missing events"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_grouped_csv(text)


tables = st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.lists(st.floats(0, 1e4, allow_nan=False), min_size=k, max_size=k, unique=True),
    st.lists(st.integers(1, 200), min_size=k, max_size=k),
    st.lists(st.floats(0, 1), min_size=k, max_size=k),
)).map(lambda t: GroupedTable.from_columns(
    t[0], [round(f * n) for f, n in zip(t[2], t[1])], t[1]))


@given(tables)
@settings(max_examples=100, deadline=None)
def test_csv_round_trip(table):
    assert parse_grouped_csv(serialize_grouped_csv(table)) == table


@given(tables, st.sampled_from(["none", "add1", "add2"]))
@settings(max_examples=100, deadline=None)
def test_pseudo_counts_shrink_towards_half(table, rule):
    out = apply_pseudo_counts(table, rule)
    assert out.doses == table.doses
    for g, h in zip(table.groups, out.groups):
        if rule == "none":
            assert h == g
        elif g.events == 0:
            assert h.proportion > g.proportion
        elif g.events == g.at_risk:
            assert h.proportion < g.proportion


def test_pseudo_count_examples():
    t = GroupedTable.from_columns([0, 1], [0, 6], [46, 44])
    g = apply_pseudo_counts(t, "add2").groups[0]
    assert (g.events, g.at_risk) == (1, 48)
    assert apply_pseudo_counts(t, "none") == t
    t = GroupedTable.from_columns([0, 1], [0, 1], [52, 52])
    g = apply_pseudo_counts(t, "add1").groups[0]
    assert (g.events, g.at_risk) == (0.5, 53)
    assert g.proportion == 0.5 / 53


def test_pseudo_counts_reject_adjusted_sizes():
    t = GroupedTable.from_columns([0, 1], [1, 2], [41.4, 40.3])
    with pytest.raises(ValidationError, match="integer counts only"):
        apply_pseudo_counts(t, "add2")


def test_parse_animals():
    d = parse_animal_csv("dose,tumor,death_time\n0,0,730\n37,1,365\n")
    assert d.t_max == 730
    assert [r.tumor for r in d.records] == [False, True]


@pytest.mark.parametrize("body, fragment", [
    ("0,2,500\n37,1,365\n", "tumor must be 0 or 1"),
    ("", "no data rows"),
    ("0,0,0\n37,1,365\n", "death_time"),
    ("0,0,100\n0,1,365\n", "2 dose levels"),
])
def test_parse_animal_errors(body, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_animal_csv("dose,tumor,death_time\n" + body)


def test_t_max_override_must_cover_deaths():
    text = "dose,tumor,death_time\n0,0,700\n37,1,365\n"
    assert parse_animal_csv(text, t_max=730).t_max == 730
    with pytest.raises(ValidationError, match="t_max"):
        parse_animal_csv(text, t_max=600)


def test_parse_endpoints():
    text = "id,dose,death_time,a,b\nx1,0,100,0,1\nx2,0,90,1,0\nx3,5,100,1,1\n"
    d = parse_endpoint_csv(text, ["a", "b"])
    assert d.ids == ("x1", "x2", "x3")
    assert d.endpoints["b"] == (True, False, True)
    assert d.animals("a").t_max == 100
    with pytest.raises(ValidationError, match="unique"):
        parse_endpoint_csv("id,dose,a\nx,0,1\nx,1,0\n", ["a"])
    with pytest.raises(ValidationError, match="missing c"):
        parse_endpoint_csv(text, ["a", "c"])


@pytest.mark.parametrize("kwargs", [
    {"link": "probit"},
    {"pseudo_count": "add3"},
    {"scalings": ("quadratic",)},
    {"scalings": (), "include_williams": False},
    {"alternative": "both"},
    {"polyk_exponents": (0,)},
    {"confidence_level": 1.0},
    {"mvn_abs_tol": 0},
    {"williams_weights": "harmonic"},
])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        AnalysisConfig(**kwargs)


def test_config_defaults_and_echo():
    c = AnalysisConfig()
    assert (c.link, c.pseudo_count, c.include_williams, c.alternative) == \
        ("logit", "add2", True, "greater")
    assert c.scalings == ("arithmetic", "ordinal", "logarithmic")
    assert c.with_(link="log").to_dict()["link"] == "log"
