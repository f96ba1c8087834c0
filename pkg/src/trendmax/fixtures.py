"""Published example tables shipped with the package."""
from __future__ import annotations

from importlib import resources

from .data import GroupedTable, _rows, parse_grouped_csv


def _text(name: str) -> str:
    return resources.files("trendmax").joinpath("datasets", name).read_text()


def fixture_path(name: str):
    return resources.files("trendmax").joinpath("datasets", f"{name}.csv")


def acrylamide() -> GroupedTable:
    """Squamous cell papilloma in male mice, five acrylamide concentrations."""
    return parse_grouped_csv(_text("acrylamide.csv"))


def glyphosate() -> GroupedTable:
    """Hepatocellular adenoma in male rats, four glyphosate doses."""
    return parse_grouped_csv(_text("glyphosate.csv"))


def romosozumab() -> dict[tuple[str, str], GroupedTable]:
    """Tables keyed by ``(sex, tumor)``."""
    rows = _rows(_text("romosozumab.csv"))
    header = rows[0][1]
    cols = {}
    for _, row in rows[1:]:
        rec = dict(zip(header, row))
        cols.setdefault((rec["sex"], rec["tumor"]), []).append(
            (float(rec["dose"]), float(rec["events"]), float(rec["n"])))
    return {key: GroupedTable.from_columns(*zip(*vals)) for key, vals in cols.items()}
