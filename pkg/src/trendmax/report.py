"""Text and JSON renderings of a joint trend test."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .data import AnalysisConfig

SCHEMA_VERSION = 1

# effect measured on the linear-predictor scale, and its exponentiated name
_EFFECT = {
    "logit": ("log odds ratio", "odds ratio"),
    "log": ("log risk ratio", "risk ratio"),
    "identity": ("risk difference", None),
}


@dataclass(frozen=True)
class MemberRow:
    label: str
    kind: str
    estimate: float
    se: float
    stat: float
    p_raw: float
    p_adj: float
    lower: float | None
    upper: float | None
    exp_estimate: float | None = None
    exp_lower: float | None = None
    exp_upper: float | None = None


@dataclass(frozen=True)
class Report:
    config: dict
    members: list[MemberRow]
    shape: str
    critical_value: float
    alternative: str
    confidence_level: float
    link: str
    mvn_error: float
    warnings: list[str] = field(default_factory=list)
    tables: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Report:
        d = {k: v for k, v in d.items() if k != "schema"}
        d["members"] = [MemberRow(**m) for m in d["members"]]
        return cls(**d)


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _exp(x):
    return None if x is None else math.exp(x)


def build_report(inference, config: AnalysisConfig, warnings=(), tables=()) -> Report:
    rows = []
    exponentiate = inference.link in ("logit", "log")
    for i, label in enumerate(inference.labels):
        lower = _finite(inference.lower_bounds[i])
        upper = _finite(inference.upper_bounds[i])
        est = float(inference.estimates[i])
        rows.append(MemberRow(
            label=label,
            kind=inference.kinds[i],
            estimate=est,
            se=float(inference.std_errors[i]),
            stat=float(inference.statistics[i]),
            p_raw=float(inference.unadjusted_p[i]),
            p_adj=float(inference.adjusted_p[i]),
            lower=lower,
            upper=upper,
            exp_estimate=math.exp(est) if exponentiate else None,
            exp_lower=_exp(lower) if exponentiate else None,
            exp_upper=_exp(upper) if exponentiate else None,
        ))
    return Report(
        config=config.to_dict(),
        members=rows,
        shape=inference.most_likely_shape,
        critical_value=float(inference.critical_value),
        alternative=inference.alternative,
        confidence_level=float(inference.confidence_level),
        link=inference.link,
        mvn_error=float(inference.mvn_error_estimate),
        warnings=list(warnings),
        tables=[dict(t) for t in tables],
    )


def _num(x, width=9) -> str:
    return f"{'-':>{width}}" if x is None else f"{x:>{width}.4g}"


def render_text(report: Report) -> str:
    cfg = report.config
    effect, ratio = _EFFECT[report.link]
    level = f"{100 * report.confidence_level:g}%"
    lines = [
        f"Tukey-Williams trend test ({report.link} link, "
        f"pseudo counts {cfg.get('pseudo_count')}, alternative {report.alternative})",
        f"Effect: {effect}; simultaneous {level} bounds on the linear-predictor scale",
        "",
    ]
    for t in report.tables:
        lines.append(t.get("title", "table"))
        lines.append("  " + "  ".join(f"{c:>10s}" for c in t["columns"]))
        for row in t["rows"]:
            lines.append("  " + "  ".join(f"{v:>10.4g}" for v in row))
        lines.append("")

    bounds = {"greater": ("lower",), "less": ("upper",)}.get(
        report.alternative, ("lower", "upper"))
    width = max(14, max(len(r.label) for r in report.members))
    head = f"{'Model & test':<{width}}  {'stat':>6}  {'p-adj':>7}  {'p-raw':>7}  " \
           f"{'estimate':>9}  {'se':>9}"
    head += "".join(f"  {b:>9}" for b in bounds)
    if ratio:
        head += f"  {'exp(est)':>9}" + "".join(f"  {'exp(' + b[:3] + ')':>9}" for b in bounds)
    lines += [head, "-" * len(head)]
    for r in report.members:
        line = (f"{r.label:<{width}}  {r.stat:>6.2f}  {r.p_adj:>7.4f}  {r.p_raw:>7.4f}  "
                f"{r.estimate:>9.4g}  {r.se:>9.4g}")
        line += "".join(f"  {_num(getattr(r, b))}" for b in bounds)
        if ratio:
            line += f"  {_num(r.exp_estimate)}"
            line += "".join(f"  {_num(getattr(r, 'exp_' + b))}" for b in bounds)
        lines.append(line)
    lines += [
        "",
        f"Critical value ({level}, equicoordinate): {report.critical_value:.4f}",
        f"Max-test p-value: {min(r.p_adj for r in report.members):.4f}",
        f"Most likely shape: {report.shape}",
        f"MVN error estimate: {report.mvn_error:.2g}",
    ]
    lines += [f"Warning: {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"


def render_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def render_report(report: Report, fmt: str = "text") -> bytes:
    if fmt == "text":
        return render_text(report).encode()
    if fmt == "json":
        return render_json(report).encode()
    raise ValueError(f"unknown report format {fmt!r}")
