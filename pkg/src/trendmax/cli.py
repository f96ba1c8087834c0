"""Command-line front end.

    trendmax trend --input table.csv [options]
    trendmax polyk --input animals.csv --k 3,6 [options]
    trendmax multi --input wide.csv --endpoints t24,t25 [--k 3] [options]

Exit status: 0 success, 2 invalid input or options, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .data import (
    SCALINGS,
    AnalysisConfig,
    apply_pseudo_counts,
    parse_animal_csv,
    parse_endpoint_csv,
    parse_grouped_csv,
)
from .errors import NumericalError, ValidationError
from .family import build_family
from .inference import test_family
from .multi import CombinedFamily, conservatism_warning, endpoint_families, polyk_families
from .polyk import polyk_weights
from .report import build_report, render_report

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
DEFAULT_SEED = 42
SEED_ENV = "TRENDMAX_SEED"

_SCALING_ALIASES = {"ari": "arithmetic", "ord": "ordinal", "log": "logarithmic"}
_SCALING_ALIASES.update({s: s for s in SCALINGS})


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _scalings(text: str) -> tuple[str, ...]:
    if text.strip().lower() in ("", "none"):
        return ()
    out = []
    for part in text.split(","):
        key = part.strip().lower()
        if key not in _SCALING_ALIASES:
            raise argparse.ArgumentTypeError(f"unknown scaling {part!r}")
        out.append(_SCALING_ALIASES[key])
    return tuple(out)


def _exponents(text: str) -> tuple[float, ...]:
    try:
        ks = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid exponent list {text!r}") from None
    if not ks:
        raise argparse.ArgumentTypeError("empty exponent list")
    return ks


def _names(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    if not names:
        raise argparse.ArgumentTypeError("empty endpoint list")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, help="CSV file, or - for stdin")
    common.add_argument("--link", choices=("logit", "identity", "log"))
    common.add_argument("--pseudo", choices=("none", "add1", "add2"))
    common.add_argument("--scalings", type=_scalings,
                        help="comma list of ari,ord,log (default: all three)")
    common.add_argument("--williams", action=argparse.BooleanOptionalAction, default=True,
                        help="include Williams-type contrasts (default: on)")
    common.add_argument("--williams-weights", choices=("sized", "equal"), default="sized")
    common.add_argument("--alternative", choices=("greater", "less", "two-sided"),
                        default="greater")
    common.add_argument("--level", type=float, default=0.95)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--seed", type=int, help=f"MVN seed (default: ${SEED_ENV} or 42)")
    common.add_argument("--mvn-tol", type=float, default=1e-4)
    common.add_argument("--log-zero-dose", type=float,
                        help="value standing in for dose 0 on the log scale")
    common.add_argument("--output", help="write the report here instead of stdout")

    parser = _Parser(prog="trendmax", description="Tukey-Williams maximum trend test "
                     "for tumor incidences")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("trend", parents=[common], help="crude 2-by-k table (dose,events,n)")
    p = sub.add_parser("polyk", parents=[common],
                       help="poly-k adjusted test on animal data (dose,tumor,death_time)")
    p.add_argument("--k", type=_exponents, default=(3.0,),
                   help="poly-k exponent(s), comma separated; several are tested jointly")
    p.add_argument("--t-max", type=float, help="study length (default: last death time)")
    m = sub.add_parser("multi", parents=[common],
                       help="joint test over several endpoints (id,dose[,death_time],...)")
    m.add_argument("--endpoints", type=_names, required=True)
    m.add_argument("--k", type=_exponents, help="poly-k exponent(s) (default: crude)")
    m.add_argument("--t-max", type=float)
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _config(args, polyk: bool) -> AnalysisConfig:
    link = args.link or ("identity" if polyk else "logit")
    pseudo = args.pseudo or ("none" if polyk else "add2")
    if polyk and pseudo != "none":
        raise ValidationError("poly-k weighting and pseudo counts are mutually exclusive")
    return AnalysisConfig(
        link=link,
        pseudo_count=pseudo,
        scalings=SCALINGS if args.scalings is None else args.scalings,
        include_williams=args.williams,
        alternative=args.alternative.replace("-", "_"),
        polyk_exponents=getattr(args, "k", None) or (),
        confidence_level=args.level,
        mvn_abs_tol=args.mvn_tol,
        mvn_seed=_seed(args),
        williams_weights=args.williams_weights,
        log_zero_dose=args.log_zero_dose,
        t_max=getattr(args, "t_max", None),
    )


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _grouped_table(title, table) -> dict:
    return {
        "title": title,
        "columns": ["dose", "events", "n", "rate"],
        "rows": [[g.dose, g.events, g.at_risk, g.proportion] for g in table.groups],
    }


def _polyk_table(data, k) -> dict:
    pw = polyk_weights(data, k)
    rows = [[d, y, n, ns, 100 * y / n, 100 * y / ns]
            for d, y, n, ns in zip(pw.doses, pw.events, pw.crude_sizes, pw.adjusted_sizes)]
    return {"title": f"poly-{k:g} adjusted sizes",
            "columns": ["dose", "events", "n", "n*", "crude %", "adjusted %"],
            "rows": rows}


def run(args) -> bytes:
    text = _read(args.input)
    tables = []
    if args.command == "trend":
        config = _config(args, polyk=False)
        table = parse_grouped_csv(text)
        family = build_family(table, config)
        tables.append(_grouped_table(f"data ({config.pseudo_count})",
                                     apply_pseudo_counts(table, config.pseudo_count)))
    elif args.command == "polyk":
        config = _config(args, polyk=True)
        data = parse_animal_csv(text, t_max=config.t_max)
        family = polyk_families(data, config.polyk_exponents, config)
        tables += [_polyk_table(data, k) for k in config.polyk_exponents]
    else:
        config = _config(args, polyk=bool(args.k))
        data = parse_endpoint_csv(text, args.endpoints)
        family = endpoint_families(data, [e.lower() for e in args.endpoints], config,
                                   polyk=config.polyk_exponents)
    inference = test_family(family, config)
    warnings = []
    if isinstance(family, CombinedFamily):
        w = conservatism_warning(inference)
        if w:
            warnings.append(w)
    report = build_report(inference, config, warnings=warnings, tables=tables)
    return render_report(report, args.format)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out = run(args)
    except ValidationError as exc:
        print(f"trendmax: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        msg = f"trendmax: numerical failure: {exc}"
        if exc.error_estimate is not None:
            msg += f" (error estimate {exc.error_estimate:.3g})"
        print(msg, file=sys.stderr)
        return EXIT_NUMERICAL
    if args.output:
        Path(args.output).write_bytes(out)
    else:
        sys.stdout.buffer.write(out)
        sys.stdout.flush()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
