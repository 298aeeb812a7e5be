"""Command-line entry point: ``covadj analyze | simulate | true-rd``.

Exit codes
----------
0  success
2  bad input: unreadable or invalid CSV, missing column, bad config or arguments
3  estimation failure: the model could not be fitted or a requested
   variance method produced no estimate (the table is still written)
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from enum import Enum
from typing import Sequence

import yaml

from covadj.data import DataError, load_csv
from covadj.glm import FitConfig
from covadj.inference import InferenceSummary, analyze_all
from covadj.simulation import (
    SCENARIOS,
    Scenario,
    SimMetrics,
    load_config,
    preset_scenario,
    run_study,
    true_effect,
)
from covadj.variance import STANDARD_METHODS, HcType, VarianceMethod

EXIT_OK = 0
EXIT_DATA = 2
EXIT_ESTIMATION = 3

ANALYZE_FIELDS = ("method", "label", "rd", "se", "ci_low", "ci_high", "p_value", "fallback_steps", "error")
SIMULATE_FIELDS = (
    "method", "label", "mean_se", "coverage", "rejection_rate", "mean_rd",
    "empirical_sd_rd", "n_estimates", "nonconvergence_rate", "fallback_rate",
)


class OutputFormat(str, Enum):
    TEXT = "text"
    CSV = "csv"
    JSON = "json"


class UsageError(Exception):
    pass


def _split(values: Sequence[str] | None) -> list[str]:
    out = []
    for v in values or ():
        out.extend(part.strip() for part in v.split(",") if part.strip())
    return out


def _fixed(x, places: int = 6) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.{places}f}"
    return "" if x is None else str(x)


def _text_table(header: Sequence[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _csv_text(fields: Sequence[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# analyze


def parse_methods(names: Sequence[str] | None, extra_hc: Sequence[str] | None = None) -> list[VarianceMethod]:
    """Method list from ``M1``..``M9`` / ``family:hc`` names plus extra proposed HC types."""
    try:
        methods = [VarianceMethod.parse(n) for n in _split(names)] or list(STANDARD_METHODS.values())
        for hc in _split(extra_hc):
            m = VarianceMethod("proposed", HcType.parse(hc))
            if m not in methods:
                methods.append(m)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return methods


def render_summaries(summaries: list[InferenceSummary], fmt: OutputFormat) -> str:
    rows = [{k: s.as_dict()[k] for k in ANALYZE_FIELDS} for s in summaries]
    if fmt is OutputFormat.JSON:
        return json.dumps(rows, indent=2) + "\n"
    if fmt is OutputFormat.CSV:
        return _csv_text(ANALYZE_FIELDS, rows)
    header = ["method", "label", "rd", "se", "ci_low", "ci_high", "p_value", "fallback"]
    table = [[_fixed(r[k]) for k in ANALYZE_FIELDS[:-1]] for r in rows]
    text = _text_table(header, table)
    errors = [f"{r['method']}: {r['error']}" for r in rows if r["error"]]
    if errors:
        text += "\nerrors:\n" + "\n".join(f"  {e}" for e in errors) + "\n"
    return text


def cmd_analyze(args) -> int:
    if (args.arm_a is None) != (args.arm_b is None):
        raise UsageError("--arm-a and --arm-b must be given together")
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    arms = (args.arm_a, args.arm_b) if args.arm_a is not None else None
    methods = parse_methods(args.methods, args.hc)
    data = load_csv(args.input, args.outcome, args.treatment, _split(args.covariates), arms=arms)
    config = FitConfig.glm_compatible() if args.fit == "glm" else FitConfig()
    summaries = analyze_all(data, methods, args.alpha, config)
    _emit(render_summaries(summaries, OutputFormat(args.format)), args.output)
    return EXIT_OK if all(s.ok for s in summaries) else EXIT_ESTIMATION


# ---------------------------------------------------------------------------
# simulate


def render_metrics(metrics: SimMetrics, fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return metrics.to_json() + "\n"
    rows = [{k: getattr(m, k) for k in SIMULATE_FIELDS} for m in metrics.methods.values()]
    if fmt is OutputFormat.CSV:
        return _csv_text(SIMULATE_FIELDS, rows)
    cfg = metrics.config
    head = [
        cfg.scenario.label or "custom scenario",
        f"beta = {list(cfg.scenario.beta)}",
        f"n = {cfg.n_total}, ratio {cfg.scheme.ratio[0]}:{cfg.scheme.ratio[1]} ({cfg.scheme.variant}), "
        f"replications = {metrics.replications}, seed = {cfg.master_seed}",
        f"true RD = {metrics.true_rd:.6f}, failed replications = {metrics.failed_replications}",
        "",
    ]
    header = ["method", "label", "mean_se", "coverage", "rejection", "mean_rd", "sd_rd", "n_est"]
    table = [[_fixed(r[k]) for k in SIMULATE_FIELDS[:8]] for r in rows]
    return "\n".join(head) + "\n" + _text_table(header, table)


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
    except (OSError, yaml.YAMLError, ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    metrics = run_study(config, threads=args.threads)
    _emit(render_metrics(metrics, OutputFormat(args.format)), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# true-rd


def cmd_true_rd(args) -> int:
    if args.beta is not None:
        if not 1 <= len(args.beta) <= 7:
            raise UsageError("--beta takes between 1 and 7 coefficients")
        scenario = Scenario(tuple(args.beta))
    else:
        try:
            scenario = preset_scenario(args.scenario)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    pi0, pi1, rd = true_effect(scenario)
    result = {"pi0": pi0, "pi1": pi1, "rd": rd}
    fmt = OutputFormat(args.format)
    if fmt is OutputFormat.JSON:
        text = json.dumps(result | {"beta": list(scenario.beta)}, indent=2) + "\n"
    elif fmt is OutputFormat.CSV:
        text = _csv_text(("pi0", "pi1", "rd"), [result])
    else:
        text = "".join(f"{k:<4} {v:.6f}\n" for k, v in result.items())
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covadj",
        description="Covariate-adjusted risk differences for randomized trials with binary outcomes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    formats = [f.value for f in OutputFormat]

    a = sub.add_parser("analyze", help="estimate the risk difference from a CSV file")
    a.add_argument("input", help="CSV file with a header row")
    a.add_argument("--outcome", default="y", help="0/1 outcome column (default: y)")
    a.add_argument("--treatment", default="z", help="treatment column (default: z)")
    a.add_argument("--covariates", nargs="*", default=[], metavar="COL",
                   help="covariate columns, space or comma separated")
    a.add_argument("--methods", nargs="*", metavar="M",
                   help="M1..M9 or family[:hc], e.g. proposed:HC4 (default: M1..M9)")
    a.add_argument("--hc", nargs="*", metavar="TYPE",
                   help="also report the proposed estimator with these sandwich types")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--arm-a", help="treatment label taken as treated (multi-arm files)")
    a.add_argument("--arm-b", help="treatment label taken as control (multi-arm files)")
    a.add_argument("--fit", choices=("default", "glm"), default="default",
                   help="'glm' mimics R glm.fit convergence, accepting near-separated fits")
    a.add_argument("--format", choices=formats, default="text")
    a.add_argument("--output", help="write here instead of stdout")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run a Monte Carlo study from a YAML config")
    s.add_argument("config")
    s.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $COVADJ_THREADS or 1)")
    s.add_argument("--format", choices=formats, default="text")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("true-rd", help="population risk difference of a scenario by quadrature")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", type=int, help=f"preset number ({min(SCENARIOS)}-{max(SCENARIOS)})")
    g.add_argument("--beta", type=float, nargs="+", metavar="B",
                   help="b0 b1 b2 b3 [b4 b5 b6]; missing trailing terms are 0")
    t.add_argument("--format", choices=formats, default="text")
    t.add_argument("--output")
    t.set_defaults(func=cmd_true_rd)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, UsageError) as exc:
        print(f"covadj: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"covadj: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
