"""Command-line interface: ``kcag generate|paths|recommend|whatif|validate``.

Exit status is 0 on success, 2 when goals are missing or not derivable and
1 on errors.  ``KCAG_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import analysis, export
from .domain import GoalSpec, load_organization
from .errors import KcagError
from .graph import PhaseOrder
from .inference import DEFAULT_FACT_LIMIT
from .pipeline import GenerationResult, generate
from .rules import builtin_ruleset, load_ruleset, validate_ruleset

log = logging.getLogger("kcag")

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTIC = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    org_path: Path | None
    ruleset_path: Path | None = None
    output_format: str = "text"
    phase_order: PhaseOrder = PhaseOrder.MONOTONE
    path_limit: int = analysis.DEFAULT_PATH_LIMIT
    fact_limit: int = DEFAULT_FACT_LIMIT
    applied: tuple[str, ...] = ()
    goals: tuple[GoalSpec, ...] = ()
    out: Path | None = None
    dump_derivation: Path | None = None

    def __post_init__(self):
        if self.path_limit <= 0 or self.fact_limit <= 0:
            raise ValueError("limits must be strictly positive")


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _id_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kcag", description="Kill chain attack graph generator")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--org", type=Path, required=True, help="organization description (YAML)")
    common.add_argument("--ruleset", type=Path, help="rule file (default: built-in ruleset)")
    common.add_argument("--goal", action="append", default=[], metavar="PROPERTY:CATEGORY:ASSET",
                        help="attack goal, repeatable; overrides goals in the organization file")
    common.add_argument("--phase-order", choices=["monotone", "forbidden-pairs"], default="monotone")
    common.add_argument("--path-limit", "--limit", dest="path_limit", type=_positive,
                        default=analysis.DEFAULT_PATH_LIMIT)
    common.add_argument("--fact-limit", type=_positive, default=DEFAULT_FACT_LIMIT)
    common.add_argument("--apply", action="append", type=_id_list, default=[], metavar="ID[,ID...]",
                        help="treat these countermeasures as applied")
    common.add_argument("--out", type=Path, help="write output here instead of stdout")
    common.add_argument("--dump-derivation", type=Path, metavar="PATH",
                        help="write the full derivation graph as JSON (debugging)")

    g = sub.add_parser("generate", parents=[common], help="build the KCAG")
    g.add_argument("--format", choices=["dot", "json"], default="dot")
    for name, text in (("paths", "enumerate attack paths and strategic techniques"),
                       ("recommend", "recommend countermeasures destroying all paths"),
                       ("whatif", "re-run with countermeasures applied")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--format", choices=["text", "json"], default="text")

    v = sub.add_parser("validate", help="check a rule file against the asset-type and phase constraints")
    v.add_argument("--ruleset", type=Path, help="rule file (default: built-in ruleset)")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        org_path=args.org, ruleset_path=args.ruleset, output_format=args.format,
        phase_order=PhaseOrder.parse(args.phase_order), path_limit=args.path_limit,
        fact_limit=args.fact_limit, applied=tuple(i for group in args.apply for i in group),
        goals=tuple(GoalSpec.parse(g) for g in args.goal), out=args.out,
        dump_derivation=args.dump_derivation)


def _emit(config: RunConfig, text: str) -> None:
    if config.out is None:
        sys.stdout.write(text)
    else:
        config.out.write_text(text, encoding="utf-8")


def _run(config: RunConfig) -> tuple[GenerationResult, object, object]:
    org = load_organization(config.org_path)
    if config.goals:
        org = org.with_goals(config.goals)
    if config.applied:
        org = org.with_applied(config.applied)
    ruleset = load_ruleset(config.ruleset_path) if config.ruleset_path else builtin_ruleset()
    result = generate(org, ruleset, phase_order=config.phase_order, fact_limit=config.fact_limit)
    if config.dump_derivation is not None:
        config.dump_derivation.write_text(json.dumps(result.derivation.to_dict(ruleset), indent=2) + "\n",
                                          encoding="utf-8")
    for d in result.diagnostics:
        print(f"kcag: {d}", file=sys.stderr)
    return result, org, ruleset


def _paths(config: RunConfig, result: GenerationResult) -> analysis.PathEnumeration:
    paths = analysis.enumerate_paths(result.kcag, config.path_limit)
    if paths.truncated:
        print(f"kcag: warning: {paths.limit_hit}", file=sys.stderr)
    return paths


def cmd_generate(config: RunConfig) -> int:
    result, _, _ = _run(config)
    if config.output_format == "json":
        _emit(config, export.to_json(result.kcag))
    else:
        _emit(config, export.to_dot(result.kcag))
    return EXIT_DIAGNOSTIC if result.diagnostics else EXIT_OK


def _format_paths(result: GenerationResult, paths: analysis.PathEnumeration,
                  report: analysis.StrategicReport) -> str:
    kcag = result.kcag
    lines = [f"{len(paths)} attack path(s)" + (" (partial)" if paths.truncated else "")]
    for n, p in enumerate(paths, 1):
        lines.append(f"path {n}: " + " -> ".join(map(str, p.spine)))
        for t, phases in zip(p.techniques, p.phases):
            lines.append(f"  {t:>4}  {kcag.vertex(t).label}  [{', '.join(phases)}]")
    if report.total:
        lines.append("")
        lines.append("technique occurrences:")
        for attack_id, count in report.techniques:
            mark = " *" if attack_id in report.strategic_techniques else ""
            lines.append(f"  {attack_id:<12} {count}/{report.total}{mark}")
        lines.append("phase occurrences:")
        for phase, count in report.phases:
            mark = " *" if phase in report.strategic_phases else ""
            lines.append(f"  {phase:<22} {count}/{report.total}{mark}")
        lines.append("(* strategic)")
    return "\n".join(lines) + "\n"


def cmd_paths(config: RunConfig) -> int:
    result, _, _ = _run(config)
    paths = _paths(config, result)
    report = analysis.strategic(paths, result.kcag.phases)
    if config.output_format == "json":
        doc = {"paths": [p.to_dict() for p in paths], "truncated": paths.truncated,
               "strategic": report.to_dict()}
        _emit(config, json.dumps(doc, indent=2) + "\n")
    else:
        _emit(config, _format_paths(result, paths, report))
    return EXIT_DIAGNOSTIC if result.diagnostics else EXIT_OK


def cmd_recommend(config: RunConfig) -> int:
    result, org, ruleset = _run(config)
    paths = _paths(config, result)
    plan = analysis.recommend_countermeasures(result.kcag, paths)
    verified = {}
    if not paths.truncated:
        for s in plan.hitting_sets:
            _, left = analysis.what_if(org, ruleset, s, phase_order=config.phase_order,
                                       fact_limit=config.fact_limit, path_limit=config.path_limit)
            verified[s] = len(left) == 0
    if config.output_format == "json":
        doc = plan.to_dict()
        doc["verified"] = [verified.get(s) for s in plan.hitting_sets]
        _emit(config, json.dumps(doc, indent=2) + "\n")
    else:
        total = plan.total_paths
        lines = [f"{total} attack path(s); method: {plan.method.value}", "",
                 f"  {'countermeasure':<32} destroyed"]
        for cm, n in sorted(plan.destroyed, key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"  {cm:<32} {n}/{total}")
        lines += ["", "minimum countermeasure sets destroying every path:"]
        for s in plan.hitting_sets:
            state = {True: "verified", False: "NOT verified", None: "unverified"}[verified.get(s)]
            lines.append("  {" + ", ".join(s) + "}" + f"  ({state})")
        if not plan.complete:
            lines.append("  (more minimum sets exist; report limit reached)")
        _emit(config, "\n".join(lines) + "\n")
    if verified and not all(verified.values()):
        return EXIT_ERROR
    return EXIT_DIAGNOSTIC if result.diagnostics else EXIT_OK


def cmd_whatif(config: RunConfig) -> int:
    base, _, _ = _run(replace(config, applied=()))
    before = _paths(config, base)
    result, _, _ = _run(config)
    after = _paths(config, result)
    if config.output_format == "json":
        doc = {"applied": list(config.applied), "paths_before": len(before), "paths_after": len(after),
               "paths": [p.to_dict() for p in after]}
        _emit(config, json.dumps(doc, indent=2) + "\n")
    else:
        applied = ", ".join(config.applied) or "nothing"
        _emit(config, f"applied: {applied}\n{len(before)} attack path(s) before\n"
                      f"{len(after)} attack paths remain\n")
    return EXIT_OK


def cmd_validate(ruleset_path: Path | None) -> int:
    ruleset = load_ruleset(ruleset_path) if ruleset_path else builtin_ruleset()
    problems = validate_ruleset(ruleset)
    for d in problems:
        print(d)
    print(f"{len(ruleset.rules)} rule(s), {len(problems)} problem(s)")
    return EXIT_ERROR if problems else EXIT_OK


COMMANDS = {"generate": cmd_generate, "paths": cmd_paths, "recommend": cmd_recommend, "whatif": cmd_whatif}


def main(argv: Sequence[str] | None = None) -> int:
    level = getattr(logging, os.environ.get("KCAG_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.ruleset)
        return COMMANDS[args.command](_config(args))
    except (KcagError, OSError, ValueError) as exc:
        print(f"kcag: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
