"""Command-line entry point.

Exit codes: 0 all laws pass, 1 a law failed, 2 usage or schema error,
3 numeric blow-up.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import NumericBlowUp, UsageError
from .run import RunReport, emit, run
from .scenario import REGIMES, default_scenario, load_scenario, validate

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3

# verb -> regimes it accepts (first is the default when no scenario is given)
VERBS = {
    "check": ("free", "scs", "gnr", "material", "mixture", "voids", "variational"),
    "check-mixture": ("mixture",),
    "gnr": ("gnr",),
    "material": ("material",),
    "simulate-voids": ("voids",),
    "verify-noether": ("variational",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microcontinuum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--scenario", type=Path, help="scenario JSON file")
        p.add_argument("--out", type=Path, help="directory for report.json and CSV files")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--dry-run", action="store_true", help="validate only")
    p = sub.add_parser("manufacture")
    p.add_argument("--regime", choices=REGIMES, default="free")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="directory for scenario.json (stdout if omitted)")
    p.add_argument("--scenario", type=Path, help="validate and re-emit an existing scenario")
    p.add_argument("--dry-run", action="store_true")
    return parser


def _scenario_for(args):
    allowed = VERBS[args.verb]
    sc = load_scenario(args.scenario) if args.scenario else validate(default_scenario(allowed[0]))
    if sc.regime not in allowed:
        raise UsageError(f"verb {args.verb!r} runs regime(s) {list(allowed)}, scenario has {sc.regime!r}")
    return sc if args.seed is None else sc.with_seed(args.seed)


def _manufacture(args) -> int:
    if args.scenario:
        sc = load_scenario(args.scenario)
        data = sc.to_dict() if args.seed is None else sc.with_seed(args.seed).to_dict()
    else:
        data = validate(default_scenario(args.regime, args.seed)).to_dict()
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "scenario.json").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS


def _summary(report: RunReport) -> str:
    lines = [f"{'PASS' if r['passed'] else 'FAIL'} {r['law']}: Linf={r['Linf']:.3e} tol={r['tol']:.1e}"
             for r in report.laws]
    lines.append(f"{report.scenario['name']}: {'all laws pass' if report.passed else 'failed: ' + ', '.join(report.failures)}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "manufacture":
            return _manufacture(args)
        sc = _scenario_for(args)
        if args.dry_run:
            print(f"{sc.name}: scenario valid (regime {sc.regime}, seed {sc.seed})")
            return EXIT_PASS
        report = run(sc)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericBlowUp as exc:
        print(f"numeric blow-up: {exc}", file=sys.stderr)
        partial = getattr(exc, "partial", None)
        if args.out and partial is not None:
            emit(RunReport(sc.to_dict(), [], partial.timeseries(), {"halted": partial.halted}), args.out)
        return EXIT_BLOWUP
    if args.out:
        emit(report, args.out)
    print(_summary(report))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
