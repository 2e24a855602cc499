"""``nashkin`` command line.

    nashkin homogeneous --config run.ini --out runs/a --seed 3
    nashkin phase-sweep --set n=3 --set points=41
    nashkin sweep --config run.ini --axis d --values 0.1,0.2,0.3 --workers 2

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from ..errors import ConfigurationError
from .config import Scenario, _literal, load_config, validate
from .runner import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, ScenarioError, run_scenario, sweep

COMMANDS = {
    "equilibrium": "equilibrium",
    "homogeneous": "homogeneous",
    "particles": "particles",
    "kinetic": "kinetic",
    "macro": "macro",
    "phase-sweep": "phase_sweep",
    "closure-compare": "closure_compare",
}


def _common(p):
    p.add_argument("--config", help="scenario file (INI)")
    p.add_argument("--out", help="output directory (overrides [scenario] output_dir)")
    p.add_argument("--seed", type=int, help="RNG seed override")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one parameter; may be repeated")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashkin", description="Mean-field herding game laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _common(sub.add_parser(name, help=f"run the {name} scenario"))
    sw = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    _common(sw)
    sw.add_argument("--axis", help="parameter to vary (overrides [sweep] axis)")
    sw.add_argument("--values", help="comma-separated values (overrides [sweep] values)")
    sw.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return parser


def _overrides(pairs):
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = _literal(value)
    return out


def _scenario(args, kind):
    extra = _overrides(args.set)
    if args.config:
        s = load_config(args.config, kind)
        if extra:
            params = {k: v for k, v in s.parameters.items() if v is not None}
            params.update(extra)
            s = validate(replace(s, parameters=params))
    elif kind is None:
        raise ConfigurationError("sweep needs --config to know the scenario kind")
    else:
        s = validate(Scenario(name=kind, kind=kind, parameters=extra, output_dir=kind))
    if args.seed is not None:
        s = s.with_parameter("seed", args.seed)
    return s


def _say(quiet, *lines):
    if not quiet:
        for line in lines:
            print(line)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            s = _scenario(args, None)
            values = None
            if args.values is not None:
                values = [_literal(v) for v in args.values.split(",") if v.strip()]
            results, code = sweep(s, args.axis, values, args.out, workers=args.workers)
            ok = sum(r.get("status") == "ok" for r in results)
            _say(args.quiet, f"sweep {s.name}: {ok}/{len(results)} runs succeeded")
            if code == EXIT_PARTIAL:
                for r in results:
                    if r.get("status") != "ok":
                        print(r.get("error", "run failed"), file=sys.stderr)
            return code
        s = _scenario(args, COMMANDS[args.command])
        manifest = run_scenario(s, args.out)
        summary = ", ".join(f"{k}={v}" for k, v in manifest.summary.items())
        _say(args.quiet, f"{s.kind} {s.name}: ok -> {manifest.path}", summary)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
