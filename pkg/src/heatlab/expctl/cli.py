"""Command line entry point: ``heatlab run|validate|presets``.

Exit codes: 0 when every check passes, 1 when a check (or validation)
fails, 2 on an execution error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from heatlab.expctl.config import ConfigError, RunConfig, validate
from heatlab.expctl.presets import list_presets, preset_text
from heatlab.expctl.runner import ValidationError, run

log = logging.getLogger("heatlab")


def _load(ref: str, overrides) -> RunConfig:
    """A config file path, or ``preset:NAME`` / a bare preset name."""
    name = ref[len("preset:"):] if ref.startswith("preset:") else ref
    if Path(ref).is_file():
        text = Path(ref).read_text()
    elif name in list_presets():
        text = preset_text(name)
    else:
        raise ConfigError("config", f"no such file or preset: {ref!r}")
    if overrides:
        # later keys replace earlier ones
        keep = {k.split("=", 1)[0].strip() for k in overrides}
        lines = [ln for ln in text.splitlines() if ln.split("=", 1)[0].strip() not in keep]
        text = "\n".join(lines + list(overrides)) + "\n"
    return RunConfig.parse(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatlab", description="heat kernel experiments for singular drifts")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="execute a configuration")
    r.add_argument("config", help="config file, or a preset name")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("config")
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s = sub.add_parser("presets", help="list the built-in configurations")
    s.add_argument("--show", metavar="NAME", help="print one preset")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.verb == "presets":
        if args.show:
            try:
                sys.stdout.write(preset_text(args.show))
            except KeyError as exc:
                print(exc.args[0], file=sys.stderr)
                return 2
            return 0
        for name, desc in list_presets().items():
            print(f"{name:16s} {desc}")
        return 0
    try:
        cfg = _load(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.verb == "validate":
        diags = validate(cfg)
        for d in diags:
            print(d)
        if not diags:
            print(f"ok {cfg.hash}")
        return 1 if diags else 0
    try:
        res = run(cfg, args.out)
    except ValidationError as exc:
        for d in exc.diagnostics:
            print(f"invalid: {d}", file=sys.stderr)
        return 2
    failed = [c for c in res.checks if not c.passed]
    for c in res.checks:
        log.info("%s %s value=%.6g threshold=%.6g %s", "PASS" if c.passed else "FAIL",
                 c.name, c.value, c.threshold, c.detail)
    if res.status == "error":
        print(f"error: {res.error}", file=sys.stderr)
    else:
        print(f"{res.status}: {len(res.checks) - len(failed)}/{len(res.checks)} checks passed; "
              f"outputs in {res.out}")
        for c in failed:
            print(f"  FAIL {c.name} value={c.value:.6g} threshold={c.threshold:.6g} {c.detail}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
