"""Run every built-in preset and print one summary line per run."""
import argparse
import time
from pathlib import Path

from heatlab.expctl import list_presets, preset, run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="preset_runs", help="parent directory for the run outputs")
    p.add_argument("names", nargs="*", help="subset of presets (default: all)")
    args = p.parse_args()
    names = args.names or list(list_presets())
    worst = 0
    for name in names:
        t0 = time.perf_counter()
        res = run(preset(name), Path(args.out) / name)
        passed = sum(c.passed for c in res.checks)
        print(f"{name:16s} {res.status:5s} {passed:3d}/{len(res.checks):<3d} {time.perf_counter() - t0:6.1f} s")
        for c in res.checks:
            if not c.passed:
                print(f"    FAIL {c.name}: {c.value:.6g} vs {c.threshold:.6g} {c.detail}")
        worst = max(worst, res.exit_code)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
