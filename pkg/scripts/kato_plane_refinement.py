"""Kato estimate versus local L2 mass of the plane-singular drift under refinement.

The Kato value of |b| settles while the L2 mass on the unit ball keeps
growing, the signature of a drift that is Kato but not locally square
integrable.
"""
import argparse
import warnings

import numpy as np

from heatlab.drift import examples as ex
from heatlab.drift.kato import kato_norm
from heatlab.drift.spec import PotentialSpec
from heatlab.field import Grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--L", type=float, default=2.0)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--n", type=int, nargs="+", default=[40, 80, 160])
    args = p.parse_args()
    b = ex.example_kato_not_L2(ex.Bump(1.0), ex.Bump(1.0), args.eps)
    print(f"{'n':>5} {'kato':>10} {'tail':>10} {'L2(B1)':>12}")
    prev = None
    for n in args.n:
        g = Grid(3, n, args.L)
        mag = b.magnitude(g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            k = kato_norm(PotentialSpec.from_array(mag, "abs_b"), args.T, g, direction="forward")
        l2 = float(np.sum(mag[g.radius() < 1.0] ** 2) * g.cell)
        extra = f"  x{l2 / prev:.3f}" if prev else ""
        print(f"{n:5d} {k.value:10.5f} {k.tail:10.2e} {l2:12.3f}{extra}")
        prev = l2


if __name__ == "__main__":
    main()
