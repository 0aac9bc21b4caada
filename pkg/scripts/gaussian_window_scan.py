"""Relative errors of the Gaussian weight identities across beta*tau.

Shows where the periodic images of the weight start to matter: the
errors stay at round-off for small beta*tau and rise once the seam of the
box sits within about three standard deviations.
"""
import argparse

import numpy as np

from heatlab.field import Grid
from heatlab.nash import gaussian_identities


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--points", type=int, default=9)
    args = p.parse_args()
    g = Grid(3, args.n, args.L)
    print(f"{'beta tau':>9} {'seam/sd':>8} {'grad':>10} {'lap':>10} {'moment':>10}")
    for bt in np.geomspace(16 * g.h**2, g.L**2 / 16, args.points):
        e = gaussian_identities(g, bt)
        print(f"{bt:9.4f} {g.L / np.sqrt(2 * bt):8.2f} {e['grad']:10.2e} {e['lap']:10.2e} {e['moment']:10.2e}")


if __name__ == "__main__":
    main()
