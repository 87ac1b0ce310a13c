"""Norm-resolvent distances over eps with slopes and the two-mesh floor gate."""

import argparse

import numpy as np

from homogenize.problem import CellProblem, tau_grid
from homogenize.validation import convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=["I", "II"], default="II")
    ap.add_argument("--h", type=float, default=0.02)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    ap.add_argument("--tau-grid", type=int, default=3)
    ap.add_argument("--no-floor", action="store_true", help="skip the refined-mesh gate")
    args = ap.parse_args()

    problem = CellProblem.build(args.model, h=args.h)
    rep = convergence_study(problem, args.eps, tau_grid(args.tau_grid),
                            fine=False if args.no_floor else None)
    print(f"model {rep.model}, variant {rep.variant}, h {rep.h:.4f}")
    for i, t in enumerate(rep.taus):
        d = " ".join(f"{x:.3e}" for x in rep.distances[i, 0])
        print(f"tau ({t[0]:+.3f}, {t[1]:+.3f})  {d}  slope {rep.slopes[i, 0]:.2f}")
    print(f"sup slope {rep.sup_slopes[0]:.2f}, min per-tau slope {np.min(rep.slopes):.2f}")
    for (i, _), r in rep.floor.items():
        print(f"floor ratio at tau {tuple(rep.taus[i])}: {r:.4f}")
    for f in rep.flags:
        print("flag:", f)


if __name__ == "__main__":
    main()
