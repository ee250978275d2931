"""Locate the admissibility threshold in c for the scalar worked example.

For each (eps, rho, r) the closed-form threshold is compared with the c at
which the constant ledger flips, found by bisection.  The declared drift
constants are also tested by the randomized H2 checker at a few values of c,
for both the published variant and the corrected one.

    python3 scripts/threshold_scan.py [--trials 4000]
"""

import argparse
import math

from nsfde.measures import r_moment
from nsfde.model import constant_ledger, example5_model, example5_threshold, verify_h2_drift

CASES = [(math.sqrt(2.0), 1.0, 0.25), (1.0, 4.5, 0.25), (1.0, 2.0, 0.25), (0.5, 3.0, 0.5)]


def admissible(c, eps, rho, r, variant="published"):
    try:
        return constant_ledger(example5_model(c, eps, rho, r, variant)).admissible
    except ValueError:
        return False


def flip_point(eps, rho, r, variant="published", lo=1e-3, hi=1e7):
    if not admissible(hi, eps, rho, r, variant):
        return math.inf
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if admissible(mid, eps, rho, r, variant):
            hi = mid
        else:
            lo = mid
        if hi / lo < 1 + 1e-10:
            break
    return hi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=4000)
    args = ap.parse_args()

    print(f"{'eps':>8} {'rho':>5} {'r':>5} {'mu2r':>8} {'closed form':>12} "
          f"{'ledger flip':>12} {'rel gap':>8} {'valid flip':>11}")
    for eps, rho, r in CASES:
        mu2r = r_moment(example5_model(1.0, eps, rho, r).mu, 2 * r)
        closed = example5_threshold(eps, mu2r)
        flip = flip_point(eps, rho, r)
        vflip = flip_point(eps, rho, r, "valid")
        print(f"{eps:8.4f} {rho:5.2f} {r:5.2f} {mu2r:8.4f} {closed:12.3f} {flip:12.3f} "
              f"{flip / closed - 1:8.2%} {vflip:11.3f}")

    print("\nrandomized H2 drift check, eps=sqrt(2), rho=1, r=0.25")
    for c in (1.0, 10.0, 450.0, 1000.0):
        row = []
        for variant in ("published", "valid"):
            rep = verify_h2_drift(example5_model(c, math.sqrt(2), 1.0, 0.25, variant),
                                  args.trials, seed=0)
            row.append(f"{variant}: {'pass' if rep.passed else 'FAIL'} (max {rep.max_value:.3g})")
        print(f"  c={c:7g}  " + "   ".join(row))


if __name__ == "__main__":
    main()
