"""Run the scalar worked example end to end and print a compact verdict table.

Both declared-constant variants are run at the flagship parameters; every
artifact lands under ``--out/<variant>``.

    python3 scripts/run_example5.py --out example5_runs --threads 4
"""

import argparse
import json
from pathlib import Path

from nsfde import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="example5_runs")
    ap.add_argument("--c", type=float, default=450.0)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for variant in ("published", "valid"):
        out = Path(args.out) / variant
        code = cli.main(["example5", "--c", str(args.c), "--variant", variant,
                         "--paths", str(args.paths), "--seed", str(args.seed),
                         "--out", str(out)]
                        + ([] if args.threads is None else ["--threads", str(args.threads)]))
        rep = json.loads((out / "report.json").read_text())
        print(f"\n[{variant}] exit {code}, admissible={rep['admissible']}, "
              f"threshold c={rep['threshold_c']:.3f}")
        print(f"  falsified hypotheses: {rep['hypotheses_falsified'] or 'none'}")
        if "mean_square" in rep:
            for curve in rep["mean_square"]["curves"]:
                print(f"  {curve['name']}: {'pass' if curve['passed'] else 'FAIL'}")
            fit = rep["coupling"].get("fit", {})
            print(f"  coupling envelope rate {fit.get('rate', float('nan')):.3f} "
                  f"(lambda {rep['ledger']['lambda']:.3f})")
            dl = rep["distribution"]
            print("  d_L: " + ", ".join(f"{v:.3f}" for v in dl["cross"]["0-1"])
                  + f"  passed={dl['passed']}")
        else:
            print(f"  {rep['simulation']}")


if __name__ == "__main__":
    main()
