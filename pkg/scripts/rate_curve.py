"""Success rate against the rate constant c, in multiples of c_min.

    python scripts/rate_curve.py --n 100000 --k 316 --trials 30 --out rate_curve.csv
"""

import argparse
import logging

from pooldec.cli import RunConfig, sweep_csv, sweep_rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--k", type=int, default=316)
    ap.add_argument("--eps-design", type=float, default=0.05)
    ap.add_argument("--multiples", default="0.5,0.75,1.0,1.25,1.5,2,3,4")
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(command="sweep", n=args.n, counts=(args.k,), eps_design=args.eps_design,
                    trials=args.trials, seed=args.seed, axis="c", relative=True, jobs=args.jobs,
                    values=tuple(float(v) for v in args.multiples.split(",")))
    text = sweep_csv(sweep_rows(cfg))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
