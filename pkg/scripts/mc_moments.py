"""Monte Carlo means of the unexplained sums against their exact conditional means.

Writes a CSV with columns quantity,n_samples,mean,stderr,reference.

    python scripts/mc_moments.py --samples 100000 --out moments.csv
"""

import argparse

from pooldec.design import DesignParams, Overrides, build_design, stream
from pooldec.oracle import MCSummary, conditional_moments, mc_summary_csv, sample_unexplained
from pooldec.signal import sample_signal


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--out")
    args = ap.parse_args()
    p = DesignParams(n=2000, counts=(30, 15), c=1, rng_seed=args.seed,
                     overrides=Overrides(ell=6, s=3, m=2696, gamma=60))
    D = build_design(p)
    sig = sample_signal(p, D, stream(p.rng_seed, 1))
    rows = []
    lo = D.bounds[D.s - 1]
    for t, x in enumerate(range(lo, lo + 4)):
        for j in range(D.s):
            cm = conditional_moments(x, j, D, sig)
            for mode in ("direct", "multinomial"):
                draws = sample_unexplained(x, j, D, sig, stream(args.seed, t, j), mode, size=args.samples)
                rows.append(MCSummary.of(f"U[x={x},j={j},{mode}]", draws, cm.mean))
    text = mc_summary_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
