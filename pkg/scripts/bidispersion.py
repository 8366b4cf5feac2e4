"""How many innings does it take to tell over- from underdispersion?

Players are simulated in three equal groups with nu = 0.6, 1.0 and 1.4 and
classified by the posterior mean of nu (cut points 0.8 and 1.2).  One fit is
run per innings count given on the command line.

    python scripts/bidispersion.py --innings 100 200 400
"""

import argparse

import numpy as np

from trunccmp.sampler import SamplerConfig, run
from trunccmp.synthetic import SyntheticLayout, SyntheticTruth, generate_synthetic

CLASSES = np.array([0.6, 1.0, 1.4])
CUTS = (0.8, 1.2)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--innings", type=int, nargs="+", default=[100, 200, 400])
    p.add_argument("--per-class", type=int, default=10, help="players per dispersion class")
    p.add_argument("--seed", type=int, default=8)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--iters", type=int, default=2000)
    args = p.parse_args()

    true_nu = np.repeat(CLASSES, args.per_class)
    truth = SyntheticTruth(eta=np.log(true_nu).tolist())
    want = np.digitize(true_nu, CUTS)
    print(f"{'innings':>7} {'accuracy':>8}  " + "  ".join(f"nu={v}: mean(sd)" for v in CLASSES))
    for n in args.innings:
        layout = SyntheticLayout(n_players=true_nu.size, innings_per_player=n)
        _, _, model = generate_synthetic(layout, truth, seed=args.seed)
        draws = run(SamplerConfig(n_warmup=args.warmup, n_iter=args.iters, seed=args.seed), model)
        nu = np.exp(draws.block("eta").reshape(-1, true_nu.size))
        est, sd = nu.mean(axis=0), nu.std(axis=0)
        acc = np.mean(np.digitize(est, CUTS) == want)
        cells = "  ".join(f"{est[want == k].mean():.2f}({sd[want == k].mean():.2f})".rjust(17) for k in range(3))
        print(f"{n:>7} {acc:>8.2f}  {cells}", flush=True)


if __name__ == "__main__":
    main()
