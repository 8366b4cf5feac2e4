"""Time the likelihood, the solver and a full sampler sweep.

    python scripts/benchmark.py --players 50 --innings 60
"""

import argparse
import time

import numpy as np

from trunccmp.cmp import solve_log_lambda_checked
from trunccmp.model import CachedPosterior
from trunccmp.sampler import ChainState, SamplerConfig, sweep
from trunccmp.synthetic import SyntheticLayout, generate_synthetic


def timed(fn, repeat: int) -> float:
    fn()  # compile / warm caches
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--players", type=int, default=50)
    p.add_argument("--innings", type=int, default=60)
    p.add_argument("--sweeps", type=int, default=200)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    mus = rng.uniform(0.05, 9.5, 2000)
    nus = np.exp(rng.normal(0.0, 0.55, 2000))
    t_solve = timed(lambda: [solve_log_lambda_checked(m, v) for m, v in zip(mus, nus)], 3) / mus.size
    print(f"solver: {1e6 * t_solve:.2f} us per (mu, nu) from a cold start")

    dataset, truth, model = generate_synthetic(SyntheticLayout(n_players=args.players, innings_per_player=args.innings), seed=0)
    t_ll = timed(lambda: model.log_likelihood(truth), 20)
    print(f"log likelihood: {1e3 * t_ll:.2f} ms for {len(dataset)} records ({model.layout.size} parameters)")

    target = CachedPosterior(model, model.initial_params(rng))
    state = ChainState.initial(target, rng, SamplerConfig())
    cfg = SamplerConfig()
    t_sweep = timed(lambda: sweep(state, cfg), args.sweeps)
    full = t_sweep * cfg.n_chains * (cfg.n_warmup + cfg.n_iter)
    print(f"sweep: {1e3 * t_sweep:.2f} ms; default schedule ~{full / 60:.1f} min on one core")


if __name__ == "__main__":
    main()
