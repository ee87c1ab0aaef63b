"""Critic-actor runs on the two-state MDP for a few values of sigma.

Prints one line per seed: convergence flag, final critic, state-1 policy and
whether the final policy is an equilibrium.
"""
import argparse

import numpy as np

from qhmpe import envs
from qhmpe.learning import RunConfig, run
from qhmpe.mdp import QhDiscount


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sigmas", default="0.3,0.5,0.7")
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=200_000)
    args = p.parse_args()

    mdp = envs.two_state()
    for sigma in (float(s) for s in args.sigmas.split(",")):
        disc = QhDiscount(sigma, args.gamma)
        print(f"sigma={sigma}")
        for seed in range(args.seeds):
            res = run(mdp, disc, RunConfig(seed=seed, max_iters=args.max_iters))
            print(
                f"  seed {seed:2d}  converged={str(res.converged):5}  W={np.round(res.w, 3).tolist()}  "
                f"pi(1)={np.round(res.policy[:2], 3).tolist()}  equilibrium={res.verification.verdict}"
            )


if __name__ == "__main__":
    main()
