"""Compare the four access schemes on both scenario presets.

Averages the top slice's discounted mean reward over a handful of seeds and
prints the resulting ranking: knowing the true occupancy beats filtering noisy
observations, which beats running open loop on the chain's prediction, and the
rate-share control loop adds on top by feeding the overloaded slice more RBs.

Usage:
    python3 demos/compare_schemes.py [n_seeds]
"""

import sys

import numpy as np

from m2msim import preset_config, run_simulation

SCHEMES = (
    "perfect_knowledge",
    "pomdp_with_loop",
    "pomdp_no_loop",
    "no_observation_no_loop",
)


def top_slice_mean(result):
    return float(np.mean([r.mean_reward for r in result.records if r.slice_id == 1]))


def main():
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    for preset in ("paper_homogeneous", "paper_heterogeneous"):
        print(f"\n{preset} (top-slice discounted mean reward, {n_seeds} seeds)")
        for scheme in SCHEMES:
            vals = [
                top_slice_mean(run_simulation(preset_config(preset, scheme=scheme, seed=s)))
                for s in range(n_seeds)
            ]
            bar = "#" * int(round(np.mean(vals) * 4))
            print(f"  {scheme:<24} {np.mean(vals):>7.3f}  {bar}")


if __name__ == "__main__":
    main()
