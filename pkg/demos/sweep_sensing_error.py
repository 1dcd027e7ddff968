"""Sweep the sensing error and watch the value of observation melt away.

Runs single-period simulations (so the RB allocation stays fixed) over a grid
of false-observation probabilities.  As the error grows the belief filter
trusts its sensors less; at 0.5 the observations carry no information and the
policy degenerates to the open-loop Markov prediction, so the curve flattens.

Usage:
    python3 demos/sweep_sensing_error.py [preset] [n_seeds]
"""

import sys

import numpy as np

from m2msim import preset_config, run_simulation


def top_slice_mean(result):
    return float(np.mean([r.mean_reward for r in result.records if r.slice_id == 1]))


def run_point(preset, scheme, seed, **overrides):
    cfg = preset_config(preset, scheme=scheme, seed=seed, periods=1, **overrides)
    return top_slice_mean(run_simulation(cfg))


def main():
    preset = sys.argv[1] if len(sys.argv) > 1 else "paper_homogeneous"
    n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    grid = [round(0.1 * k, 1) for k in range(1, 9)]

    perfect = np.mean(
        [run_point(preset, "perfect_knowledge", s) for s in range(n_seeds)]
    )
    print(f"{preset}: perfect-knowledge reference {perfect:.3f}")
    print(f"{'error':>6} {'reward':>8} {'gap':>8}")
    for eps in grid:
        vals = [
            run_point(preset, "pomdp_no_loop", s, eps=eps, phi=eps)
            for s in range(n_seeds)
        ]
        mean = float(np.mean(vals))
        print(f"{eps:>6.1f} {mean:>8.3f} {perfect - mean:>8.3f}")


if __name__ == "__main__":
    main()
