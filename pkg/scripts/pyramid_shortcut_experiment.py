#!/usr/bin/env python3
"""Measure how strongly the finest backbone level reaches the coarsest
output with and without the bottom-up augmentation path.

Perturbs one entry of the level-2 input and reports the induced change
in the level-5 output. The top-down pass alone carries no upward route,
so severing the bottom-up path zeroes the response; the augmented
pipeline responds through the shortened path.
"""

import argparse

import numpy as np

from detkit.pyramid import (
    LEVELS,
    FeatureMap,
    PyramidWeights,
    make_input_pyramid,
    pyramid_pipeline,
    severed_weights,
)


def response_norm(c, c_pert, weights, mode):
    base = pyramid_pipeline(c, weights, mode=mode)
    pert = pyramid_pipeline(c_pert, weights, mode=mode)
    return {l: float(np.abs(pert[l].data - base[l].data).max()) for l in LEVELS}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--epsilon", type=float, default=1.0)
    args = ap.parse_args()

    weights = PyramidWeights.generate(args.seed, args.channels, args.channels)
    c = make_input_pyramid(args.seed, args.size, args.channels)
    bump = np.zeros_like(c[2].data)
    bump[0, 0, 0] = args.epsilon
    c_pert = {**c, 2: FeatureMap(2, c[2].data + bump)}

    with_path = response_norm(c, c_pert, weights, "pafpn")
    without = response_norm(c, c_pert, severed_weights(weights), "pafpn")

    print(f"max |delta| per level after a {args.epsilon:g} bump at level 2:")
    print(f"{'level':>6} {'bottom-up':>12} {'severed':>12}")
    for l in LEVELS:
        print(f"{l:>6} {with_path[l]:>12.3e} {without[l]:>12.3e}")


if __name__ == "__main__":
    main()
