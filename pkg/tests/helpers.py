"""Shared builders for oracle-backed test fixtures."""

import numpy as np

from par.oracle import PatchEnergyOracle
from par.patchgrid import build_grid


def single_pixel_case(energies, theta, region=4, base=128.0, quantize=True,
                      weights=None):
    """One row of square regions, each holding a single noisy pixel.

    Region i's noise has l2 norm exactly energies[i], so the weighted
    energy sum and every per-region sensitivity have closed forms.
    Returns (x, x_adv, oracle, grid).
    """
    k = len(energies)
    shape = (region, region * k, 1)
    x = np.full(shape, float(base))
    x_adv = x.copy()
    for i, e in enumerate(energies):
        x_adv[0, i * region, 0] += float(e)
    grid = build_grid(shape, region)
    if weights is None:
        weights = np.ones((1, k))
    oracle = PatchEnergyOracle(x, grid, weights, float(theta),
                               quantize=quantize)
    return x, x_adv, oracle, grid


def two_region_sens_case(e_low=10.0, e_high=90.0, theta=91.0, region=8,
                         quantize=True):
    """Two adjacent regions whose ground-truth sensitivities are
    (theta - e_high) / e_low and (theta - e_low) / e_high."""
    x, x_adv, oracle, grid = single_pixel_case([e_low, e_high], theta,
                                               region=region,
                                               quantize=quantize)
    sens_low = max(0.0, (theta - e_high) / e_low)
    sens_high = max(0.0, (theta - e_low) / e_high)
    return x, x_adv, oracle, grid, sens_low, sens_high
