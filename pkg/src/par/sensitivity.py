"""Noise-sensitivity measurement lab.

Sens of a rectangle is the minimal factor kappa such that scaling the
adversarial noise inside the rectangle by kappa keeps the example
adversarial; it is estimated by bisection against the hard-label oracle.
The module also builds per-patch sensitivity maps and runs the empirical
check that failed boundary steps are best repaired by reverting their
noise on high-sensitivity patches.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (as_image, check_same_shape, clip_to_valid, l2_distance,
                   round_for_query)
from .errors import ContractViolation, InsufficientSamples
from .imgio import write_heatmap_pgm
from .oracle import QueryCounter, classify_counted


@dataclass(frozen=True)
class PatchRect:
    sr: int
    sc: int
    h: int
    w: int

    def __post_init__(self):
        if self.sr < 0 or self.sc < 0 or self.h < 1 or self.w < 1:
            raise ContractViolation("degenerate rectangle %r" % (self,))

    def slices(self):
        return slice(self.sr, self.sr + self.h), slice(self.sc, self.sc + self.w)

    def check_inside(self, shape):
        if self.sr + self.h > shape[0] or self.sc + self.w > shape[1]:
            raise ContractViolation(
                "rect %r overflows image %r" % (self, tuple(shape)))

    @staticmethod
    def from_grid(grid, row, col):
        rs, cs = grid.patch_slice(row, col)
        return PatchRect(rs.start, cs.start, rs.stop - rs.start, cs.stop - cs.start)


def compress_patch(z, rect, kappa):
    """Scale the noise inside rect by kappa; everything else bit-identical."""
    if not (0.0 <= kappa <= 1.0):
        raise ContractViolation("compression ratio must lie in [0, 1], got %r" % (kappa,))
    z = np.asarray(z, dtype=np.float64)
    rect.check_inside(z.shape)
    rs, cs = rect.slices()
    out = z.copy()
    out[rs, cs, :] *= kappa
    return out


def _origin_label(oracle, x, exact):
    probe = x if exact else round_for_query(clip_to_valid(x))
    return int(oracle.classify(probe))


def measure_sens(oracle, x, x_adv, rect, iters=10, counter=None, y=None,
                 exact=False):
    """Bisect for the minimal surviving compression ratio of one rectangle.

    Probes kappa=0 first; if full removal keeps the example adversarial the
    answer is 0.0 at one query.  Otherwise iters halvings tighten the
    bracket [fail, success] and the midpoint is returned, so the result
    resolves kappa_min to 2**-iters using exactly iters + 1 queries.

    y is the clean label defining "adversarial" (looked up with one
    uncharged oracle call when omitted).  exact=True probes with raw float
    images, for oracles that respond continuously; the default rounds like
    the attack path.
    """
    if iters < 1:
        raise ContractViolation("iters must be >= 1")
    x = as_image(x, "original image")
    x_adv = as_image(x_adv, "adversarial image")
    check_same_shape(x, x_adv, "measure_sens images")
    if counter is None:
        counter = QueryCounter(None)
    if y is None:
        y = _origin_label(oracle, x, exact)
    z = x_adv - x

    def adversarial_at(kappa):
        candidate = x + compress_patch(z, rect, kappa)
        probe = candidate if exact else round_for_query(clip_to_valid(candidate))
        return classify_counted(oracle, counter, probe,
                                require_rounded=not exact) != y

    if adversarial_at(0.0):
        return 0.0
    lo, hi = 0.0, 1.0  # lo fails, hi succeeds (x_adv itself, by precondition)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if adversarial_at(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class SensitivityMap:
    grid: object
    values: np.ndarray
    queries_spent: int
    per_patch_queries: np.ndarray

    def to_pgm(self, path):
        write_heatmap_pgm(path, self.values)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["row", "col", "sens", "queries"])
            for r in range(self.grid.rows):
                for c in range(self.grid.cols):
                    w.writerow([r, c, "%.10g" % self.values[r, c],
                                int(self.per_patch_queries[r, c])])


def sensitivity_map(oracle, x, x_adv, grid, iters=10, y=None, exact=False):
    """Per-patch Sens over a whole grid, measured patch by patch.

    Costs at most rows * cols * (iters + 1) queries; patches whose noise
    removal keeps success cost one.
    """
    x = as_image(x, "original image")
    if y is None:
        y = _origin_label(oracle, x, exact)
    counter = QueryCounter(None)
    values = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    spent = np.zeros((grid.rows, grid.cols), dtype=np.int64)
    for r in range(grid.rows):
        for c in range(grid.cols):
            before = counter.used
            rect = PatchRect.from_grid(grid, r, c)
            values[r, c] = measure_sens(oracle, x, x_adv, rect, iters=iters,
                                        counter=counter, y=y, exact=exact)
            spent[r, c] = counter.used - before
    return SensitivityMap(grid=grid, values=values,
                          queries_spent=counter.used, per_patch_queries=spent)


def _phi_upper(z):
    """P(Z >= z) for standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass
class Prop1Report:
    trials: int
    attempts: int
    restored_low: int
    restored_high: int
    p_low: float
    p_high: float
    z_stat: float
    p_value: float
    queries_spent: int


def proposition1_check(oracle, x, x_adv, rect_low, rect_high, trials,
                       delta, epsilon, rng, y=None, oversample=100):
    """Empirical check that reverting a failed boundary step on the more
    sensitive rectangle restores adversariality more often.

    Draws one-step boundary proposals (delta and epsilon are relative to
    the current l2 distance, as in boundary_attack), keeps only steps that
    broke adversariality, then reverts the step's noise on each rectangle
    separately and records the restoration frequencies p_low and p_high.
    The report carries a one-sided pooled two-proportion z-test p-value
    for the ordering p_low < p_high.

    Precondition: Sens(rect_low) < Sens(rect_high).  Raises
    InsufficientSamples when fewer than `trials` failed steps occur within
    oversample * trials proposals.
    """
    from .attacks import boundary_step

    if trials < 100:
        raise ContractViolation("need at least 100 trials, got %r" % (trials,))
    x = as_image(x, "original image")
    x_adv = as_image(x_adv, "adversarial image")
    check_same_shape(x, x_adv, "proposition1_check images")
    rect_low.check_inside(x.shape)
    rect_high.check_inside(x.shape)
    if y is None:
        y = _origin_label(oracle, x, exact=False)
    counter = QueryCounter(None)

    def adversarial(img):
        probe = round_for_query(clip_to_valid(img))
        return classify_counted(oracle, counter, probe) != y

    d = l2_distance(x_adv, x)
    if d == 0.0:
        raise ContractViolation("x_adv equals x; no boundary step defined")
    conditioned = 0
    restored = [0, 0]
    attempts = 0
    max_attempts = oversample * trials
    while conditioned < trials:
        if attempts >= max_attempts:
            raise InsufficientSamples(
                "only %d failed steps in %d proposals (need %d)"
                % (conditioned, attempts, trials))
        attempts += 1
        candidate = boundary_step(x, x_adv, delta * d, epsilon * d, rng)
        if adversarial(candidate):
            continue  # step kept success; not a conditioning event
        conditioned += 1
        for i, rect in enumerate((rect_low, rect_high)):
            rs, cs = rect.slices()
            reverted = candidate.copy()
            reverted[rs, cs, :] = x_adv[rs, cs, :]
            if adversarial(reverted):
                restored[i] += 1
    k_low, k_high = restored
    p_low = k_low / trials
    p_high = k_high / trials
    pool = (k_low + k_high) / (2.0 * trials)
    se = math.sqrt(max(pool * (1.0 - pool) * (2.0 / trials), 0.0))
    if se == 0.0:
        z_stat = 0.0
        p_value = 1.0
    else:
        z_stat = (p_high - p_low) / se
        p_value = _phi_upper(z_stat)
    return Prop1Report(trials=trials, attempts=attempts, restored_low=k_low,
                       restored_high=k_high, p_low=p_low, p_high=p_high,
                       z_stat=z_stat, p_value=p_value,
                       queries_spent=counter.used)
