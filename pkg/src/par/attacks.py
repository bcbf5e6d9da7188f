"""Attack engines: Gaussian adversarial initialization, patch-wise
adversarial removal (PAR), a Boundary Attack baseline, and composition of
PAR with an arbitrary follow-up attack under one shared query budget.

State convention: AttackState.x_star is kept unrounded; rounding happens
once, at the oracle boundary, so the stored state always re-verifies by
classifying round_for_query(x_star).  Accepted updates never increase
l2_distance(x_star, x).
"""

from dataclasses import dataclass, field

import numpy as np

from .core import (as_image, check_same_shape, clip_to_valid, gaussian_noise,
                   l2_distance, make_rng, round_for_query)
from .errors import (BudgetExhausted, ContractViolation, InitFailed,
                     OracleUnavailable)
from .oracle import QueryCounter, classify_counted
from .patchgrid import (build_grid, halve, init_masks, query_value,
                        select_patch, zero_patch)

PHASES = ("init", "par", "followup")


@dataclass(frozen=True)
class LogEntry:
    query_index: int
    l2: float
    success: bool
    phase: str


class QueryLog:
    """One entry per oracle call, in call order."""

    def __init__(self):
        self.entries = []

    def append(self, query_index, l2, success, phase):
        if phase not in PHASES:
            raise ContractViolation("unknown phase %r" % (phase,))
        if self.entries and query_index <= self.entries[-1].query_index:
            raise ContractViolation("query_index must increase strictly")
        self.entries.append(LogEntry(int(query_index), float(l2), bool(success), phase))

    def __len__(self):
        return len(self.entries)

    def phase_counts(self):
        counts = {p: 0 for p in PHASES}
        for e in self.entries:
            counts[e.phase] += 1
        return counts


@dataclass
class AttackConfig:
    budget: int = 1000
    initial_patch_size: int = 56
    min_patch_size: int = 7
    init_stddev: float = 16.0
    boundary_delta: float = 0.1
    boundary_epsilon: float = 0.003
    targeted: bool = False
    target_label: int = None
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1 or self.budget != int(self.budget):
            raise ContractViolation("budget must be a positive integer")
        if self.min_patch_size < 1 or self.initial_patch_size < self.min_patch_size:
            raise ContractViolation(
                "need 1 <= min_patch_size <= initial_patch_size, got %r > %r"
                % (self.min_patch_size, self.initial_patch_size))
        if self.init_stddev <= 0:
            raise ContractViolation("init_stddev must be positive")
        if self.boundary_delta <= 0 or self.boundary_epsilon <= 0:
            raise ContractViolation("boundary step factors must be positive")
        if self.targeted and self.target_label is None:
            raise ContractViolation("targeted attack needs a target_label")
        if self.seed < 0 or self.seed != int(self.seed):
            raise ContractViolation("seed must be a non-negative integer")


class AttackState:
    """Best-so-far adversarial example plus full query accounting."""

    def __init__(self, x, y, cfg, rng=None, record_accepted=False):
        self.x = as_image(x, "original image")
        self.y = int(y)
        self.cfg = cfg
        self.x_star = None
        self.counter = QueryCounter(cfg.budget)
        self.log = QueryLog()
        self.rng = rng if rng is not None else make_rng(cfg.seed)
        # (query_index, l2) per accepted update; snapshots optional
        self.accepted = []
        self.record_accepted = record_accepted
        self.accepted_snapshots = []

    @property
    def queries_used(self):
        return self.counter.used

    def success_predicate(self, label):
        if self.cfg.targeted:
            return label == self.cfg.target_label
        return label != self.y

    def final_l2(self):
        if self.x_star is None:
            return float("inf")
        return l2_distance(self.x_star, self.x)

    def _accept(self, candidate, query_index, l2):
        self.x_star = candidate
        self.accepted.append((int(query_index), float(l2)))
        if self.record_accepted:
            self.accepted_snapshots.append((int(query_index), candidate.copy()))

    def _query(self, oracle, candidate, phase):
        """Round, query, log.  Returns (success, l2 of unrounded candidate)."""
        l2 = l2_distance(candidate, self.x)
        try:
            label = classify_counted(oracle, self.counter, round_for_query(candidate))
        except OracleUnavailable as e:
            # transport died mid-attack: ship the partial log with the error
            if getattr(e, "state", None) is None:
                e.state = self
            raise
        success = self.success_predicate(label)
        self.log.append(self.counter.used, l2, success, phase)
        return success, l2


def init_adversarial(oracle, x, y, cfg, rng=None, target_image=None,
                     record_accepted=False):
    """Find any adversarial starting point within the shared budget.

    Untargeted: sample clip(x + noise) with noise stddev doubling after
    every failed query.  Targeted: start from a supplied image of the
    target class and spend one confirming query on it.  Every attempt is
    charged to the budget; running out raises InitFailed carrying the
    partial state.
    """
    state = AttackState(x, y, cfg, rng=rng, record_accepted=record_accepted)
    x = state.x
    if cfg.targeted:
        if target_image is None:
            raise ContractViolation("targeted init needs a target-class image")
        candidate = clip_to_valid(as_image(target_image, "target image"))
        check_same_shape(candidate, x, "target and original images")
        try:
            success, l2 = state._query(oracle, candidate, "init")
        except BudgetExhausted:
            raise InitFailed("budget exhausted before init confirmed", state=state)
        if not success:
            raise InitFailed("supplied start is not classified as the target",
                             state=state)
        state._accept(candidate, state.counter.used, l2)
        return state
    stddev = cfg.init_stddev
    while True:
        if state.counter.remaining == 0:
            raise InitFailed(
                "no adversarial start within %d queries" % cfg.budget, state=state)
        candidate = clip_to_valid(x + gaussian_noise(x.shape, stddev, state.rng))
        success, l2 = state._query(oracle, candidate, "init")
        if success:
            state._accept(candidate, state.counter.used, l2)
            return state
        stddev *= 2.0


def _par_round(oracle, state, grid, masks):
    """One patch-size round: query patches until M_Q sums to zero.

    Returns False when the budget ran out mid-round.
    """
    x = state.x
    while True:
        m_q = query_value(masks)
        if float(m_q.sum()) <= 0.0:
            return True
        if state.counter.remaining == 0:
            return False
        row, col = select_patch(m_q)
        z = zero_patch(state.x_star - x, grid, row, col)
        candidate = clip_to_valid(x + z)
        try:
            success, l2 = state._query(oracle, candidate, "par")
        except BudgetExhausted:
            return False
        if success:
            state._accept(candidate, state.counter.used, l2)
            masks.m_n[row, col] = 0.0
        else:
            masks.m_s[row, col] = 0.0


def par_attack(oracle, state, cfg=None):
    """Greedy coarse-to-fine noise removal.

    Rank patches by m_n * m_s, zero the top patch of the current noise,
    and query; success zeroes that m_n entry, failure zeroes m_s.  When
    every entry is spent, halve the patch size and rebuild both masks from
    the surviving noise.  Stops when the budget runs out or the next
    halving would drop below min_patch_size (min_patch_size itself is
    processed).
    """
    cfg = cfg if cfg is not None else state.cfg
    if state.x_star is None:
        raise ContractViolation("par_attack needs an adversarial starting state")
    h, w, _ = state.x.shape
    if cfg.initial_patch_size > min(h, w):
        raise ContractViolation(
            "initial_patch_size %d exceeds min image side %d"
            % (cfg.initial_patch_size, min(h, w)))
    grid = build_grid(state.x.shape, cfg.initial_patch_size)
    while True:
        masks = init_masks(state.x, state.x_star, grid)
        if not _par_round(oracle, state, grid, masks):
            return state
        if grid.patch_size // 2 < cfg.min_patch_size:
            return state
        grid = halve(grid)


def boundary_step(x, x_star, delta, epsilon, rng):
    """One Boundary Attack proposal.

    clip(x_star + delta * eta / ||eta|| + epsilon * (x - x_star) / ||x - x_star||)
    with eta standard normal; delta and epsilon are absolute l2 lengths
    here (boundary_attack scales its relative factors before calling).
    """
    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    check_same_shape(x, x_star, "boundary_step images")
    src = x - x_star
    src_norm = float(np.sqrt(np.sum(src * src)))
    if src_norm == 0.0:
        raise ContractViolation("boundary_step undefined at x_star == x")
    eta = rng.standard_normal(x.shape)
    eta_norm = float(np.sqrt(np.sum(eta * eta)))
    if eta_norm == 0.0:  # probability zero; regenerate would break replay
        raise ContractViolation("degenerate zero spherical direction")
    return clip_to_valid(x_star + delta * (eta / eta_norm) + epsilon * (src / src_norm))


_WINDOW = 30
_LOW_RATE = 0.2
_HIGH_RATE = 0.6
_SHRINK = 0.9
_GROW = 1.1


def boundary_attack(oracle, state, delta0=0.1, epsilon0=0.003, budget=None):
    """Random-walk refinement along the decision boundary.

    delta0 and epsilon0 are relative factors: each proposal uses absolute
    steps delta*d and epsilon*d where d is the current l2 distance.  A
    candidate is accepted only if it stays adversarial and strictly
    shrinks d.  Both factors adapt on non-overlapping 30-step windows:
    acceptance rate below 20% shrinks them by 0.9, above 60% grows them
    by 1.1.  Spends exactly `budget` queries (default: all remaining)
    unless the distance hits zero.
    """
    if state.x_star is None:
        raise ContractViolation("boundary_attack needs an adversarial starting state")
    if delta0 <= 0 or epsilon0 <= 0:
        raise ContractViolation("step factors must be positive")
    remaining = state.counter.remaining
    steps = remaining if budget is None else min(int(budget), remaining)
    delta, epsilon = float(delta0), float(epsilon0)
    window_n = 0
    window_hits = 0
    for _ in range(steps):
        d = l2_distance(state.x_star, state.x)
        if d == 0.0:
            break
        candidate = boundary_step(state.x, state.x_star, delta * d, epsilon * d,
                                  state.rng)
        try:
            success, l2 = state._query(oracle, candidate, "followup")
        except BudgetExhausted:
            break
        accepted = success and l2 < d
        if accepted:
            state._accept(candidate, state.counter.used, l2)
        window_n += 1
        window_hits += int(accepted)
        if window_n == _WINDOW:
            rate = window_hits / window_n
            if rate < _LOW_RATE:
                delta *= _SHRINK
                epsilon *= _SHRINK
            elif rate > _HIGH_RATE:
                delta *= _GROW
                epsilon *= _GROW
            window_n = 0
            window_hits = 0
    return state


def boundary_followup(oracle, state, cfg):
    """Follow-up adapter: spend whatever budget PAR left on Boundary."""
    return boundary_attack(oracle, state, cfg.boundary_delta,
                           cfg.boundary_epsilon, budget=state.counter.remaining)


def compose(oracle, x, y, cfg, followup=None, target_image=None,
            record_accepted=False):
    """init_adversarial, then par_attack, then an optional follow-up, all
    against one budget.

    If x is already misclassified the attack returns immediately with zero
    noise; that precheck classifies the clean image directly and is not
    charged (the clean image is no adversarial candidate).  A transport
    failure mid-run re-raises OracleUnavailable with the partial state
    attached.
    """
    x = as_image(x)
    label0 = int(oracle.classify(round_for_query(clip_to_valid(x))))
    already = (label0 == cfg.target_label) if cfg.targeted else (label0 != int(y))
    if already:
        state = AttackState(x, y, cfg, record_accepted=record_accepted)
        state.x_star = x.copy()
        return state
    state = init_adversarial(oracle, x, y, cfg, target_image=target_image,
                             record_accepted=record_accepted)
    par_attack(oracle, state, cfg)
    if followup is not None:
        followup(oracle, state, cfg)
    return state
