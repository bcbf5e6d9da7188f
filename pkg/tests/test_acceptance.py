"""End-to-end acceptance suite.

Each test covers one headline guarantee and prints a single
"[ACCEPTANCE] <name>: PASS|FAIL" verdict line, visible even under
pytest's capture.  Tolerances are stated inline next to each assertion.
"""

import itertools
import json
import math
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from helpers import single_pixel_case, two_region_sens_case

from par.attacks import (AttackConfig, AttackState, boundary_followup,
                         init_adversarial, par_attack)
from par.core import make_rng, round_for_query
from par.errors import InitFailed
from par.harness import ExperimentConfig, run_experiment
from par.oracle import energy_oracle_sens
from par.sensitivity import PatchRect, measure_sens, proposition1_check
from par.synth import make_case, make_suite, write_suite


def _emit(name, verdict, capsys):
    line = "[ACCEPTANCE] %s: %s" % (name, verdict)
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


@contextmanager
def criterion(name, capsys=None):
    try:
        yield
    except BaseException:
        _emit(name, "FAIL", capsys)
        raise
    else:
        _emit(name, "PASS", capsys)


class CallCounter:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.num_classes = inner.num_classes

    def classify(self, img):
        self.calls += 1
        return self.inner.classify(img)


@pytest.fixture(scope="module")
def corpus():
    """200 randomized attack runs with accepted-state snapshots kept."""
    runs = []
    meta_rng = make_rng(2024)
    for i in range(200):
        size = int(meta_rng.choice([21, 28]))
        hot = int(meta_rng.integers(1, 3))
        frac = float(meta_rng.uniform(0.6, 0.9))
        budget = int(meta_rng.integers(60, 161))
        case = make_case(make_rng(int(meta_rng.integers(0, 2 ** 31))),
                         height=size, width=size, channels=1, region_size=7,
                         hot_regions=hot, theta_frac=frac)
        spy = CallCounter(case.oracle)
        cfg = AttackConfig(budget=budget, initial_patch_size=14,
                           min_patch_size=7, seed=i)
        try:
            state = init_adversarial(spy, case.image, case.label, cfg,
                                     record_accepted=True)
        except InitFailed as e:
            runs.append((case, e.state, spy, budget))
            continue
        par_attack(spy, state, cfg)
        if i % 2 == 0 and state.counter.remaining > 0:
            boundary_followup(spy, state, cfg)
        runs.append((case, state, spy, budget))
    return runs


@pytest.fixture(scope="module")
def big_suite(tmp_path_factory):
    d = tmp_path_factory.mktemp("suite112")
    cases = make_suite(n_images=50, seed=31, height=112, width=112,
                       channels=3, region_size=28, hot_regions=1)
    return Path(write_suite(d / "s", cases))


def test_acceptance_sens_closed_form(capsys):
    # 100 randomized energy-threshold oracles: bisection at iters=10 must
    # land within 2^-10 of the closed-form minimal ratio, in under 10 s
    with criterion("Sens agrees with closed form on 100 configs", capsys):
        t0 = time.perf_counter()
        rng = make_rng(7)
        for _ in range(100):
            k = int(rng.integers(2, 7))
            energies = rng.uniform(0.5, 25.0, size=k)
            weights = rng.uniform(0.25, 4.0, size=(1, k))
            total = float((weights[0] * energies).sum())
            theta = float(rng.uniform(0.2, 0.98)) * total
            x, x_adv, oracle, grid = single_pixel_case(
                energies, theta, quantize=False, weights=weights)
            c = int(rng.integers(0, k))
            rect = PatchRect.from_grid(grid, 0, c)
            got = measure_sens(oracle, x, x_adv, rect, iters=10, y=0,
                               exact=True)
            want = energy_oracle_sens(oracle, x, x_adv, 0, c)
            assert abs(got - want) <= 2.0 ** -10
        assert time.perf_counter() - t0 < 10.0


def test_acceptance_proposition1(capsys):
    # regions with ground-truth Sens 0.1 / 0.9; over 1000 conditioned
    # steps the high-Sens revert must restore significantly more often
    # (one-sided p <= 0.01), in under 60 s
    with criterion("Failed-step restoration ordering at p<=0.01", capsys):
        t0 = time.perf_counter()
        xe, xae, exact_oracle, ge, s_lo, s_hi = two_region_sens_case(
            quantize=False)
        assert (s_lo, s_hi) == (0.1, 0.9)
        lo_rect = PatchRect.from_grid(ge, 0, 0)
        hi_rect = PatchRect.from_grid(ge, 0, 1)
        lo_m = measure_sens(exact_oracle, xe, xae, lo_rect, iters=10, y=0,
                            exact=True)
        hi_m = measure_sens(exact_oracle, xe, xae, hi_rect, iters=10, y=0,
                            exact=True)
        assert abs(lo_m - 0.1) <= 2.0 ** -10
        assert abs(hi_m - 0.9) <= 2.0 ** -10
        x, x_adv, oracle, grid, _, _ = two_region_sens_case(quantize=True)
        report = proposition1_check(oracle, x, x_adv,
                                    PatchRect.from_grid(grid, 0, 0),
                                    PatchRect.from_grid(grid, 0, 1),
                                    1000, 0.1, 0.15, make_rng(42), y=0)
        assert report.p_high > report.p_low
        assert report.p_value <= 0.01
        assert time.perf_counter() - t0 < 60.0


def test_acceptance_removal_exactness(capsys):
    # threshold 10 over per-patch energies 6,5,3,2: enumerate every
    # zeroing order (and every feasible subset) first, then demand the
    # greedy pass hit that optimum exactly, in exactly 4 removal queries
    with criterion("Greedy removal reaches sqrt(38) in 4 queries", capsys):
        energies = [6.0, 5.0, 3.0, 2.0]
        theta = 10.0
        outcomes = set()
        for perm in itertools.permutations(range(4)):
            total = sum(energies)
            removed = set()
            for i in perm:
                if total - energies[i] >= theta:
                    total -= energies[i]
                    removed.add(i)
            outcomes.add(sum(energies[i] ** 2
                             for i in range(4) if i not in removed))
        best_order = math.sqrt(min(outcomes))
        feasible = [sum(energies[i] ** 2 for i in range(4) if not (m >> i) & 1)
                    for m in range(16)
                    if sum(energies) - sum(energies[i] for i in range(4)
                                           if (m >> i) & 1) >= theta]
        best_subset = math.sqrt(min(feasible))
        assert best_order == best_subset == pytest.approx(math.sqrt(38.0),
                                                          abs=1e-12)
        x, x_adv, oracle, grid = single_pixel_case(energies, theta, region=4)
        cfg = AttackConfig(budget=100, initial_patch_size=4, min_patch_size=4,
                           seed=0)
        state = AttackState(x, 0, cfg)
        state.x_star = x_adv.copy()
        par_attack(oracle, state, cfg)
        assert state.queries_used == 4
        assert state.log.phase_counts()["par"] == 4
        assert abs(state.final_l2() - math.sqrt(38.0)) <= 1e-9


def test_acceptance_safety_and_monotonicity(corpus, capsys):
    # every accepted state must re-verify as adversarial when replayed
    # against the oracle, and accepted distances never increase
    with criterion("200-run replay safety and monotone accepted l2", capsys):
        replayed = 0
        for case, state, spy, budget in corpus:
            l2s = [l2 for _, l2 in state.accepted]
            for a, b in zip(l2s, l2s[1:]):
                assert b <= a * (1.0 + 1e-12) + 1e-12
            for _, img in state.accepted_snapshots:
                assert case.oracle.classify(round_for_query(img)) != case.label
                replayed += 1
        assert replayed > 1000  # the corpus really exercised acceptance


def test_acceptance_budget_exactness(corpus, capsys):
    # charged oracle calls, log length and queries_used must agree and
    # never exceed the budget; zero tolerance
    with criterion("Oracle calls == log length == queries_used <= T", capsys):
        for case, state, spy, budget in corpus:
            assert spy.calls == len(state.log) == state.queries_used
            assert state.queries_used <= budget


def test_acceptance_init_benefit_trend(big_suite, tmp_path, capsys):
    # warm-started pipeline must dominate the plain boundary walk: median
    # final l2 no worse, and the median best-distance curve at or below
    # at every multiple of 50 queries; whole comparison under 5 min
    with criterion("Warm start dominates boundary-only at budget 1000",
                   capsys):
        t0 = time.perf_counter()
        budget = 1000
        results, curves = {}, {}
        for pipe in ("par+boundary", "boundary"):
            out = tmp_path / pipe.replace("+", "_")
            cfg = ExperimentConfig(
                dataset=str(big_suite), oracle={"kind": "energy"},
                attack=AttackConfig(budget=budget, initial_patch_size=56,
                                    min_patch_size=7, seed=0),
                pipeline=pipe, output_dir=str(out), save_finals=False)
            results[pipe] = run_experiment(cfg)
            per_image = []
            for f in sorted((out / "curves").glob("*.csv")):
                rows = f.read_text().splitlines()[1:]
                assert len(rows) == budget
                vals = {}
                for line in rows:
                    q, v = line.split(",")
                    if int(q) % 50 == 0:
                        vals[int(q)] = float(v)
                per_image.append(vals)
            assert len(per_image) == 50
            curves[pipe] = per_image
        assert results["par+boundary"].median_l2 <= results["boundary"].median_l2
        for q in range(50, budget + 1, 50):
            med_pb = float(np.median([c[q] for c in curves["par+boundary"]]))
            med_b = float(np.median([c[q] for c in curves["boundary"]]))
            assert med_pb <= med_b + 1e-9, "curve crossed at query %d" % q
        assert time.perf_counter() - t0 < 300.0


def test_acceptance_schedule_tradeoff(big_suite, tmp_path, capsys):
    # coarse-to-fine (56 -> 7) must spend strictly fewer removal queries
    # than flat 7, finishing within 10% of its final distance
    with criterion("Coarse-to-fine beats flat schedule on queries", capsys):
        stats = {}
        for ps0 in (56, 7):
            out = tmp_path / ("ps%d" % ps0)
            cfg = ExperimentConfig(
                dataset=str(big_suite), oracle={"kind": "energy"},
                attack=AttackConfig(budget=1000, initial_patch_size=ps0,
                                    min_patch_size=7, seed=0),
                pipeline="par", output_dir=str(out), save_finals=False,
                save_curves=False)
            r = run_experiment(cfg)
            qs = [row["par_queries"] for row in r.rows
                  if np.isfinite(row["final_l2"])]
            assert len(qs) == 50
            stats[ps0] = (sum(qs), float(np.median(qs)), r.median_l2)
        total56, med56, l2_56 = stats[56]
        total7, med7, l2_7 = stats[7]
        assert total56 < total7
        assert med56 < med7
        assert abs(l2_56 - l2_7) <= 0.10 * l2_7


def _checksum(img, classes):
    pixels = np.clip(round_for_query(np.asarray(img, dtype=np.float64)),
                     0, 255).astype(np.uint8)
    return int(pixels.sum(dtype=np.int64) % classes)


def test_acceptance_wire_interop(capsys):
    # the out-of-tree reference server and the in-tree client must agree
    # on 100 random images over both transports, and killing the server
    # mid-run must surface OracleUnavailable with the partial log intact
    from par.errors import OracleUnavailable
    from par.oracle import external_oracle_connect

    with criterion("Wire interop with the reference server", capsys):
        spec = "checksum:8x8x1:11"
        argv = [sys.executable, "-m", "par_oracle_adapter",
                "--model", spec, "--transport", "stdio"]
        rng = make_rng(77)
        images = [np.asarray(rng.integers(0, 256, size=(8, 8, 1)),
                             dtype=np.float64) for _ in range(100)]
        with external_oracle_connect(argv, timeout=10.0) as oracle:
            assert oracle.num_classes == 11
            assert oracle.image_shape == (8, 8, 1)
            for img in images:
                assert oracle.classify(img) == _checksum(img, 11)
        server = subprocess.Popen(
            [sys.executable, "-m", "par_oracle_adapter", "--model", spec,
             "--transport", "tcp:0"],
            stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
        try:
            line = server.stderr.readline().decode()
            assert line.startswith("listening on "), line
            port = int(line.split()[-1])
            endpoint = "tcp:127.0.0.1:%d" % port
            with external_oracle_connect(endpoint, timeout=10.0) as oracle:
                for img in images:
                    assert oracle.classify(img) == _checksum(img, 11)
            # fresh connection, then pull the plug mid-attack
            oracle = external_oracle_connect(endpoint, timeout=10.0)
            x = images[0]
            y = _checksum(x, 11)
            cfg = AttackConfig(budget=500, initial_patch_size=4,
                               min_patch_size=2, seed=3)
            state = init_adversarial(oracle, x, y, cfg)
            assert state.queries_used >= 1
            server.kill()
            server.wait(timeout=10)
            with pytest.raises(OracleUnavailable) as exc:
                par_attack(oracle, state, cfg)
            partial = exc.value.state
            assert partial is state
            assert len(partial.log) == partial.queries_used >= 1
            assert all(e.phase == "init" for e in partial.log.entries)
            oracle.close()
        finally:
            server.kill()
            server.wait(timeout=10)
            server.stderr.close()


def test_acceptance_cli_determinism(tmp_path, capsys):
    # identical configs through the real command line twice: results.csv
    # and every curve file must match byte for byte
    with criterion("Identical runs produce byte-identical CSVs", capsys):
        suite_dir = tmp_path / "suite"
        cases = make_suite(n_images=3, seed=9, height=28, width=28,
                           channels=1, region_size=7, hot_regions=1)
        manifest = write_suite(suite_dir, cases)
        cfgp = tmp_path / "cfg.json"
        cfgp.write_text(json.dumps({
            "dataset": str(manifest), "oracle": {"kind": "energy"},
            "attack": {"budget": 120, "initial_patch_size": 14,
                       "min_patch_size": 7, "seed": 5}}))
        blobs = []
        for name in ("one", "two"):
            out = tmp_path / name
            proc = subprocess.run(
                [sys.executable, "-m", "par.cli", "run", "--config",
                 str(cfgp), "--out", str(out)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            payload = [(out / "results.csv").read_bytes()]
            for f in sorted((out / "curves").glob("*.csv")):
                payload.append(f.name.encode() + b"\0" + f.read_bytes())
            blobs.append(payload)
        assert blobs[0] == blobs[1]
