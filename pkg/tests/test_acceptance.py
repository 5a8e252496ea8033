"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The lines are printed in pytest's terminal summary, or directly when this
file is run as a script.
"""
import csv
import io
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from nlrl.data import TARGET_NAMES, generate, save_csv, target_vector
from nlrl.gradcheck import run_grad_check
from nlrl.layer import EPSILON, NegationMode, Variant, and_rule, or_rule, or_rule_kronecker, squash
from nlrl.logic import equivalent
from nlrl.network import NetworkSpec
from nlrl.rules import extract, init_from_formula, verify
from nlrl.train import TrainConfig, evaluate, measure_step_times, train, write_metrics_csv

from conftest import random_formula

GOLDEN = Path(__file__).parent / "data" / "golden_seed7_n16.csv"
REPORT = []

REPRO_ARCH = "2-4-4-10"
REPRO_SEEDS = (0, 1, 2)
REPRO_DATA_SEED = 0
REPRO_MODE = NegationMode.PER_INPUT_PER_RULE


def record(number, passed, detail, warn_only=False):
    status = "PASS" if passed else ("WARN" if warn_only else "FAIL")
    REPORT.append(f"[{status}] criterion {number}: {detail}")


def repro_config(seed):
    # lr 10, batch 20, init +-0.5; epsilon 1e-5 lives in the spec
    return TrainConfig(learning_rate=10.0, batch_size=20, init_range=0.5, seed=seed)


def repro_spec(mode=REPRO_MODE):
    return NetworkSpec.from_arch(REPRO_ARCH, Variant.AND_NONEG, mode, epsilon=1e-5)


def metrics_text(history, drop_timing=True):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for rec in history:
        writer.writerow(rec.row()[:-1] if drop_timing else rec.row())
    return buf.getvalue()


@pytest.fixture(scope="module")
def dataset():
    return generate(REPRO_DATA_SEED, 100_000)


@pytest.fixture(scope="module")
def repro_run(dataset):
    """First of three seeds reaching 90% overall, or the best of the three."""
    runs = []
    for seed in REPRO_SEEDS:
        t0 = time.perf_counter()
        net, history = train(repro_spec(), dataset, repro_config(seed))
        rec = evaluate(net, dataset, 0.1)
        runs.append({"seed": seed, "net": net, "history": history, "record": rec,
                     "seconds": time.perf_counter() - t0})
        if rec.overall >= 90.0:
            break
    return runs


def test_criterion_1_gradient_oracle():
    t0 = time.perf_counter()
    report = run_grad_check(trials=100, h=1e-5, seed=0)
    elapsed = time.perf_counter() - t0
    worst = report.worst()
    ok = report.passed and elapsed < 60
    record(1, ok, f"{len(report.trials)} trials, {len(report.failures())} failures, worst relative error "
                  f"{worst.worst_rel:.2e} ({worst.worst_coord}), {elapsed:.1f}s")
    assert report.passed, [t.worst_coord for t in report.failures()]
    assert elapsed < 60


def test_criterion_2_kronecker_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in range(1, 7):
        for _ in range(1000):
            xh = rng.random(n)
            A_raw = rng.normal(0, 3, (1, n))
            direct = or_rule(xh, A_raw)[0]
            kron = or_rule_kronecker(xh, squash(A_raw[0]))
            worst = max(worst, abs(direct - kron))
    record(2, worst <= 1e-12, f"max |kron - product| = {worst:.2e} over 6000 draws (bound 1e-12)")
    assert worst <= 1e-12


def test_criterion_3_de_morgan():
    rng = np.random.default_rng(3)
    worst_ratio = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        xh = rng.random(n)
        unit = np.full((1, n), 40.0)
        gap = abs(and_rule(xh, unit, EPSILON)[0] - (1.0 - or_rule(1.0 - xh, unit)[0]))
        worst_ratio = max(worst_ratio, gap / (n * 2 * EPSILON))
    record(3, worst_ratio <= 1.0, f"max gap / (n*2*eps) = {worst_ratio:.3f} over 1000 draws (bound 1)")
    assert worst_ratio <= 1.0


def test_criterion_4_boolean_round_trip():
    rng = np.random.default_rng(4)
    specs = [NetworkSpec.from_arch("4-16-1", v, NegationMode.PER_INPUT_PER_RULE) for v in Variant]
    bad, worst = [], 0.0
    for k in range(20):
        f = random_formula(rng, int(rng.integers(1, 5)))
        for spec in specs:
            net = init_from_formula(f, spec)
            g = extract(net).outputs[0].formula
            dev = verify(f, net)
            worst = max(worst, dev)
            if g is None or not equivalent(f, g, 4) or dev > 1e-2:
                bad.append((k, spec.variant.value))
    record(4, not bad, f"20 formulas x {len(specs)} variants, {len(bad)} mismatches, "
                       f"max corner deviation {worst:.2e} (bound 1e-2)")
    assert not bad


def test_criterion_5_reproduction(repro_run):
    best = max(repro_run, key=lambda r: r["record"].overall)
    tried = ", ".join(f"seed {r['seed']}: {r['record'].overall:.2f}% in {r['seconds']:.0f}s" for r in repro_run)
    total = sum(r["seconds"] for r in repro_run)
    ok = best["record"].overall >= 90.0 and total <= 15 * 60
    record(5, ok, f"{REPRO_ARCH} and-noneg ({REPRO_MODE.value}) overall accuracy at tau=0.1: {tried} "
                  f"(threshold 90%)")
    assert best["record"].overall >= 90.0
    assert total <= 15 * 60


def test_criterion_5_per_input_reference(dataset):
    """Information only: the same run with one shared negation per layer."""
    results = []
    for seed in REPRO_SEEDS:
        net, _ = train(repro_spec(NegationMode.PER_INPUT), dataset, repro_config(seed))
        results.append(evaluate(net, dataset, 0.1).overall)
    REPORT.append("[INFO] criterion 5 with per-input negation: "
                  + ", ".join(f"seed {s}: {a:.2f}%" for s, a in zip(REPRO_SEEDS, results)))


def test_criterion_6_xor_hardest(repro_run):
    rec = max(repro_run, key=lambda r: r["record"].overall)["record"]
    acc = rec.accuracy
    lowest = int(np.argmin(acc))
    ok = acc[4] == min(acc)
    detail = (f"x XOR y {acc[4]:.2f}%, lowest is f{lowest} ({TARGET_NAMES[lowest]}) at {acc[lowest]:.2f}%")
    record(6, ok, detail, warn_only=True)
    if not ok:
        warnings.warn(f"XOR is not the hardest function in this run: {detail}")


def test_criterion_7_timing_pattern():
    sizes = (2, 4, 6, 8, 10)
    specs = [NetworkSpec.from_arch(f"2-{c}-{c}-10", v) for c in sizes for v in Variant]
    times = measure_step_times(specs, repetitions=400, batch_size=20)
    table = {(s.sizes[1], s.variant): t for s, t in zip(specs, times)}
    problems, parts = [], []
    for c in sizes:
        t_or, t_neg, t_no = (table[c, v] for v in (Variant.AND_OR, Variant.AND_NEG, Variant.AND_NONEG))
        ratio = t_neg / t_no
        parts.append(f"CS{c} or/noneg {t_or / t_no:.2f} neg/noneg {ratio:.2f}")
        if t_or < t_no:
            problems.append(f"CS{c}: and-or faster than and-noneg")
        if abs(ratio - 1) > 0.2:
            problems.append(f"CS{c}: and-neg/and-noneg = {ratio:.2f}")
    record(7, not problems, "; ".join(parts))
    assert not problems


def test_criterion_8_determinism(dataset, repro_run):
    first = repro_run[-1]
    net, history = train(repro_spec(), dataset, repro_config(first["seed"]))
    same = metrics_text(history) == metrics_text(first["history"])
    record(8, same and net == first["net"],
           f"seed {first['seed']} rerun: metrics CSV (without elapsed_s) identical = {same}, "
           f"weights identical = {net == first['net']}")
    assert same
    assert net == first["net"]


def test_criterion_9_dataset_goldens(tmp_path):
    save_csv(generate(7, 16), tmp_path / "g.csv")
    golden_ok = (tmp_path / "g.csv").read_bytes() == GOLDEN.read_bytes()
    spots = {
        (1, 0): [0.5, 1, 0, 1, 1, 1, 0, 0, 1, 0.7],
        (1, 1): [1, 0, 1, 1, 0, 1, 1, 0, 0, 0.7],
        (0.5, 0.5): [0.5, 0.25, 0.25, 0.75, 0.4375, 0.5, 0.5, 0.5, 0.5, 0.7],
    }
    spots_ok = all(target_vector(*xy).tolist() == want for xy, want in spots.items())
    record(9, golden_ok and spots_ok, f"golden CSV byte-identical = {golden_ok}, target spot values exact = {spots_ok}")
    assert golden_ok and spots_ok


if __name__ == "__main__":
    import sys
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print("\n".join(REPORT))
    sys.exit(code)
