"""Acceptance checks; each prints a PASS/FAIL line in the terminal summary."""
import time

import numpy as np
import pytest

from acceptance_report import record
from naqbc.acquisition import (
    Pool,
    mean_pairwise_distance,
    select_coreset,
    select_dendiv_qbc,
    select_div_qbc,
    select_qbc,
)
from naqbc.cli import main
from naqbc.ensemble import Committee, ModelSpec, train_committee
from naqbc.harness import StepRecord, TrialSettings, run_trial
from naqbc.metrics import burden_from_log, cross_validate, efficiency, EfficiencyTable
from naqbc.nn import TrainConfig, forward, init_model
from naqbc.oracles import get_problem, make_test_set
from naqbc.synthesis import HyperRectangle, SynthesisConfig, boundary_loss, boundary_loss_gradient
from naqbc.synthesis import synthesize_queries
from naqbc.utils import make_rng

import reference as ref

# Training recipe used for the SINE end-to-end checks (see README).
SINE_SETTINGS = TrialSettings(
    train=TrainConfig(learning_rate=1e-3, max_epochs=100, patience=100, batch_size=64,
                      warm_start=True),
    weight_init="he", bias_init="fan_in")


def test_criterion_1_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    h, worst = 1e-4, 0.0
    for trial in range(100):
        rng = make_rng(trial, "acceptance-1")
        d_x, d_y = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        width = int(rng.integers(3, 12))
        n = int(rng.integers(2, 6))
        c = Committee([init_model((d_x, width, width, d_y), "tanh", 1000 * trial + i,
                                  bias_init="fan_in") for i in range(n)])
        x = rng.uniform(-1, 1, d_x)
        g = c.qbc_variance_gradient(x)
        q = lambda z: float(c.qbc_variance(z))  # noqa: E731
        fd = np.array([(q(x + h * e) - q(x - h * e)) / (2 * h) for e in np.eye(d_x)])
        scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    record(1, ok, f"max relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_2_variance_equals_two_pass():
    c = Committee([init_model((3, 10, 10, 2), "tanh", s, bias_init="fan_in") for s in range(7)])
    X = make_rng(2, "acceptance-2").uniform(-1, 1, (1000, 3))
    fast = c.qbc_variance(X)
    naive = []
    for x in X:
        outs = [forward(m, x) for m in c.members]
        mu = sum(outs) / len(outs)
        naive.append(float(np.mean(sum((o - mu) ** 2 for o in outs) / len(outs))))
    err = float(np.max(np.abs(fast - np.array(naive))))
    ok = err <= 1e-12
    record(2, ok, f"max abs difference {err:.1e} on 1000 probes (<= 1e-12)")
    assert ok


def test_criterion_3_boundary_loss_exact():
    d1, d2 = HyperRectangle.unit(1), HyperRectangle.unit(2)
    cases = [
        boundary_loss(np.array([0.3]), d1) == 0.0,
        boundary_loss(np.array([1.5]), d1, 1.0) == 0.5,
        boundary_loss(np.array([1.25, -3.0]), d2, 2.0) == 4.5,
    ]
    box = HyperRectangle(np.array([-1.0, 0.0, 2.0]), np.array([1.0, 3.0, 2.5]))
    rng = make_rng(3, "acceptance-3")
    h, worst = 1e-6, 0.0
    for _ in range(500):
        x = rng.uniform(-4, 5, 3)
        if np.any(np.abs(np.abs(x - box.midpoint) - box.ranges / 2) < 1e-3):
            continue
        fd = np.array([(boundary_loss(x + h * e, box, 1.7) - boundary_loss(x - h * e, box, 1.7))
                       / (2 * h) for e in np.eye(3)])
        worst = max(worst, float(np.max(np.abs(fd - boundary_loss_gradient(x, box, 1.7)))))
    ok = all(cases) and worst < 1e-6
    record(3, ok, f"hand cases {sum(cases)}/3 exact, gradient vs differences {worst:.1e}")
    assert ok


def test_criterion_4_selectors_match_brute_force():
    from conftest import TableCommittee

    t0 = time.perf_counter()
    mismatches = 0
    for trial in range(200):
        rng = make_rng(trial, "acceptance-4")
        n, dim = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        X = rng.uniform(-1, 1, (n, dim))
        v = rng.uniform(0, 1, n)
        if trial % 3 == 0:
            v = np.round(v, 1)
        k = int(rng.integers(1, n + 1))
        T = rng.uniform(-1, 1, (int(rng.integers(1, 4)), dim))
        c, pool, pts = TableCommittee(X, v), Pool(X, 1, k), X.tolist()
        mismatches += select_qbc(c, pool, k).tolist() != ref.qbc_topk(v.tolist(), k)
        mismatches += select_div_qbc(c, pool, k).tolist() != ref.greedy(pts, v.tolist(), k)
        mismatches += select_dendiv_qbc(c, pool, k).tolist() != ref.greedy(pts, v.tolist(), k,
                                                                           True)
        mismatches += select_coreset(T, pool, k).tolist() != ref.coreset(T.tolist(), pts, k)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    record(4, ok, f"{mismatches} mismatches over 200 pools x 4 selectors, {elapsed:.1f}s")
    assert ok


def test_criterion_5_mode_collapse():
    t0 = time.perf_counter()
    p = get_problem("sine", n_ens=5, hidden=(20,) * 4, k=10)
    test_set = make_test_set(p, 0)
    spread = {}
    for gamma in (2, 256):
        vals = []
        for seed in range(5):
            run = run_trial(p, "qbc", gamma, seed, budget_steps=4, settings=SINE_SETTINGS,
                            test_set=test_set)
            third = run.X[p.n_0 + 2 * p.k:p.n_0 + 3 * p.k]
            vals.append(mean_pairwise_distance(third))
        spread[gamma] = float(np.mean(vals))
    elapsed = time.perf_counter() - t0
    ok = spread[256] < spread[2] and elapsed < 600
    record(5, ok, f"mean intra-batch distance gamma=256 {spread[256]:.3f} vs gamma=2 "
                  f"{spread[2]:.3f}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_ascent_improves_variance():
    p = get_problem("sine")
    rng = make_rng(6, "acceptance-6")
    X = p.domain.sample(200, rng)
    spec = ModelSpec(p.widths, "relu", "he", "fan_in")
    committee = train_committee(spec, X, p.label(X), SINE_SETTINGS.train, base_seed=6,
                                n_members=p.n_ens)
    cfg = SynthesisConfig(steps=300, learning_rate=0.01, boundary_strength=1.0)
    improved, inside = 0, True
    for call in range(20):
        r = synthesize_queries(committee, p.domain, p.k, cfg, rng=make_rng(call, "calls"))
        improved += committee.qbc_variance(r.queries).mean() >= \
            committee.qbc_variance(r.initial).mean()
        inside &= bool(np.all(p.domain.contains(r.queries)))
    ok = improved >= 18 and inside
    record(6, ok, f"{improved}/20 calls improved mean variance (>= 18), "
                  f"all queries inside: {inside}")
    assert ok


@pytest.mark.slow
def test_criterion_7_sine_efficiency():
    t0 = time.perf_counter()
    p = get_problem("sine")
    test_set = make_test_set(p, 0)
    burdens = {}
    for method in ("na_qbc", "random"):
        burdens[method] = []
        for seed in range(3):
            run = run_trial(p, method, None, seed, budget_steps=80, settings=SINE_SETTINGS,
                            test_set=test_set)
            burdens[method].append(burden_from_log(run.step_log)
                                   if run.status == "stopped_at_target" else None)
    etas = efficiency(burdens["na_qbc"], burdens["random"])
    eta = float(np.mean(etas))
    ok = eta < 1.0
    record(7, ok, f"mean eta {eta:.3f} over {len(etas)} pairs (< 1.0); burdens "
                  f"na_qbc={burdens['na_qbc']} random={burdens['random']}, "
                  f"{(time.perf_counter() - t0) / 60:.1f} min")
    assert ok


def test_criterion_8_stopping_rule_and_rerun(tmp_path):
    log, hits = [], 0
    for step in range(10):
        hit = step in {2, 3, 5, 6, 7}
        hits += hit
        log.append(StepRecord(step, 80 + 40 * step, 0.0, hit, hits, 0.0))
    rule_ok = burden_from_log(log) == log[7].train_size

    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nproblem = sine\nmethod = na_qbc\nseeds = 0..1\nbudget_steps = 3\n"
                   "[problem]\nhidden = 8,8\nn_ens = 3\nn_test = 200\n"
                   "[training]\nmax_epochs = 20\npatience = 20\n")
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(ini), "--output-dir", str(a)])
    main(["run", "--manifest", str(a / "manifest.json"), "--output-dir", str(b)])
    logs = sorted(f.name for f in a.glob("steplog_*.csv"))
    same = bool(logs) and all((a / n).read_bytes() == (b / n).read_bytes() for n in logs)
    ok = rule_ok and same
    record(8, ok, f"fifth hit at step 7: {rule_ok}; {len(logs)} step logs byte-identical "
                  f"on rerun: {same}")
    assert ok


def test_criterion_9_metric_arithmetic():
    worked = efficiency([800], [1000]) == [0.8]
    t = EfficiencyTable()
    for prob, (b2, b4) in {"A": (80, 120), "B": (110, 90), "C": (50, 70)}.items():
        t.add(prob, "random", None, 0, 100)
        t.add(prob, "qbc", 2, 0, b2)
        t.add(prob, "qbc", 4, 0, b4)
    # gamma* per problem: A -> 2, B -> 4, C -> 2
    hand = {"A": (1.2 + 0.8) / 2, "B": (1.1 + 1.1) / 2, "C": (0.5 + 0.7) / 2}
    got = cross_validate(t, ["A", "B", "C"]).eta_cv["qbc"]
    ok = worked and got == hand
    record(9, ok, f"efficiency([800],[1000]) == [0.8]: {worked}; crossval {got} == {hand}")
    assert ok
