"""Acceptance criteria. Each test records one PASS/FAIL line (see the
``acceptance criteria`` section of the terminal summary).

Shared fixture: Erdos-Renyi graph with N = 234, p = 0.05, seed 0, normalized
Laplacian shift, J = 5 filters and L = 5 layers (0 .. 4).
"""
import time

import numpy as np
import pytest

from pgst.cli import main
from pgst.experiments import (
    accuracy,
    er_shift,
    make_setup,
    nearest_centroid,
    sbm_shift,
    sensitivity_pair,
    signal_trial,
    source_localization,
    structural_trial,
    time_transforms,
)
from pgst.io import save_edge_list, save_signals
from pgst.scattering import fit_tree, gst, pgst, prune_decide, transform_with_tree

from conftest import random_shift, record
from oracles import children_dense, enumerate_alignment, random_instance

pytestmark = pytest.mark.acceptance

FAMILIES = ("diffusion", "monic_cubic", "tight_hann")
J, L, TAU = 5, 5, 0.01


@pytest.fixture(scope="module")
def er():
    return er_shift(234, 0.05, seed=0)


@pytest.fixture(scope="module")
def er_setups(er):
    return {f: make_setup(er, f, J) for f in FAMILIES}


@pytest.fixture(scope="module")
def er_signal():
    return np.random.default_rng(0).standard_normal(234)


def test_c01_pruning_matches_exhaustive_maximizer():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    taus = (0.01, 0.1, 0.5)
    for i in range(200):
        lam, V, H, z = random_instance(rng, n_max=16, j_max=4)
        tau = taus[i % 3]
        want, _ = enumerate_alignment(lam, V, H, z, tau)
        got = prune_decide(z, children_dense(V, H, z), tau)
        mismatches += not np.array_equal(got, want)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 10
    record(1, "pruning flags equal the exhaustive 2^J maximizer", ok,
           f"200 instances, {mismatches} mismatches, {dt:.1f} s")
    assert ok


def test_c02_full_tree_has_781_coefficients(tmp_path, er, er_signal):
    edges = [(int(u), int(v), 1.0) for u, v in zip(*np.nonzero(np.triu(er.toarray() != 0, 1)))]
    save_edge_list(tmp_path / "g.tsv", edges)
    save_signals(tmp_path / "x.csv", er_signal)
    t0 = time.perf_counter()
    code = main(["transform", "--graph", str(tmp_path / "g.tsv"), "--signals", str(tmp_path / "x.csv"),
                 "--full", "--J", "5", "--L", "5", "--out", str(tmp_path / "out")])
    dt = time.perf_counter() - t0
    n_rows = len((tmp_path / "out" / "features.csv").read_text().splitlines()) - 1
    ok = code == 0 and n_rows == 781 and dt < 1
    record(2, "transform --full with J=5, L=5 writes 781 coefficients", ok, f"{n_rows} rows, {dt:.2f} s")
    assert ok


def test_c03_norm_preservation_and_frame_sandwich():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_norm = worst_lower = worst_upper = 0.0
    nodes = 0
    for g in range(20):
        s = random_shift(int(rng.integers(10, 41)), p=0.2, seed=100 + g, weighted=bool(g % 2))
        for family in FAMILIES:
            setup = make_setup(s, family, 4)
            # bounds valid on the kernel grid and on this graph's eigenvalues
            A = min(setup.bank.A, setup.op.frame_bounds()[0])
            B = setup.B
            for _ in range(20):
                _, tree = gst(setup.op, rng.standard_normal(s.n), None, 3)
                for path, node in tree.nodes.items():
                    if len(path) == 2:
                        continue
                    z = node.z
                    h = setup.op.apply(z)
                    norms = np.linalg.norm(h, axis=1)
                    worst_norm = max(worst_norm, float(np.max(np.abs(np.linalg.norm(np.abs(h), axis=1) - norms))))
                    energy, zz = float(np.sum(norms**2)), float(z @ z)
                    worst_lower = max(worst_lower, (A * A * zz - energy) / zz)
                    worst_upper = max(worst_upper, (energy - B * B * zz) / zz)
                    nodes += 1
    dt = time.perf_counter() - t0
    ok = worst_norm <= 1e-12 and worst_lower <= 1e-9 and worst_upper <= 1e-9 and dt < 60
    record(3, "nonlinearity preserves norms and every node satisfies the frame sandwich", ok,
           f"{nodes} nodes, max norm gap {worst_norm:.1e}, max relative excess {max(worst_lower, worst_upper):.1e}, "
           f"{dt:.1f} s")
    assert ok


def test_c04_signal_bounds_dominate(er_setups, er_signal):
    t0 = time.perf_counter()
    violations = trials = 0
    worst_tight = 0.0
    for family in ("tight_hann", "monic_cubic"):
        setup = er_setups[family]
        for snr in (0.0, 10.0, 20.0):
            for t in range(100):
                for tau in (None, TAU):
                    r = signal_trial(setup, er_signal, L, tau, snr, "random", seed=(4, int(snr), t), trial=t)
                    trials += 1
                    violations += not r.measured <= r.bound + 1e-9
                    if family == "tight_hann":
                        d = r.inputs["delta_norm"]
                        worst_tight = max(worst_tight, abs(r.bound - d) / d)
    dt = time.perf_counter() - t0
    ok = violations == 0 and worst_tight <= 1e-6 and dt < 300
    record(4, "signal stability bounds dominate the measured feature distance", ok,
           f"{trials} trials, {violations} violations, tight-frame bound vs ||delta|| rel gap {worst_tight:.1e}, "
           f"{dt:.0f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the invariance condition omits the first-order cross term "
                                       "2 <h z, h delta> and admits counterexamples on this fixture")
def test_c05_invariance_condition_implies_same_tree(er_setups, er_signal):
    t0 = time.perf_counter()
    signals = {"gauss": er_signal, "abs": np.abs(er_signal)}
    held = counterexamples = sound_held = sound_counterexamples = 0
    per_family = {}
    for family in FAMILIES:
        for name, x in signals.items():
            c = 0
            for t in range(150):
                snr = (20.0, 30.0, 40.0)[t % 3]
                mode = ("random", "localized")[t % 2]
                r = signal_trial(er_setups[family], x, L, TAU, snr, mode, seed=(5, t), trial=t)
                moved = r.inputs["tree_diff"] > 0
                if r.inputs["invariance_flags"]:
                    held += 1
                    counterexamples += moved
                    c += moved
                if r.inputs["invariance_flags_sound"]:
                    sound_held += 1
                    sound_counterexamples += moved
            per_family[f"{family}/{name}"] = c
    dt = time.perf_counter() - t0
    ok = held >= 100 and counterexamples == 0 and dt < 300
    record(5, "all invariance flags hold => tree unchanged", ok,
           f"flags held in {held} trials, {counterexamples} counterexamples {per_family}; "
           f"cross-term flags held in {sound_held}, {sound_counterexamples} counterexamples; {dt:.0f} s")
    assert held >= 100
    assert counterexamples == 0


def test_c06_structural_deviation_and_conditional_dominance(er_setups, er_signal):
    t0 = time.perf_counter()
    eps = 0.01
    small = random_shift(40, p=0.15, seed=0)
    configs = [
        ("ER234/tight_hann L=5 tau=0.01", er_setups["tight_hann"], er_signal, L, TAU),
        ("N40/monic_cubic L=3 tau=0.1", make_setup(small, "monic_cubic", J), np.random.default_rng(0).standard_normal(40),
         3, 0.1),
    ]
    detail = []
    ok = True
    for label, setup, x, depth, tau in configs:
        dev_fail = held = dom_fail = 0
        worst = 0.0
        for t in range(50):
            o = structural_trial(setup, x, depth, tau, eps, seed=(6, t), trial=t)
            dev_fail += not o.deviation_ok
            worst = max(worst, o.worst_deviation_ratio)
            if o.flags_hold:
                held += 1
                dom_fail += not o.report.measured <= o.report.bound + 1e-9
        ok &= dev_fail == 0 and dom_fail == 0
        detail.append(f"{label}: deviation violations {dev_fail} (worst ratio {worst:.2f}), "
                      f"flags held {held}/50, dominance failures {dom_fail}")
        last_held = held
    dt = time.perf_counter() - t0
    # the conditional claim must be exercised at least somewhere
    ok &= last_held > 0 and dt < 300
    record(6, "per-layer structural deviation bound and conditional structural bound", ok,
           "; ".join(detail) + f"; {dt:.0f} s")
    assert ok


def test_c07_localized_noise_moves_the_tree_more():
    # tight-Hann bank with J = 5, L = 3, tau = 0.1, the sensitivity configuration
    t0 = time.perf_counter()
    setup = make_setup(sbm_shift((40, 40, 40), 0.3, 0.02, seed=1), "tight_hann", J)
    x = np.random.default_rng(0).standard_normal(setup.shift.n)
    medians = {}
    for snr in (-20.0, 20.0, 30.0, 40.0):
        pairs = [sensitivity_pair(setup, x, 3, 0.1, snr, seed=(7, s)) for s in range(50)]
        medians[snr] = (float(np.median([p.diff_random for p in pairs])),
                        float(np.median([p.diff_localized for p in pairs])))
    dt = time.perf_counter() - t0
    rnd, loc = medians[-20.0]
    ok = loc > rnd and all(medians[s] == (0.0, 0.0) for s in (20.0, 30.0, 40.0)) and dt < 300
    record(7, "localized noise changes the pruned tree more than random noise", ok,
           "median (random, localized) " + ", ".join(f"{s:g} dB {m}" for s, m in medians.items()) + f"; {dt:.0f} s")
    assert ok


def test_c08_tree_size_monotone_in_tau(er_setups, er_signal):
    t0 = time.perf_counter()
    ok = True
    detail = []
    for family, setup in er_setups.items():
        sizes = [len(pgst(setup.op, er_signal, None, L, tau)[1]) for tau in np.logspace(-5, 1, 25)]
        top = len(pgst(setup.op, er_signal, None, L, setup.B**2)[1])
        mono = all(a >= b for a, b in zip(sizes, sizes[1:]))
        ok &= mono and top == 1
        detail.append(f"{family}: {sizes[0]}..{sizes[-1]} monotone={mono}, |T| at B^2 = {top}")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    record(8, "tree size is non-increasing in tau and tau >= B^2 leaves the root only", ok,
           "; ".join(detail) + f"; {dt:.1f} s")
    assert ok


def test_c09_pruned_transform_is_faster(er_setups, er_signal):
    t0 = time.perf_counter()
    r = time_transforms(er_setups["tight_hann"], er_signal, L, TAU, repeats=5)
    dt = time.perf_counter() - t0
    ok = r["speedup"] > 1 and dt < 120
    record(9, "pruned transform at tau=0.01 is faster than the full transform", ok,
           f"GST {r['gst_nodes']} nodes {r['gst_seconds'] * 1e3:.1f} ms, pGST {r['pgst_nodes']} nodes "
           f"{r['pgst_seconds'] * 1e3:.1f} ms, speedup {r['speedup']:.2f}")
    assert ok


def test_c10_source_localization_smoke():
    t0 = time.perf_counter()
    task = source_localization(blocks=(30, 90), n_samples=200, snr_db=20.0, seed=0)
    setup = make_setup(task.shift, "tight_hann", J)
    train, test = slice(0, 100), slice(100, 200)
    tree = fit_tree([(setup.op, v) for v in task.signals[train]], None, L, TAU)

    def features(rows):
        return np.array([transform_with_tree(setup.op, v, None, tree).values for v in rows])

    pred = nearest_centroid(features(task.signals[train]), task.labels[train], features(task.signals[test]))
    acc = accuracy(pred, task.labels[test])
    dt = time.perf_counter() - t0
    ok = acc >= 0.9 and dt < 120
    record(10, "2-class SBM source localization with nearest centroid", ok,
           f"accuracy {acc:.3f} with {len(tree)} coefficients, {dt:.1f} s")
    assert ok


def test_c11_permutation_invariance(er, er_setups, er_signal):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    psi, tree = pgst(er_setups["tight_hann"].op, er_signal, None, L, TAU)
    worst = 0.0
    tree_mismatch = 0
    for _ in range(50):
        perm = rng.permutation(er.n)
        setup = make_setup(er.permuted(perm), "tight_hann", J)
        psi_p, tree_p = pgst(setup.op, er_signal[perm], None, L, TAU)
        if tree_p.active_paths != tree.active_paths:
            tree_mismatch += 1
            continue
        worst = max(worst, float(np.max(np.abs(psi_p.values - psi.values))))
    dt = time.perf_counter() - t0
    ok = tree_mismatch == 0 and worst <= 1e-9 and dt < 60
    record(11, "pruned transform is invariant to node relabeling", ok,
           f"50 permutations, {tree_mismatch} tree mismatches, max coefficient gap {worst:.1e}, {dt:.1f} s")
    assert ok
