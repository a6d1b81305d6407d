"""
Acceptance criteria 1-14, one test each.

Every test appends a ``PASS``/``FAIL`` line to ``RESULTS``; conftest prints
them in the terminal summary, and they are echoed to stdout for ``-s`` runs.
"""

import os
import resource
import time

import numpy as np
import pytest

from gdw.experiments import run_dir_experiment, run_fp_experiment
from gdw.fp import feature_propagate, harmonic_closed_form
from gdw.graph import Graph, Norm, build_normalized, set_num_threads, spmm
from gdw.homophily import effective_homophily, node_homophily, two_hop_matrices, weighted_node_homophily
from gdw.labels import LabelVector
from gdw.learn import TrainConfig
from gdw.operators import ppr_matrix, precompute_sign_features, triangle_counts
from gdw.spectral import dense_eigh, graph_fourier_transform, high_frequency_fraction, laplacian_decomposition
from gdw.synth import (gen_class_features, gen_erdos_renyi, gen_pa_labeled, make_rng, random_mask,
                       target_homophily_compat)
from gdw.wl import color_refine, distinguishable

from conftest import dense_adjacency, random_graph
from oracles import (as_partition, brute_node_homophily, brute_triangle_weights, max_group_rel_error,
                     oracle_partitions, refines, small_instance)

RESULTS = []
TRAIN_CFG = TrainConfig(lr=0.01, patience=100, max_epochs=1000)


def record(num, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {num:2d}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def connected_er(rng, n, p):
    while True:
        g = gen_erdos_renyi(n, p, directed=False, seed=int(rng.integers(2**32)))
        if np.all(g.connected_components() == 0):
            return g


def fp_instance(rng, n_lo=30, n_hi=200, d=3):
    n = int(rng.integers(n_lo, n_hi + 1))
    g = connected_er(rng, n, max(0.05, 3.0 / n))
    X = rng.standard_normal((n, d))
    mask = rng.random((n, d)) < rng.uniform(0.2, 0.8)
    return g, X, mask


def test_c01_fp_matches_closed_form():
    rng = np.random.default_rng(101)
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(50):
        g, X, mask = fp_instance(rng)
        fp = feature_propagate(g, X, mask, max_iters=5000, tol=0).X
        cf = harmonic_closed_form(g, X, mask)
        keep = mask.any(axis=0)
        worst = max(worst, float(np.max(np.abs(fp - cf)[:, keep])))
    secs = time.perf_counter() - t0
    ok = worst < 1e-8 and secs < 60
    assert record(1, "FP vs closed form", ok, f"max |diff| = {worst:.3e} (< 1e-8), {secs:.1f} s (< 60 s)")


def test_c02_fp_fixpoint_and_init_independence():
    rng = np.random.default_rng(202)
    tol = 1e-7
    fix_gap = init_gap = 0.0
    bitwise = True
    for _ in range(100):
        g, X, mask = fp_instance(rng, 20, 80)
        r = feature_propagate(g, X, mask, max_iters=100000, tol=tol)
        S = build_normalized(g, Norm.SYM)
        fix_gap = max(fix_gap, float(np.max(np.abs(r.X - spmm(S, r.X))[~mask], initial=0.0)))
        bitwise &= bool(np.array_equal(r.X[mask], X[mask]))
        a = feature_propagate(g, X, mask, max_iters=5000, tol=0).X
        b = feature_propagate(g, X, mask, max_iters=5000, tol=0,
                              init=rng.standard_normal(X.shape) * 10).X
        init_gap = max(init_gap, float(np.max(np.abs(a - b))))
    ok = fix_gap <= 10 * tol and init_gap < 1e-6 and bitwise
    assert record(2, "FP fixpoint / init independence", ok,
                  f"fixpoint gap {fix_gap:.2e} (<= 1e-6), init gap {init_gap:.2e} (< 1e-6), "
                  f"observed entries bitwise kept: {bitwise}")


def undirected(n, pairs):
    s, d = zip(*pairs)
    return Graph.from_edges(n, s, d, directed=False)


def test_c03_wl_fixtures():
    cycle = Graph.from_edges(3, [0, 1, 2], [1, 2, 0], directed=True)
    tourn = Graph.from_edges(3, [0, 0, 1], [1, 2, 2], directed=True)
    sink2 = Graph.from_edges(4, [2, 3], [0, 0], directed=True)
    two_sinks = Graph.from_edges(4, [2, 3], [0, 1], directed=True)
    triangles = undirected(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    hexagon = undirected(6, [(i, (i + 1) % 6) for i in range(6)])
    checks = {
        "cycle/tournament D-WL distinguishes": distinguishable(cycle, tourn, "d_wl"),
        "cycle/tournament U-WL does not": not distinguishable(cycle, tourn, "u_wl"),
        "cycle one D-WL class": color_refine(cycle, "d_wl").partition() == [(0, 1, 2)],
        "tournament three D-WL classes": color_refine(tourn, "d_wl").partition() == [(0,), (1,), (2,)],
        "in-degree pair D-WL distinguishes": distinguishable(sink2, two_sinks, "d_wl"),
        "in-degree pair OUT_ONLY does not": not distinguishable(sink2, two_sinks, "out_only"),
        "two triangles/6-cycle WL1 does not": not distinguishable(triangles, hexagon, "wl1"),
    }
    failed = [k for k, v in checks.items() if not v]
    assert record(3, "WL fixtures", not failed, "all 7 checks hold" if not failed else f"failed: {failed}")


def test_c04_refinement_lattice():
    rng = np.random.default_rng(404)
    bad_oracle = bad_lattice = 0
    for _ in range(1000):
        g = random_graph(rng, int(rng.integers(1, 13)), float(rng.uniform(0.05, 0.6)))
        d = color_refine(g, "d_wl", max_iters=g.n)
        u = color_refine(g, "u_wl", max_iters=g.n)
        for col, mode in ((d, "d_wl"), (u, "u_wl")):
            if [as_partition(c) for c in col.history] != oracle_partitions(g, mode, len(col.history) - 1):
                bad_oracle += 1
        # the shorter history has stabilized, so compare against its final partition
        T = max(len(d.history), len(u.history))
        for t in range(T):
            pd = as_partition(d.history[min(t, len(d.history) - 1)])
            pu = as_partition(u.history[min(t, len(u.history) - 1)])
            if not refines(pd, pu):
                bad_lattice += 1
                break
    ok = bad_oracle == 0 and bad_lattice == 0
    assert record(4, "D-WL refines U-WL", ok,
                  f"1000 graphs, oracle mismatches {bad_oracle}, lattice violations {bad_lattice}")


def test_c05_homophily():
    g = Graph.from_edges(6, [0, 0, 1, 1, 2, 2, 3, 3], [2, 3, 2, 3, 4, 5, 4, 5], directed=True)
    y = LabelVector(np.array([0, 0, 1, 1, 2, 2]), 3)
    m = two_hop_matrices(g)
    h = {k: weighted_node_homophily(m[k], y, zero_diag=True) for k in ("A", "A^T A", "A A^T")}
    fixture_ok = h == {"A": 0.0, "A^T A": 1.0, "A A^T": 1.0}
    rng = np.random.default_rng(505)
    worst, oracle_worst = 0.0, 0.0
    for _ in range(100):
        while True:
            gr = random_graph(rng, int(rng.integers(2, 60)), float(rng.uniform(0.05, 0.4)))
            if gr.num_edges:
                break
        yr = LabelVector(rng.integers(0, int(rng.integers(2, 5)), gr.n), 5)
        base = node_homophily(gr, yr)
        worst = max(worst, abs(weighted_node_homophily(gr.adjacency, yr) - base))
        oracle_worst = max(oracle_worst, abs(base - brute_node_homophily(gr, yr)))
    ok = fixture_ok and worst < 1e-12 and oracle_worst < 1e-12
    assert record(5, "homophily fixtures", ok,
                  f"fixture {h}, weighted vs unweighted {worst:.1e}, vs brute force {oracle_worst:.1e}")


def test_c06_effective_homophily_trend():
    gains = {}
    for h in (0.1, 0.9):
        H = target_homophily_compat(5, h)
        vals = []
        for seed in range(20):
            g, y = gen_pa_labeled(1000, 5, 2, H, seed=seed)
            r = effective_homophily(g, y)
            vals.append(r.h_d_eff - r.h_u_eff)
        gains[h] = float(np.mean(vals))
    ok = gains[0.1] > 0 and gains[0.1] > gains[0.9]
    assert record(6, "effective homophily gain", ok,
                  f"mean gain h=0.1: {gains[0.1]:.4f} (> 0), h=0.9: {gains[0.9]:.4f} (< h=0.1)")


@pytest.mark.slow
def test_c07_directionality_ablation():
    t0 = time.perf_counter()
    rows, good = [], 0
    for seed in range(5):
        a = run_dir_experiment(5000, 0.001, seed=seed, cfg=TRAIN_CFG)["accuracy"]
        rows.append(a)
        good += (a["BOTH"] >= 0.90 and a["UNDIRECTED"] <= 0.60
                 and all(0.60 <= a[k] <= 0.90 for k in ("FWD_ONLY", "BWD_ONLY")))
    secs = time.perf_counter() - t0
    ok = good >= 3 and secs < 300
    mean = {k: round(float(np.mean([r[k] for r in rows])), 3) for k in rows[0]}
    assert record(7, "directionality ablation", ok,
                  f"{good}/5 seeds meet all bands, mean {mean}, {secs:.0f} s (< 300 s)")


@pytest.mark.slow
def test_c08_fp_downstream_robustness():
    g, y = gen_pa_labeled(2000, 5, 2, target_homophily_compat(5, 0.9), seed=7)
    X = gen_class_features(y, 16, 3.0, 1.0, seed=8)
    methods = ["fp", "zero", "random", "global_mean", "neighbor_mean"]
    r = run_fp_experiment(g, X, y, [0.99], methods, ["sym_selfloop^1", "sym_selfloop^2"],
                          TRAIN_CFG, trials=5, seed=1)
    res = r["results"]["0.99"]
    acc = {m: res[m]["mean"] for m in methods}
    drop = res["fp"]["relative_drop"]
    ok = all(acc["fp"] >= acc[m] for m in methods) and drop <= 0.15
    assert record(8, "FP downstream robustness", ok,
                  f"full {r['full_features']['mean']:.3f}, at 99% missing "
                  + ", ".join(f"{m} {v:.3f}" for m, v in acc.items())
                  + f"; FP relative drop {drop:.3f} (<= 0.15)")


def test_c09_gradient_check():
    rng = np.random.default_rng(909)
    worst = 0.0
    for _ in range(20):
        model, bank, y = small_instance(rng)
        wd = float(rng.choice([0.0, 0.01]))
        worst = max(worst, max_group_rel_error(model, bank, y, np.arange(bank.n), wd))
    assert record(9, "gradient check", worst < 1e-4, f"max relative error {worst:.2e} (< 1e-4)")


@pytest.mark.xfail(strict=True, reason="64 terms leave a tail of order (1-alpha)^64, far above 1e-6 "
                                       "for alpha=0.05; see the decisions ledger")
def test_c10_ppr_truncation():
    rng = np.random.default_rng(1010)
    worst = {0.05: 0.0, 0.15: 0.0}
    bound_ok = True
    for _ in range(20):
        n = int(rng.integers(5, 101))
        g = gen_erdos_renyi(n, float(rng.uniform(0.05, 0.3)), seed=int(rng.integers(2**32)))
        B = build_normalized(g, Norm.SYM_SELFLOOP)
        Bd = B.toarray()
        for a in worst:
            exact = a * np.linalg.inv(np.eye(n) - (1 - a) * Bd)
            err = float(np.max(np.abs(ppr_matrix(B, a, 64).toarray() - exact)))
            worst[a] = max(worst[a], err)
            bound_ok &= err <= (1 - a) ** 64 / a
    ok = max(worst.values()) < 1e-6
    assert record(10, "PPR truncation", ok,
                  f"max error alpha=0.05: {worst[0.05]:.2e}, alpha=0.15: {worst[0.15]:.2e} (< 1e-6); "
                  f"geometric tail bound holds: {bound_ok}")


def test_c11_triangles():
    rng = np.random.default_rng(1111)
    bad = 0
    for _ in range(50):
        g = random_graph(rng, int(rng.integers(3, 51)), float(rng.uniform(0.05, 0.5)),
                         directed=bool(rng.integers(2)))
        W = brute_triangle_weights(dense_adjacency(g.symmetrized()))
        bad += not np.array_equal(triangle_counts(g).toarray(), W)
    assert record(11, "triangle operator", bad == 0, f"{50 - bad}/50 graphs match brute force exactly")


def test_c12_eigensolver():
    rng = np.random.default_rng(1212)
    res = pars = null = 0.0
    for n in (1, 7, 40, 100, 200):
        B = rng.standard_normal((n, n))
        M = B + B.T
        dec = dense_eigh(M, method="jacobi")
        U, w = dec.eigenvectors, dec.eigenvalues
        res = max(res, float(np.max(np.abs(M @ U - U * w))))
        x = rng.standard_normal((n, 3))
        pars = max(pars, float(np.max(np.abs(np.sum((U.T @ x) ** 2, 0) - np.sum(x ** 2, 0)))))
    for seed in range(5):
        g = connected_er(np.random.default_rng(seed), int(40 + 30 * seed), 0.1)
        v = laplacian_decomposition(g).eigenvectors[:, 0]
        want = np.sqrt(g.out_degree.astype(float))
        null = max(null, float(np.max(np.abs(v - want / np.linalg.norm(want)))))
    ok = res < 1e-8 and pars < 1e-8 and null < 1e-8
    assert record(12, "eigensolver", ok,
                  f"residual {res:.1e}, Parseval {pars:.1e}, null vector {null:.1e} (all < 1e-8)")


def test_c13_low_pass_trend():
    g, y = gen_pa_labeled(400, 5, 3, np.eye(5), seed=3)
    X = gen_class_features(y, 8, 3.0, 1.0, seed=4)
    dec = laplacian_decomposition(g)
    hf = []
    for i, rate in enumerate([0.3, 0.6, 0.9]):
        Xh = feature_propagate(g, X, random_mask(g.n, 8, rate, seed=100 + i)).X
        lam, coef = graph_fourier_transform(g, Xh, decomposition=dec)
        hf.append(high_frequency_fraction(lam, coef))
    ok = hf[0] > hf[1] > hf[2]
    assert record(13, "low-pass trend", ok,
                  "high-frequency fraction " + " > ".join(f"{v:.4f}" for v in hf))


def _available_bytes():
    try:
        with open("/proc/meminfo") as f:
            for line in f:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return None


@pytest.mark.slow
def test_c14_performance_soft():
    specs = ["sym_selfloop^1", "sym_selfloop^2", "row_fwd^1", "row_bwd^1"]
    # slice first: it needs little memory and checks the reference path
    gs = gen_erdos_renyi(10**4, 10.0 / 10**4, directed=True, seed=14)
    Xs = make_rng(15).standard_normal((gs.n, 64))
    set_num_threads(1)
    try:
        a = precompute_sign_features(gs, Xs, specs)
        b = precompute_sign_features(gs, Xs, specs)
    finally:
        set_num_threads(os.cpu_count() or 1)
    deterministic = all(np.array_equal(p, q) for p, q in zip(a.blocks, b.blocks))
    del a, b

    n, m, d = 10**6, 10**7, 64
    avail = _available_bytes()
    # graph, features and five dense blocks peak near 4 GB
    if avail is not None and avail < 4.5e9:
        n, m = n // 4, m // 4
    g = gen_erdos_renyi(n, m / (n * (n - 1.0)), directed=True, seed=16)
    X = make_rng(17).standard_normal((n, d))
    t0 = time.perf_counter()
    bank = precompute_sign_features(g, X, specs)
    secs = time.perf_counter() - t0
    done = len(bank) == 5 and bank.n == n
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1e6
    detail = (f"n={n}, m={g.num_edges}, d={d}: {secs:.1f} s, "
              f"{g.num_edges * len(specs) / secs:.3g} edge-applications/s, peak RSS {rss:.2f} GB; "
              f"threads=1 reruns bit-identical on n=10^4: {deterministic}")
    del bank, X, g
    assert record(14, "performance (soft)", done and deterministic, detail)
