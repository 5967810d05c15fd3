"""Acceptance criteria, each at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
lists one PASS/FAIL line per criterion.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from fairshap.audit import ExplainerSettings, compare, prepare_data, run_audit
from fairshap.data import Dataset, DatasetConfig
from fairshap.fairness import consistency, consistency_from_predictions, disparate_impact, equal_opportunity
from fairshap.models import ClassifierSpec, train
from fairshap.reweigh import apply_weights, compute_weights, weighted_favorable_rates
from fairshap.shapley import ExplainerConfig, explain_exact, explain_sampled

from helpers import (
    GERMAN_CONFIG,
    ROOT,
    FunctionModel,
    LinearMargin,
    TreeModel,
    brute_force_shapley,
    null_bias_rows,
    random_tree,
    write_csv,
)

TOL = 1e-9


def _report(number, text):
    print(f"criterion {number}: {text}")


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "Shapley axioms on random depth-3 trees (<= 1e-9), M!-ordering oracle, < 1 min")
def test_criterion_1_shapley_axioms():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"local": 0.0, "dummy": 0.0, "symmetry": 0.0, "linearity": 0.0, "brute": 0.0}
    for M in range(2, 9):
        for _ in range(4):
            B = int(rng.integers(1, 21))
            bg = rng.normal(size=(B, M))
            x = rng.normal(size=M)
            cfg = ExplainerConfig(bg)
            f = TreeModel(random_tree(rng, M))
            e = explain_exact(f, x, cfg)
            worst["local"] = max(worst["local"], abs(e.fx - e.phi0 - math.fsum(e.phi)))

            # dummy: a tree that never splits on feature j
            j = int(rng.integers(M))
            g = TreeModel(random_tree(rng, M, features=[i for i in range(M) if i != j]))
            worst["dummy"] = max(worst["dummy"], abs(explain_exact(g, x, cfg).phi[j]))

            # symmetry: symmetrised model, swap-closed background, equal inputs on i and k
            i, k = rng.choice(M, 2, replace=False)
            swap = np.arange(M)
            swap[[i, k]] = swap[[k, i]]
            t = random_tree(rng, M)
            sym = FunctionModel(lambda Z, t=t, s=swap: 0.5 * (t.predict(Z) + t.predict(Z[:, s])))
            half = bg[: max(1, B // 2)]
            sym_bg = np.vstack([half, half[:, swap]])
            xs = x.copy()
            xs[k] = xs[i]
            es = explain_exact(sym, xs, ExplainerConfig(sym_bg))
            worst["symmetry"] = max(worst["symmetry"], abs(es.phi[i] - es.phi[k]))

            # linearity
            t1, t2 = random_tree(rng, M), random_tree(rng, M)
            alpha, beta = rng.normal(), rng.normal()
            h = FunctionModel(lambda Z, a=t1, b=t2, p=alpha, q=beta: p * a.predict(Z) + q * b.predict(Z))
            lhs = explain_exact(h, x, cfg).phi
            rhs = alpha * explain_exact(TreeModel(t1), x, cfg).phi + beta * explain_exact(TreeModel(t2), x, cfg).phi
            worst["linearity"] = max(worst["linearity"], float(np.abs(lhs - rhs).max()))

            if M <= 6:
                ref = brute_force_shapley(f.predict_proba, x, bg)
                worst["brute"] = max(worst["brute"], float(np.abs(e.phi - ref).max()))
    elapsed = time.perf_counter() - start
    _report(1, f"worst deviations {worst}, {elapsed:.1f}s")
    assert all(v <= TOL for v in worst.values()), worst
    assert elapsed < 60


# ---------------------------------------------------------------- 2


@pytest.mark.criterion(2, "linear oracle phi_i = w_i (x_i - mean_B x_i) on 100 instances (<= 1e-9)")
def test_criterion_2_linear_oracle():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(400, 6))
    y = (X @ np.array([1.0, -2.0, 0.5, 0.0, 1.5, -0.7]) + rng.normal(size=400) > 0).astype(int)
    model = train(ClassifierSpec("lr"), X, y)
    double = LinearMargin(model.coef, model.intercept)
    bg = X[:50]
    mu = bg.mean(axis=0)
    cfg = ExplainerConfig(bg)
    worst = 0.0
    for x in rng.normal(size=(100, 6)):
        phi = explain_exact(double, x, cfg).phi
        worst = max(worst, float(np.abs(phi - model.coef * (x - mu)).max()))
    _report(2, f"max |phi - w(x - mu)| = {worst:.3e}")
    assert worst <= TOL


# ---------------------------------------------------------------- 3


@pytest.mark.criterion(3, "sampled (2000 permutations) within 0.05 of exact for >= 95 of 100 trials, M=8")
def test_criterion_3_sampling_convergence():
    rng = np.random.default_rng(99)
    ok = 0
    worst = 0.0
    for trial in range(100):
        tree = TreeModel(random_tree(rng, 8))
        bg = rng.normal(size=(20, 8))
        x = rng.normal(size=8)
        exact = explain_exact(tree, x, ExplainerConfig(bg)).phi
        sampled = explain_sampled(tree, x, ExplainerConfig(bg, permutations=2000, seed=trial)).phi
        err = float(np.abs(sampled - exact).max())
        worst = max(worst, err)
        ok += err <= 0.05
    _report(3, f"{ok}/100 trials within 0.05 (worst {worst:.4f})")
    assert ok >= 95


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4, "reweighing gives weighted parity (<= 1e-12) on 50 datasets; 40/10/10/40 exact")
def test_criterion_4_reweighing_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(20, 3000))
        a = rng.integers(0, 2, n)
        p = rng.uniform(0.05, 0.95, 2)
        y = (rng.random(n) < p[a]).astype(int)
        if len({(u, v) for u, v in zip(a.tolist(), y.tolist())}) < 4:
            a[:4], y[:4] = [0, 0, 1, 1], [0, 1, 0, 1]
        ds = Dataset(np.column_stack([a, rng.normal(size=n)]), ["a", "f"], y, a, np.ones(n), 0)
        r0, r1 = weighted_favorable_rates(apply_weights(ds, compute_weights(ds)))
        worst = max(worst, abs(r0 - r1))
    a = np.repeat([0, 0, 1, 1], [40, 10, 10, 40])
    y = np.repeat([0, 1, 0, 1], [40, 10, 10, 40])
    hand = compute_weights(Dataset(a[:, None].astype(float), ["a"], y, a, np.ones(100), 0)).cell_weights
    _report(4, f"max parity gap {worst:.3e}; hand weights {hand}")
    assert worst <= 1e-12
    assert hand == {(0, 0): 0.625, (0, 1): 2.5, (1, 0): 2.5, (1, 1): 0.625}


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5, "DI, EOP, consistency match hand fixtures exactly; relabeling symmetry")
def test_criterion_5_metric_oracles():
    # hand-enumerated fixtures of at most 10 rows
    di = disparate_impact([1, 0, 0, 0, 1, 1, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1])
    eop = equal_opportunity(
        [1, 0, 1, 1, 1, 0, 0, 1], [1, 1, 1, 1, 1, 1, 0, 0], [0, 0, 1, 1, 1, 1, 0, 1]
    )
    # points 0,1,2 close together, 3,4 far away; k=2 neighbourhoods {0,1} {1,0} {2,1} {3,4} {4,3}
    cons = consistency_from_predictions(
        [1, 1, 0, 0, 0], np.array([[1, 0.0], [0, 1.0], [1, 2.0], [0, 10.0], [1, 11.0]]), 0, k=2
    )
    assert (di, eop, cons) == (0.5, -0.25, 0.9)

    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(500):
        n = int(rng.integers(4, 11))
        yhat, y, a = (rng.integers(0, 2, n) for _ in range(3))
        if a.min() == a.max() or not ((a == 0) & (y == 1)).any() or not ((a == 1) & (y == 1)).any():
            continue
        d, d_s = disparate_impact(yhat, a), disparate_impact(yhat, 1 - a)
        if math.isfinite(d) and d > 0:
            assert d_s == pytest.approx(1 / d, rel=1e-12)
        elif d == 0:
            assert math.isinf(d_s)
        assert equal_opportunity(yhat, y, 1 - a) == -equal_opportunity(yhat, y, a)
        checked += 1
    _report(5, f"hand DI={di} EOP={eop} consistency={cons}; symmetry on {checked} random fixtures")
    assert checked > 100


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6, "German + LR: dDI >= 0, dEOP >= 0, dD_age >= 0, age rank not improved, < 5 min")
def test_criterion_6_german_direction():
    start = time.perf_counter()
    cfg = DatasetConfig.from_json(GERMAN_CONFIG)
    prepared = prepare_data(cfg)
    spec = ClassifierSpec("lr")
    base = run_audit(cfg, spec, prepared=prepared)
    rew = run_audit(cfg, spec, with_reweigh=True, prepared=prepared)
    comp = compare(base, rew)
    d = comp.deltas
    elapsed = time.perf_counter() - start
    rank_b = base.importance.feature("age")["rank"]
    rank_r = rew.importance.feature("age")["rank"]
    _report(
        6,
        f"dDI={d['disparate_impact']:.4f} dEOP={d['equal_opportunity']:.4f} "
        f"dD_age={d['sensitive_group_diff']:.4f} rank {rank_b}->{rank_r}, {elapsed:.1f}s",
    )
    assert prepared.train.n_rows + prepared.test.n_rows == 1000
    assert d["disparate_impact"] >= 0
    assert d["equal_opportunity"] >= 0
    assert d["sensitive_group_diff"] >= 0
    assert rank_r >= rank_b
    assert elapsed < 300


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7, "null-bias control over 5 seeds: DI in [0.9, 1.1], |EOP| <= 0.05, |D_A| <= 0.02")
def test_criterion_7_null_bias(tmp_path):
    rows_out = []
    for seed in range(5):
        header, rows = null_bias_rows(20_000, seed)
        path = write_csv(tmp_path / f"null_{seed}.csv", header, rows)
        cfg = DatasetConfig(path, "label", 1, "group", 1, seed=seed)
        run = run_audit(cfg, ClassifierSpec("lr", seed=seed), ExplainerSettings(seed=seed))
        di = run.fairness.disparate_impact
        eop = run.fairness.equal_opportunity
        d_a = run.importance.feature("group")["group_diff"]
        rows_out.append((seed, di, eop, d_a))
    _report(7, "; ".join(f"seed {s}: DI={di:.3f} EOP={e:+.3f} D_A={d:+.4f}" for s, di, e, d in rows_out))
    for _, di, eop, d_a in rows_out:
        assert 0.9 <= di <= 1.1
        assert abs(eop) <= 0.05
        assert abs(d_a) <= 0.02


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8, "two identical CLI audit runs give byte-identical audit_report.json")
def test_criterion_8_determinism(tmp_path):
    reports = []
    for name in ("first", "second"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "fairshap", "audit", "--config", GERMAN_CONFIG, "--model", "lr", "--out", str(out)],
            cwd=ROOT,
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        reports.append((out / "audit_report.json").read_bytes())
    _report(8, f"report sizes {len(reports[0])} / {len(reports[1])} bytes, identical={reports[0] == reports[1]}")
    assert reports[0] == reports[1]


# ---------------------------------------------------------------- 9


class _Constant:
    def predict(self, X):
        return np.zeros(len(X), dtype=int)


@pytest.mark.criterion(9, "constant classifier -> consistency 1.0; duplicate-point k=2 fixture -> 0.5")
def test_criterion_9_consistency_edges():
    X = np.random.default_rng(9).normal(size=(25, 4))
    const = consistency(_Constant(), X, 0)
    dup = consistency_from_predictions([0, 1], np.array([[0.0, 3.0, -1.0], [1.0, 3.0, -1.0]]), 0, k=2)
    _report(9, f"constant={const!r} duplicate={dup!r}")
    assert const == 1.0
    assert dup == 0.5
