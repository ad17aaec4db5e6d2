"""Acceptance suite: one recorded PASS/FAIL line per criterion.

Each test checks one criterion at its stated tolerance against an
independent oracle (true-system simulation, pseudoinverse, brute force).
"""
import time

import numpy as np
import pytest

from flexdemand import economics as eco
from flexdemand import energy as en
from flexdemand import evaluation as ev
from flexdemand import predictors as P
from flexdemand import synthetic as syn
from flexdemand.ingest import IOTable
from flexdemand.solvers import pinball_loss, quantile_regression, solve_l1l2_equality
from flexdemand.trajectory import build_trajectory_data

NP, NF, NBAR = 24, 144, 4032
M, PO = 5, 4


def lti_case(seed, n, noise=0.0, feedthrough=False, n_cols=NBAR):
    """Training data of ``n_cols`` columns plus one query right after it."""
    s = syn.random_stable_lti(n, M, PO, 0.9, seed=seed, feedthrough=feedthrough)
    L = n_cols + NP + NF - 1
    u = syn.prbs(L + NP + NF, M, seed=seed + 1000)
    y = syn.simulate(s, u, noise, seed=seed + 2000)
    data = build_trajectory_data([(u[:L], y[:L])], NP, NF)
    q = (u[L:L + NP], y[L:L + NP], u[L + NP:])
    return s, data, q, y[L + NP:].ravel()


def test_1_oracle_equivalence(criterion):
    rng = np.random.default_rng(1)
    worst = {k: 0.0 for k in ("one_step", "unstructured", "causal", "toeplitz", "fl")}
    t0 = time.perf_counter()
    for i in range(20):
        _, data, q, truth = lti_case(100 + i, int(rng.integers(1, 7)))
        one = P.fit_one_step(data)
        worst["one_step"] = max(worst["one_step"], np.max(np.abs(P.rollout_one_step(one, *q) - truth)))
        for st in P.STRUCTURES:
            pred = P.fit_multi_step(data, st)
            worst[st] = max(worst[st], np.max(np.abs(P.predict_multi_step(pred, *q) - truth)))
        fl = P.fit_fl(data, 0.0, 1e-8)
        worst["fl"] = max(worst["fl"], np.max(np.abs(fl.predict(*q) - truth)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f} s"
    criterion(1, "oracle equivalence, 20 systems", ok, detail)


def test_2_causality(criterion):
    fits = []
    for ft in (False, True):
        _, data, q, _ = lti_case(7, 4, noise=0.05, feedthrough=ft, n_cols=1200)
        for st in ("causal", "toeplitz"):
            fits.append((P.fit_multi_step(data, st, estimate_feedthrough=ft), q))
    rng = np.random.default_rng(2)
    bad = 0
    for k in range(100):
        pred, (up, yp, uf) = fits[k % len(fits)]
        base = P.predict_multi_step(pred, up, yp, uf).reshape(NF, PO)
        j = int(rng.integers(0, NF))
        uf2 = np.array(uf, dtype=float)
        uf2[j] += rng.standard_normal(M)
        out = P.predict_multi_step(pred, up, yp, uf2).reshape(NF, PO)
        bad += not np.array_equal(out[:j], base[:j])
    criterion(2, "causality, 100 probes", bad == 0, f"{bad} prefixes changed")


def test_3_data_equation(criterion):
    s = syn.random_stable_lti(6, M, PO, 0.9, seed=3, feedthrough=True)
    u = syn.prbs(NBAR + NP + NF - 1, M, seed=4)
    y, x, e = syn.simulate(s, u, return_states=True)
    r = syn.data_equation_residual(s, u, y, x, e, NP, NF)
    criterion(3, "data equation, true matrices", r < 1e-9, f"max residual {r:.1e}")


ALPHA = (-0.05, [0.02, 0.02, 0.03, 0.02], [0.04, 0.05, 0.03, 0.04])


def test_4_quantile_coverage(criterion):
    recs, _ = syn.energy_records(5000, *ALPHA, seed=0, noise_scale=0.5)
    train, test = recs[:2500], recs[2500:]
    A = en.design_matrix(test)
    b = np.array([r.energy for r in test])
    t0 = time.perf_counter()
    cover = {}
    for tau in (0.9, 0.95):
        model = en.fit_energy(train, "quantile", tau)
        cover[tau] = float(np.mean(A @ model.coefficients >= b))
    elapsed = time.perf_counter() - t0
    ok = all(abs(c - tau) <= 0.02 for tau, c in cover.items()) and elapsed < 30.0
    detail = f"tau 0.9 -> {cover[0.9]:.3f}, tau 0.95 -> {cover[0.95]:.3f} on 2500 held out; {elapsed:.1f} s"
    criterion(4, "quantile coverage", ok, detail)


def brute_force_constant(b, tau):
    """Pinball minimizer of a constant model; the optimal set is an interval
    between data points, and the point of it nearest zero is returned."""
    f = np.array([pinball_loss(b - c, tau).sum() for c in b])
    best = f.min()
    cand = b[f <= best + 1e-12 * (1 + abs(best))]
    return float(np.clip(0.0, cand.min(), cand.max())), best


def test_5_quantile_optimality(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 40))
        b = np.round(rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), n), int(rng.integers(0, 4)))
        tau = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9, rng.uniform(0.02, 0.98)]))
        x_ref, f_ref = brute_force_constant(b, tau)
        x = quantile_regression(np.ones((n, 1)), b, tau)[0]
        f = pinball_loss(b - x, tau).sum()
        worst = max(worst, abs(x - x_ref) / (1 + abs(x_ref)), abs(f - f_ref) / (1 + abs(f_ref)))
    criterion(5, "quantile optimality, 50 datasets", worst < 1e-6, f"max relative deviation {worst:.1e}")


def test_6_energy_recovery(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for trial in range(5):
        a_out, a_on, a_feat = rng.uniform(-0.2, 0.0), rng.uniform(0.0, 0.1, 4), rng.uniform(0.0, 0.1, 4)
        recs, _ = syn.energy_records(200, a_out, a_on, a_feat, seed=trial)
        model = en.fit_energy(recs)
        truth = np.concatenate([[a_out], a_on, a_feat])
        worst = max(worst, np.max(np.abs(model.coefficients - truth) / np.abs(truth)))
    criterion(6, "energy-model recovery", worst < 1e-8, f"max relative error {worst:.1e}")


def test_7_fl_solver(criterion):
    rng = np.random.default_rng(7)
    worst_res, worst_obj = 0.0, 0.0
    for k in range(50):
        rows, cols = int(rng.integers(2, 30)), int(rng.integers(30, 120))
        rank = int(rng.integers(1, rows + 1))
        H = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
        h = H @ rng.standard_normal(cols)
        lam2 = float(10.0 ** rng.uniform(-8, 1))
        g, rep = solve_l1l2_equality(H, h, 0.0, lam2)
        g_ref = np.linalg.pinv(H) @ h
        obj_ref = lam2 * g_ref @ g_ref
        worst_res = max(worst_res, np.linalg.norm(H @ g - h) / (1 + np.linalg.norm(h)))
        worst_obj = max(worst_obj, abs(rep.objective - obj_ref) / (1 + abs(obj_ref)))
    # l1 case: minimum over the line a g1 + b g2 = 1 by dense grid search
    grid_gap = 0.0
    for a, b, lam1, lam2 in [(1.0, 2.0, 10.0, 0.0), (3.0, -1.0, 2.0, 0.5), (-1.5, 2.5, 1.0, 1.0)]:
        g1 = np.linspace(-3, 3, 600001)
        g2 = (1.0 - a * g1) / b
        obj = lam1 * (np.abs(g1) + np.abs(g2)) + lam2 * (g1 ** 2 + g2 ** 2)
        k = np.argmin(obj)
        g, rep = solve_l1l2_equality(np.array([[a, b]]), np.array([1.0]), lam1, lam2)
        grid_gap = max(grid_gap, np.max(np.abs(g - [g1[k], g2[k]])), rep.objective - obj[k])
    ok = worst_res < 1e-6 and worst_obj < 1e-6 and grid_gap < 1e-4
    detail = (f"constraint residual {worst_res:.1e}, objective gap {worst_obj:.1e}, "
              f"l1 grid gap {grid_gap:.1e}")
    criterion(7, "FL solver vs pseudoinverse and grid", ok, detail)


def test_8_economics(criterion):
    rng = np.random.default_rng(8)
    sigma = eco.PriceSeries.from_values(rng.integers(-20, 100, 48).astype(float))
    P1, P2 = rng.integers(0, 30, 48).astype(float), rng.integers(0, 30, 48).astype(float)
    lin = eco.spot_cost(3 * P1 + 2 * P2, sigma) == 3 * eco.spot_cost(P1, sigma) + 2 * eco.spot_cost(P2, sigma)

    sched = eco.PenaltySchedule((0, 5, 10), (0, 100, 200))
    total = eco.total_cost([1, 2, 10, 9, 8], [10, 20, 0, 0, 0], sched)

    # peak level is the mean of exactly the three largest hours
    top3 = True
    for _ in range(200):
        Pm = rng.uniform(0, 15, int(rng.integers(3, 60)))
        level = np.sort(Pm)[-3:].mean()
        top3 &= eco.peak_penalty(Pm, sched) == sched.charge(level)
        low = Pm.copy()
        low[np.argsort(Pm)[:-3]] = 0.0
        top3 &= eco.peak_penalty(low, sched) == eco.peak_penalty(Pm, sched)
    ok = bool(lin and total == 150.0 and top3)
    criterion(8, "economics", ok, f"linearity {lin}, total_cost {total}, three-peak rule {bool(top3)}")


class _Spy:
    """Fitter whose predictor checks that its query never touches its training rows.

    Input channel 0 holds the sample index, so training and query index sets
    can be read off the data.
    """

    def __init__(self):
        self.overlaps = 0
        self.fits = 0

    def __call__(self, data):
        self.fits += 1
        train = set(data.U_past[0::2].ravel().astype(int)) | set(data.U_future[0::2].ravel().astype(int))
        spy = self

        class Pred:
            def predict(self, u_p, y_p, u_f):
                used = set(np.asarray(u_p)[:, 0].astype(int)) | set(np.asarray(u_f)[:, 0].astype(int))
                spy.overlaps += bool(train & used)
                return np.zeros(np.asarray(u_f).shape[0])

        return Pred()


def test_9_rolling_counting_and_leakage(criterion):
    rng = np.random.default_rng(9)
    cfg = ev.EvalConfig(window=60, n_past=6, n_future=10, stride=7, keep_residuals=False)
    bad_count, overlaps = 0, 0
    for _ in range(10):
        L = int(rng.integers(cfg.span, cfg.span + 400))
        u = np.column_stack([np.arange(L, dtype=float), rng.standard_normal(L)])
        spy = _Spy()
        stats = ev.rolling_eval(IOTable(0.0, 300.0, u, rng.standard_normal((L, 1))), cfg, fit=spy)
        expected = (L - (cfg.window + cfg.n_past + cfg.n_future)) // cfg.stride + 1
        bad_count += not (stats.n_windows == spy.fits == ev.count_windows(L, cfg) == expected)
        overlaps += spy.overlaps
    ok = bad_count == 0 and overlaps == 0
    criterion(9, "rolling-eval counting and leakage", ok,
              f"{bad_count} count mismatches, {overlaps} train/query overlaps over 10 lengths")


def test_10_rc_house_noise_run(criterion):
    s = syn.rc_house()
    cfg = ev.EvalConfig(window=2016, n_past=NP, n_future=NF, stride=36, keep_residuals=False)
    L = cfg.span + 20 * cfg.stride
    u = syn.rc_house_inputs(L, seed=10)
    y = syn.simulate(s, u, 0.2, seed=11, noise="output")
    stats = ev.rolling_eval(IOTable(0.0, 300.0, u, y), cfg)
    std12 = stats.std[NF - 1]
    n_ok = int(np.sum(std12 < 1.0))
    criterion(10, "RC-house 12 h error std", n_ok >= 3,
              f"std at step {NF} = {np.array2string(std12, precision=3)} degC, "
              f"{n_ok}/4 channels below 1.0 over {stats.n_windows} windows")


def test_11_relative_compute(criterion):
    s = syn.rc_house()
    L = NBAR + NP + NF - 1
    u = syn.rc_house_inputs(L + NP + NF, seed=12)
    y = syn.simulate(s, u, 0.2, seed=13, noise="output")
    data = build_trajectory_data([(u[:L], y[:L])], NP, NF)
    q = (u[L:L + NP], y[L:L + NP], u[L + NP:])
    ms = P.fit_multi_step(data, "causal")
    reps = 200
    t0 = time.perf_counter()
    for _ in range(reps):
        ms.predict(*q)
    t_ms = (time.perf_counter() - t0) / reps
    fl = P.fit_fl(data)
    fl.projector  # factorization is part of fitting, not of the query
    t0 = time.perf_counter()
    fl.predict(*q)
    t_fl = time.perf_counter() - t0
    ratio = t_fl / t_ms
    criterion(11, "FL vs multi-step query latency", ratio >= 10.0,
              f"FL {t_fl:.2f} s, multi-step {t_ms * 1e3:.3f} ms, ratio {ratio:.0f}")
