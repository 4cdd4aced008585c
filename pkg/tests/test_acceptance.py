"""Acceptance criteria, one test per criterion.

Each test records a ``CRITERION n: PASS|FAIL`` line; the lines are printed at
the end of the pytest run, or directly when this file is run as a script.
"""
import math
import sys
import time

import numpy as np
import pytest

from conftest import mm1
from dss_meanfield import simulator
from dss_meanfield.cli import solve_config, table1_rows
from dss_meanfield.config import MBR_THETA, MSR_THETA, TABLE1_Q, example1, example2, example3
from dss_meanfield.meanfield import default_step, h_kernel, mean_workload, solve_dde, solve_ide
from dss_meanfield.response import class_response_ccdf, mean_response, order_stat_from_fbar
from dss_meanfield.simulator import SimConfig, ks_distance
from dss_meanfield.storage_model import loss_probability, system_load

REPORT: list[str] = []

# printed loss table; None marks the q=0.95 cold entry checked against 4.8125e-4
LOSS_HOT = ["0", "0.0001", "0.001", "0.0034", "0.008", "0.0156", "0.027", "0.0429", "0.064"]
LOSS_COLD = ["0", None, "0.0037", "0.0120", "0.0272", "0.0508", "0.0837", "0.1265", "0.1792"]
INCREASE_HOT = [0.0, 2.3, 5.16, 8.51, 12.24, 16.21, 20.26, 24.19, 27.78]
INCREASE_COLD = [0.0, 8.08, 18.01, 29.2, 41.13, 53.31, 65.23, 76.32, 85.98]
INCREASE_TOL = 1.5  # percentage points


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    REPORT.append(line)
    print(line)


def _half_ulp(text: str) -> float:
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 0.5 * 10.0 ** -decimals


def test_criterion_1_loss_table():
    t0 = time.perf_counter()
    cfg = example1()
    hot, cold = cfg.by_label("hot"), cfg.by_label("cold")
    bad = []
    for q, th, tc in zip(TABLE1_Q, LOSS_HOT, LOSS_COLD):
        lh, lc = loss_probability(hot, q), loss_probability(cold, q)
        if abs(lh - float(th)) > _half_ulp(th):
            bad.append(f"hot q={q}: {lh:.6g} vs {th}")
        if tc is None:
            if abs(lc - 4.8125e-4) > 1e-15:
                bad.append(f"cold q={q}: {lc:.6g} vs 4.8125e-4")
        elif abs(lc - float(tc)) > _half_ulp(tc):
            bad.append(f"cold q={q}: {lc:.6g} vs {tc}")
    ms = 1e3 * (time.perf_counter() - t0)
    record(1, not bad, f"18 loss entries, cold q=0.95 = {loss_probability(cold, 0.95):.6g}; {ms:.1f} ms"
           + (f"; mismatches: {bad}" if bad else ""))
    assert not bad


def test_criterion_2_table1_increases():
    t0 = time.perf_counter()
    rows = table1_rows()
    secs = time.perf_counter() - t0
    dev_h = [r[1] - p for r, p in zip(rows, INCREASE_HOT)]
    dev_c = [r[2] - p for r, p in zip(rows, INCREASE_COLD)]
    worst = max(map(abs, dev_h + dev_c))
    bad = [f"{lab} q={q}: {v:.2f}% vs {p}%" for lab, col, ref in (("hot", 1, INCREASE_HOT), ("cold", 2, INCREASE_COLD))
           for q, v, p in zip(TABLE1_Q, [r[col] for r in rows], ref) if abs(v - p) > INCREASE_TOL]
    anchors = (f"hot q=0.7 {rows[6][1]:.2f}% (20.26), cold q=0.8 {rows[4][2]:.2f}% (41.13), "
               f"q=1 {rows[0][1]:.0f}%/{rows[0][2]:.0f}%")
    ok = not bad and secs < 120
    record(2, ok, f"max |dev| {worst:.2f}pp (tol {INCREASE_TOL}); {anchors}; {secs:.1f} s"
           + (f"; out of tolerance: {bad}" if bad else ""))
    assert rows[0][1] == 0.0 and rows[0][2] == 0.0
    assert secs < 120
    assert not bad, f"{len(bad)} entries beyond {INCREASE_TOL}pp: {bad}"


def test_criterion_3_solver_agreement():
    t0 = time.perf_counter()
    cases = [(f"example1 q={q}", example1(q)) for q in (1.0, 0.8, 0.6)]
    cases += [(f"example2 lambda={lam}", example2(0.8, lam)) for lam in (0.3, 0.7)]
    gaps = {}
    for name, cfg in cases:
        a, b = solve_dde(cfg), solve_ide(cfg)
        m = max(a.values.size, b.values.size)
        gaps[name] = float(np.max(np.abs(a.padded(m) - b.padded(m))))
    worst = max(gaps.values())
    record(3, worst <= 1e-4, f"max sup-norm {worst:.2e} over {len(cases)} configs (tol 1e-4); "
           f"{time.perf_counter() - t0:.1f} s")
    assert worst <= 1e-4, gaps


def test_criterion_4_mm1_oracle():
    lam, mu = 0.7, 1.0
    cfg = mm1(lam, mu)
    errs = {}
    for name, solver in (("dde", solve_dde), ("ide", solve_ide)):
        curve = solver(cfg, step=0.005)
        exact = lam / mu * np.exp(-(mu - lam) * curve.grid)
        rc = class_response_ccdf(curve, cfg.classes[0], 1.0)
        errs[name] = (float(np.max(np.abs(curve.values - exact))),
                      abs(mean_response(rc) - (mean_workload(curve) + 1 / mu)))
    ok = all(e[0] <= 1e-4 and e[1] <= 1e-3 for e in errs.values())
    record(4, ok, "; ".join(f"{k}: sup|Fbar-exact| {v[0]:.1e}, |E[R]-E[W]-1/mu| {v[1]:.1e}" for k, v in errs.items()))
    assert ok, errs


SIM_CASES = [("example1 q=1", example1(1.0)), ("example1 q=0.8", example1(0.8)),
             ("example2 q=0.8 lambda=0.7", example2(0.8, 0.7))]


@pytest.mark.slow
@pytest.mark.parametrize("name,cfg", SIM_CASES, ids=[c[0] for c in SIM_CASES])
def test_criterion_5_simulation(name, cfg):
    t0 = time.perf_counter()
    sol = solve_config(cfg)
    sim = SimConfig(n=300, cfg=cfg, arrivals=2_500_000, warmup_fraction=0.2, replications=5, seed=2024)
    rep = simulator.run(sim, workers=5)
    rho = system_load(cfg)
    busy_err = abs(rep.busy_fraction - rho) / rho
    parts, ok = [f"busy {rep.busy_fraction:.4f} vs rho {rho:.4f} ({100 * busy_err:.2f}%)"], busy_err <= 0.01
    for c in cfg.classes:
        r = rep.classes[c.label]
        rel = abs(r.mean - sol.means[c.label]) / sol.means[c.label]
        ks = ks_distance(r.samples, sol.curve.step, sol.responses[c.label].values)
        ok &= rel <= 0.05 and ks <= 0.02
        parts.append(f"E[R_{c.label}] sim {r.mean:.4f} vs {sol.means[c.label]:.4f} ({100 * rel:.2f}%), KS {ks:.4f}")
    post = int(sim.arrivals * (1 - sim.warmup_fraction))
    record(5, ok, f"{name}: " + "; ".join(parts) + f"; {post} post-warmup x 5 reps, {time.perf_counter() - t0:.0f} s")
    assert ok


def _strictly(xs, sign):
    return bool(np.all(sign * np.diff(xs) > 0))


def test_criterion_6_figure_shapes():
    lams = [round(0.1 * i, 1) for i in range(1, 10)]
    sols = [solve_config(example2(0.8, lam)) for lam in lams]
    fig_a = {
        "E[R]": _strictly([s.mean_response for s in sols], 1),
        "E[R_h]": _strictly([s.means["hot"] for s in sols], 1),
        "E[R_c]": _strictly([s.means["cold"] for s in sols], 1),
    }
    qs = [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0]
    lams3 = [round(0.1 * i, 1) for i in range(1, 9)]
    codes = {"MSR": MSR_THETA, "MBR": MBR_THETA}
    vs_q = {k: [solve_config(example3(t, q=q)).means["cold"] for q in qs] for k, t in codes.items()}
    vs_lam = {k: [solve_config(example3(t, lam=lam)).means["cold"] for lam in lams3] for k, t in codes.items()}
    fig_b = all(_strictly(v, -1) for v in vs_q.values())
    fig_c = all(_strictly(v, 1) for v in vs_lam.values())
    below = bool(np.all(np.array(vs_q["MSR"]) < vs_q["MBR"]) and np.all(np.array(vs_lam["MSR"]) < vs_lam["MBR"]))
    ok = all(fig_a.values()) and fig_b and fig_c and below
    record(6, ok, f"example2 lambda-sweep increasing {fig_a}; example3 E[R_c] decreasing in q: {fig_b}, "
           f"increasing in lambda: {fig_c}; MSR < MBR pointwise: {below}")
    assert ok


def test_criterion_7_property_suites():
    # order statistic against 2^j enumeration
    fb = np.linspace(0, 1, 20)
    os_err = 0.0
    for j in range(1, 7):
        for k in range(1, j + 1):
            brute = np.zeros_like(fb)
            for mask in range(2**j):
                above = bin(mask).count("1")
                if j - above < k:
                    brute += fb**above * (1 - fb) ** (j - above)
            os_err = max(os_err, float(np.max(np.abs(order_stat_from_fbar(fb, j, k) - brute))))
    # special cases of the arrival kernel
    x = np.linspace(0, 1, 21)
    h_err = max(max(np.max(np.abs(h_kernel(j, 1, x) + x**j)), np.max(np.abs(h_kernel(j, j, x) - (j - 1 - j * x))))
                for j in range(1, 10))
    # grid refinement of the mean workload
    drift = {}
    for name, cfg in (("example1 q=0.8", example1(0.8)), ("example2 q=0.8", example2(0.8))):
        h = default_step(cfg)
        e1, e2 = mean_workload(solve_dde(cfg, step=h)), mean_workload(solve_dde(cfg, step=h / 2))
        drift[name] = abs(e1 - e2) / e2
    # simulator determinism
    sim = SimConfig(n=300, cfg=example1(0.8), arrivals=200_000, replications=2, seed=42)
    a, b = simulator.run(sim), simulator.run(sim)
    same = a.to_json() == b.to_json() and all(
        np.array_equal(a.classes[k].samples, b.classes[k].samples) for k in a.classes)
    ok = os_err <= 1e-12 and h_err <= 1e-12 and max(drift.values()) <= 1e-3 and same
    record(7, ok, f"order-stat max err {os_err:.1e}; H identities max err {h_err:.1e}; "
           f"E[W] drift under halving {max(drift.values()):.1e}; simulator reruns identical: {same}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
