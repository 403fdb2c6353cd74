"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line; the lines are also
printed together in the pytest terminal summary (see conftest.py).

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.optimize import linprog

from thzalloc.admm import project_ball, run_admm
from thzalloc.assoc import (_lp_parts, _normalized, assignment_objective, build_constraints, ilp_brute_force,
                            solve_assignment, tum_oracle)
from thzalloc.cli import main as cli_main
from thzalloc.config import RunConfig
from thzalloc.fp import PowerProblem, SolverConfig, f2, lagrangian_gradient, run_fp
from thzalloc.orchestrator import (SweepSpec, drop_seed, initial_association, metrics, plan_from_config,
                                   prepare_drop, run_sweep, scenario_from_config, solve_drop)
from thzalloc.spectrum import GHZ, THZ, TW_REGISTRY, build_plan, k_bar, lemma1_sweep, solve_edge_bands

RESULTS: list[str] = []


@contextmanager
def criterion(n: int, title: str):
    """Collects detail strings; records PASS unless the body raises."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException:
        _record(n, title, False, notes)
        raise
    _record(n, title, True, notes)


def _record(n, title, ok, notes):
    line = f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {title}"
    if notes:
        line += "  (" + "; ".join(notes) + ")"
    RESULTS.append(line)
    print(line)


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


@pytest.fixture(scope="module")
def plan(cfg):
    return plan_from_config(cfg)


# ---------------------------------------------------------------------------- 1

def test_c01_lp_integrality_and_optimality():
    with criterion(1, "LP integrality and optimality on 500 random instances") as notes:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        compared = 0
        worst_frac = 0.0
        for _ in range(500):
            B = int(rng.integers(1, 5))
            S = int(rng.integers(1, 5))
            N = int(rng.integers(B, 5))
            floor = (rng.random(N) < 0.7).astype(int)
            while floor.sum() > B * S:          # keep the fairness floors satisfiable
                floor[rng.choice(np.flatnonzero(floor))] = 0
            cs = build_constraints(B, S, N, floor)
            q = rng.exponential(size=B * S * N) * 10.0 ** rng.uniform(-3, 3)
            # integrality is checked on the raw LP vertex, before rounding
            A_ub, b_ub, A_eq, b_eq = _lp_parts(cs)
            raw = linprog(-_normalized(q), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                          bounds=(0, None), method="highs-ds").x
            worst_frac = max(worst_frac, float(np.max(np.minimum(np.abs(raw), np.abs(raw - 1)))))
            A = solve_assignment(q, cs)
            assert cs.is_feasible(A.reshape(-1))
            if B * S * N <= 16:
                _, best = ilp_brute_force(q, cs)
                assert assignment_objective(q, A) == best
                compared += 1
        dt = time.perf_counter() - t0
        notes += [f"{compared} ILP comparisons", f"max distance to {{0,1}} {worst_frac:.1e}", f"{dt:.1f} s"]
        assert worst_frac <= 1e-6
        assert dt < 60


# ---------------------------------------------------------------------------- 2

def test_c02_tum():
    with criterion(2, "TUM check of T for (B,S,N) = (2,2,2)") as notes:
        T = build_constraints(2, 2, 2, 1).T
        notes.append(f"T is {T.shape[0]}x{T.shape[1]}, exhaustive to 5x5 + 10^4 samples")
        assert tum_oracle(T, exhaustive_up_to=5, samples=10_000, seed=0)


# ---------------------------------------------------------------------------- 3

def test_c03_fp_monotone(cfg, plan):
    with criterion(3, "FP traces non-decreasing and converged within 200 iterations, 20 drops") as notes:
        worst, longest = 0.0, 0
        for d in range(20):
            sc, _, t = prepare_drop(cfg, drop_seed(cfg.seed, d), plan)
            A = initial_association(t, plan, sc)
            res = run_fp(PowerProblem.from_tensor(A, t, plan, sc), SolverConfig(l_max=200))
            tr = np.asarray(res.objective_trace)
            worst = min(worst, float(np.min(np.diff(tr))) if len(tr) > 1 else 0.0)
            longest = max(longest, res.iterations)
            assert res.converged and res.iterations <= 200
            assert abs(tr[-1] - tr[-2]) < 1e-3
        notes += [f"worst step {worst:.1e}", f"max iterations {longest}"]
        assert worst >= -1e-9


# ---------------------------------------------------------------------------- 4

def test_c04_fp_stationarity(cfg, plan):
    with criterion(4, "FP stationarity of f2 by finite differences, 10 seeds") as notes:
        worst = 0.0
        for s in range(1, 11):
            sc, _, t = prepare_drop(cfg, s, plan)
            A = initial_association(t, plan, sc)
            prob = PowerProblem.from_tensor(A, t, plan, sc)
            res = run_fp(prob, SolverConfig())
            st = res.state
            scale = abs(f2(st.p_bar, st.gamma_block, st.y, prob))
            g = lagrangian_gradient(st, prob)
            worst = max(worst, float(np.max(np.abs(g))) / scale)
        notes.append(f"worst max|grad| / objective {worst:.1e}")
        assert worst <= 1e-4


# ---------------------------------------------------------------------------- 5

def test_c05_admm_vs_fp(cfg, plan):
    with criterion(5, "ADMM within 2% of FP at rho = 2.2, inner loop <= 2, seeds 1-10") as notes:
        worst_gap, worst_inner = 0.0, 0
        for s in range(1, 11):
            sc, _, t = prepare_drop(cfg, s, plan)
            A = initial_association(t, plan, sc)
            prob = PowerProblem.from_tensor(A, t, plan, sc)
            scfg = SolverConfig(rho=2.2)
            r_fp = metrics(A, run_fp(prob, scfg).P, t, plan, sc)[0]
            ad = run_admm(prob, scfg)
            r_ad = metrics(A, ad.P, t, plan, sc)[0]
            worst_gap = max(worst_gap, abs(r_ad - r_fp) / r_fp)
            worst_inner = max(worst_inner, max(ad.inner_iterations))
        notes += [f"worst gap {100 * worst_gap:.2f}%", f"max inner iterations {worst_inner}"]
        assert worst_gap <= 0.02
        assert worst_inner <= 2


# ---------------------------------------------------------------------------- 6

def zoom_projection(xi, p_max, levels=14, n=41):
    """Nearest point of the ball to xi by nested grid search in polar coordinates."""
    d = xi.size
    R = math.sqrt(p_max)
    lo = np.array([0.0] + [0.0] * (d - 2) + [-math.pi])
    hi = np.array([R] + [math.pi] * (d - 2) + [math.pi])
    center = None
    for _ in range(levels):
        axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
        pts = polar_to_cart(grid)
        k = int(np.argmin(np.linalg.norm(pts - xi, axis=1)))
        center = grid[k]
        half = 3 * (hi - lo) / (n - 1)
        lo = np.maximum(center - half, [0.0] + [-np.inf] * (d - 1))
        hi = np.minimum(center + half, [R] + [np.inf] * (d - 1))
    return polar_to_cart(center[None])[0]


def polar_to_cart(g):
    r, ang = g[:, 0], g[:, 1:]
    d = g.shape[1]
    out = np.empty_like(g)
    s = np.ones(len(g))
    for i in range(d - 1):
        out[:, i] = r * s * np.cos(ang[:, i])
        s = s * np.sin(ang[:, i])
    out[:, d - 1] = r * s
    return out


def test_c06_projection():
    with criterion(6, "project_ball vs nested grid oracle on 100 vectors, idempotent") as notes:
        rng = np.random.default_rng(6)
        worst, worst_idem = 0.0, 0.0
        for i in range(100):
            d = 2 if i % 2 else 3
            xi = rng.normal(size=d) * rng.uniform(0.2, 3.0)
            pm = float(rng.uniform(0.1, 2.0))
            p = project_ball(xi, pm)
            worst = max(worst, float(np.max(np.abs(p - zoom_projection(xi, pm)))))
            worst_idem = max(worst_idem, float(np.max(np.abs(project_ball(p, pm) - p))))
        notes += [f"max oracle deviation {worst:.1e}", f"max idempotence error {worst_idem:.1e}"]
        assert worst <= 1e-6
        assert worst_idem <= 1e-12


# ---------------------------------------------------------------------------- 7

def scan_s_star(w_T, w_I, w_E, w_G, B_th, f_I, s_max=10_000):
    for S in range(1, s_max):
        w = (w_T - w_I - w_E - (S - 1) * w_G) / S
        if w <= 0:
            break
        fs = f_I + w_I + w / 2 + np.arange(S) * (w + w_G)
        if np.all(w / fs <= B_th):
            return S, w
    raise AssertionError("no feasible S")


def grid_edge_oracle(fit, eps, h):
    lo, hi = fit.convexity_interval()
    a = np.arange(max(fit.f_lo, lo), min(fit.f_hi, hi) + h / 2, h)
    ka = k_bar(a, fit)
    best, arg = math.inf, None
    for i in range(len(a)):
        ok = np.abs(ka[i:] - ka[i]) <= eps
        if ok.any():
            j = i + int(np.flatnonzero(ok)[-1])
            waste = (a[i] - fit.f_lo) + (fit.f_hi - a[j])
            if waste < best:
                best, arg = waste, (a[i], a[j])
    return (arg[0] - fit.f_lo) * THZ, (fit.f_hi - arg[1]) * THZ


def test_c07_spectrum_plan():
    with criterion(7, "worked TW3 plan S* = 15, w = 7.4 GHz; edge bands vs grid oracle") as notes:
        tw3 = TW_REGISTRY["TW3"]
        p = build_plan(tw3, w_I=5 * GHZ, w_E=5 * GHZ, w_G=1 * GHZ, B_th=0.01)
        assert p.w_T == pytest.approx(135 * GHZ) and p.f_I == pytest.approx(780 * GHZ)
        S_ref, w_ref = scan_s_star(135 * GHZ, 5 * GHZ, 5 * GHZ, 1 * GHZ, 0.01, 780 * GHZ)
        assert (S_ref, w_ref) == (15, pytest.approx(7.4 * GHZ, rel=1e-12))
        assert p.S_star == S_ref and p.w == pytest.approx(w_ref, rel=1e-12)
        assert np.all(p.fractional_bandwidths <= 0.01)
        notes.append(f"S*={p.S_star}, w={p.w / GHZ:.6g} GHz, max w/f_s={p.fractional_bandwidths.max():.5f}")
        h = 1e-5
        for eps in (5e-4, 1e-3):
            w_I, w_E = solve_edge_bands(tw3, eps)
            f_lo, f_hi = tw3.f_lo + w_I / THZ, tw3.f_hi - w_E / THZ
            assert abs(k_bar(f_hi, tw3) - k_bar(f_lo, tw3)) <= eps + 1e-12
            g_I, g_E = grid_edge_oracle(tw3, eps, h)
            assert abs(w_I - g_I) <= h * THZ and abs(w_E - g_E) <= h * THZ
            notes.append(f"eps={eps:g}: w_I={w_I / GHZ:.4g} GHz, w_E={w_E / GHZ:.4g} GHz")


# ---------------------------------------------------------------------------- 8

def test_c08_lemma1(cfg, plan):
    with criterion(8, "equal-power sum-rate non-increasing over S in {5,10,15,20}, 3 seeds") as notes:
        for d in range(3):
            sc = scenario_from_config(cfg, drop_seed(cfg.seed, d))
            rates = [r for _, r in lemma1_sweep(sc, plan, [5, 10, 15, 20])]
            notes.append("/".join(f"{r / 1e9:.1f}" for r in rates) + " Gbit/s")
            assert all(b <= a for a, b in zip(rates, rates[1:]))


# ---------------------------------------------------------------------------- 9

def test_c09_benchmark_ordering(cfg, plan):
    with criterion(9, "FP >= baselines per drop, multi >= single, AOM > 1 on >= 8/10 drops") as notes:
        aom_gt1 = 0
        for d in range(10):
            seed = drop_seed(cfg.seed, d)
            fp = solve_drop(cfg, seed, "fp", plan=plan)
            for m in ("eq-power", "random-uasa", "single-conn"):
                other = solve_drop(cfg, seed, m, plan=plan)
                assert fp.sum_rate >= other.sum_rate, (d, m, fp.sum_rate, other.sum_rate)
            aom_gt1 += fp.aom > 1
        notes.append(f"AOM > 1 on {aom_gt1}/10 drops")
        assert aom_gt1 >= 8


# --------------------------------------------------------------------------- 10

SWEEPS = [("q_align", tuple(round(0.1 * i, 1) for i in range(1, 10)), -1),
          ("k_scale", (0.5, 1.0, 2.0, 4.0), -1),
          ("hi_level", (0.0, 0.1, 0.2, 0.3), -1),
          ("csi_zeta", (0.5, 0.7, 0.9, 1.0), +1)]


def test_c10_sweep_monotonicity(cfg):
    with criterion(10, "mean sum-rate monotone in q, k scale, HI level, zeta (20 drops, 1 SE slack)") as notes:
        bad = []
        for param, values, sign in SWEEPS:
            rows = run_sweep(SweepSpec(param, values, drops=20), cfg).rows
            stats = []
            for v in values:
                x = np.array([r["sum_rate"] for r in rows if r["value"] == v])
                stats.append((x.mean(), x.std(ddof=1) / math.sqrt(len(x))))
            ok = all(sign * (m1 - m0) >= -max(s0, s1) for (m0, s0), (m1, s1) in zip(stats, stats[1:]))
            notes.append(f"{param}: " + ("ok" if ok else "violated"))
            if not ok:
                bad.append(param)
        assert not bad, bad


# --------------------------------------------------------------------------- 11

def test_c11_determinism(tmp_path):
    with criterion(11, "sweep twice gives byte-identical CSV") as notes:
        p = tmp_path / "det.cfg"
        p.write_text("[sweep]\nparam = q_align\nvalues = 0.2, 0.6\ndrops = 3\n"
                     "methods = fp, admm, eq-power, random-uasa, single-conn\n[run]\nseed = 17\n")
        out = []
        for run in ("a", "b"):
            assert cli_main(["sweep", "--config", str(p), "--out", str(tmp_path / run)]) == 0
            out.append((tmp_path / run / "results.csv").read_bytes())
        n_rows = len(out[0].splitlines()) - 1
        notes.append(f"{len(out[0])} bytes, {n_rows} rows")
        assert out[0] == out[1]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
