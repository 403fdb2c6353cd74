"""Quick self-checks run by ``thzalloc verify``: TU oracle, LP vs ILP, projection, FP monotonicity."""

from __future__ import annotations

import numpy as np

from .admm import project_ball
from .assoc import assignment_objective, build_constraints, ilp_brute_force, solve_assignment, tum_oracle
from .config import RunConfig
from .fp import PowerProblem, SolverConfig, run_fp
from .orchestrator import drop_seed, initial_association, prepare_drop


def check_tum() -> tuple[bool, str]:
    T = build_constraints(2, 2, 2, 1).T
    ok = tum_oracle(T, exhaustive_up_to=5, samples=2000, seed=0)
    return ok, f"T{T.shape} exhaustive to 5x5 + 2000 samples"


def check_lp_vs_ilp(n: int = 40, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        B, S = rng.integers(1, 3, size=2)
        N = int(rng.integers(B, 5))
        if B * S * N > 16:
            continue
        cs = build_constraints(int(B), int(S), N, 1 if S >= 1 and N <= B * S else 0)
        q = rng.random(B * S * N)
        A = solve_assignment(q, cs)
        _, best = ilp_brute_force(q, cs)
        bad += assignment_objective(q, A) != best
    return bad == 0, f"{n} instances, {bad} mismatches"


def check_projection(n: int = 100, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        xi = rng.normal(size=3) * rng.uniform(0.1, 3)
        pm = rng.uniform(0.2, 2)
        d = project_ball(xi, pm)
        # nearest point on the sphere along sampled directions, or xi itself if inside
        u = rng.normal(size=(20000, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        cand = np.vstack([u * np.sqrt(pm), xi[None] if xi @ xi <= pm else np.empty((0, 3))])
        best = np.min(np.linalg.norm(cand - xi, axis=1))
        worst = max(worst, np.linalg.norm(d - xi) - best)
        if d @ d > pm * (1 + 1e-12) or np.max(np.abs(project_ball(d, pm) - d)) > 1e-12:
            return False, "budget or idempotence violated"
    return worst <= 1e-9, f"{n} vectors, worst excess distance {worst:.2e}"


def check_fp_monotone(drops: int = 3) -> tuple[bool, str]:
    cfg = RunConfig()
    worst = 0.0
    for d in range(drops):
        sc, plan, tensor = prepare_drop(cfg, drop_seed(cfg.seed, d))
        A = initial_association(tensor, plan, sc)
        res = run_fp(PowerProblem.from_tensor(A, tensor, plan, sc), SolverConfig())
        tr = np.asarray(res.objective_trace)
        worst = min(worst, float(np.min(np.diff(tr) / np.abs(tr[1:]))) if len(tr) > 1 else 0.0)
    return worst >= -1e-9, f"{drops} drops, worst relative step {worst:.2e}"


SUITES = {"tum": check_tum, "lp-vs-ilp": check_lp_vs_ilp, "projection": check_projection,
          "fp-monotone": check_fp_monotone}


def run_all() -> list[tuple[str, bool, str]]:
    return [(name, *fn()) for name, fn in SUITES.items()]
