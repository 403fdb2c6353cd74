"""Two-stage pipeline: spectrum plan, then alternating association / power optimization.

Also hosts the benchmark baselines, the sum-rate / AOM metrics and the Monte-Carlo
sweep harness.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import admm as admm_mod
from . import fp as fp_mod
from .assoc import (build_constraints, is_feasible_assignment, random_feasible_assignment,
                    solve_assignment, solve_assignment_single)
from .channel import db_to_linear, link_gains, perturb_csi, random_scenario, rate_tensor, rng_for
from .config import ResultTable, RunConfig
from .errors import ThzAllocError
from .spectrum import build_plan

METHOD_TAGS = {"fp": "fp", "admm": "admm", "eq-power": "eq-power", "random-uasa": "random-uasa",
               "single-conn": "fp-single-conn"}


@dataclass
class SolveReport:
    method: str
    sum_rate: float
    aom: float
    outer_iterations: int
    objective_trace: list
    A: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    converged: bool = True
    message_log: Optional[admm_mod.MessageLog] = None
    inner_iterations: list = field(default_factory=list)
    plan: Optional[dict] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    drops: int = 20
    methods: tuple = ("fp",)

    def __post_init__(self):
        if not len(self.values):
            raise ValueError("sweep grid is empty")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")


def solver_config(cfg: RunConfig) -> fp_mod.SolverConfig:
    return fp_mod.SolverConfig(eps1=cfg.eps1, eps_a=cfg.eps_a, eps3=cfg.eps3, eps_b=cfg.eps_b, rho=cfg.rho,
                               l_max=cfg.l_max, l_max_admm=cfg.l_max_admm, outer_max=cfg.outer_max,
                               init_scale=cfg.init_scale)


# ---------------------------------------------------------------- metrics

def metrics(A, P, tensor, plan, scenario, variant=None) -> tuple[float, float]:
    """(sum-rate in bits/s over assigned links, mean number of distinct serving BSs per user)."""
    A = np.asarray(A)
    rates = rate_tensor(np.asarray(P, dtype=float), tensor, plan, scenario, variant)
    sum_rate = float(np.sum(A * rates))
    aom = float(np.mean(np.sum(A.sum(axis=1) >= 1, axis=0)))
    return sum_rate, aom


# ------------------------------------------------------------ association

def initial_association(tensor, plan, scenario) -> np.ndarray:
    """Greedy: (b, s) pairs in descending order of their best unblocked gain each take
    the strongest free user, except that users with unmet floors are served first once
    the remaining slots only just cover the outstanding floors.  Falls back to the LP
    on gains if the greedy pass dead-ends.
    """
    B, S, N = tensor.shape
    floor = np.asarray(scenario.gamma_floor)
    cs = build_constraints(B, S, N, floor)
    G = tensor.h2 * (1 - tensor.psi[:, None, :])
    order = np.argsort(-G.max(axis=2), axis=None, kind="stable")
    A = np.zeros((B, S, N), dtype=np.int8)
    count = np.zeros(N, dtype=int)
    used = np.zeros((S, N), dtype=bool)
    slots_left = B * S
    ok = True
    for flat in order:
        b, s = divmod(int(flat), S)
        cand = ~used[s] & (count < S)
        deficit = np.maximum(floor - count, 0)
        if deficit.sum() >= slots_left and np.any(cand & (deficit > 0)):
            cand &= deficit > 0
        if not cand.any():
            ok = False
            break
        n = int(np.argmax(np.where(cand, G[b, s], -1.0)))
        A[b, s, n] = 1
        count[n] += 1
        used[s, n] = True
        slots_left -= 1
    if ok and is_feasible_assignment(A, floor):
        return A
    return solve_assignment(G.reshape(-1) + 1.0, cs)


def _assign(q, cs, single_conn):
    return solve_assignment_single(q, cs) if single_conn else solve_assignment(q, cs)


def _link_rates(prob: fp_mod.PowerProblem, p_bar) -> np.ndarray:
    """Per-candidate-link contribution to the internal objective (unit weight)."""
    return prob.rate_unit * np.log1p(prob.sinr(p_bar))


def alternate(A0, tensor, plan, scenario, power_method: str = "fp", config=None,
              single_conn: bool = False, executor=None, method_tag: Optional[str] = None,
              p_bar0=None) -> SolveReport:
    """Assignment LP and power allocation in turn until the objective settles.

    Optimization uses the estimated channel when one is attached; the reported
    sum-rate is always evaluated on the true channel.  ``p_bar0`` (amplitudes, B x S)
    overrides the equal-split starting power.
    """
    cfg = config or fp_mod.SolverConfig()
    opt = tensor.estimated()
    B, S, N = tensor.shape
    cs = build_constraints(B, S, N, scenario.gamma_floor)
    prob = fp_mod.PowerProblem.from_tensor(A0, opt, plan, scenario)
    p_bar = prob.equal_split(cfg.init_scale) if p_bar0 is None else np.asarray(p_bar0, dtype=float)
    A = np.asarray(A0)
    trace = [prob.objective(p_bar)]
    log = admm_mod.MessageLog() if power_method == "admm" else None
    inner = []
    converged = False
    it = 0
    for it in range(1, cfg.outer_max + 1):
        f_prev = trace[-1]
        q = _link_rates(prob, p_bar).reshape(-1)
        A_new = _assign(q, cs, single_conn)
        f_A = prob.with_assignment(A_new).objective(p_bar)
        if f_A >= trace[-1]:
            A = A_new
            prob = prob.with_assignment(A)
            trace.append(f_A)
        else:
            trace.append(trace[-1])
        if power_method == "admm":
            res = admm_mod.run_admm(prob, cfg, p_bar0=p_bar, executor=executor)
            log.rounds += res.log.rounds
            log.payload_sizes += res.log.payload_sizes
            inner += res.inner_iterations
        else:
            res = fp_mod.run_fp(prob, cfg, p_bar0=p_bar)
        p_bar = res.state.p_bar
        trace.append(res.objective_trace[-1])
        if abs(trace[-1] - f_prev) < cfg.eps3:
            converged = True
            break
    P = p_bar ** 2
    sum_rate, aom = metrics(A, P, tensor, plan, scenario)
    return SolveReport(method=method_tag or power_method, sum_rate=sum_rate, aom=aom, outer_iterations=it,
                       objective_trace=[prob.to_bits(f) for f in trace], A=A, P=P, converged=converged,
                       message_log=log, inner_iterations=inner)


def baseline_equal_power(tensor, plan, scenario, config=None) -> SolveReport:
    """P = P_max/S on every sub-band, association optimized once for that power."""
    B, S, N = tensor.shape
    cs = build_constraints(B, S, N, scenario.gamma_floor)
    prob = fp_mod.PowerProblem.from_tensor(np.zeros((B, S, N)), tensor.estimated(), plan, scenario)
    p_bar = prob.equal_split(1.0)
    A = solve_assignment(_link_rates(prob, p_bar).reshape(-1), cs)
    P = p_bar ** 2
    sum_rate, aom = metrics(A, P, tensor, plan, scenario)
    f = prob.with_assignment(A).objective(p_bar)
    return SolveReport("eq-power", sum_rate, aom, 1, [prob.to_bits(f)], A=A, P=P)


def baseline_random_uasa(tensor, plan, scenario, config=None, seed: int = 0) -> SolveReport:
    """Uniformly random feasible association, FP power allocation on top."""
    cfg = config or fp_mod.SolverConfig()
    B, S, N = tensor.shape
    A = random_feasible_assignment(B, S, N, scenario.gamma_floor, rng_for(seed, "uasa"))
    prob = fp_mod.PowerProblem.from_tensor(A, tensor.estimated(), plan, scenario)
    res = fp_mod.run_fp(prob, cfg)
    sum_rate, aom = metrics(A, res.P, tensor, plan, scenario)
    return SolveReport("random-uasa", sum_rate, aom, 1, [prob.to_bits(f) for f in res.objective_trace],
                       A=A, P=res.P, converged=res.converged)


def single_connectivity(tensor, plan, scenario, config=None) -> SolveReport:
    B, S, N = tensor.shape
    cs = build_constraints(B, S, N, scenario.gamma_floor)
    prob = fp_mod.PowerProblem.from_tensor(np.zeros((B, S, N)), tensor.estimated(), plan, scenario)
    A0 = solve_assignment_single(_link_rates(prob, prob.equal_split((config or fp_mod.SolverConfig()).init_scale)).reshape(-1), cs)
    return alternate(A0, tensor, plan, scenario, "fp", config, single_conn=True, method_tag="fp-single-conn")


# ------------------------------------------------------------ per-drop glue

def drop_seed(master: int, drop: int) -> int:
    """Child seed for one drop; independent of grid value and method (common random numbers)."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(b"drop"), int(drop)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def plan_from_config(cfg: RunConfig):
    kw = {}
    if cfg.w_lead is not None:
        kw = dict(w_I=cfg.w_lead, w_E=cfg.w_trail)
    return build_plan(cfg.fit, epsilon=cfg.epsilon, w_G=cfg.w_guard, B_th=cfg.b_th, k_scale=cfg.k_scale, **kw)


def scenario_from_config(cfg: RunConfig, seed: int):
    g = db_to_linear(cfg.antenna_gain_db)
    return random_scenario(cfg.n_bs, cfg.n_users, radius=cfg.radius, seed=seed, p_max=cfg.p_max,
                           q_align=cfg.q_align, g_tx=g, g_rx=g, nakagami_m=cfg.nakagami_m,
                           blockage_density=cfg.blockage_density, n0=db_to_linear(cfg.n0_dbm_hz) * 1e-3,
                           gamma_floor=cfg.gamma_floor, hi_kt=cfg.hi_kt, hi_kr=cfg.hi_kr,
                           csi_zeta=cfg.csi_zeta)


def prepare_drop(cfg: RunConfig, seed: int, plan=None):
    """(scenario, plan, tensor) with positions -> fading -> blockage -> CSI error drawn in that order."""
    plan = plan or plan_from_config(cfg)
    sc = scenario_from_config(cfg, seed)
    tensor = link_gains(sc, plan)
    if cfg.csi_zeta < 1.0:
        tensor = perturb_csi(tensor, cfg.csi_zeta, seed)
    return sc, plan, tensor


def solve_drop(cfg: RunConfig, seed: int, method: Optional[str] = None, plan=None, executor=None) -> SolveReport:
    method = method or cfg.method
    sc, plan, tensor = prepare_drop(cfg, seed, plan)
    scfg = solver_config(cfg)
    if method in ("fp", "admm"):
        A0 = initial_association(tensor.estimated(), plan, sc)
        rep = alternate(A0, tensor, plan, sc, method, scfg, executor=executor)
    elif method == "eq-power":
        rep = baseline_equal_power(tensor, plan, sc, scfg)
    elif method == "random-uasa":
        rep = baseline_random_uasa(tensor, plan, sc, scfg, seed=seed)
    elif method == "single-conn":
        rep = single_connectivity(tensor, plan, sc, scfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    rep.seed = seed
    rep.plan = {"S": plan.S_star, "w": plan.w, "w_I": plan.w_I, "w_E": plan.w_E}
    return rep


def apply_param(cfg: RunConfig, param: str, value) -> RunConfig:
    if param == "hi_level":
        return cfg.replace(hi_kt=float(value), hi_kr=float(value))
    cur = getattr(cfg, param)
    if isinstance(cur, int) and not isinstance(cur, bool):
        if float(value) != int(value):
            raise ValueError(f"{param} needs an integer value, got {value}")
        value = int(value)
    else:
        value = float(value)
    return cfg.replace(**{param: value})


def _one(cfg, param, vi, value, drop, method, master, timing):
    seed = drop_seed(master, drop)
    t0 = time.perf_counter()
    try:
        rep = solve_drop(cfg, seed, method)
        status, sr, aom, its = "ok", rep.sum_rate, rep.aom, rep.outer_iterations
    except ThzAllocError as e:
        status, sr, aom, its = type(e).__name__, float("nan"), float("nan"), 0
    rt = time.perf_counter() - t0 if timing else 0.0
    return (vi, drop, method), (METHOD_TAGS[method], param, value, drop, seed, sr, aom, its, rt, status)


def run_sweep(spec: SweepSpec, base_config: RunConfig, master_seed: Optional[int] = None,
              n_jobs: int = 1, timing: bool = False) -> ResultTable:
    """Every grid value x drop x method.  Failures are recorded per row and the sweep continues.

    Rows are merged in (grid index, drop, method) order, so the table does not depend
    on ``n_jobs``.  ``runtime`` is 0 unless ``timing`` is set (keeps output byte-stable).
    """
    master = base_config.seed if master_seed is None else master_seed
    cfgs = [apply_param(base_config, spec.param, v) for v in spec.values]
    jobs = [(cfgs[vi], spec.param, vi, v, d, m, master, timing)
            for vi, v in enumerate(spec.values) for d in range(spec.drops) for m in spec.methods]
    if n_jobs == 1:
        out = [_one(*j) for j in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            out = list(ex.map(_one, *zip(*jobs)))
    table = ResultTable()
    for _, row in sorted(out, key=lambda kv: (kv[0][0], kv[0][1], spec.methods.index(kv[0][2]))):
        table.add(*row)
    return table
