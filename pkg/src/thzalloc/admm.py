"""Distributed power allocation: FP outer loop with a scaled-ADMM power step.

The CPU holds p_bar and the scaled duals z; each BS only sees xi_b = p_bar_b - z_b and
returns its projection delta_b onto the ball ||delta_b||^2 <= P_b.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fp import (FpState, PowerProblem, SolverConfig, init_state, power_terms,
                 update_gamma, update_y)


@dataclass
class AdmmState:
    p_bar: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    rho: float
    residual_trace: list = field(default_factory=list)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass
class MessageLog:
    """Simulated CPU <-> BS traffic.  One round = one broadcast or one gather."""

    rounds: int = 0
    payload_sizes: list = field(default_factory=list)

    def exchange(self, n_bs: int, S: int) -> None:
        # CPU -> BS: xi_b (S floats each); BS -> CPU: delta_b (S floats each)
        self.rounds += 2
        self.payload_sizes += [n_bs * S, n_bs * S]


def admm_power_update(state: AdmmState, num, den) -> np.ndarray:
    """p_bar = (Num + rho/2*(delta + z)) / (Den + rho/2)."""
    h = 0.5 * state.rho
    return (num + h * (state.delta + state.z)) / (den + h)


def project_ball(xi, p_max: float) -> np.ndarray:
    """Euclidean projection of ``xi`` onto {d : ||d||^2 <= p_max}."""
    xi = np.asarray(xi, dtype=float)
    r = np.sqrt(p_max)
    nrm = np.linalg.norm(xi)
    if nrm <= r:
        return xi.copy()
    return xi * (r / nrm)


def dual_update(state: AdmmState) -> np.ndarray:
    """z <- z + delta - p_bar (z enters the p_bar step as +z, the projection as -z)."""
    return state.z + (state.delta - state.p_bar)


def _project_all(xi, p_max, executor=None):
    if executor is None:
        rows = [project_ball(xi[b], p_max[b]) for b in range(xi.shape[0])]
    else:
        rows = list(executor.map(project_ball, list(xi), list(p_max)))
    return np.vstack(rows)


def admm_inner(p_bar, num, den, prob: PowerProblem, rho: float, eps_a: float, l_max_a: int,
               log: MessageLog, executor=None) -> tuple[np.ndarray, AdmmState, int]:
    """Inner loop, warm-started at delta = p_bar, z = 0.  Returns (delta, state, iterations)."""
    st = AdmmState(p_bar=p_bar.copy(), delta=p_bar.copy(), z=np.zeros_like(p_bar), rho=rho)
    t = 0
    for t in range(1, l_max_a + 1):
        st.p_bar = admm_power_update(st, num, den)
        st.delta = _project_all(st.p_bar - st.z, prob.p_max, executor)
        st.z = dual_update(st)
        log.exchange(*p_bar.shape)
        nd = np.linalg.norm(st.delta)
        res = np.linalg.norm(st.p_bar - st.delta)
        res = res / nd if nd > 0 else np.linalg.norm(st.p_bar)
        st.residual_trace.append(float(res))
        if res < eps_a:
            break
    return st.delta, st, t


@dataclass
class AdmmResult:
    P: np.ndarray
    objective_trace: list
    inner_iterations: list
    iterations: int
    converged: bool
    log: MessageLog
    state: FpState = field(repr=False)


def run_admm(prob: PowerProblem, config: Optional[SolverConfig] = None, p_bar0=None,
             rho: Optional[float] = None, executor=None) -> AdmmResult:
    """Outer FP iterations (y, gamma updates) around the ADMM power step.

    A step that would lower the objective is rejected and the loop stops there, so
    the trace is non-decreasing.
    """
    cfg = config or SolverConfig()
    rho = cfg.rho if rho is None else rho
    st = init_state(prob, p_bar0, cfg.init_scale)
    log = MessageLog()
    inner = []
    converged = False
    it = 0
    for it in range(1, cfg.l_max + 1):
        st.y = update_y(st, prob)
        num, den = power_terms(st, prob)
        delta, _, t = admm_inner(st.p_bar, num, den, prob, rho, cfg.eps_a, cfg.l_max_admm, log, executor)
        inner.append(t)
        f_old = st.objective_trace[-1]
        f_new = prob.objective(delta)
        if f_new >= f_old:
            st.p_bar = delta
            st.gamma = update_gamma(st, prob)
        else:
            f_new = f_old
        st.objective_trace.append(f_new)
        if abs(f_new - f_old) < cfg.eps1:
            converged = True
            break
    return AdmmResult(P=st.p_bar ** 2, objective_trace=st.objective_trace, inner_iterations=inner,
                      iterations=it, converged=converged, log=log, state=st)
