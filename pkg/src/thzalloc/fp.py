"""Centralized power allocation by fractional programming (Lagrangian dual + quadratic transform).

Internally every gain is divided by the receiver noise N0*w, and the objective is
f(p) = sum_{b,s,n} omega_bsn * ln(1 + gamma_bsn) with omega = a * rate_unit.  The
default rate_unit = w / (N * w_T) makes f the per-user spectral efficiency over the
whole window (nats/s/Hz); eps1 and rho are read on that scale.  The optimized
variable is p_bar = sqrt(P) (B x S).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import cross_sum, sinr_gains
from .errors import BracketFailure


@dataclass
class SolverConfig:
    eps1: float = 1e-3
    eps_a: float = 1e-3
    eps3: float = 1e-3
    eps_b: float = 1e-8
    rho: float = 2.2
    l_max: int = 200
    l_max_admm: int = 50
    outer_max: int = 30
    init_scale: float = 0.5


@dataclass
class PowerProblem:
    """Noise-normalized gains for a fixed assignment ``A``."""

    A: np.ndarray
    G: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    p_max: np.ndarray
    w: float = 1.0
    rate_unit: float = 1.0

    @classmethod
    def from_tensor(cls, A, tensor, plan, scenario, variant=None, rate_unit=None):
        G, X, Z = sinr_gains(tensor, scenario, variant)
        noise = scenario.n0 * plan.w
        if rate_unit is None:
            rate_unit = plan.w / (scenario.n_users * plan.w_T)
        return cls(A=np.asarray(A, dtype=float), G=G / noise, X=X / noise, Z=Z / noise,
                   p_max=scenario.p_max_vec, w=plan.w, rate_unit=rate_unit)

    @property
    def omega(self) -> np.ndarray:
        return self.A * self.rate_unit

    def with_assignment(self, A) -> "PowerProblem":
        return PowerProblem(np.asarray(A, dtype=float), self.G, self.X, self.Z, self.p_max, self.w, self.rate_unit)

    def interference(self, p_bar) -> np.ndarray:
        return cross_sum(p_bar ** 2, self.X)

    def sinr(self, p_bar) -> np.ndarray:
        P = (p_bar ** 2)[:, :, None]
        return P * self.G / (self.interference(p_bar) + P * self.Z + 1.0)

    def objective(self, p_bar) -> float:
        return float(np.sum(self.omega * np.log1p(self.sinr(p_bar))))

    def to_bits(self, f) -> float:
        """Internal objective -> sum-rate in bits/s."""
        return f * self.w / (self.rate_unit * math.log(2.0))

    def equal_split(self, scale: float = 0.5) -> np.ndarray:
        S = self.A.shape[1]
        return np.sqrt(np.repeat(scale * self.p_max[:, None] / S, S, axis=1))


@dataclass
class FpState:
    p_bar: np.ndarray
    gamma: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    objective_trace: list = field(default_factory=list)
    # gamma that entered the most recent power update (p_bar maximizes f2 at it and y)
    gamma_block: Optional[np.ndarray] = None


def init_state(prob: PowerProblem, p_bar0=None, scale: float = 0.5) -> FpState:
    p_bar = prob.equal_split(scale) if p_bar0 is None else np.array(p_bar0, dtype=float)
    B, S, N = prob.A.shape
    st = FpState(p_bar=p_bar, gamma=np.zeros((B, S, N)), y=np.zeros((B, S, N)), mu=np.zeros(B))
    st.gamma = update_gamma(st, prob)
    st.objective_trace.append(prob.objective(p_bar))
    return st


def update_gamma(state: FpState, prob: PowerProblem) -> np.ndarray:
    """gamma* is the physical SINR at the current powers."""
    return prob.sinr(state.p_bar)


def update_y(state: FpState, prob: PowerProblem) -> np.ndarray:
    P = (state.p_bar ** 2)[:, :, None]
    num = np.sqrt(prob.omega * (1 + state.gamma) * P * prob.G)
    return num / (prob.interference(state.p_bar) + P * (prob.G + prob.Z) + 1.0)


def power_terms(state: FpState, prob: PowerProblem):
    """(Num, Den) with p_bar* = Num / (Den + mu_b).

    Den collects, for BS b on sub-band s, the interference b causes to the links of
    every other BS (weighted by their y^2) plus its own signal and self-noise terms.
    """
    y2 = state.y ** 2
    num = np.sum(state.y * np.sqrt(prob.omega * (1 + state.gamma) * prob.G), axis=2)
    y2_others = y2.sum(axis=0, keepdims=True) - y2
    den = np.sum(prob.X * y2_others, axis=2) + np.sum(y2 * (prob.G + prob.Z), axis=2)
    return num, den


def update_power(num, den, mu) -> np.ndarray:
    """p_bar* = Num/(Den + mu_b); an all-zero row gives 0 instead of 0/0."""
    mu = np.asarray(mu, dtype=float)
    d = den + (mu[:, None] if mu.ndim == 1 else mu)
    out = np.zeros(np.broadcast(num, d).shape)
    with np.errstate(divide="ignore"):
        np.divide(num, d, out=out, where=num > 0)
    return out


def bisect_mu(num, den, p_max, eps_b: float = 1e-8, max_doublings: int = 128):
    """Per-BS multiplier mu_b >= 0 with sum_s p_bar(mu_b)^2 <= P_b (budget tight to eps_b).

    Rows are solved simultaneously.  Returns the upper (feasible) end of the final bracket.
    """
    num = np.atleast_2d(num)
    den = np.atleast_2d(den)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (num.shape[0],))

    def J(mu):
        with np.errstate(over="ignore"):
            return np.sum(update_power(num, den, mu) ** 2, axis=1) - p_max

    mu = np.zeros(num.shape[0])
    active = J(mu) > 0
    if not active.any():
        return mu
    lo = np.zeros_like(mu)
    hi = np.ones_like(mu)
    for _ in range(max_doublings):
        over = active & (J(hi) > 0)
        if not over.any():
            break
        lo = np.where(over, hi, lo)
        hi = np.where(over, 2 * hi, hi)
    else:
        if np.any(active & (J(hi) > 0)):
            raise BracketFailure("budget multiplier not bracketed after 128 doublings")
    tol = eps_b * p_max
    for _ in range(200):
        Jhi = J(hi)
        todo = active & (-Jhi > tol) & (hi - lo > 1e-15 * hi)
        if not todo.any():
            break
        mid = 0.5 * (lo + hi)
        pos = J(mid) > 0
        lo = np.where(todo & pos, mid, lo)
        hi = np.where(todo & ~pos, mid, hi)
    return np.where(active, hi, 0.0)


def lagrange_lambda(state: FpState, prob: PowerProblem) -> np.ndarray:
    """Optimal dual of the SINR-relaxation constraints (equals gamma* up to the weights)."""
    return prob.omega * state.gamma


def f1(p_bar, gamma, prob: PowerProblem) -> float:
    """Objective after the Lagrangian dual transform."""
    P = (p_bar ** 2)[:, :, None]
    frac = (1 + gamma) * P * prob.G / (prob.interference(p_bar) + P * (prob.G + prob.Z) + 1.0)
    return float(np.sum(prob.omega * (np.log1p(gamma) - gamma + frac)))


def f2(p_bar, gamma, y, prob: PowerProblem) -> float:
    """Objective after the quadratic transform of every ratio."""
    P = (p_bar ** 2)[:, :, None]
    lin = 2 * y * np.sqrt(prob.omega * (1 + gamma) * P * prob.G)
    quad = y ** 2 * (prob.interference(p_bar) + P * (prob.G + prob.Z) + 1.0)
    return float(np.sum(prob.omega * (np.log1p(gamma) - gamma) + lin - quad))


def lagrangian_gradient(state: FpState, prob: PowerProblem, step: float = 1e-6,
                        gamma=None, y=None) -> np.ndarray:
    """Central differences of f2 - sum_b mu_b*(||p_bar_b||^2 - P_b) in p_bar at fixed (gamma, y).

    Defaults to the auxiliaries of the last power update.  Passing the refreshed
    gamma*(p_bar), y*(p_bar) instead gives the gradient of the original objective.
    """
    if gamma is None:
        gamma = state.gamma if state.gamma_block is None else state.gamma_block
    y = state.y if y is None else y

    def L(pb):
        return f2(pb, gamma, y, prob) - float(np.sum(state.mu * ((pb ** 2).sum(axis=1) - prob.p_max)))

    g = np.zeros_like(state.p_bar)
    for idx in np.ndindex(*state.p_bar.shape):
        e = np.zeros_like(state.p_bar)
        e[idx] = step
        g[idx] = (L(state.p_bar + e) - L(state.p_bar - e)) / (2 * step)
    return g


@dataclass
class FpResult:
    P: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool
    state: FpState = field(repr=False)


def fp_iteration(state: FpState, prob: PowerProblem, eps_b: float = 1e-8) -> None:
    state.y = update_y(state, prob)
    num, den = power_terms(state, prob)
    state.mu = bisect_mu(num, den, prob.p_max, eps_b)
    state.p_bar = update_power(num, den, state.mu)
    state.gamma_block = state.gamma
    state.gamma = update_gamma(state, prob)


def run_fp(prob: PowerProblem, config: Optional[SolverConfig] = None, p_bar0=None) -> FpResult:
    """Alternate y -> (mu, p_bar) -> gamma until the objective moves by less than eps1."""
    cfg = config or SolverConfig()
    st = init_state(prob, p_bar0, cfg.init_scale)
    converged = False
    it = 0
    for it in range(1, cfg.l_max + 1):
        fp_iteration(st, prob, cfg.eps_b)
        st.objective_trace.append(prob.objective(st.p_bar))
        if abs(st.objective_trace[-1] - st.objective_trace[-2]) < cfg.eps1:
            converged = True
            break
    return FpResult(P=st.p_bar ** 2, objective_trace=st.objective_trace, iterations=it,
                    converged=converged, state=st)
