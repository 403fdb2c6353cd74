"""Joint user association / sub-band assignment as a totally unimodular LP.

Flattening: a[i] with i = n + N*s + N*S*b (0-based), i.e. ``A.reshape(-1)`` of a
B x S x N array in C order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .channel import rate_tensor
from .errors import (EntriesOutOfRange, InfeasibleFairness, LpInfeasible,
                     NonIntegralSolution, TooLarge)

INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class ConstraintSystem:
    """Stacked rows [C; D; E; F] with right-hand side [k1; k2; k3; k4].

    Group tags used throughout:
      C2   (C rows)  a user takes a sub-band from at most one BS, <= 1
      C3   (D rows)  every (BS, sub-band) pair serves exactly one user, == 1
      C4a  (E rows)  a user holds at most S sub-bands, <= S
      C4b  (F rows)  a user holds at least its floor Gamma_n, -sum <= -Gamma_n
    """

    B: int
    S: int
    N: int
    gamma_floor: tuple
    T: np.ndarray
    k: np.ndarray

    @property
    def groups(self) -> dict[str, slice]:
        B, S, N = self.B, self.S, self.N
        c, d, e = N * S, N * S + B * S, N * S + B * S + N
        return {"C2": slice(0, c), "C3": slice(c, d), "C4a": slice(d, e), "C4b": slice(e, e + N)}

    def block(self, tag: str) -> np.ndarray:
        return self.T[self.groups[tag]]

    def rhs(self, tag: str) -> np.ndarray:
        return self.k[self.groups[tag]]

    def is_feasible(self, a) -> bool:
        a = np.asarray(a).reshape(-1)
        g = self.groups
        Ta = self.T @ a
        ok_le = all(np.all(Ta[g[t]] <= self.k[g[t]]) for t in ("C2", "C4a", "C4b"))
        return bool(ok_le and np.all(Ta[g["C3"]] == self.k[g["C3"]]) and np.all((a == 0) | (a == 1)))


def check_fairness(B: int, S: int, N: int, gamma_floor) -> None:
    g = np.asarray(gamma_floor)
    if N < B:
        raise InfeasibleFairness(f"N={N} users cannot fill B={B} BSs on one sub-band without reuse")
    if np.any(g > S):
        raise InfeasibleFairness(f"a fairness floor exceeds S={S}")
    if g.sum() > B * S:
        raise InfeasibleFairness(f"sum of floors {g.sum()} exceeds B*S={B * S}")


def build_constraints(B: int, S: int, N: int, gamma_floor, check: bool = True) -> ConstraintSystem:
    gamma_floor = tuple(int(x) for x in np.broadcast_to(np.asarray(gamma_floor), (N,)))
    return _build(B, S, N, gamma_floor, check)


@lru_cache(maxsize=64)
def _build(B, S, N, gamma_floor, check):
    if check:
        check_fairness(B, S, N, gamma_floor)
    C = np.kron(np.ones((1, B)), np.eye(N * S))
    D = np.kron(np.eye(B), np.kron(np.eye(S), np.ones((1, N))))
    E = np.kron(np.ones((1, B * S)), np.eye(N))
    T = np.vstack([C, D, E, -E]).astype(np.int8)
    k = np.concatenate([np.ones(N * S), np.ones(B * S), np.full(N, S), -np.asarray(gamma_floor)]).astype(int)
    T.setflags(write=False)
    k.setflags(write=False)
    return ConstraintSystem(B, S, N, gamma_floor, T, k)


def rate_coefficients(P, tensor, plan, scenario, variant=None) -> np.ndarray:
    """q_i = w*log2(1 + SINR_i(P)) for every candidate (b, s, n); blocked links get 0."""
    return rate_tensor(P, tensor, plan, scenario, variant).reshape(-1)


def _normalized(q):
    q = np.asarray(q, dtype=float).reshape(-1)
    scale = np.max(np.abs(q))
    return q / scale if scale > 0 else q


def _lp_parts(cs: ConstraintSystem):
    g = cs.groups
    T = sp.csr_matrix(cs.T.astype(float))
    ub_rows = np.r_[np.arange(g["C2"].start, g["C2"].stop), np.arange(g["C4a"].start, cs.T.shape[0])]
    return T[ub_rows], cs.k[ub_rows], T[g["C3"]], cs.k[g["C3"]]


def _round_checked(x, shape):
    r = np.round(x)
    dev = np.max(np.abs(x - r)) if x.size else 0.0
    if dev > INTEGRALITY_TOL:
        raise NonIntegralSolution(f"LP vertex deviates {dev:.3g} from integrality")
    return r.astype(np.int8).reshape(shape)


def solve_assignment(q, cs: ConstraintSystem) -> np.ndarray:
    """Maximize q.a over the LP relaxation; returns the B x S x N 0/1 assignment.

    Uses the HiGHS dual simplex.  Integrality of the returned vertex is checked,
    not assumed.
    """
    A_ub, b_ub, A_eq, b_eq = _lp_parts(cs)
    res = linprog(-_normalized(q), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise LpInfeasible(res.message)
    return _round_checked(res.x, (cs.B, cs.S, cs.N))


def solve_assignment_single(q, cs: ConstraintSystem) -> np.ndarray:
    """Assignment with single connectivity: each user is served by at most one BS.

    Adds x[b, n] >= a[b, s, n] and sum_b x[b, n] <= 1.  The augmented matrix is not
    known to be TU, so a fractional LP vertex falls back to branch-and-bound.
    """
    B, S, N = cs.B, cs.S, cs.N
    nA, nX = B * S * N, B * N
    A_ub, b_ub, A_eq, b_eq = _lp_parts(cs)
    # a[b,s,n] - x[b,n] <= 0
    rows = np.arange(nA)
    b_idx, s_idx, n_idx = np.unravel_index(rows, (B, S, N))
    link = sp.csr_matrix((np.r_[np.ones(nA), -np.ones(nA)],
                          (np.r_[rows, rows], np.r_[rows, nA + b_idx * N + n_idx])), shape=(nA, nA + nX))
    one_bs = sp.csr_matrix((np.ones(nX), (np.tile(np.arange(N), B), nA + np.arange(nX))), shape=(N, nA + nX))
    pad = lambda M: sp.hstack([M, sp.csr_matrix((M.shape[0], nX))]).tocsr()
    A_ub2 = sp.vstack([pad(A_ub), link, one_bs]).tocsr()
    b_ub2 = np.r_[b_ub, np.zeros(nA), np.ones(N)]
    A_eq2 = pad(A_eq)
    c = np.r_[-_normalized(q), np.zeros(nX)]
    res = linprog(c, A_ub=A_ub2, b_ub=b_ub2, A_eq=A_eq2, b_eq=b_eq, bounds=(0, 1), method="highs-ds")
    if res.status != 0:
        raise LpInfeasible(res.message)
    x = res.x[:nA]
    if np.max(np.abs(x - np.round(x))) > INTEGRALITY_TOL:
        cons = [LinearConstraint(A_ub2, -np.inf, b_ub2), LinearConstraint(A_eq2, b_eq, b_eq)]
        res = milp(c, constraints=cons, integrality=np.ones(nA + nX), bounds=Bounds(0, 1))
        if res.status != 0:
            raise LpInfeasible(res.message)
        x = res.x[:nA]
    return _round_checked(x, (B, S, N))


def assignment_objective(q, A) -> float:
    return float(np.dot(np.asarray(q, dtype=float).reshape(-1), np.asarray(A, dtype=float).reshape(-1)))


def is_feasible_assignment(A, gamma_floor) -> bool:
    A = np.asarray(A)
    B, S, N = A.shape
    per_user = A.sum(axis=(0, 1))
    return bool(np.all((A == 0) | (A == 1))
                and np.all(A.sum(axis=0) <= 1)
                and np.all(A.sum(axis=2) == 1)
                and np.all(per_user >= np.asarray(gamma_floor))
                and np.all(per_user <= S))


# ---------------------------------------------------------------- oracles

def _check_entries(M):
    M = np.asarray(M)
    if not np.all(np.isin(M, (-1, 0, 1))):
        raise EntriesOutOfRange("matrix entries must be in {0, +1, -1}")
    return M.astype(float)


def _dets_ok(M, rows, cols) -> bool:
    sub = M[np.asarray(rows)[:, :, None], np.asarray(cols)[:, None, :]]
    d = np.round(np.linalg.det(sub))
    return bool(np.all(np.abs(d) <= 1))


def tum_oracle(M, exhaustive_up_to: int | None = None, samples: int = 0, seed: int = 0) -> bool:
    """Determinant test for total unimodularity.

    Every square submatrix of order <= ``exhaustive_up_to`` (default: all orders) is
    checked.  ``samples`` random submatrices of each larger order are drawn on top;
    that part is probabilistic evidence only.
    """
    M = _check_entries(M)
    m, n = M.shape
    top = min(m, n)
    kmax = top if exhaustive_up_to is None else min(exhaustive_up_to, top)
    for k in range(1, kmax + 1):
        rows = np.array(list(itertools.combinations(range(m), k)))
        cols = np.array(list(itertools.combinations(range(n), k)))
        for r0 in range(0, len(rows), 512):
            rr = np.repeat(rows[r0:r0 + 512], len(cols), axis=0)
            cc = np.tile(cols, (min(512, len(rows) - r0), 1))
            if not _dets_ok(M, rr, cc):
                return False
    if samples and kmax < top:
        rng = np.random.default_rng(seed)
        orders = rng.integers(kmax + 1, top + 1, size=samples)
        for k in np.unique(orders):
            cnt = int(np.sum(orders == k))
            rr = np.array([np.sort(rng.choice(m, k, replace=False)) for _ in range(cnt)])
            cc = np.array([np.sort(rng.choice(n, k, replace=False)) for _ in range(cnt)])
            if not _dets_ok(M, rr, cc):
                return False
    return True


def ghouila_houri_oracle(M) -> bool:
    """TU test by row-partition characterization (exhaustive; tiny matrices only).

    For every subset of rows there must be a +/-1 signing whose signed column sums
    all lie in {-1, 0, 1}.
    """
    M = _check_entries(M)
    m = M.shape[0]
    if m > 16:
        raise TooLarge("row-partition oracle is exponential in the row count")
    signings = {}
    for mask in range(1, 1 << m):
        idx = [i for i in range(m) if mask >> i & 1]
        k = len(idx)
        if k not in signings:
            signings[k] = 1 - 2 * ((np.arange(1 << (k - 1))[:, None] >> np.arange(k)) & 1)
        sums = signings[k] @ M[idx]
        if not np.any(np.all(np.abs(sums) <= 1, axis=1)):
            return False
    return True


@lru_cache(maxsize=8)
def _binary_vectors(n: int) -> np.ndarray:
    v = (np.arange(1 << n, dtype=np.int64)[:, None] >> np.arange(n)) & 1
    v = v.astype(np.int8)
    v.setflags(write=False)
    return v


def ilp_brute_force(q, cs: ConstraintSystem):
    """Enumerate every binary vector; return (assignment, objective) of the best feasible one."""
    n = cs.B * cs.S * cs.N
    if n > 20:
        raise TooLarge(f"B*S*N = {n} > 20")
    q = np.asarray(q, dtype=float).reshape(-1)
    g = cs.groups
    T = cs.T.astype(np.int64)
    best, best_val = None, -np.inf
    chunk = 1 << min(n, 16)
    allv = _binary_vectors(min(n, 16))
    for hi in range(1 << max(0, n - 16)):
        if n > 16:
            high = ((hi >> np.arange(n - 16)) & 1).astype(np.int8)
            V = np.hstack([allv, np.broadcast_to(high, (chunk, n - 16))])
        else:
            V = allv
        TV = V.astype(np.int64) @ T.T
        ok = np.ones(len(V), dtype=bool)
        for tag in ("C2", "C4a", "C4b"):
            ok &= np.all(TV[:, g[tag]] <= cs.k[g[tag]], axis=1)
        ok &= np.all(TV[:, g["C3"]] == cs.k[g["C3"]], axis=1)
        if not ok.any():
            continue
        cand = V[ok]
        vals = np.array([assignment_objective(q, v) for v in cand])
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best, best_val = cand[j], vals[j]
    if best is None:
        raise InfeasibleFairness("no binary vector satisfies the constraints")
    return best.reshape(cs.B, cs.S, cs.N).astype(np.int8), float(best_val)


# ------------------------------------------------------- heuristic assignments

def _deficit_fill(B, S, N, gamma_floor, rng, score=None):
    """Sub-band by sub-band, serve users with the largest remaining floor deficit first."""
    A = np.zeros((B, S, N), dtype=np.int8)
    deficit = np.asarray(gamma_floor, dtype=int).copy()
    for s in range(S):
        key = rng.random(N) if score is None else score[s]
        order = np.lexsort((-key, -deficit))
        users = order[:B]
        for b, n in enumerate(rng.permutation(users) if score is None else users):
            A[b, s, n] = 1
        deficit[users] -= 1
    return A


def random_feasible_assignment(B, S, N, gamma_floor, rng: np.random.Generator, tries: int = 1000) -> np.ndarray:
    """Uniform over C2/C3-feasible assignments conditioned on the fairness floors.

    Rejection sampling; after ``tries`` failures a randomized deficit-first fill is used.
    """
    check_fairness(B, S, N, gamma_floor)
    floor = np.asarray(gamma_floor)
    for _ in range(tries):
        A = np.zeros((B, S, N), dtype=np.int8)
        for s in range(S):
            A[np.arange(B), s, rng.choice(N, B, replace=False)] = 1
        if np.all(A.sum(axis=(0, 1)) >= floor):
            return A
    return _deficit_fill(B, S, N, floor, rng)
