"""Transmission-window planning: absorption fit, edge bands, sub-band count/width."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .errors import Infeasible

THZ = 1e12
GHZ = 1e9


@dataclass(frozen=True)
class TwFit:
    """k(f) ~ t1*exp(-1/(t2*f + t3)**2) + t4 over [f_lo, f_hi] (f in THz, k in 1/m)."""

    t1: float
    t2: float
    t3: float
    t4: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not (self.t1 > 0 and self.t4 > 0):
            raise ValueError("fit requires t1 > 0 and t4 > 0")
        if self.t2 == 0:
            raise ValueError("fit requires t2 != 0")
        if not self.f_hi > self.f_lo:
            raise ValueError("empty transmission window")

    @property
    def f_min(self) -> float:
        """Frequency (THz) of the fitted absorption minimum."""
        return -self.t3 / self.t2

    def convexity_interval(self) -> tuple[float, float]:
        r = math.sqrt(6.0)
        a = (-r - 3 * self.t3) / (3 * self.t2)
        b = (r - 3 * self.t3) / (3 * self.t2)
        return (min(a, b), max(a, b))


# Curve-fit coefficients for four THz transmission windows.
TW_REGISTRY: dict[str, TwFit] = {
    "TW1": TwFit(1.1, -14.5233, 7.1063, 0.0173, 0.448, 0.531),
    "TW2": TwFit(0.8, 11.3600, -7.6442, 0.0139, 0.624, 0.722),
    "TW3": TwFit(0.5, 9.6221, -8.1526, 0.0139, 0.78, 0.915),
    "TW4": TwFit(1.2, -21.6372, 22.28, 0.0882, 0.997, 1.063),
}


def k_bar(f, fit: TwFit):
    """Fitted absorption coefficient (1/m) at frequency ``f`` in THz.

    Where ``t2*f + t3 == 0`` the exponential term vanishes and ``t4`` is returned.
    """
    f = np.asarray(f, dtype=float)
    x = fit.t2 * f + fit.t3
    with np.errstate(divide="ignore", over="ignore"):
        e = np.where(x == 0.0, 0.0, np.exp(-1.0 / np.where(x == 0.0, 1.0, x) ** 2))
    out = fit.t1 * e + fit.t4
    return float(out) if out.ndim == 0 else out


def solve_edge_bands(fit: TwFit, epsilon: float, tol: float = 1e-12) -> tuple[float, float]:
    """Smallest leading/trailing edge bands (Hz) keeping |k(end) - k(start)| <= epsilon.

    Both usable endpoints are first clamped into the convexity interval of the fit.
    Then the endpoint with the larger absorption is pulled inward by bisection.
    On a convex curve that side alone gives the minimal total edge bandwidth.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c_lo, c_hi = fit.convexity_interval()
    a = max(fit.f_lo, c_lo)
    b = min(fit.f_hi, c_hi)
    if not a < b:
        raise Infeasible("transmission window does not intersect the convexity interval")

    ka, kb = k_bar(a, fit), k_bar(b, fit)
    if abs(kb - ka) > epsilon:
        if kb > ka:
            # g(v) = k(b - v) - k(a) - eps has a single sign change on [0, b - a]
            g = lambda v: k_bar(b - v, fit) - ka - epsilon
        else:
            g = lambda v: k_bar(a + v, fit) - kb - epsilon
        lo, hi = 0.0, b - a
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if g(mid) > 0:
                lo = mid
            else:
                hi = mid
        # hi is the feasible side of the bracket
        if kb > ka:
            b -= hi
        else:
            a += hi
    return ((a - fit.f_lo) * THZ, (fit.f_hi - b) * THZ)


def _squint_ok(S, w_T, w_I, w_E, w_G, B_th, f_I) -> bool:
    w = (w_T - w_E - w_I - (S - 1) * w_G) / S
    if w <= 0:
        return False
    return w / (f_I + w_I + 0.5 * w) <= B_th


def s_lower_bound(w_T, w_I, w_E, w_G, B_th, f_I) -> int:
    """Smallest sub-band count meeting the fractional-bandwidth cap at s = 1.

    All arguments in Hz except ``B_th``.  Closed form, followed by a direct check of
    the squint condition so that float rounding at the ceiling cannot leave S one off.
    """
    if not w_T > w_I + w_E:
        raise Infeasible("edge bands consume the whole window")
    if B_th <= 0:
        raise ValueError("B_th must be positive")
    num = 2 * (w_T - w_I + w_G - w_E) + B_th * (-w_T + w_I - w_G + w_E)
    den = 2 * w_G + 2 * B_th * (f_I + w_I) - B_th * w_G
    S = max(1, math.ceil(num / den)) if den > 0 else 1
    if S > 1 and _squint_ok(S - 1, w_T, w_I, w_E, w_G, B_th, f_I):
        S -= 1
    if not _squint_ok(S, w_T, w_I, w_E, w_G, B_th, f_I):
        S += 1
        if not _squint_ok(S, w_T, w_I, w_E, w_G, B_th, f_I):
            raise Infeasible("no sub-band count satisfies the fractional-bandwidth cap")
    return S


def sub_band_width(S: int, w_T, w_I, w_E, w_G) -> float:
    if S < 1:
        raise ValueError("S must be >= 1")
    w = (w_T - w_E - w_I - (S - 1) * w_G) / S
    if w <= 0:
        raise Infeasible(f"sub-band width {w} <= 0 for S={S}")
    return w


def center_frequencies(S: int, f_I, w_I, w, w_G) -> np.ndarray:
    s = np.arange(1, S + 1)
    return f_I + w_I + (s - 0.5) * w + (s - 1) * w_G


KOverride = Union[float, Callable[[np.ndarray], np.ndarray], None]


@dataclass(frozen=True)
class SpectrumPlan:
    fit: TwFit
    epsilon: float
    w_I: float
    w_E: float
    w_G: float
    B_th: float
    S_star: int
    w: float
    f_centers: np.ndarray = field(repr=False)
    k_scale: float = 1.0
    k_override: KOverride = None

    @property
    def f_I(self) -> float:
        return self.fit.f_lo * THZ

    @property
    def f_E(self) -> float:
        return self.fit.f_hi * THZ

    @property
    def w_T(self) -> float:
        return self.f_E - self.f_I

    @property
    def fractional_bandwidths(self) -> np.ndarray:
        return self.w / self.f_centers

    def absorption(self, f_hz) -> np.ndarray:
        """Absorption coefficient (1/m) used by the channel model at ``f_hz``."""
        f_hz = np.asarray(f_hz, dtype=float)
        if self.k_override is None:
            return self.k_scale * np.asarray(k_bar(f_hz / THZ, self.fit))
        if callable(self.k_override):
            return self.k_scale * np.asarray(self.k_override(f_hz), dtype=float)
        return self.k_scale * np.full(f_hz.shape, float(self.k_override))

    def with_s(self, S: int) -> "SpectrumPlan":
        """Same window and edges, different sub-band count (squint cap not enforced)."""
        w = sub_band_width(S, self.w_T, self.w_I, self.w_E, self.w_G)
        return replace(self, S_star=S, w=w,
                       f_centers=center_frequencies(S, self.f_I, self.w_I, w, self.w_G))

    def with_absorption(self, k_scale: float = None, k_override: KOverride = "keep") -> "SpectrumPlan":
        kw = {}
        if k_scale is not None:
            kw["k_scale"] = k_scale
        if k_override != "keep":
            kw["k_override"] = k_override
        return replace(self, **kw)


def build_plan(fit: TwFit, epsilon: float = 0.05, w_G: float = 0.5 * GHZ, B_th: float = 0.01,
               w_I: Optional[float] = None, w_E: Optional[float] = None,
               k_scale: float = 1.0, k_override: KOverride = None) -> SpectrumPlan:
    """Stage one: edge bands, then the squint-limited sub-band count and width.

    ``w_I``/``w_E`` (Hz) bypass the edge-band solver when both are given.
    """
    if (w_I is None) != (w_E is None):
        raise ValueError("give both edge bands or neither")
    if w_I is None:
        w_I, w_E = solve_edge_bands(fit, epsilon)
    f_I = fit.f_lo * THZ
    w_T = (fit.f_hi - fit.f_lo) * THZ
    S = s_lower_bound(w_T, w_I, w_E, w_G, B_th, f_I)
    w = sub_band_width(S, w_T, w_I, w_E, w_G)
    return SpectrumPlan(fit=fit, epsilon=epsilon, w_I=float(w_I), w_E=float(w_E), w_G=float(w_G),
                        B_th=float(B_th), S_star=S, w=w,
                        f_centers=center_frequencies(S, f_I, w_I, w, w_G),
                        k_scale=k_scale, k_override=k_override)


def lemma1_sweep(scenario, plan: SpectrumPlan, s_values) -> list[tuple[int, float]]:
    """Sum-rate (bits/s) versus sub-band count under equal power and fixed association.

    BS b serves user b on every sub-band, whatever S is.  Fading is drawn once per
    BS-user pair and held flat across frequency, so the only things that change
    with S are the sub-band width, guard-band overhead and the absorption at the
    moved center frequencies.
    """
    from .channel import link_gains, rng_for, sinr_all

    B, N = scenario.n_bs, scenario.n_users
    m = scenario.nakagami_m
    chi = rng_for(scenario.rng_seed, "lemma1-fading").gamma(m, 1.0 / m, size=(B, 1, N))
    out = []
    for S in s_values:
        p = plan.with_s(int(S))
        tensor = link_gains(scenario, p, chi=chi)
        A = fixed_assignment(B, p.S_star, N)
        P = np.repeat(scenario.p_max_vec[:, None] / p.S_star, p.S_star, axis=1)
        gamma = sinr_all(P, tensor, p, scenario)
        rate = A * p.w * np.log2(1.0 + gamma)
        out.append((int(S), float(rate.sum())))
    return out


def fixed_assignment(B: int, S: int, N: int) -> np.ndarray:
    """BS b serves user b on all S sub-bands (needs N >= B)."""
    if N < B:
        raise Infeasible("fixed association needs at least one user per BS")
    A = np.zeros((B, S, N), dtype=np.int8)
    A[np.arange(B), :, np.arange(B)] = 1
    return A
