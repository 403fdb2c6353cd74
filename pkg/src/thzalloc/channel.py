"""THz link gains, blockage, SINR and rate."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ZeroDistance

C_LIGHT = 299_792_458.0


def rng_for(seed: int, tag: str, *extra: int) -> np.random.Generator:
    """Independent generator per (seed, purpose tag, extra keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), *map(int, extra)]))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def antenna_gain(theta: float, theta_main: float, g_max: float, g_min: float = 0.0) -> float:
    """Flat-top sectored pattern: main lobe within |theta| <= theta_main, else side lobe."""
    return g_max if abs(theta) <= theta_main else g_min


def alignment_probability(theta_tx: float, theta_rx: float) -> float:
    return theta_tx * theta_rx / (4 * np.pi ** 2)


@dataclass
class NetworkScenario:
    bs_positions: np.ndarray
    user_positions: np.ndarray
    p_max: float = 1.0
    q_align: float = 0.2
    g_tx: float = db_to_linear(25.0)
    g_rx: float = db_to_linear(25.0)
    nakagami_m: float = 20.0
    blockage_density: float = 0.005
    n0: float = db_to_linear(-174.0) * 1e-3
    gamma_floor: Optional[np.ndarray] = None
    hi_kt: float = 0.0
    hi_kr: float = 0.0
    csi_zeta: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        self.bs_positions = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        self.user_positions = np.atleast_2d(np.asarray(self.user_positions, dtype=float))
        if self.bs_positions.shape[1] != 2 or self.user_positions.shape[1] != 2:
            raise ValueError("positions must be 2-D points")
        if self.gamma_floor is None:
            self.gamma_floor = np.ones(self.n_users, dtype=int)
        else:
            g = np.broadcast_to(np.asarray(self.gamma_floor), (self.n_users,))
            if np.any(g < 0) or np.any(g != np.round(g)):
                raise ValueError("gamma_floor must be non-negative integers")
            self.gamma_floor = g.astype(int).copy()
        if np.any(np.asarray(self.p_max) <= 0):
            raise ValueError("p_max must be positive")
        if not 0.0 <= self.q_align <= 1.0:
            raise ValueError("q_align must lie in [0, 1]")
        if self.nakagami_m < 0.5:
            raise ValueError("nakagami_m must be >= 0.5")
        if self.blockage_density < 0:
            raise ValueError("blockage_density must be >= 0")
        if self.hi_kt < 0 or self.hi_kr < 0:
            raise ValueError("hardware impairment levels must be >= 0")
        if not 0.0 <= self.csi_zeta <= 1.0:
            raise ValueError("csi_zeta must lie in [0, 1]")

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def p_max_vec(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.p_max, dtype=float), (self.n_bs,)).copy()

    @property
    def hardware_impaired(self) -> bool:
        return self.hi_kt > 0 or self.hi_kr > 0

    def distances(self) -> np.ndarray:
        diff = self.bs_positions[:, None, :] - self.user_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


def uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    th = 2 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def random_scenario(n_bs: int, n_users: int, radius: float = 30.0, seed: int = 0, **params) -> NetworkScenario:
    """BSs and users dropped uniformly in a disc of ``radius`` meters."""
    rng = rng_for(seed, "positions")
    bs = uniform_disc(rng, n_bs, radius)
    users = uniform_disc(rng, n_users, radius)
    return NetworkScenario(bs_positions=bs, user_positions=users, rng_seed=seed, **params)


@dataclass
class ChannelTensor:
    """Per (b, s, n) gains.  Blockage is kept separate in ``psi`` (B x N)."""

    h2: np.ndarray
    h_tilde2: np.ndarray
    h_bar2: np.ndarray
    psi: np.ndarray
    kd: np.ndarray = field(repr=False)
    mean_gain: np.ndarray = field(repr=False)
    h2_est: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.h2.shape

    def estimated(self) -> "ChannelTensor":
        """View in which the estimated gain replaces the true one (optimizer input)."""
        if self.h2_est is None:
            return self
        h_bar2 = self.h2_est * np.exp(self.kd)
        return replace(self, h2=self.h2_est, h_bar2=h_bar2,
                       h_tilde2=h_bar2 * -np.expm1(-self.kd), h2_est=None)


def sample_blockage(scenario: NetworkScenario) -> np.ndarray:
    """psi[b, n] = 1 (blocked) with probability 1 - exp(-eta * d)."""
    d = scenario.distances()
    p_block = -np.expm1(-scenario.blockage_density * d)
    u = rng_for(scenario.rng_seed, "blockage").random(d.shape)
    return (u < p_block).astype(np.int8)


def link_gains(scenario: NetworkScenario, plan, chi: Optional[np.ndarray] = None) -> ChannelTensor:
    """Desired, molecular-noise and interference gains for every (BS, sub-band, user).

    ``chi`` overrides the Nakagami-m power draw (anything broadcastable to B x S x N).
    """
    d = scenario.distances()
    if np.any(d <= 0):
        raise ZeroDistance("a user is co-located with a BS")
    B, N = d.shape
    S = plan.S_star
    f = np.asarray(plan.f_centers, dtype=float)
    k = plan.absorption(f)
    if chi is None:
        m = scenario.nakagami_m
        chi = rng_for(scenario.rng_seed, "fading").gamma(m, 1.0 / m, size=(B, S, N))
    chi = np.broadcast_to(chi, (B, S, N))
    const = scenario.g_tx * scenario.g_rx * C_LIGHT ** 2 / (4 * np.pi) ** 2
    mean_gain = const / d[:, None, :] ** 2 / f[None, :, None] ** 2
    mean_gain = np.broadcast_to(mean_gain, (B, S, N)).copy()
    h_bar2 = mean_gain * chi
    kd = k[None, :, None] * d[:, None, :]
    return ChannelTensor(
        h2=h_bar2 * np.exp(-kd),
        h_tilde2=h_bar2 * -np.expm1(-kd),
        h_bar2=h_bar2,
        psi=sample_blockage(scenario),
        kd=kd,
        mean_gain=mean_gain,
    )


def perturb_csi(tensor: ChannelTensor, zeta: float, seed: int) -> ChannelTensor:
    """Attach an estimated gain with correlation ``zeta`` to the true channel.

    The estimate is zeta*h + sqrt(1 - zeta^2)*e with e ~ CN(0, free-space gain), so
    the error power follows the same d^-2 law as the link itself.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")
    if zeta == 1.0:
        return replace(tensor, h2_est=tensor.h2.copy())
    rng = rng_for(seed, "csi")
    sigma = np.sqrt(tensor.mean_gain / 2)
    e = sigma * (rng.standard_normal(tensor.shape) + 1j * rng.standard_normal(tensor.shape))
    h_hat = zeta * np.sqrt(tensor.h2) + np.sqrt(1 - zeta ** 2) * e
    return replace(tensor, h2_est=np.abs(h_hat) ** 2)


def sinr_gains(tensor: ChannelTensor, scenario: NetworkScenario, variant: Optional[str] = None):
    """(signal, cross, self) gain arrays with blocked links zeroed.

    SINR_bsn = p_bs*signal / (sum_{b' != b} p_b's*cross_b'sn + p_bs*self + N0*w).
    The hardware-impaired variant folds the distortion terms into cross/self.
    """
    if variant is None:
        variant = "hardware_impaired" if scenario.hardware_impaired else "ideal"
    vis = 1 - tensor.psi[:, None, :]
    G = tensor.h2 * vis
    X = scenario.q_align * (tensor.h_bar2 * vis)
    Z = tensor.h_tilde2 * vis
    if variant == "hardware_impaired":
        kt2, kr2 = scenario.hi_kt ** 2, scenario.hi_kr ** 2
        X = X + kr2 * scenario.q_align * G
        Z = Z + (kt2 + kr2) * G
    elif variant != "ideal":
        raise ValueError(f"unknown SINR variant {variant!r}")
    return G, X, Z


def cross_sum(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """I[b,s,n] = sum over b' != b of P[b',s] * X[b',s,n]."""
    B = P.shape[0]
    off = 1.0 - np.eye(B)
    return np.einsum("bc,csn->bsn", off, P[:, :, None] * X)


def sinr_from_gains(P: np.ndarray, G, X, Z, noise: float) -> np.ndarray:
    Pe = P[:, :, None]
    return Pe * G / (cross_sum(P, X) + Pe * Z + noise)


def sinr_all(P: np.ndarray, tensor: ChannelTensor, plan, scenario: NetworkScenario,
             variant: Optional[str] = None) -> np.ndarray:
    """Candidate-association SINR for every (b, s, n) at 2-D power ``P`` (B x S, watts)."""
    G, X, Z = sinr_gains(tensor, scenario, variant)
    return sinr_from_gains(np.asarray(P, dtype=float), G, X, Z, scenario.n0 * plan.w)


def sinr(b, s, n, P, tensor, plan, scenario, variant=None) -> float:
    return float(sinr_all(P, tensor, plan, scenario, variant)[b, s, n])


def blockage_aware_rate(b, s, n, P, tensor, plan, scenario, variant=None) -> float:
    """w*log2(1+SINR) in bits/s, or 0 for a blocked link."""
    if tensor.psi[b, n]:
        return 0.0
    return float(plan.w * np.log2(1.0 + sinr(b, s, n, P, tensor, plan, scenario, variant)))


def rate_tensor(P, tensor, plan, scenario, variant=None) -> np.ndarray:
    gamma = sinr_all(P, tensor, plan, scenario, variant)
    return plan.w * np.log2(1.0 + gamma) * (1 - tensor.psi[:, None, :])
