"""Closed-form test-count formulas, entropy helpers and moment predictions.

The sufficient-test formulas are upper bounds with proof constants
(``48 e^2`` and ``8 e^2`` by default); they describe how the count scales
rather than what a simulation needs.  The lower bounds are order-level
expressions evaluated with an implicit constant of one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln

from .model import ChannelStats, NoiseParams, design_p

__all__ = [
    "CA1_DEFAULT",
    "CA2_DEFAULT",
    "TheoremDomainWarning",
    "SystemParams",
    "MomentEstimates",
    "LowerBoundOrders",
    "binary_entropy",
    "g_zeta",
    "entropy_affine_bound",
    "log_binom",
    "sufficient_tests_nonuniform",
    "sufficient_tests_uniform",
    "lower_bound_order",
    "moment_oracle",
    "fm_penalty",
]

CA1_DEFAULT = 48.0 * math.e ** 2
CA2_DEFAULT = 8.0 * math.e ** 2


class TheoremDomainWarning(UserWarning):
    """Parameters fall outside the range the test-count theorems cover."""


@dataclass(frozen=True)
class SystemParams:
    N: int
    K: int
    L: int
    noise: NoiseParams = field(default_factory=NoiseParams)
    p: float | None = None  # defaults to 1/((1-u)K)
    c0: float = 1.0
    Ca1: float = CA1_DEFAULT
    Ca2: float = CA2_DEFAULT
    psi0: float = 0.0

    def __post_init__(self):
        if not 1 <= self.K < self.N:
            raise ValueError(f"need 1 <= K < N, got K={self.K}, N={self.N}")
        if not 1 <= self.L <= self.N - self.K:
            raise ValueError(f"need 1 <= L <= N - K, got L={self.L}")
        if self.c0 <= 0 or self.Ca1 <= 0 or self.Ca2 <= 0:
            raise ValueError("c0, Ca1 and Ca2 must be positive")
        if self.psi0 < 0:
            raise ValueError("psi0 must be nonnegative")
        if self.p is None:
            object.__setattr__(self, "p", design_p(self.K, self.noise.u))
        elif not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")

    @property
    def N0(self) -> int:
        return (self.N - self.K) - (self.L - 1)

    @property
    def gamma0(self) -> float:
        u = self.noise.u
        return u / (1.0 - (1.0 - u) * self.p) if u > 0 else 0.0


@dataclass(frozen=True)
class MomentEstimates:
    mu_i: float  # defective item
    mu_j: float  # non-defective item
    var_i_bound: float
    var_j_bound: float
    tau: float
    N0: int | None = None


@dataclass(frozen=True)
class LowerBoundOrders:
    no_noise: float
    dilution: float
    additive: float
    label: str = "order-level, constants unknown"

    def times_log_k(self, K: int) -> "LowerBoundOrders":
        f = math.log(K)
        return LowerBoundOrders(self.no_noise * f, self.dilution * f, self.additive * f,
                                self.label + ", scaled by log K")


def binary_entropy(x: float) -> float:
    """Binary entropy in nats, with ``0 log 0 = 0``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log1p(-x)


def g_zeta(zeta: float) -> float:
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    return binary_entropy(zeta) / (1.0 - zeta)


def entropy_affine_bound(zeta: float) -> float:
    """Affine majorant ``(17/6) zeta + 1/4`` of :func:`g_zeta` on ``(0, 1/2]``."""
    if not 0.0 < zeta <= 0.5:
        raise ValueError(f"zeta must lie in (0, 0.5], got {zeta}")
    return 17.0 / 6.0 * zeta + 0.25


def log_binom(n: int, k: int) -> float:
    """Natural log of ``C(n, k)`` via the beta function."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    if k == 0 or k == n:
        return 0.0
    return float(-math.log(n + 1) - betaln(n - k + 1, k + 1))


def _prefactor(params: SystemParams) -> float:
    u, q = params.noise.u, params.noise.q
    g0 = params.gamma0
    return ((1.0 + params.c0) * params.K * (1.0 - u)
            / ((1.0 - q) * (1.0 - g0) ** 2 * (1.0 + params.psi0)))


def _warn_small_k(params: SystemParams) -> None:
    if params.K < 2:
        warnings.warn("test-count formula assumes K > 1", TheoremDomainWarning, stacklevel=3)


def sufficient_tests_nonuniform(params: SystemParams) -> int:
    """Tests sufficient for recovery with a given defective set."""
    _warn_small_k(params)
    N, K, L = params.N, params.K, params.L
    log_term = math.log(K) + log_binom(N - K, L - 1)
    bracket = params.Ca1 * log_term / params.N0 + params.Ca2 * math.log(K)
    return math.ceil(_prefactor(params) * bracket)


def sufficient_tests_uniform(params: SystemParams) -> int:
    """Tests sufficient for recovery simultaneously over every defective set."""
    _warn_small_k(params)
    N, K, L = params.N, params.K, params.L
    log_term = math.log(K) + log_binom(N - K, L - 1) + log_binom(N, K)
    bracket = params.Ca1 * log_term / params.N0 + params.Ca2 * math.log(N)
    return math.ceil(_prefactor(params) * bracket)


def lower_bound_order(N: int, K: int, L: int, noise: NoiseParams | None = None) -> LowerBoundOrders:
    """Necessary-test orders for the noiseless, dilution and additive cases.

    Each value is the order expression with its hidden constant set to one.
    The additive case divides by ``min(log(1/q), log K)``; with ``q = 0``
    that is ``log K``.
    """
    noise = noise or NoiseParams()
    if K < 2:
        raise ValueError("order bounds need K >= 2 (they divide by log K)")
    alpha0, beta0 = L / N, K / N
    if alpha0 + beta0 >= 1.0:
        raise ValueError("need L/N + K/N < 1")
    ratio = math.log((1.0 - beta0) / (1.0 - alpha0 - beta0))
    logk = math.log(K)
    denom_add = min(math.log(1.0 / noise.q), logk) if noise.q > 0 else logk
    return LowerBoundOrders(
        no_noise=K / logk * ratio,
        dilution=K / ((1.0 - noise.u) * logk) * ratio,
        additive=K / denom_add * ratio,
    )


def moment_oracle(M: int, p: float, stats: ChannelStats, psi_cb: float,
                  N: int | None = None, K: int | None = None,
                  L: int | None = None) -> MomentEstimates:
    """Mean and variance bounds of the column statistic for one item.

    ``N``, ``K`` and ``L`` are only needed to report ``N0``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    G, a = stats.Gamma, stats.gamma0 * stats.Gamma
    mu_j = M * p * (G - psi_cb * (1.0 - G))
    mu_i = M * p * (a - psi_cb * (1.0 - a))
    var_j = M * p * (G + psi_cb ** 2 * (1.0 - G))
    var_i = M * p * (a + psi_cb ** 2 * (1.0 - a))
    N0 = None
    if None not in (N, K, L):
        N0 = (N - K) - (L - 1)
        if N0 < 1:
            raise ValueError("need (N - K) - (L - 1) >= 1")
    return MomentEstimates(mu_i, mu_j, var_i, var_j, 0.5 * (mu_i + mu_j), N0)


def fm_penalty(delta_k, u: float = 0.0):
    """Approximate test-count ratio when the design uses ``K_hat = delta_k K``.

    With ``p = 1/((1-u) K_hat)`` the negative-outcome probability scales
    like ``exp(-1/delta_k)`` while the per-item test rate scales like
    ``1/delta_k``, giving ``delta_k exp((1-u)(1/delta_k - 1))``.
    """
    d = np.asarray(delta_k, dtype=float)
    if (d <= 0).any():
        raise ValueError("delta_k must be positive")
    out = d * np.exp((1.0 - u) * (1.0 / d - 1.0))
    return float(out) if out.ndim == 0 else out
