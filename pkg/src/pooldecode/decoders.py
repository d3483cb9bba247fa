"""Score-and-select decoders for recovering a set of non-defective items.

Every decoder reduces to a per-item score followed by :func:`select_top_L`.
The row statistic counts appearances in negative tests; the column
statistic additionally charges ``psi_cb`` per appearance in a positive test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ChannelStats, Instance, channel_stats

__all__ = [
    "TIE_RULES",
    "ScoreVector",
    "DecoderConfig",
    "RecoveredSet",
    "negative_counts",
    "positive_counts",
    "roal_scores",
    "coal_scores",
    "psi0",
    "psi0_prime",
    "select_top_L",
    "decode_roal",
    "decode_coal",
    "decode_na1by1",
    "decode_indiral",
    "default_psi_cb",
]

TIE_RULES = ("random", "lowest-index")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    statistic: str  # "row" or "column"
    psi_cb: float | None = None

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True)
class DecoderConfig:
    L: int
    psi_cb: float | None = None
    tie_rule: str = "random"
    tie_seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be at least 1, got {self.L}")
        if self.psi_cb is not None and self.psi_cb < 0:
            raise ValueError("psi_cb must be nonnegative")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


@dataclass(frozen=True, eq=False)
class RecoveredSet:
    items: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __len__(self):
        return len(self.items)

    def success_against(self, defective_set) -> bool:
        return not np.intersect1d(self.items, defective_set).size


def negative_counts(instance: Instance) -> np.ndarray:
    """Per-item number of negative tests containing the item."""
    X = instance.design.X
    return X[instance.negative].sum(axis=0, dtype=np.int64)


def positive_counts(instance: Instance) -> np.ndarray:
    X = instance.design.X
    return X[instance.y].sum(axis=0, dtype=np.int64)


def roal_scores(instance: Instance) -> ScoreVector:
    return ScoreVector(negative_counts(instance), "row")


def coal_scores(instance: Instance, psi_cb: float) -> ScoreVector:
    if psi_cb < 0:
        raise ValueError("psi_cb must be nonnegative")
    T = negative_counts(instance) - psi_cb * positive_counts(instance)
    return ScoreVector(T.astype(float), "column", float(psi_cb))


def psi0(stats: ChannelStats) -> float:
    g = stats.gamma0 * stats.Gamma
    if g >= 1.0:
        raise ValueError("gamma0 * Gamma must be below 1")
    return g / (1.0 - g)


def psi0_prime(stats: ChannelStats) -> float:
    if stats.Gamma >= 1.0:
        raise ValueError("Gamma must be below 1")
    return min(psi0(stats), stats.Gamma / (2.0 * (1.0 - stats.Gamma)))


def default_psi_cb(instance: Instance, K: int | None = None) -> float:
    """psi0 evaluated at the instance's design parameter and ``K``."""
    K = instance.K if K is None else K
    return psi0(channel_stats(instance.design.p, max(K, 1), instance.noise))


def _tie_groups(values: np.ndarray, tol: float) -> np.ndarray:
    """Dense rank of ``values`` (descending) with values within ``tol`` merged."""
    order = np.argsort(-values, kind="stable")
    sv = values[order]
    new_group = np.empty(len(sv), dtype=bool)
    if len(sv):
        new_group[0] = True
        new_group[1:] = (sv[:-1] - sv[1:]) > tol
    ranks = np.empty(len(sv), dtype=np.int64)
    ranks[order] = np.cumsum(new_group) - 1
    return ranks


def select_top_L(scores, L: int, tie_rule: str = "random", tie_seed: int = 0,
                 tie_tol: float = 0.0) -> RecoveredSet:
    """Pick the ``L`` largest scores; ties at the cut follow ``tie_rule``.

    With ``tie_rule="random"`` tied items are ordered by a seeded uniform
    permutation, so every tied subset is equally likely.  The result is
    sorted by item index.
    """
    s = np.asarray(getattr(scores, "scores", scores), dtype=float)
    N = len(s)
    if not 0 <= L <= N:
        raise ValueError(f"L must lie in [0, N={N}], got {L}")
    if tie_rule not in TIE_RULES:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    groups = _tie_groups(s, tie_tol) if tie_tol > 0 else None
    if tie_rule == "random":
        key = np.random.default_rng(tie_seed).permutation(N)
    else:
        key = np.arange(N)
    primary = groups if groups is not None else -s
    order = np.lexsort((key, primary))
    chosen = np.sort(order[:L])
    flags = frozenset()
    if 0 < L < N:
        cut = primary[order[L - 1]]
        if primary[order[L]] == cut:
            flags = frozenset({"tie_at_cut"})
    return RecoveredSet(chosen, flags)


def decode_roal(instance: Instance, config: DecoderConfig) -> RecoveredSet:
    return select_top_L(roal_scores(instance), config.L, config.tie_rule,
                        config.tie_seed)


def decode_coal(instance: Instance, config: DecoderConfig) -> RecoveredSet:
    psi = config.psi_cb
    if psi is None:
        psi = default_psi_cb(instance)
    return select_top_L(coal_scores(instance, psi), config.L, config.tie_rule,
                        config.tie_seed)


def decode_na1by1(instance: Instance, L: int, tie_rule: str = "random",
                  tie_seed: int = 0) -> RecoveredSet:
    """Top-``L`` items by number of negative singleton tests.

    Items that never appear in a negative test score 0 and are only picked
    through the tie rule; the result is flagged when that happens.
    """
    if not (instance.design.row_weights() == 1).all():
        raise ValueError("one-by-one decoding needs exactly one item per test")
    z = negative_counts(instance)
    out = select_top_L(z, L, tie_rule, tie_seed)
    if np.count_nonzero(z) < L:
        return RecoveredSet(out.items, out.flags | {"tie_fallback"})
    return out


def decode_indiral(instance: Instance, L: int, K_hat: int, seed: int,
                   psi_cb: float | None = None) -> RecoveredSet:
    """Defective-first baseline.

    Declares the ``K_hat`` items with the smallest column statistic to be
    defective, then samples ``L`` items uniformly from the rest.
    """
    N = instance.design.N
    if K_hat < 1:
        raise ValueError(f"K_hat must be at least 1, got {K_hat}")
    if L > N - K_hat:
        raise ValueError(f"L={L} exceeds N - K_hat = {N - K_hat}")
    if psi_cb is None:
        psi_cb = default_psi_cb(instance, K_hat)
    T = coal_scores(instance, psi_cb).scores
    rng = np.random.default_rng(seed)
    key = rng.permutation(N)
    order = np.lexsort((key, T))  # ascending statistic
    complement = np.sort(order[K_hat:])
    chosen = np.sort(rng.choice(complement, size=L, replace=False))
    return RecoveredSet(chosen)
