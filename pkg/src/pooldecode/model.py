"""Random pooling designs and the noisy boolean-OR test channel.

A test outcome is the OR, over defective items placed in the pool, of an
independent participation bit (the item drops out with probability ``u``),
OR'ed with an additive false-positive bit of probability ``q``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "NoiseParams",
    "TestDesign",
    "Instance",
    "ChannelStats",
    "design_p",
    "gen_test_matrix",
    "gen_singleton_design",
    "simulate_outcomes",
    "channel_stats",
    "dump_design",
    "load_design",
]


@dataclass(frozen=True)
class NoiseParams:
    u: float = 0.0  # dilution probability
    q: float = 0.0  # additive-noise probability

    def __post_init__(self):
        for name in ("u", "q"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5), got {v}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TestDesign:
    """An ``M x N`` 0/1 pooling matrix with the parameters that produced it.

    ``X`` is stored as a read-only ``uint8`` array; rows are pools and
    columns are items.
    """

    __test__ = False  # not a pytest class

    X: np.ndarray
    p: float
    seed: int | None = None

    def __post_init__(self):
        X = np.asarray(self.X)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.size and not np.isin(X, (0, 1)).all():
            raise ValueError("X must contain only 0/1 entries")
        object.__setattr__(self, "X", _freeze(X.astype(np.uint8, copy=True)))

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def column_weights(self) -> np.ndarray:
        return self.X.sum(axis=0, dtype=np.int64)

    def row_weights(self) -> np.ndarray:
        return self.X.sum(axis=1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Instance:
    design: TestDesign
    defective_set: np.ndarray
    noise: NoiseParams
    y: np.ndarray
    dilution_seed: int | None = None
    additive_seed: int | None = None

    def __post_init__(self):
        S = np.unique(np.asarray(self.defective_set, dtype=np.int64))
        if S.size and (S[0] < 0 or S[-1] >= self.design.N):
            raise ValueError("defective items must be indices in [0, N)")
        y = np.asarray(self.y, dtype=bool)
        if y.shape != (self.design.M,):
            raise ValueError(f"y must have length M={self.design.M}")
        object.__setattr__(self, "defective_set", _freeze(S))
        object.__setattr__(self, "y", _freeze(y.copy()))

    @property
    def K(self) -> int:
        return int(self.defective_set.size)

    @property
    def negative(self) -> np.ndarray:
        """Boolean mask of tests with a negative outcome."""
        return ~self.y

    @property
    def M_z(self) -> int:
        return int(np.count_nonzero(~self.y))

    @property
    def M_p(self) -> int:
        return int(np.count_nonzero(self.y))


@dataclass(frozen=True)
class ChannelStats:
    Gamma: float
    gamma0: float
    p_neg_given_def1: float
    p_neg_given_def0: float
    p_def1_given_neg: float


def design_p(K: int, u: float = 0.0, u_known: bool = True) -> float:
    """Bernoulli parameter ``1/((1-u)K)`` (or ``1/K`` when ``u`` is unknown)."""
    if K < 1:
        raise ValueError(f"K must be a positive count, got {K}")
    if not 0.0 <= u < 0.5:
        raise ValueError(f"u must lie in [0, 0.5), got {u}")
    p = 1.0 / ((1.0 - u) * K) if u_known else 1.0 / K
    return min(p, 1.0)


def gen_test_matrix(M: int, N: int, p: float, seed: int) -> TestDesign:
    """I.i.d. Bernoulli(p) design.

    Rows are drawn in order from one stream, so for a fixed seed the design
    with ``M`` rows is a prefix of the design with ``M' > M`` rows.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if M < 0 or N < 0:
        raise ValueError("M and N must be nonnegative")
    rng = np.random.default_rng(seed)
    X = rng.random((M, N)) < p
    return TestDesign(X, p, seed)


def gen_singleton_design(M: int, N: int, seed: int) -> TestDesign:
    """One item per test, chosen uniformly (the one-by-one baseline design)."""
    if M < 0 or N < 1:
        raise ValueError("need M >= 0 and N >= 1")
    rng = np.random.default_rng(seed)
    cols = rng.integers(0, N, size=M)
    X = np.zeros((M, N), dtype=np.uint8)
    X[np.arange(M), cols] = 1
    return TestDesign(X, 1.0 / N, seed)


def simulate_outcomes(design: TestDesign, defective_set: Iterable[int],
                      noise: NoiseParams, dilution_seed: int,
                      additive_seed: int) -> Instance:
    """Run the noisy OR channel over ``design`` for the given defective set.

    Participation bits are drawn per (test, defective) pair as an ``M x K``
    block, additive bits as a length-``M`` vector; both are row-major so a
    shorter design sees a prefix of the same noise.
    """
    S = np.unique(np.asarray(list(defective_set), dtype=np.int64))
    if S.size and (S[0] < 0 or S[-1] >= design.N):
        raise ValueError("defective items must be indices in [0, N)")
    M = design.M
    rng_d = np.random.default_rng(dilution_seed)
    participates = rng_d.random((M, S.size)) >= noise.u
    rng_a = np.random.default_rng(additive_seed)
    w = rng_a.random(M) < noise.q
    hit = (design.X[:, S].astype(bool) & participates).any(axis=1)
    return Instance(design, S, noise, hit | w, dilution_seed, additive_seed)


def channel_stats(p: float, K: int, noise: NoiseParams) -> ChannelStats:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if K < 1:
        raise ValueError(f"K must be a positive count, got {K}")
    u, q = noise.u, noise.q
    absent = 1.0 - (1.0 - u) * p  # P(a given defective does not fire)
    Gamma = (1.0 - q) * absent ** K
    gamma0 = u / absent if u > 0 else 0.0  # absent can be 0 only when u = 0
    return ChannelStats(
        Gamma=Gamma,
        gamma0=gamma0,
        p_neg_given_def1=gamma0 * Gamma,
        p_neg_given_def0=Gamma / absent,
        p_def1_given_neg=p * gamma0,
    )


def dump_design(design: TestDesign, fh: TextIO | None = None) -> str:
    """Write ``M N p seed`` then one 0/1 string per row; return the text."""
    out = io.StringIO()
    seed = "-" if design.seed is None else str(design.seed)
    out.write(f"{design.M} {design.N} {design.p!r} {seed}\n")
    for row in design.X:
        out.write("".join("1" if b else "0" for b in row) + "\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def load_design(text: str | TextIO) -> TestDesign:
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty design dump")
    M_s, N_s, p_s, seed_s = lines[0].split()
    M, N = int(M_s), int(N_s)
    rows = lines[1:1 + M]
    if len(rows) != M or any(len(r) != N or set(r) - {"0", "1"} for r in rows):
        raise ValueError("malformed design dump body")
    X = np.array([[c == "1" for c in r] for r in rows], dtype=np.uint8).reshape(M, N)
    return TestDesign(X, float(p_s), None if seed_s == "-" else int(seed_s))
