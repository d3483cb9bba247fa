"""Statistical self-checks of the channel simulator and the moment formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest, norm

from .bounds import moment_oracle
from .decoders import coal_scores, psi0
from .model import NoiseParams, channel_stats, design_p, gen_test_matrix, simulate_outcomes
from .seeding import derive_seed

__all__ = ["CheckResult", "check_channel", "check_moments", "run_all"]

# two-sided coverage of +-4 standard deviations
_FOUR_SIGMA = 1.0 - 2.0 * norm.sf(4.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    expected: float
    low: float
    high: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: observed {self.observed:.5f}, expected "
                f"{self.expected:.5f}, band [{self.low:.5f}, {self.high:.5f}]")


def _proportion_check(name, successes, n, expected) -> CheckResult:
    ci = binomtest(int(successes), int(n)).proportion_ci(_FOUR_SIGMA, method="wilson")
    obs = successes / n
    return CheckResult(name, bool(ci.low <= expected <= ci.high), obs, expected,
                       float(ci.low), float(ci.high))


def check_channel(N: int = 50, K: int = 5, u: float = 0.2, q: float = 0.1,
                  tests: int = 100_000, seed: int = 0, p: float | None = None) -> list:
    """Empirical outcome frequencies against the closed-form channel values.

    Conditional frequencies use one fixed defective item so that the
    conditioning events are independent across tests.  ``p`` defaults to
    ``1/((1-u)K)``.
    """
    noise = NoiseParams(u, q)
    p = design_p(K, u) if p is None else p
    stats = channel_stats(p, K, noise)
    rng = np.random.default_rng(derive_seed(seed, "defectives"))
    S = np.sort(rng.choice(N, size=K, replace=False))
    design = gen_test_matrix(tests, N, p, derive_seed(seed, "design"))
    inst = simulate_outcomes(design, S, noise, derive_seed(seed, "dilution"),
                             derive_seed(seed, "additive"))
    neg = inst.negative
    in_pool = design.X[:, S[0]].astype(bool)
    return [
        _proportion_check("P(Y=0)", neg.sum(), tests, stats.Gamma),
        _proportion_check("P(Y=0 | defective in pool)", (neg & in_pool).sum(),
                          in_pool.sum(), stats.p_neg_given_def1),
        _proportion_check("P(Y=0 | defective not in pool)", (neg & ~in_pool).sum(),
                          (~in_pool).sum(), stats.p_neg_given_def0),
    ]


def check_moments(N: int = 50, K: int = 5, u: float = 0.2, q: float = 0.1,
                  M: int = 10_000, instances: int = 200, seed: int = 0) -> list:
    """Mean column statistic of one defective and one non-defective item.

    Each instance contributes one score per class, so the averages are over
    independent draws; the band is four times the square root of the
    variance bound divided by the instance count.
    """
    noise = NoiseParams(u, q)
    p = design_p(K, u)
    stats = channel_stats(p, K, noise)
    psi = psi0(stats)
    mom = moment_oracle(M, p, stats, psi)
    def_scores, non_scores = [], []
    for r in range(instances):
        rng = np.random.default_rng(derive_seed(seed, "defectives", r))
        perm = rng.permutation(N)
        S, j = perm[:K], perm[K]
        design = gen_test_matrix(M, N, p, derive_seed(seed, "design", r))
        inst = simulate_outcomes(design, S, noise, derive_seed(seed, "dilution", r),
                                 derive_seed(seed, "additive", r))
        T = coal_scores(inst, psi).scores
        def_scores.append(T[S[0]])
        non_scores.append(T[j])
    out = []
    for name, scores, mu, var in (("mean T, defective", def_scores, mom.mu_i, mom.var_i_bound),
                                  ("mean T, non-defective", non_scores, mom.mu_j,
                                   mom.var_j_bound)):
        obs = float(np.mean(scores))
        half = 4.0 * math.sqrt(var / instances)
        out.append(CheckResult(name, abs(obs - mu) <= half, obs, mu, mu - half, mu + half))
    return out


def run_all(seed: int = 0) -> list:
    return check_channel(seed=seed) + check_moments(seed=seed)
