"""Monte Carlo engine: trials, error-rate estimates, minimal-M search, sweeps.

Every random draw in a trial comes from a stream keyed by
``(root_seed, label, trial_index)`` (see :mod:`pooldecode.seeding`), so a
trial is reproducible from its spec and index alone and trials can run in
any order on any number of workers.  Streams do not depend on ``M`` beyond
prefix truncation, so curves over ``M`` use common random numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import binomtest

from .decoders import (TIE_RULES, DecoderConfig, decode_coal, decode_indiral, decode_na1by1,
                       decode_roal, psi0, psi0_prime)
from .lp import DEFAULT_EPS0, decode_lp
from .model import (NoiseParams, channel_stats, design_p, gen_singleton_design,
                    gen_test_matrix, simulate_outcomes)
from .seeding import derive_seed

__all__ = [
    "DECODERS",
    "CSV_COLUMNS",
    "INDIRAL_NOTE",
    "ExperimentSpec",
    "TrialRecord",
    "AperEstimate",
    "MinTestsResult",
    "TargetUnreachable",
    "canonical_decoder",
    "run_trial",
    "run_trials",
    "estimate_aper",
    "wilson_interval",
    "search_min_tests",
    "find_min_tests",
    "sweep_aper_vs_M",
    "sweep_M_vs_L",
    "sweep_noise",
    "robustness_table",
    "summary_row",
    "search_flags",
    "write_csv",
]

log = logging.getLogger(__name__)

DECODERS = ("RoAl", "CoAl", "RoLpAl", "RoLpAl++", "CoLpAl", "NA1by1", "InDirAl")
_BY_KEY = {d.lower(): d for d in DECODERS}

CSV_COLUMNS = ("decoder", "N", "K", "K_hat", "L", "M", "u", "q", "eps0", "psi", "trials",
               "failures", "aper", "ci_low", "ci_high", "flags", "seed")

INDIRAL_NOTE = ("InDirAl estimates the defective set as the K_hat items with the smallest "
                "column statistic, in place of the original defective-set decoder")


def canonical_decoder(name: str) -> str:
    try:
        return _BY_KEY[name.lower()]
    except KeyError:
        raise ValueError(f"unknown decoder {name!r}; choose from {', '.join(DECODERS)}") from None


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte Carlo configuration.

    ``K_hat`` is the defective count assumed when choosing the design
    parameter and the decoder weights; it defaults to the true ``K``.
    With ``u_known=False`` the design uses ``p = 1/K_hat``.
    """

    N: int
    K: int
    L: int
    M: int = 0
    noise: NoiseParams = field(default_factory=NoiseParams)
    decoder: str = "CoAl"
    trials: int = 500
    root_seed: int = 0
    K_hat: int | None = None
    eps0: float = DEFAULT_EPS0
    psi: float | None = None
    u_known: bool = False
    tie_rule: str = "random"

    def __post_init__(self):
        object.__setattr__(self, "decoder", canonical_decoder(self.decoder))
        if self.N < 1:
            raise ValueError("N must be positive")
        if not 0 <= self.K <= self.N:
            raise ValueError(f"K must lie in [0, N], got {self.K}")
        if not 1 <= self.L <= self.N:
            raise ValueError(f"L must lie in [1, N], got {self.L}")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.K_hat is None:
            object.__setattr__(self, "K_hat", max(self.K, 1))
        elif self.K_hat < 1:
            raise ValueError("K_hat must be at least 1")
        if self.psi is not None and self.psi < 0:
            raise ValueError("psi must be nonnegative")
        if not 0.0 < self.eps0 < 1.0:
            raise ValueError("eps0 must lie in (0, 1)")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")
        if self.decoder == "InDirAl" and self.L > self.N - self.K_hat:
            raise ValueError("InDirAl needs L <= N - K_hat")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    @property
    def p(self) -> float:
        return design_p(self.K_hat, self.noise.u, self.u_known)

    def resolved_psi(self) -> float | None:
        """The weight the decoder will use, or None when it takes none."""
        if self.decoder not in ("CoAl", "CoLpAl", "InDirAl"):
            return None
        if self.psi is not None:
            return self.psi
        stats = channel_stats(self.p, self.K_hat, self.noise)
        return psi0_prime(stats) if self.decoder == "CoLpAl" else psi0(stats)


@dataclass(frozen=True)
class TrialRecord:
    spec: ExperimentSpec
    index: int
    success: bool
    flags: frozenset = frozenset()
    decode_time: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class AperEstimate:
    failures: int
    trials: int
    error_rate: float
    ci_low: float
    ci_high: float
    flags: dict = field(default_factory=dict)


class TargetUnreachable(RuntimeError):
    """The target error rate was not met anywhere up to ``M_hi``."""

    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = curve


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> tuple:
    ci = binomtest(failures, trials).proportion_ci(confidence_level=confidence,
                                                    method="wilson")
    return float(ci.low), float(ci.high)


def _decode(spec: ExperimentSpec, instance, tie_seed: int):
    dec, L = spec.decoder, spec.L
    psi = spec.resolved_psi()
    if dec == "RoAl":
        return decode_roal(instance, DecoderConfig(L, None, spec.tie_rule, tie_seed))
    if dec == "CoAl":
        return decode_coal(instance, DecoderConfig(L, psi, spec.tie_rule, tie_seed))
    if dec == "RoLpAl":
        return decode_lp(instance, L, "LP0a", tie_rule=spec.tie_rule,
                         tie_seed=tie_seed).recovered
    if dec == "RoLpAl++":
        return decode_lp(instance, L, "LP1", eps0=spec.eps0, tie_rule=spec.tie_rule,
                         tie_seed=tie_seed).recovered
    if dec == "CoLpAl":
        return decode_lp(instance, L, "LP2", psi_lp=psi, tie_rule=spec.tie_rule,
                         tie_seed=tie_seed).recovered
    if dec == "NA1by1":
        return decode_na1by1(instance, L, spec.tie_rule, tie_seed)
    return decode_indiral(instance, L, spec.K_hat, tie_seed, psi_cb=psi)


def run_trial(spec: ExperimentSpec, index: int) -> TrialRecord:
    """Draw a defective set, a design and the noise, decode, and score."""
    root = spec.root_seed
    rng = np.random.default_rng(derive_seed(root, "defectives", index))
    S = rng.choice(spec.N, size=spec.K, replace=False)
    design_seed = derive_seed(root, "design", index)
    if spec.decoder == "NA1by1":
        design = gen_singleton_design(spec.M, spec.N, design_seed)
    else:
        design = gen_test_matrix(spec.M, spec.N, spec.p, design_seed)
    instance = simulate_outcomes(design, S, spec.noise,
                                 derive_seed(root, "dilution", index),
                                 derive_seed(root, "additive", index))
    tie_seed = derive_seed(root, "ties", index)
    t0 = time.perf_counter()
    try:
        out = _decode(spec, instance, tie_seed)
    except Exception as exc:  # recorded, not raised: one bad trial must not stop a sweep
        log.warning("trial %d of %s failed: %s", index, spec.decoder, exc)
        return TrialRecord(spec, index, False, frozenset({"error"}),
                           time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return TrialRecord(spec, index, bool(out.success_against(S)), out.flags,
                       time.perf_counter() - t0)


def _run_chunk(args):
    spec, indices = args
    return [run_trial(spec, i) for i in indices]


def _workers(workers: int | None) -> int:
    return max(1, os.cpu_count() or 1) if workers is None else max(1, int(workers))


def run_trials(spec: ExperimentSpec, indices: Sequence[int],
               workers: int | None = None) -> list:
    """Records for ``indices``, in index order whatever the worker count."""
    indices = list(indices)
    n = _workers(workers)
    if n == 1 or len(indices) < 2 * n:
        return _run_chunk((spec, indices))
    chunks = [indices[k::n] for k in range(n)]
    with ProcessPoolExecutor(n) as pool:
        parts = list(pool.map(_run_chunk, [(spec, c) for c in chunks]))
    records = [r for part in parts for r in part]
    return sorted(records, key=lambda r: r.index)


def _summarize(records) -> AperEstimate:
    trials = len(records)
    failures = sum(not r.success for r in records)
    flags = Counter(f for r in records for f in r.flags)
    lo, hi = wilson_interval(failures, trials)
    return AperEstimate(failures, trials, failures / trials, lo, hi, dict(sorted(flags.items())))


def estimate_aper(spec: ExperimentSpec, workers: int | None = None,
                  first_index: int = 0) -> AperEstimate:
    """Failure fraction over ``spec.trials`` trials with a 95% Wilson interval."""
    return _summarize(run_trials(spec, range(first_index, first_index + spec.trials), workers))


@dataclass(frozen=True)
class MinTestsResult:
    M: int
    estimate: AperEstimate
    M_ci: tuple  # (low, high), see _m_interval
    curve: tuple  # ((M, failures, trials), ...) sorted by M
    probes: int
    probe_trials: int


def _isotonic_at(curve: dict, M: int) -> float:
    Ms = sorted(curve)
    rates = np.array([curve[m][0] / curve[m][1] for m in Ms])
    weights = np.array([curve[m][1] for m in Ms], dtype=float)
    fit = isotonic_regression(rates, weights=weights, increasing=False).x
    return float(fit[Ms.index(M)])


def _m_interval(curve: dict, target: float, M: int, trials: int, lo: int, hi: int) -> tuple:
    """95% band for the minimal ``M``.

    The sampling band of a ``trials``-sized APER estimate at the target is
    mapped to ``M`` through the slope of a weighted log-linear fit of the
    probes with rates in ``(0, 0.5]``.  Without a usable fit the final
    search bracket ``(lo, hi)`` is returned.
    """
    pts = [(m, f / t, f) for m, (f, t) in curve.items() if 0 < f and f / t <= 0.5]
    if len({m for m, _, _ in pts}) >= 2:
        m_arr, r, w = (np.array(v, dtype=float) for v in zip(*pts))
        slope = np.polyfit(m_arr, np.log(r), 1, w=np.sqrt(w))[0]
        if slope < 0:
            half = 1.959964 * math.sqrt(target * (1 - target) / trials) / (-slope * target)
            return (float(M - half), float(M + half))
    return (lo, hi)


def search_min_tests(probe: Callable[[int, int], tuple], target: float, M_lo: int,
                     M_hi: int, trials_per_probe: int = 500, resolution: float = 0.01,
                     grid_ratio: float = 1.25) -> tuple:
    """Smallest ``M`` whose smoothed failure rate is at most ``target``.

    ``probe(M, trials)`` returns ``(failures, trials)``.  A geometric grid
    is scanned upward until the isotonic (non-increasing) fit of all probes
    so far drops to the target at the newest point; the bracket is then
    bisected down to ``max(1, resolution * M)``.  Returns ``(M, curve)``
    with ``curve`` mapping each probed ``M`` to ``(failures, trials)``.
    """
    if not M_lo < M_hi:
        raise ValueError("need M_lo < M_hi")
    if not 0.0 < target:
        raise ValueError("target must be positive")
    curve = {}
    if target >= 1.0:
        return M_lo, curve

    def visit(m):
        if m not in curve:
            curve[m] = probe(m, trials_per_probe)
        return _isotonic_at(curve, m)

    grid = [M_lo]
    while grid[-1] < M_hi:
        grid.append(min(M_hi, max(grid[-1] + 1, int(math.ceil(grid[-1] * grid_ratio)))))
    below = None
    for k, m in enumerate(grid):
        if visit(m) <= target:
            below = k
            break
    if below is None:
        raise TargetUnreachable(f"target {target} not reached by M={M_hi}",
                                tuple((m, *curve[m]) for m in sorted(curve)))
    if below == 0:
        return M_lo, curve
    lo, hi = grid[below - 1], grid[below]
    while hi - lo > max(1, int(resolution * hi)):
        mid = (lo + hi) // 2
        if visit(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi, curve


def find_min_tests(spec: ExperimentSpec, target: float, M_lo: int, M_hi: int,
                   trials_per_probe: int = 500, final_trials: int = 2000,
                   resolution: float = 0.01, grid_ratio: float = 1.25,
                   workers: int | None = None) -> MinTestsResult:
    """Minimal ``M`` meeting ``target`` for ``spec`` (its ``M`` is ignored)."""
    def probe(m, trials):
        est = estimate_aper(spec.replace(M=m, trials=trials), workers)
        return est.failures, est.trials

    M, curve = search_min_tests(probe, target, M_lo, M_hi, trials_per_probe,
                                resolution, grid_ratio)
    estimate = estimate_aper(spec.replace(M=M, trials=final_trials), workers)
    below = [m for m in curve if m < M]
    bracket = (max(below) if below else M, M)
    M_ci = _m_interval(curve, target, M, trials_per_probe, *bracket)
    return MinTestsResult(M, estimate, M_ci, tuple((m, *curve[m]) for m in sorted(curve)),
                          len(curve), sum(t for _, t in curve.values()))


def search_flags(flags: str, res: MinTestsResult, M_lo: int) -> str:
    """Append the probe budget, and ``at_M_lo`` when the search never went
    above its lower end (the true minimum may be smaller)."""
    parts = [flags] if flags else []
    if res.M == M_lo:
        parts.append("at_M_lo")
    parts.append(f"probes:{res.probes};probe_trials:{res.probe_trials}")
    return ";".join(parts)


def _format_flags(flags: dict) -> str:
    return ";".join(f"{k}:{v}" for k, v in flags.items())


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def summary_row(spec: ExperimentSpec, est: AperEstimate | None, **extra) -> dict:
    row = {
        "decoder": spec.decoder, "N": spec.N, "K": spec.K, "K_hat": spec.K_hat,
        "L": spec.L, "M": spec.M, "u": spec.noise.u, "q": spec.noise.q,
        "eps0": spec.eps0, "psi": spec.resolved_psi(),
        "trials": est.trials if est else 0, "failures": est.failures if est else None,
        "aper": est.error_rate if est else None, "ci_low": est.ci_low if est else None,
        "ci_high": est.ci_high if est else None,
        "flags": _format_flags(est.flags) if est else "", "seed": spec.root_seed,
    }
    row.update(extra)
    return row


def _decoders_or(spec: ExperimentSpec, decoders) -> list:
    return [canonical_decoder(d) for d in decoders] if decoders else [spec.decoder]


def sweep_aper_vs_M(spec: ExperimentSpec, M_grid: Iterable[int], decoders=None,
                    workers: int | None = None, sweep_id: str = "aper_vs_M") -> list:
    rows = []
    for dec in _decoders_or(spec, decoders):
        for M in M_grid:
            s = spec.replace(decoder=dec, M=int(M))
            rows.append(summary_row(s, estimate_aper(s, workers), sweep_id=sweep_id))
    return rows


def _min_tests_row(spec, target, M_lo, M_hi, trials_per_probe, final_trials, workers,
                   **extra):
    try:
        res = find_min_tests(spec, target, M_lo, M_hi, trials_per_probe, final_trials,
                             workers=workers)
    except TargetUnreachable as exc:
        log.warning("%s: %s", spec.decoder, exc)
        return summary_row(spec.replace(M=0), None, M="", flags="target_unreachable", **extra), None
    row = summary_row(spec.replace(M=res.M), res.estimate, M_ci_low=res.M_ci[0],
               M_ci_high=res.M_ci[1], **extra)
    row["flags"] = search_flags(row["flags"], res, M_lo)
    return row, res


def sweep_M_vs_L(spec: ExperimentSpec, L_grid: Iterable[int], target: float = 0.1,
                 M_lo: int = 1, M_hi: int = 20000, decoders=None,
                 trials_per_probe: int = 500, final_trials: int = 2000,
                 workers: int | None = None, sweep_id: str = "M_vs_L") -> list:
    rows = []
    for dec in _decoders_or(spec, decoders):
        for L in L_grid:
            s = spec.replace(decoder=dec, L=int(L))
            rows.append(_min_tests_row(s, target, M_lo, M_hi, trials_per_probe,
                                       final_trials, workers, sweep_id=sweep_id)[0])
    return rows


def sweep_noise(spec: ExperimentSpec, u_grid: Iterable[float] | None = None,
                q_grid: Iterable[float] | None = None, decoders=None,
                workers: int | None = None, sweep_id: str = "noise") -> list:
    """APER at fixed ``M`` while one noise parameter varies."""
    if (u_grid is None) == (q_grid is None):
        raise ValueError("give exactly one of u_grid and q_grid")
    rows = []
    for dec in _decoders_or(spec, decoders):
        for v in (u_grid if u_grid is not None else q_grid):
            noise = (NoiseParams(v, spec.noise.q) if u_grid is not None
                     else NoiseParams(spec.noise.u, v))
            s = spec.replace(decoder=dec, noise=noise)
            rows.append(summary_row(s, estimate_aper(s, workers), sweep_id=sweep_id))
    return rows


def robustness_table(spec: ExperimentSpec, delta_k_grid: Iterable[float],
                     target: float = 0.1, M_lo: int = 1, M_hi: int = 20000,
                     decoders=None, trials_per_probe: int = 500,
                     final_trials: int = 2000, workers: int | None = None,
                     sweep_id: str = "robustness") -> list:
    """Test-count ratio ``M(K_hat) / M(K)`` with ``K_hat = round(delta_k K)``."""
    rows = []
    for dec in _decoders_or(spec, decoders):
        base_spec = spec.replace(decoder=dec, K_hat=spec.K)
        base_row, base = _min_tests_row(base_spec, target, M_lo, M_hi, trials_per_probe,
                                        final_trials, workers, sweep_id=sweep_id, delta_k=1.0)
        base_row["delta_m"] = 1.0 if base is not None else None
        rows.append(base_row)
        for dk in delta_k_grid:
            if dk == 1.0:
                continue
            s = spec.replace(decoder=dec, K_hat=max(1, round(dk * spec.K)))
            row, res = _min_tests_row(s, target, M_lo, M_hi, trials_per_probe, final_trials,
                                      workers, sweep_id=sweep_id, delta_k=float(dk))
            row["delta_m"] = res.M / base.M if res is not None and base is not None else None
            rows.append(row)
    return rows


def write_csv(rows: list, fh: TextIO, comments: Iterable[str] = ()) -> None:
    """Write ``#`` comment lines, the header, then the rows.

    Columns follow :data:`CSV_COLUMNS`, then any extra keys in first-seen
    order.
    """
    for line in comments:
        fh.write(f"# {line}\n")
    extra = []
    for r in rows:
        for k in r:
            if k not in CSV_COLUMNS and k not in extra:
                extra.append(k)
    cols = list(CSV_COLUMNS) + extra
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in cols])
